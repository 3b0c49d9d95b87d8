use ethnocode_core::textprep::{porter_stem, stem, tokenize};

fn unescape(s: &str) -> String {
    let mut out = String::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some('x') => {
                let hex: String = chars.by_ref().take(2).collect();
                out.push(char::from_u32(u32::from_str_radix(&hex, 16).unwrap()).unwrap());
            }
            Some('u') => {
                let hex: String = chars.by_ref().take(4).collect();
                out.push(char::from_u32(u32::from_str_radix(&hex, 16).unwrap()).unwrap());
            }
            Some('U') => {
                let hex: String = chars.by_ref().take(8).collect();
                out.push(char::from_u32(u32::from_str_radix(&hex, 16).unwrap()).unwrap());
            }
            other => panic!("unsupported escape {other:?}"),
        }
    }
    out
}

fn rows(data: &str) -> impl Iterator<Item = (&str, &str)> {
    data.lines()
        .filter(|l| !l.starts_with("# "))
        .map(|l| l.split_once('\t').expect("two columns"))
}

#[test]
fn porter_pass_matches_reference_vectors() {
    let data = include_str!("data/porter_vectors.tsv");
    let mut checked = 0;
    for (word, expected) in rows(data) {
        assert_eq!(porter_stem(word), expected, "porter({word})");
        checked += 1;
    }
    assert!(checked > 200);
}

#[test]
fn stem_is_a_fixpoint_of_the_porter_pass() {
    for (word, _) in rows(include_str!("data/porter_vectors.tsv")) {
        let s = stem(word);
        assert_eq!(porter_stem(&s), s, "{word}");
    }
}

#[test]
fn segmentation_matches_golden_file() {
    let data = include_str!("data/tokenize_golden.tsv");
    let mut checked = 0;
    for (input, expected) in rows(data) {
        let input = unescape(input);
        let got: Vec<String> = tokenize(&input).into_iter().map(|t| t.surface).collect();
        let want: Vec<&str> = if expected.is_empty() {
            vec![]
        } else {
            expected.split('|').collect()
        };
        assert_eq!(got, want, "tokenize({input:?})");
        checked += 1;
    }
    assert_eq!(checked, 50);
}

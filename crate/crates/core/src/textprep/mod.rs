//! Tokenization, stop words, stemming, phrase detection and POS/entity
//! annotation.

mod porter;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, UnitKey};

pub use porter::porter_stem;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("annotation sidecar row {row}: {message}")]
    Alignment { row: usize, message: String },
    #[error("stop-word file line {line}: `{word}` contains whitespace")]
    InvalidStopword { line: usize, word: String },
    #[error("unknown tag `{0}`")]
    UnknownTag(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Other,
    #[default]
    Unk,
}

impl FromStr for Pos {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, TextError> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "NOUN" | "PROPN" => Pos::Noun,
            "VERB" | "AUX" => Pos::Verb,
            "ADJ" => Pos::Adj,
            "ADV" => Pos::Adv,
            "PRON" => Pos::Pron,
            "DET" => Pos::Det,
            "OTHER" | "ADP" | "CCONJ" | "SCONJ" | "PART" | "NUM" | "INTJ" | "PUNCT" | "SYM"
            | "X" => Pos::Other,
            "UNK" | "" => Pos::Unk,
            other => return Err(TextError::UnknownTag(other.to_string())),
        })
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Pos::Noun => "NOUN",
            Pos::Verb => "VERB",
            Pos::Adj => "ADJ",
            Pos::Adv => "ADV",
            Pos::Pron => "PRON",
            Pos::Det => "DET",
            Pos::Other => "OTHER",
            Pos::Unk => "UNK",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum Entity {
    Person,
    Org,
    Gpe,
    Loc,
    Event,
    Fac,
    #[default]
    None,
}

impl FromStr for Entity {
    type Err = TextError;

    fn from_str(s: &str) -> Result<Self, TextError> {
        Ok(match s.trim().to_ascii_uppercase().as_str() {
            "PERSON" => Entity::Person,
            "ORG" => Entity::Org,
            "GPE" => Entity::Gpe,
            "LOC" => Entity::Loc,
            "EVENT" => Entity::Event,
            "FAC" => Entity::Fac,
            "NONE" | "" | "O" => Entity::None,
            other => return Err(TextError::UnknownTag(other.to_string())),
        })
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Entity::Person => "PERSON",
            Entity::Org => "ORG",
            Entity::Gpe => "GPE",
            Entity::Loc => "LOC",
            Entity::Event => "EVENT",
            Entity::Fac => "FAC",
            Entity::None => "NONE",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub stem: String,
    /// Index of the token in the unit's original token stream.
    pub position: usize,
    /// Sentence index inside the unit (split on `.`, `?`, `!`).
    pub sentence: usize,
    pub pos: Pos,
    pub entity: Entity,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// Splits text into word tokens. Hyphens and apostrophes between word
/// characters stay inside the token; other punctuation is dropped.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut sentence = 0;
    let mut sentence_has_tokens = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if is_word_char(c) {
            let start = i;
            while i < chars.len() {
                if is_word_char(chars[i]) {
                    i += 1;
                } else if is_joiner(chars[i])
                    && i + 1 < chars.len()
                    && is_word_char(chars[i + 1])
                    && i > start
                {
                    i += 1;
                } else {
                    break;
                }
            }
            let surface: String = chars[start..i].iter().collect();
            let stem = stem(&surface);
            tokens.push(Token {
                surface,
                stem,
                position: tokens.len(),
                sentence,
                pos: Pos::Unk,
                entity: Entity::None,
            });
            sentence_has_tokens = true;
        } else {
            if matches!(c, '.' | '?' | '!') && sentence_has_tokens {
                sentence += 1;
                sentence_has_tokens = false;
            }
            i += 1;
        }
    }
    tokens
}

/// Lowercases and suffix-strips a word. Repeats the Porter pass until it no
/// longer changes the word, so `stem(stem(w)) == stem(w)` always holds.
pub fn stem(word: &str) -> String {
    let mut current = word.to_lowercase();
    for _ in 0..8 {
        let next = porter_stem(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopwordSource {
    Builtin,
    Custom,
    Merged,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: BTreeSet<String>,
    source: StopwordSource,
}

const BUILTIN_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

impl StopwordList {
    pub fn builtin() -> Self {
        let words = Self::parse_lines(BUILTIN_STOPWORDS).expect("builtin list is well formed");
        StopwordList {
            words,
            source: StopwordSource::Builtin,
        }
    }

    pub fn empty() -> Self {
        StopwordList {
            words: BTreeSet::new(),
            source: StopwordSource::Custom,
        }
    }

    fn parse_lines(text: &str) -> Result<BTreeSet<String>, TextError> {
        let mut words = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.chars().any(char::is_whitespace) {
                return Err(TextError::InvalidStopword {
                    line: i + 1,
                    word: line.to_string(),
                });
            }
            words.insert(line.to_lowercase());
        }
        Ok(words)
    }

    /// Parses a stop-word file: one word per line, `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        Ok(StopwordList {
            words: Self::parse_lines(text)?,
            source: StopwordSource::Custom,
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, TextError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        StopwordList {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
            source: StopwordSource::Custom,
        }
    }

    pub fn merge(&self, other: &StopwordList) -> Self {
        StopwordList {
            words: self.words.union(&other.words).cloned().collect(),
            source: StopwordSource::Merged,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn source(&self) -> StopwordSource {
        self.source
    }

    pub fn words(&self) -> &BTreeSet<String> {
        &self.words
    }
}

/// Drops tokens whose stem or lowercased surface is a stop word. Survivors
/// keep their positions.
pub fn remove_stopwords(tokens: &[Token], list: &StopwordList) -> Vec<Token> {
    tokens
        .iter()
        .filter(|t| !(list.contains(&t.stem) || list.contains(&t.surface.to_lowercase())))
        .cloned()
        .collect()
}

/// Tokens of every unit of a corpus, in corpus order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenizedCorpus {
    pub units: Vec<TokenizedUnit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedUnit {
    pub key: UnitKey,
    pub tokens: Vec<Token>,
}

impl TokenizedCorpus {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        TokenizedCorpus {
            units: corpus
                .units()
                .iter()
                .map(|u| TokenizedUnit {
                    key: u.key(),
                    tokens: tokenize(&u.text),
                })
                .collect(),
        }
    }

    pub fn remove_stopwords(&self, list: &StopwordList) -> Self {
        self.map_units(|tokens| remove_stopwords(tokens, list))
    }

    pub fn merge_phrases(&self, phrases: &BTreeSet<String>) -> Self {
        self.map_units(|tokens| merge_phrases(tokens, phrases))
    }

    fn map_units(&self, f: impl Fn(&[Token]) -> Vec<Token>) -> Self {
        TokenizedCorpus {
            units: self
                .units
                .iter()
                .map(|u| TokenizedUnit {
                    key: u.key.clone(),
                    tokens: f(&u.tokens),
                })
                .collect(),
        }
    }

    pub fn get(&self, key: &UnitKey) -> Option<&TokenizedUnit> {
        self.units
            .binary_search_by(|u| u.key.cmp(key))
            .ok()
            .map(|i| &self.units[i])
    }

    /// Stem sequence per unit.
    pub fn unit_stems(&self) -> Vec<Vec<String>> {
        self.units
            .iter()
            .map(|u| u.tokens.iter().map(|t| t.stem.clone()).collect())
            .collect()
    }

    /// Stem sequence per document, concatenating its units in order.
    pub fn document_stems(&self) -> Vec<(String, Vec<String>)> {
        let mut docs: Vec<(String, Vec<String>)> = Vec::new();
        for u in &self.units {
            match docs.last_mut() {
                Some((id, stems)) if *id == u.key.doc_id => {
                    stems.extend(u.tokens.iter().map(|t| t.stem.clone()))
                }
                _ => docs.push((
                    u.key.doc_id.clone(),
                    u.tokens.iter().map(|t| t.stem.clone()).collect(),
                )),
            }
        }
        docs
    }

    pub fn token_count(&self) -> usize {
        self.units.iter().map(|u| u.tokens.len()).sum()
    }
}

fn phrase_key(token: &Token) -> String {
    token.surface.to_lowercase()
}

/// Adjacent word pairs that recur at least `min_count` times with smoothed
/// pointwise mutual information of at least `pmi_threshold`, joined by `_`.
///
/// PMI is `ln((c(ab)+1) N / ((c(a)+1)(c(b)+1)))` with `N` the token count.
/// Two tokens are adjacent when their original positions differ by one.
pub fn detect_phrases(
    corpus: &TokenizedCorpus,
    min_count: usize,
    pmi_threshold: f64,
) -> BTreeSet<String> {
    let min_count = min_count.max(1);
    let mut unigrams: BTreeMap<String, usize> = BTreeMap::new();
    let mut pairs: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut total = 0usize;
    for unit in &corpus.units {
        for t in &unit.tokens {
            *unigrams.entry(phrase_key(t)).or_default() += 1;
            total += 1;
        }
        for w in unit.tokens.windows(2) {
            if w[1].position == w[0].position + 1 {
                *pairs
                    .entry((phrase_key(&w[0]), phrase_key(&w[1])))
                    .or_default() += 1;
            }
        }
    }
    let n = total as f64;
    pairs
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .filter(|((a, b), c)| {
            let ca = unigrams[a] as f64;
            let cb = unigrams[b] as f64;
            let pmi = (((*c as f64) + 1.0) * n / ((ca + 1.0) * (cb + 1.0))).ln();
            pmi >= pmi_threshold
        })
        .map(|((a, b), _)| format!("{a}_{b}"))
        .collect()
}

/// Greedily merges adjacent tokens forming a known phrase into one token at
/// the first token's position.
pub fn merge_phrases(tokens: &[Token], phrases: &BTreeSet<String>) -> Vec<Token> {
    if phrases.is_empty() {
        return tokens.to_vec();
    }
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if i + 1 < tokens.len() && tokens[i + 1].position == tokens[i].position + 1 {
            let key = format!("{}_{}", phrase_key(&tokens[i]), phrase_key(&tokens[i + 1]));
            if phrases.contains(&key) {
                let first = &tokens[i];
                out.push(Token {
                    surface: format!("{}_{}", first.surface, tokens[i + 1].surface),
                    stem: key,
                    position: first.position,
                    sentence: first.sentence,
                    pos: Pos::Noun,
                    entity: first.entity,
                });
                i += 2;
                continue;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "no",
    "another", "either", "neither", "all", "both", "few", "many", "much", "several", "such",
    "what", "which", "whatever", "whichever",
];

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "ourselves", "you", "your",
    "yours", "yourself", "yourselves", "he", "him", "his", "himself", "she", "her", "hers",
    "herself", "it", "its", "itself", "they", "them", "their", "theirs", "themselves", "who",
    "whom", "whose", "someone", "somebody", "something", "anyone", "anybody", "anything",
    "everyone", "everybody", "everything", "nobody", "nothing", "one",
];

const OTHER_CLOSED: &[&str] = &[
    "and", "but", "or", "nor", "so", "yet", "for", "of", "at", "by", "with", "about", "against",
    "between", "into", "through", "during", "before", "after", "above", "below", "to", "from",
    "up", "down", "in", "out", "on", "off", "over", "under", "if", "because", "as", "until",
    "while", "than", "whether", "although", "though", "since", "unless", "upon", "within",
    "without", "not", "yes", "oh", "um", "uh", "like",
];

const AUXILIARIES: &[&str] = &[
    "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had", "having",
    "do", "does", "did", "doing", "can", "could", "will", "would", "shall", "should", "may",
    "might", "must",
];

const ADVERBS: &[&str] = &[
    "very", "too", "also", "just", "only", "then", "there", "here", "now", "again", "still",
    "never", "always", "often", "sometimes", "really", "quite", "almost", "already", "soon",
    "when", "where", "why", "how", "once", "further", "well",
];

/// Tag from the closed-class table, if the word is a function word.
pub fn closed_class(word: &str) -> Option<Pos> {
    let w = word.to_lowercase();
    let w = w.as_str();
    if DETERMINERS.contains(&w) {
        Some(Pos::Det)
    } else if PRONOUNS.contains(&w) {
        Some(Pos::Pron)
    } else if AUXILIARIES.contains(&w) {
        Some(Pos::Verb)
    } else if ADVERBS.contains(&w) {
        Some(Pos::Adv)
    } else if OTHER_CLOSED.contains(&w) {
        Some(Pos::Other)
    } else {
        None
    }
}

/// Builtin tagger: closed-class table first, then suffix heuristics.
pub fn lexicon_tag(surface: &str) -> Pos {
    if let Some(pos) = closed_class(surface) {
        return pos;
    }
    if surface.chars().all(|c| c.is_numeric()) {
        return Pos::Other;
    }
    let w = surface.to_lowercase();
    const SUFFIXES: &[(&str, Pos)] = &[
        ("ly", Pos::Adv),
        ("ing", Pos::Verb),
        ("ed", Pos::Verb),
        ("ize", Pos::Verb),
        ("ise", Pos::Verb),
        ("ous", Pos::Adj),
        ("ful", Pos::Adj),
        ("ive", Pos::Adj),
        ("able", Pos::Adj),
        ("ible", Pos::Adj),
        ("less", Pos::Adj),
        ("ical", Pos::Adj),
        ("ic", Pos::Adj),
        ("al", Pos::Adj),
        ("tion", Pos::Noun),
        ("sion", Pos::Noun),
        ("ness", Pos::Noun),
        ("ment", Pos::Noun),
        ("ity", Pos::Noun),
        ("ism", Pos::Noun),
        ("er", Pos::Noun),
    ];
    for (suffix, pos) in SUFFIXES {
        if w.len() > suffix.len() + 2 && w.ends_with(suffix) {
            return *pos;
        }
    }
    Pos::Noun
}

/// External annotation for one token, keyed by unit and token position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarRow {
    pub doc: String,
    pub reference: usize,
    pub position: usize,
    pub pos: String,
    pub entity: String,
}

pub enum AnnotationSource<'a> {
    BuiltinLexicon,
    Sidecar(&'a [SidecarRow]),
}

pub fn read_sidecar(path: &Path) -> Result<Vec<SidecarRow>, TextError> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<Result<Vec<SidecarRow>, _>>()?;
    Ok(rows)
}

/// Assigns POS and entity classes. The builtin lexicon always runs; sidecar
/// rows override it token by token.
pub fn annotate(
    corpus: &TokenizedCorpus,
    source: AnnotationSource<'_>,
) -> Result<TokenizedCorpus, TextError> {
    let mut out = corpus.clone();
    for unit in &mut out.units {
        for t in &mut unit.tokens {
            t.pos = if t.stem.contains('_') {
                Pos::Noun
            } else {
                lexicon_tag(&t.surface)
            };
        }
    }
    if let AnnotationSource::Sidecar(rows) = source {
        for (i, row) in rows.iter().enumerate() {
            let row_no = i + 1;
            let key = UnitKey::new(row.doc.clone(), row.reference);
            let idx = out
                .units
                .binary_search_by(|u| u.key.cmp(&key))
                .map_err(|_| TextError::Alignment {
                    row: row_no,
                    message: format!("unit {key} not in corpus"),
                })?;
            let tokens = &mut out.units[idx].tokens;
            let token = tokens
                .iter_mut()
                .find(|t| t.position == row.position)
                .ok_or_else(|| TextError::Alignment {
                    row: row_no,
                    message: format!("unit {key} has no token at position {}", row.position),
                })?;
            if !row.pos.trim().is_empty() {
                token.pos = row.pos.parse()?;
            }
            token.entity = row.entity.parse()?;
        }
    }
    Ok(out)
}

/// Preprocessing steps applied before the exploratory analyses.
#[derive(Debug, Clone)]
pub struct PrepConfig {
    pub stopwords: StopwordList,
    /// `None` disables phrase detection.
    pub phrases: Option<(usize, f64)>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        PrepConfig {
            stopwords: StopwordList::builtin(),
            phrases: None,
        }
    }
}

/// Tokenize, drop stop words, then merge detected phrases.
pub fn prepare(corpus: &Corpus, config: &PrepConfig) -> (TokenizedCorpus, BTreeSet<String>) {
    let tokens = TokenizedCorpus::from_corpus(corpus).remove_stopwords(&config.stopwords);
    match config.phrases {
        Some((min_count, pmi)) => {
            let phrases = detect_phrases(&tokens, min_count, pmi);
            (tokens.merge_phrases(&phrases), phrases)
        }
        None => (tokens, BTreeSet::new()),
    }
}

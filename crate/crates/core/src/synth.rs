//! Seeded synthetic data with known structure, used by tests, the
//! acceptance suite and the shipped demo corpus.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::corpus::{Corpus, DocumentMeta, Unit, CODED_FLAG_KEY};
use crate::rng::{self, Rng};

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "dr",
    "gl", "pl", "st", "tr",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

/// `n` distinct pseudo-words built from consonant-vowel syllables, stable
/// for a given seed. Every word is its own stem.
pub fn pseudo_words(n: usize, seed: u64) -> Vec<String> {
    let mut rng = rng::seeded(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.random_range(0..ONSETS.len())]);
            w.push_str(NUCLEI[rng.random_range(0..NUCLEI.len())]);
        }
        w.push_str(["k", "n", "m", "t"][rng.random_range(0..4)]);
        if crate::textprep::stem(&w) == w && seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Samples an index from a Zipf(1) distribution over `n` items.
fn zipf_index(rng: &mut Rng, cdf: &[f64]) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|c| *c < u).min(cdf.len() - 1)
}

fn zipf_cdf(n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    (1..=n)
        .map(|r| {
            acc += 1.0 / r as f64;
            acc
        })
        .collect()
}

fn single_doc_meta(ids: &[String]) -> BTreeMap<String, DocumentMeta> {
    ids.iter()
        .map(|id| (id.clone(), DocumentMeta::from_doc_id(id)))
        .collect()
}

/// Documents drawn from two disjoint vocabularies, `{a,b,c}` and `{x,y,z}`.
/// Returns the token lists and the block (0 or 1) of each document.
pub fn disjoint_blocks(docs_per_block: usize, doc_len: usize, seed: u64) -> (Vec<Vec<String>>, Vec<usize>) {
    let blocks = [["a", "b", "c"], ["x", "y", "z"]];
    let mut rng = rng::seeded(seed);
    let mut docs = Vec::new();
    let mut labels = Vec::new();
    for (b, words) in blocks.iter().enumerate() {
        for _ in 0..docs_per_block {
            docs.push(
                (0..doc_len)
                    .map(|_| words[rng.random_range(0..3)].to_string())
                    .collect(),
            );
            labels.push(b);
        }
    }
    (docs, labels)
}

/// Sentences in which `p` and `q` fill the same slot between shared context
/// words but never appear together. Other slot fillers get their own
/// contexts.
pub fn distributional_equivalence(sentences: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = rng::seeded(seed);
    let shared_left = ["doctor", "nurse", "clinic"];
    let shared_right = ["results", "scan", "visit"];
    let others: Vec<String> = pseudo_words(40, seed ^ 0x5eed);
    let (fillers, context) = others.split_at(10);
    let mut out = Vec::with_capacity(sentences);
    for i in 0..sentences {
        let mut s: Vec<String> = Vec::with_capacity(5);
        match i % 4 {
            0 | 1 => {
                let slot = if i % 4 == 0 { "p" } else { "q" };
                s.push(shared_left[rng.random_range(0..3)].into());
                s.push(shared_left[rng.random_range(0..3)].into());
                s.push(slot.into());
                s.push(shared_right[rng.random_range(0..3)].into());
                s.push(shared_right[rng.random_range(0..3)].into());
            }
            _ => {
                let f = rng.random_range(0..fillers.len());
                // each filler has its own small context neighbourhood
                let ctx = &context[(f * 3) % context.len()..];
                s.push(ctx[rng.random_range(0..3.min(ctx.len()))].clone());
                s.push(context[rng.random_range(0..context.len())].clone());
                s.push(fillers[f].clone());
                s.push(context[rng.random_range(0..context.len())].clone());
                s.push(ctx[rng.random_range(0..3.min(ctx.len()))].clone());
            }
        }
        out.push(s);
    }
    out
}

/// Box-Muller standard normal.
pub fn normal(rng: &mut Rng) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Two isotropic Gaussian blobs with centres `±separation/2` on every axis.
pub fn two_blobs(per_blob: usize, dim: usize, separation: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = rng::seeded(seed);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (label, sign) in [(0usize, -1.0), (1, 1.0)] {
        for _ in 0..per_blob {
            points.push(
                (0..dim)
                    .map(|_| sign * separation / 2.0 + normal(&mut rng))
                    .collect(),
            );
            labels.push(label);
        }
    }
    (points, labels)
}

/// Settings for [`planted_keyword_corpus`].
#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub units: usize,
    pub positive_rate: f64,
    pub markers: Vec<String>,
    pub noise_vocabulary: usize,
    pub unit_len: (usize, usize),
    pub units_per_doc: usize,
    pub code: String,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            units: 4000,
            positive_rate: 0.3,
            markers: ["biopsy", "oncologist", "scan", "chemo", "tumor"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            noise_vocabulary: 3000,
            unit_len: (8, 16),
            units_per_doc: 40,
            code: "Medical Test".into(),
        }
    }
}

/// Units of Zipf-distributed noise words. Positive units (coded with
/// `config.code`) additionally contain one or two marker words.
pub fn planted_keyword_corpus(config: &PlantedConfig, seed: u64) -> Corpus {
    let mut rng = rng::seeded(seed);
    let noise = pseudo_words(config.noise_vocabulary, seed.wrapping_add(17));
    let cdf = zipf_cdf(noise.len());
    let n_docs = config.units.div_ceil(config.units_per_doc);
    let doc_ids: Vec<String> = (0..n_docs)
        .map(|d| format!("{:04}_20110{}{:02}_SY", 5000 + d, 4 + d % 5, 1 + d % 28))
        .collect();
    let mut units = Vec::with_capacity(config.units);
    for i in 0..config.units {
        let doc = &doc_ids[i / config.units_per_doc];
        let reference = i % config.units_per_doc;
        let len = rng.random_range(config.unit_len.0..=config.unit_len.1);
        let mut words: Vec<String> = (0..len).map(|_| noise[zipf_index(&mut rng, &cdf)].clone()).collect();
        let positive = rng.random::<f64>() < config.positive_rate;
        if positive {
            let n_markers = rng.random_range(1..=2);
            for _ in 0..n_markers {
                let m = config.markers[rng.random_range(0..config.markers.len())].clone();
                let at = rng.random_range(0..=words.len());
                words.insert(at, m);
            }
        }
        let mut unit = Unit::new(doc.clone(), reference, words.join(" ") + ".");
        if positive {
            unit.codes.insert(config.code.clone());
        }
        units.push(unit);
    }
    Corpus::new(single_doc_meta(&doc_ids), units, BTreeSet::from([config.code.clone()]))
        .expect("generated corpus is well formed")
}

const TEXT_ALPHABET: &[&str] = &[
    "a", "b", "c", "x", "y", "z", " ", " ", ",", "\"", "\n", "é", "ß", "'", ";", ":", "\t", "1",
];

fn random_string(rng: &mut Rng, alphabet: &[&str], len: std::ops::RangeInclusive<usize>) -> String {
    let n = rng.random_range(len);
    (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
}

/// A random corpus with awkward text (quotes, commas, newlines, tabs),
/// random code sets, speakers, sections and extra metadata. Code names never
/// contain `\n`, `,` or `:`.
pub fn random_corpus(seed: u64, max_docs: usize, max_units: usize) -> Corpus {
    let mut rng = rng::seeded(seed);
    let code_pool: Vec<String> = ["Background", "Pain", "Family Support", "Cost", "Decision Making", "Médical", "Q&A", "x"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let n_docs = rng.random_range(1..=max_docs);
    let doc_ids: Vec<String> = (0..n_docs)
        .map(|d| {
            if rng.random_bool(0.7) {
                format!("{}_{}_{}", 4000 + d, 20110101 + rng.random_range(0..28), ["DD", "SM"][d % 2])
            } else {
                format!("doc {d}, \"odd\"")
            }
        })
        .collect();
    let meta_keys = ["Location", "Time", "Coded"];
    let mut units = Vec::new();
    for doc in &doc_ids {
        for reference in 0..rng.random_range(1..=max_units) {
            let mut text = random_string(&mut rng, TEXT_ALPHABET, 0..=60);
            if text.trim().is_empty() {
                text.push('w');
            }
            let mut unit = Unit::new(doc.clone(), reference, text);
            if rng.random_bool(0.5) {
                unit.speaker = Some(["Interviewer", "Participant", "P, \"2\""][rng.random_range(0..3)].into());
            }
            if rng.random_bool(0.3) {
                unit.section = Some(format!("Section {}", rng.random_range(1..5)));
            }
            let n_codes = rng.random_range(0..=3);
            for _ in 0..n_codes {
                unit.codes.insert(code_pool[rng.random_range(0..code_pool.len())].clone());
            }
            for key in meta_keys {
                if rng.random_bool(0.25) {
                    unit.extra_metadata.insert(key.into(), random_string(&mut rng, &["v", "w", ",", "\n", "0"], 1..=5));
                }
            }
            units.push(unit);
        }
    }
    Corpus::new(single_doc_meta(&doc_ids), units, BTreeSet::new()).expect("generated corpus is well formed")
}

struct DemoCode {
    name: &'static str,
    phrases: &'static [&'static str],
}

const DEMO_CODES: &[DemoCode] = &[
    DemoCode {
        name: "Medical Test",
        phrases: &[
            "the biopsy came back",
            "they scheduled another scan",
            "waiting on the MRI results",
            "the blood work showed",
            "my oncologist ordered a biopsy",
            "the scan was clear this time",
        ],
    },
    DemoCode {
        name: "Social Support",
        phrases: &[
            "my daughter drives me to appointments",
            "my husband has been there every day",
            "the church group brings meals",
            "friends from work call every week",
            "my sister stays with me after chemo",
            "the support group helps a lot",
        ],
    },
    DemoCode {
        name: "Financial Concerns",
        phrases: &[
            "the insurance denied the claim",
            "the bills keep piling up",
            "I worry about losing my job",
            "the copay is more than rent",
            "we had to borrow money",
            "the pharmacy costs are too high",
        ],
    },
];

const DEMO_FILLER: &[&str] = &[
    "I remember the weather that week",
    "we talked about the garden",
    "it was a long drive home",
    "the waiting room had old magazines",
    "I try to keep a routine",
    "mornings are usually quiet",
    "we watched a movie that night",
    "the parking was hard to find",
    "I started reading more books",
    "the dog needs walking twice a day",
    "my neighbor fixed the fence",
    "I kept a small notebook",
];

/// A small interview-style corpus with three codes, speakers, sections and a
/// `Coded` flag marking the last quarter of documents as not yet coded.
pub fn demo_corpus(documents: usize, units_per_doc: usize, seed: u64) -> Corpus {
    let mut rng = rng::seeded(seed);
    let collectors = ["DD", "SM"];
    let doc_ids: Vec<String> = (0..documents)
        .map(|d| {
            format!(
                "{}_2011{:02}{:02}_{}",
                4020 + d,
                1 + d % 12,
                1 + (d * 7) % 28,
                collectors[d % 2]
            )
        })
        .collect();
    let coded_docs = documents - documents / 4;
    let mut units = Vec::new();
    for (d, doc) in doc_ids.iter().enumerate() {
        for reference in 0..units_per_doc {
            let interviewer = reference % 2 == 0;
            let mut sentences: Vec<String> = Vec::new();
            let mut codes = BTreeSet::new();
            if interviewer {
                sentences.push(
                    ["Can you tell me about that", "How did that feel", "What happened next", "Who helped you then"]
                        [rng.random_range(0..4)]
                    .to_string(),
                );
            } else {
                for _ in 0..rng.random_range(2..=4) {
                    sentences.push(DEMO_FILLER[rng.random_range(0..DEMO_FILLER.len())].to_string());
                }
                for code in DEMO_CODES {
                    if rng.random_bool(0.3) {
                        let phrase = code.phrases[rng.random_range(0..code.phrases.len())];
                        let at = rng.random_range(0..=sentences.len());
                        sentences.insert(at, phrase.to_string());
                        codes.insert(code.name.to_string());
                    }
                }
                sentences.shuffle(&mut rng);
            }
            let text = sentences
                .iter()
                .map(|s| {
                    let mut c = s.chars();
                    let first = c.next().map(|f| f.to_uppercase().collect::<String>()).unwrap_or_default();
                    format!("{first}{}.", c.as_str())
                })
                .collect::<Vec<_>>()
                .join(" ");
            let mut unit = Unit::new(doc.clone(), reference, text);
            unit.speaker = Some(if interviewer { "Interviewer" } else { "Participant" }.to_string());
            unit.section = Some(format!("Part {}", 1 + reference * 3 / units_per_doc));
            if d >= coded_docs {
                unit.extra_metadata.insert(CODED_FLAG_KEY.into(), "no".into());
            } else {
                unit.codes = codes;
            }
            units.push(unit);
        }
    }
    let codebook = DEMO_CODES.iter().map(|c| c.name.to_string()).collect();
    Corpus::new(single_doc_meta(&doc_ids), units, codebook).expect("generated corpus is well formed")
}

/// Hidden gold labels of the demo corpus, including uncoded documents:
/// re-generates the same corpus with every document coded.
pub fn demo_gold(documents: usize, units_per_doc: usize, seed: u64, code: &str) -> BTreeMap<crate::corpus::UnitKey, bool> {
    let corpus = demo_corpus(documents, units_per_doc, seed);
    corpus
        .units()
        .iter()
        .map(|u| {
            let has = DEMO_CODES
                .iter()
                .find(|c| c.name == code)
                .map(|c| c.phrases.iter().any(|p| u.text.to_lowercase().contains(&p.to_lowercase())))
                .unwrap_or(false);
            (u.key(), has)
        })
        .collect()
}

/// Random token lists over a small vocabulary, for co-occurrence tests.
pub fn random_token_docs(docs: usize, max_len: usize, vocab: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = rng::seeded(seed);
    (0..docs)
        .map(|_| {
            (0..rng.random_range(0..=max_len))
                .map(|_| format!("w{}", rng.random_range(0..vocab)))
                .collect()
        })
        .collect()
}

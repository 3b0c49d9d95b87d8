use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ethnocode_core::coder::{
    self, CodeRunConfig, Decision, Representation, SparseRow, TrainConfig,
};
use ethnocode_core::corpus::{
    export_table, import_table, CodeOrigin, CodeSeparator, Corpus, Delimiter, Table, TableConfig,
    UnitKey,
};
use ethnocode_core::embeddings::{kmeans, neighbors, project_svd, train_sgns, SgnsConfig};
use ethnocode_core::heatmap::{
    build_matrix, cluster_axis, hier_cluster, Attribute, Axis, CellMode, Dendrogram, Linkage,
    Metric, TIE_EPS,
};
use ethnocode_core::semnet::{
    build_cooccurrence, build_seedword, detect_communities, Design, NodeAttrs, Scope,
    SemanticGraph, SemnetError, TokenFilter,
};
use ethnocode_core::synth::{self, planted_keyword_corpus, random_corpus, PlantedConfig};
use ethnocode_core::textprep::{tokenize, Token, TokenizedCorpus, TokenizedUnit};
use ethnocode_core::topics::{fit_lda, LdaConfig, TopicModel};
use ethnocode_review::log::{replay, DecisionLog, LOG_FILE, SNAPSHOT_FILE};
use ethnocode_review::state::{Event, QueuedUnit, ReviewState};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)*) => {
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// 1

fn round_trip() -> Outcome {
    let mut checked = 0;
    for seed in 0..1000u64 {
        let corpus = random_corpus(seed, 50, 40);
        for separator in CodeSeparator::all() {
            let config = TableConfig::with_separator(separator);
            let mut bytes = Vec::new();
            export_table(&corpus, &config)
                .map_err(|e| e.to_string())?
                .write(&mut bytes, Delimiter::Csv)
                .map_err(|e| e.to_string())?;
            let table = Table::read(bytes.as_slice(), Delimiter::Csv).map_err(|e| e.to_string())?;
            let back = import_table(&table, &config).map_err(|e| e.to_string())?;
            ensure!(
                back.len() == corpus.len(),
                "seed {seed} {separator:?}: unit count"
            );
            for (a, b) in corpus.units().iter().zip(back.units()) {
                ensure!(
                    a.key() == b.key(),
                    "seed {seed} {separator:?}: key {}",
                    a.key()
                );
                ensure!(
                    a.text.as_bytes() == b.text.as_bytes(),
                    "seed {seed} {separator:?}: text of {}",
                    a.key()
                );
                ensure!(
                    a.codes == b.codes,
                    "seed {seed} {separator:?}: codes of {}",
                    a.key()
                );
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} corpus/separator round trips"))
}

// 2

fn alpha_oracle(a: &[bool], b: &[bool]) -> f64 {
    let mut o = [[0.0f64; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (usize::from(x), usize::from(y));
        o[x][y] += 1.0;
        o[y][x] += 1.0;
    }
    let n0 = o[0][0] + o[0][1];
    let n1 = o[1][0] + o[1][1];
    let n = n0 + n1;
    1.0 - (o[0][1] + o[1][0]) / (2.0 * n0 * n1 / (n - 1.0))
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<bool> {
    (0..n).map(|_| rng.random_bool(p)).collect()
}

fn alpha_oracle_equivalence() -> Outcome {
    let mut rng = rng(2);
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < 500 {
        let n = rng.random_range(2..=300);
        let p = rng.random::<f64>();
        let a = random_labels(&mut rng, n, p);
        let flip = rng.random::<f64>();
        let b: Vec<bool> = a.iter().map(|&x| x ^ rng.random_bool(flip)).collect();
        if a.iter().chain(&b).all(|v| *v == a[0]) {
            ensure!(
                coder::krippendorff_alpha(&a, &b).is_err(),
                "constant labels must be undefined"
            );
            continue;
        }
        let alpha = coder::krippendorff_alpha(&a, &b).map_err(|e| e.to_string())?;
        worst = worst.max((alpha - alpha_oracle(&a, &b)).abs());
        ensure!(
            worst < 1e-9,
            "pair {checked}: {alpha} vs oracle {}",
            alpha_oracle(&a, &b)
        );
        checked += 1;
    }
    for n in [2usize, 10, 300] {
        let mut a = random_labels(&mut rng, n, 0.5);
        a[0] = true;
        a[1] = false;
        let alpha = coder::krippendorff_alpha(&a, &a).map_err(|e| e.to_string())?;
        ensure!(alpha == 1.0, "identical sequences of length {n}: {alpha}");
    }
    let mut rng = self::rng(20);
    let a = random_labels(&mut rng, 10_000, 0.5);
    let b = random_labels(&mut rng, 10_000, 0.5);
    let independent = coder::krippendorff_alpha(&a, &b).map_err(|e| e.to_string())?;
    ensure!(
        independent.abs() < 0.05,
        "independent coders: {independent}"
    );
    Ok(format!(
        "max |diff| {worst:.1e}, independent alpha {independent:.4}"
    ))
}

// 3

const CODE: &str = "Medical Test";

fn scaling_run(positives: usize, seed: u64) -> Result<(f64, f64), String> {
    let corpus = planted_keyword_corpus(&PlantedConfig::default(), seed);
    let tokens = coder::prepare_tokens(&corpus, true);
    let labeled = coder::labeled_units(&corpus, CODE);
    let split = coder::split_train_eval(&labeled, CODE, 0.5, seed).map_err(|e| e.to_string())?;
    let labels: BTreeMap<&UnitKey, bool> = labeled.iter().map(|(k, l)| (k, *l)).collect();
    let pool: Vec<(UnitKey, bool)> = split.train.iter().map(|k| (k.clone(), labels[k])).collect();
    let train =
        coder::sample_training(&pool, Some(positives), 1.0, seed).map_err(|e| e.to_string())?;
    let n_pos = train.iter().filter(|(_, l)| *l).count();
    ensure!(
        n_pos == positives && train.len() == 2 * positives,
        "training sample {n_pos}/{}",
        train.len()
    );
    let config = TrainConfig {
        seed,
        ..TrainConfig::default()
    };
    let model = coder::train_classifier(
        CODE,
        &train,
        Representation::Tfidf,
        &tokens,
        None,
        &config,
        &split.id,
        true,
    )
    .map_err(|e| e.to_string())?;
    let scores =
        coder::score_units(&model, &split.eval, &tokens, None).map_err(|e| e.to_string())?;
    let pairs: Vec<(bool, bool)> = scores
        .iter()
        .zip(&split.eval)
        .map(|(s, k)| (*s >= model.threshold, labels[k]))
        .collect();
    let report = coder::evaluate(CODE, &split.id, &pairs).map_err(|e| e.to_string())?;
    Ok((report.f1, report.alpha.ok_or("alpha undefined")?))
}

fn classifier_scaling() -> Outcome {
    let mean = |positives: usize| -> Result<(f64, f64), String> {
        let mut sum = (0.0, 0.0);
        for seed in 0..5 {
            let (f1, alpha) = scaling_run(positives, seed)?;
            sum.0 += f1;
            sum.1 += alpha;
        }
        Ok((sum.0 / 5.0, sum.1 / 5.0))
    };
    let large = mean(400)?;
    let small = mean(50)?;
    ensure!(large.0 >= 0.95, "F1 with 400 positives {:.4}", large.0);
    ensure!(large.1 >= 0.80, "alpha with 400 positives {:.4}", large.1);
    ensure!(
        small.0 < large.0,
        "F1 with 50 positives {:.4} not below {:.4}",
        small.0,
        large.0
    );
    Ok(format!(
        "400 positives: F1 {:.4} alpha {:.4}; 50 positives: F1 {:.4}",
        large.0, large.1, small.0
    ))
}

// 4

fn recall_then_review() -> Outcome {
    let original = planted_keyword_corpus(
        &PlantedConfig {
            units: 2000,
            ..PlantedConfig::default()
        },
        9,
    );
    let gold: BTreeMap<UnitKey, bool> = original
        .units()
        .iter()
        .map(|u| (u.key(), u.codes.contains(CODE)))
        .collect();
    let units = original
        .units()
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let mut u = u.clone();
            if i % 2 == 0 {
                u.codes.clear();
                u.extra_metadata.insert("Coded".into(), "no".into());
            }
            u
        })
        .collect();
    let mut corpus = Corpus::new(
        original.documents().clone(),
        units,
        original.codebook().clone(),
    )
    .map_err(|e| e.to_string())?;
    let tokens = coder::prepare_tokens(&corpus, true);
    let config = CodeRunConfig {
        target_recall: Some(0.95),
        ..CodeRunConfig::default()
    };
    let run = coder::run_code(&corpus, &tokens, CODE, &config, None).map_err(|e| e.to_string())?;
    ensure!(
        run.report.recall >= 0.95,
        "eval recall {:.4}",
        run.report.recall
    );

    let uncoded: Vec<UnitKey> = corpus
        .units()
        .iter()
        .filter(|u| !u.is_human_coded())
        .map(|u| u.key())
        .collect();
    let positives = uncoded.iter().filter(|k| gold[*k]).count() as f64;
    let coded_as = |c: &Corpus| -> BTreeSet<UnitKey> {
        uncoded
            .iter()
            .filter(|k| c.unit(k).is_some_and(|u| u.codes.contains(CODE)))
            .cloned()
            .collect()
    };

    coder::record_predictions(&mut corpus, &run.predictions).map_err(|e| e.to_string())?;
    let before = coded_as(&corpus);
    let recall_before = before.iter().filter(|k| gold[*k]).count() as f64 / positives;

    let mut queue = coder::build_review_queue(&run.predictions, &corpus, CODE);
    ensure!(
        queue.items.len() == before.len(),
        "queue {} vs {} predicted",
        queue.items.len(),
        before.len()
    );
    for item in &mut queue.items {
        item.decision = if gold[&item.unit] {
            Decision::Accept
        } else {
            Decision::Reject
        };
    }
    coder::merge_review(&queue, &mut corpus).map_err(|e| e.to_string())?;
    let after = coded_as(&corpus);
    let tp = after.iter().filter(|k| gold[*k]).count() as f64;
    let precision = tp / after.len() as f64;
    let recall_after = tp / positives;
    ensure!(precision >= 0.99, "post-review precision {precision:.4}");
    ensure!(
        recall_after == recall_before,
        "recall {recall_before:.4} became {recall_after:.4}"
    );
    ensure!(
        corpus
            .origin_counts(CODE)
            .get(&CodeOrigin::Machine)
            .is_none(),
        "unreviewed machine codes remain"
    );
    Ok(format!(
        "eval recall {:.4}, precision {:.4} -> {precision:.4}, recall {recall_after:.4}",
        run.report.recall,
        (before.iter().filter(|k| gold[*k]).count() as f64) / before.len() as f64
    ))
}

// 5

fn central_difference(f: impl Fn(&[f64], f64) -> f64, w: &[f64], b: f64) -> (Vec<f64>, f64) {
    let h = 1e-6;
    let gw = (0..w.len())
        .map(|j| {
            let mut up = w.to_vec();
            let mut down = w.to_vec();
            up[j] += h;
            down[j] -= h;
            (f(&up, b) - f(&down, b)) / (2.0 * h)
        })
        .collect();
    (gw, (f(w, b + h) - f(w, b - h)) / (2.0 * h))
}

fn max_diff(a: &(Vec<f64>, f64), b: &(Vec<f64>, f64)) -> f64 {
    a.0.iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y).abs())
        .fold((a.1 - b.1).abs(), f64::max)
}

fn gradients() -> Outcome {
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let mut rng = rng(500 + seed);
        let dim = rng.random_range(2..10);
        let n = rng.random_range(5..40);
        let x: Vec<SparseRow> = (0..n)
            .map(|_| {
                let mut row = SparseRow::new();
                for j in 0..dim {
                    if rng.random_bool(0.7) {
                        row.push((j, rng.random_range(-2.0..2.0)));
                    }
                }
                row
            })
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b = rng.random_range(-1.0..1.0);
        let l2 = rng.random_range(0.0..0.5);

        let d = max_diff(
            &coder::log_loss_grad(&w, b, &x, &y, l2),
            &central_difference(|w, b| coder::log_loss(w, b, &x, &y, l2), &w, b),
        );
        worst.0 = worst.0.max(d);
        let d = max_diff(
            &coder::hinge_subgradient(&w, b, &x, &y, l2),
            &central_difference(|w, b| coder::hinge_loss(w, b, &x, &y, l2), &w, b),
        );
        worst.1 = worst.1.max(d);
        ensure!(
            worst.0 < 1e-5 && worst.1 < 1e-5,
            "instance {seed}: log-loss {:.1e}, hinge {:.1e}",
            worst.0,
            worst.1
        );
    }
    Ok(format!(
        "max |diff| log-loss {:.1e}, hinge {:.1e}",
        worst.0, worst.1
    ))
}

// 6

fn lda() -> Outcome {
    let (docs, labels) = synth::disjoint_blocks(50, 40, 11);
    ensure!(docs.len() == 100, "{} documents", docs.len());
    let ids: Vec<String> = (0..docs.len()).map(|i| format!("doc{i}")).collect();
    let fit = |seed| -> Result<TopicModel, String> {
        let cfg = LdaConfig {
            iterations: 500,
            seed,
            ..LdaConfig::new(2)
        };
        fit_lda(&docs, &ids, &cfg).map_err(|e| e.to_string())
    };
    let m = fit(1)?;
    let agree = m
        .dominant_topics()
        .iter()
        .zip(&labels)
        .filter(|(a, l)| a == l)
        .count();
    let purity = agree.max(labels.len() - agree) as f64 / labels.len() as f64;
    ensure!(purity >= 0.95, "purity {purity}");
    let worst = m
        .phi
        .iter()
        .chain(m.theta.iter())
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    ensure!(worst < 1e-9, "row sum off by {worst:e}");
    let bits = |m: &TopicModel| {
        m.phi
            .iter()
            .chain(m.theta.iter())
            .flatten()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    };
    ensure!(
        bits(&m) == bits(&fit(1)?),
        "same seed gave different parameters"
    );
    Ok(format!(
        "purity {purity:.3}, max row error {worst:.1e}, bit-identical rerun"
    ))
}

// 7

fn embeddings() -> Outcome {
    let mut hits = 0;
    for seed in 1..=5 {
        let sentences = synth::distributional_equivalence(2000, seed);
        let config = SgnsConfig {
            dim: 20,
            window: 2,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed,
            ..SgnsConfig::default()
        };
        let v = train_sgns(&sentences, &config).map_err(|e| e.to_string())?;
        let top = neighbors(&v, "p", 3).map_err(|e| e.to_string())?;
        if top.iter().any(|(w, _)| w == "q") {
            hits += 1;
        }
    }
    ensure!(hits == 5, "synonym in top 3 for {hits}/5 seeds");

    for seed in 0..10 {
        let (points, labels) = synth::two_blobs(100, 5, 10.0, seed);
        let r = kmeans(&points, 2, seed, 100).map_err(|e| e.to_string())?;
        let same = r
            .assignments
            .iter()
            .zip(&labels)
            .filter(|(a, l)| a == l)
            .count();
        ensure!(
            same.max(labels.len() - same) == labels.len(),
            "blobs seed {seed}: {same}/{}",
            labels.len()
        );
    }

    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = rng(700 + seed);
        let rows = rng.random_range(5..40);
        let cols = rng.random_range(3..12);
        let a: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let k = rng.random_range(1..cols);
        let p = project_svd(&a, k).map_err(|e| e.to_string())?;
        let mut oracle: Vec<f64> = DMatrix::from_fn(rows, cols, |i, j| a[i][j])
            .singular_values()
            .iter()
            .copied()
            .collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        let tail: f64 = oracle[k..].iter().map(|s| s * s).sum();
        let err: f64 = a
            .iter()
            .zip(p.reconstruct())
            .flat_map(|(r, s)| {
                r.iter()
                    .zip(s)
                    .map(|(x, y)| (x - y) * (x - y))
                    .collect::<Vec<_>>()
            })
            .sum();
        worst = worst.max((err - tail).abs());
        ensure!(
            worst < 1e-6,
            "svd seed {seed}: error {err} vs oracle {tail}"
        );
    }
    Ok(format!(
        "synonym 5/5, blobs 10/10, svd max |diff| {worst:.1e}"
    ))
}

// 8

fn toy_corpus(docs: usize, seed: u64) -> TokenizedCorpus {
    let mut rng = rng(seed);
    let vocab: Vec<String> = (0..30).map(|i| format!("w{i}x")).collect();
    let mut units = Vec::new();
    for d in 0..docs {
        for r in 0..rng.random_range(1..4) {
            let mut text = String::new();
            for _ in 0..rng.random_range(0..8) {
                text.push_str(&vocab[rng.random_range(0..vocab.len())]);
                text.push_str(if rng.random_bool(0.2) { ". " } else { " " });
            }
            units.push(TokenizedUnit {
                key: UnitKey::new(format!("doc{d:02}"), r),
                tokens: tokenize(&text),
            });
        }
    }
    TokenizedCorpus { units }
}

fn pair_counts(corpus: &TokenizedCorpus, scope: Scope) -> BTreeMap<(String, String), u64> {
    let mut by_doc: BTreeMap<&str, Vec<(usize, &Token)>> = BTreeMap::new();
    for (ui, u) in corpus.units.iter().enumerate() {
        by_doc
            .entry(&u.key.doc_id)
            .or_default()
            .extend(u.tokens.iter().map(|t| (ui, t)));
    }
    let mut seen = HashSet::new();
    for (doc, tokens) in &by_doc {
        for (ux, x) in tokens {
            for (uy, y) in tokens {
                if x.stem >= y.stem {
                    continue;
                }
                let instance = match scope {
                    Scope::Document => (0, 0),
                    Scope::Unit if ux == uy => (*ux, 0),
                    Scope::Sentence if ux == uy && x.sentence == y.sentence => (*ux, x.sentence),
                    _ => continue,
                };
                seen.insert((*doc, instance, x.stem.clone(), y.stem.clone()));
            }
        }
    }
    let mut counts = BTreeMap::new();
    for (_, _, a, b) in seen {
        *counts.entry((a, b)).or_insert(0) += 1;
    }
    counts
}

fn semantic_networks() -> Outcome {
    let mut edges = 0;
    for seed in 0..5 {
        let c = toy_corpus(50, seed);
        for scope in [Scope::Sentence, Scope::Unit, Scope::Document] {
            let g = build_cooccurrence(&c, scope, &TokenFilter::All);
            ensure!(
                g.edges == pair_counts(&c, scope),
                "weights differ: seed {seed} {scope:?}"
            );
            edges += g.edges.len();
        }
    }

    let mut sequences = 0;
    for seed in 0..50 {
        let c = toy_corpus(15, 100 + seed);
        let seeds = vec!["w0x".to_string(), "w1x".to_string()];
        for threshold in 1..3 {
            let mut prev: Option<BTreeSet<String>> = None;
            for rounds in 1..=5 {
                match build_seedword(
                    &c,
                    &seeds,
                    rounds,
                    Scope::Unit,
                    threshold,
                    &TokenFilter::All,
                ) {
                    Ok((g, _)) => {
                        let nodes: BTreeSet<String> = g.nodes.keys().cloned().collect();
                        if let Some(p) = &prev {
                            ensure!(
                                p.is_subset(&nodes),
                                "seed {seed} threshold {threshold}: round {rounds} lost nodes"
                            );
                        }
                        prev = Some(nodes);
                    }
                    Err(SemnetError::SeedsAbsent) => break,
                    Err(e) => return Err(e.to_string()),
                }
            }
            sequences += usize::from(prev.is_some());
        }
    }

    let mut g = SemanticGraph::empty(Design::Clusters);
    for clique in [["a", "b", "c", "d", "e"], ["f", "g", "h", "i", "j"]] {
        for (i, x) in clique.iter().enumerate() {
            g.nodes.insert(x.to_string(), NodeAttrs::default());
            for y in &clique[i + 1..] {
                g.edges.insert((x.to_string(), y.to_string()), 1);
            }
        }
    }
    g.edges.insert(("e".into(), "f".into()), 1);
    let c = detect_communities(&g).map_err(|e| e.to_string())?;
    ensure!(c.count == 2, "{} communities", c.count);
    let left: BTreeSet<usize> = ["a", "b", "c", "d", "e"]
        .iter()
        .map(|x| c.clusters[*x])
        .collect();
    let right: BTreeSet<usize> = ["f", "g", "h", "i", "j"]
        .iter()
        .map(|x| c.clusters[*x])
        .collect();
    ensure!(
        left.len() == 1 && right.len() == 1 && left != right,
        "cliques not separated"
    );
    let q = 19.0 / 42.0;
    ensure!((c.modularity - q).abs() < 1e-9, "Q {} vs {q}", c.modularity);
    Ok(format!(
        "{edges} edges matched, {sequences} seedword sequences monotone, Q {:.12}",
        c.modularity
    ))
}

// 9

fn linkage_oracle(
    vectors: &[Vec<f64>],
    linkage: Linkage,
    metric: Metric,
    names: &[String],
) -> Vec<(BTreeSet<usize>, f64)> {
    let d = |a: usize, b: usize| metric.distance(&vectors[a], &vectors[b]);
    let mut clusters: Vec<BTreeSet<usize>> =
        (0..vectors.len()).map(|i| BTreeSet::from([i])).collect();
    let label = |c: &BTreeSet<usize>| c.iter().map(|&i| names[i].clone()).min().unwrap();
    let mut out = Vec::new();
    while clusters.len() > 1 {
        let mut best: Option<(f64, (String, String), usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                let pairs: Vec<f64> = clusters[i]
                    .iter()
                    .flat_map(|&a| clusters[j].iter().map(move |&b| d(a, b)))
                    .collect();
                let dist = match linkage {
                    Linkage::Single => pairs.iter().copied().fold(f64::INFINITY, f64::min),
                    Linkage::Complete => pairs.iter().copied().fold(0.0, f64::max),
                    Linkage::Average => pairs.iter().sum::<f64>() / pairs.len() as f64,
                };
                let (li, lj) = (label(&clusters[i]), label(&clusters[j]));
                let key = if li <= lj { (li, lj) } else { (lj, li) };
                if best.as_ref().is_none_or(|(bd, bk, _, _)| {
                    dist < *bd - TIE_EPS || ((dist - *bd).abs() <= TIE_EPS && key < *bk)
                }) {
                    best = Some((dist, key, i, j));
                }
            }
        }
        let (h, _, i, j) = best.unwrap();
        let merged: BTreeSet<usize> = clusters[i].union(&clusters[j]).copied().collect();
        clusters.remove(j);
        clusters[i] = merged.clone();
        out.push((merged, h));
    }
    out
}

fn members(d: &Dendrogram, id: usize) -> BTreeSet<usize> {
    let n = d.items.len();
    if id < n {
        return BTreeSet::from([id]);
    }
    let m = &d.merges[id - n];
    members(d, m.left)
        .union(&members(d, m.right))
        .copied()
        .collect()
}

fn heatmap() -> Outcome {
    let mut worst = 0.0f64;
    let mut merges = 0;
    for seed in 0..20u64 {
        let mut rng = rng(900 + seed);
        let n = rng.random_range(2..=30);
        let names: Vec<String> = (0..n).map(|i| format!("r{i:02}")).collect();
        let dim = rng.random_range(1..6);
        let real: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * 10.0).collect())
            .collect();
        let binary: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..6).map(|_| f64::from(rng.random_bool(0.4))).collect())
            .collect();
        for linkage in [Linkage::Single, Linkage::Complete, Linkage::Average] {
            for (vectors, metric) in [(&real, Metric::Euclidean), (&binary, Metric::Jaccard)] {
                let d =
                    hier_cluster(&names, vectors, linkage, metric).map_err(|e| e.to_string())?;
                let oracle = linkage_oracle(vectors, linkage, metric, &names);
                ensure!(d.merges.len() == oracle.len(), "seed {seed}: merge count");
                for (k, (m, (set, h))) in d.merges.iter().zip(&oracle).enumerate() {
                    worst = worst.max((m.height - h).abs());
                    ensure!(
                        worst < 1e-9,
                        "seed {seed} {linkage:?} {metric:?} step {k}: {} vs {h}",
                        m.height
                    );
                    ensure!(
                        &members(&d, n + k) == set,
                        "seed {seed} {linkage:?} {metric:?} step {k}: members"
                    );
                }
                merges += oracle.len();
            }
        }
    }

    for seed in 0..5 {
        let c = planted_respondents(seed)?;
        let attrs: Vec<Attribute> = c
            .codebook()
            .iter()
            .map(|s| Attribute::Code(s.clone()))
            .collect();
        let m = build_matrix(&c, &attrs, CellMode::Binary, None).map_err(|e| e.to_string())?;
        let cols = cluster_axis(
            &m,
            Axis::Columns,
            Linkage::Average,
            Metric::default_for(m.mode),
        )
        .map_err(|e| e.to_string())?;
        let labels = cols.cut(2).map_err(|e| e.to_string())?;
        for (j, l) in labels.iter().enumerate() {
            ensure!(
                *l == usize::from(j >= 20),
                "seed {seed}: respondent {} in cluster {l}",
                m.columns[j]
            );
        }
    }
    Ok(format!(
        "{merges} merges within {worst:.1e}, 5/5 planted blocks recovered"
    ))
}

fn planted_respondents(seed: u64) -> Result<Corpus, String> {
    use ethnocode_core::corpus::{DocumentMeta, Unit};
    let mut rng = rng(seed);
    let codes: Vec<String> = (0..20).map(|i| format!("c{i:02}")).collect();
    let mut docs = BTreeMap::new();
    let mut units = Vec::new();
    for r in 0..40 {
        let doc = format!("{:04}_20200101_XY", 1000 + r);
        docs.insert(doc.clone(), DocumentMeta::from_doc_id(&doc));
        for (u, code) in codes.iter().enumerate() {
            let p = if (u < 10) == (r < 20) { 0.8 } else { 0.05 };
            let mut unit = Unit::new(doc.clone(), u, "text");
            if rng.random_bool(p) {
                unit = unit.with_codes([code.clone()]);
            }
            units.push(unit);
        }
    }
    Corpus::new(docs, units, codes.into_iter().collect()).map_err(|e| e.to_string())
}

// 10

const CODES: [&str; 2] = ["A", "B"];
const REVIEWERS: [&str; 2] = ["ann", "bob"];

fn random_event(rng: &mut ChaCha8Rng, state: &ReviewState) -> Option<Event> {
    let code = CODES[rng.random_range(0..2)];
    if rng.random_range(0..7) == 0 {
        let units: BTreeSet<usize> = (0..rng.random_range(1..6))
            .map(|_| rng.random_range(0..12))
            .collect();
        return Some(Event::Queue {
            code: code.into(),
            version: state.code(code).map_or(0, |c| c.version) + 1,
            items: units
                .into_iter()
                .map(|r| QueuedUnit {
                    unit: UnitKey::new("doc", r),
                    score: f64::from(rng.random::<u8>()) / 255.0,
                })
                .collect(),
            report: None,
        });
    }
    let unit = UnitKey::new("doc", rng.random_range(0..12));
    let decision = [Decision::Accept, Decision::Reject, Decision::Pending][rng.random_range(0..3)];
    let reviewer = REVIEWERS[rng.random_range(0..2)];
    let current = state.code(code)?;
    current.item(&unit)?;
    if state
        .duplicate_of(code, &unit, decision, reviewer)
        .is_some()
    {
        return None;
    }
    Some(Event::Decision {
        code: code.into(),
        version: current.version,
        unit,
        decision,
        reviewer: reviewer.into(),
        timestamp: format!("2026-01-01T00:00:{:02}Z", state.seq % 60),
    })
}

fn review_log() -> Outcome {
    let mut cuts = 0usize;
    for case in 0..200u64 {
        let mut rng = rng(10_000 + case);
        let ops = rng.random_range(1..40);
        let snapshot_every = rng.random_range(1..8);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (mut log, mut state) =
            DecisionLog::open(dir.path(), snapshot_every).map_err(|e| e.to_string())?;
        let mut checkpoints = vec![(0usize, state.clone())];
        for _ in 0..ops {
            let Some(event) = random_event(&mut rng, &state) else {
                continue;
            };
            log.append(&mut state, event).map_err(|e| e.to_string())?;
            let len = fs::metadata(dir.path().join(LOG_FILE))
                .map_err(|e| e.to_string())?
                .len() as usize;
            checkpoints.push((len, state.clone()));
        }
        drop(log);
        let bytes = fs::read(dir.path().join(LOG_FILE)).unwrap_or_default();
        let expected = |cut: usize| {
            checkpoints
                .iter()
                .rev()
                .find(|(end, _)| *end <= cut)
                .unwrap()
        };

        for cut in 0..=bytes.len() {
            let replayed =
                replay(&bytes[..cut], ReviewState::default()).map_err(|e| e.to_string())?;
            let (end, state) = expected(cut);
            ensure!(
                &replayed.state == state,
                "case {case}: replay of {cut} bytes differs"
            );
            ensure!(
                replayed.valid_len == *end,
                "case {case}: valid length {} vs {end}",
                replayed.valid_len
            );
            cuts += 1;
        }

        let snapshot = fs::read(dir.path().join(SNAPSHOT_FILE)).ok();
        for w in checkpoints.windows(2) {
            let (start, end) = (w[0].0, w[1].0);
            for cut in [start + (end - start) / 2, end] {
                let crashed = tempfile::tempdir().map_err(|e| e.to_string())?;
                fs::write(crashed.path().join(LOG_FILE), &bytes[..cut])
                    .map_err(|e| e.to_string())?;
                if let Some(s) = &snapshot {
                    fs::write(crashed.path().join(SNAPSHOT_FILE), s).map_err(|e| e.to_string())?;
                }
                let (_, reopened) =
                    DecisionLog::open(crashed.path(), snapshot_every).map_err(|e| e.to_string())?;
                ensure!(
                    &reopened == &expected(cut).1,
                    "case {case}: reopen after crash at byte {cut} differs"
                );
            }
        }
    }
    Ok(format!("200 sequences, {cuts} prefixes replayed"))
}

// 11

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| {
            let rel = e
                .path()
                .strip_prefix(root)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/");
            (rel, fs::read(e.path()).unwrap())
        })
        .collect()
}

fn golden_pipeline() -> Outcome {
    let config = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../demo/demo.toml");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_ethnocode"))
            .args(["pipeline", "run"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(
            status.status.success(),
            "{name} run failed: {}",
            String::from_utf8_lossy(&status.stderr)
        );
        trees.push(tree(&out));
    }
    ensure!(trees[0] == trees[1], "runs differ");
    let files = &trees[0];
    let manifest: Value =
        serde_json::from_slice(files.get("manifest.json").ok_or("no manifest.json")?)
            .map_err(|e| e.to_string())?;
    let listed: BTreeMap<String, String> = manifest["outputs"]
        .as_array()
        .ok_or("manifest has no outputs")?
        .iter()
        .map(|o| {
            (
                o["path"].as_str().unwrap_or_default().to_string(),
                o["sha256"].as_str().unwrap_or_default().to_string(),
            )
        })
        .collect();
    let actual: BTreeMap<String, String> = files
        .iter()
        .filter(|(k, _)| k.as_str() != "manifest.json")
        .map(|(k, v)| (k.clone(), format!("{:x}", Sha256::digest(v))))
        .collect();
    ensure!(listed == actual, "manifest does not pin the artifact tree");
    Ok(format!("{} files byte-identical and pinned", files.len()))
}

struct Criterion {
    number: usize,
    name: &'static str,
    limit: Option<f64>,
    check: fn() -> Outcome,
}

const CRITERIA: [Criterion; 11] = [
    Criterion {
        number: 1,
        name: "round-trip fidelity",
        limit: Some(30.0),
        check: round_trip,
    },
    Criterion {
        number: 2,
        name: "alpha oracle",
        limit: None,
        check: alpha_oracle_equivalence,
    },
    Criterion {
        number: 3,
        name: "classifier scaling",
        limit: Some(60.0),
        check: classifier_scaling,
    },
    Criterion {
        number: 4,
        name: "recall then review",
        limit: Some(30.0),
        check: recall_then_review,
    },
    Criterion {
        number: 5,
        name: "gradients",
        limit: None,
        check: gradients,
    },
    Criterion {
        number: 6,
        name: "lda",
        limit: Some(20.0),
        check: lda,
    },
    Criterion {
        number: 7,
        name: "embeddings",
        limit: None,
        check: embeddings,
    },
    Criterion {
        number: 8,
        name: "semantic networks",
        limit: None,
        check: semantic_networks,
    },
    Criterion {
        number: 9,
        name: "heatmap clustering",
        limit: None,
        check: heatmap,
    },
    Criterion {
        number: 10,
        name: "review log replay",
        limit: None,
        check: review_log,
    },
    Criterion {
        number: 11,
        name: "golden pipeline",
        limit: None,
        check: golden_pipeline,
    },
];

#[test]
fn acceptance() {
    let mut failed = Vec::new();
    for c in &CRITERIA {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, c.limit) {
            (Ok(_), Some(limit)) if secs >= limit => {
                Err(format!("took {secs:.1}s, limit {limit}s"))
            }
            (o, _) => o,
        };
        let line = match &outcome {
            Ok(detail) => format!(
                "criterion {}: PASS {} ({detail}; {secs:.2}s)\n",
                c.number, c.name
            ),
            Err(why) => {
                failed.push(c.number);
                format!(
                    "criterion {}: FAIL {} ({why}; {secs:.2}s)\n",
                    c.number, c.name
                )
            }
        };
        let mut out = std::io::stdout().lock();
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

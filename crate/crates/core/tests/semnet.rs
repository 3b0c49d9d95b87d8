use std::collections::{BTreeMap, BTreeSet, HashSet};

use ethnocode_core::corpus::UnitKey;
use ethnocode_core::embeddings::{train_sgns, SgnsConfig, VectorSource, WordVectors};
use ethnocode_core::semnet::*;
use ethnocode_core::synth;
use ethnocode_core::textprep::{tokenize, Pos, TokenizedCorpus, TokenizedUnit};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_corpus(docs: usize, seed: u64) -> TokenizedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
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

/// Quadratic pass over all token pairs of each document, marking
/// (instance, a, b) triples.
fn brute_force(corpus: &TokenizedCorpus, scope: Scope) -> BTreeMap<(String, String), u64> {
    let mut by_doc: BTreeMap<&str, Vec<(usize, &ethnocode_core::textprep::Token)>> = BTreeMap::new();
    for (ui, u) in corpus.units.iter().enumerate() {
        by_doc.entry(&u.key.doc_id).or_default().extend(u.tokens.iter().map(|t| (ui, t)));
    }
    let mut seen: HashSet<(&str, usize, usize, String, String)> = HashSet::new();
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
                seen.insert((doc, instance.0, instance.1, x.stem.clone(), y.stem.clone()));
            }
        }
    }
    let mut counts = BTreeMap::new();
    for (_, _, _, a, b) in seen {
        *counts.entry((a, b)).or_insert(0) += 1;
    }
    counts
}

#[test]
fn weights_match_brute_force_on_fifty_documents() {
    for seed in 0..5 {
        let c = toy_corpus(50, seed);
        for scope in [Scope::Sentence, Scope::Unit, Scope::Document] {
            let g = build_cooccurrence(&c, scope, &TokenFilter::All);
            assert_eq!(g.edges, brute_force(&c, scope), "seed {seed} {scope:?}");
            for (a, b) in g.edges.keys() {
                assert!(a < b && g.nodes.contains_key(a) && g.nodes.contains_key(b));
            }
        }
    }
}

#[test]
fn empty_corpus_gives_empty_graph() {
    let g = build_cooccurrence(&TokenizedCorpus { units: vec![] }, Scope::Unit, &TokenFilter::All);
    assert!(g.nodes.is_empty() && g.edges.is_empty());
}

#[test]
fn pos_filters_restrict_nodes() {
    let mut c = toy_corpus(5, 1);
    for (i, t) in c.units.iter_mut().flat_map(|u| u.tokens.iter_mut()).enumerate() {
        t.pos = if i % 2 == 0 { Pos::Noun } else { Pos::Verb };
    }
    let g = build_cooccurrence(&c, Scope::Unit, &TokenFilter::NounsAdjectives);
    assert!(g.nodes.values().all(|a| a.pos == Pos::Noun || a.pos == Pos::Adj || a.pos == Pos::Verb));
    let total: u64 = g.nodes.values().map(|a| a.frequency).sum();
    let nouns = c.units.iter().flat_map(|u| &u.tokens).filter(|t| t.pos == Pos::Noun).count();
    assert_eq!(total as usize, nouns);
}

fn two_cliques() -> SemanticGraph {
    let mut g = SemanticGraph::empty(Design::Clusters);
    let left = ["a", "b", "c", "d", "e"];
    let right = ["f", "g", "h", "i", "j"];
    for clique in [left, right] {
        for (i, x) in clique.iter().enumerate() {
            g.nodes.insert(x.to_string(), NodeAttrs { frequency: 1, ..Default::default() });
            for y in &clique[i + 1..] {
                g.edges.insert((x.to_string(), y.to_string()), 1);
            }
        }
    }
    g.edges.insert(("e".into(), "f".into()), 1);
    g
}

#[test]
fn bridged_cliques_split_in_two() {
    let g = two_cliques();
    let c = detect_communities(&g).unwrap();
    assert_eq!(c.count, 2);
    for x in ["a", "b", "c", "d", "e"] {
        assert_eq!(c.clusters[x], 0);
    }
    for x in ["f", "g", "h", "i", "j"] {
        assert_eq!(c.clusters[x], 1);
    }
    // m = 21; each side has 10 internal edges and degree sum 21
    let hand = 2.0 * (10.0 / 21.0 - (21.0f64 / 42.0).powi(2));
    assert!((c.modularity - hand).abs() < 1e-9);
    assert!((hand - 19.0 / 42.0).abs() < 1e-15);
}

#[test]
fn complete_graph_is_one_community() {
    let mut g = SemanticGraph::empty(Design::Clusters);
    let names: Vec<String> = (0..7).map(|i| format!("n{i}")).collect();
    for (i, x) in names.iter().enumerate() {
        g.nodes.insert(x.clone(), NodeAttrs::default());
        for y in &names[i + 1..] {
            g.edges.insert((x.clone(), y.clone()), 2);
        }
    }
    let c = detect_communities(&g).unwrap();
    assert_eq!(c.count, 1);
    assert!(c.modularity.abs() < 1e-12);
}

#[test]
fn collapse_shapes() {
    let g = two_cliques();
    let c = detect_communities(&g).unwrap();
    let collapsed = collapse_clusters(&g, &c.clusters).unwrap();
    assert_eq!(collapsed.nodes.len(), 2);
    assert_eq!(collapsed.edges.values().copied().collect::<Vec<_>>(), [1]);
    assert_eq!(collapsed.nodes["cluster_0"].intra_weight, Some(10));

    let single: BTreeMap<String, usize> = g.nodes.keys().map(|k| (k.clone(), 0)).collect();
    let one = collapse_clusters(&g, &single).unwrap();
    assert_eq!(one.nodes.len(), 1);
    assert!(one.edges.is_empty());

    let own: BTreeMap<String, usize> = g.nodes.keys().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    let iso = collapse_clusters(&g, &own).unwrap();
    assert_eq!(iso.edges.len(), g.edges.len());
    let mut w1: Vec<u64> = g.edges.values().copied().collect();
    let mut w2: Vec<u64> = iso.edges.values().copied().collect();
    w1.sort();
    w2.sort();
    assert_eq!(w1, w2);

    let mut partial = own.clone();
    partial.remove("c");
    assert!(matches!(collapse_clusters(&g, &partial), Err(SemnetError::InvalidPartition(_))));
}

#[test]
fn graphml_round_trip() {
    let c = toy_corpus(20, 3);
    let mut g = build_cooccurrence(&c, Scope::Unit, &TokenFilter::All);
    let comm = detect_communities(&g).unwrap();
    g.set_clusters(&comm.clusters);
    g.nodes.insert("<&\"odd'>".into(), NodeAttrs { intra_weight: Some(4), ..Default::default() });
    assert_eq!(from_graphml(&to_graphml(&g).unwrap()).unwrap(), g);

    let collapsed = collapse_clusters(&g, &{
        let mut m = comm.clusters.clone();
        m.insert("<&\"odd'>".into(), 99);
        m
    })
    .unwrap();
    assert_eq!(from_graphml(&to_graphml(&collapsed).unwrap()).unwrap(), collapsed);

    let dir = tempfile::tempdir().unwrap();
    for (name, fmt) in [("g.graphml", GraphFormat::Graphml), ("g.csv", GraphFormat::EdgeListCsv), ("g.dot", GraphFormat::Dot)] {
        let p = dir.path().join(name);
        export_graph(&g, fmt, &p).unwrap();
        assert_eq!(GraphFormat::for_path(&p), Some(fmt));
    }
    assert_eq!(read_graph(&dir.path().join("g.graphml")).unwrap(), g);
    let rows = std::fs::read_to_string(dir.path().join("g.csv")).unwrap();
    assert_eq!(rows.lines().count(), g.edges.len() + 1);
}

#[test]
fn seed_expansion() {
    let v = WordVectors::from_rows(
        vec![
            ("pain".into(), vec![1.0, 0.1, 0.0]),
            ("ache".into(), vec![0.9, 0.2, 0.0]),
            ("hurt".into(), vec![0.8, 0.25, 0.05]),
            ("bus".into(), vec![0.0, 0.0, 1.0]),
        ],
        VectorSource::Loaded,
    )
    .unwrap();
    let seeds = vec!["pain".to_string()];
    let e = expand_seeds(&seeds, &v, 2).unwrap();
    assert_eq!(e.len(), 3);
    assert!(e[0].original && e[0].word == "pain");
    let added: BTreeSet<&str> = e[1..].iter().map(|s| s.word.as_str()).collect();
    assert_eq!(added, BTreeSet::from(["ache", "hurt"]));
    assert_eq!(expand_seeds(&seeds, &v, 0).unwrap().len(), 1);
    assert!(matches!(expand_seeds(&["zzz".to_string()], &v, 2), Err(SemnetError::NotFound)));

    let sentences = synth::distributional_equivalence(2000, 2);
    let trained = train_sgns(&sentences, &SgnsConfig { dim: 20, window: 2, seed: 2, ..SgnsConfig::default() }).unwrap();
    let e = expand_seeds(&["p".to_string()], &trained, 3).unwrap();
    assert!(e.iter().any(|s| s.word == "q" && !s.original));
}

#[test]
fn fifteen_keyword_growth_reports_rounds() {
    let c = toy_corpus(50, 8);
    let seeds: Vec<String> = (0..15).map(|i| format!("w{i}x")).collect();
    let (g, reports) = build_seedword(&c, &seeds, 3, Scope::Unit, 2, &TokenFilter::All).unwrap();
    assert_eq!(reports.len(), 3);
    assert_eq!(reports.last().unwrap().total, g.nodes.len());
    assert!(g.edges.values().all(|w| *w >= 2));
}

fn random_graph(seed: u64, n: usize, p: f64) -> SemanticGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = SemanticGraph::empty(Design::Clusters);
    let names: Vec<String> = (0..n).map(|i| format!("v{i:02}")).collect();
    for x in &names {
        g.nodes.insert(x.clone(), NodeAttrs::default());
    }
    for (i, x) in names.iter().enumerate() {
        for y in &names[i + 1..] {
            if rng.random_bool(p) {
                g.edges.insert((x.clone(), y.clone()), rng.random_range(1..5));
            }
        }
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn seedword_nodes_grow_with_rounds(seed in any::<u64>(), threshold in 1u64..3) {
        let c = toy_corpus(15, seed);
        let seeds = vec!["w0x".to_string(), "w1x".to_string()];
        let mut prev: Option<BTreeSet<String>> = None;
        for rounds in 1..5 {
            match build_seedword(&c, &seeds, rounds, Scope::Unit, threshold, &TokenFilter::All) {
                Ok((g, _)) => {
                    let nodes: BTreeSet<String> = g.nodes.keys().cloned().collect();
                    if let Some(p) = &prev {
                        prop_assert!(p.is_subset(&nodes));
                    }
                    prev = Some(nodes);
                }
                Err(SemnetError::SeedsAbsent) => break,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
        }
    }

    #[test]
    fn pruning_is_idempotent(seed in any::<u64>(), k in 1usize..20, w in 1u64..5) {
        let g = random_graph(seed, 12, 0.3);
        for policy in [PrunePolicy::MinWeight(w), PrunePolicy::TopKEdges(k), PrunePolicy::TopKNodesByStrength(k)] {
            let once = prune(&g, policy);
            prop_assert_eq!(prune(&once, policy), once);
        }
    }

    #[test]
    fn modularity_bounds_and_collapse_weight(seed in any::<u64>(), n in 2usize..25) {
        let g = random_graph(seed, n, 0.25);
        let c = detect_communities(&g).unwrap();
        prop_assert!(c.modularity >= -0.5 - 1e-12 && c.modularity <= 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let random: BTreeMap<String, usize> = g.nodes.keys().map(|k| (k.clone(), rng.random_range(0..3))).collect();
        let q = modularity(&g, &random);
        prop_assert!((-0.5 - 1e-12..=1.0).contains(&q));
        prop_assert!(c.modularity >= q - 1e-9 || g.edges.is_empty());
        let collapsed = collapse_clusters(&g, &c.clusters).unwrap();
        let intra: u64 = collapsed.nodes.values().filter_map(|a| a.intra_weight).sum();
        prop_assert_eq!(collapsed.total_weight() + intra, g.total_weight());
    }
}

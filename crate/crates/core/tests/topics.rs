use ethnocode_core::synth::disjoint_blocks;
use ethnocode_core::topics::{fit_lda, LdaConfig};

fn block_model(seed: u64) -> (ethnocode_core::topics::TopicModel, Vec<usize>) {
    let (docs, labels) = disjoint_blocks(50, 40, 11);
    let ids: Vec<String> = (0..docs.len()).map(|i| format!("doc{i}")).collect();
    let cfg = LdaConfig {
        iterations: 500,
        seed,
        ..LdaConfig::new(2)
    };
    (fit_lda(&docs, &ids, &cfg).unwrap(), labels)
}

fn purity(assigned: &[usize], labels: &[usize]) -> f64 {
    let agree = assigned.iter().zip(labels).filter(|(a, l)| a == l).count();
    agree.max(labels.len() - agree) as f64 / labels.len() as f64
}

#[test]
fn disjoint_blocks_are_separated() {
    let (m, labels) = block_model(1);
    assert!(purity(&m.dominant_topics(), &labels) >= 0.95);
    let blocks = [["a", "b", "c"], ["x", "y", "z"]];
    for t in 0..2 {
        let mut top: Vec<String> = m.top_words(t, 3).unwrap().into_iter().map(|(w, _)| w).collect();
        top.sort();
        assert!(blocks.iter().any(|b| top == b), "topic {t}: {top:?}");
    }
}

#[test]
fn rows_are_normalized() {
    let (m, _) = block_model(2);
    for row in m.phi.iter().chain(m.theta.iter()) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let all = m.top_words(0, m.vocab.len()).unwrap();
    assert_eq!(all.len(), 6);
    assert!((all.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn same_seed_is_bit_identical() {
    let (a, _) = block_model(3);
    let (b, _) = block_model(3);
    let bits = |m: &ethnocode_core::topics::TopicModel| {
        m.phi
            .iter()
            .chain(m.theta.iter())
            .flatten()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
}

#[test]
fn log_likelihood_trends_upward() {
    let (m, _) = block_model(4);
    let ll = &m.meta.log_likelihood;
    let tenth = ll.len() / 10;
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    assert!(mean(&ll[ll.len() - tenth..]) >= mean(&ll[..tenth]));
}

use ethnocode_core::embeddings::{
    central_words, cosine, kmeans, neighbors, project_svd, train_sgns, SgnsConfig, VectorSource, WordVectors,
};
use ethnocode_core::synth;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sgns_config(seed: u64) -> SgnsConfig {
    SgnsConfig {
        dim: 20,
        window: 2,
        negatives: 5,
        epochs: 5,
        learning_rate: 0.025,
        seed,
        ..SgnsConfig::default()
    }
}

#[test]
fn planted_synonyms_are_mutual_nearest_neighbours() {
    for seed in 1..=5 {
        let sentences = synth::distributional_equivalence(2000, seed);
        let v = train_sgns(&sentences, &sgns_config(seed)).unwrap();
        let np = neighbors(&v, "p", 3).unwrap();
        let nq = neighbors(&v, "q", 3).unwrap();
        assert_eq!(np[0].0, "q", "seed {seed}: {np:?}");
        assert_eq!(nq[0].0, "p", "seed {seed}: {nq:?}");
    }
}

#[test]
fn training_is_deterministic_and_rows_are_nonzero() {
    let sentences = synth::distributional_equivalence(400, 9);
    let a = train_sgns(&sentences, &sgns_config(3)).unwrap();
    let b = train_sgns(&sentences, &sgns_config(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.source, VectorSource::Trained);
    for row in &a.matrix {
        assert!(row.iter().any(|x| *x != 0.0));
        assert!((cosine(row, row) - 1.0).abs() < 1e-6);
    }
    let c = train_sgns(&sentences, &SgnsConfig { subsample: Some(1e-4), ..sgns_config(3) }).unwrap();
    assert_eq!(c.len(), a.len());
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
        .collect()
}

fn frobenius_sq(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(r, s)| r.iter().zip(s).map(|(x, y)| (x - y) * (x - y)))
        .sum()
}

#[test]
fn svd_matches_dense_oracle_on_random_matrices() {
    for seed in 0..20u64 {
        let rows = 5 + (seed as usize % 30);
        let cols = 3 + (seed as usize % 8);
        let a = random_matrix(rows, cols, seed);
        let k = 1 + seed as usize % (cols - 1);
        let p = project_svd(&a, k).unwrap();

        let m = DMatrix::from_fn(rows, cols, |i, j| a[i][j]);
        let mut oracle: Vec<f64> = m.singular_values().iter().copied().collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for (s, o) in p.singular_values.iter().zip(&oracle) {
            assert!((s - o).abs() < 1e-9, "seed {seed}: {s} vs {o}");
        }
        let tail: f64 = oracle[k..].iter().map(|s| s * s).sum();
        let err = frobenius_sq(&a, &p.reconstruct());
        assert!((err - tail).abs() < 1e-6, "seed {seed}: {err} vs {tail}");

        for j in 0..k {
            let col: Vec<f64> = p.coords.iter().map(|c| c[j]).collect();
            let pivot = col.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(pivot > 0.0);
        }
    }
}

#[test]
fn planar_points_in_ten_dimensions_reconstruct_exactly() {
    let basis = random_matrix(2, 10, 77);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|_| {
            let (a, b): (f64, f64) = (rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0);
            (0..10).map(|j| a * basis[0][j] + b * basis[1][j]).collect()
        })
        .collect();
    let p = project_svd(&rows, 2).unwrap();
    assert!(frobenius_sq(&rows, &p.reconstruct()) <= 1e-9);
}

#[test]
fn hand_computed_three_by_three() {
    // AᵀA = diag(2, 2, 4): singular values 2, √2, √2
    let a = vec![vec![1.0, 1.0, 0.0], vec![1.0, -1.0, 0.0], vec![0.0, 0.0, 2.0]];
    let p = project_svd(&a, 1).unwrap();
    let expected = [2.0, 2f64.sqrt(), 2f64.sqrt()];
    for (s, e) in p.singular_values.iter().zip(expected) {
        assert!((s - e).abs() < 1e-12);
    }
    assert!((p.coords[2][0] - 2.0).abs() < 1e-12);
}

fn recovery(assign: &[usize], truth: &[usize]) -> f64 {
    let same = assign.iter().zip(truth).filter(|(a, t)| a == t).count();
    let n = truth.len();
    same.max(n - same) as f64 / n as f64
}

#[test]
fn two_blobs_are_recovered() {
    for seed in 0..10 {
        let (points, labels) = synth::two_blobs(100, 5, 10.0, seed);
        let r = kmeans(&points, 2, seed, 100).unwrap();
        assert_eq!(recovery(&r.assignments, &labels), 1.0);
    }
}

#[test]
fn five_clusters_over_vocabulary_vectors() {
    let sentences = synth::distributional_equivalence(800, 4);
    let v = train_sgns(&sentences, &sgns_config(4)).unwrap();
    let r = kmeans(&v.matrix, 5, 1, 100).unwrap();
    let tops = central_words(&v, &r, 10);
    assert_eq!(tops.len(), 5);
    for (c, words) in tops.iter().enumerate() {
        let size = r.assignments.iter().filter(|a| **a == c).count();
        assert!(size > 0);
        assert_eq!(words.len(), size.min(10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wcss_never_increases(seed in any::<u64>(), n in 2usize..60, k in 1usize..6) {
        let k = k.min(n);
        let pts = random_matrix(n, 3, seed);
        let r = kmeans(&pts, k, seed, 50).unwrap();
        for w in r.wcss_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
        prop_assert_eq!(r.assignments.iter().copied().collect::<std::collections::BTreeSet<_>>().len() <= k, true);
    }

    #[test]
    fn neighbours_are_label_invariant(seed in any::<u64>(), n in 3usize..25) {
        let m = random_matrix(n, 4, seed);
        let named = |prefix: &str| {
            WordVectors::from_rows(
                m.iter().enumerate().map(|(i, r)| (format!("{prefix}{i:03}"), r.clone())).collect(),
                VectorSource::Loaded,
            )
            .unwrap()
        };
        let a = named("a");
        let b = named("zz");
        for i in 0..n {
            let na = neighbors(&a, &format!("a{i:03}"), n).unwrap();
            let nb = neighbors(&b, &format!("zz{i:03}"), n).unwrap();
            let ra: Vec<&str> = na.iter().map(|x| &x.0[1..]).collect();
            let rb: Vec<&str> = nb.iter().map(|x| &x.0[2..]).collect();
            prop_assert_eq!(ra, rb);
        }
    }
}

//! Seeded synthetic datasets for tests and desk-scale experiments.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{ClassLabel, SparseDataset, SparseRow};
use crate::objective::sigmoid;

/// A dataset whose labels depend on a known set of features.
#[derive(Debug, Clone)]
pub struct KnownSupport {
    pub data: SparseDataset,
    /// 0-based informative feature indices, ascending.
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Features uniform on [-1, 1]; `k` evenly spaced features carry weights of
/// alternating sign and magnitude 3; labels are Bernoulli draws (+1 / -1)
/// of the logistic model.
pub fn known_support(n: usize, m: usize, k: usize, seed: u64) -> KnownSupport {
    assert!(k >= 1 && k <= m, "need 1 <= k <= m");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support: Vec<usize> = (0..k).map(|i| i * m / k).collect();
    let weights: Vec<f64> = (0..k)
        .map(|i| if i % 2 == 0 { 3.0 } else { -3.0 })
        .collect();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: f64 = support.iter().zip(&weights).map(|(&j, w)| w * x[j]).sum();
        let positive = rng.gen::<f64>() < sigmoid(z);
        labels.push(ClassLabel(if positive { 1.0 } else { -1.0 }));
        rows.push(SparseRow::from_dense(&x));
    }
    KnownSupport {
        data: SparseDataset::new(rows, labels, m).expect("generated rows are valid"),
        support,
        weights,
    }
}

/// `k` well separated clusters in `dim` dimensions, labels 1..=k.
/// Cluster c is centred at 6 on axis `c % dim` (sign flipping every `dim`
/// classes), with uniform noise of half-width 1.
pub fn clusters(per_class: usize, k: usize, dim: usize, seed: u64) -> SparseDataset {
    assert!(
        dim >= 1 && k <= 2 * dim,
        "need at most two clusters per axis"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(per_class * k);
    let mut labels = Vec::with_capacity(per_class * k);
    for c in 0..k {
        let sign = if c < dim { 6.0 } else { -6.0 };
        for _ in 0..per_class {
            let mut x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            x[c % dim] += sign;
            rows.push(SparseRow::from_dense(&x));
            labels.push(ClassLabel((c + 1) as f64));
        }
    }
    SparseDataset::new(rows, labels, dim).expect("generated rows are valid")
}

/// Bag-of-words style binary data: each row draws `nnz` distinct terms out
/// of `m`; with probability `signal` a term comes from its class's block of
/// `k` indicative terms. Values are positive and each row has unit L2 norm.
/// Labels are +1 / -1, balanced in expectation.
pub fn text_like(
    n: usize,
    m: usize,
    nnz: usize,
    k: usize,
    signal: f64,
    seed: u64,
) -> SparseDataset {
    assert!(2 * k <= m && nnz <= m, "vocabulary too small");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let positive = rng.gen_bool(0.5);
        let block = if positive { 0 } else { k };
        let mut terms: Vec<usize> = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let t = if rng.gen::<f64>() < signal {
                block + rng.gen_range(0..k)
            } else {
                rng.gen_range(0..m)
            };
            terms.push(t);
        }
        terms.sort_unstable();
        terms.dedup();
        let values: Vec<f64> = terms.iter().map(|_| 1.0 + rng.gen::<f64>()).collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        let row = SparseRow::new(
            terms.iter().map(|&t| t as u32).collect(),
            values.iter().map(|v| v / norm).collect(),
        )
        .expect("sorted distinct terms");
        rows.push(row);
        labels.push(ClassLabel(if positive { 1.0 } else { -1.0 }));
    }
    SparseDataset::new(rows, labels, m).expect("generated rows are valid")
}

/// Sparse rows with `nnz` uniformly placed entries out of `m` columns and
/// a label from the sign of a few of them. Used to exercise very wide
/// designs.
pub fn wide_sparse(n: usize, m: usize, nnz: usize, seed: u64) -> SparseDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut idx: Vec<usize> = sample(&mut rng, m, nnz).into_vec();
        idx.sort_unstable();
        let values: Vec<f64> = idx.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: f64 = idx
            .iter()
            .zip(&values)
            .filter(|(&j, _)| j % 97 == 0)
            .map(|(_, v)| v)
            .sum::<f64>()
            + rng.gen_range(-0.1..0.1);
        labels.push(ClassLabel(if z >= 0.0 { 1.0 } else { -1.0 }));
        rows.push(SparseRow::new(idx.iter().map(|&j| j as u32).collect(), values).expect("sorted"));
    }
    SparseDataset::new(rows, labels, m).expect("generated rows are valid")
}

/// Many individually weak features that are jointly predictive: the label
/// is the sign of the sum of all `m` features plus noise. Each feature
/// alone is nearly uninformative, so pruning drifts toward a bias-only
/// model and late iterations lose accuracy.
pub fn weak_signals(n: usize, m: usize, seed: u64) -> SparseDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: f64 = x.iter().sum::<f64>() + rng.gen_range(-0.5..0.5);
        labels.push(ClassLabel(if z >= 0.0 { 1.0 } else { -1.0 }));
        rows.push(SparseRow::from_dense(&x));
    }
    SparseDataset::new(rows, labels, m).expect("generated rows are valid")
}

//! LIBSVM-format datasets, feature scaling, stratified splits and the
//! one-vs-one decomposition into binary problems.
//!
//! Feature indices are 1-based in files and 0-based in memory. The bias
//! column used by the design matrix is never stored here.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

/// Opaque class identifier as read from the label column.
///
/// Identifiers are numeric in LIBSVM files; ordering is the numeric order
/// and is used for binarization ("larger identifier is the positive class")
/// and for tie breaking.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub f64);

impl PartialEq for ClassLabel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ClassLabel {}

impl PartialOrd for ClassLabel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ClassLabel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A sparse row: parallel arrays of 0-based ascending indices and values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(SblError::arg("sparse row index/value length mismatch"));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SblError::arg(
                "sparse row indices must be strictly ascending",
            ));
        }
        Ok(Self { indices, values })
    }

    /// Builds a row from a dense slice, dropping exact zeros.
    pub fn from_dense(dense: &[f64]) -> Self {
        let mut row = SparseRow::default();
        for (j, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                row.indices.push(j as u32);
                row.values.push(v);
            }
        }
        row
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        for (j, v) in self.iter() {
            if j < dim {
                out[j] = v;
            }
        }
        out
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.iter()
            .filter(|&(j, _)| j < dense.len())
            .map(|(j, v)| v * dense[j])
            .sum()
    }

    /// Squared Euclidean distance by merging the two index lists.
    pub fn squared_distance(&self, other: &SparseRow) -> f64 {
        let (a, b) = (self, other);
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < a.indices.len() && j < b.indices.len() {
            match a.indices[i].cmp(&b.indices[j]) {
                Ordering::Equal => {
                    let d = a.values[i] - b.values[j];
                    acc += d * d;
                    i += 1;
                    j += 1;
                }
                Ordering::Less => {
                    acc += a.values[i] * a.values[i];
                    i += 1;
                }
                Ordering::Greater => {
                    acc += b.values[j] * b.values[j];
                    j += 1;
                }
            }
        }
        acc += a.values[i..].iter().map(|v| v * v).sum::<f64>();
        acc += b.values[j..].iter().map(|v| v * v).sum::<f64>();
        acc
    }
}

/// Row-sparse observation matrix with one class label per row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseDataset {
    rows: Vec<SparseRow>,
    labels: Vec<ClassLabel>,
    n_features: usize,
}

impl SparseDataset {
    pub fn new(rows: Vec<SparseRow>, labels: Vec<ClassLabel>, n_features: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(SblError::arg(format!(
                "{} rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let max_seen = rows
            .iter()
            .filter_map(|r| r.indices.last())
            .map(|&j| j as usize + 1)
            .max()
            .unwrap_or(0);
        if max_seen > n_features {
            return Err(SblError::arg(format!(
                "n_features {n_features} is below the largest index {max_seen}"
            )));
        }
        Ok(Self {
            rows,
            labels,
            n_features,
        })
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &SparseRow {
        &self.rows[i]
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Widens the feature dimension, e.g. to align a test file with training data.
    pub fn with_n_features(mut self, n_features: usize) -> Result<Self> {
        if n_features < self.n_features {
            return Err(SblError::arg(format!(
                "cannot shrink feature dimension from {} to {}",
                self.n_features, n_features
            )));
        }
        self.n_features = n_features;
        Ok(self)
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<ClassLabel> {
        let mut c = self.labels.clone();
        c.sort();
        c.dedup();
        c
    }

    /// Copies the selected rows into a new dataset with the same feature dimension.
    pub fn subset(&self, indices: &[usize]) -> SparseDataset {
        SparseDataset {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_features: self.n_features,
        }
    }

    pub fn total_nnz(&self) -> usize {
        self.rows.iter().map(SparseRow::nnz).sum()
    }
}

/// Parses LIBSVM text (`label idx:val idx:val ...`, one row per line).
pub fn parse_libsvm(text: &str) -> Result<SparseDataset> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut n_features = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue;
        };
        let err = |message: String| SblError::Parse {
            line: line_no,
            message,
        };
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("bad label `{label_tok}`")))?;
        if !label.is_finite() {
            return Err(err(format!("non-finite label `{label_tok}`")));
        }

        let mut row = SparseRow::default();
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, found `{tok}`")))?;
            let idx: u64 = idx
                .parse()
                .map_err(|_| err(format!("bad feature index in `{tok}`")))?;
            if idx < 1 || idx > u32::MAX as u64 {
                return Err(err(format!(
                    "feature index {idx} out of range (must be >= 1)"
                )));
            }
            let val: f64 = val
                .parse()
                .map_err(|_| err(format!("bad feature value in `{tok}`")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite feature value in `{tok}`")));
            }
            let j = (idx - 1) as u32;
            if row.indices.last().is_some_and(|&last| last >= j) {
                return Err(err(format!(
                    "feature indices not strictly ascending at `{tok}`"
                )));
            }
            row.indices.push(j);
            row.values.push(val);
        }
        if let Some(&last) = row.indices.last() {
            n_features = n_features.max(last as usize + 1);
        }
        rows.push(row);
        labels.push(ClassLabel(label));
    }

    Ok(SparseDataset {
        rows,
        labels,
        n_features,
    })
}

pub fn read_libsvm(path: impl AsRef<Path>) -> Result<SparseDataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| SblError::io(path, e))?;
    parse_libsvm(&text).map_err(|e| match e {
        SblError::Parse { line, message } => SblError::Parse {
            line,
            message: format!("{message} (in {})", path.display()),
        },
        other => other,
    })
}

/// Serializes a dataset back to LIBSVM text. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_libsvm(ds: &SparseDataset) -> String {
    let mut out = String::new();
    for (row, label) in ds.rows.iter().zip(&ds.labels) {
        out.push_str(&label.to_string());
        for (j, v) in row.iter() {
            out.push_str(&format!(" {}:{}", j + 1, v));
        }
        out.push('\n');
    }
    out
}

/// Per-feature affine map onto [-1, 1], fit on training rows only.
///
/// Implicit zeros count as observed values. Test values outside the fit
/// range extrapolate and are not clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(ds: &SparseDataset) -> Scaler {
        let all: Vec<usize> = (0..ds.n_rows()).collect();
        Scaler::fit_rows(ds, &all)
    }

    pub fn fit_rows(ds: &SparseDataset, rows: &[usize]) -> Scaler {
        let m = ds.n_features();
        let mut min = vec![f64::INFINITY; m];
        let mut max = vec![f64::NEG_INFINITY; m];
        let mut seen = vec![0usize; m];
        for &i in rows {
            for (j, v) in ds.row(i).iter() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
                seen[j] += 1;
            }
        }
        for j in 0..m {
            if seen[j] < rows.len() {
                min[j] = min[j].min(0.0);
                max[j] = max[j].max(0.0);
            }
            if seen[j] == 0 && rows.is_empty() {
                min[j] = 0.0;
                max[j] = 0.0;
            }
        }
        Scaler { min, max }
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        if j >= self.dim() {
            return 0.0;
        }
        let (lo, hi) = (self.min[j], self.max[j]);
        if hi > lo {
            2.0 * (v - lo) / (hi - lo) - 1.0
        } else {
            0.0
        }
    }

    /// Scales one row. Implicit zeros are scaled too, so the output may be
    /// denser than the input; exact zeros are dropped.
    pub fn apply_row(&self, row: &SparseRow) -> SparseRow {
        let mut out = SparseRow::default();
        let mut it = row.iter().peekable();
        for j in 0..self.dim() {
            let v = match it.peek() {
                Some(&(k, v)) if k == j => {
                    it.next();
                    v
                }
                _ => 0.0,
            };
            let s = self.scale_value(j, v);
            if s != 0.0 {
                out.indices.push(j as u32);
                out.values.push(s);
            }
        }
        out
    }

    pub fn apply(&self, ds: &SparseDataset) -> SparseDataset {
        SparseDataset {
            rows: ds.rows.iter().map(|r| self.apply_row(r)).collect(),
            labels: ds.labels.clone(),
            n_features: ds.n_features.max(self.dim()),
        }
    }
}

/// One cross-validation fold: row indices for training and validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

fn indices_by_class(labels: &[ClassLabel]) -> BTreeMap<ClassLabel, Vec<usize>> {
    let mut by_class: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    by_class
}

/// Stratified k-fold assignment, deterministic for a fixed seed.
///
/// Falls back to a plain shuffled split (with a warning) when some class
/// has fewer than `k` members.
pub fn kfold_split(ds: &SparseDataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = ds.n_rows();
    if k < 2 {
        return Err(SblError::arg(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(SblError::arg(format!(
            "k = {k} exceeds the number of rows {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_class = indices_by_class(ds.labels());
    let stratify = by_class.values().all(|members| members.len() >= k);

    let order: Vec<usize> = if stratify {
        let mut order = Vec::with_capacity(n);
        for members in by_class.into_values() {
            let mut members = members;
            members.shuffle(&mut rng);
            order.extend(members);
        }
        order
    } else {
        log::warn!("some class has fewer than {k} rows; using a non-stratified split");
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    };

    let mut assignment = vec![0usize; n];
    for (p, &i) in order.iter().enumerate() {
        assignment[i] = p % k;
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}

/// Stratified random split into (train, test) row indices, both ascending.
pub fn train_test_split(
    ds: &SparseDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SblError::arg(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = ds.n_rows();
    let target = (train_fraction * n as f64).round() as usize;
    let by_class = indices_by_class(ds.labels());

    // Largest-remainder apportionment of the training quota across classes.
    let mut quotas: Vec<usize> = Vec::with_capacity(by_class.len());
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(by_class.len());
    for (c, members) in by_class.values().enumerate() {
        let exact = train_fraction * members.len() as f64;
        quotas.push(exact.floor() as usize);
        remainders.push((exact - exact.floor(), c));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut assigned: usize = quotas.iter().sum();
    for &(_, c) in &remainders {
        if assigned >= target {
            break;
        }
        quotas[c] += 1;
        assigned += 1;
    }
    for q in quotas.iter_mut() {
        if *q == 0 {
            *q = 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target.min(n));
    for (members, &q) in by_class.into_values().zip(&quotas) {
        let mut members = members;
        members.shuffle(&mut rng);
        let q = q.min(members.len());
        train.extend_from_slice(&members[..q]);
        test.extend_from_slice(&members[q..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// A two-class subproblem: `class_a` rows get target 1, `class_b` rows 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryProblem {
    pub rows: Vec<usize>,
    pub targets: Vec<f64>,
    pub class_pair: (ClassLabel, ClassLabel),
}

impl BinaryProblem {
    /// Restricts a dataset to two classes. `class_a` is the positive class.
    pub fn from_pair(ds: &SparseDataset, class_a: ClassLabel, class_b: ClassLabel) -> Self {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, &l) in ds.labels().iter().enumerate() {
            if l == class_a {
                rows.push(i);
                targets.push(1.0);
            } else if l == class_b {
                rows.push(i);
                targets.push(0.0);
            }
        }
        Self {
            rows,
            targets,
            class_pair: (class_a, class_b),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has_both_classes(&self) -> bool {
        self.targets.contains(&1.0) && self.targets.contains(&0.0)
    }
}

/// All unordered class pairs of `classes` (ascending), with the larger
/// identifier as the positive class of each pair.
pub fn class_pairs(classes: &[ClassLabel]) -> Vec<(ClassLabel, ClassLabel)> {
    let mut pairs = Vec::with_capacity(classes.len() * classes.len().saturating_sub(1) / 2);
    for i in 0..classes.len() {
        for j in i + 1..classes.len() {
            pairs.push((classes[j], classes[i]));
        }
    }
    pairs
}

/// One-vs-one decomposition: K(K-1)/2 binary problems.
pub fn ovo_decompose(ds: &SparseDataset) -> Result<Vec<BinaryProblem>> {
    let classes = ds.classes();
    if classes.len() < 2 {
        return Err(SblError::arg(format!(
            "one-vs-one needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    Ok(class_pairs(&classes)
        .into_iter()
        .map(|(a, b)| BinaryProblem::from_pair(ds, a, b))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels_ds(labels: &[f64]) -> SparseDataset {
        let rows = labels.iter().map(|_| SparseRow::default()).collect();
        SparseDataset::new(rows, labels.iter().map(|&l| ClassLabel(l)).collect(), 0).unwrap()
    }

    #[test]
    fn parse_basic() {
        let ds = parse_libsvm("1 1:0.5 3:-2\n0 2:1").unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_features(), 3);
        assert_eq!(ds.labels(), &[ClassLabel(1.0), ClassLabel(0.0)]);
        assert_eq!(ds.row(0).indices, vec![0, 2]);
        assert_eq!(ds.row(0).values, vec![0.5, -2.0]);
    }

    #[test]
    fn parse_empty() {
        let ds = parse_libsvm("").unwrap();
        assert_eq!(ds.n_rows(), 0);
        assert_eq!(ds.n_features(), 0);
    }

    #[test]
    fn parse_rejects_bad_lines() {
        match parse_libsvm("1 3:1 2:1") {
            Err(SblError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_libsvm("1 1:1\n0 0:3"),
            Err(SblError::Parse { line: 2, .. })
        ));
        assert!(parse_libsvm("x 1:1").is_err());
        assert!(parse_libsvm("1 1:abc").is_err());
        assert!(parse_libsvm("1 1-3").is_err());
        assert!(parse_libsvm("1 2:1 2:3").is_err());
    }

    #[test]
    fn parse_skips_blank_lines_and_comments() {
        let ds = parse_libsvm("\n+1 1:2 # note\n\n-1 4:1\n").unwrap();
        assert_eq!(ds.n_rows(), 2);
        assert_eq!(ds.n_features(), 4);
        assert_eq!(ds.classes(), vec![ClassLabel(-1.0), ClassLabel(1.0)]);
    }

    #[test]
    fn scaler_endpoints() {
        let ds = parse_libsvm("0 1:0\n0 1:5\n0 1:10").unwrap();
        let s = Scaler::fit(&ds);
        let scaled: Vec<f64> = ds
            .rows()
            .iter()
            .map(|r| s.apply_row(r).to_dense(1)[0])
            .collect();
        assert_eq!(scaled, vec![-1.0, 0.0, 1.0]);
        let test = SparseRow::new(vec![0], vec![12.0]).unwrap();
        assert!((s.apply_row(&test).values[0] - 1.4).abs() < 1e-15);
    }

    #[test]
    fn scaler_constant_feature_maps_to_zero() {
        let ds = parse_libsvm("0 1:4 2:1\n1 1:4 2:3").unwrap();
        let s = Scaler::fit(&ds);
        let out = s.apply(&ds);
        for r in out.rows() {
            assert_eq!(r.to_dense(2)[0], 0.0);
        }
    }

    #[test]
    fn scaler_counts_implicit_zeros() {
        // Feature 1 observed as 4 and missing (0) elsewhere: range [0, 4].
        let ds = parse_libsvm("0 1:4\n1 2:1").unwrap();
        let s = Scaler::fit(&ds);
        assert_eq!(s.min[0], 0.0);
        assert_eq!(s.max[0], 4.0);
        assert_eq!(s.apply_row(ds.row(1)).to_dense(2), vec![-1.0, 1.0]);
    }

    #[test]
    fn kfold_partition_and_stratification() {
        let mut labels = vec![1.0; 60];
        labels.extend(vec![0.0; 40]);
        let ds = labels_ds(&labels);
        let folds = kfold_split(&ds, 5, 7).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = vec![0; 100];
        for f in &folds {
            assert_eq!(f.validation.len(), 20);
            assert_eq!(f.train.len(), 80);
            let pos = f.validation.iter().filter(|&&i| labels[i] == 1.0).count();
            assert_eq!(pos, 12);
            for &i in &f.validation {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
        assert_eq!(folds, kfold_split(&ds, 5, 7).unwrap());
    }

    #[test]
    fn kfold_errors() {
        let ds = labels_ds(&[0.0, 1.0, 0.0]);
        assert!(kfold_split(&ds, 4, 0).is_err());
        assert!(kfold_split(&ds, 1, 0).is_err());
        // class 1 has a single member: falls back to a plain split
        let folds = kfold_split(&ds, 3, 0).unwrap();
        assert!(folds.iter().all(|f| f.validation.len() == 1));
    }

    #[test]
    fn split_sizes() {
        let mut labels = vec![1.0; 200];
        labels.extend(vec![0.0; 200]);
        let ds = labels_ds(&labels);
        let (tr, te) = train_test_split(&ds, 0.75, 1).unwrap();
        assert_eq!((tr.len(), te.len()), (300, 100));
        let (tr2, te2) = train_test_split(&ds, 0.75, 2).unwrap();
        assert_eq!((tr2.len(), te2.len()), (300, 100));
        assert_ne!(tr, tr2);
        assert!(train_test_split(&ds, 1.0, 0).is_err());
        assert!(train_test_split(&ds, 0.0, 0).is_err());
    }

    #[test]
    fn split_keeps_tiny_class_in_train() {
        let mut labels = vec![0.0; 50];
        labels.push(1.0);
        let ds = labels_ds(&labels);
        let (tr, _) = train_test_split(&ds, 0.99, 3).unwrap();
        assert!(tr.contains(&50));
        let (tr, _) = train_test_split(&ds, 0.01, 3).unwrap();
        assert!(tr.contains(&50));
    }

    #[test]
    fn ovo_counts_and_targets() {
        for k in 2..=10usize {
            let labels: Vec<f64> = (0..3 * k).map(|i| (i % k) as f64).collect();
            let problems = ovo_decompose(&labels_ds(&labels)).unwrap();
            assert_eq!(problems.len(), k * (k - 1) / 2);
            for p in &problems {
                assert!(p.class_pair.0 > p.class_pair.1);
                assert!(p.targets.iter().all(|&t| t == 0.0 || t == 1.0));
                for (&i, &t) in p.rows.iter().zip(&p.targets) {
                    let l = ClassLabel(labels[i]);
                    assert_eq!(l == p.class_pair.0, t == 1.0);
                    assert!(l == p.class_pair.0 || l == p.class_pair.1);
                }
            }
        }
        assert!(ovo_decompose(&labels_ds(&[3.0, 3.0])).is_err());
    }

    #[test]
    fn ovo_two_classes_is_original() {
        let ds = labels_ds(&[-1.0, 1.0, 1.0, -1.0]);
        let p = ovo_decompose(&ds).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].rows, vec![0, 1, 2, 3]);
        assert_eq!(p[0].targets, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn squared_distance_merges() {
        let a = SparseRow::new(vec![0, 2], vec![1.0, 2.0]).unwrap();
        let b = SparseRow::new(vec![1, 2], vec![3.0, 1.0]).unwrap();
        assert_eq!(a.squared_distance(&b), 1.0 + 9.0 + 1.0);
        assert_eq!(a.squared_distance(&a), 0.0);
    }
}

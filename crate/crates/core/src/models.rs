//! Feature maps, binary and one-vs-one classifiers, the L2 logistic
//! baseline, early-stopping feature selection and the model document.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ard::{classic_sbl_fit_observed, dqn_sbl_fit_observed, ArdState, FitReport, SblConfig};
use crate::data::{
    class_pairs, kfold_split, BinaryProblem, ClassLabel, Scaler, SparseDataset, SparseRow,
};
use crate::dqn::{dqn_minimize, DqnConfig, DqnResult};
use crate::error::{Result, SblError};
use crate::objective::{sigmoid, DesignMatrix, MapObjective};

/// Identifier written into every model document.
pub const MODEL_FORMAT: &str = "dqnsbl-model";
pub const MODEL_VERSION: u32 = 1;

/// Powers of two from 2^-5 to 2^5.
pub fn power_grid() -> Vec<f64> {
    (-5..=5).map(|e| 2f64.powi(e)).collect()
}

/// Hidden-layer sizes for inputs with fewer than 100 features.
pub const HIDDEN_GRID_SMALL: [usize; 4] = [50, 100, 150, 200];
/// Hidden-layer sizes for wider inputs.
pub const HIDDEN_GRID_LARGE: [usize; 4] = [100, 500, 900, 1300];
pub const SBELM_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Which MAP stage the ARD loop uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Dqn,
    Classic,
}

/// Feature map and its hyperparameters, before any training data is seen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapSpec {
    Linear,
    Rvm { sigma: f64 },
    Sbelm { hidden: usize, seed: u64 },
}

impl MapSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            MapSpec::Rvm { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(SblError::arg(
                format!("kernel radius must be positive, got {sigma}"),
            )),
            MapSpec::Sbelm { hidden: 0, .. } => {
                Err(SblError::arg("hidden layer needs at least one node"))
            }
            _ => Ok(()),
        }
    }
}

/// `exp(-||x - r||^2 / sigma^2)`.
pub fn gaussian_kernel(x: &SparseRow, r: &SparseRow, sigma: f64) -> f64 {
    (-x.squared_distance(r) / (sigma * sigma)).exp()
}

/// Kernel values of `x` against every reference row.
pub fn gaussian_kernel_map(references: &[SparseRow], x: &SparseRow, sigma: f64) -> Vec<f64> {
    references
        .iter()
        .map(|r| gaussian_kernel(x, r, sigma))
        .collect()
}

/// Packed upper triangle of squared distances between rows, diagonal included.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    packed: Vec<f64>,
}

impl DistanceTable {
    pub fn new(rows: &[&SparseRow]) -> Self {
        let n = rows.len();
        let packed: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| rows[i].squared_distance(rows[j]))
            .collect();
        Self { n, packed }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        self.packed[i * self.n - i * (i + 1) / 2 + j]
    }
}

/// Random sigmoid hidden layer. Only `(hidden, input_dim, seed)` is stored;
/// the synapses are regenerated from the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "LayerSeed", into = "LayerSeed")]
pub struct RandomLayer {
    hidden: usize,
    input_dim: usize,
    seed: u64,
    /// Row-major `hidden x input_dim`.
    synapses: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct LayerSeed {
    hidden: usize,
    input_dim: usize,
    seed: u64,
}

impl From<LayerSeed> for RandomLayer {
    fn from(s: LayerSeed) -> Self {
        RandomLayer::new(s.hidden, s.input_dim, s.seed)
    }
}

impl From<RandomLayer> for LayerSeed {
    fn from(l: RandomLayer) -> Self {
        LayerSeed {
            hidden: l.hidden,
            input_dim: l.input_dim,
            seed: l.seed,
        }
    }
}

impl PartialEq for RandomLayer {
    fn eq(&self, other: &Self) -> bool {
        (self.hidden, self.input_dim, self.seed) == (other.hidden, other.input_dim, other.seed)
    }
}

/// Uniform draw on [-1, 1) from the top 53 bits of one 64-bit output.
fn unit_symmetric(rng: &mut ChaCha8Rng) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}

impl RandomLayer {
    /// ChaCha8 seeded from `seed` fills the synapses row by row, then the
    /// biases.
    pub fn new(hidden: usize, input_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let synapses = (0..hidden * input_dim)
            .map(|_| unit_symmetric(&mut rng))
            .collect();
        let biases = (0..hidden).map(|_| unit_symmetric(&mut rng)).collect();
        Self {
            hidden,
            input_dim,
            seed,
            synapses,
            biases,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn synapses(&self, node: usize) -> &[f64] {
        &self.synapses[node * self.input_dim..(node + 1) * self.input_dim]
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self, node: usize, x: &SparseRow) -> f64 {
        sigmoid(x.dot_dense(self.synapses(node)) + self.biases[node])
    }

    /// All `hidden` activations for one row.
    pub fn random_layer_map(&self, x: &SparseRow) -> Vec<f64> {
        (0..self.hidden).map(|l| self.activation(l, x)).collect()
    }
}

/// A trained feature map, holding only what prediction needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureMap {
    Linear {
        input_dim: usize,
    },
    /// `references[k]` is the relevance vector behind the k-th non-bias
    /// active column.
    Rvm {
        sigma: f64,
        references: Vec<SparseRow>,
    },
    Sbelm {
        layer: RandomLayer,
    },
}

/// Binary classifier over the surviving basis columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub map: FeatureMap,
    pub scaler: Option<Scaler>,
    /// Surviving design columns in training coordinates. Column 0 is the
    /// bias; for RVM, column `j > 0` is training row `j - 1` of the pair.
    pub active: Vec<usize>,
    pub weights: Vec<f64>,
    /// `(class_a, class_b)`: probability is for `class_a`.
    pub class_pair: (ClassLabel, ClassLabel),
}

impl BinaryModel {
    /// Active non-bias basis functions.
    pub fn n_bases(&self) -> usize {
        self.active.iter().filter(|&&c| c != 0).count()
    }

    /// Non-bias weights that are exactly nonzero.
    pub fn nonzero_weights(&self) -> usize {
        self.active
            .iter()
            .zip(&self.weights)
            .filter(|&(&c, &w)| c != 0 && w != 0.0)
            .count()
    }

    pub fn margin(&self, x: &SparseRow) -> f64 {
        let scaled;
        let x = match &self.scaler {
            Some(s) => {
                scaled = s.apply_row(x);
                &scaled
            }
            None => x,
        };
        let bias = match self.active.first() {
            Some(0) => self.weights[0],
            _ => 0.0,
        };
        let offset = usize::from(self.active.first() == Some(&0));
        let rest = &self.weights[offset..];
        let columns = &self.active[offset..];
        let z: f64 = match &self.map {
            FeatureMap::Linear { .. } => x
                .iter()
                .filter_map(|(j, v)| columns.binary_search(&(j + 1)).ok().map(|k| v * rest[k]))
                .sum(),
            FeatureMap::Rvm { sigma, references } => references
                .iter()
                .zip(rest)
                .map(|(r, w)| w * gaussian_kernel(x, r, *sigma))
                .sum(),
            FeatureMap::Sbelm { layer } => columns
                .iter()
                .zip(rest)
                .map(|(&c, w)| w * layer.activation(c - 1, x))
                .sum(),
        };
        bias + z
    }

    pub fn predict_proba(&self, x: &SparseRow) -> f64 {
        sigmoid(self.margin(x))
    }

    pub fn predict(&self, x: &SparseRow) -> ClassLabel {
        if self.predict_proba(x) >= 0.5 {
            self.class_pair.0
        } else {
            self.class_pair.1
        }
    }
}

/// One binary model per unordered class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvoEnsemble {
    /// Ascending class identifiers.
    pub classes: Vec<ClassLabel>,
    pub models: Vec<BinaryModel>,
}

impl OvoEnsemble {
    /// Probability votes per class; each row's votes sum to the pair count.
    pub fn scores(&self, x: &SparseRow) -> Vec<f64> {
        let mut scores = vec![0.0; self.classes.len()];
        for m in &self.models {
            let p = m.predict_proba(x);
            let a = self.class_index(m.class_pair.0);
            let b = self.class_index(m.class_pair.1);
            scores[a] += p;
            scores[b] += 1.0 - p;
        }
        scores
    }

    fn class_index(&self, c: ClassLabel) -> usize {
        self.classes
            .binary_search(&c)
            .expect("pair classes belong to the ensemble")
    }

    /// Highest vote wins; ties go to the smallest identifier.
    pub fn ovo_predict(&self, x: &SparseRow) -> ClassLabel {
        let scores = self.scores(x);
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        self.classes[best]
    }

    pub fn accuracy(&self, ds: &SparseDataset) -> f64 {
        accuracy(ds, |x| self.ovo_predict(x))
    }

    /// Mean surviving non-bias bases per pair model.
    pub fn mean_bases(&self) -> f64 {
        if self.models.is_empty() {
            return 0.0;
        }
        self.models.iter().map(|m| m.n_bases() as f64).sum::<f64>() / self.models.len() as f64
    }

    pub fn input_dim(&self) -> usize {
        self.models
            .iter()
            .map(|m| match &m.map {
                FeatureMap::Linear { input_dim } => *input_dim,
                FeatureMap::Sbelm { layer } => layer.input_dim(),
                FeatureMap::Rvm { .. } => m.scaler.as_ref().map_or(0, Scaler::dim),
            })
            .max()
            .unwrap_or(0)
    }
}

/// Percentage of rows whose prediction equals the label.
pub fn accuracy(ds: &SparseDataset, predict: impl Fn(&SparseRow) -> ClassLabel) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let hits = ds
        .rows()
        .iter()
        .zip(ds.labels())
        .filter(|(x, &l)| predict(x) == l)
        .count();
    100.0 * hits as f64 / ds.n_rows() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub engine: Engine,
    /// Scale features to [-1, 1] with statistics of the training set.
    pub scale: bool,
    pub sbl: SblConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            engine: Engine::Dqn,
            scale: true,
            sbl: SblConfig::default(),
        }
    }
}

/// A training set after scaling, with optional cached kernel distances.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scaler: Option<Scaler>,
    pub data: SparseDataset,
    distances: Option<DistanceTable>,
}

impl PreparedData {
    pub fn new(train: &SparseDataset, scale: bool, with_distances: bool) -> Self {
        let scaler = scale.then(|| Scaler::fit(train));
        let data = match &scaler {
            Some(s) => s.apply(train),
            None => train.clone(),
        };
        let distances =
            with_distances.then(|| DistanceTable::new(&data.rows().iter().collect::<Vec<_>>()));
        Self {
            scaler,
            data,
            distances,
        }
    }

    pub fn for_spec(train: &SparseDataset, spec: &MapSpec, scale: bool) -> Self {
        PreparedData::new(train, scale, matches!(spec, MapSpec::Rvm { .. }))
    }
}

/// Per-training-row basis matrix for the chosen map, plus the untrained map.
fn build_design<'a>(
    prepared: &'a PreparedData,
    rows: &[usize],
    spec: &MapSpec,
) -> Result<(DesignMatrix<'a>, Option<RandomLayer>)> {
    let data = &prepared.data;
    let n = rows.len();
    match *spec {
        MapSpec::Linear => {
            let refs = rows.iter().map(|&i| data.row(i)).collect();
            Ok((DesignMatrix::sparse(refs, data.n_features())?, None))
        }
        MapSpec::Rvm { sigma } => {
            let s2 = sigma * sigma;
            let columns: Vec<Vec<f64>> = match &prepared.distances {
                Some(d) => rows
                    .par_iter()
                    .map(|&j| rows.iter().map(|&i| (-d.get(i, j) / s2).exp()).collect())
                    .collect(),
                None => rows
                    .par_iter()
                    .map(|&j| {
                        rows.iter()
                            .map(|&i| gaussian_kernel(data.row(i), data.row(j), sigma))
                            .collect()
                    })
                    .collect(),
            };
            Ok((DesignMatrix::dense(n, columns)?, None))
        }
        MapSpec::Sbelm { hidden, seed } => {
            let layer = RandomLayer::new(hidden, data.n_features(), seed);
            let columns: Vec<Vec<f64>> = (0..hidden)
                .into_par_iter()
                .map(|l| {
                    rows.iter()
                        .map(|&i| layer.activation(l, data.row(i)))
                        .collect()
                })
                .collect();
            Ok((DesignMatrix::dense(n, columns)?, Some(layer)))
        }
    }
}

fn run_engine(
    engine: Engine,
    design: &DesignMatrix<'_>,
    targets: &[f64],
    cfg: &SblConfig,
    observer: &mut dyn FnMut(usize, &ArdState),
) -> Result<(ArdState, FitReport)> {
    match engine {
        Engine::Dqn => dqn_sbl_fit_observed(design, targets, cfg, observer),
        Engine::Classic => classic_sbl_fit_observed(design, targets, cfg, observer),
    }
}

fn model_from_state(
    prepared: &PreparedData,
    rows: &[usize],
    spec: &MapSpec,
    layer: Option<RandomLayer>,
    state: &ArdState,
    class_pair: (ClassLabel, ClassLabel),
) -> BinaryModel {
    let map = match *spec {
        MapSpec::Linear => FeatureMap::Linear {
            input_dim: prepared.data.n_features(),
        },
        MapSpec::Rvm { sigma } => FeatureMap::Rvm {
            sigma,
            references: state
                .active
                .iter()
                .filter(|&&c| c != 0)
                .map(|&c| prepared.data.row(rows[c - 1]).clone())
                .collect(),
        },
        MapSpec::Sbelm { .. } => FeatureMap::Sbelm {
            layer: layer.expect("random layer built with the design"),
        },
    };
    BinaryModel {
        map,
        scaler: prepared.scaler.clone(),
        active: state.active.clone(),
        weights: state.w.clone(),
        class_pair,
    }
}

fn check_problem(problem: &BinaryProblem) -> Result<()> {
    if !problem.has_both_classes() {
        return Err(SblError::arg(format!(
            "binary problem ({}, {}) needs rows of both classes",
            problem.class_pair.0, problem.class_pair.1
        )));
    }
    Ok(())
}

/// Fits one binary model on the rows of `problem` within prepared data.
pub fn train_binary_prepared(
    prepared: &PreparedData,
    problem: &BinaryProblem,
    spec: &MapSpec,
    opts: &TrainOptions,
) -> Result<(BinaryModel, FitReport)> {
    train_binary_observed(prepared, problem, spec, opts, &mut |_, _| {})
}

/// As [`train_binary_prepared`], calling `observer` with the model after
/// every outer ARD iteration.
pub fn train_binary_observed(
    prepared: &PreparedData,
    problem: &BinaryProblem,
    spec: &MapSpec,
    opts: &TrainOptions,
    observer: &mut dyn FnMut(usize, &BinaryModel),
) -> Result<(BinaryModel, FitReport)> {
    spec.validate()?;
    check_problem(problem)?;
    let (design, layer) = build_design(prepared, &problem.rows, spec)?;
    let (state, report) = run_engine(
        opts.engine,
        &design,
        &problem.targets,
        &opts.sbl,
        &mut |it, s| {
            let model = model_from_state(
                prepared,
                &problem.rows,
                spec,
                layer.clone(),
                s,
                problem.class_pair,
            );
            observer(it, &model);
        },
    )?;
    let model = model_from_state(
        prepared,
        &problem.rows,
        spec,
        layer,
        &state,
        problem.class_pair,
    );
    Ok((model, report))
}

/// Scales `train`, builds the map and fits one binary model.
pub fn train_binary(
    train: &SparseDataset,
    problem: &BinaryProblem,
    spec: &MapSpec,
    opts: &TrainOptions,
) -> Result<(BinaryModel, FitReport)> {
    let prepared = PreparedData::for_spec(train, spec, opts.scale);
    train_binary_prepared(&prepared, problem, spec, opts)
}

/// One-vs-one training; pair models are fitted in parallel and returned in
/// pair order.
pub fn train_ovo_prepared(
    prepared: &PreparedData,
    spec: &MapSpec,
    opts: &TrainOptions,
) -> Result<(OvoEnsemble, Vec<FitReport>)> {
    let classes = prepared.data.classes();
    if classes.len() < 2 {
        return Err(SblError::arg(format!(
            "training needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let fitted: Vec<(BinaryModel, FitReport)> = class_pairs(&classes)
        .into_par_iter()
        .map(|(a, b)| {
            let problem = BinaryProblem::from_pair(&prepared.data, a, b);
            train_binary_prepared(prepared, &problem, spec, opts)
        })
        .collect::<Result<_>>()?;
    let (models, reports) = fitted.into_iter().unzip();
    Ok((OvoEnsemble { classes, models }, reports))
}

pub fn train_ovo(
    train: &SparseDataset,
    spec: &MapSpec,
    opts: &TrainOptions,
) -> Result<(OvoEnsemble, Vec<FitReport>)> {
    let prepared = PreparedData::for_spec(train, spec, opts.scale);
    train_ovo_prepared(&prepared, spec, opts)
}

/// L2-regularized logistic regression: the MAP objective with every prior
/// precision fixed at `lambda` and no pruning.
pub fn lr_l2_fit(
    design: &DesignMatrix<'_>,
    targets: &[f64],
    lambda: f64,
    cfg: &DqnConfig,
) -> Result<DqnResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SblError::arg(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let active: Vec<usize> = (0..design.n_columns()).collect();
    let alpha = vec![lambda; active.len()];
    let obj = MapObjective::new(design, targets, &active, &alpha)?;
    dqn_minimize(&obj, &vec![0.0; active.len()], cfg)
}

/// Binary linear model from L2 logistic weights over every column.
pub fn lr_l2_model(
    prepared: &PreparedData,
    problem: &BinaryProblem,
    lambda: f64,
    cfg: &DqnConfig,
) -> Result<BinaryModel> {
    check_problem(problem)?;
    let (design, _) = build_design(prepared, &problem.rows, &MapSpec::Linear)?;
    let res = lr_l2_fit(&design, &problem.targets, lambda, cfg)?;
    Ok(BinaryModel {
        map: FeatureMap::Linear {
            input_dim: prepared.data.n_features(),
        },
        scaler: prepared.scaler.clone(),
        active: (0..design.n_columns()).collect(),
        weights: res.w,
        class_pair: problem.class_pair,
    })
}

/// `1 - nnz(w) / M` over the non-bias weights.
pub fn sparsity_ratio(model: &BinaryModel, n_features: usize) -> f64 {
    if n_features == 0 {
        return 0.0;
    }
    1.0 - model.nonzero_weights() as f64 / n_features as f64
}

/// One row of the feature-selection curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub sparsity_ratio: f64,
    /// Mean cross-validation accuracy at this outer iteration.
    pub validation_accuracy: f64,
    /// Accuracy on the held-out test set, when one is given.
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EarlyStopping {
    /// Outer iteration with the best mean validation accuracy.
    pub best_iteration: usize,
    /// Model of the full-training run snapshotted at `best_iteration`.
    pub model: BinaryModel,
    pub curve: Vec<CurvePoint>,
    pub report: FitReport,
}

/// Binary problem over a two-class dataset, larger identifier positive.
pub fn binary_problem(ds: &SparseDataset) -> Result<BinaryProblem> {
    let classes = ds.classes();
    if classes.len() != 2 {
        return Err(SblError::arg(format!(
            "a binary problem needs exactly 2 classes, found {}",
            classes.len()
        )));
    }
    Ok(BinaryProblem::from_pair(ds, classes[1], classes[0]))
}

/// Per-iteration accuracies of one ARD run, padded with the last value up to
/// `len` (a converged run keeps its final model).
fn accuracy_trajectory(
    prepared: &PreparedData,
    eval: &SparseDataset,
    opts: &TrainOptions,
    len: usize,
) -> Result<Vec<f64>> {
    let problem = binary_problem(&prepared.data)?;
    let mut acc = Vec::with_capacity(len);
    train_binary_observed(prepared, &problem, &MapSpec::Linear, opts, &mut |_, m| {
        acc.push(accuracy(eval, |x| m.predict(x)));
    })?;
    let last = acc.last().copied().unwrap_or(0.0);
    acc.resize(len, last);
    Ok(acc)
}

/// Chooses the stopping iteration by k-fold cross-validation, then runs once
/// on all of `train` and keeps the model at that iteration.
pub fn early_stopping_fit(
    train: &SparseDataset,
    test: Option<&SparseDataset>,
    opts: &TrainOptions,
    folds: usize,
    seed: u64,
) -> Result<EarlyStopping> {
    binary_problem(train)?;
    let max_its = opts.sbl.max_iterations;
    let split = kfold_split(train, folds, seed)?;
    let per_fold: Vec<Vec<f64>> = split
        .par_iter()
        .map(|f| {
            let fold_train = train.subset(&f.train);
            let prepared = PreparedData::new(&fold_train, opts.scale, false);
            accuracy_trajectory(&prepared, &train.subset(&f.validation), opts, max_its)
        })
        .collect::<Result<_>>()?;
    let mean: Vec<f64> = (0..max_its)
        .map(|it| per_fold.iter().map(|a| a[it]).sum::<f64>() / per_fold.len() as f64)
        .collect();
    let mut best = 0;
    for (it, &a) in mean.iter().enumerate() {
        if a > mean[best] {
            best = it;
        }
    }
    let best_iteration = best + 1;

    let prepared = PreparedData::new(train, opts.scale, false);
    let problem = binary_problem(&prepared.data)?;
    let n_features = prepared.data.n_features();
    let mut curve = Vec::new();
    let mut snapshot = None;
    let (last, report) =
        train_binary_observed(&prepared, &problem, &MapSpec::Linear, opts, &mut |it, m| {
            curve.push(CurvePoint {
                iteration: it,
                sparsity_ratio: sparsity_ratio(m, n_features),
                validation_accuracy: mean[it - 1],
                test_accuracy: test.map(|t| accuracy(t, |x| m.predict(x))),
            });
            if it == best_iteration {
                snapshot = Some(m.clone());
            }
        })?;
    Ok(EarlyStopping {
        best_iteration,
        model: snapshot.unwrap_or(last),
        curve,
        report,
    })
}

/// Self-describing, versioned model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub spec: MapSpec,
    pub options: TrainOptions,
    pub ensemble: OvoEnsemble,
}

impl ModelDocument {
    pub fn new(spec: MapSpec, options: TrainOptions, ensemble: OvoEnsemble) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            spec,
            options,
            ensemble,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| SblError::Model(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| SblError::Model(e.to_string()))?;
        if doc.format != MODEL_FORMAT {
            return Err(SblError::Model(format!("unknown format {:?}", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(SblError::Model(format!(
                "unsupported version {} (expected {MODEL_VERSION})",
                doc.version
            )));
        }
        for m in &doc.ensemble.models {
            if m.active.len() != m.weights.len() {
                return Err(SblError::Model("active and weight counts differ".into()));
            }
        }
        Ok(doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| SblError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SblError::io(path, e))?;
        ModelDocument::from_json(&text).map_err(|e| SblError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_libsvm;

    fn row(v: &[f64]) -> SparseRow {
        SparseRow::from_dense(v)
    }

    fn separable_toy() -> SparseDataset {
        parse_libsvm(
            "1 1:2 2:1\n1 1:1.5 2:2\n1 1:3 2:0.5\n1 1:2.5 2:2.5\n\
             -1 1:-2 2:-1\n-1 1:-1 2:-2\n-1 1:-3 2:-0.5\n-1 1:-2.5 2:-2\n",
        )
        .unwrap()
    }

    #[test]
    fn kernel_examples() {
        let x = row(&[1.0, 2.0]);
        assert_eq!(gaussian_kernel(&x, &x, 0.5), 1.0);
        let r = row(&[1.0, 0.0]);
        assert!((gaussian_kernel(&x, &r, 2.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_kernel(&x, &r, 1e6) > 1.0 - 1e-11);
        assert_eq!(gaussian_kernel(&x, &r, 0.7), gaussian_kernel(&r, &x, 0.7));
        let refs = vec![x.clone(), r.clone()];
        assert_eq!(gaussian_kernel_map(&refs, &x, 1.0)[0], 1.0);
    }

    #[test]
    fn distance_table_matches_direct() {
        let rows = [row(&[1.0, 0.0]), row(&[0.0, 2.0]), row(&[3.0, 1.0])];
        let refs: Vec<&SparseRow> = rows.iter().collect();
        let t = DistanceTable::new(&refs);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(t.get(i, j), rows[i].squared_distance(&rows[j]));
            }
        }
    }

    #[test]
    fn random_layer_is_reproducible_and_bounded() {
        let a = RandomLayer::new(7, 3, 42);
        let b = RandomLayer::new(7, 3, 42);
        assert_eq!(a.synapses, b.synapses);
        assert_eq!(a.biases, b.biases);
        assert!(a
            .synapses
            .iter()
            .chain(&a.biases)
            .all(|v| (-1.0..1.0).contains(v)));
        assert_ne!(a.synapses, RandomLayer::new(7, 3, 43).synapses);
        let x = row(&[0.3, -0.2, 1.0]);
        assert_eq!(a.random_layer_map(&x), b.random_layer_map(&x));
        assert!(a.random_layer_map(&x).iter().all(|&h| h > 0.0 && h < 1.0));
    }

    #[test]
    fn zero_layer_gives_half() {
        let mut layer = RandomLayer::new(2, 2, 0);
        layer.synapses.iter_mut().for_each(|v| *v = 0.0);
        layer.biases.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(layer.random_layer_map(&row(&[5.0, -3.0])), vec![0.5, 0.5]);
    }

    #[test]
    fn bias_only_zero_model_gives_half() {
        let m = BinaryModel {
            map: FeatureMap::Linear { input_dim: 2 },
            scaler: None,
            active: vec![0],
            weights: vec![0.0],
            class_pair: (ClassLabel(1.0), ClassLabel(0.0)),
        };
        assert_eq!(m.predict_proba(&row(&[3.0, 4.0])), 0.5);
        assert_eq!(m.predict(&row(&[3.0, 4.0])), ClassLabel(1.0));
    }

    #[test]
    fn linear_separable_toy_is_fit() {
        let ds = separable_toy();
        let problem = binary_problem(&ds).unwrap();
        let (model, _) =
            train_binary(&ds, &problem, &MapSpec::Linear, &TrainOptions::default()).unwrap();
        assert_eq!(accuracy(&ds, |x| model.predict(x)), 100.0);
    }

    #[test]
    fn rvm_references_are_surviving_rows() {
        let ds = separable_toy();
        let problem = binary_problem(&ds).unwrap();
        let (model, _) = train_binary(
            &ds,
            &problem,
            &MapSpec::Rvm { sigma: 1.0 },
            &TrainOptions::default(),
        )
        .unwrap();
        let FeatureMap::Rvm { references, .. } = &model.map else {
            panic!("expected rvm map");
        };
        assert_eq!(references.len(), model.n_bases());
        let scaled = model.scaler.as_ref().unwrap().apply(&ds);
        for (r, &c) in references
            .iter()
            .zip(model.active.iter().filter(|&&c| c != 0))
        {
            assert_eq!(r, scaled.row(problem.rows[c - 1]));
        }
        assert_eq!(accuracy(&ds, |x| model.predict(x)), 100.0);
    }

    #[test]
    fn single_class_problem_is_rejected() {
        let ds = parse_libsvm("1 1:1\n1 1:2\n").unwrap();
        let problem = BinaryProblem::from_pair(&ds, ClassLabel(1.0), ClassLabel(0.0));
        assert!(matches!(
            train_binary(&ds, &problem, &MapSpec::Linear, &TrainOptions::default()),
            Err(SblError::Argument(_))
        ));
    }

    #[test]
    fn tie_goes_to_smallest_class() {
        let half = |a: f64, b: f64| BinaryModel {
            map: FeatureMap::Linear { input_dim: 1 },
            scaler: None,
            active: vec![0],
            weights: vec![0.0],
            class_pair: (ClassLabel(a), ClassLabel(b)),
        };
        let ens = OvoEnsemble {
            classes: vec![ClassLabel(1.0), ClassLabel(2.0), ClassLabel(3.0)],
            models: vec![half(2.0, 1.0), half(3.0, 1.0), half(3.0, 2.0)],
        };
        let x = row(&[1.0]);
        assert_eq!(ens.ovo_predict(&x), ClassLabel(1.0));
        assert_eq!(ens.scores(&x).iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn lr_l2_large_lambda_shrinks_weights() {
        let ds = separable_toy();
        let problem = binary_problem(&ds).unwrap();
        let prepared = PreparedData::new(&ds, true, false);
        let small = lr_l2_model(&prepared, &problem, 0.03125, &DqnConfig::default()).unwrap();
        let large = lr_l2_model(&prepared, &problem, 1e6, &DqnConfig::default()).unwrap();
        let n2 = |m: &BinaryModel| m.weights.iter().map(|w| w * w).sum::<f64>();
        assert!(n2(&large) < 1e-6 * n2(&small));
        assert_eq!(power_grid().len(), 11);
    }

    #[test]
    fn model_document_round_trip_is_exact() {
        let ds = separable_toy();
        let opts = TrainOptions::default();
        for spec in [
            MapSpec::Linear,
            MapSpec::Rvm { sigma: 0.5 },
            MapSpec::Sbelm {
                hidden: 20,
                seed: 3,
            },
        ] {
            let (ens, _) = train_ovo(&ds, &spec, &opts).unwrap();
            let doc = ModelDocument::new(spec, opts, ens);
            let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
            assert_eq!(back, doc);
            for x in ds.rows() {
                assert_eq!(
                    back.ensemble.models[0].predict_proba(x).to_bits(),
                    doc.ensemble.models[0].predict_proba(x).to_bits()
                );
            }
        }
    }

    #[test]
    fn wrong_version_is_rejected() {
        let ds = separable_toy();
        let (ens, _) = train_ovo(&ds, &MapSpec::Linear, &TrainOptions::default()).unwrap();
        let mut doc = ModelDocument::new(MapSpec::Linear, TrainOptions::default(), ens);
        doc.version = 99;
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(
            ModelDocument::from_json(&text),
            Err(SblError::Model(_))
        ));
    }
}

//! Manifest-driven runs: training with grid search, grid tables, feature
//! selection curves and prediction. Every output except `timing.json` is a
//! pure function of the manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ard::FitReport;
use crate::data::{kfold_split, read_libsvm, train_test_split, ClassLabel, SparseDataset};
use crate::error::{Result, SblError};
use crate::models::{
    accuracy, binary_problem, early_stopping_fit, lr_l2_model, power_grid, train_ovo_prepared,
    CurvePoint, MapSpec, ModelDocument, OvoEnsemble, PreparedData, TrainOptions, HIDDEN_GRID_SMALL,
    SBELM_SEEDS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Train,
    Predict,
    CvGrid,
    FeatureSelect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Linear,
    Rvm,
    Sbelm,
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: Command,
    pub data: PathBuf,
    /// Held-out set for feature selection or the set to label for predict.
    pub test_data: Option<PathBuf>,
    /// Model to load for predict.
    pub model: Option<PathBuf>,
    pub map: MapKind,
    pub sigma_grid: Vec<f64>,
    pub hidden_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub fold_seed: u64,
    /// Training share when feature selection splits `data` itself.
    pub train_fraction: f64,
    pub options: TrainOptions,
    pub out: PathBuf,
    pub trace: bool,
    /// Report a convergence error when a final fit hits its iteration cap.
    #[serde(default)]
    pub require_convergence: bool,
}

impl RunManifest {
    pub fn new(command: Command, data: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            data: data.into(),
            test_data: None,
            model: None,
            map: MapKind::Linear,
            sigma_grid: power_grid(),
            hidden_grid: HIDDEN_GRID_SMALL.to_vec(),
            seeds: SBELM_SEEDS.to_vec(),
            lambda_grid: power_grid(),
            folds: 5,
            fold_seed: 1,
            train_fraction: 0.75,
            options: TrainOptions::default(),
            out: out.into(),
            trace: false,
            require_convergence: false,
        }
    }

    /// Grid cells in evaluation order.
    pub fn cells(&self) -> Vec<MapSpec> {
        match self.map {
            MapKind::Linear => vec![MapSpec::Linear],
            MapKind::Rvm => self
                .sigma_grid
                .iter()
                .map(|&sigma| MapSpec::Rvm { sigma })
                .collect(),
            MapKind::Sbelm => self
                .hidden_grid
                .iter()
                .flat_map(|&hidden| {
                    self.seeds
                        .iter()
                        .map(move |&seed| MapSpec::Sbelm { hidden, seed })
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.options.sbl.validate()?;
        if self.cells().is_empty() {
            return Err(SblError::arg("hyperparameter grid is empty"));
        }
        if matches!(self.command, Command::CvGrid | Command::FeatureSelect) && self.folds < 2 {
            return Err(SblError::arg("cross-validation needs at least 2 folds"));
        }
        if self.command == Command::FeatureSelect && self.map != MapKind::Linear {
            return Err(SblError::arg("feature selection runs in linear mode only"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SblError::arg("train fraction must lie in (0, 1)"));
        }
        if self.command == Command::Predict && self.model.is_none() {
            return Err(SblError::arg("predict needs a model file"));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SblError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| SblError::File {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Cross-validation summary of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub cell: MapSpec,
    /// Validation accuracy per fold, in percent.
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation over folds.
    pub std_accuracy: f64,
    /// Surviving non-bias bases per pair model, averaged over folds.
    pub mean_bases: f64,
    pub pair_models: usize,
    /// Outer ARD iterations, averaged over folds and pair models.
    pub mean_outer_iterations: f64,
    pub error: Option<String>,
}

impl MetricsRecord {
    fn failed(cell: MapSpec, err: &SblError) -> Self {
        Self {
            cell,
            fold_accuracy: Vec::new(),
            mean_accuracy: 0.0,
            std_accuracy: 0.0,
            mean_bases: 0.0,
            pair_models: 0,
            mean_outer_iterations: 0.0,
            error: Some(err.to_string()),
        }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub records: Vec<MetricsRecord>,
    /// Index of the cell with the highest mean accuracy (earliest on ties).
    pub best: Option<usize>,
}

impl GridReport {
    pub fn best_record(&self) -> Option<&MetricsRecord> {
        self.best.map(|b| &self.records[b])
    }

    /// Fixed-width table for reading.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<34} {:>8} {:>7} {:>9} {:>6} {:>8}",
            "cell", "mean", "std", "bases", "pairs", "outer"
        );
        for (i, r) in self.records.iter().enumerate() {
            let mark = if Some(i) == self.best { "*" } else { " " };
            let cell = format!("{mark}{}", cell_label(&r.cell));
            match &r.error {
                Some(e) => {
                    let _ = writeln!(s, "{cell:<34} failed: {e}");
                }
                None => {
                    let _ = writeln!(
                        s,
                        "{cell:<34} {:>8.2} {:>7.2} {:>9.2} {:>6} {:>8.1}",
                        r.mean_accuracy,
                        r.std_accuracy,
                        r.mean_bases,
                        r.pair_models,
                        r.mean_outer_iterations
                    );
                }
            }
        }
        s
    }
}

pub fn cell_label(spec: &MapSpec) -> String {
    match spec {
        MapSpec::Linear => "linear".to_string(),
        MapSpec::Rvm { sigma } => format!("rvm sigma={sigma}"),
        MapSpec::Sbelm { hidden, seed } => format!("sbelm hidden={hidden} seed={seed}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Seconds spent per grid cell, summed over folds.
    pub cells: Vec<f64>,
    pub total_seconds: f64,
}

struct FoldOutcome {
    accuracy: f64,
    bases: f64,
    pairs: usize,
    outer: f64,
    seconds: f64,
}

fn fold_outcome(
    prepared: &PreparedData,
    validation: &SparseDataset,
    spec: &MapSpec,
    opts: &TrainOptions,
) -> Result<FoldOutcome> {
    let start = Instant::now();
    let (ens, reports) = train_ovo_prepared(prepared, spec, opts)?;
    let outer = reports
        .iter()
        .map(|r| r.outer_iterations as f64)
        .sum::<f64>()
        / reports.len() as f64;
    Ok(FoldOutcome {
        accuracy: ens.accuracy(validation),
        bases: ens.mean_bases(),
        pairs: ens.models.len(),
        outer,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Evaluates every cell on shared folds. Failed cells are recorded and the
/// first failure is returned alongside when every cell failed.
pub fn cv_grid(
    ds: &SparseDataset,
    cells: &[MapSpec],
    folds: usize,
    fold_seed: u64,
    opts: &TrainOptions,
) -> Result<(GridReport, Timing, Option<SblError>)> {
    let start = Instant::now();
    let split = kfold_split(ds, folds, fold_seed)?;
    let need_distances = cells.iter().any(|c| matches!(c, MapSpec::Rvm { .. }));
    let prepared: Vec<(PreparedData, SparseDataset)> = split
        .par_iter()
        .map(|f| {
            (
                PreparedData::new(&ds.subset(&f.train), opts.scale, need_distances),
                ds.subset(&f.validation),
            )
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..prepared.len()).map(move |f| (c, f)))
        .collect();
    let outcomes: Vec<Result<FoldOutcome>> = jobs
        .par_iter()
        .map(|&(c, f)| fold_outcome(&prepared[f].0, &prepared[f].1, &cells[c], opts))
        .collect();

    let mut records = Vec::with_capacity(cells.len());
    let mut seconds = Vec::with_capacity(cells.len());
    let mut first_error = None;
    let mut outcomes = outcomes.into_iter();
    for cell in cells {
        let per_fold: Vec<Result<FoldOutcome>> = outcomes.by_ref().take(prepared.len()).collect();
        let mut ok = Vec::with_capacity(per_fold.len());
        let mut err = None;
        for r in per_fold {
            match r {
                Ok(o) => ok.push(o),
                Err(e) => {
                    err.get_or_insert(e);
                }
            }
        }
        seconds.push(ok.iter().map(|o| o.seconds).sum());
        if let Some(e) = err {
            log::warn!("{} failed: {e}", cell_label(cell));
            records.push(MetricsRecord::failed(*cell, &e));
            first_error.get_or_insert(e);
            continue;
        }
        let fold_accuracy: Vec<f64> = ok.iter().map(|o| o.accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&fold_accuracy);
        let k = ok.len() as f64;
        records.push(MetricsRecord {
            cell: *cell,
            fold_accuracy,
            mean_accuracy,
            std_accuracy,
            mean_bases: ok.iter().map(|o| o.bases).sum::<f64>() / k,
            pair_models: ok[0].pairs,
            mean_outer_iterations: ok.iter().map(|o| o.outer).sum::<f64>() / k,
            error: None,
        });
    }

    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if r.error.is_none() && best.is_none_or(|b| r.mean_accuracy > records[b].mean_accuracy) {
            best = Some(i);
        }
    }
    let all_failed = best.is_none();
    let report = GridReport { records, best };
    let timing = Timing {
        cells: seconds,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, timing, if all_failed { first_error } else { None }))
}

/// Final-model statistics written by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub selected: MapSpec,
    /// Cross-validation record of the selected cell, when folds were run.
    pub cv: Option<MetricsRecord>,
    pub training_accuracy: f64,
    pub bases_per_pair: Vec<usize>,
    pub mean_bases: f64,
    pub pair_models: usize,
    pub outer_iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| SblError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| SblError::Model(e.to_string()))?;
    write_file(path, &(text + "\n"))
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| SblError::io(out, e))
}

fn write_traces(path: &Path, reports: &[FitReport]) -> Result<()> {
    let mut s = String::from("pair,outer,iteration,value,grad_norm,step\n");
    for (p, r) in reports.iter().enumerate() {
        for (o, trace) in r.map_traces.iter().enumerate() {
            for rec in trace {
                let _ = writeln!(
                    s,
                    "{p},{},{},{},{},{}",
                    o + 1,
                    rec.iteration,
                    rec.value,
                    rec.grad_norm,
                    rec.step
                );
            }
        }
    }
    write_file(path, &s)
}

/// Files written by a run, keyed by role.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutputs {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Dispatches on the manifest's command and writes `manifest.json` next to
/// the outputs.
pub fn run(manifest: &RunManifest) -> Result<RunOutputs> {
    manifest.validate()?;
    prepare_out(&manifest.out)?;
    let manifest_path = manifest.out.join("manifest.json");
    write_json(&manifest_path, manifest)?;
    let mut outputs = match manifest.command {
        Command::Train => cmd_train(manifest)?,
        Command::CvGrid => cmd_cv_grid(manifest)?,
        Command::FeatureSelect => cmd_feature_select(manifest)?,
        Command::Predict => cmd_predict(manifest)?,
    };
    outputs.files.insert(0, manifest_path);
    Ok(outputs)
}

fn write_grid(
    out: &Path,
    report: &GridReport,
    timing: &Timing,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let grid_json = out.join("grid.json");
    write_json(&grid_json, report)?;
    let grid_txt = out.join("grid.txt");
    write_file(&grid_txt, &report.to_table())?;
    let timing_path = out.join("timing.json");
    write_json(&timing_path, timing)?;
    files.extend([grid_json, grid_txt, timing_path]);
    Ok(())
}

/// Grid search (when there are folds), then a final fit on all of `data`.
pub fn cmd_train(manifest: &RunManifest) -> Result<RunOutputs> {
    let start = Instant::now();
    let ds = read_libsvm(&manifest.data)?;
    let cells = manifest.cells();
    let mut files = Vec::new();
    let mut opts = manifest.options;

    let (selected, cv) = if manifest.folds >= 2 {
        let (report, mut timing, err) =
            cv_grid(&ds, &cells, manifest.folds, manifest.fold_seed, &opts)?;
        if let Some(e) = err {
            return Err(e);
        }
        let best = report.best_record().expect("some cell succeeded").clone();
        timing.total_seconds = start.elapsed().as_secs_f64();
        write_grid(&manifest.out, &report, &timing, &mut files)?;
        (best.cell, Some(best))
    } else {
        (cells[0], None)
    };

    opts.sbl.record_traces = manifest.trace;
    let prepared = PreparedData::for_spec(&ds, &selected, opts.scale);
    let (ensemble, reports) = train_ovo_prepared(&prepared, &selected, &opts)?;
    opts.sbl.record_traces = false;

    let bases_per_pair: Vec<usize> = ensemble.models.iter().map(|m| m.n_bases()).collect();
    let metrics = TrainMetrics {
        selected,
        cv,
        training_accuracy: ensemble.accuracy(&ds),
        mean_bases: ensemble.mean_bases(),
        pair_models: ensemble.models.len(),
        bases_per_pair,
        outer_iterations: reports.iter().map(|r| r.outer_iterations).collect(),
        converged: reports.iter().map(|r| r.converged).collect(),
    };
    let doc = ModelDocument::new(selected, opts, ensemble);
    let model_path = manifest.out.join("model.json");
    doc.save(&model_path)?;
    let metrics_path = manifest.out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    files.extend([model_path, metrics_path]);
    if manifest.trace {
        let trace_path = manifest.out.join("trace.csv");
        write_traces(&trace_path, &reports)?;
        files.push(trace_path);
    }
    if manifest.folds < 2 {
        let timing_path = manifest.out.join("timing.json");
        write_json(
            &timing_path,
            &Timing {
                cells: vec![],
                total_seconds: start.elapsed().as_secs_f64(),
            },
        )?;
        files.push(timing_path);
    }
    if manifest.require_convergence {
        if let Some(p) = metrics.converged.iter().position(|c| !c) {
            return Err(SblError::Convergence(format!(
                "pair model {p} stopped after {} outer iterations",
                metrics.outer_iterations[p]
            )));
        }
    }
    let summary = match &metrics.cv {
        Some(r) => format!(
            "{}: cv accuracy {:.2} ± {:.2}, {:.2} bases per pair model",
            cell_label(&selected),
            r.mean_accuracy,
            r.std_accuracy,
            metrics.mean_bases
        ),
        None => format!(
            "{}: training accuracy {:.2}, {:.2} bases per pair model",
            cell_label(&selected),
            metrics.training_accuracy,
            metrics.mean_bases
        ),
    };
    Ok(RunOutputs { files, summary })
}

pub fn cmd_cv_grid(manifest: &RunManifest) -> Result<RunOutputs> {
    let ds = read_libsvm(&manifest.data)?;
    let (report, timing, err) = cv_grid(
        &ds,
        &manifest.cells(),
        manifest.folds,
        manifest.fold_seed,
        &manifest.options,
    )?;
    let mut files = Vec::new();
    write_grid(&manifest.out, &report, &timing, &mut files)?;
    if let Some(e) = err {
        return Err(e);
    }
    let summary = report.to_table();
    Ok(RunOutputs { files, summary })
}

/// Feature-selection metrics, including the L2 logistic baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectMetrics {
    pub best_iteration: usize,
    pub sparsity_ratio: f64,
    pub selected_features: usize,
    pub n_features: usize,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    /// L2 logistic baseline: (lambda, validation accuracy, test accuracy).
    pub baseline: Option<(f64, f64, f64)>,
}

fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut s = String::from("iteration,sparsity_ratio,validation_accuracy,test_accuracy\n");
    for p in curve {
        let test = p.test_accuracy.map_or(String::new(), |t| t.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{}",
            p.iteration, p.sparsity_ratio, p.validation_accuracy, test
        );
    }
    s
}

/// Surviving features (1-based) with weights, largest magnitude first.
pub fn ranked_features(ens: &OvoEnsemble) -> Vec<(usize, f64)> {
    let m = &ens.models[0];
    let mut f: Vec<(usize, f64)> = m
        .active
        .iter()
        .zip(&m.weights)
        .filter(|&(&c, &w)| c != 0 && w != 0.0)
        .map(|(&c, &w)| (c, w))
        .collect();
    f.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    f
}

/// Chooses lambda by cross-validation on `train`, then scores on `test`.
fn lr_baseline(
    train: &SparseDataset,
    test: &SparseDataset,
    manifest: &RunManifest,
) -> Result<(f64, f64, f64)> {
    let split = kfold_split(train, manifest.folds, manifest.fold_seed)?;
    let opts = &manifest.options;
    let folds: Vec<(PreparedData, SparseDataset)> = split
        .iter()
        .map(|f| {
            (
                PreparedData::new(&train.subset(&f.train), opts.scale, false),
                train.subset(&f.validation),
            )
        })
        .collect();
    let scores: Vec<f64> = manifest
        .lambda_grid
        .par_iter()
        .map(|&lambda| {
            let accs = folds
                .iter()
                .map(|(p, v)| {
                    let problem = binary_problem(&p.data)?;
                    let m = lr_l2_model(p, &problem, lambda, &opts.sbl.inner)?;
                    Ok(accuracy(v, |x| m.predict(x)))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(mean_std(&accs).0)
        })
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    let lambda = manifest.lambda_grid[best];
    let prepared = PreparedData::new(train, opts.scale, false);
    let problem = binary_problem(&prepared.data)?;
    let m = lr_l2_model(&prepared, &problem, lambda, &opts.sbl.inner)?;
    Ok((lambda, scores[best], accuracy(test, |x| m.predict(x))))
}

pub fn cmd_feature_select(manifest: &RunManifest) -> Result<RunOutputs> {
    let start = Instant::now();
    let ds = read_libsvm(&manifest.data)?;
    let (train, test) = match &manifest.test_data {
        Some(p) => {
            let test = read_libsvm(p)?;
            let m = ds.n_features().max(test.n_features());
            (ds.with_n_features(m)?, test.with_n_features(m)?)
        }
        None => {
            let (tr, te) = train_test_split(&ds, manifest.train_fraction, manifest.fold_seed)?;
            (ds.subset(&tr), ds.subset(&te))
        }
    };
    let opts = manifest.options;
    let es = early_stopping_fit(
        &train,
        Some(&test),
        &opts,
        manifest.folds,
        manifest.fold_seed,
    )?;
    let baseline = if manifest.lambda_grid.is_empty() {
        None
    } else {
        Some(lr_baseline(&train, &test, manifest)?)
    };

    let n_features = train.n_features();
    let point = es.curve[es.best_iteration - 1];
    let metrics = FeatureSelectMetrics {
        best_iteration: es.best_iteration,
        sparsity_ratio: point.sparsity_ratio,
        selected_features: es.model.nonzero_weights(),
        n_features,
        validation_accuracy: point.validation_accuracy,
        test_accuracy: accuracy(&test, |x| es.model.predict(x)),
        baseline,
    };
    let classes = {
        let mut c = vec![es.model.class_pair.1, es.model.class_pair.0];
        c.sort();
        c
    };
    let ensemble = OvoEnsemble {
        classes,
        models: vec![es.model],
    };

    let out = &manifest.out;
    let curve_path = out.join("curve.csv");
    write_file(&curve_path, &curve_csv(&es.curve))?;
    let features_path = out.join("features.txt");
    let mut features = String::from("feature\tweight\n");
    for (c, w) in ranked_features(&ensemble) {
        let _ = writeln!(features, "{c}\t{w}");
    }
    write_file(&features_path, &features)?;
    let model_path = out.join("model.json");
    ModelDocument::new(MapSpec::Linear, opts, ensemble).save(&model_path)?;
    let metrics_path = out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    let timing_path = out.join("timing.json");
    write_json(
        &timing_path,
        &Timing {
            cells: vec![],
            total_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    let mut summary = format!(
        "stopping iteration {}: {} of {} features, test accuracy {:.2}",
        metrics.best_iteration, metrics.selected_features, n_features, metrics.test_accuracy
    );
    if let Some((lambda, _, acc)) = metrics.baseline {
        let _ = write!(summary, " (L2 baseline {acc:.2} at lambda {lambda})");
    }
    Ok(RunOutputs {
        files: vec![
            curve_path,
            features_path,
            model_path,
            metrics_path,
            timing_path,
        ],
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictMetrics {
    pub rows: usize,
    /// Present when every label belongs to the model's classes.
    pub accuracy: Option<f64>,
}

/// Predicted class and per-class vote columns for every row.
pub fn predict_rows(ens: &OvoEnsemble, ds: &SparseDataset) -> Result<Vec<(ClassLabel, Vec<f64>)>> {
    let dim = ens.input_dim();
    if ds.n_features() > dim {
        return Err(SblError::arg(format!(
            "dataset has {} features but the model was trained on {dim}",
            ds.n_features()
        )));
    }
    Ok(ds
        .rows()
        .iter()
        .map(|x| {
            let scores = ens.scores(x);
            let mut best = 0;
            for (k, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = k;
                }
            }
            (ens.classes[best], scores)
        })
        .collect())
}

pub fn cmd_predict(manifest: &RunManifest) -> Result<RunOutputs> {
    let model_path = manifest.model.as_ref().expect("validated");
    let doc = ModelDocument::load(model_path)?;
    let data_path = manifest.test_data.as_ref().unwrap_or(&manifest.data);
    let ds = read_libsvm(data_path)?;
    let predictions = predict_rows(&doc.ensemble, &ds)?;

    let mut s = String::from("prediction");
    for c in &doc.ensemble.classes {
        let _ = write!(s, "\tscore_{c}");
    }
    s.push('\n');
    for (label, scores) in &predictions {
        let _ = write!(s, "{label}");
        for v in scores {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    let labelled = ds
        .labels()
        .iter()
        .all(|l| doc.ensemble.classes.binary_search(l).is_ok());
    let metrics = PredictMetrics {
        rows: ds.n_rows(),
        accuracy: labelled.then(|| {
            let hits = predictions
                .iter()
                .zip(ds.labels())
                .filter(|((p, _), l)| p == *l)
                .count();
            if ds.is_empty() {
                0.0
            } else {
                100.0 * hits as f64 / ds.n_rows() as f64
            }
        }),
    };
    let pred_path = manifest.out.join("predictions.tsv");
    write_file(&pred_path, &s)?;
    let metrics_path = manifest.out.join("metrics.json");
    write_json(&metrics_path, &metrics)?;
    let summary = match metrics.accuracy {
        Some(a) => format!("{} rows, accuracy {a:.2}", metrics.rows),
        None => format!("{} rows", metrics.rows),
    };
    Ok(RunOutputs {
        files: vec![pred_path, metrics_path],
        summary,
    })
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dqnsbl::dqn::InitialDiag;
use dqnsbl::experiment::{run, Command, MapKind, RunManifest};
use dqnsbl::models::{Engine, HIDDEN_GRID_LARGE, HIDDEN_GRID_SMALL};
use dqnsbl::SblError;

const EXIT_PARSE: u8 = 3;
const EXIT_ARGUMENT: u8 = 4;
const EXIT_CONVERGENCE: u8 = 5;
const EXIT_ORACLE_GUARD: u8 = 6;
const EXIT_ILL_CONDITIONED: u8 = 7;
const EXIT_IO: u8 = 8;
const EXIT_MODEL: u8 = 9;

/// Sparse Bayesian logistic classification with a diagonal quasi-Newton
/// MAP stage.
#[derive(Debug, Parser)]
#[command(name = "dqnsbl", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Grid-search by cross-validation, then fit on all data and save the model.
    Train(RunArgs),
    /// Label a dataset with a saved model.
    Predict(PredictArgs),
    /// Cross-validate every grid cell and report the table.
    CvGrid(RunArgs),
    /// Linear feature selection with early-stopping cross-validation.
    FeatureSelect(RunArgs),
    /// Re-run a saved manifest.json.
    Run {
        manifest: PathBuf,
        /// Write outputs here instead of the manifest's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MapArg {
    Linear,
    Rvm,
    Sbelm,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Dqn,
    Classic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HiddenPreset {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum B0Arg {
    Identity,
    InverseHessianDiagonal,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Training data in LIBSVM format.
    #[arg(long)]
    data: PathBuf,
    /// Held-out test set (feature-select); otherwise a stratified split is used.
    #[arg(long)]
    test_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "linear")]
    map: MapArg,
    #[arg(long, value_enum, default_value = "dqn")]
    engine: EngineArg,
    /// Comma-separated kernel radii. Default 2^-5 .. 2^5.
    #[arg(long, value_delimiter = ',')]
    sigma_grid: Option<Vec<f64>>,
    /// Comma-separated hidden-layer sizes. Overrides --hidden-preset.
    #[arg(long, value_delimiter = ',')]
    hidden_grid: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "small")]
    hidden_preset: HiddenPreset,
    /// Comma-separated random-layer seeds.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Comma-separated L2 baseline strengths for feature-select. Default 2^-5 .. 2^5.
    #[arg(long, value_delimiter = ',')]
    lambda_grid: Option<Vec<f64>>,
    /// Cross-validation folds; below 2 skips grid search in train.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    fold_seed: u64,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    /// Do not rescale features to [-1, 1].
    #[arg(long)]
    no_scale: bool,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long = "delta-logalpha")]
    delta_logalpha: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    init_alpha: Option<f64>,
    /// Outer ARD iterations.
    #[arg(long)]
    max_its: Option<usize>,
    /// Quasi-Newton iterations per MAP stage.
    #[arg(long)]
    qn_max_its: Option<usize>,
    /// Quasi-Newton gradient-norm tolerance.
    #[arg(long)]
    qn_eps: Option<f64>,
    /// Starting inverse-Hessian diagonal of each MAP stage.
    #[arg(long, value_enum)]
    b0: Option<B0Arg>,
    /// Fail with the convergence exit code when a final fit does not converge.
    #[arg(long)]
    require_convergence: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Write MAP-stage optimizer traces of the final fit.
    #[arg(long)]
    trace: bool,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn manifest_from(command: Command, a: RunArgs) -> RunManifest {
    let mut m = RunManifest::new(command, a.data, a.out);
    m.test_data = a.test_data;
    m.map = match a.map {
        MapArg::Linear => MapKind::Linear,
        MapArg::Rvm => MapKind::Rvm,
        MapArg::Sbelm => MapKind::Sbelm,
    };
    m.options.engine = match a.engine {
        EngineArg::Dqn => Engine::Dqn,
        EngineArg::Classic => Engine::Classic,
    };
    if let Some(g) = a.sigma_grid {
        m.sigma_grid = g;
    }
    m.hidden_grid = a.hidden_grid.unwrap_or_else(|| match a.hidden_preset {
        HiddenPreset::Small => HIDDEN_GRID_SMALL.to_vec(),
        HiddenPreset::Large => HIDDEN_GRID_LARGE.to_vec(),
    });
    m.seeds = a.seeds;
    if let Some(g) = a.lambda_grid {
        m.lambda_grid = g;
    }
    m.folds = a.folds;
    m.fold_seed = a.fold_seed;
    m.train_fraction = a.train_fraction;
    m.options.scale = !a.no_scale;
    m.require_convergence = a.require_convergence;
    m.trace = a.trace;

    let sbl = &mut m.options.sbl;
    if let Some(v) = a.alpha_max {
        sbl.alpha_max = v;
    }
    if let Some(v) = a.delta_logalpha {
        sbl.delta_log_alpha = v;
    }
    if let Some(v) = a.c {
        sbl.c = v;
    }
    if let Some(v) = a.init_alpha {
        sbl.init_alpha = v;
    }
    if let Some(v) = a.max_its {
        sbl.max_iterations = v;
    }
    if let Some(v) = a.qn_max_its {
        sbl.inner.max_iterations = v;
    }
    if let Some(v) = a.qn_eps {
        sbl.inner.grad_tolerance = v;
    }
    if let Some(b0) = a.b0 {
        sbl.inner.initial_diag = match b0 {
            B0Arg::Identity => InitialDiag::Identity,
            B0Arg::InverseHessianDiagonal => InitialDiag::InverseHessianDiagonal,
        };
    }
    m
}

fn exit_code(err: &SblError) -> u8 {
    match err {
        SblError::Parse { .. } => EXIT_PARSE,
        SblError::Argument(_) => EXIT_ARGUMENT,
        SblError::Convergence(_) => EXIT_CONVERGENCE,
        SblError::OracleGuard { .. } => EXIT_ORACLE_GUARD,
        SblError::IllConditioned(_) => EXIT_ILL_CONDITIONED,
        SblError::Io { .. } => EXIT_IO,
        SblError::File { .. } | SblError::Model(_) => EXIT_MODEL,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_ARGUMENT)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let manifest = match cli.command {
        Cmd::Train(a) => manifest_from(Command::Train, a),
        Cmd::CvGrid(a) => manifest_from(Command::CvGrid, a),
        Cmd::FeatureSelect(a) => manifest_from(Command::FeatureSelect, a),
        Cmd::Predict(a) => {
            let mut m = RunManifest::new(Command::Predict, a.data, a.out);
            m.model = Some(a.model);
            m
        }
        Cmd::Run { manifest, out } => match RunManifest::load(&manifest) {
            Ok(mut m) => {
                if let Some(out) = out {
                    m.out = out;
                }
                m
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(exit_code(&e));
            }
        },
    };
    match run(&manifest) {
        Ok(outputs) => {
            println!("{}", outputs.summary.trim_end());
            for f in &outputs.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

//! Automatic relevance determination: alternate a MAP stage for the weights
//! with a re-estimation of the per-column prior precisions, pruning columns
//! whose precision diverges.
//!
//! Two MAP stages are provided. [`dqn_sbl_fit`] uses the diagonal
//! quasi-Newton solver and its diagonal `B` in place of the posterior
//! covariance, so nothing quadratic in the active dimension is ever stored.
//! [`classic_sbl_fit`] is the dense reference: damped Newton on `L(w)` and
//! the exact diagonal of the inverse Hessian. It refuses active dimensions
//! above [`DENSE_ORACLE_LIMIT`].

use serde::{Deserialize, Serialize};

use crate::dqn::{dqn_minimize, norm, DqnConfig, InitialDiag, IterationRecord};
use crate::error::{Result, SblError};
use crate::objective::{DesignMatrix, MapObjective, Objective, DENSE_ORACLE_LIMIT};

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SblConfig {
    pub max_iterations: usize,
    pub alpha_max: f64,
    pub delta_log_alpha: f64,
    /// Numerator substituted when `1 - alpha_k b_k <= 0`.
    pub c: f64,
    pub init_alpha: f64,
    /// Never prune the bias column.
    #[serde(default = "default_true")]
    pub keep_bias: bool,
    /// Keep every MAP-stage optimizer trace in the fit report.
    #[serde(default)]
    pub record_traces: bool,
    pub inner: DqnConfig,
}

impl Default for SblConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            alpha_max: 1e6,
            delta_log_alpha: 1e-3,
            c: 1e-4,
            init_alpha: 1e-2,
            keep_bias: true,
            record_traces: false,
            inner: DqnConfig {
                initial_diag: InitialDiag::InverseHessianDiagonal,
                ..DqnConfig::default()
            },
        }
    }
}

impl SblConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.alpha_max,
            self.delta_log_alpha,
            self.c,
            self.init_alpha,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(SblError::arg("ARD constants must be positive and finite"));
        }
        if self.delta_log_alpha >= 1.0 || self.c >= 1.0 {
            return Err(SblError::arg("delta_log_alpha and c must be below 1"));
        }
        if self.init_alpha > self.alpha_max {
            return Err(SblError::arg("init_alpha exceeds alpha_max"));
        }
        self.inner.validate()
    }
}

/// Active-set view of the model during and after fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArdState {
    pub n_columns: usize,
    /// Ascending design-column indices still in the model.
    pub active: Vec<usize>,
    pub w: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Diagonal covariance estimate from the last MAP stage.
    pub diag_b: Vec<f64>,
    /// Ascending indices removed from the model; their weights are zero.
    pub pruned: Vec<usize>,
}

impl ArdState {
    fn initial(n_columns: usize, init_alpha: f64) -> Self {
        Self {
            n_columns,
            active: (0..n_columns).collect(),
            w: vec![0.0; n_columns],
            alpha: vec![init_alpha; n_columns],
            diag_b: vec![1.0; n_columns],
            pruned: Vec::new(),
        }
    }

    /// Weights scattered over all design columns.
    pub fn full_weights(&self) -> Vec<f64> {
        let mut full = vec![0.0; self.n_columns];
        for (&c, &w) in self.active.iter().zip(&self.w) {
            full[c] = w;
        }
        full
    }

    /// Non-zero weights on non-bias columns.
    pub fn nonzero_features(&self) -> usize {
        self.active
            .iter()
            .zip(&self.w)
            .filter(|&(&c, &w)| c != 0 && w != 0.0)
            .count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub outer_iterations: usize,
    /// Active-set size before the first iteration and after each one.
    pub active_count_history: Vec<usize>,
    pub converged: bool,
    /// Per iteration, how many components took the `c` branch of the update.
    pub fallback_count: Vec<usize>,
    /// Per iteration, MAP-stage iterations used.
    pub map_iterations: Vec<usize>,
    /// MAP stages that stopped before reaching the gradient tolerance.
    pub map_unconverged: usize,
    /// Set when every column would have been pruned and one was kept.
    pub kept_last_column: bool,
    #[serde(skip)]
    pub map_traces: Vec<Vec<IterationRecord>>,
}

/// Re-estimates the prior precisions from the MAP weights and the diagonal
/// covariance estimate.
///
/// `alpha'_k = (1 - alpha_k b_k) / w_k^2` when the numerator is positive,
/// otherwise `c / w_k^2`. A weight of exactly zero yields `2 * alpha_max`,
/// which forces the column out. Returns the new precisions and the number
/// of components that took the `c` branch.
pub fn ard_update(
    alpha: &[f64],
    w: &[f64],
    diag_b: &[f64],
    c: f64,
    alpha_max: f64,
) -> Result<(Vec<f64>, usize)> {
    if alpha.len() != w.len() || alpha.len() != diag_b.len() {
        return Err(SblError::arg("ard_update inputs differ in length"));
    }
    let mut fallbacks = 0;
    let updated = alpha
        .iter()
        .zip(w)
        .zip(diag_b)
        .map(|((&a, &wk), &b)| {
            let gap = 1.0 - a * b;
            let numerator = if gap > 0.0 {
                gap
            } else {
                fallbacks += 1;
                c
            };
            if wk == 0.0 {
                2.0 * alpha_max
            } else {
                numerator / (wk * wk)
            }
        })
        .collect();
    Ok((updated, fallbacks))
}

/// True iff `max_k |ln new_k - ln old_k| < tol`; vacuously true when empty.
pub fn log_alpha_converged(alpha_old: &[f64], alpha_new: &[f64], tol: f64) -> bool {
    alpha_old
        .iter()
        .zip(alpha_new)
        .all(|(o, n)| (n.ln() - o.ln()).abs() < tol)
}

/// Solution of one MAP stage.
struct MapSolution {
    w: Vec<f64>,
    diag: Vec<f64>,
    iterations: usize,
    converged: bool,
    trace: Vec<IterationRecord>,
}

trait MapStage {
    fn solve(&self, obj: &MapObjective<'_, '_>, w0: &[f64]) -> Result<MapSolution>;
}

struct DiagonalQuasiNewton(DqnConfig);

impl MapStage for DiagonalQuasiNewton {
    fn solve(&self, obj: &MapObjective<'_, '_>, w0: &[f64]) -> Result<MapSolution> {
        let res = dqn_minimize(obj, w0, &self.0)?;
        Ok(MapSolution {
            w: res.w,
            diag: res.diag_b,
            iterations: res.iterations,
            converged: res.converged,
            trace: res.trace,
        })
    }
}

struct DenseNewton(DqnConfig);

impl MapStage for DenseNewton {
    fn solve(&self, obj: &MapObjective<'_, '_>, w0: &[f64]) -> Result<MapSolution> {
        let cfg = &self.0;
        let mut w = w0.to_vec();
        let (mut value, mut grad) = obj.value_and_gradient(&w);
        let mut trace = vec![IterationRecord {
            iteration: 0,
            value,
            grad_norm: norm(&grad),
            step: 0.0,
        }];
        let mut iterations = 0;
        while norm(&grad) > cfg.grad_tolerance && iterations < cfg.max_iterations {
            let h = obj.hessian(&w)?;
            let chol = h.cholesky().ok_or_else(|| {
                SblError::IllConditioned("Hessian is not positive definite".into())
            })?;
            let rhs = nalgebra::DVector::from_iterator(grad.len(), grad.iter().map(|g| -g));
            let step = chol.solve(&rhs);
            if step.iter().any(|s| !s.is_finite()) {
                return Err(SblError::IllConditioned("Newton step is not finite".into()));
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                let (v, g) = obj.value_and_gradient(&trial);
                if v.is_finite() && v <= value {
                    accepted = Some((trial, v, g));
                    break;
                }
                t *= 0.5;
            }
            let Some((trial, v, g)) = accepted else {
                break;
            };
            w = trial;
            value = v;
            grad = g;
            iterations += 1;
            trace.push(IterationRecord {
                iteration: iterations,
                value,
                grad_norm: norm(&grad),
                step: t,
            });
        }
        let h = obj.hessian(&w)?;
        let chol = h
            .cholesky()
            .ok_or_else(|| SblError::IllConditioned("Hessian is not positive definite".into()))?;
        let inverse = chol.inverse();
        let diag: Vec<f64> = inverse.diagonal().iter().copied().collect();
        if diag.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(SblError::IllConditioned(
                "posterior covariance has a non-positive diagonal".into(),
            ));
        }
        Ok(MapSolution {
            converged: norm(&grad) <= cfg.grad_tolerance,
            w,
            diag,
            iterations,
            trace,
        })
    }
}

fn check_inputs(design: &DesignMatrix<'_>, targets: &[f64], cfg: &SblConfig) -> Result<()> {
    cfg.validate()?;
    if design.n_rows() == 0 {
        return Err(SblError::arg("design matrix has no rows"));
    }
    if targets.len() != design.n_rows() {
        return Err(SblError::arg(format!(
            "{} targets for {} design rows",
            targets.len(),
            design.n_rows()
        )));
    }
    if targets.iter().any(|&t| t != 0.0 && t != 1.0) {
        return Err(SblError::arg("targets must be 0 or 1"));
    }
    Ok(())
}

fn fit_with_stage<S: MapStage>(
    stage: &S,
    design: &DesignMatrix<'_>,
    targets: &[f64],
    cfg: &SblConfig,
    observer: &mut dyn FnMut(usize, &ArdState),
) -> Result<(ArdState, FitReport)> {
    check_inputs(design, targets, cfg)?;
    let mut state = ArdState::initial(design.n_columns(), cfg.init_alpha);
    let mut report = FitReport {
        active_count_history: vec![state.active.len()],
        ..FitReport::default()
    };

    for iteration in 1..=cfg.max_iterations {
        let obj = MapObjective::new(design, targets, &state.active, &state.alpha)?;
        let map = stage.solve(&obj, &state.w)?;
        let (alpha_new, fallbacks) =
            ard_update(&state.alpha, &map.w, &map.diag, cfg.c, cfg.alpha_max)?;

        let is_kept =
            |k: usize| alpha_new[k] <= cfg.alpha_max || (cfg.keep_bias && state.active[k] == 0);
        let mut keep: Vec<usize> = (0..state.active.len()).filter(|&k| is_kept(k)).collect();
        if keep.is_empty() {
            let fallback = (0..state.active.len())
                .min_by(|&a, &b| alpha_new[a].total_cmp(&alpha_new[b]))
                .expect("active set is never empty");
            log::warn!(
                "every column exceeded alpha_max; keeping column {}",
                state.active[fallback]
            );
            report.kept_last_column = true;
            keep.push(fallback);
        }

        let pruned_any = keep.len() < state.active.len();
        let converged = !pruned_any && {
            let clamped: Vec<f64> = alpha_new.iter().map(|a| a.min(cfg.alpha_max)).collect();
            log_alpha_converged(&state.alpha, &clamped, cfg.delta_log_alpha)
        };

        let mut next = ArdState {
            n_columns: state.n_columns,
            active: Vec::with_capacity(keep.len()),
            w: Vec::with_capacity(keep.len()),
            alpha: Vec::with_capacity(keep.len()),
            diag_b: Vec::with_capacity(keep.len()),
            pruned: std::mem::take(&mut state.pruned),
        };
        let mut kept = keep.iter().copied().peekable();
        for k in 0..state.active.len() {
            if kept.peek() == Some(&k) {
                kept.next();
                next.active.push(state.active[k]);
                next.w.push(map.w[k]);
                next.alpha.push(alpha_new[k].min(cfg.alpha_max));
                next.diag_b.push(map.diag[k]);
            } else {
                next.pruned.push(state.active[k]);
            }
        }
        next.pruned.sort_unstable();
        state = next;

        report.outer_iterations = iteration;
        report.active_count_history.push(state.active.len());
        report.fallback_count.push(fallbacks);
        report.map_iterations.push(map.iterations);
        if !map.converged {
            report.map_unconverged += 1;
        }
        if cfg.record_traces {
            report.map_traces.push(map.trace);
        }
        observer(iteration, &state);

        if converged {
            report.converged = true;
            break;
        }
    }
    Ok((state, report))
}

/// Sparse Bayesian fit with the diagonal quasi-Newton MAP stage.
pub fn dqn_sbl_fit(
    design: &DesignMatrix<'_>,
    targets: &[f64],
    cfg: &SblConfig,
) -> Result<(ArdState, FitReport)> {
    dqn_sbl_fit_observed(design, targets, cfg, &mut |_, _| {})
}

/// [`dqn_sbl_fit`] calling `observer(iteration, state)` after every outer
/// iteration (iterations count from 1).
pub fn dqn_sbl_fit_observed(
    design: &DesignMatrix<'_>,
    targets: &[f64],
    cfg: &SblConfig,
    observer: &mut dyn FnMut(usize, &ArdState),
) -> Result<(ArdState, FitReport)> {
    fit_with_stage(
        &DiagonalQuasiNewton(cfg.inner),
        design,
        targets,
        cfg,
        observer,
    )
}

/// Dense reference fit: Newton MAP stage and the exact posterior variances.
pub fn classic_sbl_fit(
    design: &DesignMatrix<'_>,
    targets: &[f64],
    cfg: &SblConfig,
) -> Result<(ArdState, FitReport)> {
    classic_sbl_fit_observed(design, targets, cfg, &mut |_, _| {})
}

pub fn classic_sbl_fit_observed(
    design: &DesignMatrix<'_>,
    targets: &[f64],
    cfg: &SblConfig,
    observer: &mut dyn FnMut(usize, &ArdState),
) -> Result<(ArdState, FitReport)> {
    if design.n_columns() > DENSE_ORACLE_LIMIT {
        return Err(SblError::OracleGuard {
            dim: design.n_columns(),
            limit: DENSE_ORACLE_LIMIT,
        });
    }
    fit_with_stage(&DenseNewton(cfg.inner), design, targets, cfg, observer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn update_positive_branch() {
        let (a, f) = ard_update(&[1.0], &[0.5], &[0.5], 1e-4, 1e6).unwrap();
        assert_eq!(a, vec![2.0]);
        assert_eq!(f, 0);
    }

    #[test]
    fn update_fallback_branch() {
        let (a, f) = ard_update(&[4.0], &[0.1], &[0.5], 1e-4, 1e6).unwrap();
        assert!((a[0] - 0.01).abs() < 1e-15);
        assert_eq!(f, 1);
        let (a, _) = ard_update(&[4.0], &[1e-6], &[0.5], 1e-4, 1e6).unwrap();
        assert!(a[0] > 1e6);
    }

    #[test]
    fn update_zero_weight_forces_prune() {
        let (a, _) = ard_update(&[1.0, 1.0], &[0.0, 0.0], &[0.5, 2.0], 1e-4, 1e6).unwrap();
        assert_eq!(a, vec![2e6, 2e6]);
        assert!(ard_update(&[1.0], &[1.0, 2.0], &[1.0], 1e-4, 1e6).is_err());
    }

    #[test]
    fn convergence_test() {
        assert!(log_alpha_converged(&[1.0, 5.0], &[1.0, 5.0], 1e-3));
        assert!(!log_alpha_converged(&[1.0], &[std::f64::consts::E], 1e-3));
        assert!(log_alpha_converged(&[], &[], 1e-3));
    }

    #[test]
    fn identity_design_classic_step() {
        // X = I (4 x 4, no separate bias column in use): one classic A-stage
        // from alpha = init_alpha, checked against a scalar evaluation.
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let x = DesignMatrix::from_dense_rows(&rows).unwrap();
        let t = [1.0, 0.0, 1.0, 0.0];
        let active = [1, 2, 3, 4];
        let alpha = [0.5; 4];
        let obj = MapObjective::new(&x, &t, &active, &alpha).unwrap();
        let cfg = DqnConfig {
            grad_tolerance: 1e-12,
            ..DqnConfig::default()
        };
        let sol = DenseNewton(cfg).solve(&obj, &[0.0; 4]).unwrap();
        // Decoupled scalar problems: sigmoid(w) - t + 0.5 w = 0.
        for (k, &tk) in t.iter().enumerate() {
            let mut w: f64 = 0.0;
            for _ in 0..100 {
                let y = 1.0 / (1.0 + (-w).exp());
                w -= (y - tk + 0.5 * w) / (y * (1.0 - y) + 0.5);
            }
            let y = 1.0 / (1.0 + (-w).exp());
            let sigma = 1.0 / (y * (1.0 - y) + 0.5);
            assert!((sol.w[k] - w).abs() < 1e-9);
            assert!((sol.diag[k] - sigma).abs() < 1e-9);
            let (new_alpha, _) =
                ard_update(&[0.5], &[sol.w[k]], &[sol.diag[k]], 1e-4, 1e6).unwrap();
            assert!((new_alpha[0] - (1.0 - 0.5 * sigma) / (w * w)).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_empty_design_and_bad_targets() {
        let x = DesignMatrix::dense(0, vec![]).unwrap();
        assert!(dqn_sbl_fit(&x, &[], &SblConfig::default()).is_err());
        let x = DesignMatrix::from_dense_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert!(dqn_sbl_fit(&x, &[1.0, 2.0], &SblConfig::default()).is_err());
        assert!(dqn_sbl_fit(&x, &[1.0], &SblConfig::default()).is_err());
    }

    #[test]
    fn uninformative_data_collapses_to_bias() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // Every feature row appears once with each label.
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                (0..6)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect::<Vec<f64>>()
            })
            .flat_map(|r| [r.clone(), r])
            .collect();
        let t: Vec<f64> = (0..400).map(|i| (i % 2) as f64).collect();
        let x = DesignMatrix::from_dense_rows(&rows).unwrap();
        let (state, report) = dqn_sbl_fit(&x, &t, &SblConfig::default()).unwrap();
        assert!(report.converged, "{state:?} {report:?}");
        assert!(state.active.len() <= 2, "{:?}", state.active);
        assert!(state.active.contains(&0));
        assert!(report.active_count_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn classic_refuses_large_designs() {
        let rows = [crate::data::SparseRow::default()];
        let x = DesignMatrix::sparse(rows.iter().collect(), DENSE_ORACLE_LIMIT + 10).unwrap();
        assert!(matches!(
            classic_sbl_fit(&x, &[1.0], &SblConfig::default()),
            Err(SblError::OracleGuard { .. })
        ));
    }
}

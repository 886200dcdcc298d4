//! Diagonal quasi-Newton minimization.
//!
//! The inverse Hessian is approximated by a positive diagonal `B`, updated
//! element-wise from the step `delta` and gradient change `gamma` by taking
//! the diagonal of the BFGS update written for `B^{-1}`. Storage and work
//! per iteration are linear in the dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};
use crate::objective::Objective;

/// Solver settings. Defaults follow the experimental setup used for the
/// bundled benchmarks: gradient tolerance 0.1 and at most 100 iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub grad_tolerance: f64,
    pub max_iterations: usize,
    pub curvature_floor: f64,
    pub diag_min: f64,
    pub diag_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search_steps: usize,
    #[serde(default)]
    pub initial_diag: InitialDiag,
}

/// Starting value of `B` for each call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialDiag {
    #[default]
    Identity,
    /// Reciprocal of the Hessian diagonal at the start point, when the
    /// objective provides it. Falls back to the identity otherwise.
    InverseHessianDiagonal,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            grad_tolerance: 1e-1,
            max_iterations: 100,
            curvature_floor: 1e-10,
            diag_min: 1e-8,
            diag_max: 1e8,
            c1: 1e-4,
            c2: 0.9,
            max_line_search_steps: 20,
            initial_diag: InitialDiag::Identity,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(SblError::arg("line search constants need 0 < c1 < c2 < 1"));
        }
        if !(0.0 < self.diag_min && self.diag_min < self.diag_max) {
            return Err(SblError::arg("diagonal clamp needs 0 < low < high"));
        }
        if !(self.grad_tolerance > 0.0) {
            return Err(SblError::arg("gradient tolerance must be positive"));
        }
        if self.max_line_search_steps == 0 {
            return Err(SblError::arg("line search needs at least one step"));
        }
        Ok(())
    }
}

/// One accepted iteration of the solver. Iteration 0 is the starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DqnResult {
    pub w: Vec<f64>,
    /// Diagonal of the inverse-Hessian approximation at `w`.
    pub diag_b: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    /// Accepted steps that needed the backtracking fallback.
    pub fallback_steps: usize,
    pub trace: Vec<IterationRecord>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Diagonal BFGS update of the inverse-Hessian approximation.
///
/// With `s = sum_j delta_j^2 / b_j`, each entry becomes
/// `1 / (1/b_k + gamma_k^2 / (gamma . delta) - delta_k^2 / (b_k^2 s))`.
/// The update is skipped (input returned unchanged) when
/// `gamma . delta <= curvature_floor`; entries whose new value is not
/// finite and positive keep their old value; the rest are clamped.
pub fn diag_bfgs_update(
    b: &[f64],
    delta: &[f64],
    gamma: &[f64],
    cfg: &DqnConfig,
) -> Result<Vec<f64>> {
    if b.len() != delta.len() || b.len() != gamma.len() {
        return Err(SblError::arg(format!(
            "dimension mismatch: b {}, delta {}, gamma {}",
            b.len(),
            delta.len(),
            gamma.len()
        )));
    }
    let curvature = dot(gamma, delta);
    if !(curvature > cfg.curvature_floor) {
        return Ok(b.to_vec());
    }
    let s: f64 = delta.iter().zip(b).map(|(d, bk)| d * d / bk).sum();
    Ok(b.iter()
        .zip(delta)
        .zip(gamma)
        .map(|((&bk, &dk), &gk)| {
            let inv = 1.0 / bk + gk * gk / curvature - dk * dk / (bk * bk * s);
            let updated = 1.0 / inv;
            if updated.is_finite() && updated > 0.0 {
                updated.clamp(cfg.diag_min, cfg.diag_max)
            } else {
                bk
            }
        })
        .collect())
}

/// A point evaluated along the search ray.
#[derive(Debug, Clone)]
pub struct LineSearchPoint {
    pub eta: f64,
    pub point: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Directional derivative at the point.
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub accepted: LineSearchPoint,
    /// True when both strong Wolfe conditions hold at the accepted step.
    pub strong_wolfe: bool,
    pub evaluations: usize,
}

struct Ray<'o, O: Objective + ?Sized> {
    obj: &'o O,
    w: &'o [f64],
    p: &'o [f64],
    evaluations: usize,
}

impl<O: Objective + ?Sized> Ray<'_, O> {
    fn eval(&mut self, eta: f64) -> LineSearchPoint {
        self.evaluations += 1;
        let point: Vec<f64> = self
            .w
            .iter()
            .zip(self.p)
            .map(|(w, p)| w + eta * p)
            .collect();
        let (value, gradient) = self.obj.value_and_gradient(&point);
        let slope = dot(&gradient, self.p);
        LineSearchPoint {
            eta,
            point,
            value,
            gradient,
            slope,
        }
    }
}

/// Minimizer of the cubic through two bracketing points, or the midpoint
/// when the cubic is unusable or lands too close to an end.
fn interpolate(lo: &LineSearchPoint, hi: &LineSearchPoint) -> f64 {
    let (a, b) = (lo.eta, hi.eta);
    let mid = 0.5 * (a + b);
    let d1 = lo.slope + hi.slope - 3.0 * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if !(disc >= 0.0) {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let eta = b - (b - a) * (hi.slope + d2 - d1) / (hi.slope - lo.slope + 2.0 * d2);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    if eta.is_finite() && eta > left + margin && eta < right - margin {
        eta
    } else {
        mid
    }
}

/// Strong Wolfe line search by bracketing and zoom, starting from step 1.
///
/// `value` and `gradient` are the objective at `w`; `p` must be a descent
/// direction. When the strong conditions cannot be met within the step
/// budget, the best Armijo point seen is returned with
/// `strong_wolfe = false`; if no trial satisfied Armijo, the search fails.
pub fn wolfe_line_search<O: Objective + ?Sized>(
    obj: &O,
    w: &[f64],
    value: f64,
    gradient: &[f64],
    p: &[f64],
    cfg: &DqnConfig,
) -> Result<LineSearchOutcome> {
    let slope0 = dot(gradient, p);
    if !(slope0 < 0.0) {
        return Err(SblError::arg(
            "line search direction is not a descent direction",
        ));
    }
    let mut ray = Ray {
        obj,
        w,
        p,
        evaluations: 0,
    };
    let armijo = |pt: &LineSearchPoint| pt.value <= value + cfg.c1 * pt.eta * slope0;
    let curvature_ok = |pt: &LineSearchPoint| pt.slope.abs() <= -cfg.c2 * slope0;

    let mut best: Option<LineSearchPoint> = None;
    let keep_best = |pt: &LineSearchPoint, best: &mut Option<LineSearchPoint>| {
        if best.as_ref().is_none_or(|b| pt.value < b.value) {
            *best = Some(pt.clone());
        }
    };
    let origin = LineSearchPoint {
        eta: 0.0,
        point: w.to_vec(),
        value,
        gradient: gradient.to_vec(),
        slope: slope0,
    };

    let mut prev = origin;
    let mut eta = 1.0;
    let mut bracket: Option<(LineSearchPoint, LineSearchPoint)> = None;
    while ray.evaluations < cfg.max_line_search_steps {
        let cur = ray.eval(eta);
        if !cur.value.is_finite() || !armijo(&cur) || (prev.eta > 0.0 && cur.value >= prev.value) {
            bracket = Some((prev, cur));
            break;
        }
        if curvature_ok(&cur) {
            return Ok(LineSearchOutcome {
                accepted: cur,
                strong_wolfe: true,
                evaluations: ray.evaluations,
            });
        }
        keep_best(&cur, &mut best);
        if cur.slope >= 0.0 {
            bracket = Some((cur, prev));
            break;
        }
        eta = 2.0 * cur.eta;
        prev = cur;
    }

    if let Some((mut lo, mut hi)) = bracket {
        while ray.evaluations < cfg.max_line_search_steps {
            let trial_eta = if hi.value.is_finite() {
                interpolate(&lo, &hi)
            } else {
                0.5 * (lo.eta + hi.eta)
            };
            let cur = ray.eval(trial_eta);
            if !cur.value.is_finite() || !armijo(&cur) || cur.value >= lo.value {
                hi = cur;
            } else {
                if curvature_ok(&cur) {
                    return Ok(LineSearchOutcome {
                        accepted: cur,
                        strong_wolfe: true,
                        evaluations: ray.evaluations,
                    });
                }
                keep_best(&cur, &mut best);
                if cur.slope * (hi.eta - lo.eta) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
            if (hi.eta - lo.eta).abs() <= f64::EPSILON * lo.eta.abs().max(1e-300) {
                break;
            }
        }
    }

    match best {
        Some(accepted) => Ok(LineSearchOutcome {
            accepted,
            strong_wolfe: false,
            evaluations: ray.evaluations,
        }),
        None => Err(SblError::Convergence(format!(
            "no step satisfying the sufficient-decrease condition in {} trials",
            ray.evaluations
        ))),
    }
}

/// Halving search for a step meeting only the sufficient-decrease condition.
fn backtracking_armijo<O: Objective + ?Sized>(
    obj: &O,
    w: &[f64],
    value: f64,
    gradient: &[f64],
    p: &[f64],
    cfg: &DqnConfig,
) -> Option<LineSearchPoint> {
    let slope0 = dot(gradient, p);
    let mut ray = Ray {
        obj,
        w,
        p,
        evaluations: 0,
    };
    let mut eta = 1.0;
    for _ in 0..60 {
        let pt = ray.eval(eta);
        if pt.value.is_finite() && pt.value <= value + cfg.c1 * eta * slope0 {
            return Some(pt);
        }
        eta *= 0.5;
    }
    None
}

/// Minimizes `obj` from `w0` with the diagonal quasi-Newton iteration.
///
/// `B` starts at the identity. Each iteration takes the direction `-B g`
/// scaled to unit length, a strong Wolfe step along it, and the diagonal
/// BFGS update. Stops when `||g|| <= grad_tolerance` or after
/// `max_iterations`; a failed line search ends the run with
/// `converged = false`.
fn initial_diagonal<O: Objective + ?Sized>(obj: &O, w: &[f64], cfg: &DqnConfig) -> Vec<f64> {
    if cfg.initial_diag == InitialDiag::InverseHessianDiagonal {
        if let Some(h) = obj.hessian_diagonal(w) {
            if h.len() == w.len() && h.iter().all(|v| v.is_finite() && *v > 0.0) {
                return h
                    .iter()
                    .map(|v| (1.0 / v).clamp(cfg.diag_min, cfg.diag_max))
                    .collect();
            }
        }
    }
    vec![1.0; w.len()]
}

pub fn dqn_minimize<O: Objective + ?Sized>(
    obj: &O,
    w0: &[f64],
    cfg: &DqnConfig,
) -> Result<DqnResult> {
    cfg.validate()?;
    if w0.len() != obj.dim() {
        return Err(SblError::arg(format!(
            "start point has {} entries, objective dimension is {}",
            w0.len(),
            obj.dim()
        )));
    }
    if w0.iter().any(|v| !v.is_finite()) {
        return Err(SblError::arg("start point must be finite"));
    }

    let mut w = w0.to_vec();
    let mut b = initial_diagonal(obj, &w, cfg);
    let (mut value, mut grad) = obj.value_and_gradient(&w);
    let mut grad_norm = norm(&grad);
    let mut trace = vec![IterationRecord {
        iteration: 0,
        value,
        grad_norm,
        step: 0.0,
    }];
    let mut iterations = 0;
    let mut fallback_steps = 0;
    let mut stalled = false;

    while grad_norm > cfg.grad_tolerance && iterations < cfg.max_iterations {
        let mut p: Vec<f64> = b.iter().zip(&grad).map(|(bk, gk)| -bk * gk).collect();
        let p_norm = norm(&p);
        if p_norm > 0.0 && p_norm.is_finite() {
            p.iter_mut().for_each(|v| *v /= p_norm);
        }
        if !(dot(&grad, &p) < 0.0) {
            p = grad.iter().map(|g| -g / grad_norm).collect();
        }

        let accepted = match wolfe_line_search(obj, &w, value, &grad, &p, cfg) {
            Ok(outcome) => outcome.accepted,
            Err(_) => match backtracking_armijo(obj, &w, value, &grad, &p, cfg) {
                Some(pt) => {
                    fallback_steps += 1;
                    pt
                }
                None => {
                    stalled = true;
                    break;
                }
            },
        };

        let delta: Vec<f64> = accepted.point.iter().zip(&w).map(|(a, b)| a - b).collect();
        let gamma: Vec<f64> = accepted
            .gradient
            .iter()
            .zip(&grad)
            .map(|(a, b)| a - b)
            .collect();
        b = diag_bfgs_update(&b, &delta, &gamma, cfg)?;

        w = accepted.point;
        value = accepted.value;
        grad = accepted.gradient;
        grad_norm = norm(&grad);
        iterations += 1;
        trace.push(IterationRecord {
            iteration: iterations,
            value,
            grad_norm,
            step: accepted.eta,
        });
    }

    if stalled {
        log::debug!("line search failed at iteration {iterations}, |g| = {grad_norm:e}");
    }
    Ok(DqnResult {
        w,
        diag_b: b,
        value,
        iterations,
        final_grad_norm: grad_norm,
        converged: grad_norm <= cfg.grad_tolerance,
        fallback_steps,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;

    /// `0.5 * sum_k c_k (w_k - a_k)^2`, counting evaluations.
    struct Quadratic {
        center: Vec<f64>,
        curvature: Vec<f64>,
        calls: Cell<usize>,
    }

    impl Quadratic {
        fn new(center: Vec<f64>, curvature: Vec<f64>) -> Self {
            Self {
                center,
                curvature,
                calls: Cell::new(0),
            }
        }
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }

        fn value(&self, w: &[f64]) -> f64 {
            self.value_and_gradient(w).0
        }

        fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
            self.calls.set(self.calls.get() + 1);
            let mut v = 0.0;
            let mut g = Vec::with_capacity(w.len());
            for ((x, a), c) in w.iter().zip(&self.center).zip(&self.curvature) {
                v += 0.5 * c * (x - a) * (x - a);
                g.push(c * (x - a));
            }
            (v, g)
        }
    }

    #[test]
    fn update_fixed_point_in_one_dimension() {
        let cfg = DqnConfig::default();
        let b = diag_bfgs_update(&[1.0], &[1.0], &[1.0], &cfg).unwrap();
        assert_eq!(b, vec![1.0]);
    }

    #[test]
    fn update_matches_scalar_formula() {
        let cfg = DqnConfig::default();
        let (b, d, g) = ([1.0, 2.0, 4.0], [1.0, 0.0, 1.0], [2.0, 1.0, 1.0]);
        let got = diag_bfgs_update(&b, &d, &g, &cfg).unwrap();
        // gamma.delta = 3, delta^T B^{-1} delta = 1 + 0.25 = 1.25
        let expected = [
            1.0 / (1.0 + 4.0 / 3.0 - 1.0 / 1.25),
            1.0 / (0.5 + 1.0 / 3.0),
            1.0 / (0.25 + 1.0 / 3.0 - 1.0 / (16.0 * 1.25)),
        ];
        for (x, y) in got.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn update_skips_without_curvature() {
        let cfg = DqnConfig::default();
        let b = [0.3, 7.0];
        assert_eq!(
            diag_bfgs_update(&b, &[1.0, 1.0], &[1.0, -1.0], &cfg).unwrap(),
            b
        );
        assert_eq!(
            diag_bfgs_update(&b, &[1.0, 0.0], &[-2.0, 5.0], &cfg).unwrap(),
            b
        );
        assert!(diag_bfgs_update(&b, &[1.0], &[1.0, 1.0], &cfg).is_err());
    }

    #[test]
    fn update_is_secant_in_one_dimension() {
        let cfg = DqnConfig::default();
        for (b, d, g) in [(1.0, 0.5, 2.0), (3.0, -1.0, -0.25), (0.1, 2.0, 0.7)] {
            let got = diag_bfgs_update(&[b], &[d], &[g], &cfg).unwrap()[0];
            assert!((got - d / g).abs() < 1e-12 * (d / g).abs());
        }
    }

    #[test]
    fn line_search_one_dimensional_quadratic() {
        let q = Quadratic::new(vec![3.0], vec![1.0]);
        let cfg = DqnConfig::default();
        let (v, g) = q.value_and_gradient(&[0.0]);
        let out = wolfe_line_search(&q, &[0.0], v, &g, &[1.0], &cfg).unwrap();
        let eta = out.accepted.eta;
        assert!(eta > 0.0 && eta < 6.0);
        assert!(out.accepted.value < v);
        assert!(out.strong_wolfe);
        assert!(out.accepted.value <= v + cfg.c1 * eta * -3.0);
        assert!(out.accepted.slope.abs() <= cfg.c2 * 3.0);
    }

    #[test]
    fn line_search_accepts_unit_step_with_one_evaluation() {
        // Minimum exactly one unit away: step 1 meets both conditions.
        let q = Quadratic::new(vec![1.0], vec![1.0]);
        let cfg = DqnConfig::default();
        let (v, g) = q.value_and_gradient(&[0.0]);
        let out = wolfe_line_search(&q, &[0.0], v, &g, &[1.0], &cfg).unwrap();
        assert_eq!(out.accepted.eta, 1.0);
        assert_eq!(out.evaluations, 1);
    }

    #[test]
    fn line_search_rejects_ascent_direction() {
        let q = Quadratic::new(vec![1.0], vec![1.0]);
        let cfg = DqnConfig::default();
        let (v, g) = q.value_and_gradient(&[0.0]);
        assert!(wolfe_line_search(&q, &[0.0], v, &g, &[-1.0], &cfg).is_err());
        // resetting to the normalized negative gradient restores descent
        let reset: Vec<f64> = g.iter().map(|x| -x / norm(&g)).collect();
        assert!(wolfe_line_search(&q, &[0.0], v, &g, &reset, &cfg).is_ok());
    }

    #[test]
    fn minimizes_quadratic() {
        let a = vec![1.5, -2.0, 0.25, 4.0];
        let q = Quadratic::new(a.clone(), vec![1.0; 4]);
        let cfg = DqnConfig::default();
        let res = dqn_minimize(&q, &[0.0; 4], &cfg).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 25);
        assert!(res.final_grad_norm <= cfg.grad_tolerance);
        for (x, y) in res.w.iter().zip(&a) {
            assert!((x - y).abs() <= cfg.grad_tolerance);
        }
    }

    #[test]
    fn minimizes_ill_scaled_quadratic() {
        let q = Quadratic::new(vec![1.0, -1.0, 2.0], vec![100.0, 1.0, 0.05]);
        let cfg = DqnConfig {
            grad_tolerance: 1e-6,
            ..DqnConfig::default()
        };
        let res = dqn_minimize(&q, &[0.0; 3], &cfg).unwrap();
        assert!(res.converged, "{res:?}");
        for w in res.trace.windows(2) {
            assert!(w[1].value <= w[0].value);
        }
        // B approaches the true inverse curvature on a separable quadratic
        assert!((res.diag_b[0] - 0.01).abs() < 1e-3);
    }

    #[test]
    fn early_exit_at_optimum() {
        let q = Quadratic::new(vec![1.0, 2.0], vec![1.0, 1.0]);
        let res = dqn_minimize(&q, &[1.0, 2.0], &DqnConfig::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.converged);
        assert_eq!(res.diag_b, vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = Quadratic::new(vec![1.0], vec![1.0]);
        let cfg = DqnConfig::default();
        assert!(dqn_minimize(&q, &[0.0, 0.0], &cfg).is_err());
        assert!(dqn_minimize(&q, &[f64::NAN], &cfg).is_err());
        let bad = DqnConfig { c1: 0.95, ..cfg };
        assert!(dqn_minimize(&q, &[0.0], &bad).is_err());
    }
}

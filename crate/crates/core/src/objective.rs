//! Negative log-posterior of the logistic model under an ARD Gaussian prior.
//!
//! `L(w) = -sum_i [t_i ln y_i + (1 - t_i) ln(1 - y_i)] + 0.5 * sum_k alpha_k w_k^2`
//! with `y_i = sigmoid(x_i . w)`. The gradient is `X^T (y - t) + A w` and the
//! Hessian `X^T diag(y (1 - y)) X + A`.

use nalgebra::DMatrix;

use crate::data::SparseRow;
use crate::error::{Result, SblError};

/// Probabilities are clamped into `[PROB_FLOOR, 1 - PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Largest active dimension for which dense Hessians are assembled.
pub const DENSE_ORACLE_LIMIT: usize = 5000;

const NO_POSITION: u32 = u32::MAX;

/// Logistic function, evaluated without overflow and clamped away from 0 and 1.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Compensated (Neumaier) summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Storage behind a design matrix.
#[derive(Debug, Clone)]
pub enum Basis<'a> {
    /// Linear mode: design column `c >= 1` is raw feature `c - 1`. Rows are
    /// borrowed from the dataset, never copied.
    Sparse {
        rows: Vec<&'a SparseRow>,
        n_features: usize,
    },
    /// Kernel and random-layer modes: column-major basis values, one vector
    /// of length N per non-bias column.
    Dense { columns: Vec<Vec<f64>> },
}

/// N x (1 + M) basis matrix. Column 0 is a virtual bias column of ones.
#[derive(Debug, Clone)]
pub struct DesignMatrix<'a> {
    n_rows: usize,
    basis: Basis<'a>,
}

impl<'a> DesignMatrix<'a> {
    pub fn sparse(rows: Vec<&'a SparseRow>, n_features: usize) -> Result<Self> {
        if let Some(bad) = rows
            .iter()
            .filter_map(|r| r.indices.last())
            .find(|&&j| j as usize >= n_features)
        {
            return Err(SblError::arg(format!(
                "row index {bad} outside feature dimension {n_features}"
            )));
        }
        Ok(Self {
            n_rows: rows.len(),
            basis: Basis::Sparse { rows, n_features },
        })
    }

    pub fn dense(n_rows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(SblError::arg(
                "dense basis column length differs from row count",
            ));
        }
        Ok(Self {
            n_rows,
            basis: Basis::Dense { columns },
        })
    }

    /// Builds a dense design from row-major data (test and oracle helper).
    pub fn from_dense_rows(rows: &[Vec<f64>]) -> Result<DesignMatrix<'static>> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(SblError::arg("ragged dense rows"));
        }
        let columns = (0..m)
            .map(|j| rows.iter().map(|r| r[j]).collect())
            .collect();
        DesignMatrix::dense(n, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of columns including the bias.
    pub fn n_columns(&self) -> usize {
        1 + match &self.basis {
            Basis::Sparse { n_features, .. } => *n_features,
            Basis::Dense { columns } => columns.len(),
        }
    }

    pub fn basis(&self) -> &Basis<'a> {
        &self.basis
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.basis, Basis::Sparse { .. })
    }

    /// Value of design entry (row, column); O(nnz) for sparse rows.
    pub fn entry(&self, row: usize, column: usize) -> f64 {
        if column == 0 {
            return 1.0;
        }
        match &self.basis {
            Basis::Sparse { rows, .. } => {
                let r = rows[row];
                match r.indices.binary_search(&((column - 1) as u32)) {
                    Ok(p) => r.values[p],
                    Err(_) => 0.0,
                }
            }
            Basis::Dense { columns } => columns[column - 1][row],
        }
    }

    /// Linear predictor `X_active w` for every row.
    pub fn margins(&self, active: &[usize], w: &[f64]) -> Vec<f64> {
        let positions = self.positions(active);
        self.margins_with(active, &positions, w)
    }

    fn positions(&self, active: &[usize]) -> Vec<u32> {
        if !self.is_sparse() {
            return Vec::new();
        }
        let mut pos = vec![NO_POSITION; self.n_columns()];
        for (a, &c) in active.iter().enumerate() {
            pos[c] = a as u32;
        }
        pos
    }

    fn margins_with(&self, active: &[usize], positions: &[u32], w: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.n_rows];
        match &self.basis {
            Basis::Sparse { rows, .. } => {
                let bias = match positions[0] {
                    NO_POSITION => 0.0,
                    p => w[p as usize],
                };
                for (zi, row) in z.iter_mut().zip(rows) {
                    let mut acc = bias;
                    for (j, v) in row.iter() {
                        let p = positions[j + 1];
                        if p != NO_POSITION {
                            acc += v * w[p as usize];
                        }
                    }
                    *zi = acc;
                }
            }
            Basis::Dense { columns } => {
                for (&c, &wk) in active.iter().zip(w) {
                    if wk == 0.0 {
                        continue;
                    }
                    if c == 0 {
                        z.iter_mut().for_each(|zi| *zi += wk);
                    } else {
                        for (zi, &x) in z.iter_mut().zip(&columns[c - 1]) {
                            *zi += wk * x;
                        }
                    }
                }
            }
        }
        z
    }

    /// `X_active^T r`.
    fn transpose_product(&self, active: &[usize], positions: &[u32], r: &[f64]) -> Vec<f64> {
        self.transpose_product_by(active, positions, r, |x| x)
    }

    /// `(X_active ∘ X_active)^T r`, the column sums of squares weighted by `r`.
    fn squared_transpose_product(
        &self,
        active: &[usize],
        positions: &[u32],
        r: &[f64],
    ) -> Vec<f64> {
        self.transpose_product_by(active, positions, r, |x| x * x)
    }

    fn transpose_product_by(
        &self,
        active: &[usize],
        positions: &[u32],
        r: &[f64],
        f: impl Fn(f64) -> f64,
    ) -> Vec<f64> {
        let mut g = vec![0.0; active.len()];
        match &self.basis {
            Basis::Sparse { rows, .. } => {
                let bias = positions[0];
                for (row, &ri) in rows.iter().zip(r) {
                    if bias != NO_POSITION {
                        g[bias as usize] += ri;
                    }
                    for (j, v) in row.iter() {
                        let p = positions[j + 1];
                        if p != NO_POSITION {
                            g[p as usize] += f(v) * ri;
                        }
                    }
                }
            }
            Basis::Dense { columns } => {
                for (gk, &c) in g.iter_mut().zip(active) {
                    *gk = if c == 0 {
                        r.iter().sum()
                    } else {
                        columns[c - 1].iter().zip(r).map(|(&x, ri)| f(x) * ri).sum()
                    };
                }
            }
        }
        g
    }

    /// Dense N x |active| copy of the active columns (oracle path only).
    pub fn dense_active(&self, active: &[usize]) -> Result<DMatrix<f64>> {
        if active.len() > DENSE_ORACLE_LIMIT {
            return Err(SblError::OracleGuard {
                dim: active.len(),
                limit: DENSE_ORACLE_LIMIT,
            });
        }
        let mut x = DMatrix::zeros(self.n_rows, active.len());
        match &self.basis {
            Basis::Sparse { rows, .. } => {
                let positions = self.positions(active);
                for (i, row) in rows.iter().enumerate() {
                    if positions[0] != NO_POSITION {
                        x[(i, positions[0] as usize)] = 1.0;
                    }
                    for (j, v) in row.iter() {
                        let p = positions[j + 1];
                        if p != NO_POSITION {
                            x[(i, p as usize)] = v;
                        }
                    }
                }
            }
            Basis::Dense { columns } => {
                for (a, &c) in active.iter().enumerate() {
                    for i in 0..self.n_rows {
                        x[(i, a)] = if c == 0 { 1.0 } else { columns[c - 1][i] };
                    }
                }
            }
        }
        Ok(x)
    }
}

/// A differentiable function minimized by the quasi-Newton solver.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, w: &[f64]) -> f64;

    fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>);

    /// Diagonal of the Hessian at `w`, when the objective can supply it cheaply.
    fn hessian_diagonal(&self, _w: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.value_and_gradient(w).1
    }
}

/// `L(w)` over the active columns of a design matrix.
#[derive(Debug, Clone)]
pub struct MapObjective<'d, 'a> {
    design: &'d DesignMatrix<'a>,
    targets: &'d [f64],
    active: &'d [usize],
    alpha: &'d [f64],
    positions: Vec<u32>,
}

impl<'d, 'a> MapObjective<'d, 'a> {
    pub fn new(
        design: &'d DesignMatrix<'a>,
        targets: &'d [f64],
        active: &'d [usize],
        alpha: &'d [f64],
    ) -> Result<Self> {
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
        if alpha.len() != active.len() {
            return Err(SblError::arg(format!(
                "{} priors for {} active columns",
                alpha.len(),
                active.len()
            )));
        }
        if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
            return Err(SblError::arg("priors must be positive and finite"));
        }
        if active.windows(2).any(|w| w[0] >= w[1])
            || active.last().is_some_and(|&c| c >= design.n_columns())
        {
            return Err(SblError::arg(
                "active columns must be ascending and in range",
            ));
        }
        Ok(Self {
            design,
            targets,
            active,
            alpha,
            positions: design.positions(active),
        })
    }

    pub fn design(&self) -> &DesignMatrix<'a> {
        self.design
    }

    pub fn targets(&self) -> &[f64] {
        self.targets
    }

    pub fn active(&self) -> &[usize] {
        self.active
    }

    pub fn alpha(&self) -> &[f64] {
        self.alpha
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.active.len() {
            return Err(SblError::arg(format!(
                "weight vector has {} entries, active dimension is {}",
                w.len(),
                self.active.len()
            )));
        }
        Ok(())
    }

    fn margins(&self, w: &[f64]) -> Vec<f64> {
        self.design.margins_with(self.active, &self.positions, w)
    }

    fn penalty(&self, w: &[f64]) -> f64 {
        let mut s = CompensatedSum::default();
        for (a, x) in self.alpha.iter().zip(w) {
            s.add(0.5 * a * x * x);
        }
        s.value()
    }

    fn nll_from_margins(&self, z: &[f64]) -> f64 {
        let mut s = CompensatedSum::default();
        for (&zi, &t) in z.iter().zip(self.targets) {
            if t == 1.0 {
                s.add(-sigmoid(zi).ln());
            } else {
                s.add(-sigmoid(-zi).ln());
            }
        }
        s.value()
    }

    pub fn neg_log_posterior(&self, w: &[f64]) -> Result<f64> {
        self.check_dim(w)?;
        Ok(self.value(w))
    }

    pub fn try_gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(w)?;
        Ok(self.value_and_gradient(w).1)
    }

    /// Dense Hessian `X^T beta X + A` over the active columns.
    pub fn hessian(&self, w: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(w)?;
        let x = self.design.dense_active(self.active)?;
        let z = self.margins(w);
        let m = self.active.len();
        let mut weighted = x.clone();
        for (i, &zi) in z.iter().enumerate() {
            let y = sigmoid(zi);
            let beta = y * (1.0 - y);
            for a in 0..m {
                weighted[(i, a)] *= beta;
            }
        }
        let mut h = x.transpose() * weighted;
        for a in 0..m {
            h[(a, a)] += self.alpha[a];
        }
        Ok(h)
    }
}

impl Objective for MapObjective<'_, '_> {
    fn dim(&self) -> usize {
        self.active.len()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let z = self.margins(w);
        self.nll_from_margins(&z) + self.penalty(w)
    }

    fn value_and_gradient(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let z = self.margins(w);
        let value = self.nll_from_margins(&z) + self.penalty(w);
        let residual: Vec<f64> = z
            .iter()
            .zip(self.targets)
            .map(|(&zi, &t)| sigmoid(zi) - t)
            .collect();
        let mut g = self
            .design
            .transpose_product(self.active, &self.positions, &residual);
        for ((gk, a), x) in g.iter_mut().zip(self.alpha).zip(w) {
            *gk += a * x;
        }
        (value, g)
    }

    fn hessian_diagonal(&self, w: &[f64]) -> Option<Vec<f64>> {
        let z = self.margins(w);
        let beta: Vec<f64> = z
            .iter()
            .map(|&zi| {
                let y = sigmoid(zi);
                y * (1.0 - y)
            })
            .collect();
        let mut d = self
            .design
            .squared_transpose_product(self.active, &self.positions, &beta);
        for (dk, a) in d.iter_mut().zip(self.alpha) {
            *dk += a;
        }
        Some(d)
    }
}

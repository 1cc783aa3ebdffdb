//! Dense strictly convex QP solver.
//!
//! Solves `min ½zᵀHz + fᵀz + c  s.t.  Gz ≤ b` with the dual active-set
//! method of Goldfarb and Idnani. Each iterate minimizes the objective on the
//! current working set with non-negative multipliers, and violated rows are
//! added one at a time, so no feasible starting point is needed and
//! infeasibility shows up as a row that can be neither satisfied nor traded
//! against existing multipliers. The problems this crate produces are small
//! (tens of variables), so the working-set linear algebra is recomputed from
//! scratch at every step instead of being updated.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{config_err, Error, Result};
use crate::linalg::{is_symmetric, min_symmetric_eigenvalue, symmetrize};

/// Regularization applied to `H` when its smallest eigenvalue is below this.
pub const HESSIAN_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Constant offset so that [`QuadraticProgram::objective`] can match an
    /// explicit cost evaluation.
    pub constant: f64,
}

impl QuadraticProgram {
    pub fn new(h: DMatrix<f64>, f: DVector<f64>, g: DMatrix<f64>, b: DVector<f64>, constant: f64) -> Result<Self> {
        let d = f.len();
        if h.shape() != (d, d) {
            return config_err(format!("H must be {d}x{d}, got {}x{}", h.nrows(), h.ncols()));
        }
        if g.ncols() != d && g.nrows() > 0 {
            return config_err(format!("G must have {d} columns, got {}", g.ncols()));
        }
        if g.nrows() != b.len() {
            return config_err(format!("G has {} rows but b has {} entries", g.nrows(), b.len()));
        }
        if !is_symmetric(&h, 1e-10) {
            return config_err("H must be symmetric");
        }
        Ok(Self { h, f, g: if g.nrows() == 0 { DMatrix::zeros(0, d) } else { g }, b, constant })
    }

    /// Unconstrained problem.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        let d = f.len();
        Self::new(h, f, DMatrix::zeros(0, d), DVector::zeros(0), 0.0)
    }

    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z) + self.constant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

impl QpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            QpStatus::Optimal => "optimal",
            QpStatus::Infeasible => "infeasible",
            QpStatus::MaxIter => "max_iter",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    /// Sorted indices of the rows held at equality.
    pub active_set: Vec<usize>,
    /// One multiplier per row, zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iter: usize,
    /// A row counts as violated once `G_i z − b_i` exceeds this.
    pub feasibility_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { max_iter: 1_000, feasibility_tol: 1e-10 }
    }
}

pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution> {
    solve_qp_with(qp, QpOptions::default(), &[])
}

/// Solves `qp`, seeding the working set with `warm_start` rows.
///
/// Seed rows that are out of range, linearly dependent on earlier seeds or
/// end up with negative multipliers are discarded, so any list is accepted.
pub fn solve_qp_with(qp: &QuadraticProgram, options: QpOptions, warm_start: &[usize]) -> Result<QpSolution> {
    ActiveSetSolver::new(qp, options)?.run(warm_start)
}

struct ActiveSetSolver<'a> {
    qp: &'a QuadraticProgram,
    options: QpOptions,
    h_inv: DMatrix<f64>,
    /// Rows with a zero normal or an infinite bound never enter the working set.
    skip: Vec<bool>,
    working: Vec<usize>,
    lambda: Vec<f64>,
    z: DVector<f64>,
    iterations: usize,
}

struct AddDirection {
    /// Primal change per unit increase of the new multiplier.
    dz: DVector<f64>,
    /// Decrease of each working-set multiplier per unit increase.
    dlambda: DVector<f64>,
    /// `−nᵀdz`, the rate at which the new row's value decreases.
    rate: f64,
    /// `nᵀH⁻¹n`, scale for the degeneracy test on `rate`.
    scale: f64,
}

impl<'a> ActiveSetSolver<'a> {
    fn new(qp: &'a QuadraticProgram, options: QpOptions) -> Result<Self> {
        if qp.h.iter().chain(qp.f.iter()).chain(qp.g.iter()).any(|v| !v.is_finite()) {
            return config_err("QP data has non-finite entries");
        }
        if qp.b.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return config_err("QP bounds must not be NaN or -inf");
        }
        let mut h = symmetrize(&qp.h);
        if qp.dim() > 0 && min_symmetric_eigenvalue(&h) < HESSIAN_FLOOR {
            h += DMatrix::identity(qp.dim(), qp.dim()) * HESSIAN_FLOOR;
        }
        let chol = Cholesky::new(h).ok_or_else(|| Error::Config("H is not positive semidefinite".into()))?;
        let h_inv = symmetrize(&chol.inverse());
        let skip = (0..qp.rows()).map(|i| qp.b[i] == f64::INFINITY || qp.g.row(i).iter().all(|v| *v == 0.0)).collect();
        let z = -(&h_inv * &qp.f);
        Ok(Self { qp, options, h_inv, skip, working: Vec::new(), lambda: Vec::new(), z, iterations: 0 })
    }

    fn normal(&self, row: usize) -> DVector<f64> {
        self.qp.g.row(row).transpose()
    }

    fn violation(&self, row: usize) -> f64 {
        (self.qp.g.row(row) * &self.z)[0] - self.qp.b[row]
    }

    fn working_normals(&self) -> DMatrix<f64> {
        let d = self.qp.dim();
        DMatrix::from_fn(d, self.working.len(), |i, j| self.qp.g[(self.working[j], i)])
    }

    fn working_gram(&self, normals: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
        Cholesky::new(normals.transpose() * &self.h_inv * normals)
    }

    /// Exact minimizer and multipliers on the current working set.
    fn solve_working_set(&mut self) -> Result<()> {
        if self.working.is_empty() {
            self.z = -(&self.h_inv * &self.qp.f);
            self.lambda.clear();
            return Ok(());
        }
        let normals = self.working_normals();
        let gram =
            self.working_gram(&normals).ok_or_else(|| Error::Solver("working set became linearly dependent".into()))?;
        let bounds = DVector::from_iterator(self.working.len(), self.working.iter().map(|&i| self.qp.b[i]));
        let h_inv_f = &self.h_inv * &self.qp.f;
        let lambda = -gram.solve(&(bounds + normals.transpose() * &h_inv_f));
        self.z = -(h_inv_f + &self.h_inv * &normals * &lambda);
        self.lambda = lambda.iter().copied().collect();
        Ok(())
    }

    /// Re-solves on the working set, dropping the most negative multiplier
    /// until all are non-negative.
    fn settle(&mut self) -> Result<()> {
        loop {
            self.solve_working_set()?;
            let scale = 1e-12 * (1.0 + self.lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
            let worst = self
                .lambda
                .iter()
                .enumerate()
                .filter(|(_, l)| **l < -scale)
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(j, _)| j);
            match worst {
                Some(j) => {
                    self.working.remove(j);
                    self.lambda.remove(j);
                }
                None => {
                    self.lambda.iter_mut().for_each(|l| *l = l.max(0.0));
                    return Ok(());
                }
            }
        }
    }

    fn add_direction(&self, row: usize) -> Result<AddDirection> {
        let n = self.normal(row);
        let h_inv_n = &self.h_inv * &n;
        let scale = n.dot(&h_inv_n);
        if self.working.is_empty() {
            return Ok(AddDirection { dz: -&h_inv_n, dlambda: DVector::zeros(0), rate: scale, scale });
        }
        let normals = self.working_normals();
        let gram =
            self.working_gram(&normals).ok_or_else(|| Error::Solver("working set became linearly dependent".into()))?;
        let dlambda = gram.solve(&(normals.transpose() * &h_inv_n));
        let dz = -(h_inv_n - &self.h_inv * &normals * &dlambda);
        let rate = -n.dot(&dz);
        Ok(AddDirection { dz, dlambda, rate, scale })
    }

    fn is_independent(&self, dir: &AddDirection) -> bool {
        dir.rate > 1e-11 * dir.scale
    }

    fn seed(&mut self, warm_start: &[usize]) -> Result<()> {
        for &row in warm_start {
            if row >= self.qp.rows() || self.skip[row] || self.working.contains(&row) {
                continue;
            }
            if self.is_independent(&self.add_direction(row)?) {
                self.working.push(row);
            }
        }
        self.settle()
    }

    fn most_violated(&self) -> Option<usize> {
        (0..self.qp.rows())
            .filter(|&i| !self.skip[i] && !self.working.contains(&i))
            .map(|i| (i, self.violation(i)))
            .filter(|(_, v)| *v > self.options.feasibility_tol)
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i)
    }

    fn finish(mut self, status: QpStatus) -> QpSolution {
        let mut multipliers = DVector::zeros(self.qp.rows());
        for (&row, &l) in self.working.iter().zip(&self.lambda) {
            multipliers[row] = l;
        }
        self.working.sort_unstable();
        QpSolution {
            objective: self.qp.objective(&self.z),
            z: self.z,
            active_set: self.working,
            multipliers,
            status,
            iterations: self.iterations,
        }
    }

    fn run(mut self, warm_start: &[usize]) -> Result<QpSolution> {
        for i in 0..self.qp.rows() {
            if self.skip[i] && self.qp.b[i] < -self.options.feasibility_tol {
                // 0 ≤ b_i with b_i < 0: no point satisfies this row
                return Ok(self.finish(QpStatus::Infeasible));
            }
        }
        if !warm_start.is_empty() {
            self.seed(warm_start)?;
        }
        while let Some(row) = self.most_violated() {
            let mut added_lambda = 0.0;
            loop {
                self.iterations += 1;
                if self.iterations > self.options.max_iter {
                    return Ok(self.finish(QpStatus::MaxIter));
                }
                let dir = self.add_direction(row)?;
                let mut dual_limit = f64::INFINITY;
                let mut blocking = None;
                for (j, &rate) in dir.dlambda.iter().enumerate() {
                    if rate > 1e-14 {
                        let t = self.lambda[j] / rate;
                        if t < dual_limit {
                            dual_limit = t;
                            blocking = Some(j);
                        }
                    }
                }
                let primal_limit =
                    if self.is_independent(&dir) { self.violation(row).max(0.0) / dir.rate } else { f64::INFINITY };
                if primal_limit.is_infinite() && dual_limit.is_infinite() {
                    return Ok(self.finish(QpStatus::Infeasible));
                }
                let step = primal_limit.min(dual_limit);
                for (l, rate) in self.lambda.iter_mut().zip(dir.dlambda.iter()) {
                    *l = (*l - step * rate).max(0.0);
                }
                added_lambda += step;
                if primal_limit.is_finite() {
                    self.z += &dir.dz * step;
                }
                if primal_limit <= dual_limit {
                    self.working.push(row);
                    self.lambda.push(added_lambda);
                    self.settle()?;
                    break;
                }
                let j = blocking.expect("finite dual step has a blocking row");
                self.working.remove(j);
                self.lambda.remove(j);
            }
        }
        Ok(self.finish(QpStatus::Optimal))
    }
}

/// Optimality residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Hz + f + Gᵀλ‖₂`.
    pub stationarity: f64,
    /// `max(0, max_i G_i z − b_i)`.
    pub primal: f64,
    /// `max(0, −min_i λ_i)`.
    pub dual: f64,
    /// `max_i |λ_i (G_i z − b_i)|` over rows with a finite bound.
    pub complementarity: f64,
}

pub fn kkt_residuals(qp: &QuadraticProgram, z: &DVector<f64>, multipliers: &DVector<f64>) -> KktResiduals {
    let gradient = &qp.h * z + &qp.f + qp.g.transpose() * multipliers;
    let slack = &qp.g * z - &qp.b;
    let primal = slack.iter().fold(0.0_f64, |m, s| m.max(*s));
    let dual = multipliers.iter().fold(0.0_f64, |m, l| m.max(-l));
    let complementarity = slack
        .iter()
        .zip(multipliers.iter())
        .filter(|(s, _)| s.is_finite())
        .fold(0.0_f64, |m, (s, l)| m.max((s * l).abs()));
    KktResiduals { stationarity: gradient.norm(), primal, dual, complementarity }
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

impl QpSolution {
    pub fn kkt(&self, qp: &QuadraticProgram) -> KktResiduals {
        kkt_residuals(qp, &self.z, &self.multipliers)
    }
}

//! Finite-horizon optimal control problem and its condensed QP.
//!
//! With the feedback split `u_k = −K x_k + v_k` the predicted states follow
//! `x_{k+1} = Φ x_k + B v_k` with `Φ = A − B K`. Eliminating the states leaves
//! a dense QP in `V = [v_0, …, v_{N−1}]`. A zero gain gives the nominal
//! problem in the plain inputs `U`.
//!
//! Row layout of the condensed constraints, for `m` inputs and `s` half-spaces:
//!
//! * rows `2mk .. 2mk + m`: upper input bounds at step `k`,
//! * rows `2mk + m .. 2m(k+1)`: lower input bounds at step `k`,
//! * rows `2mN + s(k−1) + i`: half-space `i` at prediction step `k ∈ 1..=N`.

pub mod qp;

pub use qp::{kkt_residuals, solve_qp, solve_qp_with, KktResiduals, QpOptions, QpSolution, QpStatus, QuadraticProgram};

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{config_err, Result};
use crate::linalg::symmetrize;

/// State half-space with one margin per prediction step `1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TightenedHalfSpace {
    pub g: DVector<f64>,
    pub h: f64,
    pub margins: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub horizon: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub state_constraints: Vec<TightenedHalfSpace>,
    /// Pre-stabilizing gain; zero for the nominal problem.
    pub k: DMatrix<f64>,
    pub x0: DVector<f64>,
}

impl OcpSpec {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    fn validate(&self) -> Result<()> {
        let n = self.state_dim();
        let m = self.input_dim();
        if self.horizon == 0 {
            return config_err("horizon must be at least 1");
        }
        if !self.a.is_square() || self.b.nrows() != n {
            return config_err("A and B dimensions are inconsistent");
        }
        if self.q.shape() != (n, n) || self.r.shape() != (m, m) {
            return config_err(format!("weights must be Q: {n}x{n}, R: {m}x{m}"));
        }
        if self.u_min.len() != m || self.u_max.len() != m {
            return config_err(format!("input bounds must have length {m}"));
        }
        if self.k.shape() != (m, n) {
            return config_err(format!("K must be {m}x{n}, got {}x{}", self.k.nrows(), self.k.ncols()));
        }
        if self.x0.len() != n {
            return config_err(format!("x0 must have length {n}"));
        }
        for hs in &self.state_constraints {
            if hs.g.len() != n {
                return config_err(format!("half-space normal must have length {n}"));
            }
            if hs.margins.len() != self.horizon {
                return config_err(format!(
                    "expected {} margins per half-space, got {}",
                    self.horizon,
                    hs.margins.len()
                ));
            }
        }
        Ok(())
    }
}

/// Condensed QP plus the row ranges of each constraint family.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedOcp {
    pub qp: QuadraticProgram,
    pub input_rows: Range<usize>,
    pub state_rows: Range<usize>,
    /// `X = x_map · x0 + v_map · V` for the stacked states `x_0 … x_N`.
    pub x_map: DMatrix<f64>,
    pub v_map: DMatrix<f64>,
}

impl CondensedOcp {
    /// Predicted states `x_0 … x_N` for a decision sequence.
    pub fn predicted_states(&self, x0: &DVector<f64>, decision: &DVector<f64>) -> Vec<DVector<f64>> {
        let stacked = &self.x_map * x0 + &self.v_map * decision;
        let n = x0.len();
        (0..stacked.len() / n).map(|k| stacked.rows(k * n, n).into_owned()).collect()
    }

    /// Same problem with the state rows softened by one shared slack `s ≥ 0`
    /// costing `penalty · s²`. The slack is the last decision variable.
    pub fn with_state_slack(&self, penalty: f64) -> Result<QuadraticProgram> {
        let qp = &self.qp;
        let d = qp.dim();
        let rows = qp.rows();
        let mut h = DMatrix::zeros(d + 1, d + 1);
        h.view_mut((0, 0), (d, d)).copy_from(&qp.h);
        h[(d, d)] = 2.0 * penalty;
        let mut f = DVector::zeros(d + 1);
        f.rows_mut(0, d).copy_from(&qp.f);
        let mut g = DMatrix::zeros(rows + 1, d + 1);
        g.view_mut((0, 0), (rows, d)).copy_from(&qp.g);
        for row in self.state_rows.clone() {
            g[(row, d)] = -1.0;
        }
        g[(rows, d)] = -1.0;
        let mut b = DVector::zeros(rows + 1);
        b.rows_mut(0, rows).copy_from(&qp.b);
        QuadraticProgram::new(h, f, g, b, qp.constant)
    }
}

/// Eliminates the predicted states and returns the dense QP in `V`.
///
/// The objective `½VᵀHV + fᵀV + c` equals
/// `Σ_{k=0}^{N−1} x_kᵀQx_k + u_kᵀRu_k` along the predicted trajectory.
pub fn condense(spec: &OcpSpec) -> Result<CondensedOcp> {
    spec.validate()?;
    let n = spec.state_dim();
    let m = spec.input_dim();
    let big_n = spec.horizon;
    let d = big_n * m;
    let phi = &spec.a - &spec.b * &spec.k;

    // X = x_map x0 + v_map V, blocks for k = 0..=N
    let mut x_map = DMatrix::zeros((big_n + 1) * n, n);
    let mut v_map = DMatrix::zeros((big_n + 1) * n, d);
    x_map.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    for k in 0..big_n {
        let prev_x = x_map.view((k * n, 0), (n, n)).into_owned();
        x_map.view_mut(((k + 1) * n, 0), (n, n)).copy_from(&(&phi * prev_x));
        let prev_v = v_map.view((k * n, 0), (n, d)).into_owned();
        let mut next_v = &phi * prev_v;
        let mut block = next_v.view_mut((0, k * m), (n, m));
        block += &spec.b;
        v_map.view_mut(((k + 1) * n, 0), (n, d)).copy_from(&next_v);
    }

    // U = u_map x0 + w_map V with u_k = −K x_k + v_k, k = 0..N−1
    let mut u_map = DMatrix::zeros(d, n);
    let mut w_map = DMatrix::identity(d, d);
    for k in 0..big_n {
        let xk = x_map.view((k * n, 0), (n, n));
        u_map.view_mut((k * m, 0), (m, n)).copy_from(&(-&spec.k * xk));
        let vk = v_map.view((k * n, 0), (n, d));
        let mut rows = w_map.view_mut((k * m, 0), (m, d));
        rows -= &spec.k * vk;
    }

    let mut h = DMatrix::zeros(d, d);
    let mut f_x0 = DMatrix::zeros(d, n);
    let mut c_x0 = DMatrix::zeros(n, n);
    for k in 0..big_n {
        let xk = x_map.view((k * n, 0), (n, n));
        let vk = v_map.view((k * n, 0), (n, d));
        let q_vk = &spec.q * vk;
        h += vk.transpose() * &q_vk;
        f_x0 += vk.transpose() * &spec.q * xk;
        c_x0 += xk.transpose() * &spec.q * xk;

        let uk = u_map.view((k * m, 0), (m, n));
        let wk = w_map.view((k * m, 0), (m, d));
        h += wk.transpose() * &spec.r * wk;
        f_x0 += wk.transpose() * &spec.r * uk;
        c_x0 += uk.transpose() * &spec.r * uk;
    }
    let h = symmetrize(&(h * 2.0));
    let f = (f_x0 * 2.0) * &spec.x0;
    let constant = spec.x0.dot(&(c_x0 * &spec.x0));

    let input_count = 2 * m * big_n;
    let state_count = spec.state_constraints.len() * big_n;
    let mut g = DMatrix::zeros(input_count + state_count, d);
    let mut bounds = DVector::zeros(input_count + state_count);
    for k in 0..big_n {
        let u_free = u_map.view((k * m, 0), (m, n)) * &spec.x0;
        for j in 0..m {
            let upper = 2 * m * k + j;
            let lower = upper + m;
            let w_row = w_map.row(k * m + j);
            g.row_mut(upper).copy_from(&w_row);
            g.row_mut(lower).copy_from(&(-w_row));
            bounds[upper] = spec.u_max[j] - u_free[j];
            bounds[lower] = -spec.u_min[j] + u_free[j];
        }
    }
    let count = spec.state_constraints.len();
    for k in 1..=big_n {
        let xk = x_map.view((k * n, 0), (n, n));
        let vk = v_map.view((k * n, 0), (n, d));
        for (i, hs) in spec.state_constraints.iter().enumerate() {
            let row = input_count + count * (k - 1) + i;
            g.row_mut(row).copy_from(&(hs.g.transpose() * vk));
            bounds[row] = hs.h - hs.margins[k - 1] - hs.g.dot(&(xk * &spec.x0));
        }
    }

    Ok(CondensedOcp {
        qp: QuadraticProgram::new(h, f, g, bounds, constant)?,
        input_rows: 0..input_count,
        state_rows: input_count..input_count + state_count,
        x_map,
        v_map,
    })
}

/// Maps an active set of the previous step's QP onto the next step's rows by
/// shifting every step-indexed row one step earlier. Rows for the first
/// input and first state step fall off.
pub fn shift_active_set(active: &[usize], horizon: usize, input_dim: usize, halfspace_count: usize) -> Vec<usize> {
    let input_count = 2 * input_dim * horizon;
    let per_step = 2 * input_dim;
    let state_count = halfspace_count * horizon;
    active
        .iter()
        .filter_map(|&row| {
            if row < input_count {
                (row >= per_step).then(|| row - per_step)
            } else if row < input_count + state_count {
                (row >= input_count + halfspace_count).then(|| row - halfspace_count)
            } else {
                None
            }
        })
        .collect()
}

//! LQR feedback synthesis and error-covariance propagation.

use nalgebra::{DMatrix, DVector};

use crate::error::{config_err, Error, Result};
use crate::linalg::{ensure_psd, is_symmetric, min_symmetric_eigenvalue, spectral_radius, symmetrize};

/// Stopping rule for the Riccati fixed-point iteration.
#[derive(Debug, Clone, Copy)]
pub struct DareOptions {
    pub max_iter: usize,
    /// Successive iterates must differ by at most `tol · (1 + ‖P‖_F)`.
    pub tol: f64,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self { max_iter: 100_000, tol: 1e-12 }
    }
}

fn check_weights(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n {
        return config_err(format!(
            "A ({}x{}) and B ({}x{}) are inconsistent",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        ));
    }
    if q.shape() != (n, n) {
        return config_err(format!("Q must be {n}x{n}"));
    }
    if r.shape() != (m, m) {
        return config_err(format!("R must be {m}x{m}"));
    }
    ensure_psd(q, "Q")?;
    if !is_symmetric(r, 1e-12) || min_symmetric_eigenvalue(r) <= 0.0 {
        return config_err("R must be symmetric positive definite");
    }
    Ok(())
}

/// `AᵀPA − AᵀPB(R+BᵀPB)⁻¹BᵀPA + Q − P`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    Ok(riccati_map(a, b, q, r, p)? - p)
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Synthesis { message: "R + BᵀPB lost definiteness".into(), residual: f64::NAN })?;
    let correction = &pb * chol.solve(&pb.transpose());
    Ok(symmetrize(&(q + a.transpose() * (p - correction) * a)))
}

/// Stabilizing solution of the discrete algebraic Riccati equation.
///
/// Value iteration `P ← Q + Aᵀ(P − PB(R+BᵀPB)⁻¹BᵀP)A` started at `P = Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    options: DareOptions,
) -> Result<DMatrix<f64>> {
    check_weights(a, b, q, r)?;
    let mut p = symmetrize(q);
    let mut last_step = f64::INFINITY;
    for _ in 0..options.max_iter {
        let next = riccati_map(a, b, q, r, &p)?;
        last_step = (&next - &p).norm();
        p = next;
        let scale = p.norm();
        if !last_step.is_finite() || !scale.is_finite() {
            last_step = f64::INFINITY;
            break;
        }
        if last_step <= options.tol * (1.0 + scale) {
            return Ok(p);
        }
    }
    let residual = if last_step.is_finite() { dare_residual(a, b, q, r, &p)?.norm() } else { f64::INFINITY };
    Err(Error::Synthesis {
        message: format!("Riccati iteration did not converge in {} iterations", options.max_iter),
        residual,
    })
}

/// LQR gain, closed loop and the weights they came from.
///
/// The applied input is `u = −K x + v`, so `Φ = A − B K`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSynthesis {
    pub k: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl FeedbackSynthesis {
    /// Wraps an externally chosen gain without stability checks. A zero gain
    /// gives `Φ = A`.
    pub fn with_gain(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        k: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        if k.shape() != (b.ncols(), a.nrows()) {
            return config_err(format!("K must be {}x{}", b.ncols(), a.nrows()));
        }
        let phi = a - b * &k;
        Ok(Self { k, phi, q, r })
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.phi)
    }
}

/// Discrete-time LQR: `K = (R + BᵀPB)⁻¹BᵀPA` with `P` from [`solve_dare`].
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<FeedbackSynthesis> {
    let p = solve_dare(a, b, q, r, DareOptions::default())?;
    let pb = &p * b;
    let s = r + b.transpose() * &pb;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::Synthesis {
            message: "R + BᵀPB is not positive definite".into(), residual: f64::NAN
        })?;
    let k = chol.solve(&(pb.transpose() * a));
    let synth = FeedbackSynthesis::with_gain(a, b, k, q.clone(), r.clone())?;
    let rho = synth.spectral_radius();
    if rho >= 1.0 - 1e-9 {
        return Err(Error::Synthesis {
            message: format!("closed loop A - BK is not stable (spectral radius {rho})"),
            residual: dare_residual(a, b, q, r, &p)?.norm(),
        });
    }
    Ok(synth)
}

/// Predicted error covariances `Σᵉ_0 … Σᵉ_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSchedule {
    pub sigmas: Vec<DMatrix<f64>>,
}

impl CovarianceSchedule {
    pub fn horizon(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// `gᵀ Σᵉ_k g` for every k, including `k = 0`.
    pub fn projected_variances(&self, g: &DVector<f64>) -> Vec<f64> {
        self.sigmas.iter().map(|s| g.dot(&(s * g))).collect()
    }
}

/// `Σᵉ_0 = 0`, `Σᵉ_{k+1} = Φ Σᵉ_k Φᵀ + D Σ_w Dᵀ`, symmetrized at every step.
pub fn propagate_covariance(
    phi: &DMatrix<f64>,
    d: &DMatrix<f64>,
    sigma_w: &DMatrix<f64>,
    horizon: usize,
) -> Result<CovarianceSchedule> {
    let n = phi.nrows();
    if horizon == 0 {
        return config_err("horizon must be at least 1");
    }
    if !phi.is_square() || d.nrows() != n || sigma_w.shape() != (d.ncols(), d.ncols()) {
        return config_err("covariance propagation dimensions are inconsistent");
    }
    ensure_psd(sigma_w, "sigma_w")?;
    let injected = symmetrize(&(d * sigma_w * d.transpose()));
    let mut sigmas = Vec::with_capacity(horizon + 1);
    sigmas.push(DMatrix::zeros(n, n));
    for k in 0..horizon {
        let next = phi * &sigmas[k] * phi.transpose() + &injected;
        sigmas.push(symmetrize(&next));
    }
    Ok(CovarianceSchedule { sigmas })
}

/// Predicted error means `μ_0 = 0`, `μ_{k+1} = Φ μ_k + D μ_w`.
pub fn propagate_error_mean(
    phi: &DMatrix<f64>,
    d: &DMatrix<f64>,
    mean_w: &DVector<f64>,
    horizon: usize,
) -> Result<Vec<DVector<f64>>> {
    if d.ncols() != mean_w.len() || d.nrows() != phi.nrows() {
        return config_err("error-mean propagation dimensions are inconsistent");
    }
    let injected = d * mean_w;
    let mut means = Vec::with_capacity(horizon + 1);
    means.push(DVector::zeros(phi.nrows()));
    for k in 0..horizon {
        let next = phi * &means[k] + &injected;
        means.push(next);
    }
    Ok(means)
}

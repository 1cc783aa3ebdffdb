//! Probability kernel and chance-constraint tightening.
//!
//! A chance constraint `Pr(gᵀx_k ≤ h) ≥ p` on `x_k = z_k + e_k` is replaced by
//! the deterministic constraint `gᵀz_k ≤ h − γ_k` on the nominal state, where
//! `γ_k` is chosen so that `Pr(gᵀe_k ≤ γ_k) = p` (Gaussian errors) or is
//! at least `p` (any zero-mean error, via Cantelli's inequality).
//!
//! Two conventions differ from a literal reading of the usual presentation
//! and are fixed here:
//!
//! * the normal density is `exp(−½((x−μ)/σ)²)/(σ√(2π))`, with the square;
//! * the Cantelli law accepts `0 ≤ p < 1`.
//!
//! For a multi-dimensional error the Cantelli law is applied to the scalar
//! projection `gᵀe_k` with variance `gᵀΣᵉ_k g`.

mod erf;

pub use erf::{erf, erf_inv, erfc};

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

use crate::error::{domain_err, Error, Result};
use crate::synthesis::CovarianceSchedule;

/// Required satisfaction probability `p` of `Pr(gᵀx ≤ h) ≥ p`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RiskParameter(f64);

impl RiskParameter {
    /// Accepts `0 ≤ p < 1`; each tightening law narrows this further.
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return domain_err(format!("risk parameter must satisfy 0 <= p < 1, got {p}"));
        }
        Ok(Self(p))
    }

    /// From the allowed-violation convention `p̃ = 1 − p`.
    pub fn from_violation_probability(p_tilde: f64) -> Result<Self> {
        if !(p_tilde > 0.0 && p_tilde <= 1.0) {
            return domain_err(format!("p_tilde must satisfy 0 < p_tilde <= 1, got {p_tilde}"));
        }
        Self::new(1.0 - p_tilde)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn violation_probability(self) -> f64 {
        1.0 - self.0
    }
}

/// How a projected error variance is turned into a margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TighteningLaw {
    /// Exact quantile of a Gaussian error.
    GaussianExact,
    /// Cantelli bound, valid for any zero-mean error with finite variance.
    CantelliRobust,
}

impl TighteningLaw {
    pub fn name(self) -> &'static str {
        match self {
            TighteningLaw::GaussianExact => "gaussian",
            TighteningLaw::CantelliRobust => "cantelli",
        }
    }
}

/// Margins `γ_1 … γ_N` for one half-space.
#[derive(Debug, Clone, PartialEq)]
pub struct TighteningSchedule {
    pub gammas: Vec<f64>,
    pub law: TighteningLaw,
    pub risk: RiskParameter,
}

impl TighteningSchedule {
    /// `γ_1`, the margin that governs the very next step.
    pub fn first(&self) -> f64 {
        self.gammas.first().copied().unwrap_or(0.0)
    }
}

pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let z = (x - mu) / sigma;
    Ok((-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt()))
}

/// `Pr(X ≤ x)` for `X ~ N(μ, σ²)`.
pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    Ok(0.5 + 0.5 * erf((x - mu) / (sigma * SQRT_2)))
}

/// `Pr(−x ≤ X ≤ x)` for `X ~ N(0, σ²)`, which equals `erf(x / (σ√2))`.
pub fn two_sided_probability(x: f64, sigma: f64) -> Result<f64> {
    Ok(normal_cdf(x, 0.0, sigma)? - normal_cdf(-x, 0.0, sigma)?)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain_err(format!("standard deviation must be positive, got {sigma}"));
    }
    Ok(())
}

/// Unit-variance Gaussian tightening factor `√2 · erf⁻¹(2p − 1)`.
pub fn gaussian_factor(p: RiskParameter) -> Result<f64> {
    check_gaussian_risk(p)?;
    Ok(SQRT_2 * erf_inv(2.0 * p.value() - 1.0)?)
}

fn check_gaussian_risk(p: RiskParameter) -> Result<()> {
    if p.value() < 0.5 {
        return domain_err(format!(
            "Gaussian tightening needs 0.5 <= p < 1 (p = {} would loosen the constraint)",
            p.value()
        ));
    }
    Ok(())
}

/// Unit-variance Cantelli tightening factor `√(p / (1 − p))`.
pub fn cantelli_factor(p: RiskParameter) -> f64 {
    let p = p.value();
    (p / (1.0 - p)).sqrt()
}

/// `γ = √(2 gᵀΣᵉg) · erf⁻¹(2p − 1)`.
pub fn gaussian_gamma(g: &DVector<f64>, sigma_e: &DMatrix<f64>, p: RiskParameter) -> Result<f64> {
    check_gaussian_risk(p)?;
    let variance = projected_variance(g, sigma_e)?;
    Ok((2.0 * variance).sqrt() * erf_inv(2.0 * p.value() - 1.0)?)
}

/// `γ = σ √(p / (1 − p))` for an error of standard deviation `σ`.
pub fn cantelli_gamma(sigma: f64, p: RiskParameter) -> Result<f64> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return domain_err(format!("standard deviation must be non-negative, got {sigma}"));
    }
    Ok(sigma * cantelli_factor(p))
}

fn projected_variance(g: &DVector<f64>, sigma_e: &DMatrix<f64>) -> Result<f64> {
    if sigma_e.shape() != (g.len(), g.len()) {
        return Err(Error::Config(format!(
            "covariance is {}x{}, constraint normal has length {}",
            sigma_e.nrows(),
            sigma_e.ncols(),
            g.len()
        )));
    }
    let v = g.dot(&(sigma_e * g));
    if v < -1e-10 * (1.0 + sigma_e.amax()) * g.norm_squared() {
        return domain_err(format!("projected variance is negative ({v:e})"));
    }
    Ok(v.max(0.0))
}

/// Chebyshev bound `min(1, σ²/c²)` on `Pr(|X − μ| ≥ c)`.
///
/// The bound does not depend on the mean; `mu` only documents which centre
/// the deviation is measured from.
pub fn chebyshev_bound(c: f64, sigma2: f64, _mu: f64) -> Result<f64> {
    check_threshold(c, sigma2)?;
    Ok((sigma2 / (c * c)).min(1.0))
}

/// Lower bound `max(0, 1 − σ²/c²)` on `Pr(|X − μ| < c)`.
pub fn chebyshev_complement(c: f64, sigma2: f64) -> Result<f64> {
    check_threshold(c, sigma2)?;
    Ok((1.0 - sigma2 / (c * c)).max(0.0))
}

/// Cantelli bound `σ²/(σ² + c²)` on `Pr(X − μ ≥ c)`.
pub fn cantelli_bound(c: f64, sigma2: f64) -> Result<f64> {
    check_threshold(c, sigma2)?;
    Ok(sigma2 / (sigma2 + c * c))
}

/// Lower bound `1 − σ²/(σ² + c²)` on `Pr(X − μ < c)`.
pub fn cantelli_complement(c: f64, sigma2: f64) -> Result<f64> {
    Ok(1.0 - cantelli_bound(c, sigma2)?)
}

fn check_threshold(c: f64, sigma2: f64) -> Result<()> {
    if c.is_nan() || c <= 0.0 {
        return domain_err(format!("deviation threshold must be positive, got {c}"));
    }
    if sigma2.is_nan() || sigma2 < 0.0 {
        return domain_err(format!("variance must be non-negative, got {sigma2}"));
    }
    Ok(())
}

/// `E[gᵀe] = gᵀ μ_e`, the extra margin for a non-zero-mean error.
pub fn mean_shift_adjustment(g: &DVector<f64>, mean_e: &DVector<f64>) -> f64 {
    g.dot(mean_e)
}

/// Margins `γ_1 … γ_N` from `Σᵉ_1 … Σᵉ_N`; `Σᵉ_0` is never tightened.
pub fn build_tightening_schedule(
    g: &DVector<f64>,
    covariances: &CovarianceSchedule,
    p: RiskParameter,
    law: TighteningLaw,
) -> Result<TighteningSchedule> {
    let gammas = covariances.sigmas[1..]
        .iter()
        .map(|sigma_e| match law {
            TighteningLaw::GaussianExact => gaussian_gamma(g, sigma_e, p),
            TighteningLaw::CantelliRobust => cantelli_gamma(projected_variance(g, sigma_e)?.sqrt(), p),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TighteningSchedule { gammas, law, risk: p })
}

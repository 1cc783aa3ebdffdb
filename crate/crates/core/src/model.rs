//! Plant model, constraints and disturbance sampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{config_err, Result};
use crate::linalg::{ensure_psd, psd_factor};

/// Pseudo-random generator driving every simulation.
pub type SimRng = ChaCha8Rng;

/// Name of the PRNG recorded in output headers.
pub const PRNG_NAME: &str = "ChaCha8Rng(seed_from_u64)";

/// Name of the standard-normal transform recorded in output headers.
pub const NORMAL_SAMPLER_NAME: &str = "ziggurat(rand_distr::StandardNormal)";

pub fn seeded_rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `x⁺ = A x + B u + D w` with `w` of covariance `sigma_w` and mean `mean_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStochasticSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    d: DMatrix<f64>,
    sigma_w: DMatrix<f64>,
    mean_w: DVector<f64>,
}

impl LinearStochasticSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        d: DMatrix<f64>,
        sigma_w: DMatrix<f64>,
        mean_w: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return config_err(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols()));
        }
        if b.nrows() != n || b.ncols() == 0 {
            return config_err(format!("B must be {n}xm with m >= 1, got {}x{}", b.nrows(), b.ncols()));
        }
        if d.nrows() != n || d.ncols() == 0 {
            return config_err(format!("D must be {n}xq with q >= 1, got {}x{}", d.nrows(), d.ncols()));
        }
        let q = d.ncols();
        if sigma_w.nrows() != q || sigma_w.ncols() != q {
            return config_err(format!("sigma_w must be {q}x{q}, got {}x{}", sigma_w.nrows(), sigma_w.ncols()));
        }
        if mean_w.len() != q {
            return config_err(format!("mean_w must have length {q}, got {}", mean_w.len()));
        }
        for (name, m) in [("A", &a), ("B", &b), ("D", &d)] {
            if m.iter().any(|v| !v.is_finite()) {
                return config_err(format!("{name} has non-finite entries"));
            }
        }
        if mean_w.iter().any(|v| !v.is_finite()) {
            return config_err("mean_w has non-finite entries");
        }
        ensure_psd(&sigma_w, "sigma_w")?;
        Ok(Self { a, b, d, sigma_w, mean_w })
    }

    /// Same system with zero mean and the given disturbance covariance.
    pub fn with_disturbance(&self, sigma_w: DMatrix<f64>, mean_w: DVector<f64>) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.d.clone(), sigma_w, mean_w)
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn sigma_w(&self) -> &DMatrix<f64> {
        &self.sigma_w
    }
    pub fn mean_w(&self) -> &DVector<f64> {
        &self.mean_w
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn disturbance_dim(&self) -> usize {
        self.d.ncols()
    }

    /// One step of the true plant, `A x + B u + D w`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim() || u.len() != self.input_dim() || w.len() != self.disturbance_dim() {
            return config_err(format!(
                "step dimensions: expected x:{} u:{} w:{}, got x:{} u:{} w:{}",
                self.state_dim(),
                self.input_dim(),
                self.disturbance_dim(),
                x.len(),
                u.len(),
                w.len()
            ));
        }
        Ok(&self.a * x + &self.b * u + &self.d * w)
    }
}

/// Round-off allowance of the violation check, relative to `1 + |h|`.
pub const VIOLATION_TOLERANCE: f64 = 1e-9;

/// State half-space `gᵀx ≤ h`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    pub g: DVector<f64>,
    pub h: f64,
}

impl HalfSpace {
    pub fn new(g: DVector<f64>, h: f64) -> Result<Self> {
        if g.iter().all(|v| *v == 0.0) {
            return config_err("half-space normal g must be nonzero");
        }
        if g.iter().any(|v| !v.is_finite()) || h.is_nan() {
            return config_err("half-space has non-finite entries");
        }
        Ok(Self { g, h })
    }

    /// `gᵀx > h` beyond round-off; a state riding the boundary is satisfied.
    pub fn is_violated(&self, x: &DVector<f64>) -> bool {
        self.g.dot(x) > self.h + VIOLATION_TOLERANCE * (1.0 + self.h.abs())
    }
}

/// Input box bounds and state half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    u_min: DVector<f64>,
    u_max: DVector<f64>,
    state_halfspaces: Vec<HalfSpace>,
}

impl ConstraintSet {
    pub fn new(u_min: DVector<f64>, u_max: DVector<f64>, state_halfspaces: Vec<HalfSpace>) -> Result<Self> {
        if u_min.len() != u_max.len() {
            return config_err("u_min and u_max lengths differ");
        }
        if u_min.iter().zip(u_max.iter()).any(|(lo, hi)| lo.is_nan() || hi.is_nan() || lo > hi) {
            return config_err("input bounds must satisfy u_min <= u_max elementwise");
        }
        if let Some(first) = state_halfspaces.first() {
            if state_halfspaces.iter().any(|hs| hs.g.len() != first.g.len()) {
                return config_err("state half-spaces have inconsistent dimensions");
            }
        }
        Ok(Self { u_min, u_max, state_halfspaces })
    }

    pub fn u_min(&self) -> &DVector<f64> {
        &self.u_min
    }
    pub fn u_max(&self) -> &DVector<f64> {
        &self.u_max
    }
    pub fn state_halfspaces(&self) -> &[HalfSpace] {
        &self.state_halfspaces
    }

    /// Copy with every state half-space removed.
    pub fn without_state_constraints(&self) -> Self {
        Self { state_halfspaces: Vec::new(), ..self.clone() }
    }

    /// Errors when the constraint dimensions do not fit `sys`.
    pub fn check_compatible(&self, sys: &LinearStochasticSystem) -> Result<()> {
        if self.u_min.len() != sys.input_dim() {
            return config_err(format!(
                "input bounds have length {}, system has {} inputs",
                self.u_min.len(),
                sys.input_dim()
            ));
        }
        if let Some(hs) = self.state_halfspaces.iter().find(|hs| hs.g.len() != sys.state_dim()) {
            return config_err(format!(
                "half-space normal has length {}, system has {} states",
                hs.g.len(),
                sys.state_dim()
            ));
        }
        Ok(())
    }

    /// One flag per half-space, true iff `gᵀx > h`.
    pub fn check_violation(&self, x: &DVector<f64>) -> Vec<bool> {
        self.state_halfspaces.iter().map(|hs| hs.is_violated(x)).collect()
    }
}

/// Distribution family of the additive disturbance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisturbanceModel {
    GaussianZeroMean,
    GaussianWithMean,
    /// Zero-mean, non-Gaussian noise known only through its variance. Draws
    /// are i.i.d. standardized uniforms shaped by the covariance factor.
    GeneralZeroMean {
        variance_w: f64,
    },
}

impl DisturbanceModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisturbanceModel::GeneralZeroMean { variance_w } if !(variance_w > 0.0 && variance_w.is_finite()) => {
                config_err(format!("general disturbance needs variance_w > 0, got {variance_w}"))
            }
            _ => Ok(()),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        !matches!(self, DisturbanceModel::GeneralZeroMean { .. })
    }
}

/// Draws `w = μ + L ξ` with `L Lᵀ = Σ_w` and `ξ` i.i.d. with unit variance.
#[derive(Debug, Clone)]
pub struct DisturbanceSampler {
    model: DisturbanceModel,
    factor: DMatrix<f64>,
    mean: DVector<f64>,
}

impl DisturbanceSampler {
    pub fn new(model: DisturbanceModel, sigma_w: &DMatrix<f64>, mean_w: &DVector<f64>) -> Result<Self> {
        model.validate()?;
        if mean_w.len() != sigma_w.nrows() {
            return config_err("mean_w and sigma_w dimensions differ");
        }
        let mean = match model {
            DisturbanceModel::GaussianWithMean => mean_w.clone(),
            _ => {
                if mean_w.iter().any(|v| *v != 0.0) {
                    return config_err("zero-mean disturbance model given a nonzero mean_w");
                }
                DVector::zeros(mean_w.len())
            }
        };
        Ok(Self { model, factor: psd_factor(sigma_w)?, mean })
    }

    pub fn for_system(model: DisturbanceModel, sys: &LinearStochasticSystem) -> Result<Self> {
        Self::new(model, sys.sigma_w(), sys.mean_w())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let q = self.dim();
        let xi = match self.model {
            DisturbanceModel::GeneralZeroMean { .. } => {
                let half_width = 3f64.sqrt();
                DVector::from_fn(q, |_, _| half_width * (2.0 * rng.random::<f64>() - 1.0))
            }
            _ => DVector::from_fn(q, |_, _| rng.sample::<f64, _>(StandardNormal)),
        };
        &self.mean + &self.factor * xi
    }
}

/// One draw of the disturbance; the generator state advances in place.
pub fn sample_disturbance<R: Rng + ?Sized>(
    model: DisturbanceModel,
    sigma_w: &DMatrix<f64>,
    mean_w: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(DisturbanceSampler::new(model, sigma_w, mean_w)?.sample(rng))
}

//! Run configuration file (TOML) and its conversion to the internal model.
//!
//! Matrices are nested arrays in row-major order. The defaults describe the
//! reference two-state converter scenario.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chance::{RiskParameter, TighteningLaw};
use crate::controller::{ClosedLoopSetup, Controller, ControllerMode, ControllerSettings};
use crate::error::{config_err, Error, Result};
use crate::linalg::{matrix_from_rows, matrix_to_rows, vector_to_vec};
use crate::model::{ConstraintSet, DisturbanceModel, HalfSpace, LinearStochasticSystem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemBlock,
    pub constraints: ConstraintsBlock,
    pub mpc: MpcBlock,
    pub risk: RiskBlock,
    pub experiment: ExperimentBlock,
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisturbanceKind {
    Gaussian,
    GaussianMean,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    pub sigma_w: Vec<Vec<f64>>,
    #[serde(default)]
    pub mean_w: Vec<f64>,
    #[serde(default = "default_disturbance")]
    pub disturbance: DisturbanceKind,
    /// Per-component variance of the general (non-Gaussian) disturbance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_w: Option<f64>,
}

fn default_disturbance() -> DisturbanceKind {
    DisturbanceKind::Gaussian
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceBlock {
    pub g: Vec<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintsBlock {
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    #[serde(default)]
    pub state: Vec<HalfSpaceBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcBlock {
    pub horizon: usize,
    /// Sampling time; only used to label output rows.
    pub dt: f64,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub steps: usize,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr_q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lqr_r: Option<Vec<Vec<f64>>>,
    /// Replaces the LQR gain of the stochastic modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawName {
    Gaussian,
    Cantelli,
}

impl From<LawName> for TighteningLaw {
    fn from(l: LawName) -> Self {
        match l {
            LawName::Gaussian => TighteningLaw::GaussianExact,
            LawName::Cantelli => TighteningLaw::CantelliRobust,
        }
    }
}

impl From<TighteningLaw> for LawName {
    fn from(l: TighteningLaw) -> Self {
        match l {
            TighteningLaw::GaussianExact => LawName::Gaussian,
            TighteningLaw::CantelliRobust => LawName::Cantelli,
        }
    }
}

/// Exactly one of `p` (satisfaction probability) and `p_tilde = 1 − p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_tilde: Option<f64>,
    pub law: LawName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    pub trials: usize,
    pub base_seed: u64,
    /// When false the plant runs without disturbances.
    #[serde(default = "default_true")]
    pub plant_noise: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    pub prefix: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemBlock {
                a: vec![vec![1.0, 0.0075], vec![-0.143, 0.996]],
                b: vec![vec![4.798], vec![0.115]],
                d: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                sigma_w: vec![vec![0.08, 0.0], vec![0.0, 0.08]],
                mean_w: vec![0.0, 0.0],
                disturbance: DisturbanceKind::Gaussian,
                variance_w: None,
            },
            constraints: ConstraintsBlock {
                u_min: vec![-0.2],
                u_max: vec![0.2],
                state: vec![HalfSpaceBlock { g: vec![1.0, 0.0], h: 2.8 }],
            },
            mpc: MpcBlock {
                horizon: 11,
                dt: 0.1,
                q: vec![vec![1.0, 0.0], vec![0.0, 10.0]],
                r: vec![vec![1.0]],
                steps: 100,
                x0: vec![2.5, 4.8],
                lqr_q: None,
                lqr_r: None,
                gain: None,
            },
            risk: RiskBlock { p: Some(0.8), p_tilde: None, law: LawName::Gaussian },
            experiment: ExperimentBlock { trials: 1000, base_seed: 0, plant_noise: true },
            output: OutputBlock { directory: "out".into(), prefix: "smpc".into() },
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    /// First 16 hex digits of the SHA-256 of the serialized config.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        Scenario::from_config(self)
    }
}

/// How the risk level was written in the config.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskInput {
    Satisfaction(f64),
    Violation(f64),
}

/// Validated internal form of a [`RunConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub system: LinearStochasticSystem,
    pub constraints: ConstraintSet,
    pub disturbance: DisturbanceModel,
    pub settings: ControllerSettings,
    pub risk_input: RiskInput,
    pub law: TighteningLaw,
    pub dt: f64,
    pub steps: usize,
    pub x0: DVector<f64>,
    pub trials: usize,
    pub base_seed: u64,
    pub plant_noise: bool,
    pub output_directory: PathBuf,
    pub output_prefix: String,
}

fn vector(values: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(values)
}

impl Scenario {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let sys = &config.system;
        let a = matrix_from_rows(&sys.a, "system.a")?;
        let b = matrix_from_rows(&sys.b, "system.b")?;
        let d = matrix_from_rows(&sys.d, "system.d")?;
        let sigma_w = matrix_from_rows(&sys.sigma_w, "system.sigma_w")?;
        let mean_w = if sys.mean_w.is_empty() { DVector::zeros(d.ncols()) } else { vector(&sys.mean_w) };
        let disturbance = match sys.disturbance {
            DisturbanceKind::Gaussian => DisturbanceModel::GaussianZeroMean,
            DisturbanceKind::GaussianMean => DisturbanceModel::GaussianWithMean,
            DisturbanceKind::General => DisturbanceModel::GeneralZeroMean {
                variance_w: sys
                    .variance_w
                    .ok_or_else(|| Error::Config("general disturbance requires system.variance_w".into()))?,
            },
        };
        if sys.variance_w.is_some() && sys.disturbance != DisturbanceKind::General {
            return config_err("system.variance_w is only valid with disturbance = \"general\"");
        }
        disturbance.validate()?;
        let system = LinearStochasticSystem::new(a, b, d, sigma_w, mean_w)?;
        if let DisturbanceModel::GeneralZeroMean { variance_w } = disturbance {
            let expected = DMatrix::identity(system.disturbance_dim(), system.disturbance_dim()) * variance_w;
            if (system.sigma_w() - expected).amax() > 1e-12 * (1.0 + variance_w) {
                return config_err("general disturbance requires sigma_w = variance_w * I");
            }
        }
        if disturbance != DisturbanceModel::GaussianWithMean && system.mean_w().iter().any(|v| *v != 0.0) {
            return config_err("nonzero mean_w requires disturbance = \"gaussian-mean\"");
        }

        let cons = &config.constraints;
        let halfspaces = cons.state.iter().map(|hs| HalfSpace::new(vector(&hs.g), hs.h)).collect::<Result<Vec<_>>>()?;
        let constraints = ConstraintSet::new(vector(&cons.u_min), vector(&cons.u_max), halfspaces)?;
        constraints.check_compatible(&system)?;

        let risk_input = match (config.risk.p, config.risk.p_tilde) {
            (Some(p), None) => RiskInput::Satisfaction(p),
            (None, Some(pt)) => RiskInput::Violation(pt),
            _ => return config_err("risk block needs exactly one of p and p_tilde"),
        };
        let risk = match risk_input {
            RiskInput::Satisfaction(p) => RiskParameter::new(p)?,
            RiskInput::Violation(pt) => RiskParameter::from_violation_probability(pt)?,
        };

        let mpc = &config.mpc;
        if mpc.horizon == 0 {
            return config_err("mpc.horizon must be at least 1");
        }
        if mpc.steps == 0 {
            return config_err("mpc.steps must be at least 1");
        }
        if !(mpc.dt > 0.0 && mpc.dt.is_finite()) {
            return config_err("mpc.dt must be positive");
        }
        let x0 = vector(&mpc.x0);
        if x0.len() != system.state_dim() {
            return config_err(format!("mpc.x0 must have length {}", system.state_dim()));
        }
        let mut settings = ControllerSettings::new(
            mpc.horizon,
            matrix_from_rows(&mpc.q, "mpc.q")?,
            matrix_from_rows(&mpc.r, "mpc.r")?,
            Some(risk),
        );
        settings.lqr_q = mpc.lqr_q.as_deref().map(|m| matrix_from_rows(m, "mpc.lqr_q")).transpose()?;
        settings.lqr_r = mpc.lqr_r.as_deref().map(|m| matrix_from_rows(m, "mpc.lqr_r")).transpose()?;
        settings.gain_override = mpc.gain.as_deref().map(|m| matrix_from_rows(m, "mpc.gain")).transpose()?;

        if config.experiment.trials == 0 {
            return config_err("experiment.trials must be at least 1");
        }

        let scenario = Self {
            system,
            constraints,
            disturbance,
            settings,
            risk_input,
            law: config.risk.law.into(),
            dt: mpc.dt,
            steps: mpc.steps,
            x0,
            trials: config.experiment.trials,
            base_seed: config.experiment.base_seed,
            plant_noise: config.experiment.plant_noise,
            output_directory: PathBuf::from(&config.output.directory),
            output_prefix: config.output.prefix.clone(),
        };
        // Weight shapes and definiteness are checked by building a nominal controller.
        scenario.controller(ControllerMode::NominalWithStateConstraint)?;
        Ok(scenario)
    }

    pub fn to_config(&self) -> RunConfig {
        let (p, p_tilde) = match self.risk_input {
            RiskInput::Satisfaction(p) => (Some(p), None),
            RiskInput::Violation(pt) => (None, Some(pt)),
        };
        RunConfig {
            system: SystemBlock {
                a: matrix_to_rows(self.system.a()),
                b: matrix_to_rows(self.system.b()),
                d: matrix_to_rows(self.system.d()),
                sigma_w: matrix_to_rows(self.system.sigma_w()),
                mean_w: vector_to_vec(self.system.mean_w()),
                disturbance: match self.disturbance {
                    DisturbanceModel::GaussianZeroMean => DisturbanceKind::Gaussian,
                    DisturbanceModel::GaussianWithMean => DisturbanceKind::GaussianMean,
                    DisturbanceModel::GeneralZeroMean { .. } => DisturbanceKind::General,
                },
                variance_w: match self.disturbance {
                    DisturbanceModel::GeneralZeroMean { variance_w } => Some(variance_w),
                    _ => None,
                },
            },
            constraints: ConstraintsBlock {
                u_min: vector_to_vec(self.constraints.u_min()),
                u_max: vector_to_vec(self.constraints.u_max()),
                state: self
                    .constraints
                    .state_halfspaces()
                    .iter()
                    .map(|hs| HalfSpaceBlock { g: vector_to_vec(&hs.g), h: hs.h })
                    .collect(),
            },
            mpc: MpcBlock {
                horizon: self.settings.horizon,
                dt: self.dt,
                q: matrix_to_rows(&self.settings.q),
                r: matrix_to_rows(&self.settings.r),
                steps: self.steps,
                x0: vector_to_vec(&self.x0),
                lqr_q: self.settings.lqr_q.as_ref().map(matrix_to_rows),
                lqr_r: self.settings.lqr_r.as_ref().map(matrix_to_rows),
                gain: self.settings.gain_override.as_ref().map(matrix_to_rows),
            },
            risk: RiskBlock { p, p_tilde, law: self.law.into() },
            experiment: ExperimentBlock {
                trials: self.trials,
                base_seed: self.base_seed,
                plant_noise: self.plant_noise,
            },
            output: OutputBlock {
                directory: self.output_directory.to_string_lossy().into_owned(),
                prefix: self.output_prefix.clone(),
            },
        }
    }

    pub fn risk(&self) -> RiskParameter {
        self.settings.risk.expect("scenario always carries a risk parameter")
    }

    /// Stochastic mode matching the configured tightening law.
    pub fn default_mode(&self) -> ControllerMode {
        ControllerMode::from_law(self.law)
    }

    pub fn controller(&self, mode: ControllerMode) -> Result<Controller> {
        Controller::new(mode, self.system.clone(), self.constraints.clone(), self.settings.clone())
    }

    pub fn setup(&self, mode: ControllerMode) -> Result<ClosedLoopSetup> {
        ClosedLoopSetup::new(self.controller(mode)?, self.disturbance, self.plant_noise)
    }
}

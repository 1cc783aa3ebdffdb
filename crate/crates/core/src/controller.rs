//! Receding-horizon controller and closed-loop simulation.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};

use crate::chance::{
    build_tightening_schedule, mean_shift_adjustment, RiskParameter, TighteningLaw, TighteningSchedule,
};
use crate::error::{config_err, Error, Result};
use crate::model::{seeded_rng, ConstraintSet, DisturbanceModel, DisturbanceSampler, LinearStochasticSystem, SimRng};
use crate::ocp::{condense, shift_active_set, solve_qp_with, OcpSpec, QpOptions, QpStatus, TightenedHalfSpace};
use crate::synthesis::{lqr_gain, propagate_covariance, propagate_error_mean, CovarianceSchedule, FeedbackSynthesis};

/// Penalty on the squared shared slack when the tightened QP is infeasible.
pub const DEFAULT_SLACK_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerMode {
    /// Input constraints only.
    NominalNoStateConstraint,
    /// Input and hard state constraints, no feedback split.
    NominalWithStateConstraint,
    /// Feedback split with Gaussian tightening.
    SmpcGaussian,
    /// Feedback split with Cantelli tightening.
    SmpcCantelli,
}

impl ControllerMode {
    pub const ALL: [ControllerMode; 4] = [
        ControllerMode::NominalNoStateConstraint,
        ControllerMode::NominalWithStateConstraint,
        ControllerMode::SmpcGaussian,
        ControllerMode::SmpcCantelli,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerMode::NominalNoStateConstraint => "nominal-free",
            ControllerMode::NominalWithStateConstraint => "nominal",
            ControllerMode::SmpcGaussian => "smpc-gaussian",
            ControllerMode::SmpcCantelli => "smpc-cantelli",
        }
    }

    pub fn law(self) -> Option<TighteningLaw> {
        match self {
            ControllerMode::SmpcGaussian => Some(TighteningLaw::GaussianExact),
            ControllerMode::SmpcCantelli => Some(TighteningLaw::CantelliRobust),
            _ => None,
        }
    }

    pub fn from_law(law: TighteningLaw) -> Self {
        match law {
            TighteningLaw::GaussianExact => ControllerMode::SmpcGaussian,
            TighteningLaw::CantelliRobust => ControllerMode::SmpcCantelli,
        }
    }

    pub fn is_stochastic(self) -> bool {
        self.law().is_some()
    }
}

impl fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ControllerMode::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown mode '{s}' (expected nominal-free, nominal, smpc-gaussian or smpc-cantelli)"
            ))
        })
    }
}

/// Tuning that is not part of the plant description.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSettings {
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Required for the stochastic modes.
    pub risk: Option<RiskParameter>,
    /// LQR weights; the MPC weights are reused when absent.
    pub lqr_q: Option<DMatrix<f64>>,
    pub lqr_r: Option<DMatrix<f64>>,
    /// Replaces the LQR gain in the stochastic modes.
    pub gain_override: Option<DMatrix<f64>>,
    pub slack_penalty: f64,
    pub warm_start: bool,
    pub qp_options: QpOptions,
}

impl ControllerSettings {
    pub fn new(horizon: usize, q: DMatrix<f64>, r: DMatrix<f64>, risk: Option<RiskParameter>) -> Self {
        Self {
            horizon,
            q,
            r,
            risk,
            lqr_q: None,
            lqr_r: None,
            gain_override: None,
            slack_penalty: DEFAULT_SLACK_PENALTY,
            warm_start: true,
            qp_options: QpOptions::default(),
        }
    }
}

/// Result of one receding-horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Input applied to the plant.
    pub u: DVector<f64>,
    /// First element of the optimal decision sequence.
    pub v0: DVector<f64>,
    pub status: QpStatus,
    /// The tightened problem was infeasible and the slack relaxation was used.
    pub relaxed: bool,
    pub slack: f64,
    /// Disturbance-free successor `A x + B u`.
    pub predicted_next: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub solve_time: Duration,
}

#[derive(Debug, Clone)]
pub struct Controller {
    mode: ControllerMode,
    system: LinearStochasticSystem,
    constraints: ConstraintSet,
    /// Constraints whose violations are reported, including state half-spaces
    /// the optimizer ignores.
    monitored: ConstraintSet,
    settings: ControllerSettings,
    synthesis: FeedbackSynthesis,
    covariance: Option<CovarianceSchedule>,
    tightening: Vec<TighteningSchedule>,
    /// Per half-space margins `γ_k + gᵀμ_k`, `k = 1..=N`.
    margins: Vec<Vec<f64>>,
    warm: Vec<usize>,
}

impl Controller {
    pub fn new(
        mode: ControllerMode,
        system: LinearStochasticSystem,
        constraints: ConstraintSet,
        settings: ControllerSettings,
    ) -> Result<Self> {
        constraints.check_compatible(&system)?;
        if settings.horizon == 0 {
            return config_err("horizon must be at least 1");
        }
        let (n, m) = (system.state_dim(), system.input_dim());
        if settings.q.shape() != (n, n) || settings.r.shape() != (m, m) {
            return config_err(format!("MPC weights must be Q: {n}x{n}, R: {m}x{m}"));
        }
        if settings.slack_penalty.is_nan() || settings.slack_penalty <= 0.0 {
            return config_err("slack penalty must be positive");
        }
        let monitored = constraints.clone();
        let constraints = match mode {
            ControllerMode::NominalNoStateConstraint => constraints.without_state_constraints(),
            _ => constraints,
        };
        let zero_gain = || {
            FeedbackSynthesis::with_gain(
                system.a(),
                system.b(),
                DMatrix::zeros(m, n),
                settings.q.clone(),
                settings.r.clone(),
            )
        };

        let mut covariance = None;
        let mut tightening = Vec::new();
        let synthesis = match mode.law() {
            None => zero_gain()?,
            Some(law) => {
                let risk =
                    settings.risk.ok_or_else(|| Error::Config(format!("mode {mode} requires a risk parameter")))?;
                let lqr_q = settings.lqr_q.clone().unwrap_or_else(|| settings.q.clone());
                let lqr_r = settings.lqr_r.clone().unwrap_or_else(|| settings.r.clone());
                let synth = match &settings.gain_override {
                    Some(k) => FeedbackSynthesis::with_gain(system.a(), system.b(), k.clone(), lqr_q, lqr_r)?,
                    None => lqr_gain(system.a(), system.b(), &lqr_q, &lqr_r)?,
                };
                let cov = propagate_covariance(&synth.phi, system.d(), system.sigma_w(), settings.horizon)?;
                tightening = constraints
                    .state_halfspaces()
                    .iter()
                    .map(|hs| build_tightening_schedule(&hs.g, &cov, risk, law))
                    .collect::<Result<Vec<_>>>()?;
                covariance = Some(cov);
                synth
            }
        };

        let mut margins: Vec<Vec<f64>> = match mode.law() {
            None => vec![vec![0.0; settings.horizon]; constraints.state_halfspaces().len()],
            Some(_) => tightening.iter().map(|t| t.gammas.clone()).collect(),
        };
        if mode.is_stochastic() && system.mean_w().iter().any(|v| *v != 0.0) {
            let means = propagate_error_mean(&synthesis.phi, system.d(), system.mean_w(), settings.horizon)?;
            for (hs, row) in constraints.state_halfspaces().iter().zip(margins.iter_mut()) {
                for (k, margin) in row.iter_mut().enumerate() {
                    *margin += mean_shift_adjustment(&hs.g, &means[k + 1]);
                }
            }
        }

        Ok(Self {
            mode,
            system,
            constraints,
            monitored,
            settings,
            synthesis,
            covariance,
            tightening,
            margins,
            warm: Vec::new(),
        })
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }
    pub fn system(&self) -> &LinearStochasticSystem {
        &self.system
    }
    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }
    pub fn monitored_constraints(&self) -> &ConstraintSet {
        &self.monitored
    }
    pub fn settings(&self) -> &ControllerSettings {
        &self.settings
    }
    pub fn synthesis(&self) -> &FeedbackSynthesis {
        &self.synthesis
    }
    pub fn covariance(&self) -> Option<&CovarianceSchedule> {
        self.covariance.as_ref()
    }
    pub fn tightening(&self) -> &[TighteningSchedule] {
        &self.tightening
    }
    pub fn margins(&self) -> &[Vec<f64>] {
        &self.margins
    }

    /// Margin of the first half-space at prediction step 1, zero when absent.
    pub fn first_margin(&self) -> f64 {
        self.margins.first().and_then(|m| m.first()).copied().unwrap_or(0.0)
    }

    /// Forgets the warm-start active set.
    pub fn reset(&mut self) {
        self.warm.clear();
    }

    /// OCP posed from the measured state `x` (prediction error reset to 0).
    pub fn ocp_spec(&self, x: &DVector<f64>) -> OcpSpec {
        OcpSpec {
            horizon: self.settings.horizon,
            a: self.system.a().clone(),
            b: self.system.b().clone(),
            q: self.settings.q.clone(),
            r: self.settings.r.clone(),
            u_min: self.constraints.u_min().clone(),
            u_max: self.constraints.u_max().clone(),
            state_constraints: self
                .constraints
                .state_halfspaces()
                .iter()
                .zip(&self.margins)
                .map(|(hs, margins)| TightenedHalfSpace { g: hs.g.clone(), h: hs.h, margins: margins.clone() })
                .collect(),
            k: self.synthesis.k.clone(),
            x0: x.clone(),
        }
    }

    /// Solves the OCP at `x` and returns the first input.
    pub fn control_step(&mut self, x: &DVector<f64>) -> Result<StepOutcome> {
        if x.len() != self.system.state_dim() || x.iter().any(|v| !v.is_finite()) {
            return config_err("measured state must be finite with the system's dimension");
        }
        let started = Instant::now();
        let m = self.system.input_dim();
        let condensed = condense(&self.ocp_spec(x))?;
        let seed = if self.settings.warm_start {
            shift_active_set(&self.warm, self.settings.horizon, m, self.constraints.state_halfspaces().len())
        } else {
            Vec::new()
        };
        let mut solution = solve_qp_with(&condensed.qp, self.settings.qp_options, &seed)?;
        let mut relaxed = false;
        let mut slack = 0.0;
        if solution.status == QpStatus::Infeasible {
            let soft = condensed.with_state_slack(self.settings.slack_penalty)?;
            let soft_solution = solve_qp_with(&soft, self.settings.qp_options, &[])?;
            if soft_solution.status != QpStatus::Optimal {
                return Err(Error::Solver(format!(
                    "slack-relaxed QP ended with status {}",
                    soft_solution.status.as_str()
                )));
            }
            relaxed = true;
            slack = soft_solution.z[soft.dim() - 1];
            solution = soft_solution;
            self.warm.clear();
        } else {
            self.warm = solution.active_set.clone();
        }

        let v0 = solution.z.rows(0, m).into_owned();
        let mut u = &v0 - &self.synthesis.k * x;
        if solution.status != QpStatus::Optimal {
            u = u.zip_zip_map(self.constraints.u_min(), self.constraints.u_max(), |v, lo, hi| v.clamp(lo, hi));
        }
        let predicted_next = self.system.a() * x + self.system.b() * &u;
        Ok(StepOutcome {
            u,
            v0,
            status: if relaxed { QpStatus::Optimal } else { solution.status },
            relaxed,
            slack,
            predicted_next,
            objective: solution.objective,
            iterations: solution.iterations,
            solve_time: started.elapsed(),
        })
    }
}

/// Everything needed to run trials of one configuration.
#[derive(Debug, Clone)]
pub struct ClosedLoopSetup {
    pub controller: Controller,
    pub disturbance: DisturbanceModel,
    /// When false the plant is simulated without disturbances while the
    /// controller still tightens for the configured noise.
    pub plant_noise: bool,
}

impl ClosedLoopSetup {
    pub fn new(controller: Controller, disturbance: DisturbanceModel, plant_noise: bool) -> Result<Self> {
        disturbance.validate()?;
        DisturbanceSampler::for_system(disturbance, controller.system())?;
        Ok(Self { controller, disturbance, plant_noise })
    }

    pub fn run(&self, x0: &DVector<f64>, steps: usize, seed: u64) -> Result<ClosedLoopRecord> {
        let mut controller = self.controller.clone();
        controller.reset();
        let sampler = if self.plant_noise {
            Some(DisturbanceSampler::for_system(self.disturbance, controller.system())?)
        } else {
            None
        };
        let mut rng = seeded_rng(seed);
        let mut record = run_closed_loop(&mut controller, sampler.as_ref(), x0, steps, &mut rng)?;
        record.seed = Some(seed);
        Ok(record)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub status: QpStatus,
    pub relaxed: bool,
    /// Margin of the first half-space at prediction step 1.
    pub gamma_1: f64,
    pub predicted_next: DVector<f64>,
    pub iterations: usize,
    pub solve_time: Duration,
}

/// States `x_0 … x_T` and the step data that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRecord {
    pub mode: ControllerMode,
    pub seed: Option<u64>,
    pub states: Vec<DVector<f64>>,
    /// Half-space violation flags of every state.
    pub violations: Vec<Vec<bool>>,
    pub steps: Vec<StepRecord>,
}

impl ClosedLoopRecord {
    /// Largest value of state component `i` over the run.
    pub fn max_state(&self, i: usize) -> f64 {
        self.states.iter().map(|x| x[i]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("record holds at least x0")
    }

    /// Equality ignoring wall-clock solve times.
    pub fn same_trajectory(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.seed == other.seed
            && self.states == other.states
            && self.violations == other.violations
            && self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| {
                a.u == b.u
                    && a.w == b.w
                    && a.status == b.status
                    && a.relaxed == b.relaxed
                    && a.gamma_1.to_bits() == b.gamma_1.to_bits()
                    && a.predicted_next == b.predicted_next
            })
    }
}

/// Measure, solve, sample, step; repeated `steps` times.
///
/// `sampler = None` simulates the plant without disturbances.
pub fn run_closed_loop(
    controller: &mut Controller,
    sampler: Option<&DisturbanceSampler>,
    x0: &DVector<f64>,
    steps: usize,
    rng: &mut SimRng,
) -> Result<ClosedLoopRecord> {
    if steps == 0 {
        return config_err("closed-loop simulation needs at least one step");
    }
    let system = controller.system().clone();
    if x0.len() != system.state_dim() {
        return config_err(format!("x0 must have length {}", system.state_dim()));
    }
    let q = system.disturbance_dim();
    let mut states = Vec::with_capacity(steps + 1);
    let mut violations = Vec::with_capacity(steps + 1);
    let mut records = Vec::with_capacity(steps);
    let mut x = x0.clone();
    states.push(x.clone());
    violations.push(controller.monitored_constraints().check_violation(&x));
    for _ in 0..steps {
        let outcome = controller.control_step(&x)?;
        let w = match sampler {
            Some(s) => s.sample(rng),
            None => DVector::zeros(q),
        };
        x = system.step(&x, &outcome.u, &w)?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("closed-loop state diverged".into()));
        }
        violations.push(controller.monitored_constraints().check_violation(&x));
        states.push(x.clone());
        records.push(StepRecord {
            u: outcome.u,
            w,
            status: outcome.status,
            relaxed: outcome.relaxed,
            gamma_1: controller.first_margin(),
            predicted_next: outcome.predicted_next,
            iterations: outcome.iterations,
            solve_time: outcome.solve_time,
        });
    }
    Ok(ClosedLoopRecord { mode: controller.mode(), seed: None, states, violations, steps: records })
}

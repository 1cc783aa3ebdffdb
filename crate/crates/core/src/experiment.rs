//! Monte Carlo campaigns and tightening-factor tables.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::chance::{cantelli_factor, gaussian_factor, RiskParameter};
use crate::controller::{ClosedLoopRecord, ClosedLoopSetup, ControllerMode};
use crate::error::{config_err, Result};

/// A step is "at risk" when its predicted nominal successor lies within
/// `AT_RISK_FACTOR · γ_1` of the first constraint boundary.
pub const AT_RISK_FACTOR: f64 = 2.0;

/// Outcome of one trial, reduced to what the campaign statistics need.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub states: Vec<DVector<f64>>,
    /// Violation of the first half-space by `x_1 … x_T`.
    pub violated: Vec<bool>,
    /// Whether step `t` (producing `x_{t+1}`) was at risk.
    pub at_risk: Vec<bool>,
    pub relaxed_steps: usize,
}

impl TrialSummary {
    fn from_record(trial: usize, seed: u64, record: ClosedLoopRecord, g: &DVector<f64>, threshold: f64) -> Self {
        let violated = record.violations[1..].iter().map(|flags| flags[0]).collect();
        let at_risk = record.steps.iter().map(|s| g.dot(&s.predicted_next) >= threshold).collect();
        let relaxed_steps = record.steps.iter().filter(|s| s.relaxed).count();
        Self { trial, seed, states: record.states, violated, at_risk, relaxed_steps }
    }

    pub fn violations(&self) -> usize {
        self.violated.iter().filter(|v| **v).count()
    }

    pub fn at_risk_steps(&self) -> usize {
        self.at_risk.iter().filter(|v| **v).count()
    }

    pub fn at_risk_violations(&self) -> usize {
        self.violated.iter().zip(&self.at_risk).filter(|(v, r)| **v && **r).count()
    }

    pub fn max_state(&self, i: usize) -> f64 {
        self.states.iter().map(|x| x[i]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Empirical rate with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub events: usize,
    pub samples: usize,
    pub rate: f64,
    /// `√(r(1−r)/n)`.
    pub standard_error: f64,
}

impl RateEstimate {
    pub fn new(events: usize, samples: usize) -> Self {
        if samples == 0 {
            return Self { events, samples, rate: 0.0, standard_error: 0.0 };
        }
        let rate = events as f64 / samples as f64;
        let standard_error = (rate * (1.0 - rate) / samples as f64).sqrt();
        Self { events, samples, rate, standard_error }
    }

    /// `rate ≤ bound + k·SE`.
    pub fn within(&self, bound: f64, k: f64) -> bool {
        self.rate <= bound + k * self.standard_error
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignResult {
    pub mode: ControllerMode,
    pub risk: Option<RiskParameter>,
    pub trials: usize,
    pub steps: usize,
    pub seeds: Vec<u64>,
    /// Margin `γ_1` used for the at-risk classification.
    pub gamma_1: f64,
    /// Fraction of trials violating the first half-space at each `x_{t+1}`.
    pub per_step_violation_frequency: Vec<f64>,
    pub overall: RateEstimate,
    pub at_risk: RateEstimate,
    pub mean_trajectory: Vec<DVector<f64>>,
    pub max_trajectory: Vec<DVector<f64>>,
    pub relaxed_steps: usize,
    pub per_trial: Vec<TrialSummary>,
}

impl CampaignResult {
    /// Largest first state component over all trials and steps.
    pub fn max_x1(&self) -> f64 {
        self.max_trajectory.iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs `trials` closed loops; trial `i` uses seed `base_seed + i`.
///
/// Trials run in parallel and are reduced in trial order, so the result does
/// not depend on scheduling.
pub fn run_campaign(
    setup: &ClosedLoopSetup,
    x0: &DVector<f64>,
    steps: usize,
    trials: usize,
    base_seed: u64,
) -> Result<CampaignResult> {
    if trials == 0 {
        return config_err("a campaign needs at least one trial");
    }
    if steps == 0 {
        return config_err("a campaign needs at least one step per trial");
    }
    let controller = &setup.controller;
    let Some(first) = controller.monitored_constraints().state_halfspaces().first().cloned() else {
        return config_err("violation statistics need at least one state half-space");
    };
    let gamma_1 = controller.first_margin();
    let threshold = first.h - AT_RISK_FACTOR * gamma_1 - 1e-9;

    let per_trial = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = base_seed.wrapping_add(trial as u64);
            let record = setup.run(x0, steps, seed)?;
            Ok(TrialSummary::from_record(trial, seed, record, &first.g, threshold))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_step_counts = vec![0usize; steps];
    let n = x0.len();
    let mut sum = vec![DVector::<f64>::zeros(n); steps + 1];
    let mut max = vec![DVector::from_element(n, f64::NEG_INFINITY); steps + 1];
    let (mut violations, mut risk_steps, mut risk_violations, mut relaxed_steps) = (0, 0, 0, 0);
    for summary in &per_trial {
        for (t, v) in summary.violated.iter().enumerate() {
            per_step_counts[t] += usize::from(*v);
        }
        for (t, x) in summary.states.iter().enumerate() {
            sum[t] += x;
            max[t] = max[t].zip_map(x, f64::max);
        }
        violations += summary.violations();
        risk_steps += summary.at_risk_steps();
        risk_violations += summary.at_risk_violations();
        relaxed_steps += summary.relaxed_steps;
    }

    Ok(CampaignResult {
        mode: controller.mode(),
        risk: controller.settings().risk.filter(|_| controller.mode().is_stochastic()),
        trials,
        steps,
        seeds: per_trial.iter().map(|t| t.seed).collect(),
        gamma_1,
        per_step_violation_frequency: per_step_counts.iter().map(|c| *c as f64 / trials as f64).collect(),
        overall: RateEstimate::new(violations, trials * steps),
        at_risk: RateEstimate::new(risk_violations, risk_steps),
        mean_trajectory: sum.into_iter().map(|s| s / trials as f64).collect(),
        max_trajectory: max,
        relaxed_steps,
        per_trial,
    })
}

/// Unit-variance tightening factors at one risk level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TighteningRow {
    pub p: f64,
    /// `√2 · erf⁻¹(2p − 1)`.
    pub gaussian_factor: f64,
    /// `√(p / (1 − p))`.
    pub cantelli_factor: f64,
}

/// Both tightening factors on a grid of risk parameters in `[0.5, 1)`.
pub fn tightening_comparison(p_grid: &[f64]) -> Result<Vec<TighteningRow>> {
    p_grid
        .iter()
        .map(|&p| {
            let risk = RiskParameter::new(p)?;
            Ok(TighteningRow { p, gaussian_factor: gaussian_factor(risk)?, cantelli_factor: cantelli_factor(risk) })
        })
        .collect()
}

/// `points` evenly spaced values from `pmin` to `pmax` inclusive.
pub fn linear_grid(pmin: f64, pmax: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || pmin.is_nan() || pmax.is_nan() || pmin > pmax {
        return config_err("grid needs points >= 1 and pmin <= pmax");
    }
    if points == 1 {
        return Ok(vec![pmin]);
    }
    let step = (pmax - pmin) / (points - 1) as f64;
    Ok((0..points).map(|i| if i + 1 == points { pmax } else { pmin + step * i as f64 }).collect())
}

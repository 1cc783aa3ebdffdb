mod common;

use common::{noiseless_plant, scenario, setup, zero_noise, X1_LIMIT};
use nalgebra::{DMatrix, DVector};
use smpc::chance::{gaussian_factor, RiskParameter};
use smpc::cli::RunConfig;
use smpc::controller::ControllerMode;
use smpc::experiment::run_campaign;
use smpc::model::{seeded_rng, DisturbanceModel, DisturbanceSampler};

#[test]
fn every_mode_is_deterministic() {
    let sc = scenario(0.8);
    for mode in ControllerMode::ALL {
        let s = setup(&sc, mode);
        let a = s.run(&sc.x0, 60, 3).unwrap();
        let b = s.run(&sc.x0, 60, 3).unwrap();
        assert!(a.same_trajectory(&b), "{mode}");
        let c = s.run(&sc.x0, 60, 4).unwrap();
        assert!(!a.same_trajectory(&c), "{mode}");
    }
}

#[test]
fn every_mode_regulates_the_noiseless_plant() {
    let sc = noiseless_plant(0.8);
    for mode in ControllerMode::ALL {
        let record = setup(&sc, mode).run(&sc.x0, 200, 0).unwrap();
        assert!(record.final_state().norm() <= 1e-2, "{mode}: {}", record.final_state());
        assert!(record.steps.iter().all(|s| !s.relaxed), "{mode}");
    }
}

#[test]
fn inputs_respect_bounds_under_noise() {
    let sc = scenario(0.9);
    for mode in ControllerMode::ALL {
        let record = setup(&sc, mode).run(&sc.x0, 100, 21).unwrap();
        for step in &record.steps {
            assert!(step.u[0].abs() <= 0.2 + 1e-9, "{mode}: u = {}", step.u[0]);
        }
    }
}

#[test]
fn unconstrained_nominal_overshoots() {
    let sc = zero_noise(0.8);
    let free = setup(&sc, ControllerMode::NominalNoStateConstraint).run(&sc.x0, 200, 0).unwrap();
    assert!(free.max_state(0) > X1_LIMIT);
    // Violations are still reported against the original constraint.
    assert!(free.violations.iter().any(|v| v[0]));
    let constrained = setup(&sc, ControllerMode::NominalWithStateConstraint).run(&sc.x0, 200, 0).unwrap();
    assert!(constrained.max_state(0) <= X1_LIMIT + 1e-6);
}

#[test]
fn noiseless_margin_is_kept() {
    let sc = noiseless_plant(0.8);
    let c = setup(&sc, ControllerMode::SmpcGaussian);
    let gamma_1 = c.controller.first_margin();
    assert!((gamma_1 - 0.08f64.sqrt() * gaussian_factor(RiskParameter::new(0.8).unwrap()).unwrap()).abs() < 1e-12);
    let record = c.run(&sc.x0, 200, 0).unwrap();
    assert!(record.max_state(0) <= X1_LIMIT - gamma_1 + 1e-6);
    let cantelli = setup(&sc, ControllerMode::SmpcCantelli);
    // x0 itself already lies inside the Cantelli margin.
    let record = cantelli.run(&sc.x0, 200, 0).unwrap();
    let max_after_start = record.states[1..].iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max);
    assert!(max_after_start <= X1_LIMIT - cantelli.controller.first_margin() + 1e-6);
}

#[test]
fn campaign_is_reproducible_and_seeded_per_trial() {
    let sc = scenario(0.8);
    let s = setup(&sc, ControllerMode::SmpcGaussian);
    let a = run_campaign(&s, &sc.x0, 40, 16, 100).unwrap();
    let b = run_campaign(&s, &sc.x0, 40, 16, 100).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.seeds, (100..116).collect::<Vec<u64>>());
    let single = s.run(&sc.x0, 40, 105).unwrap();
    assert_eq!(a.per_trial[5].states, single.states);
    let flags: Vec<bool> = single.violations[1..].iter().map(|v| v[0]).collect();
    assert_eq!(a.per_trial[5].violated, flags);
}

#[test]
fn zero_noise_campaign_has_no_violations() {
    let sc = zero_noise(0.8);
    for mode in [ControllerMode::SmpcGaussian, ControllerMode::SmpcCantelli] {
        let result = run_campaign(&setup(&sc, mode), &sc.x0, 100, 5, 0).unwrap();
        assert_eq!(result.overall.events, 0);
        assert_eq!(result.overall.rate, 0.0);
        assert_eq!(result.gamma_1, 0.0);
    }
}

#[test]
fn cantelli_violates_no_more_than_gaussian() {
    let sc = scenario(0.8);
    let gauss = run_campaign(&setup(&sc, ControllerMode::SmpcGaussian), &sc.x0, 100, 200, 0).unwrap();
    let cantelli = run_campaign(&setup(&sc, ControllerMode::SmpcCantelli), &sc.x0, 100, 200, 0).unwrap();
    assert!(cantelli.overall.rate <= gauss.overall.rate);
    let nominal = run_campaign(&setup(&sc, ControllerMode::NominalWithStateConstraint), &sc.x0, 100, 200, 0).unwrap();
    assert!(gauss.overall.rate <= nominal.overall.rate);
}

#[test]
fn sampler_matches_covariance_and_mean() {
    let sigma = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.2, 0.3]);
    let mean = DVector::from_vec(vec![0.1, -0.2]);
    let cases = [
        (DisturbanceModel::GaussianZeroMean, DVector::zeros(2), sigma.clone()),
        (DisturbanceModel::GaussianWithMean, mean.clone(), sigma.clone()),
        (DisturbanceModel::GeneralZeroMean { variance_w: 0.4 }, DVector::zeros(2), DMatrix::identity(2, 2) * 0.4),
    ];
    for (model, mu, cov) in cases {
        let sampler = DisturbanceSampler::new(model, &cov, &mu).unwrap();
        let mut rng = seeded_rng(31);
        let n = 200_000;
        let draws: Vec<DVector<f64>> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let empirical_mean = draws.iter().fold(DVector::zeros(2), |acc, w| acc + w) / n as f64;
        let empirical_cov = draws.iter().fold(DMatrix::zeros(2, 2), |acc, w| {
            let c = w - &empirical_mean;
            acc + &c * c.transpose()
        }) / (n as f64 - 1.0);
        assert!((&empirical_mean - &mu).amax() < 0.01, "{model:?}");
        assert!((&empirical_cov - &cov).amax() < 0.01, "{model:?}: {empirical_cov}");
        if !model.is_gaussian() {
            let bound = (3.0f64 * 0.4).sqrt() + 1e-12;
            assert!(draws.iter().all(|w| w.amax() <= bound));
        }
    }
}

#[test]
fn mean_disturbance_shifts_margins() {
    let mut config = RunConfig::default();
    config.system.disturbance = smpc::cli::config::DisturbanceKind::GaussianMean;
    config.system.mean_w = vec![0.05, 0.0];
    let shifted = config.to_scenario().unwrap();
    let base = scenario(0.8);
    let a = setup(&base, ControllerMode::SmpcGaussian);
    let b = setup(&shifted, ControllerMode::SmpcGaussian);
    // μ_1 = D μ_w, so the first margin grows by gᵀμ_w.
    assert!((b.controller.first_margin() - a.controller.first_margin() - 0.05).abs() < 1e-12);
    let phi = &b.controller.synthesis().phi;
    let mut mu = DVector::zeros(2);
    for (k, (x, y)) in b.controller.margins()[0].iter().zip(&a.controller.margins()[0]).enumerate() {
        mu = phi * mu + DVector::from_vec(vec![0.05, 0.0]);
        assert!((x - y - mu[0]).abs() < 1e-12, "k = {}", k + 1);
    }
}

#[test]
fn relaxation_keeps_the_loop_running() {
    // Start beyond the constraint: the tightened problem is infeasible at first.
    let mut config = RunConfig::default();
    config.mpc.x0 = vec![4.0, 5.0];
    let sc = config.to_scenario().unwrap();
    let record = setup(&sc, ControllerMode::SmpcGaussian).run(&sc.x0, 50, 1).unwrap();
    assert!(record.steps[0].relaxed);
    assert!(record.steps.iter().all(|s| s.u[0].abs() <= 0.2 + 1e-9));
}

#[test]
fn higher_risk_parameter_violates_less() {
    let low = scenario(0.8);
    let high = scenario(0.95);
    let a = run_campaign(&setup(&low, ControllerMode::SmpcGaussian), &low.x0, 100, 500, 0).unwrap();
    let b = run_campaign(&setup(&high, ControllerMode::SmpcGaussian), &high.x0, 100, 500, 0).unwrap();
    assert!(a.overall.within(0.2, 3.0));
    assert!(b.overall.rate <= a.overall.rate);
}

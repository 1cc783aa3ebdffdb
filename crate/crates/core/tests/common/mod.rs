#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use smpc::cli::{RunConfig, Scenario};
use smpc::controller::{ClosedLoopSetup, ControllerMode};

pub const X1_LIMIT: f64 = 2.8;

/// Reference scenario with the given risk level.
pub fn scenario(p: f64) -> Scenario {
    let mut config = RunConfig::default();
    config.risk.p = Some(p);
    config.to_scenario().unwrap()
}

/// Reference scenario with the plant noise switched off but the controller
/// still tightening for the nominal noise level.
pub fn noiseless_plant(p: f64) -> Scenario {
    let mut config = RunConfig::default();
    config.risk.p = Some(p);
    config.experiment.plant_noise = false;
    config.to_scenario().unwrap()
}

/// Reference scenario with Σ_w = 0.
pub fn zero_noise(p: f64) -> Scenario {
    let mut config = RunConfig::default();
    config.risk.p = Some(p);
    config.system.sigma_w = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    config.to_scenario().unwrap()
}

pub fn setup(scenario: &Scenario, mode: ControllerMode) -> ClosedLoopSetup {
    scenario.setup(mode).unwrap()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

pub fn random_vector<R: Rng>(rng: &mut R, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

/// Random symmetric positive definite matrix with eigenvalues at least `floor`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, floor: f64) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    &m * m.transpose() + DMatrix::identity(n, n) * floor
}

/// Maclaurin series of erf with a fixed number of terms.
pub fn erf_series(x: f64, terms: usize) -> f64 {
    let mut sum = 0.0;
    let mut power = x;
    let mut factorial = 1.0;
    for n in 0..terms {
        if n > 0 {
            factorial *= n as f64;
            power *= x * x;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * power / (factorial * (2 * n + 1) as f64);
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

/// Root of a monotone increasing `f` on `[lo, hi]` by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Standard normal CDF from libm's erfc.
pub fn phi_oracle(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Grid search for a 2-variable QP over `[-1, 1]²`: a 1e-3 scan of the box,
/// then a 1e-5 scan of the window around the coarse minimizer.
pub fn grid_minimum(qp: &smpc::ocp::QuadraticProgram) -> (f64, [f64; 2]) {
    let rows: Vec<(f64, f64, f64)> = (0..qp.rows()).map(|r| (qp.g[(r, 0)], qp.g[(r, 1)], qp.b[r])).collect();
    let (h, f) = (&qp.h, &qp.f);
    let scan = |lo: [f64; 2], step: f64, count: usize| {
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=count {
            let z0 = lo[0] + step * i as f64;
            for j in 0..=count {
                let z1 = lo[1] + step * j as f64;
                if rows.iter().any(|(g0, g1, b)| g0 * z0 + g1 * z1 > *b) {
                    continue;
                }
                let obj = 0.5 * (h[(0, 0)] * z0 * z0 + 2.0 * h[(0, 1)] * z0 * z1 + h[(1, 1)] * z1 * z1)
                    + f[0] * z0
                    + f[1] * z1;
                if obj < best.0 {
                    best = (obj, [z0, z1]);
                }
            }
        }
        best
    };
    let coarse = scan([-1.0, -1.0], 1e-3, 2000);
    let window = 5e-3;
    let fine = scan([coarse.1[0] - window, coarse.1[1] - window], 1e-5, 1000);
    if fine.0 < coarse.0 {
        fine
    } else {
        coarse
    }
}

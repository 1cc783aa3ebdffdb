//! Stochastic model predictive control for discrete-time linear systems with
//! additive disturbances.
//!
//! The pipeline is:
//!
//! 1. [`synthesis`] computes an LQR feedback `K`, the closed loop `Φ = A − BK`
//!    and the predicted error covariances `Σᵉ_k`.
//! 2. [`chance`] turns each covariance into a constraint-tightening margin
//!    `γ_k`, either exactly for Gaussian noise or via Cantelli's inequality for
//!    arbitrary zero-mean noise.
//! 3. [`ocp`] condenses the finite-horizon problem into a dense QP and solves
//!    it with an active-set method.
//! 4. [`controller`] runs the receding-horizon loop against the true plant and
//!    [`experiment`] aggregates Monte Carlo violation statistics.
//!
//! Sign convention: the applied input is `u = −K x + v`, so the closed loop is
//! `A − B K`.

pub mod chance;
pub mod cli;
pub mod controller;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod ocp;
pub mod synthesis;

pub use error::{Error, Result};

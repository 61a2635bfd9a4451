//! Monte Carlo simulation of diffusions stopped at the boundary of
//! time-dependent domains with the Euler scheme.
//!
//! Discrete monitoring misses the exits that happen between grid times, which
//! biases estimates by `O(√Δ)`. Stopping the scheme instead at the exit of the
//! shrunken domain
//!
//! ```text
//! D^Δ_t = { x ∈ D_t : F(t, x) > c0 √Δ |∇F σ(t, x)| },   c0 = -ζ(1/2)/√(2π) ≈ 0.5826
//! ```
//!
//! removes that leading term. The crate provides the geometry, the Euler
//! stepping with reproducible noise, the stopped-path simulation, the
//! Feynman–Kac estimators, the limit overshoot law behind `c0`, and the
//! preset experiments used to check the rates.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exit_sim;
pub mod experiments;
pub mod feynman_kac;
pub mod geometry;
pub mod noise;
pub mod output;
pub mod overshoot;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
pub use exit_sim::{
    overshoot_histogram, simulate_paired, simulate_until_exit, Coefficients, ExitKind, ExitRecord,
    PairedExit, StoppingMode, DEFAULT_MAX_STEPS,
};
pub use feynman_kac::{
    boundary_payoff_section6, exact_solution_section6, monte_carlo_estimate, monte_carlo_paired,
    payoff, section6_setup, simulate_records, source_section6, EstimateReport, FeynmanKacProblem,
    McSettings,
};
pub use geometry::{DomainKind, Horizon, TimeSpaceDomain};
pub use noise::{GaussianSource, NoiseStream, ScriptedNoise};
pub use overshoot::{
    c0_analytic, ladder_moments, limit_overshoot_cdf, sample_ladder_height, LadderMoments,
    LadderSample, LimitOvershootLaw,
};
pub use sde::SdeModel;
pub use stats::{ks_distance, EmpiricalCdf};

/// `-ζ(1/2) / √(2π)`, equal to [`overshoot::c0_analytic`].
pub const C0: f64 = 0.582_597_157_939_010_7;

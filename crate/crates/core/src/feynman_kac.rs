//! Monte Carlo estimation of stopped Feynman–Kac functionals
//!
//! ```text
//! V = g(τ ∧ T, X_{τ ∧ T}) Z_{τ ∧ T} + ∫_0^{τ ∧ T} Z_s f(s, X_s) ds,   Z_s = exp(-∫_0^s k(r, X_r) dr)
//! ```
//!
//! with the Euler scheme stopped at its plain or shifted discrete exit. On an
//! open horizon (stationary problems) only boundary exits stop the path.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exit_sim::{
    simulate_paired, simulate_until_exit, Coefficients, ExitRecord, StoppingMode, DEFAULT_MAX_STEPS,
};
use crate::geometry::{Horizon, ScalarField, TimeSpaceDomain};
use crate::noise::NoiseStream;
use crate::sde::SdeModel;
use crate::stats::{mean_and_std, CompensatedSum};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Clone)]
pub struct FeynmanKacProblem {
    /// `g(t, x)`, evaluated at the raw exit position (no projection).
    pub payoff: ScalarField,
    pub coefficients: Coefficients,
    pub start: Vec<f64>,
}

impl fmt::Debug for FeynmanKacProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeynmanKacProblem")
            .field("coefficients", &self.coefficients)
            .field("start", &self.start)
            .finish_non_exhaustive()
    }
}

impl FeynmanKacProblem {
    pub fn new(payoff: ScalarField, start: Vec<f64>) -> Self {
        Self {
            payoff,
            coefficients: Coefficients::default(),
            start,
        }
    }

    pub fn with_source(mut self, source: ScalarField) -> Self {
        self.coefficients.source = Some(source);
        self
    }

    pub fn with_potential(mut self, potential: ScalarField) -> Self {
        self.coefficients.potential = Some(potential);
        self
    }
}

/// `g(exit) · Z(exit) + Σ Z f Δ` for one stopped path.
pub fn payoff(record: &ExitRecord, problem: &FeynmanKacProblem) -> f64 {
    (problem.payoff)(record.exit_time, &record.exit_position) * record.discount_at_exit
        + record.path_functional_f
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_paths: u64,
    pub delta: f64,
    pub mode: StoppingMode,
    pub side_exit_fraction: f64,
    /// Mean of `Δ^{-1/2} F⁻` over side exits; NaN without side exits.
    pub mean_normalized_overshoot: f64,
}

impl EstimateReport {
    pub const CSV_HEADER: &'static str =
        "mode,delta,n,mean,stderr,ci_low,ci_high,side_exit_fraction,mean_norm_overshoot";

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.mode.to_string(),
            fmt_f64(self.delta),
            self.n_paths.to_string(),
            fmt_f64(self.mean),
            fmt_f64(self.std_error),
            fmt_f64(self.ci_low),
            fmt_f64(self.ci_high),
            fmt_f64(self.side_exit_fraction),
            fmt_f64(self.mean_normalized_overshoot),
        ]
    }

    /// Half-width of the 95% confidence interval.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>7} delta={:<8} n={:<8} mean={:.4} +/- {:.4} (se {:.2e}) side exits {:.1}%",
            self.mode,
            self.delta,
            self.n_paths,
            self.mean,
            self.half_width(),
            self.std_error,
            100.0 * self.side_exit_fraction,
        )?;
        if self.mean_normalized_overshoot.is_finite() {
            write!(
                f,
                ", mean norm. overshoot {:.4}",
                self.mean_normalized_overshoot
            )?;
        }
        Ok(())
    }
}

/// Shortest round-trip representation, stable across platforms.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Monte Carlo settings shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSettings {
    pub n_paths: u64,
    pub seed: u64,
    /// Step budget for open-horizon paths.
    pub max_steps: u64,
}

impl McSettings {
    pub fn new(n_paths: u64, seed: u64) -> Self {
        Self {
            n_paths,
            seed,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct PathOutcome {
    value: f64,
    side: bool,
    normalized_overshoot: f64,
}

impl PathOutcome {
    fn from_record(record: &ExitRecord, problem: &FeynmanKacProblem) -> Self {
        Self {
            value: payoff(record, problem),
            side: record.is_side_exit(),
            normalized_overshoot: record.normalized_overshoot,
        }
    }
}

fn check_problem(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    delta: f64,
    settings: &McSettings,
) -> Result<()> {
    if settings.n_paths < 2 {
        return Err(Error::invalid("at least two paths are needed"));
    }
    if domain.horizon() == Horizon::Open && !model.time_homogeneous() {
        return Err(Error::invalid(
            "an open horizon requires a time-homogeneous model",
        ));
    }
    crate::exit_sim::steps_to_horizon(domain.horizon(), delta)?;
    Ok(())
}

/// Simulates paths `0..n_paths` and returns their exit records in index order.
/// A shifted-mode start outside `D^Δ_0` stops every path at time zero.
pub fn simulate_records(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    problem: &FeynmanKacProblem,
    delta: f64,
    mode: StoppingMode,
    settings: McSettings,
) -> Result<Vec<ExitRecord>> {
    check_problem(model, domain, delta, &settings)?;
    (0..settings.n_paths)
        .into_par_iter()
        .map(|i| simulate_one(model, domain, problem, delta, mode, settings, i))
        .collect()
}

fn simulate_one(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    problem: &FeynmanKacProblem,
    delta: f64,
    mode: StoppingMode,
    settings: McSettings,
    path: u64,
) -> Result<ExitRecord> {
    match simulate_until_exit(
        model,
        domain,
        &problem.coefficients,
        &problem.start,
        delta,
        mode,
        NoiseStream::new(settings.seed, path),
        settings.max_steps,
    ) {
        Err(Error::StartOutsideDomain { .. })
            if mode == StoppingMode::Shifted
                && domain.signed_distance(0.0, &problem.start) > 0.0 =>
        {
            Ok(ExitRecord::immediate(&problem.start, domain))
        }
        other => other,
    }
}

/// Mean of the stopped functional over `n_paths` independent paths with a
/// 95% normal confidence interval. Paths are addressed `(seed, index)` and
/// aggregated in index order, so the report is bit-identical for any number
/// of worker threads.
pub fn monte_carlo_estimate(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    problem: &FeynmanKacProblem,
    delta: f64,
    mode: StoppingMode,
    settings: McSettings,
) -> Result<EstimateReport> {
    check_problem(model, domain, delta, &settings)?;
    let outcomes: Vec<PathOutcome> = (0..settings.n_paths)
        .into_par_iter()
        .map(|i| {
            simulate_one(model, domain, problem, delta, mode, settings, i)
                .map(|r| PathOutcome::from_record(&r, problem))
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(&outcomes, delta, mode))
}

/// Plain and shifted estimates from the same paths (common random numbers).
/// Equal to two [`monte_carlo_estimate`] calls with the same settings.
pub fn monte_carlo_paired(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    problem: &FeynmanKacProblem,
    delta: f64,
    settings: McSettings,
) -> Result<(EstimateReport, EstimateReport)> {
    check_problem(model, domain, delta, &settings)?;
    let pairs: Vec<(PathOutcome, PathOutcome)> = (0..settings.n_paths)
        .into_par_iter()
        .map(|i| {
            let paired = simulate_paired(
                model,
                domain,
                &problem.coefficients,
                &problem.start,
                delta,
                NoiseStream::new(settings.seed, i),
                settings.max_steps,
            )?;
            let shifted = paired
                .shifted
                .unwrap_or_else(|| ExitRecord::immediate(&problem.start, domain));
            Ok((
                PathOutcome::from_record(&paired.plain, problem),
                PathOutcome::from_record(&shifted, problem),
            ))
        })
        .collect::<Result<_>>()?;
    let (plain, shifted): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok((
        aggregate(&plain, delta, StoppingMode::Plain),
        aggregate(&shifted, delta, StoppingMode::Shifted),
    ))
}

fn aggregate(outcomes: &[PathOutcome], delta: f64, mode: StoppingMode) -> EstimateReport {
    let n = outcomes.len();
    let values: Vec<f64> = outcomes.iter().map(|o| o.value).collect();
    let (mean, std) = mean_and_std(&values);
    let std_error = std / (n as f64).sqrt();
    let mut overshoot = CompensatedSum::default();
    let mut sides = 0u64;
    for o in outcomes.iter().filter(|o| o.side) {
        sides += 1;
        overshoot.add(o.normalized_overshoot);
    }
    EstimateReport {
        mean,
        std_error,
        ci_low: mean - Z_95 * std_error,
        ci_high: mean + Z_95 * std_error,
        n_paths: n as u64,
        delta,
        mode,
        side_exit_fraction: sides as f64 / n as f64,
        mean_normalized_overshoot: if sides > 0 {
            overshoot.value() / sides as f64
        } else {
            f64::NAN
        },
    }
}

/// `u(x) = x1 x2 x3`, the closed-form solution of the 3-D benchmark.
pub fn exact_solution_section6(x: &[f64]) -> f64 {
    x[0] * x[1] * x[2]
}

/// Source `f = -L u` for `u = x1 x2 x3` under [`SdeModel::section6`].
pub fn source_section6(x: &[f64]) -> f64 {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let s1 = (1.0 + x1.abs()).sqrt();
    let s2 = (1.0 + x2.abs()).sqrt();
    let s3 = (1.0 + x3.abs()).sqrt();
    let transport = x2 * x2 * x3 + x3 * x3 * x1 + x1 * x1 * x2;
    let diffusive = 0.5 * (x3 * s1 * s3 + x1 * 0.75f64.sqrt() * s1 * s2);
    -(transport + diffusive)
}

/// Boundary data of the 3-D benchmark: `u` evaluated at the radial projection
/// of `x` onto the sphere of radius 2, so `g(x) = u(2x/|x|)`. This agrees with
/// `u` on the sphere and is constant along rays outside it, which is what the
/// overshoot of a stopped Euler path actually sees.
pub fn boundary_payoff_section6(x: &[f64]) -> f64 {
    let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    if r == 0.0 {
        return 0.0;
    }
    let s = 2.0 / r;
    s * s * s * exact_solution_section6(x)
}

/// The stationary 3-D benchmark: model, `B(0, 2)` on an open horizon, and the
/// problem with `g` from [`boundary_payoff_section6`], `f = -L u`, `k = 0`
/// started at `start`.
pub fn section6_setup(start: [f64; 3]) -> (SdeModel, TimeSpaceDomain, FeynmanKacProblem) {
    let domain = TimeSpaceDomain::ball(vec![0.0; 3], 2.0, Horizon::Open).expect("valid ball");
    let problem = FeynmanKacProblem::new(
        Arc::new(|_, x: &[f64]| boundary_payoff_section6(x)),
        start.to_vec(),
    )
    .with_source(Arc::new(|_, x: &[f64]| source_section6(x)));
    (SdeModel::section6(), domain, problem)
}

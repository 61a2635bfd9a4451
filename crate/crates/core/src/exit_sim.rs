//! Euler paths stopped at the first grid time outside the domain.
//!
//! The exit test uses either the true signed distance (`Plain`) or the
//! shifted one (`Shifted`), which stops the path once it leaves the shrunken
//! domain `D^Δ_t`. Overshoots are always measured against the true boundary.

use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{Horizon, ScalarField, TimeSpaceDomain};
use crate::noise::GaussianSource;
use crate::sde::{apply_euler, SdeModel};
use crate::stats::EmpiricalCdf;

/// Step budget for open-horizon runs.
pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StoppingMode {
    Plain,
    Shifted,
}

impl StoppingMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            StoppingMode::Plain => "plain",
            StoppingMode::Shifted => "shifted",
        }
    }
}

impl fmt::Display for StoppingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StoppingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(StoppingMode::Plain),
            "shifted" => Ok(StoppingMode::Shifted),
            other => Err(Error::invalid(format!(
                "unknown stopping mode {other:?} (expected plain or shifted)"
            ))),
        }
    }
}

/// Source `f` and potential `k` of the path functional; `None` means zero.
#[derive(Clone, Default)]
pub struct Coefficients {
    pub source: Option<ScalarField>,
    pub potential: Option<ScalarField>,
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficients")
            .field("source", &self.source.is_some())
            .field("potential", &self.potential.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Left the (plain or shifted) domain at a grid time.
    Side,
    /// Reached the finite horizon inside the domain.
    Matured,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitRecord {
    pub kind: ExitKind,
    /// Index `i` of the stopping grid time `t_i`.
    pub exit_step: u64,
    pub exit_time: f64,
    pub exit_position: Vec<f64>,
    /// `F⁻` at the exit point relative to the true boundary; zero when matured.
    pub overshoot: f64,
    /// `overshoot / √Δ`.
    pub normalized_overshoot: f64,
    /// Raw `-F(exit_time, exit_position)`. Negative when a shifted-mode path
    /// stops while still inside the true domain.
    pub boundary_offset: f64,
    /// Left-point sum `Σ Z_{t_i} f(t_i, X_{t_i}) Δ` over the steps before exit.
    pub path_functional_f: f64,
    /// Discount `Z` at the exit time.
    pub discount_at_exit: f64,
}

impl ExitRecord {
    /// Record of a path stopped at time zero, used when the start point is
    /// already outside the shrunken domain.
    pub fn immediate(start: &[f64], domain: &TimeSpaceDomain) -> Self {
        let offset = -domain.signed_distance(0.0, start);
        Self {
            kind: ExitKind::Side,
            exit_step: 0,
            exit_time: 0.0,
            exit_position: start.to_vec(),
            overshoot: 0.0,
            normalized_overshoot: 0.0,
            boundary_offset: offset,
            path_functional_f: 0.0,
            discount_at_exit: 1.0,
        }
    }

    pub fn is_side_exit(&self) -> bool {
        self.kind == ExitKind::Side
    }
}

/// Number of grid steps to the horizon, checking that `Δ` divides `T`.
pub fn steps_to_horizon(horizon: Horizon, delta: f64) -> Result<Option<u64>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
    }
    match horizon {
        Horizon::Open => Ok(None),
        Horizon::Finite(t) => {
            let m = (t / delta).round();
            if m < 1.0 || (m * delta - t).abs() > 1e-9 * t.max(1.0) {
                return Err(Error::invalid(format!(
                    "delta={delta} does not divide the horizon T={t}"
                )));
            }
            Ok(Some(m as u64))
        }
    }
}

/// Simulates one Euler path from `start` until the first grid time
/// `t_i > 0` at which the mode's signed distance is `<= 0`, or until the
/// horizon. The start point is tested once and never re-tested.
#[allow(clippy::too_many_arguments)]
pub fn simulate_until_exit<G: GaussianSource>(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    coefficients: &Coefficients,
    start: &[f64],
    delta: f64,
    mode: StoppingMode,
    noise: G,
    max_steps: u64,
) -> Result<ExitRecord> {
    let mut watchers = [Watcher::new(mode)];
    run_path(
        model,
        domain,
        coefficients,
        start,
        delta,
        &mut watchers,
        noise,
        max_steps,
    )?;
    let [w] = watchers;
    w.into_record()
}

/// Plain and shifted exits of one path driven by the same increments.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedExit {
    pub plain: ExitRecord,
    /// `None` when the start point is outside the shrunken domain.
    pub shifted: Option<ExitRecord>,
}

/// Runs a single path and records both its plain and its shifted exit.
/// Identical to two calls of [`simulate_until_exit`] on equal streams, at
/// the cost of one.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paired<G: GaussianSource>(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    coefficients: &Coefficients,
    start: &[f64],
    delta: f64,
    noise: G,
    max_steps: u64,
) -> Result<PairedExit> {
    let mut watchers = [
        Watcher::new(StoppingMode::Plain),
        Watcher::new(StoppingMode::Shifted),
    ];
    run_path(
        model,
        domain,
        coefficients,
        start,
        delta,
        &mut watchers,
        noise,
        max_steps,
    )?;
    let [plain, shifted] = watchers;
    let shifted = match shifted.into_record() {
        Ok(r) => Some(r),
        Err(Error::StartOutsideDomain { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(PairedExit {
        plain: plain.into_record()?,
        shifted,
    })
}

struct Watcher {
    mode: StoppingMode,
    outcome: Option<Result<ExitRecord>>,
}

impl Watcher {
    fn new(mode: StoppingMode) -> Self {
        Self {
            mode,
            outcome: None,
        }
    }

    fn into_record(self) -> Result<ExitRecord> {
        self.outcome.expect("path ran until every watcher stopped")
    }
}

struct Scratch {
    drift: Vec<f64>,
    sigma: Vec<f64>,
    dw: Vec<f64>,
    grad: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn run_path<G: GaussianSource>(
    model: &SdeModel,
    domain: &TimeSpaceDomain,
    coefficients: &Coefficients,
    start: &[f64],
    delta: f64,
    watchers: &mut [Watcher],
    mut noise: G,
    max_steps: u64,
) -> Result<()> {
    let d = model.dim_state();
    let dn = model.dim_noise();
    if start.len() != d {
        return Err(Error::invalid(format!(
            "start point has dimension {}, model has {d}",
            start.len()
        )));
    }
    if let Some(dd) = domain.dim() {
        if dd != d {
            return Err(Error::invalid(format!(
                "domain dimension {dd} differs from model dimension {d}"
            )));
        }
    }
    let horizon = domain.horizon();
    let maturity_step = steps_to_horizon(horizon, delta)?;
    let sqrt_delta = delta.sqrt();
    let shift = crate::C0 * sqrt_delta;
    let mut s = Scratch {
        drift: vec![0.0; d],
        sigma: vec![0.0; d * dn],
        dw: vec![0.0; dn],
        grad: vec![0.0; d],
    };
    let mut x = start.to_vec();

    model.diffusion_into(0.0, &x, &mut s.sigma)?;
    let mut pending = 0;
    for w in watchers.iter_mut() {
        let dist = mode_distance(domain, w.mode, 0.0, &x, shift, dn, &mut s)?;
        if dist <= 0.0 {
            w.outcome = Some(Err(Error::StartOutsideDomain { distance: dist }));
        } else {
            pending += 1;
        }
    }
    if watchers
        .iter()
        .any(|w| w.mode == StoppingMode::Plain && w.outcome.is_some())
    {
        // Nothing to simulate if the true domain is not entered.
        pending = 0;
        for w in watchers.iter_mut() {
            w.outcome.get_or_insert(Err(Error::StartOutsideDomain {
                distance: domain.signed_distance(0.0, &x),
            }));
        }
    }

    let mut discount = 1.0;
    let mut f_sum = 0.0;
    let mut step: u64 = 0;
    while pending > 0 {
        let t = step as f64 * delta;
        if let Some(f) = &coefficients.source {
            f_sum += discount * f(t, &x) * delta;
        }
        if let Some(k) = &coefficients.potential {
            discount *= (-k(t, &x) * delta).exp();
        }
        model.drift_into(t, &x, &mut s.drift)?;
        noise.fill_scaled(sqrt_delta, &mut s.dw);
        apply_euler(&mut x, &s.drift, &s.sigma, &s.dw, delta);
        step += 1;

        let at_maturity = maturity_step == Some(step);
        let t_next = match (at_maturity, horizon) {
            (true, Horizon::Finite(big_t)) => big_t,
            _ => step as f64 * delta,
        };
        // σ at the new point serves both the shifted test and the next step.
        model.diffusion_into(t_next, &x, &mut s.sigma)?;

        for w in watchers.iter_mut().filter(|w| w.outcome.is_none()) {
            let dist = mode_distance(domain, w.mode, t_next, &x, shift, dn, &mut s)?;
            let kind = if dist <= 0.0 {
                ExitKind::Side
            } else if at_maturity {
                ExitKind::Matured
            } else {
                continue;
            };
            let offset = -domain.signed_distance(t_next, &x);
            let overshoot = match kind {
                ExitKind::Side => offset.max(0.0),
                ExitKind::Matured => 0.0,
            };
            w.outcome = Some(Ok(ExitRecord {
                kind,
                exit_step: step,
                exit_time: t_next,
                exit_position: x.clone(),
                overshoot,
                normalized_overshoot: overshoot / sqrt_delta,
                boundary_offset: offset,
                path_functional_f: f_sum,
                discount_at_exit: discount,
            }));
            pending -= 1;
        }
        if pending > 0 && maturity_step.is_none() && step >= max_steps {
            return Err(Error::MaxStepsExceeded { max_steps });
        }
    }
    Ok(())
}

#[inline]
fn mode_distance(
    domain: &TimeSpaceDomain,
    mode: StoppingMode,
    t: f64,
    x: &[f64],
    shift: f64,
    dim_noise: usize,
    s: &mut Scratch,
) -> Result<f64> {
    match mode {
        StoppingMode::Plain => Ok(domain.signed_distance(t, x)),
        StoppingMode::Shifted => {
            domain.shifted_distance_scaled(t, x, shift, &s.sigma, dim_noise, &mut s.grad)
        }
    }
}

/// Empirical distribution of the normalized overshoot `Δ^{-1/2} F⁻` over the
/// side exits in `records`.
pub fn overshoot_histogram<'a>(
    records: impl IntoIterator<Item = &'a ExitRecord>,
) -> Result<EmpiricalCdf> {
    let values: Vec<f64> = records
        .into_iter()
        .filter(|r| r.is_side_exit())
        .map(|r| r.normalized_overshoot)
        .collect();
    EmpiricalCdf::new(values).ok_or(Error::NoSideExits)
}

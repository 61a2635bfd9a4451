//! Preset experiments and convergence analysis.
//!
//! Presets cover the stationary 3-D benchmark in `B(0, 2)` (a 4³ grid of
//! start points or a single point), Brownian motion killed at a half-space
//! (hitting probability, known in closed form by reflection) and Brownian
//! motion in an interval with affinely moving ends (no closed form; compared
//! against a fine-step reference).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exit_sim::StoppingMode;
use crate::feynman_kac::{
    exact_solution_section6, monte_carlo_estimate, monte_carlo_paired, section6_setup,
    EstimateReport, FeynmanKacProblem, McSettings,
};
use crate::geometry::{Horizon, TimeSpaceDomain};
use crate::sde::SdeModel;
use crate::stats::normal_cdf;

/// Per-coordinate values of the benchmark start grid.
pub const SECTION6_GRID_VALUES: [f64; 4] = [-0.7, -0.3, 0.3, 0.7];
/// Step sizes of the benchmark tables.
pub const SECTION6_DELTAS: [f64; 3] = [0.1, 0.05, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentPreset {
    /// All 64 start points with coordinates in [`SECTION6_GRID_VALUES`].
    Section6Grid,
    Section6Point([f64; 3]),
    /// 1-D Brownian motion from `x0` stopped at `{x >= level}` before `horizon`;
    /// the functional is the hitting probability.
    HalfSpaceBm {
        x0: f64,
        level: f64,
        horizon: f64,
    },
    /// 1-D Brownian motion in `(a1 + b1 t, a2 + b2 t)`; the functional is the
    /// probability of leaving before `horizon`.
    MovingInterval1D {
        lower: (f64, f64),
        upper: (f64, f64),
        x0: f64,
        horizon: f64,
    },
}

impl ExperimentPreset {
    pub fn halfspace_default() -> Self {
        ExperimentPreset::HalfSpaceBm {
            x0: 0.0,
            level: 1.0,
            horizon: 1.0,
        }
    }

    pub fn moving_interval_default() -> Self {
        ExperimentPreset::MovingInterval1D {
            lower: (-1.0, -0.2),
            upper: (1.0, 0.1),
            x0: 0.0,
            horizon: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentPreset::Section6Grid => "section6-grid",
            ExperimentPreset::Section6Point(_) => "section6",
            ExperimentPreset::HalfSpaceBm { .. } => "halfspace-bm",
            ExperimentPreset::MovingInterval1D { .. } => "moving-interval",
        }
    }

    /// The concrete problems behind the preset, one per start point.
    pub fn cases(&self) -> Result<Vec<Case>> {
        match self {
            ExperimentPreset::Section6Grid => {
                let mut cases = Vec::with_capacity(64);
                for &a in &SECTION6_GRID_VALUES {
                    for &b in &SECTION6_GRID_VALUES {
                        for &c in &SECTION6_GRID_VALUES {
                            cases.push(section6_case([a, b, c]));
                        }
                    }
                }
                Ok(cases)
            }
            ExperimentPreset::Section6Point(x0) => {
                if x0.iter().map(|v| v * v).sum::<f64>() >= 4.0 {
                    return Err(Error::invalid("start point must lie inside B(0, 2)"));
                }
                Ok(vec![section6_case(*x0)])
            }
            &ExperimentPreset::HalfSpaceBm { x0, level, horizon } => {
                if x0 >= level {
                    return Err(Error::invalid("x0 must be below the level"));
                }
                let domain =
                    TimeSpaceDomain::half_space(vec![1.0], level, Horizon::Finite(horizon))?;
                let problem = hitting_problem(domain.clone(), vec![x0]);
                Ok(vec![Case {
                    x0: vec![x0],
                    model: SdeModel::brownian(1),
                    domain,
                    problem,
                    exact: Some(halfspace_hitting_probability(x0, level, horizon)),
                }])
            }
            &ExperimentPreset::MovingInterval1D {
                lower,
                upper,
                x0,
                horizon,
            } => {
                let domain =
                    TimeSpaceDomain::affine_interval(lower, upper, Horizon::Finite(horizon))?;
                if domain.signed_distance(0.0, &[x0]) <= 0.0 {
                    return Err(Error::invalid("x0 must lie inside the interval at t = 0"));
                }
                let problem = hitting_problem(domain.clone(), vec![x0]);
                Ok(vec![Case {
                    x0: vec![x0],
                    model: SdeModel::brownian(1),
                    domain,
                    problem,
                    exact: None,
                }])
            }
        }
    }
}

/// One start point of a preset with everything needed to simulate it.
#[derive(Debug, Clone)]
pub struct Case {
    pub x0: Vec<f64>,
    pub model: SdeModel,
    pub domain: TimeSpaceDomain,
    pub problem: FeynmanKacProblem,
    /// Closed-form value of the functional, when known.
    pub exact: Option<f64>,
}

impl Case {
    pub fn estimate(
        &self,
        delta: f64,
        mode: StoppingMode,
        settings: McSettings,
    ) -> Result<EstimateReport> {
        monte_carlo_estimate(
            &self.model,
            &self.domain,
            &self.problem,
            delta,
            mode,
            settings,
        )
    }

    /// Estimates for the requested modes; both modes share paths.
    pub fn estimate_modes(
        &self,
        delta: f64,
        modes: &[StoppingMode],
        settings: McSettings,
    ) -> Result<Vec<EstimateReport>> {
        let both = modes.contains(&StoppingMode::Plain) && modes.contains(&StoppingMode::Shifted);
        if both {
            let (plain, shifted) =
                monte_carlo_paired(&self.model, &self.domain, &self.problem, delta, settings)?;
            Ok(modes
                .iter()
                .map(|m| match m {
                    StoppingMode::Plain => plain.clone(),
                    StoppingMode::Shifted => shifted.clone(),
                })
                .collect())
        } else {
            modes
                .iter()
                .map(|&m| self.estimate(delta, m, settings))
                .collect()
        }
    }
}

fn section6_case(x0: [f64; 3]) -> Case {
    let (model, domain, problem) = section6_setup(x0);
    Case {
        x0: x0.to_vec(),
        model,
        domain,
        problem,
        exact: Some(exact_solution_section6(&x0)),
    }
}

/// `g = 1` on the side boundary and `1_{x ∉ D_T}` at maturity: the
/// functional is the probability of leaving the domain before the horizon.
pub fn hitting_problem(domain: TimeSpaceDomain, start: Vec<f64>) -> FeynmanKacProblem {
    let horizon = domain.horizon().maturity().unwrap_or(f64::INFINITY);
    FeynmanKacProblem::new(
        Arc::new(move |t, x: &[f64]| {
            if t < horizon || domain.signed_distance(t, x) <= 0.0 {
                1.0
            } else {
                0.0
            }
        }),
        start,
    )
}

/// `P(max_{s<=T} W_s >= level - x0) = 2 Φ(-(level - x0)/√T)` by reflection.
pub fn halfspace_hitting_probability(x0: f64, level: f64, horizon: f64) -> f64 {
    2.0 * normal_cdf(-(level - x0) / horizon.sqrt())
}

/// Target value against which errors are measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub value: f64,
    /// Zero for closed forms.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetRow {
    pub x0: Vec<f64>,
    pub report: EstimateReport,
    pub target: Option<Target>,
}

impl PresetRow {
    /// Signed error `estimate - target`.
    pub fn error(&self) -> Option<f64> {
        self.target.map(|t| self.report.mean - t.value)
    }

    pub fn abs_error(&self) -> Option<f64> {
        self.error().map(f64::abs)
    }

    pub fn rel_error(&self) -> Option<f64> {
        self.target
            .filter(|t| t.value != 0.0)
            .map(|t| (self.report.mean - t.value).abs() / t.value.abs())
    }

    /// Standard error of [`Self::error`], combining estimate and target.
    pub fn error_std(&self) -> Option<f64> {
        self.target
            .map(|t| self.report.std_error.hypot(t.std_error))
    }
}

/// Supremum of the errors over all start points for one `(Δ, mode)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SupRow {
    pub delta: f64,
    pub mode: StoppingMode,
    pub sup_abs_error: f64,
    pub sup_rel_error: f64,
    /// Start point where the absolute error is largest.
    pub argmax: Vec<f64>,
    /// Standard error of the estimate at `argmax`.
    pub std_error_at_argmax: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetTable {
    pub preset: String,
    pub rows: Vec<PresetRow>,
    pub sup: Vec<SupRow>,
}

impl PresetTable {
    pub fn sup_row(&self, delta: f64, mode: StoppingMode) -> Option<&SupRow> {
        self.sup.iter().find(|s| s.delta == delta && s.mode == mode)
    }

    pub fn rows_for(&self, delta: f64, mode: StoppingMode) -> impl Iterator<Item = &PresetRow> {
        self.rows
            .iter()
            .filter(move |r| r.report.delta == delta && r.report.mode == mode)
    }
}

/// What to run for a preset.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetRun {
    pub preset: ExperimentPreset,
    pub deltas: Vec<f64>,
    pub modes: Vec<StoppingMode>,
    pub n_paths: u64,
    /// Fine-step reference `(Δ_ref, n_ref)` for presets without closed form.
    pub reference: Option<(f64, u64)>,
}

/// Runs every `(x0, Δ, mode)` cell of the preset in deterministic order.
/// `on_row` sees each row as soon as it is computed, so callers can flush
/// partial results before a later cell fails.
pub fn run_preset(
    run: &PresetRun,
    seed: u64,
    mut on_row: impl FnMut(&PresetRow),
) -> Result<PresetTable> {
    if run.deltas.is_empty() || run.modes.is_empty() {
        return Err(Error::invalid(
            "at least one delta and one mode are required",
        ));
    }
    let cases = run.preset.cases()?;
    let settings = McSettings::new(run.n_paths, seed);
    let mut rows = Vec::new();
    for case in &cases {
        let target = match (case.exact, run.reference) {
            (Some(v), _) => Some(Target {
                value: v,
                std_error: 0.0,
            }),
            (None, Some((delta_ref, n_ref))) => {
                // Independent paths for the reference.
                Some(reference_solution(
                    case,
                    delta_ref,
                    n_ref,
                    seed ^ REFERENCE_SEED_SALT,
                )?)
            }
            (None, None) => None,
        };
        for &delta in &run.deltas {
            for report in case.estimate_modes(delta, &run.modes, settings)? {
                let row = PresetRow {
                    x0: case.x0.clone(),
                    report,
                    target,
                };
                on_row(&row);
                rows.push(row);
            }
        }
    }
    let mut sup = Vec::new();
    for &delta in &run.deltas {
        for &mode in &run.modes {
            let cell: Vec<&PresetRow> = rows
                .iter()
                .filter(|r| r.report.delta == delta && r.report.mode == mode)
                .collect();
            let Some(worst) = cell
                .iter()
                .filter(|r| r.abs_error().is_some())
                .max_by(|a, b| a.abs_error().unwrap().total_cmp(&b.abs_error().unwrap()))
            else {
                continue;
            };
            sup.push(SupRow {
                delta,
                mode,
                sup_abs_error: worst.abs_error().unwrap(),
                sup_rel_error: cell
                    .iter()
                    .filter_map(|r| r.rel_error())
                    .fold(0.0, f64::max),
                argmax: worst.x0.clone(),
                std_error_at_argmax: worst.report.std_error,
            });
        }
    }
    Ok(PresetTable {
        preset: run.preset.name().to_string(),
        rows,
        sup,
    })
}

const REFERENCE_SEED_SALT: u64 = 0x005E_ED0F_AEF0;

/// Shifted-mode estimate at a fine step `Δ_ref`, used as ground truth where
/// no closed form exists.
pub fn reference_solution(case: &Case, delta_ref: f64, n_ref: u64, seed: u64) -> Result<Target> {
    let r = case.estimate(
        delta_ref,
        StoppingMode::Shifted,
        McSettings::new(n_ref, seed),
    )?;
    Ok(Target {
        value: r.mean,
        std_error: r.std_error,
    })
}

/// Least-squares line through `(-ln Δ, -ln |error|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
}

pub fn fit_convergence_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::invalid("a slope fit needs at least two points"));
    }
    for &(delta, error) in points {
        if !(delta > 0.0) {
            return Err(Error::invalid(format!("delta must be > 0, got {delta}")));
        }
        if !(error > 0.0) {
            return Err(Error::NonPositiveError { delta, error });
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| -p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| -p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= f64::EPSILON * mx.abs().max(1.0) {
        return Err(Error::DegenerateFit);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit {
        slope,
        intercept: my - slope * mx,
    })
}

/// `(Δ, |error|)` pairs of `mode` whose error is at least twice its
/// standard error; noise-dominated errors would corrupt a log-log fit.
pub fn significant_errors(rows: &[PresetRow], mode: StoppingMode) -> Vec<(f64, f64)> {
    rows.iter()
        .filter(|r| r.report.mode == mode)
        .filter_map(|r| {
            let e = r.abs_error()?;
            let s = r.error_std()?;
            (e >= 2.0 * s).then_some((r.report.delta, e))
        })
        .collect()
}

/// Text layout of a preset table: one line per step size, plain and
/// shifted side by side.
pub fn format_summary(table: &PresetTable) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let mut deltas: Vec<f64> = table.rows.iter().map(|r| r.report.delta).collect();
    deltas.dedup();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    if !table.sup.is_empty() && table.rows.len() > 2 * deltas.len() {
        let _ = writeln!(
            out,
            "{}: supremum of the absolute error (relative error)",
            table.preset
        );
        let _ = writeln!(
            out,
            "{:>10} | {:>24} | {:>24}",
            "delta", "without correction", "corrected domain"
        );
        for &d in &deltas {
            let cell = |m| {
                table
                    .sup_row(d, m)
                    .map(|s| format!("{:.4} ({:.1}%)", s.sup_abs_error, 100.0 * s.sup_rel_error))
                    .unwrap_or_else(|| "-".into())
            };
            let _ = writeln!(
                out,
                "{:>10} | {:>24} | {:>24}",
                d,
                cell(StoppingMode::Plain),
                cell(StoppingMode::Shifted)
            );
        }
        return out;
    }
    let mut points: Vec<&Vec<f64>> = Vec::new();
    for r in &table.rows {
        if !points.contains(&&r.x0) {
            points.push(&r.x0);
        }
    }
    for x0 in points {
        let target = table
            .rows
            .iter()
            .find(|r| &r.x0 == x0)
            .and_then(|r| r.target);
        let _ = write!(out, "{}: estimate at x0={:?} (95% CI)", table.preset, x0);
        if let Some(t) = target {
            let _ = write!(out, ", target {:.4}", t.value);
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:>10} | {:>20} | {:>20}",
            "delta", "without correction", "corrected domain"
        );
        for &d in &deltas {
            let cell = |m| {
                table
                    .rows
                    .iter()
                    .find(|r| &r.x0 == x0 && r.report.delta == d && r.report.mode == m)
                    .map(|r| format!("{:.4} +/- {:.4}", r.report.mean, r.report.half_width()))
                    .unwrap_or_else(|| "-".into())
            };
            let _ = writeln!(
                out,
                "{:>10} | {:>20} | {:>20}",
                d,
                cell(StoppingMode::Plain),
                cell(StoppingMode::Shifted)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_laws() {
        let ds = [0.1, 0.05, 0.01, 0.001];
        let sqrt: Vec<_> = ds.iter().map(|&d: &f64| (d, d.sqrt())).collect();
        assert!((fit_convergence_slope(&sqrt).unwrap().slope - 0.5).abs() < 1e-12);
        let lin: Vec<_> = ds.iter().map(|&d| (d, 3.0 * d)).collect();
        let fit = fit_convergence_slope(&lin).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.intercept - -(3.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn slope_errors() {
        assert_eq!(
            fit_convergence_slope(&[(0.1, 0.2), (0.1, 0.3)]),
            Err(Error::DegenerateFit)
        );
        assert!(matches!(
            fit_convergence_slope(&[(0.1, 0.2), (0.01, 0.0)]),
            Err(Error::NonPositiveError { .. })
        ));
        assert!(fit_convergence_slope(&[(0.1, 0.2)]).is_err());
    }

    #[test]
    fn grid_points_inside_ball() {
        let cases = ExperimentPreset::Section6Grid.cases().unwrap();
        assert_eq!(cases.len(), 64);
        for c in &cases {
            let r2: f64 = c.x0.iter().map(|v| v * v).sum();
            assert!(r2.sqrt() <= (3.0 * 0.49f64).sqrt() + 1e-12);
            assert!(c.domain.signed_distance(0.0, &c.x0) > 0.7);
        }
    }

    #[test]
    fn halfspace_closed_form() {
        assert!((halfspace_hitting_probability(0.0, 1.0, 1.0) - 0.3173).abs() < 1e-4);
    }

    #[test]
    fn halfspace_reference_matches_exact() {
        let case = ExperimentPreset::halfspace_default()
            .cases()
            .unwrap()
            .remove(0);
        let exact = case.exact.unwrap();
        let r = reference_solution(&case, 1.0 / 1024.0, 20_000, 5).unwrap();
        assert!(
            (r.value - exact).abs() < 3.0 * r.std_error,
            "{r:?} vs {exact}"
        );
    }

    #[test]
    fn reference_is_seed_stable() {
        let case = ExperimentPreset::moving_interval_default()
            .cases()
            .unwrap()
            .remove(0);
        let a = reference_solution(&case, 1.0 / 256.0, 20_000, 1).unwrap();
        let b = reference_solution(&case, 1.0 / 256.0, 20_000, 2).unwrap();
        assert!((a.value - b.value).abs() < 3.0 * a.std_error.hypot(b.std_error));
    }

    #[test]
    fn moving_interval_reference_regression() {
        // Frozen from this oracle: Δ_ref = 1/2048, n = 10⁵, seed 2024.
        let case = ExperimentPreset::moving_interval_default()
            .cases()
            .unwrap()
            .remove(0);
        let r = reference_solution(&case, 1.0 / 2048.0, 100_000, 2024).unwrap();
        assert!((r.value - MOVING_INTERVAL_REFERENCE).abs() < 1e-12, "{r:?}");
    }

    const MOVING_INTERVAL_REFERENCE: f64 = 0.53952;

    #[test]
    fn plain_underestimates_hitting_probability() {
        let run = PresetRun {
            preset: ExperimentPreset::halfspace_default(),
            deltas: vec![1.0 / 16.0],
            modes: vec![StoppingMode::Plain, StoppingMode::Shifted],
            n_paths: 50_000,
            reference: None,
        };
        let table = run_preset(&run, 3, |_| {}).unwrap();
        let plain = table
            .rows_for(1.0 / 16.0, StoppingMode::Plain)
            .next()
            .unwrap();
        let shifted = table
            .rows_for(1.0 / 16.0, StoppingMode::Shifted)
            .next()
            .unwrap();
        assert!(plain.error().unwrap() < -3.0 * plain.error_std().unwrap());
        assert!(shifted.abs_error().unwrap() < plain.abs_error().unwrap());
        assert_eq!(table.sup.len(), 2);
    }

    #[test]
    fn summary_layout() {
        let run = PresetRun {
            preset: ExperimentPreset::Section6Point([-0.7, 0.3, 0.7]),
            deltas: vec![0.1],
            modes: vec![StoppingMode::Plain, StoppingMode::Shifted],
            n_paths: 1000,
            reference: None,
        };
        let table = run_preset(&run, 1, |_| {}).unwrap();
        let text = format_summary(&table);
        assert!(text.contains("target -0.1470"), "{text}");
        assert_eq!(text.lines().count(), 3);
    }
}

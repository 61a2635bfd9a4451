//! CSV and plot-data text formats.
//!
//! Every CSV starts with a `#` comment line carrying the crate version, the
//! seed and a hash of the run configuration, followed by the header row.

use std::fmt::Write;

use crate::exit_sim::{ExitKind, ExitRecord};
use crate::experiments::PresetRow;
use crate::feynman_kac::{fmt_f64, payoff, EstimateReport, FeynmanKacProblem};

pub const RESULTS_HEADER: &str =
    "preset,x0,delta,mode,n,mean,stderr,ci_low,ci_high,side_exit_fraction,mean_norm_overshoot";

pub fn provenance_comment(seed: u64, config_hash: &str) -> String {
    format!(
        "# shiftexit {} seed={seed} config_hash={config_hash}\n",
        env!("CARGO_PKG_VERSION")
    )
}

/// `a;b;c`, keeping the point inside one CSV field.
pub fn format_point(x: &[f64]) -> String {
    x.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";")
}

/// One row of the batch results file.
pub fn results_row(preset: &str, x0: &[f64], report: &EstimateReport) -> String {
    let f = report.csv_fields();
    // csv_fields: mode, delta, n, mean, ...
    format!(
        "{preset},{},{},{},{},{}\n",
        format_point(x0),
        f[1],
        f[0],
        f[2],
        f[3..].join(",")
    )
}

/// Results CSV for preset rows, with error columns when a target is known.
pub fn preset_csv(preset: &str, rows: &[PresetRow], seed: u64, config_hash: &str) -> String {
    let mut out = provenance_comment(seed, config_hash);
    out.push_str(RESULTS_HEADER);
    out.push_str(",target,abs_error,rel_error\n");
    for r in rows {
        let line = results_row(preset, &r.x0, &r.report);
        out.push_str(line.trim_end());
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            ",{},{},{}",
            opt(r.target.map(|t| t.value)),
            opt(r.abs_error()),
            opt(r.rel_error())
        );
    }
    out
}

pub fn records_header(dim: usize) -> String {
    let mut h = String::from("path_index,exit_step,kind,exit_time");
    for i in 0..dim {
        let _ = write!(h, ",exit_position_{i}");
    }
    h.push_str(",overshoot,normalized_overshoot,discount_at_exit,payoff");
    h
}

/// Exit records in path-index order.
pub fn records_csv(
    records: &[ExitRecord],
    problem: &FeynmanKacProblem,
    seed: u64,
    config_hash: &str,
) -> String {
    let dim = records.first().map_or(0, |r| r.exit_position.len());
    let mut out = provenance_comment(seed, config_hash);
    out.push_str(&records_header(dim));
    out.push('\n');
    for (i, r) in records.iter().enumerate() {
        let kind = match r.kind {
            ExitKind::Side => "side",
            ExitKind::Matured => "matured",
        };
        let _ = write!(out, "{i},{},{kind},{}", r.exit_step, fmt_f64(r.exit_time));
        for v in &r.exit_position {
            let _ = write!(out, ",{}", fmt_f64(*v));
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            fmt_f64(r.overshoot),
            fmt_f64(r.normalized_overshoot),
            fmt_f64(r.discount_at_exit),
            fmt_f64(payoff(r, problem))
        );
    }
    out
}

/// Two-column whitespace-separated `x y` lines.
pub fn plot_data(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut out = String::new();
    for (x, y) in points {
        let _ = writeln!(out, "{} {}", fmt_f64(x), fmt_f64(y));
    }
    out
}

/// CDF values on a common grid: a `y` column followed by one column per curve.
pub fn cdf_csv(grid: &[f64], curves: &[(&str, &[f64])], seed: u64, config_hash: &str) -> String {
    let mut out = provenance_comment(seed, config_hash);
    out.push('y');
    for (name, _) in curves {
        let _ = write!(out, ",{name}");
    }
    out.push('\n');
    for (i, y) in grid.iter().enumerate() {
        out.push_str(&fmt_f64(*y));
        for (_, values) in curves {
            let _ = write!(out, ",{}", fmt_f64(values[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exit_sim::StoppingMode;

    #[test]
    fn results_row_layout() {
        let r = EstimateReport {
            mean: -0.1,
            std_error: 0.01,
            ci_low: -0.1196,
            ci_high: -0.0804,
            n_paths: 100,
            delta: 0.1,
            mode: StoppingMode::Shifted,
            side_exit_fraction: 1.0,
            mean_normalized_overshoot: 0.5,
        };
        let row = results_row("section6", &[-0.7, 0.3, 0.7], &r);
        assert_eq!(
            row,
            "section6,-0.7;0.3;0.7,0.1,shifted,100,-0.1,0.01,-0.1196,-0.0804,1.0,0.5\n"
        );
        assert_eq!(
            row.trim_end().split(',').count(),
            RESULTS_HEADER.split(',').count()
        );
    }

    #[test]
    fn cdf_columns() {
        let csv = cdf_csv(
            &[0.0, 1.0],
            &[("empirical", &[0.0, 0.5]), ("limit", &[0.0, 0.6])],
            3,
            "h",
        );
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("# shiftexit "));
        assert_eq!(lines.next(), Some("y,empirical,limit"));
        assert_eq!(lines.next(), Some("0.0,0.0,0.0"));
        assert_eq!(lines.next(), Some("1.0,0.5,0.6"));
    }

    #[test]
    fn plot_lines() {
        assert_eq!(plot_data([(1.0, 0.5), (2.0, 0.25)]), "1.0 0.5\n2.0 0.25\n");
    }
}

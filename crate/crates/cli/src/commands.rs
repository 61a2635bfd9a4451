//! Subcommand implementations. Each returns the text written to standard
//! output; files are written atomically along the way.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use shiftexit_core::experiments::{
    fit_convergence_slope, format_summary, run_preset, significant_errors, PresetRow, PresetRun,
};
use shiftexit_core::output::{
    cdf_csv, plot_data, preset_csv, provenance_comment, records_csv, results_row, RESULTS_HEADER,
};
use shiftexit_core::overshoot::{c0_analytic, ladder_moments, sample_ladder_heights};
use shiftexit_core::stats::{ks_distance, linspace};
use shiftexit_core::{
    simulate_records, EmpiricalCdf, Error, LimitOvershootLaw, McSettings, StoppingMode,
};

use crate::config::{Command, ConfigError, RunConfig, Target};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Simulation(#[from] Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) | CliError::Io { .. } => 1,
        }
    }

    /// Machine-parsable category used in the `error[...]` prefix.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Simulation(_) => "simulation",
            CliError::Io { .. } => "io",
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Writes `contents` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Sends `contents` to the output file, or returns it for standard output.
fn emit(output: &Option<PathBuf>, contents: String) -> Result<String> {
    match output {
        Some(path) => write_atomic(path, &contents).map(|_| String::new()),
        None => Ok(contents),
    }
}

pub fn run(cfg: &RunConfig) -> Result<String> {
    match cfg.command {
        Command::Estimate => estimate(cfg),
        Command::Convergence => convergence(cfg),
        Command::Overshoot => overshoot(cfg),
        Command::Ladder => ladder(cfg),
        Command::Preset => preset(cfg),
    }
}

fn target(cfg: &RunConfig) -> &Target {
    cfg.target.as_ref().expect("validated config has a target")
}

fn settings(cfg: &RunConfig) -> McSettings {
    McSettings {
        n_paths: cfg.n_paths,
        seed: cfg.seed,
        max_steps: cfg.max_steps,
    }
}

fn estimate(cfg: &RunConfig) -> Result<String> {
    let target = target(cfg);
    let mut csv = provenance_comment(cfg.seed, &cfg.hash);
    csv.push_str(RESULTS_HEADER);
    csv.push('\n');
    let mut failure = None;
    'cases: for case in target.cases()? {
        for &delta in &cfg.deltas {
            match case.estimate_modes(delta, &cfg.modes, settings(cfg)) {
                Ok(reports) => {
                    for r in &reports {
                        csv.push_str(&results_row(target.name(), &case.x0, r));
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    break 'cases;
                }
            }
        }
        if let (None, Some(path)) = (&failure, &cfg.records) {
            let records = simulate_records(
                &case.model,
                &case.domain,
                &case.problem,
                cfg.deltas[0],
                cfg.modes[0],
                settings(cfg),
            )?;
            write_atomic(
                path,
                &records_csv(&records, &case.problem, cfg.seed, &cfg.hash),
            )?;
        }
    }
    // Rows computed before a failure are still written.
    let out = emit(&cfg.output, csv)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(out),
    }
}

fn preset_rows(cfg: &RunConfig) -> Result<(Vec<PresetRow>, Option<Error>, String)> {
    let Target::Preset(preset) = target(cfg) else {
        return Err(ConfigError::new("preset", "this command needs a named preset").into());
    };
    let mut reference = cfg.reference;
    let needs_reference = preset.cases()?.iter().any(|c| c.exact.is_none());
    if needs_reference && reference.is_none() && cfg.command == Command::Convergence {
        let finest = cfg.deltas.iter().copied().fold(f64::INFINITY, f64::min);
        reference = Some((finest / 8.0, cfg.n_paths));
    }
    let run = PresetRun {
        preset: preset.clone(),
        deltas: cfg.deltas.clone(),
        modes: cfg.modes.clone(),
        n_paths: cfg.n_paths,
        reference,
    };
    let mut rows = Vec::new();
    match run_preset(&run, cfg.seed, |r| rows.push(r.clone())) {
        Ok(table) => {
            let summary = format_summary(&table);
            Ok((table.rows, None, summary))
        }
        Err(e) => Ok((rows, Some(e), String::new())),
    }
}

fn preset(cfg: &RunConfig) -> Result<String> {
    let (rows, failure, summary) = preset_rows(cfg)?;
    let csv = preset_csv(target(cfg).name(), &rows, cfg.seed, &cfg.hash);
    let mut out = emit(&cfg.output, csv)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    if cfg.output.is_some() {
        out.push_str(&summary);
    } else {
        eprint!("{summary}");
    }
    Ok(out)
}

/// `plot` with the mode spliced into the file name: `conv.dat` -> `conv-plain.dat`.
fn per_mode_path(plot: &Path, mode: StoppingMode) -> PathBuf {
    let stem = plot.file_stem().unwrap_or_default().to_string_lossy();
    let name = match plot.extension() {
        Some(ext) => format!("{stem}-{mode}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{mode}"),
    };
    plot.with_file_name(name)
}

fn convergence(cfg: &RunConfig) -> Result<String> {
    let (rows, failure, _) = preset_rows(cfg)?;
    let csv = preset_csv(target(cfg).name(), &rows, cfg.seed, &cfg.hash);
    let mut out = emit(&cfg.output, csv)?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let plot = cfg
        .plot
        .clone()
        .unwrap_or_else(|| PathBuf::from("convergence.dat"));
    for &mode in &cfg.modes {
        let all: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.report.mode == mode)
            .filter_map(|r| Some((r.report.delta, r.abs_error()?)))
            .collect();
        let path = per_mode_path(&plot, mode);
        write_atomic(&path, &plot_data(all))?;
        let points = significant_errors(&rows, mode);
        let line = match fit_convergence_slope(&points) {
            Ok(fit) => format!(
                "slope[{mode}] = {:.4} intercept = {:.4} ({} significant points)",
                fit.slope,
                fit.intercept,
                points.len()
            ),
            Err(_) => format!(
                "slope[{mode}] unavailable: {} significant points",
                points.len()
            ),
        };
        let _ = writeln!(out, "{line}\nplot data: {}", path.display());
    }
    Ok(out)
}

fn overshoot(cfg: &RunConfig) -> Result<String> {
    let target = target(cfg);
    let cases = target.cases()?;
    let [case] = cases.as_slice() else {
        return Err(ConfigError::new("preset", "overshoot needs a single start point").into());
    };
    let mode = match cfg.modes.as_slice() {
        [only] => *only,
        _ => StoppingMode::Plain,
    };
    let delta = cfg.deltas[0];
    let records = simulate_records(
        &case.model,
        &case.domain,
        &case.problem,
        delta,
        mode,
        settings(cfg),
    )?;
    let normalized: Vec<f64> = records
        .iter()
        .filter(|r| r.is_side_exit())
        .map(|r| r.normalized_overshoot)
        .collect();
    let side_exits = normalized.len();
    let empirical = EmpiricalCdf::new(normalized).ok_or(Error::NoSideExits)?;
    let ladder = sample_ladder_heights(
        cfg.seed ^ LADDER_SEED_SALT,
        cfg.n_paths.max(100_000),
        cfg.cap,
    );
    let law = LimitOvershootLaw::from_samples(&ladder)?;

    let grid = linspace(0.0, 4.0, 401);
    let emp = empirical.eval_grid(&grid);
    let lim: Vec<f64> = grid.iter().map(|&y| law.cdf(y)).collect();
    let csv = cdf_csv(
        &grid,
        &[("empirical", &emp), ("limit", &lim)],
        cfg.seed,
        &cfg.hash,
    );
    let mut out = emit(&cfg.output, csv)?;
    if let Some(plot) = &cfg.plot {
        write_atomic(
            plot,
            &plot_data(grid.iter().copied().zip(emp.iter().copied())),
        )?;
    }
    let fine = linspace(0.0, empirical.quantile(1.0).max(4.0), 4001);
    let ks = ks_distance(|y| empirical.eval(y), |y| law.cdf(y), &fine);
    let _ = writeln!(
        out,
        "side exits = {side_exits}\nmean normalized overshoot = {:.5}\nlimit law mean = {:.5}\nc0 = {:.10}\nks distance = {ks:.5}",
        empirical.mean(),
        law.mean(),
        c0_analytic()
    );
    Ok(out)
}

const LADDER_SEED_SALT: u64 = 0x001A_DDE5;

fn ladder(cfg: &RunConfig) -> Result<String> {
    let m = ladder_moments(cfg.seed, cfg.n_paths, cfg.cap)?;
    let mut out = String::new();
    if let Some(path) = &cfg.output {
        let mut csv = provenance_comment(cfg.seed, &cfg.hash);
        csv.push_str("samples,cap,capped,mean_height,c0_estimate,c0_std_error,c0_analytic\n");
        let _ = writeln!(
            csv,
            "{},{},{},{:?},{:?},{:?},{:?}",
            m.samples,
            cfg.cap,
            m.capped,
            m.mean_height(),
            m.c0_estimate(),
            m.c0_std_error(),
            c0_analytic()
        );
        write_atomic(path, &csv)?;
    }
    let _ = writeln!(
        out,
        "samples = {} (capped {})\nmean ladder height = {:.6}\nc0 estimate = {:.6} ± {:.6}\nc0 analytic = {:.10}",
        m.samples,
        m.capped,
        m.mean_height(),
        m.c0_estimate(),
        1.96 * m.c0_std_error(),
        c0_analytic()
    );
    Ok(out)
}

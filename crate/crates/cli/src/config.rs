//! Run configuration: a strict TOML file, command-line overrides, and the
//! validated [`RunConfig`] built from both.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shiftexit_core::experiments::{hitting_problem, Case, ExperimentPreset};
use shiftexit_core::geometry::ScalarField;
use shiftexit_core::overshoot::DEFAULT_LADDER_CAP;
use shiftexit_core::{
    FeynmanKacProblem, Horizon, SdeModel, StoppingMode, TimeSpaceDomain, DEFAULT_MAX_STEPS,
};

pub const DEFAULT_PATHS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.reason)
    }
}

impl std::error::Error for ConfigError {}

type Result<T> = std::result::Result<T, ConfigError>;

/// Step sizes as written in a file: one number, a list, or the text syntax
/// accepted by [`parse_deltas`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaSpec {
    One(f64),
    Many(Vec<f64>),
    Text(String),
}

/// One mode name, `"both"`, or a list of names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModeSpec {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub delta: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `bm`, `scaled-bm` or `section6`.
    pub name: String,
    pub dim: Option<usize>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainConfig {
    HalfSpace {
        direction: Vec<f64>,
        level: f64,
        #[serde(default)]
        velocity: f64,
        horizon: Option<f64>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
        horizon: Option<f64>,
    },
    /// `(lower[0] + lower[1] t, upper[0] + upper[1] t)`.
    Interval {
        lower: [f64; 2],
        upper: [f64; 2],
        horizon: f64,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `hitting`, `section6` or `affine` (the default).
    pub payoff: Option<String>,
    /// Affine payoff `constant + <linear, x>`.
    pub constant: Option<f64>,
    pub linear: Option<Vec<f64>>,
    /// Affine source `source_constant + <source_linear, x>`.
    pub source_constant: Option<f64>,
    pub source_linear: Option<Vec<f64>>,
    /// Constant potential `k`.
    pub potential: Option<f64>,
}

/// Everything a configuration file may contain. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub preset: Option<String>,
    pub x0: Option<Vec<f64>>,
    pub level: Option<f64>,
    pub horizon: Option<f64>,
    pub lower: Option<[f64; 2]>,
    pub upper: Option<[f64; 2]>,
    pub delta: Option<DeltaSpec>,
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub mode: Option<ModeSpec>,
    pub max_steps: Option<u64>,
    pub cap: Option<u64>,
    pub reference: Option<ReferenceConfig>,
    pub model: Option<ModelConfig>,
    pub domain: Option<DomainConfig>,
    pub problem: Option<ProblemConfig>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub records: Option<PathBuf>,
}

impl FileConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .strip_prefix("unknown field `")
                .and_then(|rest| rest.split('`').next())
                .unwrap_or("config")
                .to_string();
            ConfigError::new(key, msg.trim_end())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigError::new("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }
}

/// Flags shared by every subcommand; each one overrides the file value.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// section6-grid, section6, halfspace-bm or moving-interval.
    #[arg(long)]
    pub preset: Option<String>,
    /// Start point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x0: Option<String>,
    /// Step sizes: `0.1,0.05`, fractions like `1/64`, or a halving range `1/64..1/1024`.
    #[arg(long, visible_alias = "deltas", allow_hyphen_values = true)]
    pub delta: Option<String>,
    /// Number of Monte Carlo paths (or ladder samples).
    #[arg(long, short = 'n')]
    pub n: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// plain, shifted or both.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Ladder epoch cap.
    #[arg(long)]
    pub cap: Option<u64>,
    /// Step size of the fine-step reference solution.
    #[arg(long, allow_hyphen_values = true)]
    pub reference_delta: Option<String>,
    #[arg(long)]
    pub reference_n: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, env = "SHIFTEXIT_WORKERS")]
    pub workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Plot-data file (or file prefix for per-mode files).
    #[arg(long)]
    pub plot: Option<PathBuf>,
    /// Per-path exit records CSV.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

impl Overrides {
    /// The file named by `--config` (or an empty one) with flags applied on top.
    pub fn merged(&self) -> Result<FileConfig> {
        let mut c = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        if let Some(v) = &self.preset {
            c.preset = Some(v.clone());
        }
        if let Some(v) = &self.x0 {
            c.x0 = Some(parse_list("x0", v)?);
        }
        if let Some(v) = &self.delta {
            c.delta = Some(DeltaSpec::Text(v.clone()));
        }
        if let Some(v) = self.n {
            c.n = Some(v);
        }
        if let Some(v) = self.seed {
            c.seed = Some(v);
        }
        if let Some(v) = &self.mode {
            c.mode = Some(ModeSpec::One(v.clone()));
        }
        if let Some(v) = self.max_steps {
            c.max_steps = Some(v);
        }
        if let Some(v) = self.cap {
            c.cap = Some(v);
        }
        match (&self.reference_delta, self.reference_n) {
            (None, None) => {}
            (d, n) => {
                let base = c.reference.clone();
                let delta = match d {
                    Some(text) => parse_number("reference_delta", text)?,
                    None => base.as_ref().map(|r| r.delta).ok_or_else(|| {
                        ConfigError::new("reference_delta", "required with --reference-n")
                    })?,
                };
                let n = n.or(base.map(|r| r.n)).unwrap_or(DEFAULT_PATHS);
                c.reference = Some(ReferenceConfig { delta, n });
            }
        }
        if self.workers.is_some() {
            c.workers = self.workers;
        }
        if self.output.is_some() {
            c.output = self.output.clone();
        }
        if self.plot.is_some() {
            c.plot = self.plot.clone();
        }
        if self.records.is_some() {
            c.records = self.records.clone();
        }
        Ok(c)
    }
}

fn parse_number(key: &str, text: &str) -> Result<f64> {
    let text = text.trim();
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| bad_number(key, text))?;
            let b: f64 = b.trim().parse().map_err(|_| bad_number(key, text))?;
            a / b
        }
        None => text.parse().map_err(|_| bad_number(key, text))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ConfigError::new(
            key,
            format!("{text} is not a finite number"),
        ))
    }
}

fn bad_number(key: &str, text: &str) -> ConfigError {
    ConfigError::new(key, format!("cannot parse {text:?} as a number"))
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',').map(|t| parse_number(key, t)).collect()
}

/// Parses `0.1,0.05`, `1/64,1/128` and halving ranges `1/64..1/1024`
/// (every power-of-two fraction from the first bound down to the second).
pub fn parse_deltas(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for item in text.split(',') {
        match item.split_once("..") {
            Some((a, b)) => {
                let hi = parse_number("delta", a)?;
                let lo = parse_number("delta", b)?;
                if !(hi > 0.0 && lo > 0.0) {
                    return Err(ConfigError::new("delta", "delta must be > 0"));
                }
                let halvings = (hi / lo).log2().round();
                if !(lo <= hi) || ((hi / lo) - halvings.exp2()).abs() > 1e-9 * (hi / lo) {
                    return Err(ConfigError::new(
                        "delta",
                        format!("range {item} must go down by a power of two"),
                    ));
                }
                let mut d = hi;
                for _ in 0..=halvings as u32 {
                    out.push(d);
                    d /= 2.0;
                }
            }
            None => out.push(parse_number("delta", item)?),
        }
    }
    Ok(out)
}

fn parse_modes(spec: &ModeSpec) -> Result<Vec<StoppingMode>> {
    let names: Vec<&str> = match spec {
        ModeSpec::One(s) => s.split(',').collect(),
        ModeSpec::Many(v) => v.iter().map(String::as_str).collect(),
    };
    let mut modes = Vec::new();
    for name in names {
        let name = name.trim();
        if name == "both" {
            modes.extend([StoppingMode::Plain, StoppingMode::Shifted]);
            continue;
        }
        let m = name.parse::<StoppingMode>().map_err(|_| {
            ConfigError::new(
                "mode",
                format!("unknown mode {name:?} (plain, shifted, both)"),
            )
        })?;
        modes.push(m);
    }
    let mut unique = Vec::new();
    for m in modes {
        if !unique.contains(&m) {
            unique.push(m);
        }
    }
    if unique.is_empty() {
        return Err(ConfigError::new("mode", "at least one mode is required"));
    }
    Ok(unique)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Estimate,
    Convergence,
    Overshoot,
    Ladder,
    Preset,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Convergence => "convergence",
            Command::Overshoot => "overshoot",
            Command::Ladder => "ladder",
            Command::Preset => "preset",
        }
    }
}

/// What to simulate: a named preset or a model/domain/problem triple.
#[derive(Debug, Clone)]
pub enum Target {
    Preset(ExperimentPreset),
    Custom(Box<Case>),
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::Preset(p) => p.name(),
            Target::Custom(_) => "custom",
        }
    }

    pub fn cases(&self) -> shiftexit_core::Result<Vec<Case>> {
        match self {
            Target::Preset(p) => p.cases(),
            Target::Custom(c) => Ok(vec![(**c).clone()]),
        }
    }
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub target: Option<Target>,
    pub deltas: Vec<f64>,
    pub n_paths: u64,
    pub seed: u64,
    pub modes: Vec<StoppingMode>,
    pub max_steps: u64,
    pub cap: u64,
    pub reference: Option<(f64, u64)>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub records: Option<PathBuf>,
    /// Hash of every setting that affects results (not workers or paths).
    pub hash: String,
}

/// Hex SHA-256 prefix of the result-relevant part of `c`.
pub fn config_hash(command: Command, c: &FileConfig) -> String {
    let mut relevant = c.clone();
    relevant.workers = None;
    relevant.output = None;
    relevant.plot = None;
    relevant.records = None;
    let text = toml::to_string(&relevant).unwrap_or_default();
    let digest = Sha256::new()
        .chain_update(command.name())
        .chain_update([0u8])
        .chain_update(text)
        .finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn resolve(command: Command, c: &FileConfig) -> Result<Self> {
        let deltas = match &c.delta {
            None => Vec::new(),
            Some(DeltaSpec::One(d)) => vec![*d],
            Some(DeltaSpec::Many(v)) => v.clone(),
            Some(DeltaSpec::Text(t)) => parse_deltas(t)?,
        };
        for &d in &deltas {
            if !(d > 0.0 && d.is_finite()) {
                return Err(ConfigError::new("delta", "delta must be > 0"));
            }
        }
        let n_paths = c.n.unwrap_or(match command {
            Command::Ladder => 1_000_000,
            _ => DEFAULT_PATHS,
        });
        if n_paths < 2 {
            return Err(ConfigError::new("n", "n must be at least 2"));
        }
        let modes = match &c.mode {
            Some(spec) => parse_modes(spec)?,
            None => vec![StoppingMode::Plain, StoppingMode::Shifted],
        };
        let max_steps = c.max_steps.unwrap_or(DEFAULT_MAX_STEPS);
        let cap = c.cap.unwrap_or(DEFAULT_LADDER_CAP);
        if max_steps == 0 {
            return Err(ConfigError::new("max_steps", "max_steps must be > 0"));
        }
        if cap == 0 {
            return Err(ConfigError::new("cap", "cap must be > 0"));
        }
        if c.workers == Some(0) {
            return Err(ConfigError::new("workers", "workers must be > 0"));
        }
        let reference = match &c.reference {
            Some(r) => {
                if !(r.delta > 0.0 && r.delta.is_finite()) {
                    return Err(ConfigError::new("reference.delta", "delta must be > 0"));
                }
                if r.n < 2 {
                    return Err(ConfigError::new("reference.n", "n must be at least 2"));
                }
                let finest = deltas.iter().copied().fold(f64::INFINITY, f64::min);
                if r.delta > finest / 8.0 {
                    return Err(ConfigError::new(
                        "reference.delta",
                        format!("must be at most 1/8 of the smallest delta ({finest})"),
                    ));
                }
                Some((r.delta, r.n))
            }
            None => None,
        };

        let target = match command {
            Command::Ladder => None,
            _ => Some(build_target(command, c)?),
        };
        let needs = |ok: bool, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::new("delta", reason))
            }
        };
        match command {
            Command::Ladder => {}
            Command::Overshoot => needs(deltas.len() == 1, "overshoot needs exactly one delta")?,
            Command::Convergence => {
                needs(deltas.len() >= 2, "convergence needs at least two deltas")?
            }
            _ => needs(!deltas.is_empty(), "at least one delta is required")?,
        }
        if c.records.is_some() && (deltas.len() != 1 || modes.len() != 1) {
            return Err(ConfigError::new(
                "records",
                "exit records need exactly one delta and one mode",
            ));
        }
        // Equivalent spellings of the same run hash identically.
        let mut normalized = c.clone();
        normalized.delta = Some(DeltaSpec::Many(deltas.clone()));
        normalized.mode = Some(ModeSpec::Many(
            modes.iter().map(|m| m.to_string()).collect(),
        ));
        normalized.n = Some(n_paths);
        normalized.seed = Some(c.seed.unwrap_or(DEFAULT_SEED));
        normalized.max_steps = Some(max_steps);
        normalized.cap = Some(cap);
        Ok(Self {
            command,
            target,
            deltas,
            n_paths,
            seed: c.seed.unwrap_or(DEFAULT_SEED),
            modes,
            max_steps,
            cap,
            reference,
            workers: c.workers,
            output: c.output.clone(),
            plot: c.plot.clone(),
            records: c.records.clone(),
            hash: config_hash(command, &normalized),
        })
    }
}

fn unused(c: &FileConfig, preset: &str, keys: &[&str]) -> Result<()> {
    let present = [
        ("level", c.level.is_some()),
        ("horizon", c.horizon.is_some()),
        ("lower", c.lower.is_some()),
        ("upper", c.upper.is_some()),
        ("model", c.model.is_some()),
        ("domain", c.domain.is_some()),
        ("problem", c.problem.is_some()),
    ];
    for (key, set) in present {
        if set && !keys.contains(&key) {
            return Err(ConfigError::new(
                key,
                format!("not used by preset {preset}"),
            ));
        }
    }
    Ok(())
}

fn build_target(command: Command, c: &FileConfig) -> Result<Target> {
    let preset = match (&c.preset, command) {
        (Some(p), _) => Some(p.as_str()),
        (None, Command::Overshoot) => Some("halfspace-bm"),
        (None, _) => None,
    };
    let x0 = c.x0.clone();
    if let Some(x) = &x0 {
        if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::new(
                "x0",
                "x0 must be a non-empty list of finite numbers",
            ));
        }
    }
    let scalar_x0 = |default: f64| -> Result<f64> {
        match x0.as_deref() {
            None => Ok(default),
            Some([v]) => Ok(*v),
            Some(_) => Err(ConfigError::new("x0", "this preset is one-dimensional")),
        }
    };
    let horizon = c.horizon.unwrap_or(1.0);
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ConfigError::new("horizon", "horizon must be > 0"));
    }
    let preset = match preset {
        None => return custom_target(c).map(|case| Target::Custom(Box::new(case))),
        Some("section6-grid") => {
            unused(c, "section6-grid", &[])?;
            if x0.is_some() {
                return Err(ConfigError::new(
                    "x0",
                    "section6-grid uses its own start grid",
                ));
            }
            ExperimentPreset::Section6Grid
        }
        Some("section6") => {
            unused(c, "section6", &[])?;
            let x = x0.ok_or_else(|| ConfigError::new("x0", "section6 needs a start point"))?;
            let x: [f64; 3] = x
                .try_into()
                .map_err(|_| ConfigError::new("x0", "section6 needs a 3-D start point"))?;
            if x.iter().map(|v| v * v).sum::<f64>() >= 4.0 {
                return Err(ConfigError::new(
                    "x0",
                    "start point must lie inside the ball of radius 2",
                ));
            }
            ExperimentPreset::Section6Point(x)
        }
        Some("halfspace-bm") => {
            unused(c, "halfspace-bm", &["level", "horizon"])?;
            let level = c.level.unwrap_or(1.0);
            let x0 = scalar_x0(0.0)?;
            if !(x0 < level) {
                return Err(ConfigError::new("x0", "x0 must lie below the level"));
            }
            ExperimentPreset::HalfSpaceBm { x0, level, horizon }
        }
        Some("moving-interval") => {
            unused(c, "moving-interval", &["lower", "upper", "horizon"])?;
            let ExperimentPreset::MovingInterval1D {
                lower, upper, x0, ..
            } = ExperimentPreset::moving_interval_default()
            else {
                unreachable!()
            };
            let lower = c.lower.map_or(lower, |[a, b]| (a, b));
            let upper = c.upper.map_or(upper, |[a, b]| (a, b));
            let x0 = scalar_x0(x0)?;
            ExperimentPreset::MovingInterval1D {
                lower,
                upper,
                x0,
                horizon,
            }
        }
        Some(other) => {
            return Err(ConfigError::new(
                "preset",
                format!(
                "unknown preset {other:?} (section6-grid, section6, halfspace-bm, moving-interval)"
            ),
            ))
        }
    };
    // Surface invalid geometry as a configuration error, before any simulation.
    preset
        .cases()
        .map_err(|e| ConfigError::new("preset", e.to_string()))?;
    Ok(Target::Preset(preset))
}

fn custom_target(c: &FileConfig) -> Result<Case> {
    let (Some(model), Some(domain)) = (&c.model, &c.domain) else {
        return Err(ConfigError::new(
            "preset",
            "either a preset or both [model] and [domain] are required",
        ));
    };
    let x0 =
        c.x0.clone()
            .ok_or_else(|| ConfigError::new("x0", "a start point is required"))?;
    let dim = x0.len();
    let sde = match model.name.as_str() {
        "bm" | "scaled-bm" => {
            let d = model.dim.unwrap_or(dim);
            let scale = model.scale.unwrap_or(1.0);
            if model.name == "bm" && model.scale.is_some() {
                return Err(ConfigError::new("model.scale", "only used by scaled-bm"));
            }
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(ConfigError::new("model.scale", "scale must be > 0"));
            }
            SdeModel::scaled_brownian(d, scale)
                .map_err(|e| ConfigError::new("model", e.to_string()))?
        }
        "section6" => SdeModel::section6(),
        other => {
            return Err(ConfigError::new(
                "model.name",
                format!("unknown model {other:?} (bm, scaled-bm, section6)"),
            ))
        }
    };
    if sde.dim_state() != dim {
        return Err(ConfigError::new(
            "x0",
            format!(
                "model is {}-dimensional but x0 has {dim} coordinates",
                sde.dim_state()
            ),
        ));
    }
    let horizon = |h: Option<f64>| match h {
        Some(t) => Horizon::Finite(t),
        None => Horizon::Open,
    };
    let geometry = match domain {
        DomainConfig::HalfSpace {
            direction,
            level,
            velocity,
            horizon: h,
        } => TimeSpaceDomain::moving_half_space(direction.clone(), *level, *velocity, horizon(*h)),
        DomainConfig::Ball {
            center,
            radius,
            horizon: h,
        } => TimeSpaceDomain::ball(center.clone(), *radius, horizon(*h)),
        DomainConfig::Interval {
            lower,
            upper,
            horizon: h,
        } => TimeSpaceDomain::affine_interval(
            (lower[0], lower[1]),
            (upper[0], upper[1]),
            Horizon::Finite(*h),
        ),
    }
    .map_err(|e| ConfigError::new("domain", e.to_string()))?;
    if geometry.dim().is_some_and(|d| d != dim) {
        return Err(ConfigError::new("domain", "dimension does not match x0"));
    }
    if geometry.signed_distance(0.0, &x0) <= 0.0 {
        return Err(ConfigError::new(
            "x0",
            "start point must lie inside the domain",
        ));
    }
    let problem = build_problem(c.problem.clone().unwrap_or_default(), &geometry, x0.clone())?;
    Ok(Case {
        x0,
        model: sde,
        domain: geometry,
        problem,
        exact: None,
    })
}

fn affine(key: &str, constant: f64, linear: Option<Vec<f64>>, dim: usize) -> Result<ScalarField> {
    let linear = linear.unwrap_or_else(|| vec![0.0; dim]);
    if linear.len() != dim {
        return Err(ConfigError::new(key, format!("needs {dim} coefficients")));
    }
    Ok(Arc::new(move |_, x: &[f64]| {
        constant + linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }))
}

fn build_problem(
    p: ProblemConfig,
    domain: &TimeSpaceDomain,
    x0: Vec<f64>,
) -> Result<FeynmanKacProblem> {
    let dim = x0.len();
    let mut problem = match p.payoff.as_deref().unwrap_or("affine") {
        "hitting" | "section6" if p.constant.is_some() || p.linear.is_some() => {
            return Err(ConfigError::new(
                "problem.constant",
                "only used by the affine payoff",
            ))
        }
        "hitting" => hitting_problem(domain.clone(), x0),
        "section6" => {
            if dim != 3 {
                return Err(ConfigError::new(
                    "problem.payoff",
                    "section6 payoff needs 3-D points",
                ));
            }
            FeynmanKacProblem::new(
                Arc::new(|_, x: &[f64]| shiftexit_core::boundary_payoff_section6(x)),
                x0,
            )
        }
        "affine" => FeynmanKacProblem::new(
            affine("problem.linear", p.constant.unwrap_or(0.0), p.linear, dim)?,
            x0,
        ),
        other => {
            return Err(ConfigError::new(
                "problem.payoff",
                format!("unknown payoff {other:?} (hitting, section6, affine)"),
            ))
        }
    };
    if p.source_constant.is_some() || p.source_linear.is_some() {
        problem = problem.with_source(affine(
            "problem.source_linear",
            p.source_constant.unwrap_or(0.0),
            p.source_linear,
            dim,
        )?);
    }
    if let Some(k) = p.potential {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(ConfigError::new(
                "problem.potential",
                "potential must be >= 0",
            ));
        }
        problem = problem.with_potential(Arc::new(move |_, _| k));
    }
    Ok(problem)
}

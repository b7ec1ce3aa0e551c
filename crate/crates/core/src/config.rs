//! Flat `key = value` run configuration.
//!
//! ```text
//! # dip at parallel diagonal analyzers
//! experiment = scan-delay
//! backend = mc
//! theta_a = pi/4
//! theta_b = pi/4
//! n_trials = 1000000
//! ```
//!
//! Unknown and repeated keys are rejected. Angles accept `pi` expressions
//! (`pi/4`, `3*pi/4`, `-0.5*pi`); every other number is a plain float.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BackgroundProtocol, CoincidenceEstimator, Flux};
use crate::experiments::{GridSpec, DEFAULT_ANGLE_GRID, DEFAULT_DELAY_GRID};
use crate::model::{
    InterferometerSettings, PulseModel, DEFAULT_GATE, DEFAULT_OMEGA_0, DEFAULT_TAU_P,
    ELEMENTARY_CHARGE,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{field} {constraint}")]
    Invalid { field: String, constraint: String },
}

impl ConfigError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        ConfigError::Parse {
            line,
            message: message.into(),
        }
    }
}

impl From<crate::Error> for ConfigError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidParameter { field, constraint } => ConfigError::Invalid {
                field: field.to_string(),
                constraint,
            },
            other => ConfigError::Invalid {
                field: "config".into(),
                constraint: other.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    ScanDelay,
    ScanAngle,
    Chsh,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::ScanDelay => "scan-delay",
            Experiment::ScanAngle => "scan-angle",
            Experiment::Chsh => "chsh",
            Experiment::Validate => "validate",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "scan-delay" => Ok(Experiment::ScanDelay),
            "scan-angle" => Ok(Experiment::ScanAngle),
            "chsh" => Ok(Experiment::Chsh),
            "validate" => Ok(Experiment::Validate),
            _ => Err(format!(
                "unknown experiment `{s}` (scan-delay|scan-angle|chsh|validate)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Oracle,
    Mc,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Oracle => "oracle",
            BackendKind::Mc => "mc",
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "oracle" => Ok(BackendKind::Oracle),
            "mc" => Ok(BackendKind::Mc),
            _ => Err(format!("unknown backend `{s}` (oracle|mc)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}` (csv|json)")),
        }
    }
}

pub fn parse_flux(s: &str) -> Result<Flux, String> {
    match s {
        "low" => Ok(Flux::Low),
        "high" => Ok(Flux::High),
        _ => Err(format!("unknown mode `{s}` (low|high)")),
    }
}

pub fn parse_estimator(s: &str) -> Result<CoincidenceEstimator, String> {
    match s {
        "clicks" => Ok(CoincidenceEstimator::Clicks),
        "counts" => Ok(CoincidenceEstimator::Counts),
        "conditional" => Ok(CoincidenceEstimator::Conditional),
        _ => Err(format!(
            "unknown estimator `{s}` (clicks|counts|conditional)"
        )),
    }
}

pub fn parse_protocol(s: &str) -> Result<BackgroundProtocol, String> {
    match s {
        "independent" => Ok(BackgroundProtocol::Independent),
        "common-random-numbers" => Ok(BackgroundProtocol::CommonRandomNumbers),
        _ => Err(format!(
            "unknown background protocol `{s}` (independent|common-random-numbers)"
        )),
    }
}

/// Parses a float, also accepting `[coef*]pi[/div]`.
pub fn parse_real(text: &str) -> Result<f64, String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let bad = || format!("`{text}` is not a number");
    let Some(pos) = compact.find("pi") else {
        return compact.parse::<f64>().map_err(|_| bad());
    };
    let (head, tail) = (&compact[..pos], &compact[pos + 2..]);
    let coef = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h
            .strip_suffix('*')
            .ok_or_else(bad)?
            .parse::<f64>()
            .map_err(|_| bad())?,
    };
    let div = match tail {
        "" => 1.0,
        t => t
            .strip_prefix('/')
            .ok_or_else(bad)?
            .parse::<f64>()
            .map_err(|_| bad())?,
    };
    Ok(coef * std::f64::consts::PI / div)
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub backend: BackendKind,
    pub mode: Flux,
    /// `None` means the flux's default estimator.
    pub estimator: Option<CoincidenceEstimator>,
    pub background: BackgroundProtocol,
    pub settings: InterferometerSettings,
    pub n_trials: u64,
    pub seed: u64,
    pub grid: GridSpec,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

const KEYS: &[&str] = &[
    "experiment",
    "backend",
    "mode",
    "estimator",
    "background",
    "theta_a",
    "theta_b",
    "delta_t",
    "mean_photons",
    "eta",
    "gate_t",
    "charge_q",
    "tau_p",
    "omega_0",
    "n_trials",
    "seed",
    "grid_start",
    "grid_stop",
    "grid_count",
    "output",
    "format",
];

pub const DEFAULT_SEED: u64 = 20_100_819;

impl RunConfig {
    pub fn default_trials(mode: Flux) -> u64 {
        match mode {
            Flux::Low => 1_000_000,
            Flux::High => 100_000,
        }
    }

    pub fn default_mean_photons(mode: Flux) -> f64 {
        match mode {
            Flux::Low => 0.01,
            Flux::High => 100.0,
        }
    }

    pub fn default_grid(experiment: Experiment) -> GridSpec {
        match experiment {
            Experiment::ScanAngle => DEFAULT_ANGLE_GRID,
            _ => DEFAULT_DELAY_GRID,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.settings.validate()?;
        if self.n_trials < 2 {
            return Err(ConfigError::Invalid {
                field: "n_trials".into(),
                constraint: "must be >= 2".into(),
            });
        }
        self.grid.validate()?;
        Ok(())
    }
}

fn key_values(text: &str) -> Result<BTreeMap<&str, (usize, &str)>, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| {
            ConfigError::parse(line, format!("expected `key = value`, got `{body}`"))
        })?;
        let key = key.trim();
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if !KEYS.contains(&key) {
            return Err(ConfigError::parse(line, format!("unknown key `{key}`")));
        }
        if value.is_empty() {
            return Err(ConfigError::parse(
                line,
                format!("missing value for `{key}`"),
            ));
        }
        if map.insert(key, (line, value)).is_some() {
            return Err(ConfigError::parse(line, format!("duplicate key `{key}`")));
        }
    }
    Ok(map)
}

/// Parses and validates configuration text, filling defaults for omitted keys.
pub fn load_config(text: &str) -> Result<RunConfig, ConfigError> {
    let kv = key_values(text)?;
    let get = |key: &str| kv.get(key).copied();
    fn typed<T>(
        entry: Option<(usize, &str)>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        entry
            .map(|(line, v)| parse(v).map_err(|m| ConfigError::parse(line, m)))
            .transpose()
    }
    let real = |key: &str| typed(get(key), parse_real);
    let uint = |key: &str| {
        typed(get(key), |v| {
            v.parse::<u64>()
                .map_err(|_| format!("`{v}` is not an unsigned integer"))
        })
    };

    let experiment =
        typed(get("experiment"), Experiment::from_str)?.ok_or(ConfigError::Invalid {
            field: "experiment".into(),
            constraint: "is required".into(),
        })?;
    let backend = typed(get("backend"), BackendKind::from_str)?.unwrap_or(BackendKind::Oracle);
    let mode = typed(get("mode"), parse_flux)?.unwrap_or(Flux::Low);
    let estimator = typed(get("estimator"), parse_estimator)?;
    let background = typed(get("background"), parse_protocol)?.unwrap_or_default();

    let defaults = InterferometerSettings::default();
    let settings = InterferometerSettings {
        theta_a: real("theta_a")?.unwrap_or(defaults.theta_a),
        theta_b: real("theta_b")?.unwrap_or(defaults.theta_b),
        delta_t: real("delta_t")?.unwrap_or(0.0),
        mean_photons: real("mean_photons")?.unwrap_or(RunConfig::default_mean_photons(mode)),
        eta: real("eta")?.unwrap_or(defaults.eta),
        gate_t: real("gate_t")?.unwrap_or(DEFAULT_GATE),
        charge_q: real("charge_q")?.unwrap_or(ELEMENTARY_CHARGE),
        pulse: PulseModel {
            tau_p: real("tau_p")?.unwrap_or(DEFAULT_TAU_P),
            omega_0: real("omega_0")?.unwrap_or(DEFAULT_OMEGA_0),
        },
    };

    let default_grid = RunConfig::default_grid(experiment);
    let grid = GridSpec {
        start: real("grid_start")?.unwrap_or(default_grid.start),
        stop: real("grid_stop")?.unwrap_or(default_grid.stop),
        count: uint("grid_count")?.map_or(default_grid.count, |c| c as usize),
    };

    let config = RunConfig {
        experiment,
        backend,
        mode,
        estimator,
        background,
        settings,
        n_trials: uint("n_trials")?.unwrap_or(RunConfig::default_trials(mode)),
        seed: uint("seed")?.unwrap_or(DEFAULT_SEED),
        grid,
        output: get("output").map(|(_, v)| PathBuf::from(v)),
        format: typed(get("format"), OutputFormat::from_str)?.unwrap_or(OutputFormat::Csv),
    };
    config.validate()?;
    Ok(config)
}

/// Writes every key explicitly; floats use the shortest exact representation
/// so that `load_config(&emit_config(c)) == c`.
pub fn emit_config(config: &RunConfig) -> String {
    let s = &config.settings;
    let mut out = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("experiment", config.experiment.name().into());
    line("backend", config.backend.name().into());
    line("mode", config.mode.name().into());
    if let Some(e) = config.estimator {
        line("estimator", e.name().into());
    }
    line(
        "background",
        match config.background {
            BackgroundProtocol::Independent => "independent",
            BackgroundProtocol::CommonRandomNumbers => "common-random-numbers",
        }
        .into(),
    );
    line("theta_a", format!("{:e}", s.theta_a));
    line("theta_b", format!("{:e}", s.theta_b));
    line("delta_t", format!("{:e}", s.delta_t));
    line("mean_photons", format!("{:e}", s.mean_photons));
    line("eta", format!("{:e}", s.eta));
    line("gate_t", format!("{:e}", s.gate_t));
    line("charge_q", format!("{:e}", s.charge_q));
    line("tau_p", format!("{:e}", s.pulse.tau_p));
    line("omega_0", format!("{:e}", s.pulse.omega_0));
    line("n_trials", config.n_trials.to_string());
    line("seed", config.seed.to_string());
    line("grid_start", format!("{:e}", config.grid.start));
    line("grid_stop", format!("{:e}", config.grid.stop));
    line("grid_count", config.grid.count.to_string());
    if let Some(p) = &config.output {
        line("output", p.display().to_string());
    }
    line("format", config.format.extension().into());
    out
}

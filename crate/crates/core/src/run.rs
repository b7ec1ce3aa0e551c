//! Experiment dispatch and result emission.
//!
//! Scan and CHSH results are written as `x,y,yerr` CSV (17 significant
//! digits) or JSON, next to a `<stem>.meta.json` sidecar holding the
//! resolved configuration, seed, version and wall time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::config::{emit_config, BackendKind, ConfigError, Experiment, OutputFormat, RunConfig};
use crate::engine::Flux;
use crate::experiments::{
    chsh_experiment, delay_scan, polarization_scan, visibility_of_curve, Backend, ChshResult,
    McOptions, ScanCurve, ScanPoint, VisibilityFit,
};
use crate::model::Regime;
use crate::oracle::CANONICAL_CHSH_ANGLES;
use crate::validation::{validation_suite, CheckResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Promote regime warnings to errors.
    pub strict: bool,
    pub emit_plot_script: bool,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("regime violation under --strict: {0}")]
    Regime(String),
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
}

impl RunError {
    /// Process exit code per failure category.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Model(_) => 3,
            RunError::Io { .. } => 4,
            RunError::Regime(_) => 5,
            RunError::ValidationFailed(_) => 6,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub results_path: PathBuf,
    pub metadata_path: PathBuf,
    pub plot_script_path: Option<PathBuf>,
    /// Human-readable result lines.
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
}

/// Formats with 17 significant digits.
pub fn format_value(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn curve_csv(curve: &ScanCurve) -> String {
    points_csv(curve.points())
}

fn points_csv(points: &[ScanPoint]) -> String {
    let mut out = String::from("x,y,yerr\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{}",
            format_value(p.x),
            format_value(p.y),
            format_value(p.yerr)
        );
    }
    out
}

/// Reads back an `x,y,yerr` file.
pub fn parse_curve_csv(text: &str) -> Result<Vec<[f64; 3]>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("x,y,yerr") => {}
        other => return Err(format!("bad header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(format!("row {}: expected 3 columns", i + 2));
            }
            let mut row = [0.0; 3];
            for (slot, c) in row.iter_mut().zip(cols) {
                *slot = c
                    .parse()
                    .map_err(|_| format!("row {}: bad number `{c}`", i + 2))?;
            }
            Ok(row)
        })
        .collect()
}

/// Regime and flux-range warnings for every setting the run will evaluate.
pub fn regime_warnings(config: &RunConfig) -> Vec<String> {
    let base = config.settings;
    let mut warnings = Vec::new();
    let settings: Vec<_> = match config.experiment {
        Experiment::ScanDelay => config
            .grid
            .points()
            .into_iter()
            .map(|dt| base.with_delay(dt))
            .collect(),
        _ => vec![base],
    };
    let out = settings
        .iter()
        .filter(|s| s.regime() == Regime::OutOfRegime)
        .count();
    if out > 0 {
        let first = settings
            .iter()
            .find_map(|s| s.regime_warning())
            .unwrap_or_default();
        warnings.push(format!(
            "{out} setting(s) outside the asymptotic regime; e.g. {first}"
        ));
    }
    if config.backend == BackendKind::Mc {
        match config.mode {
            Flux::Low => warnings.extend(base.low_flux_warning()),
            Flux::High if base.mean_photons < 1.0 => warnings.push(format!(
                "high-flux mode with mean_photons = {} (intended for N >> 1)",
                base.mean_photons
            )),
            Flux::High => {}
        }
    }
    warnings
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'static str,
    seed: u64,
    backend: &'static str,
    mode: &'static str,
    estimator_id: Option<String>,
    /// Physical meaning of the `x,y,yerr` columns.
    columns: [&'static str; 3],
    config: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
    warnings: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    flagged_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    visibility: Option<VisibilityFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chsh: Option<&'a ChshResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    checks: Option<&'a [CheckResult]>,
}

#[derive(Serialize)]
struct JsonResults<'a> {
    metadata: &'a Metadata<'a>,
    columns: [&'static str; 3],
    points: Vec<[f64; 3]>,
}

enum Outcome {
    Curve(ScanCurve, Option<VisibilityFit>),
    Chsh(Box<ChshResult>),
    Checks(Vec<CheckResult>),
}

fn write(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| RunError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn results_path(config: &RunConfig) -> PathBuf {
    config.output.clone().unwrap_or_else(|| {
        PathBuf::from(format!(
            "{}.{}",
            config.experiment.name(),
            config.format.extension()
        ))
    })
}

pub fn backend_for(config: &RunConfig) -> Backend {
    match config.backend {
        BackendKind::Oracle => Backend::Oracle,
        BackendKind::Mc => Backend::MonteCarlo(McOptions {
            n_trials: config.n_trials,
            seed: config.seed,
            estimator: config.estimator,
            protocol: config.background,
        }),
    }
}

/// Runs the configured experiment and writes its artifacts.
pub fn run(config: &RunConfig, options: &RunOptions) -> Result<RunReport, RunError> {
    config.validate()?;
    let warnings = regime_warnings(config);
    if options.strict && !warnings.is_empty() {
        return Err(RunError::Regime(warnings.join("; ")));
    }
    let started = Instant::now();
    let backend = backend_for(config);
    let settings = config.settings;
    let outcome = match config.experiment {
        Experiment::ScanDelay => {
            let curve = delay_scan(&settings, &config.grid.points(), config.mode, &backend)?;
            let vis = visibility_of_curve(&curve).ok();
            Outcome::Curve(curve, vis)
        }
        Experiment::ScanAngle => {
            let curve = polarization_scan(&settings, &config.grid.points(), config.mode, &backend)?;
            let vis = visibility_of_curve(&curve).ok();
            Outcome::Curve(curve, vis)
        }
        Experiment::Chsh => Outcome::Chsh(Box::new(chsh_experiment(
            &settings,
            &CANONICAL_CHSH_ANGLES,
            config.mode,
            &backend,
        )?)),
        Experiment::Validate => {
            Outcome::Checks(validation_suite(&settings, config.n_trials, config.seed)?)
        }
    };
    let wall = started.elapsed().as_secs_f64();

    let config_pairs: BTreeMap<String, String> = emit_config(config)
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut meta = Metadata {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        experiment: config.experiment.name(),
        seed: config.seed,
        backend: config.backend.name(),
        mode: config.mode.name(),
        estimator_id: None,
        columns: column_meaning(config),
        config: config_pairs,
        wall_time_s: None,
        warnings: &warnings,
        flagged_points: None,
        notes: None,
        visibility: None,
        chsh: None,
        checks: None,
    };

    let mut summary = Vec::new();
    let points: Vec<ScanPoint>;
    let mut failed = 0;
    match &outcome {
        Outcome::Curve(curve, vis) => {
            meta.estimator_id = Some(curve.estimator_id().to_string());
            meta.flagged_points = Some(curve.flagged_count());
            meta.notes = Some(curve.notes());
            meta.visibility = *vis;
            points = curve.points().to_vec();
            summary.push(format!(
                "{} points ({})",
                points.len(),
                curve.estimator_id()
            ));
            if let Some(v) = vis {
                summary.push(format!(
                    "visibility = {:.6} +/- {:.6}",
                    v.visibility, v.stderr
                ));
                if let (Some(w), Some(e)) = (v.width, v.width_stderr) {
                    summary.push(format!("fitted width = {w:.6e} s +/- {e:.3e}"));
                }
            }
        }
        Outcome::Chsh(r) => {
            meta.estimator_id = Some(r.estimator_id.clone());
            meta.chsh = Some(r);
            points = (0..4)
                .map(|i| ScanPoint {
                    x: (i + 1) as f64,
                    y: r.correlations[i],
                    yerr: r.correlation_stderr[i],
                    flagged: false,
                })
                .collect();
            summary.push(format!("S = {:.6} +/- {:.6}", r.s, r.stderr));
            for (i, ((a, b), e)) in r.angles.iter().zip(r.correlations).enumerate() {
                summary.push(format!(
                    "E{} (theta_a={a:.6}, theta_b={b:.6}) = {e:.6}",
                    i + 1
                ));
            }
        }
        Outcome::Checks(checks) => {
            meta.checks = Some(checks);
            points = Vec::new();
            for c in checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                summary.push(format!(
                    "{verdict} {} statistic={:.6e} threshold={:.6e} ({})",
                    c.name, c.statistic, c.threshold, c.detail
                ));
            }
            failed = checks.iter().filter(|c| !c.passed).count();
        }
    }

    let results_path = results_path(config);
    let body = match (&outcome, config.format) {
        (Outcome::Checks(checks), OutputFormat::Csv) => {
            let mut out = String::from("check,passed,statistic,threshold\n");
            for c in checks {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    c.name,
                    c.passed,
                    format_value(c.statistic),
                    format_value(c.threshold)
                );
            }
            out
        }
        (_, OutputFormat::Csv) => points_csv(&points),
        (_, OutputFormat::Json) => {
            let json = JsonResults {
                metadata: &meta,
                columns: ["x", "y", "yerr"],
                points: points.iter().map(|p| [p.x, p.y, p.yerr]).collect(),
            };
            serde_json::to_string_pretty(&json).expect("results serialize") + "\n"
        }
    };
    write(&results_path, &body)?;

    meta.wall_time_s = Some(wall);
    let metadata_path = results_path.with_extension("meta.json");
    write(
        &metadata_path,
        &(serde_json::to_string_pretty(&meta).expect("metadata serialize") + "\n"),
    )?;

    let plot_script_path = if options.emit_plot_script && !matches!(outcome, Outcome::Checks(_)) {
        let path = results_path.with_extension("plot.py");
        write(&path, &plot_script(&results_path, config))?;
        Some(path)
    } else {
        None
    };

    if failed > 0 {
        return Err(RunError::ValidationFailed(failed));
    }
    Ok(RunReport {
        results_path,
        metadata_path,
        plot_script_path,
        summary,
        warnings,
    })
}

fn column_meaning(config: &RunConfig) -> [&'static str; 3] {
    let rate = match config.mode {
        Flux::Low => "subtracted coincidence rate per gate",
        Flux::High => "subtracted photocurrent cross-correlation [A^2]",
    };
    match config.experiment {
        Experiment::ScanDelay => ["delta_t [s]", rate, "standard error"],
        Experiment::ScanAngle => ["theta_b [rad]", rate, "standard error"],
        Experiment::Chsh => ["correlation index", "E", "standard error"],
        Experiment::Validate => ["check", "statistic", "threshold"],
    }
}

fn plot_script(results: &Path, config: &RunConfig) -> String {
    let file = results
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let xlabel = match config.experiment {
        Experiment::ScanDelay => "delta_t [s]",
        Experiment::ScanAngle => "theta_B [rad]",
        _ => "index",
    };
    let loader = match config.format {
        OutputFormat::Csv => "rows = list(csv.DictReader(open(path)))\nx = [float(r['x']) for r in rows]\ny = [float(r['y']) for r in rows]\ne = [float(r['yerr']) for r in rows]",
        OutputFormat::Json => "pts = json.load(open(path))['points']\nx = [p[0] for p in pts]\ny = [p[1] for p in pts]\ne = [p[2] for p in pts]",
    };
    format!(
        "import csv\nimport json\nimport os\nimport matplotlib.pyplot as plt\n\n\
         path = os.path.join(os.path.dirname(os.path.abspath(__file__)), {file:?})\n\
         {loader}\n\
         plt.errorbar(x, y, yerr=e, fmt='o-', ms=3)\n\
         plt.xlabel({xlabel:?})\nplt.ylabel('background-subtracted rate')\n\
         plt.title({title:?})\n\
         plt.savefig(os.path.splitext(path)[0] + '.png', dpi=150)\n",
        title = config.experiment.name(),
    )
}

//! Delay scans, polarization fringes, visibility fits and the CHSH
//! combination, each evaluated on either the analytic oracle or the Monte
//! Carlo engine.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::{estimate_subtracted, BackgroundProtocol, CoincidenceEstimator, Flux};
use crate::error::{Error, Result};
use crate::fit::{fit_fringe, fit_gaussian_pedestal};
use crate::model::{InterferometerSettings, Regime};
use crate::oracle;
use crate::seed::SeedPath;

/// Delay grid: 81 points over ±4 ps.
pub const DEFAULT_DELAY_GRID: GridSpec = GridSpec {
    start: -4e-12,
    stop: 4e-12,
    count: 81,
};

/// Analyzer grid: 37 points over [0, π].
pub const DEFAULT_ANGLE_GRID: GridSpec = GridSpec {
    start: 0.0,
    stop: PI,
    count: 37,
};

/// Evenly spaced grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => {
                let step = (self.stop - self.start) / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        if i + 1 == n {
                            self.stop
                        } else {
                            self.start + step * i as f64
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::invalid("grid_count", "must be >= 1"));
        }
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::invalid("grid_start", "grid bounds must be finite"));
        }
        if self.count > 1 && self.stop <= self.start {
            return Err(Error::invalid("grid_stop", "must exceed grid_start"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanVariable {
    DeltaT,
    AngleDiff,
    ThetaB,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub x: f64,
    pub y: f64,
    /// Zero for oracle points.
    pub yerr: f64,
    /// Set when the point lies outside the asymptotic regime.
    pub flagged: bool,
}

/// Monte Carlo settings shared by every point of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    /// Gates per run (each background-subtracted value uses three runs).
    pub n_trials: u64,
    pub seed: u64,
    /// `None` picks [`CoincidenceEstimator::default_for`] the flux.
    pub estimator: Option<CoincidenceEstimator>,
    pub protocol: BackgroundProtocol,
}

impl McOptions {
    pub fn new(n_trials: u64, seed: u64) -> Self {
        McOptions {
            n_trials,
            seed,
            estimator: None,
            protocol: BackgroundProtocol::Independent,
        }
    }

    pub fn estimator_for(&self, flux: Flux) -> CoincidenceEstimator {
        self.estimator
            .unwrap_or(CoincidenceEstimator::default_for(flux))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Backend {
    Oracle,
    MonteCarlo(McOptions),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanCurve {
    variable: ScanVariable,
    points: Vec<ScanPoint>,
    settings_snapshot: InterferometerSettings,
    estimator_id: String,
    flux: Flux,
    notes: Vec<String>,
}

impl ScanCurve {
    pub fn new(
        variable: ScanVariable,
        points: Vec<ScanPoint>,
        settings_snapshot: InterferometerSettings,
        estimator_id: impl Into<String>,
        flux: Flux,
    ) -> Result<Self> {
        if points.windows(2).any(|w| !(w[1].x > w[0].x)) {
            return Err(Error::invalid(
                "grid",
                "scan values must be strictly increasing",
            ));
        }
        if points.iter().any(|p| !(p.yerr >= 0.0)) {
            return Err(Error::invalid("yerr", "must be >= 0"));
        }
        Ok(ScanCurve {
            variable,
            points,
            settings_snapshot,
            estimator_id: estimator_id.into(),
            flux,
            notes: Vec::new(),
        })
    }

    pub fn variable(&self) -> ScanVariable {
        self.variable
    }

    pub fn points(&self) -> &[ScanPoint] {
        &self.points
    }

    pub fn settings_snapshot(&self) -> &InterferometerSettings {
        &self.settings_snapshot
    }

    pub fn estimator_id(&self) -> &str {
        &self.estimator_id
    }

    pub fn flux(&self) -> Flux {
        self.flux
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.y).collect()
    }

    pub fn flagged_count(&self) -> usize {
        self.points.iter().filter(|p| p.flagged).count()
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

fn estimator_label(backend: &Backend, flux: Flux) -> String {
    let statistic = match flux {
        Flux::Low => "coincidence_subtracted",
        Flux::High => "crosscorr_subtracted",
    };
    match backend {
        Backend::Oracle => format!("oracle:{statistic}"),
        Backend::MonteCarlo(mc) => format!("mc:{}:{statistic}", mc.estimator_for(flux).name()),
    }
}

/// Background-subtracted joint statistic at one setting:
/// `C̃` (coincidences/gate) at low flux, `Ĩ⁽²⁾` (A²) at high flux.
fn subtracted_point(
    settings: &InterferometerSettings,
    flux: Flux,
    backend: &Backend,
    seed: SeedPath,
) -> Result<(f64, f64)> {
    match backend {
        Backend::Oracle => Ok(match flux {
            Flux::Low => (oracle::coincidence_subtracted(settings), 0.0),
            Flux::High => (
                oracle::photocurrent_crosscorr(settings).crosscorr_subtracted,
                0.0,
            ),
        }),
        Backend::MonteCarlo(mc) => {
            let run = estimate_subtracted(
                settings,
                mc.n_trials,
                flux,
                mc.estimator_for(flux),
                seed,
                mc.protocol,
            )?;
            Ok((run.subtracted.mean, run.subtracted.stderr))
        }
    }
}

fn scan(
    experiment: &str,
    variable: ScanVariable,
    settings: &InterferometerSettings,
    grid: &[f64],
    flux: Flux,
    backend: &Backend,
    apply: impl Fn(&InterferometerSettings, f64) -> InterferometerSettings,
) -> Result<ScanCurve> {
    settings.validate()?;
    let root = match backend {
        Backend::MonteCarlo(mc) => SeedPath::root(mc.seed),
        Backend::Oracle => SeedPath::root(0),
    }
    .named(experiment);
    let points = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let s = apply(settings, x);
            let (y, yerr) = subtracted_point(&s, flux, backend, root.child(i as u64))?;
            Ok(ScanPoint {
                x,
                y,
                yerr,
                flagged: s.regime() == Regime::OutOfRegime,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScanCurve::new(
        variable,
        points,
        *settings,
        estimator_label(backend, flux),
        flux,
    )
}

/// Background-subtracted joint statistic versus differential delay.
pub fn delay_scan(
    settings: &InterferometerSettings,
    delta_t_grid: &[f64],
    flux: Flux,
    backend: &Backend,
) -> Result<ScanCurve> {
    scan(
        "scan-delay",
        ScanVariable::DeltaT,
        settings,
        delta_t_grid,
        flux,
        backend,
        |s, dt| s.with_delay(dt),
    )
}

/// Background-subtracted joint statistic versus analyzer B angle at fixed
/// `θ_A`. Intended for `δt = 0`; otherwise the curve carries a note.
pub fn polarization_scan(
    settings: &InterferometerSettings,
    theta_b_grid: &[f64],
    flux: Flux,
    backend: &Backend,
) -> Result<ScanCurve> {
    let curve = scan(
        "scan-angle",
        ScanVariable::ThetaB,
        settings,
        theta_b_grid,
        flux,
        backend,
        |s, theta_b| s.with_angles(s.theta_a, theta_b),
    )?;
    Ok(if settings.delta_t != 0.0 {
        curve.with_note("delta_t != 0: the delay-dependent term adds to the sin^2 fringe")
    } else {
        curve
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityFit {
    pub visibility: f64,
    pub stderr: f64,
    /// Pedestal, amplitude and (delay scans only) Gaussian width of the
    /// fitted model.
    pub pedestal: f64,
    pub amplitude: f64,
    pub width: Option<f64>,
    pub width_stderr: Option<f64>,
}

/// Fits the curve's model shape and reports its visibility.
///
/// Delay scans fit `a + b·exp(−δt²/w²)` and report the baseline-referenced
/// visibility `|b|/a` (dip depth or peak height relative to the
/// large-delay level). Angle scans fit a `sin²` fringe on a pedestal and
/// report `(max − min)/(max + min)`.
pub fn visibility_of_curve(curve: &ScanCurve) -> Result<VisibilityFit> {
    let n = curve.points.len();
    if n < 5 {
        return Err(crate::fit::FitError::TooFewPoints { needed: 5, got: n }.into());
    }
    let xs = curve.xs();
    let ys = curve.ys();
    let errs: Vec<f64> = curve.points.iter().map(|p| p.yerr).collect();
    let sigmas = errs.iter().all(|&e| e > 0.0).then_some(errs.as_slice());
    match curve.variable {
        ScanVariable::DeltaT => {
            let fit = fit_gaussian_pedestal(&xs, &ys, sigmas)?;
            let [a, b, w] = fit.params;
            if !(a > 0.0) {
                return Err(Error::InvalidExtrema {
                    max: a.max(a + b),
                    min: a.min(a + b),
                });
            }
            let v = b.abs() / a;
            let (da, db) = (-b.abs() / (a * a), b.signum() / a);
            let c = &fit.covariance;
            let var = da * da * c[0][0] + db * db * c[1][1] + 2.0 * da * db * c[0][1];
            Ok(VisibilityFit {
                visibility: v,
                stderr: var.max(0.0).sqrt(),
                pedestal: a,
                amplitude: b,
                width: Some(w),
                width_stderr: Some(fit.stderr(2)),
            })
        }
        ScanVariable::AngleDiff | ScanVariable::ThetaB => {
            let fit = fit_fringe(&xs, &ys, sigmas)?;
            let [c0, c1, c2] = fit.params;
            let r = c1.hypot(c2);
            if !(c0 > 0.0) {
                return Err(Error::InvalidExtrema {
                    max: c0 + r,
                    min: c0 - r,
                });
            }
            let c = &fit.covariance;
            let var = if r > 0.0 {
                let g = [-r / (c0 * c0), c1 / (r * c0), c2 / (r * c0)];
                (0..3)
                    .flat_map(|i| (0..3).map(move |j| (i, j)))
                    .map(|(i, j)| g[i] * g[j] * c[i][j])
                    .sum::<f64>()
            } else {
                0.5 * (c[1][1] + c[2][2]) / (c0 * c0)
            };
            Ok(VisibilityFit {
                visibility: r / c0,
                stderr: var.max(0.0).sqrt(),
                pedestal: c0 - r,
                amplitude: 2.0 * r,
                width: None,
                width_stderr: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub s: f64,
    pub stderr: f64,
    pub angles: [(f64, f64); 4],
    pub correlations: [f64; 4],
    pub correlation_stderr: [f64; 4],
    /// Background-subtracted rates, ordered per pair as in
    /// [`oracle::complement_angles`].
    pub rates: [[f64; 4]; 4],
    pub rate_stderr: [[f64; 4]; 4],
    pub estimator_id: String,
}

/// Evaluates the 16 background-subtracted rates and combines them into
/// `S = |E₁ − E₂ + E₃ + E₄|`, propagating standard errors with the delta
/// method (rates are independent by construction).
pub fn chsh_experiment(
    settings: &InterferometerSettings,
    angles: &[(f64, f64); 4],
    flux: Flux,
    backend: &Backend,
) -> Result<ChshResult> {
    settings.validate()?;
    let root = match backend {
        Backend::MonteCarlo(mc) => SeedPath::root(mc.seed),
        Backend::Oracle => SeedPath::root(0),
    }
    .named("chsh");

    let mut rates = [[0.0; 4]; 4];
    let mut rate_stderr = [[0.0; 4]; 4];
    let mut correlations = [0.0; 4];
    let mut correlation_stderr = [0.0; 4];
    for (pair, &(theta_a, theta_b)) in angles.iter().enumerate() {
        for (k, (a, b)) in oracle::complement_angles(theta_a, theta_b)
            .into_iter()
            .enumerate()
        {
            let s = settings.with_angles(a, b);
            let (y, e) =
                subtracted_point(&s, flux, backend, root.child(pair as u64).child(k as u64))?;
            rates[pair][k] = y;
            rate_stderr[pair][k] = e;
        }
        let den: f64 = rates[pair].iter().sum();
        let e = oracle::correlation_from_rates(rates[pair]).ok_or(Error::ZeroChshDenominator {
            index: pair,
            theta_a,
            theta_b,
        })?;
        let signs = [1.0, 1.0, -1.0, -1.0];
        let var: f64 = (0..4)
            .map(|k| ((signs[k] - e) / den * rate_stderr[pair][k]).powi(2))
            .sum();
        correlations[pair] = e;
        correlation_stderr[pair] = var.sqrt();
    }
    let s = oracle::chsh_combine(correlations);
    let stderr = correlation_stderr.iter().map(|e| e * e).sum::<f64>().sqrt();
    Ok(ChshResult {
        s,
        stderr,
        angles: *angles,
        correlations,
        correlation_stderr,
        rates,
        rate_stderr,
        estimator_id: estimator_label(backend, flux),
    })
}

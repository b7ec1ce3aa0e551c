//! Monte Carlo photodetection.
//!
//! Each gate draws one speckle pair, turns it into the gated detector
//! energies `W_A`, `W_B`, and (when the estimator needs them) draws
//! conditionally independent Poisson counts with means `η W_K`. Low flux
//! reports counts; high flux reports rectangular-response photocurrent
//! samples `q n_K / T`.
//!
//! Three per-gate estimators of the joint statistic are available:
//!
//! * [`CoincidenceEstimator::Clicks`]: both detectors register at least one
//!   count (Bernoulli per gate).
//! * [`CoincidenceEstimator::Counts`]: the count product `n_A n_B`.
//! * [`CoincidenceEstimator::Conditional`]: `E[n_A n_B | fields] = μ_A μ_B`,
//!   with the detection noise integrated out.
//!
//! `Counts` and `Conditional` share the expectation `η² ⟨W_A W_B⟩` at every
//! flux; `Clicks` approaches it as `N → 0`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EnergyForm, InterferometerSettings, SpecklePair};
use crate::seed::{SeedPath, BATCH_SIZE};
use crate::stats::MeanAccumulator;

/// Which beam, if any, is blocked in front of its fiber tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockingMode {
    None,
    BlockPlus,
    BlockMinus,
}

impl BlockingMode {
    pub const ALL: [BlockingMode; 3] = [
        BlockingMode::None,
        BlockingMode::BlockPlus,
        BlockingMode::BlockMinus,
    ];

    #[inline]
    pub fn apply(self, speckle: SpecklePair) -> SpecklePair {
        match self {
            BlockingMode::None => speckle,
            BlockingMode::BlockPlus => SpecklePair {
                v_plus: Default::default(),
                ..speckle
            },
            BlockingMode::BlockMinus => SpecklePair {
                v_minus: Default::default(),
                ..speckle
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BlockingMode::None => "none",
            BlockingMode::BlockPlus => "block-plus",
            BlockingMode::BlockMinus => "block-minus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flux {
    /// Photon counting, `N ≪ 1`.
    Low,
    /// Shot-noise-limited photodiodes, `N ≫ 1`.
    High,
}

impl Flux {
    pub fn name(self) -> &'static str {
        match self {
            Flux::Low => "low",
            Flux::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoincidenceEstimator {
    Clicks,
    Counts,
    Conditional,
}

impl CoincidenceEstimator {
    /// `Conditional` at low flux, `Counts` (full shot noise) at high flux.
    pub fn default_for(flux: Flux) -> Self {
        match flux {
            Flux::Low => CoincidenceEstimator::Conditional,
            Flux::High => CoincidenceEstimator::Counts,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoincidenceEstimator::Clicks => "clicks",
            CoincidenceEstimator::Counts => "counts",
            CoincidenceEstimator::Conditional => "conditional",
        }
    }

    fn needs_counts(self) -> bool {
        !matches!(self, CoincidenceEstimator::Conditional)
    }
}

/// What the detectors produced in one gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialOutcome {
    Counts {
        a: u64,
        b: u64,
    },
    /// Photocurrent samples `i_K(0)` in amperes.
    Currents {
        a: f64,
        b: f64,
    },
}

impl TrialOutcome {
    pub fn flux(&self) -> Flux {
        match self {
            TrialOutcome::Counts { .. } => Flux::Low,
            TrialOutcome::Currents { .. } => Flux::High,
        }
    }

    pub fn counts(&self) -> Option<(u64, u64)> {
        match *self {
            TrialOutcome::Counts { a, b } => Some((a, b)),
            TrialOutcome::Currents { .. } => None,
        }
    }

    pub fn currents(&self) -> Option<(f64, f64)> {
        match *self {
            TrialOutcome::Currents { a, b } => Some((a, b)),
            TrialOutcome::Counts { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorId {
    #[serde(rename = "singles_A")]
    SinglesA,
    #[serde(rename = "singles_B")]
    SinglesB,
    #[serde(rename = "coincidence")]
    Coincidence,
    #[serde(rename = "crosscorr")]
    Crosscorr,
}

impl EstimatorId {
    pub fn joint(flux: Flux) -> Self {
        match flux {
            Flux::Low => EstimatorId::Coincidence,
            Flux::High => EstimatorId::Crosscorr,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::SinglesA => "singles_A",
            EstimatorId::SinglesB => "singles_B",
            EstimatorId::Coincidence => "coincidence",
            EstimatorId::Crosscorr => "crosscorr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_trials: u64,
    pub estimator_id: EstimatorId,
}

impl RunEstimate {
    fn from_accumulator(acc: &MeanAccumulator, estimator_id: EstimatorId, scale: f64) -> Self {
        RunEstimate {
            mean: scale * acc.mean(),
            stderr: scale * acc.stderr(),
            n_trials: acc.count(),
            estimator_id,
        }
    }

    /// Number of standard errors separating the estimate from `value`.
    pub fn z_score(&self, value: f64) -> f64 {
        let d = self.mean - value;
        if self.stderr > 0.0 {
            d / self.stderr
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }

    /// `|mean − value| ≤ k · stderr`.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Everything one run of `n_trials` gates estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimates {
    pub settings: InterferometerSettings,
    pub flux: Flux,
    pub blocking: BlockingMode,
    pub estimator: CoincidenceEstimator,
    /// Counts/gate (low flux) or amperes (high flux).
    pub singles_a: RunEstimate,
    pub singles_b: RunEstimate,
    /// Coincidences/gate (low flux) or `⟨i_A(0) i_B(0)⟩` in A² (high flux).
    pub joint: RunEstimate,
}

/// One gate: the detector means and what the detectors reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDraw {
    pub speckle: SpecklePair,
    /// `μ_K = η W_K`, expected counts.
    pub mean_counts: [f64; 2],
    /// Present unless the estimator integrates detection noise out.
    pub counts: Option<[u64; 2]>,
}

/// Per-settings precomputation for fast gate simulation.
#[derive(Debug, Clone, Copy)]
pub struct GateSimulator {
    form: EnergyForm,
    eta: f64,
    sigma: f64,
    /// Photocurrent per count, `q/T`.
    current_per_count: f64,
}

impl GateSimulator {
    pub fn new(settings: &InterferometerSettings) -> Result<Self> {
        settings.validate()?;
        Ok(GateSimulator {
            form: EnergyForm::for_settings(settings),
            eta: settings.eta,
            sigma: (0.5 * settings.mean_photons).sqrt(),
            current_per_count: settings.charge_q / settings.gate_t,
        })
    }

    pub fn current_per_count(&self) -> f64 {
        self.current_per_count
    }

    #[inline]
    pub fn sample_speckle<R: Rng + ?Sized>(&self, rng: &mut R) -> SpecklePair {
        SpecklePair::sample_unchecked(rng, self.sigma)
    }

    #[inline]
    pub fn mean_counts(&self, speckle: &SpecklePair) -> [f64; 2] {
        let [wa, wb] = self.form.energies(speckle);
        // Rounding can leave a tiny negative energy when the cross term
        // cancels the diagonal ones.
        [(self.eta * wa).max(0.0), (self.eta * wb).max(0.0)]
    }

    /// Draws Poisson counts for a given field realization.
    #[inline]
    pub fn detect<R: Rng + ?Sized>(&self, rng: &mut R, speckle: &SpecklePair) -> [u64; 2] {
        let [ma, mb] = self.mean_counts(speckle);
        [poisson(rng, ma), poisson(rng, mb)]
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        blocking: BlockingMode,
        with_counts: bool,
    ) -> GateDraw {
        let speckle = blocking.apply(self.sample_speckle(rng));
        let mean_counts = self.mean_counts(&speckle);
        let counts =
            with_counts.then(|| [poisson(rng, mean_counts[0]), poisson(rng, mean_counts[1])]);
        GateDraw {
            speckle,
            mean_counts,
            counts,
        }
    }
}

#[inline]
fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    // `Poisson::new` only fails for non-positive or non-finite means.
    Poisson::new(mean).map_or(0, |d| d.sample(rng) as u64)
}

/// Per-gate values `(singles_A, singles_B, joint)` in counts units.
#[inline]
fn gate_values(draw: &GateDraw, estimator: CoincidenceEstimator) -> [f64; 3] {
    match (estimator, draw.counts) {
        (CoincidenceEstimator::Conditional, _) | (_, None) => {
            let [a, b] = draw.mean_counts;
            [a, b, a * b]
        }
        (CoincidenceEstimator::Counts, Some([a, b])) => {
            let (a, b) = (a as f64, b as f64);
            [a, b, a * b]
        }
        (CoincidenceEstimator::Clicks, Some([a, b])) => {
            let (a, b) = ((a > 0) as u8 as f64, (b > 0) as u8 as f64);
            [a, b, a * b]
        }
    }
}

/// One low-flux gate: speckle, blocking, Poisson counts.
pub fn simulate_gate_lowflux<R: Rng + ?Sized>(
    settings: &InterferometerSettings,
    rng: &mut R,
    blocking: BlockingMode,
) -> Result<TrialOutcome> {
    let sim = GateSimulator::new(settings)?;
    let draw = sim.draw(rng, blocking, true);
    let [a, b] = draw.counts.unwrap_or_default();
    Ok(TrialOutcome::Counts { a, b })
}

/// One high-flux gate: the rectangular-response photocurrents at `t = 0`,
/// `i_K(0) = q n_K / T`.
pub fn simulate_gate_highflux<R: Rng + ?Sized>(
    settings: &InterferometerSettings,
    rng: &mut R,
    blocking: BlockingMode,
) -> Result<TrialOutcome> {
    let sim = GateSimulator::new(settings)?;
    let draw = sim.draw(rng, blocking, true);
    let [a, b] = draw.counts.unwrap_or_default();
    let scale = sim.current_per_count();
    Ok(TrialOutcome::Currents {
        a: scale * a as f64,
        b: scale * b as f64,
    })
}

#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    singles_a: MeanAccumulator,
    singles_b: MeanAccumulator,
    joint: MeanAccumulator,
}

impl Partial {
    fn push(&mut self, [a, b, j]: [f64; 3]) {
        self.singles_a.push(a);
        self.singles_b.push(b);
        self.joint.push(j);
    }

    fn merge(&mut self, other: &Partial) {
        self.singles_a.merge(&other.singles_a);
        self.singles_b.merge(&other.singles_b);
        self.joint.merge(&other.joint);
    }
}

fn batch_len(n_trials: u64, batch: u64) -> u64 {
    (n_trials - batch * BATCH_SIZE).min(BATCH_SIZE)
}

fn run_batch(
    sim: &GateSimulator,
    seed: SeedPath,
    batch: u64,
    n_trials: u64,
    blocking: BlockingMode,
    estimator: CoincidenceEstimator,
) -> Partial {
    let mut rng = seed.batch_rng(batch);
    let mut partial = Partial::default();
    let with_counts = estimator.needs_counts();
    for _ in 0..batch_len(n_trials, batch) {
        let draw = sim.draw(&mut rng, blocking, with_counts);
        partial.push(gate_values(&draw, estimator));
    }
    partial
}

fn merge_in_order(partials: &[Partial]) -> Partial {
    let mut total = Partial::default();
    for p in partials {
        total.merge(p);
    }
    total
}

/// Sample-mean estimates of singles and the joint statistic over
/// `n_trials` gates. Batch `k` of `BATCH_SIZE` gates reads rng stream `k`
/// of `seed`, and batches are merged in index order, so the result is
/// independent of thread scheduling.
pub fn estimate_rates(
    settings: &InterferometerSettings,
    n_trials: u64,
    flux: Flux,
    blocking: BlockingMode,
    estimator: CoincidenceEstimator,
    seed: SeedPath,
) -> Result<RateEstimates> {
    if n_trials < 2 {
        return Err(Error::TooFewTrials(n_trials));
    }
    let sim = GateSimulator::new(settings)?;
    let batches = n_trials.div_ceil(BATCH_SIZE);
    let partials: Vec<Partial> = (0..batches)
        .into_par_iter()
        .map(|k| run_batch(&sim, seed, k, n_trials, blocking, estimator))
        .collect();
    Ok(finish(
        settings,
        flux,
        blocking,
        estimator,
        &sim,
        &merge_in_order(&partials),
    ))
}

fn finish(
    settings: &InterferometerSettings,
    flux: Flux,
    blocking: BlockingMode,
    estimator: CoincidenceEstimator,
    sim: &GateSimulator,
    total: &Partial,
) -> RateEstimates {
    let scale = match flux {
        Flux::Low => 1.0,
        Flux::High => sim.current_per_count(),
    };
    RateEstimates {
        settings: *settings,
        flux,
        blocking,
        estimator,
        singles_a: RunEstimate::from_accumulator(&total.singles_a, EstimatorId::SinglesA, scale),
        singles_b: RunEstimate::from_accumulator(&total.singles_b, EstimatorId::SinglesB, scale),
        joint: RunEstimate::from_accumulator(&total.joint, EstimatorId::joint(flux), scale * scale),
    }
}

/// `C̃ = C(none) − C(block₋) − C(block₊)` from three independent runs, with
/// standard errors added in quadrature.
pub fn subtract_background(
    run_none: &RateEstimates,
    run_block_plus: &RateEstimates,
    run_block_minus: &RateEstimates,
) -> Result<RunEstimate> {
    let expected = [
        (run_none, BlockingMode::None),
        (run_block_plus, BlockingMode::BlockPlus),
        (run_block_minus, BlockingMode::BlockMinus),
    ];
    for (run, mode) in expected {
        if run.blocking != mode {
            return Err(Error::MismatchedRuns(format!(
                "expected a {} run, got {}",
                mode.name(),
                run.blocking.name()
            )));
        }
    }
    for run in [run_block_plus, run_block_minus] {
        if run.settings != run_none.settings {
            return Err(Error::MismatchedRuns("settings differ".into()));
        }
        if run.flux != run_none.flux {
            return Err(Error::MismatchedRuns("flux modes differ".into()));
        }
        if run.estimator != run_none.estimator {
            return Err(Error::MismatchedRuns("estimators differ".into()));
        }
    }
    let (f, p, m) = (run_none.joint, run_block_plus.joint, run_block_minus.joint);
    Ok(RunEstimate {
        mean: f.mean - m.mean - p.mean,
        stderr: (f.stderr * f.stderr + p.stderr * p.stderr + m.stderr * m.stderr).sqrt(),
        n_trials: f.n_trials.min(p.n_trials).min(m.n_trials),
        estimator_id: f.estimator_id,
    })
}

/// How the three runs of the background protocol share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackgroundProtocol {
    /// Separate measurements with independent rng streams, as in the lab.
    #[default]
    Independent,
    /// One speckle draw per gate feeds all three blocking modes; the standard
    /// error comes from per-gate differences. A variance-reduction device,
    /// not a physical procedure.
    CommonRandomNumbers,
}

/// Results of the full / block₊ / block₋ protocol at one setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundRun {
    pub full: RunEstimate,
    pub block_plus: RunEstimate,
    pub block_minus: RunEstimate,
    pub subtracted: RunEstimate,
    /// Singles from the unblocked run.
    pub singles: [RunEstimate; 2],
}

/// Runs the beam-blocking background protocol and returns the
/// background-subtracted joint statistic.
pub fn estimate_subtracted(
    settings: &InterferometerSettings,
    n_trials: u64,
    flux: Flux,
    estimator: CoincidenceEstimator,
    seed: SeedPath,
    protocol: BackgroundProtocol,
) -> Result<BackgroundRun> {
    match protocol {
        BackgroundProtocol::Independent => {
            let run = |mode: BlockingMode| {
                estimate_rates(
                    settings,
                    n_trials,
                    flux,
                    mode,
                    estimator,
                    seed.named(mode.name()),
                )
            };
            let none = run(BlockingMode::None)?;
            let plus = run(BlockingMode::BlockPlus)?;
            let minus = run(BlockingMode::BlockMinus)?;
            Ok(BackgroundRun {
                full: none.joint,
                block_plus: plus.joint,
                block_minus: minus.joint,
                subtracted: subtract_background(&none, &plus, &minus)?,
                singles: [none.singles_a, none.singles_b],
            })
        }
        BackgroundProtocol::CommonRandomNumbers => {
            estimate_subtracted_paired(settings, n_trials, flux, estimator, seed.named("paired"))
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PairedPartial {
    runs: [Partial; 3],
    difference: MeanAccumulator,
}

fn estimate_subtracted_paired(
    settings: &InterferometerSettings,
    n_trials: u64,
    flux: Flux,
    estimator: CoincidenceEstimator,
    seed: SeedPath,
) -> Result<BackgroundRun> {
    if n_trials < 2 {
        return Err(Error::TooFewTrials(n_trials));
    }
    let sim = GateSimulator::new(settings)?;
    let with_counts = estimator.needs_counts();
    let partials: Vec<PairedPartial> = (0..n_trials.div_ceil(BATCH_SIZE))
        .into_par_iter()
        .map(|k| {
            let mut rng = seed.batch_rng(k);
            let mut acc = PairedPartial::default();
            for _ in 0..batch_len(n_trials, k) {
                let speckle = sim.sample_speckle(&mut rng);
                let mut joint = [0.0; 3];
                for (i, mode) in BlockingMode::ALL.into_iter().enumerate() {
                    let blocked = mode.apply(speckle);
                    let mean_counts = sim.mean_counts(&blocked);
                    let counts = with_counts.then(|| {
                        [
                            poisson(&mut rng, mean_counts[0]),
                            poisson(&mut rng, mean_counts[1]),
                        ]
                    });
                    let draw = GateDraw {
                        speckle: blocked,
                        mean_counts,
                        counts,
                    };
                    let values = gate_values(&draw, estimator);
                    joint[i] = values[2];
                    acc.runs[i].push(values);
                }
                acc.difference.push(joint[0] - joint[1] - joint[2]);
            }
            acc
        })
        .collect();

    let mut total = PairedPartial::default();
    for p in &partials {
        for (t, r) in total.runs.iter_mut().zip(&p.runs) {
            t.merge(r);
        }
        total.difference.merge(&p.difference);
    }
    let [none, plus, minus] = BlockingMode::ALL.map(|mode| {
        finish(
            settings,
            flux,
            mode,
            estimator,
            &sim,
            &total.runs[mode as usize],
        )
    });
    let scale = match flux {
        Flux::Low => 1.0,
        Flux::High => sim.current_per_count().powi(2),
    };
    Ok(BackgroundRun {
        full: none.joint,
        block_plus: plus.joint,
        block_minus: minus.joint,
        subtracted: RunEstimate::from_accumulator(
            &total.difference,
            EstimatorId::joint(flux),
            scale,
        ),
        singles: [none.singles_a, none.singles_b],
    })
}

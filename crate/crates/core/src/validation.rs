//! Oracle-versus-Monte-Carlo checks run by the `validate` experiment.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::engine::{
    estimate_rates, estimate_subtracted, BackgroundProtocol, BlockingMode, CoincidenceEstimator,
    Flux, GateSimulator,
};
use crate::error::Result;
use crate::model::{GateOverlaps, InterferometerSettings};
use crate::oracle;
use crate::seed::SeedPath;
use crate::stats::{family_z_bound, MeanAccumulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed deviation, in the units of `threshold`.
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, statistic: f64, threshold: f64, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed: statistic <= threshold,
            statistic,
            threshold,
            detail,
        }
    }
}

/// Five evenly spaced values in `[0, π)` for each analyzer.
pub fn angle_grid() -> [f64; 5] {
    std::array::from_fn(|i| i as f64 * PI / 5.0)
}

/// Five delays over `±3τ_p`.
pub fn delay_grid(tau_p: f64) -> [f64; 5] {
    std::array::from_fn(|i| (i as f64 - 2.0) * 1.5 * tau_p)
}

/// Runs every check. `n_trials` gates per low-flux run; high-flux runs use
/// a tenth of that.
pub fn validation_suite(
    base: &InterferometerSettings,
    n_trials: u64,
    seed: u64,
) -> Result<Vec<CheckResult>> {
    let root = SeedPath::root(seed).named("validate");
    let low = InterferometerSettings {
        mean_photons: 0.01,
        ..*base
    };
    let high = InterferometerSettings {
        mean_photons: 100.0,
        ..*base
    };
    let high_trials = (n_trials / 10).max(2);
    let mut checks = Vec::new();

    let grid: Vec<InterferometerSettings> = angle_grid()
        .into_iter()
        .flat_map(|a| angle_grid().into_iter().map(move |b| (a, b)))
        .flat_map(|(a, b)| {
            delay_grid(base.pulse.tau_p)
                .into_iter()
                .map(move |dt| (a, b, dt))
        })
        .map(|(a, b, dt)| low.with_angles(a, b).with_delay(dt))
        .collect();

    // Closed-form bracket vs the general overlap expression.
    let worst = grid
        .iter()
        .map(|s| {
            let o = GateOverlaps::quadrature(s);
            let (sa, ca) = s.theta_a.sin_cos();
            let (sb, cb) = s.theta_b.sin_cos();
            let general = (ca * ca * sb * sb * o.plus * o.minus
                + cb * cb * sa * sa * o.minus * o.plus)
                - 2.0 * ca * cb * sa * sb * o.cross * o.cross;
            let closed =
                oracle::interference_bracket(s.theta_a, s.theta_b, s.delta_t, s.pulse.tau_p);
            (general - closed).abs()
        })
        .fold(0.0, f64::max);
    checks.push(CheckResult::new(
        "trig-reduction",
        worst,
        1e-9,
        "max |bracket(closed) - bracket(overlap integrals)| over 5x5x5 grid".into(),
    ));

    // Low-flux convergence of the subtracted rate.
    let scale = 0.25 * (low.eta * low.mean_photons).powi(2);
    let mut worst = 0.0f64;
    for (i, s) in grid.iter().enumerate() {
        let run = estimate_subtracted(
            s,
            n_trials,
            Flux::Low,
            CoincidenceEstimator::default_for(Flux::Low),
            root.named("low").child(i as u64),
            BackgroundProtocol::Independent,
        )?;
        let tol = (3.0 * run.subtracted.stderr).max(0.02 * scale);
        worst = worst.max((run.subtracted.mean - oracle::coincidence_subtracted(s)).abs() / tol);
    }
    checks.push(CheckResult::new(
        "low-flux-convergence",
        worst,
        1.0,
        "max |MC - oracle| / max(3 stderr, 0.02 eta^2 N^2/4) over 5x5x5 grid".into(),
    ));

    // High-flux convergence, normalized by q^2 eta^2 N^2 / 4T^2.
    let norm = (high.charge_q * high.eta * high.mean_photons / high.gate_t).powi(2) / 4.0;
    let mut worst = 0.0f64;
    for (i, s) in grid.iter().enumerate() {
        let s = InterferometerSettings {
            mean_photons: high.mean_photons,
            ..*s
        };
        let run = estimate_subtracted(
            &s,
            high_trials,
            Flux::High,
            CoincidenceEstimator::default_for(Flux::High),
            root.named("high").child(i as u64),
            BackgroundProtocol::Independent,
        )?;
        let want = oracle::photocurrent_crosscorr(&s).crosscorr_subtracted;
        worst = worst.max(run.subtracted.z_score(want).abs());
    }
    checks.push(CheckResult::new(
        "high-flux-convergence",
        worst,
        3.0,
        format!("max |z| of the subtracted cross-correlation against the oracle over 5x5x5 grid (norm {norm:.4e} A^2)"),
    ));

    // Detection noise carries no correlation once the fields are fixed.
    let mut rng = root.named("independence").batch_rng(0);
    let sim = GateSimulator::new(&high)?;
    let speckle = sim.sample_speckle(&mut rng);
    let mut acc = [MeanAccumulator::default(); 2];
    let mut product = MeanAccumulator::default();
    for _ in 0..high_trials {
        let [a, b] = sim.detect(&mut rng, &speckle).map(|c| c as f64);
        acc[0].push(a);
        acc[1].push(b);
        product.push(a * b);
    }
    let cov = product.mean() - acc[0].mean() * acc[1].mean();
    let corr = cov / (acc[0].variance() * acc[1].variance()).sqrt();
    checks.push(CheckResult::new(
        "conditional-independence",
        corr.abs() * (high_trials as f64).sqrt(),
        3.0,
        format!("|corr(n_A, n_B)| * sqrt(n) with one speckle draw held fixed (corr = {corr:.3e})"),
    ));

    // Singles flatness and background consistency on the angle grid.
    let mut worst_singles = 0.0f64;
    let mut worst_background = 0.0f64;
    let estimator = CoincidenceEstimator::default_for(Flux::Low);
    for (i, &a) in angle_grid().iter().enumerate() {
        for (j, &b) in angle_grid().iter().enumerate() {
            let s = low.with_angles(a, b);
            let key = root.named("background").child((5 * i + j) as u64);
            let none = estimate_rates(
                &s,
                n_trials,
                Flux::Low,
                BlockingMode::None,
                estimator,
                key.named("none"),
            )?;
            let expected = oracle::singles_rates(&s);
            for (est, want) in [(none.singles_a, expected[0]), (none.singles_b, expected[1])] {
                worst_singles = worst_singles.max(est.z_score(want).abs());
            }
            let plus = estimate_rates(
                &s,
                n_trials,
                Flux::Low,
                BlockingMode::BlockPlus,
                estimator,
                key.named("plus"),
            )?;
            let minus = estimate_rates(
                &s,
                n_trials,
                Flux::Low,
                BlockingMode::BlockMinus,
                estimator,
                key.named("minus"),
            )?;
            let sum = plus.joint.mean + minus.joint.mean;
            let err = plus.joint.stderr.hypot(minus.joint.stderr);
            let want = oracle::self_correlation(&s);
            worst_background =
                worst_background.max((sum - want).abs() / err.max(f64::MIN_POSITIVE));
        }
    }
    let bound = family_z_bound(2 * 25);
    checks.push(CheckResult::new(
        "singles-flatness",
        worst_singles,
        bound,
        "max |z| of 50 MC singles against eta N / 2 over 5x5 angles; bound is the family-wise 3-sigma level".into(),
    ));
    checks.push(CheckResult::new(
        "background-consistency",
        worst_background,
        3.0,
        "max |z| of C(block+) + C(block-) against the self-correlation over 5x5 angles".into(),
    ));

    let s = oracle::chsh_s(&low, &oracle::CANONICAL_CHSH_ANGLES)?;
    checks.push(CheckResult::new(
        "chsh-oracle",
        (s - 2.0 * SQRT_2).abs(),
        1e-12,
        format!("S = {s:.15}"),
    ));

    let probe = low.with_angles(0.3, 0.3 + FRAC_PI_2);
    let rerun = || {
        estimate_subtracted(
            &probe,
            10_000,
            Flux::Low,
            estimator,
            root.named("determinism"),
            BackgroundProtocol::Independent,
        )
    };
    let (x, y) = (rerun()?, rerun()?);
    let identical = x.subtracted.mean.to_bits() == y.subtracted.mean.to_bits()
        && x.subtracted.stderr.to_bits() == y.subtracted.stderr.to_bits();
    checks.push(CheckResult::new(
        "determinism",
        if identical { 0.0 } else { 1.0 },
        0.0,
        "two runs with one seed are bit-identical".into(),
    ));

    Ok(checks)
}

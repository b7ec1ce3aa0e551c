use std::f64::consts::FRAC_PI_4;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pseudobell::engine::{
    estimate_rates, estimate_subtracted, simulate_gate_highflux, simulate_gate_lowflux,
    subtract_background, BackgroundProtocol, BlockingMode, CoincidenceEstimator, Flux,
    GateSimulator, TrialOutcome,
};
use pseudobell::model::{InterferometerSettings, SpecklePair};
use pseudobell::oracle;
use pseudobell::seed::SeedPath;
use pseudobell::Error;

const K: f64 = 6.25e-6;

fn low(theta_a: f64, theta_b: f64) -> InterferometerSettings {
    InterferometerSettings::default().with_angles(theta_a, theta_b)
}

#[test]
fn bernoulli_clicks_see_only_background_at_equal_diagonal_analyzers() {
    let s = low(FRAC_PI_4, FRAC_PI_4);
    let run = estimate_rates(
        &s,
        1_000_000,
        Flux::Low,
        BlockingMode::None,
        CoincidenceEstimator::Clicks,
        SeedPath::root(1),
    )
    .unwrap();
    let want = oracle::coincidence_full(&s).coincidence_full;
    assert!((want - K).abs() < 1e-18);
    assert!(run.joint.within(want, 3.0), "{:?}", run.joint);
}

#[test]
fn singles_sit_at_half_the_detected_photons() {
    let s = low(0.9, 2.2);
    let run = estimate_rates(
        &s,
        1_000_000,
        Flux::Low,
        BlockingMode::None,
        CoincidenceEstimator::Counts,
        SeedPath::root(2),
    )
    .unwrap();
    assert!(run.singles_a.within(2.5e-3, 3.0), "{:?}", run.singles_a);
    assert!(run.singles_b.within(2.5e-3, 3.0), "{:?}", run.singles_b);
}

#[test]
fn high_flux_mean_current() {
    let s = InterferometerSettings {
        mean_photons: 1e4,
        ..low(0.0, 0.0)
    };
    let run = estimate_rates(
        &s,
        100_000,
        Flux::High,
        BlockingMode::None,
        CoincidenceEstimator::Counts,
        SeedPath::root(3),
    )
    .unwrap();
    let want = s.charge_q * s.eta * s.mean_photons / (2.0 * s.gate_t);
    assert!(
        run.singles_a.within(want, 3.0),
        "{:?} vs {want:e}",
        run.singles_a
    );

    let s = InterferometerSettings {
        mean_photons: 100.0,
        charge_q: 1.602e-19,
        ..low(0.0, 0.0)
    };
    let run = estimate_rates(
        &s,
        100_000,
        Flux::High,
        BlockingMode::None,
        CoincidenceEstimator::Counts,
        SeedPath::root(4),
    )
    .unwrap();
    assert!(run.singles_a.within(4.005e-9, 3.0), "{:?}", run.singles_a);
}

#[test]
fn fixed_speckle_gives_poisson_shot_noise() {
    let s = InterferometerSettings {
        mean_photons: 100.0,
        ..low(0.4, 1.1)
    };
    let sim = GateSimulator::new(&s).unwrap();
    let speckle = SpecklePair {
        v_plus: num_complex::Complex64::new(6.0, 3.0),
        v_minus: num_complex::Complex64::new(-4.0, 5.0),
    };
    let [mu_a, mu_b] = sim.mean_counts(&speckle);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let (mut sa, mut saa, mut sb, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let [a, b] = sim.detect(&mut rng, &speckle).map(|c| c as f64);
        sa += a;
        saa += a * a;
        sb += b;
        sbb += b * b;
        sab += a * b;
    }
    let nf = n as f64;
    let (ma, mb) = (sa / nf, sb / nf);
    let (va, vb) = (saa / nf - ma * ma, sbb / nf - mb * mb);
    for (m, v, mu) in [(ma, va, mu_a), (mb, vb, mu_b)] {
        assert!((m - mu).abs() < 3.0 * (mu / nf).sqrt(), "mean {m} vs {mu}");
        let rel_sd = ((1.0 / mu + 2.0) / nf).sqrt();
        assert!((v / mu - 1.0).abs() < 3.0 * rel_sd, "variance {v} vs {mu}");
    }
    // Detection noise is independent between detectors given the fields.
    let corr = (sab / nf - ma * mb) / (va * vb).sqrt();
    assert!(corr.abs() < 3.0 / nf.sqrt(), "corr {corr}");
}

#[test]
fn single_gate_simulators_report_the_right_units() {
    let s = low(0.3, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let out = simulate_gate_lowflux(&s, &mut rng, BlockingMode::None).unwrap();
    assert!(matches!(out, TrialOutcome::Counts { .. }));
    let hi = InterferometerSettings {
        mean_photons: 1e3,
        ..s
    };
    match simulate_gate_highflux(&hi, &mut rng, BlockingMode::BlockMinus).unwrap() {
        TrialOutcome::Currents { a, b } => {
            let quantum = hi.charge_q / hi.gate_t;
            assert!((a / quantum).fract().abs() < 1e-9 && (b / quantum).fract().abs() < 1e-9);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn stderr_halves_when_trials_quadruple() {
    let s = low(0.2, 1.4);
    for estimator in [
        CoincidenceEstimator::Clicks,
        CoincidenceEstimator::Counts,
        CoincidenceEstimator::Conditional,
    ] {
        let run = |n| {
            estimate_rates(
                &s,
                n,
                Flux::Low,
                BlockingMode::None,
                estimator,
                SeedPath::root(8),
            )
            .unwrap()
        };
        let (small, big) = (run(250_000), run(1_000_000));
        let ratio = small.joint.stderr / big.joint.stderr;
        assert!(
            (1.4..=2.6).contains(&ratio),
            "{} ratio {ratio}",
            estimator.name()
        );
    }
}

#[test]
fn too_few_trials_are_rejected() {
    let s = low(0.0, 0.0);
    let err = estimate_rates(
        &s,
        1,
        Flux::Low,
        BlockingMode::None,
        CoincidenceEstimator::Counts,
        SeedPath::root(0),
    );
    assert!(matches!(err, Err(Error::TooFewTrials(1))));
}

#[test]
fn subtraction_vanishes_for_aligned_horizontal_analyzers() {
    let s = low(0.0, 0.0);
    for estimator in [
        CoincidenceEstimator::Counts,
        CoincidenceEstimator::Conditional,
    ] {
        let run = estimate_subtracted(
            &s,
            1_000_000,
            Flux::Low,
            estimator,
            SeedPath::root(9),
            BackgroundProtocol::Independent,
        )
        .unwrap();
        assert!(
            run.subtracted.within(0.0, 3.0),
            "{} {:?}",
            estimator.name(),
            run.subtracted
        );
    }
}

#[test]
fn crossed_diagonal_analyzers_give_the_full_peak() {
    let s = low(FRAC_PI_4, 3.0 * FRAC_PI_4);
    assert!((oracle::coincidence_subtracted(&s) - K).abs() < 1e-18);
    let run = estimate_subtracted(
        &s,
        10_000_000,
        Flux::Low,
        CoincidenceEstimator::Conditional,
        SeedPath::root(10),
        BackgroundProtocol::Independent,
    )
    .unwrap();
    assert!(run.subtracted.within(K, 3.0), "{:?}", run.subtracted);
}

#[test]
fn paired_background_protocol_agrees_with_independent_runs() {
    let s = low(0.5, 1.7).with_delay(200e-15);
    let want = oracle::coincidence_subtracted(&s);
    let paired = estimate_subtracted(
        &s,
        1_000_000,
        Flux::Low,
        CoincidenceEstimator::Conditional,
        SeedPath::root(12),
        BackgroundProtocol::CommonRandomNumbers,
    )
    .unwrap();
    assert!(
        paired.subtracted.within(want, 3.0),
        "{:?} vs {want:e}",
        paired.subtracted
    );
    let background = oracle::self_correlation(&s);
    let sum = paired.block_plus.mean + paired.block_minus.mean;
    assert!(
        (sum - background).abs() < 3.0 * paired.block_plus.stderr.hypot(paired.block_minus.stderr)
    );
}

#[test]
fn subtraction_refuses_mismatched_runs() {
    let s = low(0.1, 0.2);
    let run = |mode, settings: &InterferometerSettings| {
        estimate_rates(
            settings,
            1000,
            Flux::Low,
            mode,
            CoincidenceEstimator::Counts,
            SeedPath::root(1),
        )
        .unwrap()
    };
    let none = run(BlockingMode::None, &s);
    let plus = run(BlockingMode::BlockPlus, &s);
    let minus = run(BlockingMode::BlockMinus, &s);
    assert!(subtract_background(&none, &plus, &minus).is_ok());
    assert!(subtract_background(&plus, &none, &minus).is_err());
    let other = run(BlockingMode::BlockMinus, &low(0.1, 0.3));
    assert!(subtract_background(&none, &plus, &other).is_err());
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let s = low(0.7, 0.2).with_delay(-300e-15);
    let go = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                estimate_subtracted(
                    &s,
                    300_000,
                    Flux::Low,
                    CoincidenceEstimator::Counts,
                    SeedPath::root(77),
                    BackgroundProtocol::Independent,
                )
                .unwrap()
            })
    };
    let (one, four) = (go(1), go(4));
    assert_eq!(
        one.subtracted.mean.to_bits(),
        four.subtracted.mean.to_bits()
    );
    assert_eq!(
        one.subtracted.stderr.to_bits(),
        four.subtracted.stderr.to_bits()
    );
    assert_eq!(
        one.singles[0].mean.to_bits(),
        four.singles[0].mean.to_bits()
    );
}

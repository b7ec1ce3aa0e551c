//! Closed-form singles, coincidence and photocurrent statistics.
//!
//! In the asymptotic regime (`|δt|/2 + 8τ_p ≤ T/2`) every quantity reduces to
//! the familiar closed forms: singles `ηN/2`, background-subtracted
//! coincidences `(η²N²/4)[sin²(θ_A−θ_B) + ½ sin2θ_A sin2θ_B (1 − e^{−δt²/τ_p²})]`,
//! and the same bracket scaled by `q²/T²` for photocurrent cross-correlations.
//! Outside that regime the gate truncates the pulses and the oracle falls back
//! to the general expressions evaluated with gate-limited overlap integrals.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GateOverlaps, InterferometerSettings, Regime};

/// Low-flux rates, all per gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet {
    pub singles_a: f64,
    pub singles_b: f64,
    pub coincidence_full: f64,
    pub self_correlation: f64,
    pub coincidence_subtracted: f64,
    pub regime: Regime,
}

/// High-flux photocurrent moments with a rectangular impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhotocurrentSet {
    /// Amperes.
    pub mean_a: f64,
    pub mean_b: f64,
    /// Square amperes.
    pub crosscorr_full: f64,
    pub self_correlation: f64,
    pub crosscorr_subtracted: f64,
    pub regime: Regime,
}

/// `sin²(θ_A−θ_B) + ½ sin 2θ_A sin 2θ_B (1 − e^{−δt²/τ_p²})`.
pub fn interference_bracket(theta_a: f64, theta_b: f64, delta_t: f64, tau_p: f64) -> f64 {
    let d = (theta_a - theta_b).sin();
    let r = delta_t / tau_p;
    d * d + 0.5 * (2.0 * theta_a).sin() * (2.0 * theta_b).sin() * (-(r * r)).exp_m1().abs()
}

fn trig(settings: &InterferometerSettings) -> (f64, f64, f64, f64) {
    let (sa, ca) = settings.theta_a.sin_cos();
    let (sb, cb) = settings.theta_b.sin_cos();
    (ca, sa, cb, sb)
}

/// Mean counts per gate at detector A and B.
pub fn singles_rates(settings: &InterferometerSettings) -> [f64; 2] {
    let en = settings.eta * settings.mean_photons;
    match settings.regime() {
        Regime::Asymptotic => [0.5 * en, 0.5 * en],
        Regime::OutOfRegime => {
            let o = GateOverlaps::quadrature(settings);
            let (ca, sa, cb, sb) = trig(settings);
            [
                0.5 * en * (ca * ca * o.plus + sa * sa * o.minus),
                0.5 * en * (cb * cb * o.plus + sb * sb * o.minus),
            ]
        }
    }
}

/// Background-subtracted coincidences per gate.
pub fn coincidence_subtracted(settings: &InterferometerSettings) -> f64 {
    let scale = 0.25 * (settings.eta * settings.mean_photons).powi(2);
    match settings.regime() {
        Regime::Asymptotic => {
            scale
                * interference_bracket(
                    settings.theta_a,
                    settings.theta_b,
                    settings.delta_t,
                    settings.pulse.tau_p,
                )
        }
        Regime::OutOfRegime => scale * cross_terms(settings, &GateOverlaps::quadrature(settings)),
    }
}

/// `c_A² s_B² P M + c_B² s_A² M P − 2 c_A c_B s_A s_B X²`.
fn cross_terms(settings: &InterferometerSettings, o: &GateOverlaps) -> f64 {
    let (ca, sa, cb, sb) = trig(settings);
    (ca * ca * sb * sb + cb * cb * sa * sa) * o.plus * o.minus
        - 2.0 * ca * cb * sa * sb * o.cross * o.cross
}

/// Self-intensity coincidences, i.e. what the two beam-blocked runs add up to:
/// `(η²N²/2)(c_A² c_B² P² + s_A² s_B² M²)`, using `⟨|v|⁴⟩ = 2N²`.
pub fn self_correlation(settings: &InterferometerSettings) -> f64 {
    let o = GateOverlaps::for_settings(settings);
    let (ca, sa, cb, sb) = trig(settings);
    0.5 * (settings.eta * settings.mean_photons).powi(2)
        * (ca * ca * cb * cb * o.plus * o.plus + sa * sa * sb * sb * o.minus * o.minus)
}

pub fn coincidence_full(settings: &InterferometerSettings) -> RateSet {
    let [singles_a, singles_b] = singles_rates(settings);
    let self_correlation = self_correlation(settings);
    let coincidence_subtracted = coincidence_subtracted(settings);
    RateSet {
        singles_a,
        singles_b,
        coincidence_full: self_correlation + coincidence_subtracted,
        self_correlation,
        coincidence_subtracted,
        regime: settings.regime(),
    }
}

/// `(max − min)/(max + min)`.
pub fn visibility(max: f64, min: f64) -> Result<f64> {
    if max + min == 0.0 {
        return Err(Error::ZeroVisibilityDenominator);
    }
    if !(max >= min && min >= 0.0 && max > 0.0) {
        return Err(Error::InvalidExtrema { max, min });
    }
    Ok((max - min) / (max + min))
}

/// Average photocurrents `I⁽¹⁾_A`, `I⁽¹⁾_B` in amperes.
pub fn mean_photocurrents(settings: &InterferometerSettings) -> [f64; 2] {
    let scale = settings.charge_q / settings.gate_t;
    singles_rates(settings).map(|s| scale * s)
}

pub fn photocurrent_crosscorr(settings: &InterferometerSettings) -> PhotocurrentSet {
    let rates = coincidence_full(settings);
    let scale = settings.charge_q / settings.gate_t;
    let scale2 = scale * scale;
    PhotocurrentSet {
        mean_a: scale * rates.singles_a,
        mean_b: scale * rates.singles_b,
        crosscorr_full: scale2 * rates.coincidence_full,
        self_correlation: scale2 * rates.self_correlation,
        crosscorr_subtracted: scale2 * rates.coincidence_subtracted,
        regime: rates.regime,
    }
}

/// The four analyzer settings that enter one CHSH correlation:
/// `(a, b)`, `(a⊥, b⊥)`, `(a, b⊥)`, `(a⊥, b)` with `x⊥ = x + π/2`.
pub fn complement_angles(theta_a: f64, theta_b: f64) -> [(f64, f64); 4] {
    let a_perp = theta_a + FRAC_PI_2;
    let b_perp = theta_b + FRAC_PI_2;
    [
        (theta_a, theta_b),
        (a_perp, b_perp),
        (theta_a, b_perp),
        (a_perp, theta_b),
    ]
}

/// `E = (C₁ + C₂ − C₃ − C₄)/(C₁ + C₂ + C₃ + C₄)` over rates ordered as in
/// [`complement_angles`]; `None` when the denominator vanishes.
pub fn correlation_from_rates(rates: [f64; 4]) -> Option<f64> {
    let den: f64 = rates.iter().sum();
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    Some((rates[0] + rates[1] - rates[2] - rates[3]) / den)
}

/// `S = |E₁ − E₂ + E₃ + E₄|`.
pub fn chsh_combine(correlations: [f64; 4]) -> f64 {
    (correlations[0] - correlations[1] + correlations[2] + correlations[3]).abs()
}

/// Analyzer pairs `(a,b), (a,b'), (a',b), (a',b')` with `a=0, a'=π/4,
/// b=π/8, b'=3π/8`.
pub const CANONICAL_CHSH_ANGLES: [(f64, f64); 4] = [
    (0.0, FRAC_PI_8),
    (0.0, 3.0 * FRAC_PI_8),
    (FRAC_PI_4, FRAC_PI_8),
    (FRAC_PI_4, 3.0 * FRAC_PI_8),
];

/// The four correlations from background-subtracted coincidence rates.
pub fn chsh_correlations(
    base: &InterferometerSettings,
    angles: &[(f64, f64); 4],
) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (index, &(theta_a, theta_b)) in angles.iter().enumerate() {
        let rates = complement_angles(theta_a, theta_b)
            .map(|(a, b)| coincidence_subtracted(&base.with_angles(a, b)));
        out[index] = correlation_from_rates(rates).ok_or(Error::ZeroChshDenominator {
            index,
            theta_a,
            theta_b,
        })?;
    }
    Ok(out)
}

pub fn chsh_s(base: &InterferometerSettings, angles: &[(f64, f64); 4]) -> Result<f64> {
    chsh_correlations(base, angles).map(chsh_combine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    fn settings(theta_a: f64, theta_b: f64, delta_t: f64) -> InterferometerSettings {
        InterferometerSettings::default()
            .with_angles(theta_a, theta_b)
            .with_delay(delta_t)
    }

    const K: f64 = 0.25 * 0.5 * 0.5 * 0.01 * 0.01;

    #[test]
    fn singles_closed_form() {
        let s = settings(0.3, 1.1, 1e-12);
        assert_eq!(singles_rates(&s), [2.5e-3, 2.5e-3]);
        let t = settings(0.3 + PI / 3.0, 1.1, 1e-12);
        assert_eq!(singles_rates(&s), singles_rates(&t));
    }

    #[test]
    fn singles_truncated_gate() {
        let base = settings(0.0, 0.0, 0.0);
        let s = InterferometerSettings {
            gate_t: 2.0 * base.pulse.tau_p,
            ..base
        };
        let [a, _] = singles_rates(&s);
        // ηN/2 · erf(√2)
        assert!(rel(a, 2.5e-3 * 0.954_499_736_103_641_6) < 1e-12, "{a}");
    }

    #[test]
    fn subtracted_special_cases() {
        assert!(coincidence_subtracted(&settings(FRAC_PI_4, FRAC_PI_4, 0.0)).abs() < 1e-22);
        assert!(
            rel(
                coincidence_subtracted(&settings(FRAC_PI_4, 3.0 * FRAC_PI_4, 0.0)),
                K
            ) < 1e-14
        );
        assert!(
            rel(
                coincidence_subtracted(&settings(0.2, 0.2 + FRAC_PI_2, 0.0)),
                K
            ) < 1e-14
        );
        assert!(
            rel(
                coincidence_subtracted(&settings(FRAC_PI_4, FRAC_PI_4, 1e-10)),
                K / 2.0
            ) < 1e-14
        );
        assert_eq!(K, 6.25e-6);
    }

    #[test]
    fn full_rate_special_cases() {
        let r = coincidence_full(&settings(0.0, 0.0, 0.0));
        assert!(rel(r.self_correlation, 2.0 * K) < 1e-14);
        assert_eq!(r.coincidence_subtracted, 0.0);
        let r = coincidence_full(&settings(FRAC_PI_4, FRAC_PI_4, 0.0));
        assert!(rel(r.coincidence_full, K) < 1e-14);
        assert!(rel(r.self_correlation, K) < 1e-14);
    }

    #[test]
    fn visibility_arithmetic() {
        assert_eq!(visibility(K / 2.0, 0.0).unwrap(), 1.0);
        assert_eq!(visibility(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(visibility(3.0, 1.0).unwrap(), 0.5);
        assert_eq!(visibility(0.0, 0.0), Err(Error::ZeroVisibilityDenominator));
        assert!(visibility(1.0, 2.0).is_err());
    }

    #[test]
    fn photocurrent_means() {
        let s = InterferometerSettings {
            mean_photons: 100.0,
            charge_q: 1.602e-19,
            ..settings(0.4, 0.0, 0.0)
        };
        let [a, b] = mean_photocurrents(&s);
        assert!(rel(a, 4.005e-9) < 1e-12);
        assert_eq!(a, b);
        let other = InterferometerSettings { theta_a: 1.3, ..s };
        assert_eq!(mean_photocurrents(&other), [a, b]);
        let dark = InterferometerSettings {
            mean_photons: 0.0,
            ..s
        };
        assert_eq!(mean_photocurrents(&dark), [0.0, 0.0]);
    }

    #[test]
    fn photocurrent_crosscorr_values() {
        let s = InterferometerSettings {
            mean_photons: 100.0,
            ..settings(FRAC_PI_4, FRAC_PI_4, 0.0)
        };
        assert!(photocurrent_crosscorr(&s).crosscorr_subtracted.abs() < 1e-40);
        let s = s.with_angles(0.3, 0.3 + FRAC_PI_2);
        let q2 = (s.charge_q * s.eta * s.mean_photons / s.gate_t).powi(2) / 4.0;
        assert!(rel(photocurrent_crosscorr(&s).crosscorr_subtracted, q2) < 1e-14);
    }

    #[test]
    fn chsh_canonical() {
        let s = chsh_s(&settings(0.0, 0.0, 0.0), &CANONICAL_CHSH_ANGLES).unwrap();
        assert!((s - 2.0 * SQRT_2).abs() < 1e-12, "{s}");
    }

    #[test]
    fn chsh_degenerate_pairs() {
        let pair = (0.3, 0.9);
        let base = settings(0.0, 0.0, 0.0);
        let e = chsh_correlations(&base, &[pair; 4]).unwrap()[0];
        let s = chsh_s(&base, &[pair; 4]).unwrap();
        assert!((s - 2.0 * e.abs()).abs() < 1e-15);
        assert!(s <= 2.0);
    }

    #[test]
    fn chsh_zero_denominator() {
        let dark = InterferometerSettings {
            mean_photons: 0.0,
            ..settings(0.0, 0.0, 0.0)
        };
        match chsh_s(&dark, &CANONICAL_CHSH_ANGLES) {
            Err(Error::ZeroChshDenominator { index: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn chsh_degrades_with_delay() {
        let tau = InterferometerSettings::default().pulse.tau_p;
        let mut last = f64::INFINITY;
        for k in 0..=20 {
            let dt = tau * k as f64 * 0.25;
            let s = chsh_s(&settings(0.0, 0.0, dt), &CANONICAL_CHSH_ANGLES).unwrap();
            assert!(s <= 2.0 * SQRT_2 + 1e-12);
            assert!(s <= last + 1e-12, "S not monotone at {k}");
            last = s;
        }
        let s5 = chsh_s(&settings(0.0, 0.0, 5.0 * tau), &CANONICAL_CHSH_ANGLES).unwrap();
        assert!(s5 < 2.0 * SQRT_2);
    }

    #[test]
    fn out_of_regime_flagged_and_finite() {
        let base = settings(FRAC_PI_4, 3.0 * FRAC_PI_4, 0.0);
        let s = InterferometerSettings {
            gate_t: base.pulse.tau_p,
            ..base
        };
        let r = coincidence_full(&s);
        assert_eq!(r.regime, Regime::OutOfRegime);
        assert!(
            r.coincidence_full > 0.0
                && r.coincidence_full < coincidence_full(&base).coincidence_full
        );
    }
}

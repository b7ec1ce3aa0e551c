//! Classical field model: Gaussian pulse envelope, speckle amplitudes and the
//! complex envelopes reaching detectors A and B.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::default_rule;

/// Post-filter pulse duration used throughout the experiment.
pub const DEFAULT_TAU_P: f64 = 345e-15;
/// Coincidence gate duration.
pub const DEFAULT_GATE: f64 = 1e-9;
/// Elementary charge in coulombs (exact SI value).
pub const ELEMENTARY_CHARGE: f64 = 1.602176634e-19;
/// Carrier angular frequency of a 780 nm source.
pub const DEFAULT_OMEGA_0: f64 = 2.0 * PI * 299_792_458.0 / 780e-9;
/// Half-width of the pulse's numerical support, in units of `tau_p`.
pub const SUPPORT_WIDTHS: f64 = 8.0;
/// Mean photon number above which low-flux counting is flagged.
pub const LOW_FLUX_LIMIT: f64 = 0.1;

/// Transform-limited Gaussian envelope `f(t) = exp(-t²/τ_p²) / (π τ_p²/2)^¼`,
/// normalized so that `∫|f|² dt = 1`.
///
/// `omega_0` is carried for completeness; it cancels in every intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseModel {
    pub tau_p: f64,
    pub omega_0: f64,
}

impl Default for PulseModel {
    fn default() -> Self {
        PulseModel {
            tau_p: DEFAULT_TAU_P,
            omega_0: DEFAULT_OMEGA_0,
        }
    }
}

impl PulseModel {
    pub fn new(tau_p: f64) -> Result<Self> {
        let pulse = PulseModel {
            tau_p,
            ..PulseModel::default()
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_p.is_finite() && self.tau_p > 0.0) {
            return Err(Error::invalid("tau_p", "must be finite and > 0"));
        }
        if !self.omega_0.is_finite() {
            return Err(Error::invalid("omega_0", "must be finite"));
        }
        Ok(())
    }

    /// Envelope amplitude in s^(-1/2).
    pub fn value(&self, t: f64) -> f64 {
        let tau = self.tau_p;
        (-(t * t) / (tau * tau)).exp() / (PI * tau * tau / 2.0).powf(0.25)
    }

    /// `∫ f(t + δt/2) f(t − δt/2) dt = exp(−δt²/(2τ_p²))`.
    pub fn overlap(&self, delta_t: f64) -> f64 {
        let r = delta_t / self.tau_p;
        (-0.5 * r * r).exp()
    }
}

/// One realization of the two speckle amplitudes seen by the fiber tips.
///
/// Amplitudes are in √photons; `E[|v|²] = N`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpecklePair {
    pub v_plus: Complex64,
    pub v_minus: Complex64,
}

impl SpecklePair {
    pub const DARK: SpecklePair = SpecklePair {
        v_plus: Complex64::new(0.0, 0.0),
        v_minus: Complex64::new(0.0, 0.0),
    };

    /// Draws both amplitudes as independent circular complex Gaussians with
    /// real and imaginary parts of variance `N/2` each.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, mean_photons: f64) -> Result<Self> {
        if !(mean_photons.is_finite() && mean_photons >= 0.0) {
            return Err(Error::invalid("mean_photons", "must be finite and >= 0"));
        }
        Ok(Self::sample_unchecked(rng, (0.5 * mean_photons).sqrt()))
    }

    /// Hot-loop variant; `sigma` is the per-quadrature standard deviation.
    #[inline]
    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Self {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let c: f64 = rng.sample(StandardNormal);
        let d: f64 = rng.sample(StandardNormal);
        SpecklePair {
            v_plus: Complex64::new(sigma * a, sigma * b),
            v_minus: Complex64::new(sigma * c, sigma * d),
        }
    }
}

/// Whether `|τ_p ± δt/2| ≪ T` holds well enough for the asymptotic closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Asymptotic,
    OutOfRegime,
}

/// Every physical parameter of the interferometer and its detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerSettings {
    /// Analyzer angle before detector A, radians.
    pub theta_a: f64,
    /// Analyzer angle before detector B, radians.
    pub theta_b: f64,
    /// Differential arm delay, seconds.
    pub delta_t: f64,
    /// Mean photon number `N` per beam per pulse.
    pub mean_photons: f64,
    /// Detector quantum efficiency.
    pub eta: f64,
    /// Coincidence gate (or photodiode integration) duration, seconds.
    pub gate_t: f64,
    /// Carrier charge for photocurrents, coulombs.
    pub charge_q: f64,
    pub pulse: PulseModel,
}

impl Default for InterferometerSettings {
    fn default() -> Self {
        InterferometerSettings {
            theta_a: FRAC_PI_4,
            theta_b: FRAC_PI_4,
            delta_t: 0.0,
            mean_photons: 0.01,
            eta: 0.5,
            gate_t: DEFAULT_GATE,
            charge_q: ELEMENTARY_CHARGE,
            pulse: PulseModel::default(),
        }
    }
}

impl InterferometerSettings {
    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        if !(self.eta.is_finite() && (0.0..=1.0).contains(&self.eta)) {
            return Err(Error::invalid("eta", "must lie in [0,1]"));
        }
        if !(self.mean_photons.is_finite() && self.mean_photons >= 0.0) {
            return Err(Error::invalid("mean_photons", "must be finite and >= 0"));
        }
        if !(self.gate_t.is_finite() && self.gate_t > 0.0) {
            return Err(Error::invalid("gate_t", "must be finite and > 0"));
        }
        if !(self.charge_q.is_finite() && self.charge_q > 0.0) {
            return Err(Error::invalid("charge_q", "must be finite and > 0"));
        }
        for (field, v) in [
            ("theta_a", self.theta_a),
            ("theta_b", self.theta_b),
            ("delta_t", self.delta_t),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        Ok(())
    }

    /// Half-width of the interval outside which both delayed pulses are
    /// numerically zero: `|δt|/2 + 8τ_p`.
    pub fn support_half_width(&self) -> f64 {
        0.5 * self.delta_t.abs() + SUPPORT_WIDTHS * self.pulse.tau_p
    }

    pub fn regime(&self) -> Regime {
        if self.support_half_width() <= 0.5 * self.gate_t {
            Regime::Asymptotic
        } else {
            Regime::OutOfRegime
        }
    }

    pub fn regime_warning(&self) -> Option<String> {
        match self.regime() {
            Regime::Asymptotic => None,
            Regime::OutOfRegime => Some(format!(
                "|delta_t|/2 + 8 tau_p = {:.3e} s exceeds gate_t/2 = {:.3e} s; \
                 asymptotic closed forms replaced by gate-truncated quadrature",
                self.support_half_width(),
                0.5 * self.gate_t
            )),
        }
    }

    pub fn low_flux_warning(&self) -> Option<String> {
        (self.mean_photons > LOW_FLUX_LIMIT).then(|| {
            format!(
                "mean_photons = {} exceeds the low-flux limit {LOW_FLUX_LIMIT}",
                self.mean_photons
            )
        })
    }

    /// Integration interval: the pulse support clipped to the gate.
    pub fn integration_interval(&self) -> (f64, f64) {
        let hw = self.support_half_width().min(0.5 * self.gate_t);
        (-hw, hw)
    }

    pub fn with_angles(mut self, theta_a: f64, theta_b: f64) -> Self {
        self.theta_a = theta_a;
        self.theta_b = theta_b;
        self
    }

    pub fn with_delay(mut self, delta_t: f64) -> Self {
        self.delta_t = delta_t;
        self
    }
}

/// `E_A(t) = [cos θ_A v₊ f(t+δt/2) + sin θ_A v₋ f(t−δt/2)] / √2`.
pub fn field_envelope_a(
    settings: &InterferometerSettings,
    speckle: &SpecklePair,
    t: f64,
) -> Complex64 {
    let (s, c) = settings.theta_a.sin_cos();
    let half = 0.5 * settings.delta_t;
    let lead = settings.pulse.value(t + half);
    let lag = settings.pulse.value(t - half);
    (speckle.v_plus * (c * lead) + speckle.v_minus * (s * lag)) / SQRT_2
}

/// `E_B(t) = [cos θ_B v₊ f(t+δt/2) − sin θ_B v₋ f(t−δt/2)] / √2`; the minus
/// sign is the reflection phase at the second beam splitter.
pub fn field_envelope_b(
    settings: &InterferometerSettings,
    speckle: &SpecklePair,
    t: f64,
) -> Complex64 {
    let (s, c) = settings.theta_b.sin_cos();
    let half = 0.5 * settings.delta_t;
    let lead = settings.pulse.value(t + half);
    let lag = settings.pulse.value(t - half);
    (speckle.v_plus * (c * lead) - speckle.v_minus * (s * lag)) / SQRT_2
}

/// Photon-units energy `∫_{−T/2}^{T/2} |E(t)|² dt` of an envelope, integrated
/// over the pulse support clipped to the gate.
pub fn gated_energy<F: Fn(f64) -> Complex64>(
    envelope: F,
    settings: &InterferometerSettings,
) -> f64 {
    integrate_over_support(settings, |t| envelope(t).norm_sqr())
}

/// Quadrature of a real integrand over [`InterferometerSettings::integration_interval`]
/// with panels no wider than `τ_p/2`.
pub fn integrate_over_support<F: FnMut(f64) -> f64>(
    settings: &InterferometerSettings,
    integrand: F,
) -> f64 {
    let (lo, hi) = settings.integration_interval();
    let panels = ((hi - lo) / (0.5 * settings.pulse.tau_p)).ceil().max(1.0) as usize;
    default_rule().integrate_composite(integrand, lo, hi, panels)
}

/// Gate-truncated pulse integrals that every intensity reduces to:
/// `plus = ∫|f(t+δt/2)|²`, `minus = ∫|f(t−δt/2)|²`,
/// `cross = ∫ f(t+δt/2) f(t−δt/2)`, all over the gate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOverlaps {
    pub plus: f64,
    pub minus: f64,
    pub cross: f64,
}

impl GateOverlaps {
    /// Gate much longer than the pulses: both energies are 1 and the cross
    /// overlap takes its closed form.
    pub fn asymptotic(settings: &InterferometerSettings) -> Self {
        GateOverlaps {
            plus: 1.0,
            minus: 1.0,
            cross: settings.pulse.overlap(settings.delta_t),
        }
    }

    pub fn quadrature(settings: &InterferometerSettings) -> Self {
        let pulse = settings.pulse;
        let half = 0.5 * settings.delta_t;
        let sq = |x: f64| x * x;
        GateOverlaps {
            plus: integrate_over_support(settings, |t| sq(pulse.value(t + half))),
            minus: integrate_over_support(settings, |t| sq(pulse.value(t - half))),
            cross: integrate_over_support(settings, |t| {
                pulse.value(t + half) * pulse.value(t - half)
            }),
        }
    }

    /// Closed forms in the asymptotic regime, quadrature otherwise.
    pub fn for_settings(settings: &InterferometerSettings) -> Self {
        match settings.regime() {
            Regime::Asymptotic => Self::asymptotic(settings),
            Regime::OutOfRegime => Self::quadrature(settings),
        }
    }
}

/// Gated detector energies as quadratic forms in the speckle amplitudes:
/// `W_K = ½[c_K² P |v₊|² + s_K² M |v₋|² ± 2 c_K s_K X Re(v₊ v₋*)]`,
/// with `(P, M, X)` from [`GateOverlaps`] and `+` for A, `−` for B.
///
/// Equivalent to [`gated_energy`] of [`field_envelope_a`]/[`field_envelope_b`]
/// but costs a handful of flops per speckle draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyForm {
    plus: [f64; 2],
    minus: [f64; 2],
    cross: [f64; 2],
}

impl EnergyForm {
    pub fn new(settings: &InterferometerSettings, overlaps: GateOverlaps) -> Self {
        let (sa, ca) = settings.theta_a.sin_cos();
        let (sb, cb) = settings.theta_b.sin_cos();
        EnergyForm {
            plus: [0.5 * ca * ca * overlaps.plus, 0.5 * cb * cb * overlaps.plus],
            minus: [
                0.5 * sa * sa * overlaps.minus,
                0.5 * sb * sb * overlaps.minus,
            ],
            cross: [ca * sa * overlaps.cross, -cb * sb * overlaps.cross],
        }
    }

    /// Uses quadrature overlaps so the form is exact for any gate.
    pub fn for_settings(settings: &InterferometerSettings) -> Self {
        Self::new(settings, GateOverlaps::quadrature(settings))
    }

    /// `[W_A, W_B]` in photons.
    #[inline]
    pub fn energies(&self, speckle: &SpecklePair) -> [f64; 2] {
        let p = speckle.v_plus.norm_sqr();
        let m = speckle.v_minus.norm_sqr();
        let x = (speckle.v_plus * speckle.v_minus.conj()).re;
        [
            self.plus[0] * p + self.minus[0] * m + self.cross[0] * x,
            self.plus[1] * p + self.minus[1] * m + self.cross[1] * x,
        ]
    }
}

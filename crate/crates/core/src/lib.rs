//! Semiclassical simulation of a modified Mach–Zehnder interferometer driven by
//! pseudothermal (speckled) light.
//!
//! Two statistically independent circular-Gaussian speckle amplitudes `v₊`,
//! `v₋` ride on orthogonally polarized, relatively delayed copies of a
//! Gaussian pulse. After a 50/50 beam splitter and polarization analyzers the
//! detectors see classical fields whose intensity correlations, once the
//! self-intensity background is subtracted, trace out the dip, peak, `sin²`
//! fringe and CHSH value usually attributed to a polarization Bell state.
//!
//! The crate is organized as:
//!
//! * [`model`]: pulse envelope, speckle sampling, detector fields, gated energy.
//! * [`quadrature`]: Gauss–Legendre rules used for every time integral.
//! * [`oracle`]: closed-form singles, coincidence and photocurrent rates.
//! * [`engine`]: Monte Carlo photodetection, low flux (counts) and high flux
//!   (shot-noise photocurrents), with the beam-blocking background protocol.
//! * [`experiments`]: delay scans, polarization fringes, visibility fits, CHSH.
//! * [`config`] and [`run`]: flat key–value configuration and result emission
//!   used by the `pseudobell` binary.

// `!(x > 0.0)` is used on purpose so NaN fails validation; matrix code
// indexes by row and column.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod run;
pub mod seed;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use model::{InterferometerSettings, PulseModel, Regime, SpecklePair};

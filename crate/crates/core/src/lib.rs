//! Simulation core for a wearable A-mode ultrasonic bladder volume monitor.
//!
//! The crate models the full measurement chain of a four-element ultrasonic
//! patch worn over the bladder:
//!
//! * [`phantom`] — bladder geometry (sphere / ellipsoid / lab flask), tissue
//!   medium, the transducer patch, and beam/wall intersection;
//! * [`acoustics`] — pulse-echo trace synthesis: Gaussian-windowed tone
//!   bursts at the round-trip times, frequency-dependent path attenuation,
//!   optional additive Gaussian noise;
//! * [`afe`] — the receive chain: fixed-gain amplifier, single-pole low-pass,
//!   Schmitt-trigger comparator, counter-based edge-timestamp capture;
//! * [`link`] — the 8-byte timestamp frame codec, sweep scheduling, and the
//!   transducer-4-to-1 sweep-completion rule;
//! * [`estimator`] — edge clustering into wall echoes, an echo-count gate,
//!   tick-to-depth conversion, least-squares sphere fitting (BFGS), and the
//!   sphere / clinical ellipsoid volume formulas.
//!
//! Units are millimetres, microseconds, and megahertz unless a name says
//! otherwise; volumes are millilitres. Every random path is seeded and
//! reproducible bit-for-bit.

pub mod acoustics;
pub mod afe;
pub mod error;
pub mod estimator;
pub mod link;
pub mod phantom;

pub use error::{Error, Result};

// Re-exported so downstream crates construct geometry against the same
// linear-algebra version the public types expose.
pub use nalgebra;

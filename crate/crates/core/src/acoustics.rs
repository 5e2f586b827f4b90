//! Pulse-echo trace synthesis.
//!
//! Each insonified wall produces a Gaussian-windowed tone burst (a Gabor
//! pulse) whose envelope peaks at the round-trip time of that wall and whose
//! width follows from the transducer's fractional bandwidth:
//! σ_f = bw·f₀ / (2√(2 ln 2)), σ_t = 1/(2π σ_f). Echo amplitude is
//! drive · sensitivity · wall reflection · round-trip attenuation, with the
//! attenuation 10^(−coeff · 2·depth_cm · f_MHz / 20). Optional additive white
//! Gaussian noise is scaled relative to the anterior-echo peak and drawn from
//! a seeded ChaCha8 stream, so traces are reproducible bit-for-bit.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::phantom::{TissueMedium, WallDepths};

// --------------------------------------------------------------------------
// configuration
// --------------------------------------------------------------------------

/// Transmit burst parameters. The drive is a bipolar (signed) excitation;
/// `cycles` describes its length, while the received envelope width is set by
/// the transducer bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseSpec {
    pub center_frequency_mhz: f64,
    pub cycles: u32,
    pub drive_amplitude_v: f64,
}

impl Default for PulseSpec {
    fn default() -> Self {
        Self {
            center_frequency_mhz: 2.0,
            cycles: 5,
            drive_amplitude_v: 30.0,
        }
    }
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.center_frequency_mhz > 0.0 && self.center_frequency_mhz.is_finite()) {
            return Err(Error::InvalidParameter("pulse centre frequency must be positive".into()));
        }
        if self.cycles == 0 {
            return Err(Error::InvalidParameter("pulse needs at least one cycle".into()));
        }
        if !(self.drive_amplitude_v > 0.0 && self.drive_amplitude_v.is_finite()) {
            return Err(Error::InvalidParameter("drive amplitude must be positive".into()));
        }
        Ok(())
    }

    /// Drive burst duration in µs.
    pub fn burst_duration_us(&self) -> f64 {
        self.cycles as f64 / self.center_frequency_mhz
    }
}

/// Receive-side transducer behaviour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransducerResponse {
    pub resonance_mhz: f64,
    /// −3 dB fractional bandwidth (0.291 = 29.1%).
    pub fractional_bandwidth: f64,
    /// Round-trip electro-acoustic sensitivity, V of received signal per V of
    /// drive before reflection/attenuation losses.
    pub sensitivity: f64,
}

impl Default for TransducerResponse {
    fn default() -> Self {
        Self {
            resonance_mhz: 2.0,
            fractional_bandwidth: 0.291,
            sensitivity: 0.15,
        }
    }
}

impl TransducerResponse {
    pub fn validate(&self) -> Result<()> {
        if !(self.resonance_mhz > 0.0 && self.resonance_mhz.is_finite()) {
            return Err(Error::InvalidParameter("resonance must be positive".into()));
        }
        if !(self.fractional_bandwidth > 0.0 && self.fractional_bandwidth < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "fractional bandwidth must be in (0, 2), got {}",
                self.fractional_bandwidth
            )));
        }
        if !(self.sensitivity > 0.0 && self.sensitivity.is_finite()) {
            return Err(Error::InvalidParameter("sensitivity must be positive".into()));
        }
        Ok(())
    }

    /// Gaussian spectral width σ_f in MHz.
    pub fn sigma_f_mhz(&self) -> f64 {
        self.fractional_bandwidth * self.resonance_mhz / (2.0 * (2.0 * (2.0f64).ln()).sqrt())
    }

    /// Gabor envelope width σ_t in µs.
    pub fn sigma_t_us(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.sigma_f_mhz())
    }
}

/// How a firing is sampled into a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisConfig {
    pub sample_rate_mhz: f64,
    /// The trace spans the round trip to this depth, hit or miss, so trace
    /// length depends only on configuration.
    pub max_depth_mm: f64,
    /// Amplitude reflection factor per wall crossing.
    pub wall_reflection: f64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            sample_rate_mhz: 40.0,
            max_depth_mm: 170.0,
            wall_reflection: 0.1,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self, response: &TransducerResponse) -> Result<()> {
        if !(self.sample_rate_mhz.is_finite() && self.sample_rate_mhz >= 4.0 * response.resonance_mhz) {
            return Err(Error::InvalidParameter(format!(
                "sample rate {} MHz below 4x resonance {} MHz",
                self.sample_rate_mhz, response.resonance_mhz
            )));
        }
        if !(self.max_depth_mm > 0.0 && self.max_depth_mm.is_finite()) {
            return Err(Error::InvalidParameter("max depth must be positive".into()));
        }
        if !(self.wall_reflection > 0.0 && self.wall_reflection <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "wall reflection must be in (0, 1], got {}",
                self.wall_reflection
            )));
        }
        Ok(())
    }
}

// --------------------------------------------------------------------------
// traces
// --------------------------------------------------------------------------

/// A sampled received-voltage trace, time referenced to the firing instant.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTrace {
    pub sample_rate_mhz: f64,
    pub start_time_us: f64,
    pub samples: Vec<f64>,
}

impl EchoTrace {
    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time_us + index as f64 / self.sample_rate_mhz
    }

    pub fn duration_us(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_mhz
    }

    /// Plain-text export for external plotting. Column order is fixed:
    /// `time_us voltage_v`, one sample per line, after a version header.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# vesica-trace v1: time_us voltage_v")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(w, "{:.6} {:.9}", self.time_at(i), v)?;
        }
        Ok(())
    }
}

// --------------------------------------------------------------------------
// propagation arithmetic
// --------------------------------------------------------------------------

/// Two-way travel time to a wall at `depth_mm`, in µs.
pub fn round_trip_time_us(depth_mm: f64, speed_of_sound_m_s: f64) -> f64 {
    2000.0 * depth_mm / speed_of_sound_m_s
}

/// Round-trip amplitude factor for a wall at `depth_mm` at `f_mhz`.
pub fn path_attenuation(depth_mm: f64, f_mhz: f64, medium: &TissueMedium) -> f64 {
    let db = medium.attenuation_db_cm_mhz * 2.0 * (depth_mm / 10.0) * f_mhz;
    10f64.powf(-db / 20.0)
}

/// Received peak amplitude (V) of an echo from `depth_mm`.
pub fn echo_amplitude_v(
    depth_mm: f64,
    pulse: &PulseSpec,
    response: &TransducerResponse,
    medium: &TissueMedium,
    synth: &SynthesisConfig,
) -> f64 {
    pulse.drive_amplitude_v
        * response.sensitivity
        * synth.wall_reflection
        * path_attenuation(depth_mm, response.resonance_mhz, medium)
}

// --------------------------------------------------------------------------
// synthesis
// --------------------------------------------------------------------------

/// Synthesize the received trace for one firing of one element.
///
/// `depths` is `None` when the beam misses the bladder: the trace is then
/// noise only (or all zeros when `noise_snr_db` is `None`). Noise is white
/// Gaussian with RMS set `noise_snr_db` below the anterior-echo peak — for a
/// miss, below the amplitude an echo at the medium's pre-wall offset would
/// have. The same `seed` always reproduces the identical trace.
pub fn synthesize_trace(
    depths: Option<WallDepths>,
    pulse: &PulseSpec,
    response: &TransducerResponse,
    medium: &TissueMedium,
    synth: &SynthesisConfig,
    noise_snr_db: Option<f64>,
    seed: u64,
) -> Result<EchoTrace> {
    pulse.validate()?;
    response.validate()?;
    medium.validate()?;
    synth.validate(response)?;
    if let Some(snr) = noise_snr_db {
        if !snr.is_finite() {
            return Err(Error::InvalidParameter(format!("noise SNR must be finite, got {snr} dB")));
        }
    }
    let sigma_t = response.sigma_t_us();
    let duration = round_trip_time_us(synth.max_depth_mm, medium.speed_of_sound_m_s);
    if let Some(d) = depths {
        if !(d.anterior_mm > 0.0 && d.posterior_mm > d.anterior_mm) {
            return Err(Error::InvalidParameter(format!(
                "wall depths must satisfy 0 < anterior < posterior, got {} / {}",
                d.anterior_mm, d.posterior_mm
            )));
        }
        let tail = round_trip_time_us(d.posterior_mm, medium.speed_of_sound_m_s) + 4.0 * sigma_t;
        if tail > duration {
            return Err(Error::InvalidParameter(format!(
                "posterior wall at {} mm does not fit a {} mm trace window",
                d.posterior_mm, synth.max_depth_mm
            )));
        }
    }

    let n = (duration * synth.sample_rate_mhz).ceil() as usize;
    let mut samples = vec![0.0; n];

    let f0 = response.resonance_mhz;
    let mut anterior_amp = None;
    if let Some(d) = depths {
        for depth in [d.anterior_mm, d.posterior_mm] {
            let t0 = round_trip_time_us(depth, medium.speed_of_sound_m_s);
            let amp = echo_amplitude_v(depth, pulse, response, medium, synth);
            anterior_amp.get_or_insert(amp);
            // Only touch the ±6σ window; the Gaussian is zero elsewhere.
            let lo = (((t0 - 6.0 * sigma_t) * synth.sample_rate_mhz).floor().max(0.0)) as usize;
            let hi = (((t0 + 6.0 * sigma_t) * synth.sample_rate_mhz).ceil() as usize).min(n);
            for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
                let dt = i as f64 / synth.sample_rate_mhz - t0;
                *s += amp
                    * (-dt * dt / (2.0 * sigma_t * sigma_t)).exp()
                    * (2.0 * std::f64::consts::PI * f0 * dt).sin();
            }
        }
    }

    if let Some(snr) = noise_snr_db {
        let reference = anterior_amp.unwrap_or_else(|| {
            echo_amplitude_v(medium.pre_wall_offset_mm, pulse, response, medium, synth)
        });
        let sigma = reference * 10f64.powf(-snr / 20.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
        for s in &mut samples {
            *s += normal.sample(&mut rng);
        }
    }

    Ok(EchoTrace {
        sample_rate_mhz: synth.sample_rate_mhz,
        start_time_us: 0.0,
        samples,
    })
}

// --------------------------------------------------------------------------

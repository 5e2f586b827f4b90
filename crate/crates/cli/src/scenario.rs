//! Scenario schema: one self-contained description of a simulation run —
//! phantom (fixed shape or a filling profile), device settings, noise level,
//! seed, and sample times — serializable to a versioned TOML file.
//!
//! Every device section is optional in the file and defaults to the values
//! the model ships with, so a minimal scenario is just a phantom, a seed,
//! and sample times. Unknown keys are rejected rather than ignored.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vesica_core::acoustics::{PulseSpec, SynthesisConfig, TransducerResponse};
use vesica_core::afe::ReceiverConfig;
use vesica_core::estimator::{EstimatorConfig, FitConfig};
use vesica_core::link::SweepSchedule;
use vesica_core::nalgebra::{Unit, Vector3};
use vesica_core::phantom::{
    BladderPhantom, BladderShape, Element, MicturitionProfile, TissueMedium, TransducerArray,
};

/// Schema version accepted by this build. Bump on incompatible changes.
pub const FORMAT_VERSION: u32 = 1;

// --------------------------------------------------------------------------
// top level
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub format_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Base RNG seed; every firing derives its own stream from it.
    pub seed: u64,
    /// Additive white-noise level in dB below the anterior echo peak.
    /// Omitted means a noiseless run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// When each sweep is taken, in minutes of session time.
    pub sample_times_min: Vec<f64>,
    #[serde(default)]
    pub medium: MediumSpec,
    #[serde(default)]
    pub pulse: PulseSpecToml,
    #[serde(default)]
    pub transducer: TransducerSpec,
    #[serde(default)]
    pub synthesis: SynthesisSpec,
    #[serde(default)]
    pub receiver: ReceiverSpec,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    /// Omitted means the standard 2×2 patch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub array: Option<ArraySpec>,
    /// Exactly one of `phantom` (fixed shape) or `profile` (filling bladder)
    /// must be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSpec>,
}

// --------------------------------------------------------------------------
// device sections (all default to the shipped device values)
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumSpec {
    pub speed_of_sound_m_s: f64,
    pub attenuation_db_cm_mhz: f64,
    pub pre_wall_offset_mm: f64,
}

impl Default for MediumSpec {
    fn default() -> Self {
        let m = TissueMedium::default();
        Self {
            speed_of_sound_m_s: m.speed_of_sound_m_s,
            attenuation_db_cm_mhz: m.attenuation_db_cm_mhz,
            pre_wall_offset_mm: m.pre_wall_offset_mm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSpecToml {
    pub center_frequency_mhz: f64,
    pub cycles: u32,
    pub drive_amplitude_v: f64,
}

impl Default for PulseSpecToml {
    fn default() -> Self {
        let p = PulseSpec::default();
        Self {
            center_frequency_mhz: p.center_frequency_mhz,
            cycles: p.cycles,
            drive_amplitude_v: p.drive_amplitude_v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransducerSpec {
    pub resonance_mhz: f64,
    pub fractional_bandwidth: f64,
    pub sensitivity: f64,
}

impl Default for TransducerSpec {
    fn default() -> Self {
        let t = TransducerResponse::default();
        Self {
            resonance_mhz: t.resonance_mhz,
            fractional_bandwidth: t.fractional_bandwidth,
            sensitivity: t.sensitivity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisSpec {
    pub sample_rate_mhz: f64,
    pub max_depth_mm: f64,
    pub wall_reflection: f64,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        let s = SynthesisConfig::default();
        Self {
            sample_rate_mhz: s.sample_rate_mhz,
            max_depth_mm: s.max_depth_mm,
            wall_reflection: s.wall_reflection,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSpec {
    pub gain: f64,
    pub lpf_cutoff_mhz: f64,
    pub v_supply_v: f64,
    pub threshold_rise_v: f64,
    pub threshold_fall_v: f64,
    pub tick_rate_mhz: f64,
    pub capture_depth: usize,
}

impl Default for ReceiverSpec {
    fn default() -> Self {
        let r = ReceiverConfig::default();
        Self {
            gain: r.gain,
            lpf_cutoff_mhz: r.lpf_cutoff_mhz,
            v_supply_v: r.v_supply_v,
            threshold_rise_v: r.threshold_rise_v,
            threshold_fall_v: r.threshold_fall_v,
            tick_rate_mhz: r.tick_rate_mhz,
            capture_depth: r.capture_depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub pulse_period_s: f64,
    pub channel_dwell_s: f64,
    pub channel_order: [u8; 4],
    pub notification_interval_ms: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        let s = SweepSchedule::default();
        Self {
            pulse_period_s: s.pulse_period_s,
            channel_dwell_s: s.channel_dwell_s,
            channel_order: s.channel_order,
            notification_interval_ms: s.notification_interval_ms,
        }
    }
}

/// Estimator tuning. Speed of sound and tick rate are taken from the medium
/// and receiver sections so the chain stays consistent by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub gap_threshold_us: f64,
    pub onset_correction_us: f64,
    pub min_clusters: usize,
    pub max_fit_iterations: usize,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        Self {
            gap_threshold_us: e.gap_threshold_us,
            onset_correction_us: e.onset_correction_us,
            min_clusters: e.min_clusters,
            max_fit_iterations: e.fit.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub extent_mm: [f64; 2],
    pub elements: Vec<ElementSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementSpec {
    pub id: u8,
    pub position_mm: [f64; 2],
    /// Beam direction; normalized on load. Must point into the body (+z).
    #[serde(default = "default_beam")]
    pub beam: [f64; 3],
}

fn default_beam() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

// --------------------------------------------------------------------------
// phantom / profile sections
// --------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomSpec {
    Sphere {
        center_mm: [f64; 3],
        radius_mm: f64,
    },
    Ellipsoid {
        center_mm: [f64; 3],
        semi_axes_mm: [f64; 3],
    },
    Flask {
        center_mm: [f64; 3],
        body_radius_mm: f64,
        neck_radius_mm: f64,
        neck_length_mm: f64,
    },
}

impl PhantomSpec {
    pub fn build(&self) -> Result<BladderPhantom> {
        let v = |a: &[f64; 3]| Vector3::new(a[0], a[1], a[2]);
        let shape = match self {
            PhantomSpec::Sphere { center_mm, radius_mm } => BladderShape::Sphere {
                center_mm: v(center_mm),
                radius_mm: *radius_mm,
            },
            PhantomSpec::Ellipsoid { center_mm, semi_axes_mm } => BladderShape::Ellipsoid {
                center_mm: v(center_mm),
                semi_axes_mm: v(semi_axes_mm),
            },
            PhantomSpec::Flask {
                center_mm,
                body_radius_mm,
                neck_radius_mm,
                neck_length_mm,
            } => BladderShape::Flask {
                center_mm: v(center_mm),
                body_radius_mm: *body_radius_mm,
                neck_radius_mm: *neck_radius_mm,
                neck_length_mm: *neck_length_mm,
            },
        };
        BladderPhantom::new(shape).context("invalid phantom")
    }
}

/// A bladder that fills over the session: a sphere whose volume follows a
/// piecewise-linear profile. The anterior pole stays at the medium's
/// pre-wall offset, so the bladder grows away from the patch as it fills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    /// `[minutes, mL]` knots, strictly increasing in time.
    pub knots: Vec<[f64; 2]>,
    /// Lateral (x, y) placement of the bladder axis, mm.
    #[serde(default)]
    pub lateral_mm: [f64; 2],
}

impl ProfileSpec {
    pub fn build(&self) -> Result<MicturitionProfile> {
        MicturitionProfile::new(self.knots.iter().map(|k| (k[0], k[1])).collect())
            .context("invalid filling profile")
    }
}

// --------------------------------------------------------------------------
// conversions into model types
// --------------------------------------------------------------------------

impl Scenario {
    pub fn medium(&self) -> TissueMedium {
        TissueMedium {
            speed_of_sound_m_s: self.medium.speed_of_sound_m_s,
            attenuation_db_cm_mhz: self.medium.attenuation_db_cm_mhz,
            pre_wall_offset_mm: self.medium.pre_wall_offset_mm,
        }
    }

    pub fn pulse(&self) -> PulseSpec {
        PulseSpec {
            center_frequency_mhz: self.pulse.center_frequency_mhz,
            cycles: self.pulse.cycles,
            drive_amplitude_v: self.pulse.drive_amplitude_v,
        }
    }

    pub fn response(&self) -> TransducerResponse {
        TransducerResponse {
            resonance_mhz: self.transducer.resonance_mhz,
            fractional_bandwidth: self.transducer.fractional_bandwidth,
            sensitivity: self.transducer.sensitivity,
        }
    }

    pub fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig {
            sample_rate_mhz: self.synthesis.sample_rate_mhz,
            max_depth_mm: self.synthesis.max_depth_mm,
            wall_reflection: self.synthesis.wall_reflection,
        }
    }

    pub fn receiver(&self) -> ReceiverConfig {
        ReceiverConfig {
            gain: self.receiver.gain,
            lpf_cutoff_mhz: self.receiver.lpf_cutoff_mhz,
            v_supply_v: self.receiver.v_supply_v,
            threshold_rise_v: self.receiver.threshold_rise_v,
            threshold_fall_v: self.receiver.threshold_fall_v,
            tick_rate_mhz: self.receiver.tick_rate_mhz,
            capture_depth: self.receiver.capture_depth,
        }
    }

    pub fn schedule(&self) -> SweepSchedule {
        SweepSchedule {
            pulse_period_s: self.schedule.pulse_period_s,
            channel_dwell_s: self.schedule.channel_dwell_s,
            channel_order: self.schedule.channel_order,
            notification_interval_ms: self.schedule.notification_interval_ms,
        }
    }

    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            speed_of_sound_m_s: self.medium.speed_of_sound_m_s,
            tick_rate_mhz: self.receiver.tick_rate_mhz,
            gap_threshold_us: self.estimator.gap_threshold_us,
            onset_correction_us: self.estimator.onset_correction_us,
            min_clusters: self.estimator.min_clusters,
            fit: FitConfig {
                max_iterations: self.estimator.max_fit_iterations,
                ..FitConfig::default()
            },
        }
    }

    pub fn array(&self) -> Result<TransducerArray> {
        match &self.array {
            None => Ok(TransducerArray::default()),
            Some(spec) => {
                let elements = spec
                    .elements
                    .iter()
                    .map(|e| Element {
                        id: e.id,
                        x_mm: e.position_mm[0],
                        y_mm: e.position_mm[1],
                        beam: Unit::new_normalize(Vector3::new(e.beam[0], e.beam[1], e.beam[2])),
                    })
                    .collect();
                TransducerArray::new(elements, (spec.extent_mm[0], spec.extent_mm[1]))
                    .context("invalid transducer array")
            }
        }
    }

    /// The phantom in effect at `t_min` minutes into the session.
    pub fn phantom_at(&self, t_min: f64) -> Result<BladderPhantom> {
        match (&self.phantom, &self.profile) {
            (Some(spec), None) => spec.build(),
            (None, Some(profile)) => {
                let volume = profile.build()?.volume_at(t_min).context("profile lookup")?;
                let radius = (volume * 1000.0 * 3.0 / (4.0 * std::f64::consts::PI)).cbrt();
                let center = Vector3::new(
                    profile.lateral_mm[0],
                    profile.lateral_mm[1],
                    self.medium.pre_wall_offset_mm + radius,
                );
                BladderPhantom::sphere_from_volume(center, volume).context("profile phantom")
            }
            _ => bail!("scenario must define exactly one of `phantom` or `profile`"),
        }
    }

    /// Check the whole scenario, including every embedded device config.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            bail!(
                "unsupported format_version {} (this build reads {})",
                self.format_version,
                FORMAT_VERSION
            );
        }
        if self.name.is_empty() {
            bail!("scenario needs a name");
        }
        if self.sample_times_min.is_empty() {
            bail!("scenario needs at least one sample time");
        }
        if self.sample_times_min.len() > u16::MAX as usize {
            bail!("at most {} sample times per session", u16::MAX);
        }
        for w in self.sample_times_min.windows(2) {
            if !(w[1] > w[0]) {
                bail!("sample times must be strictly increasing, got {} then {}", w[0], w[1]);
            }
        }
        if let Some(t) = self.sample_times_min.first() {
            if !(*t >= 0.0 && t.is_finite()) {
                bail!("sample times must be non-negative, got {t}");
            }
        }
        if matches!((&self.phantom, &self.profile), (Some(_), Some(_)) | (None, None)) {
            bail!("scenario must define exactly one of `phantom` or `profile`");
        }

        self.medium().validate().context("medium")?;
        self.pulse().validate().context("pulse")?;
        self.response().validate().context("transducer")?;
        self.synthesis().validate(&self.response()).context("synthesis")?;
        self.receiver().validate().context("receiver")?;
        self.schedule().validate().context("schedule")?;
        self.estimator().validate().context("estimator")?;
        self.array().context("array")?;
        // Building the phantom at every sample time catches profile-range
        // errors (and bad shapes) before the run starts.
        for &t in &self.sample_times_min {
            self.phantom_at(t).with_context(|| format!("phantom at {t} min"))?;
        }
        Ok(())
    }

    // -- file I/O ------------------------------------------------------------

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).context("parsing scenario")?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).context("serializing scenario")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text)
    }
}

// --------------------------------------------------------------------------
// built-in scenarios
// --------------------------------------------------------------------------

/// Radius of a sphere holding `volume_ml`, in mm.
fn sphere_radius_mm(volume_ml: f64) -> f64 {
    (volume_ml * 1000.0 * 3.0 / (4.0 * std::f64::consts::PI)).cbrt()
}

fn base(name: &str, description: &str, seed: u64) -> Scenario {
    Scenario {
        format_version: FORMAT_VERSION,
        name: name.to_string(),
        description: description.to_string(),
        seed,
        snr_db: None,
        sample_times_min: vec![0.0],
        medium: MediumSpec::default(),
        pulse: PulseSpecToml::default(),
        transducer: TransducerSpec::default(),
        synthesis: SynthesisSpec::default(),
        receiver: ReceiverSpec::default(),
        schedule: ScheduleSpec::default(),
        estimator: EstimatorSpec::default(),
        array: None,
        phantom: None,
        profile: None,
    }
}

/// Water-filled lab flask on the bench: a spherical body of `body_ml`
/// millilitres plus a side neck, measured through water at 20 dB SNR.
fn flask(name: &str, body_ml: f64, seed: u64) -> Scenario {
    let r = sphere_radius_mm(body_ml);
    let mut sc = base(
        name,
        "Bench validation: water-filled spherical flask with a side neck, 20 dB SNR",
        seed,
    );
    sc.snr_db = Some(20.0);
    // Water path: negligible absorption; back the sensitivity off to bench
    // coupling levels so echo amplitudes stay in the comparator's range.
    sc.medium.attenuation_db_cm_mhz = 0.0022;
    sc.transducer.sensitivity = 0.020;
    sc.phantom = Some(PhantomSpec::Flask {
        center_mm: [0.0, 0.0, sc.medium.pre_wall_offset_mm + r],
        body_radius_mm: r,
        neck_radius_mm: 10.0,
        neck_length_mm: 30.0,
    });
    sc
}

fn builtin_flask_250() -> Scenario {
    flask("flask-250", 250.0, 7)
}

fn builtin_flask_500() -> Scenario {
    flask("flask-500", 500.0, 7)
}

fn builtin_volume_sweep() -> Scenario {
    let times = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
    let volumes = [84.0, 100.0, 200.0, 300.0, 400.0, 500.0, 650.0, 800.0];
    let mut sc = base(
        "volume-sweep",
        "Noiseless accuracy sweep over the clinical volume range",
        2,
    );
    sc.sample_times_min = times.to_vec();
    sc.profile = Some(ProfileSpec {
        knots: times.iter().zip(&volumes).map(|(&t, &v)| [t, v]).collect(),
        lateral_mm: [0.0, 0.0],
    });
    sc
}

fn builtin_micturition_linear() -> Scenario {
    let mut sc = base(
        "micturition-linear",
        "Four-hour filling session, 40→400 mL, sampled every 30 minutes",
        11,
    );
    sc.sample_times_min = (0..=8).map(|i| 30.0 * i as f64).collect();
    // Gel-coupled wearable on a lean abdomen: low loss, sensitivity backed
    // off so 20 dB SNR runs keep the comparator ~9 noise sigmas clear.
    sc.medium.attenuation_db_cm_mhz = 0.05;
    sc.transducer.sensitivity = 0.0235;
    sc.profile = Some(ProfileSpec {
        knots: vec![[0.0, 40.0], [240.0, 400.0]],
        lateral_mm: [0.0, 0.0],
    });
    sc
}

fn builtin_low_echo() -> Scenario {
    let r = sphere_radius_mm(30.0);
    let mut sc = base(
        "low-echo",
        "Near-empty bladder in lossy tissue: posterior echoes drop below the comparator",
        3,
    );
    // High-loss tissue path; the anterior wall still triggers on all four
    // channels but the posterior return is ~3x below threshold, so a sweep
    // yields four clusters and the estimator must raise the reposition alert.
    sc.medium.attenuation_db_cm_mhz = 1.0;
    sc.transducer.sensitivity = 0.0485;
    sc.phantom = Some(PhantomSpec::Sphere {
        center_mm: [0.0, 0.0, sc.medium.pre_wall_offset_mm + r],
        radius_mm: r,
    });
    sc
}

fn builtin_ellipsoid_mild() -> Scenario {
    // 300 mL with a 1.3 depth-to-width axis ratio.
    let a = (300.0 * 1000.0 * 3.0 / (4.0 * std::f64::consts::PI * 1.3)).cbrt();
    let c = 1.3 * a;
    let mut sc = base(
        "ellipsoid-mild",
        "Mildly aspherical 300 mL bladder (1.3 axis ratio): sphere-model bias probe",
        5,
    );
    sc.phantom = Some(PhantomSpec::Ellipsoid {
        center_mm: [0.0, 0.0, sc.medium.pre_wall_offset_mm + c],
        semi_axes_mm: [a, a, c],
    });
    sc
}

/// Built-in scenario names, in listing order.
pub fn builtin_names() -> Vec<&'static str> {
    vec![
        "flask-250",
        "flask-500",
        "volume-sweep",
        "micturition-linear",
        "low-echo",
        "ellipsoid-mild",
    ]
}

pub fn builtin(name: &str) -> Option<Scenario> {
    let sc = match name {
        "flask-250" => builtin_flask_250(),
        "flask-500" => builtin_flask_500(),
        "volume-sweep" => builtin_volume_sweep(),
        "micturition-linear" => builtin_micturition_linear(),
        "low-echo" => builtin_low_echo(),
        "ellipsoid-mild" => builtin_ellipsoid_mild(),
        _ => return None,
    };
    Some(sc)
}

// --------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_builtin_validates() {
        for name in builtin_names() {
            let sc = builtin(name).expect("listed builtin exists");
            assert_eq!(sc.name, name);
            sc.validate().unwrap_or_else(|e| panic!("{name}: {e:#}"));
        }
    }

    #[test]
    fn builtins_round_trip_through_toml() {
        for name in builtin_names() {
            let sc = builtin(name).unwrap();
            let text = sc.to_toml_string().unwrap();
            let back = Scenario::from_toml_str(&text)
                .unwrap_or_else(|e| panic!("{name} reparse: {e:#}"));
            assert_eq!(sc, back, "{name} must survive a TOML round trip");
        }
    }

    #[test]
    fn minimal_scenario_parses_with_defaults() {
        let text = r#"
            format_version = 1
            name = "mini"
            seed = 1
            sample_times_min = [0.0]

            [phantom]
            kind = "sphere"
            center_mm = [0.0, 0.0, 55.0]
            radius_mm = 40.0
        "#;
        let sc = Scenario::from_toml_str(text).unwrap();
        assert_eq!(sc.receiver.tick_rate_mhz, 64.0);
        assert_eq!(sc.schedule.channel_order, [1, 2, 3, 4]);
        assert!(sc.snr_db.is_none());
        assert!(sc.array.is_none());
    }

    #[test]
    fn rejects_wrong_version_unknown_keys_and_shape_conflicts() {
        let wrong_version = r#"
            format_version = 2
            name = "x"
            seed = 1
            sample_times_min = [0.0]
            [phantom]
            kind = "sphere"
            center_mm = [0.0, 0.0, 55.0]
            radius_mm = 40.0
        "#;
        assert!(Scenario::from_toml_str(wrong_version)
            .unwrap_err()
            .to_string()
            .contains("format_version"));

        let unknown_key = r#"
            format_version = 1
            name = "x"
            seed = 1
            sample_times_min = [0.0]
            frobnicate = true
            [phantom]
            kind = "sphere"
            center_mm = [0.0, 0.0, 55.0]
            radius_mm = 40.0
        "#;
        assert!(Scenario::from_toml_str(unknown_key).is_err());

        let both_shapes = r#"
            format_version = 1
            name = "x"
            seed = 1
            sample_times_min = [0.0]
            [phantom]
            kind = "sphere"
            center_mm = [0.0, 0.0, 55.0]
            radius_mm = 40.0
            [profile]
            knots = [[0.0, 40.0], [10.0, 100.0]]
        "#;
        let err = Scenario::from_toml_str(both_shapes).unwrap_err().to_string();
        assert!(err.contains("exactly one"), "got: {err}");

        let neither_shape = r#"
            format_version = 1
            name = "x"
            seed = 1
            sample_times_min = [0.0]
        "#;
        assert!(Scenario::from_toml_str(neither_shape).is_err());
    }

    #[test]
    fn profile_scenario_tracks_volume_and_keeps_anterior_offset() {
        let sc = builtin("micturition-linear").unwrap();
        let p0 = sc.phantom_at(0.0).unwrap();
        let p240 = sc.phantom_at(240.0).unwrap();
        assert!((p0.volume_ml() - 40.0).abs() < 1e-9);
        assert!((p240.volume_ml() - 400.0).abs() < 1e-9);
        // The anterior pole stays put while the far wall recedes.
        for p in [&p0, &p240] {
            let r = sphere_radius_mm(p.volume_ml());
            assert!((p.center_mm().z - r - sc.medium.pre_wall_offset_mm).abs() < 1e-9);
        }
        // Out-of-range sample time is a hard error, not extrapolation.
        assert!(sc.phantom_at(241.0).is_err());
    }

    #[test]
    fn custom_array_section_builds() {
        let text = r#"
            format_version = 1
            name = "custom-array"
            seed = 1
            sample_times_min = [0.0]

            [array]
            extent_mm = [30.0, 30.0]
            elements = [
                { id = 1, position_mm = [-10.0, 0.0] },
                { id = 2, position_mm = [10.0, 0.0] },
                { id = 3, position_mm = [0.0, -10.0], beam = [0.0, 0.1, 1.0] },
                { id = 4, position_mm = [0.0, 10.0] },
            ]

            [phantom]
            kind = "sphere"
            center_mm = [0.0, 0.0, 55.0]
            radius_mm = 40.0
        "#;
        let sc = Scenario::from_toml_str(text).unwrap();
        let array = sc.array().unwrap();
        assert_eq!(array.elements().len(), 4);
        let e3 = array.element(3).unwrap();
        assert!((e3.beam.norm() - 1.0).abs() < 1e-12, "beam is normalized on load");
        assert!(e3.beam.y > 0.0);
    }
}

//! Bladder phantoms, tissue medium, the transducer patch, and beam geometry.
//!
//! The patch sits on the skin plane z = 0 with beams pointing into the body
//! (+z by default). Phantoms live in the same frame, so a wall depth is just
//! a ray parameter in millimetres.

use nalgebra::{Unit, Vector3};

use crate::error::{Error, Result};

// --------------------------------------------------------------------------
// medium
// --------------------------------------------------------------------------

/// Acoustic properties of the propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueMedium {
    /// Speed of sound in m/s.
    pub speed_of_sound_m_s: f64,
    /// Round-trip amplitude attenuation coefficient in dB·cm⁻¹·MHz⁻¹.
    pub attenuation_db_cm_mhz: f64,
    /// Nominal depth of the anterior wall region below the skin, mm.
    pub pre_wall_offset_mm: f64,
}

impl Default for TissueMedium {
    fn default() -> Self {
        Self {
            speed_of_sound_m_s: 1480.0,
            attenuation_db_cm_mhz: 0.3,
            pre_wall_offset_mm: 15.0,
        }
    }
}

impl TissueMedium {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_of_sound_m_s > 0.0 && self.speed_of_sound_m_s.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "speed of sound must be positive, got {}",
                self.speed_of_sound_m_s
            )));
        }
        if !(self.attenuation_db_cm_mhz >= 0.0 && self.attenuation_db_cm_mhz.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "attenuation coefficient must be non-negative, got {}",
                self.attenuation_db_cm_mhz
            )));
        }
        if !(self.pre_wall_offset_mm >= 0.0 && self.pre_wall_offset_mm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "pre-wall offset must be non-negative, got {}",
                self.pre_wall_offset_mm
            )));
        }
        Ok(())
    }
}

// --------------------------------------------------------------------------
// phantoms
// --------------------------------------------------------------------------

/// Idealised bladder geometry.
#[derive(Debug, Clone, PartialEq)]
pub enum BladderShape {
    Sphere {
        center_mm: Vector3<f64>,
        radius_mm: f64,
    },
    Ellipsoid {
        center_mm: Vector3<f64>,
        semi_axes_mm: Vector3<f64>,
    },
    /// Lab flask: spherical body plus a neck cylinder pointing along +x,
    /// i.e. parallel to the skin and clear of every beam.
    Flask {
        center_mm: Vector3<f64>,
        body_radius_mm: f64,
        neck_radius_mm: f64,
        neck_length_mm: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BladderPhantom {
    shape: BladderShape,
}

impl BladderPhantom {
    pub fn new(shape: BladderShape) -> Result<Self> {
        let all_positive = |vals: &[f64]| vals.iter().all(|v| *v > 0.0 && v.is_finite());
        let ok = match &shape {
            BladderShape::Sphere { radius_mm, .. } => all_positive(&[*radius_mm]),
            BladderShape::Ellipsoid { semi_axes_mm, .. } => {
                all_positive(&[semi_axes_mm.x, semi_axes_mm.y, semi_axes_mm.z])
            }
            BladderShape::Flask {
                body_radius_mm,
                neck_radius_mm,
                neck_length_mm,
                ..
            } => all_positive(&[*body_radius_mm, *neck_radius_mm, *neck_length_mm]),
        };
        if !ok {
            return Err(Error::InvalidParameter(
                "phantom radii/semi-axes must be positive and finite".into(),
            ));
        }
        Ok(Self { shape })
    }

    pub fn sphere(center_mm: Vector3<f64>, radius_mm: f64) -> Result<Self> {
        Self::new(BladderShape::Sphere {
            center_mm,
            radius_mm,
        })
    }

    /// Sphere with the given volume; inverse of [`BladderPhantom::volume_ml`].
    pub fn sphere_from_volume(center_mm: Vector3<f64>, volume_ml: f64) -> Result<Self> {
        if !(volume_ml > 0.0 && volume_ml.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sphere volume must be positive, got {volume_ml} mL"
            )));
        }
        let radius_mm = (volume_ml * 1000.0 * 3.0 / (4.0 * std::f64::consts::PI)).cbrt();
        Self::sphere(center_mm, radius_mm)
    }

    pub fn shape(&self) -> &BladderShape {
        &self.shape
    }

    /// Contained volume in millilitres.
    pub fn volume_ml(&self) -> f64 {
        let sphere = |r: f64| 4.0 / 3.0 * std::f64::consts::PI * r * r * r;
        let mm3 = match &self.shape {
            BladderShape::Sphere { radius_mm, .. } => sphere(*radius_mm),
            BladderShape::Ellipsoid { semi_axes_mm: s, .. } => {
                4.0 / 3.0 * std::f64::consts::PI * s.x * s.y * s.z
            }
            BladderShape::Flask {
                body_radius_mm,
                neck_radius_mm,
                neck_length_mm,
                ..
            } => {
                sphere(*body_radius_mm)
                    + std::f64::consts::PI * neck_radius_mm * neck_radius_mm * neck_length_mm
            }
        };
        mm3 / 1000.0
    }

    /// Tight axis-aligned bounding-box diameters (L, W, H) in centimetres,
    /// the inputs the clinical ellipsoid formula expects.
    pub fn bounding_diameters_cm(&self) -> (f64, f64, f64) {
        let (lx, ly, lz) = match &self.shape {
            BladderShape::Sphere { radius_mm: r, .. } => (2.0 * r, 2.0 * r, 2.0 * r),
            BladderShape::Ellipsoid { semi_axes_mm: s, .. } => {
                (2.0 * s.x, 2.0 * s.y, 2.0 * s.z)
            }
            BladderShape::Flask {
                body_radius_mm: r,
                neck_length_mm,
                ..
            } => (2.0 * r + neck_length_mm, 2.0 * r, 2.0 * r),
        };
        (lx / 10.0, ly / 10.0, lz / 10.0)
    }

    pub fn center_mm(&self) -> Vector3<f64> {
        match &self.shape {
            BladderShape::Sphere { center_mm, .. }
            | BladderShape::Ellipsoid { center_mm, .. }
            | BladderShape::Flask { center_mm, .. } => *center_mm,
        }
    }

    pub fn translated(&self, offset_mm: Vector3<f64>) -> Self {
        let mut shape = self.shape.clone();
        match &mut shape {
            BladderShape::Sphere { center_mm, .. }
            | BladderShape::Ellipsoid { center_mm, .. }
            | BladderShape::Flask { center_mm, .. } => *center_mm += offset_mm,
        }
        Self { shape }
    }
}

// --------------------------------------------------------------------------
// micturition profile
// --------------------------------------------------------------------------

/// Piecewise-linear bladder volume over time, for filling/voiding runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MicturitionProfile {
    samples: Vec<(f64, f64)>, // (minutes, mL)
}

impl MicturitionProfile {
    /// `samples` are (time_min, volume_ml) knots with strictly increasing
    /// times and non-negative volumes.
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("profile needs at least one sample".into()));
        }
        for pair in samples.windows(2) {
            if !(pair[1].0 > pair[0].0) {
                return Err(Error::InvalidParameter(format!(
                    "profile times must be strictly increasing ({} then {})",
                    pair[0].0, pair[1].0
                )));
            }
        }
        if samples.iter().any(|(t, v)| !t.is_finite() || !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "profile samples must be finite with non-negative volumes".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    /// Linear interpolation between knots; querying outside the sampled
    /// range is an error rather than an extrapolation.
    pub fn volume_at(&self, t_min: f64) -> Result<f64> {
        let first = self.samples.first().unwrap().0;
        let last = self.samples.last().unwrap().0;
        if !(t_min >= first && t_min <= last) {
            return Err(Error::TimeOutOfRange { t: t_min, first, last });
        }
        let idx = self
            .samples
            .windows(2)
            .position(|p| t_min <= p[1].0)
            .unwrap_or(0);
        if self.samples.len() == 1 {
            return Ok(self.samples[0].1);
        }
        let (t0, v0) = self.samples[idx];
        let (t1, v1) = self.samples[idx + 1];
        Ok(v0 + (v1 - v0) * (t_min - t0) / (t1 - t0))
    }
}

// --------------------------------------------------------------------------
// transducer patch
// --------------------------------------------------------------------------

/// One element of the patch: a point emitter/receiver on the skin plane with
/// a fixed beam direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: u8,
    pub x_mm: f64,
    pub y_mm: f64,
    pub beam: Unit<Vector3<f64>>,
}

impl Element {
    pub fn origin(&self) -> Vector3<f64> {
        Vector3::new(self.x_mm, self.y_mm, 0.0)
    }
}

/// The wearable patch: exactly four elements with ids 1..=4 inside a
/// rectangular footprint centred on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerArray {
    elements: Vec<Element>,
    pub extent_mm: (f64, f64),
}

impl TransducerArray {
    pub fn new(elements: Vec<Element>, extent_mm: (f64, f64)) -> Result<Self> {
        if elements.len() != 4 {
            return Err(Error::InvalidParameter(format!(
                "array needs exactly 4 elements, got {}",
                elements.len()
            )));
        }
        let mut seen = [false; 4];
        for e in &elements {
            if !(1..=4).contains(&e.id) {
                return Err(Error::InvalidParameter(format!(
                    "element id {} outside 1..=4",
                    e.id
                )));
            }
            if std::mem::replace(&mut seen[(e.id - 1) as usize], true) {
                return Err(Error::InvalidParameter(format!("duplicate element id {}", e.id)));
            }
            if e.x_mm.abs() > extent_mm.0 / 2.0 || e.y_mm.abs() > extent_mm.1 / 2.0 {
                return Err(Error::InvalidParameter(format!(
                    "element {} at ({}, {}) outside the {}x{} mm patch",
                    e.id, e.x_mm, e.y_mm, extent_mm.0, extent_mm.1
                )));
            }
            if e.beam.z <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "element {} beam must point into the body (+z component)",
                    e.id
                )));
            }
        }
        Ok(Self { elements, extent_mm })
    }

    /// Elements in id order.
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, id: u8) -> Option<&Element> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn translated_laterally(&self, dx_mm: f64, dy_mm: f64) -> Self {
        let elements = self
            .elements
            .iter()
            .map(|e| Element {
                x_mm: e.x_mm + dx_mm,
                y_mm: e.y_mm + dy_mm,
                ..e.clone()
            })
            .collect();
        Self {
            elements,
            extent_mm: self.extent_mm,
        }
    }
}

impl Default for TransducerArray {
    /// 2x2 grid, 15 mm pitch, 30x30 mm footprint, all beams normal to the
    /// skin. Ids run row-major from (-7.5, -7.5).
    fn default() -> Self {
        let z = Unit::new_normalize(Vector3::new(0.0, 0.0, 1.0));
        let coords = [(-7.5, -7.5), (7.5, -7.5), (-7.5, 7.5), (7.5, 7.5)];
        let elements = coords
            .iter()
            .enumerate()
            .map(|(i, (x, y))| Element {
                id: i as u8 + 1,
                x_mm: *x,
                y_mm: *y,
                beam: z,
            })
            .collect();
        Self::new(elements, (30.0, 30.0)).expect("default array is valid")
    }
}

// --------------------------------------------------------------------------
// beam / wall intersection
// --------------------------------------------------------------------------

/// Depths of the two wall crossings along one beam, mm, anterior first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallDepths {
    pub anterior_mm: f64,
    pub posterior_mm: f64,
}

/// Ray parameter interval where the ray is inside a solid, or None.
fn sphere_interval(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    radius: f64,
) -> Option<(f64, f64)> {
    let oc = origin - center;
    // |oc + t d|^2 = r^2 with |d| = 1
    let b = oc.dot(dir);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

fn ellipsoid_interval(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    center: &Vector3<f64>,
    semi: &Vector3<f64>,
) -> Option<(f64, f64)> {
    // Scale each axis to turn the ellipsoid into a unit sphere; the ray
    // parameter is unchanged because the scaling is linear in t.
    let o = (origin - center).component_div(semi);
    let d = dir.component_div(semi);
    let a = d.norm_squared();
    let b = o.dot(&d);
    let c = o.norm_squared() - 1.0;
    let disc = b * b - a * c;
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some(((-b - s) / a, (-b + s) / a))
}

/// Cylinder with axis along +x from `x0` to `x1` at lateral centre (cy, cz).
fn neck_interval(
    origin: &Vector3<f64>,
    dir: &Vector3<f64>,
    x0: f64,
    x1: f64,
    cy: f64,
    cz: f64,
    radius: f64,
) -> Option<(f64, f64)> {
    // Quadratic in the (y, z) plane.
    let oy = origin.y - cy;
    let oz = origin.z - cz;
    let a = dir.y * dir.y + dir.z * dir.z;
    let (mut t0, mut t1) = if a < 1e-12 {
        if oy * oy + oz * oz >= radius * radius {
            return None;
        }
        (f64::NEG_INFINITY, f64::INFINITY)
    } else {
        let b = oy * dir.y + oz * dir.z;
        let c = oy * oy + oz * oz - radius * radius;
        let disc = b * b - a * c;
        if disc <= 0.0 {
            return None;
        }
        let s = disc.sqrt();
        ((-b - s) / a, (-b + s) / a)
    };
    // Clip by the axial slab.
    if dir.x.abs() < 1e-12 {
        if origin.x < x0 || origin.x > x1 {
            return None;
        }
    } else {
        let (sa, sb) = ((x0 - origin.x) / dir.x, (x1 - origin.x) / dir.x);
        let (sa, sb) = if sa <= sb { (sa, sb) } else { (sb, sa) };
        t0 = t0.max(sa);
        t1 = t1.min(sb);
    }
    (t1 > t0).then_some((t0, t1))
}

fn shape_intervals(shape: &BladderShape, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Vec<(f64, f64)> {
    match shape {
        BladderShape::Sphere { center_mm, radius_mm } => {
            sphere_interval(origin, dir, center_mm, *radius_mm)
                .into_iter()
                .collect()
        }
        BladderShape::Ellipsoid { center_mm, semi_axes_mm } => {
            ellipsoid_interval(origin, dir, center_mm, semi_axes_mm)
                .into_iter()
                .collect()
        }
        BladderShape::Flask {
            center_mm,
            body_radius_mm,
            neck_radius_mm,
            neck_length_mm,
        } => {
            let mut iv: Vec<_> = sphere_interval(origin, dir, center_mm, *body_radius_mm)
                .into_iter()
                .collect();
            iv.extend(neck_interval(
                origin,
                dir,
                center_mm.x + body_radius_mm,
                center_mm.x + body_radius_mm + neck_length_mm,
                center_mm.y,
                center_mm.z,
                *neck_radius_mm,
            ));
            iv
        }
    }
}

/// Gaps below this merge into one interval. Where the flask body meets the
/// neck, a ray grazing the tangent plane leaves a micrometre-scale sliver of
/// "outside" (ρ²/2R for a ray offset ρ from the axis); at a 740 µm acoustic
/// wavelength such a film reflects nothing.
const MERGE_TOLERANCE_MM: f64 = 1e-3;

/// Merge overlapping (or acoustically contiguous) inside-intervals and
/// return the first one.
fn first_interval(mut intervals: Vec<(f64, f64)>) -> Option<(f64, f64)> {
    if intervals.is_empty() {
        return None;
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged = intervals[0];
    for iv in &intervals[1..] {
        if iv.0 <= merged.1 + MERGE_TOLERANCE_MM {
            merged.1 = merged.1.max(iv.1);
        } else {
            break; // later disjoint intervals are beyond the first wall pair
        }
    }
    Some(merged)
}

/// Anterior/posterior wall depths for every element of the patch, in the
/// array's element order. A beam that meets the phantom in fewer than two
/// surface crossings (including tangents) reports `None`.
pub fn wall_intersections(
    array: &TransducerArray,
    phantom: &BladderPhantom,
) -> Vec<Option<WallDepths>> {
    array
        .elements()
        .iter()
        .map(|e| {
            let origin = e.origin();
            let dir = e.beam.into_inner();
            let (t0, t1) = first_interval(shape_intervals(phantom.shape(), &origin, &dir))?;
            // Both crossings must be in front of the element.
            (t0 > 0.0 && t1 > t0).then_some(WallDepths {
                anterior_mm: t0,
                posterior_mm: t1,
            })
        })
        .collect()
}

// --------------------------------------------------------------------------

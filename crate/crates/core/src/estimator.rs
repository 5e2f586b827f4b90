//! Volume estimation from edge timestamps.
//!
//! The processing chain mirrors what runs after the radio: mask out
//! overflow-flagged frames, group each transducer's rising edges into bursts
//! (first burst = anterior wall, second = posterior), gate on the total burst
//! count, average each burst to one timestamp, convert to depth at 1480 m/s,
//! place a 3-D point along each beam, and fit a sphere to the points by
//! least squares — quasi-Newton (BFGS) refinement of an algebraic
//! closed-form initialisation. Volume is the fitted sphere's; the clinical
//! three-diameter ellipsoid formula is provided as a comparison oracle.

use nalgebra::{DMatrix, DVector, Matrix4, Vector3, Vector4};

use crate::afe::EdgeTimestamps;
use crate::error::{Error, Result};
use crate::link::SweepBuffer;
use crate::phantom::TransducerArray;

// --------------------------------------------------------------------------
// clustering
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wall {
    Anterior,
    Posterior,
}

impl std::fmt::Display for Wall {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Wall::Anterior => "anterior",
            Wall::Posterior => "posterior",
        })
    }
}

/// One burst of rising edges attributed to a wall reflection.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoCluster {
    pub transducer_id: u8,
    pub wall: Wall,
    pub member_ticks: Vec<u32>,
    pub mean_tick: f64,
}

/// Clustering result for one transducer: at most two kept clusters plus the
/// number of surplus bursts that were discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub clusters: Vec<EchoCluster>,
    pub discarded: usize,
}

/// Group sorted edge ticks into bursts: a gap of at least `gap_threshold_us`
/// starts a new burst. The first burst is the anterior wall, the second the
/// posterior; anything beyond that is counted and dropped.
pub fn cluster_bursts(
    edges: &EdgeTimestamps,
    transducer_id: u8,
    gap_threshold_us: f64,
) -> Clustering {
    let gap_ticks = gap_threshold_us * edges.tick_rate_mhz;
    let mut groups: Vec<Vec<u32>> = Vec::new();
    for &tick in &edges.ticks {
        match groups.last_mut() {
            Some(g) if ((tick as i64 - *g.last().unwrap() as i64) as f64) < gap_ticks => {
                g.push(tick)
            }
            _ => groups.push(vec![tick]),
        }
    }
    let discarded = groups.len().saturating_sub(2);
    let clusters = groups
        .into_iter()
        .take(2)
        .enumerate()
        .map(|(i, member_ticks)| {
            let mean_tick =
                member_ticks.iter().map(|t| *t as f64).sum::<f64>() / member_ticks.len() as f64;
            EchoCluster {
                transducer_id,
                wall: if i == 0 { Wall::Anterior } else { Wall::Posterior },
                member_ticks,
                mean_tick,
            }
        })
        .collect();
    Clustering { clusters, discarded }
}

// --------------------------------------------------------------------------
// gate
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quality {
    Ok,
    LowEchoAlert,
}

impl std::fmt::Display for Quality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Quality::Ok => "ok",
            Quality::LowEchoAlert => "low_echo_alert",
        })
    }
}

/// A measurement needs at least `min_required` echo clusters across the four
/// transducers; below that the user is asked to reposition the patch.
pub fn gate_echo_count(total_clusters: usize, min_required: usize) -> Quality {
    if total_clusters < min_required {
        Quality::LowEchoAlert
    } else {
        Quality::Ok
    }
}

// --------------------------------------------------------------------------
// depth conversion and point building
// --------------------------------------------------------------------------

/// Round-trip counter value to one-way depth, mm.
pub fn tick_to_depth_mm(mean_tick: f64, tick_rate_mhz: f64, speed_of_sound_m_s: f64) -> f64 {
    speed_of_sound_m_s * mean_tick / (tick_rate_mhz * 2000.0)
}

/// A bladder-wall reflection point in patch coordinates, mm. Depth is always
/// in front of the patch (z > 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallPoint {
    pub x_mm: f64,
    pub y_mm: f64,
    pub z_mm: f64,
}

impl WallPoint {
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x_mm, self.y_mm, self.z_mm)
    }
}

/// Configuration for the whole timestamp→volume pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub speed_of_sound_m_s: f64,
    pub tick_rate_mhz: f64,
    /// Edge gaps at or above this start a new burst, µs.
    pub gap_threshold_us: f64,
    /// Subtracted from each cluster-mean time before depth conversion, µs.
    /// Compensates the burst-average bias relative to the echo onset.
    pub onset_correction_us: f64,
    /// Minimum cluster count across all transducers for a volume.
    pub min_clusters: usize,
    pub fit: FitConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            speed_of_sound_m_s: 1480.0,
            tick_rate_mhz: 64.0,
            gap_threshold_us: 5.0,
            onset_correction_us: 1.25,
            min_clusters: 5,
            fit: FitConfig::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_of_sound_m_s > 0.0 && self.speed_of_sound_m_s.is_finite()) {
            return Err(Error::InvalidParameter("speed of sound must be positive".into()));
        }
        if !(self.tick_rate_mhz > 0.0 && self.tick_rate_mhz.is_finite()) {
            return Err(Error::InvalidParameter("tick rate must be positive".into()));
        }
        if !(self.gap_threshold_us > 0.0 && self.gap_threshold_us.is_finite()) {
            return Err(Error::InvalidParameter("gap threshold must be positive".into()));
        }
        if !(self.onset_correction_us >= 0.0 && self.onset_correction_us.is_finite()) {
            return Err(Error::InvalidParameter("onset correction must be non-negative".into()));
        }
        if self.min_clusters == 0 {
            return Err(Error::InvalidParameter("minimum cluster count must be at least 1".into()));
        }
        self.fit.validate()
    }
}

/// Turn clusters into 3-D wall points: corrected mean time → depth along the
/// owning element's beam.
pub fn build_points(
    clusters: &[EchoCluster],
    array: &TransducerArray,
    cfg: &EstimatorConfig,
) -> Result<Vec<WallPoint>> {
    clusters
        .iter()
        .map(|c| {
            let element = array.element(c.transducer_id).ok_or_else(|| {
                Error::Protocol(format!("cluster references unknown transducer {}", c.transducer_id))
            })?;
            let t_us = c.mean_tick / cfg.tick_rate_mhz - cfg.onset_correction_us;
            if t_us <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "corrected echo time {t_us:.3} µs is not positive for transducer {}",
                    c.transducer_id
                )));
            }
            let depth_mm = cfg.speed_of_sound_m_s * t_us / 2000.0;
            let p = element.origin() + depth_mm * element.beam.into_inner();
            Ok(WallPoint { x_mm: p.x, y_mm: p.y, z_mm: p.z })
        })
        .collect()
}

// --------------------------------------------------------------------------
// sphere fitting
// --------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Converged when the gradient's max component ≤ tol·(1 + |cost|).
    pub gradient_tol: f64,
    /// Reject the algebraic system above this condition number.
    pub condition_limit: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_iterations: 200, gradient_tol: 1e-10, condition_limit: 1e8 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("iteration cap must be at least 1".into()));
        }
        if !(self.gradient_tol > 0.0 && self.condition_limit > 1.0) {
            return Err(Error::InvalidParameter("fit tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereFit {
    pub center_mm: Vector3<f64>,
    pub radius_mm: f64,
    pub rms_residual_mm: f64,
    pub iterations: usize,
}

/// Geometric least-squares cost Σ(‖p − c‖ − r)² and its gradient over
/// (cx, cy, cz, r).
fn sphere_cost_grad(points: &[Vector3<f64>], x: &Vector4<f64>) -> (f64, Vector4<f64>) {
    let c = x.xyz();
    let r = x[3];
    let mut cost = 0.0;
    let mut grad = Vector4::zeros();
    for p in points {
        let to_center = c - p;
        let d = to_center.norm().max(1e-12);
        let e = d - r;
        cost += e * e;
        let gc = to_center * (2.0 * e / d);
        grad[0] += gc.x;
        grad[1] += gc.y;
        grad[2] += gc.z;
        grad[3] -= 2.0 * e;
    }
    (cost, grad)
}

/// Algebraic closed-form start: each point gives a linear row
/// 2p·c + (r² − ‖c‖²) = ‖p‖², solved for (c, r² − ‖c‖²) by least squares.
/// Returns the start vector and the system's condition number.
fn algebraic_init(points: &[Vector3<f64>], condition_limit: f64) -> Result<(Vector4<f64>, f64)> {
    let n = points.len();
    let a = DMatrix::from_fn(n, 4, |i, j| match j {
        0 => 2.0 * points[i].x,
        1 => 2.0 * points[i].y,
        2 => 2.0 * points[i].z,
        _ => 1.0,
    });
    let b = DVector::from_fn(n, |i, _| points[i].norm_squared());
    let svd = a.svd(true, true);
    let (mut s_max, mut s_min) = (0.0f64, f64::INFINITY);
    for s in svd.singular_values.iter() {
        s_max = s_max.max(*s);
        s_min = s_min.min(*s);
    }
    let cond = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(cond <= condition_limit) {
        return Err(Error::DegenerateGeometry { cond });
    }
    let sol = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::InvalidParameter(format!("algebraic solve failed: {e}")))?;
    let center = Vector3::new(sol[0], sol[1], sol[2]);
    // Radius from mean distance: robust even when r² − ‖c‖² + ‖c‖² loses
    // precision for far-away centers.
    let r0 = points.iter().map(|p| (p - center).norm()).sum::<f64>() / n as f64;
    Ok((Vector4::new(center.x, center.y, center.z, r0), cond))
}

pub fn fit_sphere(points: &[Vector3<f64>]) -> Result<SphereFit> {
    fit_sphere_with(points, &FitConfig::default())
}

/// Least-squares sphere fit: BFGS quasi-Newton minimisation of the geometric
/// distance cost, started from the algebraic closed-form solution.
pub fn fit_sphere_with(points: &[Vector3<f64>], cfg: &FitConfig) -> Result<SphereFit> {
    cfg.validate()?;
    if points.len() < 4 {
        return Err(Error::InsufficientPoints { got: points.len() });
    }
    let (mut x, cond) = algebraic_init(points, cfg.condition_limit)?;
    let (mut cost, mut grad) = sphere_cost_grad(points, &x);
    let mut h = Matrix4::identity();
    let mut iterations = 0usize;
    let mut converged = grad.amax() <= cfg.gradient_tol * (1.0 + cost.abs());

    while !converged && iterations < cfg.max_iterations {
        let mut dir = -(h * grad);
        // Safeguard: fall back to steepest descent if curvature information
        // has gone stale and the direction is no longer downhill.
        if dir.dot(&grad) >= 0.0 {
            h = Matrix4::identity();
            dir = -grad;
        }
        let slope = dir.dot(&grad);

        // Armijo backtracking line search.
        let mut alpha = 1.0f64;
        let mut accepted = None;
        for _ in 0..60 {
            let x_try = x + alpha * dir;
            let (cost_try, grad_try) = sphere_cost_grad(points, &x_try);
            if cost_try <= cost + 1e-4 * alpha * slope {
                accepted = Some((x_try, cost_try, grad_try));
                break;
            }
            alpha *= 0.5;
        }
        iterations += 1;
        let Some((x_new, cost_new, grad_new)) = accepted else {
            // No feasible decrease at any step length: the iterate sits at
            // the numerical floor of the cost surface. For noisy data the
            // analytic gradient tolerance is unreachable in f64, so a stalled
            // line search is the practical convergence signal.
            converged = true;
            break;
        };

        let s = alpha * dir;
        let y = grad_new - grad;
        let sy = s.dot(&y);
        if iterations == 1 && sy > 0.0 {
            // Scale the initial inverse Hessian to the first curvature sample.
            h = Matrix4::identity() * (sy / y.dot(&y).max(f64::MIN_POSITIVE));
        }
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = Matrix4::identity();
            let left = i - rho * s * y.transpose();
            let right = i - rho * y * s.transpose();
            h = left * h * right + rho * s * s.transpose();
        }

        let step_stalled = s.norm() <= 1e-14 * (1.0 + x.norm());
        x = x_new;
        cost = cost_new;
        grad = grad_new;
        converged =
            grad.amax() <= cfg.gradient_tol * (1.0 + cost.abs()) || step_stalled;
    }

    if !converged {
        return Err(Error::NoConvergence { iterations });
    }
    let radius = x[3];
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::DegenerateGeometry { cond });
    }
    Ok(SphereFit {
        center_mm: x.xyz(),
        radius_mm: radius,
        rms_residual_mm: (cost / points.len() as f64).sqrt(),
        iterations,
    })
}

/// Sphere volume in mL from a radius in mm.
pub fn sphere_volume_ml(radius_mm: f64) -> f64 {
    4.0 / 3.0 * std::f64::consts::PI * radius_mm.powi(3) / 1000.0
}

/// Clinical three-diameter bladder formula: 0.52 · L · W · H, diameters in cm,
/// volume in mL. Used as a comparison oracle, not in the pipeline.
pub fn clinical_ellipsoid_volume_ml(l_cm: f64, w_cm: f64, h_cm: f64) -> Result<f64> {
    for d in [l_cm, w_cm, h_cm] {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::InvalidParameter(format!("diameter {d} must be positive")));
        }
    }
    Ok(0.52 * l_cm * w_cm * h_cm)
}

// --------------------------------------------------------------------------
// sweep pipeline
// --------------------------------------------------------------------------

/// Per-sweep output of the processing pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeEstimate {
    /// Present iff `quality` is [`Quality::Ok`].
    pub volume_ml: Option<f64>,
    /// Usable echo clusters found (equals fitted point count when ok).
    pub point_count: usize,
    pub quality: Quality,
    pub rms_residual_mm: Option<f64>,
}

impl VolumeEstimate {
    /// One exportable record line: `time_s volume_ml point_count quality
    /// residual_mm`, with `nan` standing in for absent numerics.
    pub fn record(&self, time_s: f64) -> String {
        let vol = match self.volume_ml {
            Some(v) => format!("{v:.1}"),
            None => "nan".to_string(),
        };
        let res = match self.rms_residual_mm {
            Some(r) => format!("{r:.3}"),
            None => "nan".to_string(),
        };
        format!("{time_s:.1} {vol} {} {} {res}", self.point_count, self.quality)
    }
}

/// Run one completed sweep through mask → cluster → gate → fit → volume.
pub fn process_sweep(
    sweep: &SweepBuffer,
    array: &TransducerArray,
    cfg: &EstimatorConfig,
) -> Result<VolumeEstimate> {
    cfg.validate()?;

    // Mask out corrupted firings before counting anything.
    let usable: Vec<_> = sweep.frames.iter().filter(|f| !f.overflowed()).collect();
    if usable.is_empty() {
        return Err(Error::InsufficientPoints { got: 0 });
    }

    let mut clusters = Vec::new();
    for id in 1..=4u8 {
        let mut ticks: Vec<u32> = usable
            .iter()
            .filter(|f| f.transducer_id == id)
            .map(|f| f.timestamp_ticks)
            .collect();
        if ticks.is_empty() {
            continue;
        }
        ticks.sort_unstable();
        ticks.dedup();
        let edges = EdgeTimestamps { ticks, tick_rate_mhz: cfg.tick_rate_mhz };
        clusters.extend(cluster_bursts(&edges, id, cfg.gap_threshold_us).clusters);
    }

    let quality = gate_echo_count(clusters.len(), cfg.min_clusters);
    if quality == Quality::LowEchoAlert {
        return Ok(VolumeEstimate {
            volume_ml: None,
            point_count: clusters.len(),
            quality,
            rms_residual_mm: None,
        });
    }

    let points = build_points(&clusters, array, cfg)?;
    let vectors: Vec<Vector3<f64>> = points.iter().map(WallPoint::as_vector).collect();
    let fit = fit_sphere_with(&vectors, &cfg.fit)?;
    Ok(VolumeEstimate {
        volume_ml: Some(sphere_volume_ml(fit.radius_mm)),
        point_count: points.len(),
        quality: Quality::Ok,
        rms_residual_mm: Some(fit.rms_residual_mm),
    })
}

// --------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{TimestampFrame, FLAG_CAPTURE_OVERFLOW};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn edges_at(ticks: Vec<u32>, rate: f64) -> EdgeTimestamps {
        EdgeTimestamps::new(ticks, rate).unwrap()
    }

    #[test]
    fn cluster_means_match_hand_grouping() {
        // Two bursts in 20 MHz ticks: 54.05/54.55/55.05 µs and 135.1/135.6 µs.
        let edges = edges_at(vec![1081, 1091, 1101, 2702, 2712], 20.0);
        let out = cluster_bursts(&edges, 2, 5.0);
        assert_eq!(out.clusters.len(), 2);
        assert_eq!(out.discarded, 0);
        assert_eq!(out.clusters[0].wall, Wall::Anterior);
        assert_eq!(out.clusters[1].wall, Wall::Posterior);
        assert_relative_eq!(out.clusters[0].mean_tick / 20.0, 54.55, max_relative = 1e-12);
        assert_relative_eq!(out.clusters[1].mean_tick / 20.0, 135.35, max_relative = 1e-12);
        assert!(out.clusters.iter().all(|c| c.transducer_id == 2));
    }

    #[test]
    fn cluster_discards_surplus_bursts() {
        // Three well-separated bursts at 64 MHz: keep two, count one.
        let edges = edges_at(vec![100, 110, 5000, 5010, 9000], 64.0);
        let out = cluster_bursts(&edges, 1, 5.0);
        assert_eq!(out.clusters.len(), 2);
        assert_eq!(out.discarded, 1);
    }

    #[test]
    fn cluster_handles_empty_and_single_burst() {
        let none = cluster_bursts(&edges_at(vec![], 64.0), 1, 5.0);
        assert!(none.clusters.is_empty());
        assert_eq!(none.discarded, 0);

        let one = cluster_bursts(&edges_at(vec![500, 510, 520], 64.0), 3, 5.0);
        assert_eq!(one.clusters.len(), 1);
        assert_eq!(one.clusters[0].wall, Wall::Anterior);
        assert_eq!(one.clusters[0].member_ticks.len(), 3);
    }

    #[test]
    fn cluster_mean_stays_within_member_range() {
        let edges = edges_at(vec![100, 140, 180], 64.0);
        let out = cluster_bursts(&edges, 1, 5.0);
        let c = &out.clusters[0];
        assert!(c.mean_tick >= *c.member_ticks.first().unwrap() as f64);
        assert!(c.mean_tick <= *c.member_ticks.last().unwrap() as f64);
    }

    #[test]
    fn gate_thresholds() {
        assert_eq!(gate_echo_count(4, 5), Quality::LowEchoAlert);
        assert_eq!(gate_echo_count(5, 5), Quality::Ok);
        assert_eq!(gate_echo_count(8, 5), Quality::Ok);
        assert_eq!(gate_echo_count(0, 5), Quality::LowEchoAlert);
    }

    #[test]
    fn tick_depth_conversion_matches_hand_values() {
        let d = tick_to_depth_mm(4324.0, 64.0, 1480.0);
        assert!((d - 49.996250).abs() < 1e-6);
        assert!((d - 50.0).abs() < 0.02);
        let d = tick_to_depth_mm(9513.0, 64.0, 1480.0);
        assert!((d - 109.994062).abs() < 1e-6);
        assert!((d - 110.0).abs() < 0.02);
        assert_eq!(tick_to_depth_mm(0.0, 64.0, 1480.0), 0.0);
    }

    #[test]
    fn build_points_place_depth_along_beam() {
        let array = TransducerArray::default();
        let cfg = EstimatorConfig { onset_correction_us: 0.0, ..Default::default() };
        // 50 mm depth on transducer 4 at (7.5, 7.5): round trip 67.5676 µs.
        let mean_tick: f64 = 2.0 * 50.0 / 1480.0 * 1000.0 * 64.0;
        let cluster = EchoCluster {
            transducer_id: 4,
            wall: Wall::Anterior,
            member_ticks: vec![mean_tick.floor() as u32, mean_tick.ceil() as u32],
            mean_tick,
        };
        let pts = build_points(&[cluster.clone()], &array, &cfg).unwrap();
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].x_mm, 7.5, max_relative = 1e-12);
        assert_relative_eq!(pts[0].y_mm, 7.5, max_relative = 1e-12);
        assert_relative_eq!(pts[0].z_mm, 50.0, max_relative = 1e-9);

        // The onset correction pulls the point toward the patch.
        let cfg_corr = EstimatorConfig::default();
        let pts_corr = build_points(&[cluster], &array, &cfg_corr).unwrap();
        let shift = 1480.0 * 1.25 / 2000.0;
        assert_relative_eq!(pts_corr[0].z_mm, 50.0 - shift, max_relative = 1e-9);
    }

    #[test]
    fn build_points_reject_nonpositive_corrected_time() {
        let array = TransducerArray::default();
        let cfg = EstimatorConfig::default();
        let cluster = EchoCluster {
            transducer_id: 1,
            wall: Wall::Anterior,
            member_ticks: vec![10],
            mean_tick: 10.0, // 0.156 µs, below the 1.25 µs correction
        };
        assert!(build_points(&[cluster], &array, &cfg).is_err());
    }

    // ---- sphere fitting -------------------------------------------------

    /// Well-spread exact samples of a sphere: four beam azimuths at two
    /// polar rings each.
    fn sphere_samples(center: Vector3<f64>, r: f64) -> Vec<Vector3<f64>> {
        let mut pts = Vec::new();
        for (i, phi_deg) in [0.0, 90.0, 180.0, 270.0].iter().enumerate() {
            for theta_deg in [35.0, 110.0 + 7.0 * i as f64] {
                let phi = (phi_deg + 13.0 * i as f64).to_radians();
                let theta: f64 = theta_deg.to_radians();
                pts.push(
                    center
                        + r * Vector3::new(
                            theta.sin() * phi.cos(),
                            theta.sin() * phi.sin(),
                            theta.cos(),
                        ),
                );
            }
        }
        pts
    }

    /// Closed-form circumsphere of exactly four points via the 4×4 linear
    /// system — independent of the least-squares path.
    fn circumsphere(p: &[Vector3<f64>; 4]) -> (Vector3<f64>, f64) {
        let a = Matrix4::from_fn(|i, j| match j {
            0 => 2.0 * p[i].x,
            1 => 2.0 * p[i].y,
            2 => 2.0 * p[i].z,
            _ => 1.0,
        });
        let b = Vector4::from_fn(|i, _| p[i].norm_squared());
        let sol = a.lu().solve(&b).expect("non-degenerate tetrahedron");
        let c = Vector3::new(sol[0], sol[1], sol[2]);
        (c, (p[0] - c).norm())
    }

    #[test]
    fn fit_recovers_exact_sphere_to_machine_precision() {
        let center = Vector3::new(3.0, -2.0, 60.0);
        let pts = sphere_samples(center, 39.08);
        let fit = fit_sphere(&pts).unwrap();
        assert!((fit.radius_mm - 39.08).abs() / 39.08 < 1e-9);
        assert!((fit.center_mm - center).norm() < 1e-6);
        assert!(fit.rms_residual_mm < 1e-6);
    }

    #[test]
    fn fit_matches_circumsphere_on_tetrahedra() {
        // Regular tetrahedron on the unit sphere.
        let s = 1.0 / 3f64.sqrt();
        let tetra = [
            Vector3::new(s, s, s),
            Vector3::new(s, -s, -s),
            Vector3::new(-s, s, -s),
            Vector3::new(-s, -s, s),
        ];
        let fit = fit_sphere(&tetra).unwrap();
        assert!(fit.center_mm.norm() < 1e-9);
        assert_relative_eq!(fit.radius_mm, 1.0, max_relative = 1e-9);

        // An asymmetric tetrahedron against the independent 4×4 solve.
        let p = [
            Vector3::new(12.0, -3.0, 44.0),
            Vector3::new(-9.0, 14.0, 61.0),
            Vector3::new(4.0, 22.0, 35.0),
            Vector3::new(-15.0, -11.0, 52.0),
        ];
        let (c_ref, r_ref) = circumsphere(&p);
        let fit = fit_sphere(&p).unwrap();
        assert!((fit.center_mm - c_ref).norm() / c_ref.norm() < 1e-9);
        assert!((fit.radius_mm - r_ref).abs() / r_ref < 1e-9);
        assert!(fit.rms_residual_mm < 1e-9);
    }

    #[test]
    fn fit_rejects_too_few_points() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 20.0),
            Vector3::new(1.0, 0.0, 21.0),
            Vector3::new(0.0, 1.0, 22.0),
        ];
        assert!(matches!(fit_sphere(&pts), Err(Error::InsufficientPoints { got: 3 })));
    }

    #[test]
    fn fit_rejects_coplanar_points() {
        // Eight points on a tilted plane: the algebraic system is singular.
        let mut pts = Vec::new();
        for i in 0..8 {
            let x = (i % 4) as f64 * 5.0;
            let y = (i / 4) as f64 * 7.0;
            pts.push(Vector3::new(x, y, 30.0 + 0.5 * x - 0.25 * y));
        }
        assert!(matches!(fit_sphere(&pts), Err(Error::DegenerateGeometry { .. })));
    }

    #[test]
    fn fit_translation_equivariance_and_rotation_invariance() {
        let pts = sphere_samples(Vector3::new(0.0, 0.0, 55.0), 33.0);
        let base = fit_sphere(&pts).unwrap();

        let shift = Vector3::new(-12.5, 8.0, 41.0);
        let moved: Vec<_> = pts.iter().map(|p| p + shift).collect();
        let fit = fit_sphere(&moved).unwrap();
        assert!((fit.center_mm - (base.center_mm + shift)).norm() < 1e-9 * 100.0);
        assert_relative_eq!(fit.radius_mm, base.radius_mm, max_relative = 1e-9);

        let rot = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)),
            1.1,
        );
        let rotated: Vec<_> = pts.iter().map(|p| rot * p).collect();
        let fit = fit_sphere(&rotated).unwrap();
        assert_relative_eq!(fit.radius_mm, base.radius_mm, max_relative = 1e-9);
        assert!((fit.rms_residual_mm - base.rms_residual_mm).abs() < 1e-9);
    }

    #[test]
    fn fit_survives_depth_noise_on_beam_geometry() {
        // 8 points = 4 beams × 2 walls on a 40 mm sphere, Gaussian depth
        // noise σ = 0.5 mm; volume error < 5% in at least 95% of trials.
        let center = Vector3::new(0.0, 0.0, 60.0);
        let r = 40.0;
        let true_vol = sphere_volume_ml(r);
        let lateral = [(-7.5, -7.5), (7.5, -7.5), (-7.5, 7.5), (7.5, 7.5)];
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut ok = 0;
        for seed in 0..1000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = Vec::with_capacity(8);
            for (x, y) in lateral {
                let half = (r * r - (x * x + y * y)).sqrt();
                for z in [center.z - half, center.z + half] {
                    pts.push(Vector3::new(x, y, z + noise.sample(&mut rng)));
                }
            }
            let fit = fit_sphere(&pts).unwrap();
            let err = (sphere_volume_ml(fit.radius_mm) - true_vol).abs() / true_vol;
            if err < 0.05 {
                ok += 1;
            }
        }
        assert!(ok >= 950, "only {ok}/1000 trials within 5%");
    }

    #[test]
    fn volume_conversions_match_hand_values() {
        assert!((sphere_volume_ml(39.08) - 250.0071).abs() < 1e-3);
        assert!((sphere_volume_ml(39.08) - 250.0).abs() < 0.2);
        assert_relative_eq!(sphere_volume_ml(10.0), 4.1888, max_relative = 1e-4);
        assert!((sphere_volume_ml(62.04) - 1000.2394).abs() < 1e-3);
        assert!((sphere_volume_ml(62.04) - 1000.0).abs() < 1.0);
    }

    #[test]
    fn clinical_formula_and_sphere_ratio() {
        assert_relative_eq!(
            clinical_ellipsoid_volume_ml(10.0, 10.0, 10.0).unwrap(),
            520.0,
            max_relative = 1e-12
        );
        // On a perfect sphere of diameter d the formula reads 0.52·d³ versus
        // the true (π/6)·d³.
        let d = 7.816;
        let clinical = clinical_ellipsoid_volume_ml(d, d, d).unwrap();
        let true_vol = std::f64::consts::PI / 6.0 * d.powi(3);
        assert!((clinical / true_vol - 0.993127).abs() < 1e-4);
        assert!(clinical_ellipsoid_volume_ml(0.0, 10.0, 10.0).is_err());
        assert!(clinical_ellipsoid_volume_ml(10.0, -1.0, 10.0).is_err());
    }

    // ---- sweep pipeline -------------------------------------------------

    /// Build a sweep whose ticks encode a sphere at (0,0,60) r=40 seen by
    /// the default array: per element, bursts of three edges 0.5 µs apart
    /// starting at each wall's round-trip time.
    fn synthetic_sweep(ids: &[u8], walls_per_id: usize) -> SweepBuffer {
        let (ant, post) = (21.4319, 98.5681); // 60 ∓ √(40² − 7.5² − 7.5²)
        let mut frames = Vec::new();
        for &id in ids {
            for depth in [ant, post].iter().take(walls_per_id) {
                let rtt_us: f64 = 2.0 * depth / 1480.0 * 1000.0;
                let base = (rtt_us * 64.0).floor() as u32;
                for k in 0..3u32 {
                    frames.push(TimestampFrame::new(0, id, 0, base + 32 * k).unwrap());
                }
            }
        }
        SweepBuffer { frames, complete: true }
    }

    #[test]
    fn process_sweep_recovers_volume_from_full_sweep() {
        let array = TransducerArray::default();
        let cfg = EstimatorConfig::default();
        let sweep = synthetic_sweep(&[1, 2, 3, 4], 2);
        let est = process_sweep(&sweep, &array, &cfg).unwrap();
        assert_eq!(est.quality, Quality::Ok);
        assert_eq!(est.point_count, 8);
        let vol = est.volume_ml.unwrap();
        let truth = sphere_volume_ml(40.0);
        assert!((vol - truth).abs() / truth < 0.01, "volume {vol} vs {truth}");
        assert!(est.rms_residual_mm.unwrap() < 0.1);
    }

    #[test]
    fn process_sweep_accepts_five_clusters() {
        let array = TransducerArray::default();
        let cfg = EstimatorConfig::default();
        // Two full elements plus one anterior-only element: 5 clusters.
        let mut sweep = synthetic_sweep(&[1, 2], 2);
        sweep.frames.extend(synthetic_sweep(&[3], 1).frames);
        let est = process_sweep(&sweep, &array, &cfg).unwrap();
        assert_eq!(est.quality, Quality::Ok);
        assert_eq!(est.point_count, 5);
        let vol = est.volume_ml.unwrap();
        let truth = sphere_volume_ml(40.0);
        assert!((vol - truth).abs() / truth < 0.01, "volume {vol} vs {truth}");
    }

    #[test]
    fn process_sweep_accepts_six_clusters_one_silent_element() {
        let array = TransducerArray::default();
        let cfg = EstimatorConfig::default();
        // Three full elements, one silent element: 6 clusters.
        let sweep = synthetic_sweep(&[1, 2, 3], 2);
        let est = process_sweep(&sweep, &array, &cfg).unwrap();
        assert_eq!(est.quality, Quality::Ok);
        assert_eq!(est.point_count, 6);
        let vol = est.volume_ml.unwrap();
        let truth = sphere_volume_ml(40.0);
        assert!((vol - truth).abs() / truth < 0.01, "volume {vol} vs {truth}");
    }

    #[test]
    fn process_sweep_alerts_below_five_clusters() {
        let array = TransducerArray::default();
        let cfg = EstimatorConfig::default();
        let sweep = synthetic_sweep(&[1, 2], 2); // 4 clusters
        let est = process_sweep(&sweep, &array, &cfg).unwrap();
        assert_eq!(est.quality, Quality::LowEchoAlert);
        assert_eq!(est.volume_ml, None);
        assert_eq!(est.point_count, 4);
        assert_eq!(est.rms_residual_mm, None);
    }

    #[test]
    fn process_sweep_masks_flagged_frames() {
        let array = TransducerArray::default();
        let cfg = EstimatorConfig::default();

        // All frames flagged: nothing usable at all.
        let mut sweep = synthetic_sweep(&[1, 2, 3, 4], 2);
        for f in &mut sweep.frames {
            f.flags = FLAG_CAPTURE_OVERFLOW;
        }
        assert!(matches!(
            process_sweep(&sweep, &array, &cfg),
            Err(Error::InsufficientPoints { got: 0 })
        ));

        // Two channels flagged out of four: drops to 4 clusters → alert.
        let mut sweep = synthetic_sweep(&[1, 2, 3, 4], 2);
        for f in &mut sweep.frames {
            if f.transducer_id > 2 {
                f.flags = FLAG_CAPTURE_OVERFLOW;
            }
        }
        let est = process_sweep(&sweep, &array, &cfg).unwrap();
        assert_eq!(est.quality, Quality::LowEchoAlert);
    }

    #[test]
    fn estimate_record_formatting() {
        let ok = VolumeEstimate {
            volume_ml: Some(250.04),
            point_count: 8,
            quality: Quality::Ok,
            rms_residual_mm: Some(0.1234),
        };
        assert_eq!(ok.record(12.0), "12.0 250.0 8 ok 0.123");
        let alert = VolumeEstimate {
            volume_ml: None,
            point_count: 4,
            quality: Quality::LowEchoAlert,
            rms_residual_mm: None,
        };
        assert_eq!(alert.record(1800.0), "1800.0 nan 4 low_echo_alert nan");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Cluster means always sit inside their member range and at most
            /// two clusters survive.
            #[test]
            fn clustering_structure(raw in proptest::collection::vec(0u32..200_000, 0..40)) {
                let mut ticks = raw;
                ticks.sort_unstable();
                ticks.dedup();
                let edges = EdgeTimestamps { ticks, tick_rate_mhz: 64.0 };
                let out = cluster_bursts(&edges, 1, 5.0);
                prop_assert!(out.clusters.len() <= 2);
                for c in &out.clusters {
                    prop_assert!(!c.member_ticks.is_empty());
                    let lo = *c.member_ticks.first().unwrap() as f64;
                    let hi = *c.member_ticks.last().unwrap() as f64;
                    prop_assert!(c.mean_tick >= lo && c.mean_tick <= hi);
                }
            }

            /// Exact sphere samples are recovered for random spheres.
            #[test]
            fn random_exact_spheres_recovered(
                cx in -50.0f64..50.0,
                cy in -50.0f64..50.0,
                cz in -50.0f64..50.0,
                r in 10.0f64..60.0,
            ) {
                let pts = sphere_samples(Vector3::new(cx, cy, cz), r);
                let fit = fit_sphere(&pts).unwrap();
                prop_assert!((fit.radius_mm - r).abs() / r < 1e-7);
                prop_assert!((fit.center_mm - Vector3::new(cx, cy, cz)).norm() < 1e-5);
            }
        }
    }
}

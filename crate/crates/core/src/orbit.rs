//! Long-run behaviour of the period map: orbit iteration, attractor typing
//! and rotation numbers on invariant closed curves.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::flow::check_state;
use crate::integrator::{FlowError, IntegratorConfig};
use crate::params::SeasonalParams;
use crate::poincare::{poincare_map, poincare_map_log};
use crate::State;

/// Orbits shorter than this are not typed.
pub const MIN_RECORD_LEN: usize = 1000;
/// Lower bound on the default transient.
pub const MIN_TRANSIENT: usize = 500;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OrbitError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("orbit has {len} points; at least {min} are needed")]
    TooShort { len: usize, min: usize },
    #[error("point cloud spans fewer than two dimensions")]
    DegenerateProjection,
}

/// `points[0]` is the origin state, `points[k] = P^k(origin)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitRecord {
    pub origin: State,
    pub points: Vec<State>,
    pub transient_cut: usize,
}

impl OrbitRecord {
    /// Number of map applications.
    pub fn iterations(&self) -> usize {
        self.points.len() - 1
    }

    pub fn post_transient(&self) -> &[State] {
        &self.points[self.transient_cut..]
    }

    pub fn with_transient_cut(mut self, cut: usize) -> Self {
        self.transient_cut = cut.min(self.points.len() - 1);
        self
    }

    /// CSV with header `k,x1,x2,x3`, starting at `k = 0`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,x1,x2,x3")?;
        for (k, x) in self.points.iter().enumerate() {
            writeln!(w, "{k},{},{},{}", x[0], x[1], x[2])?;
        }
        Ok(())
    }
}

/// Half the orbit, but at least `MIN_TRANSIENT` iterates when the orbit is
/// long enough to leave something after the cut.
pub fn default_transient(n: usize) -> usize {
    (n / 2).max(MIN_TRANSIENT).min(n.saturating_sub(1))
}

/// Iterates in log coordinates so a density passing below the smallest
/// positive `f64` is not rounded to an exact zero, which would pin the orbit
/// to a face for good. Stored points are the exponentiated states.
pub fn iterate_orbit(
    params: &SeasonalParams,
    x0: &State,
    n: usize,
    cfg: &IntegratorConfig,
) -> Result<OrbitRecord, FlowError> {
    check_state(x0)?;
    let mut points = Vec::with_capacity(n + 1);
    points.push(*x0);
    let mut u = x0.map(f64::ln);
    for _ in 0..n {
        u = poincare_map_log(params, &u, cfg)?;
        points.push(u.map(f64::exp));
    }
    Ok(OrbitRecord { origin: *x0, points, transient_cut: default_transient(n) })
}

/// Smallest `ln (P^k x0)_i` over all species and `k ∈ [from, to]`.
pub fn log_coordinate_floor(
    params: &SeasonalParams,
    x0: &State,
    from: usize,
    to: usize,
    cfg: &IntegratorConfig,
) -> Result<f64, FlowError> {
    check_state(x0)?;
    let mut u = x0.map(f64::ln);
    let mut floor = f64::INFINITY;
    for k in 1..=to {
        u = poincare_map_log(params, &u, cfg)?;
        if k >= from {
            floor = floor.min(u.min());
        }
    }
    Ok(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AttractorKind {
    FixedPoint,
    ClosedCurve,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttractorThresholds {
    pub fixed_point_step: f64,
    pub fixed_point_residual: f64,
    pub min_diameter: f64,
    pub min_gap: f64,
    pub max_closure_ratio: f64,
}

impl Default for AttractorThresholds {
    fn default() -> Self {
        Self {
            fixed_point_step: 1e-9,
            fixed_point_residual: 1e-8,
            min_diameter: 1e-3,
            min_gap: 1e-3,
            max_closure_ratio: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveDiagnostics {
    pub diameter: f64,
    /// `None` when no fixed points were supplied.
    pub min_gap_to_fixed_points: Option<f64>,
    pub rotation_number_estimate: Option<f64>,
    pub rotation_half_window_defect: Option<f64>,
    /// Hausdorff distance between the two halves of the post-transient cloud.
    pub closure_defect: f64,
}

impl CurveDiagnostics {
    pub fn closure_ratio(&self) -> f64 {
        self.closure_defect / self.diameter
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractorReport {
    pub kind: AttractorKind,
    pub fixed_point: Option<State>,
    pub curve_diagnostics: Option<CurveDiagnostics>,
    pub iterations_used: usize,
    pub transient_cut: usize,
    /// Smallest coordinate over the post-transient orbit.
    pub min_coordinate: f64,
}

pub fn attractor_detect(
    params: &SeasonalParams,
    record: &OrbitRecord,
    known_fixed_points: &[State],
    cfg: &IntegratorConfig,
) -> Result<AttractorReport, OrbitError> {
    attractor_detect_with(params, record, known_fixed_points, cfg, &AttractorThresholds::default())
}

pub fn attractor_detect_with(
    params: &SeasonalParams,
    record: &OrbitRecord,
    known_fixed_points: &[State],
    cfg: &IntegratorConfig,
    thresholds: &AttractorThresholds,
) -> Result<AttractorReport, OrbitError> {
    if record.points.len() < MIN_RECORD_LEN {
        return Err(OrbitError::TooShort { len: record.points.len(), min: MIN_RECORD_LEN });
    }
    let tail = record.post_transient();
    let min_coordinate = tail.iter().map(|x| x.min()).fold(f64::INFINITY, f64::min);
    let base = AttractorReport {
        kind: AttractorKind::Unresolved,
        fixed_point: None,
        curve_diagnostics: None,
        iterations_used: record.iterations(),
        transient_cut: record.transient_cut,
        min_coordinate,
    };

    let n = record.points.len();
    let last = record.points[n - 1];
    let step = (last - record.points[n - 2]).amax();
    if step < thresholds.fixed_point_step {
        let residual = (poincare_map(params, &last, cfg)? - last).amax();
        if residual < thresholds.fixed_point_residual {
            return Ok(AttractorReport { kind: AttractorKind::FixedPoint, fixed_point: Some(last), ..base });
        }
    }

    let diameter = diameter(tail);
    let min_gap = known_fixed_points
        .iter()
        .flat_map(|fp| tail.iter().map(move |x| (x - fp).norm()))
        .reduce(f64::min);
    let (first, second) = tail.split_at(tail.len() / 2);
    let closure_defect = hausdorff(first, second);
    let center = rotation_center(tail, known_fixed_points);
    let rotation = rotation_number_estimate(tail, &center).ok();
    let diag = CurveDiagnostics {
        diameter,
        min_gap_to_fixed_points: min_gap,
        rotation_number_estimate: rotation.map(|r| r.rho),
        rotation_half_window_defect: rotation.map(|r| r.half_window_defect),
        closure_defect,
    };
    let is_curve = diameter > thresholds.min_diameter
        && min_gap.is_none_or(|g| g > thresholds.min_gap)
        && closure_defect < thresholds.max_closure_ratio * diameter;
    let kind = if is_curve { AttractorKind::ClosedCurve } else { AttractorKind::Unresolved };
    Ok(AttractorReport { kind, curve_diagnostics: Some(diag), ..base })
}

fn diameter(points: &[State]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            d = d.max((p - q).norm_squared());
        }
    }
    d.sqrt()
}

fn directed_hausdorff(from: &[State], to: &[State]) -> f64 {
    from.iter()
        .map(|p| to.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
        .sqrt()
}

pub fn hausdorff(a: &[State], b: &[State]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn centroid(points: &[State]) -> State {
    points.iter().sum::<State>() / points.len() as f64
}

/// The interior fixed point nearest the centroid, else the centroid.
fn rotation_center(points: &[State], known: &[State]) -> State {
    let c = centroid(points);
    known
        .iter()
        .filter(|p| p.iter().all(|&v| v > 0.0))
        .min_by(|p, q| (*p - c).norm().total_cmp(&(*q - c).norm()))
        .copied()
        .unwrap_or(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationEstimate {
    /// Mean winding per iterate in turns, in `[0, 1)`.
    pub rho: f64,
    /// Circular distance between the estimates over the two halves.
    pub half_window_defect: f64,
}

/// Best-fit plane of the cloud: the two leading principal directions, with
/// the normal oriented so that its largest component is positive.
pub fn projection_frame(points: &[State]) -> Result<(Vector3<f64>, Vector3<f64>), OrbitError> {
    if points.len() < 3 {
        return Err(OrbitError::DegenerateProjection);
    }
    let c = centroid(points);
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - c;
        acc + d * d.transpose()
    }) / points.len() as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if l1.is_nan() || l1 <= 0.0 || l2 <= 1e-12 * l1 {
        return Err(OrbitError::DegenerateProjection);
    }
    let e1: Vector3<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let mut e2: Vector3<f64> = eig.eigenvectors.column(order[1]).into_owned();
    let normal = e1.cross(&e2);
    if normal[normal.iamax()] < 0.0 {
        e2 = -e2;
    }
    Ok((e1, e2))
}

fn wrapped_increments(points: &[State], center: &State, e1: &Vector3<f64>, e2: &Vector3<f64>) -> Vec<f64> {
    let angles: Vec<f64> = points
        .iter()
        .map(|p| {
            let d = p - center;
            d.dot(e2).atan2(d.dot(e1))
        })
        .collect();
    angles
        .windows(2)
        .map(|w| {
            let mut d = (w[1] - w[0]).rem_euclid(2.0 * PI);
            if d > PI {
                d -= 2.0 * PI;
            }
            d
        })
        .collect()
}

fn turns(increments: &[f64]) -> f64 {
    let mean = increments.iter().sum::<f64>() / increments.len() as f64;
    (mean / (2.0 * PI)).rem_euclid(1.0)
}

fn circular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Rotation number in a given in-plane frame `(e1, e2)`.
pub fn rotation_number_in_frame(
    points: &[State],
    center: &State,
    e1: &Vector3<f64>,
    e2: &Vector3<f64>,
) -> Result<RotationEstimate, OrbitError> {
    if points.len() < 5 {
        return Err(OrbitError::DegenerateProjection);
    }
    let inc = wrapped_increments(points, center, e1, e2);
    let rho = turns(&inc);
    let (a, b) = inc.split_at(inc.len() / 2);
    Ok(RotationEstimate { rho, half_window_defect: circular_gap(turns(a), turns(b)) })
}

/// Average winding of `points` around `center` after projecting onto their
/// best-fit plane.
pub fn rotation_number_estimate(points: &[State], center: &State) -> Result<RotationEstimate, OrbitError> {
    let (e1, e2) = projection_frame(points)?;
    rotation_number_in_frame(points, center, &e1, &e2)
}

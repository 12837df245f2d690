//! Permanence and impermanence decisions from boundary fixed-point data.
//!
//! The decision procedure, in order:
//!
//! 1. any species with `r_i ≤ 0` dies out on its axis: impermanent;
//! 2. collect the axial and planar fixed points; if one of them has a
//!    multiplier on the unit circle the verdict is indeterminate;
//! 3. a boundary fixed point with every multiplier inside the unit circle
//!    attracts an open set of interior orbits: impermanent;
//! 4. a heteroclinic cycle through the three axial points repels when
//!    `ϑ > 0` and attracts when `ϑ < 0`;
//! 5. otherwise look for weights `ν > 0` with `Σ ν_i ln F_i(θ)` of one sign
//!    at every boundary fixed point `θ` (an average Lyapunov function).

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Serialize, Serializer};

use crate::integrator::IntegratorConfig;
use crate::params::{DerivedQuantities, SeasonalParams};
use crate::poincare::{axial_fixed_point, planar_fixed_points, FixedPointRecord, PoincareError};
use crate::State;

/// Floor on the Lyapunov weights; they must be strictly positive.
pub const NU_MIN: f64 = 1e-9;

/// Multipliers with `|ln|λ|| ≤ HYPERBOLICITY_TOL` count as neutral.
pub const HYPERBOLICITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Poincare(#[from] PoincareError),
    #[error("no boundary fixed points to build an average Lyapunov function from")]
    DegenerateLp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleOrientation {
    /// `q1 → q2 → q3 → q1`.
    Forward,
    /// `q1 → q3 → q2 → q1`.
    Backward,
}

impl fmt::Display for CycleOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CycleOrientation::Forward => "1->2->3->1",
            CycleOrientation::Backward => "1->3->2->1",
        })
    }
}

impl Serialize for CycleOrientation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryPortrait {
    /// Axial fixed point of each species, absent when `r_i ≤ 0`.
    pub axial: [Option<FixedPointRecord>; 3],
    /// Planar fixed points, indexed by the missing species.
    pub planar: [Vec<FixedPointRecord>; 3],
    pub hyperbolic: bool,
    pub cycle: Option<CycleOrientation>,
    /// Existence pattern and signs of `ln λ_i` at every boundary fixed point,
    /// e.g. `q1(2+,3-) q2(1-,3+) q3(1+,2-)`.
    pub signature: String,
}

impl BoundaryPortrait {
    pub fn points(&self) -> impl Iterator<Item = &FixedPointRecord> {
        self.axial.iter().flatten().chain(self.planar.iter().flatten())
    }

    pub fn axial_record(&self, i: usize) -> Option<&FixedPointRecord> {
        self.axial[i].as_ref()
    }
}

fn is_neutral(rec: &FixedPointRecord) -> bool {
    let spectrum = rec.full_spectrum.iter().map(|z| z.norm());
    let transversal = rec.transversal_multipliers.iter().map(|m| m.value);
    spectrum.chain(transversal).any(|l| l.ln().abs() <= HYPERBOLICITY_TOL)
}

/// All multipliers strictly inside the unit circle.
fn is_attracting(rec: &FixedPointRecord) -> bool {
    rec.full_spectrum.iter().all(|z| z.norm().ln() < -HYPERBOLICITY_TOL)
        && rec.transversal_multipliers.iter().all(|m| m.value.ln() < -HYPERBOLICITY_TOL)
}

fn detect_cycle(axial: &[Option<FixedPointRecord>; 3], planar: &[Vec<FixedPointRecord>; 3]) -> Option<CycleOrientation> {
    if planar.iter().any(|p| !p.is_empty()) {
        return None;
    }
    let q: Vec<&FixedPointRecord> = axial.iter().flatten().collect();
    if q.len() != 3 {
        return None;
    }
    // Sign of w_ij, read off as ln λ_j(q_i).
    let up = |i: usize, j: usize| q[i].multiplier_for(j).map(|l| l > 1.0);
    let forward = [(0, 1), (1, 2), (2, 0)];
    let backward = [(0, 2), (2, 1), (1, 0)];
    let all = |edges: [(usize, usize); 3], value: bool| edges.iter().all(|&(i, j)| up(i, j) == Some(value));
    if all(forward, true) && all(backward, false) {
        Some(CycleOrientation::Forward)
    } else if all(backward, true) && all(forward, false) {
        Some(CycleOrientation::Backward)
    } else {
        None
    }
}

fn signature(axial: &[Option<FixedPointRecord>; 3], planar: &[Vec<FixedPointRecord>; 3]) -> String {
    let describe = |rec: &FixedPointRecord| {
        let signs: Vec<String> = rec
            .transversal_multipliers
            .iter()
            .map(|m| format!("{}{}", m.species + 1, if m.value > 1.0 { '+' } else { '-' }))
            .collect();
        format!("{}({})", rec.label, signs.join(","))
    };
    axial
        .iter()
        .flatten()
        .chain(planar.iter().flatten())
        .map(describe)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Axial and planar fixed points with hyperbolicity and cycle detection.
/// Requires `r_i > 0` for every species.
pub fn boundary_portrait(
    params: &SeasonalParams,
    cfg: &IntegratorConfig,
) -> Result<BoundaryPortrait, ClassifyError> {
    let axial = [
        axial_fixed_point(params, 0, cfg)?,
        axial_fixed_point(params, 1, cfg)?,
        axial_fixed_point(params, 2, cfg)?,
    ];
    let planar = [
        planar_fixed_points(params, 0, cfg)?,
        planar_fixed_points(params, 1, cfg)?,
        planar_fixed_points(params, 2, cfg)?,
    ];
    let hyperbolic = !axial.iter().flatten().chain(planar.iter().flatten()).any(is_neutral);
    let cycle = detect_cycle(&axial, &planar);
    let signature = signature(&axial, &planar);
    Ok(BoundaryPortrait { axial, planar, hyperbolic, cycle, signature })
}

/// `ϑ` rebuilt from the transversal multipliers of the axial fixed points,
/// using `w_ij = ln λ_j(q_i)`.
pub fn vartheta_from_multipliers(portrait: &BoundaryPortrait) -> Option<f64> {
    let w = |i: usize, j: usize| Some(portrait.axial_record(i)?.multiplier_for(j)?.ln());
    Some(w(0, 1)? * w(1, 2)? * w(2, 0)? + w(1, 0)? * w(0, 2)? * w(2, 1)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LpOptimum {
    /// `max_ν min_θ ν·m_θ` over the floored unit simplex.
    pub margin: f64,
    pub weights: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovTest {
    /// Positive margin certifies permanence.
    pub permanence: LpOptimum,
    /// Positive margin certifies impermanence (computed on `−m_θ`).
    pub impermanence: LpOptimum,
    /// The constraint vectors `m_θ = (ln F_i(θ))_i`, one per boundary point.
    pub constraints: Vec<(String, [f64; 3])>,
}

/// Maximizes `t` subject to `ν·m ≥ t` for every `m`, `ν_i ≥ NU_MIN`,
/// `Σ ν_i = 1`, by enumerating the vertices of the feasible region.
///
/// A vertex fixes two of: a bound `ν_i = NU_MIN`, or an equality
/// `ν·m_a = ν·m_b` between two active constraints. With at most a handful of
/// boundary points this is a few dozen 3×3 solves.
pub fn max_min_margin(vectors: &[Vector3<f64>]) -> Option<LpOptimum> {
    if vectors.is_empty() {
        return None;
    }
    let mut rows: Vec<(Vector3<f64>, f64)> = (0..3).map(|i| (Vector3::ith(i, 1.0), NU_MIN)).collect();
    for a in 0..vectors.len() {
        for b in (a + 1)..vectors.len() {
            let diff = vectors[a] - vectors[b];
            if diff.amax() > 0.0 {
                rows.push((diff, 0.0));
            }
        }
    }

    let value = |nu: &Vector3<f64>| vectors.iter().map(|m| m.dot(nu)).fold(f64::INFINITY, f64::min);
    let mut best: Option<LpOptimum> = None;
    for p in 0..rows.len() {
        for q in (p + 1)..rows.len() {
            let system = Matrix3::from_rows(&[
                rows[p].0.transpose(),
                rows[q].0.transpose(),
                Vector3::new(1.0, 1.0, 1.0).transpose(),
            ]);
            let Some(nu) = system.lu().solve(&Vector3::new(rows[p].1, rows[q].1, 1.0)) else {
                continue;
            };
            if !nu.iter().all(|v| v.is_finite() && *v >= NU_MIN * (1.0 - 1e-9) - 1e-15) {
                continue;
            }
            let nu = nu.map(|v| v.max(NU_MIN));
            let nu = nu / nu.sum();
            let margin = value(&nu);
            if best.is_none_or(|b| margin > b.margin) {
                best = Some(LpOptimum { margin, weights: [nu[0], nu[1], nu[2]] });
            }
        }
    }
    best
}

/// Builds `m_θ` for every boundary fixed point and solves the permanence and
/// impermanence programs.
pub fn average_lyapunov_test(portrait: &BoundaryPortrait) -> Result<LyapunovTest, ClassifyError> {
    let constraints: Vec<(String, [f64; 3])> = portrait
        .points()
        .map(|rec| {
            let m = rec.log_growth_factors();
            (rec.label.clone(), [m[0], m[1], m[2]])
        })
        .collect();
    let vectors: Vec<Vector3<f64>> = constraints.iter().map(|(_, m)| Vector3::from(*m)).collect();
    let negated: Vec<Vector3<f64>> = vectors.iter().map(|m| -m).collect();
    let permanence = max_min_margin(&vectors).ok_or(ClassifyError::DegenerateLp)?;
    let impermanence = max_min_margin(&negated).ok_or(ClassifyError::DegenerateLp)?;
    Ok(LyapunovTest { permanence, impermanence, constraints })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Permanent,
    Impermanent,
    Indeterminate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn one_based_list<S: Serializer>(v: &[usize], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|i| i + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Species with `r_i ≤ 0` (one-based in JSON).
    Extinction {
        #[serde(serialize_with = "one_based_list")]
        species: Vec<usize>,
    },
    HeteroclinicCycle { orientation: CycleOrientation, vartheta: f64 },
    AttractingBoundaryPoint { label: String, theta: State, multiplier_moduli: Vec<f64> },
    /// Weights `ν` with `min_θ Σ ν_i ln F_i(θ) = margin` (permanence) or
    /// `min_θ −Σ ν_i ln F_i(θ) = margin` (impermanence).
    AverageLyapunov { weights: [f64; 3], margin: f64 },
    NonHyperbolic { labels: Vec<String> },
    Inconclusive { permanence_margin: f64, impermanence_margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PermanenceVerdict {
    pub verdict: Verdict,
    pub witness: Witness,
    #[serde(serialize_with = "one_based_list")]
    pub extinct_species: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    #[serde(flatten)]
    pub verdict: PermanenceVerdict,
    pub portrait: Option<BoundaryPortrait>,
    pub lyapunov: Option<LyapunovTest>,
    pub derived: DerivedQuantities,
}

/// Species with `r_i ≤ 0`. Their axis orbits decay to zero.
pub fn extinction_check(derived: &DerivedQuantities) -> Vec<usize> {
    (0..3).filter(|&i| derived.r[i] <= 0.0).collect()
}

pub fn classify_permanence(
    params: &SeasonalParams,
    cfg: &IntegratorConfig,
) -> Result<Classification, ClassifyError> {
    let derived = params.derive();
    let extinct = extinction_check(&derived);
    let done = |verdict, witness, portrait, lyapunov| Classification {
        verdict: PermanenceVerdict { verdict, witness, extinct_species: extinct.clone() },
        portrait,
        lyapunov,
        derived: derived.clone(),
    };

    if !extinct.is_empty() {
        let witness = Witness::Extinction { species: extinct.clone() };
        return Ok(done(Verdict::Impermanent, witness, None, None));
    }

    let portrait = boundary_portrait(params, cfg)?;
    if !portrait.hyperbolic {
        let labels = portrait.points().filter(|r| is_neutral(r)).map(|r| r.label.clone()).collect();
        return Ok(done(Verdict::Indeterminate, Witness::NonHyperbolic { labels }, Some(portrait), None));
    }

    let attracting = portrait.points().find(|r| is_attracting(r)).cloned();
    if let Some(rec) = attracting {
        let mut moduli: Vec<f64> = rec.full_spectrum.iter().map(|z| z.norm()).collect();
        moduli.extend(rec.transversal_multipliers.iter().map(|m| m.value));
        let witness = Witness::AttractingBoundaryPoint {
            label: rec.label,
            theta: rec.theta,
            multiplier_moduli: moduli,
        };
        return Ok(done(Verdict::Impermanent, witness, Some(portrait), None));
    }

    if let Some(orientation) = portrait.cycle {
        let vartheta = derived.vartheta;
        let verdict = if vartheta > 0.0 {
            Verdict::Permanent
        } else if vartheta < 0.0 {
            Verdict::Impermanent
        } else {
            Verdict::Indeterminate
        };
        let witness = Witness::HeteroclinicCycle { orientation, vartheta };
        return Ok(done(verdict, witness, Some(portrait), None));
    }

    let test = average_lyapunov_test(&portrait)?;
    let (verdict, witness) = if test.permanence.margin > 0.0 {
        let w = Witness::AverageLyapunov { weights: test.permanence.weights, margin: test.permanence.margin };
        (Verdict::Permanent, w)
    } else if test.impermanence.margin > 0.0 {
        let w = Witness::AverageLyapunov { weights: test.impermanence.weights, margin: test.impermanence.margin };
        (Verdict::Impermanent, w)
    } else {
        let w = Witness::Inconclusive {
            permanence_margin: test.permanence.margin,
            impermanence_margin: test.impermanence.margin,
        };
        (Verdict::Indeterminate, w)
    };
    Ok(done(verdict, witness, Some(portrait), Some(test)))
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.derived;
        writeln!(f, "verdict: {}", self.verdict.verdict)?;
        writeln!(f, "r = ({:.6}, {:.6}, {:.6})", d.r[0], d.r[1], d.r[2])?;
        writeln!(f, "vartheta = {:.6}", d.vartheta)?;
        if let Some(p) = &self.portrait {
            writeln!(f, "boundary: {}", p.signature)?;
            if let Some(c) = p.cycle {
                writeln!(f, "heteroclinic cycle {c}")?;
            }
        }
        match &self.verdict.witness {
            Witness::Extinction { species } => {
                let s: Vec<String> = species.iter().map(|i| (i + 1).to_string()).collect();
                write!(f, "witness: r_i <= 0 for species {}", s.join(","))
            }
            Witness::HeteroclinicCycle { orientation, vartheta } => {
                write!(f, "witness: heteroclinic cycle {orientation} with vartheta = {vartheta:.6}")
            }
            Witness::AttractingBoundaryPoint { label, theta, .. } => {
                write!(f, "witness: {label} = ({:.6}, {:.6}, {:.6}) attracts", theta[0], theta[1], theta[2])
            }
            Witness::AverageLyapunov { weights, margin } => write!(
                f,
                "witness: nu = ({:.6}, {:.6}, {:.6}), margin {margin:.6}",
                weights[0], weights[1], weights[2]
            ),
            Witness::NonHyperbolic { labels } => {
                write!(f, "witness: non-hyperbolic boundary points {}", labels.join(", "))
            }
            Witness::Inconclusive { permanence_margin, impermanence_margin } => write!(
                f,
                "witness: no average Lyapunov function (margins {permanence_margin:.3e}, {impermanence_margin:.3e})"
            ),
        }
    }
}

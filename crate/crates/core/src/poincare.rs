//! The period map `P = Φ_{φω} ∘ L`, its Jacobian, moment vectors and fixed
//! points on the axes, the coordinate planes and the interior.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::flow::{check_state, good_season, good_season_log, linear_phase_map, GoodSeasonRequest, State};
use crate::integrator::{FlowError, IntegratorConfig};
use crate::params::SeasonalParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoincareError {
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("Newton iteration for the axial fixed point of species {} disagrees with the closed form", .species + 1)]
    NewtonDivergence { species: usize },
    #[error("species {} belongs to the support of the fixed point", .0 + 1)]
    SpeciesInSupport(usize),
    #[error("fixed-point search needs r_i > 0 for species {}", .0.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(","))]
    NonPositiveGrowth(Vec<usize>),
}

/// Set of species present at a point, `{k : θ_k > 0}`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Support(u8);

impl Support {
    pub fn of(x: &State) -> Support {
        Support((0..3).filter(|&i| x[i] > 0.0).fold(0, |m, i| m | (1 << i)))
    }

    pub fn from_species(species: &[usize]) -> Support {
        Support(species.iter().fold(0, |m, &i| m | (1 << i)))
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0 & (1 << i) != 0
    }

    pub fn species(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&i| self.contains(i))
    }

    pub fn absent(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(move |&i| !self.contains(i))
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    /// `q1`…`q3` on the axes, `v1`…`v3` on the planes (indexed by the missing
    /// species), `p` in the interior and `0` for the origin.
    pub fn label(&self) -> String {
        match self.len() {
            0 => "0".into(),
            1 => format!("q{}", self.species().next().unwrap() + 1),
            2 => format!("v{}", self.absent().next().unwrap() + 1),
            _ => "p".into(),
        }
    }
}

impl fmt::Debug for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.species().map(|i| i + 1)).finish()
    }
}

impl Serialize for Support {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.species().map(|i| i + 1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransversalMultiplier {
    /// Zero-based species index; serialized one-based.
    #[serde(serialize_with = "one_based")]
    pub species: usize,
    pub value: f64,
}

fn one_based<S: Serializer>(i: &usize, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(*i as u64 + 1)
}

fn complex_pairs<S: Serializer>(v: &[Complex<f64>], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|z| [z.re, z.im]))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointRecord {
    pub label: String,
    pub support: Support,
    pub theta: State,
    pub theta_hat: Vector3<f64>,
    pub transversal_multipliers: Vec<TransversalMultiplier>,
    /// Eigenvalues of `DP(θ)`, serialized as `[re, im]` pairs.
    #[serde(serialize_with = "complex_pairs")]
    pub full_spectrum: Vec<Complex<f64>>,
    /// `‖P(θ) − θ‖_∞`.
    pub residual: f64,
}

impl FixedPointRecord {
    pub fn multiplier_for(&self, species: usize) -> Option<f64> {
        self.transversal_multipliers.iter().find(|m| m.species == species).map(|m| m.value)
    }

    /// `ln F_i(θ)`: zero on the support, the log transversal multiplier off it.
    pub fn log_growth_factors(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| self.multiplier_for(i).map_or(0.0, f64::ln))
    }
}

/// Map value, moment vector and (optionally) Jacobian at one point.
#[derive(Debug, Clone)]
pub struct MapEvaluation {
    pub value: State,
    pub theta_hat: Vector3<f64>,
    pub jacobian: Option<Matrix3<f64>>,
}

pub fn evaluate(
    params: &SeasonalParams,
    x: &State,
    cfg: &IntegratorConfig,
    with_jacobian: bool,
) -> Result<MapEvaluation, FlowError> {
    check_state(x)?;
    let lx = linear_phase_map(params, x, params.bad_season());
    let req = GoodSeasonRequest { variational: with_jacobian, samples: None };
    let run = good_season(params, &lx, params.good_season(), cfg, req)?;
    let jacobian = run.w.map(|w| {
        let dl = Matrix3::from_diagonal(&Vector3::from(params.derive().c));
        w * dl
    });
    Ok(MapEvaluation { value: run.x, theta_hat: run.integral, jacobian })
}

pub fn poincare_map(
    params: &SeasonalParams,
    x: &State,
    cfg: &IntegratorConfig,
) -> Result<State, FlowError> {
    Ok(evaluate(params, x, cfg, false)?.value)
}

/// `DP(x) = W(φω, Lx) · DL`.
pub fn poincare_jacobian(
    params: &SeasonalParams,
    x: &State,
    cfg: &IntegratorConfig,
) -> Result<Matrix3<f64>, FlowError> {
    Ok(evaluate(params, x, cfg, true)?.jacobian.expect("jacobian requested"))
}

/// `θ̂ = ∫_0^{φω} Φ_t(Lθ) dt`.
pub fn theta_hat(
    params: &SeasonalParams,
    theta: &State,
    cfg: &IntegratorConfig,
) -> Result<Vector3<f64>, FlowError> {
    Ok(evaluate(params, theta, cfg, false)?.theta_hat)
}

/// Kolmogorov factors `F_i(x)`: `P_i(x)/x_i`, or `∂P_i/∂x_i` where `x_i = 0`.
pub fn kolmogorov_factors(
    params: &SeasonalParams,
    x: &State,
    cfg: &IntegratorConfig,
) -> Result<Vector3<f64>, FlowError> {
    let needs_jacobian = x.iter().any(|&v| v == 0.0);
    let eval = evaluate(params, x, cfg, needs_jacobian)?;
    Ok(Vector3::from_fn(|i, _| {
        if x[i] > 0.0 {
            eval.value[i] / x[i]
        } else {
            eval.jacobian.as_ref().unwrap()[(i, i)]
        }
    }))
}

/// `λ_i(θ) = exp{r_i − (Aθ̂)_i}` for a species absent from the fixed point.
pub fn transversal_multiplier(
    params: &SeasonalParams,
    rec: &FixedPointRecord,
    i: usize,
) -> Result<f64, PoincareError> {
    if rec.support.contains(i) {
        return Err(PoincareError::SpeciesInSupport(i));
    }
    Ok(multiplier_formula(params, &rec.theta_hat, i))
}

fn multiplier_formula(params: &SeasonalParams, theta_hat: &Vector3<f64>, i: usize) -> f64 {
    let r = params.derive().r[i];
    (r - params.a().row(i).dot(&theta_hat.transpose())).exp()
}

/// Closed-form positive fixed point of `P` on axis `i`, or `None` when
/// `r_i ≤ 0`. Solves `logistic(φω, c_i q) = q`.
pub fn axial_closed_form(params: &SeasonalParams, i: usize) -> Option<f64> {
    let d = params.derive();
    if d.r[i] <= 0.0 {
        return None;
    }
    let (b, a) = (params.b()[i], params.a()[(i, i)]);
    let growth = b * params.good_season();
    // c − e^{−bT} = e^{−bT}(e^{r} − 1) and 1 − e^{−bT} = −expm1(−bT).
    let numer = b * (-growth).exp() * d.r[i].exp_m1();
    let denom = a * d.c[i] * -(-growth).exp_m1();
    Some(numer / denom)
}

/// Newton iteration and acceptance thresholds for fixed-point searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    /// Convergence threshold on the log-coordinate step.
    pub step_tol: f64,
    /// Acceptance threshold on `‖P(θ) − θ‖_∞`.
    pub residual_tol: f64,
    pub max_iter: usize,
    /// Fixed points closer than this in the max norm are merged.
    pub dedup_radius: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings { step_tol: 1e-11, residual_tol: 1e-9, max_iter: 60, dedup_radius: 1e-6 }
    }
}

/// Newton's method for `ln P_S(x) − ln x_S = 0` on the face spanned by the
/// positive coordinates of `seed`. Works in log coordinates so iterates stay
/// inside the face. Returns `None` when the iteration fails to converge.
pub fn newton_on_face(
    params: &SeasonalParams,
    seed: &State,
    cfg: &IntegratorConfig,
    settings: &NewtonSettings,
) -> Result<Option<State>, FlowError> {
    check_state(seed)?;
    let face: Vec<usize> = (0..3).filter(|&i| seed[i] > 0.0).collect();
    let n = face.len();
    if n == 0 {
        return Ok(Some(State::zeros()));
    }
    let to_state = |u: &DVector<f64>| {
        let mut x = State::zeros();
        for (k, &i) in face.iter().enumerate() {
            x[i] = u[k].exp();
        }
        x
    };
    let residual = |x: &State, eval: &MapEvaluation| {
        DVector::from_iterator(n, face.iter().map(|&i| eval.value[i].ln() - x[i].ln()))
    };

    let mut u = DVector::from_iterator(n, face.iter().map(|&i| seed[i].ln()));
    let mut x = to_state(&u);
    let mut eval = evaluate(params, &x, cfg, true)?;
    let mut g = residual(&x, &eval);

    for _ in 0..settings.max_iter {
        if !g.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        let dp = eval.jacobian.as_ref().unwrap();
        let jac = DMatrix::from_fn(n, n, |r, c| {
            let (i, j) = (face[r], face[c]);
            dp[(i, j)] * x[j] / eval.value[i] - if r == c { 1.0 } else { 0.0 }
        });
        let Some(mut step) = jac.lu().solve(&(-&g)) else {
            return Ok(None);
        };
        let big = step.amax();
        if big > 1.0 {
            step /= big;
        }

        let g_norm = g.norm();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..16 {
            let u_try = &u + &step * lambda;
            if u_try.amax() > 60.0 {
                return Ok(None);
            }
            let x_try = to_state(&u_try);
            match evaluate(params, &x_try, cfg, true) {
                Ok(e) => {
                    let g_try = residual(&x_try, &e);
                    if g_try.norm() <= g_norm * (1.0 - 1e-4 * lambda) || g_try.norm() < 1e-13 {
                        accepted = Some((u_try, x_try, e, g_try));
                        break;
                    }
                }
                Err(FlowError::NonFinite { .. }) | Err(FlowError::StepSizeUnderflow { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        let Some((u_new, x_new, e_new, g_new)) = accepted else {
            // No decrease possible: either converged to rounding level or stuck.
            return Ok((g_norm < 1e-12).then_some(x));
        };
        let moved = (&step * lambda).amax();
        u = u_new;
        x = x_new;
        eval = e_new;
        g = g_new;
        if moved < settings.step_tol || g.amax() < 1e-14 {
            return Ok(Some(x));
        }
    }
    Ok(None)
}

/// Eigenvalues of `DP` at a point with the given support. Rows of absent
/// species vanish off the diagonal, so each such `DP_ii` is an eigenvalue
/// exactly and the rest of the spectrum comes from the block on the support.
/// Splitting keeps tiny transversal multipliers that a dense eigensolver
/// would round to zero.
pub fn block_spectrum(dp: &Matrix3<f64>, support: Support) -> Vec<Complex<f64>> {
    let present: Vec<usize> = support.species().collect();
    let mut out: Vec<Complex<f64>> = support.absent().map(|i| Complex::new(dp[(i, i)], 0.0)).collect();
    if !present.is_empty() {
        let block = DMatrix::from_fn(present.len(), present.len(), |r, c| dp[(present[r], present[c])]);
        out.extend(block.complex_eigenvalues().iter().copied());
    }
    out
}

/// The period map in log coordinates, `u ↦ ln P(e^u)`, with `−∞` marking an
/// absent species. Densities that would underflow `f64` stay representable.
pub fn poincare_map_log(
    params: &SeasonalParams,
    u: &Vector3<f64>,
    cfg: &IntegratorConfig,
) -> Result<Vector3<f64>, FlowError> {
    let lu = u - params.mu() * params.bad_season();
    let req = GoodSeasonRequest { variational: false, samples: None };
    Ok(good_season_log(params, &lu, params.good_season(), cfg, req)?.u)
}

/// Evaluates everything a fixed-point record carries at `theta`.
pub fn build_record(
    params: &SeasonalParams,
    theta: &State,
    cfg: &IntegratorConfig,
) -> Result<FixedPointRecord, FlowError> {
    let support = Support::of(theta);
    let eval = evaluate(params, theta, cfg, true)?;
    let plain = poincare_map(params, theta, cfg)?;
    let dp = eval.jacobian.unwrap();
    let mut full_spectrum = block_spectrum(&dp, support);
    full_spectrum.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(b.im.total_cmp(&a.im)));
    let transversal_multipliers = support
        .absent()
        .map(|i| TransversalMultiplier { species: i, value: multiplier_formula(params, &eval.theta_hat, i) })
        .collect();
    Ok(FixedPointRecord {
        label: support.label(),
        support,
        theta: *theta,
        theta_hat: eval.theta_hat,
        transversal_multipliers,
        full_spectrum,
        residual: (plain - theta).amax(),
    })
}

/// Positive fixed point on axis `i`. The closed form is cross-checked against
/// a one-dimensional Newton solve seeded at `b_i / a_ii`.
pub fn axial_fixed_point(
    params: &SeasonalParams,
    i: usize,
    cfg: &IntegratorConfig,
) -> Result<Option<FixedPointRecord>, PoincareError> {
    let Some(q) = axial_closed_form(params, i) else {
        return Ok(None);
    };
    let newton = axial_fixed_point_newton(params, i, cfg)?;
    match newton {
        Some(qn) if (qn - q).abs() <= 1e-7 * q => {}
        _ => return Err(PoincareError::NewtonDivergence { species: i }),
    }
    let mut theta = State::zeros();
    theta[i] = q;
    Ok(Some(build_record(params, &theta, cfg)?))
}

/// Newton solve of `P(q e_i) = q e_i` on the axis, seeded at `b_i / a_ii`.
pub fn axial_fixed_point_newton(
    params: &SeasonalParams,
    i: usize,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>, FlowError> {
    let mut seed = State::zeros();
    seed[i] = params.b()[i] / params.a()[(i, i)];
    Ok(newton_on_face(params, &seed, cfg, &NewtonSettings::default())?.map(|x| x[i]))
}

fn require_growth(params: &SeasonalParams, species: &[usize]) -> Result<(), PoincareError> {
    let r = params.derive().r;
    let bad: Vec<usize> = species.iter().copied().filter(|&i| r[i] <= 0.0).collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(PoincareError::NonPositiveGrowth(bad))
    }
}

/// Largest axial fixed-point coordinate, inflated by 5%: the edge of the
/// search box.
pub fn search_box(params: &SeasonalParams) -> f64 {
    let q_max = (0..3).filter_map(|i| axial_closed_form(params, i)).fold(0.0, f64::max);
    1.05 * q_max
}

// Grid fractions used for multistart seeds in each coordinate.
const GRID: [f64; 7] = [0.01, 0.04, 0.12, 0.3, 0.5, 0.7, 0.9];

fn newton_multistart(
    params: &SeasonalParams,
    seeds: Vec<State>,
    cfg: &IntegratorConfig,
    settings: &NewtonSettings,
) -> Result<Vec<FixedPointRecord>, PoincareError> {
    let found: Vec<Result<Option<State>, FlowError>> =
        seeds.par_iter().map(|s| newton_on_face(params, s, cfg, settings)).collect();
    let mut candidates = Vec::new();
    for f in found {
        match f {
            Ok(Some(x)) => candidates.push(x),
            Ok(None) => {}
            // Divergent seeds may run the integrator into trouble.
            Err(FlowError::NonFinite { .. }) | Err(FlowError::StepSizeUnderflow { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    candidates.sort_by(|a, b| {
        a.iter().zip(b.iter()).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });

    let mut records: Vec<FixedPointRecord> = Vec::new();
    for x in candidates {
        if records.iter().any(|r| (r.theta - x).amax() < settings.dedup_radius) {
            continue;
        }
        let face = Support::of(&x);
        let big = x.amax().max(1.0);
        if face.species().any(|i| x[i] < 1e-9 * big) {
            continue;
        }
        let rec = build_record(params, &x, cfg)?;
        if rec.residual < settings.residual_tol * big {
            records.push(rec);
        }
    }
    Ok(records)
}

/// Fixed points in the interior of the coordinate plane `x_k = 0`.
pub fn planar_fixed_points(
    params: &SeasonalParams,
    k: usize,
    cfg: &IntegratorConfig,
) -> Result<Vec<FixedPointRecord>, PoincareError> {
    planar_fixed_points_with(params, k, cfg, &NewtonSettings::default())
}

pub fn planar_fixed_points_with(
    params: &SeasonalParams,
    k: usize,
    cfg: &IntegratorConfig,
    settings: &NewtonSettings,
) -> Result<Vec<FixedPointRecord>, PoincareError> {
    let pair: Vec<usize> = (0..3).filter(|&i| i != k).collect();
    let (i, j) = (pair[0], pair[1]);
    require_growth(params, &pair)?;

    let box_edge = search_box(params);
    let mut seeds = Vec::new();
    let d = params.derive();
    if let (Some(bij), Some(bji)) = (d.beta[i][j], d.beta[j][i]) {
        if bij > 0.0 && bji > 0.0 {
            let mut s = State::zeros();
            s[i] = bij / params.good_season();
            s[j] = bji / params.good_season();
            seeds.push(s);
        }
    }
    for fi in GRID {
        for fj in GRID {
            let mut s = State::zeros();
            s[i] = fi * box_edge;
            s[j] = fj * box_edge;
            seeds.push(s);
        }
    }
    newton_multistart(params, seeds, cfg, settings)
}

/// Radical-inverse (Halton) point `index` in bases 2, 3, 5.
pub fn halton(index: u64) -> [f64; 3] {
    fn radical_inverse(mut n: u64, base: u64) -> f64 {
        let inv = 1.0 / base as f64;
        let mut f = inv;
        let mut out = 0.0;
        while n > 0 {
            out += f * (n % base) as f64;
            n /= base;
            f *= inv;
        }
        out
    }
    [radical_inverse(index, 2), radical_inverse(index, 3), radical_inverse(index, 5)]
}

/// Positive fixed points. Seeds: the point suggested by `A θ̂ = r` when that
/// solve is positive, plus `count` Halton points in the search box starting
/// at index `seed + 1`.
pub fn interior_fixed_points(
    params: &SeasonalParams,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<Vec<FixedPointRecord>, PoincareError> {
    interior_fixed_points_with(params, cfg, seed, 48, &NewtonSettings::default())
}

pub fn interior_fixed_points_with(
    params: &SeasonalParams,
    cfg: &IntegratorConfig,
    seed: u64,
    count: usize,
    settings: &NewtonSettings,
) -> Result<Vec<FixedPointRecord>, PoincareError> {
    require_growth(params, &[0, 1, 2])?;
    let box_edge = search_box(params);
    let mut seeds = Vec::with_capacity(count + 1);
    let r = Vector3::from(params.derive().r);
    if let Some(sol) = params.a().lu().solve(&r) {
        if sol.iter().all(|&v| v > 0.0) {
            seeds.push(sol / params.good_season());
        }
    }
    for idx in 0..count as u64 {
        let h = halton(seed + idx + 1);
        seeds.push(State::from_fn(|c, _| h[c].max(1e-3) * box_edge));
    }
    newton_multistart(params, seeds, cfg, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{presets, validate_params};
    use approx::assert_relative_eq;

    fn logistic(b: f64, a: f64, x0: f64, t: f64) -> f64 {
        b * x0 / (a * x0 + (b - a * x0) * (-b * t).exp())
    }

    #[test]
    fn origin_is_fixed_and_linearizes_to_growth_rates() {
        let p = presets::example(1).unwrap();
        let cfg = IntegratorConfig::default();
        assert_eq!(poincare_map(&p, &State::zeros(), &cfg).unwrap(), State::zeros());
        let dp = poincare_jacobian(&p, &State::zeros(), &cfg).unwrap();
        let r = p.derive().r;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert_relative_eq!(dp[(i, i)], r[i].exp(), max_relative = 1e-10);
                } else {
                    assert_eq!(dp[(i, j)], 0.0);
                }
            }
        }
        assert_eq!(theta_hat(&p, &State::zeros(), &cfg).unwrap(), Vector3::zeros());
    }

    #[test]
    fn axis_map_is_scaled_logistic() {
        let p = presets::example(1).unwrap();
        let cfg = IntegratorConfig::default();
        let c = p.derive().c;
        for &x0 in &[0.01, 0.5, 1.0, 3.0, 10.0] {
            let y = poincare_map(&p, &State::new(0.0, x0, 0.0), &cfg).unwrap();
            let exact = logistic(0.3, 0.2, c[1] * x0, p.good_season());
            assert!((y[1] - exact).abs() < 1e-10 * exact.max(1.0));
        }
    }

    #[test]
    fn axial_closed_form_limits() {
        let mut raw = presets::example_1();
        raw.phi = 1.0;
        raw.mu = [1e-9; 3];
        let p = validate_params(&raw).unwrap();
        for i in 0..3 {
            assert_relative_eq!(axial_closed_form(&p, i).unwrap(), raw.b[i] / raw.a[i][i], max_relative = 1e-12);
        }
        let mut raw = presets::example_1();
        raw.mu[0] = 10.0;
        let p = validate_params(&raw).unwrap();
        assert!(p.derive().r[0] < 0.0);
        assert_eq!(axial_closed_form(&p, 0), None);
        assert_eq!(axial_fixed_point(&p, 0, &IntegratorConfig::default()).unwrap(), None);
    }

    #[test]
    fn axial_closed_form_agrees_with_newton() {
        let cfg = IntegratorConfig::default();
        for k in 1..=3 {
            let p = presets::example(k).unwrap();
            for i in 0..3 {
                let q = axial_closed_form(&p, i).unwrap();
                let qn = axial_fixed_point_newton(&p, i, &cfg).unwrap().unwrap();
                assert!((q - qn).abs() < 1e-10 * q.max(1.0), "example {k} species {i}: {q} vs {qn}");
            }
        }
    }

    #[test]
    fn axial_fixed_point_is_fixed_and_has_known_moments() {
        let p = presets::example(2).unwrap();
        let cfg = IntegratorConfig::default();
        let d = p.derive();
        for i in 0..3 {
            let rec = axial_fixed_point(&p, i, &cfg).unwrap().unwrap();
            assert!(rec.residual < 1e-9, "residual {}", rec.residual);
            assert_relative_eq!(rec.theta_hat[i], d.axial_theta_hat[i], max_relative = 1e-8);
            assert_eq!(rec.label, format!("q{}", i + 1));
        }
    }

    #[test]
    fn example_1_transversal_multipliers_at_q1() {
        let p = presets::example(1).unwrap();
        let cfg = IntegratorConfig::default();
        let rec = axial_fixed_point(&p, 0, &cfg).unwrap().unwrap();
        assert_relative_eq!(rec.theta_hat[0], 7.125, max_relative = 1e-8);
        let l2 = transversal_multiplier(&p, &rec, 1).unwrap();
        let l3 = transversal_multiplier(&p, &rec, 2).unwrap();
        assert_relative_eq!(l2, 0.5375f64.exp(), max_relative = 1e-7);
        assert_relative_eq!(l3, (-4.425f64).exp(), max_relative = 1e-7);
        assert_relative_eq!(l2, 1.7117222, epsilon = 1e-6);
        assert_relative_eq!(l3, 0.0119742, epsilon = 1e-7);
        assert_eq!(transversal_multiplier(&p, &rec, 0), Err(PoincareError::SpeciesInSupport(0)));
    }

    #[test]
    fn jacobian_row_of_absent_species_is_diagonal() {
        let p = presets::example(2).unwrap();
        let dp = poincare_jacobian(&p, &State::new(0.4, 1.1, 0.0), &IntegratorConfig::default()).unwrap();
        assert_eq!(dp[(2, 0)], 0.0);
        assert_eq!(dp[(2, 1)], 0.0);
        assert!(dp[(2, 2)] > 0.0);
    }

    #[test]
    fn kolmogorov_factors_positive_on_grid() {
        let cfg = IntegratorConfig::with_tolerances(1e-8, 1e-10);
        for k in 1..=3 {
            let p = presets::example(k).unwrap();
            let top = 2.0 * (0..3).filter_map(|i| axial_closed_form(&p, i)).fold(0.0, f64::max);
            let ticks = [0.0, 0.3 * top, top];
            for &a in &ticks {
                for &b in &ticks {
                    for &c in &ticks {
                        let f = kolmogorov_factors(&p, &State::new(a, b, c), &cfg).unwrap();
                        assert!(f.iter().all(|v| *v > 0.0), "example {k} at ({a},{b},{c}): {f:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn planar_search_empty_when_moment_system_has_no_positive_solution() {
        let p = presets::example(1).unwrap();
        let d = p.derive();
        let cfg = IntegratorConfig::default();
        for k in 0..3 {
            let (i, j) = match k { 0 => (1, 2), 1 => (0, 2), _ => (0, 1) };
            assert!(d.beta[i][j].unwrap() <= 0.0 || d.beta[j][i].unwrap() <= 0.0);
            assert!(planar_fixed_points(&p, k, &cfg).unwrap().is_empty(), "plane {k}");
        }
    }

    #[test]
    fn planar_point_of_example_2_matches_beta() {
        let p = presets::example(2).unwrap();
        let d = p.derive();
        let cfg = IntegratorConfig::default();
        let found = planar_fixed_points(&p, 2, &cfg).unwrap();
        assert_eq!(found.len(), 1);
        let rec = &found[0];
        assert_eq!(rec.label, "v3");
        assert_relative_eq!(rec.theta_hat[0], d.beta[0][1].unwrap(), max_relative = 1e-7);
        assert_relative_eq!(rec.theta_hat[1], d.beta[1][0].unwrap(), max_relative = 1e-7);
        assert_eq!(rec.theta[2], 0.0);
    }

    #[test]
    fn symmetric_plane_point_is_symmetric() {
        let p = presets::weak_symmetric();
        let cfg = IntegratorConfig::default();
        let found = planar_fixed_points(&p, 2, &cfg).unwrap();
        assert_eq!(found.len(), 1);
        assert_relative_eq!(found[0].theta[0], found[0].theta[1], max_relative = 1e-9);
    }

    #[test]
    fn interior_points_verified_at_tighter_tolerance() {
        let cfg = IntegratorConfig::default();
        let tight = IntegratorConfig::with_tolerances(1e-12, 1e-14);
        for k in 1..=3 {
            let p = presets::example(k).unwrap();
            let found = interior_fixed_points(&p, &cfg, 0).unwrap();
            assert!(!found.is_empty(), "example {k}");
            for rec in &found {
                assert_eq!(rec.support.len(), 3);
                let again = poincare_map(&p, &rec.theta, &tight).unwrap();
                assert!((again - rec.theta).amax() < 1e-9, "example {k}: {}", (again - rec.theta).amax());
            }
        }
    }

    #[test]
    fn dominance_has_no_interior_fixed_point() {
        let p = presets::dominance();
        let found = interior_fixed_points(&p, &IntegratorConfig::default(), 0).unwrap();
        assert!(found.is_empty(), "{found:?}");
    }

    #[test]
    fn support_labels_and_serialization() {
        assert_eq!(Support::from_species(&[0]).label(), "q1");
        assert_eq!(Support::from_species(&[0, 1]).label(), "v3");
        assert_eq!(Support::from_species(&[0, 1, 2]).label(), "p");
        assert_eq!(Support::of(&State::zeros()).label(), "0");
        let json = serde_json::to_string(&Support::from_species(&[1, 2])).unwrap();
        assert_eq!(json, "[2,3]");
    }

    #[test]
    fn halton_points_are_in_unit_cube_and_distinct() {
        let pts: Vec<_> = (1..50).map(halton).collect();
        assert_eq!(halton(1), [0.5, 1.0 / 3.0, 0.2]);
        for (n, p) in pts.iter().enumerate() {
            assert!(p.iter().all(|v| *v > 0.0 && *v < 1.0));
            assert!(pts[..n].iter().all(|q| q != p));
        }
    }

    #[test]
    fn log_map_agrees_with_linear_map() {
        let p = presets::example(2).unwrap();
        let cfg = IntegratorConfig::default();
        for x in [State::new(0.3, 1.2, 0.7), State::new(0.0, 0.5, 2.0), State::new(1.0, 0.0, 0.0)] {
            let direct = poincare_map(&p, &x, &cfg).unwrap();
            let via_log = poincare_map_log(&p, &x.map(f64::ln), &cfg).unwrap().map(f64::exp);
            for i in 0..3 {
                if direct[i] == 0.0 {
                    assert_eq!(via_log[i], 0.0);
                } else {
                    assert_relative_eq!(via_log[i], direct[i], max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn log_map_keeps_densities_below_f64_range() {
        // e^{-800} underflows, but the log map still moves it by r_1 minus
        // the competition it meets.
        let p = presets::example(1).unwrap();
        let cfg = IntegratorConfig::default();
        let u = Vector3::new(-800.0, 0.4f64.ln(), 0.8f64.ln());
        let next = poincare_map_log(&p, &u, &cfg).unwrap();
        assert!(next[0].is_finite() && next[0] < -700.0);
        let tiny_only = poincare_map_log(&p, &Vector3::new(-800.0, f64::NEG_INFINITY, f64::NEG_INFINITY), &cfg).unwrap();
        assert_relative_eq!(tiny_only[0], -800.0 + p.derive().r[0], max_relative = 1e-12);
    }

    #[test]
    fn block_spectrum_keeps_tiny_transversal_multipliers() {
        let dp = Matrix3::new(1e-36, 0.0, 0.0, 0.0, 1.03, 0.0, -3e-4, -0.76, 0.1);
        let support = Support::from_species(&[1, 2]);
        let mut got: Vec<f64> = block_spectrum(&dp, support).iter().map(|z| z.re).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got[0], 1e-36);
        assert_relative_eq!(got[1], 0.1, max_relative = 1e-12);
        assert_relative_eq!(got[2], 1.03, max_relative = 1e-12);
    }

    #[test]
    fn example_3_tiny_multiplier_is_resolved() {
        let p = presets::example(3).unwrap();
        let cfg = IntegratorConfig::default();
        let q3 = axial_fixed_point(&p, 2, &cfg).unwrap().unwrap();
        let analytic = q3.multiplier_for(0).unwrap();
        assert!(analytic < 1e-30);
        let dp = poincare_jacobian(&p, &q3.theta, &cfg).unwrap();
        assert_relative_eq!(dp[(0, 0)], analytic, max_relative = 1e-6);
        assert!(q3.full_spectrum.iter().any(|z| ((z.re - analytic) / analytic).abs() < 1e-6));
    }
}

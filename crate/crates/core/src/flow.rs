//! Time evolution of the switched system.
//!
//! The decay phase is applied in closed form. The competition phase is
//! integrated in logarithmic coordinates `u_i = ln x_i` over the species that
//! are present at the start of the phase; absent species stay exactly zero.

use std::io::Write;

use nalgebra::{Matrix3, Vector3};

use crate::integrator::{integrate, DenseStep, FlowError, IntegratorConfig, Tolerances};
use crate::params::SeasonalParams;

/// Population densities of the three species.
pub type State = Vector3<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalState {
    pub x: State,
    /// Sensitivity `D_x Φ_t(x)` of the current state to the initial state.
    pub w: Matrix3<f64>,
}

pub(crate) fn check_state(x: &State) -> Result<(), FlowError> {
    if x.iter().all(|v| v.is_finite() && *v >= 0.0) {
        Ok(())
    } else {
        Err(FlowError::InvalidState([x[0], x[1], x[2]]))
    }
}

/// Exact solution of the decay phase, `x_i ↦ x_i e^{−μ_i d}`.
pub fn linear_phase_map(params: &SeasonalParams, x: &State, duration: f64) -> State {
    State::from_fn(|i, _| x[i] * (-params.mu()[i] * duration).exp())
}

/// Result of one competition phase.
#[derive(Debug, Clone)]
pub(crate) struct GoodSeason {
    pub x: State,
    /// `∫_0^t Φ_s(x) ds`.
    pub integral: Vector3<f64>,
    pub w: Option<Matrix3<f64>>,
}

pub(crate) struct GoodSeasonRequest<'a> {
    pub variational: bool,
    /// Sample times relative to the phase start, ascending, within `[0, t]`.
    pub samples: Option<(&'a [f64], &'a mut Vec<State>)>,
}

pub(crate) fn good_season(
    params: &SeasonalParams,
    x0: &State,
    t: f64,
    cfg: &IntegratorConfig,
    req: GoodSeasonRequest<'_>,
) -> Result<GoodSeason, FlowError> {
    check_state(x0)?;
    let run = good_season_log(params, &x0.map(f64::ln), t, cfg, req)?;
    let x = run.u.map(f64::exp);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::NonFinite { t });
    }
    Ok(GoodSeason { x, integral: run.integral, w: run.w })
}

/// Competition phase started from `u0 = ln x0`; `−∞` marks an absent
/// species. The end state is returned in the same coordinates, so densities
/// far below the smallest positive `f64` survive the phase.
pub(crate) struct GoodSeasonLog {
    pub u: Vector3<f64>,
    pub integral: Vector3<f64>,
    pub w: Option<Matrix3<f64>>,
}

pub(crate) fn good_season_log(
    params: &SeasonalParams,
    u0: &Vector3<f64>,
    t: f64,
    cfg: &IntegratorConfig,
    req: GoodSeasonRequest<'_>,
) -> Result<GoodSeasonLog, FlowError> {
    if u0.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(FlowError::InvalidState([u0[0].exp(), u0[1].exp(), u0[2].exp()]));
    }
    if t < 0.0 || t.is_nan() {
        return Err(FlowError::NegativeTime(t));
    }
    let x0 = u0.map(f64::exp);
    let active: Vec<usize> = (0..3).filter(|&i| u0[i].is_finite()).collect();
    let na = active.len();
    let variational = req.variational;
    let dim = na + 3 + if variational { 9 } else { 0 };

    let mut y = vec![0.0; dim];
    for (slot, &i) in active.iter().enumerate() {
        y[slot] = u0[i];
    }
    if variational {
        for d in 0..3 {
            y[na + 3 + 4 * d] = 1.0;
        }
    }

    // Log coordinates carry relative error; integrals are absolute
    // quantities; sensitivity entries span many decades.
    let mut abs = vec![cfg.rel_tol; na];
    let mut rel = vec![0.0; na];
    abs.extend([cfg.abs_tol; 3]);
    rel.extend([cfg.rel_tol; 3]);
    if variational {
        let mut abs_w = [cfg.abs_tol * 1e-6; 9];
        // For a species absent at the start, W_ii = exp(∫ g_i) stays positive
        // and may be astronomically small; control it in relative terms only.
        for i in (0..3).filter(|i| !active.contains(i)) {
            abs_w[4 * i] = f64::MIN_POSITIVE;
        }
        abs.extend(abs_w);
        rel.extend([cfg.rel_tol; 9]);
    }
    let tol = Tolerances { abs, rel };

    let b = *params.b();
    let a = *params.a();
    let unpack = |y: &[f64]| -> State {
        let mut x = State::zeros();
        for (slot, &i) in active.iter().enumerate() {
            x[i] = y[slot].exp();
        }
        x
    };
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
        let x = unpack(y);
        let g = b - a * x;
        for (slot, &i) in active.iter().enumerate() {
            dy[slot] = g[i];
        }
        dy[na..na + 3].copy_from_slice(x.as_slice());
        if variational {
            // Df(x) = diag(g) − diag(x)·A, stored column-major like W.
            let w = Matrix3::from_column_slice(&y[na + 3..na + 12]);
            let df = Matrix3::from_diagonal(&g) - Matrix3::from_diagonal(&x) * a;
            let dw = df * w;
            dy[na + 3..na + 12].copy_from_slice(dw.as_slice());
        }
    };

    match req.samples {
        Some((times, out)) => {
            let mut next = 0;
            while next < times.len() && times[next] <= 0.0 {
                out.push(x0);
                next += 1;
            }
            let mut buf = vec![0.0; dim];
            let mut obs = |step: &DenseStep| {
                let end = step.t1();
                while next < times.len() && times[next] <= end * (1.0 + 1e-14) {
                    step.eval(times[next].min(end), &mut buf);
                    out.push(unpack(&buf));
                    next += 1;
                }
            };
            integrate(rhs, t, &mut y, &tol, cfg, Some(&mut obs))?;
            // Anything left sits at the endpoint (t == 0 or rounding).
            while next < times.len() {
                out.push(unpack(&y));
                next += 1;
            }
        }
        None => {
            integrate(rhs, t, &mut y, &tol, cfg, None)?;
        }
    }

    let mut u = Vector3::repeat(f64::NEG_INFINITY);
    for (slot, &i) in active.iter().enumerate() {
        u[i] = y[slot];
    }
    if u.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(FlowError::NonFinite { t });
    }
    let integral = Vector3::new(y[na], y[na + 1], y[na + 2]);
    let w = variational.then(|| Matrix3::from_column_slice(&y[na + 3..na + 12]));
    Ok(GoodSeasonLog { u, integral, w })
}

/// `Φ_t(x)`: the competition flow alone.
pub fn lv_flow(
    params: &SeasonalParams,
    x: &State,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<State, FlowError> {
    let req = GoodSeasonRequest { variational: false, samples: None };
    Ok(good_season(params, x, t, cfg, req)?.x)
}

/// Competition flow together with its sensitivity matrix.
pub fn variational_flow(
    params: &SeasonalParams,
    x: &State,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<VariationalState, FlowError> {
    let req = GoodSeasonRequest { variational: true, samples: None };
    let out = good_season(params, x, t, cfg, req)?;
    Ok(VariationalState { x: out.x, w: out.w.expect("variational run") })
}

/// Splits `t` into whole periods and a remainder, absorbing rounding so that
/// exact multiples of the period produce no remainder.
fn split_periods(params: &SeasonalParams, t: f64) -> (u64, f64) {
    let omega = params.omega();
    let mut periods = (t / omega).floor();
    let mut rem = t - periods * omega;
    if rem >= omega * (1.0 - 1e-12) {
        periods += 1.0;
        rem = 0.0;
    }
    if rem <= omega * 1e-12 {
        rem = 0.0;
    }
    (periods as u64, rem.max(0.0))
}

/// `Ψ(t, x)`: decay phase first, then competition, repeated with period ω.
/// Integration is restarted at every switch.
pub fn seasonal_flow(
    params: &SeasonalParams,
    x: &State,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<State, FlowError> {
    check_state(x)?;
    if t < 0.0 || t.is_nan() {
        return Err(FlowError::NegativeTime(t));
    }
    let (periods, rem) = split_periods(params, t);
    let mut state = *x;
    for _ in 0..periods {
        state = crate::poincare::poincare_map(params, &state, cfg)?;
    }
    let bad = params.bad_season();
    if rem > 0.0 {
        state = linear_phase_map(params, &state, rem.min(bad));
        if rem > bad {
            state = lv_flow(params, &state, rem - bad, cfg)?;
        }
    }
    Ok(state)
}

/// Samples `Ψ(t, x0)` at `t = 0, dt, 2dt, …` up to `t_end`.
pub fn seasonal_time_series(
    params: &SeasonalParams,
    x0: &State,
    t_end: f64,
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, State)>, FlowError> {
    check_state(x0)?;
    if t_end < 0.0 || t_end.is_nan() {
        return Err(FlowError::NegativeTime(t_end));
    }
    if dt.is_nan() || dt <= 0.0 || !dt.is_finite() {
        return Err(FlowError::NegativeTime(dt));
    }
    let count = (t_end / dt * (1.0 + 1e-12)).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|j| (j as f64 * dt).min(t_end)).collect();

    let mut out: Vec<(f64, State)> = Vec::with_capacity(times.len());
    let mut next = 0;
    let mut state = *x0;
    let mut start = 0.0;
    let (bad, good) = (params.bad_season(), params.good_season());
    let mut period = 0u64;
    while next < times.len() {
        // Decay phase of this period.
        let bad_end = start + bad;
        while next < times.len() && times[next] <= bad_end {
            out.push((times[next], linear_phase_map(params, &state, times[next] - start)));
            next += 1;
        }
        if next == times.len() {
            break;
        }
        state = linear_phase_map(params, &state, bad);

        // Competition phase.
        period += 1;
        let good_end = params.omega() * period as f64;
        let first = next;
        while next < times.len() && times[next] <= good_end {
            next += 1;
        }
        let rel_times: Vec<f64> =
            times[first..next].iter().map(|&t| (t - bad_end).clamp(0.0, good)).collect();
        let mut samples = Vec::with_capacity(rel_times.len());
        let req = GoodSeasonRequest {
            variational: false,
            samples: Some((&rel_times, &mut samples)),
        };
        let horizon = if next == times.len() { rel_times.last().copied().unwrap_or(0.0) } else { good };
        let run = good_season(params, &state, horizon, cfg, req)?;
        out.extend(times[first..next].iter().copied().zip(samples));
        state = run.x;
        start = good_end;
    }
    Ok(out)
}

/// Writes samples as CSV with header `t,x1,x2,x3`.
pub fn write_time_series_csv<W: Write>(mut w: W, rows: &[(f64, State)]) -> std::io::Result<()> {
    writeln!(w, "t,x1,x2,x3")?;
    for (t, x) in rows {
        writeln!(w, "{t},{},{},{}", x[0], x[1], x[2])?;
    }
    Ok(())
}

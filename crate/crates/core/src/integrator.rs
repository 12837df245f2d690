//! Adaptive Dormand–Prince 5(4) integrator with continuous extension.

use serde::{Deserialize, Serialize};

/// Missing fields take their default values when deserialized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Record every accepted step so callers can sample the trajectory.
    pub dense_output: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
            dense_output: false,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rel_tol: f64, abs_tol: f64) -> Self {
        IntegratorConfig { rel_tol, abs_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = self.rel_tol > 0.0
            && self.abs_tol > 0.0
            && self.rel_tol.is_finite()
            && self.abs_tol.is_finite()
            && self.max_step > 0.0
            && self.max_steps > 0;
        if ok {
            Ok(())
        } else {
            Err(FlowError::BadConfig(*self))
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("solution left the finite range at t = {t}")]
    NonFinite { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("state must be finite and nonnegative, got {0:?}")]
    InvalidState([f64; 3]),
    #[error("negative duration {0}")]
    NegativeTime(f64),
    #[error("integrator tolerances must be positive: {0:?}")]
    BadConfig(IntegratorConfig),
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Fifth minus fourth order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Per-component error weights: the local error of component `i` is scaled
/// by `abs[i] + rel[i]·max(|y_old|, |y_new|)`.
#[derive(Debug, Clone)]
pub struct Tolerances {
    pub abs: Vec<f64>,
    pub rel: Vec<f64>,
}

impl Tolerances {
    pub fn uniform(n: usize, cfg: &IntegratorConfig) -> Self {
        Tolerances { abs: vec![cfg.abs_tol; n], rel: vec![cfg.rel_tol; n] }
    }
}

/// One accepted step, with the coefficients of its quartic interpolant.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    coeffs: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Evaluates the interpolant at `t ∈ [t0, t0 + h]` into `out`.
    pub fn eval(&self, t: f64, out: &mut [f64]) {
        let s = if self.h > 0.0 { (t - self.t0) / self.h } else { 0.0 };
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        for i in 0..out.len() {
            out[i] = r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i])));
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Integrates `y' = f(t, y)` from `t = 0` to `t_end`, overwriting `y`.
///
/// Every accepted step is passed to `observer` when one is given.
pub fn integrate<F>(
    mut rhs: F,
    t_end: f64,
    y: &mut [f64],
    tol: &Tolerances,
    cfg: &IntegratorConfig,
    mut observer: Option<&mut dyn FnMut(&DenseStep)>,
) -> Result<StepStats, FlowError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let mut stats = StepStats::default();
    if t_end < 0.0 || t_end.is_nan() {
        return Err(FlowError::NegativeTime(t_end));
    }
    let n = y.len();
    if t_end == 0.0 || n == 0 {
        return Ok(stats);
    }

    let mut k = [(); 7].map(|_| vec![0.0; n]);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(0.0, y, &mut k[0]);
    stats.evaluations += 1;
    let mut h = initial_step(&mut rhs, y, &k[0], t_end, tol, cfg, &mut stage, &mut y_new);
    stats.evaluations += 1;

    let mut t = 0.0;
    let mut err_prev: f64 = 1e-4;
    let mut last_rejected = false;
    let h_min_factor = 16.0 * f64::EPSILON;

    while t < t_end {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(FlowError::TooManySteps { t });
        }
        h = h.min(cfg.max_step);
        let remaining = t_end - t;
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        if h <= h_min_factor * t.abs().max(t_end) {
            return Err(FlowError::StepSizeUnderflow { t });
        }

        let (k_head, k_tail) = k.split_at_mut(1);
        let k1 = &k_head[0];
        let [k2, k3, k4, k5, k6, k7] = k_tail else { unreachable!() };

        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        rhs(t + C2 * h, &stage, k2);
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * h, &stage, k3);
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * h, &stage, k4);
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * h, &stage, k5);
        for i in 0..n {
            stage[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_next = if last { t_end } else { t + h };
        rhs(t_next, &stage, k6);
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        rhs(t_next, &y_new, k7);
        stats.evaluations += 6;

        let mut err = 0.0;
        let mut finite = true;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.abs[i] + tol.rel[i] * y[i].abs().max(y_new[i].abs());
            err += (e / sc).powi(2);
            finite &= y_new[i].is_finite() && k7[i].is_finite();
        }
        let err = (err / n as f64).sqrt();

        if !finite || err.is_nan() {
            // Retry with a much smaller step before declaring blow-up.
            stats.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            if h <= h_min_factor * t.abs().max(t_end) {
                return Err(FlowError::NonFinite { t });
            }
            continue;
        }

        if err <= 1.0 {
            if let Some(obs) = observer.as_deref_mut() {
                let mut coeffs = [(); 5].map(|_| vec![0.0; n]);
                for i in 0..n {
                    let dy = y_new[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    coeffs[0][i] = y[i];
                    coeffs[1][i] = dy;
                    coeffs[2][i] = bspl;
                    coeffs[3][i] = dy - h * k7[i] - bspl;
                    coeffs[4][i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                obs(&DenseStep { t0: t, h, coeffs });
            }
            stats.accepted += 1;
            t = t_next;
            y.copy_from_slice(&y_new);
            k.swap(0, 6);

            // PI controller (Hairer's dopri5 constants).
            let err = err.max(1e-10);
            let mut factor = 0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0);
            factor = factor.clamp(0.2, 10.0);
            if last_rejected {
                factor = factor.min(1.0);
            }
            h *= factor;
            err_prev = err;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let factor = (0.9 * err.powf(-0.2)).max(0.2);
            h *= factor;
            last_rejected = true;
        }
    }
    Ok(stats)
}

#[allow(clippy::too_many_arguments)]
fn initial_step<F>(
    rhs: &mut F,
    y: &[f64],
    f0: &[f64],
    t_end: f64,
    tol: &Tolerances,
    cfg: &IntegratorConfig,
    y1: &mut [f64],
    f1: &mut [f64],
) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len() as f64;
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..y.len() {
        let sc = tol.abs[i] + tol.rel[i] * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (f0[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(t_end).min(cfg.max_step);

    for i in 0..y.len() {
        y1[i] = y[i] + h0 * f0[i];
    }
    rhs(h0, y1, f1);
    let mut d2 = 0.0;
    for i in 0..y.len() {
        let sc = tol.abs[i] + tol.rel[i] * y[i].abs();
        d2 += ((f1[i] - f0[i]) / sc).powi(2);
    }
    let d2 = (d2 / n).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    let h = (100.0 * h0).min(h1).min(t_end).min(cfg.max_step);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6_f64.min(t_end)
    }
}

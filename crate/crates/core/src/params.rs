//! Model constants, validation and closed-form derived quantities.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Number of competing species. Fixed.
pub const SPECIES: usize = 3;

/// Unvalidated parameter record, exactly as it appears in a JSON document:
///
/// ```json
/// { "omega": 10, "phi": 0.65, "mu": [..3], "b": [..3], "a": [[..3], [..3], [..3]] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub omega: f64,
    pub phi: f64,
    pub mu: [f64; 3],
    pub b: [f64; 3],
    pub a: [[f64; 3]; 3],
}

/// One violated constraint found by [`validate_params`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonPositiveParameter(String),
    PhiOutOfRange(f64),
    NonFiniteValue(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveParameter(name) => write!(f, "{name} must be strictly positive"),
            Violation::PhiOutOfRange(phi) => write!(f, "phi = {phi} is outside (0, 1]"),
            Violation::NonFiniteValue(name) => write!(f, "{name} is not a finite number"),
        }
    }
}

/// Rejection of a parameter record. Lists every violated constraint, not
/// only the first one.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid parameters: {}", .violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
pub struct ParamError {
    pub violations: Vec<Violation>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot parse parameter document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ParamError),
}

/// Validated constants of the seasonal model.
///
/// Species are indexed `0..3` throughout the crate; user-facing labels
/// (`q1`, `a12`, ...) are one-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalParams {
    omega: f64,
    phi: f64,
    mu: Vector3<f64>,
    b: Vector3<f64>,
    a: Matrix3<f64>,
}

/// Checks every positivity and finiteness constraint of a raw record.
pub fn validate_params(raw: &RawParams) -> Result<SeasonalParams, ParamError> {
    let mut violations = Vec::new();
    let mut positive = |name: String, value: f64| {
        if !value.is_finite() {
            violations.push(Violation::NonFiniteValue(name));
        } else if value <= 0.0 {
            violations.push(Violation::NonPositiveParameter(name));
        }
    };

    positive("omega".into(), raw.omega);
    for i in 0..SPECIES {
        positive(format!("mu{}", i + 1), raw.mu[i]);
    }
    for i in 0..SPECIES {
        positive(format!("b{}", i + 1), raw.b[i]);
    }
    for i in 0..SPECIES {
        for j in 0..SPECIES {
            positive(format!("a{}{}", i + 1, j + 1), raw.a[i][j]);
        }
    }
    if !raw.phi.is_finite() {
        violations.push(Violation::NonFiniteValue("phi".into()));
    } else if raw.phi <= 0.0 || raw.phi > 1.0 {
        violations.push(Violation::PhiOutOfRange(raw.phi));
    }

    if !violations.is_empty() {
        return Err(ParamError { violations });
    }
    Ok(SeasonalParams {
        omega: raw.omega,
        phi: raw.phi,
        mu: Vector3::from(raw.mu),
        b: Vector3::from(raw.b),
        a: Matrix3::from_fn(|i, j| raw.a[i][j]),
    })
}

impl SeasonalParams {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let raw: RawParams = serde_json::from_str(text)?;
        Ok(validate_params(&raw)?)
    }

    pub fn to_raw(&self) -> RawParams {
        RawParams {
            omega: self.omega,
            phi: self.phi,
            mu: self.mu.into(),
            b: self.b.into(),
            a: std::array::from_fn(|i| std::array::from_fn(|j| self.a[(i, j)])),
        }
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn mu(&self) -> &Vector3<f64> {
        &self.mu
    }

    pub fn b(&self) -> &Vector3<f64> {
        &self.b
    }

    pub fn a(&self) -> &Matrix3<f64> {
        &self.a
    }

    /// Length of the competition phase, `φω`.
    pub fn good_season(&self) -> f64 {
        self.phi * self.omega
    }

    /// Length of the decay phase, `(1-φ)ω`.
    pub fn bad_season(&self) -> f64 {
        (1.0 - self.phi) * self.omega
    }

    /// Relabels species: new species `k` is old species `perm[k]`.
    pub fn permuted(&self, perm: [usize; 3]) -> SeasonalParams {
        SeasonalParams {
            omega: self.omega,
            phi: self.phi,
            mu: Vector3::from_fn(|k, _| self.mu[perm[k]]),
            b: Vector3::from_fn(|k, _| self.b[perm[k]]),
            a: Matrix3::from_fn(|k, l| self.a[(perm[k], perm[l])]),
        }
    }

    pub fn derive(&self) -> DerivedQuantities {
        derive(self)
    }
}

/// Closed-form quantities used by the classifier. Off-diagonal tables
/// (`gamma`, `w`, `beta`) are indexed `[i][j]` with `i != j`; their diagonal
/// entries carry no meaning (`0` for `gamma`/`w`, `None` for `beta`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedQuantities {
    /// Net per-period log growth at low density, `b_i φω − μ_i (1−φ)ω`.
    pub r: [f64; 3],
    /// Bad-season survival factors `exp(−μ_i (1−φ)ω)`.
    pub c: [f64; 3],
    pub gamma: [[f64; 3]; 3],
    pub w: [[f64; 3]; 3],
    /// Solution of the planar moment system; `None` where the 2×2 minor
    /// `a_ii a_jj − a_ij a_ji` vanishes.
    pub beta: [[Option<f64>; 3]; 3],
    pub vartheta: f64,
    /// `r_i / a_ii`: moment vector at the axial fixed points.
    pub axial_theta_hat: [f64; 3],
}

pub fn derive(params: &SeasonalParams) -> DerivedQuantities {
    let (a, good, bad) = (&params.a, params.good_season(), params.bad_season());
    let r: [f64; 3] = std::array::from_fn(|i| params.b[i] * good - params.mu[i] * bad);
    let c: [f64; 3] = std::array::from_fn(|i| (-params.mu[i] * bad).exp());

    let mut gamma = [[0.0; 3]; 3];
    let mut w = [[0.0; 3]; 3];
    let mut beta = [[None; 3]; 3];
    for i in 0..SPECIES {
        for j in 0..SPECIES {
            if i == j {
                continue;
            }
            gamma[i][j] = a[(i, i)] * r[j] - a[(j, i)] * r[i];
            w[i][j] = r[j] - a[(j, i)] * r[i] / a[(i, i)];
            let minor = a[(i, i)] * a[(j, j)] - a[(i, j)] * a[(j, i)];
            if minor != 0.0 {
                beta[i][j] = Some((a[(j, j)] * r[i] - a[(i, j)] * r[j]) / minor);
            }
        }
    }
    let vartheta = w[0][1] * w[1][2] * w[2][0] + w[1][0] * w[0][2] * w[2][1];
    let axial_theta_hat = std::array::from_fn(|i| r[i] / a[(i, i)]);

    DerivedQuantities { r, c, gamma, w, beta, vartheta, axial_theta_hat }
}

/// Built-in parameter sets.
pub mod presets {
    use super::{validate_params, RawParams, SeasonalParams};

    /// The boundary is a repelling heteroclinic cycle `q1 → q2 → q3 → q1`.
    pub fn example_1() -> RawParams {
        RawParams {
            omega: 10.0,
            phi: 0.65,
            mu: [0.15, 0.2, 0.1],
            b: [0.3, 0.3, 0.25],
            a: [[0.2, 0.35, 0.2], [0.1, 0.2, 0.3], [0.8, 0.1, 0.3]],
        }
    }

    /// Three axial fixed points and one planar fixed point, in `x3 = 0`.
    pub fn example_2() -> RawParams {
        RawParams {
            omega: 10.0,
            phi: 0.5,
            mu: [0.1, 0.11, 0.15],
            b: [0.345, 0.505, 0.666],
            a: [[0.73, 0.215, 0.052], [1.092, 0.892, 0.003], [0.185, 2.923, 0.009]],
        }
    }

    /// Three axial fixed points and planar fixed points in `x1 = 0` and `x3 = 0`.
    pub fn example_3() -> RawParams {
        RawParams {
            omega: 1.0,
            phi: 0.97,
            mu: [0.23, 0.27, 0.18],
            b: [108.0, 1.2, 2.3174],
            a: [[6.99, 1.0, 100.2], [0.074, 0.521, 0.602], [0.1174, 1.0, 1.2]],
        }
    }

    /// Reference initial values for the three examples.
    pub fn example_initial_value(k: usize) -> Option<[f64; 3]> {
        match k {
            1 => Some([0.3, 0.4, 0.8]),
            2 => Some([2.0, 5.0, 2.0]),
            3 => Some([1.8, 2.3, 1.5]),
            _ => None,
        }
    }

    pub fn example(k: usize) -> Option<SeasonalParams> {
        let raw = match k {
            1 => example_1(),
            2 => example_2(),
            3 => example_3(),
            _ => return None,
        };
        Some(validate_params(&raw).expect("built-in example is valid"))
    }

    /// Species 1 strongly dominant: the first axial fixed point attracts.
    pub fn dominance() -> SeasonalParams {
        validate_params(&RawParams {
            omega: 10.0,
            phi: 0.65,
            mu: [0.1, 0.1, 0.1],
            b: [0.5, 0.2, 0.2],
            a: [[0.1, 0.1, 0.1], [1.0, 1.0, 0.1], [1.0, 0.1, 1.0]],
        })
        .expect("dominance preset is valid")
    }

    /// Identical species with weak competition (`a_ij = 0.1 a_ii`).
    pub fn weak_symmetric() -> SeasonalParams {
        validate_params(&RawParams {
            omega: 10.0,
            phi: 0.65,
            mu: [0.1, 0.1, 0.1],
            b: [0.5, 0.5, 0.5],
            a: [[1.0, 0.1, 0.1], [0.1, 1.0, 0.1], [0.1, 0.1, 1.0]],
        })
        .expect("symmetric preset is valid")
    }
}

//! Three-species Lotka-Volterra competition with seasonal succession.
//!
//! Each period of length ω starts with a decay phase of length (1−φ)ω in
//! which every species dies at rate μ_i, followed by a competition phase of
//! length φω governed by `x_i' = x_i (b_i − Σ_j a_ij x_j)`. The crate
//! computes the period map and its fixed points, decides permanence from
//! boundary fixed-point data and analyzes long-run orbits.

pub mod classify;
pub mod flow;
pub mod integrator;
pub mod orbit;
pub mod params;
pub mod poincare;

pub use flow::{State, VariationalState};
pub use integrator::{FlowError, IntegratorConfig};
pub use params::{DerivedQuantities, RawParams, SeasonalParams};

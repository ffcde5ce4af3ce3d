//! Flat (razor-thin, axisymmetric) self-gravitating Vlasov–Poisson steady
//! states: Casimir models, the elliptic-kernel potential, a self-consistent
//! solver, energy functionals and a particle stability simulator.
//!
//! Units have `G = 1`.

pub mod casimir;
pub mod elliptic;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod potential;
pub mod quadrature;
pub mod stability;
pub mod steady_state;

pub use error::{Error, Result};

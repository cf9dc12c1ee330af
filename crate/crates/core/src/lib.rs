//! Galerkin finite elements for the 2D non-stationary Boussinesq system with
//! total-head conditions on Γ₁ and heat-flux conditions on Γ₂, together with
//! a box-constrained projected-gradient optimizer for the boundary-flux cost.

pub mod error;
pub mod forms;
pub mod manufactured;
pub mod mesh;
pub mod num;
pub mod poly;
pub mod quadrature;
pub mod cli;
pub mod config;
pub mod control;
pub mod spaces;
pub mod sparse;
pub mod stepper;

pub use error::{Error, Result};

//! Two-dimensional structure-preserving solver for the thermodynamically
//! consistent Navier–Stokes–Cahn–Hilliard model with unmatched densities and
//! the singular Flory–Huggins potential, together with the diagnostics used to
//! audit mass conservation, the energy balance, strict separation, stability
//! of local energy minimisers and the algebraic decay towards equilibrium.

pub mod cahn_hilliard;
pub mod coupled_solver;
pub mod diagnostics;
pub mod equilibrium;
pub mod error;
pub mod grid_ops;
pub mod io;
pub mod linalg;
pub mod materials;
pub mod navier_stokes;
pub mod par;

pub use error::{AggError, Result};
pub use grid_ops::{Boundary, GridSpec, ScalarField, VectorField};
pub use materials::PhysicalParams;

//! Discrete solver for the degenerate weighted problem
//! `y^a ∂_t U − div(y^a B(x) ∇U) = −div(y^a F)` with Neumann flux
//! `−y^a U_y = f` on `y = 0`, and the weak-form verification suite.

pub mod checks;
pub mod coeff;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod solver;

pub use coeff::{CoefficientField, CoefficientSpec};
pub use grid::{GridSpec, ParabolicGrid, ScalarField, Spacing, ThinField, VectorField};
pub use solver::{solve_extension, Bottom, ExtensionProblem, ExtensionSolution, LinearSolver, Ordering, SolverOptions};

//! Monotone wide-stencil solver for the Dirichlet Monge-Ampere equation
//! `det(D^2 u) = f` on a square, with an overlapping domain-decomposition
//! outer iteration and Newton-Krylov subdomain solves.

pub mod ddm;
pub mod driver;
pub mod geometry;
pub mod linalg;
pub mod nonlinear;
pub mod problems;
pub mod report;
pub mod scheme;

pub use ddm::{decompose, DdmConfig, DdmError, DdmSolver, DecompositionSpec};
pub use driver::{solve, solve_problem, SolveOptions, Solution};
pub use geometry::{build_directions, build_grid, DomainSpec, Grid, NodeId, NodeKind};
pub use linalg::{gmres_solve, CsrMatrix, KrylovConfig};
pub use nonlinear::{newton_solve, NewtonConfig, NewtonReport, NonlinearSystem};
pub use problems::{example1, example2, l2_error, max_error, ProblemId, ProblemSpec};
pub use report::{SolveReport, CSV_HEADER};
pub use scheme::{quad_weights, GridFunction, ProblemData, Scheme};

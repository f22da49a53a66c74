//! Windowed acceleration of preconditioned Richardson iterations.
//!
//! Given a sparse system `A x = b` and a preconditioner `P`, the Richardson
//! iteration applies `q(x) = x + P (b - A x)` until the preconditioned
//! residual `r(x) = x - q(x) = P (A x - b)` is small. This crate implements
//! five windowed accelerators of that iteration (Anderson acceleration and
//! nonlinear GMRES, each in several residual flavors), reference left- and
//! right-preconditioned GMRES solvers to compare against, and a diagnostics
//! layer that verifies the least-squares identities, orthogonality relations,
//! monotonicity bounds, and GMRES-equivalence properties these methods obey.
//!
//! The `cli` module backs the `richaccel` binary: batch runs with CSV
//! convergence histories, verification reports, matrix export, and pinned
//! figure-reproduction configurations.

pub mod accel;
pub mod cli;
pub mod diagnostics;
pub mod fixed_point;
pub mod gmres;
pub mod linalg;
pub mod problems;
pub mod trace;

pub use accel::{run_accelerated, AcceleratorVariant, WindowDepth};
pub use fixed_point::{run_richardson, RichardsonOperator};
pub use gmres::{gmres_preconditioned, GmresSide};
pub use problems::{build_convection_diffusion_2d, build_laplace_2d, Preconditioner, ProblemInstance};
pub use trace::{SolveOptions, SolveReport, SolveStatus};

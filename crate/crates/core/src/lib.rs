//! Second-order Lagrangian trajectory solver for the one-dimensional porous
//! medium equation `f_t = (f^m)_xx`, `m > 1`.
//!
//! The density is carried by a monotone particle trajectory `x(X, t)`;
//! `f = f0(X) / x_X` recovers it. Each time step is a modified
//! Crank-Nicolson update whose nonlinear system is the optimality condition
//! of a strictly convex functional, solved by damped Newton.

// `!(a < b)` is used on purpose so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod checks;
pub mod error;
pub mod functional;
pub mod mesh;
pub mod newton;
pub mod output;
pub mod problem;
pub mod scalar;
pub mod stepper;

pub use analysis::{ConvergenceReport, ErrorRecord, StudySetup};
pub use error::{Error, Result};
pub use functional::{SchemeCoefficients, SolverParams};
pub use mesh::{CellField, Grid, NodeField};
pub use newton::NewtonReport;
pub use problem::{InitialDataKind, ProblemSpec, TrajectoryState};
pub use scalar::Scalar;
pub use stepper::{RunConfig, RunResult};

pub type Grid64 = Grid<f64>;
pub type NodeField64 = NodeField<f64>;
pub type CellField64 = CellField<f64>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type SolverParams64 = SolverParams<f64>;
pub type TrajectoryState64 = TrajectoryState<f64>;
pub type ConvergenceReport64 = ConvergenceReport<f64>;
pub type StudySetup64 = StudySetup<f64>;

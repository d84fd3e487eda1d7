//! Finite-element laboratory for quasilinear elliptic problems
//! `div(a(|∇u|)∇u) + f(u) = 0` with Robin or Neumann boundary conditions:
//! discretization, Newton solves, stability eigenvalues, level-set geometry
//! and boundary sign checks.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod certify;
pub mod coeff;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod levelset;
pub mod linalg;
pub mod mesh;
pub mod scalar;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
pub use scalar::Real;

pub type CoefficientFamily = coeff::CoefficientFamily<f64>;
pub type OperatorMatrix = coeff::OperatorMatrix<f64>;
pub type Mesh = mesh::Mesh<f64>;
pub type SparseSymmetricMatrix = linalg::SparseSymmetricMatrix<f64>;
pub type Field = fem::Field<f64>;
pub type NonlinearProblem = fem::NonlinearProblem<f64>;
pub type ScalarFn = fem::ScalarFn<f64>;
pub type LevelSetData = levelset::LevelSetData<f64>;
pub type PoincareBreakdown = levelset::PoincareBreakdown<f64>;
pub type StabilityReport = stability::StabilityReport<f64>;
pub type SolveReport = solver::SolveReport<f64>;
pub type NewtonOptions = solver::NewtonOptions<f64>;
pub type BoundaryFrameData = certify::BoundaryFrameData<f64>;
pub type RobinCertificate = certify::RobinCertificate<f64>;
pub type RigidityReport = certify::RigidityReport<f64>;

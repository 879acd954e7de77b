//! Adjoint-based optimal control of McKean-Vlasov stochastic reaction-diffusion
//! equations on `(0, 1)` with Dirichlet boundary conditions.
//!
//! The state is discretized with a sine-Galerkin basis in space, an
//! interacting particle system for the law, and a semi-implicit
//! Euler–Maruyama step in time. Gradients come from the exact discrete
//! adjoint of that recursion and are cross-checked against the tangent
//! (forward sensitivity) route and finite differences.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod assignment;
pub mod control;
pub mod ensemble;
pub mod error;
pub mod forward;
pub mod noise;
pub mod objective;
pub mod optimizer;
pub mod problem;
pub mod spectral;
pub mod tangent;

pub use adjoint::{duality_residual, solve_adjoint, AdjointBundle, DualityResidual};
pub use control::ControlPath;
pub use ensemble::{wasserstein2, EmpiricalLaw, Ensemble};
pub use error::{Error, Result};
pub use forward::{lipschitz_probe, moment_report, sample_initial_ensemble, solve, TrajectoryBundle};
pub use noise::NoisePlan;
pub use objective::{cost, cost_and_gradient, gradcheck, gradient, hamiltonian, GradientPath};
pub use optimizer::{descend, pontryagin_residual, project_admissible, DescentParams};
pub use problem::{CubicReactionDiffusion, LinearQuadratic, LqTables, Problem, TimeGrid, TimeTable};
pub use spectral::{OperatorSpec, SpectralField};
pub use tangent::{gateaux_cost, solve_tangent, TangentBundle};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Simulator for a periodically driven, dissipative Bose-Hubbard dimer.
//!
//! The crate propagates the Lindblad master equation of the two-site model,
//! builds and diagonalizes the one-period Floquet map, computes steady-state
//! two-time correlations, integrates the classical mean-field limit and
//! renders spin-coherent-state (Husimi) phase-space diagnostics.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32`/`f64`); the
//! aliases below fix the double-precision instantiation used by the CLI.

pub mod correlations;
pub mod linalg;
pub mod meanfield;
pub mod model;
pub mod phase_space;
pub mod propagation;
pub mod runner;
pub mod scalar;
pub mod spectral;

pub use model::{build_basis, build_operators, drive_eps, hamiltonian_at, FockBasis, ModelError};
pub use propagation::{
    apply_floquet, apply_liouvillian, build_floquet_map, propagate_matrix, propagate_state, PropagationError,
    StepControl,
};

/// Double-precision model parameters.
pub type Params = model::ModelParams<f64>;
pub type Operators = model::OperatorSet<f64>;
pub type Density = propagation::DensityMatrix<f64>;
pub type FloquetMap = propagation::FloquetMap<f64>;
pub type Context = propagation::PropagationContext<f64>;

//! Learning embedded latent transfer operator models of stochastic
//! nonlinear dynamics: spectral state realization, kernel-embedded
//! filtering, and Koopman mode decomposition with DMD-family baselines.

pub mod bench;
pub mod error;
pub mod filter;
pub mod kernels;
pub mod linalg;
pub mod modes;
pub mod operators;
pub mod realization;
pub mod systems;

pub use error::{EltoError, Result};
pub use kernels::{GramMatrix, KernelKind, KernelSpec};
pub use operators::EltoFilterModel;
pub use realization::{RealizationConfig, RealizationModel, ReferencePolicy};
pub use systems::TimeSeries;

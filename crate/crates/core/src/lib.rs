//! Limiting spectral law of Hadamard products of independent sample
//! covariance matrices with correlated rows, together with the finite-n
//! simulation of the matrix model and the tensor identities behind it.
//!
//! The matrix studied is `M = ⊙ᵢ (1/dᵢ) X⁽ⁱ⁾X⁽ⁱ⁾ᵀ`, whose empirical spectral
//! distribution approaches `μ_MP^γ ⊠ (μ₁ ⊛ … ⊛ μ_k)` when `n/∏dᵢ → γ`.

pub mod covmodel;
pub mod error;
pub mod linalg;
pub mod measure;
pub mod metrics;
pub mod rng;
pub mod simulate;
pub mod stieltjes;
pub mod tensoralg;

pub use error::{Error, Result};
pub use covmodel::{CovarianceKind, CovarianceMatrix, CovarianceSpec};
pub use measure::AtomicMeasure;
pub use simulate::{ExperimentConfig, RowDistribution, SpectrumResult};
pub use stieltjes::{GridDensity, HalfPlanePoint, SolverOptions};

//! Sparse spectral fine-tuning in the DCT domain.
//!
//! A frozen weight `W` is adapted by `ΔW = α · iDCT(ΔW_F)`, where `ΔW_F` is
//! zero except at `n` trainable positions. Positions are chosen per band of
//! the frozen weight's own DCT spectrum: the most energetic coefficients
//! first, the rest at random. The crate also carries the baselines used for
//! comparison (random DCT selection, Fourier-domain coefficients and LoRA), a
//! small trainer for a synthetic classification benchmark, and parameter /
//! storage accounting.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for callers that do not care.

pub mod accounting;
pub mod adapters;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod matrix;
pub mod partition;
pub mod scalar;
pub mod selection;
pub mod spectral;
pub mod train;

pub use num_complex::Complex;
pub use adapters::{AdapterCheckpoint, AdapterConfig, AdapterGrad, AdapterKind};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use partition::{distance, partition, Band, FrequencyPartition};
pub use scalar::Scalar;
pub use selection::{build_random_plan, build_selection_plan, rank_by_energy, SelectionPlan};
pub use train::{train, BaseInit, EpochRecord, NetworkShape, OptimizerKind, TrainConfig};
pub use spectral::{dct2, dft2_real, idct2, idct2_sparse, idft2_real_part, Basis, Dct2d, Dft2d};

pub type RealMatrix = Matrix<f64>;
pub type RealMatrixF32 = Matrix<f32>;
pub type SpectralMatrix = spectral::SpectralMatrix<f64>;
pub type SpectralMatrixF32 = spectral::SpectralMatrix<f32>;
pub type ComplexMatrix = spectral::ComplexMatrix<f64>;
pub type Adapter = adapters::Adapter<f64>;
pub type AdapterF32 = adapters::Adapter<f32>;
pub type SpectralAdapter = adapters::SpectralAdapter<f64>;
pub type LoraAdapter = adapters::LoraAdapter<f64>;
pub type ToyNetwork = train::ToyNetwork<f64>;
pub type ToyNetworkF32 = train::ToyNetwork<f32>;

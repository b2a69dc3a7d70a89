//! Signature-based drawdown approximation and drawdown-aware path
//! generation.
//!
//! The library has two halves. The first approximates the drawdown of a
//! short price window as a regularized linear function of the window's
//! truncated path signature, giving a closed-form, differentiable stand-in
//! for the (non-smooth) running-maximum definition. The second uses that
//! stand-in inside a variational autoencoder's loss so that generated paths
//! reproduce realistic drawdown distributions, not just pointwise shapes.
//!
//! All numerics are generic over the scalar type via [`Float`]; `*64` type
//! aliases at the crate root cover the common `f64` case.

pub mod approximator;
pub mod drawdown;
pub mod error;
pub mod evaluate;
pub mod float;
pub mod generator;
pub mod ingest;
pub mod io;
pub mod paths;
pub mod regression;
pub mod seed;
pub mod signature;

pub use error::{Error, Result};
pub use float::Float;

/// `f64` aliases for the main public types.
pub type SeriesPath64 = paths::SeriesPath<f64>;
pub type AugmentedPath64 = paths::AugmentedPath<f64>;
pub type FbmConfig64 = paths::FbmConfig<f64>;
pub type Signature64 = signature::Signature<f64>;
pub type DrawdownModel64 = approximator::DrawdownModel<f64>;
pub type StudyConfig64 = approximator::StudyConfig<f64>;
pub type TrainConfig64 = generator::TrainConfig<f64>;
pub type GeneratorModel64 = generator::GeneratorModel<f64>;
pub type PriceTable64 = ingest::PriceTable<f64>;

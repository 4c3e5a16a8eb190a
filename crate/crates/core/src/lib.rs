//! PAC-Bayes learning and risk certification for structured prediction with
//! implicit loss embeddings.
//!
//! The crate is organized bottom-up: [`loss_embedding`] defines the losses and
//! decoders, [`kernel_features`] and [`surrogate_regression`] fit linear
//! surrogates, [`gaussian_posterior`] builds the priors and posteriors over
//! regressor matrices, [`certificates`] evaluates the bounds, and
//! [`optimizers`] minimizes them. [`datasets`] loads data and generates finite
//! synthetic tasks with exact oracles; [`validation_suite`] runs the numerical
//! experiments.

pub mod certificates;
pub mod datasets;
pub mod error;
pub mod format;
pub mod gaussian_posterior;
pub mod kernel_features;
pub mod loss_embedding;
pub mod optimizers;
pub mod seed;
pub mod stats;
pub mod surrogate_regression;
pub mod validation_suite;

pub use error::{Error, Result};
pub use loss_embedding::{Label, LossEmbedding, LossKind};
pub use seed::SeedStream;

//! Denoising implicit-feedback recommenders: data handling, models, the
//! corrupted-likelihood objectives, trainers, ranking metrics and posteriors.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice.

mod codec;
pub mod error;
pub mod evaluation;
pub mod interactions;
pub mod models;
pub mod objectives;
pub mod optim;
pub mod posterior;
pub mod scalar;
pub mod trainers;

pub use error::{Error, Result};
pub use interactions::{InteractionStore, Interaction, CleanRule};
pub use models::{Arch, ModelParams, Scorer};
pub use objectives::{Mode, ObjectiveConfig};
pub use scalar::Scalar;

pub type Model = ModelParams<f64>;
pub type Model32 = ModelParams<f32>;
pub type Adam = optim::AdamState<f64>;
pub type Adam32 = optim::AdamState<f32>;

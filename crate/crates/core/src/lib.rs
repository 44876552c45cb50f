//! Temperature and margin scheduling for two-tower contrastive training.
//!
//! The crate covers the full loop around the schedule: estimating cluster
//! sizes with K-Means, turning sizes into per-cluster shifts, combining the
//! shifts with a cosine base wave into per-sample temperatures or margins,
//! applying those to symmetric InfoNCE and max-margin losses with analytic
//! gradients, generating synthetic long-tail paired datasets, training a
//! linear two-tower model, and scoring retrieval quality.
//!
//! All numerics run in f64; f32 appears only in the `.mme` file format.
//! Every random choice is driven by an explicit seed through ChaCha8, and
//! reductions are ordered so results are identical across runs and thread
//! counts.

pub mod distribution;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod retrieval_eval;
pub mod schedule;
pub mod synthdata;
pub mod trainer;

pub use embedding::EmbeddingMatrix;
pub use error::{Error, Result};
pub use schedule::{LossKind, ScheduleConfig, ShiftTable};

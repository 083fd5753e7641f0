//! Generalized domain adaptation across heterogeneous information networks.
//!
//! A labelled source graph and an unlabelled target graph share some node
//! types and each carry private ones. The model aligns per-type feature
//! distributions with pairwise autoencoders and adversarial discriminators,
//! recovers a common space for private types by nuclear-norm completion,
//! aligns graph-transformer embeddings adversarially and trains the
//! classifier in two phases, the second with target pseudo-labels.

pub mod align;
pub mod autograd;
pub mod completion;
pub mod error;
pub mod exec;
pub mod extractor;
pub mod hin;
pub mod linalg;
pub mod params;
pub mod trainer;

pub use error::{Error, Result};
pub use linalg::Matrix;

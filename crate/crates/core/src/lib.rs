//! Few-shot anomaly detection with a Bayesian prototype model.
//!
//! Normality in embedding space is modeled with a Normal-Inverse-Wishart
//! posterior whose Student-t predictive is compared with a broad reference
//! density. The embedding is meta-learned through a differentiable inner
//! adaptation step, either centrally or across simulated federated clients.

pub mod bayescore;
pub mod diffnet;
pub mod episodes;
pub mod error;
pub mod eval;
pub mod fedsim;
pub mod metalearn;
pub mod special;

pub use error::{Error, Result};

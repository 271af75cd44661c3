//! Conjugate Normal-Inverse-Wishart updates, the Student-t posterior
//! predictive, the fixed anomaly reference and likelihood-ratio scoring.
//!
//! Every density goes through a Cholesky factor and its cached log-determinant;
//! no explicit inverse is formed outside the diagnostics in [`checks`].

pub mod checks;
pub mod linalg;
mod niw;
mod student_t;

pub use checks::{
    hessian_bound, hessian_bound_check, wellposedness_check, HessianReport, WellposednessReport,
};
pub use niw::{niw_posterior, NiwPosterior, NiwPrior};
pub use student_t::{anomaly_score, AnomalyReference, StudentT};

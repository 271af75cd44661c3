use serde::{Deserialize, Serialize};

use super::linalg::{
    backward_solve, cholesky_jittered, forward_solve, inverse_from_cholesky, log_det_from_cholesky,
};
use crate::diffnet::Scalar;
use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Multivariate Student-t with location `mean`, scale matrix `scale` and
/// `dof` degrees of freedom. The Cholesky factor and log-determinant of the
/// scale are computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentT<S = f64> {
    mean: Vec<S>,
    scale: Vec<S>,
    chol: Vec<S>,
    log_det: S,
    dof: f64,
    dim: usize,
    jittered: bool,
    // lgamma((ν+d)/2) − lgamma(ν/2) − (d/2) log(νπ)
    norm_const: f64,
}

impl<S: Scalar> StudentT<S> {
    pub fn new(mean: Vec<S>, scale: &[S], dof: f64) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 {
            return Err(Error::invalid("student_t.mean", "dimension must be positive"));
        }
        if scale.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "student_t.scale",
                expected: dim * dim,
                got: scale.len(),
            });
        }
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(Error::NonPositiveDof(dof));
        }
        if mean.iter().chain(scale).any(|v| !v.primal().is_finite()) {
            return Err(Error::NonFinite("student_t parameters"));
        }
        let (chol, jittered) = cholesky_jittered(scale, dim, "student_t scale")?;
        let log_det = log_det_from_cholesky(&chol, dim);
        let d = dim as f64;
        let norm_const =
            ln_gamma((dof + d) / 2.0) - ln_gamma(dof / 2.0) - d / 2.0 * (dof * std::f64::consts::PI).ln();
        Ok(StudentT {
            mean,
            scale: scale.to_vec(),
            chol,
            log_det,
            dof,
            dim,
            jittered,
            norm_const,
        })
    }

    /// Location `mean`, scale `value·I`.
    pub fn isotropic(mean: Vec<S>, value: f64, dof: f64) -> Result<Self> {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::invalid("scale_value", format!("must be > 0, got {value}")));
        }
        let d = mean.len();
        let mut scale = vec![S::zero(); d * d];
        for i in 0..d {
            scale[i * d + i] = S::cst(value);
        }
        StudentT::new(mean, &scale, dof)
    }

    pub fn mean(&self) -> &[S] {
        &self.mean
    }
    pub fn scale(&self) -> &[S] {
        &self.scale
    }
    pub fn chol(&self) -> &[S] {
        &self.chol
    }
    pub fn log_det(&self) -> S {
        self.log_det
    }
    pub fn dof(&self) -> f64 {
        self.dof
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    /// Whether the scale needed the one-shot diagonal jitter to factorize.
    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// Squared Mahalanobis distance `(z−μ)ᵀ Σ⁻¹ (z−μ)`.
    pub fn mahalanobis_sq(&self, z: &[S]) -> Result<S> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "student_t argument",
                expected: self.dim,
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.primal().is_finite()) {
            return Err(Error::NonFinite("student_t argument"));
        }
        let diff: Vec<S> = z.iter().zip(&self.mean).map(|(&a, &m)| a - m).collect();
        let y = forward_solve(&self.chol, &diff, self.dim);
        Ok(S::dot(&y, &y))
    }

    /// `log Student-t(z | μ, Σ, ν)`.
    pub fn logpdf(&self, z: &[S]) -> Result<S> {
        let delta = self.mahalanobis_sq(z)?;
        let d = self.dim as f64;
        let tail = (delta / self.dof + 1.0).ln() * (-(self.dof + d) / 2.0);
        Ok(tail - self.log_det * 0.5 + self.norm_const)
    }
}

impl StudentT<f64> {
    fn centered(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.mean).map(|(a, m)| a - m).collect()
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = forward_solve(&self.chol, b, self.dim);
        backward_solve(&self.chol, &y, self.dim)
    }

    /// Gradient of `ℓ(z) = −logpdf(z)`: `(ν+d)/(ν+δ) Σ⁻¹(z−μ)`.
    pub fn nll_gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let delta = self.mahalanobis_sq(z)?;
        let w = self.solve(&self.centered(z));
        let c = (self.dof + self.dim as f64) / (self.dof + delta);
        Ok(w.into_iter().map(|v| c * v).collect())
    }

    /// Hessian of `ℓ(z)`, row-major:
    /// `(ν+d)/(ν+δ) Σ⁻¹ − 2(ν+d)/(ν+δ)² Σ⁻¹(z−μ)(z−μ)ᵀΣ⁻¹`.
    pub fn nll_hessian(&self, z: &[f64]) -> Result<Vec<f64>> {
        let delta = self.mahalanobis_sq(z)?;
        let d = self.dim;
        let w = self.solve(&self.centered(z));
        let inv = self.scale_inverse();
        let nd = self.dof + d as f64;
        let c1 = nd / (self.dof + delta);
        let c2 = 2.0 * nd / (self.dof + delta).powi(2);
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] = c1 * inv[i * d + j] - c2 * w[i] * w[j];
            }
        }
        Ok(h)
    }

    /// `Σ⁻¹` from the cached factor. Only used by diagnostics.
    pub fn scale_inverse(&self) -> Vec<f64> {
        inverse_from_cholesky(&self.chol, self.dim)
    }
}

/// The fixed background density `p1 = Student-t(0, σ_a² I, ν_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnomalyReference {
    pub scale_value: f64,
    pub dof: f64,
}

impl Default for AnomalyReference {
    fn default() -> Self {
        AnomalyReference {
            scale_value: 100.0,
            dof: 2.0,
        }
    }
}

impl AnomalyReference {
    pub fn new(scale_value: f64, dof: f64) -> Result<Self> {
        if !(scale_value > 0.0) || !scale_value.is_finite() {
            return Err(Error::invalid(
                "reference.scale_value",
                format!("must be > 0, got {scale_value}"),
            ));
        }
        if !(dof > 0.0) || !dof.is_finite() {
            return Err(Error::invalid("reference.dof", format!("must be > 0, got {dof}")));
        }
        Ok(AnomalyReference { scale_value, dof })
    }

    /// The reference as a `d`-dimensional Student-t.
    pub fn to_student_t<S: Scalar>(&self, dim: usize) -> Result<StudentT<S>> {
        StudentT::isotropic(vec![S::zero(); dim], self.scale_value, self.dof)
    }
}

/// Likelihood-ratio score `log p1(z) − log p0(z)`; larger is more anomalous.
pub fn anomaly_score<S: Scalar>(p0: &StudentT<S>, p1: &StudentT<S>, z: &[S]) -> Result<S> {
    if p0.dim() != p1.dim() {
        return Err(Error::DimensionMismatch {
            context: "anomaly reference",
            expected: p0.dim(),
            got: p1.dim(),
        });
    }
    Ok(p1.logpdf(z)? - p0.logpdf(z)?)
}

use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, compensated_sum, identity, symmetric_eigenvalues};
use super::student_t::StudentT;
use crate::diffnet::Scalar;
use crate::error::{Error, Result};

/// Normal-Inverse-Wishart prior `NIW(μ0, κ0, Λ0, ν0)` over a Gaussian's mean
/// and covariance in embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NiwPrior {
    mu0: Vec<f64>,
    kappa0: f64,
    lambda0: Vec<f64>,
    nu0: f64,
    dim: usize,
    lambda0_min_eig: f64,
}

impl NiwPrior {
    pub fn new(mu0: Vec<f64>, kappa0: f64, lambda0: Vec<f64>, nu0: f64) -> Result<Self> {
        let dim = mu0.len();
        if dim == 0 {
            return Err(Error::invalid("prior.mu0", "dimension must be positive"));
        }
        if lambda0.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                context: "prior.lambda0",
                expected: dim * dim,
                got: lambda0.len(),
            });
        }
        if mu0.iter().chain(&lambda0).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prior"));
        }
        if !(kappa0 > 0.0) {
            return Err(Error::invalid("prior.kappa0", format!("must be > 0, got {kappa0}")));
        }
        if !(nu0 > dim as f64 - 1.0) {
            return Err(Error::invalid(
                "prior.nu0",
                format!("must exceed d - 1 = {}, got {nu0}", dim - 1),
            ));
        }
        for i in 0..dim {
            for j in 0..i {
                if lambda0[i * dim + j] != lambda0[j * dim + i] {
                    return Err(Error::invalid("prior.lambda0", "must be symmetric"));
                }
            }
        }
        if cholesky(&lambda0, dim).is_none() {
            return Err(Error::invalid("prior.lambda0", "must be positive definite"));
        }
        let lambda0_min_eig = symmetric_eigenvalues(&lambda0, dim)[0];
        Ok(NiwPrior {
            mu0,
            kappa0,
            lambda0,
            nu0,
            dim,
            lambda0_min_eig,
        })
    }

    /// `μ0 = 0`, `Λ0 = scale·I`.
    pub fn isotropic(dim: usize, kappa0: f64, scale: f64, nu0: f64) -> Result<Self> {
        let lambda0 = identity(dim).into_iter().map(|v| v * scale).collect();
        NiwPrior::new(vec![0.0; dim], kappa0, lambda0, nu0)
    }

    /// Default hyperparameters at embedding dimension `d`: κ0 = 0.01, Λ0 = I,
    /// ν0 = d + 2.
    pub fn standard(dim: usize) -> Self {
        NiwPrior::isotropic(dim, 0.01, 1.0, dim as f64 + 2.0).expect("standard prior is valid")
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }
    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }
    pub fn lambda0(&self) -> &[f64] {
        &self.lambda0
    }
    pub fn nu0(&self) -> f64 {
        self.nu0
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lambda0_min_eig(&self) -> f64 {
        self.lambda0_min_eig
    }
}

/// Posterior NIW parameters after observing `support_size` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct NiwPosterior<S = f64> {
    pub mu_n: Vec<S>,
    pub kappa_n: f64,
    /// Row-major `d×d`.
    pub lambda_n: Vec<S>,
    pub nu_n: f64,
    pub support_size: usize,
    pub dim: usize,
}

/// Conjugate update of `prior` with the support embeddings.
///
/// `z̄` and `S_z` are accumulated in input order with compensated summation;
/// `Λn` is assembled from its upper triangle so it is exactly symmetric.
pub fn niw_posterior<S: Scalar>(prior: &NiwPrior, support: &[Vec<S>]) -> Result<NiwPosterior<S>> {
    let k = support.len();
    if k == 0 {
        return Err(Error::invalid("support", "need at least one embedding"));
    }
    let d = prior.dim;
    for z in support {
        if z.len() != d {
            return Err(Error::DimensionMismatch {
                context: "support embedding",
                expected: d,
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.primal().is_finite()) {
            return Err(Error::NonFinite("support embedding"));
        }
    }
    let kf = k as f64;
    let kappa_n = prior.kappa0 + kf;
    let nu_n = prior.nu0 + kf;

    let mean: Vec<S> = (0..d)
        .map(|j| compensated_sum(support.iter().map(|z| z[j])) / kf)
        .collect();
    let centered: Vec<Vec<S>> = support
        .iter()
        .map(|z| z.iter().zip(&mean).map(|(&a, &m)| a - m).collect())
        .collect();
    let shift: Vec<S> = mean.iter().zip(&prior.mu0).map(|(&m, &m0)| m - m0).collect();
    let shrink = prior.kappa0 * kf / kappa_n;

    let mut lambda_n = vec![S::zero(); d * d];
    for i in 0..d {
        for j in i..d {
            let scatter = compensated_sum(centered.iter().map(|c| c[i] * c[j]));
            let v = scatter + shift[i] * shift[j] * shrink + prior.lambda0[i * d + j];
            lambda_n[i * d + j] = v;
            lambda_n[j * d + i] = v;
        }
    }
    let mu_n: Vec<S> = mean
        .iter()
        .zip(&prior.mu0)
        .map(|(&m, &m0)| (m * kf + prior.kappa0 * m0) / kappa_n)
        .collect();

    Ok(NiwPosterior {
        mu_n,
        kappa_n,
        lambda_n,
        nu_n,
        support_size: k,
        dim: d,
    })
}

impl<S: Scalar> NiwPosterior<S> {
    /// Predictive degrees of freedom `νn − d + 1`.
    pub fn predictive_dof(&self) -> f64 {
        self.nu_n - self.dim as f64 + 1.0
    }

    /// Scale factor `a_n = (κn + 1) / (κn (νn − d + 1))`.
    pub fn scale_factor(&self) -> f64 {
        (self.kappa_n + 1.0) / (self.kappa_n * self.predictive_dof())
    }

    /// Posterior predictive `Student-t(μn, a_n Λn, νn − d + 1)`.
    pub fn predictive(&self) -> Result<StudentT<S>> {
        let dof = self.predictive_dof();
        if !(dof > 0.0) {
            return Err(Error::NonPositiveDof(dof));
        }
        let a_n = self.scale_factor();
        let scale: Vec<S> = self.lambda_n.iter().map(|&v| v * a_n).collect();
        StudentT::new(self.mu_n.clone(), &scale, dof)
    }
}

impl NiwPosterior<f64> {
    /// Flat debug record `(μn, κn, Λn row-major, νn)`.
    pub fn to_flat_record(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim * (self.dim + 1) + 2);
        out.extend(&self.mu_n);
        out.push(self.kappa_n);
        out.extend(&self.lambda_n);
        out.push(self.nu_n);
        out
    }

    pub fn from_flat_record(record: &[f64], dim: usize, support_size: usize) -> Result<Self> {
        let expected = dim * (dim + 1) + 2;
        if record.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "posterior record",
                expected,
                got: record.len(),
            });
        }
        Ok(NiwPosterior {
            mu_n: record[..dim].to_vec(),
            kappa_n: record[dim],
            lambda_n: record[dim + 1..dim + 1 + dim * dim].to_vec(),
            nu_n: record[expected - 1],
            support_size,
            dim,
        })
    }
}

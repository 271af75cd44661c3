//! Runtime verification of the predictive's well-posedness, its scale bounds,
//! and the bounded-Hessian property of the negative log-density.

use serde::{Deserialize, Serialize};

use super::linalg::{cholesky, symmetric_eigenvalues};
use super::niw::{NiwPosterior, NiwPrior};
use super::student_t::StudentT;
use crate::error::{Error, Result};

/// Relative slack allowed on the scale bounds.
pub const BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellposednessReport {
    /// Cholesky of the predictive scale succeeded without jitter.
    pub scale_pd: bool,
    pub min_eig: f64,
    pub min_eig_bound: f64,
    /// Spectral norm of the inverse predictive scale.
    pub inv_norm: f64,
    pub inv_norm_bound: f64,
    pub bound_ok: bool,
}

/// Checks that `Σn = a_n Λn` is SPD and satisfies
/// `λ_min(Σn) ≥ λ_min(Λ0)/(ν0+K−d+1)` and `‖Σn⁻¹‖ ≤ (ν0+K−d+1)/λ_min(Λ0)`.
pub fn wellposedness_check(prior: &NiwPrior, post: &NiwPosterior) -> WellposednessReport {
    let d = post.dim;
    let a_n = post.scale_factor();
    let scale: Vec<f64> = post.lambda_n.iter().map(|v| v * a_n).collect();
    let scale_pd = post.predictive_dof() > 0.0 && cholesky(&scale, d).is_some();
    let min_eig = symmetric_eigenvalues(&scale, d)[0];
    let dof = prior.nu0() + post.support_size as f64 - d as f64 + 1.0;
    let min_eig_bound = prior.lambda0_min_eig() / dof;
    let inv_norm = 1.0 / min_eig;
    let inv_norm_bound = dof / prior.lambda0_min_eig();
    let bound_ok = scale_pd
        && min_eig >= min_eig_bound * (1.0 - BOUND_SLACK)
        && inv_norm <= inv_norm_bound * (1.0 + BOUND_SLACK);
    WellposednessReport {
        scale_pd,
        min_eig,
        min_eig_bound,
        inv_norm,
        inv_norm_bound,
        bound_ok,
    }
}

/// `(ν+d)/ν·‖Σ⁻¹‖ + 2(ν+d)/ν²·‖Σ⁻¹‖²·R²`.
pub fn hessian_bound(dof: f64, dim: usize, inv_norm: f64, radius: f64) -> f64 {
    let nd = dof + dim as f64;
    nd / dof * inv_norm + 2.0 * nd / (dof * dof) * inv_norm * inv_norm * radius * radius
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub max_hess_norm: f64,
    pub bound: f64,
    /// Largest relative Frobenius error between the analytic Hessian and
    /// central differences of the analytic gradient.
    pub max_fd_rel_err: f64,
    pub ok: bool,
}

pub const HESSIAN_FD_TOL: f64 = 1e-5;

fn spectral_norm_sym(m: &[f64], d: usize) -> f64 {
    let ev = symmetric_eigenvalues(m, d);
    ev[0].abs().max(ev[d - 1].abs())
}

/// Evaluates the analytic Hessian of `−log t(z)` on `grid`, cross-checks it
/// by finite differences, and compares its largest spectral norm with the
/// bound at radius `radius`.
pub fn hessian_bound_check(t: &StudentT, radius: f64, grid: &[Vec<f64>]) -> Result<HessianReport> {
    if !(radius >= 0.0) {
        return Err(Error::invalid("radius", "must be >= 0"));
    }
    let d = t.dim();
    let mean = t.mean();
    let inv = t.scale_inverse();
    let bound = hessian_bound(t.dof(), d, spectral_norm_sym(&inv, d), radius);

    let mut max_hess_norm = 0.0f64;
    let mut max_fd_rel_err = 0.0f64;
    for z in grid {
        let r2: f64 = z.iter().zip(mean).map(|(a, m)| (a - m) * (a - m)).sum();
        if r2.sqrt() > radius * (1.0 + 1e-12) {
            return Err(Error::invalid("grid", "point lies outside the radius"));
        }
        let h = t.nll_hessian(z)?;
        max_hess_norm = max_hess_norm.max(spectral_norm_sym(&h, d));

        let mut fd = vec![0.0; d * d];
        let mut zp = z.clone();
        for j in 0..d {
            let step = 1e-5 * z[j].abs().max(1.0);
            zp[j] = z[j] + step;
            let up = t.nll_gradient(&zp)?;
            zp[j] = z[j] - step;
            let down = t.nll_gradient(&zp)?;
            zp[j] = z[j];
            for i in 0..d {
                fd[i * d + j] = (up[i] - down[i]) / (2.0 * step);
            }
        }
        let diff: f64 = h.iter().zip(&fd).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm: f64 = h.iter().map(|a| a * a).sum();
        max_fd_rel_err = max_fd_rel_err.max((diff / norm.max(f64::MIN_POSITIVE)).sqrt());
    }
    Ok(HessianReport {
        max_hess_norm,
        bound,
        max_fd_rel_err,
        ok: max_hess_norm <= bound && max_fd_rel_err <= HESSIAN_FD_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayescore::niw_posterior;

    #[test]
    fn hessian_bound_arithmetic() {
        assert!((hessian_bound(2.0, 2, 2.0, 1.0) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn scale_bound_for_identity_prior() {
        let prior = NiwPrior::isotropic(4, 0.01, 1.0, 6.0).unwrap();
        let support: Vec<Vec<f64>> = (0..5)
            .map(|k| (0..4).map(|j| ((k * 4 + j) as f64 * 0.71).sin()).collect())
            .collect();
        let post = niw_posterior(&prior, &support).unwrap();
        let r = wellposedness_check(&prior, &post);
        assert_eq!(r.min_eig_bound, 1.0 / 8.0);
        assert!(r.scale_pd && r.bound_ok);
    }

    #[test]
    fn support_at_prior_mean_gives_scaled_prior() {
        let prior = NiwPrior::isotropic(3, 0.5, 2.0, 4.0).unwrap();
        let post = niw_posterior(&prior, &[vec![0.0; 3]]).unwrap();
        let r = wellposedness_check(&prior, &post);
        let want = post.scale_factor() * 2.0;
        assert!((r.min_eig - want).abs() < 1e-14 * want);
    }

    #[test]
    fn hessian_grid_on_identity_scale() {
        let t = StudentT::isotropic(vec![0.0, 0.0], 1.0, 4.0).unwrap();
        let grid: Vec<Vec<f64>> = (0..100)
            .map(|i| {
                let a = i as f64 * 0.37;
                let r = 3.0 * (i as f64 / 99.0);
                vec![r * a.cos(), r * a.sin()]
            })
            .collect();
        let r = hessian_bound_check(&t, 3.0, &grid).unwrap();
        assert!(r.ok, "{r:?}");
    }

    #[test]
    fn grid_outside_radius_is_rejected() {
        let t = StudentT::isotropic(vec![0.0], 1.0, 4.0).unwrap();
        assert!(hessian_bound_check(&t, 1.0, &[vec![2.0]]).is_err());
    }
}

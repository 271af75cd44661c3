//! Loss functions, generic over the scalar type so the same code runs in
//! plain `f64`, on a reverse tape, or on a dual-number tape.

use crate::bayescore::{niw_posterior, NiwPrior, StudentT};
use crate::diffnet::Scalar;
use crate::error::{Error, Result};

/// Posterior predictive built from support embeddings.
pub fn support_predictive<S: Scalar>(prior: &NiwPrior, support: &[Vec<S>]) -> Result<StudentT<S>> {
    niw_posterior(prior, support)?.predictive()
}

/// `−Σ_i log p0(z_i | S)` where `p0` is built from the same embeddings.
pub fn bayes_inner_loss<S: Scalar>(prior: &NiwPrior, support: &[Vec<S>]) -> Result<S> {
    let p0 = support_predictive(prior, support)?;
    let terms = support
        .iter()
        .map(|z| p0.logpdf(z))
        .collect::<Result<Vec<S>>>()?;
    Ok(-S::sum(&terms))
}

/// `−Σ_j [(1−y_j) log p0(z_j) + y_j log p1(z_j)]`.
pub fn bayes_query_loss<S: Scalar>(
    p0: &StudentT<S>,
    p1: &StudentT<S>,
    query: &[Vec<S>],
    labels: &[u8],
) -> Result<S> {
    check_labels(query.len(), labels)?;
    let terms = query
        .iter()
        .zip(labels)
        .map(|(z, &y)| if y == 1 { p1.logpdf(z) } else { p0.logpdf(z) })
        .collect::<Result<Vec<S>>>()?;
    Ok(-S::sum(&terms))
}

fn check_labels(n: usize, labels: &[u8]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "query labels",
            expected: n,
            got: labels.len(),
        });
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels", "must be 0 or 1"));
    }
    Ok(())
}

fn unit<S: Scalar>(z: &[S]) -> Vec<S> {
    let norm = S::dot(z, z).sqrt();
    z.iter().map(|&v| v / norm).collect()
}

/// Supervised contrastive loss with temperature `tau`:
/// `Σ_i −1/|P(i)| Σ_{p∈P(i)} log( exp(z_i·z_p/τ) / Σ_{k≠i} exp(z_i·z_k/τ) )`.
/// Anchors without positives contribute nothing.
pub fn supcon_loss<S: Scalar>(
    embeddings: &[Vec<S>],
    labels: &[u8],
    tau: f64,
    normalize: bool,
) -> Result<S> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::invalid("embeddings", "supervised contrastive loss needs >= 2 samples"));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            context: "contrastive labels",
            expected: n,
            got: labels.len(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau", "must be > 0"));
    }
    let z: Vec<Vec<S>> = if normalize {
        embeddings.iter().map(|e| unit(e)).collect()
    } else {
        embeddings.to_vec()
    };
    let mut anchors = Vec::new();
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&p| p != i && labels[p] == labels[i]).collect();
        if positives.is_empty() {
            continue;
        }
        let sims: Vec<(usize, S)> = (0..n)
            .filter(|&k| k != i)
            .map(|k| (k, S::dot(&z[i], &z[k]) / tau))
            .collect();
        let shift = sims.iter().map(|(_, s)| s.primal()).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<S> = sims.iter().map(|&(_, s)| (s - shift).exp()).collect();
        let log_denom = S::sum(&exps).ln() + shift;
        let pos: Vec<S> = sims
            .iter()
            .filter(|(k, _)| labels[*k] == labels[i])
            .map(|&(_, s)| s - log_denom)
            .collect();
        anchors.push(-S::sum(&pos) / positives.len() as f64);
    }
    Ok(if anchors.is_empty() { S::zero() } else { S::sum(&anchors) })
}

/// Numerically stable `log(1 + e^x)`.
fn softplus<S: Scalar>(x: S) -> S {
    if x.primal() >= 0.0 {
        x + ((-x).exp() + 1.0).ln()
    } else {
        (x.exp() + 1.0).ln()
    }
}

/// Binary cross-entropy with logits, summed.
pub fn bce_with_logits<S: Scalar>(logits: &[S], targets: &[f64]) -> S {
    let terms: Vec<S> = logits
        .iter()
        .zip(targets)
        .map(|(&l, &t)| softplus(l) - l * t)
        .collect();
    S::sum(&terms)
}

pub fn squared_distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    let d: Vec<S> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    S::dot(&d, &d)
}

/// Coordinate-wise mean of the embeddings.
pub fn prototype<S: Scalar>(embeddings: &[Vec<S>]) -> Vec<S> {
    let k = embeddings.len() as f64;
    (0..embeddings[0].len())
        .map(|j| {
            let col: Vec<S> = embeddings.iter().map(|z| z[j]).collect();
            S::sum(&col) / k
        })
        .collect()
}

/// `(1/K) Σ_i ‖z_i − c‖²` with `c` the prototype of the same embeddings.
pub fn proto_inner_loss<S: Scalar>(support: &[Vec<S>]) -> Result<S> {
    if support.is_empty() {
        return Err(Error::invalid("support", "need at least one embedding"));
    }
    let c = prototype(support);
    let d: Vec<S> = support.iter().map(|z| squared_distance(z, &c)).collect();
    Ok(S::sum(&d) / support.len() as f64)
}

/// Query loss of the prototype baseline. The logit `−‖z − c‖²` is read as a
/// normality logit, so anomalies (label 1) are pushed away from the
/// prototype, consistently with the distance score.
pub fn proto_query_loss<S: Scalar>(prototype: &[S], query: &[Vec<S>], labels: &[u8]) -> Result<S> {
    check_labels(query.len(), labels)?;
    let logits: Vec<S> = query.iter().map(|z| -squared_distance(z, prototype)).collect();
    let targets: Vec<f64> = labels.iter().map(|&y| 1.0 - y as f64).collect();
    Ok(bce_with_logits(&logits, &targets))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supcon_identical_pair_is_zero() {
        let z = vec![vec![0.3, 0.4], vec![0.3, 0.4]];
        assert_eq!(supcon_loss(&z, &[1, 1], 0.07, false).unwrap(), 0.0);
    }

    #[test]
    fn supcon_distinct_labels_is_zero() {
        let z = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]];
        assert_eq!(supcon_loss(&z, &[0, 1, 2], 0.5, false).unwrap(), 0.0);
    }

    #[test]
    fn supcon_class_aligned_orthonormal_case() {
        // Each class shares a unit vector; the two class vectors are orthogonal.
        let z = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]];
        let got = supcon_loss(&z, &[0, 0, 1, 1], 1.0, false).unwrap();
        let want = 4.0 * ((2.0 + std::f64::consts::E).ln() - 1.0);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn supcon_fully_orthonormal_case() {
        let mut z = vec![vec![0.0; 4]; 4];
        for (i, row) in z.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let got = supcon_loss(&z, &[0, 0, 1, 1], 1.0, false).unwrap();
        assert!((got - 4.0 * 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn supcon_needs_two_samples() {
        assert!(supcon_loss(&[vec![1.0]], &[0], 1.0, false).is_err());
    }

    #[test]
    fn bce_at_zero_logit_is_log_two() {
        let l = bce_with_logits(&[0.0, 0.0], &[0.0, 1.0]);
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-15);
        // Large logits stay finite.
        assert!(bce_with_logits(&[800.0, -800.0], &[0.0, 1.0]).is_finite());
    }

    #[test]
    fn proto_basics() {
        assert_eq!(proto_inner_loss(&vec![vec![1.0, 2.0]; 3]).unwrap(), 0.0);
        let c = prototype(&[vec![0.0, 0.0], vec![3.0, 0.0], vec![0.0, 6.0]]);
        assert_eq!(c, vec![1.0, 2.0]);
    }
}

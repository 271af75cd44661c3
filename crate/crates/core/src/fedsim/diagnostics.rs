use serde::{Deserialize, Serialize};

use super::client::FedClient;
use super::server::{id_order, FedTrace};
use crate::episodes::seeds::{derive_seed, STREAM_PROBE};
use crate::error::{Error, Result};

/// Estimated smoothness, episode noise and client heterogeneity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssumptionConstants {
    pub lipschitz: f64,
    pub sigma2: f64,
    pub zeta2: f64,
    /// Standard error of `zeta2` across probe points (NaN with one probe).
    pub zeta2_stderr: f64,
    /// Expected `zeta2` of identical clients caused by finite sampling alone:
    /// `σ²(C−1)/(C·n)` for `n` draws per client.
    pub zeta2_bias_floor: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `L̂` is the largest client gradient difference quotient over probe pairs,
/// `σ̂²` the mean single-draw variance and `ζ̂²` the mean over probes of
/// `(1/C) Σ_c ‖∇F̂_c − ∇F̂‖²`.
pub fn estimate_assumption_constants<C: FedClient>(
    clients: &[C],
    probes: &[Vec<f64>],
    samples: usize,
    seed: u64,
) -> Result<AssumptionConstants> {
    if probes.len() < 2 {
        return Err(Error::invalid("probes", "need at least 2 probe points"));
    }
    if clients.is_empty() {
        return Err(Error::invalid("clients", "need at least one client"));
    }
    let n_clients = clients.len() as f64;
    let order = id_order(clients);
    // est[p][c], clients in id order
    let est = probes
        .iter()
        .enumerate()
        .map(|(p, theta)| {
            order
                .iter()
                .map(|&i| &clients[i])
                .map(|c| c.expected(theta, samples, derive_seed(seed, &[STREAM_PROBE, p as u64, c.client_id()])))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut lipschitz: f64 = 0.0;
    for p in 0..probes.len() {
        for q in p + 1..probes.len() {
            let dtheta = sq_dist(&probes[p], &probes[q]).sqrt();
            if dtheta == 0.0 {
                continue;
            }
            for c in 0..clients.len() {
                lipschitz = lipschitz.max(sq_dist(&est[p][c].grad, &est[q][c].grad).sqrt() / dtheta);
            }
        }
    }

    let sigma2 = est.iter().flatten().map(|e| e.variance).sum::<f64>() / (n_clients * probes.len() as f64);

    let per_probe: Vec<f64> = est
        .iter()
        .map(|row| {
            let dim = row[0].grad.len();
            let mean: Vec<f64> = (0..dim)
                .map(|j| row.iter().map(|e| e.grad[j]).sum::<f64>() / n_clients)
                .collect();
            row.iter().map(|e| sq_dist(&e.grad, &mean)).sum::<f64>() / n_clients
        })
        .collect();
    let (zeta2, zeta2_stderr) = crate::eval::mean_stderr(&per_probe);

    Ok(AssumptionConstants {
        lipschitz,
        sigma2,
        zeta2,
        zeta2_stderr,
        zeta2_bias_floor: sigma2 * (n_clients - 1.0) / (n_clients * samples.max(1) as f64),
    })
}

/// Empirical check of the nonconvex stationarity bound
/// `(1/R) Σ ‖∇F(θ^r)‖² ≤ 2(F(θ⁰) − F*)/(ηR) + Lη(σ²/|C_r| + ζ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub lhs: f64,
    pub rhs: f64,
    pub min_grad_norm_sq: f64,
    /// `η ≤ 1/L̂`.
    pub precondition_ok: bool,
    /// `None` when the precondition fails: the bound is not asserted then.
    pub satisfied: Option<bool>,
    pub f_star: f64,
    /// True when `F*` was not supplied and the smallest checkpoint loss
    /// stands in for it.
    pub f_star_estimated: bool,
}

pub fn convergence_report(
    trace: &FedTrace,
    constants: &AssumptionConstants,
    eta: f64,
    rounds: usize,
    f_star: Option<f64>,
) -> Result<ConvergenceReport> {
    let first = trace
        .checkpoints
        .first()
        .ok_or_else(|| Error::invalid("trace", "no checkpoints recorded"))?;
    if first.round != 0 {
        return Err(Error::invalid("trace", "first checkpoint must be at round 0"));
    }
    if rounds == 0 {
        return Err(Error::invalid("rounds", "must be >= 1"));
    }
    let (f_star, f_star_estimated) = match f_star {
        Some(f) => (f, false),
        None => (
            trace.checkpoints.iter().map(|c| c.loss).fold(f64::INFINITY, f64::min),
            true,
        ),
    };
    let lhs = trace.mean_grad_norm_sq();
    let k = trace.participation_size.max(1) as f64;
    let rhs = 2.0 * (first.loss - f_star) / (eta * rounds as f64)
        + constants.lipschitz * eta * (constants.sigma2 / k + constants.zeta2);
    let precondition_ok = eta * constants.lipschitz <= 1.0;
    Ok(ConvergenceReport {
        lhs,
        rhs,
        min_grad_norm_sq: trace.min_grad_norm_sq(),
        precondition_ok,
        satisfied: precondition_ok.then_some(lhs <= rhs),
        f_star,
        f_star_estimated,
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("points", "need at least 2 points"));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::invalid("points", "coordinates must be positive"));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "x values must not all be equal"));
    }
    Ok(sxy / sxx)
}

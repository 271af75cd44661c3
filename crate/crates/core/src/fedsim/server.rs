use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::client::{ClientUpdate, FedClient};
use super::diagnostics::AssumptionConstants;
use crate::episodes::seeds::{derive_seed, rng_for, STREAM_PARTICIPATION, STREAM_VAL};
use crate::error::{Error, Result};
use crate::metalearn::{mean_gradient, DIVERGENCE_LIMIT};

/// How many clients take part in each round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Participation {
    All,
    Count(usize),
    /// Rounded up, at least one client.
    Fraction(f64),
}

impl Participation {
    pub fn size(self, clients: usize) -> Result<usize> {
        let k = match self {
            Participation::All => clients,
            Participation::Count(k) => k,
            Participation::Fraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::invalid("participation", "fraction must be in (0, 1]"));
                }
                ((f * clients as f64).ceil() as usize).max(1)
            }
        };
        if k == 0 || k > clients {
            return Err(Error::invalid(
                "participation",
                format!("{k} participants out of {clients} clients"),
            ));
        }
        Ok(k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub rounds: usize,
    pub participation: Participation,
    /// Server step `η = γβ`.
    pub eta: f64,
    pub seed: u64,
    /// Estimate `F` and `‖∇F‖²` every this many rounds; 0 disables.
    pub checkpoint_every: usize,
    /// Draws per client at a checkpoint.
    pub checkpoint_samples: usize,
}

impl FedConfig {
    pub fn new(rounds: usize, eta: f64, seed: u64) -> Self {
        FedConfig {
            rounds,
            participation: Participation::All,
            eta,
            seed,
            checkpoint_every: 0,
            checkpoint_samples: 200,
        }
    }
}

/// Server-side record of one round. Nothing in it can hold client data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub round: usize,
    pub grad_norm: f64,
    pub mean_loss: f64,
    pub participants: Vec<u64>,
    /// SHA-256 of the parameters after the update.
    pub params_hash: String,
}

/// Estimated global loss and squared gradient norm at `θ^round`, before
/// that round's update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub round: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedTrace {
    pub rounds: Vec<RoundRecord>,
    pub checkpoints: Vec<Checkpoint>,
    pub participation_size: usize,
    pub constants: Option<AssumptionConstants>,
}

impl FedTrace {
    pub fn min_grad_norm_sq(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.grad_norm_sq).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_grad_norm_sq(&self) -> f64 {
        let n = self.checkpoints.len() as f64;
        self.checkpoints.iter().map(|c| c.grad_norm_sq).sum::<f64>() / n
    }
}

pub fn params_hash(params: &[f64]) -> String {
    let mut h = Sha256::new();
    for p in params {
        h.update(p.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// `θ − η·mean(grads)`, with the mean taken in list order.
pub fn aggregate(grads: &[Vec<f64>], eta: f64, params: &[f64]) -> Result<Vec<f64>> {
    if grads.is_empty() {
        return Err(Error::invalid("participation", "no client gradients to aggregate"));
    }
    let g = mean_gradient(grads)?;
    if g.len() != params.len() {
        return Err(Error::DimensionMismatch {
            context: "aggregated gradient",
            expected: params.len(),
            got: g.len(),
        });
    }
    let mut next = params.to_vec();
    for (p, v) in next.iter_mut().zip(&g) {
        *p -= eta * v;
    }
    Ok(next)
}

/// Positions of `clients` ordered by client id. Every reduction over
/// clients runs in this order so the slice order never matters.
pub fn id_order<C: FedClient>(clients: &[C]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.sort_by_key(|&i| clients[i].client_id());
    order
}

/// Sorted ranks, in client-id order, of the clients taking part in `round`.
pub fn participants(n_clients: usize, k: usize, seed: u64, round: usize) -> Vec<usize> {
    if k >= n_clients {
        return (0..n_clients).collect();
    }
    let mut rng = rng_for(seed, &[STREAM_PARTICIPATION, round as u64]);
    let mut idx = sample(&mut rng, n_clients, k).into_vec();
    idx.sort_unstable();
    idx
}

/// Global loss and squared gradient norm, averaging client expectations.
pub fn global_estimate<C: FedClient>(
    clients: &[C],
    params: &[f64],
    samples: usize,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let ests = id_order(clients)
        .into_iter()
        .map(|i| &clients[i])
        .map(|c| c.expected(params, samples, derive_seed(seed, &[c.client_id()])))
        .collect::<Result<Vec<_>>>()?;
    let loss = ests.iter().map(|e| e.loss).sum::<f64>() / ests.len() as f64;
    let grads: Vec<Vec<f64>> = ests.into_iter().map(|e| e.grad).collect();
    Ok((loss, mean_gradient(&grads)?))
}

fn check_update(round: usize, update: &ClientUpdate) -> Result<()> {
    let finite = update.loss.is_finite() && update.grad.iter().all(|g| g.is_finite());
    if !finite || update.loss > DIVERGENCE_LIMIT {
        return Err(Error::Divergence {
            step: round,
            loss: update.loss,
        });
    }
    Ok(())
}

/// Runs `cfg.rounds` rounds: sample participants, broadcast, collect one
/// gradient per participant in parallel, aggregate in client-id order.
pub fn run_federated<C: FedClient>(
    clients: &mut [C],
    init: &[f64],
    cfg: &FedConfig,
) -> Result<(Vec<f64>, FedTrace)> {
    if clients.is_empty() {
        return Err(Error::invalid("clients", "need at least one client"));
    }
    if !(cfg.eta > 0.0 && cfg.eta.is_finite()) {
        return Err(Error::invalid("eta", "must be positive and finite"));
    }
    let k = cfg.participation.size(clients.len())?;
    let mut params = init.to_vec();
    let mut trace = FedTrace {
        participation_size: k,
        ..FedTrace::default()
    };

    for round in 0..cfg.rounds {
        if cfg.checkpoint_every > 0 && round % cfg.checkpoint_every == 0 {
            trace.checkpoints.push(checkpoint(clients, &params, cfg, round)?);
        }
        let order = id_order(clients);
        let chosen: Vec<usize> = participants(clients.len(), k, cfg.seed, round)
            .into_iter()
            .map(|rank| order[rank])
            .collect();
        let jobs: Vec<(u64, u64, &C)> = {
            let mut jobs = Vec::with_capacity(k);
            for (i, c) in clients.iter_mut().enumerate() {
                if chosen.contains(&i) {
                    let seed = c.next_seed();
                    jobs.push((c.client_id(), seed, &*c));
                }
            }
            jobs
        };
        let mut updates = jobs
            .par_iter()
            .map(|&(id, seed, c)| {
                let (loss, grad) = c.sample(&params, seed).map_err(|e| match e {
                    Error::NonFinite(_) => Error::Divergence { step: round, loss: f64::NAN },
                    e => e,
                })?;
                Ok(ClientUpdate { client_id: id, loss, grad })
            })
            .collect::<Result<Vec<_>>>()?;
        updates.sort_by_key(|u| u.client_id);
        for u in &updates {
            check_update(round, u)?;
        }
        let grads: Vec<Vec<f64>> = updates.iter().map(|u| u.grad.clone()).collect();
        let gbar = mean_gradient(&grads)?;
        params = aggregate(&grads, cfg.eta, &params)?;
        trace.rounds.push(RoundRecord {
            round,
            grad_norm: gbar.iter().map(|v| v * v).sum::<f64>().sqrt(),
            mean_loss: updates.iter().map(|u| u.loss).sum::<f64>() / updates.len() as f64,
            participants: updates.iter().map(|u| u.client_id).collect(),
            params_hash: params_hash(&params),
        });
    }
    Ok((params, trace))
}

fn checkpoint<C: FedClient>(clients: &[C], params: &[f64], cfg: &FedConfig, round: usize) -> Result<Checkpoint> {
    let seed = derive_seed(cfg.seed, &[STREAM_VAL, round as u64]);
    let (loss, grad) = global_estimate(clients, params, cfg.checkpoint_samples, seed)?;
    Ok(Checkpoint {
        round,
        loss,
        grad_norm_sq: grad.iter().map(|g| g * g).sum(),
    })
}

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::episodes::seeds::{derive_seed, rng_for, STREAM_TRAIN};
use crate::episodes::{Split, TaskFamily, TaskSpec};
use crate::error::{Error, Result};
use crate::metalearn::{guard, train_episode_seed, MetaMethod};

/// What a client sends back after one round. Only the gradient and a scalar
/// loss leave the client.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u64,
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Monte-Carlo (or exact) estimate of a client's expected loss and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// `E‖g − ∇F_c‖²` of a single draw.
    pub variance: f64,
}

/// A federated participant. `sample` must be a pure function of its
/// arguments; the client's private state only decides which seed comes next.
pub trait FedClient: Send + Sync {
    fn client_id(&self) -> u64;

    /// Seed of the next local draw; advances the client's counter.
    fn next_seed(&mut self) -> u64;

    /// Loss and gradient of one stochastic draw.
    fn sample(&self, params: &[f64], seed: u64) -> Result<(f64, Vec<f64>)>;

    /// Average of `samples` draws keyed by `seed`.
    fn expected(&self, params: &[f64], samples: usize, seed: u64) -> Result<GradientEstimate> {
        monte_carlo(self, params, samples, seed)
    }
}

fn monte_carlo<C: FedClient + ?Sized>(
    client: &C,
    params: &[f64],
    samples: usize,
    seed: u64,
) -> Result<GradientEstimate> {
    if samples == 0 {
        return Err(Error::invalid("samples", "need at least one draw"));
    }
    let draws = (0..samples as u64)
        .into_par_iter()
        .map(|i| client.sample(params, derive_seed(seed, &[i])))
        .collect::<Result<Vec<_>>>()?;
    let n = samples as f64;
    let loss = draws.iter().map(|d| d.0).sum::<f64>() / n;
    let mut grad = vec![0.0; params.len()];
    for (_, g) in &draws {
        for (a, v) in grad.iter_mut().zip(g) {
            *a += v;
        }
    }
    grad.iter_mut().for_each(|a| *a /= n);
    let variance = if samples < 2 {
        0.0
    } else {
        draws
            .iter()
            .map(|(_, g)| g.iter().zip(&grad).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / (n - 1.0)
    };
    Ok(GradientEstimate { loss, grad, variance })
}

/// Local state of an episodic client. The task never leaves the client.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: u64,
    pub task_spec: TaskSpec,
    pub rng_seed: u64,
    pub episode_counter: u64,
}

impl ClientState {
    /// Seed of the next episode; centralized training uses the same seed for
    /// the same task and counter.
    pub fn next_seed(&mut self) -> u64 {
        let s = train_episode_seed(self.rng_seed, self.client_id, self.episode_counter);
        self.episode_counter += 1;
        s
    }
}

/// One meta-gradient on a fresh episode from the client's task.
pub fn client_round<M: MetaMethod>(
    method: &M,
    family: &TaskFamily,
    params: &[f64],
    state: &mut ClientState,
) -> Result<ClientUpdate> {
    let step = state.episode_counter as usize;
    let seed = state.next_seed();
    let ep = family.episode(&state.task_spec, Split::Train, seed)?;
    let mg = guard(step, method.meta_gradient(params, &ep))?;
    Ok(ClientUpdate {
        client_id: state.client_id,
        loss: mg.loss,
        grad: mg.grad,
    })
}

/// A client training a meta-learning method on its own task.
pub struct EpisodicClient<'a, M> {
    pub method: &'a M,
    pub family: &'a TaskFamily,
    pub state: ClientState,
}

impl<M: MetaMethod> FedClient for EpisodicClient<'_, M> {
    fn client_id(&self) -> u64 {
        self.state.client_id
    }

    fn next_seed(&mut self) -> u64 {
        self.state.next_seed()
    }

    fn sample(&self, params: &[f64], seed: u64) -> Result<(f64, Vec<f64>)> {
        let ep = self.family.episode(&self.state.task_spec, Split::Train, seed)?;
        let mg = self.method.meta_gradient(params, &ep)?;
        Ok((mg.loss, mg.grad))
    }
}

/// One client per task of the family's pool; client `c` owns task `c`.
pub fn episodic_clients<'a, M: MetaMethod>(
    method: &'a M,
    family: &'a TaskFamily,
    run_seed: u64,
) -> Result<Vec<EpisodicClient<'a, M>>> {
    Ok(family
        .tasks()?
        .into_iter()
        .enumerate()
        .map(|(c, task_spec)| EpisodicClient {
            method,
            family,
            state: ClientState {
                client_id: c as u64,
                task_spec,
                rng_seed: run_seed,
                episode_counter: 0,
            },
        })
        .collect())
}

/// `F_c(θ) = ½‖θ − a_c‖²` observed through `∇F_c(θ) + σ·ξ`, `ξ ~ N(0, I)`.
/// Smoothness constant 1, per-draw noise `E‖σξ‖² = d·σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticClient {
    pub client_id: u64,
    pub target: Vec<f64>,
    pub noise: f64,
    pub rng_seed: u64,
    pub counter: u64,
}

impl QuadraticClient {
    pub fn new(client_id: u64, target: Vec<f64>, noise: f64, rng_seed: u64) -> Self {
        QuadraticClient {
            client_id,
            target,
            noise,
            rng_seed,
            counter: 0,
        }
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        0.5 * params.iter().zip(&self.target).map(|(p, a)| (p - a) * (p - a)).sum::<f64>()
    }

    pub fn exact_grad(&self, params: &[f64]) -> Vec<f64> {
        params.iter().zip(&self.target).map(|(p, a)| p - a).collect()
    }
}

impl FedClient for QuadraticClient {
    fn client_id(&self) -> u64 {
        self.client_id
    }

    fn next_seed(&mut self) -> u64 {
        let s = derive_seed(self.rng_seed, &[STREAM_TRAIN, self.client_id, self.counter]);
        self.counter += 1;
        s
    }

    fn sample(&self, params: &[f64], seed: u64) -> Result<(f64, Vec<f64>)> {
        if params.len() != self.target.len() {
            return Err(Error::DimensionMismatch {
                context: "quadratic client",
                expected: self.target.len(),
                got: params.len(),
            });
        }
        let mut rng = rng_for(seed, &[]);
        let grad = self
            .exact_grad(params)
            .into_iter()
            .map(|g| {
                let xi: f64 = rng.sample(StandardNormal);
                g + self.noise * xi
            })
            .collect();
        Ok((self.loss(params), grad))
    }

    fn expected(&self, params: &[f64], _samples: usize, _seed: u64) -> Result<GradientEstimate> {
        Ok(GradientEstimate {
            loss: self.loss(params),
            grad: self.exact_grad(params),
            variance: self.target.len() as f64 * self.noise * self.noise,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_draws_are_seeded() {
        let mut c = QuadraticClient::new(3, vec![1.0, -1.0], 0.5, 42);
        let s = c.next_seed();
        assert_ne!(s, c.next_seed());
        let a = c.sample(&[0.0, 0.0], s).unwrap();
        assert_eq!(a, c.sample(&[0.0, 0.0], s).unwrap());
        assert_eq!(a.0, 1.0);
    }

    #[test]
    fn zero_noise_draw_is_the_exact_gradient() {
        let c = QuadraticClient::new(0, vec![2.0, 0.5], 0.0, 1);
        let (_, g) = c.sample(&[1.0, 1.0], 9).unwrap();
        assert_eq!(g, vec![-1.0, 0.5]);
        let est = monte_carlo(&c, &[1.0, 1.0], 5, 3).unwrap();
        assert_eq!(est.variance, 0.0);
    }
}

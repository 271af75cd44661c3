use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::methods::{HyperParams, MetaMethod, Optimizer, Scorer};
use crate::diffnet::MetaGradient;
use crate::episodes::seeds::{derive_seed, STREAM_TASK, STREAM_TEST, STREAM_TRAIN, STREAM_VAL};
use crate::episodes::{Episode, Split, TaskFamily, TaskSpec};
use crate::error::{Error, Result};
use crate::eval::{EpisodeScores, ScoreReport};

/// Losses above this abort training.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    pub train: Vec<f64>,
    pub val: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: Vec<f64>,
    pub trace: LossTrace,
}

/// Plain descent or Adam on the meta-parameters.
#[derive(Debug, Clone)]
pub struct OuterOptimizer {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OuterOptimizer {
    pub fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        OuterOptimizer {
            kind,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                self.t += 1;
                let c1 = 1.0 - B1.powi(self.t);
                let c2 = 1.0 - B2.powi(self.t);
                for i in 0..params.len() {
                    self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
                    self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    params[i] -= self.lr * mh / (vh.sqrt() + EPS);
                }
            }
        }
    }
}

/// Arithmetic mean in list order.
pub fn mean_gradient(grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = grads
        .first()
        .ok_or_else(|| Error::invalid("gradients", "empty gradient list"))?;
    let mut sum = vec![0.0; first.len()];
    for g in grads {
        if g.len() != sum.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient list",
                expected: sum.len(),
                got: g.len(),
            });
        }
        for (s, v) in sum.iter_mut().zip(g) {
            *s += v;
        }
    }
    let n = grads.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// Maps non-finite or exploding losses to a divergence error.
pub fn guard(step: usize, result: Result<MetaGradient>) -> Result<MetaGradient> {
    match result {
        Ok(mg) if mg.loss.is_finite() && mg.loss <= DIVERGENCE_LIMIT => Ok(mg),
        Ok(mg) => Err(Error::Divergence { step, loss: mg.loss }),
        Err(Error::NonFinite(_)) => Err(Error::Divergence { step, loss: f64::NAN }),
        Err(e) => Err(e),
    }
}

/// Seed of the `counter`-th training episode of task `task_id`.
pub fn train_episode_seed(run_seed: u64, task_id: u64, counter: u64) -> u64 {
    derive_seed(run_seed, &[STREAM_TRAIN, task_id, counter])
}

fn pick(seed: u64, n: usize) -> usize {
    (seed % n as u64) as usize
}

/// Mean validation loss over `count` episodes drawn for `epoch`.
pub fn validation_loss<M: MetaMethod>(
    method: &M,
    family: &TaskFamily,
    tasks: &[TaskSpec],
    params: &[f64],
    count: usize,
    run_seed: u64,
    epoch: u64,
) -> Result<f64> {
    if count == 0 {
        return Ok(f64::NAN);
    }
    let losses = (0..count as u64)
        .into_par_iter()
        .map(|j| {
            let s = derive_seed(run_seed, &[STREAM_VAL, epoch, j]);
            let ep = family.episode(&tasks[pick(s, tasks.len())], Split::Validation, s)?;
            method.episode_loss(params, &ep)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / count as f64)
}

/// Episodic meta-training over the family's task pool.
///
/// Episode `j` uses task `derive(seed, [task, j]) mod n` and episode seed
/// `train_episode_seed(seed, task, j)`. Each outer step averages the
/// meta-gradients of `meta_batch` consecutive episodes.
pub fn train_centralized<M: MetaMethod>(
    method: &M,
    family: &TaskFamily,
    init: &[f64],
    hp: &HyperParams,
    seed: u64,
) -> Result<TrainOutcome> {
    train_centralized_with(method, family, init, hp, seed, |_, _| {})
}

/// As [`train_centralized`], calling `on_step(step, params)` after every
/// outer update.
pub fn train_centralized_with<M: MetaMethod>(
    method: &M,
    family: &TaskFamily,
    init: &[f64],
    hp: &HyperParams,
    seed: u64,
    mut on_step: impl FnMut(usize, &[f64]),
) -> Result<TrainOutcome> {
    hp.validate()?;
    let tasks = family.tasks()?;
    let mut params = init.to_vec();
    let mut opt = OuterOptimizer::new(hp.optimizer, hp.beta, params.len());
    let mut trace = LossTrace::default();
    let mut counter: u64 = 0;
    let mut step = 0usize;

    for epoch in 0..hp.epochs {
        let mut epoch_losses = Vec::with_capacity(hp.episodes_per_epoch);
        let mut remaining = hp.episodes_per_epoch;
        while remaining > 0 {
            let b = remaining.min(hp.meta_batch);
            let batch: Vec<u64> = (counter..counter + b as u64).collect();
            let results: Vec<MetaGradient> = batch
                .par_iter()
                .map(|&j| {
                    let task_id = pick(derive_seed(seed, &[STREAM_TASK, j]), tasks.len());
                    let ep = family.episode(
                        &tasks[task_id],
                        Split::Train,
                        train_episode_seed(seed, task_id as u64, j),
                    )?;
                    guard(step, method.meta_gradient(&params, &ep))
                })
                .collect::<Result<Vec<_>>>()?;
            let grads: Vec<Vec<f64>> = results.iter().map(|r| r.grad.clone()).collect();
            opt.step(&mut params, &mean_gradient(&grads)?);
            on_step(step, &params);
            epoch_losses.extend(results.iter().map(|r| r.loss));
            counter += b as u64;
            remaining -= b;
            step += 1;
        }
        trace
            .train
            .push(epoch_losses.iter().sum::<f64>() / epoch_losses.len().max(1) as f64);
        trace.val.push(validation_loss(
            method,
            family,
            &tasks,
            &params,
            hp.val_episodes,
            seed,
            epoch as u64,
        )?);
    }
    Ok(TrainOutcome { params, trace })
}

/// The `j`-th test episode of a run.
pub fn test_episode(family: &TaskFamily, tasks: &[TaskSpec], run_seed: u64, j: u64) -> Result<Episode> {
    let s = derive_seed(run_seed, &[STREAM_TEST, j]);
    family.episode(&tasks[pick(s, tasks.len())], Split::Test, s)
}

/// Scores `count` held-out-kind test episodes.
pub fn score_test_episodes<S: Scorer + ?Sized>(
    scorer: &S,
    family: &TaskFamily,
    params: &[f64],
    count: usize,
    run_seed: u64,
) -> Result<Vec<EpisodeScores>> {
    let tasks = family.tasks()?;
    (0..count as u64)
        .into_par_iter()
        .map(|j| {
            let ep = test_episode(family, &tasks, run_seed, j)?;
            Ok(EpisodeScores {
                scores: scorer.scores(params, &ep.support, &ep.query_inputs())?,
                labels: ep.labels(),
            })
        })
        .collect()
}

pub fn evaluate<S: Scorer + ?Sized>(
    scorer: &S,
    family: &TaskFamily,
    params: &[f64],
    count: usize,
    run_seed: u64,
    pooled: bool,
) -> Result<ScoreReport> {
    let eps = score_test_episodes(scorer, family, params, count, run_seed)?;
    ScoreReport::from_episodes(&eps, pooled)
}

/// Scores of the true generative likelihood ratio on the same test episodes;
/// the best any detector can do.
pub fn bayes_optimal_report(family: &TaskFamily, count: usize, run_seed: u64) -> Result<ScoreReport> {
    let tasks = family.tasks()?;
    let eps = (0..count as u64)
        .map(|j| {
            let s = derive_seed(run_seed, &[STREAM_TEST, j]);
            let task = tasks[pick(s, tasks.len())].with_kind(family.heldout);
            let ep = test_episode(family, &tasks, run_seed, j)?;
            Ok(EpisodeScores {
                scores: ep.query.iter().map(|(x, _)| task.log_likelihood_ratio(x)).collect(),
                labels: ep.labels(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    ScoreReport::from_episodes(&eps, false)
}

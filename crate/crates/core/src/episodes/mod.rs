//! Synthetic task distribution and episodic sampling.
//!
//! A family is a pool of Gaussian "normal" tasks in input space that share a
//! base mean, covariance and anomaly direction; each task perturbs the base by
//! an offset proportional to the heterogeneity level. Anomalies come in three
//! kinds whose exact likelihood ratio against the normal component is known,
//! which gives a Bayes-optimal reference for detection quality.

pub mod seeds;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bayescore::linalg::{cholesky, forward_solve};
use crate::error::{Error, Result};
use crate::special::ln_gamma;
use seeds::{derive_seed, STREAM_TASK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    MeanShift,
    CovInflation,
    HeavyTail,
}

impl AnomalyKind {
    pub const ALL: [AnomalyKind; 3] = [
        AnomalyKind::MeanShift,
        AnomalyKind::CovInflation,
        AnomalyKind::HeavyTail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnomalyKind::MeanShift => "mean_shift",
            AnomalyKind::CovInflation => "cov_inflation",
            AnomalyKind::HeavyTail => "heavy_tail",
        }
    }
}

/// Kind-specific anomaly parameters. Only the fields of the active kind matter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyParams {
    /// Mean-shift length in Mahalanobis units of the normal covariance.
    pub shift: f64,
    /// Unit shift direction in whitened coordinates.
    pub direction: Vec<f64>,
    /// Covariance inflation factor, > 1.
    pub inflation: f64,
    /// Degrees of freedom of the heavy-tailed generator.
    pub tail_dof: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub normal_mean: Vec<f64>,
    /// Row-major, SPD.
    pub normal_cov: Vec<f64>,
    pub anomaly_kind: AnomalyKind,
    pub anomaly_params: AnomalyParams,
    pub task_seed: u64,
    normal_chol: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeCounts {
    pub k: usize,
    pub q_n: usize,
    pub q_a: usize,
}

impl Default for EpisodeCounts {
    fn default() -> Self {
        EpisodeCounts {
            k: 5,
            q_n: 12,
            q_a: 4,
        }
    }
}

impl EpisodeCounts {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("tasks.counts.k", "support size must be >= 1"));
        }
        if self.q_n == 0 {
            return Err(Error::invalid("tasks.counts.q_n", "need at least one normal query"));
        }
        Ok(())
    }
}

/// Support of normals plus a labeled query (label 1 = anomalous).
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub support: Vec<Vec<f64>>,
    pub query: Vec<(Vec<f64>, u8)>,
    pub counts: EpisodeCounts,
}

impl Episode {
    pub fn query_inputs(&self) -> Vec<Vec<f64>> {
        self.query.iter().map(|(x, _)| x.clone()).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.query.iter().map(|&(_, y)| y).collect()
    }
}

impl TaskSpec {
    pub fn new(
        normal_mean: Vec<f64>,
        normal_cov: Vec<f64>,
        anomaly_kind: AnomalyKind,
        anomaly_params: AnomalyParams,
        task_seed: u64,
    ) -> Result<Self> {
        let n = normal_mean.len();
        if normal_cov.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "task covariance",
                expected: n * n,
                got: normal_cov.len(),
            });
        }
        if anomaly_params.direction.len() != n {
            return Err(Error::DimensionMismatch {
                context: "anomaly direction",
                expected: n,
                got: anomaly_params.direction.len(),
            });
        }
        let p = &anomaly_params;
        let unit: f64 = p.direction.iter().map(|v| v * v).sum();
        if !(p.shift > 0.0) || (unit - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("tasks.shift", "need shift > 0 along a unit direction"));
        }
        if !(p.inflation > 1.0) || !p.inflation.is_finite() {
            return Err(Error::invalid("tasks.inflation", "must be > 1"));
        }
        if !(p.tail_dof > 0.0) || !p.tail_dof.is_finite() {
            return Err(Error::invalid("tasks.tail_dof", "must be > 0"));
        }
        let normal_chol =
            cholesky(&normal_cov, n).ok_or(Error::NotPositiveDefinite("task covariance"))?;
        Ok(TaskSpec {
            normal_mean,
            normal_cov,
            anomaly_kind,
            anomaly_params,
            task_seed,
            normal_chol,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.normal_mean.len()
    }

    pub fn with_kind(&self, kind: AnomalyKind) -> TaskSpec {
        TaskSpec {
            anomaly_kind: kind,
            ..self.clone()
        }
    }

    /// `μ + L w` for whitened `w`.
    fn colour(&self, w: &[f64]) -> Vec<f64> {
        let n = self.input_dim();
        (0..n)
            .map(|i| {
                let row = &self.normal_chol[i * n..i * n + i + 1];
                self.normal_mean[i] + row.iter().zip(w).map(|(l, v)| l * v).sum::<f64>()
            })
            .collect()
    }

    fn standard_normal(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.input_dim()).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn sample_normal(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let w = self.standard_normal(rng);
        self.colour(&w)
    }

    pub fn sample_anomaly(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let p = &self.anomaly_params;
        let mut w = self.standard_normal(rng);
        match self.anomaly_kind {
            AnomalyKind::MeanShift => {
                for (v, u) in w.iter_mut().zip(&p.direction) {
                    *v += p.shift * u;
                }
            }
            AnomalyKind::CovInflation => {
                let s = p.inflation.sqrt();
                w.iter_mut().for_each(|v| *v *= s);
            }
            AnomalyKind::HeavyTail => {
                let chi = ChiSquared::new(p.tail_dof).expect("validated dof");
                let g: f64 = chi.sample(rng);
                let s = (p.tail_dof / g).sqrt();
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
        self.colour(&w)
    }

    /// Exact `log p_anomaly(x) − log p_normal(x)` under the generative model.
    pub fn log_likelihood_ratio(&self, x: &[f64]) -> f64 {
        let n = self.input_dim();
        let diff: Vec<f64> = x.iter().zip(&self.normal_mean).map(|(a, m)| a - m).collect();
        let y = forward_solve(&self.normal_chol, &diff, n);
        let r2: f64 = y.iter().map(|v| v * v).sum();
        let p = &self.anomaly_params;
        let nf = n as f64;
        match self.anomaly_kind {
            AnomalyKind::MeanShift => {
                let proj: f64 = y.iter().zip(&p.direction).map(|(a, u)| a * u).sum();
                p.shift * proj - 0.5 * p.shift * p.shift
            }
            AnomalyKind::CovInflation => {
                0.5 * r2 * (1.0 - 1.0 / p.inflation) - 0.5 * nf * p.inflation.ln()
            }
            AnomalyKind::HeavyTail => {
                let nu = p.tail_dof;
                let log_t = ln_gamma((nu + nf) / 2.0)
                    - ln_gamma(nu / 2.0)
                    - 0.5 * nf * (nu * std::f64::consts::PI).ln()
                    - 0.5 * (nu + nf) * (r2 / nu).ln_1p();
                let log_g = -0.5 * r2 - 0.5 * nf * (2.0 * std::f64::consts::PI).ln();
                log_t - log_g
            }
        }
    }
}

/// Draws one episode from `task` using only `seed`.
pub fn sample_episode(task: &TaskSpec, counts: EpisodeCounts, seed: u64) -> Result<Episode> {
    counts.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let support = (0..counts.k).map(|_| task.sample_normal(&mut rng)).collect();
    let mut query: Vec<(Vec<f64>, u8)> = Vec::with_capacity(counts.q_n + counts.q_a);
    for _ in 0..counts.q_n {
        query.push((task.sample_normal(&mut rng), 0));
    }
    for _ in 0..counts.q_a {
        query.push((task.sample_anomaly(&mut rng), 1));
    }
    query.shuffle(&mut rng);
    Ok(Episode {
        support,
        query,
        counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// A pool of related tasks with a held-out anomaly kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskFamily {
    pub family_seed: u64,
    pub input_dim: usize,
    /// Number of tasks in the pool; in federated runs, one per client.
    pub num_tasks: usize,
    /// Per-task perturbation scale `h`; 0 makes every task identical.
    pub heterogeneity: f64,
    /// Standard deviation of the base mean coordinates.
    pub mean_scale: f64,
    /// Scale of the random part `A Aᵀ/n` of the covariance.
    pub cov_scale: f64,
    /// Isotropic floor added to the random covariance.
    pub cov_floor: f64,
    pub shift: f64,
    pub inflation: f64,
    pub tail_dof: f64,
    /// Test episodes use only this kind; training and validation use the rest.
    pub heldout: AnomalyKind,
    pub counts: EpisodeCounts,
}

impl Default for TaskFamily {
    fn default() -> Self {
        TaskFamily {
            family_seed: 7,
            input_dim: 16,
            num_tasks: 8,
            heterogeneity: 1.0,
            mean_scale: 1.0,
            cov_scale: 1.0,
            cov_floor: 0.5,
            shift: 4.0,
            inflation: 4.0,
            tail_dof: 2.0,
            heldout: AnomalyKind::MeanShift,
            counts: EpisodeCounts::default(),
        }
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.into_iter().map(|a| a / norm).collect()
}

impl TaskFamily {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("tasks.input_dim", "must be >= 1"));
        }
        if self.num_tasks == 0 {
            return Err(Error::invalid("tasks.num_tasks", "must be >= 1"));
        }
        if !(self.heterogeneity >= 0.0) || !self.heterogeneity.is_finite() {
            return Err(Error::invalid("tasks.heterogeneity", "must be finite and >= 0"));
        }
        if !(self.mean_scale >= 0.0) || !(self.cov_scale >= 0.0) || !(self.cov_floor > 0.0) {
            return Err(Error::invalid(
                "tasks.cov_floor",
                "need mean_scale >= 0, cov_scale >= 0 and cov_floor > 0",
            ));
        }
        self.counts.validate()?;
        self.gen_task(0).map(|_| ())
    }

    pub fn training_kinds(&self) -> Vec<AnomalyKind> {
        AnomalyKind::ALL
            .into_iter()
            .filter(|&k| k != self.heldout)
            .collect()
    }

    /// Task `client_id` of the family, with the held-out anomaly kind.
    ///
    /// The base mean, covariance and direction depend only on `family_seed`;
    /// the task offset `h·o_c` and direction tilt `h·r_c` depend on
    /// `client_id`, so tasks coincide when `h = 0` and their dispersion is
    /// linear in `h`.
    pub fn gen_task(&self, client_id: u64) -> Result<TaskSpec> {
        let n = self.input_dim;
        let mut base = ChaCha8Rng::seed_from_u64(derive_seed(self.family_seed, &[STREAM_TASK]));
        let base_mean: Vec<f64> = gaussian_vec(&mut base, n)
            .into_iter()
            .map(|v| v * self.mean_scale)
            .collect();
        let a = gaussian_vec(&mut base, n * n);
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| a[i * n + k] * a[j * n + k]).sum();
                cov[i * n + j] = self.cov_scale * dot / n as f64 + if i == j { self.cov_floor } else { 0.0 };
            }
        }
        let base_dir = normalized(gaussian_vec(&mut base, n));

        let mut client = ChaCha8Rng::seed_from_u64(derive_seed(
            self.family_seed,
            &[STREAM_TASK, 1 + client_id],
        ));
        let offset = gaussian_vec(&mut client, n);
        let tilt = normalized(gaussian_vec(&mut client, n));
        let h = self.heterogeneity;
        let mean = base_mean.iter().zip(&offset).map(|(m, o)| m + h * o).collect();
        let direction = normalized(base_dir.iter().zip(&tilt).map(|(b, t)| b + h * t).collect());

        TaskSpec::new(
            mean,
            cov,
            self.heldout,
            AnomalyParams {
                shift: self.shift,
                direction,
                inflation: self.inflation,
                tail_dof: self.tail_dof,
            },
            self.family_seed,
        )
    }

    pub fn tasks(&self) -> Result<Vec<TaskSpec>> {
        (0..self.num_tasks as u64).map(|c| self.gen_task(c)).collect()
    }

    /// Episode of `task` for the given split. Train and validation episodes
    /// pick their anomaly kind uniformly among the training kinds.
    pub fn episode(&self, task: &TaskSpec, split: Split, seed: u64) -> Result<Episode> {
        let kind = match split {
            Split::Test => self.heldout,
            Split::Train | Split::Validation => {
                let kinds = self.training_kinds();
                kinds[(derive_seed(seed, &[0]) % kinds.len() as u64) as usize]
            }
        };
        sample_episode(&task.with_kind(kind), self.counts, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_limit_gives_identical_tasks() {
        let fam = TaskFamily {
            heterogeneity: 0.0,
            ..TaskFamily::default()
        };
        let t0 = fam.gen_task(0).unwrap();
        for c in 1..5 {
            assert_eq!(fam.gen_task(c).unwrap(), t0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let fam = TaskFamily::default();
        assert_eq!(fam.gen_task(3).unwrap(), fam.gen_task(3).unwrap());
        assert_ne!(fam.gen_task(3).unwrap(), fam.gen_task(4).unwrap());
    }

    #[test]
    fn episode_counts_and_labels() {
        let fam = TaskFamily::default();
        let task = fam.gen_task(0).unwrap();
        let ep = sample_episode(&task, EpisodeCounts::default(), 9).unwrap();
        assert_eq!(ep.support.len(), 5);
        assert_eq!(ep.labels().iter().filter(|&&y| y == 1).count(), 4);
        assert_eq!(ep.labels().iter().filter(|&&y| y == 0).count(), 12);
        let none = EpisodeCounts { k: 2, q_n: 3, q_a: 0 };
        assert!(sample_episode(&task, none, 1).unwrap().labels().iter().all(|&y| y == 0));
        assert!(sample_episode(&task, EpisodeCounts { k: 0, q_n: 1, q_a: 0 }, 1).is_err());
    }

    #[test]
    fn splits_respect_heldout_kind() {
        let fam = TaskFamily::default();
        assert_eq!(
            fam.training_kinds(),
            vec![AnomalyKind::CovInflation, AnomalyKind::HeavyTail]
        );
        let task = fam.gen_task(0).unwrap();
        // Test episodes equal a direct draw with the held-out kind.
        let a = fam.episode(&task, Split::Test, 5).unwrap();
        let b = sample_episode(&task.with_kind(AnomalyKind::MeanShift), fam.counts, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_shift_ratio_is_linear_in_whitened_projection() {
        let fam = TaskFamily::default();
        let task = fam.gen_task(2).unwrap();
        // At the normal mean the log ratio is −s²/2.
        let at_mean = task.log_likelihood_ratio(&task.normal_mean);
        assert!((at_mean + 8.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_anomaly_params_are_rejected() {
        let fam = TaskFamily {
            inflation: 1.0,
            ..TaskFamily::default()
        };
        assert!(fam.gen_task(0).is_err());
    }
}

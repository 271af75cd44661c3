//! Property checks run by `baymeta checks`: predictive well-posedness in the
//! few-shot regime, posterior scale bounds, Student-t curvature bounds,
//! density normalization and meta-gradient correctness.

use baymeta_core::bayescore::{
    hessian_bound_check, niw_posterior, wellposedness_check, AnomalyReference, NiwPrior, StudentT,
};
use baymeta_core::diffnet::EmbeddingNet;
use baymeta_core::episodes::seeds::rng_for;
use baymeta_core::episodes::{EpisodeCounts, Split, TaskFamily};
use baymeta_core::metalearn::{BayesMethod, HyperParams, MetaMethod};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const META_GRAD_TOL: f64 = 1e-4;
pub const NORMALIZATION_TOL: f64 = 1e-6;
/// Denominator floor for the meta-gradient comparison. Saturated episodes
/// have gradients near 1e-6 where finite differences are roundoff-bound.
pub const GRAD_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub cases: usize,
    pub failures: usize,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(check: &str, cases: usize, failures: usize, detail: String) -> Self {
        CheckResult {
            check: check.to_string(),
            cases,
            failures,
            passed: failures == 0 && cases > 0,
            detail,
        }
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random SPD matrix `B Bᵀ/d + floor·I`.
fn random_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Vec<f64> {
    let b: Vec<f64> = (0..d * d).map(|_| gauss(rng)).collect();
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let s: f64 = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum();
            m[i * d + j] = s / d as f64 + if i == j { floor } else { 0.0 };
        }
    }
    m
}

fn random_case(rng: &mut ChaCha8Rng, d: usize, k: usize) -> Result<(NiwPrior, Vec<Vec<f64>>), CliError> {
    let mu0: Vec<f64> = (0..d).map(|_| gauss(rng)).collect();
    let kappa0 = rng.random_range(0.01..2.0);
    let lambda0 = random_spd(rng, d, 0.1);
    let nu0 = d as f64 - 1.0 + rng.random_range(0.1..5.0);
    let prior = NiwPrior::new(mu0, kappa0, lambda0, nu0)?;
    let support = (0..k).map(|_| (0..d).map(|_| 2.0 * gauss(rng)).collect()).collect();
    Ok((prior, support))
}

/// With fewer support points than dimensions the predictive scale still
/// factors without jitter and the density is finite everywhere probed.
pub fn few_shot_wellposedness(seed: u64) -> Result<CheckResult, CliError> {
    let mut rng = rng_for(seed, &[101]);
    let (mut cases, mut failures) = (0, 0);
    for d in [2usize, 4, 8] {
        for k in 1..d {
            for _ in 0..3 {
                let (prior, support) = random_case(&mut rng, d, k)?;
                let t = niw_posterior(&prior, &support)?.predictive()?;
                let mut ok = !t.jittered();
                for _ in 0..1000 {
                    let z: Vec<f64> = (0..d).map(|_| 10.0 * gauss(&mut rng)).collect();
                    ok &= t.logpdf(&z)?.is_finite();
                }
                cases += 1;
                failures += usize::from(!ok);
            }
        }
    }
    Ok(CheckResult::new("few_shot_wellposedness", cases, failures, "K < d, 1000 probes per case".into()))
}

pub fn posterior_scale_bounds(seed: u64) -> Result<CheckResult, CliError> {
    let mut rng = rng_for(seed, &[102]);
    let (mut cases, mut failures) = (0, 0);
    for d in [1usize, 2, 4, 8] {
        for k in 1..=12 {
            for _ in 0..2 {
                let (prior, support) = random_case(&mut rng, d, k)?;
                let post = niw_posterior(&prior, &support)?;
                cases += 1;
                failures += usize::from(!wellposedness_check(&prior, &post).bound_ok);
            }
        }
    }
    Ok(CheckResult::new("posterior_scale_bounds", cases, failures, "d in {1,2,4,8}, K in 1..=12".into()))
}

pub fn student_t_curvature(seed: u64) -> Result<CheckResult, CliError> {
    let mut rng = rng_for(seed, &[103]);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let cases = 50;
    for _ in 0..cases {
        let d = rng.random_range(1..=4usize);
        let eps = rng.random_range(0.05..1.0);
        let scale = random_spd(&mut rng, d, eps);
        let mean: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
        let dof = rng.random_range(0.5..20.0);
        let radius = rng.random_range(0.1..5.0);
        let t = StudentT::new(mean.clone(), &scale, dof)?;
        let grid: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let dir: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
                let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r = radius * rng.random_range(0.0..1.0);
                mean.iter().zip(&dir).map(|(m, v)| m + r * v / n).collect()
            })
            .collect();
        let rep = hessian_bound_check(&t, radius, &grid)?;
        worst = worst.max(rep.max_fd_rel_err);
        failures += usize::from(!rep.ok);
    }
    Ok(CheckResult::new(
        "student_t_curvature",
        cases,
        failures,
        format!("max finite-difference relative error {worst:.2e}"),
    ))
}

/// `∫ p(x) dx` of a 1-d Student-t via `x = μ + s·sinh(t)`, which turns the
/// polynomial tails into exponential ones, and the trapezoid rule on
/// `[−T, T]` with `T = 40/min(ν, 1)`.
pub fn integrate_1d(t: &StudentT, points: usize) -> Result<f64, CliError> {
    let mu = t.mean()[0];
    let s = t.scale()[0].sqrt();
    let big_t = 40.0 / t.dof().min(1.0);
    let h = 2.0 * big_t / points as f64;
    let mut acc = 0.0;
    for i in 0..=points {
        let u = -big_t + i as f64 * h;
        let w = if i == 0 || i == points { 0.5 } else { 1.0 };
        acc += w * t.logpdf(&[mu + s * u.sinh()])?.exp() * s * u.cosh();
    }
    Ok(acc * h)
}

pub fn density_normalization(seed: u64) -> Result<CheckResult, CliError> {
    let mut rng = rng_for(seed, &[104]);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let cases = 20;
    for _ in 0..cases {
        let k = rng.random_range(1..=12usize);
        let (prior, support) = random_case(&mut rng, 1, k)?;
        let t = niw_posterior(&prior, &support)?.predictive()?;
        let err = (integrate_1d(&t, 40_000)? - 1.0).abs();
        worst = worst.max(err);
        failures += usize::from(!(err <= NORMALIZATION_TOL));
    }
    Ok(CheckResult::new(
        "density_normalization",
        cases,
        failures,
        format!("max |integral - 1| {worst:.2e}"),
    ))
}

/// Derivative in coordinate `i` by Ridders' extrapolation: central
/// differences at geometrically shrinking steps starting from `h0`, combined
/// in a Neville tableau; the entry with the smallest error estimate wins.
/// A fixed step fails near sharply curved regions of the episode loss.
pub fn ridders<F>(f: F, at: &[f64], i: usize, h0: f64) -> Result<f64, CliError>
where
    F: Fn(&[f64]) -> baymeta_core::Result<f64>,
{
    const CON: f64 = 1.4;
    const CON2: f64 = CON * CON;
    const NTAB: usize = 16;
    let mut p = at.to_vec();
    let mut central = |h: f64| -> Result<f64, CliError> {
        p[i] = at[i] + h;
        let up = f(&p)?;
        p[i] = at[i] - h;
        let down = f(&p)?;
        p[i] = at[i];
        Ok((up - down) / (2.0 * h))
    };
    let mut a = [[0.0f64; NTAB]; NTAB];
    let mut h = h0;
    a[0][0] = central(h)?;
    let (mut best, mut err) = (a[0][0], f64::INFINITY);
    for col in 1..NTAB {
        h /= CON;
        a[0][col] = central(h)?;
        let mut fac = CON2;
        for row in 1..=col {
            a[row][col] = (a[row - 1][col] * fac - a[row - 1][col - 1]) / (fac - 1.0);
            fac *= CON2;
            let e = (a[row][col] - a[row - 1][col]).abs().max((a[row][col] - a[row - 1][col - 1]).abs());
            if e <= err {
                err = e;
                best = a[row][col];
            }
        }
        if (a[col][col] - a[col - 1][col - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    Ok(best)
}

/// Second-order meta-gradient against central differences of the episode
/// loss on a 26-parameter net, with and without the contrastive term.
pub fn meta_gradient(seed: u64) -> Result<CheckResult, CliError> {
    let net = EmbeddingNet {
        input_dim: 3,
        hidden_dims: vec![4],
        output_dim: 2,
        ..EmbeddingNet::default()
    };
    let family = TaskFamily {
        input_dim: 3,
        num_tasks: 3,
        counts: EpisodeCounts { k: 3, q_n: 3, q_a: 2 },
        ..TaskFamily::default()
    };
    let tasks = family.tasks()?;
    let mut rng = rng_for(seed, &[105]);
    let mut failures = 0;
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for lambda in [0.0, 0.1] {
        let hp = HyperParams {
            lambda,
            alpha: 0.05,
            ..HyperParams::default()
        };
        let method = BayesMethod::new(net.clone(), NiwPrior::standard(2), AnomalyReference::default(), &hp, lambda > 0.0)?;
        for _ in 0..5 {
            let params: Vec<f64> = net.init_params(rng.random()).values.iter().map(|v| 2.0 * v).collect();
            let task = &tasks[rng.random_range(0..tasks.len())];
            let ep = family.episode(task, Split::Train, rng.random())?;
            let g = method.meta_gradient(&params, &ep)?.grad;
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..params.len() {
                let fd = ridders(|p| method.episode_loss(p, &ep), &params, i, 1e-4)?;
                num += (g[i] - fd) * (g[i] - fd);
                den += fd * fd;
            }
            let rel = num.sqrt() / den.sqrt().max(GRAD_FLOOR);
            worst = worst.max(rel);
            failures += usize::from(!(rel <= META_GRAD_TOL));
            cases += 1;
        }
    }
    Ok(CheckResult::new(
        "meta_gradient",
        cases,
        failures,
        format!("max relative error {worst:.2e}"),
    ))
}

pub fn run_all(seed: u64) -> Result<Vec<CheckResult>, CliError> {
    Ok(vec![
        few_shot_wellposedness(seed)?,
        posterior_scale_bounds(seed)?,
        student_t_curvature(seed)?,
        density_normalization(seed)?,
        meta_gradient(seed)?,
    ])
}

use std::collections::BTreeSet;

use baymeta_core::bayescore::{AnomalyReference, NiwPrior};
use baymeta_core::diffnet::EmbeddingNet;
use baymeta_core::episodes::seeds::rng_for;
use baymeta_core::episodes::{EpisodeCounts, Split, TaskFamily};
use baymeta_core::fedsim::{
    convergence_report, episodic_clients, estimate_assumption_constants, run_federated, AssumptionConstants,
    FedClient, FedConfig, FedTrace, Participation, QuadraticClient,
};
use baymeta_core::metalearn::{BayesMethod, HyperParams, MetaMethod};
use baymeta_core::Result;
use rand::Rng;

fn tiny_net() -> EmbeddingNet {
    EmbeddingNet {
        input_dim: 4,
        hidden_dims: vec![4],
        output_dim: 2,
        ..EmbeddingNet::default()
    }
}

fn tiny_family(num_tasks: usize, heterogeneity: f64) -> TaskFamily {
    TaskFamily {
        input_dim: 4,
        num_tasks,
        heterogeneity,
        counts: EpisodeCounts { k: 4, q_n: 4, q_a: 2 },
        ..TaskFamily::default()
    }
}

fn tiny_method() -> BayesMethod {
    BayesMethod::new(
        tiny_net(),
        NiwPrior::standard(2),
        AnomalyReference::default(),
        &HyperParams::default(),
        true,
    )
    .unwrap()
}

fn quadratic_clients(c: usize, d: usize, noise: f64, seed: u64) -> Vec<QuadraticClient> {
    let mut rng = rng_for(11, &[]);
    (0..c)
        .map(|i| {
            let target = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
            QuadraticClient::new(i as u64, target, noise, seed)
        })
        .collect()
}

fn episodic_run(threads: usize, reverse: bool) -> (Vec<f64>, FedTrace) {
    let method = tiny_method();
    let family = tiny_family(5, 1.0);
    let init = tiny_net().init_params(3).values;
    let mut clients = episodic_clients(&method, &family, 9).unwrap();
    if reverse {
        clients.reverse();
    }
    let mut cfg = FedConfig::new(12, 0.01, 9);
    cfg.participation = Participation::Count(3);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| run_federated(&mut clients, &init, &cfg).unwrap())
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let (p1, t1) = episodic_run(1, false);
    let (p4, t4) = episodic_run(4, false);
    assert_eq!(t1, t4);
    assert!(p1.iter().zip(&p4).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn results_do_not_depend_on_client_order() {
    let (p, t) = episodic_run(2, false);
    let (q, u) = episodic_run(2, true);
    assert_eq!(t, u);
    assert!(p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits()));
}

fn json_keys(v: &serde_json::Value, out: &mut BTreeSet<String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                out.insert(k.clone());
                json_keys(child, out);
            }
        }
        serde_json::Value::Array(items) => items.iter().for_each(|c| json_keys(c, out)),
        _ => {}
    }
}

#[test]
fn server_trace_holds_no_client_data() {
    let mut clients = quadratic_clients(4, 3, 0.5, 1);
    let mut cfg = FedConfig::new(5, 0.1, 1);
    cfg.checkpoint_every = 2;
    cfg.participation = Participation::Count(2);
    let (_, mut trace) = run_federated(&mut clients, &[1.0, 1.0, 1.0], &cfg).unwrap();
    let probes = vec![vec![0.0; 3], vec![1.0; 3]];
    trace.constants = Some(estimate_assumption_constants(&clients, &probes, 20, 1).unwrap());

    let text = serde_json::to_string(&trace).unwrap();
    let back: FedTrace = serde_json::from_str(&text).unwrap();
    assert_eq!(back, trace);

    let mut keys = BTreeSet::new();
    json_keys(&serde_json::from_str(&text).unwrap(), &mut keys);
    let allowed: BTreeSet<String> = [
        "rounds",
        "checkpoints",
        "participation_size",
        "constants",
        "round",
        "grad_norm",
        "mean_loss",
        "participants",
        "params_hash",
        "loss",
        "grad_norm_sq",
        "lipschitz",
        "sigma2",
        "zeta2",
        "zeta2_stderr",
        "zeta2_bias_floor",
    ]
    .into_iter()
    .map(String::from)
    .collect();
    assert!(keys.is_subset(&allowed), "unexpected fields: {:?}", keys.difference(&allowed));

    // A record carrying client data is rejected.
    let tampered = text.replacen("\"rounds\"", "\"support\":[[1.0]],\"rounds\"", 1);
    assert!(serde_json::from_str::<FedTrace>(&tampered).is_err());
}

#[test]
fn noiseless_quadratic_descends_every_round() {
    let mut clients = quadratic_clients(6, 4, 0.0, 2);
    let mut cfg = FedConfig::new(40, 0.5, 2);
    cfg.checkpoint_every = 1;
    let (_, trace) = run_federated(&mut clients, &[5.0; 4], &cfg).unwrap();
    let losses: Vec<f64> = trace.checkpoints.iter().map(|c| c.loss).collect();
    assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{losses:?}");
    assert!(trace.rounds.last().unwrap().grad_norm < 1e-6);
}

/// Draws uniformly among six fixed episodes so the expected gradient is an
/// exact six-term average.
struct SixEpisodes {
    grads: Vec<Vec<f64>>,
}

impl FedClient for SixEpisodes {
    fn client_id(&self) -> u64 {
        0
    }

    fn next_seed(&mut self) -> u64 {
        0
    }

    fn sample(&self, _params: &[f64], seed: u64) -> Result<(f64, Vec<f64>)> {
        let i = rng_for(seed, &[]).random_range(0..self.grads.len());
        Ok((0.0, self.grads[i].clone()))
    }
}

#[test]
fn sampled_gradient_is_unbiased() {
    let method = tiny_method();
    let family = tiny_family(1, 1.0);
    let task = &family.tasks().unwrap()[0];
    let params = tiny_net().init_params(5).values;
    let grads: Vec<Vec<f64>> = (0..6)
        .map(|s| {
            let ep = family.episode(task, Split::Train, s).unwrap();
            method.meta_gradient(&params, &ep).unwrap().grad
        })
        .collect();
    let exact: Vec<f64> = (0..params.len())
        .map(|j| grads.iter().map(|g| g[j]).sum::<f64>() / 6.0)
        .collect();
    let client = SixEpisodes { grads };
    let n = 10_000;
    let est = client.expected(&params, n, 77).unwrap();
    let err = est.grad.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let bound = 3.0 * est.variance.sqrt() / (n as f64).sqrt();
    assert!(err <= bound, "error {err} exceeds {bound}");
}

#[test]
fn dissimilarity_grows_with_heterogeneity() {
    let method = tiny_method();
    let probes = vec![tiny_net().init_params(1).values, tiny_net().init_params(2).values];
    let zeta = |h: f64| {
        let family = tiny_family(4, h);
        let clients = episodic_clients(&method, &family, 3).unwrap();
        estimate_assumption_constants(&clients, &probes, 60, 3).unwrap()
    };
    let same = zeta(0.0);
    let diff = zeta(2.0);
    // Identical tasks: only Monte-Carlo noise remains.
    assert!(
        same.zeta2 <= same.zeta2_bias_floor + 3.0 * same.zeta2_stderr,
        "{same:?}"
    );
    assert!(diff.zeta2 > same.zeta2, "{} vs {}", diff.zeta2, same.zeta2);
}

#[test]
fn step_size_above_inverse_smoothness_is_flagged() {
    let mut clients = quadratic_clients(3, 2, 0.1, 4);
    let mut cfg = FedConfig::new(10, 1.5, 4);
    cfg.checkpoint_every = 1;
    let (_, trace) = run_federated(&mut clients, &[1.0, 1.0], &cfg).unwrap();
    let k = AssumptionConstants {
        lipschitz: 1.0,
        sigma2: 0.02,
        zeta2: 1.0,
        zeta2_stderr: 0.0,
        zeta2_bias_floor: 0.0,
    };
    let r = convergence_report(&trace, &k, cfg.eta, cfg.rounds, None).unwrap();
    assert!(!r.precondition_ok);
    assert_eq!(r.satisfied, None);
    let ok = convergence_report(&trace, &k, 0.5, cfg.rounds, None).unwrap();
    assert!(ok.precondition_ok);
}

use std::time::Instant;

use baymeta_core::bayescore::AnomalyReference;
use baymeta_core::episodes::seeds::{derive_seed, STREAM_INIT};
use baymeta_core::eval::{score_histogram, ScoreReport};
use baymeta_core::fedsim::{
    convergence_report, episodic_clients, estimate_assumption_constants, params_hash, run_federated,
    AssumptionConstants, ConvergenceReport, FedConfig, FedTrace,
};
use baymeta_core::metalearn::{
    evaluate, train_centralized, BayesMethod, CoresetNn, LossTrace, MetaMethod, ProtoMaml, Scorer,
};
use serde::{Deserialize, Serialize};

use crate::artifacts::*;
use crate::checks::{self, CheckResult};
use crate::config::{Mode, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedSummary {
    pub rounds: usize,
    pub participation_size: usize,
    pub eta: f64,
    pub constants: Option<AssumptionConstants>,
    pub convergence: Option<ConvergenceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub config: RunConfig,
    pub config_hash: String,
    pub wall_time_secs: f64,
    /// Files written next to this summary.
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub federated: Option<FedSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<CheckResult>>,
}

/// Seed of the initial meta-parameters of a run.
pub fn init_seed(run_seed: u64) -> u64 {
    derive_seed(run_seed, &[STREAM_INIT])
}

pub fn method_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Centralized => "bayes",
        Mode::CentralizedContrastive => "bayes_contrastive",
        Mode::Federated => "fed_bayes",
        Mode::FederatedContrastive => "fed_bayes_contrastive",
        Mode::Protomaml => "protomaml",
        Mode::CoresetNn => "coreset_nn",
        Mode::Checks => "checks",
    }
}

struct Outcome {
    params: Vec<f64>,
    loss_rows: Vec<LossRow>,
    fed: Option<(FedTrace, FedSummary)>,
}

fn loss_rows(trace: &LossTrace) -> Vec<LossRow> {
    trace
        .train
        .iter()
        .zip(&trace.val)
        .enumerate()
        .map(|(i, (&t, &v))| LossRow {
            epoch_or_round: i,
            train_loss: t,
            val_loss: v.is_finite().then_some(v),
        })
        .collect()
}

fn train_meta<M: MetaMethod>(method: &M, cfg: &RunConfig, init: &[f64]) -> Result<Outcome, CliError> {
    let out = train_centralized(method, &cfg.family(), init, &cfg.hp, cfg.seed)?;
    Ok(Outcome {
        loss_rows: loss_rows(&out.trace),
        params: out.params,
        fed: None,
    })
}

fn train_federated(method: &BayesMethod, cfg: &RunConfig, init: &[f64]) -> Result<Outcome, CliError> {
    let family = cfg.family();
    let mut clients = episodic_clients(method, &family, cfg.seed)?;
    let eta = cfg.hp.gamma * cfg.hp.beta;
    let fed_cfg = FedConfig {
        rounds: cfg.fed.rounds,
        participation: cfg.fed.participation.resolve()?,
        eta,
        seed: cfg.seed,
        checkpoint_every: cfg.fed.checkpoint_every,
        checkpoint_samples: cfg.fed.checkpoint_samples,
    };
    let (params, mut trace) = run_federated(&mut clients, init, &fed_cfg)?;
    let mut constants = None;
    let mut convergence = None;
    if !trace.checkpoints.is_empty() {
        let probes = vec![init.to_vec(), params.clone()];
        let k = estimate_assumption_constants(&clients, &probes, cfg.fed.probe_samples, cfg.seed)?;
        convergence = Some(convergence_report(&trace, &k, eta, cfg.fed.rounds, None)?);
        trace.constants = Some(k.clone());
        constants = Some(k);
    }
    let loss_rows = trace
        .rounds
        .iter()
        .map(|r| LossRow {
            epoch_or_round: r.round,
            train_loss: r.mean_loss,
            val_loss: None,
        })
        .collect();
    let summary = FedSummary {
        rounds: cfg.fed.rounds,
        participation_size: trace.participation_size,
        eta,
        constants,
        convergence,
    };
    Ok(Outcome {
        params,
        loss_rows,
        fed: Some((trace, summary)),
    })
}

fn metric_rows(cfg: &RunConfig, method: &str, report: &ScoreReport) -> Vec<MetricRow> {
    report
        .metric_rows()
        .into_iter()
        .map(|(metric, mean, stderr)| MetricRow {
            method: method.to_string(),
            task_family: cfg.eval.family_label.clone(),
            anomaly_kind_heldout: cfg.tasks.heldout.name().to_string(),
            metric: metric.to_string(),
            mean,
            stderr,
            n_episodes: report.episode_count,
        })
        .collect()
}

/// Executes the configured mode and writes its artifacts plus `summary.json`
/// into `cfg.output_dir`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    if cfg.mode == Mode::Checks {
        return run_checks(cfg, start);
    }

    let net = cfg.embedding_net();
    let init = net.init_params(init_seed(cfg.seed)).values;
    let reference = AnomalyReference::new(cfg.reference.scale_value, cfg.reference.dof)?;
    let name = method_name(cfg.mode);

    let (outcome, report) = match cfg.mode {
        Mode::Centralized | Mode::CentralizedContrastive | Mode::Federated | Mode::FederatedContrastive => {
            let method = BayesMethod::new(net, cfg.niw_prior()?, reference, &cfg.hp, cfg.mode.is_contrastive())?;
            let outcome = if cfg.mode.is_federated() {
                train_federated(&method, cfg, &init)?
            } else {
                train_meta(&method, cfg, &init)?
            };
            let report = score(&method, cfg, &outcome.params)?;
            (outcome, report)
        }
        Mode::Protomaml => {
            let method = ProtoMaml::new(net, &cfg.hp);
            let outcome = train_meta(&method, cfg, &init)?;
            let report = score(&method, cfg, &outcome.params)?;
            (outcome, report)
        }
        Mode::CoresetNn => {
            let scorer = CoresetNn {
                net,
                fraction: cfg.eval.coreset_fraction,
            };
            let report = score(&scorer, cfg, &init)?;
            let outcome = Outcome {
                params: init.clone(),
                loss_rows: Vec::new(),
                fed: None,
            };
            (outcome, report)
        }
        Mode::Checks => unreachable!(),
    };

    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    w.csv(LOSS_FILE, LOSS_HEADER, &outcome.loss_rows)?;
    w.csv(METRICS_FILE, METRICS_HEADER, &metric_rows(cfg, name, &report))?;
    let hist: Vec<HistogramRow> = score_histogram(&report.scores, &report.labels, cfg.eval.histogram_bins)
        .into_iter()
        .map(|b| HistogramRow {
            method: name.to_string(),
            bin_lo: b.lo,
            bin_hi: b.hi,
            normal: b.normal,
            anomalous: b.anomalous,
        })
        .collect();
    w.csv(HISTOGRAM_FILE, HISTOGRAM_HEADER, &hist)?;
    w.json(
        PARAMS_FILE,
        &ParamsCheckpoint {
            method: name,
            num_params: outcome.params.len(),
            params_hash: params_hash(&outcome.params),
            values: &outcome.params,
        },
    )?;
    let mut federated = None;
    if let Some((trace, summary)) = outcome.fed {
        let rows: Vec<FedRoundRow> = trace
            .rounds
            .iter()
            .map(|r| FedRoundRow {
                round: r.round,
                grad_norm: r.grad_norm,
                mean_loss: r.mean_loss,
                participation_size: r.participants.len(),
                params_hash: r.params_hash.clone(),
            })
            .collect();
        w.csv(FED_TRACE_FILE, FED_TRACE_HEADER, &rows)?;
        if !trace.checkpoints.is_empty() {
            w.csv(CHECKPOINTS_FILE, CHECKPOINTS_HEADER, &trace.checkpoints)?;
        }
        federated = Some(summary);
    }
    finish(cfg, w, start, Some(name.to_string()), federated, None)
}

fn score<S: Scorer>(scorer: &S, cfg: &RunConfig, params: &[f64]) -> Result<ScoreReport, CliError> {
    Ok(evaluate(
        scorer,
        &cfg.family(),
        params,
        cfg.eval.test_episodes,
        cfg.seed,
        cfg.eval.pooled,
    )?)
}

fn run_checks(cfg: &RunConfig, start: Instant) -> Result<RunSummary, CliError> {
    let results = checks::run_all(cfg.seed)?;
    let mut w = ArtifactWriter::create(&cfg.output_dir)?;
    w.csv(CHECKS_FILE, CHECKS_HEADER, &results)?;
    let failed = results.iter().filter(|r| !r.passed).count();
    let total = results.len();
    let summary = finish(cfg, w, start, None, None, Some(results))?;
    if failed > 0 {
        return Err(CliError::ChecksFailed { failed, total });
    }
    Ok(summary)
}

fn finish(
    cfg: &RunConfig,
    mut w: ArtifactWriter,
    start: Instant,
    method: Option<String>,
    federated: Option<FedSummary>,
    checks: Option<Vec<CheckResult>>,
) -> Result<RunSummary, CliError> {
    let summary = RunSummary {
        mode: cfg.mode,
        seed: cfg.seed,
        config: cfg.clone(),
        config_hash: cfg.content_hash(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        artifacts: w.written().to_vec(),
        method,
        federated,
        checks,
    };
    w.json(SUMMARY_FILE, &summary)?;
    Ok(summary)
}

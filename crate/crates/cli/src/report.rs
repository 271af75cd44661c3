//! `baymeta report`: reads a run directory back and prints its metrics.

use std::fmt::Write as _;
use std::path::Path;

use crate::artifacts::{MetricRow, METRICS_FILE, SUMMARY_FILE};
use crate::run::RunSummary;
use crate::CliError;

pub fn load_summary(dir: &Path) -> Result<RunSummary, CliError> {
    let text = std::fs::read_to_string(dir.join(SUMMARY_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_metrics(dir: &Path) -> Result<Vec<MetricRow>, CliError> {
    let mut r = csv::Reader::from_path(dir.join(METRICS_FILE))?;
    let rows = r.deserialize().collect::<Result<Vec<MetricRow>, _>>()?;
    Ok(rows)
}

/// Human-readable summary of a run directory. Fails if an artifact named
/// in the summary is missing.
pub fn render(dir: &Path) -> Result<String, CliError> {
    let summary = load_summary(dir)?;
    for a in &summary.artifacts {
        if !dir.join(a).is_file() {
            return Err(CliError::Output(format!("artifact {a} listed in the summary is missing")));
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "mode {} seed {} config {} ({:.1}s)",
        summary.mode.name(),
        summary.seed,
        &summary.config_hash[..12],
        summary.wall_time_secs
    );
    if summary.artifacts.iter().any(|a| a == METRICS_FILE) {
        let _ = writeln!(out, "{:<24} {:<10} {:>10} {:>10} {:>8}", "method", "metric", "mean", "stderr", "episodes");
        for m in load_metrics(dir)? {
            let _ = writeln!(
                out,
                "{:<24} {:<10} {:>10.4} {:>10.4} {:>8}",
                m.method, m.metric, m.mean, m.stderr, m.n_episodes
            );
        }
    }
    if let Some(fed) = &summary.federated {
        let _ = writeln!(out, "federated: {} rounds, {} clients per round, eta {}", fed.rounds, fed.participation_size, fed.eta);
        if let Some(c) = &fed.convergence {
            let _ = writeln!(
                out,
                "stationarity: mean |grad F|^2 {:.4e} vs bound {:.4e} ({})",
                c.lhs,
                c.rhs,
                match c.satisfied {
                    Some(true) => "bound holds",
                    Some(false) => "bound violated",
                    None => "step size above 1/L, bound not asserted",
                }
            );
        }
    }
    if let Some(checks) = &summary.checks {
        for c in checks {
            let _ = writeln!(
                out,
                "{:<26} {} ({}/{} failed) {}",
                c.check,
                if c.passed { "PASS" } else { "FAIL" },
                c.failures,
                c.cases,
                c.detail
            );
        }
    }
    Ok(out)
}

//! Output files of a run. Every file written through [`ArtifactWriter`] is
//! listed in the run summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const PARAMS_FILE: &str = "params.json";
pub const FED_TRACE_FILE: &str = "fed_trace.csv";
pub const CHECKPOINTS_FILE: &str = "fed_checkpoints.csv";
pub const CHECKS_FILE: &str = "checks.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRow {
    pub epoch_or_round: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub task_family: String,
    pub anomaly_kind_heldout: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub method: String,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub normal: usize,
    pub anomalous: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FedRoundRow {
    pub round: usize,
    pub grad_norm: f64,
    pub mean_loss: f64,
    pub participation_size: usize,
    pub params_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamsCheckpoint<'a> {
    pub method: &'a str,
    pub num_params: usize,
    pub params_hash: String,
    pub values: &'a [f64],
}

pub struct ArtifactWriter {
    dir: PathBuf,
    written: Vec<String>,
}

impl ArtifactWriter {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Writes a CSV with a header even when `rows` is empty.
    pub fn csv<T: Serialize>(&mut self, name: &str, header: &[&str], rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(self.dir.join(name))?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value)?;
        fs::write(self.dir.join(name), text + "\n")?;
        self.written.push(name.to_string());
        Ok(())
    }
}

pub const LOSS_HEADER: &[&str] = &["epoch_or_round", "train_loss", "val_loss"];
pub const METRICS_HEADER: &[&str] = &[
    "method",
    "task_family",
    "anomaly_kind_heldout",
    "metric",
    "mean",
    "stderr",
    "n_episodes",
];
pub const HISTOGRAM_HEADER: &[&str] = &["method", "bin_lo", "bin_hi", "normal", "anomalous"];
pub const FED_TRACE_HEADER: &[&str] = &["round", "grad_norm", "mean_loss", "participation_size", "params_hash"];
pub const CHECKPOINTS_HEADER: &[&str] = &["round", "loss", "grad_norm_sq"];
pub const CHECKS_HEADER: &[&str] = &["check", "cases", "failures", "passed", "detail"];

//! Detection metrics, per-episode score reports, and the coreset
//! nearest-neighbour baseline.

mod coreset;
mod metrics;

use serde::{Deserialize, Serialize};

pub use coreset::{covering_radius, kcenter_coreset, nn_score};
pub use metrics::{auprc, auroc, f1_from_counts, f1_optimal, mean_stderr};

use crate::error::{Error, Result};

/// Scores and labels of one test episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScores {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Metrics aggregated over episodes. By default each metric is computed per
/// episode and reported as mean ± standard error; in pooled mode the metrics
/// come from the concatenated scores and the standard errors are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub auroc: f64,
    pub auprc: f64,
    pub f1_star: f64,
    pub u_star: f64,
    pub auroc_stderr: f64,
    pub auprc_stderr: f64,
    pub f1_stderr: f64,
    pub u_star_stderr: f64,
    pub episode_count: usize,
    pub pooled: bool,
}

impl ScoreReport {
    pub fn from_episodes(episodes: &[EpisodeScores], pooled: bool) -> Result<Self> {
        if episodes.is_empty() {
            return Err(Error::invalid("episodes", "need at least one episode"));
        }
        let scores: Vec<f64> = episodes.iter().flat_map(|e| e.scores.iter().copied()).collect();
        let labels: Vec<u8> = episodes.iter().flat_map(|e| e.labels.iter().copied()).collect();
        if pooled {
            let (u_star, f1_star) = f1_optimal(&scores, &labels)?;
            return Ok(ScoreReport {
                auroc: auroc(&scores, &labels)?,
                auprc: auprc(&scores, &labels)?,
                f1_star,
                u_star,
                auroc_stderr: f64::NAN,
                auprc_stderr: f64::NAN,
                f1_stderr: f64::NAN,
                u_star_stderr: f64::NAN,
                episode_count: episodes.len(),
                pooled,
                scores,
                labels,
            });
        }
        let mut per = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
        for e in episodes {
            let (u, f1) = f1_optimal(&e.scores, &e.labels)?;
            per[0].push(auroc(&e.scores, &e.labels)?);
            per[1].push(auprc(&e.scores, &e.labels)?);
            per[2].push(f1);
            per[3].push(u);
        }
        let [a, p, f, u] = per.map(|v| mean_stderr(&v));
        Ok(ScoreReport {
            scores,
            labels,
            auroc: a.0,
            auprc: p.0,
            f1_star: f.0,
            u_star: u.0,
            auroc_stderr: a.1,
            auprc_stderr: p.1,
            f1_stderr: f.1,
            u_star_stderr: u.1,
            episode_count: episodes.len(),
            pooled,
        })
    }

    /// `(metric, mean, stderr)` rows.
    pub fn metric_rows(&self) -> Vec<(&'static str, f64, f64)> {
        vec![
            ("auroc", self.auroc, self.auroc_stderr),
            ("auprc", self.auprc, self.auprc_stderr),
            ("f1_star", self.f1_star, self.f1_stderr),
            ("u_star", self.u_star, self.u_star_stderr),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub normal: usize,
    pub anomalous: usize,
}

/// Equal-width histogram of scores split by label over `[min, max]`.
pub fn score_histogram(scores: &[f64], labels: &[u8], bins: usize) -> Vec<HistogramBin> {
    if scores.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            lo: lo + b as f64 * width,
            hi: lo + (b + 1) as f64 * width,
            normal: 0,
            anomalous: 0,
        })
        .collect();
    for (&s, &y) in scores.iter().zip(labels) {
        let b = (((s - lo) / width) as usize).min(bins - 1);
        if y == 1 {
            out[b].anomalous += 1;
        } else {
            out[b].normal += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(scores: &[f64], labels: &[u8]) -> EpisodeScores {
        EpisodeScores {
            scores: scores.to_vec(),
            labels: labels.to_vec(),
        }
    }

    #[test]
    fn per_episode_mean_and_stderr() {
        let eps = [
            ep(&[1.0, 2.0, 3.0, 4.0], &[0, 0, 1, 1]),
            ep(&[1.0, 2.0, 3.0, 4.0], &[1, 1, 0, 0]),
        ];
        let r = ScoreReport::from_episodes(&eps, false).unwrap();
        assert_eq!(r.auroc, 0.5);
        assert_eq!(r.auroc_stderr, 0.5);
        assert_eq!(r.episode_count, 2);
        assert_eq!(r.scores.len(), 8);
    }

    #[test]
    fn pooled_mode_uses_concatenation() {
        let eps = [ep(&[1.0, 2.0], &[0, 1]), ep(&[3.0, 4.0], &[0, 1])];
        let r = ScoreReport::from_episodes(&eps, true).unwrap();
        assert_eq!(r.auroc, 0.75);
        assert!(r.auroc_stderr.is_nan());
    }

    #[test]
    fn histogram_counts_everything() {
        let h = score_histogram(&[0.0, 0.5, 1.0, 1.0], &[0, 0, 1, 1], 4);
        assert_eq!(h.len(), 4);
        assert_eq!(h.iter().map(|b| b.normal + b.anomalous).sum::<usize>(), 4);
        assert_eq!(h[3].anomalous, 2);
    }
}

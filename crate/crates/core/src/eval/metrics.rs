use crate::error::{Error, Result};

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "scores vs labels",
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::invalid("labels", "must be 0 or 1"));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Groups of tied scores in descending score order, as (positives, negatives).
fn descending_groups(scores: &[f64], labels: &[u8]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for i in order {
        let (s, y) = (scores[i], labels[i]);
        match groups.last_mut() {
            Some(g) if g.0 == s => {
                if y == 1 {
                    g.1 += 1
                } else {
                    g.2 += 1
                }
            }
            _ => groups.push((s, (y == 1) as usize, (y == 0) as usize)),
        }
    }
    groups
}

/// Probability that a random positive outscores a random negative, ties
/// counted one half.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("labels", "AUROC needs both classes"));
    }
    // Twice the pair count, so ties stay integral.
    let mut twice: u64 = 0;
    let mut neg_below = neg as u64;
    for (_, p, n) in descending_groups(scores, labels) {
        neg_below -= n as u64;
        twice += 2 * p as u64 * neg_below + (p * n) as u64;
    }
    Ok(twice as f64 / (2 * pos as u64 * neg as u64) as f64)
}

/// Step-wise average precision: `Σ (R_k − R_{k−1}) P_k` over distinct
/// thresholds in descending order.
pub fn auprc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(Error::invalid("labels", "AUPRC needs at least one positive"));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    for (_, p, n) in descending_groups(scores, labels) {
        tp += p;
        fp += n;
        if p > 0 {
            area += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area)
}

/// `2TP / (2TP + FP + FN)`, with 0 when nothing is positive or predicted.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Best F1 over thresholds `u` with rule `ŷ = 1 iff s ≥ u`. Candidates are the
/// distinct scores plus `+∞`; ties go to the smallest `u`.
pub fn f1_optimal(scores: &[f64], labels: &[u8]) -> Result<(f64, f64)> {
    let (pos, _) = check_inputs(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::invalid("scores", "empty input"));
    }
    let mut best = (f64::INFINITY, f1_from_counts(0, 0, pos));
    let (mut tp, mut fp) = (0usize, 0usize);
    for (s, p, n) in descending_groups(scores, labels) {
        tp += p;
        fp += n;
        let f1 = f1_from_counts(tp, fp, pos - tp);
        if f1 >= best.1 {
            best = (s, f1);
        }
    }
    Ok(best)
}

/// Mean and standard error with the unbiased `n − 1` variance.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

use crate::error::{Error, Result};

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Greedy farthest-point selection of `⌈fraction·n⌉` points starting from
/// `start`. Ties go to the lowest index. Returns indices in selection order.
pub fn kcenter_coreset(points: &[Vec<f64>], fraction: f64, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Err(Error::invalid("points", "empty input"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("fraction", format!("must be in (0, 1], got {fraction}")));
    }
    if start >= n {
        return Err(Error::invalid("start", "index out of range"));
    }
    let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut selected = vec![start];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist_sq(p, &points[start])).collect();
    while selected.len() < k {
        let mut far = 0;
        for i in 1..n {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        selected.push(far);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(dist_sq(p, &points[far]));
        }
    }
    Ok(selected)
}

/// Largest distance from any point to its nearest center.
pub fn covering_radius(points: &[Vec<f64>], centers: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| {
            centers
                .iter()
                .map(|&c| dist_sq(p, &points[c]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        .sqrt()
}

/// Euclidean distance from `z` to its nearest coreset point.
pub fn nn_score(coreset: &[Vec<f64>], z: &[f64]) -> Result<f64> {
    if coreset.is_empty() {
        return Err(Error::invalid("coreset", "empty"));
    }
    let mut best = f64::INFINITY;
    for c in coreset {
        if c.len() != z.len() {
            return Err(Error::DimensionMismatch {
                context: "nn_score",
                expected: c.len(),
                got: z.len(),
            });
        }
        best = best.min(dist_sq(c, z));
    }
    Ok(best.sqrt())
}

//! Silhouette scores: the exact pairwise form and the centroid shortcut.
//!
//! Both use `s(j) = (b(j) - a(j)) / max(a(j), b(j))` and report the mean
//! over all points. The exact form needs every pairwise distance; the
//! centroid form replaces `a(j)` with the distance to the point's own
//! centroid and `b(j)` with the distance to the nearest other centroid.

use super::PaletteError;
use crate::imaging::Lab;
use crate::par;

const CHUNK: usize = 256;

fn ratio(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m > 0.0 {
        (b - a) / m
    } else {
        0.0
    }
}

fn cluster_counts(assignments: &[usize], k: usize) -> Result<Vec<usize>, PaletteError> {
    if k < 2 {
        return Err(PaletteError::SingleCluster);
    }
    let mut counts = vec![0usize; k];
    for &a in assignments {
        if a >= k {
            return Err(PaletteError::InvalidAssignment(a));
        }
        counts[a] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(PaletteError::EmptyCluster(c));
    }
    Ok(counts)
}

/// Per-point exact Silhouette values. Members of singleton clusters score 0.
pub fn silhouette_exact_samples(points: &[Lab], assignments: &[usize]) -> Result<Vec<f64>, PaletteError> {
    assert_eq!(points.len(), assignments.len(), "one assignment per point");
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let counts = cluster_counts(assignments, k)?;
    let n = points.len();
    let chunks = par::map_range(n.div_ceil(CHUNK), |ci| {
        let mut out = Vec::with_capacity(CHUNK);
        let mut sums = vec![0.0f64; k];
        for i in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
            sums.iter_mut().for_each(|s| *s = 0.0);
            let p = points[i];
            for (q, &c) in points.iter().zip(assignments) {
                sums[c] += p.distance(*q);
            }
            let own = assignments[i];
            if counts[own] == 1 {
                out.push(0.0);
                continue;
            }
            let a = sums[own] / (counts[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / counts[c] as f64)
                .fold(f64::INFINITY, f64::min);
            out.push(ratio(a, b));
        }
        out
    });
    Ok(chunks.into_iter().flatten().collect())
}

/// Mean exact Silhouette. Costs `O(n^2)` distance evaluations.
pub fn silhouette_exact(points: &[Lab], assignments: &[usize]) -> Result<f64, PaletteError> {
    let s = silhouette_exact_samples(points, assignments)?;
    Ok(par::pairwise_sum(&s) / s.len() as f64)
}

/// Per-point centroid-approximated Silhouette values.
pub fn silhouette_approx_samples(
    points: &[Lab],
    assignments: &[usize],
    centroids: &[Lab],
) -> Result<Vec<f64>, PaletteError> {
    assert_eq!(points.len(), assignments.len(), "one assignment per point");
    cluster_counts(assignments, centroids.len())?;
    Ok(points
        .iter()
        .zip(assignments)
        .map(|(p, &own)| {
            let a = p.distance(centroids[own]);
            let b = centroids
                .iter()
                .enumerate()
                .filter(|&(c, _)| c != own)
                .map(|(_, &c)| p.distance(c))
                .fold(f64::INFINITY, f64::min);
            ratio(a, b)
        })
        .collect())
}

/// Mean centroid-approximated Silhouette. Costs `O(n k)`.
pub fn silhouette_approx(points: &[Lab], assignments: &[usize], centroids: &[Lab]) -> Result<f64, PaletteError> {
    let s = silhouette_approx_samples(points, assignments, centroids)?;
    Ok(par::pairwise_sum(&s) / s.len() as f64)
}

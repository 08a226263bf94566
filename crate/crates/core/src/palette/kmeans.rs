//! Weighted k-means in LAB with k-means++ seeding and restarts.

use rand::Rng;
use serde::Serialize;

use super::PaletteError;
use crate::imaging::Lab;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KMeansOptions {
    pub max_iterations: usize,
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iterations: 100,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Lab>,
    /// Index of the nearest centroid for every point.
    pub assignments: Vec<usize>,
    /// Weighted within-cluster sum of squares of the returned solution.
    pub wcss: f64,
    /// WCSS after every assignment step of the winning restart.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    /// Number of points per cluster.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k()];
        for &a in &self.assignments {
            c[a] += 1;
        }
        c
    }

    pub fn has_empty_cluster(&self) -> bool {
        self.counts().contains(&0)
    }
}

/// Nearest centroid; ties go to the lower index.
pub(crate) fn nearest(p: Lab, centroids: &[Lab]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = p.distance_sq(c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn sample_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target && w > 0.0 {
            return Some(i);
        }
    }
    weights.iter().rposition(|&w| w > 0.0)
}

fn plus_plus<R: Rng>(rng: &mut R, points: &[Lab], weights: &[f64], k: usize) -> Vec<Lab> {
    let first = sample_weighted(rng, weights).unwrap_or(0);
    let mut centroids = vec![points[first]];
    let mut d2: Vec<f64> = points.iter().map(|p| p.distance_sq(points[first])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        // Fewer distinct points than clusters: duplicate the last centre.
        let next = sample_weighted(rng, &scores).map_or(*centroids.last().unwrap(), |i| points[i]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.distance_sq(next));
        }
        centroids.push(next);
    }
    centroids
}

fn assign(points: &[Lab], weights: &[f64], centroids: &[Lab], out: &mut [usize]) -> f64 {
    let mut wcss = 0.0;
    for ((p, w), a) in points.iter().zip(weights).zip(out.iter_mut()) {
        let (i, d) = nearest(*p, centroids);
        *a = i;
        wcss += w * d;
    }
    wcss
}

/// Moves the point farthest from its centre into each empty cluster.
fn reseed_empty(points: &[Lab], weights: &[f64], centroids: &mut [Lab], assignments: &mut [usize]) -> bool {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    let mut changed = false;
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let far = points
            .iter()
            .enumerate()
            .filter(|&(i, _)| counts[assignments[i]] > 1 && weights[i] > 0.0)
            .map(|(i, p)| (i, p.distance_sq(centroids[assignments[i]])))
            .filter(|&(_, d)| d > 0.0)
            .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                Some((_, bd)) if bd >= d => best,
                _ => Some((i, d)),
            });
        if let Some((i, _)) = far {
            counts[assignments[i]] -= 1;
            assignments[i] = c;
            counts[c] = 1;
            centroids[c] = points[i];
            changed = true;
        }
    }
    changed
}

fn update(points: &[Lab], weights: &[f64], assignments: &[usize], centroids: &mut [Lab]) {
    let k = centroids.len();
    let mut sums = vec![[0.0f64; 3]; k];
    let mut mass = vec![0.0f64; k];
    for ((p, &w), &a) in points.iter().zip(weights).zip(assignments) {
        let v = p.to_array();
        for d in 0..3 {
            sums[a][d] += w * v[d];
        }
        mass[a] += w;
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            centroids[c] = Lab::from_array(sums[c].map(|s| s / mass[c]));
        }
    }
}

fn lloyd(points: &[Lab], weights: &[f64], mut centroids: Vec<Lab>, max_iterations: usize) -> KMeansFit {
    let mut assignments = vec![usize::MAX; points.len()];
    let mut previous = assignments.clone();
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let wcss = assign(points, weights, &centroids, &mut assignments);
        history.push(wcss);
        iterations += 1;
        if assignments == previous || iterations > max_iterations {
            break;
        }
        previous.copy_from_slice(&assignments);
        reseed_empty(points, weights, &mut centroids, &mut assignments);
        update(points, weights, &assignments, &mut centroids);
    }
    KMeansFit {
        centroids,
        wcss: *history.last().unwrap(),
        assignments,
        history,
        iterations,
    }
}

/// Weighted k-means: best of `options.restarts` k-means++ initialisations by
/// WCSS, each run until the assignment stops changing or for
/// `options.max_iterations` Lloyd steps.
pub fn kmeans_weighted(
    points: &[Lab],
    weights: &[f64],
    k: usize,
    seed_value: u64,
    options: &KMeansOptions,
) -> Result<KMeansFit, PaletteError> {
    if k == 0 {
        return Err(PaletteError::InvalidK(k));
    }
    if points.len() < k {
        return Err(PaletteError::TooFewPoints {
            points: points.len(),
            k,
        });
    }
    assert_eq!(points.len(), weights.len(), "one weight per point");
    let mut best: Option<KMeansFit> = None;
    for r in 0..options.restarts.max(1) {
        let mut rng = seed::rng(seed::derive(seed_value, "kmeans-restart", r as u64));
        let init = plus_plus(&mut rng, points, weights, k);
        let fit = lloyd(points, weights, init, options.max_iterations);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Unweighted k-means over LAB pixels.
pub fn kmeans_lab(points: &[Lab], k: usize, seed_value: u64) -> Result<KMeansFit, PaletteError> {
    kmeans_with(points, k, seed_value, &KMeansOptions::default())
}

pub fn kmeans_with(
    points: &[Lab],
    k: usize,
    seed_value: u64,
    options: &KMeansOptions,
) -> Result<KMeansFit, PaletteError> {
    let weights = vec![1.0; points.len()];
    kmeans_weighted(points, &weights, k, seed_value, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(center: Lab, n: usize, spread: f64) -> Vec<Lab> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 2.399_963; // golden angle
                let r = spread * ((i % 7) as f64 / 7.0);
                Lab::new(
                    center.l + r * t.cos(),
                    center.a + r * t.sin(),
                    center.b + r * (t * 0.5).cos(),
                )
            })
            .collect()
    }

    #[test]
    fn exact_locations_recovered() {
        let locs = [
            Lab::new(20.0, 0.0, 0.0),
            Lab::new(60.0, 40.0, -30.0),
            Lab::new(80.0, -20.0, 60.0),
        ];
        let points: Vec<Lab> = (0..30).map(|i| locs[i % 3]).collect();
        let fit = kmeans_lab(&points, 3, 7).unwrap();
        assert_eq!(fit.wcss, 0.0);
        let mut got = fit.centroids.clone();
        got.sort_by(|a, b| a.l.total_cmp(&b.l));
        assert_eq!(got, locs);
    }

    #[test]
    fn two_blobs_give_their_means() {
        let a = blob(Lab::new(30.0, 20.0, 20.0), 50, 2.0);
        let b = blob(Lab::new(70.0, -30.0, 40.0), 80, 2.0);
        let mean = |v: &[Lab]| {
            let n = v.len() as f64;
            Lab::new(
                v.iter().map(|p| p.l).sum::<f64>() / n,
                v.iter().map(|p| p.a).sum::<f64>() / n,
                v.iter().map(|p| p.b).sum::<f64>() / n,
            )
        };
        let (ma, mb) = (mean(&a), mean(&b));
        let points: Vec<Lab> = a.into_iter().chain(b).collect();
        let fit = kmeans_lab(&points, 2, 1).unwrap();
        let mut c = fit.centroids.clone();
        c.sort_by(|x, y| x.l.total_cmp(&y.l));
        assert!(c[0].distance(ma) < 1e-9);
        assert!(c[1].distance(mb) < 1e-9);
    }

    #[test]
    fn too_few_points() {
        let pts = vec![Lab::default(); 3];
        assert!(matches!(
            kmeans_lab(&pts, 5, 0),
            Err(PaletteError::TooFewPoints { points: 3, k: 5 })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let pts: Vec<Lab> = (0..200)
            .map(|i| Lab::new((i * 37 % 100) as f64, (i * 11 % 50) as f64, (i * 7 % 30) as f64))
            .collect();
        assert_eq!(kmeans_lab(&pts, 4, 9).unwrap(), kmeans_lab(&pts, 4, 9).unwrap());
    }

    #[test]
    fn wcss_non_increasing() {
        let pts: Vec<Lab> = (0..500)
            .map(|i| Lab::new((i * 37 % 101) as f64, (i * 11 % 53) as f64 - 20.0, (i * 7 % 31) as f64))
            .collect();
        for k in 2..=10 {
            let fit = kmeans_lab(&pts, k, k as u64).unwrap();
            for w in fit.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "k={k}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn empty_clusters_are_refilled() {
        // Two distinct locations, one far outlier: k = 3 must use the outlier.
        let mut pts = vec![Lab::new(10.0, 0.0, 0.0); 10];
        pts.extend(vec![Lab::new(12.0, 0.0, 0.0); 10]);
        pts.push(Lab::new(90.0, 0.0, 0.0));
        let fit = kmeans_lab(&pts, 3, 3).unwrap();
        assert!(!fit.has_empty_cluster());
        assert_eq!(fit.wcss, 0.0);
    }
}

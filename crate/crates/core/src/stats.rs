//! Two-sample testing with the nearest-neighbour coincidence statistic.
//!
//! Both samples are pooled and every point looks up its `K_nn` nearest
//! neighbours. The statistic counts (point, neighbour) pairs that come from
//! the same sample; large counts mean the samples separate. Significance is
//! judged against a label-permutation null.

use rand::seq::SliceRandom;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::{par, seed};

pub const DEFAULT_KNN: usize = 3;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const MIN_PERMUTATIONS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq, Serialize)]
pub enum StatsError {
    #[error("vector dimension {found} does not match {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("samples of size {n1} and {n2} are too small for {knn} neighbours")]
    TooSmall { n1: usize, n2: usize, knn: usize },
    #[error("neighbour count must be positive")]
    ZeroNeighbors,
    #[error("{0} permutations requested, at least 100 required")]
    TooFewPermutations(usize),
    #[error("at least two groups are required, got {0}")]
    TooFewGroups(usize),
    #[error("alpha {0} outside (0, 1)")]
    InvalidAlpha(f64),
}

fn pool<'a>(s1: &'a [Vec<f64>], s2: &'a [Vec<f64>], knn: usize) -> Result<Vec<&'a [f64]>, StatsError> {
    if knn == 0 {
        return Err(StatsError::ZeroNeighbors);
    }
    let (n1, n2) = (s1.len(), s2.len());
    if n1 == 0 || n2 == 0 || n1 + n2 < knn + 1 {
        return Err(StatsError::TooSmall { n1, n2, knn });
    }
    let expected = s1[0].len();
    let pooled: Vec<&[f64]> = s1.iter().chain(s2).map(Vec::as_slice).collect();
    if let Some(v) = pooled.iter().find(|v| v.len() != expected) {
        return Err(StatsError::DimensionMismatch {
            expected,
            found: v.len(),
        });
    }
    Ok(pooled)
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `knn` nearest neighbours of every pooled point, flattened row by row.
/// Equal distances are ordered by pooled index.
pub fn neighbor_lists(points: &[&[f64]], knn: usize) -> Vec<usize> {
    let n = points.len();
    par::map_range(n, |i| {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (dist_sq(points[i], points[j]), j))
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if cand.len() > knn {
            cand.select_nth_unstable_by(knn - 1, cmp);
            cand.truncate(knn);
        }
        cand.sort_by(cmp);
        cand.into_iter().map(|(_, j)| j).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

fn count_same(neighbors: &[usize], knn: usize, labels: &[bool]) -> usize {
    neighbors
        .chunks(knn)
        .enumerate()
        .map(|(i, nb)| nb.iter().filter(|&&j| labels[j] == labels[i]).count())
        .sum()
}

/// Number of (point, neighbour) pairs with matching sample labels.
pub fn nn_coincidences(sample1: &[Vec<f64>], sample2: &[Vec<f64>], knn: usize) -> Result<usize, StatsError> {
    let pooled = pool(sample1, sample2, knn)?;
    let labels = sample_labels(sample1.len(), sample2.len());
    Ok(count_same(&neighbor_lists(&pooled, knn), knn, &labels))
}

fn sample_labels(n1: usize, n2: usize) -> Vec<bool> {
    let mut l = vec![false; n1];
    l.resize(n1 + n2, true);
    l
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoSampleResult {
    pub statistic: usize,
    pub p_permutation: f64,
    pub p_asymptotic: f64,
    pub n1: usize,
    pub n2: usize,
    pub neighbors: usize,
    pub permutations: usize,
    pub null_mean: f64,
    pub null_sd: f64,
}

/// Permutation test on the coincidence count. Each permutation draws its
/// own generator from `seed_value`, so the result does not depend on how
/// permutations are scheduled.
pub fn two_sample_test(
    sample1: &[Vec<f64>],
    sample2: &[Vec<f64>],
    knn: usize,
    permutations: usize,
    seed_value: u64,
) -> Result<TwoSampleResult, StatsError> {
    if permutations < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewPermutations(permutations));
    }
    let pooled = pool(sample1, sample2, knn)?;
    let (n1, n2) = (sample1.len(), sample2.len());
    let neighbors = neighbor_lists(&pooled, knn);
    let labels = sample_labels(n1, n2);
    let observed = count_same(&neighbors, knn, &labels);

    let null: Vec<f64> = par::map_range(permutations, |b| {
        let mut rng = seed::rng(seed::derive(seed_value, "permutation", b as u64));
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        count_same(&neighbors, knn, &shuffled) as f64
    });
    let exceed = null.iter().filter(|&&t| t >= observed as f64).count();
    let p_permutation = (1 + exceed) as f64 / (1 + permutations) as f64;

    let mean = par::pairwise_sum(&null) / permutations as f64;
    let sq: Vec<f64> = null.iter().map(|t| (t - mean) * (t - mean)).collect();
    let sd = (par::pairwise_sum(&sq) / (permutations - 1) as f64).sqrt();
    let p_asymptotic = if sd > 0.0 {
        let z = (observed as f64 - mean) / sd;
        Normal::standard().sf(z)
    } else if observed as f64 > mean {
        0.0
    } else {
        1.0
    };

    Ok(TwoSampleResult {
        statistic: observed,
        p_permutation,
        p_asymptotic,
        n1,
        n2,
        neighbors: knn,
        permutations,
        null_mean: mean,
        null_sd: sd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOutcome {
    pub a: String,
    pub b: String,
    pub result: Option<TwoSampleResult>,
    pub error: Option<StatsError>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub labels: Vec<String>,
    /// Permutation p-values; `None` on the diagonal and for failed pairs.
    pub p_matrix: Vec<Vec<Option<f64>>>,
    pub alpha: f64,
    pub neighbors: usize,
    pub permutations: usize,
    pub pairs: Vec<PairOutcome>,
}

impl TestReport {
    pub fn p(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        self.p_matrix[i][j]
    }

    pub fn significant(&self, a: &str, b: &str) -> Option<bool> {
        self.p(a, b).map(|p| p <= self.alpha)
    }
}

/// Runs the test on every unordered pair of groups. A pair that cannot be
/// tested gets an empty cell and an error entry instead of failing the
/// report. The seed of a pair depends only on the two labels.
pub fn pairwise_matrix(
    groups: &[(String, Vec<Vec<f64>>)],
    knn: usize,
    permutations: usize,
    seed_value: u64,
    alpha: f64,
) -> Result<TestReport, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidAlpha(alpha));
    }
    if permutations < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewPermutations(permutations));
    }
    let g = groups.len();
    let mut p_matrix = vec![vec![None; g]; g];
    let mut pairs = Vec::new();
    for i in 0..g {
        for j in i + 1..g {
            let (a, sa) = &groups[i];
            let (b, sb) = &groups[j];
            let pair_seed = seed::derive(seed_value, &format!("{a}\u{1f}{b}"), 0);
            let outcome = two_sample_test(sa, sb, knn, permutations, pair_seed);
            if let Ok(r) = &outcome {
                p_matrix[i][j] = Some(r.p_permutation);
                p_matrix[j][i] = Some(r.p_permutation);
            }
            pairs.push(PairOutcome {
                a: a.clone(),
                b: b.clone(),
                error: outcome.as_ref().err().cloned(),
                result: outcome.ok(),
            });
        }
    }
    Ok(TestReport {
        labels: groups.iter().map(|(l, _)| l.clone()).collect(),
        p_matrix,
        alpha,
        neighbors: knn,
        permutations,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(cx: f64, cy: f64, n: usize, spread: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 2.399_963;
                let r = spread * (1 + i % 5) as f64 / 5.0;
                vec![cx + r * t.cos(), cy + r * t.sin()]
            })
            .collect()
    }

    #[test]
    fn singletons_give_zero() {
        assert_eq!(nn_coincidences(&[vec![0.0]], &[vec![1.0]], 1).unwrap(), 0);
    }

    #[test]
    fn separated_blobs_give_maximum() {
        let a = blob(0.0, 0.0, 5, 1.0);
        let b = blob(100.0, 0.0, 5, 1.0);
        assert_eq!(nn_coincidences(&a, &b, 1).unwrap(), 10);
        assert_eq!(nn_coincidences(&a, &b, 3).unwrap(), 30);
    }

    #[test]
    fn duplicated_samples_hit_minimum() {
        let a = blob(0.0, 0.0, 12, 3.0);
        let t = nn_coincidences(&a, &a, 1).unwrap();
        assert_eq!(t, 0);
        let r = two_sample_test(&a, &a, 1, 200, 5).unwrap();
        assert_eq!(r.statistic, 0);
        assert_eq!(r.p_permutation, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(
            nn_coincidences(&[vec![0.0, 1.0]], &[vec![1.0]], 1),
            Err(StatsError::DimensionMismatch { expected: 2, found: 1 })
        );
        assert_eq!(
            nn_coincidences(&[vec![0.0]], &[vec![1.0]], 2),
            Err(StatsError::TooSmall { n1: 1, n2: 1, knn: 2 })
        );
        assert_eq!(
            nn_coincidences(&[], &[vec![1.0]], 1),
            Err(StatsError::TooSmall { n1: 0, n2: 1, knn: 1 })
        );
        let a = blob(0.0, 0.0, 10, 1.0);
        assert_eq!(
            two_sample_test(&a, &a, 3, 99, 0),
            Err(StatsError::TooFewPermutations(99))
        );
        assert_eq!(
            pairwise_matrix(&[("x".into(), a)], 3, 100, 0, 0.05),
            Err(StatsError::TooFewGroups(1))
        );
    }

    #[test]
    fn separated_blobs_reject() {
        let a = blob(0.0, 0.0, 30, 1.0);
        let b = blob(10.0, 0.0, 30, 1.0);
        let r = two_sample_test(&a, &b, 3, 1000, 1).unwrap();
        assert!(r.p_permutation < 0.01, "{r:?}");
        assert_eq!(r.p_permutation, 1.0 / 1001.0);
        assert!(r.p_asymptotic < 0.01);
    }

    #[test]
    fn report_marks_small_groups_per_pair() {
        let groups = vec![
            ("a".to_string(), blob(0.0, 0.0, 20, 1.0)),
            ("b".to_string(), blob(50.0, 0.0, 20, 1.0)),
            ("c".to_string(), Vec::new()),
        ];
        let r = pairwise_matrix(&groups, 3, 200, 11, 0.05).unwrap();
        assert!(r.p("a", "b").unwrap() < 0.05);
        assert_eq!(r.p("a", "c"), None);
        assert_eq!(r.p("a", "a"), None);
        assert_eq!(r.pairs.len(), 3);
        assert!(r.pairs[1].error.is_some());
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(r.p_matrix[i][j], r.p_matrix[j][i]);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = blob(0.0, 0.0, 15, 2.0);
        let b = blob(1.0, 0.5, 15, 2.0);
        assert_eq!(
            two_sample_test(&a, &b, 3, 500, 4).unwrap(),
            two_sample_test(&a, &b, 3, 500, 4).unwrap()
        );
    }
}

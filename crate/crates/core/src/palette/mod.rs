//! Pencil palettes.
//!
//! A drawing's palette is found in three steps: a two-component GMM
//! separates ink from paper ([`extract_foreground`]), k-means clusters the
//! ink pixels for every k in `2..=10` ([`kmeans_lab`]), and the k with the
//! highest centroid-approximated Silhouette wins ([`select_palette`]).
//! Group palettes pool per-drawing centroids by mass and re-cluster them.

mod gmm;
mod kmeans;
mod silhouette;

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub use gmm::{extract_foreground, ForegroundModel, MAX_ITERATIONS, MIN_SEPARATION, TOLERANCE, VARIANCE_FLOOR};
pub use kmeans::{kmeans_lab, kmeans_weighted, kmeans_with, KMeansFit, KMeansOptions};
pub use silhouette::{silhouette_approx, silhouette_approx_samples, silhouette_exact, silhouette_exact_samples};

use crate::corpus::GroupKey;
use crate::imaging::{lab_to_rgb8, Lab, LabImage, RasterImage};
use crate::{par, seed};

/// Smallest candidate cluster count.
pub const K_MIN: usize = 2;
/// Largest candidate cluster count.
pub const K_MAX: usize = 10;
/// Default number of swatches in a group palette.
pub const DEFAULT_SWATCHES: usize = 12;

#[derive(Debug, Error, PartialEq)]
pub enum PaletteError {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("{points} points cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("invalid cluster count {0}")]
    InvalidK(usize),
    #[error("Silhouette needs at least two clusters")]
    SingleCluster,
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("assignment {0} has no centroid")]
    InvalidAssignment(usize),
    #[error("only {found} foreground pixels, need {required}")]
    TooFewForeground { found: usize, required: usize },
    #[error("no clustering in {0}..={1} is usable")]
    NoFeasibleK(usize, usize),
    #[error("nothing to pool")]
    EmptyPool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaletteOptions {
    pub k_min: usize,
    pub k_max: usize,
    pub kmeans: KMeansOptions,
    /// Minimum number of foreground pixels.
    pub min_foreground: usize,
    /// Also compute the `O(f^2)` exact Silhouette curve.
    pub exact_silhouette: bool,
}

impl Default for PaletteOptions {
    fn default() -> Self {
        PaletteOptions {
            k_min: K_MIN,
            k_max: K_MAX,
            kmeans: KMeansOptions::default(),
            min_foreground: 10,
            exact_silhouette: false,
        }
    }
}

/// One drawing's palette, centroids ordered by descending mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Palette {
    #[serde(rename = "K")]
    pub k: usize,
    pub centroids: Vec<Lab>,
    pub masses: Vec<u64>,
    /// Approximate Silhouette per feasible k.
    pub curve: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_curve: Option<BTreeMap<usize, f64>>,
}

impl Palette {
    pub fn total_mass(&self) -> u64 {
        self.masses.iter().sum()
    }

    /// Index of the nearest centroid.
    pub fn nearest(&self, p: Lab) -> usize {
        kmeans::nearest(p, &self.centroids).0
    }
}

/// Position of the maximum; ties resolve to the smallest k.
pub fn argmax_k(curve: &BTreeMap<usize, f64>) -> Option<usize> {
    curve
        .iter()
        .fold(None::<(usize, f64)>, |best, (&k, &s)| match best {
            Some((_, bs)) if bs >= s => best,
            _ => Some((k, s)),
        })
        .map(|(k, _)| k)
}

/// Output of the k sweep for one drawing, before the argmax.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub fits: BTreeMap<usize, KMeansFit>,
    pub approx: BTreeMap<usize, f64>,
    pub exact: Option<BTreeMap<usize, f64>>,
}

/// Clusters `points` for every k in the configured range. Each k draws its
/// randomness from `seed::derive(seed, "k", k)`, so the k values can run in
/// parallel without affecting results. Clusterings with an empty cluster
/// (fewer distinct colours than k) are left out of the curves.
pub fn sweep_k(points: &[Lab], seed_value: u64, options: &PaletteOptions) -> Result<Sweep, PaletteError> {
    let ks: Vec<usize> = (options.k_min.max(2)..=options.k_max).collect();
    type Step = Option<(usize, KMeansFit, f64, Option<f64>)>;
    let results = par::map(&ks, |&k| -> Result<Step, PaletteError> {
        if points.len() < k {
            return Ok(None);
        }
        let fit = kmeans_with(points, k, seed::derive(seed_value, "k", k as u64), &options.kmeans)?;
        if fit.has_empty_cluster() {
            return Ok(None);
        }
        let approx = silhouette_approx(points, &fit.assignments, &fit.centroids)?;
        let exact = if options.exact_silhouette {
            Some(silhouette_exact(points, &fit.assignments)?)
        } else {
            None
        };
        Ok(Some((k, fit, approx, exact)))
    });
    let mut sweep = Sweep {
        fits: BTreeMap::new(),
        approx: BTreeMap::new(),
        exact: options.exact_silhouette.then(BTreeMap::new),
    };
    for r in results {
        if let Some((k, fit, approx, exact)) = r? {
            sweep.fits.insert(k, fit);
            sweep.approx.insert(k, approx);
            if let (Some(curve), Some(e)) = (sweep.exact.as_mut(), exact) {
                curve.insert(k, e);
            }
        }
    }
    Ok(sweep)
}

/// Palette from already-separated foreground pixels.
pub fn palette_from_points(points: &[Lab], seed_value: u64, options: &PaletteOptions) -> Result<Palette, PaletteError> {
    if points.len() < options.min_foreground {
        return Err(PaletteError::TooFewForeground {
            found: points.len(),
            required: options.min_foreground,
        });
    }
    let mut sweep = sweep_k(points, seed_value, options)?;
    let k = argmax_k(&sweep.approx).ok_or(PaletteError::NoFeasibleK(options.k_min, options.k_max))?;
    let fit = sweep.fits.remove(&k).expect("fit for every scored k");
    let counts = fit.counts();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    Ok(Palette {
        k,
        centroids: order.iter().map(|&i| fit.centroids[i]).collect(),
        masses: order.iter().map(|&i| counts[i] as u64).collect(),
        curve: sweep.approx,
        exact_curve: sweep.exact,
    })
}

/// Palette of `img` given its fitted foreground.
pub fn select_palette_with(
    img: &LabImage,
    foreground: &ForegroundModel,
    seed_value: u64,
    options: &PaletteOptions,
) -> Result<Palette, PaletteError> {
    palette_from_points(&foreground.foreground_pixels(img), seed_value, options)
}

/// Foreground extraction followed by the Silhouette-selected k-means palette.
pub fn select_palette(img: &LabImage, seed_value: u64) -> Result<Palette, PaletteError> {
    let fg = extract_foreground(img)?;
    select_palette_with(img, &fg, seed_value, &PaletteOptions::default())
}

/// Replaces every foreground pixel with its nearest palette colour and
/// paints the background white.
pub fn reconstruct(img: &LabImage, palette: &Palette, foreground: &[bool]) -> RasterImage {
    assert_eq!(img.pixels().len(), foreground.len(), "mask size");
    let colors: Vec<[u8; 3]> = palette.centroids.iter().map(|&c| lab_to_rgb8(c)).collect();
    let pixels = img
        .pixels()
        .iter()
        .zip(foreground)
        .map(|(&p, &fg)| {
            if fg {
                colors[palette.nearest(p)]
            } else {
                [255, 255, 255]
            }
        })
        .collect();
    RasterImage::new(img.width(), img.height(), pixels).expect("same dimensions")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Swatch {
    pub lab: Lab,
    pub weight: f64,
}

/// Pooled palette for a group, most popular swatch first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupPalette {
    pub key: GroupKey,
    pub swatches: Vec<Swatch>,
}

/// Pools centroids (weighted by mass) across palettes. When the pool holds
/// more than `swatch_count` distinct colours they are merged with weighted
/// k-means; swatches are sorted by absorbed weight, heaviest first.
pub fn group_palette(palettes: &[Palette], swatch_count: usize, key: GroupKey) -> Result<GroupPalette, PaletteError> {
    if swatch_count == 0 {
        return Err(PaletteError::InvalidK(0));
    }
    let mut points: Vec<Lab> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for p in palettes {
        for (&c, &m) in p.centroids.iter().zip(&p.masses) {
            if m == 0 {
                continue;
            }
            match points.iter().position(|&q| q == c) {
                Some(i) => weights[i] += m as f64,
                None => {
                    points.push(c);
                    weights.push(m as f64);
                }
            }
        }
    }
    if points.is_empty() {
        return Err(PaletteError::EmptyPool);
    }
    let mut swatches: Vec<Swatch> = if points.len() <= swatch_count {
        points
            .into_iter()
            .zip(weights)
            .map(|(lab, weight)| Swatch { lab, weight })
            .collect()
    } else {
        let fit = kmeans_weighted(
            &points,
            &weights,
            swatch_count,
            seed::derive(0, "group-palette", swatch_count as u64),
            &KMeansOptions::default(),
        )?;
        let mut absorbed = vec![0.0; swatch_count];
        for (&a, &w) in fit.assignments.iter().zip(&weights) {
            absorbed[a] += w;
        }
        fit.centroids
            .into_iter()
            .zip(absorbed)
            .filter(|&(_, w)| w > 0.0)
            .map(|(lab, weight)| Swatch { lab, weight })
            .collect()
    };
    swatches.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    Ok(GroupPalette { key, swatches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GroupDimension;
    use crate::imaging::{rgb_to_lab, srgb_to_lab};

    fn key() -> GroupKey {
        GroupKey::new(GroupDimension::Country, "CH")
    }

    fn palette(centroids: Vec<Lab>, masses: Vec<u64>) -> Palette {
        Palette {
            k: centroids.len(),
            centroids,
            masses,
            curve: BTreeMap::new(),
            exact_curve: None,
        }
    }

    #[test]
    fn argmax_prefers_smaller_k_on_ties() {
        let curve: BTreeMap<usize, f64> = [(2, 0.5), (3, 0.9), (4, 0.9), (5, 0.1)].into();
        assert_eq!(argmax_k(&curve), Some(3));
        assert_eq!(argmax_k(&BTreeMap::new()), None);
    }

    #[test]
    fn near_blank_drawing_is_rejected() {
        let img = RasterImage::from_fn(30, 30, |x, y| {
            if y == 3 && x < 5 {
                [20, 20, 200]
            } else {
                [255, 255, 255]
            }
        });
        let err = select_palette(&srgb_to_lab(&img), 1).unwrap_err();
        assert_eq!(err, PaletteError::TooFewForeground { found: 5, required: 10 });
    }

    #[test]
    fn flat_single_colour_reconstructs_exactly() {
        let ink = [200, 30, 30];
        let img = RasterImage::from_fn(20, 20, |x, _| if x < 8 { ink } else { [255, 255, 255] });
        let lab = srgb_to_lab(&img);
        let fg = extract_foreground(&lab).unwrap();
        let p = palette(vec![rgb_to_lab(ink)], vec![fg.foreground_count() as u64]);
        let out = reconstruct(&lab, &p, &fg.mask);
        assert_eq!(out, img);
    }

    #[test]
    fn group_palette_pooling() {
        let a = Lab::new(50.0, 10.0, 10.0);
        let b = Lab::new(70.0, -40.0, 30.0);
        let one = palette(vec![a, b], vec![30, 70]);
        let g = group_palette(std::slice::from_ref(&one), 12, key()).unwrap();
        assert_eq!(
            g.swatches,
            vec![Swatch { lab: b, weight: 70.0 }, Swatch { lab: a, weight: 30.0 }]
        );

        let g = group_palette(&[one.clone(), one], 12, key()).unwrap();
        assert_eq!(
            g.swatches,
            vec![Swatch { lab: b, weight: 140.0 }, Swatch { lab: a, weight: 60.0 }]
        );

        assert_eq!(group_palette(&[], 12, key()), Err(PaletteError::EmptyPool));
    }

    #[test]
    fn group_palette_merges_known_clusters() {
        // Three colour families with masses 10+20 (red), 50 (blue), 5+5+15 (green).
        let red = [Lab::new(45.0, 60.0, 40.0), Lab::new(46.0, 61.0, 39.0)];
        let blue = Lab::new(35.0, 30.0, -70.0);
        let green = [
            Lab::new(50.0, -50.0, 50.0),
            Lab::new(51.0, -49.0, 50.0),
            Lab::new(49.0, -51.0, 51.0),
        ];
        let ps = vec![
            palette(vec![red[0], blue], vec![10, 50]),
            palette(vec![red[1], green[0]], vec![20, 5]),
            palette(vec![green[1], green[2]], vec![5, 15]),
        ];
        let g = group_palette(&ps, 3, key()).unwrap();
        let weights: Vec<f64> = g.swatches.iter().map(|s| s.weight).collect();
        assert_eq!(weights, vec![50.0, 30.0, 25.0]);
        assert_eq!(g.swatches[0].lab, blue);
        // Weighted mean of the two reds: (10*red0 + 20*red1) / 30.
        let red_mean = Lab::new(
            (10.0 * 45.0 + 20.0 * 46.0) / 30.0,
            (10.0 * 60.0 + 20.0 * 61.0) / 30.0,
            (10.0 * 40.0 + 20.0 * 39.0) / 30.0,
        );
        assert!(g.swatches[1].lab.distance(red_mean) < 1e-9);
    }
}

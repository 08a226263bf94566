//! Reference-colour presence masks and their aggregation into heatmaps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{Lab, LabImage};

/// Default side of the square working raster.
pub const DEFAULT_SIDE: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum ColorFieldError {
    #[error("expected a {expected}x{expected} image, got {width}x{height}")]
    DimensionMismatch {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error("mask sides differ: {0} vs {1}")]
    MixedSides(usize, usize),
    #[error("no masks to aggregate")]
    NoMasks,
    #[error("foreground mask is empty")]
    EmptyForeground,
    #[error("invalid reference colour `{0}`: {1}")]
    InvalidReference(String, String),
}

/// A named LAB colour with a Euclidean acceptance radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceColor {
    pub name: String,
    pub lab: Lab,
    pub threshold: f64,
}

impl ReferenceColor {
    pub fn new(name: impl Into<String>, lab: Lab, threshold: f64) -> Result<Self, ColorFieldError> {
        let name = name.into();
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(ColorFieldError::InvalidReference(
                name,
                "threshold must be positive".into(),
            ));
        }
        if !(0.0..=100.0).contains(&lab.l) {
            return Err(ColorFieldError::InvalidReference(name, "L must lie in [0, 100]".into()));
        }
        Ok(ReferenceColor { name, lab, threshold })
    }

    pub fn green() -> Self {
        ReferenceColor {
            name: "green".into(),
            lab: Lab::new(50.0, -50.0, 50.0),
            threshold: 50.0,
        }
    }

    pub fn yellow() -> Self {
        ReferenceColor {
            name: "yellow".into(),
            lab: Lab::new(80.0, 0.0, 100.0),
            threshold: 50.0,
        }
    }

    pub fn defaults() -> Vec<Self> {
        vec![Self::green(), Self::yellow()]
    }

    pub fn matches(&self, px: Lab) -> bool {
        px.distance(self.lab) <= self.threshold
    }
}

/// Parses `name,L,a,b,threshold`.
impl FromStr for ReferenceColor {
    type Err = ColorFieldError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = |m: &str| ColorFieldError::InvalidReference(s.to_string(), m.to_string());
        if parts.len() != 5 || parts[0].is_empty() {
            return Err(bad("expected name,L,a,b,threshold"));
        }
        let num = |t: &str| t.parse::<f64>().map_err(|_| bad("non-numeric component"));
        ReferenceColor::new(
            parts[0],
            Lab::new(num(parts[1])?, num(parts[2])?, num(parts[3])?),
            num(parts[4])?,
        )
    }
}

impl fmt::Display for ReferenceColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{},{}",
            self.name, self.lab.l, self.lab.a, self.lab.b, self.threshold
        )
    }
}

/// Square binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PresenceMask {
    side: usize,
    bits: Vec<bool>,
}

impl PresenceMask {
    pub fn new(side: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), side * side, "mask size");
        PresenceMask { side, bits }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.side + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        PresenceMask {
            side: self.side,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let s = self.side;
        let bits = (0..s * s).map(|i| self.bits[(i / s) * s + (s - 1 - i % s)]).collect();
        PresenceMask { side: s, bits }
    }
}

/// Per-cell counts over `n` masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HeatMap {
    pub side: usize,
    pub counts: Vec<u32>,
    pub n: usize,
}

impl HeatMap {
    pub fn empty(side: usize) -> Self {
        HeatMap {
            side,
            counts: vec![0; side * side],
            n: 0,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.counts[y * self.side + x]
    }

    pub fn add(&mut self, mask: &PresenceMask) -> Result<(), ColorFieldError> {
        if mask.side != self.side {
            return Err(ColorFieldError::MixedSides(self.side, mask.side));
        }
        for (c, &b) in self.counts.iter_mut().zip(&mask.bits) {
            *c += u32::from(b);
        }
        self.n += 1;
        Ok(())
    }

    /// Combines two partial sums.
    pub fn merge(&mut self, other: &HeatMap) -> Result<(), ColorFieldError> {
        if other.side != self.side {
            return Err(ColorFieldError::MixedSides(self.side, other.side));
        }
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        self.n += other.n;
        Ok(())
    }

    /// Fraction of the total count in each horizontal band of `bands` rows.
    pub fn row_band_mass(&self, bands: usize) -> Vec<f64> {
        let total: u64 = self.counts.iter().map(|&c| u64::from(c)).sum();
        let mut out = vec![0u64; bands];
        for y in 0..self.side {
            let band = y * bands / self.side;
            out[band] += self.counts[y * self.side..(y + 1) * self.side]
                .iter()
                .map(|&c| u64::from(c))
                .sum::<u64>();
        }
        out.into_iter()
            .map(|m| if total == 0 { 0.0 } else { m as f64 / total as f64 })
            .collect()
    }
}

/// Marks pixels within `reference.threshold` (inclusive) of the reference.
pub fn presence_mask(img: &LabImage, reference: &ReferenceColor, side: usize) -> Result<PresenceMask, ColorFieldError> {
    if img.width() != side || img.height() != side {
        return Err(ColorFieldError::DimensionMismatch {
            expected: side,
            width: img.width(),
            height: img.height(),
        });
    }
    Ok(PresenceMask {
        side,
        bits: img.pixels().iter().map(|&px| reference.matches(px)).collect(),
    })
}

pub fn aggregate_masks(masks: &[PresenceMask]) -> Result<HeatMap, ColorFieldError> {
    let first = masks.first().ok_or(ColorFieldError::NoMasks)?;
    let mut heat = HeatMap::empty(first.side);
    for m in masks {
        heat.add(m)?;
    }
    Ok(heat)
}

/// `|mask & foreground| / |foreground|`.
pub fn color_proportion(mask: &PresenceMask, foreground: &PresenceMask) -> Result<f64, ColorFieldError> {
    if mask.side != foreground.side {
        return Err(ColorFieldError::MixedSides(mask.side, foreground.side));
    }
    let fg = foreground.count();
    if fg == 0 {
        return Err(ColorFieldError::EmptyForeground);
    }
    let both = mask.bits.iter().zip(&foreground.bits).filter(|(&m, &f)| m && f).count();
    Ok(both as f64 / fg as f64)
}

/// `|mask| / side^2`, the all-pixels denominator.
pub fn color_proportion_all(mask: &PresenceMask) -> f64 {
    mask.count() as f64 / mask.bits.len() as f64
}

/// Downsamples a `width x height` binary mask to `side x side` by majority
/// vote over the source pixels covered by each target cell. Exact ties are
/// resolved as unset.
pub fn downsample_majority(bits: &[bool], width: usize, height: usize, side: usize) -> PresenceMask {
    assert_eq!(bits.len(), width * height, "mask size");
    let span = |i: usize, src: usize| -> (usize, usize) {
        let lo = i * src / side;
        let hi = ((i + 1) * src).div_ceil(side).max(lo + 1).min(src);
        (lo, hi)
    };
    let mut out = Vec::with_capacity(side * side);
    for cy in 0..side {
        let (y0, y1) = span(cy, height);
        for cx in 0..side {
            let (x0, x1) = span(cx, width);
            let mut set = 0usize;
            for y in y0..y1 {
                set += bits[y * width + x0..y * width + x1].iter().filter(|&&b| b).count();
            }
            let total = (y1 - y0) * (x1 - x0);
            out.push(2 * set > total);
        }
    }
    PresenceMask { side, bits: out }
}

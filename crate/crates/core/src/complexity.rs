//! Drawing complexity: Harris corner counts and palette variability.

use serde::Serialize;
use thiserror::Error;

use crate::corpus::AgeBin;
use crate::imaging::{lab_to_rgb8, GrayImage};
use crate::palette::Palette;

#[derive(Debug, Error, PartialEq)]
pub enum ComplexityError {
    #[error("image {0}x{1} is smaller than 3x3")]
    TooSmall(usize, usize),
    #[error("invalid Harris parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarrisParams {
    /// Weight of the squared trace in `det - k * trace^2`.
    pub k: f64,
    /// Responses at or below this fraction of the maximum are dropped.
    pub rel_threshold: f64,
    /// Chebyshev radius of the non-maximum suppression window.
    pub nms_radius: usize,
    /// Gaussian window for the structure tensor.
    pub sigma: f64,
}

impl Default for HarrisParams {
    fn default() -> Self {
        HarrisParams {
            k: 0.04,
            rel_threshold: 0.01,
            nms_radius: 5,
            sigma: 1.5,
        }
    }
}

fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Sobel gradients with replicated borders. Symmetric taps are summed in
/// pairs so a mirrored image yields exactly mirrored gradients.
fn sobel(img: &GrayImage) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = (img.width(), img.height());
    let px = |x: isize, y: isize| img.get(clamp_idx(x, w), clamp_idx(y, h));
    let column = |x: isize, y: isize| (px(x, y - 1) + px(x, y + 1)) + 2.0 * px(x, y);
    let row = |x: isize, y: isize| (px(x - 1, y) + px(x + 1, y)) + 2.0 * px(x, y);
    let mut gx = Vec::with_capacity(w * h);
    let mut gy = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            gx.push(column(x + 1, y) - column(x - 1, y));
            gy.push(row(x, y + 1) - row(x, y - 1));
        }
    }
    (gx, gy)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable blur with replicated borders, summing mirrored taps in pairs.
fn blur(data: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = kernel.len() / 2;
    let taps = |get: &dyn Fn(isize) -> f64| -> f64 {
        let mut acc = kernel[r] * get(0);
        for i in 1..=r {
            acc += kernel[r + i] * (get(-(i as isize)) + get(i as isize));
        }
        acc
    };
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps(&|d| data[y * w + clamp_idx(x as isize + d, w)]);
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps(&|d| tmp[clamp_idx(y as isize + d, h) * w + x]);
        }
    }
    out
}

/// Harris response `det(M) - k * trace(M)^2` of the Gaussian-smoothed
/// structure tensor built from Sobel gradients.
pub fn harris_response(img: &GrayImage, k: f64, sigma: f64) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let (gx, gy) = sobel(img);
    let kernel = gaussian_kernel(sigma);
    let xx: Vec<f64> = gx.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = gy.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let (sxx, syy, sxy) = (
        blur(&xx, w, h, &kernel),
        blur(&yy, w, h, &kernel),
        blur(&xy, w, h, &kernel),
    );
    (0..w * h)
        .map(|i| {
            let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
            let tr = sxx[i] + syy[i];
            det - k * tr * tr
        })
        .collect()
}

/// Corner positions `(x, y)` surviving thresholding and suppression.
pub fn harris_corner_points(img: &GrayImage, params: &HarrisParams) -> Result<Vec<(usize, usize)>, ComplexityError> {
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(ComplexityError::TooSmall(w, h));
    }
    if params.sigma.is_nan() || params.sigma <= 0.0 {
        return Err(ComplexityError::InvalidParameter("sigma"));
    }
    if !(0.0..=1.0).contains(&params.rel_threshold) {
        return Err(ComplexityError::InvalidParameter("rel_threshold"));
    }
    let resp = harris_response(img, params.k, params.sigma);
    let max = resp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_nan() || max <= 0.0 {
        return Ok(Vec::new());
    }
    let threshold = params.rel_threshold * max;
    let r = params.nms_radius as isize;
    let window = |x: usize, y: usize| {
        let ys = (y as isize - r).max(0) as usize..=(y as isize + r).min(h as isize - 1) as usize;
        let xs = (x as isize - r).max(0) as usize..=(x as isize + r).min(w as isize - 1) as usize;
        ys.flat_map(move |ny| xs.clone().map(move |nx| (nx, ny)))
    };
    // Window maxima above the threshold. Equal maxima closer than the
    // radius form one corner, which keeps the count independent of scan
    // direction.
    let mut peaks: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = resp[y * w + x];
            if v > threshold && window(x, y).all(|(nx, ny)| resp[ny * w + nx] <= v) {
                peaks.push((x, y));
            }
        }
    }
    let mut parent: Vec<usize> = (0..peaks.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..peaks.len() {
        for j in i + 1..peaks.len() {
            let (a, b) = (peaks[i], peaks[j]);
            if a.0.abs_diff(b.0) <= params.nms_radius && a.1.abs_diff(b.1) <= params.nms_radius {
                let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    Ok((0..peaks.len())
        .filter(|&i| root(&mut parent, i) == i)
        .map(|i| peaks[i])
        .collect())
}

pub fn harris_corners(img: &GrayImage, params: &HarrisParams) -> Result<usize, ComplexityError> {
    harris_corner_points(img, params).map(|v| v.len())
}

/// Mean over R, G, B of the population variance of the palette centroids
/// in 8-bit sRGB. Masses are ignored.
pub fn palette_variability(palette: &Palette) -> f64 {
    let rgb: Vec<[f64; 3]> = palette
        .centroids
        .iter()
        .map(|&c| lab_to_rgb8(c).map(f64::from))
        .collect();
    rgb_variability(&rgb)
}

/// Mean per-channel population variance of a set of RGB colours.
pub fn rgb_variability(colors: &[[f64; 3]]) -> f64 {
    if colors.is_empty() {
        return 0.0;
    }
    let n = colors.len() as f64;
    let mut total = 0.0;
    for c in 0..3 {
        let mean = colors.iter().map(|v| v[c]).sum::<f64>() / n;
        total += colors.iter().map(|v| (v[c] - mean).powi(2)).sum::<f64>() / n;
    }
    total / 3.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityRecord {
    pub id: String,
    pub age: Option<f64>,
    pub corner_count: usize,
    pub palette_variability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinMedian {
    pub bin: String,
    pub n: usize,
    pub corner_median: Option<f64>,
    pub variability_median: Option<f64>,
}

/// Points for the two age scatter plots plus per-bin medians.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ScatterDataset {
    pub corners: Vec<(f64, f64)>,
    pub variability: Vec<(f64, f64)>,
    pub bin_medians: Vec<BinMedian>,
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Records without an age are left out. Bins with no records are omitted.
pub fn complexity_by_age(records: &[ComplexityRecord], bins: &[AgeBin]) -> ScatterDataset {
    let mut out = ScatterDataset::default();
    for r in records {
        let Some(age) = r.age else { continue };
        out.corners.push((age, r.corner_count as f64));
        if let Some(v) = r.palette_variability {
            out.variability.push((age, v));
        }
    }
    for bin in bins {
        let members: Vec<&ComplexityRecord> = records
            .iter()
            .filter(|r| r.age.is_some_and(|a| bin.contains(a)))
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut corners: Vec<f64> = members.iter().map(|r| r.corner_count as f64).collect();
        let mut var: Vec<f64> = members.iter().filter_map(|r| r.palette_variability).collect();
        out.bin_medians.push(BinMedian {
            bin: bin.label(),
            n: members.len(),
            corner_median: median(&mut corners),
            variability_median: median(&mut var),
        });
    }
    out
}

//! Two-component diagonal Gaussian mixture separating paper from ink.
//!
//! The fit runs EM on every pixel in LAB. Initialisation encodes the prior
//! that paper is lighter than ink and covers most of the sheet: the
//! background mean starts at the 95th percentile of `L`, the foreground at
//! the 25th, with equal mixing weights.

use serde::Serialize;

use super::PaletteError;
use crate::colorfield::{downsample_majority, PresenceMask};
use crate::imaging::{Lab, LabImage};
use crate::par;

/// Per-channel variance floor.
pub const VARIANCE_FLOOR: f64 = 1e-4;
/// Relative log-likelihood change that ends the iteration.
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 200;
/// Minimum LAB distance between the two fitted means. Below it the image
/// holds a single population (blank sheet or monochrome scan).
pub const MIN_SEPARATION: f64 = 5.0;

const BG: usize = 0;
const FG: usize = 1;
const CHUNK: usize = 4096;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Fitted mixture. Index 0 is the background (paper), 1 the foreground.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForegroundModel {
    pub mixing: [f64; 2],
    pub means: [Lab; 2],
    pub variances: [[f64; 3]; 2],
    /// Row-major, `true` for foreground pixels.
    #[serde(skip)]
    pub mask: Vec<bool>,
    pub width: usize,
    pub height: usize,
    /// Log-likelihood at the start of each EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

impl ForegroundModel {
    pub fn background_mixing(&self) -> f64 {
        self.mixing[BG]
    }

    pub fn foreground_mixing(&self) -> f64 {
        self.mixing[FG]
    }

    pub fn background_mean(&self) -> Lab {
        self.means[BG]
    }

    pub fn foreground_mean(&self) -> Lab {
        self.means[FG]
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Foreground pixels in row-major order.
    pub fn foreground_pixels(&self, img: &LabImage) -> Vec<Lab> {
        img.pixels()
            .iter()
            .zip(&self.mask)
            .filter_map(|(&p, &m)| m.then_some(p))
            .collect()
    }

    /// The mask resampled to a `side x side` grid by majority vote.
    pub fn mask_at(&self, side: usize) -> PresenceMask {
        downsample_majority(&self.mask, self.width, self.height, side)
    }
}

#[derive(Clone, Copy)]
struct Params {
    log_mix: [f64; 2],
    mean: [[f64; 3]; 2],
    var: [[f64; 3]; 2],
}

impl Params {
    /// Log joint density of `x` under each component.
    fn log_joint(&self, x: &[f64; 3]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (c, o) in out.iter_mut().enumerate() {
            let mut s = self.log_mix[c];
            for ((&xd, &m), &v) in x.iter().zip(&self.mean[c]).zip(&self.var[c]) {
                let diff = xd - m;
                s -= 0.5 * (LN_2PI + v.ln() + diff * diff / v);
            }
            *o = s;
        }
        out
    }
}

fn logsumexp2(v: [f64; 2]) -> f64 {
    let m = v[0].max(v[1]);
    m + ((v[0] - m).exp() + (v[1] - m).exp()).ln()
}

/// Linear-interpolated percentile of an ascending slice, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn initial_params(xs: &[[f64; 3]]) -> Params {
    let mut ls: Vec<f64> = xs.iter().map(|x| x[0]).collect();
    ls.sort_by(f64::total_cmp);
    let bg_l = percentile(&ls, 0.95);
    // Paper is everything within MIN_SEPARATION of the bright percentile.
    let cut = bg_l - MIN_SEPARATION;
    let mut fg_l = percentile(&ls, 0.25);
    if fg_l > cut {
        // Paper covers more than three quarters of the sheet: look below it.
        let darker: Vec<f64> = ls.iter().copied().filter(|&l| l < cut).collect();
        fg_l = if darker.is_empty() {
            bg_l - 1.0
        } else {
            percentile(&darker, 0.25)
        };
    }
    // Each side supplies its own a/b means and variances.
    let moments = |pred: &dyn Fn(f64) -> bool| -> Option<([f64; 3], [f64; 3])> {
        let sel: Vec<&[f64; 3]> = xs.iter().filter(|x| pred(x[0])).collect();
        if sel.is_empty() {
            return None;
        }
        let n = sel.len() as f64;
        let mut mean = [0.0; 3];
        let mut var = [0.0; 3];
        for d in 0..3 {
            mean[d] = sel.iter().map(|x| x[d]).sum::<f64>() / n;
            var[d] = (sel.iter().map(|x| (x[d] - mean[d]).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
        }
        Some((mean, var))
    };
    let global = moments(&|_| true).expect("nonempty image");
    let (bg_m, bg_var) = moments(&|l| l >= cut).unwrap_or(global);
    let (fg_m, fg_var) = moments(&|l| l < cut).unwrap_or(global);
    Params {
        log_mix: [0.5f64.ln(); 2],
        mean: [[bg_l, bg_m[1], bg_m[2]], [fg_l, fg_m[1], fg_m[2]]],
        var: [bg_var, fg_var],
    }
}

struct EStep {
    log_likelihood: f64,
    resp_fg: Vec<f64>,
}

fn e_step(params: &Params, xs: &[[f64; 3]]) -> EStep {
    let chunks = xs.len().div_ceil(CHUNK);
    let parts = par::map_range(chunks, |ci| {
        let slice = &xs[ci * CHUNK..((ci + 1) * CHUNK).min(xs.len())];
        let mut ll = Vec::with_capacity(slice.len());
        let mut resp = Vec::with_capacity(slice.len());
        for x in slice {
            let lj = params.log_joint(x);
            let lse = logsumexp2(lj);
            ll.push(lse);
            resp.push((lj[FG] - lse).exp());
        }
        (par::pairwise_sum(&ll), resp)
    });
    let mut lls = Vec::with_capacity(chunks);
    let mut resp_fg = Vec::with_capacity(xs.len());
    for (ll, r) in parts {
        lls.push(ll);
        resp_fg.extend(r);
    }
    EStep {
        log_likelihood: par::pairwise_sum(&lls),
        resp_fg,
    }
}

// Per-dimension passes reuse one buffer, so the loops index by dimension.
#[allow(clippy::needless_range_loop)]
fn m_step(xs: &[[f64; 3]], resp_fg: &[f64]) -> Option<Params> {
    let n = xs.len() as f64;
    let weight = |c: usize, i: usize| if c == FG { resp_fg[i] } else { 1.0 - resp_fg[i] };
    let mut out = Params {
        log_mix: [0.0; 2],
        mean: [[0.0; 3]; 2],
        var: [[0.0; 3]; 2],
    };
    let mut buf = vec![0.0; xs.len()];
    for c in 0..2 {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = weight(c, i);
        }
        let nc = par::pairwise_sum(&buf);
        if nc < 1.0 {
            return None;
        }
        out.log_mix[c] = (nc / n).ln();
        for d in 0..3 {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = weight(c, i) * xs[i][d];
            }
            out.mean[c][d] = par::pairwise_sum(&buf) / nc;
        }
        for d in 0..3 {
            let m = out.mean[c][d];
            for (i, b) in buf.iter_mut().enumerate() {
                let diff = xs[i][d] - m;
                *b = weight(c, i) * diff * diff;
            }
            out.var[c][d] = (par::pairwise_sum(&buf) / nc).max(VARIANCE_FLOOR);
        }
    }
    Some(out)
}

/// Fits the paper/ink mixture and assigns each pixel to the component with
/// the higher responsibility.
pub fn extract_foreground(img: &LabImage) -> Result<ForegroundModel, PaletteError> {
    let xs: Vec<[f64; 3]> = img.pixels().iter().map(|p| p.to_array()).collect();
    let Some(first) = xs.first() else {
        return Err(PaletteError::Degenerate("empty image".into()));
    };
    if xs.iter().all(|x| x == first) {
        return Err(PaletteError::Degenerate("all pixels identical".into()));
    }

    let mut params = initial_params(&xs);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut estep = e_step(&params, &xs);
    for _ in 0..MAX_ITERATIONS {
        trace.push(estep.log_likelihood);
        let Some(next) = m_step(&xs, &estep.resp_fg) else {
            return Err(PaletteError::Degenerate("mixture component collapsed".into()));
        };
        params = next;
        let prev = estep.log_likelihood;
        estep = e_step(&params, &xs);
        if ((estep.log_likelihood - prev) / prev.abs().max(f64::MIN_POSITIVE)).abs() < TOLERANCE {
            converged = true;
            break;
        }
    }
    trace.push(estep.log_likelihood);

    // The lighter component is the paper.
    let (bg, fg) = if params.mean[BG][0] >= params.mean[FG][0] {
        (BG, FG)
    } else {
        (FG, BG)
    };
    let means = [Lab::from_array(params.mean[bg]), Lab::from_array(params.mean[fg])];
    if means[0].distance(means[1]) < MIN_SEPARATION {
        return Err(PaletteError::Degenerate(format!(
            "component means only {:.2} apart: blank or monochrome scan",
            means[0].distance(means[1])
        )));
    }
    let mask = estep
        .resp_fg
        .iter()
        .map(|&r| if fg == FG { r > 0.5 } else { r < 0.5 })
        .collect();
    Ok(ForegroundModel {
        mixing: [params.log_mix[bg].exp(), params.log_mix[fg].exp()],
        means,
        variances: [params.var[bg], params.var[fg]],
        mask,
        width: img.width(),
        height: img.height(),
        log_likelihood: trace,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{rgb_to_lab, srgb_to_lab, RasterImage};

    #[test]
    fn white_and_blue_halves() {
        let img = RasterImage::from_fn(20, 10, |x, _| if x < 10 { [255, 255, 255] } else { [0, 0, 255] });
        let lab = srgb_to_lab(&img);
        let fg = extract_foreground(&lab).unwrap();
        for y in 0..10 {
            for x in 0..20 {
                assert_eq!(fg.mask[y * 20 + x], x >= 10, "pixel {x},{y}");
            }
        }
        assert!((fg.mixing[0] - 0.5).abs() < 1e-9);
        let blue = rgb_to_lab([0, 0, 255]);
        assert!(fg.foreground_mean().distance(blue) < 1e-6);

        // Brute-force responsibility check with the fitted parameters.
        for &(px, expect_fg) in &[(rgb_to_lab([255, 255, 255]), false), (blue, true)] {
            let dens = |c: usize| {
                let m = fg.means[c].to_array();
                let x = px.to_array();
                let mut p = fg.mixing[c];
                for d in 0..3 {
                    let v = fg.variances[c][d];
                    p *= (-(x[d] - m[d]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
                }
                p
            };
            assert_eq!(dens(1) > dens(0), expect_fg);
        }
    }

    #[test]
    fn identical_pixels_are_degenerate() {
        let lab = srgb_to_lab(&RasterImage::filled(8, 8, [255, 255, 255]));
        assert!(matches!(extract_foreground(&lab), Err(PaletteError::Degenerate(_))));
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let img = RasterImage::from_fn(40, 40, |x, y| {
            let v = ((x * 13 + y * 7) % 17) as u8;
            if (x / 8 + y / 8) % 3 == 0 {
                [120 + v, 40 + v, 60]
            } else {
                [250 - v / 4, 250, 248]
            }
        });
        let fg = extract_foreground(&srgb_to_lab(&img)).unwrap();
        for w in fg.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        assert!(fg.background_mean().l > fg.foreground_mean().l);
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 10.0, 20.0, 30.0, 40.0];
        assert_eq!(percentile(&v, 0.25), 10.0);
        assert_eq!(percentile(&v, 0.95), 38.0);
    }
}

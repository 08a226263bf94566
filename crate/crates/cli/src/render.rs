//! Plain raster figures. No text is drawn; the matching CSV carries the
//! numbers and labels.

use drawstat_core::colorfield::HeatMap;
use drawstat_core::imaging::lab_to_rgb8;
use drawstat_core::palette::GroupPalette;
use drawstat_core::stats::TestReport;
use drawstat_core::RasterImage;

const WHITE: [u8; 3] = [255, 255, 255];
const AXIS: [u8; 3] = [40, 40, 40];
const BAR: [u8; 3] = [50, 70, 140];

/// Horizontal bars, one pixel row per profile row, top of the page at the
/// top. Bar length is the inverse intensity on a 0..255 scale.
pub fn profile_chart(values: &[f64]) -> RasterImage {
    let (w, h) = (256 + 4, values.len().max(1));
    RasterImage::from_fn(w, h, |x, y| {
        let v = values.get(y).copied().unwrap_or(0.0).round() as usize;
        if x < 2 {
            AXIS
        } else if x - 2 < v {
            BAR
        } else {
            WHITE
        }
    })
}

/// One pixel per cell, white for zero and `tint` where every drawing in the
/// group has the colour.
pub fn heatmap(heat: &HeatMap, tint: [u8; 3]) -> RasterImage {
    let n = heat.n.max(1) as f64;
    RasterImage::from_fn(heat.side, heat.side, |x, y| {
        let t = f64::from(heat.get(x, y)) / n;
        let mix = |c: u8| (255.0 + (f64::from(c) - 255.0) * t).round() as u8;
        [mix(tint[0]), mix(tint[1]), mix(tint[2])]
    })
}

/// Swatches left to right by weight, widths proportional to weight.
pub fn palette_strip(gp: &GroupPalette) -> RasterImage {
    let (w, h) = (480usize, 60usize);
    let total: f64 = gp.swatches.iter().map(|s| s.weight).sum();
    let mut edges = Vec::with_capacity(gp.swatches.len());
    let mut acc = 0.0;
    for s in &gp.swatches {
        acc += s.weight;
        edges.push(((acc / total) * w as f64).round() as usize);
    }
    let colors: Vec<[u8; 3]> = gp.swatches.iter().map(|s| lab_to_rgb8(s.lab)).collect();
    RasterImage::from_fn(w, h, |x, _| {
        let i = edges
            .iter()
            .position(|&e| x < e)
            .unwrap_or(colors.len().saturating_sub(1));
        colors.get(i).copied().unwrap_or(WHITE)
    })
}

fn put(img: &mut [[u8; 3]], w: usize, h: usize, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        img[y as usize * w + x as usize] = c;
    }
}

/// Age on x (1..23), value on y from zero to the largest value. Bin medians
/// are drawn as horizontal segments spanning their bin.
pub fn scatter(points: &[(f64, f64)], medians: &[(f64, f64, f64)]) -> RasterImage {
    let (w, h, m) = (420usize, 300usize, 30i64);
    let (x0, x1) = (1.0, 23.0);
    let ymax = points
        .iter()
        .map(|p| p.1)
        .chain(medians.iter().map(|m| m.2))
        .fold(0.0f64, f64::max)
        .max(1.0)
        * 1.05;
    let px = |age: f64| m + ((age - x0) / (x1 - x0) * (w as i64 - 2 * m) as f64).round() as i64;
    let py = |v: f64| h as i64 - m - (v / ymax * (h as i64 - 2 * m) as f64).round() as i64;
    let mut buf = vec![WHITE; w * h];
    for x in m..w as i64 - m {
        put(&mut buf, w, h, x, h as i64 - m, AXIS);
    }
    for y in m..=h as i64 - m {
        put(&mut buf, w, h, m, y, AXIS);
    }
    for &(a, v) in points {
        let (cx, cy) = (px(a), py(v));
        for dy in -2..=2 {
            for dx in -2..=2 {
                put(&mut buf, w, h, cx + dx, cy + dy, BAR);
            }
        }
    }
    for &(lo, hi, v) in medians {
        let y = py(v);
        for x in px(lo)..=px(hi) {
            for dy in -1..=1 {
                put(&mut buf, w, h, x, y + dy, [200, 40, 40]);
            }
        }
    }
    RasterImage::new(w, h, buf).expect("sized buffer")
}

/// Cell colours: green when p is the smallest value the permutation count
/// allows, light blue for significant, blue otherwise, grey on the diagonal
/// and for untested pairs.
pub fn p_matrix(report: &TestReport) -> RasterImage {
    let g = report.labels.len();
    let cell = 24usize;
    let side = g * cell + 1;
    let floor = 1.0 / (report.permutations as f64 + 1.0);
    RasterImage::from_fn(side, side, |x, y| {
        if x % cell == 0 || y % cell == 0 {
            return [255, 255, 255];
        }
        let (i, j) = (y / cell, x / cell);
        match report.p_matrix[i][j] {
            None => [200, 200, 200],
            Some(p) if p <= floor => [60, 170, 70],
            Some(p) if p <= report.alpha => [160, 205, 240],
            Some(_) => [40, 80, 190],
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use drawstat_core::palette::Swatch;
    use drawstat_core::{GroupDimension, GroupKey, Lab};

    #[test]
    fn profile_bars_follow_values() {
        let img = profile_chart(&[0.0, 255.0, 100.0]);
        assert_eq!((img.width(), img.height()), (260, 3));
        assert_eq!(img.get(2, 0), WHITE);
        assert_eq!(img.get(256, 1), BAR);
        assert_eq!(img.get(101, 2), BAR);
        assert_eq!(img.get(102, 2), WHITE);
    }

    #[test]
    fn strip_widths_follow_weights() {
        let gp = GroupPalette {
            key: GroupKey::new(GroupDimension::Country, "x"),
            swatches: vec![
                Swatch {
                    lab: Lab::new(50.0, -50.0, 50.0),
                    weight: 3.0,
                },
                Swatch {
                    lab: Lab::new(30.0, 0.0, -40.0),
                    weight: 1.0,
                },
            ],
        };
        let img = palette_strip(&gp);
        let first = img.get(0, 0);
        assert_eq!(img.get(359, 30), first);
        assert_ne!(img.get(360, 30), first);
    }

    #[test]
    fn empty_heatmap_is_white() {
        let img = heatmap(&HeatMap::empty(4), [0, 128, 0]);
        assert!(img.pixels().iter().all(|&p| p == WHITE));
    }
}

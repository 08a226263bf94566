//! Raster types, decoding, bilinear resampling, grayscale and CIE LAB.

use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("cannot read {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("invalid target dimensions {0}x{1}")]
    InvalidDimensions(usize, usize),
    #[error("pixel buffer of length {len} does not match {width}x{height}")]
    BufferSize { width: usize, height: usize, len: usize },
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

/// 8-bit sRGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

/// Real-valued single-channel raster in `[0, 255]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

/// CIE L*a*b* colour (D65 white), `L` in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Lab { l, a, b }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.l, self.a, self.b]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Lab::new(v[0], v[1], v[2])
    }

    pub fn distance(self, other: Lab) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(self, other: Lab) -> f64 {
        let (dl, da, db) = (self.l - other.l, self.a - other.a, self.b - other.b);
        dl * dl + da * da + db * db
    }
}

/// LAB raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    pixels: Vec<Lab>,
}

macro_rules! raster_common {
    ($ty:ty, $px:ty) => {
        impl $ty {
            pub fn new(width: usize, height: usize, pixels: Vec<$px>) -> Result<Self, ImagingError> {
                if pixels.len() != width * height {
                    return Err(ImagingError::BufferSize {
                        width,
                        height,
                        len: pixels.len(),
                    });
                }
                Ok(Self {
                    width,
                    height,
                    pixels,
                })
            }

            pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> $px) -> Self {
                let mut pixels = Vec::with_capacity(width * height);
                for y in 0..height {
                    for x in 0..width {
                        pixels.push(f(x, y));
                    }
                }
                Self {
                    width,
                    height,
                    pixels,
                }
            }

            pub fn width(&self) -> usize {
                self.width
            }

            pub fn height(&self) -> usize {
                self.height
            }

            pub fn pixels(&self) -> &[$px] {
                &self.pixels
            }

            pub fn get(&self, x: usize, y: usize) -> $px {
                self.pixels[y * self.width + x]
            }

            pub fn row(&self, y: usize) -> &[$px] {
                &self.pixels[y * self.width..(y + 1) * self.width]
            }

            pub fn flip_vertical(&self) -> Self {
                Self::from_fn(self.width, self.height, |x, y| self.get(x, self.height - 1 - y))
            }

            pub fn flip_horizontal(&self) -> Self {
                Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
            }
        }
    };
}

raster_common!(RasterImage, [u8; 3]);
raster_common!(GrayImage, f64);
raster_common!(LabImage, Lab);

impl RasterImage {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImagingError> {
        let buf: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, buf)
            .expect("buffer size checked at construction")
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| ImagingError::Write {
                path: path.display().to_string(),
                message: e.to_string(),
            })
    }
}

impl GrayImage {
    /// Expands to a raster with `R = G = B`, rounding to 8 bits.
    pub fn to_raster(&self) -> RasterImage {
        RasterImage::from_fn(self.width, self.height, |x, y| {
            let v = self.get(x, y).round().clamp(0.0, 255.0) as u8;
            [v, v, v]
        })
    }
}

fn io_error(path: &Path, message: impl ToString) -> ImagingError {
    ImagingError::Unreadable {
        path: path.display().to_string(),
        message: message.to_string(),
    }
}

/// Decodes a PNG or JPEG to 8-bit RGB, compositing any alpha over white.
pub fn decode(path: &Path) -> Result<RasterImage, ImagingError> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| io_error(path, e))?
        .with_guessed_format()
        .map_err(|e| io_error(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Png) | Some(image::ImageFormat::Jpeg) => {}
        Some(other) => return Err(ImagingError::Unsupported(format!("{other:?}"))),
        None => return Err(ImagingError::Unsupported(path.display().to_string())),
    }
    let img = reader.decode().map_err(|e| match e {
        image::ImageError::Unsupported(u) => ImagingError::Unsupported(u.to_string()),
        other => io_error(path, other),
    })?;
    let rgba = img.to_rgba8();
    let (w, h) = (rgba.width() as usize, rgba.height() as usize);
    let pixels = rgba
        .pixels()
        .map(|p| {
            let [r, g, b, a] = p.0;
            let alpha = f64::from(a) / 255.0;
            let over = |c: u8| (f64::from(c) * alpha + 255.0 * (1.0 - alpha)).round() as u8;
            [over(r), over(g), over(b)]
        })
        .collect();
    RasterImage::new(w, h, pixels)
}

/// Unweighted channel mean `(R + G + B) / 3`, unrounded.
pub fn to_grayscale(img: &RasterImage) -> GrayImage {
    let pixels = img
        .pixels
        .iter()
        .map(|&[r, g, b]| (f64::from(r) + f64::from(g) + f64::from(b)) / 3.0)
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}

// sRGB primaries with D65 white.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

static XYZ_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&RGB_TO_XYZ));

/// D65 reference white, derived from the primaries so that white maps to
/// `a = b = 0` exactly.
static WHITE: LazyLock<[f64; 3]> = LazyLock::new(|| {
    let row = |i: usize| RGB_TO_XYZ[i].iter().sum::<f64>();
    [row(0), row(1), row(2)]
});

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    [
        [c(1, 1, 2, 2) / det, -c(0, 1, 2, 2) / det, c(0, 1, 1, 2) / det],
        [-c(1, 0, 2, 2) / det, c(0, 0, 2, 2) / det, -c(0, 0, 1, 2) / det],
        [c(1, 0, 2, 1) / det, -c(0, 0, 2, 1) / det, c(0, 0, 1, 1) / det],
    ]
}

fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const EPS: f64 = 216.0 / 24389.0; // (6/29)^3
const KAPPA: f64 = 24389.0 / 27.0;

fn lab_f(t: f64) -> f64 {
    if t > EPS {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

fn lab_f_inv(f: f64) -> f64 {
    let t = f * f * f;
    if t > EPS {
        t
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

/// Converts one 8-bit sRGB colour to LAB.
pub fn rgb_to_lab(rgb: [u8; 3]) -> Lab {
    let lin = rgb.map(|c| srgb_to_linear(f64::from(c) / 255.0));
    let xyz = mul3(&RGB_TO_XYZ, lin);
    let w = *WHITE;
    let fx = lab_f(xyz[0] / w[0]);
    let fy = lab_f(xyz[1] / w[1]);
    let fz = lab_f(xyz[2] / w[2]);
    Lab {
        l: (116.0 * fy - 16.0).clamp(0.0, 100.0),
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

/// Converts LAB to unclamped sRGB on the `[0, 255]` scale.
pub fn lab_to_rgb(lab: Lab) -> [f64; 3] {
    let fy = (lab.l + 16.0) / 116.0;
    let fx = fy + lab.a / 500.0;
    let fz = fy - lab.b / 200.0;
    let w = *WHITE;
    let xyz = [lab_f_inv(fx) * w[0], lab_f_inv(fy) * w[1], lab_f_inv(fz) * w[2]];
    mul3(&XYZ_TO_RGB, xyz).map(|c| 255.0 * linear_to_srgb(c.max(0.0)))
}

/// LAB to 8-bit sRGB, clamped and rounded.
pub fn lab_to_rgb8(lab: Lab) -> [u8; 3] {
    lab_to_rgb(lab).map(|c| c.round().clamp(0.0, 255.0) as u8)
}

/// Per-pixel sRGB to CIE LAB (D65).
pub fn srgb_to_lab(img: &RasterImage) -> LabImage {
    LabImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| rgb_to_lab(p)).collect(),
    }
}

/// LAB back to an 8-bit raster.
pub fn lab_to_srgb(img: &LabImage) -> RasterImage {
    RasterImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&p| lab_to_rgb8(p)).collect(),
    }
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
fn bilinear<const C: usize>(
    width: usize,
    height: usize,
    get: impl Fn(usize, usize) -> [f64; C],
    target_width: usize,
    target_height: usize,
) -> Vec<[f64; C]> {
    // Source coordinate and interpolation weight for each target index.
    let axis = |src: usize, dst: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = axis(width, target_width);
    let ys = axis(height, target_height);
    let mut out = Vec::with_capacity(target_width * target_height);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            let (p00, p10, p01, p11) = (get(x0, y0), get(x1, y0), get(x0, y1), get(x1, y1));
            let mut px = [0.0; C];
            for c in 0..C {
                let top = if tx == 0.0 {
                    p00[c]
                } else {
                    p00[c] + (p10[c] - p00[c]) * tx
                };
                let bot = if tx == 0.0 {
                    p01[c]
                } else {
                    p01[c] + (p11[c] - p01[c]) * tx
                };
                px[c] = if ty == 0.0 { top } else { top + (bot - top) * ty };
            }
            out.push(px);
        }
    }
    out
}

/// Resampling shared by all raster types.
pub trait Resample: Sized {
    fn dimensions(&self) -> (usize, usize);

    /// Bilinear resize to exactly `width x height`.
    fn resize(&self, width: usize, height: usize) -> Result<Self, ImagingError>;

    /// Forces the height and scales the width proportionally.
    fn resize_to_height(&self, height: usize) -> Result<Self, ImagingError> {
        let (w, h) = self.dimensions();
        let width = ((w as f64 * height as f64 / h as f64).round() as usize).max(1);
        self.resize(width, height)
    }
}

fn check_target(w: usize, h: usize) -> Result<(), ImagingError> {
    if w == 0 || h == 0 {
        Err(ImagingError::InvalidDimensions(w, h))
    } else {
        Ok(())
    }
}

impl Resample for RasterImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn resize(&self, width: usize, height: usize) -> Result<Self, ImagingError> {
        check_target(width, height)?;
        let out = bilinear(
            self.width,
            self.height,
            |x, y| self.get(x, y).map(f64::from),
            width,
            height,
        );
        Ok(RasterImage {
            width,
            height,
            pixels: out
                .into_iter()
                .map(|p| p.map(|c| c.round().clamp(0.0, 255.0) as u8))
                .collect(),
        })
    }
}

impl Resample for GrayImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn resize(&self, width: usize, height: usize) -> Result<Self, ImagingError> {
        check_target(width, height)?;
        let out = bilinear(self.width, self.height, |x, y| [self.get(x, y)], width, height);
        Ok(GrayImage {
            width,
            height,
            pixels: out.into_iter().map(|[v]| v).collect(),
        })
    }
}

impl Resample for LabImage {
    fn dimensions(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn resize(&self, width: usize, height: usize) -> Result<Self, ImagingError> {
        check_target(width, height)?;
        let out = bilinear(self.width, self.height, |x, y| self.get(x, y).to_array(), width, height);
        Ok(LabImage {
            width,
            height,
            pixels: out.into_iter().map(Lab::from_array).collect(),
        })
    }
}

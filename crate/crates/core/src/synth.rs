//! Synthetic drawing corpora with known ground truth.
//!
//! A drawing is a stack of filled rectangles, filled ellipses and thick
//! polylines in flat pencil colours over off-white paper, with Gaussian jitter
//! added to every pixel afterwards. The noise-free pencil map is kept so
//! pencil counts, colour proportions and ink coverage are known exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::colorfield::ReferenceColor;
use crate::corpus::{write_manifest_csv, Country, DrawingRecord, Gender, School, Task};
use crate::imaging::{rgb_to_lab, to_grayscale, ImagingError, RasterImage};
use crate::{par, seed};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("io error at {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Image(#[from] ImagingError),
    #[error("invalid spec: {0}")]
    Spec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pencil {
    pub name: String,
    pub rgb: [u8; 3],
}

impl Pencil {
    fn new(name: &str, rgb: [u8; 3]) -> Self {
        Pencil { name: name.into(), rgb }
    }
}

/// Nine colours at least 62 LAB units apart and at least 65 from white.
/// Each is either well inside or well outside the default green and yellow
/// reference spheres, so jitter never flips a presence decision.
pub fn default_pencils() -> Vec<Pencil> {
    vec![
        Pencil::new("green", [30, 135, 15]),
        Pencil::new("yellow", [255, 210, 0]),
        Pencil::new("lavender", [195, 150, 255]),
        Pencil::new("maroon", [90, 15, 15]),
        Pencil::new("violet", [90, 15, 225]),
        Pencil::new("magenta", [255, 0, 150]),
        Pencil::new("red", [255, 60, 45]),
        Pencil::new("teal", [15, 90, 105]),
        Pencil::new("navy", [15, 0, 75]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PencilChoice {
    /// The same pencils in every drawing, most used first.
    Fixed(Vec<String>),
    /// A random subset of `pool` with size drawn from `min..=max`.
    Random { min: usize, max: usize, pool: Vec<String> },
}

/// Shapes per drawing as a function of age:
/// `base + peak * exp(-((age - peak_age) / spread)^2)`, rounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShapeCount {
    pub base: f64,
    pub peak: f64,
    pub peak_age: f64,
    pub spread: f64,
}

impl ShapeCount {
    pub fn flat(n: usize) -> Self {
        ShapeCount {
            base: n as f64,
            peak: 0.0,
            peak_age: 10.0,
            spread: 1.0,
        }
    }

    pub fn at(&self, age: f64) -> usize {
        let z = (age - self.peak_age) / self.spread;
        (self.base + self.peak * (-z * z).exp()).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSpec {
    pub name: String,
    pub n_drawings: usize,
    /// How many of the group's drawings (the last ones) are left blank.
    pub blank: usize,
    pub country: Country,
    /// Cycled over the group's drawings.
    pub regions: Vec<String>,
    pub task: Task,
    /// Ages are drawn uniformly from this range and rounded to 0.1.
    pub ages: (f64, f64),
    /// 0 centres shapes vertically, 1 pushes them towards the top.
    pub bias: f64,
    pub pencils: PencilChoice,
    pub shapes: ShapeCount,
    /// Largest shape extent as a fraction of the shorter page side.
    pub size: (f64, f64),
    /// Pencils whose shapes are centred on a fixed height (fraction from the top).
    pub anchors: Vec<(String, f64)>,
}

impl GroupSpec {
    pub fn new(name: &str, n_drawings: usize, country: Country) -> Self {
        GroupSpec {
            name: name.into(),
            n_drawings,
            blank: 0,
            country,
            regions: Vec::new(),
            task: Task::General,
            ages: (5.0, 18.0),
            bias: 0.0,
            pencils: PencilChoice::Random {
                min: 3,
                max: 6,
                pool: default_pencils().into_iter().map(|p| p.name).collect(),
            },
            shapes: ShapeCount::flat(6),
            size: (0.12, 0.3),
            anchors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Standard deviation of per-pixel brightness noise, in 8-bit levels.
    pub jitter: f64,
    /// Paper colour. Kept a few levels below 255 so the noise is not
    /// clipped on one side.
    pub paper: [u8; 3],
    pub pencils: Vec<Pencil>,
    pub groups: Vec<GroupSpec>,
}

impl SynthSpec {
    pub fn new(seed: u64, groups: Vec<GroupSpec>) -> Self {
        SynthSpec {
            seed,
            width: 200,
            height: 200,
            jitter: 2.0,
            paper: [249, 249, 249],
            pencils: default_pencils(),
            groups,
        }
    }

    pub fn n_drawings(&self) -> usize {
        self.groups.iter().map(|g| g.n_drawings).sum()
    }

    /// The 60-drawing corpus used for end-to-end runs.
    ///
    /// - `top` (JP, gods): five fixed pencils, shapes pushed to the top
    /// - `center` (US, general): random pencils, centred shapes
    /// - `meadow` (CH, general): green anchored to the bottom, never yellow
    /// - `east` (RU, gods): two regions, one blank drawing
    pub fn bundled(seed: u64) -> Self {
        let mut top = GroupSpec::new("top", 15, Country::JP);
        top.task = Task::Gods;
        top.bias = 0.9;
        top.pencils = PencilChoice::Fixed(["navy", "red", "green", "yellow", "violet"].map(String::from).to_vec());
        top.shapes = ShapeCount {
            base: 5.0,
            peak: 9.0,
            peak_age: 10.0,
            spread: 2.5,
        };
        top.size = (0.12, 0.26);

        let mut center = GroupSpec::new("center", 15, Country::US);
        center.shapes = top.shapes;
        center.size = (0.18, 0.36);

        let mut meadow = GroupSpec::new("meadow", 15, Country::CH);
        meadow.bias = 0.3;
        meadow.pencils = PencilChoice::Random {
            min: 3,
            max: 5,
            pool: ["green", "teal", "maroon", "magenta", "lavender", "navy"]
                .map(String::from)
                .to_vec(),
        };
        meadow.anchors = vec![("green".into(), 0.88)];
        meadow.shapes = top.shapes;

        let mut east = GroupSpec::new("east", 15, Country::RU);
        east.task = Task::Gods;
        east.regions = vec!["bo".into(), "sp".into()];
        east.blank = 1;
        east.bias = 0.5;
        east.shapes = top.shapes;

        SynthSpec::new(seed, vec![top, center, meadow, east])
    }

    fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Spec(m));
        if self.width < 8 || self.height < 8 {
            return bad(format!("page {}x{} too small", self.width, self.height));
        }
        if self.n_drawings() == 0 {
            return bad("no drawings requested".into());
        }
        for (i, a) in self.pencils.iter().enumerate() {
            for b in &self.pencils[i + 1..] {
                let d = rgb_to_lab(a.rgb).distance(rgb_to_lab(b.rgb));
                if d < 60.0 {
                    return bad(format!("pencils {} and {} are only {d:.1} apart", a.name, b.name));
                }
            }
        }
        for g in &self.groups {
            if !(0.0..=1.0).contains(&g.bias) {
                return bad(format!("group {}: bias {} outside [0, 1]", g.name, g.bias));
            }
            if g.blank > g.n_drawings {
                return bad(format!("group {}: more blanks than drawings", g.name));
            }
            if !(g.ages.0 > 1.0 && g.ages.1 <= 23.0 && g.ages.0 <= g.ages.1) {
                return bad(format!("group {}: age range {:?}", g.name, g.ages));
            }
            let names: Vec<&String> = match &g.pencils {
                PencilChoice::Fixed(v) => v.iter().collect(),
                PencilChoice::Random { min, max, pool } => {
                    if *min == 0 || min > max || *max > pool.len() {
                        return bad(format!(
                            "group {}: pencil count {min}..={max} from {}",
                            g.name,
                            pool.len()
                        ));
                    }
                    pool.iter().collect()
                }
            };
            for n in names.into_iter().chain(g.anchors.iter().map(|(n, _)| n)) {
                if !self.pencils.iter().any(|p| &p.name == n) {
                    return bad(format!("group {}: unknown pencil {n}", g.name));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DrawingTruth {
    pub group: String,
    /// Number of pencils visible in the drawing.
    pub true_k: usize,
    pub bias: f64,
    /// Share of inked pixels inside each default reference colour sphere.
    pub color_props: BTreeMap<String, f64>,
    /// Mean of `(255 - gray) / 255` over the noise-free page.
    pub colored_proportion: f64,
    /// Fraction of pixels covered by ink.
    pub ink_fraction: f64,
    pub pencil_masses: BTreeMap<String, u64>,
    pub shapes: usize,
}

#[derive(Debug, Clone)]
pub struct SynthDrawing {
    /// Record with a path relative to the corpus directory.
    pub record: DrawingRecord,
    pub image: RasterImage,
    pub truth: DrawingTruth,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub manifest: PathBuf,
    pub ground_truth: PathBuf,
    pub truth: BTreeMap<String, DrawingTruth>,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Polyline { pts: [(f64, f64); 4], n: usize, half: f64 },
}

fn seg_dist_sq(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx * dx + dy * dy;
    let t = if len > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    qx * qx + qy * qy
}

impl Shape {
    fn covers(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Ellipse { cx, cy, rx, ry } => {
                let (u, v) = ((x - cx) / rx, (y - cy) / ry);
                u * u + v * v <= 1.0
            }
            Shape::Polyline { pts, n, half } => pts[..n]
                .windows(2)
                .any(|s| seg_dist_sq((x, y), s[0], s[1]) <= half * half),
        }
    }

    fn paint(&self, map: &mut [Option<usize>], w: usize, h: usize, pencil: usize) {
        for y in 0..h {
            for x in 0..w {
                if self.covers(x as f64 + 0.5, y as f64 + 0.5) {
                    map[y * w + x] = Some(pencil);
                }
            }
        }
    }
}

fn random_shape(rng: &mut ChaCha8Rng, w: usize, h: usize, size: (f64, f64), cy_target: f64) -> Shape {
    let side = w.min(h) as f64;
    let extent = side * rng.random_range(size.0..=size.1);
    let aspect = rng.random_range(0.5..=1.0);
    let (ew, eh) = if rng.random::<bool>() {
        (extent, extent * aspect)
    } else {
        (extent * aspect, extent)
    };
    let (wf, hf) = (w as f64, h as f64);
    let cx = rng.random_range(ew / 2.0..=(wf - ew / 2.0).max(ew / 2.0));
    let jitter = Normal::new(0.0, 0.06 * hf).expect("positive sd").sample(rng);
    let cy = (cy_target * hf + jitter).clamp(eh / 2.0, (hf - eh / 2.0).max(eh / 2.0));
    match rng.random_range(0..20) {
        0..9 => Shape::Rect {
            x0: (cx - ew / 2.0).round(),
            y0: (cy - eh / 2.0).round(),
            x1: (cx + ew / 2.0).round(),
            y1: (cy + eh / 2.0).round(),
        },
        9..16 => Shape::Ellipse {
            cx,
            cy,
            rx: ew / 2.0,
            ry: eh / 2.0,
        },
        _ => {
            let n = rng.random_range(2..=4);
            let mut pts = [(0.0, 0.0); 4];
            for p in pts.iter_mut().take(n) {
                *p = (
                    cx + rng.random_range(-0.5..=0.5) * ew,
                    cy + rng.random_range(-0.5..=0.5) * eh,
                );
            }
            Shape::Polyline {
                pts,
                n,
                half: (side * 0.012).max(1.5),
            }
        }
    }
}

fn pick_pencils(rng: &mut ChaCha8Rng, choice: &PencilChoice, pencils: &[Pencil]) -> Vec<usize> {
    let index = |name: &String| pencils.iter().position(|p| &p.name == name).expect("validated");
    match choice {
        PencilChoice::Fixed(v) => v.iter().map(index).collect(),
        PencilChoice::Random { min, max, pool } => {
            let k = rng.random_range(*min..=*max);
            let mut idx: Vec<usize> = pool.iter().map(index).collect();
            for i in 0..k {
                let j = rng.random_range(i..idx.len());
                idx.swap(i, j);
            }
            idx.truncate(k);
            idx
        }
    }
}

struct Layout {
    map: Vec<Option<usize>>,
    shapes: usize,
}

fn layout(rng: &mut ChaCha8Rng, spec: &SynthSpec, g: &GroupSpec, chosen: &[usize], age: f64) -> Layout {
    let (w, h) = (spec.width, spec.height);
    let n_shapes = g.shapes.at(age).max(chosen.len());
    let default_cy = 0.5 - 0.35 * g.bias;
    // Pencil j of the drawing is picked with weight 1 / (j + 1) after every
    // pencil has drawn one shape.
    let weights: Vec<f64> = (0..chosen.len()).map(|j| 1.0 / (j + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut map = vec![None; w * h];
    for s in 0..n_shapes {
        let j = if s < chosen.len() {
            s
        } else {
            let mut t = rng.random::<f64>() * total;
            weights
                .iter()
                .position(|&wt| {
                    t -= wt;
                    t < 0.0
                })
                .unwrap_or(chosen.len() - 1)
        };
        let pencil = chosen[j];
        let cy = g
            .anchors
            .iter()
            .find(|(n, _)| *n == spec.pencils[pencil].name)
            .map_or(default_cy, |&(_, y)| y);
        random_shape(rng, w, h, g.size, cy).paint(&mut map, w, h, pencil);
    }
    Layout { map, shapes: n_shapes }
}

fn masses(map: &[Option<usize>], n_pencils: usize) -> Vec<u64> {
    let mut m = vec![0u64; n_pencils];
    for p in map.iter().flatten() {
        m[*p] += 1;
    }
    m
}

const MAX_ATTEMPTS: u64 = 64;

/// Renders drawing `index` of group `gi`. Every pencil of the drawing is
/// kept visible on at least 3% of the inked area when possible; layouts
/// that bury a pencil are redrawn from the next derived seed.
fn render(spec: &SynthSpec, gi: usize, index: usize) -> SynthDrawing {
    let g = &spec.groups[gi];
    let id = format!("{}-{:03}", g.name, index);
    let mut rng = seed::rng(seed::derive(spec.seed, &id, 0));
    let age = (rng.random_range(g.ages.0..=g.ages.1) * 10.0).round() / 10.0;
    let age = age.clamp(g.ages.0.max(1.1), g.ages.1);
    let gender = if rng.random::<bool>() {
        Gender::Female
    } else {
        Gender::Male
    };
    let blank = index >= g.n_drawings - g.blank;
    let (w, h) = (spec.width, spec.height);

    let (map, shapes) = if blank {
        (vec![None; w * h], 0)
    } else {
        let chosen = pick_pencils(&mut rng, &g.pencils, &spec.pencils);
        let mut best: Option<(Layout, u64)> = None;
        for attempt in 0..MAX_ATTEMPTS {
            let mut lrng = seed::rng(seed::derive(spec.seed, &id, attempt + 1));
            let l = layout(&mut lrng, spec, g, &chosen, age);
            let m = masses(&l.map, spec.pencils.len());
            let inked: u64 = m.iter().sum();
            let weakest = chosen.iter().map(|&p| m[p]).min().unwrap_or(0);
            if weakest * 100 >= 3 * inked && weakest >= 30 {
                best = Some((l, weakest));
                break;
            }
            if best.as_ref().is_none_or(|(_, w0)| weakest > *w0) {
                best = Some((l, weakest));
            }
        }
        let l = best.expect("at least one attempt").0;
        (l.map, l.shapes)
    };

    let clean = RasterImage::from_fn(w, h, |x, y| map[y * w + x].map_or(spec.paper, |p| spec.pencils[p].rgb));
    let gray = to_grayscale(&clean);
    let colored_proportion = gray.pixels().iter().map(|v| (255.0 - v) / 255.0).sum::<f64>() / (w * h) as f64;
    let m = masses(&map, spec.pencils.len());
    let inked: u64 = m.iter().sum();
    let refs = ReferenceColor::defaults();
    let color_props = refs
        .iter()
        .map(|r| {
            let hit: u64 = spec
                .pencils
                .iter()
                .zip(&m)
                .filter(|(p, _)| r.matches(rgb_to_lab(p.rgb)))
                .map(|(_, &c)| c)
                .sum();
            let frac = if inked > 0 { hit as f64 / inked as f64 } else { 0.0 };
            (r.name.clone(), frac)
        })
        .collect();

    let noise = Normal::new(0.0, spec.jitter.max(f64::MIN_POSITIVE)).expect("valid sd");
    let mut nrng = seed::rng(seed::derive(spec.seed, &id, u64::MAX));
    // One offset per pixel, shared by the three channels.
    let image = RasterImage::from_fn(w, h, |x, y| {
        let e = if spec.jitter > 0.0 {
            noise.sample(&mut nrng)
        } else {
            0.0
        };
        clean.get(x, y).map(|c| (c as f64 + e).round().clamp(0.0, 255.0) as u8)
    });

    let truth = DrawingTruth {
        group: g.name.clone(),
        true_k: m.iter().filter(|&&c| c > 0).count(),
        bias: g.bias,
        color_props,
        colored_proportion,
        ink_fraction: inked as f64 / (w * h) as f64,
        pencil_masses: spec
            .pencils
            .iter()
            .zip(&m)
            .filter(|(_, &c)| c > 0)
            .map(|(p, &c)| (p.name.clone(), c))
            .collect(),
        shapes,
    };
    let region = (!g.regions.is_empty()).then(|| g.regions[index % g.regions.len()].clone());
    let record = DrawingRecord {
        path: PathBuf::from("images").join(format!("{id}.png")),
        id,
        country: g.country,
        region,
        age: Some(age),
        gender,
        task: g.task,
        school: Some(School::Unknown),
    };
    SynthDrawing { record, image, truth }
}

/// Renders every drawing without touching the disk.
pub fn generate_in_memory(spec: &SynthSpec) -> Result<Vec<SynthDrawing>, SynthError> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = spec
        .groups
        .iter()
        .enumerate()
        .flat_map(|(gi, g)| (0..g.n_drawings).map(move |i| (gi, i)))
        .collect();
    Ok(par::map(&jobs, |&(gi, i)| render(spec, gi, i)))
}

fn io_err(path: &Path, e: impl ToString) -> SynthError {
    SynthError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Writes `images/*.png`, `manifest.csv` and `ground_truth.json` under
/// `out_dir`. The same spec always produces byte-identical files.
pub fn generate(spec: &SynthSpec, out_dir: &Path) -> Result<SynthOutput, SynthError> {
    let drawings = generate_in_memory(spec)?;
    let images = out_dir.join("images");
    fs::create_dir_all(&images).map_err(|e| io_err(&images, e))?;
    let written = par::map(&drawings, |d| d.image.save_png(&out_dir.join(&d.record.path)));
    for r in written {
        r?;
    }
    let manifest = out_dir.join("manifest.csv");
    let records: Vec<DrawingRecord> = drawings.iter().map(|d| d.record.clone()).collect();
    let file = fs::File::create(&manifest).map_err(|e| io_err(&manifest, e))?;
    write_manifest_csv(&records, file).map_err(|e| io_err(&manifest, e))?;

    let truth: BTreeMap<String, DrawingTruth> = drawings.into_iter().map(|d| (d.record.id, d.truth)).collect();
    let ground_truth = out_dir.join("ground_truth.json");
    let json = serde_json::to_string_pretty(&truth).expect("serializable");
    fs::write(&ground_truth, json).map_err(|e| io_err(&ground_truth, e))?;
    Ok(SynthOutput {
        manifest,
        ground_truth,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_manifest;

    fn small(seed: u64, pencils: usize) -> SynthSpec {
        let mut g = GroupSpec::new("g", 4, Country::CH);
        g.pencils = PencilChoice::Fixed(default_pencils().into_iter().take(pencils).map(|p| p.name).collect());
        let mut s = SynthSpec::new(seed, vec![g]);
        s.width = 64;
        s.height = 64;
        s
    }

    #[test]
    fn pencils_are_separated() {
        let p = default_pencils();
        let white = rgb_to_lab([255, 255, 255]);
        for (i, a) in p.iter().enumerate() {
            assert!(rgb_to_lab(a.rgb).distance(white) >= 65.0, "{}", a.name);
            for b in &p[i + 1..] {
                assert!(rgb_to_lab(a.rgb).distance(rgb_to_lab(b.rgb)) >= 62.0);
            }
        }
    }

    #[test]
    fn fixed_pencils_set_true_k() {
        for d in generate_in_memory(&small(3, 5)).unwrap() {
            assert_eq!(d.truth.true_k, 5);
            assert_eq!(
                d.truth.pencil_masses.values().sum::<u64>() as f64,
                d.truth.ink_fraction * 4096.0
            );
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_in_memory(&small(9, 3)).unwrap();
        let b = generate_in_memory(&small(9, 3)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
            assert_eq!(x.truth, y.truth);
        }
        let c = generate_in_memory(&small(10, 3)).unwrap();
        assert_ne!(a[0].image, c[0].image);
    }

    #[test]
    fn written_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        let out = generate(&small(1, 2), dir.path()).unwrap();
        let records = load_manifest(&out.manifest).unwrap();
        assert_eq!(records.len(), 4);
        assert!(records.iter().all(|r| r.path.is_file()));
        assert_eq!(out.truth.len(), 4);
    }

    #[test]
    fn rejects_close_pencils() {
        let mut s = small(1, 2);
        s.pencils.push(Pencil::new("green2", [35, 140, 20]));
        assert!(matches!(generate_in_memory(&s), Err(SynthError::Spec(_))));
    }

    #[test]
    fn bundled_has_sixty_with_one_blank() {
        let s = SynthSpec::bundled(1);
        assert_eq!(s.n_drawings(), 60);
        assert_eq!(s.groups.iter().map(|g| g.blank).sum::<usize>(), 1);
    }
}

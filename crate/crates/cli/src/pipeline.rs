//! Per-image work on a worker pool, then per-group aggregation.

use crate::config::{Denominator, Pipeline, RunConfig};
use crate::{export, output_err, CliError};
use drawstat_core::colorfield::{color_proportion, color_proportion_all, presence_mask, HeatMap, PresenceMask};
use drawstat_core::complexity::{
    complexity_by_age, harris_corners, palette_variability, ComplexityRecord, ScatterDataset,
};
use drawstat_core::corpus::{group_records, load_manifest, GroupOptions, Grouping};
use drawstat_core::gravity::{
    colored_proportion, gravity_row, group_profile, intensity_profile, GroupProfile, IntensityProfile,
};
use drawstat_core::imaging::{decode, srgb_to_lab, to_grayscale, Resample};
use drawstat_core::palette::{
    extract_foreground, group_palette, reconstruct, select_palette_with, GroupPalette, Palette, PaletteOptions,
};
use drawstat_core::stats::{pairwise_matrix, TestReport};
use drawstat_core::{par, seed, DrawingRecord, GroupKey, RasterImage};
use serde::Serialize;
use sha1::{Digest, Sha1};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Skip {
    pub id: String,
    pub stage: &'static str,
    pub reason: String,
}

/// What the per-image stage produced for one record. Fields stay `None`
/// when the pipeline did not ask for them or the stage failed.
#[derive(Debug, Clone, Default)]
pub struct ImageOutcome {
    pub profile: Option<IntensityProfile>,
    /// One mask per reference colour, in configuration order.
    pub masks: Option<Vec<PresenceMask>>,
    pub foreground: Option<PresenceMask>,
    pub palette: Option<Palette>,
    pub reconstruction: Option<RasterImage>,
    pub corners: Option<usize>,
    pub skips: Vec<Skip>,
}

pub struct Corpus {
    pub records: Vec<DrawingRecord>,
    pub grouping: Grouping,
    /// Git blob hash of the manifest bytes.
    pub manifest_hash: String,
}

/// `sha1("blob <len>\0" + bytes)`, as `git hash-object` computes it.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus, CliError> {
    let bytes = std::fs::read(&cfg.manifest)
        .map_err(|e| CliError::Corpus(format!("cannot read manifest {}: {e}", cfg.manifest.display())))?;
    let records = load_manifest(&cfg.manifest).map_err(|e| CliError::Corpus(e.to_string()))?;
    if records.is_empty() {
        return Err(CliError::Corpus("empty corpus".into()));
    }
    let options = GroupOptions {
        bins: Some(cfg.age_bins.clone()),
        split_russia: cfg.split_russia,
    };
    let grouping = group_records(&records, cfg.group_by, &options).map_err(|e| CliError::Corpus(e.to_string()))?;
    Ok(Corpus {
        records,
        grouping,
        manifest_hash: git_blob_hash(&bytes),
    })
}

/// Palette seed for one drawing.
pub fn image_seed(master: u64, id: &str) -> u64 {
    seed::derive(master, id, 0)
}

pub fn process_image(record: &DrawingRecord, cfg: &RunConfig) -> ImageOutcome {
    let mut out = ImageOutcome::default();
    let skip = |stage, reason: String| Skip {
        id: record.id.clone(),
        stage,
        reason,
    };
    let img = match decode(&record.path) {
        Ok(img) => img,
        Err(e) => {
            out.skips.push(skip("decode", e.to_string()));
            return out;
        }
    };

    if cfg.runs(Pipeline::Gravity) || cfg.runs(Pipeline::Stats) {
        match intensity_profile(&to_grayscale(&img), cfg.h) {
            Ok(p) => out.profile = Some(p),
            Err(e) => out.skips.push(skip("profile", e.to_string())),
        }
    }

    let colors = cfg.runs(Pipeline::Colors);
    let palette_run = cfg.runs(Pipeline::Palette);
    let complexity = cfg.runs(Pipeline::Complexity);
    if colors || palette_run || complexity {
        let raster = match img.resize(cfg.k, cfg.k) {
            Ok(r) => r,
            Err(e) => {
                out.skips.push(skip("resize", e.to_string()));
                return out;
            }
        };
        let lab = srgb_to_lab(&raster);
        if colors {
            match cfg.ref_colors.iter().map(|r| presence_mask(&lab, r, cfg.k)).collect() {
                Ok(m) => out.masks = Some(m),
                Err(e) => out.skips.push(skip("colors", e.to_string())),
            }
        }
        let needs_fg = (colors && cfg.denominator == Denominator::Colored) || palette_run || complexity;
        if needs_fg {
            match extract_foreground(&lab) {
                Ok(fg) => {
                    out.foreground = Some(PresenceMask::new(cfg.k, fg.mask.clone()));
                    if palette_run || complexity {
                        let options = PaletteOptions {
                            exact_silhouette: cfg.exact_silhouette,
                            ..PaletteOptions::default()
                        };
                        match select_palette_with(&lab, &fg, image_seed(cfg.seed, &record.id), &options) {
                            Ok(p) => {
                                if palette_run {
                                    out.reconstruction = Some(reconstruct(&lab, &p, &fg.mask));
                                }
                                out.palette = Some(p);
                            }
                            Err(e) => out.skips.push(skip("palette", e.to_string())),
                        }
                    }
                }
                Err(e) => out.skips.push(skip("foreground", e.to_string())),
            }
        }
        if complexity {
            let gray = if cfg.full_res {
                to_grayscale(&img)
            } else {
                to_grayscale(&raster)
            };
            match harris_corners(&gray, &cfg.harris) {
                Ok(n) => out.corners = Some(n),
                Err(e) => out.skips.push(skip("corners", e.to_string())),
            }
        }
    }
    out
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
#[cfg(feature = "parallel")]
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::Pipeline(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
pub fn with_workers<R: Send>(_workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    Ok(f())
}

#[derive(Debug, Clone, Serialize)]
pub struct DrawingGravity {
    pub id: String,
    pub group: Option<String>,
    pub colored_proportion: f64,
    pub gravity_row: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupGravity {
    pub profile: GroupProfile,
    pub colored_proportion: f64,
    /// Mean of the drawings' gravity rows (blank drawings excluded).
    pub gravity_row: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupColor {
    pub group: String,
    pub reference: String,
    pub heatmap: HeatMap,
    /// Mean per-drawing proportion over drawings where it is defined.
    pub proportion: Option<f64>,
    pub n_proportions: usize,
    /// Heatmap mass in the top, middle and bottom thirds.
    pub bands: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DrawingColors {
    pub id: String,
    pub group: Option<String>,
    pub proportions: Vec<Option<f64>>,
}

pub struct RunResult {
    pub outcomes: Vec<ImageOutcome>,
    pub skipped: Vec<Skip>,
    pub gravity: Option<(Vec<DrawingGravity>, Vec<GroupGravity>)>,
    pub colors: Option<(Vec<DrawingColors>, Vec<GroupColor>)>,
    pub group_palettes: Option<Vec<Result<GroupPalette, String>>>,
    pub complexity: Option<(Vec<ComplexityRecord>, ScatterDataset)>,
    pub stats: Option<TestReport>,
}

fn group_of(grouping: &Grouping) -> BTreeMap<&str, &str> {
    grouping
        .groups
        .iter()
        .flat_map(|(k, rs)| rs.iter().map(move |r| (r.id.as_str(), k.label.as_str())))
        .collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| par::pairwise_sum(values) / values.len() as f64)
}

/// Indices of each group's members in the record list.
fn member_indices(corpus: &Corpus) -> Vec<(GroupKey, Vec<usize>)> {
    let index: BTreeMap<&str, usize> = corpus
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    corpus
        .grouping
        .groups
        .iter()
        .map(|(k, rs)| (k.clone(), rs.iter().map(|r| index[r.id.as_str()]).collect()))
        .collect()
}

fn gravity_tables(
    corpus: &Corpus,
    outcomes: &[ImageOutcome],
    skipped: &mut Vec<Skip>,
) -> Result<(Vec<DrawingGravity>, Vec<GroupGravity>), CliError> {
    let groups = group_of(&corpus.grouping);
    let mut rows = Vec::new();
    let mut row_of = BTreeMap::new();
    for (r, o) in corpus.records.iter().zip(outcomes) {
        let Some(p) = &o.profile else { continue };
        let g = gravity_row(p).map_err(|e| {
            skipped.push(Skip {
                id: r.id.clone(),
                stage: "gravity_row",
                reason: e.to_string(),
            })
        });
        row_of.insert(r.id.as_str(), rows.len());
        rows.push(DrawingGravity {
            id: r.id.clone(),
            group: groups.get(r.id.as_str()).map(|s| s.to_string()),
            colored_proportion: colored_proportion(p),
            gravity_row: g.ok(),
        });
    }
    let mut out = Vec::new();
    for (key, members) in member_indices(corpus) {
        let profiles: Vec<IntensityProfile> = members.iter().filter_map(|&i| outcomes[i].profile.clone()).collect();
        if profiles.is_empty() {
            continue;
        }
        let profile = group_profile(&profiles, key).map_err(|e| CliError::Pipeline(e.to_string()))?;
        let member_rows: Vec<&DrawingGravity> = members
            .iter()
            .filter_map(|&i| row_of.get(corpus.records[i].id.as_str()).map(|&j| &rows[j]))
            .collect();
        let props: Vec<f64> = member_rows.iter().map(|d| d.colored_proportion).collect();
        let grows: Vec<f64> = member_rows.iter().filter_map(|d| d.gravity_row).collect();
        out.push(GroupGravity {
            profile,
            colored_proportion: mean(&props).unwrap_or(0.0),
            gravity_row: mean(&grows),
        });
    }
    Ok((rows, out))
}

fn color_tables(
    cfg: &RunConfig,
    corpus: &Corpus,
    outcomes: &[ImageOutcome],
    skipped: &mut Vec<Skip>,
) -> Result<(Vec<DrawingColors>, Vec<GroupColor>), CliError> {
    let groups = group_of(&corpus.grouping);
    let mut rows = Vec::new();
    let mut props_of: Vec<Option<Vec<Option<f64>>>> = vec![None; outcomes.len()];
    for (i, (r, o)) in corpus.records.iter().zip(outcomes).enumerate() {
        let Some(masks) = &o.masks else { continue };
        let proportions: Vec<Option<f64>> = masks
            .iter()
            .map(|m| match cfg.denominator {
                Denominator::All => Some(color_proportion_all(m)),
                Denominator::Colored => o.foreground.as_ref().and_then(|fg| color_proportion(m, fg).ok()),
            })
            .collect();
        if cfg.denominator == Denominator::Colored && proportions.iter().all(Option::is_none) {
            skipped.push(Skip {
                id: r.id.clone(),
                stage: "color_proportion",
                reason: "no foreground".into(),
            });
        }
        props_of[i] = Some(proportions.clone());
        rows.push(DrawingColors {
            id: r.id.clone(),
            group: groups.get(r.id.as_str()).map(|s| s.to_string()),
            proportions,
        });
    }
    let mut out = Vec::new();
    for (key, members) in member_indices(corpus) {
        for (c, reference) in cfg.ref_colors.iter().enumerate() {
            let mut heat = HeatMap::empty(cfg.k);
            let mut values = Vec::new();
            for &i in &members {
                if let Some(masks) = &outcomes[i].masks {
                    heat.add(&masks[c]).map_err(|e| CliError::Pipeline(e.to_string()))?;
                }
                if let Some(Some(p)) = props_of[i].as_ref().map(|v| v[c]) {
                    values.push(p);
                }
            }
            if heat.n == 0 {
                continue;
            }
            out.push(GroupColor {
                group: key.label.clone(),
                reference: reference.name.clone(),
                bands: heat.row_band_mass(3),
                heatmap: heat,
                proportion: mean(&values),
                n_proportions: values.len(),
            });
        }
    }
    Ok((rows, out))
}

fn group_palettes(cfg: &RunConfig, corpus: &Corpus, outcomes: &[ImageOutcome]) -> Vec<Result<GroupPalette, String>> {
    member_indices(corpus)
        .into_iter()
        .map(|(key, members)| {
            let palettes: Vec<Palette> = members.iter().filter_map(|&i| outcomes[i].palette.clone()).collect();
            let label = key.label.clone();
            group_palette(&palettes, cfg.swatches, key).map_err(|e| format!("{label}: {e}"))
        })
        .collect()
}

fn complexity_table(
    cfg: &RunConfig,
    corpus: &Corpus,
    outcomes: &[ImageOutcome],
) -> (Vec<ComplexityRecord>, ScatterDataset) {
    let records: Vec<ComplexityRecord> = corpus
        .records
        .iter()
        .zip(outcomes)
        .filter_map(|(r, o)| {
            Some(ComplexityRecord {
                id: r.id.clone(),
                age: r.age,
                corner_count: o.corners?,
                palette_variability: o.palette.as_ref().map(palette_variability),
            })
        })
        .collect();
    let scatter = complexity_by_age(&records, &cfg.age_bins);
    (records, scatter)
}

fn stats_report(cfg: &RunConfig, corpus: &Corpus, outcomes: &[ImageOutcome]) -> Result<TestReport, CliError> {
    let groups: Vec<(String, Vec<Vec<f64>>)> = member_indices(corpus)
        .into_iter()
        .map(|(key, members)| {
            let vs = members
                .iter()
                .filter_map(|&i| outcomes[i].profile.as_ref().map(|p| p.values().to_vec()))
                .collect();
            (key.label, vs)
        })
        .collect();
    pairwise_matrix(
        &groups,
        cfg.knn,
        cfg.permutations,
        seed::derive(cfg.seed, "stats", 0),
        cfg.alpha,
    )
    .map_err(|e| CliError::Pipeline(format!("stats: {e}")))
}

/// Loads the corpus, runs the selected pipelines and writes every output
/// under `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunResult, CliError> {
    let corpus = load_corpus(cfg)?;
    if cfg.runs(Pipeline::Stats) && corpus.grouping.groups.len() < 2 {
        return Err(CliError::Pipeline(format!(
            "stats needs at least two groups, found {}",
            corpus.grouping.groups.len()
        )));
    }
    std::fs::create_dir_all(&cfg.out).map_err(|e| output_err(&cfg.out, e))?;
    export::run_json(&cfg.out, cfg, &corpus)?;

    let result = with_workers(cfg.workers, || -> Result<RunResult, CliError> {
        let outcomes = par::map(&corpus.records, |r| process_image(r, cfg));
        let mut skipped: Vec<Skip> = outcomes.iter().flat_map(|o| o.skips.iter().cloned()).collect();
        let gravity = if cfg.runs(Pipeline::Gravity) {
            Some(gravity_tables(&corpus, &outcomes, &mut skipped)?)
        } else {
            None
        };
        let colors = if cfg.runs(Pipeline::Colors) {
            Some(color_tables(cfg, &corpus, &outcomes, &mut skipped)?)
        } else {
            None
        };
        let group_palettes = cfg
            .runs(Pipeline::Palette)
            .then(|| group_palettes(cfg, &corpus, &outcomes));
        let complexity = cfg
            .runs(Pipeline::Complexity)
            .then(|| complexity_table(cfg, &corpus, &outcomes));
        let stats = if cfg.runs(Pipeline::Stats) {
            Some(stats_report(cfg, &corpus, &outcomes)?)
        } else {
            None
        };
        skipped.sort();
        Ok(RunResult {
            outcomes,
            skipped,
            gravity,
            colors,
            group_palettes,
            complexity,
            stats,
        })
    })??;

    export::write_all(&cfg.out, cfg, &corpus, &result)?;
    Ok(result)
}

/// Convenience for tests and scripts: the ids of drawings listed in
/// `skipped.json` under `out`.
pub fn read_skipped(out: &Path) -> Result<Vec<String>, CliError> {
    let path = out.join("skipped.json");
    let text = std::fs::read_to_string(&path).map_err(|e| output_err(&path, e))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| output_err(&path, e))?;
    Ok(v["skipped"]
        .as_array()
        .map(|a| a.iter().filter_map(|s| s["id"].as_str().map(String::from)).collect())
        .unwrap_or_default())
}

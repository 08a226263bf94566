//! CSV and JSON outputs. Row order follows the manifest or the canonical
//! group order, maps are `BTreeMap`s and floats use the shortest
//! round-trip form, so equal inputs give byte-identical files.

use crate::config::RunConfig;
use crate::pipeline::{Corpus, RunResult, Skip};
use crate::{output_err, render, CliError};
use drawstat_core::imaging::lab_to_rgb8;
use drawstat_core::palette::GroupPalette;
use drawstat_core::Lab;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// File-name form of an id or group label: characters outside
/// `[A-Za-z0-9._-]` become `_`.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn dir(out: &Path, name: &str) -> Result<PathBuf, CliError> {
    let d = out.join(name);
    fs::create_dir_all(&d).map_err(|e| output_err(&d, e))?;
    Ok(d)
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| output_err(path, e))?;
    if !header.is_empty() {
        w.write_record(header).map_err(|e| output_err(path, e))?;
    }
    for r in rows {
        w.write_record(r).map_err(|e| output_err(path, e))?;
    }
    w.flush().map_err(|e| output_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| output_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| output_err(path, e))
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[derive(Serialize)]
struct RunJson<'a> {
    tool: &'static str,
    version: &'static str,
    manifest_hash: &'a str,
    records: usize,
    groups: BTreeMap<&'a str, usize>,
    config: &'a RunConfig,
}

pub fn run_json(out: &Path, cfg: &RunConfig, corpus: &Corpus) -> Result<(), CliError> {
    let doc = RunJson {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        manifest_hash: &corpus.manifest_hash,
        records: corpus.records.len(),
        groups: corpus
            .grouping
            .groups
            .iter()
            .map(|(k, rs)| (k.label.as_str(), rs.len()))
            .collect(),
        config: cfg,
    };
    write_json(&out.join("run.json"), &doc)
}

#[derive(Serialize)]
struct SkippedJson<'a> {
    skipped: &'a [Skip],
    /// Records outside every group (for example unknown ages under `--group-by age`).
    ungrouped: Vec<&'a str>,
}

#[derive(Serialize)]
struct PaletteJson<'a> {
    id: &'a str,
    #[serde(rename = "K")]
    k: usize,
    curve: &'a BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_curve: Option<&'a BTreeMap<usize, f64>>,
    centroids: Vec<[f64; 3]>,
    centroids_rgb: Vec<[u8; 3]>,
    masses: &'a [u64],
}

#[derive(Serialize)]
struct SwatchJson {
    lab: [f64; 3],
    rgb: [u8; 3],
    weight: f64,
}

#[derive(Serialize)]
struct GroupPaletteJson {
    group: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    swatches: Vec<SwatchJson>,
}

fn lab3(c: Lab) -> [f64; 3] {
    c.to_array()
}

fn swatch_json(gp: &GroupPalette) -> Vec<SwatchJson> {
    gp.swatches
        .iter()
        .map(|s| SwatchJson {
            lab: lab3(s.lab),
            rgb: lab_to_rgb8(s.lab),
            weight: s.weight,
        })
        .collect()
}

pub fn write_all(out: &Path, cfg: &RunConfig, corpus: &Corpus, result: &RunResult) -> Result<(), CliError> {
    write_json(
        &out.join("skipped.json"),
        &SkippedJson {
            skipped: &result.skipped,
            ungrouped: corpus.grouping.remainder.iter().map(|r| r.id.as_str()).collect(),
        },
    )?;
    let group_of: BTreeMap<&str, &str> = corpus
        .grouping
        .groups
        .iter()
        .flat_map(|(k, rs)| rs.iter().map(move |r| (r.id.as_str(), k.label.as_str())))
        .collect();

    if let Some((drawings, groups)) = &result.gravity {
        let d = dir(out, "gravity")?;
        let mut header = strings(&["id", "group"]);
        header.extend((0..cfg.h).map(|j| format!("row_{j}")));
        let rows: Vec<Vec<String>> = corpus
            .records
            .iter()
            .zip(&result.outcomes)
            .filter_map(|(r, o)| {
                let p = o.profile.as_ref()?;
                let mut row = vec![r.id.clone(), group_of.get(r.id.as_str()).unwrap_or(&"").to_string()];
                row.extend(p.values().iter().map(|&v| num(v)));
                Some(row)
            })
            .collect();
        write_csv(&d.join("profiles.csv"), &header, &rows)?;

        let rows: Vec<Vec<String>> = drawings
            .iter()
            .map(|g| {
                vec![
                    g.id.clone(),
                    g.group.clone().unwrap_or_default(),
                    num(g.colored_proportion),
                    opt(g.gravity_row),
                ]
            })
            .collect();
        write_csv(
            &d.join("drawings.csv"),
            &strings(&["id", "group", "colored_proportion", "gravity_row"]),
            &rows,
        )?;

        let rows: Vec<Vec<String>> = groups
            .iter()
            .map(|g| {
                vec![
                    g.profile.key.label.clone(),
                    g.profile.n.to_string(),
                    num(g.colored_proportion),
                    opt(g.gravity_row),
                ]
            })
            .collect();
        write_csv(
            &d.join("groups.csv"),
            &strings(&["group", "n", "colored_proportion", "gravity_row"]),
            &rows,
        )?;

        let mut header = strings(&["group", "n"]);
        header.extend((0..cfg.h).map(|j| format!("row_{j}")));
        let rows: Vec<Vec<String>> = groups
            .iter()
            .map(|g| {
                let mut row = vec![g.profile.key.label.clone(), g.profile.n.to_string()];
                row.extend(g.profile.mean.iter().map(|&v| num(v)));
                row
            })
            .collect();
        write_csv(&d.join("group_profiles.csv"), &header, &rows)?;
        for g in groups {
            let path = d.join(format!("profile_{}.png", slug(&g.profile.key.label)));
            render::profile_chart(&g.profile.mean)
                .save_png(&path)
                .map_err(|e| output_err(&path, e))?;
        }
    }

    if let Some((drawings, groups)) = &result.colors {
        let d = dir(out, "colors")?;
        let mut header = strings(&["id", "group"]);
        header.extend(cfg.ref_colors.iter().map(|r| r.name.clone()));
        let rows: Vec<Vec<String>> = drawings
            .iter()
            .map(|c| {
                let mut row = vec![c.id.clone(), c.group.clone().unwrap_or_default()];
                row.extend(c.proportions.iter().map(|&p| opt(p)));
                row
            })
            .collect();
        write_csv(&d.join("proportions.csv"), &header, &rows)?;

        let rows: Vec<Vec<String>> = groups
            .iter()
            .map(|g| {
                vec![
                    g.group.clone(),
                    g.reference.clone(),
                    g.heatmap.n.to_string(),
                    opt(g.proportion),
                    g.n_proportions.to_string(),
                    num(g.bands[0]),
                    num(g.bands[1]),
                    num(g.bands[2]),
                ]
            })
            .collect();
        let header = strings(&[
            "group",
            "reference",
            "n",
            "proportion",
            "n_proportion",
            "top",
            "middle",
            "bottom",
        ]);
        write_csv(&d.join("groups.csv"), &header, &rows)?;

        for g in groups {
            let stem = format!("heatmap_{}_{}", slug(&g.reference), slug(&g.group));
            let side = g.heatmap.side;
            let rows: Vec<Vec<String>> = (0..side)
                .map(|y| (0..side).map(|x| g.heatmap.get(x, y).to_string()).collect())
                .collect();
            write_csv(&d.join(format!("{stem}.csv")), &[], &rows)?;
            let reference = cfg
                .ref_colors
                .iter()
                .find(|r| r.name == g.reference)
                .expect("configured reference");
            let path = d.join(format!("{stem}.png"));
            render::heatmap(&g.heatmap, lab_to_rgb8(reference.lab))
                .save_png(&path)
                .map_err(|e| output_err(&path, e))?;
        }
    }

    if let Some(group_palettes) = &result.group_palettes {
        let d = dir(out, "palette")?;
        let per = dir(&d, "drawings")?;
        let recon = dir(&d, "reconstructions")?;
        let mut rows = Vec::new();
        for (r, o) in corpus.records.iter().zip(&result.outcomes) {
            let Some(p) = &o.palette else { continue };
            let doc = PaletteJson {
                id: &r.id,
                k: p.k,
                curve: &p.curve,
                exact_curve: p.exact_curve.as_ref(),
                centroids: p.centroids.iter().map(|&c| lab3(c)).collect(),
                centroids_rgb: p.centroids.iter().map(|&c| lab_to_rgb8(c)).collect(),
                masses: &p.masses,
            };
            write_json(&per.join(format!("{}.json", slug(&r.id))), &doc)?;
            if let Some(img) = &o.reconstruction {
                let path = recon.join(format!("{}.png", slug(&r.id)));
                img.save_png(&path).map_err(|e| output_err(&path, e))?;
            }
            rows.push(vec![
                r.id.clone(),
                group_of.get(r.id.as_str()).unwrap_or(&"").to_string(),
                p.k.to_string(),
                p.total_mass().to_string(),
            ]);
        }
        write_csv(
            &d.join("summary.csv"),
            &strings(&["id", "group", "K", "foreground_pixels"]),
            &rows,
        )?;

        let mut docs = Vec::new();
        for ((key, _), gp) in corpus.grouping.groups.iter().zip(group_palettes) {
            match gp {
                Ok(gp) => {
                    let path = d.join(format!("strip_{}.png", slug(&key.label)));
                    render::palette_strip(gp)
                        .save_png(&path)
                        .map_err(|e| output_err(&path, e))?;
                    docs.push(GroupPaletteJson {
                        group: key.label.clone(),
                        error: None,
                        swatches: swatch_json(gp),
                    });
                }
                Err(e) => docs.push(GroupPaletteJson {
                    group: key.label.clone(),
                    error: Some(e.clone()),
                    swatches: Vec::new(),
                }),
            }
        }
        write_json(&d.join("groups.json"), &docs)?;
    }

    if let Some((records, scatter)) = &result.complexity {
        let d = dir(out, "complexity")?;
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| {
                vec![
                    r.id.clone(),
                    opt(r.age),
                    r.corner_count.to_string(),
                    opt(r.palette_variability),
                ]
            })
            .collect();
        write_csv(
            &d.join("complexity.csv"),
            &strings(&["id", "age", "corner_count", "palette_variability"]),
            &rows,
        )?;
        let rows: Vec<Vec<String>> = scatter
            .bin_medians
            .iter()
            .map(|b| {
                vec![
                    b.bin.clone(),
                    b.n.to_string(),
                    opt(b.corner_median),
                    opt(b.variability_median),
                ]
            })
            .collect();
        write_csv(
            &d.join("bins.csv"),
            &strings(&["bin", "n", "corner_median", "variability_median"]),
            &rows,
        )?;
        let medians = |f: fn(&drawstat_core::complexity::BinMedian) -> Option<f64>| -> Vec<(f64, f64, f64)> {
            scatter
                .bin_medians
                .iter()
                .filter_map(|b| {
                    let bin = cfg.age_bins.iter().find(|a| a.label() == b.bin)?;
                    Some((bin.lower, bin.upper, f(b)?))
                })
                .collect()
        };
        for (name, points, med) in [
            ("corners_vs_age.png", &scatter.corners, medians(|b| b.corner_median)),
            (
                "variability_vs_age.png",
                &scatter.variability,
                medians(|b| b.variability_median),
            ),
        ] {
            let path = d.join(name);
            render::scatter(points, &med)
                .save_png(&path)
                .map_err(|e| output_err(&path, e))?;
        }
    }

    if let Some(report) = &result.stats {
        let d = dir(out, "stats")?;
        write_json(&d.join("report.json"), report)?;
        let mut header = vec![String::new()];
        header.extend(report.labels.iter().cloned());
        let rows: Vec<Vec<String>> = report
            .labels
            .iter()
            .zip(&report.p_matrix)
            .map(|(l, row)| {
                let mut r = vec![l.clone()];
                r.extend(row.iter().map(|&p| opt(p)));
                r
            })
            .collect();
        write_csv(&d.join("p_matrix.csv"), &header, &rows)?;
        let path = d.join("p_matrix.png");
        render::p_matrix(report)
            .save_png(&path)
            .map_err(|e| output_err(&path, e))?;
    }
    Ok(())
}

//! Hot kernels, benchmarked under whichever `par` mode the build selects.
//!
//! Benchmark ids do not mention the mode, so the two builds can be compared
//! through criterion baselines:
//!
//! ```text
//! cargo bench -p drawstat-core --no-default-features --bench kernels -- --save-baseline sequential
//! cargo bench -p drawstat-core --bench kernels -- --baseline sequential
//! ```

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use drawstat_core::complexity::{harris_corners, HarrisParams};
use drawstat_core::imaging::{srgb_to_lab, to_grayscale};
use drawstat_core::palette::{extract_foreground, kmeans_lab, select_palette_with, silhouette_exact, PaletteOptions};
use drawstat_core::stats::two_sample_test;
use drawstat_core::synth::{generate_in_memory, SynthSpec};
use drawstat_core::{par, Lab};

fn drawing() -> drawstat_core::RasterImage {
    let mut spec = SynthSpec::bundled(1);
    spec.groups.truncate(1);
    spec.groups[0].n_drawings = 1;
    generate_in_memory(&spec).unwrap().remove(0).image
}

fn kernels(c: &mut Criterion) {
    eprintln!("par mode: {}", par::MODE);
    let img = drawing();
    let lab = srgb_to_lab(&img);
    let gray = to_grayscale(&img);
    let fg = extract_foreground(&lab).unwrap();
    let points = fg.foreground_pixels(&lab);

    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    g.bench_function("gmm_200x200", |b| b.iter(|| extract_foreground(&lab).unwrap()));
    g.bench_function("palette_sweep_k2_10", |b| {
        b.iter(|| select_palette_with(&lab, &fg, 7, &PaletteOptions::default()).unwrap())
    });
    let sub: Vec<Lab> = points.iter().step_by((points.len() / 2000).max(1)).copied().collect();
    let fit = kmeans_lab(&sub, 5, 3).unwrap();
    g.bench_function("silhouette_exact_2000", |b| {
        b.iter(|| silhouette_exact(&sub, &fit.assignments).unwrap())
    });
    g.bench_function("harris_200x200", |b| {
        b.iter(|| harris_corners(&gray, &HarrisParams::default()).unwrap())
    });

    let a: Vec<Vec<f64>> = (0..50)
        .map(|i| (0..200).map(|j| ((i * 31 + j * 7) % 97) as f64).collect())
        .collect();
    let bb: Vec<Vec<f64>> = (0..50)
        .map(|i| (0..200).map(|j| ((i * 17 + j * 13) % 89) as f64).collect())
        .collect();
    g.bench_function("nn_test_50x50_h200_2000perm", |b| {
        b.iter(|| two_sample_test(&a, &bb, 3, 2000, 5).unwrap())
    });

    g.bench_function("synth_bundled_60", |b| {
        b.iter_batched(
            || SynthSpec::bundled(2),
            |s| generate_in_memory(&s).unwrap(),
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);

use drawstat_core::corpus::{Country, Task};
use drawstat_core::imaging::rgb_to_lab;
use drawstat_core::synth::{default_pencils, generate, DrawingTruth, GroupSpec, PencilChoice, SynthSpec};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

fn drawstat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drawstat"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let o = drawstat(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-tests").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            header
                .iter()
                .map(String::from)
                .zip(rec.unwrap().iter().map(String::from))
                .collect()
        })
        .collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    out: PathBuf,
    truth: BTreeMap<String, DrawingTruth>,
}

const GOD_PENCILS: [&str; 5] = ["navy", "red", "green", "yellow", "violet"];

/// Gods drawings (JP, five fixed pencils, top-biased, one blank) and general
/// drawings (US, random pencils without yellow), run through every pipeline.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = scratch("fixture");
        let mut gods = GroupSpec::new("gods", 13, Country::JP);
        gods.task = Task::Gods;
        gods.bias = 0.9;
        gods.blank = 1;
        gods.pencils = PencilChoice::Fixed(GOD_PENCILS.iter().map(|s| s.to_string()).collect());
        gods.size = (0.12, 0.26);
        let mut general = GroupSpec::new("general", 12, Country::US);
        general.pencils = PencilChoice::Random {
            min: 3,
            max: 5,
            pool: ["green", "teal", "maroon", "navy", "violet", "magenta"]
                .map(String::from)
                .to_vec(),
        };
        let corpus = generate(&SynthSpec::new(3, vec![gods, general]), &dir.join("corpus")).unwrap();
        let out = dir.join("out");
        ok(&[
            "run-all",
            "--manifest",
            s(&corpus.manifest),
            "--out",
            s(&out),
            "--group-by",
            "task",
            "--permutations",
            "2000",
        ]);
        Fixture {
            out,
            truth: corpus.truth,
        }
    })
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap()
}

#[test]
fn empty_manifest_is_a_corpus_error() {
    let d = scratch("empty");
    let m = d.join("manifest.csv");
    std::fs::write(&m, "id,path,country,region,age,gender,task,school\n").unwrap();
    for cmd in ["gravity", "complexity", "run-all"] {
        let o = drawstat(&[cmd, "--manifest", s(&m), "--out", s(&d.join("out"))]);
        assert_eq!(o.status.code(), Some(3));
        let e = stderr_json(&o);
        assert_eq!(e["error"]["kind"], "corpus");
        assert_eq!(e["error"]["message"], "empty corpus");
    }
}

#[test]
fn missing_manifest_is_a_corpus_error() {
    let d = scratch("missing");
    let o = drawstat(&["gravity", "--manifest", s(&d.join("nope.csv")), "--out", s(&d)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_flags_are_config_errors() {
    let d = scratch("flags");
    let path = d.join("m.csv");
    let m = s(&path);
    for args in [
        vec!["gravity", "--manifest", m, "--out", "x", "--knn", "0"],
        vec!["gravity", "--manifest", m, "--out", "x", "--group-by", "planet"],
        vec!["gravity", "--manifest", m, "--out", "x", "--bogus"],
        vec!["colors", "--manifest", m, "--out", "x", "--ref-color", "red,50,70"],
        vec!["stats", "--out", "x"],
    ] {
        assert_eq!(drawstat(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn stats_with_one_group_is_a_pipeline_error() {
    let d = scratch("one-group");
    let c = generate(&SynthSpec::new(1, vec![GroupSpec::new("g", 3, Country::CH)]), &d).unwrap();
    let o = drawstat(&["stats", "--manifest", s(&c.manifest), "--out", s(&d.join("out"))]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"]["kind"], "pipeline");
}

#[test]
fn single_drawing_gives_single_point_scatter() {
    let d = scratch("single");
    let c = generate(&SynthSpec::new(2, vec![GroupSpec::new("g", 1, Country::CH)]), &d).unwrap();
    let out = d.join("out");
    ok(&["complexity", "--manifest", s(&c.manifest), "--out", s(&out)]);
    let table = rows(&out.join("complexity/complexity.csv"));
    assert_eq!(table.len(), 1);
    assert_eq!(
        std::fs::read_to_string(out.join("complexity/complexity.csv"))
            .unwrap()
            .lines()
            .next()
            .unwrap(),
        "id,age,corner_count,palette_variability"
    );
    assert_eq!(rows(&out.join("complexity/bins.csv")).len(), 1);
    assert!(out.join("complexity/corners_vs_age.png").exists());
}

#[test]
fn config_file_is_echoed_and_overridden() {
    let d = scratch("config");
    let c = generate(&SynthSpec::new(2, vec![GroupSpec::new("g", 2, Country::CH)]), &d).unwrap();
    let cfg = d.join("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "manifest = \"{}\"\nout = \"{}\"\nh = 50\nseed = 4\nref_color = [\"red,50,70,50,40\"]\n",
            s(&c.manifest),
            s(&d.join("out"))
        ),
    )
    .unwrap();
    ok(&["gravity", "--config", s(&cfg), "--seed", "9"]);
    let run = json(&d.join("out/run.json"));
    assert_eq!(run["config"]["h"], 50);
    assert_eq!(run["config"]["seed"], 9);
    assert_eq!(run["config"]["ref_colors"][0]["name"], "red");
    assert_eq!(run["manifest_hash"].as_str().unwrap().len(), 40);
    assert_eq!(rows(&d.join("out/gravity/profiles.csv"))[0].len(), 2 + 50);
}

#[test]
fn blank_drawing_is_skipped_and_run_continues() {
    let f = fixture();
    let skipped = json(&f.out.join("skipped.json"));
    let blank = "gods-012";
    let stages: Vec<&str> = skipped["skipped"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["id"] == blank)
        .map(|e| e["stage"].as_str().unwrap())
        .collect();
    assert!(stages.contains(&"foreground"), "{stages:?}");
    assert!(!f.out.join(format!("palette/drawings/{blank}.json")).exists());
    assert!(f.out.join("palette/drawings/gods-011.json").exists());
    let complexity = rows(&f.out.join("complexity/complexity.csv"));
    let row = complexity.iter().find(|r| r["id"] == blank).unwrap();
    assert_eq!(row["palette_variability"], "");
}

#[test]
fn five_pencil_group_reports_k_five() {
    let f = fixture();
    let table = rows(&f.out.join("palette/summary.csv"));
    let gods: Vec<_> = table.iter().filter(|r| r["group"] == "gods").collect();
    assert_eq!(gods.len(), 12);
    let fives = gods.iter().filter(|r| r["K"] == "5").count();
    assert!(fives * 100 >= 95 * gods.len(), "{fives}/{}", gods.len());
    for r in &table {
        let p = json(&f.out.join(format!("palette/drawings/{}.json", r["id"])));
        assert_eq!(
            p["K"].as_u64().unwrap() as usize,
            p["centroids"].as_array().unwrap().len()
        );
        assert!(p["curve"].as_object().unwrap().contains_key(&p["K"].to_string()));
    }
}

#[test]
fn strip_order_follows_pencil_usage() {
    let f = fixture();
    let pencils = default_pencils();
    let labs: Vec<_> = pencils.iter().map(|p| rgb_to_lab(p.rgb)).collect();
    let mut usage: BTreeMap<&str, u64> = BTreeMap::new();
    for t in f.truth.values().filter(|t| t.group == "gods") {
        for (name, m) in &t.pencil_masses {
            *usage.entry(name.as_str()).or_default() += m;
        }
    }
    let mut want: Vec<&str> = usage.keys().copied().collect();
    want.sort_by_key(|n| std::cmp::Reverse(usage[n]));

    // Swatches are merged per nearest pencil, since the swatch budget can
    // split one pencil's tight cluster in two.
    let groups = json(&f.out.join("palette/groups.json"));
    let gods = groups
        .as_array()
        .unwrap()
        .iter()
        .find(|g| g["group"] == "gods")
        .unwrap();
    let mut weight: BTreeMap<&str, f64> = BTreeMap::new();
    for sw in gods["swatches"].as_array().unwrap() {
        let l: Vec<f64> = sw["lab"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        let lab = drawstat_core::Lab::new(l[0], l[1], l[2]);
        let i = (0..labs.len())
            .min_by(|&a, &b| lab.distance(labs[a]).total_cmp(&lab.distance(labs[b])))
            .unwrap();
        *weight.entry(pencils[i].name.as_str()).or_default() += sw["weight"].as_f64().unwrap();
    }
    let mut got: Vec<&str> = weight.keys().copied().collect();
    got.sort_by(|a, b| weight[b].total_cmp(&weight[a]));
    assert_eq!(got, want);
}

#[test]
fn color_proportions_match_ground_truth() {
    let f = fixture();
    for r in rows(&f.out.join("colors/proportions.csv")) {
        let t = &f.truth[&r["id"]];
        for name in ["green", "yellow"] {
            if r[name].is_empty() {
                assert_eq!(r["id"], "gods-012");
                continue;
            }
            let got: f64 = r[name].parse().unwrap();
            assert!(
                (got - t.color_props[name]).abs() <= 0.03,
                "{} {name}: {got} vs {}",
                r["id"],
                t.color_props[name]
            );
        }
    }
}

#[test]
fn group_without_yellow_has_empty_heatmap() {
    let f = fixture();
    let text = std::fs::read_to_string(f.out.join("colors/heatmap_yellow_general.csv")).unwrap();
    assert_eq!(text.lines().count(), 200);
    assert!(text.lines().all(|l| l.split(',').all(|c| c == "0")));
    let gods = std::fs::read_to_string(f.out.join("colors/heatmap_yellow_gods.csv")).unwrap();
    assert!(gods.lines().any(|l| l.split(',').any(|c| c != "0")));
}

#[test]
fn gods_and_general_proportions_match_ground_truth() {
    let f = fixture();
    for g in rows(&f.out.join("gravity/groups.csv")) {
        let truths: Vec<f64> = f
            .truth
            .values()
            .filter(|t| t.group == g["group"])
            .map(|t| t.colored_proportion)
            .collect();
        let want = truths.iter().sum::<f64>() / truths.len() as f64;
        let got: f64 = g["colored_proportion"].parse().unwrap();
        assert!((got - want).abs() <= 0.02, "{}: {got} vs {want}", g["group"]);
    }
}

#[test]
fn top_biased_profile_peaks_in_upper_half() {
    let f = fixture();
    let profiles = rows(&f.out.join("gravity/group_profiles.csv"));
    let gods = profiles.iter().find(|r| r["group"] == "gods").unwrap();
    let values: Vec<f64> = (0..200).map(|j| gods[&format!("row_{j}")].parse().unwrap()).collect();
    let peak = (0..200).max_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    assert!(peak < 100, "peak row {peak}");
}

#[test]
fn stats_outputs_are_consistent() {
    let f = fixture();
    let report = json(&f.out.join("stats/report.json"));
    assert_eq!(report["labels"], serde_json::json!(["general", "gods"]));
    assert_eq!(report["permutations"], 2000);
    let p = report["p_matrix"][0][1].as_f64().unwrap();
    assert_eq!(report["p_matrix"][1][0].as_f64().unwrap(), p);
    assert!(report["p_matrix"][0][0].is_null());
    assert!(p <= 0.05);
    let m = rows(&f.out.join("stats/p_matrix.csv"));
    assert_eq!(m[0]["gods"].parse::<f64>().unwrap(), p);
    assert!(f.out.join("stats/p_matrix.png").exists());
}

#[test]
fn identical_groups_are_rarely_separated() {
    let d = scratch("null");
    let mut not_rejected = 0;
    for seed in 0..10 {
        let groups = vec![
            GroupSpec::new("a", 12, Country::CH),
            GroupSpec::new("b", 12, Country::US),
        ];
        let mut spec = SynthSpec::new(100 + seed, groups);
        spec.width = 80;
        spec.height = 80;
        let c = generate(&spec, &d.join(format!("c{seed}"))).unwrap();
        let out = d.join(format!("o{seed}"));
        ok(&[
            "stats",
            "--manifest",
            s(&c.manifest),
            "--out",
            s(&out),
            "--h",
            "40",
            "--permutations",
            "1000",
            "--seed",
            &seed.to_string(),
        ]);
        let p = json(&out.join("stats/report.json"))["p_matrix"][0][1].as_f64().unwrap();
        not_rejected += usize::from(p >= 0.05);
    }
    assert!(not_rejected >= 9, "{not_rejected}/10");
}

#[test]
fn group_by_age_lists_ungrouped_records() {
    let d = scratch("ages");
    let c = generate(&SynthSpec::new(8, vec![GroupSpec::new("g", 6, Country::CH)]), &d).unwrap();
    let out = d.join("out");
    ok(&[
        "gravity",
        "--manifest",
        s(&c.manifest),
        "--out",
        s(&out),
        "--group-by",
        "age",
        "--age-bins",
        "1,10",
    ]);
    let skipped = json(&out.join("skipped.json"));
    let ungrouped = skipped["ungrouped"].as_array().unwrap().len();
    let grouped: usize = rows(&out.join("gravity/groups.csv"))
        .iter()
        .map(|r| r["n"].parse::<usize>().unwrap())
        .sum();
    assert_eq!(grouped + ungrouped, 6);
}

#[test]
fn synth_subcommand_writes_bundled_corpus() {
    let d = scratch("synth");
    let o = drawstat(&["synth", "--out", s(&d), "--seed", "1"]);
    assert!(o.status.success());
    let manifest = String::from_utf8_lossy(&o.stdout).trim().to_string();
    let records = drawstat_core::corpus::load_manifest(Path::new(&manifest)).unwrap();
    assert_eq!(records.len(), 60);
    assert!(d.join("ground_truth.json").exists());
}

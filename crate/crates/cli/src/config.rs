//! Command line, config file and the resolved run configuration.
//!
//! Precedence is built-in defaults, then the TOML file given by `--config`,
//! then flags. Config keys are the flag names with `_` for `-`, except that
//! repeated `--ref-color` flags become one `ref_color` array:
//!
//! ```toml
//! manifest = "corpus/manifest.csv"
//! out = "results"
//! group_by = "age"
//! age_bins = "1,7,11,23"
//! ref_color = ["green,50,-50,50,50", "red,50,70,50,40"]
//! permutations = 2000
//! seed = 7
//! ```

use crate::CliError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use drawstat_core::colorfield::ReferenceColor;
use drawstat_core::complexity::HarrisParams;
use drawstat_core::corpus::AgeBin;
use drawstat_core::stats::{DEFAULT_ALPHA, DEFAULT_KNN, DEFAULT_PERMUTATIONS, MIN_PERMUTATIONS};
use drawstat_core::GroupDimension;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const DEFAULT_AGE_BINS: &str = "1,7,9,11,13,23";
pub const DEFAULT_SIDE: usize = 200;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "drawstat", version, about = "Corpus statistics for scanned drawings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inverse row-intensity profiles, gravity rows and colored proportions.
    Gravity(RunArgs),
    /// Reference-colour heatmaps and proportions.
    Colors(RunArgs),
    /// Per-drawing palettes, reconstructions and group palette strips.
    Palette(RunArgs),
    /// Harris corner counts and palette variability against age.
    Complexity(RunArgs),
    /// Pairwise two-sample tests between groups of profiles.
    Stats(RunArgs),
    /// Every pipeline in one pass.
    RunAll(RunArgs),
    /// Writes the bundled synthetic corpus with its ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Gravity,
    Colors,
    Palette,
    Complexity,
    Stats,
}

impl Pipeline {
    pub const ALL: [Pipeline; 5] = [
        Pipeline::Gravity,
        Pipeline::Colors,
        Pipeline::Palette,
        Pipeline::Complexity,
        Pipeline::Stats,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Denominator {
    /// Share of the GMM foreground.
    #[default]
    Colored,
    /// Share of the whole page.
    All,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// TOML file with default values for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus manifest (CSV or JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// country | region | age | task
    #[arg(long, value_parser = parse_dimension)]
    pub group_by: Option<GroupDimension>,
    /// Increasing bin edges, e.g. "1,7,9,11,13,23".
    #[arg(long)]
    pub age_bins: Option<String>,
    /// Group Russian drawings by region.
    #[arg(long)]
    pub split_russia: bool,
    /// Profile length in rows.
    #[arg(long)]
    pub h: Option<usize>,
    /// Side of the square working raster.
    #[arg(long)]
    pub k: Option<usize>,
    /// name,L,a,b,threshold (repeatable; replaces the green/yellow defaults).
    #[arg(long = "ref-color")]
    pub ref_color: Vec<String>,
    /// Neighbours per point in the two-sample statistic.
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Significance level for the p-value matrix.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub harris_k: Option<f64>,
    /// Relative response threshold.
    #[arg(long)]
    pub harris_thresh: Option<f64>,
    /// Non-maximum suppression radius.
    #[arg(long)]
    pub nms: Option<usize>,
    /// Swatches per group palette.
    #[arg(long)]
    pub swatches: Option<usize>,
    #[arg(long, value_enum)]
    pub denominator: Option<Denominator>,
    /// Also compute the exact Silhouette curve (quadratic cost).
    #[arg(long)]
    pub exact_silhouette: bool,
    /// Count corners on the decoded scan instead of the working raster.
    #[arg(long)]
    pub full_res: bool,
    /// Worker threads (default: all cores). Never changes results.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Directory for images/, manifest.csv and ground_truth.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

fn parse_dimension(s: &str) -> Result<GroupDimension, String> {
    s.parse()
}

/// On-disk form of [`RunArgs`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub group_by: Option<String>,
    pub age_bins: Option<String>,
    pub split_russia: Option<bool>,
    pub h: Option<usize>,
    pub k: Option<usize>,
    pub ref_color: Option<Vec<String>>,
    pub knn: Option<usize>,
    pub permutations: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub harris_k: Option<f64>,
    pub harris_thresh: Option<f64>,
    pub nms: Option<usize>,
    pub swatches: Option<usize>,
    pub denominator: Option<Denominator>,
    pub exact_silhouette: Option<bool>,
    pub full_res: Option<bool>,
    pub workers: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }
}

/// Everything that can influence an output file. Serialized into `run.json`;
/// the output directory and worker count are left out because they do not.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    pub pipelines: Vec<Pipeline>,
    pub group_by: GroupDimension,
    pub age_bins: Vec<AgeBin>,
    pub split_russia: bool,
    pub h: usize,
    pub k: usize,
    pub ref_colors: Vec<ReferenceColor>,
    pub knn: usize,
    pub permutations: usize,
    pub alpha: f64,
    pub seed: u64,
    pub harris: HarrisParams,
    pub swatches: usize,
    pub denominator: Denominator,
    pub exact_silhouette: bool,
    pub full_res: bool,
    #[serde(skip)]
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn resolve(args: &RunArgs, pipelines: Vec<Pipeline>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let cfg_err = CliError::Config;

        let manifest = args
            .manifest
            .clone()
            .or(file.manifest)
            .ok_or_else(|| cfg_err("missing --manifest".into()))?;
        let out = args
            .out
            .clone()
            .or(file.out)
            .ok_or_else(|| cfg_err("missing --out".into()))?;
        let group_by = match (args.group_by, file.group_by) {
            (Some(d), _) => d,
            (None, Some(s)) => s.parse().map_err(cfg_err)?,
            (None, None) => GroupDimension::Country,
        };
        let edges = args
            .age_bins
            .clone()
            .or(file.age_bins)
            .unwrap_or_else(|| DEFAULT_AGE_BINS.to_string());
        let age_bins = AgeBin::parse_edges(&edges).map_err(|e| cfg_err(format!("--age-bins: {e}")))?;
        let refs_raw = if !args.ref_color.is_empty() {
            args.ref_color.clone()
        } else {
            file.ref_color.unwrap_or_default()
        };
        let ref_colors = if refs_raw.is_empty() {
            ReferenceColor::defaults()
        } else {
            refs_raw
                .iter()
                .map(|s| {
                    s.parse::<ReferenceColor>()
                        .map_err(|e| cfg_err(format!("--ref-color: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        let defaults = HarrisParams::default();
        let harris = HarrisParams {
            k: args.harris_k.or(file.harris_k).unwrap_or(defaults.k),
            rel_threshold: args
                .harris_thresh
                .or(file.harris_thresh)
                .unwrap_or(defaults.rel_threshold),
            nms_radius: args.nms.or(file.nms).unwrap_or(defaults.nms_radius),
            sigma: defaults.sigma,
        };

        let config = RunConfig {
            manifest,
            out,
            pipelines,
            group_by,
            age_bins,
            split_russia: args.split_russia || file.split_russia.unwrap_or(false),
            h: args.h.or(file.h).unwrap_or(DEFAULT_SIDE),
            k: args.k.or(file.k).unwrap_or(DEFAULT_SIDE),
            ref_colors,
            knn: args.knn.or(file.knn).unwrap_or(DEFAULT_KNN),
            permutations: args.permutations.or(file.permutations).unwrap_or(DEFAULT_PERMUTATIONS),
            alpha: args.alpha.or(file.alpha).unwrap_or(DEFAULT_ALPHA),
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            harris,
            swatches: args
                .swatches
                .or(file.swatches)
                .unwrap_or(drawstat_core::palette::DEFAULT_SWATCHES),
            denominator: args.denominator.or(file.denominator).unwrap_or_default(),
            exact_silhouette: args.exact_silhouette || file.exact_silhouette.unwrap_or(false),
            full_res: args.full_res || file.full_res.unwrap_or(false),
            workers: args.workers.or(file.workers),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        if self.h == 0 {
            return fail("--h must be positive".into());
        }
        if self.k < 8 {
            return fail(format!("--k must be at least 8, got {}", self.k));
        }
        if self.knn == 0 {
            return fail("--knn must be positive".into());
        }
        if self.permutations < MIN_PERMUTATIONS {
            return fail(format!("--permutations must be at least {MIN_PERMUTATIONS}"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("--alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.harris.k > 0.0 && self.harris.k < 0.25) {
            return fail(format!("--harris-k must lie in (0, 0.25), got {}", self.harris.k));
        }
        if !(0.0..1.0).contains(&self.harris.rel_threshold) {
            return fail(format!(
                "--harris-thresh must lie in [0, 1), got {}",
                self.harris.rel_threshold
            ));
        }
        if self.harris.nms_radius == 0 {
            return fail("--nms must be positive".into());
        }
        if self.swatches == 0 {
            return fail("--swatches must be positive".into());
        }
        if self.workers == Some(0) {
            return fail("--workers must be positive".into());
        }
        let mut names: Vec<&str> = self.ref_colors.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return fail(format!("reference colour `{}` given twice", w[0]));
        }
        Ok(())
    }

    pub fn runs(&self, p: Pipeline) -> bool {
        self.pipelines.contains(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> RunArgs {
        RunArgs {
            manifest: Some("m.csv".into()),
            out: Some("o".into()),
            ..RunArgs::default()
        }
    }

    #[test]
    fn defaults_resolve() {
        let c = RunConfig::resolve(&args(), vec![Pipeline::Gravity]).unwrap();
        assert_eq!((c.h, c.k, c.knn, c.permutations, c.swatches), (200, 200, 3, 10_000, 12));
        assert_eq!(c.group_by, GroupDimension::Country);
        assert_eq!(c.age_bins.len(), 5);
        assert_eq!(c.ref_colors.len(), 2);
        assert_eq!(c.denominator, Denominator::Colored);
        assert_eq!(c.harris, HarrisParams::default());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "manifest = \"a.csv\"\nout = \"x\"\nseed = 9\nknn = 5\ngroup_by = \"age\"\nref_color = [\"red,50,70,50,40\"]\n",
        )
        .unwrap();
        let a = RunArgs {
            config: Some(path),
            seed: Some(3),
            ..RunArgs::default()
        };
        let c = RunConfig::resolve(&a, vec![]).unwrap();
        assert_eq!(c.manifest, PathBuf::from("a.csv"));
        assert_eq!((c.seed, c.knn), (3, 5));
        assert_eq!(c.group_by, GroupDimension::AgeBin);
        assert_eq!(c.ref_colors[0].name, "red");
    }

    #[test]
    fn bad_values_are_config_errors() {
        let bad = [
            RunArgs { knn: Some(0), ..args() },
            RunArgs {
                permutations: Some(10),
                ..args()
            },
            RunArgs {
                age_bins: Some("7,1".into()),
                ..args()
            },
            RunArgs {
                ref_color: vec!["g,1,2".into()],
                ..args()
            },
            RunArgs {
                ref_color: vec!["g,50,0,0,5".into(), "g,60,0,0,5".into()],
                ..args()
            },
            RunArgs {
                harris_k: Some(0.3),
                ..args()
            },
            RunArgs {
                manifest: None,
                ..args()
            },
        ];
        for a in bad {
            let e = RunConfig::resolve(&a, vec![]).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{e}");
        }
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "permutatoins = 5\n").unwrap();
        let a = RunArgs {
            config: Some(path),
            ..args()
        };
        assert!(matches!(RunConfig::resolve(&a, vec![]), Err(CliError::Config(_))));
    }
}

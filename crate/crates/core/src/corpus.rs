//! Corpus manifests and grouping.
//!
//! A manifest is a UTF-8 CSV with the exact header
//! `id,path,country,region,age,gender,task,school` (or the equivalent JSON
//! array of objects). Empty CSV fields mean "absent". Relative image paths
//! are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact CSV header of a corpus manifest.
pub const MANIFEST_HEADER: [&str; 8] = ["id", "path", "country", "region", "age", "gender", "task", "school"];

/// Youngest admissible age (exclusive).
pub const MIN_AGE: f64 = 1.0;
/// Oldest admissible age (inclusive).
pub const MAX_AGE: f64 = 23.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid record `{id}`: field `{field}`: {message}")]
    Validation {
        id: String,
        field: &'static str,
        message: String,
    },
    #[error("duplicate record id(s): {}", .0.join(", "))]
    DuplicateIds(Vec<String>),
    #[error("age bins {0} and {1} overlap")]
    OverlappingBins(AgeBin, AgeBin),
    #[error("invalid age bin: {0}")]
    InvalidBin(String),
    #[error("grouping by age requires a bin set")]
    MissingBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Country {
    CH,
    JP,
    RO,
    RU,
    US,
}

impl Country {
    pub const ALL: [Country; 5] = [Country::CH, Country::JP, Country::RO, Country::RU, Country::US];

    pub fn code(self) -> &'static str {
        match self {
            Country::CH => "CH",
            Country::JP => "JP",
            Country::RO => "RO",
            Country::RU => "RU",
            Country::US => "US",
        }
    }
}

impl FromStr for Country {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Country::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown country code `{s}` (expected CH, JP, RO, RU or US)"))
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Unknown,
}

impl FromStr for Gender {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "male" => Ok(Gender::Male),
            "female" => Ok(Gender::Female),
            "unknown" | "" => Ok(Gender::Unknown),
            _ => Err(format!("unknown gender `{s}`")),
        }
    }
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }
}

/// Which instruction the child was given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Gods,
    General,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Gods => "gods",
            Task::General => "general",
        }
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gods" => Ok(Task::Gods),
            "general" => Ok(Task::General),
            _ => Err(format!("unknown task `{s}` (expected gods or general)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum School {
    Religious,
    Secular,
    Unknown,
}

impl School {
    pub fn as_str(self) -> &'static str {
        match self {
            School::Religious => "religious",
            School::Secular => "secular",
            School::Unknown => "unknown",
        }
    }
}

impl FromStr for School {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "religious" => Ok(School::Religious),
            "secular" => Ok(School::Secular),
            "unknown" => Ok(School::Unknown),
            _ => Err(format!("unknown school `{s}`")),
        }
    }
}

/// One scanned drawing and its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawingRecord {
    pub id: String,
    pub path: PathBuf,
    pub country: Country,
    #[serde(default)]
    pub region: Option<String>,
    /// Age in years; `None` when unknown.
    #[serde(default)]
    pub age: Option<f64>,
    #[serde(default = "unknown_gender")]
    pub gender: Gender,
    pub task: Task,
    #[serde(default)]
    pub school: Option<School>,
}

fn unknown_gender() -> Gender {
    Gender::Unknown
}

impl DrawingRecord {
    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |field, message: String| CorpusError::Validation {
            id: self.id.clone(),
            field,
            message,
        };
        if self.id.trim().is_empty() {
            return Err(fail("id", "empty id".into()));
        }
        if self.path.as_os_str().is_empty() {
            return Err(fail("path", "empty path".into()));
        }
        if let Some(age) = self.age {
            if !(age > MIN_AGE && age <= MAX_AGE) {
                return Err(fail("age", format!("{age} outside ({MIN_AGE}, {MAX_AGE}]")));
            }
        }
        if let Some(region) = &self.region {
            if region.trim().is_empty() {
                return Err(fail("region", "blank region".into()));
            }
        }
        Ok(())
    }

    /// Country label, optionally split by region (`RU-bo`, `RU-sp`).
    pub fn country_label(&self, split_russia: bool) -> String {
        match (&self.region, self.country) {
            (Some(r), Country::RU) if split_russia => format!("RU-{r}"),
            _ => self.country.code().to_string(),
        }
    }

    /// Country plus region when a region is recorded.
    pub fn region_label(&self) -> String {
        match &self.region {
            Some(r) => format!("{}-{r}", self.country.code()),
            None => self.country.code().to_string(),
        }
    }
}

/// Half-open age interval `(lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgeBin {
    pub lower: f64,
    pub upper: f64,
}

impl AgeBin {
    pub fn new(lower: f64, upper: f64) -> Result<Self, CorpusError> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(CorpusError::InvalidBin(format!("({lower},{upper}]")));
        }
        Ok(AgeBin { lower, upper })
    }

    pub fn contains(&self, age: f64) -> bool {
        age > self.lower && age <= self.upper
    }

    pub fn overlaps(&self, other: &AgeBin) -> bool {
        self.lower < other.upper && other.lower < self.upper
    }

    /// The five standard bins (1,7], (7,9], (9,11], (11,13], (13,23].
    pub fn standard() -> Vec<AgeBin> {
        Self::from_edges(&[1.0, 7.0, 9.0, 11.0, 13.0, 23.0]).expect("static edges")
    }

    /// The merged bins (1,7], (7,11], (11,23].
    pub fn merged() -> Vec<AgeBin> {
        Self::from_edges(&[1.0, 7.0, 11.0, 23.0]).expect("static edges")
    }

    /// Consecutive bins from a strictly increasing edge list.
    pub fn from_edges(edges: &[f64]) -> Result<Vec<AgeBin>, CorpusError> {
        if edges.len() < 2 {
            return Err(CorpusError::InvalidBin("need at least two edges".into()));
        }
        edges.windows(2).map(|w| AgeBin::new(w[0], w[1])).collect()
    }

    /// Parses `"1,7,9,11,13,23"`.
    pub fn parse_edges(s: &str) -> Result<Vec<AgeBin>, CorpusError> {
        let edges = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| CorpusError::InvalidBin(format!("bad edge `{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_edges(&edges)
    }

    pub fn label(&self) -> String {
        format!("({},{}]", self.lower, self.upper)
    }
}

impl fmt::Display for AgeBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Rejects any pair of overlapping bins.
pub fn check_bins(bins: &[AgeBin]) -> Result<(), CorpusError> {
    for (i, a) in bins.iter().enumerate() {
        for b in &bins[i + 1..] {
            if a.overlaps(b) {
                return Err(CorpusError::OverlappingBins(*a, *b));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupDimension {
    Country,
    Region,
    #[serde(rename = "age")]
    AgeBin,
    Task,
}

impl FromStr for GroupDimension {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "country" => Ok(GroupDimension::Country),
            "region" => Ok(GroupDimension::Region),
            "age" => Ok(GroupDimension::AgeBin),
            "task" => Ok(GroupDimension::Task),
            _ => Err(format!("unknown grouping `{s}` (country|region|age|task)")),
        }
    }
}

impl fmt::Display for GroupDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupDimension::Country => "country",
            GroupDimension::Region => "region",
            GroupDimension::AgeBin => "age",
            GroupDimension::Task => "task",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub dimension: GroupDimension,
    pub label: String,
}

impl GroupKey {
    pub fn new(dimension: GroupDimension, label: impl Into<String>) -> Self {
        GroupKey {
            dimension,
            label: label.into(),
        }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.dimension, self.label)
    }
}

#[derive(Debug, Clone, Default)]
pub struct GroupOptions {
    /// Required for [`GroupDimension::AgeBin`].
    pub bins: Option<Vec<AgeBin>>,
    /// Treat `RU-<region>` as distinct country labels.
    pub split_russia: bool,
}

/// A partition of a record list.
#[derive(Debug, Clone, PartialEq)]
pub struct Grouping {
    /// Groups in canonical order: bin order for ages, label order otherwise.
    pub groups: Vec<(GroupKey, Vec<DrawingRecord>)>,
    /// Records that fit no group (unknown age, age outside every bin).
    pub remainder: Vec<DrawingRecord>,
}

impl Grouping {
    pub fn get(&self, label: &str) -> Option<&[DrawingRecord]> {
        self.groups
            .iter()
            .find(|(k, _)| k.label == label)
            .map(|(_, v)| v.as_slice())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.groups.iter().map(|(k, _)| k.label.as_str()).collect()
    }
}

/// Partitions `records` along `dimension`. Order within each group follows
/// input order.
pub fn group_records(
    records: &[DrawingRecord],
    dimension: GroupDimension,
    options: &GroupOptions,
) -> Result<Grouping, CorpusError> {
    let mut remainder = Vec::new();
    if dimension == GroupDimension::AgeBin {
        let bins = options.bins.as_ref().ok_or(CorpusError::MissingBins)?;
        check_bins(bins)?;
        let mut buckets: Vec<Vec<DrawingRecord>> = vec![Vec::new(); bins.len()];
        for r in records {
            match r.age.and_then(|a| bins.iter().position(|b| b.contains(a))) {
                Some(i) => buckets[i].push(r.clone()),
                None => remainder.push(r.clone()),
            }
        }
        let groups = bins
            .iter()
            .zip(buckets)
            .filter(|(_, members)| !members.is_empty())
            .map(|(b, members)| (GroupKey::new(dimension, b.label()), members))
            .collect();
        return Ok(Grouping { groups, remainder });
    }

    let mut map: BTreeMap<String, Vec<DrawingRecord>> = BTreeMap::new();
    for r in records {
        let label = match dimension {
            GroupDimension::Country => r.country_label(options.split_russia),
            GroupDimension::Region => r.region_label(),
            GroupDimension::Task => r.task.as_str().to_string(),
            GroupDimension::AgeBin => unreachable!(),
        };
        map.entry(label).or_default().push(r.clone());
    }
    let groups = map
        .into_iter()
        .map(|(label, members)| (GroupKey::new(dimension, label), members))
        .collect();
    Ok(Grouping { groups, remainder })
}

fn resolve(base: Option<&Path>, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    match base {
        Some(b) if p.is_relative() => b.join(p),
        _ => p,
    }
}

fn parse_optional<T: FromStr<Err = String>>(
    id: &str,
    field: &'static str,
    raw: &str,
) -> Result<Option<T>, CorpusError> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse().map(Some).map_err(|message| CorpusError::Validation {
        id: id.to_string(),
        field,
        message,
    })
}

/// Parses manifest CSV text. `base` resolves relative image paths.
pub fn parse_manifest_csv(text: &str, base: Option<&Path>) -> Result<Vec<DrawingRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| CorpusError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(CorpusError::Parse {
            line: 1,
            message: format!("expected header `{}`", MANIFEST_HEADER.join(",")),
        });
    }

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| CorpusError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != MANIFEST_HEADER.len() {
            return Err(CorpusError::Parse {
                line,
                message: format!("expected {} fields, found {}", MANIFEST_HEADER.len(), row.len()),
            });
        }
        let id = row[0].to_string();
        let required = |field: &'static str, raw: &str| -> Result<String, CorpusError> {
            if raw.is_empty() {
                Err(CorpusError::Validation {
                    id: id.clone(),
                    field,
                    message: "required field is empty".into(),
                })
            } else {
                Ok(raw.to_string())
            }
        };
        let country = required("country", &row[2])?
            .parse()
            .map_err(|message| CorpusError::Validation {
                id: id.clone(),
                field: "country",
                message,
            })?;
        let task = required("task", &row[6])?
            .parse()
            .map_err(|message| CorpusError::Validation {
                id: id.clone(),
                field: "task",
                message,
            })?;
        let age = if row[4].is_empty() {
            None
        } else {
            Some(row[4].parse::<f64>().map_err(|_| CorpusError::Validation {
                id: id.clone(),
                field: "age",
                message: format!("`{}` is not a number", &row[4]),
            })?)
        };
        let record = DrawingRecord {
            path: resolve(base, &required("path", &row[1])?),
            country,
            region: (!row[3].is_empty()).then(|| row[3].to_string()),
            age,
            gender: parse_optional(&id, "gender", &row[5])?.unwrap_or(Gender::Unknown),
            task,
            school: parse_optional(&id, "school", &row[7])?,
            id,
        };
        record.validate()?;
        out.push(record);
    }
    check_unique(&out)?;
    Ok(out)
}

/// Parses a JSON manifest: an array of record objects.
pub fn parse_manifest_json(text: &str, base: Option<&Path>) -> Result<Vec<DrawingRecord>, CorpusError> {
    let mut records: Vec<DrawingRecord> = serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    for r in &mut records {
        if let Some(p) = r.path.to_str() {
            r.path = resolve(base, p);
        }
        r.validate()?;
    }
    check_unique(&records)?;
    Ok(records)
}

fn check_unique(records: &[DrawingRecord]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    let mut dups = Vec::new();
    for r in records {
        if !seen.insert(r.id.as_str()) && !dups.contains(&r.id) {
            dups.push(r.id.clone());
        }
    }
    if dups.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::DuplicateIds(dups))
    }
}

/// Loads a manifest from disk (`.json` as JSON, anything else as CSV).
pub fn load_manifest(path: &Path) -> Result<Vec<DrawingRecord>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent();
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        parse_manifest_json(&text, base)
    } else {
        parse_manifest_csv(&text, base)
    }
}

/// Serialises records as manifest CSV with paths written as given.
pub fn write_manifest_csv<W: std::io::Write>(records: &[DrawingRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MANIFEST_HEADER)?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            &r.path.to_string_lossy(),
            r.country.code(),
            r.region.as_deref().unwrap_or(""),
            &r.age.map(|a| a.to_string()).unwrap_or_default(),
            r.gender.as_str(),
            r.task.as_str(),
            r.school.map(School::as_str).unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

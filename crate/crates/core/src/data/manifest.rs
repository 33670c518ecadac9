//! `path,label,split` manifests pinning a dataset arrangement.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Class label. The positive class is `Covid`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    NotCovid,
    Covid,
}

impl Label {
    pub const fn index(self) -> usize {
        match self {
            Label::NotCovid => 0,
            Label::Covid => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::NotCovid),
            1 => Some(Label::Covid),
            _ => None,
        }
    }

    pub const fn token(self) -> &'static str {
        match self {
            Label::NotCovid => "not_covid",
            Label::Covid => "covid",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "covid" => Ok(Label::Covid),
            "not_covid" => Ok(Label::NotCovid),
            other => Err(format!(
                "unknown label `{other}` (expected covid|not_covid)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Test1,
    Test2,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Validation, Split::Test1, Split::Test2];

    pub const fn token(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test1 => "test1",
            Split::Test2 => "test2",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test1" => Ok(Split::Test1),
            "test2" => Ok(Split::Test2),
            other => Err(format!(
                "unknown split `{other}` (expected train|validation|test1|test2)"
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub label: Label,
    pub split: Split,
    /// 1-based line number in the manifest file (the header is line 1).
    pub row: usize,
}

impl ManifestEntry {
    /// Stable identifier used in reports: the file stem.
    pub fn id(&self) -> String {
        self.image_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("row{}", self.row))
    }
}

pub const HEADER: [&str; 3] = ["path", "label", "split"];

/// Parses manifest text; relative paths are resolved against `base`.
/// File existence is not checked.
pub fn parse_manifest(text: &str, base: &Path, source: &Path) -> Result<Vec<ManifestEntry>> {
    let err = |row: usize, message: String| Error::Manifest {
        path: source.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(err(
            1,
            format!(
                "header must be `path,label,split`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut seen = HashSet::new();
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
            err(row, e.to_string())
        })?;
        let row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(entries.len() + 2);
        let path = record.get(0).unwrap_or_default();
        if path.is_empty() {
            return Err(err(row, "empty path".into()));
        }
        let label: Label = record
            .get(1)
            .unwrap_or_default()
            .parse()
            .map_err(|m| err(row, m))?;
        let split: Split = record
            .get(2)
            .unwrap_or_default()
            .parse()
            .map_err(|m| err(row, m))?;
        let image_path = base.join(path);
        if !seen.insert(image_path.clone()) {
            return Err(err(row, format!("duplicate path `{path}`")));
        }
        entries.push(ManifestEntry {
            image_path,
            label,
            split,
            row,
        });
    }
    Ok(entries)
}

/// Reads and validates a manifest; every referenced image must exist.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base, path)?;
    let missing: Vec<PathBuf> = entries
        .iter()
        .filter(|e| !e.image_path.is_file())
        .map(|e| e.image_path.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFiles(missing));
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, rows: &[(String, Label, Split)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    w.write_record(HEADER).map_err(|e| Error::Io(e.into()))?;
    for (p, label, split) in rows {
        w.write_record([p.as_str(), label.token(), split.token()])
            .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn count_by_split(entries: &[ManifestEntry], split: Split) -> usize {
    entries.iter().filter(|e| e.split == split).count()
}

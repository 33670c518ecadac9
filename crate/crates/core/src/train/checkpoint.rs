//! Weight archive plus a plain-text `key=value` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use crate::arch::{load_weights, ArchKind, ArchVariant, NetworkGraph, WeightArchive};
use crate::data::Normalization;
use crate::error::{Error, Result};
use crate::tensor::Shape;

pub const WEIGHTS_EXT: &str = "fnw";
pub const SIDECAR_EXT: &str = "meta";
pub const META_NORM_MEAN: &str = "norm_mean";
pub const META_NORM_STD: &str = "norm_std";

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got `{line}`", i + 1))
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn format_key_values(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

pub fn sidecar_path(weights: &Path) -> PathBuf {
    weights.with_extension(SIDECAR_EXT)
}

pub fn save_checkpoint(
    g: &NetworkGraph,
    norm: &Normalization,
    meta: &[(String, String)],
    weights_path: &Path,
) -> Result<()> {
    let mut archive = WeightArchive::from_graph(g);
    archive.set_meta(META_NORM_MEAN, norm.mean);
    archive.set_meta(META_NORM_STD, norm.std);
    if let Some(dir) = weights_path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    archive.save(weights_path)?;
    fs::write(sidecar_path(weights_path), format_key_values(meta))?;
    Ok(())
}

pub struct Checkpoint {
    pub graph: NetworkGraph,
    pub norm: Normalization,
    /// Sidecar entries; empty when no sidecar exists.
    pub meta: Vec<(String, String)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn meta_f32(archive: &WeightArchive, key: &str) -> Result<f32> {
    archive
        .meta(key)
        .ok_or_else(|| Error::Archive(format!("missing metadata `{key}`")))?
        .parse()
        .map_err(|_| Error::Archive(format!("metadata `{key}` is not a number")))
}

/// Rebuilds the graph recorded in the archive and loads every parameter.
pub fn load_checkpoint(weights_path: &Path) -> Result<Checkpoint> {
    let archive = WeightArchive::load(weights_path)?;
    let kind: ArchKind = archive.variant.parse()?;
    let input = Shape::new(1, archive.input.c, archive.input.h, archive.input.w);
    let variant = match kind {
        ArchKind::Proposed => ArchVariant::proposed(input),
        ArchKind::SqueezenetPlain => ArchVariant::squeezenet(false, input),
        ArchKind::SqueezenetSimpleBypass => ArchVariant::squeezenet(true, input),
    };
    let mut graph = variant.build(0)?;
    let report = load_weights(&mut graph, &archive, 0)?;
    if !report.missing.is_empty() {
        return Err(Error::Archive(format!(
            "checkpoint lacks {}",
            report.missing.join(", ")
        )));
    }
    let norm = Normalization {
        mean: meta_f32(&archive, META_NORM_MEAN)?,
        std: meta_f32(&archive, META_NORM_STD)?,
    };
    let side = sidecar_path(weights_path);
    let meta = if side.is_file() {
        parse_key_values(&fs::read_to_string(side)?)?
    } else {
        Vec::new()
    };
    Ok(Checkpoint { graph, norm, meta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\n a = 1 \n\nb=x=y\n").unwrap();
        assert_eq!(
            kv,
            vec![("a".into(), "1".into()), ("b".into(), "x=y".into())]
        );
        assert!(parse_key_values("novalue\n").is_err());
        assert_eq!(parse_key_values(&format_key_values(&kv)).unwrap(), kv);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = ArchVariant::squeezenet(true, Shape::new(1, 3, 64, 64))
            .build(3)
            .unwrap();
        let norm = Normalization {
            mean: 0.25,
            std: 0.125,
        };
        let p = dir.path().join("best.fnw");
        save_checkpoint(&g, &norm, &[("epoch".into(), "4".into())], &p).unwrap();
        let c = load_checkpoint(&p).unwrap();
        assert_eq!(c.graph, g);
        assert_eq!(c.norm, norm);
        assert_eq!(c.meta("epoch"), Some("4"));
    }
}

//! Weight archive: a text header followed by raw little-endian `f32` payloads.
//!
//! ```text
//! FIRENET-WEIGHTS 1
//! variant=proposed
//! input=3x224x224
//! meta norm_mean=0.41
//! tensor conv1.weight 96x3x7x7 0 14112
//! tensor conv1.bias 96 56448 96
//! end
//! <payload bytes>
//! ```
//!
//! Offsets are byte offsets into the payload; lengths count `f32` elements.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::NetworkGraph;
use crate::error::{Error, Result};
use crate::tensor::Shape;

pub const MAGIC: &str = "FIRENET-WEIGHTS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightArchive {
    pub variant: String,
    pub input: Shape,
    pub metadata: Vec<(String, String)>,
    pub tensors: Vec<ArchiveTensor>,
}

/// Outcome of [`load_weights`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LoadReport {
    /// Graph parameters copied from the archive.
    pub loaded: Vec<String>,
    /// Graph parameters absent from the archive; their nodes were re-initialized.
    pub missing: Vec<String>,
    /// Archive tensors with no counterpart in the graph.
    pub unused: Vec<String>,
}

fn format_dims(dims: &[usize]) -> String {
    dims.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::Archive(format!("bad extent `{s}`")))
        })
        .collect()
}

impl WeightArchive {
    pub fn from_graph(g: &NetworkGraph) -> Self {
        let tensors = g
            .nodes()
            .iter()
            .flat_map(|node| {
                node.params()
                    .into_iter()
                    .map(move |(role, shape, data)| ArchiveTensor {
                        name: format!("{}.{}", node.name, role.suffix()),
                        shape,
                        data: data.to_vec(),
                    })
            })
            .collect();
        let input = g.input_shape();
        WeightArchive {
            variant: g.variant().to_string(),
            input,
            metadata: Vec::new(),
            tensors,
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&ArchiveTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = format!("{MAGIC} {FORMAT_VERSION}\n");
        header.push_str(&format!("variant={}\n", self.variant));
        header.push_str(&format!(
            "input={}x{}x{}\n",
            self.input.c, self.input.h, self.input.w
        ));
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n', ' ']) || v.contains('\n') {
                return Err(Error::Archive(format!(
                    "metadata `{k}` is not representable"
                )));
            }
            header.push_str(&format!("meta {k}={v}\n"));
        }
        let mut offset = 0usize;
        for t in &self.tensors {
            if t.name.contains([' ', '\n']) {
                return Err(Error::Archive(format!(
                    "tensor name `{}` contains whitespace",
                    t.name
                )));
            }
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Archive(format!(
                    "tensor `{}` shape does not match its data",
                    t.name
                )));
            }
            header.push_str(&format!(
                "tensor {} {} {} {}\n",
                t.name,
                format_dims(&t.shape),
                offset,
                t.data.len()
            ));
            offset += t.data.len() * 4;
        }
        header.push_str("end\n");
        w.write_all(header.as_bytes())?;
        let mut payload = Vec::with_capacity(offset);
        for t in &self.tensors {
            for v in &t.data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let next_line = |r: &mut BufReader<R>, line: &mut String| -> Result<()> {
            line.clear();
            if r.read_line(line)? == 0 {
                return Err(Error::Archive("unexpected end of header".into()));
            }
            if line.ends_with('\n') {
                line.pop();
            }
            Ok(())
        };

        next_line(&mut r, &mut line)?;
        let version = line
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Archive("missing magic line".into()))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(Error::Archive(format!(
                "unsupported format version `{version}`"
            )));
        }

        let mut variant = None;
        let mut input = None;
        let mut metadata = Vec::new();
        let mut entries: Vec<(String, Vec<usize>, usize, usize)> = Vec::new();
        loop {
            next_line(&mut r, &mut line)?;
            if line == "end" {
                break;
            }
            if let Some(v) = line.strip_prefix("variant=") {
                variant = Some(v.to_string());
            } else if let Some(v) = line.strip_prefix("input=") {
                let d = parse_dims(v)?;
                if d.len() != 3 {
                    return Err(Error::Archive(format!("input spec `{v}` is not CxHxW")));
                }
                input = Some(Shape::new(1, d[0], d[1], d[2]));
            } else if let Some(kv) = line.strip_prefix("meta ") {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Archive(format!("bad metadata line `{line}`")))?;
                metadata.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let parts: Vec<&str> = rest.split(' ').collect();
                if parts.len() != 4 {
                    return Err(Error::Archive(format!("bad tensor line `{line}`")));
                }
                let bad = || Error::Archive(format!("bad tensor line `{line}`"));
                entries.push((
                    parts[0].to_string(),
                    parse_dims(parts[1])?,
                    parts[2].parse().map_err(|_| bad())?,
                    parts[3].parse().map_err(|_| bad())?,
                ));
            } else {
                return Err(Error::Archive(format!("unrecognized header line `{line}`")));
            }
        }

        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let mut tensors = Vec::with_capacity(entries.len());
        for (name, shape, offset, len) in entries {
            if shape.iter().product::<usize>() != len {
                return Err(Error::Archive(format!(
                    "tensor `{name}` length disagrees with its shape"
                )));
            }
            let end = offset + len * 4;
            let bytes = payload
                .get(offset..end)
                .ok_or_else(|| Error::Archive(format!("tensor `{name}` runs past the payload")))?;
            let data = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            tensors.push(ArchiveTensor { name, shape, data });
        }
        Ok(WeightArchive {
            variant: variant.ok_or_else(|| Error::Archive("missing variant".into()))?,
            input: input.ok_or_else(|| Error::Archive("missing input spec".into()))?,
            metadata,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file =
            fs::File::open(path).map_err(|e| Error::Archive(format!("{}: {e}", path.display())))?;
        Self::read_from(file)
    }
}

/// Copies every archive tensor whose name matches a graph parameter.
///
/// Graph nodes with any parameter missing from the archive are re-initialized
/// from `seed`. A shape conflict on a matched name is an error and leaves the
/// graph untouched.
pub fn load_weights(
    g: &mut NetworkGraph,
    archive: &WeightArchive,
    seed: u64,
) -> Result<LoadReport> {
    let by_name: HashMap<&str, &ArchiveTensor> = archive
        .tensors
        .iter()
        .map(|t| (t.name.as_str(), t))
        .collect();

    let mut report = LoadReport::default();
    for node in g.nodes() {
        for (role, shape, _) in node.params() {
            let name = format!("{}.{}", node.name, role.suffix());
            match by_name.get(name.as_str()) {
                Some(t) if t.shape != shape => {
                    return Err(Error::Archive(format!(
                        "shape conflict on `{name}`: graph {} vs archive {}",
                        format_dims(&shape),
                        format_dims(&t.shape)
                    )));
                }
                Some(_) => report.loaded.push(name),
                None => report.missing.push(name),
            }
        }
    }
    let known: Vec<String> = g.param_names();
    report.unused = archive
        .tensors
        .iter()
        .filter(|t| !known.contains(&t.name))
        .map(|t| t.name.clone())
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for node in g.nodes_mut() {
        let prefix = node.name.clone();
        let incomplete = node.params().iter().any(|(role, _, _)| {
            !by_name.contains_key(format!("{prefix}.{}", role.suffix()).as_str())
        });
        if incomplete {
            node.reinitialize(&mut rng);
        }
        for (role, slot) in node.params_mut() {
            if let Some(t) = by_name.get(format!("{prefix}.{}", role.suffix()).as_str()) {
                slot.copy_from_slice(&t.data);
            }
        }
    }
    Ok(report)
}

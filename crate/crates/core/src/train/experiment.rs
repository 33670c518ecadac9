use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::arch::{load_weights, ArchKind, ArchVariant, LoadReport, NetworkGraph, WeightArchive};
use crate::error::{Error, Result};
use crate::tensor::Shape;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    /// Plain SqueezeNet, transfer weights.
    Exp1,
    /// Simple bypass, random init.
    Exp2,
    /// Simple bypass, transfer weights.
    Exp3,
    /// Proposed network, random init.
    Exp4,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::Exp1,
        Experiment::Exp2,
        Experiment::Exp3,
        Experiment::Exp4,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
            Experiment::Exp4 => "exp4",
        }
    }

    pub fn uses_transfer(self) -> bool {
        matches!(self, Experiment::Exp1 | Experiment::Exp3)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown experiment `{s}` (expected exp1|exp2|exp3|exp4)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSetup {
    pub experiment: Experiment,
    pub variant: ArchVariant,
    /// Weight archive for the trunk, when the experiment uses transfer learning.
    pub transfer: Option<PathBuf>,
}

pub fn configure_experiment(
    experiment: Experiment,
    input: Shape,
    weights: Option<&Path>,
) -> Result<ExperimentSetup> {
    let variant = match experiment {
        Experiment::Exp1 => ArchVariant::squeezenet(false, input),
        Experiment::Exp2 | Experiment::Exp3 => ArchVariant::squeezenet(true, input),
        Experiment::Exp4 => ArchVariant::proposed(input),
    };
    let transfer = if experiment.uses_transfer() {
        Some(
            weights
                .ok_or_else(|| {
                    Error::Config(format!(
                        "{experiment} needs a transfer weight archive (--weights)"
                    ))
                })?
                .to_path_buf(),
        )
    } else {
        None
    };
    Ok(ExperimentSetup {
        experiment,
        variant,
        transfer,
    })
}

/// Head node names replaced rather than transferred.
const HEAD_NODES: [&str; 1] = ["classifier"];

/// Copies trunk weights from an archive; the classifier head keeps its fresh init.
pub fn transfer_trunk(
    g: &mut NetworkGraph,
    archive: &WeightArchive,
    seed: u64,
) -> Result<LoadReport> {
    let mut trunk = archive.clone();
    trunk.tensors.retain(|t| {
        !HEAD_NODES
            .iter()
            .any(|h| t.name.strip_prefix(h).is_some_and(|r| r.starts_with('.')))
    });
    load_weights(g, &trunk, seed)
}

impl ExperimentSetup {
    /// Builds the graph and applies transfer weights where configured.
    pub fn build(&self, seed: u64) -> Result<NetworkGraph> {
        let mut g = self.variant.build(seed)?;
        if let Some(path) = &self.transfer {
            let archive = WeightArchive::load(path)?;
            let report = transfer_trunk(&mut g, &archive, seed)?;
            if report.loaded.is_empty() {
                return Err(Error::Archive(format!(
                    "{} shares no tensors with {}",
                    path.display(),
                    self.variant.kind
                )));
            }
        }
        Ok(g)
    }

    pub fn kind(&self) -> ArchKind {
        self.variant.kind
    }
}

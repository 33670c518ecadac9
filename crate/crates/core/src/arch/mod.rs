//! Network graph, fire-module architectures and weight archives.

pub mod archive;
pub mod builders;
pub mod graph;

pub use archive::{load_weights, LoadReport, WeightArchive};
pub use builders::{
    add_fire, build_fire, build_proposed, build_squeezenet, ArchKind, ArchVariant, FireConfig,
    FireVariant, NUM_CLASSES, REFERENCE_INPUT,
};
pub use graph::{Gradients, Mode, NetworkGraph, Node, Op, ParamRole, Trace};

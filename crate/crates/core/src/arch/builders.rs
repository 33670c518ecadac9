//! Fire modules, the SqueezeNet baselines and the spatial-fusion network.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{NetworkGraph, Op};
use crate::error::{Error, Result};
use crate::ops::{BatchNormParams, ConvParams, DenseParams, PoolSpec};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FireVariant {
    /// squeeze 1x1 -> ReLU -> {expand 1x1, expand 3x3} -> ReLU -> concat
    Classic,
    /// squeeze 1x1 -> BatchNorm -> ELU -> {expand 1x1, expand 3x3} -> ELU -> concat
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FireConfig {
    pub squeeze: usize,
    pub expand1x1: usize,
    pub expand3x3: usize,
    pub variant: FireVariant,
}

impl FireConfig {
    pub const fn new(
        squeeze: usize,
        expand1x1: usize,
        expand3x3: usize,
        variant: FireVariant,
    ) -> Self {
        FireConfig {
            squeeze,
            expand1x1,
            expand3x3,
            variant,
        }
    }

    pub const fn out_channels(&self) -> usize {
        self.expand1x1 + self.expand3x3
    }

    fn validate(&self) -> Result<()> {
        if self.squeeze == 0 || self.expand1x1 == 0 || self.expand3x3 == 0 {
            return Err(Error::InvalidArgument(format!(
                "fire filters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArchKind {
    SqueezenetPlain,
    SqueezenetSimpleBypass,
    Proposed,
}

impl ArchKind {
    pub fn tag(self) -> &'static str {
        match self {
            ArchKind::SqueezenetPlain => "squeezenet_plain",
            ArchKind::SqueezenetSimpleBypass => "squeezenet_simple_bypass",
            ArchKind::Proposed => "proposed",
        }
    }
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squeezenet_plain" => Ok(ArchKind::SqueezenetPlain),
            "squeezenet_simple_bypass" => Ok(ArchKind::SqueezenetSimpleBypass),
            "proposed" => Ok(ArchKind::Proposed),
            other => Err(Error::InvalidArgument(format!(
                "unknown architecture `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchVariant {
    pub kind: ArchKind,
    pub fire: FireVariant,
    /// Per-sample input `(C, H, W)`; the batch extent is ignored.
    pub input: Shape,
}

/// Reference input: grayscale CT slice replicated to 3 channels at 224x224.
pub const REFERENCE_INPUT: Shape = Shape::new(1, 3, 224, 224);

pub const NUM_CLASSES: usize = 2;

/// Fire schedule of SqueezeNet v1.0, `(name, squeeze, expand1x1, expand3x3)`.
pub const FIRE_SCHEDULE: [(&str, usize, usize, usize); 8] = [
    ("fire2", 16, 64, 64),
    ("fire3", 16, 64, 64),
    ("fire4", 32, 128, 128),
    ("fire5", 32, 128, 128),
    ("fire6", 48, 192, 192),
    ("fire7", 48, 192, 192),
    ("fire8", 64, 256, 256),
    ("fire9", 64, 256, 256),
];

/// Upsampling transpose convolution of the fusion network: channels, kernel, stride.
pub const UP_CHANNELS: usize = 64;
pub const UP_KERNEL: usize = 4;
pub const FUSE_FILTERS: usize = 128;

impl ArchVariant {
    pub fn proposed(input: Shape) -> Self {
        ArchVariant {
            kind: ArchKind::Proposed,
            fire: FireVariant::Custom,
            input,
        }
    }

    pub fn squeezenet(bypass: bool, input: Shape) -> Self {
        ArchVariant {
            kind: if bypass {
                ArchKind::SqueezenetSimpleBypass
            } else {
                ArchKind::SqueezenetPlain
            },
            fire: FireVariant::Classic,
            input,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ArchKind::Proposed && self.fire != FireVariant::Custom {
            return Err(Error::InvalidArgument(
                "the proposed network requires custom fire modules".into(),
            ));
        }
        if self.input.c == 0 || self.input.h == 0 || self.input.w == 0 {
            return Err(Error::InvalidArgument("empty input extent".into()));
        }
        Ok(())
    }

    /// Builds the graph with weights drawn from `seed`.
    pub fn build(&self, seed: u64) -> Result<NetworkGraph> {
        self.validate()?;
        match self.kind {
            ArchKind::Proposed => build_proposed(self.input, seed),
            _ => build_squeezenet(self, seed),
        }
    }
}

fn conv(cout: usize, cin: usize, k: usize, stride: usize, pad: usize) -> Op {
    Op::Conv(ConvParams::new(
        Tensor::zeros(Shape::new(cout, cin, k, k)),
        vec![0.0; cout],
        stride,
        pad,
    ))
}

fn activation(variant: FireVariant) -> Op {
    match variant {
        FireVariant::Classic => Op::Relu,
        FireVariant::Custom => Op::Elu,
    }
}

/// Appends a fire module reading from node `input`; returns the concat node.
pub fn add_fire(g: &mut NetworkGraph, name: &str, input: usize, cfg: FireConfig) -> Result<usize> {
    cfg.validate()?;
    let cin = g.nodes()[input].shape.c;
    let mut x = g.push(
        format!("{name}.squeeze"),
        conv(cfg.squeeze, cin, 1, 1, 0),
        &[input],
    )?;
    if cfg.variant == FireVariant::Custom {
        x = g.push(
            format!("{name}.bn"),
            Op::BatchNorm(BatchNormParams::new(cfg.squeeze)),
            &[x],
        )?;
    }
    let s = g.push(format!("{name}.squeeze.act"), activation(cfg.variant), &[x])?;
    let e1 = g.push(
        format!("{name}.expand1x1"),
        conv(cfg.expand1x1, cfg.squeeze, 1, 1, 0),
        &[s],
    )?;
    let e1 = g.push(
        format!("{name}.expand1x1.act"),
        activation(cfg.variant),
        &[e1],
    )?;
    let e3 = g.push(
        format!("{name}.expand3x3"),
        conv(cfg.expand3x3, cfg.squeeze, 3, 1, 1),
        &[s],
    )?;
    let e3 = g.push(
        format!("{name}.expand3x3.act"),
        activation(cfg.variant),
        &[e3],
    )?;
    g.push(name.to_string(), Op::Concat, &[e1, e3])
}

/// A standalone fire module over a `(C, H, W)` input, without a classifier.
pub fn build_fire(cfg: FireConfig, input: Shape, seed: u64) -> Result<NetworkGraph> {
    let mut g = NetworkGraph::new(format!("fire_{:?}", cfg.variant).to_lowercase(), input);
    add_fire(&mut g, "fire", 0, cfg)?;
    g.reinitialize(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(g)
}

/// conv1 -> pool -> fire2..fire9 with pools after conv1, fire4 and fire8.
///
/// conv1 pads by 3 and the pools by 1 so a 224 input lands on 56/28/14 maps.
/// With `bypass`, fire3/5/7/9 outputs are summed with their inputs.
fn add_trunk(g: &mut NetworkGraph, fire: FireVariant, bypass: bool) -> Result<()> {
    let pool = || Op::MaxPool(PoolSpec::padded(3, 2, 1));
    let cin = g.input_shape().c;
    let c1 = g.push("conv1", conv(96, cin, 7, 2, 3), &[0])?;
    let a1 = g.push("conv1.act", activation(fire), &[c1])?;
    let mut x = g.push("pool1", pool(), &[a1])?;
    for (name, s, e1, e3) in FIRE_SCHEDULE {
        let input = x;
        let out = add_fire(g, name, input, FireConfig::new(s, e1, e3, fire))?;
        x = out;
        if bypass && matches!(name, "fire3" | "fire5" | "fire7" | "fire9") {
            let (a, b) = (g.nodes()[input].shape, g.nodes()[out].shape);
            if a.c != b.c {
                return Err(Error::shape(
                    format!("bypass around {name}"),
                    "channels",
                    a.c,
                    b.c,
                ));
            }
            x = g.push(format!("{name}.bypass"), Op::Add, &[out, input])?;
        }
        if matches!(name, "fire4" | "fire8") {
            x = g.push(format!("pool{}", &name[4..]), pool(), &[x])?;
        }
    }
    Ok(())
}

pub fn build_squeezenet(v: &ArchVariant, seed: u64) -> Result<NetworkGraph> {
    v.validate()?;
    let bypass = match v.kind {
        ArchKind::SqueezenetPlain => false,
        ArchKind::SqueezenetSimpleBypass => true,
        ArchKind::Proposed => {
            return Err(Error::InvalidArgument("not a squeezenet variant".into()))
        }
    };
    let mut g = NetworkGraph::new(v.kind.tag(), v.input);
    add_trunk(&mut g, v.fire, bypass)?;
    let last = g.nodes().len() - 1;
    let cin = g.nodes()[last].shape.c;
    let head = g.push("classifier", conv(NUM_CLASSES, cin, 1, 1, 0), &[last])?;
    let gap = g.push("gap", Op::GlobalAvgPool, &[head])?;
    g.push("softmax", Op::Softmax, &[gap])?;
    g.reinitialize(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(g)
}

/// Custom-fire trunk; fire9 is upsampled x4 by a transpose convolution,
/// fused with fire3 by a 1x1 convolution, and `{fused, up, fire3}` are
/// concatenated, pooled and classified by a dense layer.
pub fn build_proposed(input: Shape, seed: u64) -> Result<NetworkGraph> {
    ArchVariant::proposed(input).validate()?;
    let mut g = NetworkGraph::new(ArchKind::Proposed.tag(), input);
    add_trunk(&mut g, FireVariant::Custom, false)?;
    let fire3 = g.node_index("fire3").expect("trunk has fire3");
    let fire9 = g.node_index("fire9").expect("trunk has fire9");
    let deep = g.nodes()[fire9].shape;
    let up_op = Op::ConvTranspose(ConvParams::new(
        Tensor::zeros(Shape::new(deep.c, UP_CHANNELS, UP_KERNEL, UP_KERNEL)),
        vec![0.0; UP_CHANNELS],
        UP_KERNEL,
        0,
    ));
    let up = g.push("up", up_op, &[fire9])?;
    let (us, ss) = (g.nodes()[up].shape, g.nodes()[fire3].shape);
    if (us.h, us.w) != (ss.h, ss.w) {
        return Err(Error::InvalidArgument(format!(
            "upsampled fire9 is {}x{} but fire3 is {}x{}; input extent must be a multiple of 32",
            us.h, us.w, ss.h, ss.w
        )));
    }
    let cat1 = g.push("cat1", Op::Concat, &[up, fire3])?;
    let cat1_c = g.nodes()[cat1].shape.c;
    let fuse = g.push("fuse", conv(FUSE_FILTERS, cat1_c, 1, 1, 0), &[cat1])?;
    let fused = g.push("fuse.act", Op::Elu, &[fuse])?;
    let features = g.push("features", Op::Concat, &[fused, up, fire3])?;
    let gap = g.push("gap", Op::GlobalAvgPool, &[features])?;
    let width = g.nodes()[gap].shape.c;
    let dense = Op::Dense(DenseParams {
        weights: Tensor::zeros(Shape::new(NUM_CLASSES, width, 1, 1)),
        bias: vec![0.0; NUM_CLASSES],
    });
    let head = g.push("dense", dense, &[gap])?;
    g.push("softmax", Op::Softmax, &[head])?;
    g.reinitialize(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(g)
}

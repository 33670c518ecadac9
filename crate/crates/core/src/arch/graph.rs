//! Static layer graph: nodes in topological order, each owning its parameters.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops::{self, BatchNormCache, BatchNormParams, ConvParams, DenseParams, PoolSpec};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Input,
    Conv(ConvParams),
    ConvTranspose(ConvParams),
    BatchNorm(BatchNormParams),
    Elu,
    Relu,
    MaxPool(PoolSpec),
    Concat,
    Add,
    GlobalAvgPool,
    Dense(DenseParams),
    Softmax,
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Conv(_) => "conv",
            Op::ConvTranspose(_) => "conv_transpose",
            Op::BatchNorm(_) => "batchnorm",
            Op::Elu => "elu",
            Op::Relu => "relu",
            Op::MaxPool(_) => "maxpool",
            Op::Concat => "concat",
            Op::Add => "add",
            Op::GlobalAvgPool => "gap",
            Op::Dense(_) => "dense",
            Op::Softmax => "softmax",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<usize>,
    pub shape: Shape,
}

/// Which of a node's vectors a named parameter refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Weight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamRole {
    pub fn suffix(self) -> &'static str {
        match self {
            ParamRole::Weight => "weight",
            ParamRole::Bias => "bias",
            ParamRole::Gamma => "gamma",
            ParamRole::Beta => "beta",
            ParamRole::RunningMean => "running_mean",
            ParamRole::RunningVar => "running_var",
        }
    }

    pub fn trainable(self) -> bool {
        !matches!(self, ParamRole::RunningMean | ParamRole::RunningVar)
    }
}

impl Node {
    /// All stored vectors, trainable first, with their logical shapes.
    pub fn params(&self) -> Vec<(ParamRole, Vec<usize>, &[f32])> {
        match &self.op {
            Op::Conv(p) | Op::ConvTranspose(p) => vec![
                (
                    ParamRole::Weight,
                    p.weights.shape().dims().to_vec(),
                    p.weights.data(),
                ),
                (ParamRole::Bias, vec![p.bias.len()], &p.bias[..]),
            ],
            Op::BatchNorm(p) => vec![
                (ParamRole::Gamma, vec![p.gamma.len()], &p.gamma[..]),
                (ParamRole::Beta, vec![p.beta.len()], &p.beta[..]),
                (
                    ParamRole::RunningMean,
                    vec![p.running_mean.len()],
                    &p.running_mean[..],
                ),
                (
                    ParamRole::RunningVar,
                    vec![p.running_var.len()],
                    &p.running_var[..],
                ),
            ],
            Op::Dense(p) => vec![
                (
                    ParamRole::Weight,
                    vec![p.outputs(), p.inputs()],
                    p.weights.data(),
                ),
                (ParamRole::Bias, vec![p.bias.len()], &p.bias[..]),
            ],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<(ParamRole, &mut [f32])> {
        match &mut self.op {
            Op::Conv(p) | Op::ConvTranspose(p) => vec![
                (ParamRole::Weight, p.weights.data_mut()),
                (ParamRole::Bias, &mut p.bias[..]),
            ],
            Op::BatchNorm(p) => vec![
                (ParamRole::Gamma, &mut p.gamma[..]),
                (ParamRole::Beta, &mut p.beta[..]),
                (ParamRole::RunningMean, &mut p.running_mean[..]),
                (ParamRole::RunningVar, &mut p.running_var[..]),
            ],
            Op::Dense(p) => vec![
                (ParamRole::Weight, p.weights.data_mut()),
                (ParamRole::Bias, &mut p.bias[..]),
            ],
            _ => Vec::new(),
        }
    }

    /// Trainable parameter slices, in the order gradients are reported.
    pub fn trainable_mut(&mut self) -> Vec<&mut [f32]> {
        self.params_mut()
            .into_iter()
            .filter(|(role, _)| role.trainable())
            .map(|(_, s)| s)
            .collect()
    }

    pub fn trainable_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|(role, _, _)| role.trainable())
            .map(|(_, _, d)| d.len())
            .sum()
    }

    /// He-style fan-in normal weights, zero biases, unit gamma, zero beta.
    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        match &mut self.op {
            Op::Conv(p) => {
                let s = p.weights.shape();
                let fan_in = (s.c * s.h * s.w).max(1);
                p.weights = Tensor::randn(s, (2.0 / fan_in as f32).sqrt(), rng);
                p.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            Op::ConvTranspose(p) => {
                let s = p.weights.shape();
                // each output pixel sees in_channels * (k / stride)^2 inputs
                let per_axis = (s.h / p.stride.max(1)).max(1);
                let fan_in = (s.n * per_axis * per_axis).max(1);
                p.weights = Tensor::randn(s, (2.0 / fan_in as f32).sqrt(), rng);
                p.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            Op::BatchNorm(p) => *p = BatchNormParams::new(p.channels()),
            Op::Dense(p) => {
                let s = p.weights.shape();
                p.weights = Tensor::randn(s, (2.0 / s.c.max(1) as f32).sqrt(), rng);
                p.bias.iter_mut().for_each(|b| *b = 0.0);
            }
            _ => {}
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-node gradients of trainable parameters (same order as [`Node::trainable_mut`]).
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    pub per_node: Vec<Vec<Vec<f32>>>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.per_node
            .iter()
            .flatten()
            .flatten()
            .all(|v| v.is_finite())
    }
}

enum Cache {
    None,
    BatchNorm(BatchNormCache),
    MaxPool(Vec<usize>),
}

/// Activations recorded by a training-mode forward pass.
pub struct Trace {
    outputs: Vec<Option<Tensor>>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn output(&self, node: usize) -> Option<&Tensor> {
        self.outputs.get(node).and_then(|o| o.as_ref())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGraph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) variant: String,
    pub(crate) input: Shape,
    pub(crate) classes: usize,
}

impl NetworkGraph {
    /// Empty graph over a `(C, H, W)` input; `input.n` is ignored.
    pub fn new(variant: impl Into<String>, input: Shape) -> Self {
        let input = Shape::new(1, input.c, input.h, input.w);
        NetworkGraph {
            nodes: vec![Node {
                name: "input".into(),
                op: Op::Input,
                inputs: Vec::new(),
                shape: input,
            }],
            variant: variant.into(),
            input,
            classes: 0,
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [Node] {
        &mut self.nodes
    }

    pub fn variant(&self) -> &str {
        &self.variant
    }

    /// Per-sample input shape (batch extent 1).
    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.name == name)
    }

    pub fn output_index(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node whose output feeds the final softmax.
    pub fn logits_index(&self) -> usize {
        self.nodes[self.output_index()].inputs[0]
    }

    /// Appends a node after checking its inputs and inferring its per-sample shape.
    pub fn push(&mut self, name: impl Into<String>, op: Op, inputs: &[usize]) -> Result<usize> {
        let name = name.into();
        if self.node_index(&name).is_some() {
            return Err(Error::InvalidArgument(format!(
                "duplicate node name `{name}`"
            )));
        }
        if matches!(op, Op::Input) {
            return Err(Error::InvalidArgument(
                "only one input node is allowed".into(),
            ));
        }
        if let Some(last) = self.nodes.last() {
            if matches!(last.op, Op::Softmax) {
                return Err(Error::InvalidArgument(
                    "softmax must be the final node".into(),
                ));
            }
        }
        if let Some(&bad) = inputs.iter().find(|&&i| i >= self.nodes.len()) {
            return Err(Error::InvalidArgument(format!(
                "node `{name}` references unknown input {bad}"
            )));
        }
        let shapes: Vec<Shape> = inputs.iter().map(|&i| self.nodes[i].shape).collect();
        let shape = infer_shape(&op, &shapes).map_err(|e| e.at_node(&name))?;
        if let Op::Softmax = op {
            self.classes = shape.c;
        }
        self.nodes.push(Node {
            name,
            op,
            inputs: inputs.to_vec(),
            shape,
        });
        Ok(self.nodes.len() - 1)
    }

    pub fn is_complete(&self) -> bool {
        matches!(self.nodes.last().map(|n| &n.op), Some(Op::Softmax))
    }

    /// Sum of weight, bias, gamma and beta element counts.
    pub fn count_params(&self) -> usize {
        self.nodes.iter().map(Node::trainable_count).sum()
    }

    /// Fully qualified names of every stored vector (`<node>.<role>`).
    pub fn param_names(&self) -> Vec<String> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.params()
                    .into_iter()
                    .map(move |(role, _, _)| format!("{}.{}", n.name, role.suffix()))
            })
            .collect()
    }

    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for node in &mut self.nodes {
            node.reinitialize(rng);
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        let e = self.input;
        if s.n == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        crate::tensor::ensure_same_shape("network input", Shape::new(s.n, e.c, e.h, e.w), s)
            .map_err(|err| err.at_node("input"))
    }

    fn consumers(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.nodes.len()];
        for n in &self.nodes {
            for &i in &n.inputs {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Class probabilities `N x classes`.
    ///
    /// Train mode updates batch-norm running statistics.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Infer => self.infer(x),
            Mode::Train => {
                let trace = self.forward_train(x)?;
                Ok(trace.outputs[self.output_index()]
                    .clone()
                    .expect("output retained"))
            }
        }
    }

    /// Inference-mode probabilities; intermediate outputs are released as soon
    /// as their last consumer has run.
    pub fn infer(&self, x: &Tensor) -> Result<Tensor> {
        let mut kept = self.infer_keep(x, &[])?;
        Ok(kept.pop().expect("output"))
    }

    /// Inference pass returning the outputs of the named nodes followed by the
    /// final probabilities.
    pub fn infer_keep(&self, x: &Tensor, keep: &[&str]) -> Result<Vec<Tensor>> {
        self.check_input(x)?;
        let keep_idx: Vec<usize> = keep
            .iter()
            .map(|name| {
                self.node_index(name)
                    .ok_or_else(|| Error::InvalidArgument(format!("no node named `{name}`")))
            })
            .collect::<Result<_>>()?;
        let mut remaining = self.consumers();
        for &k in &keep_idx {
            remaining[k] += 1;
        }
        let mut outputs: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let out = if i == 0 {
                x.clone()
            } else {
                let ins: Vec<&Tensor> = node
                    .inputs
                    .iter()
                    .map(|&j| outputs[j].as_ref().expect("topological order"))
                    .collect();
                eval_infer(&node.op, &ins).map_err(|e| e.at_node(&node.name))?
            };
            outputs[i] = Some(out);
            for &j in &node.inputs {
                remaining[j] -= 1;
                if remaining[j] == 0 {
                    outputs[j] = None;
                }
            }
        }
        let mut result: Vec<Tensor> = keep_idx
            .iter()
            .map(|&k| outputs[k].clone().expect("kept output"))
            .collect();
        result.push(outputs[self.output_index()].take().expect("output"));
        Ok(result)
    }

    /// Training-mode forward keeping every activation for [`Self::backward`].
    pub fn forward_train(&mut self, x: &Tensor) -> Result<Trace> {
        self.check_input(x)?;
        let mut outputs: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        let mut caches = Vec::with_capacity(self.nodes.len());
        for i in 0..self.nodes.len() {
            if i == 0 {
                outputs.push(Some(x.clone()));
                caches.push(Cache::None);
                continue;
            }
            let node = &mut self.nodes[i];
            let ins: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|&j| outputs[j].as_ref().expect("topological order"))
                .collect();
            let (out, cache) = eval_train(&mut node.op, &ins).map_err(|e| e.at_node(&node.name))?;
            outputs.push(Some(out));
            caches.push(cache);
        }
        Ok(Trace { outputs, caches })
    }

    /// Backpropagates `dlogits` (gradient w.r.t. the softmax input) through the
    /// recorded trace. Activations are dropped as soon as they are no longer needed.
    pub fn backward(&self, mut trace: Trace, dlogits: &Tensor) -> Result<Gradients> {
        let n = self.nodes.len();
        let logits = self.logits_index();
        let mut upstream: Vec<Option<Tensor>> = vec![None; n];
        upstream[logits] = Some(dlogits.clone());
        let mut grads = Gradients {
            per_node: vec![Vec::new(); n],
        };
        trace.outputs[n - 1] = None;
        for i in (1..=logits).rev() {
            let node = &self.nodes[i];
            let Some(dy) = upstream[i].take() else {
                trace.outputs[i] = None;
                continue;
            };
            let ins: Vec<&Tensor> = node
                .inputs
                .iter()
                .map(|&j| trace.outputs[j].as_ref().expect("trace retained"))
                .collect();
            let out = trace.outputs[i].as_ref().expect("trace retained");
            let (dxs, pg) = eval_backward(&node.op, &ins, out, &trace.caches[i], &dy)
                .map_err(|e| e.at_node(&node.name))?;
            grads.per_node[i] = pg;
            for (&j, dx) in node.inputs.iter().zip(dxs) {
                match upstream[j].as_mut() {
                    Some(acc) => {
                        for (a, d) in acc.data_mut().iter_mut().zip(dx.data()) {
                            *a += d;
                        }
                    }
                    None => upstream[j] = Some(dx),
                }
            }
            trace.outputs[i] = None;
            trace.caches[i] = Cache::None;
        }
        Ok(grads)
    }
}

fn infer_shape(op: &Op, ins: &[Shape]) -> Result<Shape> {
    let arity = |k: usize| -> Result<()> {
        if ins.len() != k {
            return Err(Error::shape("node inputs", "count", k, ins.len()));
        }
        Ok(())
    };
    let channels = |expected: usize, actual: usize| -> Result<()> {
        if expected != actual {
            return Err(Error::shape("node input", "channels", expected, actual));
        }
        Ok(())
    };
    match op {
        Op::Input => Err(Error::InvalidArgument("input node cannot be pushed".into())),
        Op::Conv(p) => {
            arity(1)?;
            let s = ins[0];
            channels(p.in_channels(), s.c)?;
            let k = p.kernel();
            let h = ops::conv::conv_out_extent(s.h, k, p.stride, p.padding);
            let w = ops::conv::conv_out_extent(s.w, k, p.stride, p.padding);
            match (h, w) {
                (Some(h), Some(w)) => Ok(Shape::new(1, p.out_channels(), h, w)),
                _ => Err(Error::InvalidArgument(format!(
                    "kernel {k} does not fit {}x{}",
                    s.h, s.w
                ))),
            }
        }
        Op::ConvTranspose(p) => {
            arity(1)?;
            let s = ins[0];
            channels(p.out_channels(), s.c)?;
            let k = p.kernel();
            let h = ops::conv::conv_transpose_out_extent(s.h, k, p.stride, p.padding);
            let w = ops::conv::conv_transpose_out_extent(s.w, k, p.stride, p.padding);
            match (h, w) {
                (Some(h), Some(w)) => Ok(Shape::new(1, p.in_channels(), h, w)),
                _ => Err(Error::InvalidArgument(
                    "non-positive transpose output extent".into(),
                )),
            }
        }
        Op::BatchNorm(p) => {
            arity(1)?;
            channels(p.channels(), ins[0].c)?;
            Ok(ins[0])
        }
        Op::Elu | Op::Relu => {
            arity(1)?;
            Ok(ins[0])
        }
        Op::MaxPool(spec) => {
            arity(1)?;
            let s = ins[0];
            match (spec.out_extent(s.h), spec.out_extent(s.w)) {
                (Some(h), Some(w)) => Ok(Shape::new(1, s.c, h, w)),
                _ => Err(Error::InvalidArgument(format!(
                    "pool window {} larger than input",
                    spec.window
                ))),
            }
        }
        Op::Concat => {
            let first = *ins
                .first()
                .ok_or_else(|| Error::InvalidArgument("concat without inputs".into()))?;
            for s in &ins[1..] {
                if s.h != first.h {
                    return Err(Error::shape("concat", "height", first.h, s.h));
                }
                if s.w != first.w {
                    return Err(Error::shape("concat", "width", first.w, s.w));
                }
            }
            Ok(Shape::new(
                1,
                ins.iter().map(|s| s.c).sum(),
                first.h,
                first.w,
            ))
        }
        Op::Add => {
            arity(2)?;
            crate::tensor::ensure_same_shape("add", ins[0], ins[1])?;
            Ok(ins[0])
        }
        Op::GlobalAvgPool => {
            arity(1)?;
            Ok(Shape::new(1, ins[0].c, 1, 1))
        }
        Op::Dense(p) => {
            arity(1)?;
            let features = ins[0].sample_len();
            if features != p.inputs() {
                return Err(Error::shape(
                    "dense",
                    "input features",
                    p.inputs(),
                    features,
                ));
            }
            Ok(Shape::new(1, p.outputs(), 1, 1))
        }
        Op::Softmax => {
            arity(1)?;
            Ok(Shape::new(1, ins[0].sample_len(), 1, 1))
        }
    }
}

fn eval_infer(op: &Op, ins: &[&Tensor]) -> Result<Tensor> {
    Ok(match op {
        Op::BatchNorm(p) => ops::batchnorm_infer(ins[0], p)?,
        Op::MaxPool(spec) => ops::maxpool2d(ins[0], *spec)?.0,
        other => eval_stateless(other, ins)?,
    })
}

fn eval_train(op: &mut Op, ins: &[&Tensor]) -> Result<(Tensor, Cache)> {
    Ok(match op {
        Op::BatchNorm(p) => {
            let (y, cache) = ops::batchnorm_forward(ins[0], p, true)?;
            (y, Cache::BatchNorm(cache.expect("training cache")))
        }
        Op::MaxPool(spec) => {
            let (y, arg) = ops::maxpool2d(ins[0], *spec)?;
            (y, Cache::MaxPool(arg))
        }
        other => (eval_stateless(other, ins)?, Cache::None),
    })
}

fn eval_stateless(op: &Op, ins: &[&Tensor]) -> Result<Tensor> {
    match op {
        Op::Input => Ok(ins[0].clone()),
        Op::Conv(p) => ops::conv2d_forward(ins[0], p),
        Op::ConvTranspose(p) => ops::conv_transpose2d_forward(ins[0], p),
        Op::Elu => Ok(ops::elu(ins[0], ops::ELU_ALPHA)),
        Op::Relu => Ok(ops::relu(ins[0])),
        Op::Concat => ops::concat_depth(ins),
        Op::Add => ins[0].add(ins[1]),
        Op::GlobalAvgPool => ops::global_avg_pool(ins[0]),
        Op::Dense(p) => ops::dense_forward(ins[0], p),
        Op::Softmax => Ok(ops::softmax(ins[0])),
        Op::BatchNorm(_) | Op::MaxPool(_) => unreachable!("stateful ops handled by caller"),
    }
}

type Backward = (Vec<Tensor>, Vec<Vec<f32>>);

fn eval_backward(
    op: &Op,
    ins: &[&Tensor],
    out: &Tensor,
    cache: &Cache,
    dy: &Tensor,
) -> Result<Backward> {
    Ok(match (op, cache) {
        (Op::Conv(p), _) => {
            let g = ops::conv2d_backward(ins[0], p, dy)?;
            (vec![g.dx], vec![g.dw.into_data(), g.db])
        }
        (Op::ConvTranspose(p), _) => {
            let g = ops::conv_transpose2d_backward(ins[0], p, dy)?;
            (vec![g.dx], vec![g.dw.into_data(), g.db])
        }
        (Op::BatchNorm(p), Cache::BatchNorm(c)) => {
            let g = ops::batchnorm_backward(ins[0], p, c, dy)?;
            (vec![g.dx], vec![g.dgamma, g.dbeta])
        }
        (Op::Elu, _) => (
            vec![ops::elu_backward(out, ops::ELU_ALPHA, dy)?],
            Vec::new(),
        ),
        (Op::Relu, _) => (vec![ops::relu_backward(out, dy)?], Vec::new()),
        (Op::MaxPool(_), Cache::MaxPool(arg)) => (
            vec![ops::maxpool2d_backward(ins[0].shape(), arg, dy)?],
            Vec::new(),
        ),
        (Op::Concat, _) => {
            let channels: Vec<usize> = ins.iter().map(|t| t.shape().c).collect();
            (ops::concat_depth_backward(&channels, dy)?, Vec::new())
        }
        (Op::Add, _) => (vec![dy.clone(), dy.clone()], Vec::new()),
        (Op::GlobalAvgPool, _) => (
            vec![ops::global_avg_pool_backward(ins[0].shape(), dy)?],
            Vec::new(),
        ),
        (Op::Dense(p), _) => {
            let g = ops::dense_backward(ins[0], p, dy)?;
            (vec![g.dx], vec![g.dw.into_data(), g.db])
        }
        (op, _) => {
            return Err(Error::InvalidArgument(format!(
                "no backward for {} here",
                op.kind()
            )));
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> NetworkGraph {
        let mut g = NetworkGraph::new("tiny", Shape::new(1, 1, 4, 4));
        let conv = ConvParams::new(
            Tensor::full(Shape::new(2, 1, 3, 3), 0.1),
            vec![0.0, 0.5],
            1,
            1,
        );
        let c = g.push("conv", Op::Conv(conv), &[0]).unwrap();
        let gap = g.push("gap", Op::GlobalAvgPool, &[c]).unwrap();
        g.push("softmax", Op::Softmax, &[gap]).unwrap();
        g
    }

    #[test]
    fn count_params_conv_192_to_128() {
        let mut g = NetworkGraph::new("t", Shape::new(1, 192, 2, 2));
        let p = ConvParams::new(
            Tensor::zeros(Shape::new(128, 192, 1, 1)),
            vec![0.0; 128],
            1,
            0,
        );
        g.push("fuse", Op::Conv(p), &[0]).unwrap();
        assert_eq!(g.count_params(), 24_704);
        assert_eq!(
            NetworkGraph::new("empty", Shape::new(1, 3, 8, 8)).count_params(),
            0
        );
    }

    #[test]
    fn rejects_bad_wiring() {
        let mut g = NetworkGraph::new("t", Shape::new(1, 3, 4, 4));
        let p = ConvParams::new(Tensor::zeros(Shape::new(2, 4, 1, 1)), vec![0.0; 2], 1, 0);
        let err = g.push("c", Op::Conv(p), &[0]).unwrap_err();
        assert!(err.to_string().contains("node `c`"), "{err}");
        assert!(g.push("x", Op::Relu, &[5]).is_err());
        g.push("r", Op::Relu, &[0]).unwrap();
        assert!(g.push("r", Op::Relu, &[0]).is_err());
    }

    #[test]
    fn input_shape_mismatch_names_node() {
        let g = tiny();
        let err = g.infer(&Tensor::zeros(Shape::new(1, 2, 4, 4))).unwrap_err();
        assert!(err.to_string().contains("input"));
    }

    #[test]
    fn infer_rows_sum_to_one() {
        let g = tiny();
        let x = Tensor::from_vec(
            Shape::new(2, 1, 4, 4),
            (0..32).map(|v| v as f32 / 10.0).collect(),
        )
        .unwrap();
        let p = g.infer(&x).unwrap();
        assert_eq!(p.shape(), Shape::new(2, 2, 1, 1));
        for row in p.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_reports_conv_grads() {
        let mut g = tiny();
        let x = Tensor::full(Shape::new(1, 1, 4, 4), 1.0);
        let trace = g.forward_train(&x).unwrap();
        let dlogits = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![1.0, -1.0]).unwrap();
        let grads = g.backward(trace, &dlogits).unwrap();
        let conv = &grads.per_node[1];
        assert_eq!(conv.len(), 2);
        assert_eq!(conv[1], vec![1.0, -1.0]);
        assert!(grads.is_finite());
    }
}

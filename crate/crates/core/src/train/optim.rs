use crate::arch::{Gradients, NetworkGraph};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f32,
    pub momentum: f32,
    pub l2: f32,
}

impl Hyperparams {
    pub fn new(learning_rate: f32, momentum: f32, l2: f32) -> Result<Self> {
        let hp = Hyperparams {
            learning_rate,
            momentum,
            l2,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Zero learning rate is accepted so that null updates can be exercised.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config(format!(
                "learning rate {} outside [0, 1]",
                self.learning_rate
            )));
        }
        if !(self.momentum >= 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "momentum {} outside [0, 1)",
                self.momentum
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!(
                "l2 {} must be a non-negative real",
                self.l2
            )));
        }
        Ok(())
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.01,
            momentum: 0.9,
            l2: 1e-4,
        }
    }
}

/// `v <- momentum * v + lr * (g + l2 * w)`, then `w <- w - v`.
pub fn sgd_step(w: &mut [f32], g: &[f32], v: &mut [f32], hp: &Hyperparams, lr: f32) -> Result<()> {
    if g.len() != w.len() {
        return Err(Error::shape(
            "sgd step",
            "gradient length",
            w.len(),
            g.len(),
        ));
    }
    if v.len() != w.len() {
        return Err(Error::shape(
            "sgd step",
            "velocity length",
            w.len(),
            v.len(),
        ));
    }
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient element {i} is {}",
            g[i]
        )));
    }
    for ((w, &g), v) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        *v = hp.momentum * *v + lr * (g + hp.l2 * *w);
        *w -= *v;
    }
    Ok(())
}

/// Step schedule `lr0 * factor^floor((epoch - 1) / period)` for 1-based epochs.
pub fn lr_schedule(epoch: usize, lr0: f32, factor: f32, period: usize) -> f32 {
    let drops = epoch.saturating_sub(1) / period.max(1);
    // Widen through the shortest decimal form so that 0.1 * 0.8^k rounds once
    // to the f32 nearest the decimal product instead of compounding f32 error.
    let widen = |v: f32| v.to_string().parse::<f64>().unwrap_or(v as f64);
    (widen(lr0) * widen(factor).powi(drops as i32)) as f32
}

/// Zero-initialized velocity buffers, one per trainable slice of the graph.
#[derive(Clone, Debug)]
pub struct Optimizer {
    velocity: Vec<Vec<Vec<f32>>>,
}

impl Optimizer {
    pub fn new(g: &NetworkGraph) -> Self {
        let velocity = g
            .nodes()
            .iter()
            .map(|n| {
                n.params()
                    .iter()
                    .filter(|(role, _, _)| role.trainable())
                    .map(|(_, _, d)| vec![0.0; d.len()])
                    .collect()
            })
            .collect();
        Optimizer { velocity }
    }

    pub fn velocity(&self) -> &[Vec<Vec<f32>>] {
        &self.velocity
    }

    pub fn step(
        &mut self,
        g: &mut NetworkGraph,
        grads: &Gradients,
        hp: &Hyperparams,
        lr: f32,
    ) -> Result<()> {
        for (i, node) in g.nodes_mut().iter_mut().enumerate() {
            let Some(node_grads) = grads.per_node.get(i) else {
                continue;
            };
            if node_grads.is_empty() {
                continue;
            }
            let name = node.name.clone();
            for ((w, gr), v) in node
                .trainable_mut()
                .into_iter()
                .zip(node_grads)
                .zip(&mut self.velocity[i])
            {
                sgd_step(w, gr, v, hp, lr).map_err(|e| e.at_node(&name))?;
            }
        }
        Ok(())
    }
}

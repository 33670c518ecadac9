use crate::error::{Error, Result};
use crate::train::Hyperparams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dim {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
    /// Searched uniformly in `log10` space.
    pub log: bool,
}

impl Dim {
    fn warp(&self, v: f64) -> f64 {
        if self.log {
            v.log10()
        } else {
            v
        }
    }

    fn unwarp(&self, v: f64) -> f64 {
        if self.log {
            10f64.powf(v)
        } else {
            v
        }
    }

    /// Unit coordinate of `v`. Values within a relative 1e-6 of a bound are clamped.
    pub fn to_unit(&self, v: f64) -> Result<f64> {
        let slack = 1e-6 * self.hi.abs().max(self.lo.abs());
        if !v.is_finite() || v < self.lo - slack || v > self.hi + slack || (self.log && v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{} = {v} outside [{}, {}]",
                self.name, self.lo, self.hi
            )));
        }
        let (a, b) = (self.warp(self.lo), self.warp(self.hi));
        Ok(((self.warp(v.clamp(self.lo, self.hi)) - a) / (b - a)).clamp(0.0, 1.0))
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        let (a, b) = (self.warp(self.lo), self.warp(self.hi));
        self.unwarp(a + u.clamp(0.0, 1.0) * (b - a))
            .clamp(self.lo, self.hi)
    }
}

/// Learning rate, momentum and L2 bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchSpace {
    pub dims: [Dim; 3],
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            dims: [
                Dim {
                    name: "learning_rate",
                    lo: 1e-4,
                    hi: 1e-1,
                    log: true,
                },
                Dim {
                    name: "momentum",
                    lo: 0.5,
                    hi: 0.99,
                    log: false,
                },
                Dim {
                    name: "l2",
                    lo: 1e-13,
                    hi: 1e-2,
                    log: true,
                },
            ],
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for d in &self.dims {
            if !(d.lo < d.hi) || (d.log && d.lo <= 0.0) {
                return Err(Error::Config(format!(
                    "bad bounds for {}: [{}, {}]",
                    d.name, d.lo, d.hi
                )));
            }
        }
        if self.dims[0].hi > 1.0
            || self.dims[1].lo < 0.0
            || self.dims[1].hi >= 1.0
            || self.dims[2].lo < 0.0
        {
            return Err(Error::Config(
                "search bounds exceed valid hyperparameter ranges".into(),
            ));
        }
        Ok(())
    }

    pub fn normalize_point(&self, hp: &Hyperparams) -> Result<Vec<f64>> {
        let vals = [hp.learning_rate as f64, hp.momentum as f64, hp.l2 as f64];
        self.dims
            .iter()
            .zip(vals)
            .map(|(d, v)| d.to_unit(v))
            .collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Hyperparams {
        let v: Vec<f64> = self
            .dims
            .iter()
            .zip(u)
            .map(|(d, &x)| d.from_unit(x))
            .collect();
        let fit = |d: &Dim, x: f64| (x as f32).clamp(d.lo as f32, d.hi as f32);
        Hyperparams {
            learning_rate: fit(&self.dims[0], v[0]),
            momentum: fit(&self.dims[1], v[1]),
            l2: fit(&self.dims[2], v[2]),
        }
    }
}

//! Bayesian hyperparameter search: GP surrogate, expected improvement, resumable history.

mod acquisition;
mod gp;
mod space;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

pub use acquisition::{expected_improvement, halton, maximize_ei, shifted_halton, CANDIDATES};
pub use gp::{gp_fit, KernelConfig, KernelParams, Surrogate, LENGTH_SCALE_GRID, NOISE_GRID};
pub use space::{Dim, SearchSpace};

use crate::error::{Error, Result};
use crate::seed;
use crate::train::Hyperparams;

pub const DEFAULT_BUDGET: usize = 30;
pub const INITIAL_DESIGN: usize = 5;

const INIT_STREAM: u64 = 0x494e_4954;
const TRIAL_STREAM: u64 = 0x5452_4941;

#[derive(Clone, Debug, PartialEq)]
pub struct BoConfig {
    pub initial: usize,
    pub candidates: usize,
    pub kernel: KernelConfig,
    pub seed: u64,
}

impl BoConfig {
    pub fn new(seed: u64) -> Self {
        BoConfig {
            initial: INITIAL_DESIGN,
            candidates: CANDIDATES,
            kernel: KernelConfig::Grid,
            seed,
        }
    }
}

/// Unit-cube point with the highest EI among shifted Halton candidates.
pub fn propose_next(s: &Surrogate, best: f64, n_candidates: usize, rng: &mut impl Rng) -> Vec<f64> {
    let dim = s.x[0].len();
    let mut candidates = shifted_halton(n_candidates.max(1), dim, rng);
    let (i, _) = maximize_ei(s, best, &candidates);
    candidates.swap_remove(i)
}

/// Point for 1-based `trial` given the successful observations so far.
/// A pure function of `(cfg.seed, trial, observed)`.
pub fn suggest(trial: usize, dim: usize, observed: &[(Vec<f64>, f64)], cfg: &BoConfig) -> Vec<f64> {
    if trial <= cfg.initial {
        let mut rng = seed::rng(cfg.seed, &[INIT_STREAM]);
        return shifted_halton(trial, dim, &mut rng)
            .pop()
            .expect("trial >= 1");
    }
    let mut rng = seed::rng(cfg.seed, &[TRIAL_STREAM, trial as u64]);
    if observed.len() >= 2 {
        let x: Vec<Vec<f64>> = observed.iter().map(|(p, _)| p.clone()).collect();
        let y: Vec<f64> = observed.iter().map(|(_, v)| *v).collect();
        if let Ok(s) = gp_fit(&x, &y, &cfg.kernel) {
            let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            return propose_next(&s, best, cfg.candidates, &mut rng);
        }
    }
    (0..dim).map(|_| rng.gen::<f64>()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrialStatus {
    Ok,
    Failed,
}

impl TrialStatus {
    fn token(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    /// 1-based.
    pub trial: usize,
    pub hyperparams: Hyperparams,
    /// Validation accuracy; `None` for failed trials.
    pub objective: Option<f64>,
    pub status: TrialStatus,
    pub seconds: f64,
}

impl TrialRecord {
    pub fn to_line(&self) -> String {
        let hp = &self.hyperparams;
        let obj = self
            .objective
            .map_or_else(|| "nan".to_string(), |v| v.to_string());
        format!(
            "{},{},{},{},{},{},{:.3}\n",
            self.trial,
            hp.learning_rate,
            hp.momentum,
            hp.l2,
            obj,
            self.status.token(),
            self.seconds
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("history line `{line}`: bad {what}"));
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        let num = |i: usize, what: &str| f[i].parse::<f32>().map_err(|_| bad(what));
        let status = match f[5] {
            "ok" => TrialStatus::Ok,
            "failed" => TrialStatus::Failed,
            _ => return Err(bad("status")),
        };
        let objective = match status {
            TrialStatus::Ok => Some(f[4].parse::<f64>().map_err(|_| bad("objective"))?),
            TrialStatus::Failed => None,
        };
        Ok(TrialRecord {
            trial: f[0].parse().map_err(|_| bad("trial index"))?,
            hyperparams: Hyperparams {
                learning_rate: num(1, "learning rate")?,
                momentum: num(2, "momentum")?,
                l2: num(3, "l2")?,
            },
            objective,
            status,
            seconds: f[6].parse().map_err(|_| bad("seconds"))?,
        })
    }
}

/// Reads complete history records; a torn final line is dropped from the file.
pub fn read_history(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = fs::read_to_string(path)?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        fs::write(path, complete)?;
    }
    let records: Vec<TrialRecord> = complete
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(TrialRecord::parse_line)
        .collect::<Result<_>>()?;
    for (i, r) in records.iter().enumerate() {
        if r.trial != i + 1 {
            return Err(Error::Config(format!(
                "history {}: expected trial {} but found {}",
                path.display(),
                i + 1,
                r.trial
            )));
        }
    }
    Ok(records)
}

fn append_record(path: &Path, record: &TrialRecord) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(record.to_line().as_bytes())?;
    f.sync_data()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct HpoConfig {
    pub space: SearchSpace,
    pub budget: usize,
    pub bo: BoConfig,
    pub history: Option<PathBuf>,
    /// Continue an existing history instead of refusing to overwrite it.
    pub resume: bool,
}

impl HpoConfig {
    pub fn new(seed: u64) -> Self {
        HpoConfig {
            space: SearchSpace::default(),
            budget: DEFAULT_BUDGET,
            bo: BoConfig::new(seed),
            history: None,
            resume: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct HpoResult {
    pub history: Vec<TrialRecord>,
    pub best: TrialRecord,
    /// Surrogate posterior mean at the best point, when a surrogate can be fitted.
    pub estimated: Option<f64>,
}

/// Runs `budget` trials sequentially; `objective(trial, hp)` returns validation accuracy.
pub fn run_hpo(
    cfg: &HpoConfig,
    mut objective: impl FnMut(usize, &Hyperparams) -> Result<f64>,
) -> Result<HpoResult> {
    cfg.space.validate()?;
    if cfg.budget < cfg.bo.initial || cfg.budget == 0 {
        return Err(Error::Config(format!(
            "budget {} is smaller than the initial design ({})",
            cfg.budget, cfg.bo.initial
        )));
    }
    let mut history = Vec::new();
    if let Some(path) = &cfg.history {
        let exists = path.is_file() && fs::metadata(path)?.len() > 0;
        if exists && !cfg.resume {
            return Err(Error::Config(format!(
                "history {} exists; resume it or choose another path",
                path.display()
            )));
        }
        if exists {
            history = read_history(path)?;
        }
    }

    let dim = cfg.space.dims.len();
    for trial in history.len() + 1..=cfg.budget {
        let observed = observations(&cfg.space, &history)?;
        let u = suggest(trial, dim, &observed, &cfg.bo);
        let hp = cfg.space.denormalize(&u);
        let started = Instant::now();
        let outcome = objective(trial, &hp);
        let seconds = started.elapsed().as_secs_f64();
        let objective = outcome.ok().filter(|v| v.is_finite());
        let record = TrialRecord {
            trial,
            hyperparams: hp,
            objective,
            status: if objective.is_some() {
                TrialStatus::Ok
            } else {
                TrialStatus::Failed
            },
            seconds,
        };
        if let Some(path) = &cfg.history {
            append_record(path, &record)?;
        }
        history.push(record);
    }

    let best = history
        .iter()
        .filter(|r| r.objective.is_some())
        .fold(None::<&TrialRecord>, |b, r| match b {
            Some(b) if b.objective >= r.objective => Some(b),
            _ => Some(r),
        })
        .cloned()
        .ok_or_else(|| Error::Numerical("every trial failed".into()))?;
    let observed = observations(&cfg.space, &history)?;
    let estimated = if observed.len() >= 2 {
        let x: Vec<Vec<f64>> = observed.iter().map(|(p, _)| p.clone()).collect();
        let y: Vec<f64> = observed.iter().map(|(_, v)| *v).collect();
        gp_fit(&x, &y, &cfg.bo.kernel).ok().map(|s| {
            s.posterior(
                &cfg.space
                    .normalize_point(&best.hyperparams)
                    .expect("in bounds"),
            )
            .0
        })
    } else {
        None
    };
    Ok(HpoResult {
        history,
        best,
        estimated,
    })
}

fn observations(space: &SearchSpace, history: &[TrialRecord]) -> Result<Vec<(Vec<f64>, f64)>> {
    history
        .iter()
        .filter_map(|r| r.objective.map(|v| (r, v)))
        .map(|(r, v)| Ok((space.normalize_point(&r.hyperparams)?, v)))
        .collect()
}

//! `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Recognised keys:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `bits` | bits to learn | 32 |
//! | `nu` | regularization weight | 1e-6 |
//! | `restarts` | weak-learner random candidates | 100 |
//! | `memory` | quasi-Newton memory | 10 |
//! | `tolerance` | projected-gradient tolerance | 1e-6 |
//! | `max_iterations` | primal iteration cap | 500 |
//! | `weak_max_iterations` | weak-learner iteration cap | 500 |
//! | `seed` | random seed | 0 |
//! | `loss` | `logistic` | `logistic` |
//! | `penalty` | `l1` or `linf` | `l1` |
//! | `hits` | same-class neighbours per anchor | 5 |
//! | `misses` | neighbours per other class | 5 |
//! | `k` | neighbours for retrieval and kNN | 10 |
//! | `trials` | gradient-check instances | 100 |
//! | `gradcheck_tolerance` | gradient-check pass threshold | 1e-4 |
//! | `gradcheck_step` | finite-difference step | 1e-6 |

use std::path::Path;

use cbid_core::loss::Penalty;
use cbid_core::trainer::gradcheck::GradCheckConfig;
use cbid_core::trainer::{LossKind, TrainConfig};

use crate::error::{CliError, Result};
use crate::formats::read_text;

fn usage_at(origin: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{}:{line}: {msg}", origin.display()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub train: TrainConfig,
    pub hits: usize,
    pub misses: usize,
    pub k: usize,
    pub gradcheck: GradCheckConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            train: TrainConfig::default(),
            hits: 5,
            misses: 5,
            k: 10,
            gradcheck: GradCheckConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::parse(&read_text(p)?, p),
            None => Ok(Self::default()),
        }
    }

    /// Parses `text`; `origin` only labels error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut c = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let n = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage_at(origin, n, "expected key=value"))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| usage_at(origin, n, format!("{key}: expected {what}, found {value:?}"));
            let int = || value.parse::<usize>().map_err(|_| bad("a nonnegative integer"));
            let real = || value.parse::<f64>().map_err(|_| bad("a number"));
            match key {
                "bits" => c.train.bits = int()?,
                "nu" => c.train.nu = real()?,
                "restarts" => c.train.restarts = int()?,
                "memory" => c.train.memory = int()?,
                "tolerance" => c.train.tolerance = real()?,
                "max_iterations" => c.train.max_iterations = int()?,
                "weak_max_iterations" => c.train.weak_max_iterations = int()?,
                "seed" => {
                    let s = value.parse::<u64>().map_err(|_| bad("an unsigned integer"))?;
                    c.train.seed = s;
                    c.gradcheck.seed = s;
                }
                "loss" => c.train.loss = LossKind::from_name(value).ok_or_else(|| bad("logistic"))?,
                "penalty" => c.train.penalty = Penalty::from_name(value).ok_or_else(|| bad("l1 or linf"))?,
                "hits" => c.hits = int()?,
                "misses" => c.misses = int()?,
                "k" => c.k = int()?,
                "trials" => c.gradcheck.trials = int()?,
                "gradcheck_tolerance" => c.gradcheck.tolerance = real()?,
                "gradcheck_step" => c.gradcheck.step = real()?,
                _ => return Err(usage_at(origin, n, format!("unknown key {key:?}"))),
            }
        }
        Ok(c)
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(s) = seed {
            self.train.seed = s;
            self.gradcheck.seed = s;
        }
        self
    }
}

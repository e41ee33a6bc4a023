//! Column-generation training.
//!
//! Each round searches for the hash function whose dual constraint is most
//! violated under the current duals, appends it as a new bit, re-solves all
//! Hamming weights jointly in the primal, and refreshes the duals from the
//! KKT conditions `u = -L'(margin)`.

pub mod gradcheck;
mod primal;
mod problem;
mod weak;

pub use primal::{
    column_scores, dual_objective, margins, primal_objective, solve_primal, update_duals,
    BitFeatures, MarginLayout, PrimalSettings, PrimalSolution,
};
pub use problem::{DualState, TripletProblem};
pub use weak::{
    learn_hash, weak_gradient, weak_objective, weak_objective_smooth, WeakLearner,
};

use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Label, Mode, PatchSet, TripletSet};
use crate::hashfn::CodeBook;
use crate::loss::{Logistic, Loss, Penalty};
use crate::qn::QnOptions;
use crate::{Error, Result};

/// Nonnegative Hamming weights, one row per bit and one column per class
/// (a single column in patch mode).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        WeightMatrix {
            rows,
            cols,
            data: alloc::vec![0.0; rows * cols],
        }
    }

    /// Row-major data; every entry must be finite and nonnegative.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::SizeMismatch {
                what: "weight matrix",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("weights must be finite and nonnegative"));
        }
        Ok(WeightMatrix { rows, cols, data })
    }

    pub fn bits(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, bit: usize, col: usize) -> f64 {
        self.data[bit * self.cols + col]
    }

    pub fn row(&self, bit: usize) -> &[f64] {
        &self.data[bit * self.cols..(bit + 1) * self.cols]
    }

    /// Weights of one column, in bit order.
    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.rows).map(|s| self.get(s, col)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn push_zero_row(&mut self) {
        self.data.extend(core::iter::repeat_n(0.0, self.cols));
        self.rows += 1;
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        WeightMatrix { rows, cols, data }
    }
}

/// Loss selected by name in the training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Logistic,
}

impl LossKind {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "logistic" => Some(LossKind::Logistic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
        }
    }
}

impl Loss for LossKind {
    fn name(&self) -> &'static str {
        LossKind::name(*self)
    }

    fn value(&self, margin: f64) -> f64 {
        match self {
            LossKind::Logistic => Logistic.value(margin),
        }
    }

    fn derivative(&self, margin: f64) -> f64 {
        match self {
            LossKind::Logistic => Logistic.derivative(margin),
        }
    }

    fn conjugate(&self, u: f64) -> Result<f64> {
        match self {
            LossKind::Logistic => Logistic.conjugate(u),
        }
    }

    fn dual(&self, margin: f64) -> f64 {
        match self {
            LossKind::Logistic => Logistic.dual(margin),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Number of bits to learn.
    pub bits: usize,
    /// Regularization weight.
    pub nu: f64,
    /// Random candidates drawn to initialize each weak-learner ascent.
    pub restarts: usize,
    pub memory: usize,
    pub tolerance: f64,
    /// Iteration cap for each primal solve.
    pub max_iterations: usize,
    /// Iteration cap for each weak-learner ascent.
    pub weak_max_iterations: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub penalty: Penalty,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            bits: 32,
            nu: 1e-6,
            restarts: 100,
            memory: 10,
            tolerance: 1e-6,
            max_iterations: 500,
            weak_max_iterations: 500,
            seed: 0,
            loss: LossKind::Logistic,
            penalty: Penalty::L1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::InvalidConfig("bits must be at least 1"));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(Error::InvalidConfig("nu must be positive"));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidConfig("restarts must be at least 1"));
        }
        if self.memory == 0 {
            return Err(Error::InvalidConfig("memory must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive"));
        }
        Ok(())
    }

    pub fn primal_settings(&self) -> PrimalSettings {
        PrimalSettings {
            nu: self.nu,
            penalty: self.penalty,
            loss: self.loss,
            qn: QnOptions {
                memory: self.memory,
                tolerance: self.tolerance,
                max_iterations: self.max_iterations,
            },
        }
    }

    pub fn weak_options(&self) -> QnOptions {
        QnOptions {
            memory: self.memory,
            tolerance: self.tolerance,
            max_iterations: self.weak_max_iterations,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    /// 1-based round number.
    pub iter: usize,
    pub objective: f64,
    /// Amount by which the selected column's dual constraint exceeded `nu`.
    pub max_violation: f64,
    pub chosen_class: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub codebook: CodeBook,
    pub weights: WeightMatrix,
    pub mode: Mode,
    pub trace: Vec<TraceRow>,
}

/// Input to [`train`].
#[derive(Debug, Clone, Copy)]
pub enum TrainingSet<'a> {
    Image {
        data: &'a Dataset,
        triplets: &'a TripletSet,
    },
    Patch {
        patches: &'a PatchSet,
        triplets: &'a TripletSet,
    },
}

impl<'a> TrainingSet<'a> {
    pub fn problem(&self) -> Result<TripletProblem<'a>> {
        match *self {
            TrainingSet::Image { data, triplets } => TripletProblem::image(data, triplets),
            TrainingSet::Patch { patches, triplets } => TripletProblem::patch(patches, triplets),
        }
    }
}

/// Runs column generation for up to `cfg.bits` rounds.
///
/// Stops early when the best weak learner no longer violates its dual
/// constraint, i.e. its score is at most `nu * (1 + 1e-6)`.
pub fn train(set: TrainingSet<'_>, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let problem = set.problem()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let settings = cfg.primal_settings();
    let layout = problem.layout();

    let mut duals = problem.initial_duals();
    let mut codebook = CodeBook::new(problem.dim());
    let mut features = BitFeatures::new(problem.rows());
    let mut weights = WeightMatrix::zeros(0, problem.weight_columns());
    let mut trace = Vec::with_capacity(cfg.bits);

    for iter in 1..=cfg.bits {
        let learner = learn_hash(&problem, &duals, cfg, &mut rng)?;
        if learner.score <= cfg.nu * (1.0 + 1e-6) {
            break;
        }
        features.push(problem.bit_column(&learner.function)?);
        codebook.push(learner.function)?;
        weights.push_zero_row();
        let solution = solve_primal(&features, &layout, &settings, Some(&weights))?;
        duals = update_duals(&solution.weights, &features, &layout, &settings.loss, problem.mode());
        weights = solution.weights;
        trace.push(TraceRow {
            iter,
            objective: solution.objective,
            max_violation: learner.score - cfg.nu,
            chosen_class: learner.class,
        });
    }

    Ok(TrainedModel {
        codebook,
        weights,
        mode: problem.mode(),
        trace,
    })
}

//! Finite-difference check of the weak-learner gradient on random instances.

use alloc::vec::Vec;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{mine_triplets_image, Dataset, Label, Mode, TripletSet};
use crate::hashfn::HashFunction;
use crate::{Error, Matrix, Result};

use super::problem::{DualState, TripletProblem};
use super::weak::{weak_gradient, weak_objective_smooth};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub seed: u64,
    /// The check passes when the largest relative error is strictly below this.
    pub tolerance: f64,
    /// Central-difference step.
    pub step: f64,
    pub max_dim: usize,
    pub max_triplets: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            trials: 100,
            seed: 0,
            tolerance: 1e-4,
            step: 1e-6,
            max_dim: 16,
            max_triplets: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub trials: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Relative error `|a - b|_2 / max(|a|_2, |b|_2)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| libm::sqrt(v.map(|x| x * x).sum::<f64>());
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

struct Instance {
    data: Dataset,
    triplets: TripletSet,
    function: HashFunction,
    duals: Vec<f64>,
    class: Label,
}

fn random_instance<R: Rng>(cfg: &GradCheckConfig, rng: &mut R) -> Result<Instance> {
    let d = rng.random_range(1..=cfg.max_dim.max(1));
    let k = rng.random_range(2..=3usize);
    let per_class = rng.random_range(3..=4usize);
    let n = k * per_class;
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        values.push(StandardNormal.sample(rng));
    }
    let labels = (0..n).map(|i| (i / per_class) as Label + 1).collect();
    let data = Dataset::new(Matrix::new(n, d, values)?, labels, k)?;
    let hits = rng.random_range(1..=2usize);
    let mined = mine_triplets_image(&data, hits, 1)?;
    let mut triples = mined.triples().to_vec();
    triples.truncate(cfg.max_triplets.max(1));
    let triplets = TripletSet::new(triples, Mode::Image, data.labels())?;
    let beta: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let bias: f64 = StandardNormal.sample(rng);
    let function = HashFunction::new(beta, 0.5 * bias)?;
    let duals = (0..triplets.len()).map(|_| rng.random_range(0.01..1.0)).collect();
    let class = rng.random_range(1..=k as Label);
    Ok(Instance {
        data,
        triplets,
        function,
        duals,
        class,
    })
}

/// Runs the check against [`weak_gradient`].
pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    gradient_check_with(cfg, weak_gradient)
}

/// Runs the check against an arbitrary gradient routine with the signature
/// of [`weak_gradient`].
pub fn gradient_check_with<G>(cfg: &GradCheckConfig, mut gradient: G) -> Result<GradCheckReport>
where
    G: FnMut(&TripletProblem<'_>, &HashFunction, &DualState, Label) -> Result<(Vec<f64>, f64)>,
{
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("gradcheck needs at least one trial"));
    }
    if !(cfg.step > 0.0) {
        return Err(Error::InvalidConfig("finite-difference step must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cfg.trials {
        let inst = random_instance(cfg, &mut rng)?;
        let problem = TripletProblem::image(&inst.data, &inst.triplets)?;
        let duals = DualState {
            mode: Mode::Image,
            values: inst.duals,
        };
        let (mut analytic, db) = gradient(&problem, &inst.function, &duals, inst.class)?;
        analytic.push(db);

        let mut params = inst.function.beta().to_vec();
        params.push(inst.function.bias());
        let d = params.len() - 1;
        let mut numeric = Vec::with_capacity(params.len());
        for i in 0..params.len() {
            let eval = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                p[i] += delta;
                let h = HashFunction::new(p[..d].to_vec(), p[d])?;
                weak_objective_smooth(&problem, &h, &duals, inst.class)
            };
            numeric.push((eval(cfg.step)? - eval(-cfg.step)?) / (2.0 * cfg.step));
        }
        let err = relative_error(&analytic, &numeric);
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    }
    Ok(GradCheckReport {
        trials: cfg.trials,
        max_rel_error: worst,
        passed: worst < cfg.tolerance,
    })
}

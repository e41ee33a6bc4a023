//! Weak-learner search: find `(h, r)` maximizing the dual-violation score
//! `sum_e omega_e(r) a_e(h)`.
//!
//! The sign-evaluated score is piecewise constant, so the search ascends a
//! smoothed surrogate in which `sign` becomes `(2/pi) atan` and `|.|`
//! becomes `(.)^2`.

use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::data::Label;
use crate::hashfn::{sign, smooth, smooth_derivative, HashFunction};
use crate::matrix::dot;
use crate::qn;
use crate::{Error, Result};

use super::problem::{triple_feature, DualState, TripletProblem};
use super::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct WeakLearner {
    pub function: HashFunction,
    /// Column whose dual constraint is most violated (1-based).
    pub class: Label,
    /// Sign-evaluated score of `function` for `class`.
    pub score: f64,
}

fn responses(points: &crate::Matrix, beta: &[f64], bias: f64) -> Vec<f64> {
    points.iter_rows().map(|x| dot(beta, x) + bias).collect()
}

fn check_dim(problem: &TripletProblem<'_>, h: &HashFunction) -> Result<()> {
    if h.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            found: h.dim(),
        });
    }
    Ok(())
}

fn sign_score(problem: &TripletProblem<'_>, omega: &[f64], z: &[f64]) -> f64 {
    let codes: Vec<i8> = z.iter().map(|&v| sign(v)).collect();
    problem
        .triples()
        .iter()
        .zip(omega)
        .map(|(t, &w)| w * triple_feature(&codes, t))
        .sum()
}

fn smooth_score(problem: &TripletProblem<'_>, omega: &[f64], hs: &[f64]) -> f64 {
    problem
        .triples()
        .iter()
        .zip(omega)
        .map(|(t, &w)| {
            let x = hs[t.anchor];
            let dm = x - hs[t.miss];
            let dp = x - hs[t.hit];
            w * (dm * dm - dp * dp)
        })
        .sum()
}

/// Smoothed score and its gradient with respect to `(beta, bias)`; the
/// gradient is written to `grad` as `[d beta..., d bias]`.
fn smooth_score_and_gradient(
    problem: &TripletProblem<'_>,
    omega: &[f64],
    beta: &[f64],
    bias: f64,
    grad: &mut [f64],
) -> f64 {
    let points = problem.points();
    let z = responses(points, beta, bias);
    let hs: Vec<f64> = z.iter().map(|&v| smooth(v)).collect();
    // coefficient of dh(x_i)/d(beta, b) accumulated per point
    let mut coef = alloc::vec![0.0; points.rows()];
    let mut value = 0.0;
    for (t, &w) in problem.triples().iter().zip(omega) {
        if w == 0.0 {
            continue;
        }
        let x = hs[t.anchor];
        let dm = x - hs[t.miss];
        let dp = x - hs[t.hit];
        value += w * (dm * dm - dp * dp);
        coef[t.anchor] += 2.0 * w * (dm - dp);
        coef[t.miss] -= 2.0 * w * dm;
        coef[t.hit] += 2.0 * w * dp;
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    let d = beta.len();
    for (i, x) in points.iter_rows().enumerate() {
        if coef[i] == 0.0 {
            continue;
        }
        let c = coef[i] * smooth_derivative(z[i]);
        for (g, &xi) in grad[..d].iter_mut().zip(x) {
            *g += c * xi;
        }
        grad[d] += c;
    }
    value
}

/// Sign-evaluated score of `h` for column `r`.
pub fn weak_objective(
    problem: &TripletProblem<'_>,
    h: &HashFunction,
    duals: &DualState,
    r: Label,
) -> Result<f64> {
    let omega = problem.omega(duals, r)?;
    check_dim(problem, h)?;
    let z = responses(problem.points(), h.beta(), h.bias());
    Ok(sign_score(problem, &omega, &z))
}

/// Smoothed score of `h` for column `r`.
pub fn weak_objective_smooth(
    problem: &TripletProblem<'_>,
    h: &HashFunction,
    duals: &DualState,
    r: Label,
) -> Result<f64> {
    let omega = problem.omega(duals, r)?;
    check_dim(problem, h)?;
    let z = responses(problem.points(), h.beta(), h.bias());
    let hs: Vec<f64> = z.iter().map(|&v| smooth(v)).collect();
    Ok(smooth_score(problem, &omega, &hs))
}

/// Gradient of the smoothed score with respect to `beta` and `bias`.
pub fn weak_gradient(
    problem: &TripletProblem<'_>,
    h: &HashFunction,
    duals: &DualState,
    r: Label,
) -> Result<(Vec<f64>, f64)> {
    let omega = problem.omega(duals, r)?;
    check_dim(problem, h)?;
    let mut grad = alloc::vec![0.0; h.dim() + 1];
    smooth_score_and_gradient(problem, &omega, h.beta(), h.bias(), &mut grad);
    let bias = grad.pop().unwrap_or(0.0);
    Ok((grad, bias))
}

struct Seed {
    beta: Vec<f64>,
    bias: f64,
    smooth_h: Vec<f64>,
}

fn draw_seed<R: Rng + ?Sized>(problem: &TripletProblem<'_>, rng: &mut R) -> Seed {
    let d = problem.dim();
    let mut beta: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let norm = libm::sqrt(dot(&beta, &beta));
    if norm > 0.0 {
        beta.iter_mut().for_each(|b| *b /= norm);
    } else {
        beta[0] = 1.0;
    }
    let proj = responses(problem.points(), &beta, 0.0);
    let (lo, hi) = proj
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| {
            (lo.min(-p), hi.max(-p))
        });
    let bias = if lo < hi {
        Uniform::new(lo, hi).map(|u| u.sample(rng)).unwrap_or(lo)
    } else if lo.is_finite() {
        lo
    } else {
        0.0
    };
    let smooth_h = proj.iter().map(|&p| smooth(p + bias)).collect();
    Seed {
        beta,
        bias,
        smooth_h,
    }
}

/// Searches the most violated dual constraint.
///
/// `cfg.restarts` random candidates are drawn once and shared by all
/// columns. For each column the candidate with the best smoothed score
/// seeds a quasi-Newton ascent; the better of the ascended function and the
/// seed (by sign-evaluated score) represents the column. The column with the
/// highest sign-evaluated score wins, ties going to the smaller column.
pub fn learn_hash<R: Rng + ?Sized>(
    problem: &TripletProblem<'_>,
    duals: &DualState,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<WeakLearner> {
    problem.check_duals(duals)?;
    let seeds: Vec<Seed> = (0..cfg.restarts.max(1))
        .map(|_| draw_seed(problem, rng))
        .collect();
    let d = problem.dim();
    let opts = cfg.weak_options();
    let unbounded_lo = alloc::vec![f64::NEG_INFINITY; d + 1];
    let unbounded_hi = alloc::vec![f64::INFINITY; d + 1];

    let mut best: Option<WeakLearner> = None;
    for r in 1..=problem.search_classes() as Label {
        let omega = problem.omega(duals, r)?;
        let mut seed_idx = 0;
        let mut seed_val = f64::NEG_INFINITY;
        for (i, s) in seeds.iter().enumerate() {
            let v = smooth_score(problem, &omega, &s.smooth_h);
            if v > seed_val {
                seed_val = v;
                seed_idx = i;
            }
        }
        let seed = &seeds[seed_idx];
        let mut x0 = seed.beta.clone();
        x0.push(seed.bias);

        let outcome = qn::minimize(
            |x, g| {
                let v = smooth_score_and_gradient(problem, &omega, &x[..d], x[d], g);
                g.iter_mut().for_each(|gi| *gi = -*gi);
                -v
            },
            &x0,
            &unbounded_lo,
            &unbounded_hi,
            &opts,
        );

        let seed_fn = HashFunction::new(seed.beta.clone(), seed.bias)?;
        let seed_score = sign_score(
            problem,
            &omega,
            &responses(problem.points(), &seed.beta, seed.bias),
        );
        let ascended = HashFunction::new(outcome.x[..d].to_vec(), outcome.x[d]).ok();
        let candidate = match ascended {
            Some(h) => {
                let s = sign_score(problem, &omega, &responses(problem.points(), h.beta(), h.bias()));
                if s >= seed_score {
                    WeakLearner {
                        function: h,
                        class: r,
                        score: s,
                    }
                } else {
                    WeakLearner {
                        function: seed_fn,
                        class: r,
                        score: seed_score,
                    }
                }
            }
            None => WeakLearner {
                function: seed_fn,
                class: r,
                score: seed_score,
            },
        };
        if best.as_ref().is_none_or(|b| candidate.score > b.score) {
            best = Some(candidate);
        }
    }
    // search_classes() >= 1 always
    Ok(best.expect("at least one weight column"))
}

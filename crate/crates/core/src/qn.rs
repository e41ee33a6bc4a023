//! Box-constrained limited-memory quasi-Newton minimizer.
//!
//! Each iteration fixes the variables sitting on a bound whose gradient
//! pushes outward, takes an L-BFGS two-loop direction on the remaining free
//! variables, and backtracks along the projected path `P(x + a d)` until an
//! Armijo decrease holds. Convergence is declared on the infinity norm of
//! the projected gradient step `P(x - g) - x`.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QnOptions {
    /// Number of correction pairs kept.
    pub memory: usize,
    /// Projected-gradient infinity-norm threshold.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QnOptions {
    fn default() -> Self {
        QnOptions {
            memory: 10,
            tolerance: 1e-6,
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const NOISE: f64 = 1e-12;
const MAX_BACKTRACK: usize = 60;

const SNAP: f64 = 1e-12;

/// Clamps into the box and snaps values within a relative `SNAP` of a
/// finite bound onto it.
fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
        if l.is_finite() && *v - l <= SNAP * l.abs().max(1.0) {
            *v = l;
        } else if u.is_finite() && u - *v <= SNAP * u.abs().max(1.0) {
            *v = u;
        }
    }
}

/// Infinity norm of the projected gradient step `P(x - g) - x`.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm: f64 = 0.0;
    for i in 0..x.len() {
        let step = (x[i] - g[i]).clamp(lower[i], upper[i]) - x[i];
        norm = norm.max(step.abs());
    }
    norm
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct History {
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    memory: usize,
}

impl History {
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) || !sy.is_finite() {
            return;
        }
        if self.pairs.len() == self.memory {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
    }

    /// Two-loop recursion on the masked gradient; returns `H g` restricted to
    /// the free set.
    fn apply(&self, g: &[f64], free: &[bool]) -> Vec<f64> {
        let mask = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .zip(free)
                .map(|(&a, &f)| if f { a } else { 0.0 })
                .collect()
        };
        let mut q = mask(g);
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let sm = mask(s);
            let a = rho * dot(&sm, &q);
            for (qi, yi) in q.iter_mut().zip(y.iter().zip(free)) {
                if *yi.1 {
                    *qi -= a * yi.0;
                }
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = self.pairs.back() {
            let ym = mask(y);
            let yy = dot(&ym, &ym);
            let sy = dot(&mask(s), &ym);
            if yy > 0.0 && sy > 0.0 {
                let gamma = sy / yy;
                q.iter_mut().for_each(|v| *v *= gamma);
            }
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(&mask(y), &q);
            for (qi, (si, &f)) in q.iter_mut().zip(s.iter().zip(free)) {
                if f {
                    *qi += (a - b) * si;
                }
            }
        }
        q
    }
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// `f(x, grad)` returns the value and writes the gradient. Infinite bounds
/// are allowed. Once decreases fall below the rounding noise of `f`, steps
/// are accepted on an approximate Wolfe slope test, so the returned value
/// may exceed the starting value by a relative `1e-12`.
pub fn minimize<F>(f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &QnOptions) -> QnOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    minimize_with(f, |_: &mut [f64]| false, x0, lower, upper, opts)
}

/// [`minimize`] with a `reduce` hook applied to every accepted iterate.
///
/// `reduce` may move `x` to a point that is feasible and no worse (for
/// example along a direction the objective is known to be linear in) and
/// returns whether it changed anything.
pub fn minimize_with<F, R>(
    mut f: F,
    mut reduce: R,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &QnOptions,
) -> QnOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
    R: FnMut(&mut [f64]) -> bool,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = alloc::vec![0.0; n];
    if reduce(&mut x) {
        project(&mut x, lower, upper);
    }
    let mut value = f(&x, &mut g);
    let mut hist = History {
        pairs: VecDeque::with_capacity(opts.memory),
        memory: opts.memory.max(1),
    };
    let mut x_new = alloc::vec![0.0; n];
    let mut g_new = alloc::vec![0.0; n];
    let mut iterations = 0;

    loop {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg < opts.tolerance || n == 0 {
            return QnOutcome {
                x,
                value,
                iterations,
                projected_gradient: pg,
                converged: true,
            };
        }
        if iterations >= opts.max_iterations || !value.is_finite() {
            return QnOutcome {
                x,
                value,
                iterations,
                projected_gradient: pg,
                converged: false,
            };
        }
        iterations += 1;

        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lower[i] && g[i] > 0.0) || (x[i] >= upper[i] && g[i] < 0.0)))
            .collect();

        let mut accepted = false;
        let mut new_value = value;
        for attempt in 0..2 {
            let steepest = attempt == 1 || hist.pairs.is_empty();
            let mut d: Vec<f64> = if steepest {
                g.iter()
                    .zip(&free)
                    .map(|(&gi, &fr)| if fr { -gi } else { 0.0 })
                    .collect()
            } else {
                hist.apply(&g, &free).into_iter().map(|v| -v).collect()
            };
            let slope = dot(&g, &d);
            if !steepest && !(slope < 0.0) {
                continue;
            }
            // steepest steps move at most a unit distance in any coordinate,
            // quasi-Newton steps at most 1 + |x|_inf
            let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let reach = if steepest {
                1.0
            } else {
                1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            };
            let mut alpha = if dmax > reach { reach / dmax } else { 1.0 };
            for _ in 0..MAX_BACKTRACK {
                for i in 0..n {
                    x_new[i] = x[i] + alpha * d[i];
                }
                project(&mut x_new, lower, upper);
                let decrease: f64 = (0..n).map(|i| g[i] * (x_new[i] - x[i])).sum();
                let v = f(&x_new, &mut g_new);
                let armijo = v <= value + ARMIJO * decrease;
                // near the optimum decreases drop below the rounding noise of
                // f; fall back to the approximate Wolfe test on the slope
                let noise = NOISE * value.abs().max(1.0);
                let slope_new: f64 = (0..n).map(|i| g_new[i] * (x_new[i] - x[i])).sum();
                let wolfe = slope_new >= CURVATURE * decrease
                    && slope_new <= (2.0 * ARMIJO - 1.0) * decrease;
                let clipped = (0..n).any(|i| x_new[i] != x[i] + alpha * d[i]);
                let flat = v <= value + noise && (wolfe || clipped);
                if v.is_finite() && decrease < 0.0 && (armijo || flat) {
                    accepted = true;
                    new_value = v;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                break;
            }
            hist.pairs.clear();
            d.clear();
        }

        if !accepted {
            let pg = projected_gradient_norm(&x, &g, lower, upper);
            return QnOutcome {
                x,
                value,
                iterations,
                projected_gradient: pg,
                converged: pg < opts.tolerance,
            };
        }

        if reduce(&mut x_new) {
            project(&mut x_new, lower, upper);
            new_value = f(&x_new, &mut g_new);
        }
        if x_new == x {
            let pg = projected_gradient_norm(&x, &g, lower, upper);
            return QnOutcome {
                x,
                value,
                iterations,
                projected_gradient: pg,
                converged: pg < opts.tolerance,
            };
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        hist.push(s, y);
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        value = new_value;
    }
}

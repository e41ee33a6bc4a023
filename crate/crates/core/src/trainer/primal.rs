//! Totally corrective weight solve in the primal and KKT dual recovery.
//!
//! Margin row `i` has a feature vector `a_i` (one entry per bit) and is
//! attached to a positive column `p_i` and an optional negative column
//! `n_i`; its margin is `a_i . (w_{p_i} - w_{n_i})`. The primal objective is
//! `sum_i L(margin_i) + nu * penalty(W)` over `W >= 0`.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::data::Mode;
use crate::loss::{Loss, Penalty};
use crate::qn::{self, QnOptions};
use crate::{Error, Result};

use super::{DualState, LossKind, WeightMatrix};

/// Per-bit feature columns, each with one entry per margin row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BitFeatures {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

impl BitFeatures {
    pub fn new(rows: usize) -> Self {
        BitFeatures {
            rows,
            columns: Vec::new(),
        }
    }

    pub fn from_columns(rows: usize, columns: Vec<Vec<f64>>) -> Result<Self> {
        let mut f = BitFeatures::new(rows);
        for c in columns {
            f.try_push(c)?;
        }
        Ok(f)
    }

    pub fn try_push(&mut self, column: Vec<f64>) -> Result<()> {
        if column.len() != self.rows {
            return Err(Error::SizeMismatch {
                what: "feature column",
                expected: self.rows,
                found: column.len(),
            });
        }
        self.columns.push(column);
        Ok(())
    }

    /// Appends a column produced for the same rows.
    pub fn push(&mut self, column: Vec<f64>) {
        assert_eq!(column.len(), self.rows, "feature column length");
        self.columns.push(column);
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn bits(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, s: usize) -> &[f64] {
        &self.columns[s]
    }
}

/// Positive and optional negative weight column of every margin row.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginLayout {
    columns: usize,
    rows: Vec<(usize, Option<usize>)>,
}

impl MarginLayout {
    pub fn new(columns: usize, rows: Vec<(usize, Option<usize>)>) -> Self {
        MarginLayout { columns, rows }
    }

    pub fn columns(&self) -> usize {
        self.columns
    }

    pub fn rows(&self) -> &[(usize, Option<usize>)] {
        &self.rows
    }

    /// True when every row has a negative column, in which case margins are
    /// unchanged by adding a constant to all columns of one bit.
    pub fn shift_invariant(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.1.is_some())
    }
}

/// Subtracts each bit's smallest weight from that bit's row. Margins are
/// unchanged under a shift-invariant layout and both penalties can only
/// decrease.
fn shift_rows_to_zero(x: &mut [f64], k: usize) -> bool {
    let mut changed = false;
    for row in x.chunks_mut(k) {
        let m = row.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        if m > 0.0 && m.is_finite() {
            row.iter_mut().for_each(|v| *v -= m);
            // exact zero for the minimizing entries
            for v in row.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            changed = true;
        }
    }
    changed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimalSettings {
    pub nu: f64,
    pub penalty: Penalty,
    pub loss: LossKind,
    pub qn: QnOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    pub weights: WeightMatrix,
    pub objective: f64,
    pub iterations: usize,
    /// Largest dual-constraint excess `max(score - nu)` (l1) or
    /// `sum(score+) - nu` (linf) at the returned weights.
    pub violation: f64,
}

fn check_shapes(features: &BitFeatures, layout: &MarginLayout) -> Result<()> {
    if features.rows() != layout.rows.len() {
        return Err(Error::SizeMismatch {
            what: "margin rows",
            expected: layout.rows.len(),
            found: features.rows(),
        });
    }
    if let Some(&(p, n)) = layout
        .rows
        .iter()
        .find(|&&(p, n)| p >= layout.columns || n.is_some_and(|n| n >= layout.columns || n == p))
    {
        let _ = (p, n);
        return Err(Error::InvalidConfig("margin layout column out of range"));
    }
    Ok(())
}

fn margins_flat(x: &[f64], features: &BitFeatures, layout: &MarginLayout) -> Vec<f64> {
    let k = layout.columns;
    let mut rho = alloc::vec![0.0; layout.rows.len()];
    for (s, col) in features.columns.iter().enumerate() {
        let w = &x[s * k..(s + 1) * k];
        for ((r, &a), &(p, n)) in rho.iter_mut().zip(col).zip(&layout.rows) {
            if a != 0.0 {
                let diff = match n {
                    Some(n) => w[p] - w[n],
                    None => w[p],
                };
                *r += a * diff;
            }
        }
    }
    rho
}

/// Margin of every row under `w`.
pub fn margins(w: &WeightMatrix, features: &BitFeatures, layout: &MarginLayout) -> Result<Vec<f64>> {
    check_shapes(features, layout)?;
    if w.bits() != features.bits() || w.columns() != layout.columns {
        return Err(Error::SizeMismatch {
            what: "weight matrix",
            expected: features.bits() * layout.columns,
            found: w.as_slice().len(),
        });
    }
    Ok(margins_flat(w.as_slice(), features, layout))
}

/// Loss part of the objective and its gradient with respect to `x`.
fn loss_and_gradient(
    x: &[f64],
    grad: &mut [f64],
    features: &BitFeatures,
    layout: &MarginLayout,
    loss: &LossKind,
) -> f64 {
    let k = layout.columns;
    let rho = margins_flat(x, features, layout);
    let mut value = 0.0;
    let mut dl = Vec::with_capacity(rho.len());
    for &r in &rho {
        value += loss.value(r);
        dl.push(loss.derivative(r));
    }
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (s, col) in features.columns.iter().enumerate() {
        let g = &mut grad[s * k..(s + 1) * k];
        for ((&a, &d), &(p, n)) in col.iter().zip(&dl).zip(&layout.rows) {
            if a != 0.0 {
                let v = a * d;
                g[p] += v;
                if let Some(n) = n {
                    g[n] -= v;
                }
            }
        }
    }
    value
}

/// Dual-constraint scores of every generated column:
/// `score[s, c] = sum_i u_i a_{i,s} (delta(c, p_i) - delta(c, n_i))`.
pub fn column_scores(
    duals: &DualState,
    features: &BitFeatures,
    layout: &MarginLayout,
) -> Result<WeightMatrix> {
    check_shapes(features, layout)?;
    if duals.values.len() != features.rows() {
        return Err(Error::SizeMismatch {
            what: "dual variables",
            expected: features.rows(),
            found: duals.values.len(),
        });
    }
    let k = layout.columns;
    let mut out = alloc::vec![0.0; features.bits() * k];
    for (s, col) in features.columns.iter().enumerate() {
        let o = &mut out[s * k..(s + 1) * k];
        for ((&a, &u), &(p, n)) in col.iter().zip(&duals.values).zip(&layout.rows) {
            o[p] += u * a;
            if let Some(n) = n {
                o[n] -= u * a;
            }
        }
    }
    Ok(WeightMatrix::from_raw(features.bits(), k, out))
}

/// Primal objective `sum L(margin) + nu * penalty(W)`.
pub fn primal_objective(
    w: &WeightMatrix,
    features: &BitFeatures,
    layout: &MarginLayout,
    settings: &PrimalSettings,
) -> Result<f64> {
    let rho = margins(w, features, layout)?;
    let loss: f64 = rho.iter().map(|&r| settings.loss.value(r)).sum();
    Ok(loss + settings.nu * settings.penalty.raw_value(w.as_slice()))
}

/// Dual objective `-sum L*(-u)` (maximization form).
pub fn dual_objective(loss: &LossKind, duals: &DualState) -> Result<f64> {
    let mut total = 0.0;
    for &u in &duals.values {
        total -= loss.conjugate(-u)?;
    }
    Ok(total)
}

/// KKT duals `u_i = -L'(margin_i)`.
pub fn update_duals(
    w: &WeightMatrix,
    features: &BitFeatures,
    layout: &MarginLayout,
    loss: &LossKind,
    mode: Mode,
) -> DualState {
    let rho = margins_flat(w.as_slice(), features, layout);
    DualState {
        mode,
        values: rho.iter().map(|&r| loss.dual(r)).collect(),
    }
}

fn violation(scores: &[f64], penalty: Penalty, nu: f64) -> f64 {
    penalty.dual_norm_positive(scores) - nu
}

/// Solves for the weights of all generated bits jointly.
///
/// `warm` (same shape as the result) seeds the solver. With the l1 penalty
/// the problem is a smooth bound-constrained program. With the linf penalty
/// the weights are confined to a box `[0, M]` and `M` is found by bisection
/// on the optimality condition `sum(score+) = nu`.
pub fn solve_primal(
    features: &BitFeatures,
    layout: &MarginLayout,
    settings: &PrimalSettings,
    warm: Option<&WeightMatrix>,
) -> Result<PrimalSolution> {
    check_shapes(features, layout)?;
    let t = features.bits();
    let k = layout.columns;
    let n = t * k;
    let x0 = match warm {
        Some(w) if w.bits() == t && w.columns() == k => w.as_slice().to_vec(),
        Some(w) => {
            return Err(Error::SizeMismatch {
                what: "warm start",
                expected: n,
                found: w.as_slice().len(),
            })
        }
        None => alloc::vec![0.0; n],
    };
    match settings.penalty {
        Penalty::L1 => solve_l1(features, layout, settings, x0),
        Penalty::LInf => solve_linf(features, layout, settings, x0),
    }
}

fn finish(
    x: Vec<f64>,
    t: usize,
    k: usize,
    features: &BitFeatures,
    layout: &MarginLayout,
    settings: &PrimalSettings,
    iterations: usize,
) -> PrimalSolution {
    let weights = WeightMatrix::from_raw(t, k, x);
    let rho = margins_flat(weights.as_slice(), features, layout);
    let loss: f64 = rho.iter().map(|&r| settings.loss.value(r)).sum();
    let objective = loss + settings.nu * settings.penalty.raw_value(weights.as_slice());
    let duals = DualState {
        mode: Mode::Image,
        values: rho.iter().map(|&r| settings.loss.dual(r)).collect(),
    };
    let scores = column_scores(&duals, features, layout).map(|s| s.as_slice().to_vec());
    let violation = scores
        .map(|s| violation(&s, settings.penalty, settings.nu))
        .unwrap_or(f64::NAN);
    PrimalSolution {
        weights,
        objective,
        iterations,
        violation,
    }
}

fn solve_l1(
    features: &BitFeatures,
    layout: &MarginLayout,
    settings: &PrimalSettings,
    x0: Vec<f64>,
) -> Result<PrimalSolution> {
    let (t, k) = (features.bits(), layout.columns);
    let n = t * k;
    let lower = alloc::vec![0.0; n];
    let upper = alloc::vec![f64::INFINITY; n];
    let nu = settings.nu;
    let invariant = layout.shift_invariant() && k > 1;
    let out = qn::minimize_with(
        |x, g| {
            let v = loss_and_gradient(x, g, features, layout, &settings.loss);
            g.iter_mut().for_each(|gi| *gi += nu);
            v + nu * x.iter().sum::<f64>()
        },
        |x| invariant && shift_rows_to_zero(x, k),
        &x0,
        &lower,
        &upper,
        &settings.qn,
    );
    if !out.converged {
        return Err(non_convergence(out, t, k));
    }
    Ok(finish(out.x, t, k, features, layout, settings, out.iterations))
}

fn non_convergence(out: qn::QnOutcome, t: usize, k: usize) -> Error {
    Error::NonConvergence {
        iterations: out.iterations,
        objective: out.value,
        gradient_norm: out.projected_gradient,
        weights: Box::new(WeightMatrix::from_raw(t, k, out.x)),
    }
}

fn solve_linf(
    features: &BitFeatures,
    layout: &MarginLayout,
    settings: &PrimalSettings,
    x0: Vec<f64>,
) -> Result<PrimalSolution> {
    let (t, k) = (features.bits(), layout.columns);
    let n = t * k;
    if n == 0 {
        return Ok(finish(x0, t, k, features, layout, settings, 0));
    }
    let nu = settings.nu;
    // interior residuals add up in the linf dual norm
    let inner = QnOptions {
        tolerance: settings.qn.tolerance / n as f64,
        ..settings.qn
    };
    let lower = alloc::vec![0.0; n];
    let mut total_iterations = 0;

    // box solve with bound m; returns the weights and sum(score+) - nu
    let invariant = layout.shift_invariant() && k > 1;
    let mut box_solve = |m: f64, start: &[f64]| -> Result<(Vec<f64>, f64)> {
        let upper = alloc::vec![m; n];
        let out = qn::minimize_with(
            |x, g| loss_and_gradient(x, g, features, layout, &settings.loss),
            |x| invariant && shift_rows_to_zero(x, k),
            start,
            &lower,
            &upper,
            &inner,
        );
        total_iterations += out.iterations;
        if !out.converged {
            return Err(non_convergence(out, t, k));
        }
        let mut g = alloc::vec![0.0; n];
        loss_and_gradient(&out.x, &mut g, features, layout, &settings.loss);
        let excess = g.iter().map(|&gi| (-gi).max(0.0)).sum::<f64>() - nu;
        Ok((out.x, excess))
    };

    let zero = alloc::vec![0.0; n];
    let (_, excess0) = box_solve(0.0, &zero)?;
    if excess0 <= 0.0 {
        return Ok(finish(zero, t, k, features, layout, settings, total_iterations));
    }

    let mut lo = 0.0;
    let mut hi = x0.iter().fold(0.0f64, |m, &v| m.max(v));
    if hi <= 0.0 {
        hi = 1.0;
    }
    let mut hi_x;
    let mut start = x0.clone();
    loop {
        let (x, excess) = box_solve(hi, &start)?;
        if excess <= 0.0 {
            hi_x = x;
            break;
        }
        lo = hi;
        start = x;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::InvalidConfig("linf bound diverged; is nu too small?"));
        }
    }
    let mut lo_x = start;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi.max(1e-300) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (x, excess) = box_solve(mid, &lo_x)?;
        if excess <= 0.0 {
            hi = mid;
            hi_x = x;
        } else {
            lo = mid;
            lo_x = x;
        }
    }
    Ok(finish(hi_x, t, k, features, layout, settings, total_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::logistic_value;
    use alloc::vec;
    use core::f64::consts::LN_2;

    fn settings(nu: f64, penalty: Penalty) -> PrimalSettings {
        PrimalSettings {
            nu,
            penalty,
            loss: LossKind::Logistic,
            qn: QnOptions {
                tolerance: 1e-9,
                max_iterations: 2000,
                ..Default::default()
            },
        }
    }

    fn two_class_layout(rows: usize) -> MarginLayout {
        MarginLayout::new(
            2,
            (0..rows)
                .map(|i| if i % 2 == 0 { (0, Some(1)) } else { (1, Some(0)) })
                .collect(),
        )
    }

    #[test]
    fn no_columns_gives_ln2_per_row() {
        let f = BitFeatures::new(6);
        let sol = solve_primal(&f, &two_class_layout(6), &settings(1e-3, Penalty::L1), None).unwrap();
        assert!((sol.objective - 6.0 * LN_2).abs() < 1e-12);
        assert_eq!(sol.weights.bits(), 0);
    }

    #[test]
    fn heavy_regularization_zeroes_weights() {
        let f = BitFeatures::from_columns(4, vec![vec![2.0, 0.0, 2.0, -2.0], vec![2.0, 2.0, 0.0, 2.0]])
            .unwrap();
        for p in [Penalty::L1, Penalty::LInf] {
            let sol = solve_primal(&f, &two_class_layout(4), &settings(1e6, p), None).unwrap();
            assert!(sol.weights.as_slice().iter().all(|&w| w == 0.0));
            assert!((sol.objective - 4.0 * LN_2).abs() < 1e-12);
        }
    }

    #[test]
    fn patch_layout_single_column() {
        // one image with positive aggregated feature, one with negative
        let f = BitFeatures::from_columns(2, vec![vec![4.0, -2.0]]).unwrap();
        let layout = MarginLayout::new(1, vec![(0, None), (0, None)]);
        let s = settings(0.1, Penalty::L1);
        let sol = solve_primal(&f, &layout, &s, None).unwrap();
        // optimum of L(4w) + L(-2w) + 0.1 w, checked by a fine scan
        let obj = |w: f64| logistic_value(4.0 * w) + logistic_value(-2.0 * w) + 0.1 * w;
        let best = (0..200_000).map(|i| obj(i as f64 * 1e-5)).fold(f64::INFINITY, f64::min);
        assert!((sol.objective - best).abs() < 1e-8);
        assert!(sol.violation <= 1e-6);
    }

    #[test]
    fn shape_errors() {
        let f = BitFeatures::from_columns(3, vec![vec![2.0, 0.0, 2.0]]).unwrap();
        assert!(solve_primal(&f, &two_class_layout(4), &settings(1.0, Penalty::L1), None).is_err());
        let bad = MarginLayout::new(2, vec![(0, Some(0)); 3]);
        assert!(solve_primal(&f, &bad, &settings(1.0, Penalty::L1), None).is_err());
        assert!(BitFeatures::new(2).try_push(vec![1.0]).is_err());
    }

    #[test]
    fn iteration_cap_returns_last_iterate() {
        let f = BitFeatures::from_columns(4, vec![vec![2.0, 2.0, 2.0, 2.0], vec![2.0, 0.0, 2.0, -2.0]])
            .unwrap();
        let layout = MarginLayout::new(1, vec![(0, None); 4]);
        let mut s = settings(1e-8, Penalty::L1);
        s.qn.max_iterations = 1;
        s.qn.tolerance = 1e-14;
        match solve_primal(&f, &layout, &s, None) {
            Err(Error::NonConvergence { weights, iterations, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(weights.bits(), 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}

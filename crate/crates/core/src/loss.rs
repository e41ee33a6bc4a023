//! Margin losses, their Fenchel conjugates, and weight penalties.

use crate::trainer::WeightMatrix;
use crate::{Error, Result};

/// A convex, differentiable margin loss.
///
/// `conjugate` is the Fenchel conjugate `L*(u) = sup_p (u p - L(p))`. The
/// training dual evaluates it at `-u` where `u = -L'(p)` is the KKT dual.
pub trait Loss {
    fn name(&self) -> &'static str;
    fn value(&self, margin: f64) -> f64;
    fn derivative(&self, margin: f64) -> f64;
    fn conjugate(&self, u: f64) -> Result<f64>;

    /// KKT dual variable for a margin, `-L'(margin)`.
    fn dual(&self, margin: f64) -> f64 {
        -self.derivative(margin)
    }
}

/// `log(1 + exp(-p))`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Logistic;

impl Loss for Logistic {
    fn name(&self) -> &'static str {
        "logistic"
    }

    fn value(&self, margin: f64) -> f64 {
        logistic_value(margin)
    }

    fn derivative(&self, margin: f64) -> f64 {
        -dual_from_margin(margin)
    }

    fn conjugate(&self, u: f64) -> Result<f64> {
        logistic_conjugate(u)
    }

    fn dual(&self, margin: f64) -> f64 {
        dual_from_margin(margin)
    }
}

/// `log(1 + exp(-p))` without overflow for large `|p|`.
pub fn logistic_value(margin: f64) -> f64 {
    if margin >= 0.0 {
        libm::log1p(libm::exp(-margin))
    } else {
        -margin + libm::log1p(libm::exp(margin))
    }
}

/// `(-u) log(-u) + (1 + u) log(1 + u)` on `[-1, 0]`, with `0 log 0 = 0`.
pub fn logistic_conjugate(u: f64) -> Result<f64> {
    if !(-1.0..=0.0).contains(&u) {
        return Err(Error::Domain("logistic conjugate defined on [-1, 0]"));
    }
    Ok(xlogx(-u) + xlogx(1.0 + u))
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * libm::log(x)
    }
}

/// `exp(-p) / (1 + exp(-p))`, the logistic KKT dual; lies in `(0, 1)` for
/// finite margins that do not underflow.
pub fn dual_from_margin(margin: f64) -> f64 {
    if margin >= 0.0 {
        let e = libm::exp(-margin);
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + libm::exp(margin))
    }
}

/// Weight penalty applied to the nonnegative weight matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Penalty {
    /// Sum of all entries.
    #[default]
    L1,
    /// Largest entry.
    LInf,
}

impl Penalty {
    pub fn name(self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::LInf => "linf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "l1" | "ell1" => Some(Penalty::L1),
            "linf" | "ellinf" => Some(Penalty::LInf),
            _ => None,
        }
    }

    /// Dual norm of the positive part of `scores`; a generated column set is
    /// dual feasible when this is at most `nu`.
    pub fn dual_norm_positive(self, scores: &[f64]) -> f64 {
        match self {
            Penalty::L1 => scores.iter().fold(0.0, |m, &v| m.max(v)),
            Penalty::LInf => scores.iter().map(|&v| v.max(0.0)).sum(),
        }
    }

    pub(crate) fn raw_value(self, entries: &[f64]) -> f64 {
        match self {
            Penalty::L1 => entries.iter().sum(),
            Penalty::LInf => entries.iter().fold(0.0, |m: f64, &v| m.max(v)),
        }
    }
}

/// Penalty value of a nonnegative weight matrix.
pub fn reg_value(penalty: Penalty, w: &WeightMatrix) -> Result<f64> {
    if w.as_slice().iter().any(|&v| v < 0.0 || v.is_nan()) {
        return Err(Error::Domain("weights must be nonnegative"));
    }
    Ok(penalty.raw_value(w.as_slice()))
}

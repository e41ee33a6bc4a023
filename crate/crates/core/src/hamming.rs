//! Weighted Hamming distance, 8-bit lookup tables, and exact top-k scan.
//!
//! For codes over `{-1, +1}` every differing position contributes
//! `|(+1) - (-1)| * w_s = 2 w_s`.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::data::Label;
use crate::hashfn::BinaryCode;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CodeEntry {
    pub id: u64,
    pub label: Label,
    pub code: BinaryCode,
}

/// Stored codes of uniform length with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CodeDatabase {
    bits: usize,
    entries: Vec<CodeEntry>,
}

impl CodeDatabase {
    pub fn new(bits: usize) -> Self {
        CodeDatabase {
            bits,
            entries: Vec::new(),
        }
    }

    pub fn from_entries(bits: usize, entries: Vec<CodeEntry>) -> Result<Self> {
        let mut db = CodeDatabase::new(bits);
        db.entries.reserve(entries.len());
        for e in entries {
            db.check_len(&e.code)?;
            db.entries.push(e);
        }
        let mut ids: Vec<u64> = db.entries.iter().map(|e| e.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate id in code database"));
        }
        Ok(db)
    }

    /// Builds a database whose ids are the row positions.
    pub fn from_codes(bits: usize, codes: Vec<BinaryCode>, labels: &[Label]) -> Result<Self> {
        if codes.len() != labels.len() {
            return Err(Error::SizeMismatch {
                what: "code labels",
                expected: codes.len(),
                found: labels.len(),
            });
        }
        let entries = codes
            .into_iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (code, &label))| CodeEntry {
                id: i as u64,
                label,
                code,
            })
            .collect();
        Self::from_entries(bits, entries)
    }

    fn check_len(&self, code: &BinaryCode) -> Result<()> {
        if code.len() != self.bits {
            return Err(Error::DimensionMismatch {
                expected: self.bits,
                found: code.len(),
            });
        }
        Ok(())
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn entries(&self) -> &[CodeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct labels in ascending order.
    pub fn labels(&self) -> Vec<Label> {
        let mut l: Vec<Label> = self.entries.iter().map(|e| e.label).collect();
        l.sort_unstable();
        l.dedup();
        l
    }
}

/// Per-bit weights with optional per-byte lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMetric {
    weights: Vec<f64>,
    tables: Option<Vec<[f64; 256]>>,
}

impl WeightedMetric {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("metric weights must be finite and nonnegative"));
        }
        Ok(WeightedMetric {
            weights,
            tables: None,
        })
    }

    pub fn uniform(bits: usize) -> Self {
        WeightedMetric {
            weights: alloc::vec![1.0; bits],
            tables: None,
        }
    }

    pub fn bits(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn tables(&self) -> Option<&[[f64; 256]]> {
        self.tables.as_deref()
    }

    /// Adds one 256-entry table per 8-bit block mapping an XOR byte to its
    /// partial distance. A trailing partial block behaves as if padded with
    /// zero weights.
    pub fn build_tables(mut self) -> Self {
        let blocks = self.weights.len().div_ceil(8);
        let mut tables = Vec::with_capacity(blocks);
        for j in 0..blocks {
            let mut block = [0.0f64; 8];
            for (i, w) in block.iter_mut().enumerate() {
                *w = self.weights.get(8 * j + i).copied().unwrap_or(0.0);
            }
            let mut table = [0.0f64; 256];
            for (byte, entry) in table.iter_mut().enumerate() {
                let mut sum = 0.0;
                for (i, &w) in block.iter().enumerate() {
                    if byte >> i & 1 == 1 {
                        sum += 2.0 * w;
                    }
                }
                *entry = sum;
            }
            tables.push(table);
        }
        self.tables = Some(tables);
        self
    }

    fn check(&self, a: &BinaryCode, b: &BinaryCode) -> Result<()> {
        for c in [a, b] {
            if c.len() != self.weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.weights.len(),
                    found: c.len(),
                });
            }
        }
        Ok(())
    }

    /// Bit-by-bit sum of `2 w_s` over differing positions.
    pub fn distance_naive(&self, a: &BinaryCode, b: &BinaryCode) -> Result<f64> {
        self.check(a, b)?;
        Ok(self.naive_unchecked(a, b))
    }

    fn naive_unchecked(&self, a: &BinaryCode, b: &BinaryCode) -> f64 {
        let mut sum = 0.0;
        for (wi, (x, y)) in a.words().iter().zip(b.words()).enumerate() {
            let mut diff = x ^ y;
            while diff != 0 {
                let bit = diff.trailing_zeros() as usize;
                sum += 2.0 * self.weights[wi * 64 + bit];
                diff &= diff - 1;
            }
        }
        sum
    }

    fn table_unchecked(tables: &[[f64; 256]], a: &BinaryCode, b: &BinaryCode) -> f64 {
        let mut sum = 0.0;
        for (j, table) in tables.iter().enumerate() {
            sum += table[(a.byte(j) ^ b.byte(j)) as usize];
        }
        sum
    }

    /// Weighted Hamming distance, through the tables when built.
    pub fn distance(&self, a: &BinaryCode, b: &BinaryCode) -> Result<f64> {
        self.check(a, b)?;
        Ok(self.distance_unchecked(a, b))
    }

    #[inline]
    pub(crate) fn distance_unchecked(&self, a: &BinaryCode, b: &BinaryCode) -> f64 {
        match &self.tables {
            Some(t) => Self::table_unchecked(t, a, b),
            None => self.naive_unchecked(a, b),
        }
    }
}

/// `sum_s w_s |a_s - b_s|`.
pub fn weighted_hamming(metric: &WeightedMetric, a: &BinaryCode, b: &BinaryCode) -> Result<f64> {
    metric.distance(a, b)
}

/// Distance used for a stored entry: one shared metric, or the metric of
/// the entry's class (`metrics[label - 1]`).
#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    Shared(&'a WeightedMetric),
    PerClass(&'a [WeightedMetric]),
}

impl<'a> Metric<'a> {
    pub fn for_label(&self, label: Label) -> Result<&'a WeightedMetric> {
        match *self {
            Metric::Shared(m) => Ok(m),
            Metric::PerClass(ms) => {
                let idx = (label as usize).wrapping_sub(1);
                ms.get(idx).ok_or(Error::InvalidLabel {
                    index: 0,
                    label,
                    classes: ms.len(),
                })
            }
        }
    }

    fn bits(&self) -> Option<usize> {
        match *self {
            Metric::Shared(m) => Some(m.bits()),
            Metric::PerClass(ms) => ms.first().map(|m| m.bits()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    /// `(id, distance)` by increasing distance, ties by smaller id.
    pub hits: Vec<(u64, f64)>,
    /// Set when fewer than `k` entries were available.
    pub truncated: bool,
}

pub(crate) fn by_distance_then_id(a: &(u64, f64), b: &(u64, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// Exact `k` nearest stored codes by full scan.
pub fn top_k(db: &CodeDatabase, metric: Metric<'_>, query: &BinaryCode, k: usize) -> Result<TopK> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1"));
    }
    if query.len() != db.bits() {
        return Err(Error::DimensionMismatch {
            expected: db.bits(),
            found: query.len(),
        });
    }
    if let Some(b) = metric.bits() {
        if b != db.bits() {
            return Err(Error::DimensionMismatch {
                expected: db.bits(),
                found: b,
            });
        }
    }
    let mut scored = Vec::with_capacity(db.len());
    for e in db.entries() {
        let m = metric.for_label(e.label)?;
        scored.push((e.id, m.distance_unchecked(query, &e.code)));
    }
    let truncated = k > scored.len();
    if k < scored.len() {
        scored.select_nth_unstable_by(k, by_distance_then_id);
        scored.truncate(k);
    }
    scored.sort_unstable_by(by_distance_then_id);
    Ok(TopK {
        hits: scored,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn code(signs: &[i8]) -> BinaryCode {
        BinaryCode::from_signs(signs)
    }

    #[test]
    fn distance_examples() {
        let m = WeightedMetric::new(vec![0.5, 0.2, 0.3]).unwrap();
        let a = code(&[1, -1, 1]);
        let b = code(&[1, 1, -1]);
        assert_eq!(weighted_hamming(&m, &a, &a).unwrap(), 0.0);
        assert!((weighted_hamming(&m, &a, &b).unwrap() - 1.0).abs() < 1e-15);
        let u = WeightedMetric::uniform(3);
        assert_eq!(weighted_hamming(&u, &a, &b).unwrap(), 2.0 * a.hamming(&b) as f64);
        assert!(weighted_hamming(&m, &a, &code(&[1, 1])).is_err());
    }

    #[test]
    fn table_examples() {
        let zero = WeightedMetric::new(vec![0.0; 8]).unwrap().build_tables();
        assert!(zero.tables().unwrap()[0].iter().all(|&v| v == 0.0));
        let mut w = vec![0.0; 8];
        w[0] = 1.0;
        let one = WeightedMetric::new(w).unwrap().build_tables();
        for (byte, &v) in one.tables().unwrap()[0].iter().enumerate() {
            assert_eq!(v, if byte & 1 == 1 { 2.0 } else { 0.0 });
        }
        let partial = WeightedMetric::new(vec![1.0; 11]).unwrap().build_tables();
        assert_eq!(partial.tables().unwrap().len(), 2);
        assert_eq!(partial.tables().unwrap()[1][255], 6.0);
    }

    #[test]
    fn top_k_basics() {
        let codes = vec![code(&[1, 1]), code(&[-1, 1]), code(&[-1, -1]), code(&[1, -1])];
        let db = CodeDatabase::from_codes(2, codes, &[1, 1, 2, 2]).unwrap();
        let m = WeightedMetric::new(vec![1.0, 3.0]).unwrap();
        let r = top_k(&db, Metric::Shared(&m), &code(&[-1, -1]), 1).unwrap();
        assert_eq!(r.hits, vec![(2, 0.0)]);
        let all = top_k(&db, Metric::Shared(&m), &code(&[1, 1]), 4).unwrap();
        let ids: Vec<u64> = all.hits.iter().map(|h| h.0).collect();
        assert_eq!(ids, vec![0, 1, 3, 2]);
        assert!(!all.truncated);
        let over = top_k(&db, Metric::Shared(&m), &code(&[1, 1]), 9).unwrap();
        assert!(over.truncated);
        assert_eq!(over.hits.len(), 4);
        assert!(top_k(&db, Metric::Shared(&m), &code(&[1, 1]), 0).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let e = CodeEntry {
            id: 3,
            label: 1,
            code: code(&[1]),
        };
        assert!(CodeDatabase::from_entries(1, vec![e.clone(), e]).is_err());
    }

    fn arb_code(bits: usize) -> impl Strategy<Value = BinaryCode> {
        prop::collection::vec(any::<bool>(), bits).prop_map(|b| BinaryCode::from_bools(&b))
    }

    proptest! {
        #[test]
        fn pseudometric(
            w in prop::collection::vec(0.0f64..5.0, 20),
            a in arb_code(20), b in arb_code(20), c in arb_code(20),
        ) {
            let m = WeightedMetric::new(w).unwrap();
            let ab = m.distance(&a, &b).unwrap();
            prop_assert_eq!(ab, m.distance(&b, &a).unwrap());
            prop_assert_eq!(m.distance(&a, &a).unwrap(), 0.0);
            let ac = m.distance(&a, &c).unwrap();
            let cb = m.distance(&c, &b).unwrap();
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn scaling_weights_scales_distances(
            w in prop::collection::vec(0.0f64..5.0, 13),
            a in arb_code(13), b in arb_code(13), c in 0.1f64..10.0,
        ) {
            let m = WeightedMetric::new(w.clone()).unwrap();
            let s = WeightedMetric::new(w.iter().map(|v| v * c).collect()).unwrap();
            let d = m.distance(&a, &b).unwrap();
            prop_assert!((s.distance(&a, &b).unwrap() - c * d).abs() <= 1e-12 * (1.0 + c * d));
        }
    }
}

//! Classifiers on binary codes, plus the raw-feature NBNN reference.

use alloc::vec::Vec;

use crate::data::{Label, PatchSet};
use crate::hamming::{top_k, CodeDatabase, Metric, WeightedMetric};
use crate::hashfn::BinaryCode;
use crate::matrix::sq_dist;
use crate::trainer::WeightMatrix;
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    /// Summed distance of the winning class (NBNN, image-to-class) or the
    /// winning vote fraction (kNN).
    pub score: f64,
}

/// Picks the smallest score, ties to the smaller label.
fn argmin(scores: impl IntoIterator<Item = (Label, f64)>) -> Option<Prediction> {
    let mut best: Option<Prediction> = None;
    for (label, score) in scores {
        let better = match best {
            None => true,
            Some(b) => score < b.score || (score == b.score && label < b.label),
        };
        if better {
            best = Some(Prediction { label, score });
        }
    }
    best
}

/// Groups database entries by label, labels ascending.
fn codes_by_class(db: &CodeDatabase) -> Vec<(Label, Vec<&BinaryCode>)> {
    let labels = db.labels();
    let mut groups: Vec<(Label, Vec<&BinaryCode>)> =
        labels.iter().map(|&l| (l, Vec::new())).collect();
    for e in db.entries() {
        let idx = labels.binary_search(&e.label).expect("label listed");
        groups[idx].1.push(&e.code);
    }
    groups
}

/// Patch-based NBNN on codes: for each class, sum over query patches of the
/// smallest weighted distance to that class's stored patch codes; the
/// smallest total wins.
pub fn nbnn_classify(
    db: &CodeDatabase,
    metric: &WeightedMetric,
    query_patches: &[BinaryCode],
) -> Result<Prediction> {
    if query_patches.is_empty() {
        return Err(Error::Empty("query patch list"));
    }
    if db.is_empty() {
        return Err(Error::Empty("code database"));
    }
    for q in query_patches {
        if q.len() != db.bits() || metric.bits() != db.bits() {
            return Err(Error::DimensionMismatch {
                expected: db.bits(),
                found: q.len(),
            });
        }
    }
    let groups = codes_by_class(db);
    let scores = groups.iter().map(|(label, codes)| {
        let total: f64 = query_patches
            .iter()
            .map(|q| {
                codes
                    .iter()
                    .map(|c| metric.distance_unchecked(q, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        (*label, total)
    });
    Ok(argmin(scores).expect("nonempty database"))
}

/// One metric per weight column, with lookup tables.
pub fn class_metrics(w: &WeightMatrix) -> Vec<WeightedMetric> {
    (0..w.columns())
        .map(|c| {
            WeightedMetric::new(w.column(c))
                .expect("weight matrix entries are nonnegative")
                .build_tables()
        })
        .collect()
}

/// Image-to-class rule: `argmin_r min_{j in class r} Delta_r(query, code_j)`
/// where `Delta_r` uses column `r` of `w`.
pub fn i2c_image_classify(
    db: &CodeDatabase,
    w: &WeightMatrix,
    query: &BinaryCode,
) -> Result<Prediction> {
    let metrics = class_metrics(w);
    i2c_with_metrics(db, &metrics, query)
}

/// [`i2c_image_classify`] with prebuilt per-class metrics.
pub fn i2c_with_metrics(
    db: &CodeDatabase,
    metrics: &[WeightedMetric],
    query: &BinaryCode,
) -> Result<Prediction> {
    if query.len() != db.bits() {
        return Err(Error::DimensionMismatch {
            expected: db.bits(),
            found: query.len(),
        });
    }
    let k = metrics.len();
    let mut best = alloc::vec![f64::INFINITY; k];
    for e in db.entries() {
        let c = e.label as usize;
        if c == 0 || c > k {
            return Err(Error::InvalidLabel {
                index: e.id as usize,
                label: e.label,
                classes: k,
            });
        }
        let d = metrics[c - 1].distance(query, &e.code)?;
        if d < best[c - 1] {
            best[c - 1] = d;
        }
    }
    if let Some(missing) = best.iter().position(|d| d.is_infinite()) {
        return Err(Error::EmptyClass(missing as Label + 1));
    }
    argmin(best.into_iter().enumerate().map(|(c, d)| (c as Label + 1, d)))
        .ok_or(Error::Empty("weight matrix"))
}

/// Majority vote among the `k` nearest codes. Vote ties go to the class
/// with the smaller summed distance, then the smaller label.
pub fn knn_classify(
    db: &CodeDatabase,
    metric: Metric<'_>,
    query: &BinaryCode,
    k: usize,
) -> Result<Prediction> {
    if db.is_empty() {
        return Err(Error::Empty("code database"));
    }
    let hits = top_k(db, metric, query, k)?.hits;
    let label_of = |id: u64| -> Label {
        db.entries()
            .iter()
            .find(|e| e.id == id)
            .map(|e| e.label)
            .expect("id from database")
    };
    // (label, votes, summed distance)
    let mut tally: Vec<(Label, usize, f64)> = Vec::new();
    for &(id, d) in &hits {
        let l = label_of(id);
        match tally.iter_mut().find(|t| t.0 == l) {
            Some(t) => {
                t.1 += 1;
                t.2 += d;
            }
            None => tally.push((l, 1, d)),
        }
    }
    tally.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.2.total_cmp(&b.2))
            .then(a.0.cmp(&b.0))
    });
    let (label, votes, _) = tally[0];
    Ok(Prediction {
        label,
        score: votes as f64 / hits.len() as f64,
    })
}

/// Exact NBNN in the original feature space:
/// `argmin_r sum_j ||q_j - NN_r(q_j)||^2`.
pub fn nbnn_reference_classify(patches: &PatchSet, query: &Matrix) -> Result<Prediction> {
    if query.rows() == 0 {
        return Err(Error::Empty("query patch list"));
    }
    if query.cols() != patches.dim() {
        return Err(Error::DimensionMismatch {
            expected: patches.dim(),
            found: query.cols(),
        });
    }
    let k = patches.classes();
    let labels = patches.patch_labels();
    let mut totals = alloc::vec![0.0; k];
    let mut nearest = alloc::vec![f64::INFINITY; k];
    for q in query.iter_rows() {
        nearest.iter_mut().for_each(|v| *v = f64::INFINITY);
        for (p, row) in patches.patches().iter_rows().enumerate() {
            let c = labels[p] as usize - 1;
            let d = sq_dist(q, row);
            if d < nearest[c] {
                nearest[c] = d;
            }
        }
        if let Some(c) = nearest.iter().position(|d| d.is_infinite()) {
            return Err(Error::EmptyClass(c as Label + 1));
        }
        for (t, n) in totals.iter_mut().zip(&nearest) {
            *t += n;
        }
    }
    Ok(argmin(totals.into_iter().enumerate().map(|(c, d)| (c as Label + 1, d))).expect("k >= 1"))
}

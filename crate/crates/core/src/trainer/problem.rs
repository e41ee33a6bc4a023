use alloc::vec::Vec;

use crate::data::{Dataset, Label, Mode, PatchSet, Triplet, TripletSet};
use crate::hashfn::{sign, HashFunction};
use crate::{Error, Matrix, Result};

use super::primal::MarginLayout;

/// Dual variables: one per triple in image mode, one per image in patch
/// mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub mode: Mode,
    pub values: Vec<f64>,
}

impl DualState {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Points, labels and mined triples viewed as one training problem.
///
/// In image mode each triple is its own margin row and the dual weight of
/// a triple for column `r` is `u (delta(r, y) - delta(r, miss_class))`.
/// In patch mode the rows are images, a triple contributes to the row of
/// its anchor's owner, and there is a single weight column.
#[derive(Debug, Clone)]
pub struct TripletProblem<'a> {
    points: &'a Matrix,
    labels: Vec<Label>,
    triples: &'a [Triplet],
    mode: Mode,
    classes: usize,
    /// Patch mode: owning image per point.
    owner: Option<&'a [usize]>,
    images: usize,
}

impl<'a> TripletProblem<'a> {
    pub fn image(ds: &'a Dataset, ts: &'a TripletSet) -> Result<Self> {
        if ts.mode() != Mode::Image {
            return Err(Error::InvalidConfig("image training needs image-mode triplets"));
        }
        let p = TripletProblem {
            points: ds.features(),
            labels: ds.labels().to_vec(),
            triples: ts.triples(),
            mode: Mode::Image,
            classes: ds.classes(),
            owner: None,
            images: ds.len(),
        };
        p.check()?;
        Ok(p)
    }

    pub fn patch(ps: &'a PatchSet, ts: &'a TripletSet) -> Result<Self> {
        if ts.mode() != Mode::Patch {
            return Err(Error::InvalidConfig("patch training needs patch-mode triplets"));
        }
        let p = TripletProblem {
            points: ps.patches(),
            labels: ps.patch_labels(),
            triples: ts.triples(),
            mode: Mode::Patch,
            classes: ps.classes(),
            owner: Some(ps.owner()),
            images: ps.images(),
        };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        TripletSet::new(self.triples.to_vec(), self.mode, &self.labels).map(|_| ())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn points(&self) -> &'a Matrix {
        self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn triples(&self) -> &'a [Triplet] {
        self.triples
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Columns of the weight matrix: `k` in image mode, 1 in patch mode.
    pub fn weight_columns(&self) -> usize {
        match self.mode {
            Mode::Image => self.classes,
            Mode::Patch => 1,
        }
    }

    /// Number of margin rows (and dual variables).
    pub fn rows(&self) -> usize {
        match self.mode {
            Mode::Image => self.triples.len(),
            Mode::Patch => self.images,
        }
    }

    /// Row a triple contributes to.
    #[inline]
    pub fn row_of(&self, e: usize) -> usize {
        match self.owner {
            None => e,
            Some(owner) => owner[self.triples[e].anchor],
        }
    }

    /// Uniform start: `1 / (|S| k)` per triple, or `1 / m` per image.
    pub fn initial_duals(&self) -> DualState {
        let rows = self.rows();
        let value = match self.mode {
            Mode::Image => 1.0 / (rows.max(1) as f64 * self.classes as f64),
            Mode::Patch => 1.0 / rows.max(1) as f64,
        };
        DualState {
            mode: self.mode,
            values: alloc::vec![value; rows],
        }
    }

    pub fn layout(&self) -> MarginLayout {
        match self.mode {
            Mode::Image => MarginLayout::new(
                self.classes,
                self.triples
                    .iter()
                    .map(|t| {
                        (
                            self.labels[t.anchor] as usize - 1,
                            Some(t.miss_class as usize - 1),
                        )
                    })
                    .collect(),
            ),
            Mode::Patch => MarginLayout::new(1, alloc::vec![(0, None); self.images]),
        }
    }

    pub(crate) fn check_duals(&self, duals: &DualState) -> Result<()> {
        if duals.values.len() != self.rows() || duals.mode != self.mode {
            return Err(Error::SizeMismatch {
                what: "dual variables",
                expected: self.rows(),
                found: duals.values.len(),
            });
        }
        Ok(())
    }

    /// Number of classes the weak learner searches over.
    pub fn search_classes(&self) -> usize {
        self.weight_columns()
    }

    /// Per-triple weights `omega` for column `r` (1-based).
    pub fn omega(&self, duals: &DualState, r: Label) -> Result<Vec<f64>> {
        self.check_duals(duals)?;
        if r == 0 || r as usize > self.search_classes() {
            return Err(Error::InvalidLabel {
                index: 0,
                label: r,
                classes: self.search_classes(),
            });
        }
        Ok(self
            .triples
            .iter()
            .enumerate()
            .map(|(e, t)| match self.mode {
                Mode::Image => {
                    let u = duals.values[e];
                    let y = self.labels[t.anchor];
                    if y == r {
                        u
                    } else if t.miss_class == r {
                        -u
                    } else {
                        0.0
                    }
                }
                Mode::Patch => duals.values[self.row_of(e)],
            })
            .collect())
    }

    /// Feature column `a` of a new bit, one entry per margin row.
    pub fn bit_column(&self, h: &HashFunction) -> Result<Vec<f64>> {
        if h.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: h.dim(),
            });
        }
        let codes: Vec<i8> = self.points.iter_rows().map(|x| sign(h.response(x))).collect();
        let mut col = alloc::vec![0.0; self.rows()];
        for (e, t) in self.triples.iter().enumerate() {
            col[self.row_of(e)] += triple_feature(&codes, t);
        }
        Ok(col)
    }
}

/// `|h(anchor) - h(miss)| - |h(anchor) - h(hit)|` from precomputed signs.
#[inline]
pub(crate) fn triple_feature(codes: &[i8], t: &Triplet) -> f64 {
    let x = codes[t.anchor];
    ((x - codes[t.miss]).abs() - (x - codes[t.hit]).abs()) as f64
}

//! Datasets, patch collections and triplet mining.
//!
//! Mining uses Euclidean distance in the original feature space and is done
//! once before training. Distance ties are broken by the lower sample index.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::matrix::sq_dist;
use crate::{Error, Matrix, Result};

/// Class label, 1-based.
pub type Label = u32;

/// Feature rows with class labels in `1..=k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<Label>,
    classes: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<Label>, classes: usize) -> Result<Self> {
        if features.cols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if labels.len() != features.rows() {
            return Err(Error::SizeMismatch {
                what: "labels",
                expected: features.rows(),
                found: labels.len(),
            });
        }
        if let Some((row, col)) = features.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        check_labels(&labels, classes)?;
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    /// Like [`Dataset::new`] with `k` taken as the largest label.
    pub fn with_inferred_classes(features: Matrix, labels: Vec<Label>) -> Result<Self> {
        let k = labels.iter().copied().max().unwrap_or(0) as usize;
        Self::new(features, labels, k)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        class_sizes(&self.labels, self.classes)
    }
}

fn check_labels(labels: &[Label], classes: usize) -> Result<()> {
    if classes == 0 {
        return Err(Error::Empty("class set"));
    }
    for (index, &label) in labels.iter().enumerate() {
        if label == 0 || label as usize > classes {
            return Err(Error::InvalidLabel {
                index,
                label,
                classes,
            });
        }
    }
    let sizes = class_sizes(labels, classes);
    if let Some(c) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c as Label + 1));
    }
    Ok(())
}

fn class_sizes(labels: &[Label], classes: usize) -> Vec<usize> {
    let mut sizes = alloc::vec![0usize; classes];
    for &l in labels {
        sizes[l as usize - 1] += 1;
    }
    sizes
}

/// Local descriptors grouped by owning image.
///
/// Patches are stored as rows of one matrix; `owner[p]` is the image a patch
/// belongs to and the patch inherits that image's label.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    patches: Matrix,
    owner: Vec<usize>,
    image_labels: Vec<Label>,
    classes: usize,
}

impl PatchSet {
    pub fn new(
        patches: Matrix,
        owner: Vec<usize>,
        image_labels: Vec<Label>,
        classes: usize,
    ) -> Result<Self> {
        if patches.cols() == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        if owner.len() != patches.rows() {
            return Err(Error::SizeMismatch {
                what: "patch owners",
                expected: patches.rows(),
                found: owner.len(),
            });
        }
        if let Some((row, col)) = patches.find_non_finite() {
            return Err(Error::NonFinite { row, col });
        }
        check_labels(&image_labels, classes)?;
        if let Some(&bad) = owner.iter().find(|&&o| o >= image_labels.len()) {
            return Err(Error::SizeMismatch {
                what: "patch owner index",
                expected: image_labels.len(),
                found: bad,
            });
        }
        Ok(PatchSet {
            patches,
            owner,
            image_labels,
            classes,
        })
    }

    pub fn patches(&self) -> &Matrix {
        &self.patches
    }

    pub fn owner(&self) -> &[usize] {
        &self.owner
    }

    pub fn image_labels(&self) -> &[Label] {
        &self.image_labels
    }

    pub fn images(&self) -> usize {
        self.image_labels.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.patches.cols()
    }

    pub fn len(&self) -> usize {
        self.owner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.owner.is_empty()
    }

    pub fn patch_label(&self, p: usize) -> Label {
        self.image_labels[self.owner[p]]
    }

    /// Labels of every patch, in patch order.
    pub fn patch_labels(&self) -> Vec<Label> {
        self.owner.iter().map(|&o| self.image_labels[o]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Image,
    Patch,
}

/// `(anchor, hit, miss)` sample indices plus the miss class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub anchor: usize,
    pub hit: usize,
    pub miss: usize,
    pub miss_class: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    triples: Vec<Triplet>,
    mode: Mode,
}

impl TripletSet {
    /// Validates triples against the labels of the indexed samples (image
    /// labels in image mode, patch labels in patch mode).
    pub fn new(triples: Vec<Triplet>, mode: Mode, labels: &[Label]) -> Result<Self> {
        let n = labels.len();
        for (index, t) in triples.iter().enumerate() {
            if t.anchor >= n || t.hit >= n || t.miss >= n {
                return Err(Error::InvalidTriplet {
                    index,
                    reason: "sample index out of range",
                });
            }
            if t.anchor == t.hit {
                return Err(Error::InvalidTriplet {
                    index,
                    reason: "anchor equals hit",
                });
            }
            if labels[t.anchor] != labels[t.hit] {
                return Err(Error::InvalidTriplet {
                    index,
                    reason: "hit has a different class",
                });
            }
            if labels[t.miss] != t.miss_class || t.miss_class == labels[t.anchor] {
                return Err(Error::InvalidTriplet {
                    index,
                    reason: "miss class inconsistent",
                });
            }
        }
        let mut sorted = triples.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidTriplet {
                index: 0,
                reason: "duplicate triple",
            });
        }
        Ok(TripletSet { triples, mode })
    }

    pub fn triples(&self) -> &[Triplet] {
        &self.triples
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Copy with hit and miss exchanged in every triple. The result does not
    /// satisfy the label invariants and is only meant for analysis.
    pub fn swapped_unchecked(&self) -> Vec<Triplet> {
        self.triples
            .iter()
            .map(|t| Triplet {
                anchor: t.anchor,
                hit: t.miss,
                miss: t.hit,
                miss_class: t.miss_class,
            })
            .collect()
    }

    pub(crate) fn from_raw(triples: Vec<Triplet>, mode: Mode) -> Self {
        TripletSet { triples, mode }
    }
}

fn by_distance(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

/// Indices of the `count` nearest members of `candidates` to `query`,
/// ordered by (distance, index).
fn nearest(
    points: &Matrix,
    query: usize,
    candidates: &[usize],
    count: usize,
) -> Vec<usize> {
    let q = points.row(query);
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != query)
        .map(|&c| (sq_dist(q, points.row(c)), c))
        .collect();
    if count < scored.len() {
        scored.select_nth_unstable_by(count, by_distance);
        scored.truncate(count);
    }
    scored.sort_unstable_by(by_distance);
    scored.into_iter().map(|(_, c)| c).collect()
}

fn members_by_class(labels: &[Label], classes: usize) -> Vec<Vec<usize>> {
    let mut members = alloc::vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l as usize - 1].push(i);
    }
    members
}

/// Mines image-mode triplets: for every anchor, its `hits_per_anchor`
/// nearest same-class samples crossed with the `misses_per_class` nearest
/// samples of every other class.
///
/// Triples come out sorted by (anchor, miss class, hit rank, miss rank).
pub fn mine_triplets_image(
    ds: &Dataset,
    hits_per_anchor: usize,
    misses_per_class: usize,
) -> Result<TripletSet> {
    if hits_per_anchor == 0 {
        return Err(Error::InvalidConfig("hits_per_anchor must be at least 1"));
    }
    if misses_per_class == 0 {
        return Err(Error::InvalidConfig("misses_per_class must be at least 1"));
    }
    let k = ds.classes();
    let members = members_by_class(ds.labels(), k);
    for (c, m) in members.iter().enumerate() {
        if m.len() <= hits_per_anchor {
            return Err(Error::InsufficientClassPopulation {
                class: c as Label + 1,
                have: m.len(),
                need: hits_per_anchor + 1,
            });
        }
        if k > 1 && m.len() < misses_per_class {
            return Err(Error::InsufficientClassPopulation {
                class: c as Label + 1,
                have: m.len(),
                need: misses_per_class,
            });
        }
    }

    let x = ds.features();
    let mut triples =
        Vec::with_capacity(ds.len() * (k - 1) * hits_per_anchor * misses_per_class);
    for anchor in 0..ds.len() {
        let y = ds.labels()[anchor];
        let hits = nearest(x, anchor, &members[y as usize - 1], hits_per_anchor);
        for r in 1..=k as Label {
            if r == y {
                continue;
            }
            let misses = nearest(x, anchor, &members[r as usize - 1], misses_per_class);
            for &hit in &hits {
                for &miss in &misses {
                    triples.push(Triplet {
                        anchor,
                        hit,
                        miss,
                        miss_class: r,
                    });
                }
            }
        }
    }
    Ok(TripletSet::from_raw(triples, Mode::Image))
}

/// Mines one `(patch, nearest same-class patch, nearest other-class patch)`
/// triple per patch. The miss is searched over the union of all other
/// classes.
pub fn mine_neighbors_patch(ps: &PatchSet) -> Result<TripletSet> {
    let labels = ps.patch_labels();
    let members = members_by_class(&labels, ps.classes());
    for (c, m) in members.iter().enumerate() {
        if m.len() < 2 {
            return Err(Error::InsufficientClassPopulation {
                class: c as Label + 1,
                have: m.len(),
                need: 2,
            });
        }
    }
    if ps.classes() < 2 {
        return Err(Error::InsufficientClassPopulation {
            class: 2,
            have: 0,
            need: 2,
        });
    }
    let x = ps.patches();
    let mut triples = Vec::with_capacity(ps.len());
    let mut others = Vec::with_capacity(ps.len());
    for p in 0..ps.len() {
        let y = labels[p];
        let hit = nearest(x, p, &members[y as usize - 1], 1)[0];
        others.clear();
        others.extend((0..ps.len()).filter(|&q| labels[q] != y));
        let miss = nearest(x, p, &others, 1)[0];
        triples.push(Triplet {
            anchor: p,
            hit,
            miss,
            miss_class: labels[miss],
        });
    }
    Ok(TripletSet::from_raw(triples, Mode::Patch))
}

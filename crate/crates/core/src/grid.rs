//! Grid-aligned fields shared by every stage of the pipeline.
//!
//! All per-pixel data is stored flat in row-major order with the origin at
//! the top-left corner; pixel `i` lives at `(i / width, i % width)`. Costs are
//! natural-log units.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel for unlabeled ground-truth pixels in a [`LabelField`].
pub const IGNORE: u8 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    height: usize,
    width: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid shape must be at least 1x1, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `(row, col)` of a flat pixel index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn contains(&self, row: isize, col: isize) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.height && (col as usize) < self.width
    }
}

/// An ordered, duplicate-free list of label names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpace {
    names: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::InvalidArgument("label space is empty".into()));
        }
        if names.len() >= IGNORE as usize {
            return Err(Error::InvalidArgument(format!(
                "at most {} labels are supported",
                IGNORE
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidArgument(format!("duplicate label {name:?}")));
            }
        }
        Ok(Self { names })
    }

    /// The two-state motion space, `stationary` then `moving`.
    pub fn motion() -> Self {
        Self {
            names: vec!["stationary".into(), "moving".into()],
        }
    }

    pub fn count(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, label: usize) -> &str {
        &self.names[label]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn check_len(shape: GridShape, labels: &LabelSpace, len: usize) -> Result<()> {
    let expected = shape.len() * labels.count();
    if len != expected {
        return Err(Error::ShapeMismatch(format!(
            "expected {expected} values ({}x{}x{}), got {len}",
            shape.height(),
            shape.width(),
            labels.count()
        )));
    }
    Ok(())
}

/// Per-pixel, per-label costs.
#[derive(Clone, Debug, PartialEq)]
pub struct UnaryField {
    shape: GridShape,
    labels: LabelSpace,
    costs: Vec<f64>,
}

impl UnaryField {
    pub fn new(shape: GridShape, labels: LabelSpace, costs: Vec<f64>) -> Result<Self> {
        check_len(shape, &labels, costs.len())?;
        check_finite(&costs)?;
        Ok(Self {
            shape,
            labels,
            costs,
        })
    }

    pub fn zeros(shape: GridShape, labels: LabelSpace) -> Self {
        let costs = vec![0.0; shape.len() * labels.count()];
        Self {
            shape,
            labels,
            costs,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        let n = self.labels.count();
        &self.costs[i * n..(i + 1) * n]
    }
}

/// Per-pixel distributions over a label space.
///
/// Fields are immutable once built; an update produces a fresh field which
/// replaces the old one wholesale, so readers always see a complete state.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityField {
    shape: GridShape,
    labels: LabelSpace,
    values: Vec<f64>,
}

const SUM_TOLERANCE: f64 = 1e-6;

impl ProbabilityField {
    /// Wraps already-normalized values, checking the simplex invariant.
    pub fn new(shape: GridShape, labels: LabelSpace, values: Vec<f64>) -> Result<Self> {
        check_len(shape, &labels, values.len())?;
        check_finite(&values)?;
        let n = labels.count();
        for (pixel, row) in values.chunks(n).enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&v| v < 0.0) || (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "pixel {pixel} is not a distribution (sum {sum})"
                )));
            }
        }
        Ok(Self {
            shape,
            labels,
            values,
        })
    }

    pub fn uniform(shape: GridShape, labels: LabelSpace) -> Self {
        let n = labels.count();
        Self {
            values: vec![1.0 / n as f64; shape.len() * n],
            shape,
            labels,
        }
    }

    pub(crate) fn from_raw_unchecked(
        shape: GridShape,
        labels: LabelSpace,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(values.len(), shape.len() * labels.count());
        Self {
            shape,
            labels,
            values,
        }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        let n = self.labels.count();
        &self.values[i * n..(i + 1) * n]
    }
}

/// Per-pixel label indices, with [`IGNORE`] marking unlabeled pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelField {
    shape: GridShape,
    labels: LabelSpace,
    assignment: Vec<u8>,
}

impl LabelField {
    pub fn new(shape: GridShape, labels: LabelSpace, assignment: Vec<u8>) -> Result<Self> {
        if assignment.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} labels, got {}",
                shape.len(),
                assignment.len()
            )));
        }
        let count = labels.count();
        if let Some(&bad) = assignment
            .iter()
            .find(|&&a| a != IGNORE && a as usize >= count)
        {
            return Err(Error::LabelOutOfRange {
                label: bad as usize,
                count,
            });
        }
        Ok(Self {
            shape,
            labels,
            assignment,
        })
    }

    pub fn filled(shape: GridShape, labels: LabelSpace, label: u8) -> Result<Self> {
        Self::new(shape, labels, vec![label; shape.len()])
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn assignment(&self) -> &[u8] {
        &self.assignment
    }

    /// The label at pixel `i`, or `None` for ignored pixels.
    pub fn get(&self, i: usize) -> Option<usize> {
        match self.assignment[i] {
            IGNORE => None,
            l => Some(l as usize),
        }
    }
}

/// Scales each pixel's entries to sum to one.
///
/// `raw` is flat `pixels x labels`. Ratios within a pixel are preserved.
pub fn normalize_distribution(
    shape: GridShape,
    labels: LabelSpace,
    raw: &[f64],
) -> Result<ProbabilityField> {
    check_len(shape, &labels, raw.len())?;
    check_finite(raw)?;
    if let Some(index) = raw.iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "negative mass at flat index {index}"
        )));
    }
    let n = labels.count();
    let mut values = Vec::with_capacity(raw.len());
    for (pixel, row) in raw.chunks(n).enumerate() {
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            return Err(Error::AllZeroPixel { pixel });
        }
        values.extend(row.iter().map(|v| v / sum));
    }
    Ok(ProbabilityField::from_raw_unchecked(shape, labels, values))
}

/// Writes `exp(-c) / sum exp(-c')` for one pixel into `out`.
pub(crate) fn softmax_neg_into(costs: &[f64], out: &mut [f64]) {
    let min = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (o, &c) in out.iter_mut().zip(costs) {
        *o = (min - c).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Per-pixel Gibbs distribution of a cost field.
pub fn softmax_from_costs(costs: &UnaryField) -> ProbabilityField {
    let n = costs.labels.count();
    let mut values = vec![0.0; costs.costs.len()];
    for (row, out) in costs.costs.chunks(n).zip(values.chunks_mut(n)) {
        softmax_neg_into(row, out);
    }
    ProbabilityField::from_raw_unchecked(costs.shape, costs.labels.clone(), values)
}

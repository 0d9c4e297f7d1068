//! Confusion matrices and per-class intersection over union.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{LabelField, LabelSpace};

/// Rows are ground truth, columns are predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: LabelSpace,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(labels: LabelSpace) -> Self {
        let n = labels.count();
        Self {
            labels,
            counts: vec![0; n * n],
        }
    }

    pub fn from_counts(labels: LabelSpace, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != labels.count() * labels.count() {
            return Err(Error::ShapeMismatch(format!(
                "{} counts for {} labels",
                counts.len(),
                labels.count()
            )));
        }
        Ok(Self { labels, counts })
    }

    pub fn labels(&self) -> &LabelSpace {
        &self.labels
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.labels.count() + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let n = self.labels.count();
        let counts = (0..n * n).map(|k| self.counts[(k % n) * n + k / n]).collect();
        Self {
            labels: self.labels.clone(),
            counts,
        }
    }

    /// Adds another matrix over the same labels.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.labels != self.labels {
            return Err(Error::ShapeMismatch("confusion matrices use different labels".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `(TP, FP, FN)` of label `l`.
    pub fn outcomes(&self, l: usize) -> (u64, u64, u64) {
        let n = self.labels.count();
        let tp = self.get(l, l);
        let fp = (0..n).filter(|&g| g != l).map(|g| self.get(g, l)).sum();
        let fn_ = (0..n).filter(|&p| p != l).map(|p| self.get(l, p)).sum();
        (tp, fp, fn_)
    }
}

/// Counts every pixel whose ground truth is not the ignore label.
pub fn accumulate_confusion(pred: &LabelField, gt: &LabelField, existing: ConfusionMatrix) -> Result<ConfusionMatrix> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.shape().height(),
            pred.shape().width(),
            gt.shape().height(),
            gt.shape().width()
        )));
    }
    if pred.labels() != gt.labels() || gt.labels() != existing.labels() {
        return Err(Error::ShapeMismatch("label spaces differ".into()));
    }
    let n = existing.labels.count();
    let mut out = existing;
    for i in 0..gt.shape().len() {
        let Some(g) = gt.get(i) else { continue };
        let p = pred.get(i).ok_or(Error::LabelOutOfRange {
            label: pred.assignment()[i] as usize,
            count: n,
        })?;
        out.counts[g * n + p] += 1;
    }
    Ok(out)
}

/// `TP / (TP + FP + FN)` per label; `None` when the label never occurs.
pub fn iou_per_class(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    (0..cm.labels.count())
        .map(|l| {
            let (tp, fp, fn_) = cm.outcomes(l);
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect()
}

/// Mean over the defined entries.
pub fn mean_iou(iou: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = iou.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// `class,tp,fp,fn,iou` rows plus a `mean` row; undefined values are empty cells.
pub fn metrics_csv(cm: &ConfusionMatrix) -> String {
    let iou = iou_per_class(cm);
    let mut out = String::from("class,tp,fp,fn,iou\n");
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for (l, name) in cm.labels.names().iter().enumerate() {
        let (tp, fp, fn_) = cm.outcomes(l);
        writeln!(out, "{name},{tp},{fp},{fn_},{}", cell(iou[l])).unwrap();
    }
    writeln!(out, "mean,,,,{}", cell(mean_iou(&iou))).unwrap();
    out
}

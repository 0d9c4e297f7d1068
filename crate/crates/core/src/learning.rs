//! Class–motion correlation learning.
//!
//! [`train_joint_boost`] runs exponential-loss boosting for every object and
//! motion label at once. In round `s`, the candidates for label `c` are the
//! strong classifiers of the other labels from round `s - 1` (used as
//! `+sign(H)`, then `-sign(H)`) followed by every decision stump; ties go to
//! the earliest candidate. The winner gets the
//! closed-form weight `α = ½ ln((1 - ε) / ε)`. A reused classifier also
//! records `α` as its reuse weight `β_{s,c}(±H_{s-1,m})`.
//!
//! [`compute_lambda`] turns reuse weights into
//! `λ(l,m) = -clip(Σ_{s≥2} α_{s,l} (β_{s,l}(H_{s-1,m}) - β_{s,l}(-H_{s-1,m})) / Σ_{s≥2} α_{s,l})`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelField, LabelSpace};
use crate::potentials::CorrelationMatrix;

const EPS_ERROR: f64 = 1e-10;
const EPS_NORM: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    features: Vec<f64>,
    object: Vec<usize>,
    motion: Vec<usize>,
    object_labels: LabelSpace,
    motion_labels: LabelSpace,
}

impl TrainingSet {
    pub fn new(
        dim: usize,
        features: Vec<f64>,
        object: Vec<usize>,
        motion: Vec<usize>,
        object_labels: LabelSpace,
        motion_labels: LabelSpace,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be at least 1".into()));
        }
        if features.len() != dim * object.len() || object.len() != motion.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} features, {} object and {} motion targets for dimension {dim}",
                features.len(),
                object.len(),
                motion.len()
            )));
        }
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        for (&l, count) in object.iter().map(|l| (l, object_labels.count())).chain(motion.iter().map(|m| (m, motion_labels.count()))) {
            if l >= count {
                return Err(Error::LabelOutOfRange { label: l, count });
            }
        }
        Ok(Self {
            dim,
            features,
            object,
            motion,
            object_labels,
            motion_labels,
        })
    }

    /// Rows of `D` feature columns, then the object and motion label names.
    /// A first row whose leading cell is not a number is a header.
    pub fn from_csv(text: &str, object_labels: LabelSpace, motion_labels: LabelSpace) -> Result<Self> {
        let mut rows = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
        if let Some(first) = rows.peek() {
            if first.split(',').next().is_some_and(|c| c.trim().parse::<f64>().is_err()) {
                rows.next();
            }
        }
        let (mut dim, mut features, mut object, mut motion) = (None, Vec::new(), Vec::new(), Vec::new());
        for (k, row) in rows.enumerate() {
            let cells: Vec<&str> = row.split(',').map(str::trim).collect();
            if cells.len() < 3 {
                return Err(Error::Format(format!("training row {} has {} cells", k + 1, cells.len())));
            }
            let d = cells.len() - 2;
            if *dim.get_or_insert(d) != d {
                return Err(Error::Format(format!("training row {} has {d} features", k + 1)));
            }
            for c in &cells[..d] {
                features.push(c.parse().map_err(|_| Error::Format(format!("bad feature {c:?} in row {}", k + 1)))?);
            }
            let find = |space: &LabelSpace, name: &str| {
                space.position(name).ok_or_else(|| Error::Format(format!("unknown label {name:?} in row {}", k + 1)))
            };
            object.push(find(&object_labels, cells[d])?);
            motion.push(find(&motion_labels, cells[d + 1])?);
        }
        let dim = dim.ok_or_else(|| Error::EmptyData("training CSV has no rows".into()))?;
        Self::new(dim, features, object, motion, object_labels, motion_labels)
    }

    pub fn len(&self) -> usize {
        self.object.len()
    }

    pub fn is_empty(&self) -> bool {
        self.object.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major, `dim` values per instance.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// `(object, motion)` labels of instance `i`.
    pub fn labels_of(&self, i: usize) -> (usize, usize) {
        (self.object[i], self.motion[i])
    }

    fn label_count(&self) -> usize {
        self.object_labels.count() + self.motion_labels.count()
    }

    /// ±1 targets of combined label `c` (object labels first, then motion labels).
    fn targets(&self, c: usize) -> Vec<f64> {
        let n = self.object_labels.count();
        (0..self.len())
            .map(|i| {
                let hit = if c < n { self.object[i] == c } else { self.motion[i] == c - n };
                if hit {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect()
    }

    fn feature(&self, i: usize, f: usize) -> f64 {
        self.features[i * self.dim + f]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub seed: u64,
    /// Share of features searched each round, in `(0, 1]`.
    pub feature_fraction: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            rounds: 10,
            seed: 0,
            feature_fraction: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeakLearner {
    /// `polarity` where `t[feature] > threshold`, else `-polarity`.
    Stump { feature: usize, threshold: f64, polarity: i8 },
    /// `±sign(H_{s-1,label})`, with `sign(0) = +1`.
    Reuse { label: usize, negated: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub learner: WeakLearner,
    pub alpha: f64,
    /// `β(+H_{s-1,m})` for every combined label `m`.
    pub reuse_pos: Vec<f64>,
    /// `β(-H_{s-1,m})` for every combined label `m`.
    pub reuse_neg: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub object_labels: LabelSpace,
    pub motion_labels: LabelSpace,
    pub feature_dim: usize,
    /// `rounds[c][s]` for combined label `c`.
    pub rounds: Vec<Vec<RoundRecord>>,
    /// Mean exponential loss of each label after each round.
    pub loss: Vec<Vec<f64>>,
}

impl BoostedModel {
    pub fn round_count(&self) -> usize {
        self.rounds.first().map_or(0, Vec::len)
    }
}

struct StumpIndex {
    /// Instance order by ascending feature value, per feature.
    order: Vec<Vec<usize>>,
}

impl StumpIndex {
    fn new(data: &TrainingSet) -> Self {
        let order = (0..data.dim)
            .map(|f| {
                let mut idx: Vec<usize> = (0..data.len()).collect();
                idx.sort_by(|&a, &b| data.feature(a, f).total_cmp(&data.feature(b, f)).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { order }
    }

    /// Lowest weighted error stump on feature `f`: `(error, threshold, polarity)`.
    fn best(&self, data: &TrainingSet, f: usize, y: &[f64], w: &[f64], total: f64) -> (f64, f64, i8) {
        let order = &self.order[f];
        // threshold below every value: all instances predicted `polarity`
        let pos_total: f64 = order.iter().filter(|&&i| y[i] > 0.0).map(|&i| w[i]).sum();
        let first = data.feature(order[0], f) - 1.0;
        let mut best = (total - pos_total, first, 1i8);
        if pos_total < best.0 {
            best = (pos_total, first, -1);
        }
        // err(+1) = w(y=+1, below) + w(y=-1, above)
        let mut below_pos = 0.0;
        let mut below_neg = 0.0;
        for k in 0..order.len() - 1 {
            let i = order[k];
            if y[i] > 0.0 {
                below_pos += w[i];
            } else {
                below_neg += w[i];
            }
            let (a, b) = (data.feature(i, f), data.feature(order[k + 1], f));
            if a == b {
                continue;
            }
            let threshold = a + (b - a) / 2.0;
            let above_neg = total - pos_total - below_neg;
            let err_plus = below_pos + above_neg;
            let err_minus = total - err_plus;
            if err_plus < best.0 {
                best = (err_plus, threshold, 1);
            }
            if err_minus < best.0 {
                best = (err_minus, threshold, -1);
            }
        }
        best
    }
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Trains every label for `params.rounds` synchronized rounds.
pub fn train_joint_boost(data: &TrainingSet, params: &BoostParams) -> Result<BoostedModel> {
    if data.is_empty() {
        return Err(Error::EmptyData("training set has no instances".into()));
    }
    if data.len() < 10 {
        return Err(Error::InsufficientData(format!("{} instances, need at least 10", data.len())));
    }
    if params.rounds < 2 {
        return Err(Error::InvalidArgument(format!("boosting needs at least 2 rounds, got {}", params.rounds)));
    }
    if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "feature_fraction must lie in (0, 1], got {}",
            params.feature_fraction
        )));
    }
    let labels = data.label_count();
    let targets: Vec<Vec<f64>> = (0..labels).map(|c| data.targets(c)).collect();
    for (c, y) in targets.iter().enumerate() {
        if y.iter().all(|&v| v == y[0]) {
            let name = if c < data.object_labels.count() {
                data.object_labels.name(c)
            } else {
                data.motion_labels.name(c - data.object_labels.count())
            };
            return Err(Error::DegenerateLabel(format!("label {name:?} has identical targets on every instance")));
        }
    }
    let n_inst = data.len();
    let index = StumpIndex::new(data);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let searched = ((params.feature_fraction * data.dim as f64).ceil() as usize).clamp(1, data.dim);
    let mut strong: Vec<Vec<f64>> = vec![vec![0.0; n_inst]; labels];
    let mut rounds: Vec<Vec<RoundRecord>> = vec![Vec::new(); labels];
    let mut loss: Vec<Vec<f64>> = vec![Vec::new(); labels];
    for s in 0..params.rounds {
        let features: Vec<usize> = if searched == data.dim {
            (0..data.dim).collect()
        } else {
            let mut f = sample(&mut rng, data.dim, searched).into_vec();
            f.sort_unstable();
            f
        };
        let previous = strong.clone();
        for c in 0..labels {
            let y = &targets[c];
            let w: Vec<f64> = (0..n_inst).map(|i| (-y[i] * previous[c][i]).exp()).collect();
            let total: f64 = w.iter().sum();
            let mut best: Option<(f64, WeakLearner)> = None;
            let mut consider = |err: f64, learner: WeakLearner| {
                if best.as_ref().is_none_or(|(e, _)| err < *e) {
                    best = Some((err, learner));
                }
            };
            if s > 0 {
                let wrong: Vec<f64> = previous
                    .iter()
                    .map(|h| (0..n_inst).filter(|&i| sign(h[i]) != y[i]).map(|i| w[i]).sum())
                    .collect();
                for negated in [false, true] {
                    for (m, &e) in wrong.iter().enumerate() {
                        if m != c {
                            consider(if negated { total - e } else { e }, WeakLearner::Reuse { label: m, negated });
                        }
                    }
                }
            }
            for &f in &features {
                let (err, threshold, polarity) = index.best(data, f, y, &w, total);
                consider(err, WeakLearner::Stump { feature: f, threshold, polarity });
            }
            let (err, learner) = best.expect("at least one candidate");
            let eps = (err / total).clamp(EPS_ERROR, 1.0 - EPS_ERROR);
            let alpha = (0.5 * ((1.0 - eps) / eps).ln()).max(0.0);
            let mut reuse_pos = vec![0.0; labels];
            let mut reuse_neg = vec![0.0; labels];
            let h: Vec<f64> = match learner {
                WeakLearner::Stump { feature, threshold, polarity } => (0..n_inst)
                    .map(|i| if data.feature(i, feature) > threshold { polarity as f64 } else { -(polarity as f64) })
                    .collect(),
                WeakLearner::Reuse { label, negated } => {
                    if negated {
                        reuse_neg[label] = alpha;
                    } else {
                        reuse_pos[label] = alpha;
                    }
                    let k = if negated { -1.0 } else { 1.0 };
                    previous[label].iter().map(|&v| k * sign(v)).collect()
                }
            };
            for (hs, hv) in strong[c].iter_mut().zip(&h) {
                *hs += alpha * hv;
            }
            let l: f64 = (0..n_inst).map(|i| (-y[i] * strong[c][i]).exp()).sum::<f64>() / n_inst as f64;
            loss[c].push(l);
            rounds[c].push(RoundRecord {
                learner,
                alpha,
                reuse_pos,
                reuse_neg,
            });
        }
    }
    Ok(BoostedModel {
        object_labels: data.object_labels.clone(),
        motion_labels: data.motion_labels.clone(),
        feature_dim: data.dim,
        rounds,
        loss,
    })
}

/// Object-by-motion correlation from reuse weights, coupling weight 1.
pub fn compute_lambda(model: &BoostedModel) -> Result<CorrelationMatrix> {
    let (n, k) = (model.object_labels.count(), model.motion_labels.count());
    if model.round_count() < 2 || model.rounds.len() != n + k {
        return Err(Error::UntrainedModel);
    }
    let mut lambda = Vec::with_capacity(n * k);
    for l in 0..n {
        let later = &model.rounds[l][1..];
        let norm = later.iter().map(|r| r.alpha).sum::<f64>().max(EPS_NORM);
        for m in 0..k {
            let raw: f64 = later.iter().map(|r| r.alpha * (r.reuse_pos[n + m] - r.reuse_neg[n + m])).sum();
            lambda.push(-(raw / norm).clamp(-1.0, 1.0));
        }
    }
    CorrelationMatrix::new(model.object_labels.clone(), model.motion_labels.clone(), lambda, 1.0)
}

/// `λ(l,m) = -φ(l,m)`, the negated Pearson correlation of the indicators
/// `[x = l]` and `[y = m]` over pixels labeled in both layers.
pub fn cooccurrence_lambda(objects: &[LabelField], motions: &[LabelField]) -> Result<CorrelationMatrix> {
    let (Some(first_o), Some(first_m)) = (objects.first(), motions.first()) else {
        return Err(Error::EmptyData("no label maps given".into()));
    };
    if objects.len() != motions.len() {
        return Err(Error::ShapeMismatch(format!("{} object maps, {} motion maps", objects.len(), motions.len())));
    }
    let (ol, ml) = (first_o.labels().clone(), first_m.labels().clone());
    let (n, k) = (ol.count(), ml.count());
    let mut joint = vec![0u64; n * k];
    let mut total = 0u64;
    for (o, m) in objects.iter().zip(motions) {
        if o.shape() != m.shape() || o.labels() != &ol || m.labels() != &ml {
            return Err(Error::ShapeMismatch("label map pair disagrees on grid or labels".into()));
        }
        for i in 0..o.shape().len() {
            if let (Some(x), Some(y)) = (o.get(i), m.get(i)) {
                joint[x * k + y] += 1;
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyData("no pixel is labeled in both layers".into()));
    }
    let t = total as f64;
    let row: Vec<f64> = (0..n).map(|l| (0..k).map(|m| joint[l * k + m]).sum::<u64>() as f64).collect();
    let col: Vec<f64> = (0..k).map(|m| (0..n).map(|l| joint[l * k + m]).sum::<u64>() as f64).collect();
    let mut lambda = Vec::with_capacity(n * k);
    for l in 0..n {
        for m in 0..k {
            let denom = row[l] * (t - row[l]) * col[m] * (t - col[m]);
            let phi = if denom > 0.0 {
                (t * joint[l * k + m] as f64 - row[l] * col[m]) / denom.sqrt()
            } else {
                0.0
            };
            lambda.push(-phi.clamp(-1.0, 1.0));
        }
    }
    CorrelationMatrix::new(ol, ml, lambda, 1.0)
}

//! Mean-field inference over the factorized joint distribution
//! `Q(x, y) = Π_i Q^O_i(x_i) Q^M_i(y_i)`.
//!
//! One step updates both layers from the same previous state:
//!
//! ```text
//! Q^O'_i(l) ∝ exp(-ψ^O_i(l) - Σ_{l'≠l} M^O_i(l') - w Σ_m Q^M_i(m) λ(l,m))
//! M^O_i(l') = Σ_{j≠i} p(i,j) Q^O_j(l')
//! ```
//!
//! and symmetrically for the motion layer with the kernel `g`. The result is
//! blended with the previous state: `Q = (1 - damping) Q' + damping Q_old`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::filter::fast::{fast_filter, FilterAccuracy};
use crate::filter::{brute_force_filter, FeatureMap, KernelSpec};
use crate::grid::{argmax, softmax_from_costs, softmax_neg_into, LabelField, ProbabilityField, UnaryField};
use crate::potentials::{for_each_pair, EnergyMode, JointModel};

/// Enumeration limits of [`brute_force_marginals`].
pub const BRUTE_FORCE_MAX_PIXELS: usize = 10;
pub const BRUTE_FORCE_MAX_OBJECT_LABELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterMode {
    Fast,
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InferenceConfig {
    pub max_iterations: usize,
    pub residual_tolerance: f64,
    pub damping: f64,
    pub accuracy: FilterAccuracy,
    pub mode: FilterMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            residual_tolerance: 1e-3,
            damping: 0.5,
            accuracy: FilterAccuracy::default(),
            mode: FilterMode::Fast,
        }
    }
}

impl InferenceConfig {
    pub fn new(max_iterations: usize, residual_tolerance: f64, damping: f64) -> Result<Self> {
        let config = Self {
            max_iterations,
            residual_tolerance,
            damping,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if !(self.residual_tolerance > 0.0) || !self.residual_tolerance.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "residual_tolerance must be positive, got {}",
                self.residual_tolerance
            )));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::InvalidArgument(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Object,
    Motion,
}

/// Max |ΔQ| of each layer after one iteration. A layer that did not update reports 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Residual {
    pub object: f64,
    pub motion: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult {
    pub q_object: ProbabilityField,
    pub q_motion: ProbabilityField,
    pub labels_object: LabelField,
    pub labels_motion: LabelField,
    pub iterations: usize,
    pub residual: f64,
    pub trace: Vec<Residual>,
}

impl InferenceResult {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,object,motion\n");
        for (k, r) in self.trace.iter().enumerate() {
            writeln!(out, "{},{},{}", k + 1, r.object, r.motion).unwrap();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerResult {
    pub q: ProbabilityField,
    pub labels: LabelField,
    pub iterations: usize,
    pub residual: f64,
}

pub fn map_labels(q: &ProbabilityField) -> LabelField {
    let n = q.labels().count();
    let assignment = q.values().chunks_exact(n).map(|p| argmax(p) as u8).collect();
    LabelField::new(q.shape(), q.labels().clone(), assignment).expect("argmax is in range")
}

fn messages(q: &[f64], channels: usize, features: &FeatureMap, kernel: &KernelSpec, config: &InferenceConfig) -> Result<Vec<f64>> {
    match config.mode {
        FilterMode::Fast => fast_filter(q, channels, features, kernel, config.accuracy),
        FilterMode::Exact => brute_force_filter(q, channels, features, kernel),
    }
}

/// One damped update of a layer; `cross(i, l)` is the coupling cost.
fn update_layer(
    q: &[f64],
    unary: &UnaryField,
    features: &FeatureMap,
    kernel: &KernelSpec,
    cross: Option<&dyn Fn(usize, usize) -> f64>,
    config: &InferenceConfig,
) -> Result<(Vec<f64>, f64)> {
    let n = unary.labels().count();
    let m = messages(q, n, features, kernel, config)?;
    let mut out = vec![0.0; q.len()];
    let mut cost = vec![0.0; n];
    let mut residual: f64 = 0.0;
    for i in 0..unary.shape().len() {
        let mi = &m[i * n..(i + 1) * n];
        let total: f64 = mi.iter().sum();
        for (l, c) in cost.iter_mut().enumerate() {
            *c = unary.pixel(i)[l] + (total - mi[l]);
            if let Some(cross) = cross {
                *c += cross(i, l);
            }
        }
        let o = &mut out[i * n..(i + 1) * n];
        softmax_neg_into(&cost, o);
        for (l, v) in o.iter_mut().enumerate() {
            let old = q[i * n + l];
            *v = (1.0 - config.damping) * *v + config.damping * old;
            if !v.is_finite() {
                return Err(Error::NonFiniteUpdate);
            }
            residual = residual.max((*v - old).abs());
        }
    }
    Ok((out, residual))
}

fn check_state(q_object: &ProbabilityField, q_motion: &ProbabilityField, model: &JointModel) -> Result<()> {
    if q_object.shape() != model.shape()
        || q_motion.shape() != model.shape()
        || q_object.labels() != model.object_unary().labels()
        || q_motion.labels() != model.motion_unary().labels()
    {
        return Err(Error::ShapeMismatch("Q fields do not match the model".into()));
    }
    Ok(())
}

struct Step {
    object: Option<(Vec<f64>, f64)>,
    motion: Option<(Vec<f64>, f64)>,
}

fn step(qo: &[f64], qm: &[f64], model: &JointModel, config: &InferenceConfig, update: [bool; 2]) -> Result<Step> {
    let corr = model.correlation();
    let (n, k) = (corr.object_labels().count(), corr.motion_labels().count());
    let w = corr.weight();
    let coupled = !corr.is_decoupled();
    let object_cross = |i: usize, l: usize| w * (0..k).map(|m| qm[i * k + m] * corr.get(l, m)).sum::<f64>();
    let motion_cross = |i: usize, m: usize| w * (0..n).map(|l| qo[i * n + l] * corr.get(l, m)).sum::<f64>();
    let object = if update[0] {
        Some(update_layer(
            qo,
            model.object_unary(),
            model.object_features(),
            &model.object_kernel(),
            coupled.then_some(&object_cross as &dyn Fn(usize, usize) -> f64),
            config,
        )?)
    } else {
        None
    };
    let motion = if update[1] {
        Some(update_layer(
            qm,
            model.motion_unary(),
            model.motion_features(),
            &model.motion_kernel(),
            coupled.then_some(&motion_cross as &dyn Fn(usize, usize) -> f64),
            config,
        )?)
    } else {
        None
    };
    Ok(Step { object, motion })
}

/// One parallel update of both layers.
pub fn mean_field_step(
    q_object: &ProbabilityField,
    q_motion: &ProbabilityField,
    model: &JointModel,
    config: &InferenceConfig,
) -> Result<(ProbabilityField, ProbabilityField)> {
    config.validate()?;
    check_state(q_object, q_motion, model)?;
    let s = step(q_object.values(), q_motion.values(), model, config, [true, true])?;
    let (qo, _) = s.object.expect("updated");
    let (qm, _) = s.motion.expect("updated");
    Ok((
        ProbabilityField::from_raw_unchecked(model.shape(), q_object.labels().clone(), qo),
        ProbabilityField::from_raw_unchecked(model.shape(), q_motion.labels().clone(), qm),
    ))
}

/// Iterates from the unary softmax until the largest change drops below the
/// tolerance.
///
/// When the coupling term vanishes the layers are independent, and each one
/// stops updating as soon as its own change is below the tolerance. This
/// makes the result identical to [`run_layer_inference`] for either layer.
pub fn run_inference(model: &JointModel, config: &InferenceConfig) -> Result<InferenceResult> {
    config.validate()?;
    let (qo, qm, iterations, trace) = iterate(model, config, [true, true])?;
    let residual = trace.last().map_or(0.0, |r| r.object.max(r.motion));
    let q_object = ProbabilityField::from_raw_unchecked(model.shape(), model.object_unary().labels().clone(), qo);
    let q_motion = ProbabilityField::from_raw_unchecked(model.shape(), model.motion_unary().labels().clone(), qm);
    Ok(InferenceResult {
        labels_object: map_labels(&q_object),
        labels_motion: map_labels(&q_motion),
        q_object,
        q_motion,
        iterations,
        residual,
        trace,
    })
}

/// Mean field on one layer alone, as if the coupling weight were zero.
pub fn run_layer_inference(model: &JointModel, layer: Layer, config: &InferenceConfig) -> Result<LayerResult> {
    config.validate()?;
    let decoupled = model.clone().with_correlation(model.correlation().clone().with_weight(0.0)?)?;
    let active = match layer {
        Layer::Object => [true, false],
        Layer::Motion => [false, true],
    };
    let (qo, qm, iterations, trace) = iterate(&decoupled, config, active)?;
    let (values, labels, residual) = match layer {
        Layer::Object => (qo, model.object_unary().labels().clone(), trace.last().map_or(0.0, |r| r.object)),
        Layer::Motion => (qm, model.motion_unary().labels().clone(), trace.last().map_or(0.0, |r| r.motion)),
    };
    let q = ProbabilityField::from_raw_unchecked(model.shape(), labels, values);
    Ok(LayerResult {
        labels: map_labels(&q),
        q,
        iterations,
        residual,
    })
}

type State = (Vec<f64>, Vec<f64>, usize, Vec<Residual>);

fn iterate(model: &JointModel, config: &InferenceConfig, mut active: [bool; 2]) -> Result<State> {
    let mut qo = softmax_from_costs(model.object_unary()).into_values();
    let mut qm = softmax_from_costs(model.motion_unary()).into_values();
    let independent = model.correlation().is_decoupled();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iterations && active.iter().any(|&a| a) {
        let s = step(&qo, &qm, model, config, active)?;
        iterations += 1;
        let mut r = Residual { object: 0.0, motion: 0.0 };
        if let Some((q, res)) = s.object {
            qo = q;
            r.object = res;
        }
        if let Some((q, res)) = s.motion {
            qm = q;
            r.motion = res;
        }
        trace.push(r);
        if independent {
            active[0] &= r.object >= config.residual_tolerance;
            active[1] &= r.motion >= config.residual_tolerance;
        } else if r.object.max(r.motion) < config.residual_tolerance {
            break;
        }
    }
    Ok((qo, qm, iterations, trace))
}

/// Exact per-pixel marginals of `exp(-E)` by enumerating every joint labeling.
pub fn brute_force_marginals(model: &JointModel, mode: EnergyMode) -> Result<(ProbabilityField, ProbabilityField)> {
    let shape = model.shape();
    let n_pix = shape.len();
    let n = model.object_unary().labels().count();
    let k = model.motion_unary().labels().count();
    if n_pix > BRUTE_FORCE_MAX_PIXELS || n > BRUTE_FORCE_MAX_OBJECT_LABELS {
        return Err(Error::SizeGuardExceeded(format!(
            "enumeration over {n_pix} pixels and {n} object labels exceeds {BRUTE_FORCE_MAX_PIXELS} / {BRUTE_FORCE_MAX_OBJECT_LABELS}"
        )));
    }
    let states = n * k;
    let corr = model.correlation();
    let unary: Vec<f64> = (0..n_pix)
        .flat_map(|i| {
            (0..states).map(move |s| {
                let (l, m) = (s / k, s % k);
                model.object_unary().pixel(i)[l] + model.motion_unary().pixel(i)[m] + corr.weight() * corr.get(l, m)
            })
        })
        .collect();
    // pairs grouped by their larger pixel so depth j sees every pair (i < j, j)
    let mut earlier: Vec<Vec<(usize, f64, f64)>> = vec![Vec::new(); n_pix];
    for_each_pair(model, mode, |i, j, p, g| earlier[j].push((i, p, g)))?;

    let mut acc_o = vec![0.0; n_pix * n];
    let mut acc_m = vec![0.0; n_pix * k];
    let mut shift: Option<f64> = None;
    let mut labels = vec![0usize; n_pix];
    let mut partial = vec![0.0; n_pix + 1];
    let mut depth = 0;
    let mut next = vec![0usize; n_pix];
    // iterative depth-first enumeration; partial[d] is the energy of pixels < d
    loop {
        if depth == n_pix {
            let e = partial[n_pix];
            let s = *shift.get_or_insert(e);
            if e < s {
                let scale = (e - s).exp();
                acc_o.iter_mut().chain(acc_m.iter_mut()).for_each(|a| *a *= scale);
                shift = Some(e);
            }
            let w = (-(e - shift.expect("set"))).exp();
            for (i, &st) in labels.iter().enumerate() {
                acc_o[i * n + st / k] += w;
                acc_m[i * k + st % k] += w;
            }
            depth -= 1;
            continue;
        }
        if next[depth] == states {
            next[depth] = 0;
            if depth == 0 {
                break;
            }
            depth -= 1;
            continue;
        }
        let st = next[depth];
        next[depth] += 1;
        labels[depth] = st;
        let mut e = partial[depth] + unary[depth * states + st];
        for &(i, p, g) in &earlier[depth] {
            if labels[i] / k != st / k {
                e += p;
            }
            if labels[i] % k != st % k {
                e += g;
            }
        }
        partial[depth + 1] = e;
        depth += 1;
    }
    let normalize = |acc: Vec<f64>, c: usize| -> Vec<f64> {
        acc.chunks_exact(c)
            .flat_map(|p| {
                let z: f64 = p.iter().sum();
                p.iter().map(move |v| v / z).collect::<Vec<_>>()
            })
            .collect()
    };
    Ok((
        ProbabilityField::from_raw_unchecked(shape, model.object_unary().labels().clone(), normalize(acc_o, n)),
        ProbabilityField::from_raw_unchecked(shape, model.motion_unary().labels().clone(), normalize(acc_m, k)),
    ))
}

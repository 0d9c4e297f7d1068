//! CRF potentials: the object Potts kernel, the motion kernels, the joint
//! unary with the class–motion correlation term, and exact energies.
//!
//! Object kernel:
//! `p(i,j) = w_app exp(-|Δp|²/2θ_β² - |ΔI|²/2θ_v²) + w_smooth exp(-|Δp|²/2θ_p²)`.
//!
//! Motion kernel (dense): `g(i,j) = w_flow exp(-|Δp|²/2θ_p² - |Δf|²/2θ_f²)`.
//! The neighborhood oracle instead uses `|f_i - f_j|` on grid edges.
//!
//! `λ(l, m) = -1` marks a compatible class–motion pair (lowest cost).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::egomotion::FlowField;
use crate::error::{Error, Result};
use crate::filter::{build_features, FeatureMap, FeatureMode, Image, KernelComponent, KernelSpec};
use crate::grid::{GridShape, LabelField, LabelSpace, UnaryField};

/// Largest grid `joint_energy` evaluates in dense-exact mode.
pub const DENSE_ENERGY_MAX_PIXELS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub theta_beta: f64,
    pub theta_v: f64,
    pub theta_p: f64,
    pub theta_f: f64,
    pub w_app: f64,
    pub w_smooth: f64,
    pub w_flow: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            theta_beta: 3.0,
            theta_v: 10.0,
            theta_p: 3.0,
            theta_f: 1.0,
            w_app: 1.0,
            w_smooth: 1.0,
            w_flow: 1.0,
        }
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        for t in [self.theta_beta, self.theta_v, self.theta_p, self.theta_f] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::NonPositiveBandwidth(t));
            }
        }
        for (name, w) in [("w_app", self.w_app), ("w_smooth", self.w_smooth), ("w_flow", self.w_flow)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    object: LabelSpace,
    motion: LabelSpace,
    lambda: Vec<f64>,
    weight: f64,
}

impl CorrelationMatrix {
    /// `lambda` is row-major, one row per object label.
    pub fn new(object: LabelSpace, motion: LabelSpace, lambda: Vec<f64>, weight: f64) -> Result<Self> {
        if lambda.len() != object.count() * motion.count() {
            return Err(Error::ShapeMismatch(format!(
                "{} correlation entries for {}x{} labels",
                lambda.len(),
                object.count(),
                motion.count()
            )));
        }
        if let Some(index) = lambda.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if let Some(v) = lambda.iter().find(|v| v.abs() > 1.0) {
            return Err(Error::InvalidArgument(format!("correlation entry {v} outside [-1, 1]")));
        }
        check_weight(weight)?;
        Ok(Self {
            object,
            motion,
            lambda,
            weight,
        })
    }

    pub fn zeros(object: LabelSpace, motion: LabelSpace) -> Self {
        let lambda = vec![0.0; object.count() * motion.count()];
        Self {
            object,
            motion,
            lambda,
            weight: 0.0,
        }
    }

    pub fn object_labels(&self) -> &LabelSpace {
        &self.object
    }

    pub fn motion_labels(&self) -> &LabelSpace {
        &self.motion
    }

    pub fn get(&self, l: usize, m: usize) -> f64 {
        self.lambda[l * self.motion.count() + m]
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn with_weight(mut self, weight: f64) -> Result<Self> {
        check_weight(weight)?;
        self.weight = weight;
        Ok(self)
    }

    /// True when the cross term vanishes for every label pair.
    pub fn is_decoupled(&self) -> bool {
        self.weight == 0.0 || self.lambda.iter().all(|&v| v == 0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for m in self.motion.names() {
            write!(out, ",{m}").unwrap();
        }
        out.push('\n');
        for (l, name) in self.object.names().iter().enumerate() {
            out.push_str(name);
            for m in 0..self.motion.count() {
                write!(out, ",{}", self.get(l, m) + 0.0).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, weight: f64) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Format("empty correlation CSV".into()))?;
        let motion = LabelSpace::new(header.split(',').skip(1).map(str::trim))?;
        let mut names = Vec::new();
        let mut lambda = Vec::new();
        for line in lines {
            let mut cells = line.split(',').map(str::trim);
            names.push(cells.next().unwrap_or_default().to_owned());
            let row: Vec<&str> = cells.collect();
            if row.len() != motion.count() {
                return Err(Error::Format(format!("correlation row {line:?} has {} values", row.len())));
            }
            for cell in row {
                lambda.push(cell.parse().map_err(|_| Error::Format(format!("bad correlation value {cell:?}")))?);
            }
        }
        Self::new(LabelSpace::new(names)?, motion, lambda, weight)
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight >= 0.0 && weight.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("coupling weight must be finite and >= 0, got {weight}")))
    }
}

#[derive(Clone, Debug)]
pub struct JointModel {
    object_unary: UnaryField,
    motion_unary: UnaryField,
    params: KernelParams,
    correlation: CorrelationMatrix,
    object_features: FeatureMap,
    motion_features: FeatureMap,
    flow: FlowField,
    bilateral_dim: usize,
}

impl JointModel {
    pub fn new(
        object_unary: UnaryField,
        motion_unary: UnaryField,
        image: &Image,
        flow: &FlowField,
        params: KernelParams,
        correlation: CorrelationMatrix,
    ) -> Result<Self> {
        params.validate()?;
        let shape = object_unary.shape();
        if motion_unary.shape() != shape || image.shape() != shape || flow.shape() != shape {
            return Err(Error::ShapeMismatch("model inputs cover different grids".into()));
        }
        if correlation.object_labels() != object_unary.labels() || correlation.motion_labels() != motion_unary.labels() {
            return Err(Error::ShapeMismatch("correlation labels differ from the unary labels".into()));
        }
        let bilateral = build_features(
            shape,
            FeatureMode::BilateralIntensity {
                image,
                theta_spatial: params.theta_beta,
                theta_intensity: params.theta_v,
            },
        )?;
        let spatial = build_features(shape, FeatureMode::Spatial { theta: params.theta_p })?;
        let object_features = FeatureMap::concat(&[&bilateral, &spatial])?;
        let motion_features = build_features(
            shape,
            FeatureMode::FlowBilateral {
                flow: flow.data(),
                theta_spatial: params.theta_p,
                theta_flow: params.theta_f,
            },
        )?;
        Ok(Self {
            object_unary,
            motion_unary,
            params,
            correlation,
            object_features,
            motion_features,
            flow: flow.clone(),
            bilateral_dim: bilateral.dim(),
        })
    }

    pub fn shape(&self) -> GridShape {
        self.object_unary.shape()
    }

    pub fn object_unary(&self) -> &UnaryField {
        &self.object_unary
    }

    pub fn motion_unary(&self) -> &UnaryField {
        &self.motion_unary
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn correlation(&self) -> &CorrelationMatrix {
        &self.correlation
    }

    pub fn with_correlation(mut self, correlation: CorrelationMatrix) -> Result<Self> {
        if correlation.object_labels() != self.object_unary.labels()
            || correlation.motion_labels() != self.motion_unary.labels()
        {
            return Err(Error::ShapeMismatch("correlation labels differ from the unary labels".into()));
        }
        self.correlation = correlation;
        Ok(self)
    }

    pub fn object_features(&self) -> &FeatureMap {
        &self.object_features
    }

    pub fn motion_features(&self) -> &FeatureMap {
        &self.motion_features
    }

    pub fn flow(&self) -> &FlowField {
        &self.flow
    }

    pub fn object_kernel(&self) -> KernelSpec {
        let b = self.bilateral_dim;
        KernelSpec::new(vec![
            KernelComponent {
                features: 0..b,
                weight: self.params.w_app,
            },
            KernelComponent {
                features: b..b + 2,
                weight: self.params.w_smooth,
            },
        ])
        .expect("weights validated")
    }

    pub fn motion_kernel(&self) -> KernelSpec {
        KernelSpec::single(0..4, self.params.w_flow).expect("weights validated")
    }
}

fn distinct(shape: GridShape, i: usize, j: usize) -> Result<()> {
    if i == j {
        return Err(Error::SamePixel);
    }
    if i >= shape.len() || j >= shape.len() {
        return Err(Error::InvalidArgument(format!("pixel {} outside a {}-pixel grid", i.max(j), shape.len())));
    }
    Ok(())
}

fn pixel_sq_dist(shape: GridShape, i: usize, j: usize) -> f64 {
    let (ri, ci) = shape.coords(i);
    let (rj, cj) = shape.coords(j);
    let (dr, dc) = (ri as f64 - rj as f64, ci as f64 - cj as f64);
    dr * dr + dc * dc
}

pub fn object_pairwise_kernel(i: usize, j: usize, image: &Image, params: &KernelParams) -> Result<f64> {
    let shape = image.shape();
    distinct(shape, i, j)?;
    let dp = pixel_sq_dist(shape, i, j);
    let mut di: f64 = image.pixel(i).iter().zip(image.pixel(j)).map(|(a, b)| (a - b) * (a - b)).sum();
    if image.channels() == 1 {
        // grayscale stands for three equal color components
        di *= 3.0;
    }
    let app = (-dp / (2.0 * params.theta_beta.powi(2)) - di / (2.0 * params.theta_v.powi(2))).exp();
    let smooth = (-dp / (2.0 * params.theta_p.powi(2))).exp();
    Ok(params.w_app * app + params.w_smooth * smooth)
}

fn flow_or_zero(flow: &FlowField, i: usize) -> [f64; 2] {
    flow.get(i).unwrap_or([0.0, 0.0])
}

/// `|f(i) - f(j)|`; invalid flow counts as zero flow.
pub fn motion_pairwise_literal(i: usize, j: usize, flow: &FlowField) -> Result<f64> {
    distinct(flow.shape(), i, j)?;
    let (a, b) = (flow_or_zero(flow, i), flow_or_zero(flow, j));
    Ok((a[0] - b[0]).hypot(a[1] - b[1]))
}

pub fn flow_bilateral_kernel(i: usize, j: usize, flow: &FlowField, params: &KernelParams) -> Result<f64> {
    let shape = flow.shape();
    distinct(shape, i, j)?;
    let (a, b) = (flow_or_zero(flow, i), flow_or_zero(flow, j));
    let df = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let dp = pixel_sq_dist(shape, i, j);
    Ok(params.w_flow * (-dp / (2.0 * params.theta_p.powi(2)) - df / (2.0 * params.theta_f.powi(2))).exp())
}

/// Per pixel, `n x m` costs in row-major `(l, m)` order; label names are `"l/m"`.
pub fn joint_unary(object: &UnaryField, motion: &UnaryField, correlation: &CorrelationMatrix) -> Result<UnaryField> {
    if object.shape() != motion.shape() {
        return Err(Error::ShapeMismatch("object and motion unaries cover different grids".into()));
    }
    if correlation.object_labels() != object.labels() || correlation.motion_labels() != motion.labels() {
        return Err(Error::ShapeMismatch("correlation labels differ from the unary labels".into()));
    }
    let (n, m) = (object.labels().count(), motion.labels().count());
    let mut names = Vec::with_capacity(n * m);
    for a in object.labels().names() {
        for b in motion.labels().names() {
            names.push(format!("{a}/{b}"));
        }
    }
    let w = correlation.weight();
    let mut costs = Vec::with_capacity(object.shape().len() * n * m);
    for i in 0..object.shape().len() {
        let (po, pm) = (object.pixel(i), motion.pixel(i));
        for l in 0..n {
            for k in 0..m {
                costs.push(po[l] + pm[k] + w * correlation.get(l, k));
            }
        }
    }
    UnaryField::new(object.shape(), LabelSpace::new(names)?, costs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyMode {
    /// Every unordered pair, flow-bilateral motion kernel.
    DenseExact,
    /// Grid edges only, literal flow-difference motion term.
    Neighborhood(Connectivity),
}

/// Calls `visit(i, j, p, g)` once per unordered pair `i < j` of the energy.
pub(crate) fn for_each_pair(model: &JointModel, mode: EnergyMode, mut visit: impl FnMut(usize, usize, f64, f64)) -> Result<()> {
    let shape = model.shape();
    let (of, mf) = (model.object_features(), model.motion_features());
    let (ok, mk) = (model.object_kernel(), model.motion_kernel());
    match mode {
        EnergyMode::DenseExact => {
            if shape.len() > DENSE_ENERGY_MAX_PIXELS {
                return Err(Error::SizeGuardExceeded(format!(
                    "dense energy over {} pixels exceeds {DENSE_ENERGY_MAX_PIXELS}",
                    shape.len()
                )));
            }
            for i in 0..shape.len() {
                for j in i + 1..shape.len() {
                    visit(i, j, ok.eval(of.pixel(i), of.pixel(j)), mk.eval(mf.pixel(i), mf.pixel(j)));
                }
            }
        }
        EnergyMode::Neighborhood(conn) => {
            let offsets: &[(isize, isize)] = match conn {
                Connectivity::Four => &[(0, 1), (1, 0)],
                Connectivity::Eight => &[(0, 1), (1, -1), (1, 0), (1, 1)],
            };
            for i in 0..shape.len() {
                let (r, c) = shape.coords(i);
                for &(dr, dc) in offsets {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if shape.contains(rr, cc) {
                        let j = shape.index(rr as usize, cc as usize);
                        let (a, b) = (i.min(j), i.max(j));
                        visit(a, b, ok.eval(of.pixel(a), of.pixel(b)), motion_pairwise_literal(a, b, model.flow())?);
                    }
                }
            }
        }
    }
    Ok(())
}

fn labels_of(field: &LabelField, expected: &LabelSpace, shape: GridShape) -> Result<Vec<usize>> {
    if field.shape() != shape || field.labels() != expected {
        return Err(Error::ShapeMismatch("labeling does not match the model".into()));
    }
    (0..shape.len())
        .map(|i| {
            field.get(i).ok_or_else(|| Error::InvalidArgument(format!("pixel {i} carries the ignore label")))
        })
        .collect()
}

/// Total energy of a joint labeling, each unordered pair counted once.
pub fn joint_energy(object: &LabelField, motion: &LabelField, model: &JointModel, mode: EnergyMode) -> Result<f64> {
    let shape = model.shape();
    let x = labels_of(object, model.object_unary().labels(), shape)?;
    let y = labels_of(motion, model.motion_unary().labels(), shape)?;
    let corr = model.correlation();
    let mut energy = 0.0;
    for i in 0..shape.len() {
        energy += model.object_unary().pixel(i)[x[i]]
            + model.motion_unary().pixel(i)[y[i]]
            + corr.weight() * corr.get(x[i], y[i]);
    }
    for_each_pair(model, mode, |i, j, p, g| {
        if x[i] != x[j] {
            energy += p;
        }
        if y[i] != y[j] {
            energy += g;
        }
    })?;
    Ok(energy)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_model(seed: u64, h: usize, w: usize, n: usize, weight_scale: f64) -> JointModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = GridShape::new(h, w).unwrap();
        let names: Vec<String> = (0..n).map(|k| format!("c{k}")).collect();
        let labels = LabelSpace::new(names).unwrap();
        let ou = UnaryField::new(shape, labels.clone(), (0..shape.len() * n).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap();
        let mu = UnaryField::new(shape, LabelSpace::motion(), (0..shape.len() * 2).map(|_| rng.random_range(0.0..2.0)).collect()).unwrap();
        let image = Image::new(shape, 1, (0..shape.len()).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap();
        let flow = FlowField::new(shape, (0..shape.len() * 2).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let params = KernelParams {
            theta_beta: rng.random_range(1.0..4.0),
            theta_v: rng.random_range(20.0..120.0),
            theta_p: rng.random_range(0.5..2.0),
            theta_f: rng.random_range(0.5..2.0),
            w_app: rng.random_range(0.0..weight_scale),
            w_smooth: rng.random_range(0.0..weight_scale),
            w_flow: rng.random_range(0.0..weight_scale),
        };
        let lambda = (0..n * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let corr = CorrelationMatrix::new(labels, LabelSpace::motion(), lambda, rng.random_range(0.0..1.0)).unwrap();
        JointModel::new(ou, mu, &image, &flow, params, corr).unwrap()
    }

    fn unit_params(theta: f64) -> KernelParams {
        KernelParams {
            theta_beta: theta,
            theta_v: 10.0,
            theta_p: theta,
            theta_f: 1.0,
            w_app: 1.0,
            w_smooth: 1.0,
            w_flow: 1.0,
        }
    }

    #[test]
    fn object_kernel_examples() {
        let shape = GridShape::new(1, 4).unwrap();
        let img = Image::new(shape, 1, vec![50.0; 4]).unwrap();
        let k = object_pairwise_kernel(0, 1, &img, &unit_params(3.0)).unwrap();
        assert!(k > 0.0 && k < 2.0);
        // |Δp| = θ_p = θ_β, equal color
        let k = object_pairwise_kernel(0, 3, &img, &unit_params(3.0)).unwrap();
        assert_eq!(k, 1.2130613194252668);
        assert!(matches!(object_pairwise_kernel(2, 2, &img, &unit_params(3.0)), Err(Error::SamePixel)));
    }

    #[test]
    fn literal_motion_examples() {
        let shape = GridShape::new(1, 4).unwrap();
        let eps = 1e-3;
        let flow = FlowField::new(shape, vec![3.0, 0.0, 0.0, 4.0, 1.0, 1.0, 1.0 + eps, 1.0]).unwrap();
        assert_eq!(motion_pairwise_literal(0, 1, &flow).unwrap(), 5.0);
        assert_abs_diff_eq!(motion_pairwise_literal(2, 3, &flow).unwrap(), eps, epsilon = 1e-15);
        let same = FlowField::new(shape, vec![1.5; 8]).unwrap();
        assert_eq!(motion_pairwise_literal(0, 3, &same).unwrap(), 0.0);
        assert!(matches!(motion_pairwise_literal(1, 1, &flow), Err(Error::SamePixel)));
    }

    #[test]
    fn joint_unary_examples() {
        let shape = GridShape::new(1, 1).unwrap();
        let obj = LabelSpace::new(["car"]).unwrap();
        let ou = UnaryField::new(shape, obj.clone(), vec![1.0]).unwrap();
        let mu = UnaryField::new(shape, LabelSpace::motion(), vec![2.0, 2.0]).unwrap();
        let corr = CorrelationMatrix::new(obj.clone(), LabelSpace::motion(), vec![-1.0, -1.0], 3.0).unwrap();
        assert_eq!(joint_unary(&ou, &mu, &corr).unwrap().costs(), &[0.0, 0.0]);

        let decoupled = corr.clone().with_weight(0.0).unwrap();
        let zero_lambda = CorrelationMatrix::new(obj, LabelSpace::motion(), vec![0.0, 0.0], 3.0).unwrap();
        let a = joint_unary(&ou, &mu, &decoupled).unwrap();
        assert_eq!(a.costs(), &[3.0, 3.0]);
        assert_eq!(a, joint_unary(&ou, &mu, &zero_lambda).unwrap());
        assert!(decoupled.is_decoupled() && zero_lambda.is_decoupled() && !corr.is_decoupled());
    }

    #[test]
    fn correlation_csv_round_trip_and_range() {
        let obj = LabelSpace::new(["road", "car"]).unwrap();
        let c = CorrelationMatrix::new(obj.clone(), LabelSpace::motion(), vec![-0.5, 0.5, 1.0, -1.0], 2.0).unwrap();
        let text = c.to_csv();
        assert_eq!(text, "label,stationary,moving\nroad,-0.5,0.5\ncar,1,-1\n");
        assert_eq!(CorrelationMatrix::from_csv(&text, 2.0).unwrap(), c);
        assert!(CorrelationMatrix::new(obj.clone(), LabelSpace::motion(), vec![0.0, 1.5, 0.0, 0.0], 1.0).is_err());
        assert!(CorrelationMatrix::new(obj, LabelSpace::motion(), vec![0.0; 4], -1.0).is_err());
        assert!(CorrelationMatrix::from_csv("label,stationary,moving\ncar,0.1\n", 1.0).is_err());
    }

    #[test]
    fn energy_of_single_pixel_and_uniform_labeling() {
        let shape = GridShape::new(1, 1).unwrap();
        let obj = LabelSpace::new(["a", "b"]).unwrap();
        let model = JointModel::new(
            UnaryField::zeros(shape, obj.clone()),
            UnaryField::zeros(shape, LabelSpace::motion()),
            &Image::new(shape, 1, vec![0.0]).unwrap(),
            &FlowField::new(shape, vec![0.0, 0.0]).unwrap(),
            KernelParams::default(),
            CorrelationMatrix::zeros(obj.clone(), LabelSpace::motion()),
        )
        .unwrap();
        let x = LabelField::filled(shape, obj, 1).unwrap();
        let y = LabelField::filled(shape, LabelSpace::motion(), 0).unwrap();
        assert_eq!(joint_energy(&x, &y, &model, EnergyMode::DenseExact).unwrap(), 0.0);

        let model = random_model(7, 3, 3, 3, 1.0);
        let x = LabelField::filled(model.shape(), model.object_unary().labels().clone(), 2).unwrap();
        let y = LabelField::filled(model.shape(), LabelSpace::motion(), 1).unwrap();
        let c = model.correlation();
        let unaries: f64 = (0..9)
            .map(|i| model.object_unary().pixel(i)[2] + model.motion_unary().pixel(i)[1] + c.weight() * c.get(2, 1))
            .sum();
        for mode in [EnergyMode::DenseExact, EnergyMode::Neighborhood(Connectivity::Eight)] {
            assert_abs_diff_eq!(joint_energy(&x, &y, &model, mode).unwrap(), unaries, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_pixel_energy_matches_hand_expansion() {
        let shape = GridShape::new(1, 2).unwrap();
        let obj = LabelSpace::new(["a", "b"]).unwrap();
        let params = KernelParams {
            theta_beta: 2.0,
            theta_v: 10.0,
            theta_p: 1.0,
            theta_f: 2.0,
            w_app: 0.5,
            w_smooth: 0.25,
            w_flow: 2.0,
        };
        let image = Image::new(shape, 1, vec![10.0, 20.0]).unwrap();
        let flow = FlowField::new(shape, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        let corr = CorrelationMatrix::new(obj.clone(), LabelSpace::motion(), vec![-1.0, 0.5, 0.25, 1.0], 0.5).unwrap();
        let model = JointModel::new(
            UnaryField::new(shape, obj.clone(), vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            UnaryField::new(shape, LabelSpace::motion(), vec![1.0, 2.0, 3.0, 4.0]).unwrap(),
            &image,
            &flow,
            params,
            corr,
        )
        .unwrap();
        let x = LabelField::new(shape, obj, vec![0, 1]).unwrap();
        let y = LabelField::new(shape, LabelSpace::motion(), vec![1, 0]).unwrap();
        // unaries: 0.1 + 2 + 0.5*0.5 at pixel 0, 0.4 + 3 + 0.5*0.25 at pixel 1
        let unary = 0.1 + 2.0 + 0.25 + 0.4 + 3.0 + 0.125;
        // gray difference 10 counts in all three color components
        let p = 0.5 * (-1.0f64 / 8.0 - 300.0 / 200.0).exp() + 0.25 * (-0.5f64).exp();
        let g = 2.0 * (-0.5f64 - 25.0 / 8.0).exp();
        let dense = joint_energy(&x, &y, &model, EnergyMode::DenseExact).unwrap();
        assert_abs_diff_eq!(dense, unary + p + g, epsilon = 1e-12);
        let literal = joint_energy(&x, &y, &model, EnergyMode::Neighborhood(Connectivity::Four)).unwrap();
        assert_abs_diff_eq!(literal, unary + p + 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(object_pairwise_kernel(0, 1, &image, &params).unwrap(), p, epsilon = 1e-15);
        assert_abs_diff_eq!(flow_bilateral_kernel(0, 1, &flow, &params).unwrap(), g, epsilon = 1e-15);
    }

    #[test]
    fn dense_energy_is_size_guarded() {
        let model = random_model(1, 65, 64, 2, 1.0);
        let x = LabelField::filled(model.shape(), model.object_unary().labels().clone(), 0).unwrap();
        let y = LabelField::filled(model.shape(), LabelSpace::motion(), 0).unwrap();
        assert!(matches!(
            joint_energy(&x, &y, &model, EnergyMode::DenseExact),
            Err(Error::SizeGuardExceeded(_))
        ));
    }

    proptest! {
        #[test]
        fn kernels_are_symmetric_and_bounded(seed in any::<u64>(), i in 0usize..12, j in 0usize..12) {
            prop_assume!(i != j);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = GridShape::new(3, 4).unwrap();
            let img = Image::new(shape, 3, (0..36).map(|_| rng.random_range(0.0..255.0)).collect()).unwrap();
            let flow = FlowField::new(shape, (0..24).map(|_| rng.random_range(-5.0..5.0)).collect()).unwrap();
            let params = KernelParams {
                theta_beta: rng.random_range(0.5..5.0),
                theta_v: rng.random_range(1.0..50.0),
                theta_p: rng.random_range(0.5..5.0),
                theta_f: rng.random_range(0.5..5.0),
                w_app: rng.random_range(0.0..3.0),
                w_smooth: rng.random_range(0.0..3.0),
                w_flow: rng.random_range(0.0..3.0),
            };
            let a = object_pairwise_kernel(i, j, &img, &params).unwrap();
            prop_assert_eq!(a, object_pairwise_kernel(j, i, &img, &params).unwrap());
            prop_assert!(a >= 0.0 && a <= params.w_app + params.w_smooth);
            let g = flow_bilateral_kernel(i, j, &flow, &params).unwrap();
            prop_assert_eq!(g, flow_bilateral_kernel(j, i, &flow, &params).unwrap());
            prop_assert!(g >= 0.0 && g <= params.w_flow);
        }

        #[test]
        fn single_flip_descent_reaches_local_minimum(seed in any::<u64>()) {
            let model = random_model(seed, 3, 3, 2, 1.5);
            let shape = model.shape();
            let obj = model.object_unary().labels().clone();
            let mut x = vec![0u8; 9];
            let mut y = vec![0u8; 9];
            let energy = |x: &[u8], y: &[u8]| {
                let xf = LabelField::new(shape, obj.clone(), x.to_vec()).unwrap();
                let yf = LabelField::new(shape, LabelSpace::motion(), y.to_vec()).unwrap();
                joint_energy(&xf, &yf, &model, EnergyMode::DenseExact).unwrap()
            };
            let mut current = energy(&x, &y);
            let mut sweeps = 0;
            loop {
                let mut changed = false;
                for i in 0..9 {
                    let mut best = (current, x[i], y[i]);
                    for l in 0..2u8 {
                        for m in 0..2u8 {
                            let (mut xx, mut yy) = (x.clone(), y.clone());
                            xx[i] = l;
                            yy[i] = m;
                            let e = energy(&xx, &yy);
                            if e < best.0 - 1e-12 {
                                best = (e, l, m);
                            }
                        }
                    }
                    if (best.1, best.2) != (x[i], y[i]) {
                        prop_assert!(best.0 < current);
                        current = best.0;
                        x[i] = best.1;
                        y[i] = best.2;
                        changed = true;
                    }
                }
                sweeps += 1;
                if !changed {
                    break;
                }
                prop_assert!(sweeps < 1000);
            }
        }
    }
}

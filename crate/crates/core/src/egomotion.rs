//! Stereo ego-motion and the geometric motion unary.
//!
//! Pixels are addressed as `(u, v) = (col, row)`. A static point seen at depth
//! `z` in frame `t` moves to `R * P + T` in frame `t + 1`; its predicted flow is
//! the projected displacement.

use nalgebra::{Matrix2, Matrix3, Matrix6, Rotation3, Vector2, Vector3, Vector6};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, LabelSpace, UnaryField};
use crate::tensor::Tensor;

/// Moving-label cost: the 95% chi-square quantile with two degrees of freedom.
pub const DEFAULT_TAU_MOVE: f64 = 5.99;
/// Disparity disagreement, in pixels, that marks a warped pixel as occluded.
pub const DEFAULT_OCCLUSION_TOLERANCE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub baseline: f64,
}

impl CameraRig {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64) -> Result<Self> {
        for (name, v) in [("fx", fx), ("fy", fy), ("baseline", baseline)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidArgument("principal point must be finite".into()));
        }
        Ok(Self { fx, fy, cx, cy, baseline })
    }

    pub fn depth_from_disparity(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NonPositiveDisparity(d));
        }
        Ok(self.fx * self.baseline / d)
    }

    pub fn disparity_from_depth(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) || !z.is_finite() {
            return Err(Error::NonPositiveDepth(z));
        }
        Ok(self.fx * self.baseline / z)
    }

    fn back_project(&self, u: f64, v: f64, z: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidMotion {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl RigidMotion {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        let det = rotation.determinant();
        if !(ortho <= 1e-9 && (det - 1.0).abs() <= 1e-9) || !translation.iter().all(|t| t.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "not a rigid motion (|RtR - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `axis_angle` (radians, axis scaled by angle) followed by `translation`.
    pub fn from_axis_angle(axis_angle: [f64; 3], translation: [f64; 3]) -> Self {
        Self {
            rotation: Rotation3::new(Vector3::from(axis_angle)).into_inner(),
            translation: Vector3::from(translation),
        }
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Angle of `self.rotation * other.rotationᵀ` in radians.
    pub fn rotation_error(&self, other: &RigidMotion) -> f64 {
        let rel = self.rotation * other.rotation.transpose();
        let c = ((rel.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        // acos loses precision near zero; the skew part keeps tiny angles exact
        let s = Vector3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]).norm() / 2.0;
        s.atan2(c)
    }
}

/// Dense flow, `N x 2` as `(du, dv)` per pixel. NaN marks invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    shape: GridShape,
    data: Vec<f64>,
}

impl FlowField {
    pub fn new(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "flow has {} values for {} pixels",
                data.len(),
                shape.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| v.is_infinite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { shape, data })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.dims[..] {
            [h, w, 2] => Self::new(GridShape::new(h as usize, w as usize)?, t.to_f64()),
            _ => Err(Error::ShapeMismatch(format!("flow tensor must be HxWx2, got {:?}", t.dims))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let dims = vec![self.shape.height() as u32, self.shape.width() as u32, 2];
        Tensor::from_f64(dims, &self.data).expect("dims match")
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize) -> Option<[f64; 2]> {
        let (u, v) = (self.data[2 * i], self.data[2 * i + 1]);
        (u.is_finite() && v.is_finite()).then_some([u, v])
    }
}

/// Dense disparity in pixels. Non-finite or non-positive entries are invalid.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityField {
    shape: GridShape,
    data: Vec<f64>,
}

impl DisparityField {
    pub fn new(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "disparity has {} values for {} pixels",
                data.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.dims[..] {
            [h, w] => Self::new(GridShape::new(h as usize, w as usize)?, t.to_f64()),
            _ => Err(Error::ShapeMismatch(format!("disparity tensor must be HxW, got {:?}", t.dims))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let dims = vec![self.shape.height() as u32, self.shape.width() as u32];
        Tensor::from_f64(dims, &self.data).expect("dims match")
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        let d = self.data[i];
        (d.is_finite() && d > 0.0).then_some(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionNoiseModel {
    pub sigma_flow: f64,
    pub sigma_disparity: f64,
}

impl MotionNoiseModel {
    pub fn new(sigma_flow: f64, sigma_disparity: f64) -> Result<Self> {
        if !(sigma_flow > 0.0 && sigma_disparity > 0.0 && sigma_flow.is_finite() && sigma_disparity.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise sigmas must be positive, got {sigma_flow} and {sigma_disparity}"
            )));
        }
        Ok(Self { sigma_flow, sigma_disparity })
    }
}

impl Default for MotionNoiseModel {
    fn default() -> Self {
        Self {
            sigma_flow: 1.0,
            sigma_disparity: 0.5,
        }
    }
}

pub fn lift_to_3d(u: f64, v: f64, disparity: f64, rig: &CameraRig) -> Result<Vector3<f64>> {
    let z = rig.depth_from_disparity(disparity)?;
    Ok(rig.back_project(u, v, z))
}

/// Least-squares rigid alignment `q ≈ R p + T` (Kabsch).
pub fn fit_rigid_motion(p: &[Vector3<f64>], q: &[Vector3<f64>]) -> Result<RigidMotion> {
    if p.len() != q.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} points", p.len(), q.len())));
    }
    if p.len() < 3 {
        return Err(Error::DegenerateConfiguration(format!("{} points, need 3", p.len())));
    }
    let n = p.len() as f64;
    let cp = p.iter().sum::<Vector3<f64>>() / n;
    let cq = q.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        let (da, db) = (a - cp, b - cq);
        h += da * db.transpose();
        spread += da * da.transpose();
    }
    let sv = spread.symmetric_eigenvalues();
    let (lo, hi) = (sv.min().max(0.0), sv.max());
    let mid = sv.sum() - lo - hi;
    if !(hi > 0.0) || mid <= 1e-12 * hi {
        return Err(Error::DegenerateConfiguration("points are collinear".into()));
    }
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let d = (vt.transpose() * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = vt.transpose() * fix * u.transpose();
    let translation = cq - rotation * cp;
    Ok(RigidMotion { rotation, translation })
}

pub fn predicted_flow(u: f64, v: f64, z: f64, motion: &RigidMotion, rig: &CameraRig) -> Result<[f64; 2]> {
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::NonPositiveDepth(z));
    }
    // scaled by 1/z so the identity motion maps the ray onto itself exactly
    let (x, y) = ((u - rig.cx) / rig.fx, (v - rig.cy) / rig.fy);
    let p = motion.rotation * Vector3::new(x, y, 1.0) + motion.translation / z;
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera);
    }
    Ok([rig.fx * (p.x / p.z - x), rig.fy * (p.y / p.z - y)])
}

/// Squared Mahalanobis norm of `measured - predicted` under `cov`.
pub fn motion_unary_single(measured: [f64; 2], predicted: [f64; 2], cov: &Matrix2<f64>) -> Result<f64> {
    let sym = (cov[(0, 1)] - cov[(1, 0)]).abs() <= 1e-12 * cov.abs().max().max(1.0);
    let det = cov.determinant();
    if !sym || !(cov[(0, 0)] > 0.0) || !(det > 1e-300) || !det.is_finite() {
        return Err(Error::SingularCovariance);
    }
    let r = Vector2::new(measured[0] - predicted[0], measured[1] - predicted[1]);
    let inv = cov.try_inverse().ok_or(Error::SingularCovariance)?;
    Ok((r.transpose() * inv * r)[(0, 0)].max(0.0))
}

/// `sigma_flow² I + J sigma_z² Jᵀ` with `J = d(predicted flow)/dz`.
pub fn build_covariance(
    u: f64,
    v: f64,
    z: f64,
    motion: &RigidMotion,
    rig: &CameraRig,
    noise: &MotionNoiseModel,
) -> Result<Matrix2<f64>> {
    let d = rig.disparity_from_depth(z)?;
    let sigma_z = rig.fx * rig.baseline / (d * d) * noise.sigma_disparity;
    let h = 1e-3 * z;
    let plus = predicted_flow(u, v, z + h, motion, rig)?;
    let minus = predicted_flow(u, v, z - h, motion, rig)?;
    let j = Vector2::new((plus[0] - minus[0]) / (2.0 * h), (plus[1] - minus[1]) / (2.0 * h));
    Ok(Matrix2::identity() * noise.sigma_flow.powi(2) + j * j.transpose() * sigma_z.powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    /// Inlier threshold on the flow residual, pixels.
    pub inlier_threshold: f64,
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 500,
            inlier_threshold: 3.0,
            min_inlier_ratio: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EgoMotionEstimate {
    pub motion: RigidMotion,
    /// Per pixel; false for invalid pixels.
    pub inliers: Vec<bool>,
    /// Inliers over valid pixels.
    pub inlier_ratio: f64,
}

struct Correspondence {
    u: f64,
    v: f64,
    z: f64,
    flow: [f64; 2],
    index: usize,
}

impl Correspondence {
    fn first(&self, rig: &CameraRig) -> Vector3<f64> {
        rig.back_project(self.u, self.v, self.z)
    }

    /// The flow-displaced pixel lifted at second-frame depth `z2`.
    fn second(&self, rig: &CameraRig, z2: f64) -> Vector3<f64> {
        rig.back_project(self.u + self.flow[0], self.v + self.flow[1], z2)
    }

    fn residual(&self, motion: &RigidMotion, rig: &CameraRig) -> Option<[f64; 2]> {
        let f = predicted_flow(self.u, self.v, self.z, motion, rig).ok()?;
        Some([f[0] - self.flow[0], f[1] - self.flow[1]])
    }
}

const TRANSPORT_ROUNDS: usize = 4;

/// Fits with second-frame depths transported through the current estimate,
/// starting from the first-frame depth.
fn fit_transported(set: &[&Correspondence], rig: &CameraRig) -> Result<RigidMotion> {
    let p: Vec<Vector3<f64>> = set.iter().map(|c| c.first(rig)).collect();
    let mut z2: Vec<f64> = set.iter().map(|c| c.z).collect();
    let mut motion = RigidMotion::identity();
    for _ in 0..TRANSPORT_ROUNDS {
        let q: Vec<Vector3<f64>> = set.iter().zip(&z2).map(|(c, &z)| c.second(rig, z)).collect();
        motion = fit_rigid_motion(&p, &q)?;
        for (zz, pp) in z2.iter_mut().zip(&p) {
            let t = motion.apply(pp).z;
            if t > 0.0 {
                *zz = t;
            }
        }
    }
    Ok(motion)
}

fn flow_cost(set: &[&Correspondence], motion: &RigidMotion, rig: &CameraRig) -> f64 {
    set.iter()
        .map(|c| c.residual(motion, rig).map_or(f64::INFINITY, |r| r[0] * r[0] + r[1] * r[1]))
        .sum()
}

/// Gauss-Newton on the summed squared flow residual.
fn refine(set: &[&Correspondence], start: RigidMotion, rig: &CameraRig) -> RigidMotion {
    let mut motion = start;
    let mut cost = flow_cost(set, &motion, rig);
    let perturb = |m: &RigidMotion, x: &Vector6<f64>| RigidMotion {
        rotation: Rotation3::new(Vector3::new(x[0], x[1], x[2])).into_inner() * m.rotation,
        translation: m.translation + Vector3::new(x[3], x[4], x[5]),
    };
    for _ in 0..30 {
        let mut jtj = Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for c in set {
            let Some(r) = c.residual(&motion, rig) else { continue };
            let mut jac = nalgebra::Matrix2x6::zeros();
            for k in 0..6 {
                let h = if k < 3 { 1e-7 } else { 1e-6 };
                let mut x = Vector6::zeros();
                x[k] = h;
                let (Some(a), Some(b)) = (c.residual(&perturb(&motion, &x), rig), c.residual(&perturb(&motion, &-x), rig)) else {
                    continue;
                };
                jac[(0, k)] = (a[0] - b[0]) / (2.0 * h);
                jac[(1, k)] = (a[1] - b[1]) / (2.0 * h);
            }
            jtj += jac.transpose() * jac;
            jtr += jac.transpose() * Vector2::new(r[0], r[1]);
        }
        let Some(step) = jtj.cholesky().map(|ch| ch.solve(&-jtr)) else { break };
        let mut scale = 1.0;
        let mut improved = false;
        while scale > 1e-4 {
            let cand = perturb(&motion, &(step * scale));
            let c2 = flow_cost(set, &cand, rig);
            if c2 <= cost {
                motion = cand;
                improved = c2 < cost;
                cost = c2;
                break;
            }
            scale *= 0.5;
        }
        if !improved || step.norm() * scale < 1e-13 {
            break;
        }
    }
    // re-orthonormalize accumulated rotation products
    let rot = Rotation3::from_matrix_eps(&motion.rotation, 1e-15, 50, Rotation3::identity());
    RigidMotion {
        rotation: rot.into_inner(),
        translation: motion.translation,
    }
}

fn inlier_mask(all: &[Correspondence], motion: &RigidMotion, rig: &CameraRig, tau: f64) -> Vec<bool> {
    all.iter()
        .map(|c| c.residual(motion, rig).is_some_and(|r| r[0] * r[0] + r[1] * r[1] < tau * tau))
        .collect()
}

/// Robust ego-motion from one flow / disparity pair.
pub fn ransac_ego_motion(
    flow: &FlowField,
    disparity: &DisparityField,
    rig: &CameraRig,
    params: &RansacParams,
) -> Result<EgoMotionEstimate> {
    let shape = flow.shape();
    if disparity.shape() != shape {
        return Err(Error::ShapeMismatch("flow and disparity grids differ".into()));
    }
    if params.iterations == 0 || !(params.inlier_threshold > 0.0) {
        return Err(Error::InvalidArgument("ransac needs iterations >= 1 and a positive threshold".into()));
    }
    let all: Vec<Correspondence> = (0..shape.len())
        .filter_map(|i| {
            let f = flow.get(i)?;
            let d = disparity.get(i)?;
            let (row, col) = shape.coords(i);
            Some(Correspondence {
                u: col as f64,
                v: row as f64,
                z: rig.depth_from_disparity(d).ok()?,
                flow: f,
                index: i,
            })
        })
        .collect();
    if all.len() < 3 {
        return Err(Error::InsufficientData(format!("{} valid pixels", all.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, RigidMotion)> = None;
    for _ in 0..params.iterations {
        let idx = sample(&mut rng, all.len(), 3);
        let set: Vec<&Correspondence> = idx.iter().map(|k| &all[k]).collect();
        let Ok(motion) = fit_transported(&set, rig) else { continue };
        let motion = refine(&set, motion, rig);
        let count = inlier_mask(&all, &motion, rig, params.inlier_threshold)
            .iter()
            .filter(|&&b| b)
            .count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, motion));
        }
    }
    let (mut count, mut motion) = best.ok_or_else(|| Error::DegenerateConfiguration("every sample was degenerate".into()))?;
    let mut mask = inlier_mask(&all, &motion, rig, params.inlier_threshold);
    for _ in 0..3 {
        let set: Vec<&Correspondence> = all.iter().zip(&mask).filter(|(_, &m)| m).map(|(c, _)| c).collect();
        if set.len() < 3 {
            break;
        }
        let start = fit_transported(&set, rig).unwrap_or(motion);
        let refined = refine(&set, start, rig);
        let new_mask = inlier_mask(&all, &refined, rig, params.inlier_threshold);
        let new_count = new_mask.iter().filter(|&&b| b).count();
        if new_count < count {
            break;
        }
        let done = new_mask == mask;
        (motion, mask, count) = (refined, new_mask, new_count);
        if done {
            break;
        }
    }
    let ratio = count as f64 / all.len() as f64;
    if ratio < params.min_inlier_ratio {
        return Err(Error::NoConsensus {
            ratio,
            min: params.min_inlier_ratio,
        });
    }
    let mut inliers = vec![false; shape.len()];
    for (c, &m) in all.iter().zip(&mask) {
        inliers[c.index] = m;
    }
    Ok(EgoMotionEstimate {
        motion,
        inliers,
        inlier_ratio: ratio,
    })
}

/// Three consecutive frames: flows `0→1` and `1→2`, a disparity map per frame
/// and the ego-motion of each pair. Labels refer to frame 0.
#[derive(Clone, Debug)]
pub struct FrameBundle {
    pub flows: [FlowField; 2],
    pub disparities: [DisparityField; 3],
    pub motions: [RigidMotion; 2],
}

impl FrameBundle {
    pub fn shape(&self) -> GridShape {
        self.flows[0].shape()
    }

    fn check(&self) -> Result<()> {
        let s = self.shape();
        let ok = self.flows.iter().all(|f| f.shape() == s) && self.disparities.iter().all(|d| d.shape() == s);
        if ok {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("frame bundle grids differ".into()))
        }
    }
}

fn pair_cost(
    i: usize,
    flow: &FlowField,
    disparity: &DisparityField,
    motion: &RigidMotion,
    rig: &CameraRig,
    noise: &MotionNoiseModel,
) -> Option<f64> {
    let measured = flow.get(i)?;
    let z = rig.depth_from_disparity(disparity.get(i)?).ok()?;
    let (row, col) = flow.shape().coords(i);
    let (u, v) = (col as f64, row as f64);
    let pred = predicted_flow(u, v, z, motion, rig).ok()?;
    let cov = build_covariance(u, v, z, motion, rig, noise).ok()?;
    motion_unary_single(measured, pred, &cov).ok()
}

/// Costs `[stationary, moving]` per pixel of frame 0.
///
/// The stationary cost averages the Mahalanobis costs of the available frame
/// pairs, the second pair read at the nearest forward-warped pixel. Pixels with
/// no usable pair get two zero costs. Uses [`DEFAULT_OCCLUSION_TOLERANCE`].
pub fn motion_unary_field(
    bundle: &FrameBundle,
    rig: &CameraRig,
    noise: &MotionNoiseModel,
    tau_move: f64,
) -> Result<UnaryField> {
    motion_unary_field_with_occlusion(bundle, rig, noise, tau_move, DEFAULT_OCCLUSION_TOLERANCE)
}

/// [`motion_unary_field`] with an explicit occlusion tolerance.
///
/// The warped pixel counts as invalid when its frame-1 disparity differs from
/// the disparity of the point carried there by the first ego-motion by more
/// than `occlusion_tolerance` pixels. `f64::INFINITY` disables the check.
pub fn motion_unary_field_with_occlusion(
    bundle: &FrameBundle,
    rig: &CameraRig,
    noise: &MotionNoiseModel,
    tau_move: f64,
    occlusion_tolerance: f64,
) -> Result<UnaryField> {
    bundle.check()?;
    if !(tau_move >= 0.0) || !tau_move.is_finite() {
        return Err(Error::InvalidArgument(format!("tau_move must be finite and >= 0, got {tau_move}")));
    }
    if !(occlusion_tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!("occlusion tolerance must be >= 0, got {occlusion_tolerance}")));
    }
    let shape = bundle.shape();
    let mut costs = Vec::with_capacity(2 * shape.len());
    for i in 0..shape.len() {
        let first = pair_cost(i, &bundle.flows[0], &bundle.disparities[0], &bundle.motions[0], rig, noise);
        let second = bundle.flows[0].get(i).and_then(|f| {
            let (row, col) = shape.coords(i);
            let r = (row as f64 + f[1]).round();
            let c = (col as f64 + f[0]).round();
            if !shape.contains(r as isize, c as isize) {
                return None;
            }
            let j = shape.index(r as usize, c as usize);
            if occlusion_tolerance.is_finite() {
                let found = bundle.disparities[1].get(j)?;
                if let Some(d) = bundle.disparities[0].get(i) {
                    let p = bundle.motions[0].apply(&lift_to_3d(col as f64, row as f64, d, rig).ok()?);
                    let carried = rig.disparity_from_depth(p.z).ok()?;
                    if (found - carried).abs() > occlusion_tolerance {
                        return None;
                    }
                }
            }
            pair_cost(j, &bundle.flows[1], &bundle.disparities[1], &bundle.motions[1], rig, noise)
        });
        let (sum, count) = [first, second].into_iter().flatten().fold((0.0, 0), |(s, n), c| (s + c, n + 1));
        if count == 0 {
            costs.extend([0.0, 0.0]);
        } else {
            costs.extend([sum / count as f64, tau_move]);
        }
    }
    UnaryField::new(shape, LabelSpace::motion(), costs)
}

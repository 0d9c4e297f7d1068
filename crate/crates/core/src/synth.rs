//! Synthetic three-frame stereo scene with one independently moving box.
//!
//! The world is a tilted ground plane, cut off at a far limit that leaves a
//! band of sky (no disparity) at the top of frame 0, plus a planar
//! fronto-parallel box. The camera moves by the same ego-motion between
//! consecutive frames; box points additionally move by `box_velocity`
//! (camera coordinates, meters per frame).

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::egomotion::{
    motion_unary_field, predicted_flow, CameraRig, DisparityField, FlowField, FrameBundle, MotionNoiseModel, RigidMotion,
    DEFAULT_TAU_MOVE,
};
use crate::error::{Error, Result};
use crate::filter::Image;
use crate::grid::{GridShape, LabelField, LabelSpace, UnaryField};
use crate::learning::TrainingSet;

pub const OBJECT_LABELS: [&str; 4] = ["sky", "building", "road", "car"];
const SKY: u8 = 0;
const BUILDING: u8 = 1;
const ROAD: u8 = 2;
const CAR: u8 = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub rig: CameraRig,
    pub ego: RigidMotion,
    /// Rows of sky at the top of frame 0.
    pub sky_rows: usize,
    /// First road row; rows above it (below the sky) are building.
    pub road_row: usize,
    /// Ground depth at the top and bottom image rows of frame 0, meters.
    pub near_depth: f64,
    pub far_depth: f64,
    /// `(top, left, height, width)` of the box in frame 0, pixels.
    pub box_rect: (usize, usize, usize, usize),
    pub box_depth: f64,
    pub box_velocity: [f64; 3],
    /// Share of unary noise blocks whose preferred label is wrong.
    pub unary_noise: f64,
    pub noise_block: usize,
    /// Probability the unary assigns to its preferred label.
    pub unary_confidence: f64,
    /// Standard deviation of additive flow noise, pixels.
    pub flow_noise: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let (height, width) = (96, 128);
        Self {
            height,
            width,
            seed: 0,
            rig: CameraRig::new(100.0, 100.0, width as f64 / 2.0, height as f64 / 2.0, 0.5).expect("valid rig"),
            ego: RigidMotion::from_axis_angle([0.0, 0.005, 0.0], [0.05, 0.0, -0.8]),
            sky_rows: 12,
            road_row: 54,
            near_depth: 10.0,
            far_depth: 40.0,
            box_rect: (34, 40, 32, 44),
            box_depth: 12.0,
            box_velocity: [1.0, 0.0, 0.0],
            unary_noise: 0.1,
            noise_block: 4,
            unary_confidence: 0.7,
            flow_noise: 0.0,
        }
    }
}

impl SceneConfig {
    /// The default layout resampled to `height x width`; focal lengths, bands and the box scale with the image.
    pub fn with_size(height: usize, width: usize) -> Result<Self> {
        let base = Self::default();
        let sy = |v: usize| v * height / base.height;
        let sx = |v: usize| v * width / base.width;
        let (top, left, h, w) = base.box_rect;
        let rig = CameraRig::new(
            base.rig.fx * width as f64 / base.width as f64,
            base.rig.fy * height as f64 / base.height as f64,
            width as f64 / 2.0,
            height as f64 / 2.0,
            base.rig.baseline,
        )?;
        Ok(Self {
            height,
            width,
            rig,
            sky_rows: sy(base.sky_rows),
            road_row: sy(base.road_row),
            box_rect: (sy(top), sx(left), sy(h).max(1), sx(w).max(1)),
            ..base
        })
    }

    fn validate(&self) -> Result<GridShape> {
        let shape = GridShape::new(self.height, self.width)?;
        let (top, left, h, w) = self.box_rect;
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(Error::InvalidArgument(format!("box {:?} does not fit the image", self.box_rect)));
        }
        if self.sky_rows >= self.height || self.road_row < self.sky_rows {
            return Err(Error::InvalidArgument("band rows out of order".into()));
        }
        if !(self.near_depth > 0.0 && self.far_depth > self.near_depth && self.box_depth > 0.0) {
            return Err(Error::InvalidArgument("depths must be positive with near < far".into()));
        }
        if !(0.0..=1.0).contains(&self.unary_noise) || self.noise_block == 0 {
            return Err(Error::InvalidArgument("unary noise must lie in [0, 1] with a positive block size".into()));
        }
        if !(self.unary_confidence > 0.25 && self.unary_confidence < 1.0) {
            return Err(Error::InvalidArgument("unary confidence must lie in (0.25, 1)".into()));
        }
        if !(self.flow_noise >= 0.0) || !self.flow_noise.is_finite() {
            return Err(Error::InvalidArgument("flow noise must be finite and >= 0".into()));
        }
        Ok(shape)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub object_labels: LabelSpace,
    /// Grayscale intensity of frame 0.
    pub image: Image,
    pub flows: [FlowField; 2],
    pub disparities: [DisparityField; 3],
    pub object_unary: UnaryField,
    pub gt_object: LabelField,
    pub gt_motion: LabelField,
}

#[derive(Clone, Copy)]
enum Surface {
    Sky,
    Ground(f64),
    Box(f64),
}

/// Scene geometry expressed in one camera frame.
struct FrameGeometry {
    /// Ground plane `n · P = 1`.
    normal: Vector3<f64>,
    /// World-to-camera pose, used for the far cut-off.
    pose: RigidMotion,
    far_limit: f64,
    corner: Vector3<f64>,
    edges: [Vector3<f64>; 2],
    extent: [f64; 2],
}

impl FrameGeometry {
    fn cast(&self, ray: &Vector3<f64>) -> Surface {
        let mut hit = Surface::Sky;
        let denom = self.normal.dot(ray);
        if denom > 0.0 {
            let z = 1.0 / denom;
            let world = self.pose.rotation.transpose() * (ray * z - self.pose.translation);
            if world.z <= self.far_limit {
                hit = Surface::Ground(z);
            }
        }
        let m = Matrix3::from_columns(&[*ray, -self.edges[0], -self.edges[1]]);
        if let Some(sol) = m.try_inverse().map(|inv| inv * self.corner) {
            let (z, s, t) = (sol[0], sol[1], sol[2]);
            let inside = z > 0.0 && (0.0..=self.extent[0]).contains(&s) && (0.0..=self.extent[1]).contains(&t);
            let nearer = match hit {
                Surface::Ground(g) => z < g,
                _ => true,
            };
            if inside && nearer {
                hit = Surface::Box(z);
            }
        }
        hit
    }
}

fn compose(a: &RigidMotion, b: &RigidMotion) -> RigidMotion {
    // a after b
    RigidMotion {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

fn intensity(label: u8, row: usize, col: usize) -> f64 {
    let (r, c) = (row as f64, col as f64);
    match label {
        SKY => 215.0 + 4.0 * (0.21 * c).sin(),
        BUILDING | CAR => 120.0 + 12.0 * (0.45 * c).sin() * (0.3 * r).cos(),
        _ => 70.0 + 6.0 * (0.17 * c + 0.29 * r).sin(),
    }
}

impl SyntheticScene {
    pub fn generate(config: &SceneConfig) -> Result<Self> {
        let shape = config.validate()?;
        let rig = &config.rig;
        let rays: Vec<Vector3<f64>> = (0..shape.len())
            .map(|i| {
                let (row, col) = shape.coords(i);
                Vector3::new((col as f64 - rig.cx) / rig.fx, (row as f64 - rig.cy) / rig.fy, 1.0)
            })
            .collect();
        // inverse depth linear in the normalized row coordinate
        let y_top = -rig.cy / rig.fy;
        let y_bot = (config.height as f64 - 1.0 - rig.cy) / rig.fy;
        let b = (1.0 / config.near_depth - 1.0 / config.far_depth) / (y_bot - y_top);
        let a = 1.0 / config.far_depth - b * y_top;
        let normal0 = Vector3::new(0.0, b, a);
        let y_cut = (config.sky_rows as f64 - 0.5 - rig.cy) / rig.fy;
        let far_limit = 1.0 / (a + b * y_cut);

        let (top, left, bh, bw) = config.box_rect;
        let zc = config.box_depth;
        let corner0 = Vector3::new((left as f64 - 0.5 - rig.cx) * zc / rig.fx, (top as f64 - 0.5 - rig.cy) * zc / rig.fy, zc);
        let extent = [bw as f64 * zc / rig.fx, bh as f64 * zc / rig.fy];
        let velocity = Vector3::from(config.box_velocity);

        let mut frames = Vec::with_capacity(3);
        let mut pose = RigidMotion::identity();
        let mut corner = corner0;
        let mut edges = [Vector3::x(), Vector3::y()];
        for _ in 0..3 {
            let rn = pose.rotation * normal0;
            frames.push(FrameGeometry {
                normal: rn / (1.0 + rn.dot(&pose.translation)),
                pose,
                far_limit,
                corner,
                edges,
                extent,
            });
            pose = compose(&config.ego, &pose);
            corner = config.ego.apply(&corner) + velocity;
            edges = edges.map(|e| config.ego.rotation * e);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let noise = (config.flow_noise > 0.0).then(|| Normal::new(0.0, config.flow_noise).expect("finite sigma"));
        let rotation_only = RigidMotion {
            rotation: config.ego.rotation,
            translation: Vector3::zeros(),
        };
        let mut disparities = Vec::with_capacity(3);
        let mut flows = Vec::with_capacity(2);
        let mut surfaces0 = Vec::new();
        for (k, frame) in frames.iter().enumerate() {
            let surfaces: Vec<Surface> = rays.iter().map(|r| frame.cast(r)).collect();
            let disp = surfaces
                .iter()
                .map(|s| match s {
                    Surface::Sky => f64::NAN,
                    Surface::Ground(z) | Surface::Box(z) => rig.fx * rig.baseline / z,
                })
                .collect();
            disparities.push(DisparityField::new(shape, disp)?);
            if k < 2 {
                let mut flow = Vec::with_capacity(2 * shape.len());
                for (i, s) in surfaces.iter().enumerate() {
                    let (row, col) = shape.coords(i);
                    let (u, v) = (col as f64, row as f64);
                    let f = match *s {
                        Surface::Sky => predicted_flow(u, v, 1.0, &rotation_only, rig)?,
                        Surface::Ground(z) => predicted_flow(u, v, z, &config.ego, rig)?,
                        Surface::Box(z) => {
                            let p = config.ego.apply(&(rays[i] * z)) + velocity;
                            if !(p.z > 0.0) {
                                return Err(Error::BehindCamera);
                            }
                            [rig.fx * p.x / p.z + rig.cx - u, rig.fy * p.y / p.z + rig.cy - v]
                        }
                    };
                    match &noise {
                        Some(n) => flow.extend([f[0] + n.sample(&mut rng), f[1] + n.sample(&mut rng)]),
                        None => flow.extend(f),
                    }
                }
                flows.push(FlowField::new(shape, flow)?);
            }
            if k == 0 {
                surfaces0 = surfaces;
            }
        }

        let labels = LabelSpace::new(OBJECT_LABELS)?;
        let moving = velocity != Vector3::zeros();
        let mut gt_object = Vec::with_capacity(shape.len());
        let mut gt_motion = Vec::with_capacity(shape.len());
        let mut image = Vec::with_capacity(shape.len());
        for (i, s) in surfaces0.iter().enumerate() {
            let (row, col) = shape.coords(i);
            let label = match s {
                Surface::Sky => SKY,
                Surface::Box(_) => CAR,
                Surface::Ground(_) if row < config.road_row => BUILDING,
                Surface::Ground(_) => ROAD,
            };
            gt_object.push(label);
            gt_motion.push(u8::from(label == CAR && moving));
            image.push(intensity(label, row, col) + rng.random_range(-2.0..2.0));
        }

        let n = labels.count();
        let other = (1.0 - config.unary_confidence) / (n - 1) as f64;
        let (hi, lo) = (-config.unary_confidence.ln(), -other.ln());
        let blocks_x = config.width.div_ceil(config.noise_block);
        let blocks_y = config.height.div_ceil(config.noise_block);
        let shifts: Vec<usize> = (0..blocks_x * blocks_y)
            .map(|_| {
                if rng.random_bool(config.unary_noise) {
                    rng.random_range(1..n)
                } else {
                    0
                }
            })
            .collect();
        let mut costs = Vec::with_capacity(shape.len() * n);
        for (i, &truth) in gt_object.iter().enumerate() {
            let (row, col) = shape.coords(i);
            let shift = shifts[(row / config.noise_block) * blocks_x + col / config.noise_block];
            let preferred = (truth as usize + shift) % n;
            costs.extend((0..n).map(|l| if l == preferred { hi } else { lo }));
        }

        Ok(Self {
            config: config.clone(),
            image: Image::new(shape, 1, image)?,
            flows: flows.try_into().expect("two flows"),
            disparities: disparities.try_into().expect("three disparities"),
            object_unary: UnaryField::new(shape, labels.clone(), costs)?,
            gt_object: LabelField::new(shape, labels.clone(), gt_object)?,
            gt_motion: LabelField::new(shape, LabelSpace::motion(), gt_motion)?,
            object_labels: labels,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.image.shape()
    }

    /// Training rows `[intensity / 255, capped stationary cost / 20, row / height]`
    /// under the true ego-motion, with the ground-truth labels as targets.
    pub fn training_set(&self, noise: &MotionNoiseModel) -> Result<TrainingSet> {
        let shape = self.shape();
        let unary = motion_unary_field(&self.bundle([self.config.ego; 2]), &self.config.rig, noise, DEFAULT_TAU_MOVE)?;
        let mut features = Vec::with_capacity(3 * shape.len());
        for i in 0..shape.len() {
            let (row, _) = shape.coords(i);
            features.extend([
                self.image.pixel(i)[0] / 255.0,
                unary.pixel(i)[0].min(20.0) / 20.0,
                row as f64 / shape.height() as f64,
            ]);
        }
        let target = |f: &LabelField| (0..shape.len()).map(|i| f.get(i).unwrap_or(0)).collect();
        TrainingSet::new(
            3,
            features,
            target(&self.gt_object),
            target(&self.gt_motion),
            self.object_labels.clone(),
            LabelSpace::motion(),
        )
    }

    /// The frame bundle with the given ego-motion estimates.
    pub fn bundle(&self, motions: [RigidMotion; 2]) -> FrameBundle {
        FrameBundle {
            flows: self.flows.clone(),
            disparities: self.disparities.clone(),
            motions,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_pixels_follow_ego_motion_exactly() {
        let scene = SyntheticScene::generate(&SceneConfig::default()).unwrap();
        let rig = scene.config.rig;
        let shape = scene.shape();
        let mut checked = 0;
        for i in 0..shape.len() {
            if scene.gt_motion.get(i) == Some(1) {
                continue;
            }
            let Some(d) = scene.disparities[0].get(i) else { continue };
            let (row, col) = shape.coords(i);
            let z = rig.depth_from_disparity(d).unwrap();
            let p = predicted_flow(col as f64, row as f64, z, &scene.config.ego, &rig).unwrap();
            let f = scene.flows[0].get(i).unwrap();
            assert!((p[0] - f[0]).abs() < 1e-9 && (p[1] - f[1]).abs() < 1e-9);
            checked += 1;
        }
        assert!(checked > shape.len() / 2);
    }

    #[test]
    fn layout_and_labels() {
        let config = SceneConfig::default();
        let scene = SyntheticScene::generate(&config).unwrap();
        let shape = scene.shape();
        let (top, left, h, w) = config.box_rect;
        for i in 0..shape.len() {
            let (row, col) = shape.coords(i);
            let in_box = (top..top + h).contains(&row) && (left..left + w).contains(&col);
            assert_eq!(scene.gt_object.get(i) == Some(CAR as usize), in_box, "pixel {row},{col}");
            assert_eq!(scene.gt_motion.get(i) == Some(1), in_box);
            assert_eq!(scene.disparities[0].get(i).is_none(), row < config.sky_rows && !in_box);
        }
    }

    #[test]
    fn noise_blocks_flip_about_the_requested_share() {
        let scene = SyntheticScene::generate(&SceneConfig::default()).unwrap();
        let u = &scene.object_unary;
        let wrong = (0..scene.shape().len())
            .filter(|&i| crate::grid::argmin(u.pixel(i)) != scene.gt_object.get(i).unwrap())
            .count() as f64
            / scene.shape().len() as f64;
        assert!((0.05..0.15).contains(&wrong), "{wrong}");
    }

    #[test]
    fn resized_layouts() {
        assert_eq!(SceneConfig::with_size(96, 128).unwrap(), SceneConfig::default());
        let half = SceneConfig::with_size(48, 64).unwrap();
        assert_eq!((half.rig.fx, half.rig.cx, half.sky_rows, half.box_rect), (50.0, 32.0, 6, (17, 20, 16, 22)));
        let scene = SyntheticScene::generate(&half).unwrap();
        let moving = scene.gt_motion.assignment().iter().filter(|&&m| m == 1).count();
        assert!(moving > 0 && moving <= 16 * 22);
        assert!(SceneConfig::with_size(0, 64).is_err());
    }

    #[test]
    fn resting_box_is_stationary_and_generation_is_deterministic() {
        let config = SceneConfig {
            box_velocity: [0.0; 3],
            ..SceneConfig::default()
        };
        let scene = SyntheticScene::generate(&config).unwrap();
        assert!(scene.gt_motion.assignment().iter().all(|&m| m == 0));
        let noisy = SceneConfig { flow_noise: 0.5, seed: 3, ..SceneConfig::default() };
        let a = SyntheticScene::generate(&noisy).unwrap();
        let b = SyntheticScene::generate(&noisy).unwrap();
        assert_eq!(a.flows, b.flows);
        assert_eq!(a.object_unary, b.object_unary);
    }
}

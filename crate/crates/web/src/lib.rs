//! wasm-bindgen bindings behind `www/index.html`.
//!
//! Images cross the boundary as RGBA bytes, row-major, `width * height * 4` long.

use jointseg::egomotion::{ransac_ego_motion, RansacParams};
use jointseg::evaluation::{accumulate_confusion, iou_per_class, ConfusionMatrix};
use jointseg::filter::{build_features, fast_filter, FeatureMode, FilterAccuracy, KernelSpec};
use jointseg::grid::{argmin, LabelField};
use jointseg::learning::cooccurrence_lambda;
use jointseg::pipeline::{run_pipeline, PipelineInputs, PipelineParams};
use jointseg::potentials::KernelParams;
use jointseg::synth::{SceneConfig, SyntheticScene};
use wasm_bindgen::prelude::*;

const OBJECT_COLORS: [[u8; 3]; 4] = [[135, 190, 235], [150, 110, 80], [90, 90, 90], [230, 200, 40]];
const MOTION_COLORS: [[u8; 3]; 2] = [[0, 0, 255], [255, 0, 0]];

fn err(e: jointseg::Error) -> JsError {
    JsError::new(&e.to_string())
}

fn paint(labels: &LabelField, colors: &[[u8; 3]]) -> Vec<u8> {
    labels
        .assignment()
        .iter()
        .flat_map(|&l| {
            let [r, g, b] = colors.get(l as usize).copied().unwrap_or([0, 0, 0]);
            [r, g, b, 255]
        })
        .collect()
}

fn gray(values: impl Iterator<Item = f64>, scale: f64) -> Vec<u8> {
    values
        .flat_map(|v| {
            let g = (v * scale).clamp(0.0, 255.0) as u8;
            [g, g, g, 255]
        })
        .collect()
}

/// A synthetic three-frame scene at half resolution (48 x 64).
#[wasm_bindgen]
pub struct Scene {
    scene: SyntheticScene,
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, box_speed: f64, unary_noise: f64, flow_noise: f64) -> Result<Scene, JsError> {
        let config = SceneConfig {
            seed,
            box_velocity: [box_speed, 0.0, 0.0],
            unary_noise,
            flow_noise,
            ..SceneConfig::with_size(48, 64).map_err(err)?
        };
        Ok(Scene { scene: SyntheticScene::generate(&config).map_err(err)? })
    }

    pub fn width(&self) -> usize {
        self.scene.config.width
    }

    pub fn height(&self) -> usize {
        self.scene.config.height
    }

    pub fn image(&self) -> Vec<u8> {
        gray(self.scene.image.data().iter().copied(), 1.0)
    }

    pub fn truth_objects(&self) -> Vec<u8> {
        paint(&self.scene.gt_object, &OBJECT_COLORS)
    }

    pub fn truth_motion(&self) -> Vec<u8> {
        paint(&self.scene.gt_motion, &MOTION_COLORS)
    }

    /// Argmin of the noisy object unaries.
    pub fn unary_objects(&self) -> Vec<u8> {
        let u = &self.scene.object_unary;
        let labels = (0..u.shape().len()).map(|i| argmin(u.pixel(i)) as u8).collect();
        let field = LabelField::new(u.shape(), u.labels().clone(), labels).expect("argmin is in range");
        paint(&field, &OBJECT_COLORS)
    }

    /// Full pipeline with the correlation term learned from this scene's ground truth.
    pub fn segment(&self, w_corr: f64, theta_beta: f64, iterations: usize) -> Result<Segmentation, JsError> {
        let s = &self.scene;
        let correlation = cooccurrence_lambda(std::slice::from_ref(&s.gt_object), std::slice::from_ref(&s.gt_motion)).map_err(err)?;
        let mut params = PipelineParams {
            kernel: KernelParams { theta_beta, ..KernelParams::default() },
            w_corr,
            ..PipelineParams::default()
        };
        params.inference.max_iterations = iterations;
        let inputs = PipelineInputs {
            object_unary: &s.object_unary,
            image: &s.image,
            flows: &s.flows,
            disparities: &s.disparities,
            rig: &s.config.rig,
            correlation: Some(&correlation),
        };
        let out = run_pipeline(&inputs, &params).map_err(err)?;
        let r = &out.result;
        let iou = |pred: &LabelField, gt: &LabelField| -> Result<Vec<f64>, JsError> {
            let cm = accumulate_confusion(pred, gt, ConfusionMatrix::new(gt.labels().clone())).map_err(err)?;
            Ok(iou_per_class(&cm).into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
        };
        let motion_cost = out.motion_unary.costs().chunks_exact(2).map(|c| c[1] - c[0] + 10.0);
        Ok(Segmentation {
            objects: paint(&r.labels_object, &OBJECT_COLORS),
            motion: paint(&r.labels_motion, &MOTION_COLORS),
            motion_evidence: gray(motion_cost, 12.75),
            object_iou: iou(&r.labels_object, &s.gt_object)?,
            motion_iou: iou(&r.labels_motion, &s.gt_motion)?,
            iterations: r.iterations,
            residual: r.residual,
            inlier_ratio: out.ego[0].inlier_ratio,
        })
    }

    /// Ego-motion of the first frame pair; inliers white, outliers black.
    pub fn ego_motion(&self, iterations: usize, threshold: f64, seed: u64) -> Result<EgoMotion, JsError> {
        let s = &self.scene;
        let params = RansacParams { iterations, inlier_threshold: threshold, seed, ..RansacParams::default() };
        let e = ransac_ego_motion(&s.flows[0], &s.disparities[0], &s.config.rig, &params).map_err(err)?;
        let truth = &s.config.ego;
        Ok(EgoMotion {
            inliers: gray(e.inliers.iter().map(|&b| if b { 255.0 } else { 0.0 }), 1.0),
            inlier_ratio: e.inlier_ratio,
            rotation_error_deg: e.motion.rotation_error(truth).to_degrees(),
            translation_error: (e.motion.translation - truth.translation).norm(),
            translation: vec![e.motion.translation.x, e.motion.translation.y, e.motion.translation.z],
        })
    }

    /// Appearance-kernel response to a unit impulse at `(row, col)`, normalized to its peak.
    pub fn kernel_response(&self, row: usize, col: usize, theta_spatial: f64, theta_intensity: f64) -> Result<Vec<u8>, JsError> {
        let s = &self.scene;
        let shape = s.image.shape();
        if row >= shape.height() || col >= shape.width() {
            return Err(JsError::new("pixel outside the image"));
        }
        let features = build_features(
            shape,
            FeatureMode::BilateralIntensity { image: &s.image, theta_spatial, theta_intensity },
        )
        .map_err(err)?;
        let mut impulse = vec![0.0; shape.len()];
        impulse[shape.index(row, col)] = 1.0;
        let kernel = KernelSpec::single(0..features.dim(), 1.0).map_err(err)?;
        let mut out = fast_filter(&impulse, 1, &features, &kernel, FilterAccuracy::default()).map_err(err)?;
        // message passing skips the pixel itself
        out[shape.index(row, col)] += 1.0;
        let peak = out.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
        Ok(gray(out.into_iter(), 255.0 / peak))
    }
}

#[wasm_bindgen]
pub struct Segmentation {
    objects: Vec<u8>,
    motion: Vec<u8>,
    motion_evidence: Vec<u8>,
    object_iou: Vec<f64>,
    motion_iou: Vec<f64>,
    iterations: usize,
    residual: f64,
    inlier_ratio: f64,
}

#[wasm_bindgen]
impl Segmentation {
    pub fn objects(&self) -> Vec<u8> {
        self.objects.clone()
    }

    pub fn motion(&self) -> Vec<u8> {
        self.motion.clone()
    }

    /// Brighter where the moving hypothesis is cheaper than the stationary one.
    pub fn motion_evidence(&self) -> Vec<u8> {
        self.motion_evidence.clone()
    }

    /// IoU per object label; NaN where a label never occurs.
    pub fn object_iou(&self) -> Vec<f64> {
        self.object_iou.clone()
    }

    /// IoU of stationary and moving.
    pub fn motion_iou(&self) -> Vec<f64> {
        self.motion_iou.clone()
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn inlier_ratio(&self) -> f64 {
        self.inlier_ratio
    }
}

#[wasm_bindgen]
pub struct EgoMotion {
    inliers: Vec<u8>,
    inlier_ratio: f64,
    rotation_error_deg: f64,
    translation_error: f64,
    translation: Vec<f64>,
}

#[wasm_bindgen]
impl EgoMotion {
    pub fn inliers(&self) -> Vec<u8> {
        self.inliers.clone()
    }

    pub fn inlier_ratio(&self) -> f64 {
        self.inlier_ratio
    }

    pub fn rotation_error_deg(&self) -> f64 {
        self.rotation_error_deg
    }

    /// Meters.
    pub fn translation_error(&self) -> f64 {
        self.translation_error
    }

    pub fn translation(&self) -> Vec<f64> {
        self.translation.clone()
    }
}

/// Object label names in palette order, comma-separated.
#[wasm_bindgen]
pub fn object_labels() -> String {
    jointseg::synth::OBJECT_LABELS.join(",")
}

#[wasm_bindgen]
pub fn object_palette() -> Vec<u8> {
    OBJECT_COLORS.concat()
}

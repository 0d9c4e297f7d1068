//! Ego-motion, motion unaries and joint inference chained together.

use crate::egomotion::{
    motion_unary_field_with_occlusion, ransac_ego_motion, CameraRig, DisparityField, EgoMotionEstimate, FlowField,
    FrameBundle, MotionNoiseModel, RansacParams, DEFAULT_OCCLUSION_TOLERANCE, DEFAULT_TAU_MOVE,
};
use crate::error::{Error, Result};
use crate::filter::Image;
use crate::grid::{LabelSpace, UnaryField};
use crate::inference::{run_inference, run_layer_inference, InferenceConfig, InferenceResult, Layer, LayerResult};
use crate::potentials::{CorrelationMatrix, JointModel, KernelParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineParams {
    pub kernel: KernelParams,
    pub noise: MotionNoiseModel,
    pub inference: InferenceConfig,
    pub ransac: RansacParams,
    pub tau_move: f64,
    pub occlusion_tolerance: f64,
    pub w_corr: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            kernel: KernelParams::default(),
            noise: MotionNoiseModel::default(),
            inference: InferenceConfig::default(),
            ransac: RansacParams::default(),
            tau_move: DEFAULT_TAU_MOVE,
            occlusion_tolerance: DEFAULT_OCCLUSION_TOLERANCE,
            w_corr: 1.0,
        }
    }
}

pub struct PipelineInputs<'a> {
    pub object_unary: &'a UnaryField,
    pub image: &'a Image,
    pub flows: &'a [FlowField; 2],
    pub disparities: &'a [DisparityField; 3],
    pub rig: &'a CameraRig,
    /// Correlation entries; its own weight is replaced by `w_corr`. `None` means all zero.
    pub correlation: Option<&'a CorrelationMatrix>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub ego: [EgoMotionEstimate; 2],
    pub motion_unary: UnaryField,
    pub result: InferenceResult,
}

/// Estimates both ego-motions, builds the motion unaries and runs joint inference.
pub fn run_pipeline(inputs: &PipelineInputs<'_>, params: &PipelineParams) -> Result<PipelineOutput> {
    let e0 = ransac_ego_motion(&inputs.flows[0], &inputs.disparities[0], inputs.rig, &params.ransac)?;
    let e1 = ransac_ego_motion(&inputs.flows[1], &inputs.disparities[1], inputs.rig, &params.ransac)?;
    let bundle = FrameBundle {
        flows: inputs.flows.clone(),
        disparities: inputs.disparities.clone(),
        motions: [e0.motion, e1.motion],
    };
    let motion_unary =
        motion_unary_field_with_occlusion(&bundle, inputs.rig, &params.noise, params.tau_move, params.occlusion_tolerance)?;
    let correlation = match inputs.correlation {
        Some(c) => c.clone().with_weight(params.w_corr)?,
        None => CorrelationMatrix::zeros(inputs.object_unary.labels().clone(), LabelSpace::motion()),
    };
    let model = JointModel::new(
        inputs.object_unary.clone(),
        motion_unary.clone(),
        inputs.image,
        &inputs.flows[0],
        params.kernel,
        correlation,
    )?;
    let result = run_inference(&model, &params.inference)?;
    Ok(PipelineOutput {
        ego: [e0, e1],
        motion_unary,
        result,
    })
}

/// The object layer alone, without any motion input.
pub fn run_object_only(object_unary: &UnaryField, image: &Image, params: &PipelineParams) -> Result<LayerResult> {
    let shape = object_unary.shape();
    if image.shape() != shape {
        return Err(Error::ShapeMismatch("image and unary grids differ".into()));
    }
    let flow = FlowField::new(shape, vec![0.0; 2 * shape.len()])?;
    let model = JointModel::new(
        object_unary.clone(),
        UnaryField::zeros(shape, LabelSpace::motion()),
        image,
        &flow,
        params.kernel,
        CorrelationMatrix::zeros(object_unary.labels().clone(), LabelSpace::motion()),
    )?;
    run_layer_inference(&model, Layer::Object, &params.inference)
}

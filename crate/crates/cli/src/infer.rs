use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use jointseg::egomotion::{CameraRig, DisparityField, FlowField, MotionNoiseModel, RansacParams, RigidMotion};
use jointseg::filter::{FilterAccuracy, Image};
use jointseg::grid::{GridShape, LabelField, LabelSpace, ProbabilityField, UnaryField};
use jointseg::inference::{FilterMode, InferenceConfig};
use jointseg::pgm;
use jointseg::pipeline::{run_object_only, run_pipeline, PipelineInputs, PipelineParams};
use jointseg::potentials::{CorrelationMatrix, KernelParams};
use jointseg::tensor::Tensor;

use crate::config::{parse_list, KeyValues};
use crate::error::{config, data, CliResult};
use crate::output::Staged;
use crate::visual::motion_png;

pub const KEYS: &[&str] = &[
    "labels",
    "object_unary",
    "image",
    "flow01",
    "flow12",
    "disparity0",
    "disparity1",
    "disparity2",
    "rig",
    "correlation",
    "output",
    "mode",
    "visualize",
    "theta_beta",
    "theta_v",
    "theta_p",
    "theta_f",
    "w_app",
    "w_smooth",
    "w_flow",
    "sigma_flow",
    "sigma_disparity",
    "tau_move",
    "occlusion_tolerance",
    "w_corr",
    "max_iterations",
    "residual_tolerance",
    "damping",
    "filter",
    "grid_spacing",
    "cutoff",
    "ransac_iterations",
    "ransac_threshold",
    "ransac_min_inlier_ratio",
    "seed",
];

const RIG_KEYS: &[&str] = &["fx", "fy", "cx", "cy", "baseline"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Joint,
    Object,
}

pub fn read_tensor(path: &Path) -> CliResult<Tensor> {
    let bytes = fs::read(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    Tensor::decode(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: jointseg::Result<T>) -> CliResult<T> {
    r.map_err(|e| data(format!("{}: {e}", path.display())))
}

fn grid_of(t: &Tensor, path: &Path) -> CliResult<GridShape> {
    if t.dims.len() < 2 {
        return Err(data(format!("{}: expected at least 2 dims, got {:?}", path.display(), t.dims)));
    }
    with_path(path, GridShape::new(t.dims[0] as usize, t.dims[1] as usize))
}

pub fn load_rig(path: &Path) -> CliResult<CameraRig> {
    let kv = KeyValues::load(path)?;
    kv.reject_unknown(RIG_KEYS)?;
    let get = |k: &str| -> CliResult<f64> {
        let v = kv.required(k)?;
        v.parse().map_err(|_| config(format!("{}: {k}: cannot parse {v:?}", path.display())))
    };
    CameraRig::new(get("fx")?, get("fy")?, get("cx")?, get("cy")?, get("baseline")?)
        .map_err(|e| config(format!("{}: {e}", path.display())))
}

pub fn rig_text(rig: &CameraRig) -> String {
    format!(
        "fx = {}\nfy = {}\ncx = {}\ncy = {}\nbaseline = {}\n",
        rig.fx, rig.fy, rig.cx, rig.cy, rig.baseline
    )
}

struct Settings {
    mode: Mode,
    visualize: bool,
    labels: LabelSpace,
    output: PathBuf,
    params: PipelineParams,
}

fn settings(kv: &KeyValues) -> CliResult<Settings> {
    let mode = match kv.get("mode").unwrap_or("joint") {
        "joint" => Mode::Joint,
        "object" => Mode::Object,
        other => return Err(config(format!("mode: expected joint or object, got {other:?}"))),
    };
    let labels = LabelSpace::new(parse_list(kv.required("labels")?)).map_err(|e| config(format!("labels: {e}")))?;
    let kd = KernelParams::default();
    let kernel = KernelParams {
        theta_beta: kv.number("theta_beta", kd.theta_beta)?,
        theta_v: kv.number("theta_v", kd.theta_v)?,
        theta_p: kv.number("theta_p", kd.theta_p)?,
        theta_f: kv.number("theta_f", kd.theta_f)?,
        w_app: kv.number("w_app", kd.w_app)?,
        w_smooth: kv.number("w_smooth", kd.w_smooth)?,
        w_flow: kv.number("w_flow", kd.w_flow)?,
    };
    kernel.validate().map_err(|e| config(e.to_string()))?;
    let nd = MotionNoiseModel::default();
    let noise = MotionNoiseModel::new(kv.number("sigma_flow", nd.sigma_flow)?, kv.number("sigma_disparity", nd.sigma_disparity)?)
        .map_err(|e| config(e.to_string()))?;
    let id = InferenceConfig::default();
    let ad = FilterAccuracy::default();
    let inference = InferenceConfig {
        max_iterations: kv.number("max_iterations", id.max_iterations)?,
        residual_tolerance: kv.number("residual_tolerance", id.residual_tolerance)?,
        damping: kv.number("damping", id.damping)?,
        accuracy: FilterAccuracy {
            grid_spacing: kv.number("grid_spacing", ad.grid_spacing)?,
            cutoff: kv.number("cutoff", ad.cutoff)?,
        },
        mode: match kv.get("filter").unwrap_or("fast") {
            "fast" => FilterMode::Fast,
            "exact" => FilterMode::Exact,
            other => return Err(config(format!("filter: expected fast or exact, got {other:?}"))),
        },
    };
    inference.validate().map_err(|e| config(e.to_string()))?;
    let rd = RansacParams::default();
    let ransac = RansacParams {
        iterations: kv.number("ransac_iterations", rd.iterations)?,
        inlier_threshold: kv.number("ransac_threshold", rd.inlier_threshold)?,
        min_inlier_ratio: kv.number("ransac_min_inlier_ratio", rd.min_inlier_ratio)?,
        seed: kv.number("seed", rd.seed)?,
    };
    if ransac.iterations == 0 || !(ransac.inlier_threshold > 0.0) {
        return Err(config("ransac_iterations must be >= 1 and ransac_threshold > 0"));
    }
    let pd = PipelineParams::default();
    let params = PipelineParams {
        kernel,
        noise,
        inference,
        ransac,
        tau_move: kv.number("tau_move", pd.tau_move)?,
        occlusion_tolerance: kv.number("occlusion_tolerance", pd.occlusion_tolerance)?,
        w_corr: kv.number("w_corr", pd.w_corr)?,
    };
    if !(params.tau_move >= 0.0 && params.tau_move.is_finite()) {
        return Err(config(format!("tau_move must be finite and >= 0, got {}", params.tau_move)));
    }
    if !(params.occlusion_tolerance >= 0.0) {
        return Err(config(format!("occlusion_tolerance must be >= 0, got {}", params.occlusion_tolerance)));
    }
    if !(params.w_corr >= 0.0 && params.w_corr.is_finite()) {
        return Err(config(format!("w_corr must be finite and >= 0, got {}", params.w_corr)));
    }
    Ok(Settings {
        mode,
        visualize: kv.flag("visualize", false)?,
        labels,
        output: kv.resolve(kv.required("output")?),
        params,
    })
}

fn load_unary(path: &Path, labels: &LabelSpace) -> CliResult<UnaryField> {
    let t = read_tensor(path)?;
    let shape = grid_of(&t, path)?;
    if t.dims.len() != 3 || t.dims[2] as usize != labels.count() {
        return Err(data(format!(
            "{}: expected dims [H, W, {}], got {:?}",
            path.display(),
            labels.count(),
            t.dims
        )));
    }
    with_path(path, UnaryField::new(shape, labels.clone(), t.to_f64()))
}

fn load_image(path: &Path) -> CliResult<Image> {
    let t = read_tensor(path)?;
    let shape = grid_of(&t, path)?;
    let channels = match t.dims.len() {
        2 => 1,
        3 => t.dims[2] as usize,
        _ => return Err(data(format!("{}: expected dims [H, W] or [H, W, C], got {:?}", path.display(), t.dims))),
    };
    with_path(path, Image::new(shape, channels, t.to_f64()))
}

fn q_tensor(q: &ProbabilityField) -> Vec<u8> {
    let s = q.shape();
    Tensor::from_f64(vec![s.height() as u32, s.width() as u32, q.labels().count() as u32], q.values())
        .expect("dims match the field")
        .encode()
}

fn motion_text(m: &RigidMotion) -> (String, String) {
    let r = m.rotation;
    let rot = (0..3)
        .flat_map(|i| (0..3).map(move |j| r[(i, j)]))
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let t = m.translation.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    (rot, t)
}

fn check_shape(expected: GridShape, got: GridShape, path: &Path) -> CliResult<()> {
    if expected == got {
        Ok(())
    } else {
        Err(data(format!(
            "{}: grid is {}x{}, expected {}x{}",
            path.display(),
            got.height(),
            got.width(),
            expected.height(),
            expected.width()
        )))
    }
}

pub fn run(config_path: &Path, overrides: &[String]) -> CliResult<()> {
    let mut kv = KeyValues::load(config_path)?;
    for o in overrides {
        kv.set(o)?;
    }
    kv.reject_unknown(KEYS)?;
    let s = settings(&kv)?;
    let p = &s.params;

    let unary_path = kv.input_path("object_unary")?;
    let image_path = kv.input_path("image")?;
    let mut manifest = String::from("command = infer\n");
    let mut staged = Staged::default();
    let mut line = |k: &str, v: &dyn std::fmt::Display| writeln!(manifest, "{k} = {v}").unwrap();
    line("mode", &if s.mode == Mode::Joint { "joint" } else { "object" });
    line("labels", &s.labels.names().join(","));
    for key in ["object_unary", "image"] {
        line(key, &kv.required(key)?);
    }

    let object_unary = load_unary(&unary_path, &s.labels)?;
    let shape = object_unary.shape();
    let image = load_image(&image_path)?;
    check_shape(shape, image.shape(), &image_path)?;

    let k = &p.kernel;
    for (key, v) in [
        ("theta_beta", k.theta_beta),
        ("theta_v", k.theta_v),
        ("theta_p", k.theta_p),
        ("theta_f", k.theta_f),
        ("w_app", k.w_app),
        ("w_smooth", k.w_smooth),
        ("w_flow", k.w_flow),
    ] {
        line(key, &v);
    }
    let i = &p.inference;
    line("max_iterations", &i.max_iterations);
    line("residual_tolerance", &i.residual_tolerance);
    line("damping", &i.damping);
    line("filter", &if i.mode == FilterMode::Fast { "fast" } else { "exact" });
    line("grid_spacing", &i.accuracy.grid_spacing);
    line("cutoff", &i.accuracy.cutoff);

    let (labels_object, q_object) = if s.mode == Mode::Object {
        let r = run_object_only(&object_unary, &image, p)?;
        line("iterations", &r.iterations);
        line("residual_object", &r.residual);
        (r.labels, r.q)
    } else {
        let mut paths = Vec::new();
        for key in ["flow01", "flow12", "disparity0", "disparity1", "disparity2", "rig"] {
            paths.push(kv.input_path(key)?);
        }
        let correlation_path = kv.get("correlation").map(|_| kv.input_path("correlation")).transpose()?;
        let mut flows = Vec::new();
        for path in &paths[0..2] {
            let f = with_path(path, FlowField::from_tensor(&read_tensor(path)?))?;
            check_shape(shape, f.shape(), path)?;
            flows.push(f);
        }
        let mut disparities = Vec::new();
        for path in &paths[2..5] {
            let d = with_path(path, DisparityField::from_tensor(&read_tensor(path)?))?;
            check_shape(shape, d.shape(), path)?;
            disparities.push(d);
        }
        let rig = load_rig(&paths[5])?;
        let correlation = match &correlation_path {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
                let c = with_path(path, CorrelationMatrix::from_csv(&text, p.w_corr))?;
                if c.object_labels() != &s.labels || c.motion_labels() != &LabelSpace::motion() {
                    return Err(data(format!(
                        "{}: rows must be {:?} and columns stationary,moving",
                        path.display(),
                        s.labels.names()
                    )));
                }
                Some(c)
            }
            None => None,
        };
        for key in ["flow01", "flow12", "disparity0", "disparity1", "disparity2", "rig", "correlation"] {
            line(key, &kv.get(key).unwrap_or(""));
        }
        line("fx", &rig.fx);
        line("fy", &rig.fy);
        line("cx", &rig.cx);
        line("cy", &rig.cy);
        line("baseline", &rig.baseline);
        line("sigma_flow", &p.noise.sigma_flow);
        line("sigma_disparity", &p.noise.sigma_disparity);
        line("tau_move", &p.tau_move);
        line("occlusion_tolerance", &p.occlusion_tolerance);
        line("w_corr", &p.w_corr);
        line("ransac_iterations", &p.ransac.iterations);
        line("ransac_threshold", &p.ransac.inlier_threshold);
        line("ransac_min_inlier_ratio", &p.ransac.min_inlier_ratio);
        line("seed", &p.ransac.seed);

        let flows: [FlowField; 2] = flows.try_into().expect("two flows");
        let disparities: [DisparityField; 3] = disparities.try_into().expect("three disparities");
        let inputs = PipelineInputs {
            object_unary: &object_unary,
            image: &image,
            flows: &flows,
            disparities: &disparities,
            rig: &rig,
            correlation: correlation.as_ref(),
        };
        let out = run_pipeline(&inputs, p)?;
        for (n, e) in out.ego.iter().enumerate() {
            let (rot, t) = motion_text(&e.motion);
            line(&format!("ego{n}_rotation"), &rot);
            line(&format!("ego{n}_translation"), &t);
            line(&format!("ego{n}_inlier_ratio"), &e.inlier_ratio);
        }
        let r = out.result;
        line("iterations", &r.iterations);
        line("residual_object", &r.trace.last().map_or(0.0, |t| t.object));
        line("residual_motion", &r.trace.last().map_or(0.0, |t| t.motion));
        staged.add("labels_motion.pgm", pgm::encode(&r.labels_motion));
        staged.add("q_motion.tnsr", q_tensor(&r.q_motion));
        staged.add("trace.csv", r.trace_csv().into_bytes());
        if s.visualize {
            staged.add("motion.png", motion_png(&r.labels_motion)?);
        }
        (r.labels_object, r.q_object)
    };
    staged.add("labels_object.pgm", pgm::encode(&labels_object));
    staged.add("q_object.tnsr", q_tensor(&q_object));
    staged.add("manifest.txt", manifest.into_bytes());
    staged.commit(&s.output)
}

/// Loads a label map, naming the file on failure.
pub fn load_labels(path: &Path, labels: &LabelSpace) -> CliResult<LabelField> {
    let bytes = fs::read(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    with_path(path, pgm::decode(&bytes, labels.clone()))
}

use std::fmt::Write as _;
use std::path::Path;

use jointseg::egomotion::{MotionNoiseModel, RigidMotion};
use jointseg::grid::GridShape;
use jointseg::pgm;
use jointseg::synth::{SceneConfig, SyntheticScene};
use jointseg::tensor::Tensor;

use crate::error::{config, CliResult};
use crate::infer::rig_text;
use crate::output::Staged;

fn tensor(shape: GridShape, depth: Option<usize>, values: &[f64]) -> Vec<u8> {
    let mut dims = vec![shape.height() as u32, shape.width() as u32];
    dims.extend(depth.map(|d| d as u32));
    Tensor::from_f64(dims, values).expect("dims match the field").encode()
}

fn motion_line(m: &RigidMotion) -> String {
    let r = m.rotation;
    let mut s = String::new();
    for i in 0..3 {
        for j in 0..3 {
            write!(s, "{},", r[(i, j)]).unwrap();
        }
    }
    let t = m.translation;
    write!(s, "{},{},{}", t.x, t.y, t.z).unwrap();
    s
}

const INFER_CONFIG: &str = "\
# Generated with the synthetic scene; paths are relative to this file.
labels = sky,building,road,car
object_unary = object_unary.tnsr
image = image.tnsr
flow01 = flow01.tnsr
flow12 = flow12.tnsr
disparity0 = disparity0.tnsr
disparity1 = disparity1.tnsr
disparity2 = disparity2.tnsr
rig = rig.cfg
# correlation = correlation.csv
output = result
";

pub fn run(config_in: &SceneConfig, out: &Path) -> CliResult<()> {
    let scene = SyntheticScene::generate(config_in).map_err(|e| config(e.to_string()))?;
    let shape = scene.shape();
    let mut staged = Staged::default();
    staged.add("image.tnsr", tensor(shape, None, scene.image.data()));
    staged.add(
        "object_unary.tnsr",
        tensor(shape, Some(scene.object_labels.count()), scene.object_unary.costs()),
    );
    for (k, f) in scene.flows.iter().enumerate() {
        staged.add(format!("flow{}{}.tnsr", k, k + 1), tensor(shape, Some(2), f.data()));
    }
    for (k, d) in scene.disparities.iter().enumerate() {
        staged.add(format!("disparity{k}.tnsr"), tensor(shape, None, d.data()));
    }
    staged.add("rig.cfg", rig_text(&scene.config.rig).into_bytes());
    staged.add("gt/labels_object.pgm", pgm::encode(&scene.gt_object));
    staged.add("gt/labels_motion.pgm", pgm::encode(&scene.gt_motion));
    let ego = motion_line(&scene.config.ego);
    staged.add("ego.csv", format!("r00,r01,r02,r10,r11,r12,r20,r21,r22,tx,ty,tz\n{ego}\n{ego}\n").into_bytes());
    staged.add("infer.cfg", INFER_CONFIG.as_bytes().to_vec());

    let train = scene.training_set(&MotionNoiseModel::default())?;
    let mut csv = String::from("intensity,stationary_cost,row,object,motion\n");
    let dim = train.dim();
    for (n, row) in train.features().chunks_exact(dim).enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let (o, m) = train.labels_of(n);
        writeln!(csv, "{},{},{}", cells.join(","), scene.object_labels.name(o), ["stationary", "moving"][m]).unwrap();
    }
    staged.add("train.csv", csv.into_bytes());
    staged.commit(out)
}

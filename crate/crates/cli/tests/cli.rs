use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jointseg::grid::{GridShape, LabelField, LabelSpace};
use jointseg::pgm;
use tempfile::TempDir;

const LABELS: &str = "sky,building,road,car";

fn jointseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jointseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = jointseg(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path to file contents, recursively.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn iou_column(csv: &str) -> BTreeMap<String, f64> {
    csv.lines()
        .skip(1)
        .filter_map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            Some((cells[0].to_string(), cells[4].parse().ok()?))
        })
        .collect()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn synth_is_byte_deterministic_and_seed_sensitive() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    synth(&a, &["--seed", "3", "--flow-noise", "0.2"]);
    synth(&b, &["--seed", "3", "--flow-noise", "0.2"]);
    synth(&c, &["--seed", "4", "--flow-noise", "0.2"]);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    assert!(sa.contains_key(Path::new("gt/labels_motion.pgm")));
    assert!(sa.contains_key(Path::new("train.csv")));
    assert_eq!(sa, sb);
    assert_ne!(sa, snapshot(&c));
}

#[test]
fn resting_box_gives_all_stationary_ground_truth() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--box-velocity", "0,0,0", "--height", "48", "--width", "64"]);
    let gt = pgm::load(tmp.path().join("gt/labels_motion.pgm"), LabelSpace::motion()).unwrap();
    assert_eq!(gt.shape(), GridShape::new(48, 64).unwrap());
    assert!(gt.assignment().iter().all(|&m| m == 0));
}

#[test]
fn synthetic_scene_round_trip() {
    let tmp = TempDir::new().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, &[]);
    let cfg = scene.join("infer.cfg");
    ok(&["infer", s(&cfg), "--set", "visualize=true"]);
    let result = scene.join("result");
    for f in ["labels_object.pgm", "labels_motion.pgm", "q_object.tnsr", "q_motion.tnsr", "manifest.txt", "trace.csv", "motion.png"] {
        assert!(result.join(f).is_file(), "{f} missing");
    }
    let manifest = fs::read_to_string(result.join("manifest.txt")).unwrap();
    for key in ["theta_beta =", "w_corr =", "seed =", "iterations =", "residual_object =", "ego0_translation ="] {
        assert!(manifest.contains(key), "manifest lacks {key}");
    }

    let metrics = tmp.path().join("metrics");
    ok(&["eval", "--pred", s(&result), "--gt", s(&scene.join("gt")), "--labels", LABELS, "--out", s(&metrics)]);
    let motion = iou_column(&fs::read_to_string(metrics.join("metrics_motion.csv")).unwrap());
    assert!(motion["stationary"] >= 0.9 && motion["moving"] >= 0.9, "{motion:?}");

    // determinism of infer and eval
    let first = snapshot(&result);
    let first_metrics = snapshot(&metrics);
    ok(&["infer", s(&cfg), "--set", "visualize=true"]);
    ok(&["eval", "--pred", s(&result), "--gt", s(&scene.join("gt")), "--labels", LABELS, "--out", s(&metrics)]);
    assert_eq!(first, snapshot(&result));
    assert_eq!(first_metrics, snapshot(&metrics));
}

#[test]
fn zero_correlation_weight_matches_object_only_run() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--height", "48", "--width", "64", "--seed", "2"]);
    let corr = tmp.path().join("correlation.csv");
    ok(&["learn", "--mode", "cooccurrence", "--gt", s(&tmp.path().join("gt")), "--labels", LABELS, "--out", s(&corr)]);
    let cfg = tmp.path().join("infer.cfg");
    let c = format!("correlation={}", s(&corr));
    ok(&["infer", s(&cfg), "--set", &c, "--set", "w_corr=0", "--set", "output=joint"]);
    ok(&["infer", s(&cfg), "--set", "mode=object", "--set", "output=object"]);
    let joint = fs::read(tmp.path().join("joint/labels_object.pgm")).unwrap();
    let object = fs::read(tmp.path().join("object/labels_object.pgm")).unwrap();
    assert_eq!(joint, object);
    assert!(!tmp.path().join("object/labels_motion.pgm").exists());
}

#[test]
fn missing_disparity_is_a_config_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--height", "32", "--width", "48"]);
    let missing = tmp.path().join("disparity1.tnsr");
    fs::remove_file(&missing).unwrap();
    let out = jointseg(&["infer", s(&tmp.path().join("infer.cfg"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(s(&missing)), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
    assert!(!tmp.path().join("result").exists());
}

#[test]
fn malformed_tensor_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--height", "32", "--width", "48"]);
    fs::write(tmp.path().join("flow12.tnsr"), b"not a tensor").unwrap();
    let out = jointseg(&["infer", s(&tmp.path().join("infer.cfg"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flow12.tnsr"));
}

#[test]
fn unknown_config_keys_and_bad_values_exit_2() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--height", "32", "--width", "48"]);
    let cfg = tmp.path().join("infer.cfg");
    for set in ["theta_q=1", "damping=1", "theta_p=-1", "mode=both"] {
        let out = jointseg(&["infer", s(&cfg), "--set", set]);
        assert_eq!(out.status.code(), Some(2), "{set}");
    }
}

#[test]
fn cooccurrence_of_perfectly_correlated_maps() {
    let tmp = TempDir::new().unwrap();
    let gt = tmp.path().join("gt");
    fs::create_dir(&gt).unwrap();
    let shape = GridShape::new(4, 4).unwrap();
    let objects = LabelSpace::new(LABELS.split(',')).unwrap();
    let object: Vec<u8> = (0..16).map(|k| if k < 4 { 3 } else { (k % 3) as u8 }).collect();
    let motion: Vec<u8> = object.iter().map(|&o| u8::from(o == 3)).collect();
    pgm::save(gt.join("labels_object.pgm"), &LabelField::new(shape, objects, object).unwrap()).unwrap();
    pgm::save(gt.join("labels_motion.pgm"), &LabelField::new(shape, LabelSpace::motion(), motion).unwrap()).unwrap();
    let out = tmp.path().join("corr.csv");
    ok(&["learn", "--mode", "cooccurrence", "--gt", s(&gt), "--labels", LABELS, "--out", s(&out)]);
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("label,stationary,moving\n"));
    assert!(csv.contains("\ncar,1,-1\n"), "{csv}");
}

#[test]
fn boost_mode_bounds_and_determinism() {
    let tmp = TempDir::new().unwrap();
    synth(tmp.path(), &["--height", "48", "--width", "64"]);
    let data = tmp.path().join("train.csv");
    let run = |name: &str, rounds: &str| {
        let out = tmp.path().join(name);
        let r = jointseg(&["learn", "--mode", "boost", "--data", s(&data), "--labels", LABELS, "--rounds", rounds, "--seed", "5", "--out", s(&out)]);
        (r, out)
    };
    let (r, a) = run("a.csv", "6");
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let (_, b) = run("b.csv", "6");
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    for line in text.lines().skip(1) {
        for v in line.split(',').skip(1) {
            let v: f64 = v.parse().unwrap();
            assert!((-1.0..=1.0).contains(&v));
        }
    }
    let (r, c) = run("c.csv", "1");
    assert_eq!(r.status.code(), Some(2));
    assert!(!c.exists());
}

#[test]
fn eval_hand_built_counts() {
    let tmp = TempDir::new().unwrap();
    let (pred, gt, out) = (tmp.path().join("pred"), tmp.path().join("gt"), tmp.path().join("out"));
    fs::create_dir(&pred).unwrap();
    fs::create_dir(&gt).unwrap();
    let labels = LabelSpace::new(["a", "b"]).unwrap();
    let shape = GridShape::new(4, 4).unwrap();
    // class a: TP 5, FP 3, FN 2; the remaining 6 pixels are b in both maps
    let g: Vec<u8> = [[0u8; 7].as_slice(), &[1; 9]].concat();
    let p: Vec<u8> = [[0u8; 5].as_slice(), &[1, 1], &[0, 0, 0], &[1; 6]].concat();
    pgm::save(gt.join("labels_object.pgm"), &LabelField::new(shape, labels.clone(), g).unwrap()).unwrap();
    pgm::save(pred.join("labels_object.pgm"), &LabelField::new(shape, labels.clone(), p).unwrap()).unwrap();
    ok(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--labels", "a,b", "--out", s(&out)]);
    let csv = fs::read_to_string(out.join("metrics_object.csv")).unwrap();
    assert!(csv.contains("\na,5,3,2,0.5\n"), "{csv}");
    assert!(!out.join("metrics_motion.csv").exists());

    // shape mismatch names the prediction file
    let small = LabelField::filled(GridShape::new(2, 2).unwrap(), labels, 0).unwrap();
    pgm::save(pred.join("labels_object.pgm"), &small).unwrap();
    let r = jointseg(&["eval", "--pred", s(&pred), "--gt", s(&gt), "--labels", "a,b", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains(s(&pred.join("labels_object.pgm"))));
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = TempDir::new().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let out = jointseg(&["synth", "--out", s(&blocker.join("scene")), "--height", "16", "--width", "16"]);
    assert_eq!(out.status.code(), Some(2));
}

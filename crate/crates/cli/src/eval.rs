use std::fs;
use std::path::{Path, PathBuf};

use jointseg::evaluation::{accumulate_confusion, metrics_csv, ConfusionMatrix};
use jointseg::grid::LabelSpace;

use crate::error::{config, data, CliResult};
use crate::infer::load_labels;
use crate::output::Staged;

/// Sorted names of `<prefix>*.pgm` files in `dir`.
pub fn label_maps(dir: &Path, prefix: &str) -> CliResult<Vec<String>> {
    let entries = fs::read_dir(dir).map_err(|e| config(format!("{}: {e}", dir.display())))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| config(format!("{}: {e}", dir.display())))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with(prefix) && name.ends_with(".pgm") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn layer(pred: &Path, gt: &Path, prefix: &str, labels: &LabelSpace) -> CliResult<Option<ConfusionMatrix>> {
    let names = label_maps(gt, prefix)?;
    if names.is_empty() {
        return Ok(None);
    }
    let mut cm = ConfusionMatrix::new(labels.clone());
    for name in names {
        let pred_path: PathBuf = pred.join(&name);
        if !pred_path.is_file() {
            return Err(data(format!("{}: prediction missing for ground truth {name}", pred_path.display())));
        }
        let g = load_labels(&gt.join(&name), labels)?;
        let p = load_labels(&pred_path, labels)?;
        cm = accumulate_confusion(&p, &g, cm).map_err(|e| data(format!("{}: {e}", pred_path.display())))?;
    }
    Ok(Some(cm))
}

pub fn run(pred: &Path, gt: &Path, labels: &LabelSpace, out: &Path) -> CliResult<()> {
    let mut staged = Staged::default();
    if let Some(cm) = layer(pred, gt, "labels_object", labels)? {
        staged.add("metrics_object.csv", metrics_csv(&cm).into_bytes());
    }
    if let Some(cm) = layer(pred, gt, "labels_motion", &LabelSpace::motion())? {
        staged.add("metrics_motion.csv", metrics_csv(&cm).into_bytes());
    }
    if staged.is_empty() {
        return Err(data(format!("{}: no labels_object*.pgm or labels_motion*.pgm files", gt.display())));
    }
    staged.commit(out)
}

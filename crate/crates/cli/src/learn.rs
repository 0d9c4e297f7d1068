use std::fs;
use std::path::{Path, PathBuf};

use jointseg::grid::{LabelField, LabelSpace};
use jointseg::learning::{compute_lambda, cooccurrence_lambda, train_joint_boost, BoostParams, TrainingSet};

use crate::error::{config, data, CliResult};
use crate::eval::label_maps;
use crate::infer::load_labels;
use crate::output::Staged;

pub fn boost(data_path: &Path, labels: &LabelSpace, params: &BoostParams, out: &Path) -> CliResult<()> {
    if params.rounds < 2 {
        return Err(config(format!("rounds must be at least 2, got {}", params.rounds)));
    }
    if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(config(format!("feature fraction must lie in (0, 1], got {}", params.feature_fraction)));
    }
    let text = fs::read_to_string(data_path).map_err(|e| config(format!("{}: {e}", data_path.display())))?;
    let set = TrainingSet::from_csv(&text, labels.clone(), LabelSpace::motion())
        .map_err(|e| data(format!("{}: {e}", data_path.display())))?;
    let model = train_joint_boost(&set, params)?;
    let lambda = compute_lambda(&model)?;
    write(out, lambda.to_csv())
}

pub fn cooccurrence(dirs: &[PathBuf], labels: &LabelSpace, out: &Path) -> CliResult<()> {
    let mut objects: Vec<LabelField> = Vec::new();
    let mut motions = Vec::new();
    for dir in dirs {
        for name in label_maps(dir, "labels_object")? {
            let partner = name.replacen("labels_object", "labels_motion", 1);
            let motion_path = dir.join(&partner);
            if !motion_path.is_file() {
                return Err(data(format!("{}: no motion map paired with {name}", motion_path.display())));
            }
            objects.push(load_labels(&dir.join(&name), labels)?);
            motions.push(load_labels(&motion_path, &LabelSpace::motion())?);
        }
    }
    if objects.is_empty() {
        return Err(data("no labels_object*.pgm files found"));
    }
    let lambda = cooccurrence_lambda(&objects, &motions)?;
    write(out, lambda.to_csv())
}

fn write(out: &Path, csv: String) -> CliResult<()> {
    let name = out
        .file_name()
        .ok_or_else(|| config(format!("{}: not a file path", out.display())))?
        .to_string_lossy()
        .into_owned();
    let mut staged = Staged::default();
    staged.add(name, csv.into_bytes());
    staged.commit(out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")))
}

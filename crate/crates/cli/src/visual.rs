use jointseg::grid::{LabelField, IGNORE};

use crate::error::{data, CliResult};

const STATIONARY: [u8; 3] = [0, 0, 255];
const MOVING: [u8; 3] = [255, 0, 0];
const UNLABELED: [u8; 3] = [0, 0, 0];

/// RGB PNG of a motion label map: moving red, stationary blue.
pub fn motion_png(labels: &LabelField) -> CliResult<Vec<u8>> {
    let shape = labels.shape();
    let pixels: Vec<u8> = labels
        .assignment()
        .iter()
        .flat_map(|&m| match m {
            0 => STATIONARY,
            IGNORE => UNLABELED,
            _ => MOVING,
        })
        .collect();
    let mut out = Vec::new();
    let mut encoder = png::Encoder::new(&mut out, shape.width() as u32, shape.height() as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| data(e.to_string()))?;
    writer.write_image_data(&pixels).map_err(|e| data(e.to_string()))?;
    writer.finish().map_err(|e| data(e.to_string()))?;
    Ok(out)
}

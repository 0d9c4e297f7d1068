//! 8-bit binary PGM (`P5`) label maps, one label index per pixel.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridShape, LabelField, LabelSpace};

pub fn encode(field: &LabelField) -> Vec<u8> {
    let shape = field.shape();
    let mut out = format!("P5\n{} {}\n255\n", shape.width(), shape.height()).into_bytes();
    out.extend_from_slice(field.assignment());
    out
}

/// Parses a P5 image into `(shape, raw bytes)`.
pub fn decode_raw(bytes: &[u8]) -> Result<(GridShape, Vec<u8>)> {
    let mut pos = 0;
    let mut tokens = Vec::with_capacity(4);
    while tokens.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        tokens.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("?").to_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if tokens[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, found {:?}", tokens[0])));
    }
    let parse = |s: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Format(format!("bad PGM header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let shape = GridShape::new(height, width)?;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != shape.len() {
        return Err(Error::TruncatedPayload {
            expected: shape.len(),
            found: raster.len(),
        });
    }
    Ok((shape, raster.to_vec()))
}

pub fn decode(bytes: &[u8], labels: LabelSpace) -> Result<LabelField> {
    let (shape, raw) = decode_raw(bytes)?;
    LabelField::new(shape, labels, raw)
}

pub fn save(path: impl AsRef<Path>, field: &LabelField) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(field)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>, labels: LabelSpace) -> Result<LabelField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, labels)
}

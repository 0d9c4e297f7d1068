//! High-dimensional Gaussian filtering.
//!
//! Computes message sums of the form
//!
//! ```text
//! out[i][c] = sum_{j != i} k(f_i, f_j) * values[j][c]
//! k(f_i, f_j) = sum_components w * exp(-|f_i - f_j|^2 / 2)   (over each component's slice)
//! ```
//!
//! where the features have already been divided by their bandwidths.
//! [`brute_force_filter`] evaluates the sum exactly in `O(N^2)`;
//! [`fast_filter`] approximates it (see [`fast`]).

pub mod fast;

use std::ops::Range;

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::tensor::Tensor;

pub use fast::{fast_filter, FilterAccuracy};

/// Largest pixel count accepted by the exact filter.
pub const BRUTE_FORCE_MAX_PIXELS: usize = 16384;

/// Per-pixel feature vectors, pre-scaled by their bandwidths.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    shape: GridShape,
    dim: usize,
    features: Vec<f64>,
}

impl FeatureMap {
    pub fn new(shape: GridShape, dim: usize, features: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be >= 1".into()));
        }
        if features.len() != shape.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} features for {} pixels of dim {dim}",
                features.len(),
                shape.len()
            )));
        }
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            shape,
            dim,
            features,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Stacks feature maps side by side: the result has `sum(dim)` features per pixel.
    pub fn concat(maps: &[&FeatureMap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        if maps.iter().any(|m| m.shape != first.shape) {
            return Err(Error::ShapeMismatch("feature maps differ in shape".into()));
        }
        let dim = maps.iter().map(|m| m.dim).sum();
        let mut features = Vec::with_capacity(first.shape.len() * dim);
        for i in 0..first.shape.len() {
            for m in maps {
                features.extend_from_slice(m.pixel(i));
            }
        }
        Ok(Self {
            shape: first.shape,
            dim,
            features,
        })
    }

    /// Copies out the features of one slice as a dense `N x len` array.
    pub(crate) fn slice(&self, range: &Range<usize>) -> Vec<f64> {
        let len = range.len();
        let mut out = Vec::with_capacity(self.shape.len() * len);
        for px in self.features.chunks(self.dim) {
            out.extend_from_slice(&px[range.clone()]);
        }
        out
    }

    /// `H x W x dim` tensor dump for debugging.
    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_f64(
            vec![
                self.shape.height() as u32,
                self.shape.width() as u32,
                self.dim as u32,
            ],
            &self.features,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelComponent {
    pub features: Range<usize>,
    pub weight: f64,
}

/// A weighted sum of unit-bandwidth Gaussians, each over a slice of the features.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct KernelSpec {
    components: Vec<KernelComponent>,
}

impl KernelSpec {
    pub fn new(components: Vec<KernelComponent>) -> Result<Self> {
        for c in &components {
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "kernel weight must be finite and non-negative, got {}",
                    c.weight
                )));
            }
            if c.features.is_empty() {
                return Err(Error::InvalidArgument("empty feature slice".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn single(features: Range<usize>, weight: f64) -> Result<Self> {
        Self::new(vec![KernelComponent { features, weight }])
    }

    pub fn components(&self) -> &[KernelComponent] {
        &self.components
    }

    pub fn max_value(&self) -> f64 {
        self.components.iter().map(|c| c.weight).sum()
    }

    fn check(&self, dim: usize) -> Result<()> {
        match self.components.iter().find(|c| c.features.end > dim) {
            Some(c) => Err(Error::InvalidArgument(format!(
                "kernel slice {:?} exceeds feature dim {dim}",
                c.features
            ))),
            None => Ok(()),
        }
    }

    /// `k(f_i, f_j)` for two full feature vectors.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (-0.5 * sq_dist(&a[c.features.clone()], &b[c.features.clone()])).exp())
            .sum()
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_inputs(values: &[f64], channels: usize, features: &FeatureMap, kernel: &KernelSpec) -> Result<()> {
    if channels == 0 || values.len() != features.shape().len() * channels {
        return Err(Error::ShapeMismatch(format!(
            "{} values for {} pixels x {channels} channels",
            values.len(),
            features.shape().len()
        )));
    }
    kernel.check(features.dim())
}

/// Exact message sums, accumulated in ascending `j` for every `i`.
pub fn brute_force_filter(
    values: &[f64],
    channels: usize,
    features: &FeatureMap,
    kernel: &KernelSpec,
) -> Result<Vec<f64>> {
    check_inputs(values, channels, features, kernel)?;
    let n = features.shape().len();
    if n > BRUTE_FORCE_MAX_PIXELS {
        return Err(Error::SizeGuardExceeded(format!(
            "{n} pixels > {BRUTE_FORCE_MAX_PIXELS}"
        )));
    }
    let mut out = vec![0.0; n * channels];
    for i in 0..n {
        let fi = features.pixel(i);
        let acc = &mut out[i * channels..(i + 1) * channels];
        for j in 0..n {
            if j == i {
                continue;
            }
            let k = kernel.eval(fi, features.pixel(j));
            for (a, v) in acc.iter_mut().zip(&values[j * channels..(j + 1) * channels]) {
                *a += k * v;
            }
        }
    }
    Ok(out)
}

/// Grayscale (1 channel) or color (3 channel) intensities, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    shape: GridShape,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(shape: GridShape, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != shape.len() * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for a {}x{}x{channels} image",
                data.len(),
                shape.height(),
                shape.width()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            shape,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// RGB triple at pixel `i`; grayscale is replicated.
    pub fn pixel(&self, i: usize) -> &[f64] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }
}

/// How to build per-pixel features.
#[derive(Clone, Copy, Debug)]
pub enum FeatureMode<'a> {
    /// `(x, y) / theta`
    Spatial { theta: f64 },
    /// `(x / theta_spatial, y / theta_spatial, (r, g, b) / theta_intensity)`;
    /// a grayscale intensity is replicated into all three color components.
    BilateralIntensity {
        image: &'a Image,
        theta_spatial: f64,
        theta_intensity: f64,
    },
    /// `(x / theta_spatial, y / theta_spatial, (u, v) / theta_flow)`.
    /// `flow` is `N x 2`; non-finite entries are treated as zero flow.
    FlowBilateral {
        flow: &'a [f64],
        theta_spatial: f64,
        theta_flow: f64,
    },
}

fn positive(theta: f64) -> Result<f64> {
    if theta > 0.0 && theta.is_finite() {
        Ok(theta)
    } else {
        Err(Error::NonPositiveBandwidth(theta))
    }
}

pub fn build_features(shape: GridShape, mode: FeatureMode<'_>) -> Result<FeatureMap> {
    let n = shape.len();
    let (dim, features) = match mode {
        FeatureMode::Spatial { theta } => {
            let t = positive(theta)?;
            let mut f = Vec::with_capacity(2 * n);
            for i in 0..n {
                let (row, col) = shape.coords(i);
                f.extend([col as f64 / t, row as f64 / t]);
            }
            (2, f)
        }
        FeatureMode::BilateralIntensity {
            image,
            theta_spatial,
            theta_intensity,
        } => {
            let ts = positive(theta_spatial)?;
            let ti = positive(theta_intensity)?;
            if image.shape() != shape {
                return Err(Error::ShapeMismatch("image does not match grid".into()));
            }
            let mut f = Vec::with_capacity(5 * n);
            for i in 0..n {
                let (row, col) = shape.coords(i);
                f.extend([col as f64 / ts, row as f64 / ts]);
                match image.pixel(i) {
                    &[v] => f.extend([v / ti; 3]),
                    rgb => f.extend(rgb.iter().map(|v| v / ti)),
                }
            }
            (5, f)
        }
        FeatureMode::FlowBilateral {
            flow,
            theta_spatial,
            theta_flow,
        } => {
            let ts = positive(theta_spatial)?;
            let tf = positive(theta_flow)?;
            if flow.len() != 2 * n {
                return Err(Error::ShapeMismatch("flow does not match grid".into()));
            }
            let mut f = Vec::with_capacity(4 * n);
            for i in 0..n {
                let (row, col) = shape.coords(i);
                let (u, v) = (flow[2 * i], flow[2 * i + 1]);
                let (u, v) = if u.is_finite() && v.is_finite() { (u, v) } else { (0.0, 0.0) };
                f.extend([col as f64 / ts, row as f64 / ts, u / tf, v / tf]);
            }
            (4, f)
        }
    };
    FeatureMap::new(shape, dim, features)
}

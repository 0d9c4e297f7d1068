//! Approximate Gaussian message passing.
//!
//! Each kernel component runs one of three strategies:
//!
//! * **separable**: when the component's features are exactly a scaled pixel
//!   lattice (the plain spatial kernel), an exact separable convolution on the
//!   image grid, truncated at `cutoff`.
//!
//! Otherwise the features are rotated onto their principal axes (dropping
//! flat axes, e.g. replicated gray channels) and the cheaper of the following
//! is picked by an operation-count estimate:
//!
//! * **grid**: splat onto a regular lattice with spacing `h` using
//!   multilinear weights, blur separably with a sampled Gaussian of variance
//!   `1 - h^2/3` (the two tent interpolations contribute `h^2/6` each), and
//!   slice back. Cheap when the features fill a compact region.
//! * **cutoff**: exact pair sums restricted to `|f_i - f_j| < cutoff`, found
//!   through a cell list. Cheap when the features are sparse relative to the
//!   unit bandwidth.
//!
//! Self-exclusion subtracts each pixel's own response under the kernel that
//! was actually applied, so the approximate self-weight never leaks into the
//! message.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_inputs, sq_dist, FeatureMap, KernelSpec};
use crate::error::{Error, Result};
use crate::grid::GridShape;

/// Highest feature dimension the fast path accepts.
pub const MAX_FEATURE_DIM: usize = 16;

const MAX_GRID_VALUES: usize = 1 << 23;
const MAX_GRID_DIM: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterAccuracy {
    /// Lattice spacing of the grid strategy, in bandwidth units. Must lie in `(0, 1]`.
    pub grid_spacing: f64,
    /// Truncation radius of the kernel, in bandwidth units.
    pub cutoff: f64,
}

impl Default for FilterAccuracy {
    fn default() -> Self {
        Self {
            grid_spacing: 0.25,
            cutoff: 4.0,
        }
    }
}

impl FilterAccuracy {
    fn validate(&self) -> Result<()> {
        if !(self.grid_spacing > 0.0 && self.grid_spacing <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be in (0, 1], got {}",
                self.grid_spacing
            )));
        }
        if !(self.cutoff >= 1.0 && self.cutoff.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cutoff must be >= 1, got {}",
                self.cutoff
            )));
        }
        Ok(())
    }
}

/// Which strategy the planner picked, exposed for diagnostics and tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Exact separable convolution; only for features that are a scaled pixel lattice.
    Separable,
    Grid,
    Cutoff,
}

pub fn fast_filter(
    values: &[f64],
    channels: usize,
    features: &FeatureMap,
    kernel: &KernelSpec,
    accuracy: FilterAccuracy,
) -> Result<Vec<f64>> {
    fast_filter_with(values, channels, features, kernel, accuracy, None)
}

/// Like [`fast_filter`] but can force a strategy for every component.
///
/// A forced strategy that does not apply (a non-lattice input for
/// `Separable`, a grid over the memory budget) falls back to `Cutoff`.
pub fn fast_filter_with(
    values: &[f64],
    channels: usize,
    features: &FeatureMap,
    kernel: &KernelSpec,
    accuracy: FilterAccuracy,
    force: Option<Strategy>,
) -> Result<Vec<f64>> {
    check_inputs(values, channels, features, kernel)?;
    if features.dim() > MAX_FEATURE_DIM {
        return Err(Error::UnsupportedFeatureDim(features.dim()));
    }
    accuracy.validate()?;
    let shape = features.shape();
    let n = shape.len();
    let mut out = vec![0.0; n * channels];
    for comp in kernel.components() {
        if comp.weight == 0.0 {
            continue;
        }
        let f = features.slice(&comp.features);
        let plan = Plan::new(&f, comp.features.len(), shape, channels, accuracy, force);
        let part = plan.execute(values, channels);
        for (o, p) in out.iter_mut().zip(&part) {
            *o += comp.weight * p;
        }
    }
    // non-negative channels stay non-negative
    for c in 0..channels {
        if (0..n).all(|i| values[i * channels + c] >= 0.0) {
            for i in 0..n {
                let o = &mut out[i * channels + c];
                if *o < 0.0 {
                    *o = 0.0;
                }
            }
        }
    }
    Ok(out)
}

/// The strategy [`fast_filter`] would use for a unit-weight component over `features`.
pub fn plan_strategy(
    features: &FeatureMap,
    channels: usize,
    accuracy: FilterAccuracy,
) -> Strategy {
    Plan::new(
        features.features(),
        features.dim(),
        features.shape(),
        channels,
        accuracy,
        None,
    )
    .strategy()
}

enum Plan {
    /// Every pixel shares one feature vector.
    Collapsed,
    Separable(Lattice),
    Grid(GridLayout, Vec<f64>),
    Cutoff(CellList, Vec<f64>),
}

impl Plan {
    fn new(
        features: &[f64],
        dim: usize,
        shape: GridShape,
        channels: usize,
        accuracy: FilterAccuracy,
        force: Option<Strategy>,
    ) -> Self {
        if matches!(force, None | Some(Strategy::Separable)) {
            if let Some(lattice) = Lattice::detect(features, dim, shape, accuracy.cutoff) {
                return Plan::Separable(lattice);
            }
        }
        let (reduced, rdim) = principal_axes(features, dim);
        if rdim == 0 {
            return Plan::Collapsed;
        }
        let cells = CellList::build(&reduced, rdim, accuracy.cutoff);
        if force == Some(Strategy::Cutoff) {
            return Plan::Cutoff(cells, reduced);
        }
        let Some(layout) = GridLayout::new(&reduced, rdim, channels, accuracy) else {
            return Plan::Cutoff(cells, reduced);
        };
        if force == Some(Strategy::Grid) {
            return Plan::Grid(layout, reduced);
        }
        let n = shape.len() as f64;
        let cutoff_cost = cells.candidate_pairs() as f64 * (rdim + channels + 10) as f64;
        let taps = (2 * layout.radius + 1) as f64;
        let blur = layout.cells as f64 * (channels * rdim) as f64 * taps;
        let splat = n * (1u64 << rdim) as f64 * (2 * channels + rdim) as f64;
        if blur + splat < cutoff_cost {
            Plan::Grid(layout, reduced)
        } else {
            Plan::Cutoff(cells, reduced)
        }
    }

    fn strategy(&self) -> Strategy {
        match self {
            Plan::Collapsed | Plan::Cutoff(..) => Strategy::Cutoff,
            Plan::Separable(_) => Strategy::Separable,
            Plan::Grid(..) => Strategy::Grid,
        }
    }

    fn execute(&self, values: &[f64], channels: usize) -> Vec<f64> {
        match self {
            Plan::Collapsed => {
                let n = values.len() / channels;
                let mut total = vec![0.0; channels];
                for px in values.chunks(channels) {
                    for (t, v) in total.iter_mut().zip(px) {
                        *t += v;
                    }
                }
                let mut out = Vec::with_capacity(n * channels);
                for px in values.chunks(channels) {
                    out.extend(total.iter().zip(px).map(|(t, v)| t - v));
                }
                out
            }
            Plan::Separable(lattice) => lattice.filter(values, channels),
            Plan::Grid(layout, f) => layout.filter(f, values, channels),
            Plan::Cutoff(cells, f) => cells.filter(f, values, channels),
        }
    }
}

/// Rotates features onto their principal axes and drops axes with
/// negligible extent. Distances, and hence kernel values, are unchanged.
fn principal_axes(features: &[f64], dim: usize) -> (Vec<f64>, usize) {
    const FLAT: f64 = 1e-7;
    let n = features.len() / dim;
    let mut mean = vec![0.0; dim];
    for px in features.chunks(dim) {
        for (m, x) in mean.iter_mut().zip(px) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for px in features.chunks(dim) {
        for a in 0..dim {
            for b in a..dim {
                cov[(a, b)] += (px[a] - mean[a]) * (px[b] - mean[b]);
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut axes = Vec::new();
    for &k in &order {
        let axis = eig.eigenvectors.column(k);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for px in features.chunks(dim) {
            let p: f64 = (0..dim).map(|a| (px[a] - mean[a]) * axis[a]).sum();
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if hi - lo > FLAT {
            axes.push(k);
        }
    }
    let rdim = axes.len();
    let mut out = Vec::with_capacity(n * rdim);
    for px in features.chunks(dim) {
        for &k in &axes {
            let axis = eig.eigenvectors.column(k);
            out.push((0..dim).map(|a| (px[a] - mean[a]) * axis[a]).sum());
        }
    }
    (out, rdim)
}

/// Features that are exactly `(col * sx + ox, row * sy + oy)`.
struct Lattice {
    shape: GridShape,
    taps_x: Vec<f64>,
    taps_y: Vec<f64>,
}

impl Lattice {
    fn detect(features: &[f64], dim: usize, shape: GridShape, cutoff: f64) -> Option<Self> {
        if dim != 2 {
            return None;
        }
        let (h, w) = (shape.height(), shape.width());
        let (ox, oy) = (features[0], features[1]);
        let sx = if w > 1 { features[2] - ox } else { 1.0 };
        let sy = if h > 1 { features[2 * w + 1] - oy } else { 1.0 };
        if sx == 0.0 || sy == 0.0 {
            return None;
        }
        let tol = 1e-9 * (1.0 + ox.abs().max(oy.abs()) + (sx * w as f64).abs() + (sy * h as f64).abs());
        for i in 0..shape.len() {
            let (row, col) = shape.coords(i);
            if (features[2 * i] - (ox + col as f64 * sx)).abs() > tol
                || (features[2 * i + 1] - (oy + row as f64 * sy)).abs() > tol
            {
                return None;
            }
        }
        let taps = |step: f64, len: usize| -> Vec<f64> {
            let reach = ((cutoff / step.abs()).floor() as usize).min(len - 1);
            (0..=reach)
                .map(|k| {
                    let d = k as f64 * step;
                    (-0.5 * d * d).exp()
                })
                .collect()
        };
        Some(Self {
            shape,
            taps_x: taps(sx, w),
            taps_y: taps(sy, h),
        })
    }

    fn filter(&self, values: &[f64], channels: usize) -> Vec<f64> {
        let (h, w) = (self.shape.height(), self.shape.width());
        let row = w * channels;
        let mut tmp = vec![0.0; values.len()];
        // along x
        for r in 0..h {
            let src = &values[r * row..(r + 1) * row];
            let dst = &mut tmp[r * row..(r + 1) * row];
            for c in 0..w {
                let out = &mut dst[c * channels..(c + 1) * channels];
                let lo = c.saturating_sub(self.taps_x.len() - 1);
                let hi = (c + self.taps_x.len() - 1).min(w - 1);
                for u in lo..=hi {
                    let k = self.taps_x[u.abs_diff(c)];
                    for (o, v) in out.iter_mut().zip(&src[u * channels..(u + 1) * channels]) {
                        *o += k * v;
                    }
                }
            }
        }
        // along y, whole rows at a time
        let mut out = vec![0.0; values.len()];
        for r in 0..h {
            let dst = &mut out[r * row..(r + 1) * row];
            let lo = r.saturating_sub(self.taps_y.len() - 1);
            let hi = (r + self.taps_y.len() - 1).min(h - 1);
            for u in lo..=hi {
                let k = self.taps_y[u.abs_diff(r)];
                for (o, v) in dst.iter_mut().zip(&tmp[u * row..(u + 1) * row]) {
                    *o += k * v;
                }
            }
        }
        for (o, v) in out.iter_mut().zip(values) {
            *o -= v;
        }
        out
    }
}

struct GridLayout {
    dim: usize,
    spacing: f64,
    origin: Vec<f64>,
    counts: Vec<usize>,
    cells: usize,
    radius: usize,
    /// `taps[t]` is the blur weight at offset `t` lattice steps.
    taps: Vec<f64>,
}

impl GridLayout {
    fn new(features: &[f64], dim: usize, channels: usize, accuracy: FilterAccuracy) -> Option<Self> {
        if dim > MAX_GRID_DIM {
            return None;
        }
        let h = accuracy.grid_spacing;
        let mut origin = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for px in features.chunks(dim) {
            for k in 0..dim {
                origin[k] = origin[k].min(px[k]);
                hi[k] = hi[k].max(px[k]);
            }
        }
        let mut counts = Vec::with_capacity(dim);
        let mut cells: usize = 1;
        for k in 0..dim {
            let c = ((hi[k] - origin[k]) / h).floor() as usize + 2;
            counts.push(c);
            cells = cells.checked_mul(c)?;
            if cells.saturating_mul(channels) > MAX_GRID_VALUES {
                return None;
            }
        }
        let var = 1.0 - h * h / 3.0;
        let sigma = var.sqrt();
        let radius = (accuracy.cutoff * sigma / h).ceil() as usize;
        let taps = (0..=radius)
            .map(|t| {
                let x = t as f64 * h;
                (-0.5 * x * x / var).exp() / sigma
            })
            .collect();
        Some(Self {
            dim,
            spacing: h,
            origin,
            counts,
            cells,
            radius,
            taps,
        })
    }

    /// Lower lattice node and fractional offset of a coordinate along axis `k`.
    fn locate(&self, k: usize, x: f64) -> (usize, f64) {
        let pos = (x - self.origin[k]) / self.spacing;
        let base = (pos.floor().max(0.0) as usize).min(self.counts[k] - 2);
        (base, pos - base as f64)
    }

    fn filter(&self, features: &[f64], values: &[f64], channels: usize) -> Vec<f64> {
        let dim = self.dim;
        let n = features.len() / dim;
        let corners = 1usize << dim;

        let mut strides = vec![channels; dim];
        for k in (0..dim.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.counts[k + 1];
        }

        // Per pixel: base offset, per-axis fractional weights, self response.
        let mut base = vec![0usize; n];
        let mut frac = vec![0.0; n * dim];
        let mut self_weight = vec![1.0; n];
        let tap1 = self.taps.get(1).copied().unwrap_or(0.0);
        for i in 0..n {
            let px = &features[i * dim..(i + 1) * dim];
            let mut offset = 0;
            for k in 0..dim {
                let (b, t) = self.locate(k, px[k]);
                offset += b * strides[k];
                frac[i * dim + k] = t;
                let s = ((1.0 - t) * (1.0 - t) + t * t) * self.taps[0] + 2.0 * t * (1.0 - t) * tap1;
                self_weight[i] *= s;
            }
            base[i] = offset;
        }

        let corner_weight = |i: usize, corner: usize| -> (usize, f64) {
            let mut w = 1.0;
            let mut offset = base[i];
            for k in 0..dim {
                let t = frac[i * dim + k];
                if corner >> k & 1 == 1 {
                    w *= t;
                    offset += strides[k];
                } else {
                    w *= 1.0 - t;
                }
            }
            (offset, w)
        };

        let mut grid = vec![0.0; self.cells * channels];
        for i in 0..n {
            let v = &values[i * channels..(i + 1) * channels];
            for corner in 0..corners {
                let (offset, w) = corner_weight(i, corner);
                if w == 0.0 {
                    continue;
                }
                for (g, x) in grid[offset..offset + channels].iter_mut().zip(v) {
                    *g += w * x;
                }
            }
        }

        let mut scratch = vec![0.0; grid.len()];
        for k in 0..dim {
            self.blur_axis(&grid, &mut scratch, k, strides[k]);
            std::mem::swap(&mut grid, &mut scratch);
        }

        let mut out = vec![0.0; n * channels];
        for i in 0..n {
            let acc = &mut out[i * channels..(i + 1) * channels];
            for corner in 0..corners {
                let (offset, w) = corner_weight(i, corner);
                if w == 0.0 {
                    continue;
                }
                for (a, g) in acc.iter_mut().zip(&grid[offset..offset + channels]) {
                    *a += w * g;
                }
            }
            let v = &values[i * channels..(i + 1) * channels];
            for (a, x) in acc.iter_mut().zip(v) {
                *a -= self_weight[i] * x;
            }
        }
        out
    }

    fn blur_axis(&self, src: &[f64], dst: &mut [f64], axis: usize, block: usize) {
        let len = self.counts[axis];
        let span = len * block;
        let r = self.radius as isize;
        dst.fill(0.0);
        for (s, d) in src.chunks(span).zip(dst.chunks_mut(span)) {
            for t in 0..len as isize {
                let out = &mut d[t as usize * block..(t as usize + 1) * block];
                let lo = (t - r).max(0);
                let hi = (t + r).min(len as isize - 1);
                for u in lo..=hi {
                    let w = self.taps[(u - t).unsigned_abs()];
                    let row = &s[u as usize * block..(u as usize + 1) * block];
                    for (o, x) in out.iter_mut().zip(row) {
                        *o += w * x;
                    }
                }
            }
        }
    }
}

struct CellList {
    dim: usize,
    cutoff: f64,
    /// Pixels per occupied cell, ascending, cells in key order.
    members: Vec<Vec<usize>>,
    /// Occupied neighbor cells (including self), ascending.
    neighbors: Vec<Vec<usize>>,
    cell_of: Vec<usize>,
}

impl CellList {
    fn build(features: &[f64], dim: usize, cutoff: f64) -> Self {
        let n = features.len() / dim;
        let mut map: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let key = features[i * dim..(i + 1) * dim]
                .iter()
                .map(|x| (x / cutoff).floor() as i64)
                .collect();
            map.entry(key).or_default().push(i);
        }
        let keys: Vec<Vec<i64>> = map.keys().cloned().collect();
        let members: Vec<Vec<usize>> = map.into_values().collect();
        let m = keys.len();
        let index: BTreeMap<&[i64], usize> =
            keys.iter().enumerate().map(|(i, k)| (k.as_slice(), i)).collect();

        let offsets_count = 3usize.checked_pow(dim as u32).unwrap_or(usize::MAX);
        let mut neighbors = Vec::with_capacity(m);
        for key in &keys {
            let mut list = Vec::new();
            if offsets_count <= m {
                let mut probe = key.clone();
                for code in 0..offsets_count {
                    let mut c = code;
                    for k in 0..dim {
                        probe[k] = key[k] + (c % 3) as i64 - 1;
                        c /= 3;
                    }
                    if let Some(&j) = index.get(probe.as_slice()) {
                        list.push(j);
                    }
                }
                list.sort_unstable();
            } else {
                for (j, other) in keys.iter().enumerate() {
                    if key.iter().zip(other).all(|(a, b)| (a - b).abs() <= 1) {
                        list.push(j);
                    }
                }
            }
            neighbors.push(list);
        }
        let mut cell_of = vec![0; n];
        for (c, pts) in members.iter().enumerate() {
            for &i in pts {
                cell_of[i] = c;
            }
        }
        Self {
            dim,
            cutoff,
            members,
            neighbors,
            cell_of,
        }
    }

    fn candidate_pairs(&self) -> u64 {
        self.members
            .iter()
            .zip(&self.neighbors)
            .map(|(pts, nb)| {
                let around: usize = nb.iter().map(|&c| self.members[c].len()).sum();
                (pts.len() * around) as u64
            })
            .sum()
    }

    fn filter(&self, features: &[f64], values: &[f64], channels: usize) -> Vec<f64> {
        let dim = self.dim;
        let n = features.len() / dim;
        let r2 = self.cutoff * self.cutoff;
        let mut out = vec![0.0; n * channels];
        for i in 0..n {
            let fi = &features[i * dim..(i + 1) * dim];
            let acc = &mut out[i * channels..(i + 1) * channels];
            for &c in &self.neighbors[self.cell_of[i]] {
                for &j in &self.members[c] {
                    if j == i {
                        continue;
                    }
                    let d2 = sq_dist(fi, &features[j * dim..(j + 1) * dim]);
                    if d2 >= r2 {
                        continue;
                    }
                    let k = (-0.5 * d2).exp();
                    for (a, v) in acc.iter_mut().zip(&values[j * channels..(j + 1) * channels]) {
                        *a += k * v;
                    }
                }
            }
        }
        out
    }
}

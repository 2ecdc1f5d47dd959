//! Uniform grids on a truncated box, grid functions, the geometric t-ladder,
//! half-space fields, norms and FFT convolution.
//!
//! Nodes sit at `x_i = -L + i h`, `i = 0..m`, `h = 2L/m`, so the origin is node
//! `m/2` on every axis. Functions are zero outside the box. Multi-dimensional
//! arrays are row-major with the first axis slowest.

use crate::error::{invalid, CapaxError, Result};
use crate::fft::{signed_index, FftNd};
use crate::special::{neumaier_sum, pairwise_sum};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Read, Write};

pub const DEFAULT_NODE_BUDGET: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    extent: f64,
    points: usize,
}

impl GridSpec {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        Self::with_budget(dim, extent, points, DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(dim: usize, extent: f64, points: usize, budget: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(invalid("n", format!("grids support n ∈ {{1, 2}}, got {dim}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(invalid("L", format!("{extent} must be positive")));
        }
        if points < 8 {
            return Err(invalid("m", format!("{points} < 8 points per axis")));
        }
        let total = points
            .checked_pow(dim as u32)
            .ok_or(CapaxError::BudgetExceeded {
                requested: usize::MAX,
                budget,
            })?;
        if total > budget {
            return Err(CapaxError::BudgetExceeded {
                requested: total,
                budget,
            });
        }
        Ok(Self {
            dim,
            extent,
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn extent(&self) -> f64 {
        self.extent
    }
    pub fn points(&self) -> usize {
        self.points
    }
    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.points as f64
    }
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Cell volume `hⁿ`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Coordinate of index `i` along an axis.
    #[inline]
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.extent + i as f64 * self.spacing()
    }

    /// Multi-index of a flat node index.
    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.points, idx % self.points],
        }
    }

    #[inline]
    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] * self.points + mi[1],
        }
    }

    /// Coordinates of a node; the second entry is zero in one dimension.
    #[inline]
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let mi = self.multi_index(idx);
        match self.dim {
            1 => [self.axis_coord(mi[0]), 0.0],
            _ => [self.axis_coord(mi[0]), self.axis_coord(mi[1])],
        }
    }

    /// Index of the node nearest to `x` (clamped to the grid).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let h = self.spacing();
        let axis = |v: f64| -> usize {
            (((v + self.extent) / h).round().max(0.0) as usize).min(self.points - 1)
        };
        match self.dim {
            1 => axis(x[0]),
            _ => self.flat_index([axis(x[0]), axis(x[1])]),
        }
    }

    /// Index of the origin node.
    pub fn origin(&self) -> usize {
        let c = self.points / 2;
        self.flat_index([c, c])
    }

    /// Squared distance between two nodes.
    #[inline]
    pub fn dist2(&self, a: usize, b: usize) -> f64 {
        let (pa, pb) = (self.coords(a), self.coords(b));
        (pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)
    }

    /// Same domain, twice the points per axis.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.dim, self.extent, 2 * self.points)
    }

    /// Twice the extent at the same spacing.
    pub fn widened(&self) -> Result<Self> {
        Self::new(self.dim, 2.0 * self.extent, 2 * self.points)
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && (self.extent - other.extent).abs() <= 1e-12 * self.extent
    }
}

/// Real samples on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(CapaxError::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                spec.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite value at node {bad}")));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.len()],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..spec.len())
            .map(|i| {
                let c = spec.coords(i);
                f(&c[..spec.dim])
            })
            .collect();
        Self { spec, values }
    }

    /// Zero extension onto the grid with `factor` times the extent and the
    /// same spacing (`factor` even or one).
    pub fn zero_padded(&self, factor: usize) -> Result<Self> {
        if factor == 0 || (factor > 1 && factor % 2 == 1) {
            return Err(invalid("factor", format!("{factor} must be 1 or even")));
        }
        let spec = GridSpec::new(self.spec.dim, self.spec.extent * factor as f64, self.spec.points * factor)?;
        let shift = (factor - 1) * self.spec.points / 2;
        let mut values = vec![0.0; spec.len()];
        for (idx, v) in self.values.iter().enumerate() {
            let mi = self.spec.multi_index(idx);
            let mj = match self.spec.dim {
                1 => [mi[0] + shift, 0],
                _ => [mi[0] + shift, mi[1] + shift],
            };
            values[spec.flat_index(mj)] = *v;
        }
        Ok(Self { spec, values })
    }

    /// Restriction to a centred sub-grid with the same spacing.
    pub fn cropped(&self, spec: &GridSpec) -> Result<Self> {
        let h = self.spec.spacing();
        if spec.dim != self.spec.dim || (spec.spacing() - h).abs() > 1e-12 * h || spec.points > self.spec.points {
            return Err(CapaxError::GridMismatch("crop target is not a centred sub-grid".into()));
        }
        let shift = (self.spec.points - spec.points) / 2;
        let values = (0..spec.len())
            .map(|idx| {
                let mi = spec.multi_index(idx);
                let mj = match spec.dim {
                    1 => [mi[0] + shift, 0],
                    _ => [mi[0] + shift, mi[1] + shift],
                };
                self.values[self.spec.flat_index(mj)]
            })
            .collect();
        Ok(Self { spec: *spec, values })
    }

    /// Discrete unit-mass impulse at `node` (value `h^{-n}`).
    pub fn impulse(spec: GridSpec, node: usize) -> Self {
        let mut values = vec![0.0; spec.len()];
        values[node] = 1.0 / spec.cell_volume();
        Self { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            spec: self.spec,
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `∫ f` by the midpoint rule.
    pub fn integral(&self) -> f64 {
        pairwise_sum(&self.values) * self.spec.cell_volume()
    }

    /// Fraction of spectral energy carried by the top quarter of the
    /// frequency range (per axis, by maximum index).
    pub fn high_frequency_energy_fraction(&self) -> f64 {
        let m = self.spec.points;
        let fft = FftNd::new(self.spec.dim, m);
        let mut data: Vec<Complex64> = self.values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        fft.forward(&mut data);
        let cutoff = (3 * m / 8) as i64;
        let mut hi = 0.0;
        let mut total = 0.0;
        for (idx, z) in data.iter().enumerate() {
            let mi = self.spec.multi_index(idx);
            let k0 = signed_index(mi[0], m).abs();
            let k1 = if self.spec.dim == 2 { signed_index(mi[1], m).abs() } else { 0 };
            let e = z.norm_sqr();
            total += e;
            if k0.max(k1) >= cutoff {
                hi += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            hi / total
        }
    }
}

/// Geometric ladder of strictly positive heights `t_j = t_min ρ^j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TLadder {
    slices: Vec<f64>,
}

impl TLadder {
    pub fn geometric(t_min: f64, t_max: f64, count: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) {
            return Err(invalid("ladder", format!("need 0 < t_min < t_max, got [{t_min}, {t_max}]")));
        }
        if count < 2 {
            return Err(invalid("k", "at least two slices"));
        }
        let ratio = (t_max / t_min).powf(1.0 / (count - 1) as f64);
        let mut slices: Vec<f64> = (0..count).map(|j| t_min * ratio.powi(j as i32)).collect();
        slices[count - 1] = t_max;
        Ok(Self { slices })
    }

    /// Ladder with `count` slices spanning `[h/2, 4L]`.
    pub fn for_grid(spec: &GridSpec, count: usize) -> Result<Self> {
        Self::geometric(0.5 * spec.spacing(), 4.0 * spec.extent(), count)
    }

    /// Explicit strictly increasing positive slices.
    pub fn from_slices(slices: Vec<f64>) -> Result<Self> {
        if slices.is_empty() || slices[0] <= 0.0 || slices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("ladder", "slices must be positive and strictly increasing"));
        }
        Ok(Self { slices })
    }

    pub fn slices(&self) -> &[f64] {
        &self.slices
    }
    pub fn len(&self) -> usize {
        self.slices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
    pub fn t_min(&self) -> f64 {
        self.slices[0]
    }
    pub fn t_max(&self) -> f64 {
        *self.slices.last().unwrap()
    }
    /// Geometric ratio (meaningful for geometric ladders).
    pub fn ratio(&self) -> f64 {
        if self.slices.len() < 2 {
            1.0
        } else {
            self.slices[1] / self.slices[0]
        }
    }

    /// Ladder with every geometric step split in two (`ρ → √ρ`).
    pub fn refined(&self) -> Self {
        let mut out = Vec::with_capacity(2 * self.slices.len());
        for w in self.slices.windows(2) {
            out.push(w[0]);
            out.push((w[0] * w[1]).sqrt());
        }
        out.push(self.t_max());
        Self { slices: out }
    }

    /// Index of a slice equal to `t` up to relative `1e-9`.
    pub fn slice_index(&self, t: f64) -> Option<usize> {
        self.slices
            .iter()
            .position(|s| (s - t).abs() <= 1e-9 * s.max(t))
    }
}

/// Samples `u(x, t)` on grid nodes × ladder slices, slice-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceField {
    spec: GridSpec,
    ladder: TLadder,
    values: Vec<f64>,
}

impl HalfSpaceField {
    pub fn new(spec: GridSpec, ladder: TLadder, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() * ladder.len() {
            return Err(CapaxError::GridMismatch(format!(
                "{} values for {} slices of {} nodes",
                values.len(),
                ladder.len(),
                spec.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "non-finite field value"));
        }
        Ok(Self {
            spec,
            ladder,
            values,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn ladder(&self) -> &TLadder {
        &self.ladder
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn slice(&self, j: usize) -> &[f64] {
        let n = self.spec.len();
        &self.values[j * n..(j + 1) * n]
    }
    pub fn slice_function(&self, j: usize) -> GridFunction {
        GridFunction {
            spec: self.spec,
            values: self.slice(j).to_vec(),
        }
    }
    #[inline]
    pub fn at(&self, slice: usize, node: usize) -> f64 {
        self.values[slice * self.spec.len() + node]
    }
    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with rows `slice,node,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# n={},L={},m={},k={}",
            self.spec.dim,
            self.spec.extent,
            self.spec.points,
            self.ladder.len()
        )?;
        writeln!(w, "slice,t,node,value")?;
        for (j, t) in self.ladder.slices().iter().enumerate() {
            for (i, v) in self.slice(j).iter().enumerate() {
                writeln!(w, "{j},{t:e},{i},{v:e}")?;
            }
        }
        Ok(())
    }
}

/// `‖f‖_{L^p}` by the midpoint rule; `p = f64::INFINITY` gives the maximum.
pub fn lp_norm(f: &GridFunction, p: f64) -> Result<f64> {
    weighted_lp_norm(f.values(), f.spec().cell_volume(), p)
}

pub(crate) fn weighted_lp_norm(values: &[f64], cell: f64, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(invalid("p", format!("{p} < 1")));
    }
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let s = neumaier_sum(values.iter().map(|v| v.abs().powf(p)));
    Ok((s * cell).powf(1.0 / p))
}

/// `Σ |f_i|^p hⁿ`.
pub fn lp_norm_pow(f: &GridFunction, p: f64) -> f64 {
    neumaier_sum(f.values().iter().map(|v| v.abs().powf(p))) * f.spec().cell_volume()
}

/// Second exponent of a Lorentz quasi-norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LorentzVariant {
    /// `L^{q,p}`, `p > 0`.
    Strong(f64),
    /// `L^{q,∞}`.
    Weak,
}

/// Lorentz quasi-norm of a finitely supported function against a discrete
/// measure, evaluated exactly over the level-set lattice of the sample values.
///
/// `‖g‖_{L^{q,p}} = (∫_0^∞ μ(|g| > s)^{p/q} d(s^p))^{1/p}` and
/// `‖g‖_{L^{q,∞}} = sup_s s μ(|g| > s)^{1/q}`.
pub fn lorentz_norm(values: &[f64], weights: &[f64], q: f64, variant: LorentzVariant) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(CapaxError::GridMismatch("values and weights differ in length".into()));
    }
    if !(q > 0.0) {
        return Err(invalid("q", format!("{q} must be positive")));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0)) {
        return Err(invalid("weights", format!("negative weight {w}")));
    }
    if let LorentzVariant::Strong(p) = variant {
        if !(p > 0.0) {
            return Err(invalid("p", format!("{p} must be positive")));
        }
    }
    // distinct |values| in decreasing order with their masses
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .map(|(v, w)| (v.abs(), *w))
        .filter(|(v, w)| *v > 0.0 && *w > 0.0)
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut levels: Vec<(f64, f64)> = Vec::new();
    for (v, w) in pairs {
        match levels.last_mut() {
            Some(last) if last.0 == v => last.1 += w,
            _ => levels.push((v, w)),
        }
    }
    let mut cumulative = 0.0;
    match variant {
        LorentzVariant::Weak => {
            let mut best = 0.0f64;
            for (v, w) in &levels {
                cumulative += w;
                best = best.max(v * cumulative.powf(1.0 / q));
            }
            Ok(best)
        }
        LorentzVariant::Strong(p) => {
            // μ(|g| > s) = W_k on [v_{k+1}, v_k)
            let mut terms = Vec::with_capacity(levels.len());
            for (k, (v, w)) in levels.iter().enumerate() {
                cumulative += w;
                let next = levels.get(k + 1).map_or(0.0, |l| l.0);
                terms.push(cumulative.powf(p / q) * (v.powf(p) - next.powf(p)));
            }
            Ok(neumaier_sum(terms).powf(1.0 / p))
        }
    }
}

/// A convolution kernel given by weights at integer node offsets
/// `-(m-1)..=(m-1)` per axis (row-major, side `2m-1`).
#[derive(Debug, Clone)]
pub(crate) struct OffsetKernel {
    pub dim: usize,
    pub m: usize,
    pub weights: Vec<f64>,
}

impl OffsetKernel {
    #[inline]
    pub(crate) fn at(&self, d0: i64, d1: i64) -> f64 {
        let side = 2 * self.m - 1;
        let c = self.m as i64 - 1;
        match self.dim {
            1 => self.weights[(d0 + c) as usize],
            _ => self.weights[(d0 + c) as usize * side + (d1 + c) as usize],
        }
    }
}

/// Reusable FFT machinery for linear convolution on a fixed grid.
pub(crate) struct Convolver {
    spec: GridSpec,
    fft: FftNd,
}

impl Convolver {
    pub(crate) fn new(spec: GridSpec) -> Self {
        Self {
            fft: FftNd::new(spec.dim, 2 * spec.points),
            spec,
        }
    }

    pub(crate) fn transform_kernel(&self, k: &OffsetKernel) -> Vec<Complex64> {
        let m = self.spec.points;
        let n2 = 2 * m;
        let mut data = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        let wrap = |d: i64| -> usize { d.rem_euclid(n2 as i64) as usize };
        let lo = -(m as i64 - 1);
        let hi = m as i64 - 1;
        match self.spec.dim {
            1 => {
                for d in lo..=hi {
                    data[wrap(d)] = Complex64::new(k.at(d, 0), 0.0);
                }
            }
            _ => {
                for d0 in lo..=hi {
                    for d1 in lo..=hi {
                        data[wrap(d0) * n2 + wrap(d1)] = Complex64::new(k.at(d0, d1), 0.0);
                    }
                }
            }
        }
        self.fft.forward(&mut data);
        data
    }

    pub(crate) fn transform_input(&self, values: &[f64]) -> Vec<Complex64> {
        let m = self.spec.points;
        let n2 = 2 * m;
        let mut data = vec![Complex64::new(0.0, 0.0); self.fft.len()];
        for (idx, v) in values.iter().enumerate() {
            let mi = self.spec.multi_index(idx);
            let pos = match self.spec.dim {
                1 => mi[0],
                _ => mi[0] * n2 + mi[1],
            };
            data[pos] = Complex64::new(*v, 0.0);
        }
        self.fft.forward(&mut data);
        data
    }

    /// `out_i = Σ_j f_j w_{i-j}` on the retained window.
    pub(crate) fn apply(&self, input_hat: &[Complex64], kernel_hat: &[Complex64]) -> Vec<f64> {
        let m = self.spec.points;
        let n2 = 2 * m;
        let mut prod: Vec<Complex64> = input_hat.iter().zip(kernel_hat).map(|(a, b)| a * b).collect();
        self.fft.inverse(&mut prod);
        (0..self.spec.len())
            .map(|idx| {
                let mi = self.spec.multi_index(idx);
                let pos = match self.spec.dim {
                    1 => mi[0],
                    _ => mi[0] * n2 + mi[1],
                };
                prod[pos].re
            })
            .collect()
    }
}

pub(crate) fn convolve_offsets_fft(values: &[f64], spec: &GridSpec, k: &OffsetKernel) -> Vec<f64> {
    let conv = Convolver::new(*spec);
    let fh = conv.transform_input(values);
    let kh = conv.transform_kernel(k);
    conv.apply(&fh, &kh)
}

pub(crate) fn convolve_offsets_direct(values: &[f64], spec: &GridSpec, k: &OffsetKernel) -> Vec<f64> {
    (0..spec.len())
        .map(|i| {
            let a = spec.multi_index(i);
            neumaier_sum(values.iter().enumerate().map(|(j, fj)| {
                let b = spec.multi_index(j);
                fj * k.at(a[0] as i64 - b[0] as i64, a[1] as i64 - b[1] as i64)
            }))
        })
        .collect()
}

fn kernel_offsets(f: &GridFunction, kernel: &GridFunction) -> Result<OffsetKernel> {
    if !f.spec().same_as(kernel.spec()) {
        return Err(CapaxError::GridMismatch("convolution operands live on different grids".into()));
    }
    let spec = *f.spec();
    let m = spec.points;
    let side = 2 * m - 1;
    let c = (m / 2) as i64;
    let vol = spec.cell_volume();
    let sample = |d: i64| -> Option<usize> {
        let i = c + d;
        (0..m as i64).contains(&i).then_some(i as usize)
    };
    let mut weights = vec![0.0; side.pow(spec.dim as u32)];
    let lo = -(m as i64 - 1);
    for (pos, w) in weights.iter_mut().enumerate() {
        let (d0, d1) = match spec.dim {
            1 => (lo + pos as i64, 0),
            _ => (lo + (pos / side) as i64, lo + (pos % side) as i64),
        };
        let node = match spec.dim {
            1 => sample(d0),
            _ => match (sample(d0), sample(d1)) {
                (Some(a), Some(b)) => Some(spec.flat_index([a, b])),
                _ => None,
            },
        };
        if let Some(node) = node {
            *w = kernel.values()[node] * vol;
        }
    }
    Ok(OffsetKernel {
        dim: spec.dim,
        m,
        weights,
    })
}

/// Linear convolution `(f ∗ k)(x_i) ≈ Σ_j f(x_j) k(x_i - x_j) hⁿ`, with the
/// kernel sampled on the same grid about the origin node and zero outside it.
/// Evaluated by zero-padded FFT of size `2m` per axis, which is exact on the
/// retained window.
pub fn convolve(f: &GridFunction, kernel: &GridFunction) -> Result<GridFunction> {
    let k = kernel_offsets(f, kernel)?;
    let values = convolve_offsets_fft(f.values(), f.spec(), &k);
    Ok(GridFunction {
        spec: *f.spec(),
        values,
    })
}

/// Direct `O(m^{2n})` evaluation of [`convolve`].
pub fn convolve_direct(f: &GridFunction, kernel: &GridFunction) -> Result<GridFunction> {
    let k = kernel_offsets(f, kernel)?;
    let values = convolve_offsets_direct(f.values(), f.spec(), &k);
    Ok(GridFunction {
        spec: *f.spec(),
        values,
    })
}

/// Multiplies the periodic DFT of `f` by a radial symbol `σ(|ξ|)` with
/// `ξ_k = k / (2L)`.
pub fn spectral_multiply(f: &GridFunction, symbol: impl Fn(f64) -> f64) -> GridFunction {
    let spec = *f.spec();
    let m = spec.points;
    let fft = FftNd::new(spec.dim, m);
    let mut data: Vec<Complex64> = f.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft.forward(&mut data);
    let dxi = 1.0 / (2.0 * spec.extent);
    for (idx, z) in data.iter_mut().enumerate() {
        let mi = spec.multi_index(idx);
        let k0 = signed_index(mi[0], m) as f64;
        let k1 = if spec.dim == 2 { signed_index(mi[1], m) as f64 } else { 0.0 };
        let xi = dxi * (k0 * k0 + k1 * k1).sqrt();
        *z *= symbol(xi);
    }
    fft.inverse(&mut data);
    GridFunction {
        spec,
        values: data.iter().map(|z| z.re).collect(),
    }
}

/// `∫ σ(|ξ|) |f̂(ξ)|² dξ` with `f̂` approximated by `hⁿ · DFT`.
pub fn spectral_energy(f: &GridFunction, symbol: impl Fn(f64) -> f64) -> f64 {
    let spec = *f.spec();
    let m = spec.points;
    let fft = FftNd::new(spec.dim, m);
    let mut data: Vec<Complex64> = f.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft.forward(&mut data);
    let dxi = 1.0 / (2.0 * spec.extent);
    let vol = spec.cell_volume();
    let terms: Vec<f64> = data
        .iter()
        .enumerate()
        .map(|(idx, z)| {
            let mi = spec.multi_index(idx);
            let k0 = signed_index(mi[0], m) as f64;
            let k1 = if spec.dim == 2 { signed_index(mi[1], m) as f64 } else { 0.0 };
            let xi = dxi * (k0 * k0 + k1 * k1).sqrt();
            symbol(xi) * z.norm_sqr() * vol * vol
        })
        .collect();
    pairwise_sum(&terms) * dxi.powi(spec.dim as i32)
}

const BINARY_MAGIC: &[u8; 8] = b"CAPXGRD1";

/// Writes the binary grid format: magic `CAPXGRD1`, then little-endian
/// `u32 n`, `f64 L`, `u64 m`, and `mⁿ` `f64` values in row-major order.
pub fn write_binary<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(f.spec.dim as u32).to_le_bytes())?;
    w.write_all(&f.spec.extent.to_le_bytes())?;
    w.write_all(&(f.spec.points as u64).to_le_bytes())?;
    for v in &f.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<GridFunction> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(CapaxError::Parse {
            line: 0,
            reason: "bad magic".into(),
        });
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let extent = f64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let points = u64::from_le_bytes(b8) as usize;
    let spec = GridSpec::new(dim, extent, points)?;
    let mut values = Vec::with_capacity(spec.len());
    for _ in 0..spec.len() {
        r.read_exact(&mut b8)?;
        values.push(f64::from_le_bytes(b8));
    }
    GridFunction::new(spec, values)
}

/// CSV grid format: a header line `n=<n>,L=<L>,m=<m>`, a column line, then one
/// `index,x1[,x2],value` row per node in row-major order.
pub fn write_csv<W: Write>(f: &GridFunction, mut w: W) -> Result<()> {
    let spec = f.spec;
    writeln!(w, "n={},L={},m={}", spec.dim, spec.extent, spec.points)?;
    if spec.dim == 1 {
        writeln!(w, "index,x1,value")?;
    } else {
        writeln!(w, "index,x1,x2,value")?;
    }
    for (i, v) in f.values.iter().enumerate() {
        let c = spec.coords(i);
        if spec.dim == 1 {
            writeln!(w, "{i},{:e},{v:e}", c[0])?;
        } else {
            writeln!(w, "{i},{:e},{:e},{v:e}", c[0], c[1])?;
        }
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<GridFunction> {
    let mut lines = r.lines().enumerate();
    let (_, header) = lines.next().ok_or(CapaxError::Parse {
        line: 1,
        reason: "empty file".into(),
    })?;
    let header = header?;
    let mut dim = None;
    let mut extent = None;
    let mut points = None;
    for kv in header.trim().split(',') {
        let (k, v) = kv.split_once('=').ok_or(CapaxError::Parse {
            line: 1,
            reason: format!("malformed header field `{kv}`"),
        })?;
        let bad = |_| CapaxError::Parse {
            line: 1,
            reason: format!("bad value in `{kv}`"),
        };
        match k.trim() {
            "n" => dim = Some(v.trim().parse::<usize>().map_err(|_| bad(()))?),
            "L" => extent = Some(v.trim().parse::<f64>().map_err(|_| bad(()))?),
            "m" => points = Some(v.trim().parse::<usize>().map_err(|_| bad(()))?),
            _ => {}
        }
    }
    let missing = |what: &str| CapaxError::Parse {
        line: 1,
        reason: format!("header lacks {what}"),
    };
    let spec = GridSpec::new(
        dim.ok_or_else(|| missing("n"))?,
        extent.ok_or_else(|| missing("L"))?,
        points.ok_or_else(|| missing("m"))?,
    )?;
    let mut values = Vec::with_capacity(spec.len());
    for (ln, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("index") || line.starts_with('#') {
            continue;
        }
        let last = line.rsplit(',').next().unwrap_or("");
        values.push(last.trim().parse::<f64>().map_err(|_| CapaxError::Parse {
            line: ln + 1,
            reason: format!("bad value `{last}`"),
        })?);
    }
    GridFunction::new(spec, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(3, 1.0, 8).is_err());
        assert!(GridSpec::new(1, 1.0, 4).is_err());
        assert!(GridSpec::new(1, -1.0, 16).is_err());
        assert!(matches!(
            GridSpec::new(2, 1.0, 2048),
            Err(CapaxError::BudgetExceeded { .. })
        ));
        let g = GridSpec::new(1, 2.0, 16).unwrap();
        assert_eq!(g.coords(g.origin())[0], 0.0);
    }

    #[test]
    fn lp_norm_examples() {
        // constant one on [-1, 1]: nodes cover the box exactly
        let g = GridSpec::new(1, 1.0, 16).unwrap();
        let one = GridFunction::from_fn(g, |_| 1.0);
        assert_relative_eq!(lp_norm(&one, 1.0).unwrap(), 2.0, max_relative = 1e-14);
        let g2 = GridSpec::new(2, 1.0, 16).unwrap();
        let one2 = GridFunction::from_fn(g2, |_| 1.0);
        assert_relative_eq!(lp_norm(&one2, 1.0).unwrap(), 4.0, max_relative = 1e-14);
        assert_eq!(lp_norm(&GridFunction::zeros(g), 3.0).unwrap(), 0.0);
        // indicator of half of the nodes
        let half = GridFunction::new(g, (0..16).map(|i| (i % 2) as f64).collect()).unwrap();
        assert_relative_eq!(lp_norm(&half, 2.0).unwrap(), (0.5f64 * 2.0).sqrt(), max_relative = 1e-14);
        assert!(lp_norm(&half, 0.5).is_err());
        assert_eq!(lp_norm(&half, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn lp_norm_converges_at_second_order() {
        // periodic-unsafe smooth function with compact support in the box interior
        let f = |x: &[f64]| (-(x[0] * x[0])).exp() * (1.0 + 0.3 * x[0]);
        let exact = {
            let g = GridSpec::new(1, 8.0, 1 << 16).unwrap();
            lp_norm(&GridFunction::from_fn(g, f), 3.0).unwrap()
        };
        // use a shifted grid (no symmetric cancellation) to measure the order
        let err = |m: usize| {
            let g = GridSpec::new(1, 8.0, m).unwrap();
            (lp_norm(&GridFunction::from_fn(g, |x| f(&[x[0] + 0.37 * g.spacing()])), 3.0).unwrap() - exact).abs()
        };
        let (e1, e2) = (err(16), err(32));
        let order = (e1 / e2).log2();
        assert!(order >= 1.8 || e2 < 1e-12, "order {order} ({e1:e} -> {e2:e})");
    }

    fn brute_force_lorentz(values: &[f64], weights: &[f64], q: f64, variant: LorentzVariant) -> f64 {
        // scan s over the sorted sample values, measuring each level set directly
        let mut levels: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        levels.push(0.0);
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let mass_above = |s: f64| -> f64 {
            values
                .iter()
                .zip(weights)
                .filter(|(v, _)| v.abs() > s)
                .map(|(_, w)| *w)
                .sum()
        };
        match variant {
            LorentzVariant::Weak => levels
                .windows(2)
                .map(|w| w[1] * mass_above(w[0]).powf(1.0 / q))
                .fold(0.0, f64::max),
            LorentzVariant::Strong(p) => levels
                .windows(2)
                .map(|w| mass_above(w[0]).powf(p / q) * (w[1].powf(p) - w[0].powf(p)))
                .sum::<f64>()
                .powf(1.0 / p),
        }
    }

    #[test]
    fn lorentz_examples() {
        let v = lorentz_norm(&[3.0], &[2.0], 2.0, LorentzVariant::Weak).unwrap();
        assert_relative_eq!(v, 3.0 * 2f64.sqrt(), max_relative = 1e-14);
        let v = lorentz_norm(&[1.5; 4], &[0.5; 4], 3.0, LorentzVariant::Strong(1.7)).unwrap();
        assert_relative_eq!(v, 1.5 * 2f64.powf(1.0 / 3.0), max_relative = 1e-13);
        let (v1, v2, w1, w2, q) = (2.0, 1.0, 0.25, 3.0, 2.0);
        let v = lorentz_norm(&[v1, v2], &[w1, w2], q, LorentzVariant::Weak).unwrap();
        let expect = f64::max(v1 * w1.powf(1.0 / q), v2 * (w1 + w2).powf(1.0 / q));
        assert_relative_eq!(v, expect, max_relative = 1e-14);
        assert!(lorentz_norm(&[1.0], &[-1.0], 2.0, LorentzVariant::Weak).is_err());
    }

    #[test]
    fn lorentz_matches_sort_and_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = 1 + trial * 50;
            let values: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 8.0).round() / 4.0 - 1.0).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            for variant in [LorentzVariant::Weak, LorentzVariant::Strong(1.5), LorentzVariant::Strong(0.7)] {
                let a = lorentz_norm(&values, &weights, 1.3, variant).unwrap();
                let b = brute_force_lorentz(&values, &weights, 1.3, variant);
                assert_relative_eq!(a, b, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn convolution_of_impulse_returns_kernel() {
        let g = GridSpec::new(1, 2.0, 32).unwrap();
        let k = GridFunction::from_fn(g, |x| (-x[0] * x[0]).exp());
        let out = convolve(&GridFunction::impulse(g, g.origin()), &k).unwrap();
        for (a, b) in out.values().iter().zip(k.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_convolution_adds_variances() {
        let g = GridSpec::new(1, 10.0, 512).unwrap();
        let gauss = |s2: f64| move |x: &[f64]| (-x[0] * x[0] / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI * s2).sqrt();
        let out = convolve(&GridFunction::from_fn(g, gauss(0.5)), &GridFunction::from_fn(g, gauss(0.8))).unwrap();
        let expect = GridFunction::from_fn(g, gauss(1.3));
        for (a, b) in out.values().iter().zip(expect.values()) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn fft_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in [1usize, 2] {
            let g = GridSpec::new(dim, 1.0, 16).unwrap();
            let f = GridFunction::new(g, (0..g.len()).map(|_| rng.random::<f64>() - 0.3).collect()).unwrap();
            let k = GridFunction::new(g, (0..g.len()).map(|_| rng.random::<f64>()).collect()).unwrap();
            let fast = convolve(&f, &k).unwrap();
            let slow = convolve_direct(&f, &k).unwrap();
            let scale = slow.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in fast.values().iter().zip(slow.values()) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn convolution_is_translation_equivariant() {
        let g = GridSpec::new(1, 4.0, 64).unwrap();
        let k = GridFunction::from_fn(g, |x| 1.0 / (1.0 + x[0] * x[0]));
        let bump = |c: f64| move |x: &[f64]| (-(x[0] - c).powi(2) * 4.0).exp();
        let h = g.spacing();
        let a = convolve(&GridFunction::from_fn(g, bump(0.0)), &k).unwrap();
        let b = convolve(&GridFunction::from_fn(g, bump(h)), &k).unwrap();
        // compare away from the box edge
        for i in 8..56 {
            assert!((a.values()[i] - b.values()[i + 1]).abs() < 1e-10);
        }
    }

    #[test]
    fn binary_and_csv_io() {
        let g = GridSpec::new(2, 1.5, 8).unwrap();
        let f = GridFunction::from_fn(g, |x| x[0] - 2.0 * x[1]);
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 8 + 8 + 64 * 8);
        assert_eq!(read_binary(&buf[..]).unwrap(), f);
        let mut text = Vec::new();
        write_csv(&f, &mut text).unwrap();
        let back = read_csv(&text[..]).unwrap();
        for (a, b) in back.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn ladder_refinement_interleaves() {
        let l = TLadder::geometric(0.1, 10.0, 5).unwrap();
        assert_relative_eq!(l.ratio(), 100f64.powf(0.25), max_relative = 1e-13);
        let r = l.refined();
        assert_eq!(r.len(), 9);
        assert_relative_eq!(r.ratio(), l.ratio().sqrt(), max_relative = 1e-12);
        assert!(TLadder::geometric(1.0, 0.5, 4).is_err());
        assert_eq!(l.slice_index(l.slices()[3]), Some(3));
    }

    proptest! {
        #[test]
        fn convolution_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = GridSpec::new(1, 1.0, 16).unwrap();
            let mut rand_fn = || GridFunction::new(g, (0..16).map(|_| rng.random::<f64>()).collect()).unwrap();
            let (f1, f2, k) = (rand_fn(), rand_fn(), rand_fn());
            let combo = GridFunction::new(g, f1.values().iter().zip(f2.values()).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let lhs = convolve(&combo, &k).unwrap();
            let (c1, c2) = (convolve(&f1, &k).unwrap(), convolve(&f2, &k).unwrap());
            for i in 0..16 {
                prop_assert!((lhs.values()[i] - a * c1.values()[i] - b * c2.values()[i]).abs() < 1e-10);
            }
        }

        #[test]
        fn lorentz_qq_equals_lq(q in 0.5f64..4.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let w: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let direct: f64 = v.iter().zip(&w).map(|(v, w)| w * v.powf(q)).sum::<f64>().powf(1.0 / q);
            let l = lorentz_norm(&v, &w, q, LorentzVariant::Strong(q)).unwrap();
            prop_assert!((l - direct).abs() <= 1e-10 * direct);
        }
    }
}

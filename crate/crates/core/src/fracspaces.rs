//! Fractional Laplacians, homogeneous Sobolev norms, fractional perimeters and
//! the fractional capacity `Cap^{β,p}` on the boundary grid.
//!
//! Grid functions are read as data on cells `[x_i - h/2, x_i + h/2]ⁿ`; sets are
//! finite unions of such cells. All singular kernels are integrated cell by
//! cell, with closed forms or polar coordinates wherever a cell touches the
//! singularity.

use crate::capacity::{band_integral, check_p, dual_core, primal_core, ConstraintMatrix, SolverConfig};
use crate::error::{invalid, CapaxError, Result};
use crate::extension::{energy_identity_with, hl_max};
use crate::grid::{lp_norm, Convolver, GridFunction, GridSpec, OffsetKernel, TLadder};
use crate::kernel::{frac_laplacian_constant, riesz_cell_average, riesz_potential_constant, KernelParams};
use crate::special::{gauss_legendre_on, neumaier_sum, pairwise_sum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// How an indicator set was described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum IndicatorGenerator {
    /// `[a, b)` in one dimension.
    Interval { a: f64, b: f64 },
    /// `[x0, x1) × [y0, y1)` in two dimensions.
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Open disc in two dimensions.
    Disc { center: [f64; 2], r: f64 },
    Union { parts: Vec<IndicatorGenerator> },
    /// Given cell by cell.
    Cells,
}

impl IndicatorGenerator {
    fn contains(&self, c: [f64; 2]) -> bool {
        match self {
            Self::Interval { a, b } => *a <= c[0] && c[0] < *b,
            Self::Rect { x0, y0, x1, y1 } => *x0 <= c[0] && c[0] < *x1 && *y0 <= c[1] && c[1] < *y1,
            Self::Disc { center, r } => (c[0] - center[0]).hypot(c[1] - center[1]) < *r,
            Self::Union { parts } => parts.iter().any(|g| g.contains(c)),
            Self::Cells => false,
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Self::Interval { a, b } if dim == 1 && a < b => Ok(()),
            Self::Rect { x0, y0, x1, y1 } if dim == 2 && x0 < x1 && y0 < y1 => Ok(()),
            Self::Disc { r, .. } if dim == 2 && *r > 0.0 => Ok(()),
            Self::Union { parts } => parts.iter().try_for_each(|g| g.check_dim(dim)),
            Self::Cells => Ok(()),
            other => Err(invalid("generator", format!("{other:?} is not a valid {dim}-dimensional shape"))),
        }
    }

    /// Generator text: one shape per line (`interval a b`, `rect x0 y0 x1 y1`,
    /// `disc cx cy r`), `union` ... `end` blocks, `#` comments. Top-level
    /// shapes are united.
    pub fn parse(text: &str) -> Result<Self> {
        let mut stack: Vec<Vec<IndicatorGenerator>> = vec![vec![]];
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| CapaxError::Parse { line: ln + 1, reason };
            let words: Vec<&str> = line.split_whitespace().collect();
            let nums = |k: usize| -> Result<Vec<f64>> {
                if words.len() != k + 1 {
                    return Err(err(format!("`{}` takes {k} numbers", words[0])));
                }
                words[1..]
                    .iter()
                    .map(|w| w.parse::<f64>().map_err(|e| err(format!("{w}: {e}"))))
                    .collect()
            };
            let shape = match words[0] {
                "interval" => {
                    let v = nums(2)?;
                    Self::Interval { a: v[0], b: v[1] }
                }
                "rect" => {
                    let v = nums(4)?;
                    Self::Rect {
                        x0: v[0],
                        y0: v[1],
                        x1: v[2],
                        y1: v[3],
                    }
                }
                "disc" => {
                    let v = nums(3)?;
                    Self::Disc {
                        center: [v[0], v[1]],
                        r: v[2],
                    }
                }
                "union" => {
                    stack.push(vec![]);
                    continue;
                }
                "end" => {
                    if stack.len() < 2 {
                        return Err(err("`end` without `union`".into()));
                    }
                    let parts = stack.pop().expect("checked depth");
                    Self::Union { parts }
                }
                other => return Err(err(format!("unknown shape `{other}`"))),
            };
            stack.last_mut().expect("non-empty stack").push(shape);
        }
        if stack.len() != 1 {
            return Err(CapaxError::Parse {
                line: text.lines().count(),
                reason: "unterminated `union` block".into(),
            });
        }
        let mut top = stack.pop().expect("root");
        Ok(if top.len() == 1 { top.remove(0) } else { Self::Union { parts: top } })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_text(&mut out);
        out
    }

    fn write_text(&self, out: &mut String) {
        match self {
            Self::Interval { a, b } => writeln!(out, "interval {a} {b}"),
            Self::Rect { x0, y0, x1, y1 } => writeln!(out, "rect {x0} {y0} {x1} {y1}"),
            Self::Disc { center, r } => writeln!(out, "disc {} {} {r}", center[0], center[1]),
            Self::Union { parts } => {
                let _ = writeln!(out, "union");
                parts.iter().for_each(|p| p.write_text(out));
                writeln!(out, "end")
            }
            Self::Cells => writeln!(out, "# cells"),
        }
        .expect("writing to a String");
    }
}

/// A finite union of grid cells `E ⊆ ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSet {
    spec: GridSpec,
    membership: Vec<bool>,
    generator: IndicatorGenerator,
}

impl IndicatorSet {
    pub fn new(spec: GridSpec, membership: Vec<bool>) -> Result<Self> {
        if membership.len() != spec.len() {
            return Err(CapaxError::GridMismatch(format!(
                "{} membership flags for {} cells",
                membership.len(),
                spec.len()
            )));
        }
        let set = Self {
            spec,
            membership,
            generator: IndicatorGenerator::Cells,
        };
        set.check_complement()?;
        Ok(set)
    }

    /// Cells whose centre lies in the shape.
    pub fn from_generator(spec: GridSpec, generator: IndicatorGenerator) -> Result<Self> {
        generator.check_dim(spec.dim())?;
        let membership = (0..spec.len()).map(|i| generator.contains(spec.coords(i))).collect();
        let set = Self {
            spec,
            membership,
            generator,
        };
        set.check_complement()?;
        Ok(set)
    }

    /// `B(x, r)`: an interval in one dimension, a disc in two.
    pub fn ball(spec: GridSpec, center: [f64; 2], r: f64) -> Result<Self> {
        let g = match spec.dim() {
            1 => IndicatorGenerator::Interval {
                a: center[0] - r,
                b: center[0] + r,
            },
            _ => IndicatorGenerator::Disc { center, r },
        };
        Self::from_generator(spec, g)
    }

    pub fn empty(spec: GridSpec) -> Self {
        Self {
            membership: vec![false; spec.len()],
            spec,
            generator: IndicatorGenerator::Union { parts: vec![] },
        }
    }

    fn check_complement(&self) -> Result<()> {
        if self.membership.iter().all(|b| *b) {
            return Err(invalid("E", "the complement of the set is empty"));
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn membership(&self) -> &[bool] {
        &self.membership
    }
    pub fn generator(&self) -> &IndicatorGenerator {
        &self.generator
    }
    pub fn count(&self) -> usize {
        self.membership.iter().filter(|b| **b).count()
    }
    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
    /// Lebesgue measure `|E|`.
    pub fn measure(&self) -> f64 {
        self.count() as f64 * self.spec.cell_volume()
    }

    pub fn indicator(&self) -> GridFunction {
        let v = self.membership.iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
        GridFunction::new(self.spec, v).expect("same grid")
    }

    /// Translation by whole cells; cells pushed off the grid are an error.
    pub fn translated(&self, cells: [i64; 2]) -> Result<Self> {
        let m = self.spec.points() as i64;
        let mut out = vec![false; self.spec.len()];
        for (i, b) in self.membership.iter().enumerate() {
            if !b {
                continue;
            }
            let mi = self.spec.multi_index(i);
            let a = mi[0] as i64 + cells[0];
            let c = if self.spec.dim() == 2 { mi[1] as i64 + cells[1] } else { 0 };
            if !(0..m).contains(&a) || !(0..m).contains(&c) {
                return Err(invalid("cells", "translation leaves the grid"));
            }
            out[self.spec.flat_index([a as usize, c as usize])] = true;
        }
        Self::new(self.spec, out)
    }

    /// Reflection through the grid centre, `i ↦ m - 1 - i` on every axis.
    pub fn reflected(&self) -> Self {
        let m = self.spec.points();
        let mut out = vec![false; self.spec.len()];
        for (i, b) in self.membership.iter().enumerate() {
            if *b {
                let mi = self.spec.multi_index(i);
                let r = match self.spec.dim() {
                    1 => [m - 1 - mi[0], 0],
                    _ => [m - 1 - mi[0], m - 1 - mi[1]],
                };
                out[self.spec.flat_index(r)] = true;
            }
        }
        Self {
            spec: self.spec,
            membership: out,
            generator: IndicatorGenerator::Cells,
        }
    }

    /// Union with every cell sharing a face or corner with the set.
    pub fn dilated(&self) -> Result<Self> {
        let m = self.spec.points() as i64;
        let mut out = self.membership.clone();
        let reach: i64 = 1;
        for (i, b) in self.membership.iter().enumerate() {
            if !b {
                continue;
            }
            let mi = self.spec.multi_index(i);
            let r1 = if self.spec.dim() == 2 { reach } else { 0 };
            for a in -reach..=reach {
                for c in -r1..=r1 {
                    let x = mi[0] as i64 + a;
                    let y = mi[1] as i64 + c;
                    if (0..m).contains(&x) && (0..m).contains(&y) {
                        out[self.spec.flat_index([x as usize, y as usize])] = true;
                    }
                }
            }
        }
        Self::new(self.spec, out)
    }
}

/// Which form of `‖f‖_{Ẇ^{β,p}}` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SobolevBranch {
    /// `‖(-Δ)^{β/2} f‖_p`, for `1 < p < n/β`.
    Fourier,
    /// `(∫ ‖Δ^k_h f‖_p^p |h|^{-n-pβ} dh)^{1/p}`, `k = 1 + ⌊β⌋`, for `p = 1` or `p = n/β`.
    Difference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    pub beta: f64,
    pub p: f64,
    pub branch: SobolevBranch,
}

impl SobolevParams {
    pub fn new(dim: usize, beta: f64, p: f64, branch: SobolevBranch) -> Result<Self> {
        let n = dim as f64;
        if !(beta > 0.0 && beta < n) {
            return Err(invalid("beta", format!("{beta} outside (0, {n})")));
        }
        let critical = n / beta;
        let ok = match branch {
            SobolevBranch::Fourier => p > 1.0 && p < critical,
            SobolevBranch::Difference => p == 1.0 || (p - critical).abs() <= 1e-12 * critical,
        };
        if !ok {
            return Err(invalid(
                "branch",
                format!("{branch:?} does not apply to p = {p} with n/β = {critical}"),
            ));
        }
        Ok(Self { beta, p, branch })
    }

    /// The branch that applies to `(β, p)`.
    pub fn auto(dim: usize, beta: f64, p: f64) -> Result<Self> {
        let branch = if p > 1.0 && p < dim as f64 / beta {
            SobolevBranch::Fourier
        } else {
            SobolevBranch::Difference
        };
        Self::new(dim, beta, p, branch)
    }

    /// Either branch at any `p ≥ 1`, for comparing the two forms where both
    /// are finite.
    pub fn cross_check(beta: f64, p: f64, branch: SobolevBranch) -> Result<Self> {
        if !(beta > 0.0 && p >= 1.0 && p.is_finite()) {
            return Err(invalid("beta", format!("need β > 0 and p ≥ 1, got ({beta}, {p})")));
        }
        Ok(Self { beta, p, branch })
    }

    /// Order of the difference operator, `1 + ⌊β⌋`.
    pub fn k(&self) -> usize {
        1 + self.beta.floor() as usize
    }
}

fn check_order(s: f64, hi: f64, name: &'static str) -> Result<()> {
    if !(s > 0.0 && s < hi) {
        return Err(invalid(name, format!("{s} outside (0, {hi})")));
    }
    Ok(())
}

/// Result of the spectral route, with the resolution warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracLaplacian {
    pub values: GridFunction,
    /// More than 1% of the spectral energy sits in the top quarter of frequencies.
    pub bandlimit_warning: bool,
}

/// `(-Δ)^{s/2} f` as the periodic multiplier `(2π|ξ|)^s` with `ξ_k = k/(2L)`.
pub fn frac_laplacian_fourier(f: &GridFunction, s: f64) -> Result<FracLaplacian> {
    check_order(s, 2.0, "s")?;
    Ok(FracLaplacian {
        bandlimit_warning: f.high_frequency_energy_fraction() > 0.01,
        values: crate::grid::spectral_multiply(f, |xi| (2.0 * PI * xi).powf(s)),
    })
}

// Gauss rule on a square [a0, a0 + w] × [a1, a1 + w].
fn square_quadrature(a0: f64, a1: f64, w: f64, order: usize, g: impl Fn(f64, f64) -> f64) -> f64 {
    let nodes: Vec<(f64, f64)> = gauss_legendre_on(order, 0.0, w).collect();
    let mut acc = 0.0;
    for (u, wu) in &nodes {
        for (v, wv) in &nodes {
            acc += wu * wv * g(a0 + u, a1 + v);
        }
    }
    acc
}

/// `∫_{[0,1]²} (a1 w1 + a2 w2 + a3 w1 w2) |w|^{-2-e} dw` for `e < 1`, in polar
/// coordinates about the singular corner.
fn corner_square(a: [f64; 3], e: f64) -> f64 {
    let piece = |th: f64, r: f64| {
        let (c, s) = (th.cos(), th.sin());
        (a[0] * c + a[1] * s) * r.powf(1.0 - e) / (1.0 - e) + a[2] * c * s * r.powf(2.0 - e) / (2.0 - e)
    };
    let lower: f64 = gauss_legendre_on(32, 0.0, PI / 4.0).map(|(th, w)| w * piece(th, 1.0 / th.cos())).sum();
    let upper: f64 = gauss_legendre_on(32, PI / 4.0, PI / 2.0).map(|(th, w)| w * piece(th, 1.0 / th.sin())).sum();
    lower + upper
}

/// `∫_{|z|_∞ > a} |z|^{-2-e} dz = (8/e) a^{-e} ∫_0^{π/4} cos^e θ dθ`.
fn outside_square(a: f64, e: f64) -> f64 {
    let ang: f64 = gauss_legendre_on(32, 0.0, PI / 4.0).map(|(th, w)| w * th.cos().powf(e)).sum();
    8.0 / e * a.powf(-e) * ang
}

/// `∫_{[-a,a]²} |z|^{q} dz` for `q > -2`.
fn inside_square_power(a: f64, q: f64) -> f64 {
    let ang: f64 = gauss_legendre_on(32, 0.0, PI / 4.0).map(|(th, w)| w * th.cos().powf(-(q + 2.0))).sum();
    8.0 / (q + 2.0) * a.powf(q + 2.0) * ang
}

// central differences with zero extension
fn derivative_fields(f: &GridFunction) -> Vec<Vec<f64>> {
    let spec = f.spec();
    let m = spec.points() as i64;
    let h = spec.spacing();
    let v = f.values();
    let at = |i: i64, j: i64| -> f64 {
        if (0..m).contains(&i) && (0..m).contains(&j) {
            v[spec.flat_index([i as usize, j as usize])]
        } else {
            0.0
        }
    };
    let fields: Vec<[f64; 5]> = (0..spec.len())
        .map(|idx| {
            let mi = spec.multi_index(idx);
            let (i, j) = (mi[0] as i64, mi[1] as i64);
            let c = at(i, j);
            let d1 = (at(i + 1, j) - at(i - 1, j)) / (2.0 * h);
            let d11 = (at(i + 1, j) - 2.0 * c + at(i - 1, j)) / (h * h);
            if spec.dim() == 1 {
                [d1, 0.0, d11, 0.0, 0.0]
            } else {
                let d2 = (at(i, j + 1) - at(i, j - 1)) / (2.0 * h);
                let d22 = (at(i, j + 1) - 2.0 * c + at(i, j - 1)) / (h * h);
                let d12 = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1) + at(i - 1, j - 1)) / (4.0 * h * h);
                [d1, d2, d11, d22, d12]
            }
        })
        .collect();
    (0..5).map(|k| fields.iter().map(|a| a[k]).collect()).collect()
}

fn offset_table(spec: &GridSpec, value: impl Fn(i64, i64) -> f64 + Sync) -> OffsetKernel {
    let m = spec.points();
    let side = 2 * m - 1;
    let lo = -(m as i64 - 1);
    let weights = match spec.dim() {
        1 => (0..side).map(|k| value(lo + k as i64, 0)).collect(),
        _ => (0..side * side)
            .into_par_iter()
            .map(|k| value(lo + (k / side) as i64, lo + (k % side) as i64))
            .collect(),
    };
    OffsetKernel {
        dim: spec.dim(),
        m,
        weights,
    }
}

/// `(-Δ)^{s/2} f` from the principal-value integral
/// `C(n,s) P.V.∫ (f(x) - f(y)) |x - y|^{-n-s} dy`.
///
/// On each cell `f` is replaced by its second-order Taylor polynomial about the
/// cell centre and integrated exactly against the kernel moments of the cell;
/// on the cell of `x` this leaves `-½ ∇²f(x) : ∫ z z^T |z|^{-n-s}`. `f` vanishes
/// off the grid, so the far field reduces to `f(x) ∫_{outside the cell} |z|^{-n-s}`.
pub fn frac_laplacian_pv(f: &GridFunction, s: f64) -> Result<GridFunction> {
    check_order(s, 2.0, "s")?;
    let spec = *f.spec();
    let n = spec.dim();
    let h = spec.spacing();
    let e = n as f64 + s;
    let kern = |z0: f64, z1: f64| (z0 * z0 + z1 * z1).powf(-e / 2.0);
    // moments on unit cells: [mass, first (2), second (3)]
    let moments = |d0: i64, d1: i64| -> [f64; 6] {
        if d0 == 0 && d1 == 0 {
            let second = match n {
                1 => 2.0 * 0.5f64.powf(2.0 - s) / (2.0 - s),
                _ => 0.5 * inside_square_power(0.5, -s),
            };
            return [0.0, 0.0, 0.0, second, if n == 2 { second } else { 0.0 }, 0.0];
        }
        let order = if d0.abs().max(d1.abs()) <= 2 { 16 } else { 6 };
        match n {
            1 => {
                let c = d0 as f64;
                let mut acc = [0.0; 6];
                for (z, w) in gauss_legendre_on(order, c - 0.5, c + 0.5) {
                    let k = w * z.abs().powf(-e);
                    acc[0] += k;
                    acc[1] += k * (z - c);
                    acc[3] += k * (z - c) * (z - c);
                }
                acc
            }
            _ => {
                let (c0, c1) = (d0 as f64, d1 as f64);
                let nodes: Vec<(f64, f64)> = gauss_legendre_on(order, -0.5, 0.5).collect();
                let mut acc = [0.0; 6];
                for (u, wu) in &nodes {
                    for (v, wv) in &nodes {
                        let k = wu * wv * kern(c0 + u, c1 + v);
                        acc[0] += k;
                        acc[1] += k * u;
                        acc[2] += k * v;
                        acc[3] += k * u * u;
                        acc[4] += k * v * v;
                        acc[5] += k * u * v;
                    }
                }
                acc
            }
        }
    };
    let m = spec.points();
    let side = 2 * m - 1;
    let lo = -(m as i64 - 1);
    let count = side.pow(n as u32);
    let table: Vec<[f64; 6]> = (0..count)
        .into_par_iter()
        .map(|k| match n {
            1 => moments(lo + k as i64, 0),
            _ => moments(lo + (k / side) as i64, lo + (k % side) as i64),
        })
        .collect();
    // Σ_d g(x + d h) M(d) is a convolution with M(-d): odd moments flip sign
    let kernel = |slot: usize, sign: f64, scale: f64| OffsetKernel {
        dim: n,
        m,
        weights: table.iter().map(|t| sign * scale * t[slot]).collect(),
    };
    let outside = match n {
        1 => 2.0 * 0.5f64.powf(-s) / s,
        _ => outside_square(0.5, s),
    };
    let conv = Convolver::new(spec);
    let derivs = derivative_fields(f);
    let apply = |values: &[f64], k: &OffsetKernel| conv.apply(&conv.transform_input(values), &conv.transform_kernel(k));
    let hs = h.powf(-s);
    let mut total = apply(f.values(), &kernel(0, 1.0, hs));
    let mut add = |values: &[f64], k: OffsetKernel| {
        for (t, v) in total.iter_mut().zip(apply(values, &k)) {
            *t += v;
        }
    };
    add(&derivs[0], kernel(1, -1.0, h * hs));
    add(&derivs[2], kernel(3, 1.0, 0.5 * h * h * hs));
    if n == 2 {
        add(&derivs[1], kernel(2, -1.0, h * hs));
        add(&derivs[3], kernel(4, 1.0, 0.5 * h * h * hs));
        add(&derivs[4], kernel(5, 1.0, h * h * hs));
    }
    let c = frac_laplacian_constant(n, s);
    let values = f
        .values()
        .iter()
        .zip(&total)
        .map(|(fx, t)| c * (fx * outside * hs - t))
        .collect();
    GridFunction::new(spec, values)
}

/// `2 / C(n, 2β)`: for `k = 1`, `∫‖Δ_h f‖_2² |h|^{-n-2β} dh` equals this constant
/// times `‖(-Δ)^{β/2} f‖_2²`.
pub fn sobolev_equivalence_constant(dim: usize, beta: f64) -> f64 {
    2.0 / frac_laplacian_constant(dim, 2.0 * beta)
}

fn binomial(k: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64)
}

/// `‖Δ^k_{d h} f‖_p^p` for the lattice shift `d`, with `f = 0` off the grid.
fn difference_pow(f: &GridFunction, k: usize, d: [i64; 2], p: f64) -> f64 {
    let spec = f.spec();
    let m = spec.points() as i64;
    let v = f.values();
    let coeff: Vec<f64> = (0..=k)
        .map(|j| if (k - j) % 2 == 0 { 1.0 } else { -1.0 } * binomial(k, j))
        .collect();
    let kk = k as i64;
    let range = |dd: i64| (0.min(-kk * dd), (m - 1).max(m - 1 - kk * dd));
    let at = |i: i64, j: i64| -> f64 {
        if (0..m).contains(&i) && (0..m).contains(&j) {
            v[spec.flat_index([i as usize, j as usize])]
        } else {
            0.0
        }
    };
    let (a0, b0) = range(d[0]);
    let (a1, b1) = if spec.dim() == 2 { range(d[1]) } else { (0, 0) };
    let mut terms = Vec::with_capacity(((b0 - a0 + 1) * (b1 - a1 + 1)) as usize);
    for i in a0..=b0 {
        for j in a1..=b1 {
            let s: f64 = coeff
                .iter()
                .enumerate()
                .map(|(q, c)| c * at(i + q as i64 * d[0], j + q as i64 * d[1]))
                .sum();
            if s != 0.0 {
                terms.push(s.abs().powf(p));
            }
        }
    }
    pairwise_sum(&terms) * spec.cell_volume()
}

/// `∫_{ℝⁿ} ‖Δ^k_h f‖_p^p |h|^{-n-pβ} dh` for `f` vanishing off the grid.
///
/// The shift integral runs over lattice shifts `h = d·h_cell`. Between lattice
/// shifts the integrand is interpolated (linearly in one dimension, exact for
/// cell step functions; cell-wise in two). Shifts that move the grid off itself
/// have the constant value `Σ_j C(k,j)^p ‖f‖_p^p` and are integrated in closed
/// form. Inside the first cell the integrand follows `A(1)(|h|/h_cell)^γ` with
/// `γ = log₂(A(2)/A(1))` clamped to `[1, kp]`; if `γ ≤ pβ` the integral diverges
/// and `+∞` is returned.
pub fn difference_seminorm_pow(f: &GridFunction, beta: f64, p: f64, k: usize) -> Result<f64> {
    if !(beta > 0.0 && p >= 1.0 && k as f64 > beta) {
        return Err(invalid("beta", format!("need β > 0, p ≥ 1, k > β; got ({beta}, {p}, {k})")));
    }
    let spec = *f.spec();
    let n = spec.dim();
    let m = spec.points() as i64;
    let h = spec.spacing();
    let g = p * beta;
    let far = (0..=k).map(|j| binomial(k, j).powf(p)).sum::<f64>() * crate::grid::lp_norm_pow(f, p);
    if far == 0.0 {
        return Ok(0.0);
    }
    let model = |a1: f64, a2: f64| -> Option<(f64, f64)> {
        if a1 <= 0.0 {
            return Some((0.0, 1.0));
        }
        let gamma = (a2 / a1).log2().clamp(1.0, k as f64 * p);
        (gamma > g).then_some((a1, gamma))
    };
    match n {
        1 => {
            let a: Vec<f64> = (0..=m).into_par_iter().map(|d| if d == m { far } else { difference_pow(f, k, [d, 0], p) }).collect();
            let Some((a1, gamma)) = model(a[1], a[2.min(m as usize)]) else {
                return Ok(f64::INFINITY);
            };
            // one side, unit spacing; both sides are equal
            let mut terms = vec![a1 / (gamma - g)];
            for d in 1..m as usize {
                let (l, r) = (a[d], a[d + 1]);
                let v: f64 = gauss_legendre_on(8, 0.0, 1.0)
                    .map(|(u, w)| w * (l * (1.0 - u) + r * u) * (d as f64 + u).powf(-1.0 - g))
                    .sum();
                terms.push(v);
            }
            terms.push(far * (m as f64).powf(-g) / g);
            Ok(2.0 * neumaier_sum(terms) * h.powf(-g))
        }
        _ => {
            let side = 2 * m - 1;
            let offsets: Vec<[i64; 2]> = (0..side * side)
                .map(|q| [q / side - (m - 1), q % side - (m - 1)])
                .filter(|d| (d[0], d[1]) > (0, 0))
                .collect();
            let values: Vec<f64> = offsets.par_iter().map(|d| difference_pow(f, k, *d, p)).collect();
            let e = g;
            let weight = |d: [i64; 2]| -> f64 {
                let order = if d[0].abs().max(d[1].abs()) <= 2 { 16 } else { 4 };
                square_quadrature(d[0] as f64 - 0.5, d[1] as f64 - 0.5, 1.0, order, |x, y| {
                    (x * x + y * y).powf(-(2.0 + e) / 2.0)
                })
            };
            let mut terms: Vec<f64> = offsets.par_iter().zip(&values).map(|(d, v)| 2.0 * v * weight(*d)).collect();
            let find = |d: [i64; 2]| values[offsets.iter().position(|o| *o == d).expect("offset in table")];
            let a1 = 0.5 * (find([1, 0]) + find([0, 1]));
            let a2 = 0.5 * (find([2, 0]) + find([0, 2]));
            let Some((a1, gamma)) = model(a1, a2) else {
                return Ok(f64::INFINITY);
            };
            terms.push(a1 * inside_square_power(0.5, gamma - 2.0 - e));
            terms.push(far * outside_square(m as f64 - 0.5, e));
            Ok(neumaier_sum(terms) * h.powf(-g))
        }
    }
}

/// `‖f‖_{Ẇ^{β,p}}` on the chosen branch (`+∞` if the difference integral diverges).
pub fn sobolev_norm(f: &GridFunction, sp: &SobolevParams) -> Result<f64> {
    match sp.branch {
        SobolevBranch::Fourier => {
            // zero padding keeps the periodic images of the slow tail away
            let pad = if f.spec().dim() == 1 { 4 } else { 2 };
            lp_norm(&frac_laplacian_fourier(&f.zero_padded(pad)?, sp.beta)?.values, sp.p)
        }
        SobolevBranch::Difference => Ok(difference_seminorm_pow(f, sp.beta, sp.p, sp.k())?.powf(1.0 / sp.p)),
    }
}

/// `∫_{Q}∫_{Q + d} |x - y|^{-1-s} dy dx` for unit intervals at integer distance `d ≠ 0`.
fn pair_1d(s: f64, d: i64) -> f64 {
    let dd = d.unsigned_abs() as f64;
    if dd >= 64.0 {
        return dd.powf(-1.0 - s) * (1.0 + (1.0 + s) * (2.0 + s) / (12.0 * dd * dd));
    }
    let f = |u: f64| if u == 0.0 { 0.0 } else { u.powf(1.0 - s) };
    (2.0 * f(dd) - f(dd - 1.0) - f(dd + 1.0)) / (s * (1.0 - s))
}

/// `∫_Q∫_{Q + d} |x - y|^{-2-s}` for unit squares, `d ≠ 0`.
fn pair_2d(s: f64, d: [i64; 2]) -> f64 {
    let reach = d[0].abs().max(d[1].abs());
    let (x, y) = (d[0] as f64, d[1] as f64);
    if reach > 6 {
        let r2 = x * x + y * y;
        return r2.powf(-(2.0 + s) / 2.0) * (1.0 + (2.0 + s) * (2.0 + s) / (12.0 * r2));
    }
    // ∫ K(z) Λ(z - d) dz, Λ(u) = (1-|u₁|)₊(1-|u₂|)₊, split into unit squares
    let mut acc = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            let lo = [d[0] - 1 + a, d[1] - 1 + b];
            // on this square Λ = (u0 + v0 z1)(u1 + v1 z2)
            let (u0, v0) = if a == 0 { (1.0 - x, 1.0) } else { (1.0 + x, -1.0) };
            let (u1, v1) = if b == 0 { (1.0 - y, 1.0) } else { (1.0 + y, -1.0) };
            let corner = (lo[0] == 0 || lo[0] == -1) && (lo[1] == 0 || lo[1] == -1);
            if corner {
                let s1 = if lo[0] == 0 { 1.0 } else { -1.0 };
                let s2 = if lo[1] == 0 { 1.0 } else { -1.0 };
                debug_assert!((u0 * u1).abs() < 1e-12);
                acc += corner_square([v0 * u1 * s1, u0 * v1 * s2, v0 * v1 * s1 * s2], s);
            } else {
                acc += square_quadrature(lo[0] as f64, lo[1] as f64, 1.0, 16, |z1, z2| {
                    (u0 + v0 * z1) * (u1 + v1 * z2) * (z1 * z1 + z2 * z2).powf(-(2.0 + s) / 2.0)
                });
            }
        }
    }
    acc
}

/// `Per_s` of the unit cell.
fn unit_cell_perimeter(dim: usize, s: f64) -> f64 {
    match dim {
        1 => 2.0 / (s * (1.0 - s)),
        // ∫ K(z)(1 - Λ(z)) dz: four corner squares plus everything outside [-1,1]²
        _ => 4.0 * corner_square([1.0, 1.0, -1.0], s) + outside_square(1.0, s),
    }
}

/// `Per_s(E) = ∫_E ∫_{ℝⁿ∖E} |x - y|^{-n-s} dx dy`.
///
/// Written as `|E|_cells Per_s(cell) - Σ_{i ≠ j ∈ E} I(i - j)` with the cell-pair
/// interaction `I` exact in one dimension (closed form) and, in two, exact in
/// polar coordinates for squares meeting at the singularity. The outside of the
/// grid is part of the complement.
pub fn frac_perimeter(e: &IndicatorSet, s: f64) -> Result<f64> {
    check_order(s, 1.0, "s")?;
    if e.is_empty() {
        return Ok(0.0);
    }
    let spec = *e.spec();
    let n = spec.dim();
    let h = spec.spacing();
    let table = offset_table(&spec, |a, b| match (n, a, b) {
        (_, 0, 0) => 0.0,
        (1, a, _) => pair_1d(s, a),
        (_, a, b) => pair_2d(s, [a, b]),
    });
    let ind = e.indicator();
    let conv = Convolver::new(spec);
    let inner = conv.apply(&conv.transform_input(ind.values()), &conv.transform_kernel(&table));
    let interactions = neumaier_sum(ind.values().iter().zip(&inner).map(|(a, b)| a * b));
    let per = e.count() as f64 * unit_cell_perimeter(n, s) - interactions;
    Ok(per.max(0.0) * h.powf(n as f64 - s))
}

/// Both sides of the coarea identity `‖f‖_{Ẇ^{s,1}} = 2∫_0^∞ Per_s({f > t}) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoareaReport {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub levels: Vec<f64>,
    /// Set when a supplied level grid misses some value of `f`.
    pub level_mismatch: bool,
}

/// Superlevel sets are snapped to cells (`f ≥ level` at the cell centre). With
/// no level grid the distinct values of `f` are used, which makes every layer
/// exact for step functions.
pub fn coarea_check(f: &GridFunction, s: f64, levels: Option<&[f64]>) -> Result<CoareaReport> {
    check_order(s, 1.0, "s")?;
    if f.values().iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(invalid("f", "must be finite and non-negative"));
    }
    let mut values: Vec<f64> = f.values().iter().cloned().filter(|v| *v > 0.0).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let (grid, level_mismatch) = match levels {
        Some(l) => {
            let mut l: Vec<f64> = l.iter().cloned().filter(|v| *v > 0.0).collect();
            l.sort_by(f64::total_cmp);
            l.dedup();
            let miss = values.iter().any(|v| !l.iter().any(|x| (x - v).abs() <= 1e-12 * v.abs()));
            (l, miss)
        }
        None => (values, false),
    };
    let lhs = difference_seminorm_pow(f, s, 1.0, 1)?;
    let spec = *f.spec();
    let mut prev = 0.0;
    let mut terms = Vec::with_capacity(grid.len());
    for &lv in &grid {
        let member: Vec<bool> = f.values().iter().map(|v| *v >= lv).collect();
        if member.iter().all(|b| *b) {
            return Err(invalid("f", "a superlevel set fills the grid"));
        }
        let set = IndicatorSet::new(spec, member)?;
        terms.push((lv - prev) * frac_perimeter(&set, s)?);
        prev = lv;
    }
    let rhs = 2.0 * neumaier_sum(terms);
    Ok(CoareaReport {
        lhs,
        rhs,
        ratio: if rhs > 0.0 { lhs / rhs } else { f64::NAN },
        levels: grid,
        level_mismatch,
    })
}

/// `Γ(s/2) π^{n/2} / (s Γ((n+s)/2))`: `Per_s(E)` equals this constant times
/// `∫∫ |∇u_E|² t^{1-s}` for the extension `u_E` of `1_E` with `α = s`.
pub fn perimeter_extension_constant(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    (crate::special::ln_gamma(s / 2.0) + 0.5 * n * PI.ln() - s.ln() - crate::special::ln_gamma((n + s) / 2.0)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionPerimeter {
    pub direct: f64,
    /// `constant × ∫∫ |∇u_E|² t^{1-s}`, extrapolated in the grid spacing.
    pub via_extension: f64,
    /// Energies on the grid and on its refinement.
    pub energy: f64,
    pub energy_refined: f64,
    /// `via_extension / direct`; `None` for the empty set.
    pub ratio: Option<f64>,
    /// Whether refining the height ladder moved the energies by at most 2%.
    pub ladder_converged: bool,
}

/// `Per_s(E)` computed directly and through the weighted Dirichlet energy of
/// the extension of `1_E`.
///
/// The discrete energy misses the part of the jump layer below one cell, which
/// is `O(h^{1-s})`; the energy is evaluated at `h` and `h/2` and extrapolated
/// with that order. Each grid uses a ladder of `slices` heights on `[h/2, 4L]`.
pub fn perimeter_via_extension(e: &IndicatorSet, s: f64, slices: usize) -> Result<ExtensionPerimeter> {
    check_order(s, 1.0, "s")?;
    let direct = frac_perimeter(e, s)?;
    if e.is_empty() {
        return Ok(ExtensionPerimeter {
            direct,
            via_extension: 0.0,
            energy: 0.0,
            energy_refined: 0.0,
            ratio: None,
            ladder_converged: true,
        });
    }
    let spec = *e.spec();
    let params = KernelParams::new(spec.dim(), s)?;
    let coarse = energy_identity_with(&e.indicator(), &params, &TLadder::for_grid(&spec, slices)?)?;
    let fine_spec = spec.refined()?;
    let fine_set = refine_cells(e, fine_spec)?;
    let fine = energy_identity_with(&fine_set.indicator(), &params, &TLadder::for_grid(&fine_spec, slices)?)?;
    let gain = 2f64.powf(1.0 - s);
    let energy = (gain * fine.rhs - coarse.rhs) / (gain - 1.0);
    let via = perimeter_extension_constant(spec.dim(), s) * energy;
    Ok(ExtensionPerimeter {
        direct,
        via_extension: via,
        energy: coarse.rhs,
        energy_refined: fine.rhs,
        ratio: (direct > 0.0).then(|| via / direct),
        ladder_converged: coarse.ladder_converged && fine.ladder_converged,
    })
}

// each cell split into 2ⁿ children
fn refine_cells(e: &IndicatorSet, fine: GridSpec) -> Result<IndicatorSet> {
    let member = (0..fine.len())
        .map(|i| {
            let mi = fine.multi_index(i);
            e.membership()[e.spec().flat_index([mi[0] / 2, mi[1] / 2])]
        })
        .collect();
    IndicatorSet::new(fine, member)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FracCapacityRoute {
    /// `p = 1`: twice the perimeter of the one-cell dilation.
    Perimeter,
    /// `1 < p < n/β`: `min ‖g‖_p^p` over `g ≥ 0` with `I_β g ≥ 1` on the set.
    Riesz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracCapacity {
    /// Upper bound (the value itself on the perimeter route).
    pub value: f64,
    /// Certified lower bound from the dual (equal to `value` on the perimeter route).
    pub lower: f64,
    pub rel_gap: f64,
    pub route: FracCapacityRoute,
    pub iterations: usize,
    pub converged: bool,
}

/// `A[r, i] = γ ∫_{cell i} |x_r - y|^{β-n} dy` for the cells `r` of the set.
fn riesz_matrix(set: &[bool], spec: &GridSpec, beta: f64) -> ConstraintMatrix {
    let n = spec.dim();
    let h = spec.spacing();
    let gamma = riesz_potential_constant(n, beta);
    let table = offset_table(spec, |a, b| {
        let v = match (n, a, b) {
            (_, 0, 0) => riesz_cell_average(n, beta, h) * spec.cell_volume(),
            (1, a, _) => {
                let d = a.unsigned_abs() as f64;
                ((d + 0.5).powf(beta) - (d - 0.5).powf(beta)) / beta * h.powf(beta)
            }
            (_, a, b) => {
                let order = if a.abs().max(b.abs()) <= 2 { 16 } else { 4 };
                square_quadrature(a as f64 - 0.5, b as f64 - 0.5, 1.0, order, |x, y| {
                    (x * x + y * y).powf((beta - 2.0) / 2.0)
                }) * h.powf(beta)
            }
        };
        gamma * v
    });
    let rows: Vec<usize> = (0..spec.len()).filter(|i| set[*i]).collect();
    let cols = spec.len();
    let mut a = vec![0.0; rows.len() * cols];
    a.par_chunks_mut(cols).zip(&rows).for_each(|(row, &r)| {
        let ri = spec.multi_index(r);
        for (c, v) in row.iter_mut().enumerate() {
            let ci = spec.multi_index(c);
            *v = table.at(ri[0] as i64 - ci[0] as i64, ri[1] as i64 - ci[1] as i64);
        }
    });
    ConstraintMatrix::from_dense(rows.len(), cols, a, spec.cell_volume())
}

/// `Cap^{β,p}(O)`.
pub fn frac_capacity(o: &IndicatorSet, beta: f64, p: f64, cfg: &SolverConfig) -> Result<FracCapacity> {
    let spec = *o.spec();
    let n = spec.dim() as f64;
    check_order(beta, n, "beta")?;
    if p == 1.0 {
        check_order(beta, 1.0, "beta")?;
        let value = if o.is_empty() {
            0.0
        } else {
            2.0 * frac_perimeter(&o.dilated()?, beta)?
        };
        return Ok(FracCapacity {
            value,
            lower: value,
            rel_gap: 0.0,
            route: FracCapacityRoute::Perimeter,
            iterations: 0,
            converged: true,
        });
    }
    check_p(p)?;
    if p >= n / beta {
        return Err(CapaxError::Unsupported(format!(
            "Cap^(β,p) is solved for 1 < p < n/β = {}; got p = {p}",
            n / beta
        )));
    }
    if o.is_empty() {
        return Ok(FracCapacity {
            value: 0.0,
            lower: 0.0,
            rel_gap: 0.0,
            route: FracCapacityRoute::Riesz,
            iterations: 0,
            converged: true,
        });
    }
    let a = riesz_matrix(o.membership(), &spec, beta);
    solve_riesz(&a, p, cfg, None)
}

fn solve_riesz(a: &ConstraintMatrix, p: f64, cfg: &SolverConfig, warm: Option<Vec<f64>>) -> Result<FracCapacity> {
    let (dual, potential) = dual_core(a, p, cfg);
    let start = warm.unwrap_or(potential);
    let primal = primal_core(a, p, cfg, start)?;
    Ok(FracCapacity {
        value: primal.value,
        lower: dual.value,
        rel_gap: ((primal.value - dual.value) / primal.value).max(0.0),
        route: FracCapacityRoute::Riesz,
        iterations: primal.iterations + dual.iterations,
        converged: primal.converged || dual.converged,
    })
}

/// Level-set surrogates of `∫ Cap^{β,p}({|f| ≥ λ}) dλ^p` for `f` and for its
/// maximal function, against `‖f‖_{Ẇ^{β,p}}^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FracStrongType {
    pub levels: Vec<f64>,
    pub capacities: Vec<f64>,
    pub maximal_levels: Vec<f64>,
    pub maximal_capacities: Vec<f64>,
    pub lhs: f64,
    pub maximal_lhs: f64,
    pub norm_pow: f64,
    pub ratio: Option<f64>,
    pub maximal_ratio: Option<f64>,
}

fn level_integral(
    g: &GridFunction,
    beta: f64,
    p: f64,
    step: f64,
    octaves: f64,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let spec = *g.spec();
    let top = g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return Ok((vec![], vec![], 0.0));
    }
    let floor = top * (-octaves).exp2();
    let mut levels = vec![];
    let mut lam = top;
    while lam >= floor * (1.0 - 1e-12) {
        levels.push(lam);
        lam *= step;
    }
    let mut caps = vec![];
    let mut terms = vec![];
    for &lam in &levels {
        let member: Vec<bool> = g.values().iter().map(|v| v.abs() >= lam).collect();
        if member.iter().all(|b| *b) {
            return Err(invalid("f", "a level set fills the grid; widen the grid"));
        }
        let sol = solve_riesz(&riesz_matrix(&member, &spec, beta), p, cfg, None)?;
        caps.push(sol.value);
        terms.push((sol.value, lam.powf(p)));
    }
    Ok((levels, caps, band_integral(&terms, step, p)))
}

/// Capacitary strong-type surrogates for `f` and `Mf` (`1 < p < n/β`), with
/// levels `λ_max 2^{-j/K}` over `octaves` octaves.
pub fn frac_strong_type_check(
    f: &GridFunction,
    beta: f64,
    p: f64,
    steps_per_octave: usize,
    octaves: f64,
    cfg: &SolverConfig,
) -> Result<FracStrongType> {
    let n = f.spec().dim();
    let sp = SobolevParams::new(n, beta, p, SobolevBranch::Fourier)?;
    check_p(p)?;
    let step = (-1.0 / steps_per_octave.max(1) as f64).exp2();
    let norm_pow = sobolev_norm(f, &sp)?.powf(p);
    let (levels, capacities, lhs) = level_integral(f, beta, p, step, octaves, cfg)?;
    let mf = hl_max(&f.map(f64::abs));
    let (maximal_levels, maximal_capacities, maximal_lhs) = level_integral(&mf, beta, p, step, octaves, cfg)?;
    let ratio = |x: f64| (norm_pow > 0.0).then(|| x / norm_pow);
    Ok(FracStrongType {
        levels,
        capacities,
        maximal_levels,
        maximal_capacities,
        ratio: ratio(lhs),
        maximal_ratio: ratio(maximal_lhs),
        lhs,
        maximal_lhs,
        norm_pow,
    })
}

/// `∫_{ℝⁿ} p^α_t(y) |y - x|^{β-n} dy` at `|x| = r`, in polar coordinates about `x`.
pub fn riesz_convolution(params: &KernelParams, beta: f64, r: f64, t: f64) -> Result<f64> {
    let n = params.dim();
    crate::kernel::validate_riesz(n, beta)?;
    if n > 2 {
        return Err(CapaxError::Unsupported("the Riesz convolution is provided for n ≤ 2".into()));
    }
    if !(t > 0.0 && t.is_finite() && r >= 0.0 && r.is_finite()) {
        return Err(invalid("t", format!("need t > 0 and |x| ≥ 0, got ({r}, {t})")));
    }
    let c = params.normalization();
    let alpha = params.alpha();
    let nf = n as f64;
    let ta = t.powf(alpha);
    let kernel = |q2: f64| c * ta * (q2 + t * t).powf(-(nf + alpha) / 2.0);
    // sum (n = 1) or angular integral (n = 2) of p_t over the sphere of radius ρ about x
    let sphere = |rho: f64| -> f64 {
        if n == 1 {
            return kernel((r + rho).powi(2)) + kernel((r - rho).powi(2));
        }
        // |x + ρe|² = r² + ρ² + 2rρ cos θ, peaked at θ = π with width ~ sqrt(((r-ρ)² + t²)/(rρ))
        let a = r * r + rho * rho + t * t;
        let b = 2.0 * r * rho;
        let v = |phi: f64| c * ta * (a - b * phi.cos()).powf(-(nf + alpha) / 2.0);
        if b == 0.0 {
            return 2.0 * PI * v(0.0);
        }
        let w = ((a - b) / b).sqrt().clamp(1e-12, PI);
        let mut edges = vec![0.0];
        let mut e = w / 4.0;
        while e < PI {
            edges.push(e);
            e *= 2.0;
        }
        edges.push(PI);
        let mut acc = 0.0;
        for win in edges.windows(2) {
            acc += gauss_legendre_on(8, win[0], win[1]).map(|(ph, wt)| wt * v(ph)).sum::<f64>();
        }
        2.0 * acc
    };
    let scale = r.max(t);
    let mut edges: Vec<f64> = vec![];
    for j in -8..=40 {
        let step = t * 2f64.powi(j);
        edges.push(step);
        if r > 0.0 {
            edges.push(r + step);
            if r - step > 0.0 {
                edges.push(r - step);
            }
        }
    }
    if r > 0.0 {
        edges.push(r);
    }
    let rho_max = scale * 2f64.powi(40);
    edges.retain(|e| *e > 0.0 && *e < rho_max);
    edges.push(rho_max);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * b.abs());
    // [0, ρ₀]: ρ = ρ₀ v^{1/β} absorbs the ρ^{β-1} singularity
    let r0 = edges[0];
    let mut terms = vec![r0.powf(beta) / beta
        * gauss_legendre_on(16, 0.0, 1.0).map(|(v, w)| w * sphere(r0 * v.powf(1.0 / beta))).sum::<f64>()];
    for win in edges.windows(2) {
        terms.push(
            gauss_legendre_on(16, win[0], win[1])
                .map(|(rho, w)| w * rho.powf(beta - 1.0) * sphere(rho))
                .sum(),
        );
    }
    let omega = if n == 1 { 2.0 } else { 2.0 * PI };
    terms.push(omega * c * ta * rho_max.powf(beta - nf - alpha) / (nf + alpha - beta));
    Ok(neumaier_sum(terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszSample {
    pub x: f64,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Ratio at `(2x, 2t)`.
    pub ratio_doubled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszBoundReport {
    pub samples: Vec<RieszSample>,
    pub sup_ratio: f64,
    pub inf_ratio: f64,
    /// Largest relative change of the ratio under `(x, t) → (2x, 2t)`.
    pub scale_error: f64,
}

/// `count` points log-spaced on `[lo, hi]`.
pub fn log_lattice(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count < 2 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (step * i as f64).exp()).collect()
}

/// `∫ p^α_t(y) |y - x|^{β-n} dy / (t² + |x|²)^{(β-n)/2}` over the product of
/// `xs` and `ts`.
pub fn riesz_convolution_bound_check(
    params: &KernelParams,
    beta: f64,
    xs: &[f64],
    ts: &[f64],
) -> Result<RieszBoundReport> {
    let n = params.dim() as f64;
    let pairs: Vec<(f64, f64)> = xs.iter().flat_map(|&x| ts.iter().map(move |&t| (x, t))).collect();
    let samples: Vec<RieszSample> = pairs
        .par_iter()
        .map(|&(x, t)| {
            let rhs_at = |x: f64, t: f64| (t * t + x * x).powf((beta - n) / 2.0);
            let lhs = riesz_convolution(params, beta, x.abs(), t)?;
            let doubled = riesz_convolution(params, beta, 2.0 * x.abs(), 2.0 * t)? / rhs_at(2.0 * x, 2.0 * t);
            let rhs = rhs_at(x, t);
            Ok(RieszSample {
                x,
                t,
                lhs,
                rhs,
                ratio: lhs / rhs,
                ratio_doubled: doubled,
            })
        })
        .collect::<Result<_>>()?;
    let sup_ratio = samples.iter().fold(0.0f64, |m, s| m.max(s.ratio));
    let inf_ratio = samples.iter().fold(f64::INFINITY, |m, s| m.min(s.ratio));
    let scale_error = samples
        .iter()
        .fold(0.0f64, |m, s| m.max((s.ratio_doubled - s.ratio).abs() / s.ratio));
    Ok(RieszBoundReport {
        samples,
        sup_ratio,
        inf_ratio,
        scale_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(spec: GridSpec, scale: f64) -> GridFunction {
        GridFunction::from_fn(spec, |x| (-(x.iter().map(|v| v * v).sum::<f64>()) * scale * scale).exp())
    }

    fn interval(spec: GridSpec, a: f64, b: f64) -> IndicatorSet {
        IndicatorSet::from_generator(spec, IndicatorGenerator::Interval { a, b }).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn cosine_is_an_eigenfunction() {
        let spec = GridSpec::new(1, 4.0, 128).unwrap();
        let xi = 3.0 / 8.0;
        let f = GridFunction::from_fn(spec, |x| (2.0 * PI * xi * x[0]).cos());
        for s in [0.3, 1.0, 1.7] {
            let out = frac_laplacian_fourier(&f, s).unwrap();
            let lam = (2.0 * PI * xi).powf(s);
            for (a, b) in out.values.values().iter().zip(f.values()) {
                assert!((a - lam * b).abs() < 1e-10);
            }
            assert!(!out.bandlimit_warning);
        }
    }

    #[test]
    fn half_orders_compose() {
        let spec = GridSpec::new(2, 4.0, 32).unwrap();
        let f = gaussian(spec, 1.0);
        let once = frac_laplacian_fourier(&f, 1.0).unwrap().values;
        let half = frac_laplacian_fourier(&f, 0.5).unwrap().values;
        let twice = frac_laplacian_fourier(&half, 0.5).unwrap().values;
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rough_data_raise_the_bandlimit_warning() {
        let spec = GridSpec::new(1, 4.0, 64).unwrap();
        let f = GridFunction::from_fn(spec, |x| if (x[0] * 8.0).floor() as i64 % 2 == 0 { 1.0 } else { 0.0 });
        assert!(frac_laplacian_fourier(&f, 0.5).unwrap().bandlimit_warning);
    }

    fn fourier_pv_gap(spec: GridSpec, s: f64) -> f64 {
        let f = gaussian(spec, 1.0);
        let pad = if spec.dim() == 1 { 8 } else { 4 };
        let spectral = frac_laplacian_fourier(&f.zero_padded(pad).unwrap(), s).unwrap().values.cropped(&spec).unwrap();
        let pv = frac_laplacian_pv(&f, s).unwrap();
        let diff = GridFunction::new(spec, spectral.values().iter().zip(pv.values()).map(|(a, b)| a - b).collect()).unwrap();
        lp_norm(&diff, 2.0).unwrap() / lp_norm(&spectral, 2.0).unwrap()
    }

    #[test]
    fn principal_value_matches_spectral_1d() {
        let spec = GridSpec::new(1, 6.0, 256).unwrap();
        for s in [0.5, 1.0, 1.5] {
            let gap = fourier_pv_gap(spec, s);
            assert!(gap < 0.02, "s = {s}: {gap}");
        }
    }

    #[test]
    fn principal_value_matches_spectral_2d() {
        let spec = GridSpec::new(2, 4.0, 64).unwrap();
        for s in [0.5, 1.0, 1.5] {
            let gap = fourier_pv_gap(spec, s);
            assert!(gap < 0.02, "s = {s}: {gap}");
        }
    }

    #[test]
    fn branch_rule() {
        assert!(SobolevParams::new(1, 0.5, 1.5, SobolevBranch::Fourier).is_ok());
        assert!(SobolevParams::new(1, 0.5, 2.0, SobolevBranch::Fourier).is_err());
        assert!(SobolevParams::new(1, 0.5, 2.0, SobolevBranch::Difference).is_ok());
        assert!(SobolevParams::new(1, 0.5, 1.0, SobolevBranch::Difference).is_ok());
        assert!(SobolevParams::new(1, 0.5, 1.5, SobolevBranch::Difference).is_err());
        assert_eq!(SobolevParams::auto(2, 0.5, 4.0).unwrap().branch, SobolevBranch::Difference);
        assert_eq!(SobolevParams::auto(2, 1.5, 1.2).unwrap().k(), 2);
    }

    #[test]
    fn sobolev_dilation_fourier() {
        let spec = GridSpec::new(1, 8.0, 512).unwrap();
        let sp = SobolevParams::new(1, 0.25, 2.0, SobolevBranch::Fourier).unwrap();
        let base = sobolev_norm(&gaussian(spec, 1.0), &sp).unwrap();
        let lam = 2.0;
        let scaled = sobolev_norm(&gaussian(spec, lam), &sp).unwrap();
        assert!(rel(scaled / base, lam.powf(0.25 - 0.5)) < 0.05, "{}", scaled / base);
    }

    #[test]
    fn sobolev_dilation_difference() {
        let spec = GridSpec::new(1, 8.0, 512).unwrap();
        let sp = SobolevParams::new(1, 0.5, 1.0, SobolevBranch::Difference).unwrap();
        let base = sobolev_norm(&gaussian(spec, 1.0), &sp).unwrap();
        let scaled = sobolev_norm(&gaussian(spec, 2.0), &sp).unwrap();
        assert!(rel(scaled / base, 2f64.powf(0.5 - 1.0)) < 0.05, "{}", scaled / base);
    }

    #[test]
    fn branches_agree_at_p_two() {
        let spec = GridSpec::new(1, 8.0, 512).unwrap();
        let f = gaussian(spec, 1.0);
        for beta in [0.25, 0.5, 0.75] {
            let fourier = sobolev_norm(&f, &SobolevParams::cross_check(beta, 2.0, SobolevBranch::Fourier).unwrap()).unwrap();
            let diff = sobolev_norm(&f, &SobolevParams::cross_check(beta, 2.0, SobolevBranch::Difference).unwrap()).unwrap();
            let ratio = diff * diff / (fourier * fourier);
            assert!(rel(ratio, sobolev_equivalence_constant(1, beta)) < 0.1, "β = {beta}: {ratio}");
        }
        assert!(rel(sobolev_equivalence_constant(1, 0.5), 2.0 * PI) < 1e-12);
    }

    #[test]
    fn branches_agree_in_2d() {
        let spec = GridSpec::new(2, 4.0, 32).unwrap();
        let f = gaussian(spec, 1.0);
        let beta = 0.5;
        let fourier = sobolev_norm(&f, &SobolevParams::cross_check(beta, 2.0, SobolevBranch::Fourier).unwrap()).unwrap();
        let diff = sobolev_norm(&f, &SobolevParams::cross_check(beta, 2.0, SobolevBranch::Difference).unwrap()).unwrap();
        let ratio = diff * diff / (fourier * fourier);
        assert!(rel(ratio, sobolev_equivalence_constant(2, beta)) < 0.1, "{ratio}");
    }

    #[test]
    fn step_functions_with_large_order_diverge() {
        let spec = GridSpec::new(1, 4.0, 64).unwrap();
        let f = interval(spec, -1.0, 1.0).indicator();
        assert!(difference_seminorm_pow(&f, 0.5, 2.0, 1).unwrap().is_infinite());
        assert!(difference_seminorm_pow(&f, 0.4, 2.0, 1).unwrap().is_finite());
    }

    #[test]
    fn unit_interval_perimeter_closed_form() {
        let spec = GridSpec::new(1, 4.0, 128).unwrap();
        for s in [0.25, 0.5, 0.75] {
            let per = frac_perimeter(&interval(spec, 0.0, 1.0), s).unwrap();
            assert!(rel(per, 2.0 / (s * (1.0 - s))) < 1e-9, "{per}");
        }
    }

    #[test]
    fn perimeter_of_two_intervals() {
                let spec = GridSpec::new(1, 4.0, 128).unwrap();
        let s = 0.4;
        let e = IndicatorSet::from_generator(
            spec,
            IndicatorGenerator::Union {
                parts: vec![
                    IndicatorGenerator::Interval { a: -2.0, b: -1.0 },
                    IndicatorGenerator::Interval { a: 0.5, b: 1.0 },
                ],
            },
        )
        .unwrap();
        let q = |d: f64| d.powf(1.0 - s) / (s * (1.0 - s));
        // ∫_A∫_{A^c} = Per(A) - ∫_A∫_B, twice
        let cross = q(2.0) + q(2.5) - q(1.5) - q(3.0);
        let exact = 2.0 * q(1.0) + 2.0 * q(0.5) - 2.0 * cross;
        let per = frac_perimeter(&e, s).unwrap();
        assert!(rel(per, exact) < 1e-9, "{per} vs {exact}");
    }

    #[test]
    fn perimeter_scaling_2d() {
        let spec = GridSpec::new(2, 4.0, 64).unwrap();
        for s in [0.3, 0.7] {
            let square = |a: f64| {
                let e = IndicatorSet::from_generator(spec, IndicatorGenerator::Rect { x0: 0.0, y0: 0.0, x1: a, y1: a }).unwrap();
                frac_perimeter(&e, s).unwrap()
            };
            let unit = square(1.0);
            for a in [0.5, 2.0] {
                assert!(rel(square(a) / unit, a.powf(2.0 - s)) < 0.02, "s = {s}, a = {a}");
            }
        }
    }

    #[test]
    fn perimeter_is_resolution_independent_2d() {
        let s = 0.5;
        let per = |m: usize| {
            let spec = GridSpec::new(2, 2.0, m).unwrap();
            let e = IndicatorSet::from_generator(spec, IndicatorGenerator::Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 0.5 }).unwrap();
            frac_perimeter(&e, s).unwrap()
        };
        let (a, b) = (per(16), per(32));
        assert!(rel(a, b) < 5e-3, "{a} vs {b}");
    }

    #[test]
    fn perimeter_reflection_symmetry() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for dim in [1, 2] {
            let spec = GridSpec::new(dim, 2.0, if dim == 1 { 64 } else { 16 }).unwrap();
            let member: Vec<bool> = (0..spec.len()).map(|_| rng.random_bool(0.3)).collect();
            let e = IndicatorSet::new(spec, member).unwrap();
            let (a, b) = (frac_perimeter(&e, 0.6).unwrap(), frac_perimeter(&e.reflected(), 0.6).unwrap());
            assert!(rel(a, b) < 1e-9);
        }
    }

    #[test]
    fn coarea_for_step_functions() {
        let spec = GridSpec::new(1, 4.0, 128).unwrap();
        let f = GridFunction::new(
            spec,
            interval(spec, -2.0, 2.0)
                .indicator()
                .values()
                .iter()
                .zip(interval(spec, -1.0, 0.5).indicator().values())
                .zip(interval(spec, 1.0, 1.5).indicator().values())
                .map(|((a, b), c)| a + 2.0 * b + 0.5 * c)
                .collect(),
        )
        .unwrap();
        for s in [0.25, 0.5, 0.75] {
            let r = coarea_check(&f, s, None).unwrap();
            assert!((r.ratio - 1.0).abs() < 0.05, "s = {s}: {}", r.ratio);
            assert!(!r.level_mismatch);
        }
        let r = coarea_check(&f, 0.5, Some(&[1.0, 3.0])).unwrap();
        assert!(r.level_mismatch);
    }

    #[test]
    fn coarea_in_2d() {
        let spec = GridSpec::new(2, 2.0, 24).unwrap();
        let f = GridFunction::new(
            spec,
            IndicatorSet::ball(spec, [0.0, 0.0], 1.2)
                .unwrap()
                .indicator()
                .values()
                .iter()
                .zip(IndicatorSet::ball(spec, [0.3, 0.0], 0.5).unwrap().indicator().values())
                .map(|(a, b)| a + b)
                .collect(),
        )
        .unwrap();
        let r = coarea_check(&f, 0.5, None).unwrap();
        assert!((r.ratio - 1.0).abs() < 0.05, "{}", r.ratio);
    }

    #[test]
    fn extension_constant_recovers_the_interval_perimeter() {
        let spec = GridSpec::new(1, 8.0, 512).unwrap();
        let r = perimeter_via_extension(&interval(spec, 0.0, 1.0), 0.5, 48).unwrap();
        assert!(rel(r.direct, 8.0) < 1e-9);
        assert!((r.ratio.unwrap() - 1.0).abs() < 0.1, "{r:?}");
    }

    #[test]
    fn capacity_ball_law_for_p_one() {
        let spec = GridSpec::new(1, 8.0, 512).unwrap();
        let beta = 0.5;
        let scaled: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&r| {
                let o = IndicatorSet::ball(spec, [0.0, 0.0], r).unwrap();
                frac_capacity(&o, beta, 1.0, &SolverConfig::default()).unwrap().value / r.powf(1.0 - beta)
            })
            .collect();
        let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        assert!(hi / lo < 1.1, "{scaled:?}");
    }

    #[test]
    fn riesz_capacity_gap_and_scaling() {
        let spec = GridSpec::new(1, 4.0, 128).unwrap();
        let cfg = SolverConfig::default();
        let (beta, p) = (0.25, 2.0);
        let caps: Vec<FracCapacity> = [0.5, 1.0]
            .iter()
            .map(|&r| frac_capacity(&IndicatorSet::ball(spec, [0.0, 0.0], r).unwrap(), beta, p, &cfg).unwrap())
            .collect();
        for c in &caps {
            assert!(c.rel_gap <= 0.1, "{c:?}");
            assert!(c.lower <= c.value * (1.0 + 1e-9));
        }
        // Cap(λO) = λ^{n-βp} Cap(O)
        let ratio = caps[1].value / caps[0].value;
        assert!(rel(ratio, 2f64.powf(1.0 - beta * p)) < 0.1, "{ratio}");
    }

    #[test]
    fn capacity_rejects_out_of_range_p() {
        let spec = GridSpec::new(1, 4.0, 64).unwrap();
        let o = IndicatorSet::ball(spec, [0.0, 0.0], 1.0).unwrap();
        assert!(frac_capacity(&o, 0.5, 2.0, &SolverConfig::default()).is_err());
        assert!(frac_capacity(&o, 1.5, 1.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn riesz_convolution_closed_form() {
        // α = 1, n = 1, x = 0: ∫ P_t(y)|y|^{β-1} dy = t^{β-1} / sin(πβ/2)
        let params = KernelParams::new(1, 1.0).unwrap();
        for beta in [0.3, 0.5, 0.8] {
            for t in [0.1, 1.0, 7.0] {
                let v = riesz_convolution(&params, beta, 0.0, t).unwrap();
                let exact = t.powf(beta - 1.0) / (PI * beta / 2.0).sin();
                assert!(rel(v, exact) < 1e-8, "β = {beta}, t = {t}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn riesz_convolution_bound_is_scale_free() {
        let xs = log_lattice(0.01, 100.0, 8);
        for (dim, alpha, beta) in [(1, 1.0, 0.5), (1, 0.5, 0.3), (2, 1.5, 1.2), (2, 1.0, 0.5)] {
            let params = KernelParams::new(dim, alpha).unwrap();
            let r = riesz_convolution_bound_check(&params, beta, &xs, &xs).unwrap();
            assert!(r.scale_error < 1e-6, "{dim} {alpha} {beta}: {}", r.scale_error);
            assert!(r.sup_ratio.is_finite() && r.inf_ratio > 0.0);
            assert!(r.sup_ratio / r.inf_ratio < 20.0, "{} {}", r.sup_ratio, r.inf_ratio);
        }
    }

    #[test]
    fn strong_type_surrogate_is_finite() {
        let spec = GridSpec::new(1, 16.0, 128).unwrap();
        let f = gaussian(spec, 1.0);
        let r = frac_strong_type_check(&f, 0.25, 2.0, 2, 3.0, &SolverConfig::default()).unwrap();
        let ratio = r.ratio.unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
        assert!(r.maximal_lhs >= r.lhs * 0.99);
    }

    #[test]
    fn generator_text_round_trip() {
        let text = "interval -1 0.5\nunion\n interval 1 2 # right\n interval 2.5 3\nend\n";
        let g = IndicatorGenerator::parse(text).unwrap();
        assert_eq!(IndicatorGenerator::parse(&g.to_text()).unwrap(), g);
        let spec = GridSpec::new(1, 4.0, 64).unwrap();
        let e = IndicatorSet::from_generator(spec, g).unwrap();
        assert!(rel(e.measure(), 3.0) < 1e-12);
        assert!(IndicatorGenerator::parse("union\ninterval 0 1\n").is_err());
        assert!(IndicatorGenerator::parse("square 1").is_err());
        assert!(IndicatorSet::from_generator(spec, IndicatorGenerator::Disc { center: [0.0, 0.0], r: 1.0 }).is_err());
    }

    #[test]
    fn set_operations() {
        let spec = GridSpec::new(2, 2.0, 16).unwrap();
        let e = IndicatorSet::from_generator(spec, IndicatorGenerator::Rect { x0: 0.0, y0: 0.0, x1: 0.5, y1: 0.5 }).unwrap();
        assert_eq!(e.count(), 4);
        assert_eq!(e.dilated().unwrap().count(), 16);
        assert_eq!(e.translated([1, -2]).unwrap().count(), 4);
        assert!(e.translated([10, 0]).is_err());
        assert!(IndicatorSet::new(spec, vec![true; spec.len()]).is_err());
        assert_eq!(e.reflected().reflected(), IndicatorSet { generator: IndicatorGenerator::Cells, ..e.clone() });
    }
}

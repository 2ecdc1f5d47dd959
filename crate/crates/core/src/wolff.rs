//! Hedberg–Wolff potentials of discrete measures, their dyadic counterparts and
//! the parabolic maximal function.
//!
//! Everything here is built on the box
//! `B_r(x, t) = {(y, s) : |y - x| < r/2, r < s - t < 2r}`,
//! which sits strictly above its base point. An atom at `(y, s)` therefore lies
//! in `B_r(x, t)` exactly for `r` in the open interval
//! `(max(2|y - x|, (s - t)/2), s - t)`, and every radial integral below is a sum
//! over such intervals.

use crate::error::{invalid, Result};
use crate::extension::{adjoint_extend, AdjointSum};
use crate::grid::{lp_norm_pow, GridFunction, GridSpec};
use crate::kernel::KernelParams;
use crate::measure::{Atom, DiscreteMeasure};
use crate::special::{gauss_legendre, neumaier_sum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Log-spaced radii discretizing `∫₀^∞ ... dr/r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrid {
    radii: Vec<f64>,
}

impl RadiusGrid {
    pub fn new(r_min: f64, r_max: f64, count: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(invalid("radii", format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        if count < 2 {
            return Err(invalid("count", "a radius grid needs at least two radii"));
        }
        let step = (r_max / r_min).ln() / (count - 1) as f64;
        let mut radii: Vec<f64> = (0..count).map(|i| r_min * (step * i as f64).exp()).collect();
        radii[count - 1] = r_max;
        Ok(Self { radii })
    }

    /// The widest window a grid admits: `[h/2, 8L]`.
    pub fn for_grid(spec: &GridSpec, count: usize) -> Result<Self> {
        Self::new(spec.spacing() / 2.0, 8.0 * spec.extent(), count)
    }

    /// The smallest window holding every entry and exit radius of `mu`, both for
    /// boxes based at atoms and for the maximal function's boxes `B_r(x, r)`.
    /// Outside it the Wolff integrand vanishes identically.
    pub fn for_measure(mu: &DiscreteMeasure, count: usize) -> Result<Self> {
        if mu.is_empty() {
            return Err(invalid("mu", "an empty measure has no radius window"));
        }
        let n = mu.dim();
        let atoms = mu.atoms();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for b in atoms {
            lo = lo.min(b.t / 3.0);
            hi = hi.max(b.t / 2.0);
            for a in atoms {
                if let Some((l, u)) = membership(b, n, &a.x[..n], a.t) {
                    lo = lo.min(l);
                    hi = hi.max(u);
                }
            }
        }
        Self::new(lo, hi, count)
    }

    /// `r_min ≥ h/2` and `r_max ≤ 8L`.
    pub fn fits(&self, spec: &GridSpec) -> bool {
        let eps = 1e-12;
        self.r_min() >= spec.spacing() / 2.0 * (1.0 - eps) && self.r_max() <= 8.0 * spec.extent() * (1.0 + eps)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }
    pub fn len(&self) -> usize {
        self.radii.len()
    }
    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
    pub fn r_min(&self) -> f64 {
        self.radii[0]
    }
    pub fn r_max(&self) -> f64 {
        self.radii[self.radii.len() - 1]
    }
}

fn horizontal_distance(a: &Atom, n: usize, x: &[f64]) -> f64 {
    let d0 = a.x[0] - x[0];
    let d1 = if n == 2 { a.x[1] - x[1] } else { 0.0 };
    (d0 * d0 + d1 * d1).sqrt()
}

/// Open interval of radii `r` with `b ∈ B_r(x, t)`, if nonempty.
pub(crate) fn membership(b: &Atom, n: usize, x: &[f64], t: f64) -> Option<(f64, f64)> {
    let gap = b.t - t;
    if gap <= 0.0 || b.w == 0.0 {
        return None;
    }
    let lo = (2.0 * horizontal_distance(b, n, x)).max(gap / 2.0);
    (lo < gap).then_some((lo, gap))
}

fn check_point(mu: &DiscreteMeasure, x: &[f64]) -> Result<()> {
    if x.len() != mu.dim() {
        return Err(invalid("x", format!("expected {} coordinates, got {}", mu.dim(), x.len())));
    }
    Ok(())
}

fn conjugate_minus_one(p: f64) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("{p} must lie in (1, ∞)")));
    }
    Ok(1.0 / (p - 1.0))
}

/// `μ(B_r(x0, t0))` with all box conditions strict.
pub fn box_mass(mu: &DiscreteMeasure, r: f64, x0: &[f64], t0: f64) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid("r", format!("{r} must be positive")));
    }
    check_point(mu, x0)?;
    let n = mu.dim();
    Ok(neumaier_sum(mu.atoms().iter().filter_map(|a| {
        let gap = a.t - t0;
        (horizontal_distance(a, n, x0) < r / 2.0 && gap > r && gap < 2.0 * r).then_some(a.w)
    })))
}

/// `max_r r^{-n} μ(B_r(x, r))` over the radius grid.
pub fn parabolic_maximal(mu: &DiscreteMeasure, x: &[f64], rgrid: &RadiusGrid) -> Result<f64> {
    check_point(mu, x)?;
    let n = mu.dim() as i32;
    let mut best: f64 = 0.0;
    for &r in rgrid.radii() {
        best = best.max(box_mass(mu, r, x, r)? * r.powi(-n));
    }
    Ok(best)
}

/// `sup_{r>0} r^{-n} μ(B_r(x, r))` evaluated exactly.
///
/// Atom `(y, s)` is in `B_r(x, r)` for `r ∈ (max(2|y - x|, s/3), s/2)`. On each
/// piece where the mass is constant `r^{-n}` decreases, so the supremum is the
/// limit from the right at some entry radius.
pub fn parabolic_maximal_exact(mu: &DiscreteMeasure, x: &[f64]) -> Result<f64> {
    check_point(mu, x)?;
    Ok(maximal_exact_unchecked(mu, x))
}

fn maximal_exact_unchecked(mu: &DiscreteMeasure, x: &[f64]) -> f64 {
    let n = mu.dim();
    let mut events: Vec<(f64, f64)> = Vec::new();
    for a in mu.atoms().iter().filter(|a| a.w > 0.0) {
        let lo = (2.0 * horizontal_distance(a, n, x)).max(a.t / 3.0);
        let hi = a.t / 2.0;
        if lo < hi {
            events.push((lo, a.w));
            events.push((hi, -a.w));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Just right of c the mass counts entries with lo ≤ c and drops exits with hi ≤ c.
    let mut best: f64 = 0.0;
    let mut mass = 0.0;
    let mut k = 0;
    while k < events.len() {
        let c = events[k].0;
        let mut entered = false;
        while k < events.len() && events[k].0 == c {
            mass += events[k].1;
            entered |= events[k].1 > 0.0;
            k += 1;
        }
        if entered {
            best = best.max(mass.max(0.0) * c.powi(-(n as i32)));
        }
    }
    best
}

/// `Mμ` at every grid node.
pub fn parabolic_maximal_field(mu: &DiscreteMeasure, grid: &GridSpec) -> Result<GridFunction> {
    if mu.dim() != grid.dim() {
        return Err(crate::error::CapaxError::GridMismatch("measure and grid dimensions differ".into()));
    }
    let n = grid.dim();
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| maximal_exact_unchecked(mu, &grid.coords(i)[..n]))
        .collect();
    GridFunction::new(*grid, values)
}

/// `H_pμ(x, t) = ∫₀^∞ (r^{-n} μ(B_r(x, t)))^{p'-1} dr/r` by the trapezoid rule in
/// `ln r` over the radius grid.
pub fn wolff_potential(mu: &DiscreteMeasure, x: &[f64], t: f64, p: f64, rgrid: &RadiusGrid) -> Result<f64> {
    let q = conjugate_minus_one(p)?;
    check_point(mu, x)?;
    let n = mu.dim();
    let radii = rgrid.radii();
    let mut diff = vec![0.0; radii.len() + 1];
    for b in mu.atoms() {
        if let Some((lo, hi)) = membership(b, n, x, t) {
            let i0 = radii.partition_point(|&r| r <= lo);
            let i1 = radii.partition_point(|&r| r < hi);
            if i0 < i1 {
                diff[i0] += b.w;
                diff[i1] -= b.w;
            }
        }
    }
    let mut mass = 0.0;
    let values: Vec<f64> = radii
        .iter()
        .zip(&diff)
        .map(|(&r, d)| {
            mass += d;
            if mass > 0.0 {
                (mass * r.powi(-(n as i32))).powf(q)
            } else {
                0.0
            }
        })
        .collect();
    Ok(neumaier_sum(
        (0..radii.len() - 1).map(|i| 0.5 * (values[i] + values[i + 1]) * (radii[i + 1] / radii[i]).ln()),
    ))
}

/// `H_pμ(x, t)` evaluated exactly: between consecutive entry and exit radii the
/// mass `M` is constant and the piece contributes `M^q (a^{-nq} - b^{-nq})/(nq)`.
pub fn wolff_potential_exact(mu: &DiscreteMeasure, x: &[f64], t: f64, p: f64) -> Result<f64> {
    let q = conjugate_minus_one(p)?;
    check_point(mu, x)?;
    Ok(wolff_exact_unchecked(mu, x, t, q))
}

fn wolff_exact_unchecked(mu: &DiscreteMeasure, x: &[f64], t: f64, q: f64) -> f64 {
    let n = mu.dim();
    let mut events: Vec<(f64, f64)> = Vec::new();
    for b in mu.atoms() {
        if let Some((lo, hi)) = membership(b, n, x, t) {
            events.push((lo, b.w));
            events.push((hi, -b.w));
        }
    }
    if events.is_empty() {
        return 0.0;
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let nq = n as f64 * q;
    let floor = 1e-14 * events.iter().filter(|e| e.1 > 0.0).map(|e| e.1).sum::<f64>();
    let mut mass = 0.0;
    let mut pieces = Vec::with_capacity(events.len());
    for k in 0..events.len() {
        mass += events[k].1;
        if k + 1 < events.len() {
            let (a, b) = (events[k].0, events[k + 1].0);
            if b > a && mass > floor {
                pieces.push(mass.powf(q) * (a.powf(-nq) - b.powf(-nq)) / nq);
            }
        }
    }
    neumaier_sum(pieces)
}

/// `H_pμ` at every atom of `mu`, exactly.
pub fn wolff_at_atoms(mu: &DiscreteMeasure, p: f64) -> Result<Vec<f64>> {
    let q = conjugate_minus_one(p)?;
    let n = mu.dim();
    Ok(mu.atoms().par_iter().map(|a| wolff_exact_unchecked(mu, &a.x[..n], a.t, q)).collect())
}

/// A cube of the (shifted) dyadic lattice in `ℝ^{n+1}_+`:
/// `Π_i (m_i l + λ_i, (m_i + 1) l + λ_i)` with `l = 2^{-g}` and `m₀ ≥ 0` in `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DyadicCube {
    pub generation: i32,
    /// `(m₁, m₂, m₀)`; `m₂ = 0` when `n = 1`.
    pub corner: [i64; 3],
    pub shift: [f64; 3],
}

impl DyadicCube {
    pub fn side(&self) -> f64 {
        2f64.powi(-self.generation)
    }

    /// The cube of generation `g` holding `a`, or `None` if `a` lies below the
    /// shifted lattice (`t ≤ λ₀`). Cells are taken half-open so every other point
    /// has exactly one cube.
    pub fn containing(a: &Atom, dim: usize, generation: i32, shift: [f64; 3]) -> Option<Self> {
        let l = 2f64.powi(-generation);
        let tt = a.t - shift[2];
        if tt <= 0.0 {
            return None;
        }
        let m1 = ((a.x[0] - shift[0]) / l).floor() as i64;
        let m2 = if dim == 2 { ((a.x[1] - shift[1]) / l).floor() as i64 } else { 0 };
        let m0 = (tt / l).floor() as i64;
        Some(Self {
            generation,
            corner: [m1, m2, m0],
            shift,
        })
    }

    pub fn t_extent(&self) -> (f64, f64) {
        let l = self.side();
        let lo = self.corner[2] as f64 * l + self.shift[2];
        (lo, lo + l)
    }

    pub fn contains(&self, a: &Atom, dim: usize) -> bool {
        Self::containing(a, dim, self.generation, self.shift).is_some_and(|c| c.corner == self.corner)
    }
}

/// Default generation range `g ∈ [-6, 6]`.
pub const DEFAULT_GENERATIONS: (i32, i32) = (-6, 6);
/// Coarse generations are added until the outermost one contributes less than
/// this share of every atom's sum.
pub const WIDEN_SHARE: f64 = 1e-3;
const MAX_EXTRA_GENERATIONS: i32 = 60;

/// `H^{d,λ}_pμ = Σ_Θ (μ(Θ)/lⁿ)^{p'-1} 1_Θ` evaluated at the atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicWolff {
    pub values: Vec<f64>,
    /// Generation range actually summed.
    pub generations: (i32, i32),
    /// Whether the coarse side met [`WIDEN_SHARE`] before the hard cap.
    pub coarse_converged: bool,
    /// Largest share of an atom's sum coming from the finest generation. At an
    /// atom this never vanishes: the finest cube always holds the atom itself.
    pub fine_boundary_share: f64,
}

fn generation_terms(mu: &DiscreteMeasure, q: f64, g: i32, shift: [f64; 3]) -> Vec<f64> {
    let n = mu.dim();
    let cubes: Vec<Option<DyadicCube>> = mu.atoms().iter().map(|a| DyadicCube::containing(a, n, g, shift)).collect();
    let mut mass: HashMap<[i64; 3], f64> = HashMap::new();
    for (a, c) in mu.atoms().iter().zip(&cubes) {
        if let Some(c) = c {
            *mass.entry(c.corner).or_insert(0.0) += a.w;
        }
    }
    let ln = 2f64.powi(-g * n as i32);
    cubes
        .iter()
        .map(|c| c.map_or(0.0, |c| (mass[&c.corner] / ln).powf(q)))
        .collect()
}

/// Dyadic Wolff potential at every atom, summed over `generations` and widened
/// on the coarse side until the outermost generation is negligible.
pub fn dyadic_wolff(mu: &DiscreteMeasure, p: f64, generations: (i32, i32), shift: [f64; 3]) -> Result<DyadicWolff> {
    let q = conjugate_minus_one(p)?;
    let (mut g_lo, g_hi) = generations;
    if g_lo > g_hi {
        return Err(invalid("generations", format!("empty range [{g_lo}, {g_hi}]")));
    }
    if shift.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(invalid("shift", "shifts must be finite and non-negative"));
    }
    let mut total = vec![0.0; mu.len()];
    let mut coarsest = Vec::new();
    let mut finest = Vec::new();
    for g in g_lo..=g_hi {
        let terms = generation_terms(mu, q, g, shift);
        for (s, v) in total.iter_mut().zip(&terms) {
            *s += v;
        }
        if g == g_lo {
            coarsest = terms.clone();
        }
        if g == g_hi {
            finest = terms;
        }
    }
    let share = |terms: &[f64], total: &[f64]| {
        terms
            .iter()
            .zip(total)
            .filter(|(_, s)| **s > 0.0)
            .fold(0.0f64, |m, (v, s)| m.max(v / s))
    };
    let mut coarse_converged = false;
    while g_lo > generations.0 - MAX_EXTRA_GENERATIONS {
        if share(&coarsest, &total) < WIDEN_SHARE {
            coarse_converged = true;
            break;
        }
        g_lo -= 1;
        coarsest = generation_terms(mu, q, g_lo, shift);
        for (s, v) in total.iter_mut().zip(&coarsest) {
            *s += v;
        }
    }
    Ok(DyadicWolff {
        fine_boundary_share: share(&finest, &total),
        values: total,
        generations: (g_lo, g_hi),
        coarse_converged,
    })
}

/// A shift drawn uniformly from `[0, scale)^{n+1}`.
pub fn random_shift(dim: usize, scale: f64, rng: &mut impl Rng) -> [f64; 3] {
    let mut s = [0.0; 3];
    s[0] = rng.random_range(0.0..scale);
    if dim == 2 {
        s[1] = rng.random_range(0.0..scale);
    }
    s[2] = rng.random_range(0.0..scale);
    s
}

/// Unshifted dyadic potential against the pointwise supremum over random shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSweep {
    pub base: Vec<f64>,
    pub sup: Vec<f64>,
    pub shifts: Vec<[f64; 3]>,
    /// `max_a max(sup_a / base_a, base_a / sup_a)`.
    pub max_factor: f64,
}

pub fn dyadic_shift_sweep(
    mu: &DiscreteMeasure,
    p: f64,
    generations: (i32, i32),
    count: usize,
    scale: f64,
    seed: u64,
) -> Result<ShiftSweep> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid("scale", format!("{scale} must be positive")));
    }
    let base = dyadic_wolff(mu, p, generations, [0.0; 3])?.values;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<[f64; 3]> = (0..count).map(|_| random_shift(mu.dim(), scale, &mut rng)).collect();
    let mut sup = vec![0.0f64; mu.len()];
    for s in &shifts {
        let v = dyadic_wolff(mu, p, generations, *s)?.values;
        for (m, x) in sup.iter_mut().zip(v) {
            *m = m.max(x);
        }
    }
    let max_factor = base.iter().zip(&sup).fold(1.0f64, |m, (b, s)| {
        if *b > 0.0 && *s > 0.0 {
            m.max(s / b).max(b / s)
        } else if *b == 0.0 && *s == 0.0 {
            m
        } else {
            f64::INFINITY
        }
    });
    Ok(ShiftSweep {
        base,
        sup,
        shifts,
        max_factor,
    })
}

/// Two sides of a two-sided estimate and their quotient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; `+∞` when only the right side vanishes.
    pub ratio: f64,
}

impl ComparisonReport {
    fn new(lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs > 0.0 {
            lhs / rhs
        } else if lhs > 0.0 {
            f64::INFINITY
        } else {
            f64::NAN
        };
        Self { lhs, rhs, ratio }
    }
}

/// `∫_{outside the grid} (P*_α μ)^p`, integrated in `s = ln(|x|/a)` with
/// `a = L` the half-width. In two dimensions the square is replaced by the disc
/// of equal area.
pub fn adjoint_tail_pow(mu: &DiscreteMeasure, grid: &GridSpec, params: &KernelParams, p: f64) -> f64 {
    if mu.is_empty() {
        return 0.0;
    }
    let n = grid.dim();
    let nf = n as f64;
    let rate = (nf + params.alpha()) * p - nf;
    let s_max = 50.0 / rate;
    let panels = 64;
    let (gx, gw) = gauss_legendre(8);
    let a = match n {
        1 => grid.extent(),
        _ => 2.0 * grid.extent() / std::f64::consts::PI.sqrt(),
    };
    let sum = AdjointSum::new(mu, params);
    let field = |x: [f64; 2]| sum.eval(x);
    let directions: Vec<[f64; 2]> = match n {
        1 => vec![[1.0, 0.0], [-1.0, 0.0]],
        _ => (0..32)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 32.0;
                [th.cos(), th.sin()]
            })
            .collect(),
    };
    let angle_weight = if n == 1 { 1.0 } else { 2.0 * std::f64::consts::PI / 32.0 };
    let width = s_max / panels as f64;
    let mut terms = Vec::with_capacity(panels * gx.len() * directions.len());
    for k in 0..panels {
        for (xi, wi) in gx.iter().zip(&gw) {
            let sv = width * (k as f64 + 0.5 * (xi + 1.0));
            let r = a * sv.exp();
            let jac = r.powi(n as i32) * 0.5 * width * wi * angle_weight;
            for d in &directions {
                terms.push(field([r * d[0], r * d[1]]).powf(p) * jac);
            }
        }
    }
    neumaier_sum(terms)
}

/// `‖P*_α μ‖_p^p` on the grid plus the far-field tail.
pub fn adjoint_norm_pow(mu: &DiscreteMeasure, grid: &GridSpec, params: &KernelParams, p: f64) -> Result<f64> {
    let adj = adjoint_extend(mu, grid, params)?;
    Ok(lp_norm_pow(&adj, p) + adjoint_tail_pow(mu, grid, params, p))
}

/// `(‖Mμ‖_p, ‖P*_α μ‖_p)`. `Mμ` is supported where some atom has
/// `|y - x| < s/4`, so only the adjoint side needs a tail.
pub fn maximal_comparison_check(
    mu: &DiscreteMeasure,
    p: f64,
    grid: &GridSpec,
    params: &KernelParams,
) -> Result<ComparisonReport> {
    conjugate_minus_one(p)?;
    let m = parabolic_maximal_field(mu, grid)?;
    let lhs = lp_norm_pow(&m, p).powf(1.0 / p);
    let rhs = adjoint_norm_pow(mu, grid, params, p)?.powf(1.0 / p);
    Ok(ComparisonReport::new(lhs, rhs))
}

/// `(‖P*_α μ‖_{p'}^{p'}, ∫ H_pμ dμ)`, the right side summed exactly over atoms.
/// `H_pμ` only sees mass strictly above the base point, so a lone atom gives a
/// vanishing right side.
pub fn wolff_energy_check(
    mu: &DiscreteMeasure,
    p: f64,
    grid: &GridSpec,
    params: &KernelParams,
) -> Result<ComparisonReport> {
    let q = conjugate_minus_one(p)?;
    let pc = q + 1.0;
    let lhs = adjoint_norm_pow(mu, grid, params, pc)?;
    let h = wolff_at_atoms(mu, p)?;
    let rhs = neumaier_sum(mu.atoms().iter().zip(&h).map(|(a, v)| a.w * v));
    Ok(ComparisonReport::new(lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest, ProptestConfig};

    fn cloud(seed: u64, count: usize) -> DiscreteMeasure {
        DiscreteMeasure::random_cloud(1, count, 2.0, 1.0, 4.0, seed).unwrap()
    }

    #[test]
    fn box_boundaries_are_open() {
        let r = 0.4;
        let inside = DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 1.0 + 1.5 * r, 1.0)]).unwrap();
        assert_eq!(box_mass(&inside, r, &[0.0], 1.0).unwrap(), 1.0);
        let bottom = DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 1.5, 1.0)]).unwrap();
        assert_eq!(box_mass(&bottom, 0.5, &[0.0], 1.0).unwrap(), 0.0);
        let side = DiscreteMeasure::new(1, vec![Atom::new_1d(0.25, 1.75, 1.0)]).unwrap();
        assert_eq!(box_mass(&side, 0.5, &[0.0], 1.0).unwrap(), 0.0);
        assert!(box_mass(&side, 0.0, &[0.0], 1.0).is_err());
    }

    #[test]
    fn box_mass_matches_membership_intervals() {
        let mu = DiscreteMeasure::random_cloud(2, 200, 1.0, 0.5, 3.0, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let t = rng.random_range(0.1..2.0);
            let r = rng.random_range(0.05..1.5);
            let via_intervals: f64 = mu
                .atoms()
                .iter()
                .filter(|b| membership(b, 2, &x, t).is_some_and(|(lo, hi)| lo < r && r < hi))
                .map(|b| b.w)
                .sum();
            let direct = box_mass(&mu, r, &x, t).unwrap();
            assert!((via_intervals - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn maximal_function_of_one_atom() {
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 2.5, 1.0)]).unwrap();
        // r ∈ (2.5/3, 2.5/2), sup of 1/r at the left end.
        assert!((parabolic_maximal_exact(&mu, &[0.0]).unwrap() - 1.2).abs() < 1e-12);
        let rg = RadiusGrid::new(0.01, 10.0, 2000).unwrap();
        let on_grid = parabolic_maximal(&mu, &[0.0], &rg).unwrap();
        assert!(on_grid <= 1.2 && on_grid > 1.19);
        assert_eq!(parabolic_maximal_exact(&mu, &[0.7]).unwrap(), 0.0);
        assert_eq!(parabolic_maximal_exact(&DiscreteMeasure::empty(1), &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn maximal_exact_dominates_grid() {
        let mu = cloud(3, 60);
        let rg = RadiusGrid::for_measure(&mu, 4000).unwrap();
        for x in [-1.5, -0.3, 0.0, 0.8, 2.1] {
            let exact = parabolic_maximal_exact(&mu, &[x]).unwrap();
            let grid = parabolic_maximal(&mu, &[x], &rg).unwrap();
            assert!(grid <= exact * (1.0 + 1e-12));
            assert!(grid >= exact * 0.99, "{grid} vs {exact}");
        }
    }

    #[test]
    fn single_atom_wolff_closed_form() {
        let (x, t, w) = (0.1, 1.0, 0.7);
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(x, t + 1.0, w)]).unwrap();
        // lo = max(0.2, 0.5), hi = 1; p = 2 gives w ∫ r^{-2} dr.
        let expect = w * (1.0 / 0.5 - 1.0);
        assert!((wolff_potential_exact(&mu, &[0.0], t, 2.0).unwrap() - expect).abs() < 1e-14);
        let rg = RadiusGrid::new(0.05, 5.0, 4096).unwrap();
        let quad = wolff_potential(&mu, &[0.0], t, 2.0, &rg).unwrap();
        assert!((quad - expect).abs() < 2e-3 * expect);
        assert_eq!(wolff_potential_exact(&DiscreteMeasure::empty(1), &[0.0], 1.0, 2.0).unwrap(), 0.0);
        assert!(wolff_potential_exact(&mu, &[0.0], t, 1.0).is_err());
    }

    #[test]
    fn quadrature_matches_breakpoints_on_clouds() {
        for seed in 0..5 {
            let mu = cloud(100 + seed, 100);
            let rg = RadiusGrid::for_measure(&mu, 1024).unwrap();
            for p in [1.5, 2.0, 3.0] {
                let exact: f64 = mu
                    .atoms()
                    .iter()
                    .map(|a| a.w * wolff_potential_exact(&mu, &[a.x[0]], a.t, p).unwrap())
                    .sum();
                let quad: f64 = mu
                    .atoms()
                    .iter()
                    .map(|a| a.w * wolff_potential(&mu, &[a.x[0]], a.t, p, &rg).unwrap())
                    .sum();
                assert!(exact > 0.0);
                assert!((quad - exact).abs() <= 0.01 * exact, "seed {seed} p {p}: {quad} vs {exact}");
            }
        }
    }

    #[test]
    fn dilation_covariance() {
        let mu = DiscreteMeasure::random_cloud(2, 40, 1.0, 0.5, 2.0, 11).unwrap();
        let s = 3.0;
        let big = mu.dilated(s, s * s);
        for a in mu.atoms().iter().take(10) {
            let h0 = wolff_potential_exact(&mu, &a.x, a.t, 2.5).unwrap();
            let h1 = wolff_potential_exact(&big, &[s * a.x[0], s * a.x[1]], s * a.t, 2.5).unwrap();
            assert!((h0 - h1).abs() <= 1e-10 * h0.max(1e-300));
        }
    }

    #[test]
    fn dyadic_single_atom_single_generation() {
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(0.3, 0.7, 0.5)]).unwrap();
        let d = generation_terms(&mu, 1.0 / 0.5, 2, [0.0; 3]);
        assert!((d[0] - (0.5 / 0.25f64).powf(2.0)).abs() < 1e-12);
        let cube = DyadicCube::containing(&mu.atoms()[0], 1, 2, [0.0; 3]).unwrap();
        assert_eq!(cube.corner, [1, 0, 2]);
        assert_eq!(cube.t_extent(), (0.5, 0.75));
        assert!(cube.contains(&mu.atoms()[0], 1));
    }

    #[test]
    fn dyadic_widens_coarse_side() {
        let mu = cloud(5, 50);
        let d = dyadic_wolff(&mu, 2.0, (2, 6), [0.0; 3]).unwrap();
        assert!(d.coarse_converged);
        assert!(d.generations.0 < 2);
        assert!(d.fine_boundary_share > 0.0);
        let wider = dyadic_wolff(&mu, 2.0, (d.generations.0 - 3, 6), [0.0; 3]).unwrap();
        for (a, b) in d.values.iter().zip(&wider.values) {
            assert!((a - b).abs() <= 2e-3 * b);
        }
    }

    #[test]
    fn shifted_lattices_stay_comparable() {
        let mu = cloud(6, 60);
        let tiny = dyadic_wolff(&mu, 2.0, DEFAULT_GENERATIONS, [0.05 / 3.0; 3]).unwrap();
        let base = dyadic_wolff(&mu, 2.0, DEFAULT_GENERATIONS, [0.0; 3]).unwrap();
        assert_ne!(tiny.values, base.values);
        let sweep = dyadic_shift_sweep(&mu, 2.0, DEFAULT_GENERATIONS, 8, 0.5, 1).unwrap();
        assert!(sweep.max_factor.is_finite() && sweep.max_factor <= 4.0, "{}", sweep.max_factor);
    }

    #[test]
    fn dyadic_against_continuous() {
        let mu = cloud(8, 80);
        let d = dyadic_wolff(&mu, 2.0, DEFAULT_GENERATIONS, [0.0; 3]).unwrap();
        let h = wolff_at_atoms(&mu, 2.0).unwrap();
        let c = d.values.iter().zip(&h).filter(|(_, h)| **h > 0.0).fold(0.0f64, |m, (d, h)| m.max(h / d));
        assert!(c.is_finite() && c > 0.0);
    }

    #[test]
    fn one_atom_energy_sides() {
        let grid = GridSpec::new(1, 400.0, 8192).unwrap();
        let params = KernelParams::new(1, 1.0).unwrap();
        let t = 2.0;
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, t, 1.0)]).unwrap();
        let rep = wolff_energy_check(&mu, 2.0, &grid, &params).unwrap();
        // ∫ (t/π)² (x² + t²)^{-2} dx = 1/(2πt).
        let exact = 1.0 / (2.0 * std::f64::consts::PI * t);
        assert!((rep.lhs - exact).abs() < 1e-3 * exact);
        assert_eq!(rep.rhs, 0.0);
        assert!(rep.ratio.is_infinite());
        let m = maximal_comparison_check(&mu, 2.0, &grid, &params).unwrap();
        assert!(m.ratio.is_finite() && m.ratio > 0.0);
    }

    #[test]
    fn tail_correction_is_consistent() {
        let params = KernelParams::new(1, 0.5).unwrap();
        let mu = cloud(12, 10);
        let a = adjoint_norm_pow(&mu, &GridSpec::new(1, 32.0, 512).unwrap(), &params, 1.5).unwrap();
        let b = adjoint_norm_pow(&mu, &GridSpec::new(1, 128.0, 2048).unwrap(), &params, 1.5).unwrap();
        assert!((a - b).abs() < 1e-3 * b, "{a} vs {b}");
    }

    #[test]
    fn radius_grid_validation() {
        assert!(RadiusGrid::new(0.0, 1.0, 10).is_err());
        assert!(RadiusGrid::new(1.0, 1.0, 10).is_err());
        assert!(RadiusGrid::new(0.1, 1.0, 1).is_err());
        let spec = GridSpec::new(1, 4.0, 64).unwrap();
        let rg = RadiusGrid::for_grid(&spec, 32).unwrap();
        assert!(rg.fits(&spec));
        assert!(rg.radii().windows(2).all(|w| w[0] < w[1]));
        assert!(!RadiusGrid::new(0.01, 1.0, 8).unwrap().fits(&spec));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn homogeneity(seed in 0u64..1000, c in 0.1f64..10.0, p in 1.2f64..4.0) {
            let mu = cloud(seed, 30);
            let cmu = mu.scaled(c);
            let q = 1.0 / (p - 1.0);
            for a in mu.atoms().iter().take(5) {
                let h0 = wolff_potential_exact(&mu, &[a.x[0]], a.t, p).unwrap();
                let h1 = wolff_potential_exact(&cmu, &[a.x[0]], a.t, p).unwrap();
                prop_assert!((h1 - c.powf(q) * h0).abs() <= 1e-9 * h1.max(1e-300));
                let m0 = parabolic_maximal_exact(&mu, &[a.x[0]]).unwrap();
                let m1 = parabolic_maximal_exact(&cmu, &[a.x[0]]).unwrap();
                prop_assert!((m1 - c * m0).abs() <= 1e-12 * m1.max(1e-300));
            }
        }

        #[test]
        fn translation_invariance(seed in 0u64..1000, dx in -5.0f64..5.0) {
            let mu = cloud(seed, 20);
            let moved = mu.translated([dx, 0.0]);
            for x in [-1.0, 0.0, 0.5] {
                let a = parabolic_maximal_exact(&mu, &[x]).unwrap();
                let b = parabolic_maximal_exact(&moved, &[x + dx]).unwrap();
                prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
            }
        }

        #[test]
        fn comparison_ratios_are_mass_invariant(seed in 0u64..100, c in 0.2f64..5.0) {
            let grid = GridSpec::new(1, 16.0, 128).unwrap();
            let params = KernelParams::new(1, 1.0).unwrap();
            let mu = cloud(seed, 30);
            let a = maximal_comparison_check(&mu, 2.0, &grid, &params).unwrap();
            let b = maximal_comparison_check(&mu.scaled(c), 2.0, &grid, &params).unwrap();
            prop_assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio);
            let a = wolff_energy_check(&mu, 3.0, &grid, &params).unwrap();
            let b = wolff_energy_check(&mu.scaled(c), 3.0, &grid, &params).unwrap();
            prop_assert!((a.ratio - b.ratio).abs() <= 1e-10 * a.ratio);
        }
    }
}

//! The extension `u(x,t) = P_α f(x,t) = (p^α_t ∗ f)(x)`, its adjoint on measures,
//! and the boundary functionals built from it.
//!
//! Slices are computed by convolving `f` with the kernel masses of the grid
//! cells, `w_k(t) = ∫_{cell k} p^α_t`. The masses sum to at most one, so
//! positivity and the maximum principle hold exactly on the grid.

use crate::error::{invalid, CapaxError, Result};
use crate::fft::{signed_index, FftNd};
use crate::grid::{
    convolve_offsets_direct, lp_norm, spectral_energy, weighted_lp_norm, Convolver, GridFunction, GridSpec,
    HalfSpaceField, OffsetKernel, TLadder,
};
use crate::kernel::{poisson_cell_mass, poisson_cell_masses, KernelParams};
use crate::measure::DiscreteMeasure;
use crate::special::{gauss_legendre, ln_gamma, neumaier_sum, pairwise_sum};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Largest number of field values (nodes × slices) an extension may allocate.
pub const FIELD_BUDGET: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionMethod {
    Direct,
    FastConvolution,
    Subordination,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtensionResult {
    pub field: HalfSpaceField,
    pub params: KernelParams,
    pub method: ExtensionMethod,
    /// False when the subordination quadrature missed its tolerance somewhere.
    pub quadrature_converged: bool,
}

impl ExtensionResult {
    /// Checks `u ≥ 0` and `sup u(·,t) ≤ sup f` for non-negative `f`, up to `tol`
    /// relative to `sup f`.
    pub fn satisfies_max_principle(&self, f: &GridFunction, tol: f64) -> bool {
        let sup = f.max().max(0.0);
        let slack = tol * sup.max(f64::MIN_POSITIVE);
        self.field.min() >= -slack && self.field.max() <= sup + slack
    }
}

fn check_inputs(f: &GridFunction, ladder: &TLadder, params: &KernelParams) -> Result<()> {
    if params.dim() != f.spec().dim() {
        return Err(CapaxError::GridMismatch(format!(
            "kernel dimension {} but grid dimension {}",
            params.dim(),
            f.spec().dim()
        )));
    }
    let requested = f.spec().len().saturating_mul(ladder.len());
    if requested > FIELD_BUDGET {
        return Err(CapaxError::BudgetExceeded {
            requested,
            budget: FIELD_BUDGET,
        });
    }
    Ok(())
}

fn cell_kernel(params: &KernelParams, spec: &GridSpec, t: f64) -> OffsetKernel {
    OffsetKernel {
        dim: spec.dim(),
        m: spec.points(),
        weights: poisson_cell_masses(params, t, spec.spacing(), spec.points()),
    }
}

/// `P_α f` on every ladder slice by zero-padded FFT convolution.
pub fn extend(f: &GridFunction, ladder: &TLadder, params: &KernelParams) -> Result<ExtensionResult> {
    extend_with(f, ladder, params, ExtensionMethod::FastConvolution)
}

/// `P_α f` by the chosen evaluation path.
pub fn extend_with(
    f: &GridFunction,
    ladder: &TLadder,
    params: &KernelParams,
    method: ExtensionMethod,
) -> Result<ExtensionResult> {
    check_inputs(f, ladder, params)?;
    let spec = *f.spec();
    let (slices, converged): (Vec<Vec<f64>>, bool) = match method {
        ExtensionMethod::FastConvolution => {
            let conv = Convolver::new(spec);
            let fh = conv.transform_input(f.values());
            let s = ladder
                .slices()
                .par_iter()
                .map(|&t| conv.apply(&fh, &conv.transform_kernel(&cell_kernel(params, &spec, t))))
                .collect();
            (s, true)
        }
        ExtensionMethod::Direct => {
            let s = ladder
                .slices()
                .par_iter()
                .map(|&t| convolve_offsets_direct(f.values(), &spec, &cell_kernel(params, &spec, t)))
                .collect();
            (s, true)
        }
        ExtensionMethod::Subordination => subordination_slices(f, ladder, params)?,
    };
    let values = slices.concat();
    Ok(ExtensionResult {
        field: HalfSpaceField::new(spec, ladder.clone(), values)?,
        params: *params,
        method,
        quadrature_converged: converged,
    })
}

/// `P_α f` through the subordination formula, evaluated spectrally.
pub fn subordination_extend(f: &GridFunction, ladder: &TLadder, params: &KernelParams) -> Result<ExtensionResult> {
    extend_with(f, ladder, params, ExtensionMethod::Subordination)
}

/// Subordination multiplier
/// `m(t,ξ) = Γ(α/2)^{-1} ∫_0^∞ e^{-s} e^{-t²(2π|ξ|)²/(4s)} s^{α/2-1} ds`
/// with a flag telling whether two quadrature resolutions agreed to `1e-8`.
pub fn subordination_multiplier(alpha: f64, t: f64, xi: f64) -> (f64, bool) {
    let c = (std::f64::consts::PI * t * xi).powi(2);
    subordination_integral(alpha / 2.0, c)
}

// In y = ln s the integrand exp(a y - e^y - c e^{-y}) is log-concave and smooth,
// so composite Gauss-Legendre over its effective support converges fast for
// every c, including c → 0 where Laguerre rules fail.
fn subordination_integral(a: f64, c: f64) -> (f64, bool) {
    if c == 0.0 {
        return (1.0, true);
    }
    let lg = |y: f64| a * y - y.exp() - c * (-y).exp();
    let y_peak = (0.5 * (a + (a * a + 4.0 * c).sqrt())).ln();
    let top = lg(y_peak);
    let drop = 50.0;
    let mut lo = y_peak - 1.0;
    while lg(lo) > top - drop {
        lo -= 1.0;
    }
    let mut hi = y_peak + 1.0;
    while lg(hi) > top - drop {
        hi += 1.0;
    }
    let (gx, gw) = gauss_legendre(10);
    let composite = |panels: usize| -> f64 {
        let width = (hi - lo) / panels as f64;
        let mut terms = Vec::with_capacity(panels * gx.len());
        for p in 0..panels {
            let a0 = lo + p as f64 * width;
            for (x, w) in gx.iter().zip(&gw) {
                let y = a0 + 0.5 * width * (x + 1.0);
                terms.push(0.5 * width * w * (lg(y) - top).exp());
            }
        }
        pairwise_sum(&terms)
    };
    let coarse = (hi - lo).ceil() as usize;
    let scale = (top - ln_gamma(a)).exp();
    let v1 = scale * composite(coarse);
    let v2 = scale * composite(2 * coarse);
    (v2, (v1 - v2).abs() <= 1e-8)
}

// Periodic images of the heavy-tailed kernel contaminate the spectral result by
// roughly Σ_{k≠0} u(x + kP) ∝ P^{-(n+α)}; two paddings remove the leading term.
fn subordination_slices(f: &GridFunction, ladder: &TLadder, params: &KernelParams) -> Result<(Vec<Vec<f64>>, bool)> {
    let pad = if f.spec().dim() == 1 { 8 } else { 2 };
    let (coarse, ok1) = spectral_subordination(f, ladder, params, pad)?;
    let (fine, ok2) = spectral_subordination(f, ladder, params, 2 * pad)?;
    let q = 2f64.powf(f.spec().dim() as f64 + params.alpha());
    let out = coarse
        .iter()
        .zip(&fine)
        .map(|(c, w)| c.iter().zip(w).map(|(a, b)| (q * b - a) / (q - 1.0)).collect())
        .collect();
    Ok((out, ok1 && ok2))
}

fn spectral_subordination(
    f: &GridFunction,
    ladder: &TLadder,
    params: &KernelParams,
    pad: usize,
) -> Result<(Vec<Vec<f64>>, bool)> {
    let spec = *f.spec();
    let big = f.zero_padded(pad)?;
    let bspec = *big.spec();
    let m = bspec.points();
    let fft = FftNd::new(bspec.dim(), m);
    let mut fh: Vec<Complex64> = big.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
    fft.forward(&mut fh);
    // integer squared wavenumbers present on the padded grid
    let k2: Vec<usize> = (0..bspec.len())
        .map(|idx| {
            let mi = bspec.multi_index(idx);
            let k0 = signed_index(mi[0], m);
            let k1 = if bspec.dim() == 2 { signed_index(mi[1], m) } else { 0 };
            (k0 * k0 + k1 * k1) as usize
        })
        .collect();
    let kmax = *k2.iter().max().unwrap_or(&0);
    let mut present = vec![false; kmax + 1];
    k2.iter().for_each(|&k| present[k] = true);
    let distinct: Vec<usize> = (0..=kmax).filter(|&k| present[k]).collect();
    let dxi = 1.0 / (2.0 * bspec.extent());
    let alpha = params.alpha();
    let out: Vec<(Vec<f64>, bool)> = ladder
        .slices()
        .par_iter()
        .map(|&t| {
            let mut table = vec![0.0; kmax + 1];
            let mut ok = true;
            for &k in &distinct {
                let (v, conv) = subordination_multiplier(alpha, t, dxi * (k as f64).sqrt());
                table[k] = v;
                ok &= conv;
            }
            let mut data: Vec<Complex64> = fh.iter().zip(&k2).map(|(z, &k)| z * table[k]).collect();
            fft.inverse(&mut data);
            let window = GridFunction::new(bspec, data.iter().map(|z| z.re).collect())
                .and_then(|g| g.cropped(&spec))
                .map(GridFunction::into_values);
            (window.unwrap_or_default(), ok)
        })
        .collect();
    let converged = out.iter().all(|(_, ok)| *ok);
    Ok((out.into_iter().map(|(v, _)| v).collect(), converged))
}

/// Relative L² discrepancy between two fields on the same grid and ladder.
pub fn field_discrepancy(a: &HalfSpaceField, b: &HalfSpaceField) -> Result<f64> {
    if a.values().len() != b.values().len() {
        return Err(CapaxError::GridMismatch("fields differ in shape".into()));
    }
    let num = neumaier_sum(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).powi(2)));
    let den = neumaier_sum(b.values().iter().map(|y| y * y));
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}

/// `x ↦ P*_α μ(x)` with the per-atom constants hoisted.
pub(crate) struct AdjointSum {
    atoms: Vec<([f64; 2], f64, f64)>,
    exponent: f64,
}

impl AdjointSum {
    pub(crate) fn new(mu: &DiscreteMeasure, params: &KernelParams) -> Self {
        let c = params.normalization();
        let alpha = params.alpha();
        let atoms = mu
            .atoms()
            .iter()
            .map(|a| {
                let x1 = if mu.dim() == 2 { a.x[1] } else { 0.0 };
                ([a.x[0], x1], a.t * a.t, a.w * c * a.t.powf(alpha))
            })
            .collect();
        Self {
            atoms,
            exponent: -(params.dim() as f64 + alpha) / 2.0,
        }
    }

    pub(crate) fn eval(&self, x: [f64; 2]) -> f64 {
        let twice = 2.0 * self.exponent;
        let half_integer = twice == twice.round();
        neumaier_sum(self.atoms.iter().map(|(z, t2, amp)| {
            let s = (x[0] - z[0]).powi(2) + (x[1] - z[1]).powi(2) + t2;
            if half_integer {
                amp * s.sqrt().powi(twice as i32)
            } else {
                amp * s.powf(self.exponent)
            }
        }))
    }
}

/// `P*_α μ(x) = Σ_a w_a p^α_{t_a}(x - z_a)` at every grid node.
pub fn adjoint_extend(mu: &DiscreteMeasure, grid: &GridSpec, params: &KernelParams) -> Result<GridFunction> {
    if mu.dim() != grid.dim() || params.dim() != grid.dim() {
        return Err(CapaxError::GridMismatch("measure, grid and kernel dimensions differ".into()));
    }
    let sum = AdjointSum::new(mu, params);
    let values: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| sum.eval(grid.coords(i)))
        .collect();
    GridFunction::new(*grid, values)
}

/// The discrete extension at an arbitrary point `(x, t)`:
/// `Σ_j f_j ∫_{cell j} p^α_t(x - y) dy`.
pub fn extension_at(f: &GridFunction, params: &KernelParams, x: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(invalid("t", format!("{t} must be positive")));
    }
    let spec = f.spec();
    let n = spec.dim();
    let h = spec.spacing();
    Ok(neumaier_sum(f.values().iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| {
        let y = spec.coords(j);
        let d = [x[0] - y[0], if n == 2 { x[1] - y[1] } else { 0.0 }];
        v * poisson_cell_mass(params, &d[..n], h, t)
    })))
}

/// `(⟨P_α f, μ⟩, ⟨f, P*_α μ⟩)`: the first evaluates the extension at each atom,
/// the second integrates `f · P*_α μ` over the grid.
pub fn duality_pairing_check(f: &GridFunction, mu: &DiscreteMeasure, params: &KernelParams) -> Result<(f64, f64)> {
    if mu.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = f.spec().dim();
    let lhs_terms: Vec<f64> = mu
        .atoms()
        .par_iter()
        .map(|a| extension_at(f, params, &a.x[..n], a.t).map(|v| a.w * v))
        .collect::<Result<_>>()?;
    let adj = adjoint_extend(mu, f.spec(), params)?;
    let rhs = neumaier_sum(f.values().iter().zip(adj.values()).map(|(a, b)| a * b)) * f.spec().cell_volume();
    Ok((neumaier_sum(lhs_terms), rhs))
}

/// Output of [`dirichlet_to_neumann`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DtnResult {
    pub values: GridFunction,
    /// Top-quarter spectral energy of `f` exceeds 1%.
    pub bandlimit_warning: bool,
    /// The extrapolated limit moved further than the smallest-height value itself.
    pub extrapolation_diverged: bool,
    pub t_min: f64,
}

/// Default smallest height for the Dirichlet-to-Neumann extrapolation, in cells.
pub const DTN_T_MIN_CELLS: f64 = 1.0;

/// `-c_α lim_{t→0} t^{1-α} ∂_t u(·,t)`.
pub fn dirichlet_to_neumann(f: &GridFunction, params: &KernelParams) -> Result<DtnResult> {
    dirichlet_to_neumann_with(f, params, DTN_T_MIN_CELLS * f.spec().spacing())
}

/// As [`dirichlet_to_neumann`] with an explicit smallest height.
///
/// `g(t) = t^{1-α}∂_t u` is formed at `t_min, 2t_min, 4t_min` by one-sided
/// second-order differences and extrapolated with the model
/// `a + b t^{2-α} + c t²`.
pub fn dirichlet_to_neumann_with(f: &GridFunction, params: &KernelParams, t_min: f64) -> Result<DtnResult> {
    if !(t_min > 0.0 && t_min.is_finite()) {
        return Err(invalid("t_min", format!("{t_min} must be positive")));
    }
    let alpha = params.alpha();
    let delta = 0.02;
    let nodes = [t_min, 2.0 * t_min, 4.0 * t_min];
    let heights: Vec<f64> = nodes
        .iter()
        .flat_map(|&t| [t, t * (1.0 + delta), t * (1.0 + 2.0 * delta)])
        .collect();
    let ladder = TLadder::from_slices(heights.clone())?;
    let u = extend(f, &ladder, params)?.field;
    let len = f.spec().len();
    let g: Vec<Vec<f64>> = nodes
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let (s0, s1, s2) = (u.slice(3 * j), u.slice(3 * j + 1), u.slice(3 * j + 2));
            let scale = t.powf(1.0 - alpha) / (2.0 * delta * t);
            (0..len).map(|i| scale * (-3.0 * s0[i] + 4.0 * s1[i] - s2[i])).collect()
        })
        .collect();
    let vand = Matrix3::from_fn(|r, c| match c {
        0 => 1.0,
        1 => nodes[r].powf(2.0 - alpha),
        _ => nodes[r] * nodes[r],
    });
    let inv = vand
        .try_inverse()
        .ok_or_else(|| CapaxError::NonConvergence {
            iterations: 0,
            last_change: f64::NAN,
        })?;
    let w: Vector3<f64> = inv.row(0).transpose();
    let limit: Vec<f64> = (0..len).map(|i| w[0] * g[0][i] + w[1] * g[1][i] + w[2] * g[2][i]).collect();
    let norm = |v: &[f64]| neumaier_sum(v.iter().map(|x| x * x)).sqrt();
    let shift: Vec<f64> = limit.iter().zip(&g[0]).map(|(a, b)| a - b).collect();
    let diverged = !limit.iter().all(|v| v.is_finite()) || norm(&shift) > norm(&g[0]).max(f64::MIN_POSITIVE);
    let c_alpha = params.dtn_constant();
    let values = GridFunction::new(*f.spec(), limit.iter().map(|v| -c_alpha * v).collect())?;
    Ok(DtnResult {
        values,
        bandlimit_warning: f.high_frequency_energy_fraction() > 0.01,
        extrapolation_diverged: diverged,
        t_min,
    })
}

/// Both sides of the energy identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyResult {
    /// `∫ |2πξ|^α |f̂(ξ)|² dξ`.
    pub lhs: f64,
    /// `∫∫ |∇u|² t^{1-α} dx dt` on the default ladder.
    pub rhs: f64,
    /// `lhs / rhs`, absent when `rhs` vanishes.
    pub ratio: Option<f64>,
    /// `rhs` on the refined ladder.
    pub rhs_refined: f64,
    /// True when refining the ladder changed `rhs` by at most 2%.
    pub ladder_converged: bool,
}

/// Default ladder size for energy integrals.
pub const ENERGY_SLICES: usize = 64;

/// Energy identity with the default ladder `[h/2, 4L]`.
pub fn energy_identity(f: &GridFunction, params: &KernelParams) -> Result<EnergyResult> {
    let ladder = TLadder::for_grid(f.spec(), ENERGY_SLICES)?;
    energy_identity_with(f, params, &ladder)
}

pub fn energy_identity_with(f: &GridFunction, params: &KernelParams, ladder: &TLadder) -> Result<EnergyResult> {
    let spec = *f.spec();
    let lhs = {
        let padded = f.zero_padded(2)?;
        let a = params.alpha();
        spectral_energy(&padded, |xi| (2.0 * std::f64::consts::PI * xi).powf(a))
    };
    // the field spreads beyond the box at large heights; evaluate it on a wider grid
    let widen = if spec.dim() == 1 { 4 } else { 2 };
    let wide = f.zero_padded(widen)?;
    let rhs = dirichlet_energy(&wide, params, ladder)?;
    let rhs_refined = dirichlet_energy(&wide, params, &ladder.refined())?;
    let ratio = (rhs > 0.0).then(|| lhs / rhs);
    Ok(EnergyResult {
        lhs,
        rhs,
        ratio,
        rhs_refined,
        ladder_converged: (rhs_refined - rhs).abs() <= 0.02 * rhs.abs().max(f64::MIN_POSITIVE),
    })
}

fn grad_x_sq(values: &[f64], spec: &GridSpec) -> Vec<f64> {
    let m = spec.points();
    let h = spec.spacing();
    let d = |get: &dyn Fn(usize) -> f64, i: usize| -> f64 {
        if i == 0 {
            (get(1) - get(0)) / h
        } else if i == m - 1 {
            (get(m - 1) - get(m - 2)) / h
        } else {
            (get(i + 1) - get(i - 1)) / (2.0 * h)
        }
    };
    (0..spec.len())
        .map(|idx| {
            let mi = spec.multi_index(idx);
            match spec.dim() {
                1 => d(&|i| values[i], mi[0]).powi(2),
                _ => {
                    let a = d(&|i| values[spec.flat_index([i, mi[1]])], mi[0]);
                    let b = d(&|j| values[spec.flat_index([mi[0], j])], mi[1]);
                    a * a + b * b
                }
            }
        })
        .collect()
}

/// `∫∫ |∇u|² t^{1-α}` over the ladder with an analytic correction on `(0, t_min)`.
fn dirichlet_energy(f: &GridFunction, params: &KernelParams, ladder: &TLadder) -> Result<f64> {
    let spec = *f.spec();
    let alpha = params.alpha();
    let vol = spec.cell_volume();
    let u = extend(f, ladder, params)?.field;
    let t = ladder.slices();
    let k = t.len();
    let gx: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|j| pairwise_sum(&grad_x_sq(u.slice(j), &spec)) * vol)
        .collect();
    let mut terms = Vec::with_capacity(2 * k + 2);
    for j in 0..k - 1 {
        let dt = t[j + 1] - t[j];
        let tm = (t[j] * t[j + 1]).sqrt();
        let (a, b) = (u.slice(j), u.slice(j + 1));
        let gt = pairwise_sum(&a.iter().zip(b).map(|(x, y)| ((y - x) / dt).powi(2)).collect::<Vec<_>>()) * vol;
        terms.push(gt * tm.powf(1.0 - alpha) * dt);
        terms.push(0.5 * (gx[j] * t[j].powf(1.0 - alpha) + gx[j + 1] * t[j + 1].powf(1.0 - alpha)) * dt);
    }
    // below t_min: ∂_t u ≈ g t^{α-1} with g frozen at the first half-step,
    // and ∇_x u ≈ ∇_x u(·, t_min)
    let t0 = t[0];
    let dt = t[1] - t[0];
    let tm = (t[0] * t[1]).sqrt();
    let g2 = pairwise_sum(
        &u.slice(0)
            .iter()
            .zip(u.slice(1))
            .map(|(x, y)| ((y - x) / dt * tm.powf(1.0 - alpha)).powi(2))
            .collect::<Vec<_>>(),
    ) * vol;
    terms.push(g2 * t0.powf(alpha) / alpha);
    terms.push(gx[0] * t0.powf(2.0 - alpha) / (2.0 - alpha));
    Ok(neumaier_sum(terms))
}

/// `(‖P_α f(·,t)‖_p, t^{n(1/p-1/r)} ‖f‖_r)` for `1 ≤ r ≤ p ≤ ∞`.
pub fn mixed_norm_check(f: &GridFunction, t: f64, p: f64, r: f64, params: &KernelParams) -> Result<(f64, f64)> {
    if !(r >= 1.0) {
        return Err(invalid("r", format!("{r} < 1")));
    }
    if r > p {
        return Err(invalid("r", format!("r = {r} exceeds p = {p}")));
    }
    let ladder = TLadder::from_slices(vec![t])?;
    let u = extend(f, &ladder, params)?.field;
    let lhs = weighted_lp_norm(u.slice(0), f.spec().cell_volume(), p)?;
    let n = f.spec().dim() as f64;
    let inv = |q: f64| if q.is_infinite() { 0.0 } else { 1.0 / q };
    let bound = t.powf(n * (inv(p) - inv(r))) * lp_norm(f, r)?;
    Ok((lhs, bound))
}

/// Sliding maximum of `row` over windows `[i-w, i+w]` for every `w ≤ wmax`,
/// answered from a sparse table.
struct SparseMax {
    levels: Vec<Vec<f64>>,
}

impl SparseMax {
    fn new(row: &[f64]) -> Self {
        let mut levels = vec![row.to_vec()];
        let mut span = 1;
        while 2 * span <= row.len() {
            let prev = levels.last().unwrap();
            let next: Vec<f64> = (0..=row.len() - 2 * span).map(|i| prev[i].max(prev[i + span])).collect();
            levels.push(next);
            span *= 2;
        }
        Self { levels }
    }

    /// `max row[lo..=hi]`.
    fn query(&self, lo: usize, hi: usize) -> f64 {
        let len = hi - lo + 1;
        let lvl = (usize::BITS - 1 - len.leading_zeros()) as usize;
        let span = 1 << lvl;
        self.levels[lvl][lo].max(self.levels[lvl][hi + 1 - span])
    }
}

/// Largest integer `d ≥ 0` with `d < r` (open radius in cells), or `None` when `r ≤ 0`.
fn open_radius_cells(r: f64) -> Option<usize> {
    if r <= 0.0 {
        return None;
    }
    let c = r.ceil();
    Some(if c == r { c as usize - 1 } else { r.floor() as usize })
}

/// Maximum of `|values|` over the open ball of radius `r` (in cells) about every node.
fn ball_max(values: &[f64], spec: &GridSpec, r: f64) -> Vec<f64> {
    let m = spec.points();
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let Some(rc) = open_radius_cells(r) else {
        return vec![0.0; values.len()];
    };
    match spec.dim() {
        1 => {
            let st = SparseMax::new(&abs);
            (0..m)
                .map(|i| st.query(i.saturating_sub(rc), (i + rc).min(m - 1)))
                .collect()
        }
        _ => {
            let rows: Vec<SparseMax> = abs.chunks(m).map(SparseMax::new).collect();
            let r2 = r * r;
            let half: Vec<Option<usize>> = (0..=rc.min(m))
                .map(|d0| open_radius_cells((r2 - (d0 * d0) as f64).max(0.0).sqrt()))
                .collect();
            (0..spec.len())
                .into_par_iter()
                .map(|idx| {
                    let [i, j] = spec.multi_index(idx);
                    let mut best = 0.0f64;
                    for (d0, w) in half.iter().enumerate() {
                        let Some(w) = *w else { continue };
                        for row in [i.checked_sub(d0), Some(i + d0).filter(|&x| x < m)].into_iter().flatten() {
                            best = best.max(rows[row].query(j.saturating_sub(w), (j + w).min(m - 1)));
                        }
                    }
                    best
                })
                .collect()
        }
    }
}

/// `sup { |u(y,t)| : |y - x| < t }` over ladder slices and grid nodes.
pub fn nontangential_max(u: &HalfSpaceField) -> GridFunction {
    let spec = *u.spec();
    let h = spec.spacing();
    let per_slice: Vec<Vec<f64>> = u
        .ladder()
        .slices()
        .par_iter()
        .enumerate()
        .map(|(j, &t)| ball_max(u.slice(j), &spec, t / h))
        .collect();
    let values = (0..spec.len())
        .map(|i| per_slice.iter().fold(0.0f64, |a, s| a.max(s[i])))
        .collect();
    GridFunction::new(spec, values).expect("maxima of finite values are finite")
}

/// Hardy–Littlewood maximal function over radii `h, 2h, 4h, …` up to `2L`.
///
/// Each average is the mean of `|f|` over the lattice nodes in the closed ball,
/// counting nodes outside the box as zeros, so a constant maps to itself away
/// from the boundary.
pub fn hl_max(f: &GridFunction) -> GridFunction {
    let spec = *f.spec();
    let m = spec.points();
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let mut radii = vec![];
    let mut r = 1usize;
    loop {
        radii.push(r);
        if r >= m {
            break;
        }
        r *= 2;
    }
    let values: Vec<f64> = match spec.dim() {
        1 => {
            let mut prefix = vec![0.0; m + 1];
            for i in 0..m {
                prefix[i + 1] = prefix[i] + abs[i];
            }
            (0..m)
                .map(|i| {
                    radii
                        .iter()
                        .map(|&r| {
                            let lo = i.saturating_sub(r);
                            let hi = (i + r).min(m - 1);
                            (prefix[hi + 1] - prefix[lo]) / (2 * r + 1) as f64
                        })
                        .fold(0.0, f64::max)
                })
                .collect()
        }
        _ => {
            let prefix: Vec<Vec<f64>> = abs
                .chunks(m)
                .map(|row| {
                    let mut p = vec![0.0; m + 1];
                    for j in 0..m {
                        p[j + 1] = p[j] + row[j];
                    }
                    p
                })
                .collect();
            let profiles: Vec<(usize, Vec<usize>, f64)> = radii
                .iter()
                .map(|&r| {
                    let w: Vec<usize> = (0..=r).map(|d| (((r * r - d * d) as f64).sqrt() + 1e-9).floor() as usize).collect();
                    let count: usize = w.iter().enumerate().map(|(d, w)| if d == 0 { 2 * w + 1 } else { 2 * (2 * w + 1) }).sum();
                    (r, w, count as f64)
                })
                .collect();
            (0..spec.len())
                .into_par_iter()
                .map(|idx| {
                    let [i, j] = spec.multi_index(idx);
                    profiles
                        .iter()
                        .map(|(_, w, count)| {
                            let mut s = 0.0;
                            for (d0, &wd) in w.iter().enumerate() {
                                let lo = j.saturating_sub(wd);
                                let hi = (j + wd).min(m - 1);
                                for row in [i.checked_sub(d0), Some(i + d0).filter(|&x| x < m && d0 > 0)].into_iter().flatten() {
                                    s += prefix[row][hi + 1] - prefix[row][lo];
                                }
                            }
                            s / count
                        })
                        .fold(0.0, f64::max)
                })
                .collect()
        }
    };
    GridFunction::new(spec, values).expect("averages of finite values are finite")
}

/// `sup_x N(P_α f)(x) / Mf(x)` over nodes where `Mf > 0`: an empirical domination constant.
pub fn nontangential_domination_ratio(f: &GridFunction, ladder: &TLadder, params: &KernelParams) -> Result<f64> {
    let u = extend(f, ladder, params)?;
    let nt = nontangential_max(&u.field);
    let mf = hl_max(f);
    Ok(nt
        .values()
        .iter()
        .zip(mf.values())
        .filter(|(_, m)| **m > 0.0)
        .map(|(a, m)| a / m)
        .fold(0.0, f64::max))
}

/// `min (p^α_t ∗ |f|)(x,t)` over ladder nodes with the open ball `B(x,t)` inside the
/// open box `∏ (lo_i, hi_i)`. `None` when no node qualifies.
pub fn tent_minimum(
    f: &GridFunction,
    ladder: &TLadder,
    params: &KernelParams,
    lo: [f64; 2],
    hi: [f64; 2],
) -> Result<Option<f64>> {
    let abs = f.map(f64::abs);
    let u = extend(&abs, ladder, params)?.field;
    let spec = *f.spec();
    let n = spec.dim();
    let mut best: Option<f64> = None;
    for (j, &t) in ladder.slices().iter().enumerate() {
        for i in 0..spec.len() {
            let x = spec.coords(i);
            let room = (0..n).map(|a| (x[a] - lo[a]).min(hi[a] - x[a])).fold(f64::INFINITY, f64::min);
            if room >= t {
                let v = u.at(j, i);
                best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
        }
    }
    Ok(best)
}

/// `max_j ‖u(·,t_{j+1}) - u(·,t_j)‖_r` over consecutive slices.
pub fn max_slice_increment(u: &HalfSpaceField, r: f64) -> Result<f64> {
    let vol = u.spec().cell_volume();
    let mut worst = 0.0f64;
    for j in 0..u.ladder().len().saturating_sub(1) {
        let d: Vec<f64> = u.slice(j + 1).iter().zip(u.slice(j)).map(|(a, b)| a - b).collect();
        worst = worst.max(weighted_lp_norm(&d, vol, r)?);
    }
    Ok(worst)
}

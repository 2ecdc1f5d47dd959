//! Extension (Poisson-type) kernel `p^α_t`, its normalization, and the Riesz kernel.
//!
//! The kernel is `p^α_t(x) = c(n,α) t^α (|x|² + t²)^{-(n+α)/2}` with
//! `c(n,α) = Γ((n+α)/2) / (π^{n/2} Γ(α/2))`, a probability density in `x` for
//! every `t > 0`. In one dimension it is a Student-t density with `α` degrees of
//! freedom and scale `t/√α`, which gives exact cell masses through the
//! regularized incomplete beta function.

use crate::error::{invalid, Result};
use crate::special::{beta_reg, gauss_legendre_on, ln_gamma};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Dimension and order of the extension kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    dim: usize,
    alpha: f64,
}

impl KernelParams {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("n", "dimension must be at least 1"));
        }
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(invalid("alpha", format!("{alpha} is outside (0, 2)")));
        }
        Ok(Self { dim, alpha })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `ln c(n, α)`.
    pub fn ln_normalization(&self) -> f64 {
        let n = self.dim as f64;
        ln_gamma((n + self.alpha) / 2.0) - 0.5 * n * PI.ln() - ln_gamma(self.alpha / 2.0)
    }

    /// `c(n, α)`, computed through log-Gamma.
    pub fn normalization(&self) -> f64 {
        self.ln_normalization().exp()
    }

    /// Kernel at squared radius `r2 = |x|²`, no validation.
    #[inline]
    pub(crate) fn eval_r2(&self, r2: f64, t: f64) -> f64 {
        let n = self.dim as f64;
        let c = self.normalization();
        c * t.powf(self.alpha) * (r2 + t * t).powf(-(n + self.alpha) / 2.0)
    }

    /// Kernel mass outside the ball `|x| > radius`:
    /// `I_{t²/(t²+R²)}(α/2, n/2)`.
    pub fn mass_outside_ball(&self, radius: f64, t: f64) -> f64 {
        if radius <= 0.0 {
            return 1.0;
        }
        beta_reg(
            self.alpha / 2.0,
            self.dim as f64 / 2.0,
            t * t / (t * t + radius * radius),
        )
    }

    /// Mass of the radial profile beyond radius `rho` per unit solid angle:
    /// `c t^α (ρ² + t²)^{-α/2} / α`.
    pub fn radial_tail_density(&self, rho: f64, t: f64) -> f64 {
        self.normalization() * t.powf(self.alpha) * (rho * rho + t * t).powf(-self.alpha / 2.0)
            / self.alpha
    }

    /// Exact kernel mass outside the cube `[-half, half]ⁿ` (n ≤ 2).
    pub fn mass_outside_cube(&self, half: f64, t: f64) -> f64 {
        match self.dim {
            1 => self.mass_outside_ball(half, t),
            2 => {
                // ∫_0^{2π} T(ρ(θ)) dθ with ρ(θ) = half / max(|cos θ|, |sin θ|);
                // eight symmetric octants.
                let octant: f64 = gauss_legendre_on(48, 0.0, PI / 4.0)
                    .map(|(th, w)| w * self.radial_tail_density(half / th.cos(), t))
                    .sum();
                8.0 * octant
            }
            _ => unimplemented!("cube tails are provided for n ≤ 2"),
        }
    }

    /// `c_α = Γ(α/2) / (2^{1-α} Γ(1-α/2))`, the Dirichlet-to-Neumann constant.
    pub fn dtn_constant(&self) -> f64 {
        let a = self.alpha;
        (ln_gamma(a / 2.0) - (1.0 - a) * 2f64.ln() - ln_gamma(1.0 - a / 2.0)).exp()
    }
}

fn validate_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid("t", format!("{t} must be a positive finite real")))
    }
}

/// `p^α_t(x)`.
pub fn poisson_kernel(params: &KernelParams, x: &[f64], t: f64) -> Result<f64> {
    validate_t(t)?;
    if x.len() != params.dim {
        return Err(invalid("x", format!("expected {} coordinates", params.dim)));
    }
    let r2: f64 = x.iter().map(|v| v * v).sum();
    Ok(params.eval_r2(r2, t))
}

/// `c(n, α)`.
pub fn normalization_constant(params: &KernelParams) -> f64 {
    params.normalization()
}

/// Value of the Riesz kernel `|x - y|^{β - n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RieszValue {
    Finite(f64),
    /// `x = y`; callers substitute a cell-averaged integral.
    Singular,
}

/// Riesz kernel `|x - y|^{β-n}` for `0 < β < n`.
pub fn riesz_kernel(dim: usize, beta: f64, x: &[f64], y: &[f64]) -> Result<RieszValue> {
    validate_riesz(dim, beta)?;
    if x.len() != dim || y.len() != dim {
        return Err(invalid("x", format!("expected {dim} coordinates")));
    }
    let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    if r2 == 0.0 {
        return Ok(RieszValue::Singular);
    }
    Ok(RieszValue::Finite(r2.powf((beta - dim as f64) / 2.0)))
}

pub(crate) fn validate_riesz(dim: usize, beta: f64) -> Result<()> {
    if dim == 0 {
        return Err(invalid("n", "dimension must be at least 1"));
    }
    if !(beta > 0.0 && beta < dim as f64) {
        return Err(invalid("beta", format!("{beta} is outside (0, {dim})")));
    }
    Ok(())
}

/// Integral of `|y|^{β-n}` over the grid cell `[-h/2, h/2]ⁿ` centred at the
/// singularity, divided by the cell volume.
pub fn riesz_cell_average(dim: usize, beta: f64, h: f64) -> f64 {
    match dim {
        1 => 2.0 * (h / 2.0).powf(beta) / beta / h,
        2 => {
            // polar: ∫_0^{2π} ρ(θ)^β / β dθ over the square
            let octant: f64 = gauss_legendre_on(48, 0.0, PI / 4.0)
                .map(|(th, w)| w * (0.5 * h / th.cos()).powf(beta) / beta)
                .sum();
            8.0 * octant / (h * h)
        }
        _ => unimplemented!("cell averages are provided for n ≤ 2"),
    }
}

/// Normalizing constant of the Riesz potential: `(-Δ)^{-β/2} g = γ |·|^{β-n} ∗ g`,
/// `γ = Γ((n-β)/2) / (π^{n/2} 2^β Γ(β/2))`.
pub fn riesz_potential_constant(dim: usize, beta: f64) -> f64 {
    let n = dim as f64;
    (ln_gamma((n - beta) / 2.0) - 0.5 * n * PI.ln() - beta * 2f64.ln() - ln_gamma(beta / 2.0))
        .exp()
}

/// Constant of the principal-value form of `(-Δ)^{s/2}`:
/// `s 2^s Γ((n+s)/2) / (2 Γ(1-s/2) π^{n/2})`.
pub fn frac_laplacian_constant(dim: usize, s: f64) -> f64 {
    let n = dim as f64;
    (s.ln() + s * 2f64.ln() + ln_gamma((n + s) / 2.0)
        - 2f64.ln()
        - ln_gamma(1.0 - s / 2.0)
        - 0.5 * n * PI.ln())
    .exp()
}

/// Mass of `p^α_t` over the interval `[a, b]` in one dimension.
pub fn poisson_interval_mass_1d(params: &KernelParams, a: f64, b: f64, t: f64) -> f64 {
    debug_assert_eq!(params.dim, 1);
    // upper tail Q(x) = mass of (x, ∞)
    let q = |x: f64| -> f64 {
        let tail = 0.5 * beta_reg(params.alpha / 2.0, 0.5, t * t / (t * t + x * x));
        if x >= 0.0 {
            tail
        } else {
            1.0 - tail
        }
    };
    if a >= 0.0 {
        q(a) - q(b)
    } else if b <= 0.0 {
        q(-b) - q(-a)
    } else {
        1.0 - q(-a) - q(b)
    }
}

/// Kernel masses of the grid cells at integer offsets, `w_k = ∫_{cell k} p^α_t`.
///
/// Returns a row-major table over offsets `-(m-1)..=(m-1)` per axis. The
/// entries are non-negative and sum to at most one.
pub fn poisson_cell_masses(params: &KernelParams, t: f64, h: f64, m: usize) -> Vec<f64> {
    let span = 2 * m - 1;
    let off = |k: usize| k as f64 - (m as f64 - 1.0);
    match params.dim {
        1 => (0..span)
            .map(|k| {
                let c = off(k) * h;
                poisson_interval_mass_1d(params, c - 0.5 * h, c + 0.5 * h, t).max(0.0)
            })
            .collect(),
        2 => {
            let mut out = vec![0.0; span * span];
            out.iter_mut().enumerate().for_each(|(idx, v)| {
                let (i, j) = (idx / span, idx % span);
                *v = square_mass_2d(params, off(i) * h, off(j) * h, h, t);
            });
            let total: f64 = crate::special::pairwise_sum(&out);
            if total > 1.0 {
                out.iter_mut().for_each(|v| *v /= total);
            }
            out
        }
        _ => unimplemented!("cell masses are provided for n ≤ 2"),
    }
}

/// Kernel mass of the cell of side `h` centred at `center` (n ≤ 2).
pub fn poisson_cell_mass(params: &KernelParams, center: &[f64], h: f64, t: f64) -> f64 {
    match params.dim {
        1 => poisson_interval_mass_1d(params, center[0] - 0.5 * h, center[0] + 0.5 * h, t).max(0.0),
        2 => square_mass_2d(params, center[0], center[1], h, t),
        _ => unimplemented!("cell masses are provided for n ≤ 2"),
    }
}

fn square_mass_2d(params: &KernelParams, cx: f64, cy: f64, h: f64, t: f64) -> f64 {
    let c = params.normalization();
    let ta = t.powf(params.alpha);
    let ex = -(2.0 + params.alpha) / 2.0;
    let dist = (cx.abs().max(cy.abs()) - 0.5 * h).max(0.0);
    // subdivide cells that are close to the kernel peak relative to its width
    let sub = if dist > 4.0 * h.max(t) {
        1
    } else {
        ((2.0 * h / t).ceil() as usize).clamp(1, 32)
    };
    let order = if dist > 4.0 * h.max(t) { 2 } else { 4 };
    let step = h / sub as f64;
    let mut acc = 0.0;
    for a in 0..sub {
        let x0 = cx - 0.5 * h + a as f64 * step;
        for b in 0..sub {
            let y0 = cy - 0.5 * h + b as f64 * step;
            for (x, wx) in gauss_legendre_on(order, x0, x0 + step) {
                for (y, wy) in gauss_legendre_on(order, y0, y0 + step) {
                    acc += wx * wy * c * ta * (x * x + y * y + t * t).powf(ex);
                }
            }
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_invalid_parameters() {
        assert!(KernelParams::new(1, 0.0).is_err());
        assert!(KernelParams::new(1, 2.0).is_err());
        assert!(KernelParams::new(0, 1.0).is_err());
        let p = KernelParams::new(1, 1.0).unwrap();
        assert!(poisson_kernel(&p, &[0.0], 0.0).is_err());
        assert!(poisson_kernel(&p, &[0.0], -1.0).is_err());
        assert!(riesz_kernel(1, 1.0, &[0.0], &[1.0]).is_err());
        assert!(riesz_kernel(2, 0.0, &[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn cauchy_kernel_at_origin() {
        let p = KernelParams::new(1, 1.0).unwrap();
        assert_relative_eq!(poisson_kernel(&p, &[0.0], 1.0).unwrap(), 1.0 / PI, max_relative = 1e-14);
    }

    #[test]
    fn normalization_identities() {
        let p = KernelParams::new(1, 1.0).unwrap();
        assert_relative_eq!(normalization_constant(&p), 1.0 / PI, max_relative = 1e-13);
        let p = KernelParams::new(2, 1.0).unwrap();
        assert_relative_eq!(normalization_constant(&p), 1.0 / (2.0 * PI), max_relative = 1e-13);
        let p = KernelParams::new(1, 1.999).unwrap();
        let c = normalization_constant(&p);
        assert!(c.is_finite() && c > 0.0);
        let p = KernelParams::new(8, 0.01).unwrap();
        assert!(normalization_constant(&p).is_finite());
    }

    #[test]
    fn riesz_examples() {
        assert_eq!(riesz_kernel(1, 0.5, &[0.0], &[1.0]).unwrap(), RieszValue::Finite(1.0));
        assert_eq!(riesz_kernel(1, 0.5, &[0.0], &[4.0]).unwrap(), RieszValue::Finite(0.5));
        match riesz_kernel(2, 1.0, &[0.0, 0.0], &[3.0, 4.0]).unwrap() {
            RieszValue::Finite(v) => assert_relative_eq!(v, 0.2, max_relative = 1e-15),
            RieszValue::Singular => panic!(),
        }
        assert_eq!(riesz_kernel(1, 0.5, &[2.0], &[2.0]).unwrap(), RieszValue::Singular);
    }

    #[test]
    fn interval_masses_sum_to_one() {
        let p = KernelParams::new(1, 0.5).unwrap();
        let whole = poisson_interval_mass_1d(&p, -1e12, 1e12, 1.0);
        assert_relative_eq!(whole, 1.0, epsilon = 1e-5);
        let parts = poisson_interval_mass_1d(&p, -3.0, 0.5, 0.7) + poisson_interval_mass_1d(&p, 0.5, 2.0, 0.7);
        assert_relative_eq!(parts, poisson_interval_mass_1d(&p, -3.0, 2.0, 0.7), max_relative = 1e-12);
        // outside-ball mass agrees with the interval masses
        let inside = poisson_interval_mass_1d(&p, -2.0, 2.0, 0.7);
        assert_relative_eq!(1.0 - inside, p.mass_outside_ball(2.0, 0.7), max_relative = 1e-12);
    }

    #[test]
    fn cell_masses_bounded_by_one() {
        for dim in [1usize, 2] {
            let p = KernelParams::new(dim, 1.5).unwrap();
            let w = poisson_cell_masses(&p, 0.05, 0.1, 16);
            let s: f64 = w.iter().sum();
            assert!(s <= 1.0 + 1e-12 && s > 0.9, "dim {dim}: {s}");
            assert!(w.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn dtn_constant_is_one_for_alpha_one() {
        let p = KernelParams::new(1, 1.0).unwrap();
        assert_relative_eq!(p.dtn_constant(), 1.0, max_relative = 1e-13);
    }

    #[test]
    fn riesz_cell_average_2d_exceeds_disk_part() {
        let h: f64 = 0.1;
        let beta = 0.5;
        let disk = 2.0 * PI * (h / 2.0).powf(beta) / beta / (h * h);
        let avg = riesz_cell_average(2, beta, h);
        assert!(avg > disk);
    }
}

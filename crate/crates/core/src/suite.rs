//! The acceptance battery: sixteen numbered checks, each returning a pass flag
//! and a short measured summary.
//!
//! `Quick` runs every check in one dimension; `Full` adds the two-dimensional
//! variants where a check has one.

use crate::capacity::{
    ball_bounds_check, ball_scaling_check, capacity, dyadic_ladder, equilibrium_check, strong_type_check,
    CompactSetGrid, SolverConfig,
};
use crate::embedding::{
    check_lp_embedding, empirical_embedding_ratio, level_set_containment_check, spearman, BoxCapacityTable,
    TestFamily, TestSpace,
};
use crate::error::{invalid, Result};
use crate::extension::{dirichlet_to_neumann, energy_identity, extend};
use crate::fracspaces::{
    coarea_check, frac_capacity, frac_laplacian_fourier, frac_laplacian_pv, frac_perimeter, log_lattice,
    perimeter_via_extension, riesz_convolution_bound_check, IndicatorGenerator, IndicatorSet,
};
use crate::grid::{convolve, lp_norm, spectral_multiply, GridFunction, GridSpec, TLadder};
use crate::kernel::{poisson_kernel, KernelParams};
use crate::measure::{Atom, DiscreteMeasure};
use crate::wolff::{maximal_comparison_check, wolff_energy_check, wolff_potential, wolff_potential_exact, RadiusGrid};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Quick,
    Full,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "quick" => Ok(Profile::Quick),
            "full" => Ok(Profile::Full),
            other => Err(invalid("profile", format!("unknown profile {other:?} (quick|full)"))),
        }
    }

    fn dims(self) -> &'static [usize] {
        match self {
            Profile::Quick => &[1],
            Profile::Full => &[1, 2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Outcome {
    pub id: usize,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const CRITERIA: [&str; 16] = [
    "kernel normalization",
    "alpha = 1 semigroup",
    "dirichlet-to-neumann",
    "energy identity",
    "capacity duality",
    "equilibrium identities",
    "ball scaling and bounds",
    "capacitary strong type",
    "wolff and maximal comparisons",
    "wolff quadrature",
    "coarea",
    "perimeter homogeneity",
    "fractional laplacian routes",
    "riesz convolution bound",
    "embedding consistency",
    "fractional capacity ball law",
];

/// Runs check `id` (1-based). Errors inside a check are reported as a failed
/// outcome carrying the message.
pub fn run(id: usize, profile: Profile) -> Result<Outcome> {
    let name = CRITERIA
        .get(id.wrapping_sub(1))
        .ok_or_else(|| invalid("id", format!("criteria are numbered 1..={}", CRITERIA.len())))?;
    let start = Instant::now();
    let res = match id {
        1 => kernel_normalization(profile),
        2 => semigroup(profile),
        3 => dtn(profile),
        4 => energy(profile),
        5 => duality(profile),
        6 => equilibrium(profile),
        7 => ball_scaling(profile),
        8 => strong_type(profile),
        9 => comparisons(profile),
        10 => wolff_quadrature(profile),
        11 => coarea(profile),
        12 => perimeter(profile),
        13 => laplacian_routes(profile),
        14 => riesz_bound(profile),
        15 => embedding_consistency(profile),
        _ => frac_ball_law(profile),
    };
    let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
    Ok(Outcome {
        id,
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_all(profile: Profile) -> Vec<Outcome> {
    (1..=CRITERIA.len()).map(|id| run(id, profile).expect("id in range")).collect()
}

type Check = Result<(bool, String)>;

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn gaussian(spec: GridSpec, scale: f64, center: f64) -> GridFunction {
    GridFunction::from_fn(spec, |x| {
        let r2 = (x[0] - center).powi(2) + x[1..].iter().map(|v| v * v).sum::<f64>();
        (-r2 * scale * scale).exp()
    })
}

fn bump(spec: GridSpec, center: f64, width: f64, height: f64) -> GridFunction {
    GridFunction::from_fn(spec, |x| {
        let r2 = ((x[0] - center).powi(2) + x[1..].iter().map(|v| v * v).sum::<f64>()) / (width * width);
        if r2 < 1.0 {
            height * (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    })
}

fn kernel_normalization(_: Profile) -> Check {
    let mut worst = 0.0f64;
    let half = 8.0;
    for n in [1, 2] {
        let m = if n == 1 { 8192 } else { 1024 };
        let h = 2.0 * half / m as f64;
        let centres: Vec<f64> = (0..m).map(|i| -half + (i as f64 + 0.5) * h).collect();
        for alpha in [0.5, 1.0, 1.5] {
            let params = KernelParams::new(n, alpha)?;
            for t in [0.5, 1.0, 2.0] {
                let inner = if n == 1 {
                    centres.iter().map(|&x| poisson_kernel(&params, &[x], t)).sum::<Result<f64>>()? * h
                } else {
                    let mut s = 0.0;
                    for &x in &centres {
                        for &y in &centres {
                            s += poisson_kernel(&params, &[x, y], t)?;
                        }
                    }
                    s * h * h
                };
                let total = inner + params.mass_outside_cube(half, t);
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    Ok((worst <= 1e-3, format!("max |mass - 1| = {worst:.2e}")))
}

/// Relative L¹ distance between `p_t * p_s` and `p_{t+s}` on the central half
/// of the window, where truncating the tails of the factors is negligible.
fn semigroup_defect(alpha: f64) -> Result<f64> {
    let spec = GridSpec::new(1, 8.0, 256)?;
    let params = KernelParams::new(1, alpha)?;
    let (t, s) = (0.5, 0.5);
    let sample = |tt: f64| GridFunction::from_fn(spec, |x| poisson_kernel(&params, x, tt).unwrap_or(0.0));
    let conv = convolve(&sample(t), &sample(s))?;
    let want = sample(t + s);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..spec.len() {
        if spec.axis_coord(i).abs() <= spec.extent() / 2.0 {
            num += (conv.values()[i] - want.values()[i]).abs();
            den += want.values()[i].abs();
        }
    }
    Ok(num / den)
}

fn semigroup(_: Profile) -> Check {
    let cauchy = semigroup_defect(1.0)?;
    let control = semigroup_defect(0.5)?;
    Ok((
        cauchy <= 0.01 && control >= 0.05,
        format!("alpha 1: {cauchy:.2e}; alpha 0.5 control: {control:.3}"),
    ))
}

fn padded_spectral(f: &GridFunction, order: f64) -> Result<GridFunction> {
    let pad = if f.spec().dim() == 1 { 8 } else { 4 };
    let big = f.zero_padded(pad)?;
    spectral_multiply(&big, |xi| (2.0 * PI * xi).powf(order)).cropped(f.spec())
}

fn dtn(_: Profile) -> Check {
    let spec = GridSpec::new(1, 8.0, 256)?;
    let f = gaussian(spec, 1.0, 0.0);
    let mut errs = vec![];
    for alpha in [0.5, 1.0, 1.5] {
        let d = dirichlet_to_neumann(&f, &KernelParams::new(1, alpha)?)?;
        errs.push(rel_l2(d.values.values(), padded_spectral(&f, alpha)?.values()));
    }
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Ok((worst <= 0.05, format!("relative L2 errors {errs:.4?}")))
}

fn energy(profile: Profile) -> Check {
    let mut ok = true;
    let mut detail = String::new();
    for &n in profile.dims() {
        let spec = if n == 1 { GridSpec::new(1, 8.0, 256)? } else { GridSpec::new(2, 6.0, 64)? };
        let fs = [
            gaussian(spec, 0.7, 0.0),
            gaussian(spec, 1.2, 0.0),
            GridFunction::new(
                spec,
                gaussian(spec, 1.5, -0.8)
                    .values()
                    .iter()
                    .zip(gaussian(spec, 1.0, 1.0).values())
                    .map(|(a, b)| a + 0.5 * b)
                    .collect(),
            )?,
        ];
        for alpha in [0.5, 1.0, 1.5] {
            let params = KernelParams::new(n, alpha)?;
            let ratios: Vec<f64> = fs
                .iter()
                .map(|f| {
                    energy_identity(f, &params)?
                        .ratio
                        .ok_or_else(|| invalid("f", "zero test function"))
                })
                .collect::<Result<_>>()?;
            let mean = ratios.iter().sum::<f64>() / 3.0;
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 3.0;
            let cv = var.sqrt() / mean;
            ok &= cv <= 0.05;
            let _ = write!(detail, "n{n} a{alpha}: D {mean:.4} cv {cv:.1e}; ");
        }
    }
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

fn capacity_setup() -> Result<(GridSpec, TLadder, KernelParams)> {
    Ok((
        GridSpec::new(1, 4.0, 64)?,
        dyadic_ladder(0.0625, 8.0, 8)?,
        KernelParams::new(1, 1.0)?,
    ))
}

fn duality(_: Profile) -> Check {
    let (spec, ladder, params) = capacity_setup()?;
    let j = ladder
        .slice_index(1.0)
        .ok_or_else(|| invalid("ladder", "no slice at t = 1"))?;
    let node = CompactSetGrid::from_nodes(spec, ladder.clone(), vec![(spec.origin(), j)])?;
    let b = CompactSetGrid::box_set(spec, ladder.clone(), 1.0, [0.0; 2], 0.0)?;
    let other = CompactSetGrid::box_set(spec, ladder.clone(), 0.5, [1.5, 0.0], 0.5)?;
    let union = CompactSetGrid::union(&[b.clone(), other])?;
    let cfg = SolverConfig::default();
    let (mut worst_gap, mut worst_time) = (0.0f64, 0.0f64);
    for set in [&node, &b, &union] {
        for p in [1.5, 2.0, 3.0] {
            let t = Instant::now();
            let r = capacity(set, p, &params, &cfg)?;
            worst_time = worst_time.max(t.elapsed().as_secs_f64());
            worst_gap = worst_gap.max(r.rel_gap);
            if r.dual_value > r.primal_value * (1.0 + 1e-9) {
                return Ok((false, format!("dual {} above primal {} at p {p}", r.dual_value, r.primal_value)));
            }
        }
    }
    Ok((
        worst_gap <= 0.1 && worst_time < 60.0,
        format!("max rel_gap {worst_gap:.2e}, slowest solve {worst_time:.2} s"),
    ))
}

fn equilibrium(_: Profile) -> Check {
    let (spec, ladder, params) = capacity_setup()?;
    let b = CompactSetGrid::box_set(spec, ladder, 1.0, [0.0; 2], 0.0)?;
    let r = capacity(&b, 2.0, &params, &SolverConfig::default())?;
    let eq = equilibrium_check(&b, &r, &params)?;
    Ok((
        eq.pass,
        format!(
            "mass {:.4} energy {:.4} mutual {:.4}; max deviation {:.2e} (tolerance {:.3})",
            eq.mass, eq.energy, eq.mutual, eq.max_deviation, eq.tolerance
        ),
    ))
}

fn ball_scaling(_: Profile) -> Check {
    let spec = GridSpec::new(1, 8.0, 128)?;
    let ladder = dyadic_ladder(0.0625, 16.0, 8)?;
    let params = KernelParams::new(1, 1.0)?;
    let cfg = SolverConfig::default();
    let scaling = ball_scaling_check(spec, &ladder, 2.0, &params, &[0.5, 1.0, 2.0], &cfg)?;
    let sweep: Vec<(f64, f64)> = [0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&r| [0.25, 0.5, 1.0].iter().map(move |&t| (r, t)))
        .collect();
    let bounds = ball_bounds_check(spec, &ladder, 2.0, &params, &sweep, &cfg)?;
    Ok((
        scaling.pass && bounds.pass,
        format!(
            "C/r spread {:.3}; lower {:.3} upper {:.3} doubling factor {:.3}",
            scaling.spread, bounds.lower_constant, bounds.upper_constant, bounds.doubling_factor
        ),
    ))
}

fn strong_type(_: Profile) -> Check {
    let (spec, _, params) = capacity_setup()?;
    let ladder = dyadic_ladder(spec.spacing(), 16.0, 2)?;
    let cfg = SolverConfig::default();
    let bumps = [(0.0, 1.0, 1.0), (0.5, 1.5, 2.0), (-1.0, 0.75, 1.0), (0.0, 2.0, 0.5), (1.0, 0.5, 3.0)];
    let mut ok = true;
    let mut changes = vec![];
    for (c, w, a) in bumps {
        let f = bump(spec, c, w, a);
        let coarse = strong_type_check(&f, 2.0, &params, &ladder, 1, &cfg)?.ratio;
        let fine = strong_type_check(&f, 2.0, &params, &ladder, 2, &cfg)?.ratio;
        match (coarse, fine) {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => {
                let change = (b / a - 1.0).abs();
                ok &= change < 0.25;
                changes.push(change);
            }
            _ => ok = false,
        }
    }
    Ok((ok, format!("relative change under refinement {changes:.3?}")))
}

fn comparisons(profile: Profile) -> Check {
    let mut ok = true;
    let mut detail = String::new();
    for &n in profile.dims() {
        let grid = if n == 1 { GridSpec::new(1, 16.0, 256)? } else { GridSpec::new(2, 8.0, 64)? };
        let fine = grid.refined()?;
        let clouds: Vec<DiscreteMeasure> = (0..20)
            .map(|seed| {
                if n == 1 {
                    DiscreteMeasure::random_separated_cloud(1, 40, 2.0, 1.0, 4.0, 0.25, seed)
                } else {
                    DiscreteMeasure::random_separated_cloud(2, 120, 1.0, 1.0, 3.0, 0.2, seed)
                }
            })
            .collect::<Result<_>>()?;
        for alpha in [0.5, 1.0, 1.5] {
            let params = KernelParams::new(n, alpha)?;
            for p in [1.5, 2.0, 3.0] {
                let (mut m, mut e, mut shift) = (vec![], vec![], 0.0f64);
                for mu in &clouds {
                    let m1 = maximal_comparison_check(mu, p, &grid, &params)?.ratio;
                    let m2 = maximal_comparison_check(mu, p, &fine, &params)?.ratio;
                    let e1 = wolff_energy_check(mu, p, &grid, &params)?.ratio;
                    let e2 = wolff_energy_check(mu, p, &fine, &params)?.ratio;
                    shift = shift.max((m2 / m1 - 1.0).abs()).max((e2 / e1 - 1.0).abs());
                    m.push(m1);
                    e.push(e1);
                }
                let (sm, se) = (spread(&m), spread(&e));
                ok &= sm.is_finite() && se.is_finite() && sm <= 10.0 && se <= 10.0 && shift < 0.25;
                let _ = write!(detail, "n{n} a{alpha} p{p}: x{sm:.2}/x{se:.2} shift {shift:.3}; ");
            }
        }
    }
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

fn wolff_quadrature(profile: Profile) -> Check {
    let mut worst = 0.0f64;
    for &n in profile.dims() {
        for seed in 0..5 {
            let mu = if n == 1 {
                DiscreteMeasure::random_cloud(1, 100, 2.0, 1.0, 4.0, 100 + seed)?
            } else {
                DiscreteMeasure::random_cloud(2, 100, 1.0, 1.0, 3.0, 100 + seed)?
            };
            let rg = RadiusGrid::for_measure(&mu, 1024)?;
            for p in [1.5, 2.0, 3.0] {
                let (mut exact, mut quad) = (0.0, 0.0);
                for a in mu.atoms() {
                    exact += a.w * wolff_potential_exact(&mu, &a.x[..n], a.t, p)?;
                    quad += a.w * wolff_potential(&mu, &a.x[..n], a.t, p, &rg)?;
                }
                worst = worst.max((quad - exact).abs() / exact);
            }
        }
    }
    Ok((worst <= 0.01, format!("max relative error {worst:.2e} with 1024 radii")))
}

fn interval(spec: GridSpec, a: f64, b: f64) -> Result<IndicatorSet> {
    IndicatorSet::from_generator(spec, IndicatorGenerator::Interval { a, b })
}

fn coarea(_: Profile) -> Check {
    let spec = GridSpec::new(1, 4.0, 128)?;
    let parts = [
        (interval(spec, -2.0, 2.0)?, 1.0),
        (interval(spec, -1.0, 0.5)?, 2.0),
        (interval(spec, 1.0, 1.5)?, 0.5),
    ];
    let f = GridFunction::new(
        spec,
        (0..spec.len())
            .map(|i| parts.iter().map(|(e, c)| if e.membership()[i] { *c } else { 0.0 }).sum())
            .collect(),
    )?;
    let mut ratios = vec![];
    for s in [0.25, 0.5, 0.75] {
        ratios.push(coarea_check(&f, s, None)?.ratio);
    }
    let ok = ratios.iter().all(|r| (r - 1.0).abs() <= 0.05);
    Ok((ok, format!("ratios {ratios:.4?}")))
}

fn perimeter(_: Profile) -> Check {
    let spec = GridSpec::new(1, 4.0, 128)?;
    let mut worst = 0.0f64;
    for s in [0.25, 0.5, 0.75] {
        let unit = frac_perimeter(&interval(spec, 0.0, 1.0)?, s)?;
        for a in [0.5f64, 2.0] {
            let per = frac_perimeter(&interval(spec, 0.0, a)?, s)?;
            worst = worst.max((per / unit / a.powf(1.0 - s) - 1.0).abs());
        }
    }
    let wide = GridSpec::new(1, 8.0, 512)?;
    let ext = perimeter_via_extension(&interval(wide, 0.0, 1.0)?, 0.5, 48)?;
    let ratio = ext.ratio.unwrap_or(f64::NAN);
    Ok((
        worst <= 0.02 && (ratio - 1.0).abs() <= 0.1,
        format!("homogeneity deviation {worst:.2e}; extension/direct {ratio:.4}"),
    ))
}

fn laplacian_routes(profile: Profile) -> Check {
    let mut ok = true;
    let mut detail = String::new();
    for &n in profile.dims() {
        let spec = if n == 1 { GridSpec::new(1, 6.0, 256)? } else { GridSpec::new(2, 4.0, 64)? };
        let f = bump(spec, 0.0, 3.0, 1.0);
        for s in [0.5, 1.0, 1.5] {
            let pad = if n == 1 { 8 } else { 4 };
            let fourier = frac_laplacian_fourier(&f.zero_padded(pad)?, s)?.values.cropped(&spec)?;
            let pv = frac_laplacian_pv(&f, s)?;
            let diff = GridFunction::new(
                spec,
                fourier.values().iter().zip(pv.values()).map(|(a, b)| a - b).collect(),
            )?;
            let gap = lp_norm(&diff, 2.0)? / lp_norm(&fourier, 2.0)?;
            ok &= gap <= 0.02;
            let _ = write!(detail, "n{n} s{s}: {gap:.2e}; ");
        }
    }
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

fn riesz_bound(profile: Profile) -> Check {
    let xs = log_lattice(0.01, 100.0, 8);
    let mut cases = vec![(1, 1.0, 0.5), (1, 0.5, 0.3), (1, 1.5, 0.7)];
    if profile == Profile::Full {
        cases.extend([(2, 1.0, 0.5), (2, 1.5, 1.2)]);
    }
    let mut ok = true;
    let mut detail = String::new();
    for (n, alpha, beta) in cases {
        let r = riesz_convolution_bound_check(&KernelParams::new(n, alpha)?, beta, &xs, &xs)?;
        ok &= r.sup_ratio.is_finite() && r.inf_ratio > 0.0 && r.scale_error < 1e-6;
        let _ = write!(detail, "n{n} a{alpha} b{beta}: sup {:.3} scale error {:.1e}; ", r.sup_ratio, r.scale_error);
    }
    Ok((ok, detail.trim_end_matches("; ").to_string()))
}

/// Six separated clouds of equal atoms whose heights halve from one to the next.
pub fn ranking_measures() -> Result<Vec<DiscreteMeasure>> {
    (0..6u64)
        .map(|k| {
            let tau = 0.32 * (-(k as f64)).exp2();
            let c = DiscreteMeasure::random_separated_cloud(1, 6, 1.5, tau, 1.25 * tau, 0.3, 100 + k)?;
            let mu = DiscreteMeasure::new(1, c.atoms().iter().map(|a| Atom { w: 1.0, ..*a }).collect())?;
            Ok(mu.scaled(1.0 / mu.total_mass()))
        })
        .collect()
}

fn embedding_consistency(_: Profile) -> Check {
    let params = KernelParams::new(1, 1.0)?;
    let table = BoxCapacityTable::compute(&params, 2.0, &BoxCapacityTable::default_ratios(), &SolverConfig::default())?;
    let spec = GridSpec::new(1, 3.0, 1536)?;
    let family = TestFamily {
        random: 32,
        seed: 7,
        scales_per_octave: 2,
    };
    let measures = ranking_measures()?;
    let (mut ball, mut empirical) = (vec![], vec![]);
    for mu in &measures {
        let reports = check_lp_embedding(mu, 2.0, 2.0, &table, None)?;
        let r = reports
            .iter()
            .find(|r| r.id == "box-t0-le-r")
            .ok_or_else(|| invalid("reports", "missing ball criterion"))?;
        ball.push(r.value);
        empirical.push(empirical_embedding_ratio(mu, 2.0, 2.0, TestSpace::Lebesgue, &params, &spec, &family)?.sup);
    }
    let rho = spearman(&ball, &empirical)?;

    let grid = GridSpec::new(1, 3.0, 384)?;
    let f = GridFunction::from_fn(grid, |x| {
        (-(x[0] - 0.3).powi(2) * 3.0).exp() - 0.5 * (-(x[0] + 1.0).powi(2) * 8.0).exp()
    });
    let u = extend(&f, &TLadder::for_grid(&grid, 16)?, &params)?.field;
    let (mut checked, mut violations) = (0, 0);
    let mut masses = true;
    for mu in &measures {
        for s in [0.05, 0.1, 0.2, 0.4] {
            for k in [1.0, 2.0] {
                let r = level_set_containment_check(&u, mu, s, k)?;
                checked += r.checked;
                violations += r.violations;
                masses &= r.holds;
            }
        }
    }
    Ok((
        rho == 1.0 && violations == 0 && masses,
        format!("spearman {rho:.3}; containment {violations} violations over {checked} nodes"),
    ))
}

fn frac_ball_law(_: Profile) -> Check {
    let spec = GridSpec::new(1, 8.0, 512)?;
    let beta = 0.5;
    let mut scaled = vec![];
    for r in [0.5f64, 1.0, 2.0] {
        let o = IndicatorSet::ball(spec, [0.0, 0.0], r)?;
        scaled.push(frac_capacity(&o, beta, 1.0, &SolverConfig::default())?.value / r.powf(1.0 - beta));
    }
    let sp = spread(&scaled);
    Ok((sp <= 1.1, format!("Cap/r^(1-beta) {scaled:.4?}, spread {sp:.4}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_and_ids() {
        assert_eq!(Profile::parse("quick").unwrap(), Profile::Quick);
        assert_eq!(Profile::parse("full").unwrap(), Profile::Full);
        assert!(Profile::parse("fast").is_err());
        assert!(run(0, Profile::Quick).is_err());
        assert!(run(17, Profile::Quick).is_err());
    }

    #[test]
    fn cheap_checks_pass() {
        for id in [2, 3, 11, 13] {
            let o = run(id, Profile::Quick).unwrap();
            assert!(o.passed, "{o:?}");
            assert_eq!(o.name, CRITERIA[id - 1]);
        }
    }

    #[test]
    fn ranking_measures_are_normalized_and_seeded() {
        let a = ranking_measures().unwrap();
        let b = ranking_measures().unwrap();
        assert_eq!(a.len(), 6);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.total_mass() - 1.0).abs() < 1e-12);
            assert_eq!(x.atoms(), y.atoms());
        }
    }
}

//! The `L^p`-capacity of compact subsets of the upper half-space, its dual
//! formulation over measures, and the capacity properties built on both.
//!
//! A compact set is a finite set of half-space nodes `(x_i, t_j)`. The
//! constraint `P_α f ≥ 1` is imposed at these nodes through the same cell masses
//! the extension uses, so `(A f)_r = P_α f(x_r, t_r)` exactly on the grid.

use crate::error::{invalid, CapaxError, Result};
use crate::extension::extend;
use crate::grid::{lp_norm_pow, GridFunction, GridSpec, TLadder};
use crate::kernel::{poisson_cell_masses, KernelParams};
use crate::measure::{Atom, DiscreteMeasure};
use crate::special::{neumaier_sum, pairwise_sum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Smallest and largest exponents accepted by the solvers.
pub const P_RANGE: (f64, f64) = (1.05, 16.0);

/// How a compact set was described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SetGenerator {
    Empty,
    /// `B_{r0}(x0, t0) = {|x - x0| < r0/2, r0 < t - t0 < 2 r0}`.
    Box { r0: f64, x0: [f64; 2], t0: f64 },
    Union { parts: Vec<SetGenerator> },
    List,
}

/// A finite set of half-space nodes `(node, slice)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSetGrid {
    spec: GridSpec,
    ladder: TLadder,
    nodes: Vec<(usize, usize)>,
    generator: SetGenerator,
}

/// Geometric ladder `2^{j/K}` aligned with powers of two, covering `[t_lo, t_hi]`.
///
/// Dyadic alignment keeps boxes `r < t - t0 < 2r` with dyadic `r` and `t0`
/// sampled identically across scales.
pub fn dyadic_ladder(t_lo: f64, t_hi: f64, per_octave: usize) -> Result<TLadder> {
    if !(t_lo > 0.0 && t_hi > t_lo) || per_octave == 0 {
        return Err(invalid("ladder", "need 0 < t_lo < t_hi and at least one slice per octave"));
    }
    let k = per_octave as f64;
    let j0 = (t_lo.log2() * k).floor() as i64;
    let j1 = (t_hi.log2() * k).ceil() as i64;
    TLadder::from_slices((j0..=j1).map(|j| (j as f64 / k).exp2()).collect())
}

impl CompactSetGrid {
    pub fn empty(spec: GridSpec, ladder: TLadder) -> Self {
        Self {
            spec,
            ladder,
            nodes: vec![],
            generator: SetGenerator::Empty,
        }
    }

    /// Explicit node list; duplicates are removed.
    pub fn from_nodes(spec: GridSpec, ladder: TLadder, mut nodes: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(bad) = nodes.iter().find(|(i, j)| *i >= spec.len() || *j >= ladder.len()) {
            return Err(invalid("nodes", format!("{bad:?} lies outside the grid")));
        }
        nodes.sort_unstable();
        nodes.dedup();
        Ok(Self {
            spec,
            ladder,
            nodes,
            generator: SetGenerator::List,
        })
    }

    pub fn from_generator(spec: GridSpec, ladder: TLadder, generator: SetGenerator) -> Result<Self> {
        let mut nodes = vec![];
        collect_nodes(&spec, &ladder, &generator, &mut nodes)?;
        nodes.sort_unstable();
        nodes.dedup();
        Ok(Self {
            spec,
            ladder,
            nodes,
            generator,
        })
    }

    /// Grid nodes of the box `B_{r0}(x0, t0)`.
    pub fn box_set(spec: GridSpec, ladder: TLadder, r0: f64, x0: [f64; 2], t0: f64) -> Result<Self> {
        Self::from_generator(spec, ladder, SetGenerator::Box { r0, x0, t0 })
    }

    /// Union of sets on the same grid and ladder.
    pub fn union(parts: &[CompactSetGrid]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| invalid("parts", "empty union"))?;
        let mut nodes = vec![];
        for p in parts {
            if !p.spec.same_as(&first.spec) || p.ladder != first.ladder {
                return Err(CapaxError::GridMismatch("union of sets on different grids".into()));
            }
            nodes.extend_from_slice(&p.nodes);
        }
        nodes.sort_unstable();
        nodes.dedup();
        Ok(Self {
            spec: first.spec,
            ladder: first.ladder.clone(),
            nodes,
            generator: SetGenerator::Union {
                parts: parts.iter().map(|p| p.generator.clone()).collect(),
            },
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn ladder(&self) -> &TLadder {
        &self.ladder
    }
    pub fn nodes(&self) -> &[(usize, usize)] {
        &self.nodes
    }
    pub fn generator(&self) -> &SetGenerator {
        &self.generator
    }
    pub fn len(&self) -> usize {
        self.nodes.len()
    }
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(x, t)` of every node.
    pub fn points(&self) -> Vec<([f64; 2], f64)> {
        self.nodes
            .iter()
            .map(|&(i, j)| (self.spec.coords(i), self.ladder.slices()[j]))
            .collect()
    }

    pub fn contains(&self, node: usize, slice: usize) -> bool {
        self.nodes.binary_search(&(node, slice)).is_ok()
    }

    pub fn is_subset_of(&self, other: &CompactSetGrid) -> bool {
        self.nodes.iter().all(|&(i, j)| other.contains(i, j))
    }

    /// Horizontal translation by whole cells; fails if a node leaves the grid.
    pub fn translated(&self, cells: [i64; 2]) -> Result<Self> {
        let m = self.spec.points() as i64;
        let nodes = self
            .nodes
            .iter()
            .map(|&(i, j)| {
                let mi = self.spec.multi_index(i);
                let a = mi[0] as i64 + cells[0];
                let b = if self.spec.dim() == 2 { mi[1] as i64 + cells[1] } else { 0 };
                if (0..m).contains(&a) && (0..m).contains(&b) {
                    Ok((self.spec.flat_index([a as usize, b as usize]), j))
                } else {
                    Err(invalid("shift", "translated set leaves the grid"))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_nodes(self.spec, self.ladder.clone(), nodes)
    }

    /// The set together with its neighbours one cell and one slice away.
    pub fn dilated(&self) -> Self {
        let m = self.spec.points() as i64;
        let k = self.ladder.len() as i64;
        let mut nodes = vec![];
        for &(i, j) in &self.nodes {
            let mi = self.spec.multi_index(i);
            let span1 = if self.spec.dim() == 2 { -1..=1 } else { 0..=0 };
            for da in -1..=1i64 {
                for db in span1.clone() {
                    for dj in -1..=1i64 {
                        let (a, b, s) = (mi[0] as i64 + da, mi[1] as i64 + db, j as i64 + dj);
                        if (0..m).contains(&a) && (0..m).contains(&b) && (0..k).contains(&s) {
                            nodes.push((self.spec.flat_index([a as usize, b as usize]), s as usize));
                        }
                    }
                }
            }
        }
        nodes.sort_unstable();
        nodes.dedup();
        Self {
            spec: self.spec,
            ladder: self.ladder.clone(),
            nodes,
            generator: SetGenerator::List,
        }
    }
}

fn collect_nodes(spec: &GridSpec, ladder: &TLadder, g: &SetGenerator, out: &mut Vec<(usize, usize)>) -> Result<()> {
    match g {
        SetGenerator::Empty | SetGenerator::List => Ok(()),
        SetGenerator::Union { parts } => parts.iter().try_for_each(|p| collect_nodes(spec, ladder, p, out)),
        SetGenerator::Box { r0, x0, t0 } => {
            if !(*r0 > 0.0) || !(*t0 >= 0.0) {
                return Err(invalid("box", format!("need r0 > 0 and t0 ≥ 0, got r0={r0}, t0={t0}")));
            }
            let n = spec.dim();
            for i in 0..spec.len() {
                let x = spec.coords(i);
                let d2: f64 = (0..n).map(|a| (x[a] - x0[a]).powi(2)).sum();
                if d2.sqrt() >= 0.5 * r0 {
                    continue;
                }
                for (j, &t) in ladder.slices().iter().enumerate() {
                    let s = t - t0;
                    if s > *r0 && s < 2.0 * r0 {
                        out.push((i, j));
                    }
                }
            }
            Ok(())
        }
    }
}

/// Solver settings shared by the primal and dual programs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative change of the certified value over a window that counts as converged.
    pub tolerance: f64,
    /// Soft-minimum exponents of the primal penalty, annealed by doubling.
    pub tau_start: f64,
    pub tau_end: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 6000,
            tolerance: 1e-5,
            tau_start: 8.0,
            tau_end: 256.0,
        }
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p >= P_RANGE.0 && p <= P_RANGE.1) {
        return Err(invalid("p", format!("{p} outside [{}, {}]", P_RANGE.0, P_RANGE.1)));
    }
    Ok(())
}

/// Dense constraint matrix `A[r, i] = ∫_{cell i} p^α_{t_r}(x_r - y) dy`.
pub(crate) struct ConstraintMatrix {
    rows: usize,
    cols: usize,
    a: Vec<f64>,
    vol: f64,
}

impl ConstraintMatrix {
    pub(crate) fn new(set: &CompactSetGrid, params: &KernelParams) -> Result<Self> {
        let spec = set.spec;
        if params.dim() != spec.dim() {
            return Err(CapaxError::GridMismatch("kernel and grid dimensions differ".into()));
        }
        let m = spec.points();
        let side = 2 * m - 1;
        let mut slices: Vec<usize> = set.nodes.iter().map(|&(_, j)| j).collect();
        slices.sort_unstable();
        slices.dedup();
        let tables: Vec<(usize, Vec<f64>)> = slices
            .par_iter()
            .map(|&j| (j, poisson_cell_masses(params, set.ladder.slices()[j], spec.spacing(), m)))
            .collect();
        let cols = spec.len();
        let rows = set.nodes.len();
        let mut a = vec![0.0; rows * cols];
        a.par_chunks_mut(cols.max(1)).zip(&set.nodes).for_each(|(row, &(node, j))| {
            let table = &tables.iter().find(|(s, _)| *s == j).expect("table for every slice").1;
            let r = spec.multi_index(node);
            for (i, v) in row.iter_mut().enumerate() {
                let c = spec.multi_index(i);
                let d0 = (r[0] + m - 1 - c[0]) as usize;
                *v = match spec.dim() {
                    1 => table[d0],
                    _ => table[d0 * side + (r[1] + m - 1 - c[1])],
                };
            }
        });
        Ok(Self {
            rows,
            cols,
            a,
            vol: spec.cell_volume(),
        })
    }

    /// A matrix given row-major, acting on functions with cell volume `vol`.
    pub(crate) fn from_dense(rows: usize, cols: usize, a: Vec<f64>, vol: f64) -> Self {
        debug_assert_eq!(a.len(), rows * cols);
        Self { rows, cols, a, vol }
    }

    /// `(A f)_r`.
    pub(crate) fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.a
            .par_chunks(self.cols)
            .map(|row| pairwise_sum(&row.iter().zip(f).map(|(a, b)| a * b).collect::<Vec<_>>()))
            .collect()
    }

    /// Discrete adjoint `g_i = Σ_r w_r A[r, i] / hⁿ`, so that `Σ_r w_r (Af)_r = Σ_i f_i g_i hⁿ`.
    pub(crate) fn adjoint(&self, w: &[f64]) -> Vec<f64> {
        let inv = 1.0 / self.vol;
        (0..self.cols)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for r in 0..self.rows {
                    acc += w[r] * self.a[r * self.cols + i];
                }
                acc * inv
            })
            .collect()
    }
}

/// Primal side: a feasible `f` and its value `‖f‖_p^p` (an upper bound).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrimalSolution {
    pub value: f64,
    pub minimizer: GridFunction,
    pub iterations: usize,
    pub converged: bool,
}

/// Dual side: a feasible measure with `‖P*_α μ‖_{p'} = 1` and value `μ(E)^p` (a lower bound).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualSolution {
    pub value: f64,
    pub maximizer: DiscreteMeasure,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityResult {
    pub primal_value: f64,
    pub dual_value: f64,
    /// `(primal - dual) / primal`, zero for the empty set.
    pub rel_gap: f64,
    pub minimizer: GridFunction,
    pub maximizer: DiscreteMeasure,
    pub p: f64,
    pub iterations: usize,
    pub tolerance: f64,
    pub converged: bool,
}

impl CapacityResult {
    /// A two-sided estimate: the geometric mean of the certified bounds.
    pub fn estimate(&self) -> f64 {
        (self.primal_value * self.dual_value).sqrt()
    }
}

fn lp_pow(values: &[f64], p: f64, vol: f64) -> f64 {
    neumaier_sum(values.iter().map(|v| v.abs().powf(p))) * vol
}

/// Rescales `f ≥ 0` to be feasible and returns `(value, f / min_E(Af))`.
fn feasible_value(a: &ConstraintMatrix, f: &[f64], p: f64) -> Option<(f64, Vec<f64>)> {
    let v = a.apply(f);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(lo > 0.0 && lo.is_finite()) {
        return None;
    }
    let g: Vec<f64> = f.iter().map(|x| x / lo).collect();
    Some((lp_pow(&g, p, a.vol), g))
}

/// Upper bound for `C(E)`: projected gradient on the smoothed ratio
/// `‖f‖_p^p / m_τ(Af)^p` with `m_τ(v) = (Σ v_r^{-τ})^{-1/τ} ≤ min v`, then exact rescaling.
pub fn capacity_primal(
    set: &CompactSetGrid,
    p: f64,
    params: &KernelParams,
    cfg: &SolverConfig,
) -> Result<PrimalSolution> {
    check_p(p)?;
    if set.is_empty() {
        return Ok(PrimalSolution {
            value: 0.0,
            minimizer: GridFunction::zeros(set.spec),
            iterations: 0,
            converged: true,
        });
    }
    let a = ConstraintMatrix::new(set, params)?;
    let start = a.adjoint(&vec![1.0; a.rows]);
    primal_from(&a, set, p, cfg, start)
}

fn primal_from(
    a: &ConstraintMatrix,
    set: &CompactSetGrid,
    p: f64,
    cfg: &SolverConfig,
    start: Vec<f64>,
) -> Result<PrimalSolution> {
    let core = primal_core(a, p, cfg, start)?;
    Ok(PrimalSolution {
        value: core.value,
        minimizer: GridFunction::new(set.spec, core.point)?,
        iterations: core.iterations,
        converged: core.converged,
    })
}

/// Solver output on the bare matrix: a value, its certificate vector, the
/// iteration count and whether the stopping rule fired.
pub(crate) struct CoreSolution {
    pub value: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn primal_core(a: &ConstraintMatrix, p: f64, cfg: &SolverConfig, start: Vec<f64>) -> Result<CoreSolution> {
    let (mut best, mut best_f) =
        feasible_value(a, &start, p).ok_or_else(|| invalid("start", "initial point is not strictly positive on E"))?;
    let mut f = best_f.clone();
    let mut iterations = 0;
    let mut tau = cfg.tau_start;
    let stages = ((cfg.tau_end / cfg.tau_start).log2().max(0.0).round() as usize) + 1;
    let per_stage = (cfg.max_iterations / stages).max(10);
    let mut converged = false;
    for _ in 0..stages {
        let (stage_iters, stage_conv) = spg_stage(a, p, tau, per_stage, cfg.tolerance, &mut f);
        iterations += stage_iters;
        if let Some((v, g)) = feasible_value(a, &f, p) {
            if v < best {
                best = v;
                best_f = g;
            }
        }
        converged = stage_conv;
        tau = (2.0 * tau).min(cfg.tau_end);
    }
    Ok(CoreSolution {
        value: best,
        point: best_f,
        iterations,
        converged,
    })
}

// smoothed objective and gradient at f (f ≥ 0)
fn smoothed(a: &ConstraintMatrix, f: &[f64], p: f64, tau: f64) -> Option<(f64, Vec<f64>)> {
    let v = a.apply(f);
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(vmin > 0.0) {
        return None;
    }
    let ratios: Vec<f64> = v.iter().map(|x| (vmin / x).powf(tau)).collect();
    let s = pairwise_sum(&ratios);
    let mt = vmin * s.powf(-1.0 / tau);
    let n = lp_pow(f, p, a.vol);
    let obj = n / mt.powf(p);
    // ∂m/∂v_r = (m/v_r)^{τ+1}
    let dm: Vec<f64> = v.iter().map(|x| (mt / x).powf(tau + 1.0)).collect();
    let back = a.adjoint(&dm);
    let grad = f
        .iter()
        .zip(&back)
        .map(|(fi, bi)| p * fi.powf(p - 1.0) * a.vol / mt.powf(p) - p * obj / mt * bi * a.vol)
        .collect();
    Some((obj, grad))
}

fn spg_stage(a: &ConstraintMatrix, p: f64, tau: f64, max_iter: usize, tol: f64, f: &mut Vec<f64>) -> (usize, bool) {
    let Some((mut obj, mut grad)) = smoothed(a, f, p, tau) else {
        return (0, false);
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut step = 1e-2 * norm(f) / norm(&grad).max(f64::MIN_POSITIVE);
    let mut history = vec![obj];
    for it in 0..max_iter {
        let reference = history.iter().rev().take(8).cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut accepted = None;
        let mut s = step;
        for _ in 0..40 {
            let trial: Vec<f64> = f.iter().zip(&grad).map(|(x, g)| (x - s * g).max(0.0)).collect();
            let decrease: f64 = trial.iter().zip(f.iter()).zip(&grad).map(|((t, x), g)| g * (t - x)).sum();
            if let Some((o, g)) = smoothed(a, &trial, p, tau) {
                if o <= reference + 1e-4 * decrease {
                    accepted = Some((trial, o, g));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((trial, o, g)) = accepted else {
            return (it, true);
        };
        // Barzilai–Borwein step for the next iteration
        let sk: Vec<f64> = trial.iter().zip(f.iter()).map(|(x, y)| x - y).collect();
        let yk: Vec<f64> = g.iter().zip(&grad).map(|(x, y)| x - y).collect();
        let sy: f64 = sk.iter().zip(&yk).map(|(x, y)| x * y).sum();
        let ss: f64 = sk.iter().map(|x| x * x).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-12 * s, 1e6 * s) } else { 2.0 * s };
        // the ratio is invariant under f → c f, so keep min(Af) near one;
        // gradients scale like 1/c and BB steps like c²
        let _ = (o, g);
        let scale = a.apply(&trial).iter().cloned().fold(f64::INFINITY, f64::min);
        *f = trial.iter().map(|x| x / scale).collect();
        let (o2, g2) = smoothed(a, f, p, tau).expect("rescaled iterate stays positive");
        grad = g2;
        step /= scale * scale;
        let change = (obj - o2).abs() / obj.abs().max(f64::MIN_POSITIVE);
        obj = o2;
        history.push(obj);
        if change < tol * 1e-2 && it > 20 {
            return (it + 1, true);
        }
    }
    (max_iter, false)
}

/// Lower bound for `C(E)`: exponentiated-gradient ascent on
/// `Φ(w) = Σ w - (1/p') ‖P*_α μ_w‖_{p'}^{p'}`, whose maximum is `C(E)/p`,
/// followed by normalization `‖P*_α μ‖_{p'} = 1`.
pub fn capacity_dual(set: &CompactSetGrid, p: f64, params: &KernelParams, cfg: &SolverConfig) -> Result<DualSolution> {
    check_p(p)?;
    if set.is_empty() {
        return Ok(DualSolution {
            value: 0.0,
            maximizer: DiscreteMeasure::empty(set.spec.dim()),
            iterations: 0,
            converged: true,
        });
    }
    let a = ConstraintMatrix::new(set, params)?;
    let (sol, _) = dual_solve(&a, set, p, cfg)?;
    Ok(sol)
}

struct DualState {
    w: Vec<f64>,
    phi: f64,
    f: Vec<f64>,
    v: Vec<f64>,
}

fn dual_eval(a: &ConstraintMatrix, w: Vec<f64>, q: f64) -> DualState {
    let g = a.adjoint(&w);
    let f: Vec<f64> = g.iter().map(|x| x.powf(q - 1.0)).collect();
    let energy = lp_pow(&g, q, a.vol);
    let phi = neumaier_sum(w.iter().cloned()) - energy / q;
    let v = a.apply(&f);
    DualState { w, phi, f, v }
}

/// Normalized dual value `(Σw / ‖g‖_{p'})^p` and the normalized weights.
fn dual_certificate(a: &ConstraintMatrix, w: &[f64], p: f64) -> (f64, Vec<f64>) {
    let q = p / (p - 1.0);
    let g = a.adjoint(w);
    let norm = lp_pow(&g, q, a.vol).powf(1.0 / q);
    if norm <= 0.0 {
        return (0.0, vec![0.0; w.len()]);
    }
    let wn: Vec<f64> = w.iter().map(|x| x / norm).collect();
    (neumaier_sum(wn.iter().cloned()).powf(p), wn)
}

fn dual_solve(a: &ConstraintMatrix, set: &CompactSetGrid, p: f64, cfg: &SolverConfig) -> Result<(DualSolution, Vec<f64>)> {
    let (core, potential) = dual_core(a, p, cfg);
    let atoms = set
        .points()
        .iter()
        .zip(&core.point)
        .map(|((x, t), w)| Atom { x: *x, t: *t, w: *w })
        .collect();
    Ok((
        DualSolution {
            value: core.value,
            maximizer: DiscreteMeasure::new(set.spec.dim(), atoms)?,
            iterations: core.iterations,
            converged: core.converged,
        },
        potential,
    ))
}

/// Dual ascent on the bare matrix. Returns the normalized weights and the
/// potential `(Aᵀw)^{p'-1}` of the best iterate, used to warm-start the primal.
pub(crate) fn dual_core(a: &ConstraintMatrix, p: f64, cfg: &SolverConfig) -> (CoreSolution, Vec<f64>) {
    let q = p / (p - 1.0);
    // optimal scaling of the uniform measure: s^{q-1} = Σv / ‖g_v‖_q^q
    let ones = vec![1.0; a.rows];
    let e1 = lp_pow(&a.adjoint(&ones), q, a.vol);
    let s = (a.rows as f64 / e1).powf(1.0 / (q - 1.0));
    let mut state = dual_eval(a, ones.iter().map(|x| x * s).collect(), q);
    let mut eta = 1.0;
    let mut best = dual_certificate(a, &state.w, p);
    let mut best_f = state.f.clone();
    let mut last_check = best.0;
    let mut converged = false;
    let mut iterations = 0;
    let window = 100;
    for it in 0..cfg.max_iterations {
        iterations = it + 1;
        let mut improved = false;
        for _ in 0..30 {
            let w_new: Vec<f64> = state
                .w
                .iter()
                .zip(&state.v)
                .map(|(w, v)| w * (eta * (1.0 - v)).clamp(-30.0, 30.0).exp())
                .collect();
            let cand = dual_eval(a, w_new, q);
            if cand.phi >= state.phi {
                state = cand;
                eta *= 1.2;
                improved = true;
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            converged = true;
            break;
        }
        if it % 10 == 0 {
            let cert = dual_certificate(a, &state.w, p);
            if cert.0 > best.0 {
                best = cert;
                best_f = state.f.clone();
            }
        }
        if (it + 1) % window == 0 {
            if (best.0 - last_check).abs() <= cfg.tolerance * best.0 {
                converged = true;
                break;
            }
            last_check = best.0;
        }
    }
    let cert = dual_certificate(a, &state.w, p);
    if cert.0 > best.0 {
        best = cert;
        best_f = state.f.clone();
    }
    (
        CoreSolution {
            value: best.0,
            point: best.1,
            iterations,
            converged,
        },
        best_f,
    )
}

/// Joint primal/dual solve with a certified gap.
///
/// The dual runs first; its potential `(P*_α μ)^{p'-1}` warm-starts the primal.
pub fn capacity(set: &CompactSetGrid, p: f64, params: &KernelParams, cfg: &SolverConfig) -> Result<CapacityResult> {
    check_p(p)?;
    if set.is_empty() {
        return Ok(CapacityResult {
            primal_value: 0.0,
            dual_value: 0.0,
            rel_gap: 0.0,
            minimizer: GridFunction::zeros(set.spec),
            maximizer: DiscreteMeasure::empty(set.spec.dim()),
            p,
            iterations: 0,
            tolerance: cfg.tolerance,
            converged: true,
        });
    }
    let a = ConstraintMatrix::new(set, params)?;
    let (dual, warm) = dual_solve(&a, set, p, cfg)?;
    let primal = primal_from(&a, set, p, cfg, warm)?;
    let rel_gap = ((primal.value - dual.value) / primal.value).max(0.0);
    Ok(CapacityResult {
        primal_value: primal.value,
        dual_value: dual.value,
        rel_gap,
        minimizer: primal.minimizer,
        maximizer: dual.maximizer,
        p,
        iterations: primal.iterations + dual.iterations,
        tolerance: cfg.tolerance,
        converged: primal.converged || dual.converged,
    })
}

/// The three quantities of the equilibrium identities and the pointwise residual.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// `μ_K(K)`.
    pub mass: f64,
    /// `∫ (P*_α μ_K)^{p'}`.
    pub energy: f64,
    /// `∫ P_α (P*_α μ_K)^{p'-1} dμ_K`.
    pub mutual: f64,
    pub capacity: f64,
    /// `‖f_K^p - (P*_α μ_K)^{p'}‖₁ / ‖f_K^p‖₁`.
    pub residual: f64,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub flagged: bool,
    pub pass: bool,
}

/// Checks the equilibrium identities on a joint result.
///
/// The dual maximizer is scaled by `C^{1/p'}` (with `C` the primal value).
/// Contract: pairwise relative deviations ≤ `3·rel_gap + 0.05` (relaxed to
/// `0.2` and flagged for `p < 1.2`).
pub fn equilibrium_check(
    set: &CompactSetGrid,
    result: &CapacityResult,
    params: &KernelParams,
) -> Result<EquilibriumReport> {
    if result.rel_gap > 0.1 {
        return Err(CapaxError::Unconverged(format!("rel_gap {} exceeds 0.1", result.rel_gap)));
    }
    let p = result.p;
    let q = p / (p - 1.0);
    let a = ConstraintMatrix::new(set, params)?;
    let cap = result.primal_value;
    let s = cap.powf(1.0 / q);
    let w: Vec<f64> = result.maximizer.atoms().iter().map(|at| s * at.w).collect();
    let g = a.adjoint(&w);
    let mass = neumaier_sum(w.iter().cloned());
    let energy = lp_pow(&g, q, a.vol);
    let pot: Vec<f64> = g.iter().map(|x| x.powf(q - 1.0)).collect();
    let mutual = neumaier_sum(a.apply(&pot).iter().zip(&w).map(|(v, w)| v * w));
    let fk = result.minimizer.values();
    let num = neumaier_sum(fk.iter().zip(&g).map(|(f, g)| (f.powf(p) - g.powf(q)).abs()));
    let den = neumaier_sum(fk.iter().map(|f| f.powf(p)));
    let residual = if den > 0.0 { num / den } else { 0.0 };
    let vals = [mass, energy, mutual, cap];
    let mut max_dev = 0.0f64;
    for i in 0..vals.len() {
        for j in i + 1..vals.len() {
            max_dev = max_dev.max((vals[i] - vals[j]).abs() / vals[i].max(vals[j]));
        }
    }
    let flagged = p < 1.2;
    let tolerance = if flagged { 0.2f64.max(3.0 * result.rel_gap + 0.05) } else { 3.0 * result.rel_gap + 0.05 };
    Ok(EquilibriumReport {
        mass,
        energy,
        mutual,
        capacity: cap,
        residual,
        max_deviation: max_dev,
        tolerance,
        flagged,
        pass: max_dev <= tolerance,
    })
}

/// One named inequality check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Monotonicity, subadditivity and translation invariance on seeded unions of boxes.
pub fn capacity_axioms_suite(
    spec: GridSpec,
    ladder: &TLadder,
    params: &KernelParams,
    p: f64,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = spec.spacing();
    let core = 0.25 * spec.extent();
    let boxes = |rng: &mut ChaCha8Rng| -> Result<CompactSetGrid> {
        let r0 = rng.random_range(0.5..1.0) * core;
        let mut x0 = [0.0; 2];
        for v in x0.iter_mut().take(spec.dim()) {
            *v = (rng.random_range(-core..core) / h).round() * h;
        }
        let t0 = rng.random_range(0.0..0.5) * core;
        CompactSetGrid::box_set(spec, ladder.clone(), r0, x0, t0)
    };
    let mut checks = vec![];
    let solve = |s: &CompactSetGrid| capacity(s, p, params, cfg);
    // monotonicity: E1 ⊂ E1 ∪ E2
    for _ in 0..2 {
        let e1 = boxes(&mut rng)?;
        let e2 = CompactSetGrid::union(&[e1.clone(), boxes(&mut rng)?])?;
        let (c1, c2) = (solve(&e1)?, solve(&e2)?);
        checks.push(PropertyCheck {
            name: "monotonicity".into(),
            lhs: c1.dual_value,
            rhs: c2.primal_value,
            pass: c1.dual_value <= c2.primal_value * 1.1,
        });
    }
    // subadditivity over 2-4 sets
    let count = rng.random_range(2..=4);
    let parts: Vec<CompactSetGrid> = (0..count).map(|_| boxes(&mut rng)).collect::<Result<_>>()?;
    let union = solve(&CompactSetGrid::union(&parts)?)?;
    let sum: f64 = parts.iter().map(|s| solve(s).map(|r| r.primal_value)).sum::<Result<f64>>()?;
    checks.push(PropertyCheck {
        name: "subadditivity".into(),
        lhs: union.dual_value,
        rhs: sum,
        pass: union.dual_value <= sum * 1.1,
    });
    // translation by 8 cells
    let base = CompactSetGrid::box_set(spec, ladder.clone(), core, [0.0; 2], 0.0)?;
    let shifted = base.translated([8, 0])?;
    let (c0, c1) = (solve(&base)?, solve(&shifted)?);
    let slack = 2.0 * c0.rel_gap.max(c1.rel_gap) + 0.02;
    checks.push(PropertyCheck {
        name: "translation".into(),
        lhs: c0.estimate(),
        rhs: c1.estimate(),
        pass: (c0.estimate() / c1.estimate() - 1.0).abs() <= slack.max(0.1),
    });
    Ok(checks)
}

/// `C(B_r(0,0)) / rⁿ` for each radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingReport {
    pub radii: Vec<f64>,
    pub normalized: Vec<f64>,
    pub gaps: Vec<f64>,
    /// max / min of the normalized values.
    pub spread: f64,
    pub pass: bool,
}

pub fn ball_scaling_check(
    spec: GridSpec,
    ladder: &TLadder,
    p: f64,
    params: &KernelParams,
    radii: &[f64],
    cfg: &SolverConfig,
) -> Result<ScalingReport> {
    let n = spec.dim() as i32;
    let mut normalized = vec![];
    let mut gaps = vec![];
    for &r in radii {
        if r / spec.spacing() < 4.0 {
            return Err(invalid("r", format!("radius {r} spans fewer than 4 cells")));
        }
        let set = CompactSetGrid::box_set(spec, ladder.clone(), r, [0.0; 2], 0.0)?;
        let c = capacity(&set, p, params, cfg)?;
        normalized.push(c.estimate() / r.powi(n));
        gaps.push(c.rel_gap);
    }
    let hi = normalized.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = normalized.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = hi / lo;
    Ok(ScalingReport {
        radii: radii.to_vec(),
        normalized,
        gaps,
        spread,
        pass: spread <= 1.25,
    })
}

/// One box of the bounds sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsEntry {
    pub r0: f64,
    pub t0: f64,
    pub capacity: f64,
    pub rel_gap: f64,
    /// `C / r0ⁿ`.
    pub lower_normalized: f64,
    /// `C r0^{n(p-1)} / (t0 + r0)^{pn}`.
    pub upper_normalized: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    pub entries: Vec<BoundsEntry>,
    pub lower_constant: f64,
    pub upper_constant: f64,
    /// `sup C / r0ⁿ` over boxes with `t0 ≤ r0`.
    pub near_boundary_constant: f64,
    /// Largest factor by which the upper-normalized value changes when `t0`
    /// doubles at fixed `r0`.
    pub doubling_factor: f64,
    pub pass: bool,
}

pub fn ball_bounds_check(
    spec: GridSpec,
    ladder: &TLadder,
    p: f64,
    params: &KernelParams,
    sweep: &[(f64, f64)],
    cfg: &SolverConfig,
) -> Result<BoundsReport> {
    let n = spec.dim() as f64;
    let mut entries = vec![];
    for &(r0, t0) in sweep {
        let set = CompactSetGrid::box_set(spec, ladder.clone(), r0, [0.0; 2], t0)?;
        if set.is_empty() {
            return Err(invalid("sweep", format!("box (r0={r0}, t0={t0}) contains no nodes")));
        }
        let c = capacity(&set, p, params, cfg)?;
        let cap = c.estimate();
        entries.push(BoundsEntry {
            r0,
            t0,
            capacity: cap,
            rel_gap: c.rel_gap,
            lower_normalized: cap / r0.powf(n),
            upper_normalized: cap * r0.powf(n * (p - 1.0)) / (t0 + r0).powf(p * n),
        });
    }
    let lower_constant = entries.iter().map(|e| e.lower_normalized).fold(f64::INFINITY, f64::min);
    let upper_constant = entries.iter().map(|e| e.upper_normalized).fold(0.0, f64::max);
    let near_boundary_constant = entries
        .iter()
        .filter(|e| e.t0 <= e.r0)
        .map(|e| e.lower_normalized)
        .fold(0.0, f64::max);
    let mut doubling_factor = 1.0f64;
    for a in &entries {
        for b in &entries {
            if a.r0 == b.r0 && (b.t0 - 2.0 * a.t0).abs() <= 1e-12 * b.t0.max(1.0) && a.t0 > 0.0 {
                let ratio = a.upper_normalized / b.upper_normalized;
                doubling_factor = doubling_factor.max(ratio.max(1.0 / ratio));
            }
        }
    }
    let finite = lower_constant.is_finite() && lower_constant > 0.0 && upper_constant.is_finite();
    Ok(BoundsReport {
        entries,
        lower_constant,
        upper_constant,
        near_boundary_constant,
        doubling_factor,
        pass: finite && near_boundary_constant.is_finite() && doubling_factor < 2.0,
    })
}

/// Result of the capacitary strong-type surrogate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrongTypeReport {
    pub levels: Vec<f64>,
    pub capacities: Vec<f64>,
    /// `Σ_j C(E_{λ_j}) Δ_j(λ^p)` over log-midpoint bands.
    pub lhs: f64,
    pub norm_p: f64,
    /// `lhs / ‖f‖_p^p`, absent when `f = 0`.
    pub ratio: Option<f64>,
    /// The lowest level set was the whole sampled region, so lower levels are not resolved.
    pub coarse_flag: bool,
}

/// Capacitary strong-type surrogate over the level grid `λ_j = λ_max 2^{-j/steps}`.
///
/// Level sets `{P_α f ≥ λ}` are taken on the half-space nodes of `ladder`; each
/// capacity is the certified upper bound, warm-started from the previous level.
pub fn strong_type_check(
    f: &GridFunction,
    p: f64,
    params: &KernelParams,
    ladder: &TLadder,
    steps_per_octave: usize,
    cfg: &SolverConfig,
) -> Result<StrongTypeReport> {
    check_p(p)?;
    if f.values().iter().any(|v| *v < 0.0) {
        return Err(invalid("f", "must be non-negative"));
    }
    let norm_p = lp_norm_pow(f, p);
    if f.max() <= 0.0 {
        return Ok(StrongTypeReport {
            levels: vec![],
            capacities: vec![],
            lhs: 0.0,
            norm_p,
            ratio: None,
            coarse_flag: false,
        });
    }
    let u = extend(f, ladder, params)?.field;
    let top = u.max();
    let floor = u.values().iter().cloned().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    let spec = *f.spec();
    let mut levels = vec![];
    let mut lam = top;
    let step = (-1.0 / steps_per_octave.max(1) as f64).exp2();
    while lam >= floor {
        levels.push(lam);
        lam *= step;
    }
    let total = u.values().len();
    let mut capacities = vec![];
    let mut warm: Option<Vec<f64>> = None;
    let mut terms = vec![];
    let mut coarse_flag = false;
    for &lam in &levels {
        let nodes: Vec<(usize, usize)> = (0..ladder.len())
            .flat_map(|j| (0..spec.len()).map(move |i| (i, j)))
            .filter(|&(i, j)| u.at(j, i) >= lam)
            .collect();
        if nodes.len() == total {
            coarse_flag = true;
        }
        let set = CompactSetGrid::from_nodes(spec, ladder.clone(), nodes)?;
        let a = ConstraintMatrix::new(&set, params)?;
        // f/λ is feasible; the warm start is the better of it and the previous minimizer
        let mut start: Vec<f64> = f.values().iter().map(|v| v / lam).collect();
        if let Some(w) = &warm {
            if let (Some((v1, _)), Some((v2, _))) = (feasible_value(&a, w, p), feasible_value(&a, &start, p)) {
                if v1 < v2 {
                    start = w.clone();
                }
            }
        }
        let sol = primal_from(&a, &set, p, cfg, start)?;
        capacities.push(sol.value);
        terms.push((sol.value, lam.powf(p)));
        warm = Some(sol.minimizer.into_values());
    }
    let lhs = band_integral(&terms, step, p);
    Ok(StrongTypeReport {
        levels,
        capacities,
        lhs,
        norm_p,
        ratio: (norm_p > 0.0).then(|| lhs / norm_p),
        coarse_flag,
    })
}

/// `∫ C(λ) dλ^p` from values at geometric levels `λ_k = λ_0 step^k`: each level
/// carries the band of `λ^p` between its geometric midpoints with the
/// neighbouring levels (midpoint rule in `log λ`), the last one down to zero.
/// `terms` holds `(C(λ_k), λ_k^p)`.
pub(crate) fn band_integral(terms: &[(f64, f64)], step: f64, p: f64) -> f64 {
    let mid = step.sqrt();
    neumaier_sum(terms.iter().enumerate().map(|(k, (c, lp))| {
        let upper = if k == 0 { *lp } else { lp / mid.powf(p) };
        let lower = if k + 1 == terms.len() { 0.0 } else { lp * mid.powf(p) };
        c * (upper - lower)
    }))
}

/// Capacity of a set and of its one-cell dilation on the refined grid:
/// the outer-regularity surrogate `(C(E), C(dilated E on h/2))`.
pub fn outer_regularity_check(
    r0: f64,
    spec: GridSpec,
    ladder: &TLadder,
    p: f64,
    params: &KernelParams,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let base = CompactSetGrid::box_set(spec, ladder.clone(), r0, [0.0; 2], 0.0)?;
    let c = capacity(&base, p, params, cfg)?.estimate();
    let fine = spec.refined()?;
    let fine_ladder = ladder.refined();
    let dil = CompactSetGrid::box_set(fine, fine_ladder, r0, [0.0; 2], 0.0)?.dilated();
    let cd = capacity(&dil, p, params, cfg)?.estimate();
    Ok((c, cd))
}

/// Capacities of nested sets exhausting the box `B_{r0}(0,0)`: horizontal
/// sub-boxes of growing width.
pub fn increasing_sets_check(
    r0: f64,
    spec: GridSpec,
    ladder: &TLadder,
    p: f64,
    params: &KernelParams,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, f64)> {
    let full = CompactSetGrid::box_set(spec, ladder.clone(), r0, [0.0; 2], 0.0)?;
    let pts = full.points();
    let mut values = vec![];
    for frac in [0.4, 0.7, 1.0] {
        let nodes: Vec<(usize, usize)> = full
            .nodes()
            .iter()
            .zip(&pts)
            .filter(|(_, (x, _))| (x[0] * x[0] + x[1] * x[1]).sqrt() < frac * 0.5 * r0 + 1e-12)
            .map(|(n, _)| *n)
            .collect();
        let set = CompactSetGrid::from_nodes(spec, ladder.clone(), nodes)?;
        values.push(capacity(&set, p, params, cfg)?.estimate());
    }
    let box_value = capacity(&full, p, params, cfg)?.estimate();
    Ok((values, box_value))
}

/// Closed-form capacity of a single node: `‖A_r / hⁿ‖_{p'}^{-p}`.
pub fn single_node_capacity(set: &CompactSetGrid, p: f64, params: &KernelParams) -> Result<f64> {
    check_p(p)?;
    if set.len() != 1 {
        return Err(invalid("E", "expected a single node"));
    }
    let a = ConstraintMatrix::new(set, params)?;
    let q = p / (p - 1.0);
    let g = a.adjoint(&[1.0]);
    Ok(lp_pow(&g, q, a.vol).powf(-p / q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup() -> (GridSpec, TLadder, KernelParams) {
        (
            GridSpec::new(1, 4.0, 64).unwrap(),
            dyadic_ladder(0.0625, 8.0, 8).unwrap(),
            KernelParams::new(1, 1.0).unwrap(),
        )
    }

    #[test]
    fn empty_set_has_zero_capacity() {
        let (spec, ladder, params) = setup();
        let e = CompactSetGrid::empty(spec, ladder);
        let cfg = SolverConfig::default();
        assert_eq!(capacity_primal(&e, 2.0, &params, &cfg).unwrap().value, 0.0);
        assert_eq!(capacity_dual(&e, 2.0, &params, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn box_membership_is_open() {
        let (spec, ladder, _) = setup();
        let b = CompactSetGrid::box_set(spec, ladder.clone(), 1.0, [0.0; 2], 0.0).unwrap();
        for (x, t) in b.points() {
            assert!(x[0].abs() < 0.5 && t > 1.0 && t < 2.0);
        }
        // |x| < 0.5 on h = 0.125: 7 nodes; 1 < t < 2 on 8 slices per octave: 7 slices
        assert_eq!(b.len(), 49);
    }

    #[test]
    fn single_node_matches_closed_form() {
        let (spec, ladder, params) = setup();
        let j = ladder.slice_index(1.0).unwrap();
        let e = CompactSetGrid::from_nodes(spec, ladder, vec![(spec.origin(), j)]).unwrap();
        let cfg = SolverConfig::default();
        for p in [1.5, 2.0, 3.0] {
            let exact = single_node_capacity(&e, p, &params).unwrap();
            let r = capacity(&e, p, &params, &cfg).unwrap();
            assert_relative_eq!(r.dual_value, exact, max_relative = 1e-9);
            assert_relative_eq!(r.primal_value, exact, max_relative = 1e-6);
            let eq = equilibrium_check(&e, &r, &params).unwrap();
            assert!(eq.max_deviation < 1e-5, "{eq:?}");
        }
    }

    #[test]
    fn single_node_below_indicator_competitor() {
        // f = 1_{|x| < r/2} / P_α(1_{|x|<r/2})(x0, t0) is feasible
        let (spec, ladder, params) = setup();
        let j = ladder.slice_index(1.0).unwrap();
        let e = CompactSetGrid::from_nodes(spec, ladder, vec![(spec.origin(), j)]).unwrap();
        let ind = GridFunction::from_fn(spec, |x| if x[0].abs() < 0.5 { 1.0 } else { 0.0 });
        let val = crate::extension::extension_at(&ind, &params, &[0.0], 1.0).unwrap();
        let bound = lp_norm_pow(&ind, 2.0) / (val * val);
        let c = capacity(&e, 2.0, &params, &SolverConfig::default()).unwrap();
        assert!(c.primal_value <= bound);
    }

    #[test]
    fn box_capacity_gap_and_weak_duality() {
        let (spec, ladder, params) = setup();
        let b = CompactSetGrid::box_set(spec, ladder, 1.0, [0.0; 2], 0.0).unwrap();
        for p in [1.5, 2.0, 3.0] {
            let r = capacity(&b, p, &params, &SolverConfig::default()).unwrap();
            assert!(r.dual_value <= r.primal_value);
            assert!(r.rel_gap <= 0.1, "p {p}: {r:?}");
            assert!(r.minimizer.min() >= 0.0);
            assert!(r.maximizer.atoms().iter().all(|a| a.w >= 0.0));
        }
    }

    #[test]
    fn equilibrium_identities_on_box() {
        let (spec, ladder, params) = setup();
        let b = CompactSetGrid::box_set(spec, ladder, 1.0, [0.0; 2], 0.0).unwrap();
        let r = capacity(&b, 2.0, &params, &SolverConfig::default()).unwrap();
        let eq = equilibrium_check(&b, &r, &params).unwrap();
        assert!(eq.pass, "{eq:?}");
    }

    #[test]
    fn translation_and_monotonicity() {
        let spec = GridSpec::new(1, 8.0, 64).unwrap();
        let ladder = dyadic_ladder(0.125, 16.0, 4).unwrap();
        let params = KernelParams::new(1, 1.0).unwrap();
        let checks = capacity_axioms_suite(spec, &ladder, &params, 2.0, 1, &SolverConfig::default()).unwrap();
        for c in &checks {
            assert!(c.pass, "{c:?}");
        }
    }

    #[test]
    fn dyadic_ladder_is_aligned() {
        let l = dyadic_ladder(0.3, 5.0, 4).unwrap();
        assert!(l.slice_index(0.5).is_some() && l.slice_index(1.0).is_some() && l.slice_index(4.0).is_some());
        assert_relative_eq!(l.ratio(), 2f64.powf(0.25), max_relative = 1e-12);
    }
    #[test]
    fn strong_type_examples() {
        let (spec, _, params) = setup();
        let ladder = dyadic_ladder(spec.spacing(), 16.0, 2).unwrap();
        let cfg = SolverConfig::default();
        let zero = strong_type_check(&GridFunction::zeros(spec), 2.0, &params, &ladder, 1, &cfg).unwrap();
        assert_eq!((zero.lhs, zero.ratio), (0.0, None));
        let ind = GridFunction::from_fn(spec, |x| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 });
        let a = strong_type_check(&ind, 2.0, &params, &ladder, 1, &cfg).unwrap().ratio.unwrap();
        let b = strong_type_check(&ind, 2.0, &params, &ladder, 2, &cfg).unwrap().ratio.unwrap();
        assert!(a.is_finite() && (a / b - 1.0).abs() <= 0.25, "{a} vs {b}");
        assert!(strong_type_check(&ind.scaled(-1.0), 2.0, &params, &ladder, 1, &cfg).is_err());
    }

    #[test]
    fn outer_regularity_and_increasing_sets() {
        let (spec, ladder, params) = setup();
        let cfg = SolverConfig::default();
        let (c, cd) = outer_regularity_check(1.0, spec, &ladder, 2.0, &params, &cfg).unwrap();
        assert!((cd / c - 1.0).abs() <= 0.15, "{c} vs {cd}");
        let (values, full) = increasing_sets_check(1.0, spec, &ladder, 2.0, &params, &cfg).unwrap();
        assert!(values.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-9)));
        assert!((values.last().unwrap() / full - 1.0).abs() <= 0.15);
    }

    #[test]
    fn rejects_out_of_range_exponents() {
        let (spec, ladder, params) = setup();
        let b = CompactSetGrid::box_set(spec, ladder, 1.0, [0.0; 2], 0.0).unwrap();
        assert!(capacity(&b, 1.0, &params, &SolverConfig::default()).is_err());
        assert!(capacity(&b, 20.0, &params, &SolverConfig::default()).is_err());
    }
}

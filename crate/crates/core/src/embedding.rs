//! Trace embeddings `‖P_α f‖_{L^q(μ)} ≤ C‖f‖`: tents, level sets, the
//! capacity-minimizing functions of a measure and the criteria built from them.
//!
//! Criteria are evaluated over explicit finite families (dyadic boxes or balls
//! anchored at the atoms, plus short unions) at three refinement levels; the
//! verdict compares the levels.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{capacity, check_p, dyadic_ladder, CompactSetGrid, SolverConfig};
use crate::error::{invalid, CapaxError, Result};
use crate::extension::{extension_at, nontangential_max};
use crate::fracspaces::{frac_capacity, frac_perimeter, sobolev_norm, IndicatorSet, SobolevParams};
use crate::grid::{lp_norm, GridFunction, GridSpec, HalfSpaceField, TLadder};
use crate::kernel::KernelParams;
use crate::measure::{Atom, DiscreteMeasure};
use crate::special::gauss_legendre_on;
use crate::wolff::{membership, wolff_at_atoms};

/// Relative change between refinement levels below which a value counts as stable.
pub const STABLE_TOLERANCE: f64 = 0.1;
/// Octaves of radii in the coarsest family; each refinement adds three.
const BASE_OCTAVES: f64 = 6.0;
/// Number of family levels evaluated per criterion.
pub const FAMILY_LEVELS: usize = 3;
const CHAIN_STARTS: usize = 64;

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod sentinel {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    fn to_raw(v: f64) -> Raw {
        if v.is_finite() {
            Raw::Num(v)
        } else if v.is_nan() {
            Raw::Text("nan".into())
        } else if v > 0.0 {
            Raw::Text("inf".into())
        } else {
            Raw::Text("-inf".into())
        }
    }

    fn from_raw<E: serde::de::Error>(r: Raw) -> Result<f64, E> {
        match r {
            Raw::Num(v) => Ok(v),
            Raw::Text(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::custom(format!("not a number: {s}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_raw(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_raw(Raw::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            v.iter().map(|x| to_raw(*x)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Raw>::deserialize(d)?.into_iter().map(from_raw).collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Finite,
    Infinite,
    Inconclusive,
}

/// Verdict from the values of one criterion on successively refined families.
///
/// Finite when the last refinement moves the value by at most 10%, infinite
/// when the value is `+∞` or more than doubles at each of the last two refinements.
pub fn verdict(values: &[f64]) -> Verdict {
    if values.iter().any(|v| v.is_infinite()) {
        return Verdict::Infinite;
    }
    let k = values.len();
    if k < 2 {
        return Verdict::Inconclusive;
    }
    let (a, b) = (values[k - 2], values[k - 1]);
    if (b - a).abs() <= STABLE_TOLERANCE * a.abs() {
        Verdict::Finite
    } else if k >= 3 && values.windows(2).rev().take(2).all(|w| w[1] > 2.0 * w[0]) {
        Verdict::Infinite
    } else {
        Verdict::Inconclusive
    }
}

/// Test-function profiles used by the empirical ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    Gaussian,
    Bump,
    Plateau,
}

impl Profile {
    /// Value at normalized radius `rho = |x - c| / scale`.
    pub fn eval(self, rho: f64) -> f64 {
        match self {
            Profile::Gaussian if rho < 6.0 => (-rho * rho).exp(),
            Profile::Bump if rho < 1.0 => (1.0 - 1.0 / (1.0 - rho * rho)).exp(),
            Profile::Plateau if rho <= 1.0 => 1.0,
            Profile::Plateau if rho < 1.5 => {
                let s = 2.0 * (rho - 1.0);
                1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
            }
            _ => 0.0,
        }
    }

    const ALL: [Profile; 3] = [Profile::Gaussian, Profile::Bump, Profile::Plateau];
}

/// The member of a family realizing a reported value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Witness {
    None,
    /// `B_r(x0, t0) = {|x - x0| < r/2, r < t - t0 < 2r}`.
    Box { r: f64, x0: [f64; 2], t0: f64 },
    /// Open ball; its tent is `{(y,t) : |y - center| + t ≤ r}`.
    Ball { center: [f64; 2], r: f64 },
    /// Open axis-parallel square of the given side.
    Square { center: [f64; 2], side: f64 },
    Union { parts: Vec<Witness> },
    Atom { index: usize },
    Function { profile: Profile, center: [f64; 2], scale: f64 },
}

impl Witness {
    fn holds(&self, a: &Atom, n: usize) -> bool {
        let dist = |c: &[f64; 2]| horizontal(a, c, n);
        match self {
            Witness::Box { r, x0, t0 } => {
                let gap = a.t - t0;
                2.0 * dist(x0) < *r && *r < gap && gap < 2.0 * r
            }
            Witness::Ball { center, r } => dist(center) + a.t <= *r,
            Witness::Square { center, side } => {
                (0..n).all(|k| (a.x[k] - center[k]).abs() + a.t <= 0.5 * side)
            }
            Witness::Union { parts } => parts.iter().any(|w| w.holds(a, n)),
            _ => false,
        }
    }

    /// Indices of the atoms in the set (boxes), or in its tent (balls, squares).
    pub fn members(&self, mu: &DiscreteMeasure) -> Vec<usize> {
        if let Witness::Atom { index } = self {
            return vec![*index];
        }
        let n = mu.dim();
        (0..mu.len()).filter(|&i| self.holds(&mu.atoms()[i], n)).collect()
    }

    /// μ of the set (boxes) or of its tent (balls, squares).
    pub fn mass(&self, mu: &DiscreteMeasure) -> f64 {
        self.members(mu).iter().map(|&i| mu.atoms()[i].w).sum()
    }
}

fn horizontal(a: &Atom, c: &[f64; 2], n: usize) -> f64 {
    let d0 = a.x[0] - c[0];
    if n == 2 {
        d0.hypot(a.x[1] - c[1])
    } else {
        d0.abs()
    }
}

/// One criterion evaluated on a sequence of families.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: String,
    /// Value on the finest family.
    #[serde(with = "sentinel")]
    pub value: f64,
    /// Values on the families, coarse to fine.
    #[serde(with = "sentinel::vec")]
    pub values: Vec<f64>,
    pub witness: Witness,
    pub family: String,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

impl CriterionReport {
    fn from_levels(id: &str, levels: Vec<(f64, Witness)>, family: String, diagnostics: Vec<String>) -> Self {
        let values: Vec<f64> = levels.iter().map(|l| l.0).collect();
        let (value, witness) = levels.last().cloned().unwrap_or((0.0, Witness::None));
        Self {
            id: id.to_string(),
            value,
            verdict: verdict(&values),
            values,
            witness,
            family,
            diagnostics,
        }
    }

    fn exact(id: &str, value: f64, witness: Witness, family: &str) -> Self {
        Self::from_levels(id, vec![(value, witness); FAMILY_LEVELS], family.to_string(), Vec::new())
    }
}

// ---------------------------------------------------------------------------
// Tents on the lattice

/// Whether a tent is built from closed or open lattice balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallRule {
    /// `(y,t)` is in the tent when every node with `|x - y| ≤ t` is in the set.
    Closed,
    /// `(y,t)` is in the tent when every node with `|x - y| < t` is in the set.
    Open,
}

/// Distance from every node to the nearest non-member node (`+∞` if there is none).
///
/// The nearest non-member of a member node always has a member among its
/// 8 neighbours, so only that frontier is scanned.
fn clearance(spec: &GridSpec, member: &[bool]) -> Vec<f64> {
    let frontier: Vec<[f64; 2]> = (0..spec.len())
        .filter(|&i| !member[i] && neighbours(spec, i).any(|j| member[j]))
        .map(|i| spec.coords(i))
        .collect();
    let n = spec.dim();
    (0..spec.len())
        .into_par_iter()
        .map(|i| {
            if !member[i] {
                return 0.0;
            }
            let c = spec.coords(i);
            frontier
                .iter()
                .map(|z| dist(&c, z, n))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn dist(a: &[f64; 2], b: &[f64; 2], n: usize) -> f64 {
    if n == 2 {
        (a[0] - b[0]).hypot(a[1] - b[1])
    } else {
        (a[0] - b[0]).abs()
    }
}

fn neighbours(spec: &GridSpec, i: usize) -> impl Iterator<Item = usize> + '_ {
    let m = spec.points() as i64;
    let mi = spec.multi_index(i);
    let two = spec.dim() == 2;
    let span = if two { -1..=1 } else { 0..=0 };
    span.flat_map(move |d1| (-1..=1i64).map(move |d0| (d0, d1)))
        .filter(|&(d0, d1)| (d0, d1) != (0, 0))
        .filter_map(move |(d0, d1)| {
            let a = mi[0] as i64 + d0;
            let b = mi[1] as i64 + d1;
            (a >= 0 && a < m && (!two || (b >= 0 && b < m)))
                .then(|| spec.flat_index([a as usize, if two { b as usize } else { 0 }]))
        })
}

/// A bounded open set given by its member nodes.
#[derive(Debug, Clone)]
pub struct OpenSetGrid {
    set: IndicatorSet,
    clearance: Vec<f64>,
}

impl OpenSetGrid {
    /// Fails when a member node lies on the outer ring of the grid.
    pub fn new(set: IndicatorSet) -> Result<Self> {
        let spec = *set.spec();
        let m = spec.points();
        let on_ring = (0..spec.len()).any(|i| {
            let mi = spec.multi_index(i);
            let edge = |k: usize| k == 0 || k == m - 1;
            set.membership()[i] && (edge(mi[0]) || (spec.dim() == 2 && edge(mi[1])))
        });
        if on_ring {
            return Err(invalid("set", "members on the outer ring: the set is not bounded inside the grid"));
        }
        let clearance = clearance(&spec, set.membership());
        Ok(Self { set, clearance })
    }

    pub fn ball(spec: GridSpec, center: [f64; 2], r: f64) -> Result<Self> {
        Self::new(IndicatorSet::ball(spec, center, r)?)
    }

    pub fn set(&self) -> &IndicatorSet {
        &self.set
    }

    pub fn spec(&self) -> &GridSpec {
        self.set.spec()
    }

    /// Distance from each node to the complement's nodes.
    pub fn clearance(&self) -> &[f64] {
        &self.clearance
    }

    /// Distance from an arbitrary point to the nearest non-member node; zero if
    /// the nearest node is not a member.
    pub fn distance_to_complement(&self, x: &[f64]) -> f64 {
        let spec = self.spec();
        let n = spec.dim();
        let near = spec.nearest_node(x);
        let member = self.set.membership();
        if !member[near] {
            return 0.0;
        }
        let p = [x[0], if n == 2 { x[1] } else { 0.0 }];
        // every non-member either borders a member or lies next to the nearest node
        (0..spec.len())
            .filter(|&i| !member[i] && (neighbours(spec, i).any(|j| member[j]) || neighbours(spec, near).any(|j| j == i)))
            .map(|i| dist(&p, &spec.coords(i), n))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Lattice points `(node, slice)` of a tent, slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TentRegion {
    spec: GridSpec,
    ladder: TLadder,
    rule: BallRule,
    nodes: Vec<bool>,
}

impl TentRegion {
    fn from_clearance(spec: GridSpec, ladder: &TLadder, rule: BallRule, clear: &[f64]) -> Self {
        let nodes = ladder
            .slices()
            .iter()
            .flat_map(|&t| {
                clear.iter().map(move |&c| match rule {
                    BallRule::Closed => c > t,
                    BallRule::Open => c > 0.0 && c >= t,
                })
            })
            .collect();
        Self {
            spec,
            ladder: ladder.clone(),
            rule,
            nodes,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn ladder(&self) -> &TLadder {
        &self.ladder
    }

    pub fn rule(&self) -> BallRule {
        self.rule
    }

    pub fn contains(&self, node: usize, slice: usize) -> bool {
        self.nodes[slice * self.spec.len() + node]
    }

    pub fn count(&self) -> usize {
        self.nodes.iter().filter(|b| **b).count()
    }

    pub fn is_subset_of(&self, other: &TentRegion) -> bool {
        self.nodes.len() == other.nodes.len() && self.nodes.iter().zip(&other.nodes).all(|(a, b)| !a || *b)
    }
}

/// The tent `T(O)` on grid nodes × ladder slices.
pub fn tent(o: &OpenSetGrid, ladder: &TLadder, rule: BallRule) -> TentRegion {
    TentRegion::from_clearance(*o.spec(), ladder, rule, &o.clearance)
}

/// `μ(T(O))`: an atom counts when the lattice ball of radius `t` around its
/// position lies in `O` and its nearest node is a member.
pub fn tent_mass(o: &OpenSetGrid, mu: &DiscreteMeasure, rule: BallRule) -> Result<f64> {
    if mu.dim() != o.spec().dim() {
        return Err(CapaxError::GridMismatch("measure and set dimensions differ".into()));
    }
    Ok(mu
        .atoms()
        .iter()
        .filter(|a| {
            let c = o.distance_to_complement(&a.x[..mu.dim()]);
            match rule {
                BallRule::Closed => c > a.t,
                BallRule::Open => c > 0.0 && c >= a.t,
            }
        })
        .map(|a| a.w)
        .sum())
}

// ---------------------------------------------------------------------------
// Level sets of an extension

/// `L = {|u| > s}` on the lattice and `R = {N u > s}` on nodes.
#[derive(Debug, Clone)]
pub struct LevelSets {
    pub level: f64,
    /// Slice-major membership of `L`.
    pub upper: Vec<bool>,
    /// Node membership of `R`.
    pub maximal: Vec<bool>,
    pub nontangential: GridFunction,
}

pub fn level_sets(u: &HalfSpaceField, s: f64) -> LevelSets {
    let nontangential = nontangential_max(u);
    LevelSets {
        level: s,
        upper: u.values().iter().map(|v| v.abs() > s).collect(),
        maximal: nontangential.values().iter().map(|v| *v > s).collect(),
        nontangential,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub level: f64,
    pub radius: f64,
    /// Lattice points of `L ∩ T(B(0,k))`.
    pub checked: usize,
    /// Those not in `T(R ∩ B(0,k))`.
    pub violations: usize,
    /// `μ(L ∩ T(B(0,k)))` with atoms snapped to the lattice.
    pub mass_lhs: f64,
    /// `μ(T(R ∩ B(0,k)))` with atoms snapped to the lattice.
    pub mass_rhs: f64,
    pub holds: bool,
}

fn nearest_slice(ladder: &TLadder, t: f64) -> usize {
    let lt = t.ln();
    ladder
        .slices()
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bd), (j, s)| {
            let d = (s.ln() - lt).abs();
            if d < bd {
                (j, d)
            } else {
                (bi, bd)
            }
        })
        .0
}

/// Checks `L ∩ T(B(0,k)) ⊆ T(R ∩ B(0,k))` lattice point by lattice point, and
/// the corresponding inequality of μ-masses. Tents use open lattice balls, the
/// same cone as the nontangential maximal function.
pub fn level_set_containment_check(u: &HalfSpaceField, mu: &DiscreteMeasure, s: f64, k: f64) -> Result<ContainmentReport> {
    let spec = *u.spec();
    if mu.dim() != spec.dim() {
        return Err(CapaxError::GridMismatch("measure and field dimensions differ".into()));
    }
    if !(k > 0.0) {
        return Err(invalid("k", "radius must be positive"));
    }
    let ls = level_sets(u, s);
    let ball: Vec<bool> = (0..spec.len())
        .map(|i| {
            let c = spec.coords(i);
            c[0].hypot(if spec.dim() == 2 { c[1] } else { 0.0 }) < k
        })
        .collect();
    let both: Vec<bool> = ball.iter().zip(&ls.maximal).map(|(a, b)| *a && *b).collect();
    let ladder = u.ladder();
    let t_ball = TentRegion::from_clearance(spec, ladder, BallRule::Open, &clearance(&spec, &ball));
    let t_both = TentRegion::from_clearance(spec, ladder, BallRule::Open, &clearance(&spec, &both));
    let lhs_at = |node: usize, slice: usize| ls.upper[slice * spec.len() + node] && t_ball.contains(node, slice);
    let mut checked = 0;
    let mut violations = 0;
    for slice in 0..ladder.len() {
        for node in 0..spec.len() {
            if lhs_at(node, slice) {
                checked += 1;
                if !t_both.contains(node, slice) {
                    violations += 1;
                }
            }
        }
    }
    let (mut mass_lhs, mut mass_rhs) = (0.0, 0.0);
    for a in mu.atoms() {
        let node = spec.nearest_node(&a.x[..spec.dim()]);
        let slice = nearest_slice(ladder, a.t);
        if lhs_at(node, slice) {
            mass_lhs += a.w;
        }
        if t_both.contains(node, slice) {
            mass_rhs += a.w;
        }
    }
    Ok(ContainmentReport {
        level: s,
        radius: k,
        checked,
        violations,
        mass_lhs,
        mass_rhs,
        holds: violations == 0 && mass_lhs <= mass_rhs,
    })
}

// ---------------------------------------------------------------------------
// Capacity tables

/// `Ĉ(ρ) = C_{α,p}(B_1(0, ρ))`, from which `C(B_r(x,t0)) = r^n Ĉ(t0/r)` by
/// translation and dilation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxCapacityTable {
    pub dim: usize,
    pub alpha: f64,
    pub p: f64,
    pub ratios: Vec<f64>,
    pub values: Vec<f64>,
    pub rel_gaps: Vec<f64>,
}

impl BoxCapacityTable {
    pub fn default_ratios() -> Vec<f64> {
        vec![0.0, 0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0]
    }

    /// Solves for `Ĉ` at the given ratios on a reference grid.
    pub fn compute(params: &KernelParams, p: f64, ratios: &[f64], cfg: &SolverConfig) -> Result<Self> {
        check_p(p)?;
        check_ratios(ratios)?;
        let dim = params.dim();
        let spec = match dim {
            1 => GridSpec::new(1, 16.0, 256)?,
            _ => GridSpec::new(2, 6.0, 48)?,
        };
        let top = ratios.last().copied().unwrap_or(0.0);
        let ladder = dyadic_ladder(0.5, top + 3.0, 8)?;
        let solved: Vec<(f64, f64)> = ratios
            .iter()
            .map(|&rho| {
                let set = CompactSetGrid::box_set(spec, ladder.clone(), 1.0, [0.0; 2], rho)?;
                let c = capacity(&set, p, params, cfg)?;
                Ok((c.primal_value, c.rel_gap))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            dim,
            alpha: params.alpha(),
            p,
            ratios: ratios.to_vec(),
            values: solved.iter().map(|s| s.0).collect(),
            rel_gaps: solved.iter().map(|s| s.1).collect(),
        })
    }

    /// A table with prescribed values.
    pub fn from_values(params: &KernelParams, p: f64, ratios: &[f64], values: &[f64]) -> Result<Self> {
        check_p(p)?;
        check_ratios(ratios)?;
        if values.len() != ratios.len() || values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("values", "one positive finite value per ratio"));
        }
        Ok(Self {
            dim: params.dim(),
            alpha: params.alpha(),
            p,
            ratios: ratios.to_vec(),
            values: values.to_vec(),
            rel_gaps: vec![0.0; ratios.len()],
        })
    }

    /// `Ĉ(ρ)`: linear between the first two ratios when the first is zero,
    /// log-log between positive ratios, power-law extrapolation past the last.
    pub fn unit(&self, rho: f64) -> f64 {
        interpolate(&self.ratios, &self.values, rho)
    }

    /// `C(B_r(x, t0))`.
    pub fn box_capacity(&self, r: f64, t0: f64) -> f64 {
        r.powi(self.dim as i32) * self.unit(t0 / r)
    }
}

fn check_ratios(ratios: &[f64]) -> Result<()> {
    if ratios.len() < 2 || ratios[0] < 0.0 || ratios.windows(2).any(|w| w[1] <= w[0]) || ratios[1] <= 0.0 {
        return Err(invalid("ratios", "need at least two increasing non-negative ratios"));
    }
    Ok(())
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    let i = xs.partition_point(|v| *v <= x).clamp(1, k - 1);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    if x0 == 0.0 {
        if x <= x1 {
            return y0 + (y1 - y0) * x / x1;
        }
    }
    let slope = (y1 / y0).ln() / (x1 / x0).ln();
    y0 * (x / x0).powf(slope)
}

/// `Cap^{β,p}` of unit balls (and squares) on a reference grid; other radii
/// follow from `Cap(B(x,r)) = r^{n-βp} Cap(B(0,1))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FracCapacityTable {
    pub dim: usize,
    pub beta: f64,
    pub p: f64,
    pub ball: f64,
    /// Capacity of the square `(-1,1)²` (2D only).
    pub square: Option<f64>,
    /// `Per_β` of the unit ball and square, for `p = 1`.
    pub ball_perimeter: Option<f64>,
    pub square_perimeter: Option<f64>,
}

impl FracCapacityTable {
    pub fn compute(dim: usize, beta: f64, p: f64, cfg: &SolverConfig) -> Result<Self> {
        let spec = match dim {
            1 => GridSpec::new(1, 4.0, 128)?,
            2 => GridSpec::new(2, 3.0, 48)?,
            _ => return Err(invalid("dim", "n must be 1 or 2")),
        };
        let ball_set = IndicatorSet::ball(spec, [0.0; 2], 1.0)?;
        let square_set = (dim == 2)
            .then(|| {
                IndicatorSet::from_generator(
                    spec,
                    crate::fracspaces::IndicatorGenerator::Rect {
                        x0: -1.0,
                        y0: -1.0,
                        x1: 1.0,
                        y1: 1.0,
                    },
                )
            })
            .transpose()?;
        let ball = frac_capacity(&ball_set, beta, p, cfg)?.value;
        let square = square_set.as_ref().map(|s| frac_capacity(s, beta, p, cfg).map(|c| c.value)).transpose()?;
        let (ball_perimeter, square_perimeter) = if p == 1.0 {
            (
                Some(frac_perimeter(&ball_set, beta)?),
                square_set.as_ref().map(|s| frac_perimeter(s, beta)).transpose()?,
            )
        } else {
            (None, None)
        };
        Ok(Self {
            dim,
            beta,
            p,
            ball,
            square,
            ball_perimeter,
            square_perimeter,
        })
    }

    fn exponent(&self, perimeter: bool) -> f64 {
        let n = self.dim as f64;
        if perimeter {
            n - self.beta
        } else {
            n - self.beta * self.p
        }
    }

    /// Capacity (or perimeter) of the ball or square a witness describes.
    fn of(&self, w: &Witness, perimeter: bool) -> f64 {
        let e = self.exponent(perimeter);
        match w {
            Witness::Ball { r, .. } => {
                r.powf(e) * if perimeter { self.ball_perimeter.unwrap_or(f64::NAN) } else { self.ball }
            }
            Witness::Square { side, .. } => {
                let unit = if perimeter { self.square_perimeter } else { self.square };
                (0.5 * side).powf(e) * unit.unwrap_or(f64::NAN)
            }
            Witness::Union { parts } => parts.iter().map(|w| self.of(w, perimeter)).sum(),
            _ => f64::NAN,
        }
    }

    pub fn capacity_of(&self, w: &Witness) -> f64 {
        self.of(w, false)
    }

    pub fn perimeter_of(&self, w: &Witness) -> f64 {
        self.of(w, true)
    }
}

// ---------------------------------------------------------------------------
// Families and pools

/// Dyadic radii, centres offset from the atoms by up to `0.4 r`, and
/// base heights `t0 = ρ r` (boxes) or squares next to balls (tents).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetFamily {
    pub r_min: f64,
    pub r_max: f64,
    pub per_octave: usize,
    pub x_steps: usize,
    pub t0_ratios: Vec<f64>,
    pub squares: bool,
    pub max_union: usize,
}

impl SetFamily {
    /// Boxes sized to a measure: radii span six octaves below a power of two
    /// covering both the heights and the horizontal spread.
    pub fn boxes_for(mu: &DiscreteMeasure) -> Self {
        let (top, spread) = extent(mu);
        let r_max = (top.max(spread).max(1e-12).log2().ceil() + 1.0).exp2();
        Self {
            r_min: r_max * (-BASE_OCTAVES).exp2(),
            r_max,
            per_octave: 1,
            x_steps: 2,
            t0_ratios: vec![0.0, 0.25, 0.5, 1.0, 2.0],
            squares: false,
            max_union: 4,
        }
    }

    /// Balls (and squares in 2D) sized so the largest tent holds every atom.
    pub fn balls_for(mu: &DiscreteMeasure) -> Self {
        let (top, spread) = extent(mu);
        let r_max = ((top + spread).max(1e-12).log2().ceil() + 1.0).exp2();
        Self {
            r_min: r_max * (-BASE_OCTAVES).exp2(),
            r_max,
            per_octave: 1,
            x_steps: 2,
            t0_ratios: Vec::new(),
            squares: mu.dim() == 2,
            max_union: 4,
        }
    }

    /// Three more octaves of small radii, doubled radial and horizontal density.
    pub fn refined(&self) -> Self {
        Self {
            r_min: self.r_min / 8.0,
            per_octave: 2 * self.per_octave,
            x_steps: 2 * self.x_steps,
            ..self.clone()
        }
    }

    pub fn levels(&self) -> Vec<SetFamily> {
        let mut out = vec![self.clone()];
        for _ in 1..FAMILY_LEVELS {
            let next = out.last().unwrap().refined();
            out.push(next);
        }
        out
    }

    pub fn radii(&self) -> Vec<f64> {
        let k = self.per_octave as f64;
        let j0 = (self.r_min.log2() * k).floor() as i64;
        let j1 = (self.r_max.log2() * k).ceil() as i64;
        (j0..=j1).map(|j| (j as f64 / k).exp2()).collect()
    }

    pub fn describe(&self) -> String {
        let shape = if self.t0_ratios.is_empty() {
            if self.squares {
                "balls+squares".to_string()
            } else {
                "balls".to_string()
            }
        } else {
            format!("boxes t0/r in {:?}", self.t0_ratios)
        };
        format!(
            "{shape}, r in [{:.4e}, {:.4e}] x{} per octave, {} offsets per side, unions of <= {}",
            self.r_min, self.r_max, self.per_octave, self.x_steps, self.max_union
        )
    }

    fn offsets(&self, n: usize, r: f64) -> Vec<[f64; 2]> {
        let s = self.x_steps as i64;
        let step = 0.4 * r / self.x_steps.max(1) as f64;
        let one: Vec<f64> = (-s..=s).map(|j| j as f64 * step).collect();
        if n == 2 {
            one.iter().flat_map(|a| one.iter().map(move |b| [*a, *b])).collect()
        } else {
            one.iter().map(|a| [*a, 0.0]).collect()
        }
    }

    /// Every family member as a witness, anchored at the atoms.
    fn members(&self, mu: &DiscreteMeasure) -> Vec<Witness> {
        let n = mu.dim();
        self.radii()
            .iter()
            .flat_map(|&r| {
                let offs = self.offsets(n, r);
                mu.atoms().iter().flat_map(move |a| {
                    let offs = offs.clone();
                    offs.into_iter().flat_map(move |o| {
                        let c = [a.x[0] + o[0], if n == 2 { a.x[1] + o[1] } else { 0.0 }];
                        self.shapes(c, r)
                    })
                })
            })
            .collect()
    }

    fn shapes(&self, c: [f64; 2], r: f64) -> Vec<Witness> {
        if !self.t0_ratios.is_empty() {
            return self
                .t0_ratios
                .iter()
                .map(|rho| Witness::Box { r, x0: c, t0: rho * r })
                .collect();
        }
        let mut out = vec![Witness::Ball { center: c, r }];
        if self.squares {
            out.push(Witness::Square { center: c, side: 2.0 * r });
        }
        out
    }
}

/// Largest height and largest horizontal distance between atoms.
fn extent(mu: &DiscreteMeasure) -> (f64, f64) {
    let n = mu.dim();
    let atoms = mu.atoms();
    let top = atoms.iter().map(|a| a.t).fold(0.0, f64::max);
    let spread = atoms
        .iter()
        .flat_map(|a| atoms.iter().map(move |b| horizontal(a, &b.x, n)))
        .fold(0.0, f64::max);
    (top, spread)
}

#[derive(Debug, Clone)]
struct Candidate {
    members: Vec<usize>,
    mass: f64,
    cap: f64,
    witness: Witness,
}

/// Finitely many sets with their μ-mass (of the set or of its tent) and an
/// upper bound for their capacity.
///
/// Singles of one shape are deduplicated by the atoms they hold, keeping the
/// smallest capacity. Unions grow greedily from the best singles by atoms gained per
/// unit capacity; the choice depends only on the support of μ, so pools of
/// two measures with the same support hold the same sets. A union's capacity
/// is bounded by the sum over its parts.
#[derive(Debug, Clone)]
pub struct CapacityPool {
    sets: Vec<Candidate>,
    family: String,
}

impl CapacityPool {
    fn build(mu: &DiscreteMeasure, family: &SetFamily, cap: impl Fn(&Witness) -> f64 + Sync) -> Self {
        let n = mu.dim();
        let atoms = mu.atoms();
        let raw: Vec<Candidate> = family
            .members(mu)
            .into_par_iter()
            .filter_map(|w| {
                let members: Vec<usize> = (0..atoms.len()).filter(|&i| w.holds(&atoms[i], n)).collect();
                if members.is_empty() {
                    return None;
                }
                let c = cap(&w);
                (c > 0.0 && c.is_finite()).then(|| Candidate {
                    mass: members.iter().map(|&i| atoms[i].w).sum(),
                    members,
                    cap: c,
                    witness: w,
                })
            })
            .collect();
        let mut index: HashMap<(bool, Vec<usize>), usize> = HashMap::new();
        let mut singles: Vec<Candidate> = Vec::new();
        for c in raw {
            let key = (matches!(c.witness, Witness::Square { .. }), c.members.clone());
            match index.get(&key) {
                Some(&i) if singles[i].cap <= c.cap => {}
                Some(&i) => singles[i] = c,
                None => {
                    index.insert(key, singles.len());
                    singles.push(c);
                }
            }
        }
        let weights: Vec<f64> = atoms.iter().map(|a| a.w).collect();
        let unions = grow_unions(&singles, &weights, family.max_union);
        singles.extend(unions);
        Self {
            sets: singles,
            family: family.describe(),
        }
    }

    /// Boxes with capacities from the table.
    pub fn boxes(mu: &DiscreteMeasure, table: &BoxCapacityTable, family: &SetFamily) -> Result<Self> {
        if family.t0_ratios.is_empty() {
            return Err(invalid("family", "box family needs base-height ratios"));
        }
        check_dim(mu, table.dim)?;
        let cap = |w: &Witness| match w {
            Witness::Box { r, t0, .. } => table.box_capacity(*r, *t0),
            _ => f64::NAN,
        };
        Ok(Self::build(mu, family, cap))
    }

    /// Balls (and squares) with `Cap^{β,p}` from the table, masses of their tents.
    pub fn balls(mu: &DiscreteMeasure, table: &FracCapacityTable, family: &SetFamily) -> Result<Self> {
        if !family.t0_ratios.is_empty() {
            return Err(invalid("family", "ball family must not carry base heights"));
        }
        check_dim(mu, table.dim)?;
        Ok(Self::build(mu, family, |w| table.capacity_of(w)))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    /// `c(μ; λ)`: least capacity among sets of mass at least `λ`; `+∞` when
    /// no set is that heavy.
    pub fn min_capacity(&self, lambda: f64) -> (f64, Witness) {
        let mut best = (f64::INFINITY, Witness::None);
        for c in &self.sets {
            if c.mass >= lambda && c.cap < best.0 {
                best = (c.cap, c.witness.clone());
            }
        }
        best
    }

    /// `sup_K μ(K)^a / w(K)` for a weight `w` (capacity by default).
    fn sup_by(&self, a: f64, weight: impl Fn(&Candidate) -> f64) -> (f64, Witness) {
        let mut best = (0.0, Witness::None);
        for c in &self.sets {
            let v = c.mass.powf(a) / weight(c);
            if v > best.0 {
                best = (v, c.witness.clone());
            }
        }
        best
    }

    /// `sup_λ λ^a / c(μ; λ)`, attained at the mass of a pool member.
    pub fn sup_ratio(&self, a: f64) -> (f64, Witness) {
        self.sup_by(a, |c| c.cap)
    }

    /// `∫_0^∞ (λ^{p/q} / c(μ;λ))^{q/(p-q)} dλ/λ` for `p > q`, exact for the
    /// step function `c(μ; ·)` of the pool.
    pub fn level_integral(&self, p: f64, q: f64) -> f64 {
        let e = p / (p - q);
        let k = q / (p - q);
        let mut by_mass: Vec<(f64, f64)> = self.sets.iter().map(|c| (c.mass, c.cap)).collect();
        by_mass.sort_by(|a, b| a.0.total_cmp(&b.0));
        // c on (m_{i-1}, m_i] is the least capacity among masses ≥ m_i
        let mut suffix = vec![f64::INFINITY; by_mass.len() + 1];
        for i in (0..by_mass.len()).rev() {
            suffix[i] = suffix[i + 1].min(by_mass[i].1);
        }
        let mut prev = 0.0f64;
        let mut total = 0.0;
        for (i, &(m, _)) in by_mass.iter().enumerate() {
            if m > prev {
                total += (m.powf(e) - prev.powf(e)) / (e * suffix[i].powf(k));
                prev = m;
            }
        }
        total
    }
}

/// `sup μ(K)^a / w(K)` over the single members of a family with `w(K)` defined,
/// first maximizer in enumeration order.
fn family_sup(mu: &DiscreteMeasure, family: &SetFamily, a: f64, weight: impl Fn(&Witness) -> Option<f64> + Sync) -> (f64, Witness) {
    let n = mu.dim();
    let atoms = mu.atoms();
    let members = family.members(mu);
    let values: Vec<f64> = members
        .par_iter()
        .map(|w| match weight(w) {
            Some(d) => {
                let m: f64 = atoms.iter().filter(|b| w.holds(b, n)).map(|b| b.w).sum();
                if m > 0.0 {
                    m.powf(a) / d
                } else {
                    0.0
                }
            }
            None => 0.0,
        })
        .collect();
    let mut best = (0.0, Witness::None);
    for (v, w) in values.into_iter().zip(members) {
        if v > best.0 {
            best = (v, w);
        }
    }
    best
}

fn check_dim(mu: &DiscreteMeasure, dim: usize) -> Result<()> {
    if mu.dim() != dim {
        return Err(CapaxError::GridMismatch(format!("measure is {}-dimensional, table {dim}", mu.dim())));
    }
    Ok(())
}

fn grow_unions(singles: &[Candidate], weights: &[f64], max_union: usize) -> Vec<Candidate> {
    let atoms = weights.len();
    if max_union < 2 || singles.len() < 2 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..singles.len()).collect();
    let score = |c: &Candidate| c.members.len() as f64 / c.cap;
    order.sort_by(|&a, &b| score(&singles[b]).total_cmp(&score(&singles[a])).then(a.cmp(&b)));
    order
        .par_iter()
        .take(CHAIN_STARTS)
        .flat_map_iter(|&start| {
            let mut covered = vec![false; atoms];
            let mut parts = vec![start];
            singles[start].members.iter().for_each(|&i| covered[i] = true);
            let mut out = Vec::new();
            for _ in 1..max_union {
                let mut best: Option<(f64, usize)> = None;
                for (j, c) in singles.iter().enumerate() {
                    let gain = c.members.iter().filter(|&&i| !covered[i]).count();
                    if gain == 0 {
                        continue;
                    }
                    let s = gain as f64 / c.cap;
                    if best.is_none_or(|(b, _)| s > b) {
                        best = Some((s, j));
                    }
                }
                let Some((_, j)) = best else { break };
                parts.push(j);
                singles[j].members.iter().for_each(|&i| covered[i] = true);
                let members: Vec<usize> = (0..atoms).filter(|&i| covered[i]).collect();
                out.push(Candidate {
                    mass: members.iter().map(|&i| weights[i]).sum(),
                    members,
                    cap: parts.iter().map(|&k| singles[k].cap).sum(),
                    witness: Witness::Union {
                        parts: parts.iter().map(|&k| singles[k].witness.clone()).collect(),
                    },
                });
            }
            out
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Lebesgue trace criteria

/// `c_{α,p}(μ; λ)` over the box family (with unions).
pub fn cap_minimizing_lp(mu: &DiscreteMeasure, table: &BoxCapacityTable, family: &SetFamily, lambda: f64) -> Result<(f64, Witness)> {
    Ok(CapacityPool::boxes(mu, table, family)?.min_capacity(lambda))
}

fn check_exponents(p: f64, q: f64, table_p: f64) -> Result<()> {
    if (p - table_p).abs() > 1e-12 {
        return Err(invalid("p", format!("table was computed for p = {table_p}, not {p}")));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid("q", "must be positive and finite"));
    }
    Ok(())
}

fn sum_over_atoms(mu: &DiscreteMeasure, f: impl Fn(usize, &Atom) -> f64) -> (f64, Witness) {
    let mut total = 0.0;
    let mut best = (f64::NEG_INFINITY, Witness::None);
    for (i, a) in mu.atoms().iter().enumerate() {
        let v = a.w * f(i, a);
        total += v;
        if v > best.0 {
            best = (v, Witness::Atom { index: i });
        }
    }
    (total, best.1)
}

/// `∫_0^∞ (μ(B_r(x,t)) / C(B_r(x,t)))^{1/(p-1)} dr/r` at an atom, exact in the
/// piecewise constant box mass with Gauss–Legendre in `ln r` on each piece.
pub fn box_wolff_integral(mu: &DiscreteMeasure, x: &[f64], t: f64, table: &BoxCapacityTable) -> f64 {
    let n = mu.dim();
    let events: Vec<(f64, f64, f64)> = mu
        .atoms()
        .iter()
        .filter_map(|b| membership(b, n, x, t).map(|(lo, hi)| (lo, hi, b.w)))
        .collect();
    let mut cuts: Vec<f64> = events.iter().flat_map(|e| [e.0, e.1]).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let e = 1.0 / (table.p - 1.0);
    cuts.windows(2)
        .map(|w| {
            let mid = (w[0] * w[1]).sqrt();
            let mass: f64 = events.iter().filter(|ev| ev.0 < mid && mid < ev.1).map(|ev| ev.2).sum();
            if mass == 0.0 {
                return 0.0;
            }
            gauss_legendre_on(16, w[0].ln(), w[1].ln())
                .map(|(s, wt)| {
                    let r = s.exp();
                    wt * (mass / table.box_capacity(r, t)).powf(e)
                })
                .sum::<f64>()
        })
        .sum()
}

/// Criteria for `P_α : L^p → L^q(μ)`.
///
/// For `p ≤ q`: `sup λ^{p/q}/c(μ;λ)` and the box criteria
/// `sup μ(B_r(x,t0)) / r^{qn/p}` over `t0 ≤ r` and `t0 ≤ 2r`.
/// For `p > q`: the level integral, the box-Wolff integral and the
/// Wolff energy `∫ (H_p μ)^{q(p-1)/(p-q)} dμ`.
pub fn check_lp_embedding(
    mu: &DiscreteMeasure,
    p: f64,
    q: f64,
    table: &BoxCapacityTable,
    family: Option<&SetFamily>,
) -> Result<Vec<CriterionReport>> {
    check_exponents(p, q, table.p)?;
    check_dim(mu, table.dim)?;
    let base = family.cloned().unwrap_or_else(|| SetFamily::boxes_for(mu));
    let levels = base.levels();
    let pools: Vec<CapacityPool> = levels
        .iter()
        .map(|f| CapacityPool::boxes(mu, table, f))
        .collect::<Result<_>>()?;
    let desc = base.describe();
    let n = table.dim as f64;
    let mut out = Vec::new();
    if p <= q {
        out.push(CriterionReport::from_levels(
            "capacity-sup",
            pools.iter().map(|pl| pl.sup_ratio(p / q)).collect(),
            desc.clone(),
            vec![format!("pool sizes {:?}", pools.iter().map(|p| p.len()).collect::<Vec<_>>())],
        ));
        for (id, bound) in [("box-t0-le-r", 1.0), ("box-t0-le-2r", 2.0)] {
            let vals = levels
                .iter()
                .map(|f| {
                    family_sup(mu, f, 1.0, |w| match w {
                        Witness::Box { r, t0, .. } if *t0 <= bound * r => Some(r.powf(q * n / p)),
                        _ => None,
                    })
                })
                .collect();
            out.push(CriterionReport::from_levels(id, vals, desc.clone(), Vec::new()));
        }
    } else {
        out.push(CriterionReport::from_levels(
            "capacity-integral",
            pools.iter().map(|pl| (pl.level_integral(p, q), Witness::None)).collect(),
            desc.clone(),
            Vec::new(),
        ));
        let pw = q * (p - 1.0) / (p - q);
        let n_dim = mu.dim();
        let (bw, bw_wit) = sum_over_atoms(mu, |_, a| box_wolff_integral(mu, &a.x[..n_dim], a.t, table).powf(pw));
        out.push(CriterionReport::exact("box-wolff", bw, bw_wit, "exact per atom"));
        let h = wolff_at_atoms(mu, p)?;
        let (we, we_wit) = sum_over_atoms(mu, |i, _| h[i].powf(pw));
        out.push(CriterionReport::exact("wolff-energy", we, we_wit, "exact per atom"));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Sobolev trace criteria

/// `c^β_p(μ; t)` over balls (and squares) with unions.
pub fn cap_minimizing_frac(mu: &DiscreteMeasure, table: &FracCapacityTable, family: &SetFamily, t: f64) -> Result<(f64, Witness)> {
    let pool = CapacityPool::balls(mu, table, family)?;
    // μ(T(O)) > t strictly
    Ok(pool.min_capacity(next_up(t)))
}

fn next_up(t: f64) -> f64 {
    if t == 0.0 {
        f64::MIN_POSITIVE
    } else {
        t * (1.0 + f64::EPSILON)
    }
}

/// Criteria for `P_α : W^{β,p} → L^q(μ)`.
///
/// For `p ≤ q` (with `p < n/β`, or `p = 1`): the level form
/// `sup_t t^{p/q}/c^β_p(μ;t)`, the set form `sup μ(T(O))^{p/q}/Cap(O)`, the
/// ball form `sup μ(T(B(x,r)))^{p/q} / r^{n-βp}` and, at `p = 1`, the perimeter
/// form `sup μ(T(O))^{1/q} / Per_β(O)`.
/// For `q < p`: the level integral when `1 < p < n/β`, and at `p = 1` the
/// necessary condition `sup μ(T(O))^{1/q} / Cap^{β,1}(O)`.
pub fn check_sobolev_embedding(
    mu: &DiscreteMeasure,
    beta: f64,
    p: f64,
    q: f64,
    table: &FracCapacityTable,
    family: Option<&SetFamily>,
) -> Result<Vec<CriterionReport>> {
    check_exponents(p, q, table.p)?;
    check_dim(mu, table.dim)?;
    if (beta - table.beta).abs() > 1e-12 {
        return Err(invalid("beta", format!("table was computed for beta = {}", table.beta)));
    }
    let n = table.dim as f64;
    if p > 1.0 && beta * p >= n {
        return Err(if beta * p == n {
            CapaxError::Unsupported(format!("p = n/beta = {p}"))
        } else {
            invalid("p", format!("need p < n/beta = {}", n / beta))
        });
    }
    let base = family.cloned().unwrap_or_else(|| SetFamily::balls_for(mu));
    let levels = base.levels();
    let pools: Vec<CapacityPool> = levels
        .iter()
        .map(|f| CapacityPool::balls(mu, table, f))
        .collect::<Result<_>>()?;
    let desc = base.describe();
    let mut out = Vec::new();
    if p <= q {
        let a = p / q;
        let level_form = pools
            .iter()
            .map(|pl| {
                let mut masses: Vec<f64> = pl.sets.iter().map(|c| c.mass).collect();
                masses.sort_by(f64::total_cmp);
                masses.dedup();
                masses
                    .iter()
                    .map(|&m| {
                        // sup over t < m of t^a / c(t), approached as t → m
                        let (c, w) = pl.min_capacity(m);
                        (m.powf(a) / c, w)
                    })
                    .fold((0.0, Witness::None), |b, v| if v.0 > b.0 { v } else { b })
            })
            .collect();
        out.push(CriterionReport::from_levels("capacity-level", level_form, desc.clone(), Vec::new()));
        out.push(CriterionReport::from_levels(
            "capacity-set",
            pools.iter().map(|pl| pl.sup_ratio(a)).collect(),
            desc.clone(),
            Vec::new(),
        ));
        out.push(CriterionReport::from_levels(
            "ball",
            levels
                .iter()
                .map(|f| {
                    family_sup(mu, f, a, |w| match w {
                        Witness::Ball { .. } => Some(table.capacity_of(w)),
                        _ => None,
                    })
                })
                .collect(),
            desc.clone(),
            Vec::new(),
        ));
        if p == 1.0 {
            out.push(CriterionReport::from_levels(
                "perimeter",
                pools.iter().map(|pl| pl.sup_by(1.0 / q, |c| table.perimeter_of(&c.witness))).collect(),
                desc.clone(),
                Vec::new(),
            ));
        }
    } else if p == 1.0 {
        out.push(CriterionReport::from_levels(
            "necessary-capacity",
            pools.iter().map(|pl| pl.sup_ratio(1.0 / q)).collect(),
            desc.clone(),
            vec!["necessary condition only".into()],
        ));
    } else {
        out.push(CriterionReport::from_levels(
            "capacity-integral",
            pools.iter().map(|pl| (pl.level_integral(p, q), Witness::None)).collect(),
            desc.clone(),
            Vec::new(),
        ));
    }
    Ok(out)
}

/// For `q < p = 1`: a finite empirical ratio requires the necessary
/// criterion to be finite; `false` flags a broken ordering.
pub fn chain_consistent(empirical_finite: bool, necessary: &CriterionReport) -> bool {
    !(empirical_finite && necessary.verdict == Verdict::Infinite)
}

// ---------------------------------------------------------------------------
// Empirical embedding ratio

/// The normed space the test functions are measured in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestSpace {
    Lebesgue,
    Sobolev { beta: f64 },
}

/// Test functions: every profile centred at each atom at dyadic scales
/// between `2h` and `L/4` (plus the atom's height), and `random` more with
/// uniform centres and log-uniform scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub random: usize,
    pub seed: u64,
    pub scales_per_octave: usize,
}

impl Default for TestFamily {
    fn default() -> Self {
        Self {
            random: 64,
            seed: 0,
            scales_per_octave: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalRatio {
    #[serde(with = "sentinel")]
    pub sup: f64,
    pub witness: Witness,
    pub evaluated: usize,
    /// Members with a zero norm, left out.
    pub skipped: usize,
}

fn test_members(mu: &DiscreteMeasure, spec: &GridSpec, fam: &TestFamily) -> Vec<(Profile, [f64; 2], f64)> {
    let n = spec.dim();
    let h = spec.spacing();
    let l = spec.extent();
    let (lo, hi) = (2.0 * h, (l / 4.0).max(4.0 * h));
    let k = fam.scales_per_octave.max(1) as f64;
    let steps = ((hi / lo).log2() * k).floor() as i64;
    let mut centres: Vec<([f64; 2], f64)> = Vec::new();
    for a in mu.atoms() {
        let c = [a.x[0], if n == 2 { a.x[1] } else { 0.0 }];
        if !centres.iter().any(|(x, _)| *x == c) {
            centres.push((c, a.t));
        }
    }
    let mut out = Vec::new();
    for (c, t) in &centres {
        let scales = (0..=steps).map(|j| lo * (j as f64 / k).exp2()).chain((*t > lo && *t < hi).then_some(*t));
        for s in scales {
            for pr in Profile::ALL {
                out.push((pr, *c, s));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fam.seed);
    for _ in 0..fam.random {
        let pr = Profile::ALL[rng.random_range(0..3)];
        let c0 = rng.random_range(-0.5 * l..0.5 * l);
        let c1 = if n == 2 { rng.random_range(-0.5 * l..0.5 * l) } else { 0.0 };
        let s = lo * (hi / lo).powf(rng.random::<f64>());
        out.push((pr, [c0, c1], s));
    }
    out
}

/// `sup_f ‖P_α f‖_{L^q(μ)} / ‖f‖` over a seeded family of test functions.
pub fn empirical_embedding_ratio(
    mu: &DiscreteMeasure,
    p: f64,
    q: f64,
    space: TestSpace,
    params: &KernelParams,
    spec: &GridSpec,
    family: &TestFamily,
) -> Result<EmpiricalRatio> {
    if mu.dim() != spec.dim() || params.dim() != spec.dim() {
        return Err(CapaxError::GridMismatch("measure, kernel and grid dimensions differ".into()));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid("p", "need 1 ≤ p < ∞"));
    }
    if !(q > 0.0 && q.is_finite()) {
        return Err(invalid("q", "must be positive and finite"));
    }
    let sobolev = match space {
        TestSpace::Sobolev { beta } => Some(SobolevParams::auto(spec.dim(), beta, p)?),
        TestSpace::Lebesgue => None,
    };
    let n = spec.dim();
    let members = test_members(mu, spec, family);
    let ratios: Vec<Option<f64>> = members
        .par_iter()
        .map(|&(pr, c, s)| {
            let f = GridFunction::from_fn(*spec, |x| {
                let d = if n == 2 { (x[0] - c[0]).hypot(x[1] - c[1]) } else { (x[0] - c[0]).abs() };
                pr.eval(d / s)
            });
            let norm = match &sobolev {
                Some(sp) => sobolev_norm(&f, sp)?,
                None => lp_norm(&f, p)?,
            };
            if !(norm > 0.0) {
                return Ok(None);
            }
            let mut acc = 0.0;
            for a in mu.atoms() {
                acc += a.w * extension_at(&f, params, &a.x[..n], a.t)?.abs().powf(q);
            }
            Ok(Some(acc.powf(1.0 / q) / norm))
        })
        .collect::<Result<_>>()?;
    let mut best = (0.0, Witness::None);
    let mut skipped = 0;
    for (r, &(profile, center, scale)) in ratios.iter().zip(&members) {
        match r {
            None => skipped += 1,
            Some(v) if *v > best.0 => best = (*v, Witness::Function { profile, center, scale }),
            _ => {}
        }
    }
    Ok(EmpiricalRatio {
        sup: best.0,
        witness: best.1,
        evaluated: members.len() - skipped,
        skipped,
    })
}

/// Spearman rank correlation, ties ranked by their average position.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(invalid("samples", "need two samples of equal length ≥ 2"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean) * (x - mean);
        sbb += (y - mean) * (y - mean);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(invalid("samples", "constant sample"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::extend;

    fn spec1(l: f64, m: usize) -> GridSpec {
        GridSpec::new(1, l, m).unwrap()
    }

    fn synthetic_table(p: f64) -> BoxCapacityTable {
        let params = KernelParams::new(1, 1.0).unwrap();
        let ratios = BoxCapacityTable::default_ratios();
        let values: Vec<f64> = ratios.iter().map(|r| 2.0 / (1.0 + r).powf(0.7)).collect();
        BoxCapacityTable::from_values(&params, p, &ratios, &values).unwrap()
    }

    fn cloud(seed: u64) -> DiscreteMeasure {
        DiscreteMeasure::random_cloud(1, 12, 2.0, 0.05, 1.0, seed).unwrap()
    }

    #[test]
    fn verdict_rules() {
        assert_eq!(verdict(&[1.0, 1.05, 1.06]), Verdict::Finite);
        assert_eq!(verdict(&[0.0, 0.0, 0.0]), Verdict::Finite);
        assert_eq!(verdict(&[1.0, 2.5, 6.0]), Verdict::Infinite);
        assert_eq!(verdict(&[1.0, f64::INFINITY]), Verdict::Infinite);
        assert_eq!(verdict(&[1.0, 1.5, 2.0]), Verdict::Inconclusive);
        assert_eq!(verdict(&[0.0, 0.0, 4.0]), Verdict::Inconclusive);
    }

    #[test]
    fn tent_of_ball_follows_triangle_inequality() {
        let spec = spec1(4.0, 64);
        let h = spec.spacing();
        let o = OpenSetGrid::ball(spec, [0.0; 2], 1.0).unwrap();
        let ladder = TLadder::from_slices(vec![0.25, 0.5, 0.75]).unwrap();
        let t = tent(&o, &ladder, BallRule::Closed);
        for (j, &r) in ladder.slices().iter().enumerate() {
            for i in 0..spec.len() {
                let x = spec.coords(i)[0].abs();
                // member nodes are |x| < 1, so the clearance is 1 - |x| up to a cell
                if x + r < 1.0 - h {
                    assert!(t.contains(i, j), "x={x} r={r}");
                }
                if x + r > 1.0 + h {
                    assert!(!t.contains(i, j), "x={x} r={r}");
                }
            }
        }
        let big = OpenSetGrid::ball(spec, [0.0; 2], 1.5).unwrap();
        assert!(t.is_subset_of(&tent(&big, &ladder, BallRule::Closed)));
        let open = tent(&o, &ladder, BallRule::Open);
        assert!(t.is_subset_of(&open));
    }

    #[test]
    fn empty_set_has_empty_tent() {
        let spec = spec1(4.0, 32);
        let o = OpenSetGrid::new(IndicatorSet::empty(spec)).unwrap();
        let ladder = TLadder::geometric(0.1, 1.0, 5).unwrap();
        assert_eq!(tent(&o, &ladder, BallRule::Closed).count(), 0);
        assert_eq!(tent(&o, &ladder, BallRule::Open).count(), 0);
    }

    #[test]
    fn sets_touching_the_ring_are_rejected() {
        let spec = spec1(2.0, 16);
        let mut mem = vec![false; 16];
        mem[0] = true;
        assert!(OpenSetGrid::new(IndicatorSet::new(spec, mem).unwrap()).is_err());
    }

    #[test]
    fn clearance_matches_brute_force_2d() {
        let spec = GridSpec::new(2, 2.0, 20).unwrap();
        let set = IndicatorSet::ball(spec, [0.1, -0.2], 1.3).unwrap();
        let o = OpenSetGrid::new(set.clone()).unwrap();
        for i in 0..spec.len() {
            let brute = (0..spec.len())
                .filter(|&j| !set.membership()[j])
                .map(|j| spec.dist2(i, j).sqrt())
                .fold(f64::INFINITY, f64::min);
            let want = if set.membership()[i] { brute } else { 0.0 };
            assert!((o.clearance()[i] - want).abs() < 1e-12);
        }
        let x = [0.33, 0.07];
        let brute = (0..spec.len())
            .filter(|&j| !set.membership()[j])
            .map(|j| dist(&x, &spec.coords(j), 2))
            .fold(f64::INFINITY, f64::min);
        assert!((o.distance_to_complement(&x) - brute).abs() < 1e-12);
    }

    #[test]
    fn tent_mass_counts_atoms_under_the_set() {
        let spec = spec1(4.0, 128);
        let o = OpenSetGrid::ball(spec, [0.0; 2], 1.0).unwrap();
        let mu = DiscreteMeasure::new(
            1,
            vec![Atom::new_1d(0.0, 0.5, 1.0), Atom::new_1d(0.8, 0.5, 2.0), Atom::new_1d(0.2, 0.3, 4.0)],
        )
        .unwrap();
        assert_eq!(tent_mass(&o, &mu, BallRule::Closed).unwrap(), 5.0);
    }

    #[test]
    fn level_sets_shrink_with_the_level() {
        let spec = spec1(4.0, 64);
        let f = GridFunction::from_fn(spec, |x| (-x[0] * x[0]).exp());
        let params = KernelParams::new(1, 1.0).unwrap();
        let u = extend(&f, &TLadder::for_grid(&spec, 12).unwrap(), &params).unwrap().field;
        let hi = level_sets(&u, 0.4);
        let lo = level_sets(&u, 0.2);
        assert!(hi.upper.iter().zip(&lo.upper).all(|(a, b)| !a || *b));
        assert!(hi.maximal.iter().zip(&lo.maximal).all(|(a, b)| !a || *b));
        let none = level_sets(&u, 2.0);
        assert!(none.upper.iter().chain(&none.maximal).all(|b| !b));
    }

    #[test]
    fn containment_holds_node_exactly() {
        let params = KernelParams::new(1, 1.0).unwrap();
        let spec = spec1(4.0, 128);
        let f = GridFunction::from_fn(spec, |x| (-(x[0] - 0.3).powi(2) * 3.0).exp() - 0.5 * (-(x[0] + 1.0).powi(2) * 8.0).exp());
        let u = extend(&f, &TLadder::for_grid(&spec, 16).unwrap(), &params).unwrap().field;
        let mu = DiscreteMeasure::random_cloud(1, 60, 2.0, 0.05, 2.0, 3).unwrap();
        for s in [0.05, 0.1, 0.2, 0.4] {
            for k in [1.0, 2.0, 3.5] {
                let r = level_set_containment_check(&u, &mu, s, k).unwrap();
                assert!(r.holds && r.violations == 0, "{r:?}");
            }
        }
    }

    #[test]
    fn containment_in_2d() {
        let params = KernelParams::new(2, 1.0).unwrap();
        let spec = GridSpec::new(2, 2.0, 24).unwrap();
        let f = GridFunction::from_fn(spec, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1])).exp());
        let u = extend(&f, &TLadder::for_grid(&spec, 8).unwrap(), &params).unwrap().field;
        let mu = DiscreteMeasure::random_cloud(2, 30, 1.5, 0.1, 1.0, 5).unwrap();
        for s in [0.1, 0.3] {
            let r = level_set_containment_check(&u, &mu, s, 1.5).unwrap();
            assert!(r.holds, "{r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn table_interpolation() {
        let t = synthetic_table(2.0);
        for (r, v) in t.ratios.iter().zip(&t.values) {
            assert!((t.unit(*r) - v).abs() < 1e-12);
        }
        let mid = t.unit(0.03);
        assert!(mid < t.values[0] && mid > t.values[1]);
        assert!(t.unit(8.0) < t.unit(4.0));
        assert!((t.box_capacity(2.0, 2.0) - 2.0 * t.unit(1.0)).abs() < 1e-12);
    }

    #[test]
    fn min_capacity_is_monotone_with_sentinel() {
        let mu = cloud(1);
        let table = synthetic_table(2.0);
        let fam = SetFamily::boxes_for(&mu);
        let pool = CapacityPool::boxes(&mu, &table, &fam).unwrap();
        let total = mu.total_mass();
        let mut prev = 0.0;
        for k in 1..=40 {
            let lambda = total * k as f64 / 40.0;
            let (c, _) = pool.min_capacity(lambda);
            assert!(c >= prev);
            prev = c;
        }
        assert!(pool.min_capacity(total * 1.01).0.is_infinite());
        let target = 0.5 * mu.atoms().iter().map(|a| a.w).fold(0.0, f64::max);
        let (c, w) = cap_minimizing_lp(&mu, &table, &fam, target).unwrap();
        assert!(w.mass(&mu) >= target);
        assert!(c.is_finite());
    }

    #[test]
    fn single_atom_box_minimum() {
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 1.0, 1.0)]).unwrap();
        let table = synthetic_table(2.0);
        let fam = SetFamily::boxes_for(&mu);
        let (c, w) = cap_minimizing_lp(&mu, &table, &fam, 1.0).unwrap();
        // brute force over the family members containing the atom
        let best = fam
            .members(&mu)
            .into_iter()
            .filter(|w| w.mass(&mu) >= 1.0)
            .map(|w| match w {
                Witness::Box { r, t0, .. } => table.box_capacity(r, t0),
                _ => unreachable!(),
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(c, best);
        assert_eq!(w.mass(&mu), 1.0);
    }

    #[test]
    fn capacity_functions_are_translation_invariant() {
        let mu = cloud(2);
        let moved = mu.translated([0.375, 0.0]);
        let table = synthetic_table(2.0);
        let a = CapacityPool::boxes(&mu, &table, &SetFamily::boxes_for(&mu)).unwrap();
        let b = CapacityPool::boxes(&moved, &table, &SetFamily::boxes_for(&moved)).unwrap();
        let ftable = FracCapacityTable {
            dim: 1,
            beta: 0.5,
            p: 1.5,
            ball: 3.0,
            square: None,
            ball_perimeter: None,
            square_perimeter: None,
        };
        let fa = CapacityPool::balls(&mu, &ftable, &SetFamily::balls_for(&mu)).unwrap();
        let fb = CapacityPool::balls(&moved, &ftable, &SetFamily::balls_for(&moved)).unwrap();
        let total = mu.total_mass();
        for k in 1..=20 {
            let l = total * k as f64 / 20.0;
            for (x, y) in [(a.min_capacity(l).0, b.min_capacity(l).0), (fa.min_capacity(l).0, fb.min_capacity(l).0)] {
                assert!(x == y || (x - y).abs() <= 1e-12 * x.abs(), "{x} {y}");
            }
        }
    }

    #[test]
    fn criteria_are_monotone_in_the_measure() {
        let mu2 = cloud(4);
        let mu1 = DiscreteMeasure::new(
            1,
            mu2.atoms().iter().enumerate().map(|(i, a)| Atom { w: a.w * (0.3 + 0.05 * i as f64).min(1.0), ..*a }).collect(),
        )
        .unwrap();
        let table = synthetic_table(2.0);
        for q in [1.5, 3.0] {
            let r1 = check_lp_embedding(&mu1, 2.0, q, &table, Some(&SetFamily::boxes_for(&mu2))).unwrap();
            let r2 = check_lp_embedding(&mu2, 2.0, q, &table, Some(&SetFamily::boxes_for(&mu2))).unwrap();
            for (a, b) in r1.iter().zip(&r2) {
                for (x, y) in a.values.iter().zip(&b.values) {
                    assert!(x <= &(y * (1.0 + 1e-12)), "{} {x} {y}", a.id);
                }
            }
        }
        let ftable = FracCapacityTable {
            dim: 1,
            beta: 0.5,
            p: 1.0,
            ball: 3.0,
            square: None,
            ball_perimeter: Some(1.5),
            square_perimeter: None,
        };
        for q in [0.5, 2.0] {
            let fam = SetFamily::balls_for(&mu2);
            let r1 = check_sobolev_embedding(&mu1, 0.5, 1.0, q, &ftable, Some(&fam)).unwrap();
            let r2 = check_sobolev_embedding(&mu2, 0.5, 1.0, q, &ftable, Some(&fam)).unwrap();
            for (a, b) in r1.iter().zip(&r2) {
                for (x, y) in a.values.iter().zip(&b.values) {
                    assert!(x <= &(y * (1.0 + 1e-12)), "{} {x} {y}", a.id);
                }
            }
        }
    }

    #[test]
    fn witnesses_reproduce_values() {
        let mu = cloud(6);
        let table = synthetic_table(2.0);
        let reports = check_lp_embedding(&mu, 2.0, 3.0, &table, None).unwrap();
        let n = 1.0;
        for r in &reports {
            let m = r.witness.mass(&mu);
            let v = match (r.id.as_str(), &r.witness) {
                ("capacity-sup", w) => m.powf(2.0 / 3.0) / witness_box_capacity(w, &table),
                (_, Witness::Box { r, .. }) => m / r.powf(3.0 * n / 2.0),
                _ => unreachable!(),
            };
            assert!((v - r.value).abs() <= 1e-12 * v, "{} {v} {}", r.id, r.value);
        }
        for r in reports.iter().filter(|r| r.id.starts_with("box")) {
            assert!(r.values.windows(2).all(|w| w[1] >= w[0]), "{r:?}");
        }
        let json = serde_json::to_string(&reports).unwrap();
        let back: Vec<CriterionReport> = serde_json::from_str(&json).unwrap();
        assert_eq!(back[0].witness, reports[0].witness);
    }

    fn witness_box_capacity(w: &Witness, table: &BoxCapacityTable) -> f64 {
        match w {
            Witness::Box { r, t0, .. } => table.box_capacity(*r, *t0),
            Witness::Union { parts } => parts.iter().map(|p| witness_box_capacity(p, table)).sum(),
            _ => f64::NAN,
        }
    }

    #[test]
    fn sentinel_round_trip() {
        let r = CriterionReport::exact("x", f64::INFINITY, Witness::None, "f");
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"inf\""));
        let back: CriterionReport = serde_json::from_str(&s).unwrap();
        assert!(back.value.is_infinite() && back.verdict == Verdict::Infinite);
    }

    #[test]
    fn zero_measure_gives_zero_criteria() {
        let mu = DiscreteMeasure::empty(1);
        let table = synthetic_table(2.0);
        for q in [1.5, 2.0, 3.0] {
            for r in check_lp_embedding(&mu, 2.0, q, &table, None).unwrap() {
                assert_eq!(r.value, 0.0, "{}", r.id);
                assert_eq!(r.verdict, Verdict::Finite);
            }
        }
    }

    #[test]
    fn level_integral_matches_quadrature() {
        let mu = cloud(8);
        let table = synthetic_table(3.0);
        let pool = CapacityPool::boxes(&mu, &table, &SetFamily::boxes_for(&mu)).unwrap();
        let (p, q) = (3.0, 1.5);
        let exact = pool.level_integral(p, q);
        let total = mu.total_mass();
        // midpoint rule in λ on a fine grid
        let steps = 200_000;
        let d = total / steps as f64;
        let mut sum = 0.0;
        for k in 0..steps {
            let l = (k as f64 + 0.5) * d;
            let c = pool.min_capacity(l).0;
            sum += (l.powf(p / q) / c).powf(q / (p - q)) / l * d;
        }
        assert!((sum - exact).abs() < 1e-3 * exact, "{sum} {exact}");
    }

    #[test]
    fn box_wolff_integral_matches_quadrature() {
        let mu = cloud(9);
        let table = synthetic_table(2.0);
        let a = mu.atoms()[3];
        let exact = box_wolff_integral(&mu, &a.x[..1], a.t, &table);
        let (lo, hi) = (1e-4f64, 10.0f64);
        let steps = 400_000;
        let d = (hi / lo).ln() / steps as f64;
        let mut sum = 0.0;
        for k in 0..steps {
            let r = lo * ((k as f64 + 0.5) * d).exp();
            let m = crate::wolff::box_mass(&mu, r, &a.x[..1], a.t).unwrap();
            sum += m / table.box_capacity(r, a.t) * d;
        }
        assert!((sum - exact).abs() < 1e-3 * exact.max(1e-12), "{sum} {exact}");
    }

    #[test]
    fn singular_measure_is_not_declared_finite() {
        // atoms at heights 2^-j with weights 2^-j
        let atoms = (1..=24).map(|j| Atom::new_1d(0.0, (-(j as f64)).exp2(), (-(j as f64)).exp2())).collect();
        let mu = DiscreteMeasure::new(1, atoms).unwrap();
        let table = synthetic_table(2.0);
        let reports = check_lp_embedding(&mu, 2.0, 3.0, &table, None).unwrap();
        let ball = reports.iter().find(|r| r.id == "box-t0-le-r").unwrap();
        assert_ne!(ball.verdict, Verdict::Finite, "{ball:?}");
        assert!(ball.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn sobolev_rejects_critical_exponent() {
        let mu = cloud(1);
        let ftable = FracCapacityTable {
            dim: 1,
            beta: 0.5,
            p: 2.0,
            ball: 1.0,
            square: None,
            ball_perimeter: None,
            square_perimeter: None,
        };
        assert!(matches!(
            check_sobolev_embedding(&mu, 0.5, 2.0, 2.0, &ftable, None),
            Err(CapaxError::Unsupported(_))
        ));
    }

    #[test]
    fn sobolev_ball_criterion_single_atom() {
        let cfg = SolverConfig::default();
        let table = FracCapacityTable::compute(1, 0.25, 2.0, &cfg).unwrap();
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(0.0, 0.1, 1.0)]).unwrap();
        let reports = check_sobolev_embedding(&mu, 0.25, 2.0, 2.0, &table, None).unwrap();
        let ball = reports.iter().find(|r| r.id == "ball").unwrap();
        // Cap(B(x,r)) = r^{1/2} Cap(B(0,1)) is least for the smallest ball whose tent holds the atom
        let Witness::Ball { r, .. } = ball.witness else { panic!() };
        assert!((ball.value - 1.0 / (r.sqrt() * table.ball)).abs() < 1e-12);
        assert!(r >= 0.1 && r < 0.2 * 1.5, "r = {r}");
        let sets = reports.iter().find(|r| r.id == "capacity-set").unwrap();
        assert!(sets.value >= ball.value * (1.0 - 1e-12));
        let (c, _) = cap_minimizing_frac(&mu, &table, &SetFamily::balls_for(&mu), 1.0).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn empirical_ratio_single_atom_witness() {
        let params = KernelParams::new(1, 1.0).unwrap();
        let spec = spec1(4.0, 256);
        let mu = DiscreteMeasure::new(1, vec![Atom::new_1d(0.4, 0.2, 1.0)]).unwrap();
        let fam = TestFamily { random: 16, seed: 1, scales_per_octave: 2 };
        let r = empirical_embedding_ratio(&mu, 2.0, 2.0, TestSpace::Lebesgue, &params, &spec, &fam).unwrap();
        let Witness::Function { center, .. } = r.witness else { panic!() };
        assert!((center[0] - 0.4).abs() <= 2.0 * spec.spacing());
        assert_eq!(r.skipped, 0);
        let again = empirical_embedding_ratio(&mu, 2.0, 2.0, TestSpace::Lebesgue, &params, &spec, &fam).unwrap();
        assert_eq!(again.sup, r.sup);
        let scaled = empirical_embedding_ratio(&mu.scaled(8.0), 2.0, 3.0, TestSpace::Lebesgue, &params, &spec, &fam).unwrap();
        let base = empirical_embedding_ratio(&mu, 2.0, 3.0, TestSpace::Lebesgue, &params, &spec, &fam).unwrap();
        assert!((scaled.sup - 2.0 * base.sup).abs() < 1e-12 * base.sup);
    }

    #[test]
    fn empirical_ratio_sobolev_space() {
        let params = KernelParams::new(1, 1.0).unwrap();
        let spec = spec1(4.0, 128);
        let mu = cloud(3);
        let fam = TestFamily { random: 8, seed: 2, scales_per_octave: 1 };
        let r = empirical_embedding_ratio(&mu, 1.5, 2.0, TestSpace::Sobolev { beta: 0.3 }, &params, &spec, &fam).unwrap();
        assert!(r.sup > 0.0 && r.sup.is_finite());
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }
}

use crate::config::RunConfig;
use crate::output::{Contract, Report, Table};
use capax_core::capacity::{
    ball_bounds_check, ball_scaling_check, capacity, dyadic_ladder, equilibrium_check, strong_type_check,
    CompactSetGrid, SolverConfig,
};
use capax_core::embedding::{
    check_lp_embedding, check_sobolev_embedding, empirical_embedding_ratio, BoxCapacityTable, FracCapacityTable,
    TestFamily, TestSpace,
};
use capax_core::extension::{dirichlet_to_neumann, energy_identity, extend};
use capax_core::fracspaces::{
    coarea_check, frac_capacity, frac_perimeter, perimeter_via_extension, IndicatorGenerator, IndicatorSet,
};
use capax_core::grid::read_csv;
use capax_core::kernel::poisson_kernel;
use capax_core::suite::{self, Profile};
use capax_core::wolff::{maximal_comparison_check, parabolic_maximal_field, wolff_at_atoms, wolff_energy_check};
use capax_core::{CapaxError, DiscreteMeasure, GridFunction, GridSpec, KernelParams, TLadder};
use serde_json::{json, Value};
use std::fs::File;
use std::io::BufReader;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(CapaxError),
}

impl From<CapaxError> for CliError {
    fn from(e: CapaxError) -> Self {
        CliError::Core(e)
    }
}

type Out = Result<Report, CliError>;

pub fn dispatch(cfg: &RunConfig) -> Out {
    match cfg.subcommand.as_str() {
        "kernel" => kernel(cfg),
        "extend" => extend_cmd(cfg),
        "dtn" => dtn(cfg),
        "energy" => energy(cfg),
        "capacity" => capacity_cmd(cfg),
        "ball-sweep" => ball_sweep(cfg),
        "strongtype" => strongtype(cfg),
        "wolff" => wolff(cfg),
        "maximal" => maximal(cfg),
        "perimeter" => perimeter(cfg),
        "coarea" => coarea(cfg),
        "fraccap" => fraccap(cfg),
        "embed-check" => embed_check(cfg),
        "empirical-ratio" => empirical_ratio(cfg),
        "suite" => suite_cmd(cfg),
        other => Err(CliError::Config(format!("unknown subcommand {other}"))),
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn params(cfg: &RunConfig) -> Result<KernelParams, CliError> {
    Ok(KernelParams::new(cfg.n, cfg.alpha)?)
}

fn grid(cfg: &RunConfig) -> Result<GridSpec, CliError> {
    Ok(GridSpec::new(cfg.n, cfg.extent, cfg.m)?)
}

fn ladder(cfg: &RunConfig) -> Result<TLadder, CliError> {
    Ok(dyadic_ladder(cfg.t_min, cfg.t_max, cfg.k)?)
}

fn solver(cfg: &RunConfig) -> SolverConfig {
    SolverConfig {
        max_iterations: cfg.max_iterations,
        tolerance: cfg.tolerance,
        ..SolverConfig::default()
    }
}

fn open(path: &str) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Config(format!("{path}: {e}")))
}

/// The input grid function, or the built-in test function on the configured grid.
fn function(cfg: &RunConfig) -> Result<GridFunction, CliError> {
    if let Some(path) = &cfg.input {
        let f = read_csv(open(path)?)?;
        if f.spec().dim() != cfg.n {
            return Err(CliError::Config(format!("{path} is {}-dimensional but n = {}", f.spec().dim(), cfg.n)));
        }
        return Ok(f);
    }
    let spec = grid(cfg)?;
    let w = cfg.width;
    if !(w > 0.0) {
        return Err(CliError::Config("`width` must be positive".into()));
    }
    let r2 = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / (w * w);
    Ok(match cfg.function.as_str() {
        "gaussian" => GridFunction::from_fn(spec, |x| (-r2(x)).exp()),
        "bump" => GridFunction::from_fn(spec, |x| {
            let r = r2(x);
            if r < 1.0 {
                (-1.0 / (1.0 - r)).exp()
            } else {
                0.0
            }
        }),
        "indicator" => GridFunction::from_fn(spec, |x| if r2(x) < 1.0 { 1.0 } else { 0.0 }),
        other => return Err(CliError::Config(format!("unknown function {other} (gaussian|bump|indicator)"))),
    })
}

fn measure(cfg: &RunConfig) -> Result<DiscreteMeasure, CliError> {
    let path = cfg
        .measure
        .as_deref()
        .ok_or_else(|| CliError::Config("this subcommand needs --measure".into()))?;
    let mu = DiscreteMeasure::read_csv(open(path)?)?;
    if mu.dim() != cfg.n {
        return Err(CliError::Config(format!("{path} is {}-dimensional but n = {}", mu.dim(), cfg.n)));
    }
    Ok(mu)
}

/// The boundary set: a generator file or inline text, defaulting to the ball of radius `width`.
fn boundary_set(cfg: &RunConfig) -> Result<IndicatorSet, CliError> {
    let spec = grid(cfg)?;
    let Some(text) = &cfg.set else {
        return Ok(IndicatorSet::ball(spec, [0.0; 2], cfg.width)?);
    };
    let text = if std::path::Path::new(text).is_file() {
        std::fs::read_to_string(text).map_err(|e| CliError::Config(format!("{text}: {e}")))?
    } else {
        text.replace(';', "\n")
    };
    Ok(IndicatorSet::from_generator(spec, IndicatorGenerator::parse(&text)?)?)
}

fn coords_columns(n: usize) -> Vec<&'static str> {
    if n == 1 {
        vec!["x1"]
    } else {
        vec!["x1", "x2"]
    }
}

fn function_table(f: &GridFunction, name: &str) -> Table {
    let n = f.spec().dim();
    let mut cols = coords_columns(n);
    cols.push(name);
    let mut t = Table::new(&cols);
    for (i, v) in f.values().iter().enumerate() {
        let c = f.spec().coords(i);
        let mut row = c[..n].to_vec();
        row.push(*v);
        t.push(row);
    }
    t
}

fn kernel(cfg: &RunConfig) -> Out {
    let p = params(cfg)?;
    let spec = grid(cfg)?;
    let n = cfg.n;
    let f = GridFunction::from_fn(spec, |x| poisson_kernel(&p, x, cfg.t).unwrap_or(f64::NAN));
    let origin = poisson_kernel(&p, &vec![0.0; n], cfg.t)?;
    // midpoint rule on cell centres plus the exact mass outside the box
    let h = spec.spacing();
    let centres: Vec<f64> = (0..spec.points()).map(|i| -cfg.extent + (i as f64 + 0.5) * h).collect();
    let mut inner = 0.0;
    if n == 1 {
        for &x in &centres {
            inner += poisson_kernel(&p, &[x], cfg.t)?;
        }
    } else {
        for &x in &centres {
            for &y in &centres {
                inner += poisson_kernel(&p, &[x, y], cfg.t)?;
            }
        }
    }
    let tail = p.mass_outside_cube(cfg.extent, cfg.t);
    let mass = inner * h.powi(n as i32) + tail;
    Ok(Report {
        result: json!({
            "value_at_origin": num(origin),
            "normalization": num(p.normalization()),
            "mass": num(mass),
            "tail_mass": num(tail),
        }),
        table: Some(function_table(&f, "value")),
        contracts: vec![Contract::new(
            "unit-mass",
            (mass - 1.0).abs() <= 1e-3,
            format!("|mass - 1| = {:.3e}", (mass - 1.0).abs()),
        )],
        ..Report::default()
    })
}

fn extend_cmd(cfg: &RunConfig) -> Out {
    let f = function(cfg)?;
    let p = params(cfg)?;
    let l = ladder(cfg)?;
    let r = extend(&f, &l, &p)?;
    let n = cfg.n;
    let mut cols = coords_columns(n);
    cols.push("t");
    cols.push("u");
    let mut t = Table::new(&cols);
    for (j, tt) in l.slices().iter().enumerate() {
        for (i, v) in r.field.slice(j).iter().enumerate() {
            let c = f.spec().coords(i);
            let mut row = c[..n].to_vec();
            row.extend([*tt, *v]);
            t.push(row);
        }
    }
    let nonneg = f.min() >= 0.0;
    let mut contracts = vec![Contract::new(
        "quadrature-converged",
        r.quadrature_converged,
        format!("{:?}", r.method),
    )];
    if nonneg {
        contracts.push(Contract::new(
            "maximum-principle",
            r.satisfies_max_principle(&f, 1e-9),
            format!("sup f {:.6e}, field range [{:.6e}, {:.6e}]", f.max(), r.field.min(), r.field.max()),
        ));
    }
    Ok(Report {
        result: json!({
            "method": to_value(&r.method),
            "slices": l.len(),
            "field_min": num(r.field.min()),
            "field_max": num(r.field.max()),
        }),
        table: Some(t),
        contracts,
        ..Report::default()
    })
}

fn dtn(cfg: &RunConfig) -> Out {
    let f = function(cfg)?;
    let r = dirichlet_to_neumann(&f, &params(cfg)?)?;
    Ok(Report {
        result: json!({
            "bandlimit_warning": r.bandlimit_warning,
            "extrapolation_diverged": r.extrapolation_diverged,
            "t_min": num(r.t_min),
        }),
        table: Some(function_table(&r.values, "dtn")),
        contracts: vec![Contract::new(
            "extrapolation-stable",
            !r.extrapolation_diverged,
            if r.bandlimit_warning { "input is not band-limited on the grid" } else { "" },
        )],
        ..Report::default()
    })
}

fn energy(cfg: &RunConfig) -> Out {
    let f = function(cfg)?;
    let p = params(cfg)?;
    let r = energy_identity(&f, &p)?;
    let c = p.dtn_constant();
    let ratio = r.ratio.unwrap_or(f64::NAN);
    let mut contracts = vec![Contract::new("ladder-converged", r.ladder_converged, "")];
    if r.ratio.is_some() {
        contracts.push(Contract::new(
            "ratio-matches-constant",
            (ratio / c - 1.0).abs() <= 0.05,
            format!("measured {ratio:.6} vs {c:.6}"),
        ));
    }
    Ok(Report {
        result: json!({
            "lhs": num(r.lhs),
            "rhs": num(r.rhs),
            "ratio": r.ratio.map(num),
            "rhs_refined": num(r.rhs_refined),
            "ladder_converged": r.ladder_converged,
            "dtn_constant": num(c),
        }),
        contracts,
        ..Report::default()
    })
}

fn parse_box(text: &str, n: usize) -> Result<(f64, [f64; 2], f64), CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("box {text}: {e}")))?;
    match (n, v.as_slice()) {
        (1, [r0, x0, t0]) => Ok((*r0, [*x0, 0.0], *t0)),
        (2, [r0, x0, y0, t0]) => Ok((*r0, [*x0, *y0], *t0)),
        _ => Err(CliError::Config(format!(
            "box {text}: expected r0,x0{},t0",
            if n == 2 { ",y0" } else { "" }
        ))),
    }
}

fn capacity_cmd(cfg: &RunConfig) -> Out {
    let spec = grid(cfg)?;
    let l = ladder(cfg)?;
    let p = params(cfg)?;
    let boxes = if cfg.boxes.is_empty() {
        vec![(1.0, [0.0; 2], 0.0)]
    } else {
        cfg.boxes.iter().map(|b| parse_box(b, cfg.n)).collect::<Result<_, _>>()?
    };
    let parts: Vec<CompactSetGrid> = boxes
        .iter()
        .map(|&(r0, x0, t0)| CompactSetGrid::box_set(spec, l.clone(), r0, x0, t0))
        .collect::<Result<_, _>>()?;
    let set = CompactSetGrid::union(&parts)?;
    if set.is_empty() {
        return Err(CliError::Config("the set contains no grid nodes".into()));
    }
    let r = capacity(&set, cfg.p, &p, &solver(cfg))?;
    let eq = equilibrium_check(&set, &r, &p)?;
    Ok(Report {
        result: json!({
            "nodes": set.len(),
            "primal_value": num(r.primal_value),
            "dual_value": num(r.dual_value),
            "rel_gap": num(r.rel_gap),
            "estimate": num(r.estimate()),
            "iterations": r.iterations,
            "converged": r.converged,
            "equilibrium": to_value(&eq),
        }),
        table: Some(function_table(&r.minimizer, "minimizer")),
        contracts: vec![
            Contract::new("duality-gap", r.rel_gap <= 0.1, format!("rel_gap {:.3e}", r.rel_gap)),
            Contract::new(
                "equilibrium",
                eq.pass,
                format!("max deviation {:.3e} (tolerance {:.3})", eq.max_deviation, eq.tolerance),
            ),
        ],
        ..Report::default()
    })
}

fn ball_sweep(cfg: &RunConfig) -> Out {
    let spec = grid(cfg)?;
    let l = ladder(cfg)?;
    let p = params(cfg)?;
    let s = solver(cfg);
    let scaling = ball_scaling_check(spec, &l, cfg.p, &p, &cfg.radii, &s)?;
    let sweep: Vec<(f64, f64)> = cfg
        .radii
        .iter()
        .flat_map(|&r| cfg.heights.iter().map(move |&t| (r, t)))
        .collect();
    let bounds = ball_bounds_check(spec, &l, cfg.p, &p, &sweep, &s)?;
    let mut t = Table::new(&["r0", "t0", "capacity", "rel_gap", "lower_normalized", "upper_normalized"]);
    for e in &bounds.entries {
        t.push(vec![e.r0, e.t0, e.capacity, e.rel_gap, e.lower_normalized, e.upper_normalized]);
    }
    Ok(Report {
        result: json!({ "scaling": to_value(&scaling), "bounds": {
            "lower_constant": num(bounds.lower_constant),
            "upper_constant": num(bounds.upper_constant),
            "near_boundary_constant": num(bounds.near_boundary_constant),
            "doubling_factor": num(bounds.doubling_factor),
        }}),
        table: Some(t),
        contracts: vec![
            Contract::new("scaling", scaling.pass, format!("spread {:.4}", scaling.spread)),
            Contract::new("bounds", bounds.pass, format!("doubling factor {:.4}", bounds.doubling_factor)),
        ],
        ..Report::default()
    })
}

fn strongtype(cfg: &RunConfig) -> Out {
    let f = function(cfg)?;
    let p = params(cfg)?;
    let l = ladder(cfg)?;
    let steps = cfg.k.clamp(1, 8);
    let r = strong_type_check(&f, cfg.p, &p, &l, steps, &solver(cfg))?;
    let mut t = Table::new(&["level", "capacity"]);
    for (lam, c) in r.levels.iter().zip(&r.capacities) {
        t.push(vec![*lam, *c]);
    }
    let finite = r.ratio.is_none_or(|v| v.is_finite());
    Ok(Report {
        result: json!({
            "lhs": num(r.lhs),
            "norm_p": num(r.norm_p),
            "ratio": r.ratio.map(num),
            "coarse_flag": r.coarse_flag,
            "steps_per_octave": steps,
        }),
        table: Some(t),
        contracts: vec![Contract::new("finite-ratio", finite, "")],
        ..Report::default()
    })
}

fn comparison(name: &str, lhs: f64, rhs: f64, ratio: f64) -> (Value, Contract) {
    (
        json!({ "lhs": num(lhs), "rhs": num(rhs), "ratio": num(ratio) }),
        Contract::new(name, ratio.is_finite() && ratio > 0.0, format!("ratio {ratio:.6e}")),
    )
}

fn wolff(cfg: &RunConfig) -> Out {
    let mu = measure(cfg)?;
    let spec = grid(cfg)?;
    let p = params(cfg)?;
    let h = wolff_at_atoms(&mu, cfg.p)?;
    let n = cfg.n;
    let mut cols = coords_columns(n);
    cols.extend(["t", "w", "wolff"]);
    let mut t = Table::new(&cols);
    for (a, v) in mu.atoms().iter().zip(&h) {
        let mut row = a.x[..n].to_vec();
        row.extend([a.t, a.w, *v]);
        t.push(row);
    }
    let c = wolff_energy_check(&mu, cfg.p, &spec, &p)?;
    let (value, contract) = comparison("energy-comparison", c.lhs, c.rhs, c.ratio);
    Ok(Report {
        result: json!({ "energy": value }),
        table: Some(t),
        contracts: vec![contract],
        ..Report::default()
    })
}

fn maximal(cfg: &RunConfig) -> Out {
    let mu = measure(cfg)?;
    let spec = grid(cfg)?;
    let field = parabolic_maximal_field(&mu, &spec)?;
    let c = maximal_comparison_check(&mu, cfg.p, &spec, &params(cfg)?)?;
    let (value, contract) = comparison("maximal-comparison", c.lhs, c.rhs, c.ratio);
    Ok(Report {
        result: json!({ "comparison": value }),
        table: Some(function_table(&field, "maximal")),
        contracts: vec![contract],
        ..Report::default()
    })
}

fn perimeter(cfg: &RunConfig) -> Out {
    let e = boundary_set(cfg)?;
    let direct = frac_perimeter(&e, cfg.s)?;
    let mut result = json!({ "perimeter": num(direct), "generator": e.generator().to_text() });
    let mut contracts = vec![Contract::new("finite", direct.is_finite(), "")];
    if cfg.slices > 0 {
        let r = perimeter_via_extension(&e, cfg.s, cfg.slices)?;
        result["via_extension"] = to_value(&r);
        let ratio = r.ratio.unwrap_or(f64::NAN);
        contracts.push(Contract::new(
            "extension-agrees",
            (ratio - 1.0).abs() <= 0.1,
            format!("ratio {ratio:.6}"),
        ));
    }
    Ok(Report {
        result,
        contracts,
        ..Report::default()
    })
}

fn coarea(cfg: &RunConfig) -> Out {
    let f = function(cfg)?;
    let r = coarea_check(&f, cfg.s, None)?;
    Ok(Report {
        result: to_value(&r),
        contracts: vec![Contract::new(
            "coarea",
            (r.ratio - 1.0).abs() <= 0.05 && !r.level_mismatch,
            format!("ratio {:.6}", r.ratio),
        )],
        ..Report::default()
    })
}

fn fraccap(cfg: &RunConfig) -> Out {
    let e = boundary_set(cfg)?;
    let r = frac_capacity(&e, cfg.beta, cfg.p, &solver(cfg))?;
    Ok(Report {
        result: to_value(&r),
        contracts: vec![Contract::new("duality-gap", r.rel_gap <= 0.1, format!("rel_gap {:.3e}", r.rel_gap))],
        ..Report::default()
    })
}

fn embed_check(cfg: &RunConfig) -> Out {
    let mu = measure(cfg)?;
    let s = solver(cfg);
    let reports = if cfg.beta > 0.0 {
        let table = FracCapacityTable::compute(cfg.n, cfg.beta, cfg.p, &s)?;
        check_sobolev_embedding(&mu, cfg.beta, cfg.p, cfg.q, &table, None)?
    } else {
        let table = BoxCapacityTable::compute(&params(cfg)?, cfg.p, &BoxCapacityTable::default_ratios(), &s)?;
        check_lp_embedding(&mu, cfg.p, cfg.q, &table, None)?
    };
    let clean = reports.iter().all(|r| !r.value.is_nan());
    Ok(Report {
        result: json!({ "space": if cfg.beta > 0.0 { "sobolev" } else { "lebesgue" }, "reports": to_value(&reports) }),
        contracts: vec![Contract::new("well-defined", clean, "")],
        ..Report::default()
    })
}

fn empirical_ratio(cfg: &RunConfig) -> Out {
    let mu = measure(cfg)?;
    let space = if cfg.beta > 0.0 {
        TestSpace::Sobolev { beta: cfg.beta }
    } else {
        TestSpace::Lebesgue
    };
    let family = TestFamily {
        random: cfg.samples,
        seed: cfg.seed,
        ..TestFamily::default()
    };
    let r = empirical_embedding_ratio(&mu, cfg.p, cfg.q, space, &params(cfg)?, &grid(cfg)?, &family)?;
    Ok(Report {
        result: to_value(&r),
        contracts: vec![Contract::new("finite", r.sup.is_finite(), format!("{} members", r.evaluated))],
        ..Report::default()
    })
}

fn suite_cmd(cfg: &RunConfig) -> Out {
    let profile = Profile::parse(&cfg.profile).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rows = vec![];
    let mut contracts = vec![];
    for id in 1..=suite::CRITERIA.len() {
        let o = suite::run(id, profile)?;
        eprintln!("[{}] {:>2} {} ({:.1} s)", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name, o.seconds);
        rows.push(vec![o.id.to_string(), o.name.clone(), o.passed.to_string(), o.detail.clone()]);
        contracts.push(Contract::new(&format!("criterion-{}", o.id), o.passed, o.name));
    }
    Ok(Report {
        result: json!({ "profile": cfg.profile, "passed": contracts.iter().filter(|c| c.holds).count(), "total": contracts.len() }),
        text_table: Some((
            vec!["id".into(), "criterion".into(), "passed".into(), "detail".into()],
            rows,
        )),
        contracts,
        ..Report::default()
    })
}

//! The experiment commands. Every command writes its CSV results, the
//! effective scenario, and a manifest into the output directory. CSV bytes
//! depend only on the scenario, seed, and flags, so identical runs produce
//! identical files; only the manifest timestamp moves.

use crate::cache::{SurfaceCache, SurfaceMeta};
use crate::output::{write_atomic, RunManifest};
use crate::plot::{heatmap_svg, Heatmap};
use launchopt::competitors::{strategic_surface, StrategicModel};
use launchopt::market::{
    evaluate_decision, evaluate_decision_multi, DecisionOutcome, EvalContext, SharedDraws,
};
use launchopt::optimize::{
    bayes_opt, grid_search, lattice, price_contingency, simulated_annealing, BoConfig, OptResult,
    PriceRule, SaSchedule,
};
use launchopt::scenario::{CompetitorSpec, Scenario};
use launchopt::{Error, Result};
use std::path::{Path, PathBuf};

/// Optimizer choices for [`cmd_optimize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Grid,
    Sa,
    Bo,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Grid => "grid",
            Method::Sa => "sa",
            Method::Bo => "bo",
        }
    }
}

/// One decision cell per lattice point, budget-aware: scenarios with a
/// budget distribution are scored by the multi-product market, the rest by
/// the single-purchase market.
fn eval_cell(ctx: &EvalContext, shared: &SharedDraws, t: f64, p: f64) -> Result<DecisionOutcome> {
    if ctx.market.budget.is_some() {
        evaluate_decision_multi(ctx, shared, t, p)
    } else {
        evaluate_decision(ctx, shared, t, p)
    }
}

/// A fully evaluated decision lattice.
#[derive(Debug)]
pub struct SurfaceEval {
    pub ts: Vec<f64>,
    pub ps: Vec<f64>,
    /// Row-major outcomes, release times outer.
    pub cells: Vec<DecisionOutcome>,
    /// Lattice indices of the expected-utility argmax (first on ties).
    pub best: (usize, usize),
}

impl SurfaceEval {
    pub fn best_point(&self) -> (f64, f64) {
        (self.ts[self.best.0], self.ps[self.best.1])
    }

    pub fn best_cell(&self) -> &DecisionOutcome {
        &self.cells[self.best.0 * self.ps.len() + self.best.1]
    }
}

/// Evaluates every lattice cell against one shared draw bank (common random
/// numbers across cells).
fn eval_surface(scn: &Scenario, ctx: &EvalContext, grid: (usize, usize)) -> Result<SurfaceEval> {
    let (nt, np) = grid;
    if nt == 0 || np == 0 {
        return Err(Error::invalid(format!("grid needs positive dimensions, got {nt}x{np}")));
    }
    let bx = scn.decision_box();
    let ts = lattice(bx.t_lo, bx.t_hi, nt);
    let ps = lattice(bx.p_lo, bx.p_hi, np);
    let shared = SharedDraws::build(ctx, scn.mc_size, scn.seed)?;
    let mut cells = Vec::with_capacity(nt * np);
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for (i, &t) in ts.iter().enumerate() {
        for (j, &p) in ps.iter().enumerate() {
            let out = eval_cell(ctx, &shared, t, p)?;
            if out.expected_utility > best_v {
                best_v = out.expected_utility;
                best = (i, j);
            }
            cells.push(out);
        }
    }
    Ok(SurfaceEval { ts, ps, cells, best })
}

fn common_flags(scn: &Scenario, grid: (usize, usize)) -> Vec<(String, String)> {
    vec![
        ("grid".into(), format!("{}x{}", grid.0, grid.1)),
        ("mc_size".into(), scn.mc_size.to_string()),
    ]
}

/// Writes the effective scenario and the manifest; every command ends here.
fn finish(
    command: &str,
    scn: &Scenario,
    out: &Path,
    flags: Vec<(String, String)>,
    outputs: Vec<String>,
) -> Result<RunManifest> {
    write_atomic(&out.join("scenario.json"), (scn.to_json() + "\n").as_bytes())?;
    let mut m = RunManifest::new(command, scn.canonical_hash(), scn.seed);
    for (k, v) in flags {
        m.flags.insert(k, v);
    }
    for o in outputs {
        m.push_output(o);
    }
    m.push_output("scenario.json");
    m.save(out)?;
    Ok(m)
}

fn rel_name(out: &Path, p: &Path) -> String {
    p.strip_prefix(out)
        .map(|q| q.display().to_string())
        .unwrap_or_else(|_| p.display().to_string())
}

#[derive(Debug)]
pub struct SurfaceRun {
    pub eval: SurfaceEval,
    pub manifest: RunManifest,
}

/// Shared tail of the surface-producing commands: lattice CSV plus
/// expected-utility and purchase-probability heatmaps, argmax marked.
fn surface_command(
    command: &str,
    scn: &Scenario,
    ctx: &EvalContext,
    grid: (usize, usize),
    out: &Path,
    extra_flags: Vec<(String, String)>,
    extra_outputs: Vec<String>,
) -> Result<SurfaceRun> {
    let ev = eval_surface(scn, ctx, grid)?;
    let np = ev.ps.len();
    let mut csv = String::from(
        "t1,p1,expected_utility,expected_profit,purchase_prob,pi_std_error,expected_cost\n",
    );
    for (i, &t) in ev.ts.iter().enumerate() {
        for (j, &p) in ev.ps.iter().enumerate() {
            let o = &ev.cells[i * np + j];
            csv.push_str(&format!(
                "{t},{p},{},{},{},{},{}\n",
                o.expected_utility, o.expected_profit, o.purchase_prob, o.pi_std_error,
                o.expected_cost
            ));
        }
    }
    write_atomic(&out.join(format!("{command}.csv")), csv.as_bytes())?;
    let eu: Vec<f64> = ev.cells.iter().map(|o| o.expected_utility).collect();
    let pi: Vec<f64> = ev.cells.iter().map(|o| o.purchase_prob).collect();
    let eu_svg = heatmap_svg(&Heatmap {
        title: "expected utility over (t1, p1)",
        ts: &ev.ts,
        ps: &ev.ps,
        values: &eu,
        mark: Some(ev.best),
    });
    let pi_svg = heatmap_svg(&Heatmap {
        title: "purchase probability over (t1, p1)",
        ts: &ev.ts,
        ps: &ev.ps,
        values: &pi,
        mark: Some(ev.best),
    });
    write_atomic(&out.join(format!("{command}_eu.svg")), eu_svg.as_bytes())?;
    write_atomic(&out.join(format!("{command}_pi.svg")), pi_svg.as_bytes())?;

    let mut flags = common_flags(scn, grid);
    flags.extend(extra_flags);
    let mut outputs = vec![
        format!("{command}.csv"),
        format!("{command}_eu.svg"),
        format!("{command}_pi.svg"),
    ];
    outputs.extend(extra_outputs);
    let manifest = finish(command, scn, out, flags, outputs)?;
    Ok(SurfaceRun { eval: ev, manifest })
}

/// Full-lattice evaluation of the scenario's decision surface.
pub fn cmd_surface(scn: &Scenario, grid: (usize, usize), out: &Path) -> Result<SurfaceRun> {
    let ctx = scn.build_context()?;
    surface_command("surface", scn, &ctx, grid, out, vec![], vec![])
}

/// Surface run for budget-constrained markets where buyers can hold several
/// products.
pub fn cmd_multi(scn: &Scenario, grid: (usize, usize), out: &Path) -> Result<SurfaceRun> {
    if scn.market.budget.is_none() {
        return Err(Error::Scenario(
            "multi-item run needs a budget distribution (market.budget)".into(),
        ));
    }
    let ctx = scn.build_context()?;
    surface_command("multi", scn, &ctx, grid, out, vec![], vec![])
}

/// Surface run against strategic competitors. Rival surfaces are cached on
/// disk keyed by scenario hash; a miss triggers a build.
pub fn cmd_strategic(
    scn: &Scenario,
    grid: (usize, usize),
    cache_dir: Option<&Path>,
    out: &Path,
) -> Result<SurfaceRun> {
    if scn.competitors.iter().all(|c| matches!(c, CompetitorSpec::Level0 { .. })) {
        return Err(Error::Scenario(
            "strategic run needs at least one non-level-0 competitor".into(),
        ));
    }
    let cache_dir: PathBuf = cache_dir.map(Path::to_path_buf).unwrap_or_else(|| out.join("cache"));
    let cache = SurfaceCache::new(&cache_dir);
    let hash = scn.canonical_hash();
    let mut prebuilt = Vec::new();
    let mut cache_files = Vec::new();
    for j in scn.level1_indices() {
        let CompetitorSpec::Level1 { bugs, dims, m_per_point, .. } = &scn.competitors[j] else {
            unreachable!("level1_indices returns level1 specs only")
        };
        let meta = SurfaceMeta {
            scenario_hash: hash.clone(),
            competitor: j,
            dims: *dims,
            m_per_point: *m_per_point,
            seed: scn.strategic_seed(j),
        };
        let problem = scn.rival_problem(j)?;
        let bounds = problem.decision_bounds();
        let surface = match cache.load(&meta) {
            Some(s) => {
                log::info!("strategic surface cache hit for competitor {j}");
                s
            }
            None => {
                log::info!(
                    "strategic surface cache miss for competitor {j}; building {}x{} cells \
                     with {} draws each",
                    dims.0,
                    dims.1,
                    m_per_point
                );
                let s = strategic_surface(&problem, *dims, *m_per_point, meta.seed)?;
                cache.store(&meta, bounds, &s)?;
                s
            }
        };
        let model = StrategicModel::from_surface(
            bounds,
            *dims,
            &surface,
            *bugs,
            scn.market.life_cycle,
        )?;
        prebuilt.push((j, model));
        cache_files.push(rel_name(out, &cache.csv_path(&meta)));
        cache_files.push(rel_name(out, &cache.meta_path(&meta)));
    }
    let ctx = scn.build_context_with(&prebuilt)?;
    let flags = vec![("cache_dir".into(), cache_dir.display().to_string())];
    surface_command("strategic", scn, &ctx, grid, out, flags, cache_files)
}

#[derive(Debug)]
pub struct OptimizeRun {
    pub result: OptResult,
    /// Full outcome re-evaluated at the returned optimum, same draw bank.
    pub at_best: DecisionOutcome,
    pub manifest: RunManifest,
}

/// Runs one optimizer against the scenario's objective and records the
/// optimum plus the full evaluation trace.
pub fn cmd_optimize(
    scn: &Scenario,
    method: Method,
    grid: (usize, usize),
    bo_calls: Option<usize>,
    out: &Path,
) -> Result<OptimizeRun> {
    let ctx = scn.build_context()?;
    let shared = SharedDraws::build(&ctx, scn.mc_size, scn.seed)?;
    let bx = scn.decision_box();
    let obj = |t: f64, p: f64| eval_cell(&ctx, &shared, t, p).map(|o| o.expected_utility);
    let result = match method {
        Method::Grid => grid_search(&bx, grid.0, grid.1, obj)?,
        Method::Sa => simulated_annealing(&bx, &SaSchedule::default(), scn.seed, obj)?,
        Method::Bo => {
            let mut cfg = BoConfig::default();
            if let Some(n) = bo_calls {
                cfg.n_calls = n;
            }
            bayes_opt(&bx, &cfg, scn.seed, obj)?
        }
    };
    let at_best = eval_cell(&ctx, &shared, result.best.t, result.best.p)?;

    let mut rcsv = String::from(
        "method,t1,p1,expected_utility,expected_profit,purchase_prob,pi_std_error,\
         expected_cost,evals\n",
    );
    rcsv.push_str(&format!(
        "{},{},{},{},{},{},{},{},{}\n",
        method.name(),
        result.best.t,
        result.best.p,
        at_best.expected_utility,
        at_best.expected_profit,
        at_best.purchase_prob,
        at_best.pi_std_error,
        at_best.expected_cost,
        result.evals
    ));
    write_atomic(&out.join("result.csv"), rcsv.as_bytes())?;
    let mut tcsv = String::from("iteration,t1,p1,value\n");
    for (k, pt) in result.trace.iter().enumerate() {
        tcsv.push_str(&format!("{k},{},{},{}\n", pt.t, pt.p, pt.value));
    }
    write_atomic(&out.join("trace.csv"), tcsv.as_bytes())?;

    let mut flags = common_flags(scn, grid);
    flags.push(("method".into(), method.name().to_string()));
    if let Some(n) = bo_calls {
        flags.push(("bo_calls".into(), n.to_string()));
    }
    let manifest =
        finish("optimize", scn, out, flags, vec!["result.csv".into(), "trace.csv".into()])?;
    Ok(OptimizeRun { result, at_best, manifest })
}

#[derive(Debug)]
pub struct SweepRow {
    /// The swept parameter value.
    pub x: f64,
    pub t1: f64,
    pub p1: f64,
    pub outcome: DecisionOutcome,
}

#[derive(Debug)]
pub struct SweepRun {
    pub rows: Vec<SweepRow>,
    pub manifest: RunManifest,
}

fn sweep_csv(name: &str, rows: &[SweepRow]) -> String {
    let mut csv =
        format!("{name},t1,p1,expected_utility,expected_profit,purchase_prob\n");
    for r in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.x,
            r.t1,
            r.p1,
            r.outcome.expected_utility,
            r.outcome.expected_profit,
            r.outcome.purchase_prob
        ));
    }
    csv
}

/// Grid optimum per fixed risk-aversion level: each run replaces the
/// buyers' risk-aversion prior with a point mass.
pub fn cmd_sensitivity_rho(
    scn: &Scenario,
    rhos: &[f64],
    grid: (usize, usize),
    out: &Path,
) -> Result<SweepRun> {
    if rhos.is_empty() {
        return Err(Error::invalid("need at least one rho value"));
    }
    let bx = scn.decision_box();
    let mut rows = Vec::with_capacity(rhos.len());
    for &rho in rhos {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid(format!("rho must be positive, got {rho}")));
        }
        let s = scn.with_point_rho(rho);
        let ctx = s.build_context()?;
        let shared = SharedDraws::build(&ctx, s.mc_size, s.seed)?;
        let res = grid_search(&bx, grid.0, grid.1, |t, p| {
            eval_cell(&ctx, &shared, t, p).map(|o| o.expected_utility)
        })?;
        let at = eval_cell(&ctx, &shared, res.best.t, res.best.p)?;
        rows.push(SweepRow { x: rho, t1: res.best.t, p1: res.best.p, outcome: at });
    }
    write_atomic(&out.join("rho.csv"), sweep_csv("rho", &rows).as_bytes())?;
    let mut flags = common_flags(scn, grid);
    flags.push(("rho".into(), join_values(rhos)));
    let manifest = finish("sensitivity-rho", scn, out, flags, vec!["rho.csv".into()])?;
    Ok(SweepRun { rows, manifest })
}

/// Grid optimum per after-release fix cost. The posterior and the draw bank
/// are built once and shared across the sweep: the cost coefficient does
/// not touch the purchase side, so runs stay paired.
pub fn cmd_sensitivity_c31(
    scn: &Scenario,
    values: &[f64],
    grid: (usize, usize),
    out: &Path,
) -> Result<SweepRun> {
    if values.is_empty() {
        return Err(Error::invalid("need at least one c31 value"));
    }
    let ctx0 = scn.build_context()?;
    let shared = SharedDraws::build(&ctx0, scn.mc_size, scn.seed)?;
    let bx = scn.decision_box();
    let mut rows = Vec::with_capacity(values.len());
    for &c31 in values {
        if !(c31 >= 0.0 && c31.is_finite()) {
            return Err(Error::invalid(format!("c31 must be nonnegative, got {c31}")));
        }
        let mut ctx = ctx0.clone();
        ctx.cost.c31 = c31;
        let res = grid_search(&bx, grid.0, grid.1, |t, p| {
            eval_cell(&ctx, &shared, t, p).map(|o| o.expected_utility)
        })?;
        let at = eval_cell(&ctx, &shared, res.best.t, res.best.p)?;
        rows.push(SweepRow { x: c31, t1: res.best.t, p1: res.best.p, outcome: at });
    }
    write_atomic(&out.join("c31.csv"), sweep_csv("c31", &rows).as_bytes())?;
    let mut flags = common_flags(scn, grid);
    flags.push(("c31".into(), join_values(values)));
    let manifest = finish("sensitivity-c31", scn, out, flags, vec!["c31.csv".into()])?;
    Ok(SweepRun { rows, manifest })
}

fn join_values(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Debug)]
pub struct ContingencyRun {
    pub rule: PriceRule,
    pub manifest: RunManifest,
}

/// Fallback pricing: the optimal price for every release time on the
/// lattice, smoothed by a least-squares quadratic.
pub fn cmd_contingency(scn: &Scenario, grid: (usize, usize), out: &Path) -> Result<ContingencyRun> {
    let ctx = scn.build_context()?;
    let ev = eval_surface(scn, &ctx, grid)?;
    let values: Vec<f64> = ev.cells.iter().map(|o| o.expected_utility).collect();
    let rule = price_contingency(&scn.decision_box(), &ev.ts, &ev.ps, &values)?;

    let mut csv = String::from("t1,p_star,p_fit\n");
    for &(t, p) in &rule.knots {
        csv.push_str(&format!("{t},{p},{}\n", rule.eval(t)));
    }
    write_atomic(&out.join("contingency.csv"), csv.as_bytes())?;
    let rule_json = serde_json::to_string_pretty(&rule).expect("rule serializes");
    write_atomic(&out.join("price_rule.json"), (rule_json + "\n").as_bytes())?;

    let manifest = finish(
        "contingency",
        scn,
        out,
        common_flags(scn, grid),
        vec!["contingency.csv".into(), "price_rule.json".into()],
    )?;
    Ok(ContingencyRun { rule, manifest })
}

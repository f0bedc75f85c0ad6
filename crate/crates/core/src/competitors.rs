//! Competitor release models. Level-0 competitors draw release time and price
//! from fixed distributions; archetypes are preset early-cheap or
//! late-expensive profiles; strategic competitors sample decisions in
//! proportion to their own expected utility over a precomputed surface.
//! Every model produces a full signal (time, price, residual bugs) per draw.

use crate::error::Error;
use crate::exec::run_chunks;
use crate::market::{evaluate_decision_weighted, CostParams, EvalContext, SharedDraws};
use crate::reliability::{mean_function, BetaSpec, BugModel, GammaSpec, NhppParams};
use crate::rng::{domain, substream};
use crate::Result;
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

/// Distribution over a bounded interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaledDist {
    /// Degenerate at a single value.
    Point(f64),
    /// Uniform on [lo, hi].
    Uniform { lo: f64, hi: f64 },
    /// lo + (hi - lo) * Beta(alpha, beta).
    Beta { alpha: f64, beta: f64, lo: f64, hi: f64 },
}

impl ScaledDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScaledDist::Point(v) => {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("point value must be finite, got {v}")))
                }
            }
            ScaledDist::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && lo <= hi {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("uniform needs lo <= hi, got [{lo}, {hi}]")))
                }
            }
            ScaledDist::Beta { alpha, beta, lo, hi } => {
                BetaSpec::new(alpha, beta)?;
                if lo.is_finite() && hi.is_finite() && lo <= hi {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("beta range needs lo <= hi, got [{lo}, {hi}]")))
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ScaledDist::Point(v) => v,
            ScaledDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            ScaledDist::Beta { alpha, beta, lo, hi } => {
                let b = Beta::new(alpha, beta).expect("validated").sample(rng);
                lo + (hi - lo) * b
            }
        }
    }
}

/// One sampled competitor release: time, price, and residual bug count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitorDraw {
    pub t: f64,
    pub p: f64,
    pub q: u64,
}

/// Reliability beliefs about a competitor: power-law NHPP with gamma scale
/// and beta exponent (their discovery rate tapers within the life cycle).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BugBelief {
    pub a: GammaSpec,
    pub c: BetaSpec,
}

impl BugBelief {
    /// Residual bugs on (t, t_end] under one parameter draw.
    pub fn sample_residual(&self, t: f64, t_end: f64, rng: &mut impl Rng) -> u64 {
        let params = NhppParams { a: self.a.sample(rng), c: self.c.sample(rng) };
        let lambda = (mean_function(params, t_end) - mean_function(params, t)).max(0.0);
        if lambda <= 0.0 {
            return 0;
        }
        Poisson::new(lambda).expect("positive mean").sample(rng) as u64
    }
}

/// Non-strategic competitor: time and price draws are exogenous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level0Model {
    pub t_dist: ScaledDist,
    pub p_dist: ScaledDist,
    pub bugs: BugBelief,
    pub life_cycle: f64,
}

impl Level0Model {
    pub fn validate(&self) -> Result<()> {
        self.t_dist.validate()?;
        self.p_dist.validate()?;
        if !(self.life_cycle > 0.0 && self.life_cycle.is_finite()) {
            return Err(Error::invalid(format!(
                "life cycle must be positive, got {}",
                self.life_cycle
            )));
        }
        Ok(())
    }
}

/// One draw from a level-0 competitor.
pub fn sample_level0(model: &Level0Model, rng: &mut impl Rng) -> CompetitorDraw {
    let t = model.t_dist.sample(rng).clamp(0.0, model.life_cycle);
    let p = model.p_dist.sample(rng);
    let q = model.bugs.sample_residual(t, model.life_cycle, rng);
    CompetitorDraw { t, p, q }
}

/// Preset competitor personalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchetypeKind {
    /// Rushes to market with a low price: time and price lean low
    /// (Beta(2, 5) on both scaled axes).
    Aggressive,
    /// Polishes and charges more: Beta(5, 2) on both scaled axes.
    Careful,
}

/// Archetype competitor over a given life cycle and price range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeModel {
    pub kind: ArchetypeKind,
    pub life_cycle: f64,
    pub price_lo: f64,
    pub price_hi: f64,
    pub bugs: BugBelief,
}

impl ArchetypeModel {
    fn shapes(&self) -> (f64, f64) {
        match self.kind {
            ArchetypeKind::Aggressive => (2.0, 5.0),
            ArchetypeKind::Careful => (5.0, 2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.life_cycle > 0.0 && self.life_cycle.is_finite()) {
            return Err(Error::invalid(format!(
                "life cycle must be positive, got {}",
                self.life_cycle
            )));
        }
        if !(self.price_lo.is_finite()
            && self.price_hi.is_finite()
            && self.price_lo >= 0.0
            && self.price_lo <= self.price_hi)
        {
            return Err(Error::invalid(format!(
                "need 0 <= price_lo <= price_hi, got [{}, {}]",
                self.price_lo, self.price_hi
            )));
        }
        Ok(())
    }
}

/// One draw from an archetype competitor.
pub fn sample_archetype(model: &ArchetypeModel, rng: &mut impl Rng) -> CompetitorDraw {
    let (alpha, beta) = model.shapes();
    let b = Beta::new(alpha, beta).expect("fixed shapes");
    let t = model.life_cycle * b.sample(rng);
    let p = model.price_lo + (model.price_hi - model.price_lo) * b.sample(rng);
    let q = model.bugs.sample_residual(t, model.life_cycle, rng);
    CompetitorDraw { t, p, q }
}

/// Strategic competitor built from an expected-utility surface: decision
/// cells are drawn with probability proportional to the competitor's own
/// (nonnegative-floored) expected utility, then jittered within the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategicModel {
    t_lo: f64,
    t_hi: f64,
    p_lo: f64,
    p_hi: f64,
    nt: usize,
    np: usize,
    /// Normalized cell mass, row-major over (t index, p index).
    mass: Vec<f64>,
    /// Cumulative mass for inverse-cdf cell sampling.
    cum: Vec<f64>,
    bugs: BugBelief,
    life_cycle: f64,
}

impl StrategicModel {
    /// Builds the sampling model from raw expected utilities at cell centers.
    /// Nonpositive values are floored to zero mass; if every cell is floored
    /// the model degrades to uniform with a warning.
    pub fn from_surface(
        bounds: (f64, f64, f64, f64),
        dims: (usize, usize),
        expected_utilities: &[f64],
        bugs: BugBelief,
        life_cycle: f64,
    ) -> Result<Self> {
        let (t_lo, t_hi, p_lo, p_hi) = bounds;
        let (nt, np) = dims;
        if nt < 2 || np < 2 {
            return Err(Error::invalid(format!("surface needs >= 2 cells per axis, got {nt}x{np}")));
        }
        if expected_utilities.len() != nt * np {
            return Err(Error::invalid(format!(
                "surface has {} values, expected {}",
                expected_utilities.len(),
                nt * np
            )));
        }
        if !(t_lo < t_hi && p_lo < p_hi) {
            return Err(Error::invalid("surface bounds must be nondegenerate".to_string()));
        }
        let mut mass: Vec<f64> = expected_utilities.iter().map(|&u| u.max(0.0)).collect();
        let total: f64 = mass.iter().sum();
        if total <= 0.0 {
            log::warn!(
                "strategic surface has no positive expected utility; sampling uniformly"
            );
            mass.fill(1.0);
        }
        let total: f64 = mass.iter().sum();
        for v in &mut mass {
            *v /= total;
        }
        let mut cum = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for &v in &mass {
            acc += v;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Self { t_lo, t_hi, p_lo, p_hi, nt, np, mass, cum, bugs, life_cycle })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nt, self.np)
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Center of cell (it, ip).
    pub fn cell_center(&self, it: usize, ip: usize) -> (f64, f64) {
        let dt = (self.t_hi - self.t_lo) / self.nt as f64;
        let dp = (self.p_hi - self.p_lo) / self.np as f64;
        (self.t_lo + (it as f64 + 0.5) * dt, self.p_lo + (ip as f64 + 0.5) * dp)
    }

    /// Cell index with the largest mass (ties to the lowest index).
    pub fn argmax_cell(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.mass.iter().enumerate() {
            if v > self.mass[best] {
                best = i;
            }
        }
        (best / self.np, best % self.np)
    }
}

/// One draw from a strategic competitor: pick a cell by its mass, jitter
/// uniformly within it, then draw residual bugs at the sampled release time.
pub fn sample_level1(model: &StrategicModel, rng: &mut impl Rng) -> CompetitorDraw {
    let u: f64 = rng.random();
    let idx = model.cum.partition_point(|&c| c < u).min(model.cum.len() - 1);
    let (it, ip) = (idx / model.np, idx % model.np);
    let dt = (model.t_hi - model.t_lo) / model.nt as f64;
    let dp = (model.p_hi - model.p_lo) / model.np as f64;
    let t = model.t_lo + (it as f64 + rng.random::<f64>()) * dt;
    let p = model.p_lo + (ip as f64 + rng.random::<f64>()) * dp;
    let q = model.bugs.sample_residual(t, model.life_cycle, rng);
    CompetitorDraw { t, p, q }
}

/// A rival's launch problem as the advised company models it: the rival runs
/// the same expected-utility engine against its own competitor set (which
/// normally includes a model of the advised company), with multiplicative
/// belief noise on its cost structure.
#[derive(Debug, Clone)]
pub struct CompetitorProblem {
    pub ctx: EvalContext,
    /// Coefficient of variation of the positive-truncated Normal multiplier
    /// applied to the rival's costs; zero means the costs are taken as known.
    pub cost_cv: f64,
}

impl CompetitorProblem {
    pub fn new(ctx: EvalContext) -> Self {
        CompetitorProblem { ctx, cost_cv: 0.10 }
    }

    pub fn validate(&self) -> Result<()> {
        self.ctx.validate()?;
        if !(self.cost_cv >= 0.0 && self.cost_cv.is_finite()) {
            return Err(Error::invalid(format!(
                "cost belief cv must be nonnegative, got {}",
                self.cost_cv
            )));
        }
        self.bug_belief().map(|_| ())
    }

    /// The rival's reliability prior, needed to draw residual bug counts for
    /// its sampled decisions. Rivals are modeled through parametric priors;
    /// a fitted posterior belongs to the advised company only.
    fn bug_belief(&self) -> Result<BugBelief> {
        match &self.ctx.own_bugs {
            BugModel::Parametric { a, c } => Ok(BugBelief { a: *a, c: *c }),
            BugModel::Posterior(_) => Err(Error::Scenario(
                "a rival's problem needs a parametric bug prior, not a fitted posterior".into(),
            )),
        }
    }

    /// The rival's decision rectangle: (t_lo, t_hi, p_lo, p_hi).
    pub fn decision_bounds(&self) -> (f64, f64, f64, f64) {
        let m = &self.ctx.market;
        (0.0, m.life_cycle, m.price_lo, m.price_hi)
    }
}

/// Per-iteration cost multipliers: positive-truncated Normal with mean 1 and
/// standard deviation `cv`. Chunked like every other draw bank so the values
/// are identical regardless of thread count.
fn cost_multipliers(cv: f64, m: usize, seed: u64) -> Vec<f64> {
    if cv == 0.0 {
        return vec![1.0; m];
    }
    run_chunks(m, |c, range| {
        let mut rng = substream(seed, domain::STRATEGIC_BASE, c as u64);
        let normal = Normal::new(1.0, cv).expect("validated cv");
        range
            .map(|_| loop {
                let v = normal.sample(&mut rng);
                if v > 0.0 {
                    break v;
                }
            })
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Estimates the rival's expected utility at every cell center of an
/// `nt x np` partition of its decision box (row-major, t outer).
/// Cost-belief noise is integrated into the surface through banked
/// per-iteration multipliers. Deterministic given
/// `(problem, dims, m_per_point, seed)`.
pub fn strategic_surface(
    problem: &CompetitorProblem,
    dims: (usize, usize),
    m_per_point: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    problem.validate()?;
    let (nt, np) = dims;
    if nt < 2 || np < 2 {
        return Err(Error::invalid(format!("surface needs >= 2 cells per axis, got {nt}x{np}")));
    }
    let bounds = problem.decision_bounds();
    let shared = SharedDraws::build(&problem.ctx, m_per_point, seed)?;
    let mults = cost_multipliers(problem.cost_cv, m_per_point, seed);
    let (dt, dp) = ((bounds.1 - bounds.0) / nt as f64, (bounds.3 - bounds.2) / np as f64);
    let mut surface = Vec::with_capacity(nt * np);
    for it in 0..nt {
        for ip in 0..np {
            let t = bounds.0 + (it as f64 + 0.5) * dt;
            let p = bounds.2 + (ip as f64 + 0.5) * dp;
            let out = evaluate_decision_weighted(&problem.ctx, &shared, t, p, Some(&mults))?;
            surface.push(out.expected_utility);
        }
    }
    Ok(surface)
}

/// [`strategic_surface`] wrapped in a sampling model.
pub fn build_strategic_model(
    problem: &CompetitorProblem,
    dims: (usize, usize),
    m_per_point: usize,
    seed: u64,
) -> Result<StrategicModel> {
    let surface = strategic_surface(problem, dims, m_per_point, seed)?;
    StrategicModel::from_surface(
        problem.decision_bounds(),
        dims,
        &surface,
        problem.bug_belief()?,
        problem.ctx.market.life_cycle,
    )
}

/// One realization of the random ingredients of a rival's problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompetitorIngredients {
    /// The rival's cost structure under this realization.
    pub cost: CostParams,
    /// Decision-independent addition to the rival's expected utility (for
    /// instance revenue the rival collects no matter what it launches).
    /// Under a risk-neutral rival it shifts every cell equally, so the
    /// argmax decision is invariant to it.
    pub revenue_offset: f64,
}

/// Draws one ingredient realization: each cost coefficient gets an
/// independent positive-truncated Normal multiplier with the problem's cv.
pub fn draw_ingredients(
    problem: &CompetitorProblem,
    rng: &mut impl Rng,
) -> CompetitorIngredients {
    let mut mult = || {
        if problem.cost_cv == 0.0 {
            return 1.0;
        }
        let normal = Normal::new(1.0, problem.cost_cv).expect("validated cv");
        loop {
            let v = normal.sample(rng);
            if v > 0.0 {
                break v;
            }
        }
    };
    let base = problem.ctx.cost;
    CompetitorIngredients {
        cost: CostParams { c11: base.c11 * mult(), c21: base.c21 * mult(), c31: base.c31 * mult() },
        revenue_offset: 0.0,
    }
}

/// Draws one rival decision by solving the rival's expected-utility
/// maximization over the cell-center lattice under one ingredient
/// realization, then samples residual bugs at the chosen release time.
/// Ties keep the first cell in scan order.
pub fn sample_level1_argmax(
    problem: &CompetitorProblem,
    ingredients: &CompetitorIngredients,
    dims: (usize, usize),
    m_per_point: usize,
    seed: u64,
) -> Result<CompetitorDraw> {
    let (nt, np) = dims;
    if nt == 0 || np == 0 {
        return Err(Error::invalid("argmax lattice needs at least one cell per axis"));
    }
    if !ingredients.revenue_offset.is_finite() {
        return Err(Error::invalid("revenue offset must be finite"));
    }
    let bugs = problem.bug_belief()?;
    let mut ctx = problem.ctx.clone();
    ctx.cost = ingredients.cost;
    let shared = SharedDraws::build(&ctx, m_per_point, seed)?;
    let (t_lo, t_hi, p_lo, p_hi) = problem.decision_bounds();
    let (dt, dp) = ((t_hi - t_lo) / nt as f64, (p_hi - p_lo) / np as f64);
    let mut best: Option<(f64, f64, f64)> = None;
    for it in 0..nt {
        for ip in 0..np {
            let t = t_lo + (it as f64 + 0.5) * dt;
            let p = p_lo + (ip as f64 + 0.5) * dp;
            let out = evaluate_decision_weighted(&ctx, &shared, t, p, None)?;
            let v = out.expected_utility + ingredients.revenue_offset;
            if best.is_none_or(|(bv, _, _)| v > bv) {
                best = Some((v, t, p));
            }
        }
    }
    let (_, t, p) = best.expect("nonempty lattice");
    let mut rng = substream(seed, domain::STRATEGIC_BASE + 1, 0);
    let q = bugs.sample_residual(t, problem.ctx.market.life_cycle, &mut rng);
    Ok(CompetitorDraw { t, p, q })
}

/// Any competitor the engine can face.
#[derive(Debug, Clone, PartialEq)]
pub enum CompetitorModel {
    Level0(Level0Model),
    Archetype(ArchetypeModel),
    Strategic(StrategicModel),
}

impl CompetitorModel {
    pub fn sample(&self, rng: &mut impl Rng) -> CompetitorDraw {
        match self {
            CompetitorModel::Level0(m) => sample_level0(m, rng),
            CompetitorModel::Archetype(m) => sample_archetype(m, rng),
            CompetitorModel::Strategic(m) => sample_level1(m, rng),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CompetitorModel::Level0(m) => m.validate(),
            CompetitorModel::Archetype(m) => m.validate(),
            // Strategic models are validated when they are constructed.
            CompetitorModel::Strategic(_) => Ok(()),
        }
    }
}

//! Market-level evaluation of a launch decision.
//!
//! Given a release time and price, the engine estimates the purchase
//! probability by Monte Carlo over everything the company does not control
//! (competitor moves, buyer preferences, bug counts), then folds the result
//! through the sales distribution into expected utility and profit.
//!
//! Draws that do not depend on the decision are banked once in
//! [`SharedDraws`] and replayed for every decision cell (common random
//! numbers), so surfaces over the decision box differ only through the
//! decision itself. Only the company's own bug counts depend on the release
//! time and are re-drawn per cell, from a stream that replays identically.

use crate::choice::{eumax_pick, mnl_conditional, segment_mixture_prob, ChoiceEstimate};
use crate::competitors::{CompetitorDraw, CompetitorModel, ScaledDist};
use crate::error::Error;
use crate::exec::run_chunks;
use crate::preferences::{
    cara_utility, normalize, sample_pref, BuyerPrefPrior, BuyerWeights, CompanyUtility,
    Normalizer, ProductSignal,
};
use crate::reliability::{sample_release_counts, BugModel, NhppParams};
use crate::rng::{domain, substream};
use crate::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::sync::OnceLock;

/// Launch-cost coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Development cost per day until release.
    pub c11: f64,
    /// Cost of fixing one bug found before release.
    pub c21: f64,
    /// Cost of fixing one bug that escapes into the field.
    pub c31: f64,
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c11", self.c11), ("c21", self.c21), ("c31", self.c31)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!(
                    "cost coefficient {name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Total cost of releasing at `t1` with `e1` bugs found in development
    /// and `q1` left to surface in the field.
    pub fn release_cost(&self, t1: f64, e1: u64, q1: u64) -> f64 {
        self.c11 * t1 + self.c21 * e1 as f64 + self.c31 * q1 as f64
    }
}

/// Market-wide constants of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    /// Number of buyers.
    pub n_buyers: u64,
    /// Product life cycle in days; bugs accumulate on (0, life_cycle].
    pub life_cycle: f64,
    /// Lowest admissible price.
    pub price_lo: f64,
    /// Highest admissible price.
    pub price_hi: f64,
    /// Buyer budget distribution; required only for multi-purchase markets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<ScaledDist>,
}

impl MarketConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_buyers == 0 {
            return Err(Error::invalid("market needs at least one buyer"));
        }
        if !(self.life_cycle > 0.0 && self.life_cycle.is_finite()) {
            return Err(Error::invalid(format!(
                "life cycle must be positive, got {}",
                self.life_cycle
            )));
        }
        if !(self.price_lo.is_finite()
            && self.price_hi.is_finite()
            && self.price_lo > 0.0
            && self.price_lo <= self.price_hi)
        {
            return Err(Error::invalid(format!(
                "need 0 < price_lo <= price_hi, got [{}, {}]",
                self.price_lo, self.price_hi
            )));
        }
        if let Some(b) = &self.budget {
            b.validate()?;
        }
        Ok(())
    }
}

/// How a buyer turns utilities into a purchase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChoiceRule {
    /// Multinomial logit share (smooth in utilities).
    #[default]
    Mnl,
    /// Hard argmax with uniform tie-breaking.
    EuMax,
}

/// One buyer segment: a preference prior and its population share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub weight: f64,
    pub prefs: BuyerPrefPrior,
}

/// Everything needed to evaluate launch decisions for one scenario.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub market: MarketConfig,
    pub cost: CostParams,
    /// Reliability model for the company's own product.
    pub own_bugs: BugModel,
    pub segments: Vec<Segment>,
    pub normalizer: Normalizer,
    pub competitors: Vec<CompetitorModel>,
    pub company_utility: CompanyUtility,
    pub choice_rule: ChoiceRule,
}

/// Cap on segments so each can own a disjoint RNG stream family.
const MAX_SEGMENTS: usize = 256;

impl EvalContext {
    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.cost.validate()?;
        self.normalizer.validate()?;
        self.company_utility.validate()?;
        if self.segments.is_empty() {
            return Err(Error::invalid("need at least one buyer segment"));
        }
        if self.segments.len() > MAX_SEGMENTS {
            return Err(Error::invalid(format!(
                "at most {MAX_SEGMENTS} segments are supported, got {}",
                self.segments.len()
            )));
        }
        let mut total = 0.0;
        for s in &self.segments {
            if !(s.weight.is_finite() && s.weight >= 0.0) {
                return Err(Error::invalid(format!(
                    "segment weights must be nonnegative, got {}",
                    s.weight
                )));
            }
            total += s.weight;
            s.prefs.validate()?;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("segment weights must sum to 1, got {total}")));
        }
        for comp in &self.competitors {
            comp.validate()?;
        }
        // own_bugs needs no checks here: both posterior draws and parametric
        // specs are validated when they are constructed
        Ok(())
    }
}

/// Preference draws and cached competitor utilities for one segment.
#[derive(Debug, Clone)]
struct SegmentDraws {
    /// (weights, rho) per iteration.
    prefs: Vec<(BuyerWeights, f64)>,
    /// Utilities of competitor products, iteration-major, `n_comp` wide.
    comp_utils: Vec<f64>,
}

/// Decision-independent Monte Carlo draws, banked once per scenario and
/// shared by every decision cell.
///
/// The bank fixes competitor moves, buyer preferences and the company's own
/// reliability parameters across the whole decision box; evaluating a cell
/// only re-draws the bug counts that depend on the release time. This is
/// what makes grid sweeps and optimizer traces comparable cell to cell.
#[derive(Debug, Clone)]
pub struct SharedDraws {
    m: usize,
    seed: u64,
    n_comp: usize,
    n_seg: usize,
    /// Competitor draws, iteration-major, `n_comp` wide.
    comp: Vec<CompetitorDraw>,
    /// Own reliability parameters, one per iteration.
    own_params: Vec<NhppParams>,
    seg: Vec<SegmentDraws>,
}

impl SharedDraws {
    /// Draws the bank for `m` iterations. The same `(ctx, m, seed)` always
    /// produces a bit-identical bank, regardless of thread count.
    pub fn build(ctx: &EvalContext, m: usize, seed: u64) -> Result<SharedDraws> {
        ctx.validate()?;
        if m == 0 {
            return Err(Error::Empty("Monte Carlo size must be at least 1".into()));
        }
        let n_comp = ctx.competitors.len();
        let comp: Vec<CompetitorDraw> = run_chunks(m, |c, range| {
            let mut rng = substream(seed, domain::COMPETITORS, c as u64);
            let mut out = Vec::with_capacity(range.len() * n_comp);
            for _ in range {
                for model in &ctx.competitors {
                    out.push(model.sample(&mut rng));
                }
            }
            out
        })
        .concat();
        let own_params: Vec<NhppParams> = run_chunks(m, |c, range| {
            let mut rng = substream(seed, domain::OWN_PARAMS, c as u64);
            range.map(|_| ctx.own_bugs.draw_params(&mut rng)).collect::<Vec<_>>()
        })
        .concat();

        let mut seg = Vec::with_capacity(ctx.segments.len());
        let mut saturated = 0u64;
        for (k, s) in ctx.segments.iter().enumerate() {
            let prefs: Vec<(BuyerWeights, f64)> = run_chunks(m, |c, range| {
                let mut rng = substream(seed, domain::PREFS_BASE + k as u32, c as u64);
                range.map(|_| sample_pref(&s.prefs, &mut rng)).collect::<Vec<_>>()
            })
            .concat();
            let pieces = run_chunks(m, |_, range| {
                let mut us = Vec::with_capacity(range.len() * n_comp);
                let mut sat = 0u64;
                for i in range {
                    let (w, rho) = prefs[i];
                    for d in &comp[i * n_comp..(i + 1) * n_comp] {
                        let sig = ProductSignal { t: d.t, p: d.p, q: d.q as f64 };
                        let v = cara_utility(w, rho, normalize(&ctx.normalizer, sig));
                        sat += u64::from(v.saturated);
                        us.push(v.utility);
                    }
                }
                (us, sat)
            });
            let mut comp_utils = Vec::with_capacity(m * n_comp);
            for (us, sat) in pieces {
                comp_utils.extend(us);
                saturated += sat;
            }
            seg.push(SegmentDraws { prefs, comp_utils });
        }
        if saturated > 0 {
            log::warn!(
                "{saturated} of {} banked utility evaluations hit the exponent clamp; \
                 signals may need rescaling",
                (m * n_comp * ctx.segments.len()).max(1)
            );
        }
        Ok(SharedDraws { m, seed, n_comp, n_seg: ctx.segments.len(), comp, own_params, seg })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Outcome of evaluating one launch decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionOutcome {
    /// Expected company utility of the launch.
    pub expected_utility: f64,
    /// Expected profit (risk-neutral value) of the launch.
    pub expected_profit: f64,
    /// Estimated probability that one buyer purchases the product.
    pub purchase_prob: f64,
    /// Monte Carlo standard error of `purchase_prob`.
    pub pi_std_error: f64,
    /// Expected launch cost.
    pub expected_cost: f64,
    /// Monte Carlo iterations behind the estimate.
    pub mc_size: usize,
}

fn check_decision(ctx: &EvalContext, shared: &SharedDraws, t1: f64, p1: f64) -> Result<()> {
    if shared.n_comp != ctx.competitors.len() || shared.n_seg != ctx.segments.len() {
        return Err(Error::Scenario(
            "shared draw bank was built for a different scenario shape".into(),
        ));
    }
    if !(t1.is_finite() && (0.0..=ctx.market.life_cycle).contains(&t1)) {
        return Err(Error::invalid(format!(
            "release time {t1} outside [0, {}]",
            ctx.market.life_cycle
        )));
    }
    if !(p1.is_finite() && (ctx.market.price_lo..=ctx.market.price_hi).contains(&p1)) {
        return Err(Error::invalid(format!(
            "price {p1} outside [{}, {}]",
            ctx.market.price_lo, ctx.market.price_hi
        )));
    }
    Ok(())
}

fn estimate_from_sums(sum: f64, sum_sq: f64, m: usize) -> ChoiceEstimate {
    let mf = m as f64;
    let prob = sum / mf;
    let var = if m > 1 { ((sum_sq - sum * sum / mf) / (mf - 1.0)).max(0.0) } else { 0.0 };
    ChoiceEstimate { prob, std_error: (var / mf).sqrt(), mc_size: m }
}

#[derive(Clone)]
struct CellAccum {
    /// (sum, sum of squares) of the per-iteration share, per segment.
    shares: Vec<(f64, f64)>,
    cost: f64,
}

/// Estimates the outcome of releasing at `t1` for price `p1`, reusing the
/// banked draws. Per iteration the engine draws the bug counts implied by
/// the release time, prices the product, and scores it against the banked
/// competitor utilities under the configured choice rule; the purchase
/// probability then feeds the sales distribution, whose expected utility is
/// computed by [`binomial_expected_value`]'s internals in one pass.
pub fn evaluate_decision(
    ctx: &EvalContext,
    shared: &SharedDraws,
    t1: f64,
    p1: f64,
) -> Result<DecisionOutcome> {
    evaluate_decision_weighted(ctx, shared, t1, p1, None)
}

/// [`evaluate_decision`] with an optional bank of per-iteration cost
/// multipliers, used when the engine evaluates a rival's problem and the
/// rival's cost structure is itself uncertain. The bank must be
/// decision-independent so the common-random-number discipline holds.
pub(crate) fn evaluate_decision_weighted(
    ctx: &EvalContext,
    shared: &SharedDraws,
    t1: f64,
    p1: f64,
    cost_mults: Option<&[f64]>,
) -> Result<DecisionOutcome> {
    check_decision(ctx, shared, t1, p1)?;
    if cost_mults.is_some_and(|v| v.len() != shared.m) {
        return Err(Error::Scenario(
            "cost multiplier bank does not match the draw bank size".into(),
        ));
    }
    let n_seg = shared.n_seg;
    let n_comp = shared.n_comp;
    let life = ctx.market.life_cycle;
    let chunks = run_chunks(shared.m, |c, range| {
        let mut rng_bugs = substream(shared.seed, domain::OWN_BUGS, c as u64);
        // Tie-breaks draw from their own stream so the bug stream replays
        // identically for every decision cell.
        let mut rng_tie = substream(shared.seed, domain::GENERIC, c as u64);
        let mut acc = CellAccum { shares: vec![(0.0, 0.0); n_seg], cost: 0.0 };
        for i in range {
            let params = shared.own_params[i];
            let (e1, q1) = sample_release_counts(params, t1, life, &mut rng_bugs);
            let scale = cost_mults.map_or(1.0, |v| v[i]);
            acc.cost += scale * ctx.cost.release_cost(t1, e1, q1);
            let x1 = normalize(&ctx.normalizer, ProductSignal { t: t1, p: p1, q: q1 as f64 });
            for (s, seg) in shared.seg.iter().enumerate() {
                let (w, rho) = seg.prefs[i];
                let u1 = cara_utility(w, rho, x1).utility;
                let us = &seg.comp_utils[i * n_comp..(i + 1) * n_comp];
                let share = match ctx.choice_rule {
                    ChoiceRule::Mnl => mnl_conditional(u1, us),
                    ChoiceRule::EuMax => f64::from(eumax_pick(u1, us, &mut rng_tie)),
                };
                acc.shares[s].0 += share;
                acc.shares[s].1 += share * share;
            }
        }
        acc
    });
    let mut shares = vec![(0.0, 0.0); n_seg];
    let mut cost_sum = 0.0;
    for a in chunks {
        for (tot, part) in shares.iter_mut().zip(&a.shares) {
            tot.0 += part.0;
            tot.1 += part.1;
        }
        cost_sum += a.cost;
    }
    let ests: Vec<ChoiceEstimate> =
        shares.iter().map(|&(s, s2)| estimate_from_sums(s, s2, shared.m)).collect();
    let weights: Vec<f64> = ctx.segments.iter().map(|s| s.weight).collect();
    let mix = segment_mixture_prob(&weights, &ests)?;
    let expected_cost = cost_sum / shared.m as f64;
    let (expected_utility, expected_profit) = expected_utility_and_profit(
        ctx.market.n_buyers,
        mix.prob,
        p1,
        expected_cost,
        &ctx.company_utility,
    );
    Ok(DecisionOutcome {
        expected_utility,
        expected_profit,
        purchase_prob: mix.prob,
        pi_std_error: mix.std_error,
        expected_cost,
        mc_size: shared.m,
    })
}

/// One-shot form of [`evaluate_decision`] that builds its own draw bank.
pub fn evaluate_decision_fresh(
    ctx: &EvalContext,
    t1: f64,
    p1: f64,
    m: usize,
    seed: u64,
) -> Result<DecisionOutcome> {
    let shared = SharedDraws::build(ctx, m, seed)?;
    evaluate_decision(ctx, &shared, t1, p1)
}

// ---------------------------------------------------------------------------
// Expected value under the binomial sales distribution.

/// Largest n for which the full pmf sum is used.
const BINOMIAL_EXACT_MAX_N: u64 = 10_000;
/// Below this sales variance the pmf is summed over a window even for large
/// n; above it a quadrature over the continuous density takes over.
const SMALL_SIGMA2: f64 = 25.0;
/// Window half-width: this many standard deviations plus a constant pad.
const TAIL_SIGMAS: f64 = 12.0;
const TAIL_PAD: f64 = 16.0;

fn ln_binomial_pmf(n: f64, j: f64, ln_pi: f64, ln_1mpi: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(j + 1.0) - ln_gamma(n - j + 1.0) + j * ln_pi + (n - j) * ln_1mpi
}

/// E[f(J)] for J ~ Binomial(n, pi) restricted to `j_lo..=j_hi`. The pmf is
/// anchored at the in-window mode, where it is O(1), and extended by the
/// multiplicative recurrence in both directions, so no term overflows and
/// underflow only occurs where the true pmf is itself negligible.
fn window_expect(n: u64, pi: f64, j_lo: u64, j_hi: u64, f: impl Fn(f64) -> f64) -> f64 {
    debug_assert!(0.0 < pi && pi < 1.0 && j_lo <= j_hi && j_hi <= n);
    let nf = n as f64;
    let ln_pi = pi.ln();
    let ln_1mpi = (-pi).ln_1p();
    let mode = (((nf + 1.0) * pi).floor() as u64).clamp(j_lo, j_hi);
    let pmf_mode = ln_binomial_pmf(nf, mode as f64, ln_pi, ln_1mpi).exp();
    let up_ratio = pi / (1.0 - pi);
    let mut total = 0.0;
    let mut pmf = pmf_mode;
    let mut j = mode;
    loop {
        total += pmf * f(j as f64);
        if j == j_hi {
            break;
        }
        pmf *= (nf - j as f64) / (j as f64 + 1.0) * up_ratio;
        j += 1;
    }
    pmf = pmf_mode;
    j = mode;
    while j > j_lo {
        pmf *= j as f64 / (nf - j as f64 + 1.0) / up_ratio;
        j -= 1;
        total += pmf * f(j as f64);
    }
    total
}

/// E[f(J)] for large n: 512-point Gauss-Legendre quadrature of f against the
/// continuous extension of the pmf over a window around the mean, normalized
/// by the quadrature mass of the density itself.
fn quad_expect(n: u64, pi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let nf = n as f64;
    let mu = nf * pi;
    let sigma = (nf * pi * (1.0 - pi)).sqrt();
    let lo = (mu - TAIL_SIGMAS * sigma - TAIL_PAD).max(-0.5);
    let hi = (mu + TAIL_SIGMAS * sigma + TAIL_PAD).min(nf + 0.5);
    let ln_pi = pi.ln();
    let ln_1mpi = (-pi).ln_1p();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut num = 0.0;
    let mut den = 0.0;
    for &(x, w) in gauss_legendre_512() {
        let t = mid + half * x;
        let g = ln_binomial_pmf(nf, t, ln_pi, ln_1mpi).exp();
        num += w * g * f(t);
        den += w * g;
    }
    num / den
}

/// E[f(J)] for J ~ Binomial(n, pi), dispatching on problem size: full pmf
/// sum for small n, windowed pmf sum when the sales distribution is narrow,
/// quadrature over the continuous density otherwise.
fn binomial_expect(n: u64, pi: f64, f: impl Fn(f64) -> f64) -> f64 {
    if n == 0 || pi <= 0.0 {
        return f(0.0);
    }
    if pi >= 1.0 {
        return f(n as f64);
    }
    if n <= BINOMIAL_EXACT_MAX_N {
        return window_expect(n, pi, 0, n, f);
    }
    let nf = n as f64;
    let var = nf * pi * (1.0 - pi);
    if var < SMALL_SIGMA2 {
        let mu = nf * pi;
        let half = TAIL_SIGMAS * var.sqrt() + TAIL_PAD;
        let j_lo = (mu - half).floor().max(0.0) as u64;
        let j_hi = ((mu + half).ceil() as u64).min(n);
        window_expect(n, pi, j_lo, j_hi, f)
    } else {
        quad_expect(n, pi, f)
    }
}

fn expected_utility_and_profit(
    n: u64,
    pi: f64,
    price: f64,
    cost: f64,
    u: &CompanyUtility,
) -> (f64, f64) {
    let profit = n as f64 * pi * price - cost;
    let util =
        if u.is_identity() { profit } else { binomial_expect(n, pi, |j| u.eval(j * price - cost)) };
    (util, profit)
}

/// Expected company utility of selling to a Binomial(n, pi) number of buyers
/// at `price`, after paying `cost`. Identity utility has the closed form
/// n*pi*price - cost; other utilities integrate over the sales distribution.
pub fn binomial_expected_value(
    n: u64,
    pi: f64,
    price: f64,
    cost: f64,
    utility: &CompanyUtility,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid(format!("purchase probability {pi} outside [0, 1]")));
    }
    if !(price.is_finite() && price >= 0.0) {
        return Err(Error::invalid(format!("price must be finite and nonnegative, got {price}")));
    }
    if !cost.is_finite() {
        return Err(Error::invalid(format!("cost must be finite, got {cost}")));
    }
    utility.validate()?;
    Ok(expected_utility_and_profit(n, pi, price, cost, utility).0)
}

// ---------------------------------------------------------------------------
// Gauss-Legendre nodes.

/// Legendre polynomial P_n and its derivative at x, by the three-term
/// recurrence.
fn legendre_pd(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Nodes and weights of n-point Gauss-Legendre quadrature on [-1, 1]:
/// Newton's method from the Tricomi initial guess.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut nodes = Vec::with_capacity(n);
    for k in 0..n {
        let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..60 {
            let (p, dp) = legendre_pd(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-14 {
                break;
            }
        }
        let (_, dp) = legendre_pd(n, x);
        nodes.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    nodes
}

fn gauss_legendre_512() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(512))
}

// ---------------------------------------------------------------------------
// Budgeted multi-item purchases.

/// Largest instance [`knapsack_select`] will enumerate.
pub const KNAPSACK_MAX_ITEMS: usize = 20;

/// One product on offer: the utility a buyer assigns to it and its price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnapsackItem {
    pub utility: f64,
    pub price: f64,
}

/// Mask `a` is lexicographically smaller than `b` as a selection vector: at
/// the first index where they differ, `a` leaves the item unselected.
fn lex_less(a: u32, b: u32) -> bool {
    a != b && (a ^ b).trailing_zeros() < 32 && a >> (a ^ b).trailing_zeros() & 1 == 0
}

/// Exact budgeted selection: maximizes total utility of the selected items
/// subject to total price <= budget. Solved by enumerating subsets of the
/// positive-utility items (no optimal selection contains a nonpositive one),
/// so instances are capped at [`KNAPSACK_MAX_ITEMS`]. Value ties resolve to
/// the lexicographically smallest selection vector.
pub fn knapsack_select(budget: f64, items: &[KnapsackItem]) -> Result<Vec<bool>> {
    if items.len() > KNAPSACK_MAX_ITEMS {
        return Err(Error::TooManyItems { max: KNAPSACK_MAX_ITEMS, got: items.len() });
    }
    if !(budget.is_finite() && budget >= 0.0) {
        return Err(Error::invalid(format!("budget must be finite and nonnegative, got {budget}")));
    }
    for (j, it) in items.iter().enumerate() {
        if !it.utility.is_finite() || !(it.price.is_finite() && it.price > 0.0) {
            return Err(Error::invalid(format!(
                "item {j} needs finite utility and positive price, got ({}, {})",
                it.utility, it.price
            )));
        }
    }
    let allowed: u32 = items
        .iter()
        .enumerate()
        .filter(|(_, it)| it.utility > 0.0)
        .fold(0, |mask, (j, _)| mask | 1 << j);
    let mut best_mask = 0u32;
    let mut best_value = 0.0f64;
    let mut sub = allowed;
    loop {
        let mut value = 0.0;
        let mut price = 0.0;
        let mut bits = sub;
        while bits != 0 {
            let j = bits.trailing_zeros() as usize;
            value += items[j].utility;
            price += items[j].price;
            bits &= bits - 1;
        }
        if price <= budget
            && (value > best_value || (value == best_value && lex_less(sub, best_mask)))
        {
            best_mask = sub;
            best_value = value;
        }
        if sub == 0 {
            break;
        }
        sub = (sub - 1) & allowed;
    }
    Ok((0..items.len()).map(|j| best_mask >> j & 1 == 1).collect())
}

/// Index of the affordable item with the highest utility, or None when
/// nothing is affordable. Ties go to the lowest index.
///
/// This is the budget-constrained purchase rule when every utility is
/// nonpositive, as it is for the risk-averse buyers here: adding any item to
/// a selection lowers total utility, so a buyer who buys at all buys exactly
/// one item, the best it can afford. [`knapsack_select`] reproduces the same
/// choice when fed each affordable item's utility margin over the best
/// affordable alternative, which is the sense in which the rule is the
/// one-item specialization of the general selector.
pub(crate) fn favorite_affordable(utils: &[f64], prices: &[f64], budget: f64) -> Option<usize> {
    debug_assert_eq!(utils.len(), prices.len());
    let mut best: Option<usize> = None;
    for j in 0..prices.len() {
        if prices[j] <= budget && best.is_none_or(|b| utils[j] > utils[b]) {
            best = Some(j);
        }
    }
    best
}

/// Segment index for a uniform draw against cumulative weights.
fn pick_segment(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

#[derive(Clone, Copy, Default)]
struct MultiAccum {
    sum_f: f64,
    sum_f_sq: f64,
    cost: f64,
}

/// Multi-purchase market evaluation: every buyer has a budget drawn from the
/// market's budget distribution and buys the affordable product it likes
/// best, so the company competes for budget share rather than a single
/// choice. Utility and profit are computed from the average sales count and
/// average cost; `purchase_prob` reports the expected sold fraction of the
/// market and `pi_std_error` its Monte Carlo standard error.
pub fn evaluate_decision_multi(
    ctx: &EvalContext,
    shared: &SharedDraws,
    t1: f64,
    p1: f64,
) -> Result<DecisionOutcome> {
    check_decision(ctx, shared, t1, p1)?;
    let budget = *ctx
        .market
        .budget
        .as_ref()
        .ok_or_else(|| {
            Error::invalid("multi-purchase evaluation needs a budget distribution in the market")
        })?;
    let n = ctx.market.n_buyers;
    let n_seg = shared.n_seg;
    let n_comp = shared.n_comp;
    let n_items = 1 + n_comp;
    let life = ctx.market.life_cycle;
    let cum: Vec<f64> = {
        let mut acc = 0.0;
        let mut cum: Vec<f64> =
            ctx.segments.iter().map(|s| {
                acc += s.weight;
                acc
            }).collect();
        // guard the last edge against accumulated rounding
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
        cum
    };
    let chunks = run_chunks(shared.m, |c, range| {
        let mut rng_bugs = substream(shared.seed, domain::OWN_BUGS, c as u64);
        let mut rng_budget = substream(shared.seed, domain::BUDGET, c as u64);
        let mut acc = MultiAccum::default();
        let mut prices = vec![0.0; n_items];
        let mut utils = vec![0.0; n_seg * n_items];
        for i in range {
            let params = shared.own_params[i];
            let (e1, q1) = sample_release_counts(params, t1, life, &mut rng_bugs);
            acc.cost += ctx.cost.release_cost(t1, e1, q1);
            let x1 = normalize(&ctx.normalizer, ProductSignal { t: t1, p: p1, q: q1 as f64 });
            prices[0] = p1;
            for j in 0..n_comp {
                prices[1 + j] = shared.comp[i * n_comp + j].p;
            }
            for (s, seg) in shared.seg.iter().enumerate() {
                let (w, rho) = seg.prefs[i];
                utils[s * n_items] = cara_utility(w, rho, x1).utility;
                utils[s * n_items + 1..s * n_items + n_items]
                    .copy_from_slice(&seg.comp_utils[i * n_comp..(i + 1) * n_comp]);
            }
            let mut own_sales = 0u64;
            for _ in 0..n {
                let b = budget.sample(&mut rng_budget);
                let s =
                    if n_seg == 1 { 0 } else { pick_segment(&cum, rng_budget.random::<f64>()) };
                let menu = &utils[s * n_items..(s + 1) * n_items];
                if favorite_affordable(menu, &prices, b) == Some(0) {
                    own_sales += 1;
                }
            }
            let f = own_sales as f64 / n as f64;
            acc.sum_f += f;
            acc.sum_f_sq += f * f;
        }
        acc
    });
    let mut total = MultiAccum::default();
    for a in chunks {
        total.sum_f += a.sum_f;
        total.sum_f_sq += a.sum_f_sq;
        total.cost += a.cost;
    }
    let est = estimate_from_sums(total.sum_f, total.sum_f_sq, shared.m);
    let expected_cost = total.cost / shared.m as f64;
    let expected_profit = n as f64 * est.prob * p1 - expected_cost;
    Ok(DecisionOutcome {
        expected_utility: ctx.company_utility.eval(expected_profit),
        expected_profit,
        purchase_prob: est.prob,
        pi_std_error: est.std_error,
        expected_cost,
        mc_size: shared.m,
    })
}

/// One-shot form of [`evaluate_decision_multi`] that builds its own bank.
pub fn evaluate_decision_multi_fresh(
    ctx: &EvalContext,
    t1: f64,
    p1: f64,
    m: usize,
    seed: u64,
) -> Result<DecisionOutcome> {
    let shared = SharedDraws::build(ctx, m, seed)?;
    evaluate_decision_multi(ctx, &shared, t1, p1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choice::{mnl_choice_prob, ChoiceSetup};
    use crate::competitors::{BugBelief, Level0Model};
    use crate::preferences::RhoPrior;
    use crate::reliability::{BetaSpec, GammaSpec, PosteriorSamples};
    use proptest::prelude::*;

    fn identity() -> CompanyUtility {
        CompanyUtility::Identity
    }

    fn cara(rho: f64, scale: f64) -> CompanyUtility {
        CompanyUtility::Cara { rho, money_scale: scale }
    }

    /// E[1 - exp(-rho (J p - c)/s)] for J ~ Binomial(n, pi) via the moment
    /// generating function; an independent closed form for checking every
    /// summation path.
    fn cara_mgf_oracle(n: u64, pi: f64, price: f64, cost: f64, rho: f64, scale: f64) -> f64 {
        let s = rho * price / scale;
        let ln_term = (-(pi * (1.0 - (-s).exp()))).ln_1p();
        1.0 - (rho * cost / scale).exp() * (n as f64 * ln_term).exp()
    }

    #[test]
    fn release_cost_is_the_linear_tally() {
        let c = CostParams { c11: 200.0, c21: 1000.0, c31: 5000.0 };
        assert_eq!(c.release_cost(283.0, 29, 119), 680_600.0);
        assert_eq!(c.release_cost(0.0, 0, 0), 0.0);
    }

    #[test]
    fn cost_params_validation_rejects_bad_values() {
        assert!(CostParams { c11: -1.0, c21: 0.0, c31: 0.0 }.validate().is_err());
        assert!(CostParams { c11: 1.0, c21: f64::NAN, c31: 0.0 }.validate().is_err());
        assert!(CostParams { c11: 1.0, c21: 0.0, c31: f64::INFINITY }.validate().is_err());
        assert!(CostParams { c11: 0.0, c21: 0.0, c31: 0.0 }.validate().is_ok());
    }

    #[test]
    fn binomial_identity_has_the_closed_form() {
        let v = binomial_expected_value(2, 0.5, 10.0, 5.0, &identity()).unwrap();
        assert!((v - 5.0).abs() < 1e-12);
        let v = binomial_expected_value(1000, 0.44, 8333.0, 680_600.0, &identity()).unwrap();
        assert!((v - 2_985_920.0).abs() < 1e-6);
        // far above the exact-summation cap, still exact
        let v = binomial_expected_value(2_000_000, 0.3, 50.0, 1e6, &identity()).unwrap();
        assert!((v - (2e6 * 0.3 * 50.0 - 1e6)).abs() < 1e-6);
    }

    #[test]
    fn binomial_cara_small_case_matches_hand_sum() {
        // n=2, pi=.5: pmf (1/4, 1/2, 1/4) over profits (-5, 5, 15), u = 1-exp(-x/10)
        let v = binomial_expected_value(2, 0.5, 10.0, 5.0, &cara(1.0, 10.0)).unwrap();
        assert!((v - 0.228_771_812_431_543_8).abs() < 1e-14);
    }

    #[test]
    fn binomial_cara_matches_mgf_closed_form_on_every_path() {
        // exact pmf sum
        let v = binomial_expected_value(1000, 0.44, 8000.0, 680_600.0, &cara(1.0, 1e6)).unwrap();
        let o = cara_mgf_oracle(1000, 0.44, 8000.0, 680_600.0, 1.0, 1e6);
        assert!((v - o).abs() < 1e-10 * o.abs().max(1.0), "exact {v} vs {o}");
        // quadrature (n > cap, wide sales distribution)
        let v = binomial_expected_value(100_000, 0.3, 8000.0, 700_000.0, &cara(1.0, 2e8)).unwrap();
        let o = cara_mgf_oracle(100_000, 0.3, 8000.0, 700_000.0, 1.0, 2e8);
        assert!((v - o).abs() < 1e-3 * o.abs().max(1.0), "quadrature {v} vs {o}");
        // windowed sum (n > cap, narrow sales distribution)
        let v = binomial_expected_value(1_000_000, 2e-6, 8000.0, 5000.0, &cara(1.0, 1e4)).unwrap();
        let o = cara_mgf_oracle(1_000_000, 2e-6, 8000.0, 5000.0, 1.0, 1e4);
        assert!((v - o).abs() < 1e-9 * o.abs().max(1.0), "window {v} vs {o}");
    }

    #[test]
    fn binomial_quadrature_agrees_with_exact_sum_at_the_cap() {
        let u = cara(1.0, 1e6);
        for &pi in &[0.2, 0.44, 0.8] {
            let exact = window_expect(10_000, pi, 0, 10_000, |j| u.eval(j * 800.0 - 68_000.0));
            let quad = quad_expect(10_000, pi, |j| u.eval(j * 800.0 - 68_000.0));
            assert!(
                (exact - quad).abs() < 1e-3 * exact.abs().max(1.0),
                "pi={pi}: {exact} vs {quad}"
            );
        }
    }

    #[test]
    fn binomial_handles_degenerate_probabilities() {
        let u = cara(2.0, 1e5);
        let v = binomial_expected_value(500, 0.0, 9000.0, 70_000.0, &u).unwrap();
        assert_eq!(v, u.eval(-70_000.0));
        let v = binomial_expected_value(500, 1.0, 9000.0, 70_000.0, &u).unwrap();
        assert_eq!(v, u.eval(500.0 * 9000.0 - 70_000.0));
        let v = binomial_expected_value(0, 0.7, 9000.0, 70_000.0, &u).unwrap();
        assert_eq!(v, u.eval(-70_000.0));
    }

    #[test]
    fn binomial_is_monotone_in_the_purchase_probability() {
        let u = cara(1.0, 1e6);
        let mut last = f64::NEG_INFINITY;
        for k in 0..=20 {
            let pi = k as f64 / 20.0;
            let v = binomial_expected_value(500, pi, 8000.0, 700_000.0, &u).unwrap();
            assert!(v > last - 1e-12, "not monotone at pi={pi}");
            last = v;
        }
    }

    #[test]
    fn binomial_rejects_bad_inputs() {
        assert!(binomial_expected_value(10, -0.1, 1.0, 0.0, &identity()).is_err());
        assert!(binomial_expected_value(10, 1.1, 1.0, 0.0, &identity()).is_err());
        assert!(binomial_expected_value(10, f64::NAN, 1.0, 0.0, &identity()).is_err());
        assert!(binomial_expected_value(10, 0.5, -1.0, 0.0, &identity()).is_err());
        assert!(binomial_expected_value(10, 0.5, 1.0, f64::INFINITY, &identity()).is_err());
    }

    #[test]
    fn gauss_legendre_weights_and_nodes_are_sane() {
        for n in [8, 64, 512] {
            let nodes = gauss_legendre(n);
            assert_eq!(nodes.len(), n);
            let wsum: f64 = nodes.iter().map(|&(_, w)| w).sum();
            assert!((wsum - 2.0).abs() < 1e-12, "weight sum {wsum} for n={n}");
            let odd: f64 = nodes.iter().map(|&(x, w)| w * x.powi(3)).sum();
            assert!(odd.abs() < 1e-13);
            let x2: f64 = nodes.iter().map(|&(x, w)| w * x * x).sum();
            assert!((x2 - 2.0 / 3.0).abs() < 1e-12);
            for &(x, _) in &nodes {
                assert!((-1.0..=1.0).contains(&x));
            }
        }
        assert_eq!(gauss_legendre_512().len(), 512);
    }

    proptest! {
        #[test]
        fn binomial_pmf_sum_is_linear_under_identity(
            n in 0u64..=10_000,
            pi in 0.0f64..=1.0,
            price in 0.0f64..20_000.0,
            cost in -1e6f64..1e7,
        ) {
            let direct = binomial_expect(n, pi, |j| j * price - cost);
            let closed = n as f64 * pi * price - cost;
            let scale = 1.0 + n as f64 * price + cost.abs();
            prop_assert!((direct - closed).abs() <= 1e-9 * scale,
                "{direct} vs {closed} at n={n} pi={pi}");
        }

        #[test]
        fn binomial_cara_never_beats_the_certainty_equivalent(
            n in 1u64..=5_000,
            pi in 0.0f64..=1.0,
            price in 0.0f64..20_000.0,
            cost in 0.0f64..1e7,
            rho in 0.5f64..3.0,
        ) {
            // concave utility: Jensen bounds the expectation by the value at the mean
            let u = cara(rho, 1e6);
            let v = binomial_expected_value(n, pi, price, cost, &u).unwrap();
            let at_mean = u.eval(n as f64 * pi * price - cost);
            prop_assert!(v <= at_mean + 1e-9);
        }
    }

    #[test]
    fn quadrature_path_is_linear_under_identity_too() {
        for &(n, pi) in &[(20_000u64, 0.3), (500_000, 0.5), (1_000_000, 0.9)] {
            let direct = binomial_expect(n, pi, |j| j * 37.5 - 1_000.0);
            let closed = n as f64 * pi * 37.5 - 1_000.0;
            assert!(
                (direct - closed).abs() < 1e-6 * closed.abs().max(1.0),
                "n={n} pi={pi}: {direct} vs {closed}"
            );
        }
    }

    // -- knapsack ----------------------------------------------------------

    fn items(list: &[(f64, f64)]) -> Vec<KnapsackItem> {
        list.iter().map(|&(utility, price)| KnapsackItem { utility, price }).collect()
    }

    #[test]
    fn knapsack_picks_the_documented_optimum() {
        let sel =
            knapsack_select(7.0, &items(&[(10.0, 5.0), (7.0, 4.0), (6.0, 3.0)])).unwrap();
        assert_eq!(sel, vec![false, true, true]); // value 13 beats 10 and 7+nothing
    }

    #[test]
    fn knapsack_takes_everything_when_budget_allows() {
        let sel = knapsack_select(100.0, &items(&[(1.0, 5.0), (2.0, 4.0), (3.0, 3.0)])).unwrap();
        assert_eq!(sel, vec![true, true, true]);
    }

    #[test]
    fn knapsack_buys_nothing_on_zero_budget() {
        let sel = knapsack_select(0.0, &items(&[(10.0, 5.0), (7.0, 4.0)])).unwrap();
        assert_eq!(sel, vec![false, false]);
    }

    #[test]
    fn knapsack_never_selects_nonpositive_utility() {
        let sel =
            knapsack_select(1e9, &items(&[(-1.0, 1.0), (0.0, 1.0), (5.0, 1.0)])).unwrap();
        assert_eq!(sel, vec![false, false, true]);
    }

    #[test]
    fn knapsack_breaks_value_ties_lexicographically() {
        // both singletons are worth 5; (false, true) < (true, false)
        let sel = knapsack_select(2.0, &items(&[(5.0, 2.0), (5.0, 2.0)])).unwrap();
        assert_eq!(sel, vec![false, true]);
        // {0} and {1, 2} are both worth 4; lex order prefers not taking item 0
        let sel = knapsack_select(2.0, &items(&[(4.0, 2.0), (2.0, 1.0), (2.0, 1.0)])).unwrap();
        assert_eq!(sel, vec![false, true, true]);
    }

    #[test]
    fn knapsack_rejects_oversized_and_malformed_instances() {
        let big = vec![KnapsackItem { utility: 1.0, price: 1.0 }; KNAPSACK_MAX_ITEMS + 1];
        assert!(matches!(
            knapsack_select(10.0, &big),
            Err(Error::TooManyItems { max: KNAPSACK_MAX_ITEMS, got: 21 })
        ));
        assert!(knapsack_select(-1.0, &items(&[(1.0, 1.0)])).is_err());
        assert!(knapsack_select(1.0, &items(&[(1.0, 0.0)])).is_err());
        assert!(knapsack_select(1.0, &items(&[(f64::NAN, 1.0)])).is_err());
    }

    /// Reference solver: check every subset, order optima by (value desc,
    /// selection vector lex asc) using the standard Vec<bool> ordering.
    fn knapsack_brute(budget: f64, its: &[KnapsackItem]) -> Vec<bool> {
        let l = its.len();
        let mut best: Option<(f64, Vec<bool>)> = None;
        for mask in 0u32..1 << l {
            let sel: Vec<bool> = (0..l).map(|j| mask >> j & 1 == 1).collect();
            let mut value = 0.0;
            let mut price = 0.0;
            for j in 0..l {
                if sel[j] {
                    value += its[j].utility;
                    price += its[j].price;
                }
            }
            if price > budget {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bv, bsel)) => value > *bv || (value == *bv && sel < *bsel),
            };
            if better {
                best = Some((value, sel));
            }
        }
        best.unwrap().1
    }

    proptest! {
        #[test]
        fn knapsack_matches_exhaustive_reference(
            raw in proptest::collection::vec((-5.0f64..10.0, 0.1f64..10.0), 1..10),
            budget in 0.0f64..30.0,
        ) {
            let its = items(&raw);
            prop_assert_eq!(knapsack_select(budget, &its).unwrap(), knapsack_brute(budget, &its));
        }
    }

    // -- purchase rule -----------------------------------------------------

    #[test]
    fn favorite_affordable_scans_the_menu() {
        let utils = [-3.0, -1.0, -2.0];
        let prices = [5.0, 8.0, 2.0];
        assert_eq!(favorite_affordable(&utils, &prices, 6.0), Some(2));
        assert_eq!(favorite_affordable(&utils, &prices, 10.0), Some(1));
        assert_eq!(favorite_affordable(&utils, &prices, 1.0), None);
        // exact utility ties go to the lowest index
        assert_eq!(favorite_affordable(&[-1.0, -1.0], &[3.0, 3.0], 5.0), Some(0));
    }

    #[test]
    fn favorite_affordable_is_the_one_item_knapsack_optimum() {
        let mut rng = substream(314, domain::GENERIC, 0);
        for _ in 0..300 {
            let l = rng.random_range(1..6usize);
            let utils: Vec<f64> = (0..l).map(|_| -rng.random_range(0.01..5.0)).collect();
            let prices: Vec<f64> = (0..l).map(|_| rng.random_range(1.0..10.0)).collect();
            let budget = rng.random_range(0.0..12.0);
            let fav = favorite_affordable(&utils, &prices, budget);
            let affordable: Vec<usize> = (0..l).filter(|&j| prices[j] <= budget).collect();
            match fav {
                None => assert!(affordable.is_empty()),
                Some(f) => {
                    // margin over the best affordable alternative makes the
                    // favorite the unique positive-utility item
                    let its: Vec<KnapsackItem> = affordable
                        .iter()
                        .map(|&j| {
                            let alt = affordable
                                .iter()
                                .filter(|&&k| k != j)
                                .map(|&k| utils[k])
                                .fold(f64::NEG_INFINITY, f64::max);
                            let margin =
                                if alt.is_finite() { utils[j] - alt } else { 1.0 };
                            KnapsackItem { utility: margin, price: prices[j] }
                        })
                        .collect();
                    let sel = knapsack_select(budget, &its).unwrap();
                    for (pos, &j) in affordable.iter().enumerate() {
                        assert_eq!(sel[pos], j == f, "item {j} vs favorite {f}");
                    }
                }
            }
        }
    }

    // -- engine ------------------------------------------------------------

    /// Reliability model whose draws are so small that every bug count is
    /// zero, making costs and signals deterministic.
    fn no_bugs() -> BugModel {
        BugModel::Posterior(
            PosteriorSamples::from_draws(vec![NhppParams::new(1e-300, 0.5).unwrap()]).unwrap(),
        )
    }

    fn point_competitor(t: f64, p: f64) -> CompetitorModel {
        CompetitorModel::Level0(Level0Model {
            t_dist: ScaledDist::Point(t),
            p_dist: ScaledDist::Point(p),
            bugs: paper_bug_belief(),
            life_cycle: 2000.0,
        })
    }

    fn paper_bug_belief() -> BugBelief {
        BugBelief {
            a: GammaSpec::from_mean_sd(0.256, 0.2).unwrap(),
            c: BetaSpec::new(2.019, 0.394).unwrap(),
        }
    }

    fn one_segment(alpha: [f64; 3], rho: RhoPrior) -> Vec<Segment> {
        vec![Segment { weight: 1.0, prefs: BuyerPrefPrior { dirichlet_alpha: alpha, rho } }]
    }

    fn base_ctx() -> EvalContext {
        EvalContext {
            market: MarketConfig {
                n_buyers: 1000,
                life_cycle: 2000.0,
                price_lo: 3000.0,
                price_hi: 15_000.0,
                budget: None,
            },
            cost: CostParams { c11: 200.0, c21: 1000.0, c31: 5000.0 },
            own_bugs: BugModel::Parametric {
                a: GammaSpec::from_mean_sd(0.256, 0.1).unwrap(),
                c: BetaSpec::new(2.019, 0.394).unwrap(),
            },
            segments: one_segment([1.0, 2.0, 1.0], RhoPrior::Gamma(GammaSpec::new(5.0, 1.0).unwrap())),
            normalizer: Normalizer::new(2000.0, 15_000.0, 150.0).unwrap(),
            competitors: vec![
                CompetitorModel::Level0(Level0Model {
                    t_dist: ScaledDist::Uniform { lo: 0.0, hi: 2000.0 },
                    p_dist: ScaledDist::Uniform { lo: 3000.0, hi: 15_000.0 },
                    bugs: paper_bug_belief(),
                    life_cycle: 2000.0,
                }),
                CompetitorModel::Level0(Level0Model {
                    t_dist: ScaledDist::Uniform { lo: 0.0, hi: 2000.0 },
                    p_dist: ScaledDist::Uniform { lo: 3000.0, hi: 15_000.0 },
                    bugs: paper_bug_belief(),
                    life_cycle: 2000.0,
                }),
            ],
            company_utility: CompanyUtility::Identity,
            choice_rule: ChoiceRule::Mnl,
        }
    }

    #[test]
    fn context_validation_flags_each_broken_field() {
        assert!(base_ctx().validate().is_ok());
        let mut ctx = base_ctx();
        ctx.segments[0].weight = 0.7;
        assert!(ctx.validate().is_err());
        let mut ctx = base_ctx();
        ctx.segments.clear();
        assert!(ctx.validate().is_err());
        let mut ctx = base_ctx();
        ctx.market.price_lo = -5.0;
        assert!(ctx.validate().is_err());
        let mut ctx = base_ctx();
        ctx.cost.c31 = f64::NAN;
        assert!(ctx.validate().is_err());
    }

    #[test]
    fn shared_draws_are_reproducible_and_seed_sensitive() {
        let ctx = base_ctx();
        let a = SharedDraws::build(&ctx, 4000, 11).unwrap();
        let b = SharedDraws::build(&ctx, 4000, 11).unwrap();
        assert_eq!(a.seg[0].comp_utils.len(), 8000);
        for (x, y) in a.seg[0].comp_utils.iter().zip(&b.seg[0].comp_utils) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = SharedDraws::build(&ctx, 4000, 12).unwrap();
        assert!(a.seg[0].comp_utils.iter().zip(&c.seg[0].comp_utils).any(|(x, y)| x != y));
    }

    #[test]
    fn evaluate_decision_is_bit_reproducible() {
        let ctx = base_ctx();
        let shared = SharedDraws::build(&ctx, 6000, 5).unwrap();
        let a = evaluate_decision(&ctx, &shared, 283.0, 8333.0).unwrap();
        let b = evaluate_decision(&ctx, &shared, 283.0, 8333.0).unwrap();
        assert_eq!(a, b);
        let c = evaluate_decision_fresh(&ctx, 283.0, 8333.0, 6000, 5).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn evaluate_decision_matches_the_direct_choice_estimator() {
        let ctx = base_ctx();
        let shared = SharedDraws::build(&ctx, 20_000, 42).unwrap();
        let out = evaluate_decision(&ctx, &shared, 283.0, 8333.0).unwrap();
        let setup = ChoiceSetup {
            own_bugs: &ctx.own_bugs,
            life_cycle: ctx.market.life_cycle,
            competitors: &ctx.competitors,
            prefs: &ctx.segments[0].prefs,
            normalizer: &ctx.normalizer,
        };
        let direct = mnl_choice_prob(&setup, 283.0, 8333.0, 20_000, 99).unwrap();
        let tol = 3.0 * (out.pi_std_error + direct.std_error);
        assert!(
            (out.purchase_prob - direct.prob).abs() < tol,
            "engine {} vs direct {} (tol {tol})",
            out.purchase_prob,
            direct.prob
        );
    }

    /// With astronomically large signal scales every utility is exactly zero,
    /// so the two-product share is exactly 1/2 and, with bug-free reliability
    /// models, cost is deterministic: the whole outcome has a closed form.
    #[test]
    fn evaluate_decision_recovers_a_closed_form_case() {
        let mut ctx = base_ctx();
        ctx.own_bugs = no_bugs();
        ctx.competitors = vec![point_competitor(1000.0, 9000.0)];
        ctx.normalizer = Normalizer::new(1e300, 1e300, 1e300).unwrap();
        ctx.segments = one_segment([1.0, 2.0, 1.0], RhoPrior::Point(2.0));
        let shared = SharedDraws::build(&ctx, 2048, 7).unwrap();
        let out = evaluate_decision(&ctx, &shared, 500.0, 9000.0).unwrap();
        assert_eq!(out.purchase_prob, 0.5);
        assert_eq!(out.pi_std_error, 0.0);
        assert_eq!(out.expected_cost, 200.0 * 500.0);
        let profit = 1000.0 * 0.5 * 9000.0 - 100_000.0;
        assert!((out.expected_profit - profit).abs() < 1e-9);
        assert_eq!(out.expected_utility, out.expected_profit);
    }

    #[test]
    fn evaluate_decision_rejects_points_outside_the_box() {
        let ctx = base_ctx();
        let shared = SharedDraws::build(&ctx, 100, 1).unwrap();
        assert!(evaluate_decision(&ctx, &shared, -1.0, 9000.0).is_err());
        assert!(evaluate_decision(&ctx, &shared, 2500.0, 9000.0).is_err());
        assert!(evaluate_decision(&ctx, &shared, 283.0, 2999.0).is_err());
        assert!(evaluate_decision(&ctx, &shared, 283.0, 15_001.0).is_err());
        assert!(evaluate_decision(&ctx, &shared, f64::NAN, 9000.0).is_err());
    }

    #[test]
    fn evaluate_decision_notices_a_mismatched_bank() {
        let ctx = base_ctx();
        let shared = SharedDraws::build(&ctx, 100, 1).unwrap();
        let mut other = ctx.clone();
        other.competitors.pop();
        assert!(matches!(
            evaluate_decision(&other, &shared, 283.0, 8333.0),
            Err(Error::Scenario(_))
        ));
    }

    #[test]
    fn eumax_rule_also_runs_and_stays_in_range() {
        let mut ctx = base_ctx();
        ctx.choice_rule = ChoiceRule::EuMax;
        let shared = SharedDraws::build(&ctx, 4000, 3).unwrap();
        let a = evaluate_decision(&ctx, &shared, 283.0, 8333.0).unwrap();
        let b = evaluate_decision(&ctx, &shared, 283.0, 8333.0).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.purchase_prob));
    }

    #[test]
    fn cheaper_price_sells_more() {
        let ctx = base_ctx();
        let shared = SharedDraws::build(&ctx, 30_000, 21).unwrap();
        let cheap = evaluate_decision(&ctx, &shared, 283.0, 4000.0).unwrap();
        let dear = evaluate_decision(&ctx, &shared, 283.0, 14_000.0).unwrap();
        assert!(cheap.purchase_prob > dear.purchase_prob);
    }

    // -- multi-purchase markets ---------------------------------------------

    fn multi_ctx(budget: ScaledDist) -> EvalContext {
        let mut ctx = base_ctx();
        ctx.market.budget = Some(budget);
        ctx
    }

    #[test]
    fn multi_requires_a_budget_distribution() {
        let ctx = base_ctx();
        let shared = SharedDraws::build(&ctx, 100, 1).unwrap();
        assert!(evaluate_decision_multi(&ctx, &shared, 283.0, 8333.0).is_err());
    }

    #[test]
    fn multi_sells_nothing_when_no_buyer_can_afford_anything() {
        let mut ctx = multi_ctx(ScaledDist::Uniform { lo: 1.0, hi: 2.0 });
        ctx.own_bugs = no_bugs();
        ctx.market.n_buyers = 200;
        let shared = SharedDraws::build(&ctx, 2000, 9).unwrap();
        let out = evaluate_decision_multi(&ctx, &shared, 283.0, 8333.0).unwrap();
        assert_eq!(out.purchase_prob, 0.0);
        assert_eq!(out.pi_std_error, 0.0);
        assert_eq!(out.expected_profit, -out.expected_cost);
        assert_eq!(out.expected_cost, 200.0 * 283.0);
    }

    #[test]
    fn multi_monopolist_sells_to_every_funded_buyer() {
        let mut ctx = multi_ctx(ScaledDist::Point(20_000.0));
        ctx.own_bugs = no_bugs();
        ctx.competitors.clear();
        ctx.market.n_buyers = 500;
        let shared = SharedDraws::build(&ctx, 1500, 2).unwrap();
        let out = evaluate_decision_multi(&ctx, &shared, 283.0, 9000.0).unwrap();
        assert_eq!(out.purchase_prob, 1.0);
        assert_eq!(out.expected_profit, 500.0 * 9000.0 - 56_600.0);
        assert_eq!(out.expected_utility, out.expected_profit);
    }

    #[test]
    fn multi_outcome_is_bit_reproducible_and_fraction_bounded() {
        let ctx = multi_ctx(ScaledDist::Uniform { lo: 10_000.0, hi: 20_000.0 });
        let shared = SharedDraws::build(&ctx, 3000, 17).unwrap();
        let a = evaluate_decision_multi(&ctx, &shared, 150.0, 9000.0).unwrap();
        let b = evaluate_decision_multi(&ctx, &shared, 150.0, 9000.0).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.purchase_prob));
        let c = evaluate_decision_multi_fresh(&ctx, 150.0, 9000.0, 3000, 17).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn multi_and_single_replay_the_same_bug_stream() {
        // same bank, same seed: the cost term must agree exactly because the
        // bug draws are shared between the two evaluators
        let ctx = multi_ctx(ScaledDist::Uniform { lo: 10_000.0, hi: 20_000.0 });
        let shared = SharedDraws::build(&ctx, 5000, 23).unwrap();
        let single = evaluate_decision(&ctx, &shared, 283.0, 8333.0).unwrap();
        let multi = evaluate_decision_multi(&ctx, &shared, 283.0, 8333.0).unwrap();
        assert_eq!(single.expected_cost.to_bits(), multi.expected_cost.to_bits());
    }

    #[test]
    fn multi_segment_assignment_mixes_populations() {
        // two segments with very different price sensitivity; the blended
        // fraction must land strictly between the two pure-segment fractions
        let mut lo = multi_ctx(ScaledDist::Uniform { lo: 8_000.0, hi: 20_000.0 });
        lo.segments = one_segment([8.0, 1.0, 1.0], RhoPrior::Point(5.0));
        let mut hi = lo.clone();
        hi.segments = one_segment([1.0, 8.0, 1.0], RhoPrior::Point(5.0));
        let mut mixed = lo.clone();
        mixed.segments = vec![
            Segment { weight: 0.5, prefs: lo.segments[0].prefs.clone() },
            Segment { weight: 0.5, prefs: hi.segments[0].prefs.clone() },
        ];
        let m = 20_000;
        let f_lo = evaluate_decision_multi(&lo, &SharedDraws::build(&lo, m, 4).unwrap(), 283.0, 9000.0)
            .unwrap()
            .purchase_prob;
        let f_hi = evaluate_decision_multi(&hi, &SharedDraws::build(&hi, m, 4).unwrap(), 283.0, 9000.0)
            .unwrap()
            .purchase_prob;
        let f_mix = evaluate_decision_multi(
            &mixed,
            &SharedDraws::build(&mixed, m, 4).unwrap(),
            283.0,
            9000.0,
        )
        .unwrap()
        .purchase_prob;
        let (min, max) = (f_lo.min(f_hi), f_lo.max(f_hi));
        assert!(min < f_mix && f_mix < max, "{min} <= {f_mix} <= {max}");
    }

    #[test]
    fn segment_picker_respects_cumulative_weights() {
        let cum = [0.125, 0.5, 0.5, 1.0];
        assert_eq!(pick_segment(&cum, 0.0), 0);
        assert_eq!(pick_segment(&cum, 0.2), 1);
        assert_eq!(pick_segment(&cum, 0.5), 3); // zero-width segment skipped
        assert_eq!(pick_segment(&cum, 0.999), 3);
    }
}

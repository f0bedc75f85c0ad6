//! Optimizers over the (release time, price) decision box.
//!
//! Three searches with different cost/robustness trade-offs: an exhaustive
//! lattice sweep, simulated annealing, and Bayesian optimization with the
//! Gaussian-process surrogate from [`crate::gp`]. All of them treat the
//! objective as a black box `f(t, p) -> value` to maximize and record every
//! evaluation in a trace.

use crate::error::Error;
use crate::gp::{Gp, GpConfig};
use crate::rng::{domain, substream};
use crate::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Rectangle of admissible decisions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionBox {
    pub t_lo: f64,
    pub t_hi: f64,
    pub p_lo: f64,
    pub p_hi: f64,
}

impl DecisionBox {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t_lo.is_finite()
            && self.t_hi.is_finite()
            && self.p_lo.is_finite()
            && self.p_hi.is_finite()
            && self.t_lo <= self.t_hi
            && self.p_lo <= self.p_hi;
        if !ok {
            return Err(Error::invalid(format!("malformed decision box {self:?}")));
        }
        Ok(())
    }

    pub fn clamp(&self, t: f64, p: f64) -> (f64, f64) {
        (t.clamp(self.t_lo, self.t_hi), p.clamp(self.p_lo, self.p_hi))
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.t_lo + self.t_hi), 0.5 * (self.p_lo + self.p_hi))
    }

    /// Maps a point into unit-square coordinates (degenerate axes map to 0).
    pub fn to_unit(&self, t: f64, p: f64) -> [f64; 2] {
        let wt = self.t_hi - self.t_lo;
        let wp = self.p_hi - self.p_lo;
        [
            if wt > 0.0 { (t - self.t_lo) / wt } else { 0.0 },
            if wp > 0.0 { (p - self.p_lo) / wp } else { 0.0 },
        ]
    }

    pub fn from_unit(&self, x: [f64; 2]) -> (f64, f64) {
        (
            self.t_lo + x[0] * (self.t_hi - self.t_lo),
            self.p_lo + x[1] * (self.p_hi - self.p_lo),
        )
    }
}

/// One evaluated decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptPoint {
    pub t: f64,
    pub p: f64,
    pub value: f64,
}

/// Result of a search: the best point found and the full evaluation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub best: OptPoint,
    pub evals: usize,
    pub trace: Vec<OptPoint>,
}

/// Lattice points on `[lo, hi]` with both endpoints included; a single point
/// sits at `lo`.
pub fn lattice(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Exhaustive sweep of an `nt` x `np` lattice over the box, endpoints
/// included. Ties keep the first point in scan order (release times outer,
/// prices inner), i.e. the lexicographically smallest lattice index.
pub fn grid_search(
    bounds: &DecisionBox,
    nt: usize,
    np: usize,
    mut objective: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<OptResult> {
    bounds.validate()?;
    if nt == 0 || np == 0 {
        return Err(Error::invalid("grid needs at least one point per axis"));
    }
    let ts = lattice(bounds.t_lo, bounds.t_hi, nt);
    let ps = lattice(bounds.p_lo, bounds.p_hi, np);
    let mut trace = Vec::with_capacity(nt * np);
    let mut best: Option<OptPoint> = None;
    for &t in &ts {
        for &p in &ps {
            let value = objective(t, p)?;
            let pt = OptPoint { t, p, value };
            trace.push(pt);
            if best.is_none_or(|b| value > b.value) {
                best = Some(pt);
            }
        }
    }
    Ok(OptResult { best: best.expect("nonempty grid"), evals: trace.len(), trace })
}

/// Annealing schedule. The defaults anneal from temperature 1000 with a 0.99
/// cooling factor over 1000 proposals, each perturbing the incumbent by up
/// to 50 days and 200 price units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaSchedule {
    pub t0: f64,
    pub cooling: f64,
    pub iters: usize,
    pub step_t: f64,
    pub step_p: f64,
}

impl Default for SaSchedule {
    fn default() -> Self {
        SaSchedule { t0: 1000.0, cooling: 0.99, iters: 1000, step_t: 50.0, step_p: 200.0 }
    }
}

impl SaSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t0 > 0.0
            && self.t0.is_finite()
            && self.cooling > 0.0
            && self.cooling < 1.0
            && self.iters > 0
            && self.step_t >= 0.0
            && self.step_p >= 0.0
            && self.step_t.is_finite()
            && self.step_p.is_finite();
        if !ok {
            return Err(Error::invalid(format!("malformed annealing schedule {self:?}")));
        }
        Ok(())
    }
}

/// Simulated annealing from the box center: uniform box-clipped proposals,
/// Metropolis acceptance with geometric cooling, best-ever result. The trace
/// records every evaluated point (accepted or not), starting with the
/// initial one.
pub fn simulated_annealing(
    bounds: &DecisionBox,
    sched: &SaSchedule,
    seed: u64,
    mut objective: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<OptResult> {
    bounds.validate()?;
    sched.validate()?;
    let mut rng = substream(seed, domain::OPTIMIZER, 0);
    let (mut t, mut p) = bounds.center();
    let mut value = objective(t, p)?;
    let mut trace = vec![OptPoint { t, p, value }];
    let mut best = trace[0];
    let mut temp = sched.t0;
    for _ in 0..sched.iters {
        let (tn, pn) = bounds.clamp(
            t + rng.random_range(-sched.step_t..=sched.step_t),
            p + rng.random_range(-sched.step_p..=sched.step_p),
        );
        let vn = objective(tn, pn)?;
        trace.push(OptPoint { t: tn, p: pn, value: vn });
        let accept = vn > value || rng.random::<f64>() < ((vn - value) / temp).exp();
        if accept {
            t = tn;
            p = pn;
            value = vn;
            if vn > best.value {
                best = OptPoint { t: tn, p: pn, value: vn };
            }
        }
        temp *= sched.cooling;
    }
    Ok(OptResult { best, evals: trace.len(), trace })
}

/// Bayesian-optimization budget and surrogate settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoConfig {
    /// Total objective evaluations.
    pub n_calls: usize,
    /// Latin-hypercube warmup evaluations before the surrogate takes over.
    pub n_init: usize,
    pub gp: GpConfig,
    /// Exploration margin of expected improvement.
    pub ei_xi: f64,
    /// Random acquisition candidates per iteration.
    pub candidates: usize,
    /// Refit hyperparameters every this many acquisitions.
    pub refit_every: usize,
    /// Known objective noise variance (e.g. squared Monte Carlo standard
    /// error), in raw objective units; lower-bounds the fitted noise.
    pub noise_floor: f64,
}

impl Default for BoConfig {
    fn default() -> Self {
        BoConfig {
            n_calls: 60,
            n_init: 20,
            gp: GpConfig::default(),
            ei_xi: 0.01,
            candidates: 1024,
            refit_every: 5,
            noise_floor: 0.0,
        }
    }
}

impl BoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_calls == 0 || self.n_init == 0 {
            return Err(Error::invalid("optimizer needs a positive evaluation budget"));
        }
        if self.candidates == 0 || self.refit_every == 0 {
            return Err(Error::invalid("need at least one candidate and a refit period"));
        }
        if !(self.ei_xi >= 0.0 && self.ei_xi.is_finite()) {
            return Err(Error::invalid(format!("ei_xi must be nonnegative, got {}", self.ei_xi)));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::invalid(format!(
                "noise floor must be nonnegative, got {}",
                self.noise_floor
            )));
        }
        self.gp.validate()
    }
}

/// Latin hypercube on the unit square: one point per row and column stratum.
fn latin_hypercube(n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    (0..n)
        .map(|i| {
            let u = (i as f64 + rng.random::<f64>()) / n as f64;
            let v = (perm[i] as f64 + rng.random::<f64>()) / n as f64;
            [u, v]
        })
        .collect()
}

/// Compass search over expected improvement: halving steps along the axes
/// from the best candidate, staying inside the unit square.
fn polish_ei(gp: &Gp, start: [f64; 2], best_y: f64, xi: f64) -> [f64; 2] {
    let mut x = start;
    let mut ei = gp.expected_improvement(x, best_y, xi);
    let mut step = 0.05;
    while step > 1e-3 {
        let mut moved = false;
        for (axis, dir) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
            let mut cand = x;
            cand[axis] = (cand[axis] + dir * step).clamp(0.0, 1.0);
            let e = gp.expected_improvement(cand, best_y, xi);
            if e > ei {
                x = cand;
                ei = e;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    x
}

/// Bayesian optimization: Latin-hypercube warmup, then expected-improvement
/// acquisitions against a Gaussian-process surrogate refit on a schedule.
/// If the surrogate cannot be fit the iteration falls back to a random
/// point, so the evaluation budget is always spent.
pub fn bayes_opt(
    bounds: &DecisionBox,
    cfg: &BoConfig,
    seed: u64,
    mut objective: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<OptResult> {
    bounds.validate()?;
    cfg.validate()?;
    let mut rng = substream(seed, domain::OPTIMIZER, 1);
    let n_init = cfg.n_init.min(cfg.n_calls);
    let mut xs: Vec<[f64; 2]> = Vec::with_capacity(cfg.n_calls);
    let mut ys: Vec<f64> = Vec::with_capacity(cfg.n_calls);
    let mut trace = Vec::with_capacity(cfg.n_calls);
    let eval = |x: [f64; 2],
                    objective: &mut dyn FnMut(f64, f64) -> Result<f64>,
                    xs: &mut Vec<[f64; 2]>,
                    ys: &mut Vec<f64>,
                    trace: &mut Vec<OptPoint>|
     -> Result<()> {
        let (t, p) = bounds.from_unit(x);
        let value = objective(t, p)?;
        xs.push(x);
        ys.push(value);
        trace.push(OptPoint { t, p, value });
        Ok(())
    };
    for x in latin_hypercube(n_init, &mut rng) {
        eval(x, &mut objective, &mut xs, &mut ys, &mut trace)?;
    }
    let mut gp: Option<Gp> = None;
    let mut since_refit = 0usize;
    while xs.len() < cfg.n_calls {
        let finite = ys.iter().all(|y| y.is_finite());
        if finite && (gp.is_none() || since_refit >= cfg.refit_every) {
            match Gp::fit_ml(&xs, &ys, &cfg.gp, cfg.noise_floor) {
                Ok(g) => {
                    gp = Some(g);
                    since_refit = 0;
                }
                Err(e) => {
                    log::warn!("surrogate refit failed ({e}); continuing with random points");
                    gp = None;
                }
            }
        } else if finite && since_refit > 0 {
            // cheap refit at fixed hyperparameters to absorb the new points
            if let Some(prev) = &gp {
                match Gp::fit(&xs, &ys, prev.config()) {
                    Ok(g) => gp = Some(g),
                    Err(_) => gp = None,
                }
            }
        }
        let x_next = match &gp {
            Some(g) => {
                let best_y = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut best_x = [rng.random::<f64>(), rng.random::<f64>()];
                let mut best_ei = g.expected_improvement(best_x, best_y, cfg.ei_xi);
                for _ in 1..cfg.candidates {
                    let c = [rng.random::<f64>(), rng.random::<f64>()];
                    let e = g.expected_improvement(c, best_y, cfg.ei_xi);
                    if e > best_ei {
                        best_ei = e;
                        best_x = c;
                    }
                }
                polish_ei(g, best_x, best_y, cfg.ei_xi)
            }
            None => [rng.random::<f64>(), rng.random::<f64>()],
        };
        eval(x_next, &mut objective, &mut xs, &mut ys, &mut trace)?;
        since_refit += 1;
    }
    let best = *trace
        .iter()
        .max_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal))
        .expect("nonempty trace");
    Ok(OptResult { best, evals: trace.len(), trace })
}

/// Price policy p*(t): per-release-time argmax prices from a value surface,
/// smoothed by a least-squares quadratic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRule {
    /// Quadratic coefficients (intercept, slope, curvature) in raw days.
    pub coeffs: [f64; 3],
    /// The (t, argmax price) pairs the fit was built from.
    pub knots: Vec<(f64, f64)>,
    pub p_lo: f64,
    pub p_hi: f64,
}

impl PriceRule {
    /// Fitted price at release time `t`, clamped to the admissible range.
    pub fn eval(&self, t: f64) -> f64 {
        let [b0, b1, b2] = self.coeffs;
        (b0 + b1 * t + b2 * t * t).clamp(self.p_lo, self.p_hi)
    }
}

/// Solves the 3x3 system `m x = b` by Gaussian elimination with partial
/// pivoting; `m` is row-major.
fn solve3(mut m: [f64; 9], mut b: [f64; 3]) -> Result<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| m[i * 3 + col].abs().partial_cmp(&m[j * 3 + col].abs()).unwrap())
            .unwrap();
        if m[pivot * 3 + col].abs() < 1e-12 {
            return Err(Error::invalid("degenerate least-squares system"));
        }
        if pivot != col {
            for k in 0..3 {
                m.swap(col * 3 + k, pivot * 3 + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..3 {
            let f = m[row * 3 + col] / m[col * 3 + col];
            for k in col..3 {
                m[row * 3 + k] -= f * m[col * 3 + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for k in row + 1..3 {
            s -= m[row * 3 + k] * x[k];
        }
        x[row] = s / m[row * 3 + row];
    }
    Ok(x)
}

/// Builds a price rule from a value surface on a lattice: for each release
/// time the argmax price is taken (first in scan order on ties), and a
/// quadratic in t is fit through those points by least squares. `values` is
/// row-major with release times as rows.
pub fn price_contingency(
    bounds: &DecisionBox,
    ts: &[f64],
    ps: &[f64],
    values: &[f64],
) -> Result<PriceRule> {
    bounds.validate()?;
    if ts.len() < 3 {
        return Err(Error::invalid("need at least three release times to fit a quadratic"));
    }
    if ps.is_empty() || values.len() != ts.len() * ps.len() {
        return Err(Error::invalid(format!(
            "surface shape mismatch: {} values for {} x {} lattice",
            values.len(),
            ts.len(),
            ps.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("surface values must be finite"));
    }
    let knots: Vec<(f64, f64)> = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let row = &values[i * ps.len()..(i + 1) * ps.len()];
            let mut arg = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[arg] {
                    arg = j;
                }
            }
            (t, ps[arg])
        })
        .collect();
    // normal equations on a scaled axis for conditioning
    let w = (bounds.t_hi - bounds.t_lo).max(1e-12);
    let lo = bounds.t_lo;
    let mut m = [0.0; 9];
    let mut rhs = [0.0; 3];
    for &(t, p) in &knots {
        let u = (t - lo) / w;
        let basis = [1.0, u, u * u];
        for i in 0..3 {
            for j in 0..3 {
                m[i * 3 + j] += basis[i] * basis[j];
            }
            rhs[i] += basis[i] * p;
        }
    }
    let [a0, a1, a2] = solve3(m, rhs)?;
    // expand p = a0 + a1 (t-lo)/w + a2 ((t-lo)/w)^2 into raw-t coefficients
    let coeffs = [
        a0 - a1 * lo / w + a2 * lo * lo / (w * w),
        a1 / w - 2.0 * a2 * lo / (w * w),
        a2 / (w * w),
    ];
    Ok(PriceRule { coeffs, knots, p_lo: bounds.p_lo, p_hi: bounds.p_hi })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_box() -> DecisionBox {
        DecisionBox { t_lo: 0.0, t_hi: 2000.0, p_lo: 3000.0, p_hi: 15_000.0 }
    }

    /// Deterministic concave surface with its peak at (700, 9000).
    fn bowl(t: f64, p: f64) -> Result<f64> {
        Ok(-(t - 700.0).powi(2) - (p - 9000.0).powi(2) / 4.0)
    }

    #[test]
    fn grid_finds_the_lattice_peak_and_visits_everything() {
        let r = grid_search(&paper_box(), 101, 81, bowl).unwrap();
        assert_eq!(r.evals, 101 * 81);
        assert_eq!(r.trace.len(), r.evals);
        assert_eq!((r.best.t, r.best.p), (700.0, 9000.0));
        assert_eq!(r.best.value, 0.0);
    }

    #[test]
    fn grid_includes_both_endpoints() {
        let r = grid_search(&paper_box(), 2, 2, |t, p| Ok(t + p)).unwrap();
        let got: Vec<(f64, f64)> = r.trace.iter().map(|pt| (pt.t, pt.p)).collect();
        assert_eq!(
            got,
            vec![(0.0, 3000.0), (0.0, 15_000.0), (2000.0, 3000.0), (2000.0, 15_000.0)]
        );
        assert_eq!((r.best.t, r.best.p), (2000.0, 15_000.0));
    }

    #[test]
    fn grid_keeps_the_first_of_tied_optima() {
        let r = grid_search(&paper_box(), 5, 5, |_, _| Ok(1.0)).unwrap();
        assert_eq!((r.best.t, r.best.p), (0.0, 3000.0));
        // ties across a whole price column keep the smallest price
        let r = grid_search(&paper_box(), 3, 3, |t, _| Ok(-(t - 1000.0).abs())).unwrap();
        assert_eq!((r.best.t, r.best.p), (1000.0, 3000.0));
    }

    #[test]
    fn grid_handles_single_point_axes() {
        let r = grid_search(&paper_box(), 1, 3, bowl).unwrap();
        assert_eq!(r.evals, 3);
        assert!(r.trace.iter().all(|pt| pt.t == 0.0));
        assert!(grid_search(&paper_box(), 0, 3, bowl).is_err());
    }

    #[test]
    fn grid_propagates_objective_errors() {
        let r = grid_search(&paper_box(), 2, 2, |_, _| {
            Err::<f64, _>(Error::invalid("boom"))
        });
        assert!(r.is_err());
    }

    #[test]
    fn annealing_climbs_close_to_the_peak() {
        let r =
            simulated_annealing(&paper_box(), &SaSchedule::default(), 99, bowl).unwrap();
        assert_eq!(r.evals, 1001); // start plus one per iteration
        assert_eq!(r.trace[0].t, 1000.0);
        assert_eq!(r.trace[0].p, 9000.0);
        // within a couple of proposal steps of the optimum in each axis
        assert!((r.best.t - 700.0).abs() < 100.0, "t {}", r.best.t);
        assert!((r.best.p - 9000.0).abs() < 400.0, "p {}", r.best.p);
        assert!(r.best.value > bowl(600.0, 8600.0).unwrap());
    }

    #[test]
    fn annealing_is_reproducible_and_seed_sensitive() {
        let a = simulated_annealing(&paper_box(), &SaSchedule::default(), 7, bowl).unwrap();
        let b = simulated_annealing(&paper_box(), &SaSchedule::default(), 7, bowl).unwrap();
        assert_eq!(a, b);
        let c = simulated_annealing(&paper_box(), &SaSchedule::default(), 8, bowl).unwrap();
        assert!(a.trace != c.trace);
    }

    #[test]
    fn annealing_stays_inside_the_box() {
        let tight = DecisionBox { t_lo: 650.0, t_hi: 760.0, p_lo: 8900.0, p_hi: 9100.0 };
        let r = simulated_annealing(&tight, &SaSchedule::default(), 3, |t, p| {
            assert!((650.0..=760.0).contains(&t) && (8900.0..=9100.0).contains(&p));
            bowl(t, p)
        })
        .unwrap();
        assert!(r.best.value >= bowl(650.0, 9100.0).unwrap());
    }

    #[test]
    fn annealing_rejects_bad_schedules() {
        let s = SaSchedule { cooling: 1.5, ..SaSchedule::default() };
        assert!(simulated_annealing(&paper_box(), &s, 1, bowl).is_err());
        let s = SaSchedule { iters: 0, ..SaSchedule::default() };
        assert!(simulated_annealing(&paper_box(), &s, 1, bowl).is_err());
    }

    #[test]
    fn latin_hypercube_stratifies_both_axes() {
        let mut rng = substream(4, domain::OPTIMIZER, 9);
        let n = 16;
        let pts = latin_hypercube(n, &mut rng);
        assert_eq!(pts.len(), n);
        for axis in 0..2 {
            let mut seen = vec![false; n];
            for p in &pts {
                let stratum = (p[axis] * n as f64) as usize;
                assert!(!seen[stratum.min(n - 1)], "axis {axis} stratum {stratum} reused");
                seen[stratum.min(n - 1)] = true;
            }
        }
    }

    #[test]
    fn bayes_opt_approaches_the_peak_with_a_small_budget() {
        let r = bayes_opt(&paper_box(), &BoConfig::default(), 11, bowl).unwrap();
        assert_eq!(r.evals, 60);
        // normalized regret within 1% of the surface range over the box
        let worst = bowl(2000.0, 15_000.0).unwrap().min(bowl(0.0, 3000.0).unwrap());
        let regret = (0.0 - r.best.value) / -worst;
        assert!(regret < 0.01, "regret {regret} at ({}, {})", r.best.t, r.best.p);
    }

    #[test]
    fn bayes_opt_is_reproducible_and_respects_the_box() {
        let cfg = BoConfig { n_calls: 25, ..BoConfig::default() };
        let a = bayes_opt(&paper_box(), &cfg, 5, bowl).unwrap();
        let b = bayes_opt(&paper_box(), &cfg, 5, bowl).unwrap();
        assert_eq!(a, b);
        for pt in &a.trace {
            assert!((0.0..=2000.0).contains(&pt.t) && (3000.0..=15_000.0).contains(&pt.p));
        }
    }

    #[test]
    fn bayes_opt_survives_a_surrogate_hostile_objective() {
        // a cliff of identical values gives the GP nothing to work with; the
        // search must still spend its budget and return the best point seen
        let cfg = BoConfig { n_calls: 15, n_init: 5, ..BoConfig::default() };
        let r = bayes_opt(&paper_box(), &cfg, 2, |t, _| Ok(if t > 1900.0 { 1.0 } else { 0.0 }))
            .unwrap();
        assert_eq!(r.evals, 15);
        assert!(r.best.value >= 0.0);
    }

    #[test]
    fn bayes_opt_validates_its_budget() {
        let cfg = BoConfig { n_calls: 0, ..BoConfig::default() };
        assert!(bayes_opt(&paper_box(), &cfg, 1, bowl).is_err());
    }

    #[test]
    fn solve3_inverts_a_known_system() {
        // m * (1, -2, 3) with m rows (2,1,0), (1,3,1), (0,1,4)
        let m = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        let b = [0.0, -2.0, 10.0];
        let x = solve3(m, b).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] + 2.0).abs() < 1e-12);
        assert!((x[2] - 3.0).abs() < 1e-12);
        // singular matrix is rejected
        let s = [1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0];
        assert!(solve3(s, b).is_err());
    }

    #[test]
    fn price_rule_recovers_an_exact_quadratic_argmax() {
        // argmax price follows g(t) = 9000 + 6e-4 t^2, which lands exactly on
        // the price lattice at every release time below
        let bounds = paper_box();
        let ts = lattice(0.0, 2000.0, 5);
        let ps = lattice(3000.0, 15_000.0, 81); // step 150
        let g = |t: f64| 9000.0 + 6e-4 * t * t;
        let mut values = Vec::new();
        for &t in &ts {
            for &p in &ps {
                values.push(-(p - g(t)).powi(2));
            }
        }
        let rule = price_contingency(&bounds, &ts, &ps, &values).unwrap();
        assert!((rule.coeffs[0] - 9000.0).abs() < 1e-6, "{:?}", rule.coeffs);
        assert!(rule.coeffs[1].abs() < 1e-9, "{:?}", rule.coeffs);
        assert!((rule.coeffs[2] - 6e-4).abs() < 1e-12, "{:?}", rule.coeffs);
        assert_eq!(rule.knots[2], (1000.0, 9600.0));
        assert_eq!(rule.eval(1000.0), 9600.0);
        // the clamp keeps extrapolations inside the admissible price range
        assert_eq!(rule.eval(1e6), 15_000.0);
    }

    #[test]
    fn price_rule_validates_the_surface_shape() {
        let bounds = paper_box();
        let ts = lattice(0.0, 2000.0, 4);
        let ps = lattice(3000.0, 15_000.0, 3);
        assert!(price_contingency(&bounds, &ts, &ps, &[0.0; 11]).is_err());
        assert!(price_contingency(&bounds, &ts[..2], &ps, &[0.0; 6]).is_err());
        let mut vals = vec![0.0; 12];
        vals[3] = f64::NAN;
        assert!(price_contingency(&bounds, &ts, &ps, &vals).is_err());
    }
}

//! Software reliability model: a nonhomogeneous Poisson process with power-law
//! mean function m(t) = a * t^c. Bug discovery before release drives debugging
//! cost; bugs left at the end of the life cycle degrade perceived quality.
//! Parameters carry gamma priors and are updated by a random-walk Metropolis
//! sampler when failure data is available.

use crate::error::Error;
use crate::rng::{domain, substream};
use crate::Result;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Parameters of the power-law mean function m(t) = a * t^c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NhppParams {
    /// Scale, a > 0 (expected bug count at t = 1).
    pub a: f64,
    /// Growth exponent, c > 0; c < 1 means discovery slows over time.
    pub c: f64,
}

impl NhppParams {
    pub fn new(a: f64, c: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::invalid(format!("nhpp scale a must be positive, got {a}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("nhpp exponent c must be positive, got {c}")));
        }
        Ok(Self { a, c })
    }
}

/// Expected number of bugs discovered by time t (t >= 0, in days).
pub fn mean_function(params: NhppParams, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    params.a * t.powf(params.c)
}

/// Gamma distribution in shape/rate form.
///
/// Scenario files may give either `{shape, rate}` or `{mean, sd}`; the latter
/// is converted by moment matching (shape = (mean/sd)^2, rate = mean/sd^2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaSpecInput", into = "GammaSpecInput")]
pub struct GammaSpec {
    pub shape: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum GammaSpecInput {
    ShapeRate { shape: f64, rate: f64 },
    MeanSd { mean: f64, sd: f64 },
}

impl TryFrom<GammaSpecInput> for GammaSpec {
    type Error = Error;
    fn try_from(v: GammaSpecInput) -> Result<Self> {
        match v {
            GammaSpecInput::ShapeRate { shape, rate } => GammaSpec::new(shape, rate),
            GammaSpecInput::MeanSd { mean, sd } => GammaSpec::from_mean_sd(mean, sd),
        }
    }
}

impl From<GammaSpec> for GammaSpecInput {
    fn from(g: GammaSpec) -> Self {
        GammaSpecInput::ShapeRate { shape: g.shape, rate: g.rate }
    }
}

impl GammaSpec {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!(
                "gamma spec needs positive shape and rate, got shape={shape} rate={rate}"
            )));
        }
        Ok(Self { shape, rate })
    }

    /// Moment-matched spec: shape = (mean/sd)^2, rate = mean/sd^2.
    pub fn from_mean_sd(mean: f64, sd: f64) -> Result<Self> {
        if !(mean > 0.0 && sd > 0.0) {
            return Err(Error::invalid(format!(
                "gamma moments must be positive, got mean={mean} sd={sd}"
            )));
        }
        Self::new((mean / sd).powi(2), mean / (sd * sd))
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sd(&self) -> f64 {
        self.shape.sqrt() / self.rate
    }

    /// Log density at x > 0, including the normalizing constant.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln()
            - self.rate * x
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated at construction")
            .sample(rng)
    }
}

/// Beta distribution on (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!(
                "beta spec needs positive parameters, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        Beta::new(self.alpha, self.beta)
            .expect("validated at construction")
            .sample(rng)
    }
}

/// Observed failure history: event times within an observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureData {
    times: Vec<f64>,
    t_obs: f64,
    sum_log_t: f64,
}

impl FailureData {
    /// Validates that times are finite, strictly positive (a zero-time event
    /// makes the log intensity undefined for c < 1), nondecreasing, and within
    /// (0, t_obs].
    pub fn new(times: Vec<f64>, t_obs: f64) -> Result<Self> {
        if !(t_obs > 0.0 && t_obs.is_finite()) {
            return Err(Error::InvalidData(format!(
                "observation window must be positive, got {t_obs}"
            )));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::InvalidData(format!(
                    "event {i} has time {t}; times must be finite and > 0"
                )));
            }
            if t > t_obs {
                return Err(Error::InvalidData(format!(
                    "event {i} at {t} lies beyond the observation window {t_obs}"
                )));
            }
            if t < prev {
                return Err(Error::InvalidData(format!(
                    "event times must be nondecreasing, event {i} at {t} follows {prev}"
                )));
            }
            prev = t;
        }
        let sum_log_t = times.iter().map(|t| t.ln()).sum();
        Ok(Self { times, t_obs, sum_log_t })
    }

    /// Loads one event time per row from a CSV file. Lines starting with `#`
    /// and an optional `time` header row are skipped; the first column is the
    /// event time in days.
    pub fn load_csv(path: &std::path::Path, t_obs: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut times = Vec::new();
        let mut seen_row = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let field = line.split(',').next().unwrap().trim();
            if !seen_row {
                seen_row = true;
                if field.parse::<f64>().is_err() {
                    continue; // header row
                }
            }
            let t: f64 = field.parse().map_err(|_| {
                Error::InvalidData(format!("line {}: cannot parse time '{field}'", lineno + 1))
            })?;
            times.push(t);
        }
        Self::new(times, t_obs)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t_obs(&self) -> f64 {
        self.t_obs
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Log likelihood of the failure history under m(t) = a * t^c:
/// -m(t_obs) + sum_i log(a c t_i^(c-1)).
pub fn log_likelihood(params: NhppParams, data: &FailureData) -> f64 {
    let n = data.times.len() as f64;
    -mean_function(params, data.t_obs)
        + n * (params.a.ln() + params.c.ln())
        + (params.c - 1.0) * data.sum_log_t
}

/// Draws from the posterior (or the prior when data is absent).
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    draws: Vec<NhppParams>,
    acceptance_rate: f64,
    seed: u64,
}

impl PosteriorSamples {
    /// Wraps externally produced draws (tests, synthetic posteriors).
    pub fn from_draws(draws: Vec<NhppParams>) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::Empty("posterior draws".into()));
        }
        Ok(Self { draws, acceptance_rate: f64::NAN, seed: 0 })
    }

    pub fn draws(&self) -> &[NhppParams] {
        &self.draws
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniformly picks one stored draw.
    pub fn pick(&self, rng: &mut impl Rng) -> NhppParams {
        self.draws[rng.random_range(0..self.draws.len())]
    }

    pub fn mean_a(&self) -> f64 {
        self.draws.iter().map(|p| p.a).sum::<f64>() / self.draws.len() as f64
    }

    pub fn mean_c(&self) -> f64 {
        self.draws.iter().map(|p| p.c).sum::<f64>() / self.draws.len() as f64
    }

    pub fn sd_a(&self) -> f64 {
        sd(self.draws.iter().map(|p| p.a), self.mean_a())
    }

    pub fn sd_c(&self) -> f64 {
        sd(self.draws.iter().map(|p| p.c), self.mean_c())
    }
}

fn sd(values: impl Iterator<Item = f64>, mean: f64) -> f64 {
    let (mut n, mut ss) = (0.0, 0.0);
    for v in values {
        n += 1.0;
        ss += (v - mean) * (v - mean);
    }
    (ss / (n - 1.0)).sqrt()
}

/// Random-walk Metropolis on (log a, log c). The proposal scale adapts toward
/// a 0.3 acceptance rate during burn-in and is frozen afterwards. With no
/// data the target is the prior itself, which keeps the predictive honest
/// before any failures are observed and doubles as a sampler check.
pub fn sample_posterior(
    data: Option<&FailureData>,
    prior_a: GammaSpec,
    prior_c: GammaSpec,
    n_draws: usize,
    burn_in: usize,
    seed: u64,
) -> Result<PosteriorSamples> {
    if n_draws == 0 {
        return Err(Error::Empty("requested zero posterior draws".into()));
    }
    let mut rng = substream(seed, domain::MCMC, 0);
    let log_target = |x: f64, y: f64| -> f64 {
        // Density over (log a, log c): prior and likelihood at (a, c) plus
        // the log Jacobian x + y of the exp transform.
        let (a, c) = (x.exp(), y.exp());
        let mut lt = prior_a.ln_pdf(a) + prior_c.ln_pdf(c) + x + y;
        if let Some(d) = data {
            lt += log_likelihood(NhppParams { a, c }, d);
        }
        lt
    };

    let (mut x, mut y) = (prior_a.mean().ln(), prior_c.mean().ln());
    let mut lt = log_target(x, y);
    let mut scale = 0.1_f64;
    let unit = Normal::new(0.0, 1.0).unwrap();

    let total = burn_in + n_draws;
    let mut draws = Vec::with_capacity(n_draws);
    let mut accepted_kept = 0usize;
    let mut window_acc = 0usize;
    const TARGET_RATE: f64 = 0.3;
    const WINDOW: usize = 100;

    for it in 0..total {
        let (px, py) = (x + scale * unit.sample(&mut rng), y + scale * unit.sample(&mut rng));
        let plt = log_target(px, py);
        let accept = plt - lt >= 0.0 || rng.random::<f64>().ln() < plt - lt;
        if accept {
            (x, y, lt) = (px, py, plt);
            window_acc += 1;
            if it >= burn_in {
                accepted_kept += 1;
            }
        }
        if it < burn_in && (it + 1) % WINDOW == 0 {
            let rate = window_acc as f64 / WINDOW as f64;
            scale *= ((rate - TARGET_RATE) * 1.0).exp();
            scale = scale.clamp(1e-4, 10.0);
            window_acc = 0;
        } else if it + 1 == burn_in {
            window_acc = 0;
        }
        if it >= burn_in {
            draws.push(NhppParams { a: x.exp(), c: y.exp() });
        }
    }

    let acceptance_rate = accepted_kept as f64 / n_draws as f64;
    if !(0.1..=0.6).contains(&acceptance_rate) {
        log::warn!(
            "posterior sampler acceptance rate {acceptance_rate:.3} outside [0.1, 0.6]; \
             draws may mix poorly"
        );
    }
    Ok(PosteriorSamples { draws, acceptance_rate, seed })
}

/// Draws a bug count over [0, t]: Poisson with mean m(t).
pub fn sample_bug_count(params: NhppParams, t: f64, rng: &mut impl Rng) -> u64 {
    let m = mean_function(params, t);
    poisson_draw(m, rng)
}

/// Seed-taking wrapper around [`sample_bug_count`].
pub fn predict_bug_count(params: NhppParams, t: f64, seed: u64) -> u64 {
    sample_bug_count(params, t, &mut substream(seed, domain::GENERIC, 0))
}

/// Counts discovered by release time `t` and left over on (t, t_end]. The two
/// are independent Poisson draws by the independent-increment property.
pub fn sample_release_counts(
    params: NhppParams,
    t: f64,
    t_end: f64,
    rng: &mut impl Rng,
) -> (u64, u64) {
    debug_assert!(t <= t_end);
    let m_t = mean_function(params, t);
    let m_end = mean_function(params, t_end);
    let e = poisson_draw(m_t, rng);
    let q = poisson_draw((m_end - m_t).max(0.0), rng);
    (e, q)
}

fn poisson_draw(mean: f64, rng: &mut impl Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// Bugs remaining at the end of the life cycle given totals e(T) and e(t).
pub fn residual_quality(e_total: u64, e_by_release: u64) -> Result<u64> {
    e_total.checked_sub(e_by_release).ok_or_else(|| {
        Error::InvalidData(format!(
            "total bug count {e_total} is below the count {e_by_release} found by release"
        ))
    })
}

/// Simulates a failure history on (0, t_obs]: the event count is Poisson with
/// mean m(t_obs) and, given the count, times are iid with cdf m(t)/m(t_obs),
/// i.e. t = t_obs * u^(1/c). Returned sorted ascending.
pub fn generate_failure_times(params: NhppParams, t_obs: f64, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, domain::GENERIC, 0);
    let n = poisson_draw(mean_function(params, t_obs), &mut rng);
    let mut times: Vec<f64> = (0..n)
        .map(|_| t_obs * rng.random::<f64>().powf(1.0 / params.c))
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times
}

/// Source of NHPP parameter draws for predictive simulation: either stored
/// posterior draws or an independent Gamma x Beta prior (used for competitor
/// reliability beliefs, where the exponent lives in (0, 1)).
#[derive(Debug, Clone)]
pub enum BugModel {
    Posterior(PosteriorSamples),
    Parametric { a: GammaSpec, c: BetaSpec },
}

impl BugModel {
    pub fn draw_params(&self, rng: &mut impl Rng) -> NhppParams {
        match self {
            BugModel::Posterior(p) => p.pick(rng),
            BugModel::Parametric { a, c } => NhppParams { a: a.sample(rng), c: c.sample(rng) },
        }
    }
}

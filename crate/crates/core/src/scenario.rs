//! Scenario documents: one JSON file fully determines an experiment.
//!
//! A scenario bundles the market constants, the company's cost and
//! reliability priors, buyer segments, and the competitor lineup. Loading is
//! strict (unknown keys are rejected with their path) and every scenario has
//! a canonical content hash, so results can always be traced back to the
//! exact inputs that produced them. `Scenario::builtin("paper-default")`
//! returns the reference configuration used throughout the test suite.

use crate::competitors::{
    build_strategic_model, ArchetypeKind, ArchetypeModel, BugBelief, CompetitorModel,
    CompetitorProblem, Level0Model, ScaledDist, StrategicModel,
};
use crate::error::Error;
use crate::market::{ChoiceRule, CostParams, EvalContext, MarketConfig, Segment};
use crate::optimize::DecisionBox;
use crate::preferences::{BuyerPrefPrior, CompanyUtility, Normalizer, RhoPrior};
use crate::reliability::{sample_posterior, BetaSpec, BugModel, FailureData, GammaSpec};
use crate::rng::derive_seed;
use crate::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Observed failure history reference: a CSV of event times plus the window
/// (in days) the history was collected over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureDataSpec {
    pub path: PathBuf,
    pub t_obs: f64,
}

/// Posterior sampler budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSettings {
    pub n_draws: usize,
    pub burn_in: usize,
}

impl Default for McmcSettings {
    fn default() -> Self {
        McmcSettings { n_draws: 20_000, burn_in: 4_000 }
    }
}

/// The standard reliability belief about a company one does not control:
/// the same power-law moments as the reference prior for the scale but with
/// twice the spread, and a Beta exponent concentrated below 1.
pub fn standard_rival_bugs() -> BugBelief {
    BugBelief {
        a: GammaSpec::from_mean_sd(0.256, 0.2).expect("fixed moments"),
        c: BetaSpec::new(2.019, 0.394).expect("fixed shapes"),
    }
}

fn default_cost_cv() -> f64 {
    0.10
}

fn default_strategic_dims() -> (usize, usize) {
    (20, 20)
}

fn default_strategic_m() -> usize {
    10_000
}

/// One competitor in a scenario file. `level1` rivals are resolved into
/// sampling models by estimating their own expected-utility surface; the
/// other kinds map directly onto exogenous samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CompetitorSpec {
    Level0 {
        t_dist: ScaledDist,
        p_dist: ScaledDist,
        #[serde(default = "standard_rival_bugs")]
        bugs: BugBelief,
    },
    Aggressive {
        #[serde(default = "standard_rival_bugs")]
        bugs: BugBelief,
    },
    Careful {
        #[serde(default = "standard_rival_bugs")]
        bugs: BugBelief,
    },
    Level1 {
        #[serde(default = "standard_rival_bugs")]
        bugs: BugBelief,
        /// Spread of the belief about the rival's cost structure.
        #[serde(default = "default_cost_cv")]
        cost_cv: f64,
        /// Lattice resolution of the rival's expected-utility surface.
        #[serde(default = "default_strategic_dims")]
        dims: (usize, usize),
        /// Monte Carlo draws behind each lattice point.
        #[serde(default = "default_strategic_m")]
        m_per_point: usize,
    },
}

impl CompetitorSpec {
    fn validate(&self) -> Result<()> {
        match self {
            CompetitorSpec::Level0 { t_dist, p_dist, .. } => {
                t_dist.validate()?;
                p_dist.validate()
            }
            CompetitorSpec::Aggressive { .. } | CompetitorSpec::Careful { .. } => Ok(()),
            CompetitorSpec::Level1 { cost_cv, dims, m_per_point, .. } => {
                if !(*cost_cv >= 0.0 && cost_cv.is_finite()) {
                    return Err(Error::invalid(format!(
                        "cost belief cv must be nonnegative, got {cost_cv}"
                    )));
                }
                if dims.0 < 2 || dims.1 < 2 {
                    return Err(Error::invalid(format!(
                        "strategic surface needs >= 2 cells per axis, got {}x{}",
                        dims.0, dims.1
                    )));
                }
                if *m_per_point == 0 {
                    return Err(Error::invalid("strategic surface needs draws per cell"));
                }
                Ok(())
            }
        }
    }

}

/// A full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub market: MarketConfig,
    pub cost: CostParams,
    /// Prior over the scale of the company's own fault-discovery process.
    pub own_prior_a: GammaSpec,
    /// Prior over the exponent of the company's own fault-discovery process.
    pub own_prior_c: GammaSpec,
    /// Optional observed failure history; when present the reliability
    /// posterior conditions on it, otherwise the prior is sampled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_data: Option<FailureDataSpec>,
    pub normalizer: Normalizer,
    pub segments: Vec<Segment>,
    pub competitors: Vec<CompetitorSpec>,
    #[serde(default = "default_company_utility")]
    pub company_utility: CompanyUtility,
    #[serde(default)]
    pub choice_rule: ChoiceRule,
    /// Default Monte Carlo size for commands that do not override it.
    pub mc_size: usize,
    /// Base seed; sampler and surface seeds are derived from it.
    pub seed: u64,
    #[serde(default)]
    pub mcmc: McmcSettings,
}

fn default_company_utility() -> CompanyUtility {
    CompanyUtility::Identity
}

fn standard_level0_spec() -> CompetitorSpec {
    CompetitorSpec::Level0 {
        t_dist: ScaledDist::Uniform { lo: 0.0, hi: 2000.0 },
        p_dist: ScaledDist::Uniform { lo: 3000.0, hi: 15_000.0 },
        bugs: standard_rival_bugs(),
    }
}

const SALT_MCMC: u64 = 0x4d43_4d43;
const SALT_STRATEGIC: u64 = 0x5354_5247;

impl Scenario {
    /// The reference configuration: 1000 buyers over a 2000-day life cycle,
    /// prices in [3000, 15000], cost coefficients (200, 1000, 5000),
    /// moment-specified reliability priors, one Dirichlet(1, 2, 1) buyer
    /// segment with Gamma(5, 1) risk aversion, and two uniform level-0
    /// competitors.
    pub fn paper_default() -> Scenario {
        Scenario {
            market: MarketConfig {
                n_buyers: 1000,
                life_cycle: 2000.0,
                price_lo: 3000.0,
                price_hi: 15_000.0,
                budget: None,
            },
            cost: CostParams { c11: 200.0, c21: 1000.0, c31: 5000.0 },
            own_prior_a: GammaSpec::from_mean_sd(0.256, 0.1).expect("fixed moments"),
            own_prior_c: GammaSpec::from_mean_sd(0.837, 0.1).expect("fixed moments"),
            failure_data: None,
            normalizer: Normalizer::new(2000.0, 15_000.0, 150.0).expect("fixed scales"),
            segments: vec![Segment {
                weight: 1.0,
                prefs: BuyerPrefPrior {
                    dirichlet_alpha: [1.0, 2.0, 1.0],
                    rho: RhoPrior::Gamma(GammaSpec::new(5.0, 1.0).expect("fixed shapes")),
                },
            }],
            competitors: vec![standard_level0_spec(), standard_level0_spec()],
            company_utility: CompanyUtility::Identity,
            choice_rule: ChoiceRule::Mnl,
            mc_size: 100_000,
            seed: 42,
            mcmc: McmcSettings::default(),
        }
    }

    /// The reference configuration for markets where buyers pick their
    /// favorite affordable product under a budget, uniform on
    /// [10000, 20000].
    pub fn paper_multi() -> Scenario {
        let mut s = Self::paper_default();
        s.market.budget = Some(ScaledDist::Uniform { lo: 10_000.0, hi: 20_000.0 });
        s
    }

    /// Built-in scenarios addressable by name instead of a file path.
    pub fn builtin(name: &str) -> Option<Scenario> {
        match name {
            "paper-default" => Some(Self::paper_default()),
            "paper-multi" => Some(Self::paper_multi()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.cost.validate()?;
        self.normalizer.validate()?;
        self.company_utility.validate()?;
        if self.segments.is_empty() {
            return Err(Error::Scenario("scenario needs at least one buyer segment".into()));
        }
        for s in &self.segments {
            s.prefs.validate()?;
        }
        if self.competitors.is_empty() {
            return Err(Error::Scenario("scenario needs at least one competitor".into()));
        }
        for c in &self.competitors {
            c.validate()?;
        }
        if self.mc_size == 0 {
            return Err(Error::Scenario("mc_size must be at least 1".into()));
        }
        if self.mcmc.n_draws == 0 {
            return Err(Error::Scenario("mcmc.n_draws must be at least 1".into()));
        }
        if let Some(f) = &self.failure_data {
            if !(f.t_obs > 0.0 && f.t_obs.is_finite()) {
                return Err(Error::Scenario(format!(
                    "failure_data.t_obs must be positive, got {}",
                    f.t_obs
                )));
            }
        }
        Ok(())
    }

    /// Parses and validates a scenario, reporting the JSON path of whatever
    /// key fails.
    pub fn from_json(text: &str) -> Result<Scenario> {
        let mut de = serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(&mut de)
            .map_err(|e| Error::Scenario(format!("{} (at {})", e.inner(), e.path())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    /// Content hash over the canonical (re-serialized) form; two documents
    /// with reordered keys or equivalent prior parameterizations hash the
    /// same.
    pub fn canonical_hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("scenario serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The admissible (release time, price) rectangle.
    pub fn decision_box(&self) -> DecisionBox {
        DecisionBox {
            t_lo: 0.0,
            t_hi: self.market.life_cycle,
            p_lo: self.market.price_lo,
            p_hi: self.market.price_hi,
        }
    }

    /// Copy with every segment's risk aversion fixed at a point value, for
    /// sensitivity sweeps.
    pub fn with_point_rho(&self, rho: f64) -> Scenario {
        let mut s = self.clone();
        for seg in &mut s.segments {
            seg.prefs.rho = RhoPrior::Point(rho);
        }
        s
    }

    /// Copy with a different field-fix cost coefficient, for sensitivity
    /// sweeps.
    pub fn with_c31(&self, c31: f64) -> Scenario {
        let mut s = self.clone();
        s.cost.c31 = c31;
        s
    }

    /// Indices of competitors that need a strategic surface.
    pub fn level1_indices(&self) -> Vec<usize> {
        self.competitors
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, CompetitorSpec::Level1 { .. }))
            .map(|(j, _)| j)
            .collect()
    }

    /// Seed for competitor `j`'s strategic surface build.
    pub fn strategic_seed(&self, j: usize) -> u64 {
        derive_seed(self.seed, SALT_STRATEGIC.wrapping_add(j as u64))
    }

    /// Competitor `j` as an exogenous sampler: declared model for level-0
    /// and archetypes, a uniform box for level-1 rivals (a rival reasons
    /// about other rivals non-strategically).
    fn level0_view(&self, j: usize) -> CompetitorModel {
        let m = &self.market;
        match &self.competitors[j] {
            CompetitorSpec::Level0 { t_dist, p_dist, bugs } => {
                CompetitorModel::Level0(Level0Model {
                    t_dist: *t_dist,
                    p_dist: *p_dist,
                    bugs: *bugs,
                    life_cycle: m.life_cycle,
                })
            }
            CompetitorSpec::Aggressive { bugs } => CompetitorModel::Archetype(ArchetypeModel {
                kind: ArchetypeKind::Aggressive,
                life_cycle: m.life_cycle,
                price_lo: m.price_lo,
                price_hi: m.price_hi,
                bugs: *bugs,
            }),
            CompetitorSpec::Careful { bugs } => CompetitorModel::Archetype(ArchetypeModel {
                kind: ArchetypeKind::Careful,
                life_cycle: m.life_cycle,
                price_lo: m.price_lo,
                price_hi: m.price_hi,
                bugs: *bugs,
            }),
            CompetitorSpec::Level1 { bugs, .. } => CompetitorModel::Level0(Level0Model {
                t_dist: ScaledDist::Uniform { lo: 0.0, hi: m.life_cycle },
                p_dist: ScaledDist::Uniform { lo: m.price_lo, hi: m.price_hi },
                bugs: *bugs,
                life_cycle: m.life_cycle,
            }),
        }
    }

    /// The decision problem competitor `j` is assumed to solve: the same
    /// market with `j`'s reliability prior, the advised company replaced by
    /// a uniform level-0 model, every other competitor kept at its level-0
    /// view, and a risk-neutral utility. Single-purchase demand regardless
    /// of budgets, matching the surface the sampling density is built from.
    pub fn rival_problem(&self, j: usize) -> Result<CompetitorProblem> {
        let spec = self.competitors.get(j).ok_or_else(|| {
            Error::Scenario(format!("no competitor at index {j}"))
        })?;
        let CompetitorSpec::Level1 { bugs, cost_cv, .. } = spec else {
            return Err(Error::Scenario(format!(
                "competitor {j} is not a strategic (level1) spec"
            )));
        };
        let m = &self.market;
        let mut rivals = vec![CompetitorModel::Level0(Level0Model {
            t_dist: ScaledDist::Uniform { lo: 0.0, hi: m.life_cycle },
            p_dist: ScaledDist::Uniform { lo: m.price_lo, hi: m.price_hi },
            bugs: standard_rival_bugs(),
            life_cycle: m.life_cycle,
        })];
        for k in 0..self.competitors.len() {
            if k != j {
                rivals.push(self.level0_view(k));
            }
        }
        let ctx = EvalContext {
            market: MarketConfig { budget: None, ..m.clone() },
            cost: self.cost,
            own_bugs: BugModel::Parametric { a: bugs.a, c: bugs.c },
            segments: self.segments.clone(),
            normalizer: self.normalizer,
            competitors: rivals,
            company_utility: CompanyUtility::Identity,
            choice_rule: self.choice_rule,
        };
        Ok(CompetitorProblem { ctx, cost_cv: *cost_cv })
    }

    /// Reliability model for the company's own product: the posterior given
    /// the configured failure history, or the prior when there is none.
    /// Deterministic given the scenario (the sampler seed derives from
    /// `self.seed`).
    pub fn own_bug_model(&self) -> Result<BugModel> {
        let data = match &self.failure_data {
            Some(spec) => Some(FailureData::load_csv(&spec.path, spec.t_obs)?),
            None => None,
        };
        let post = sample_posterior(
            data.as_ref(),
            self.own_prior_a,
            self.own_prior_c,
            self.mcmc.n_draws,
            self.mcmc.burn_in,
            derive_seed(self.seed, SALT_MCMC),
        )?;
        Ok(BugModel::Posterior(post))
    }

    /// Assembles the evaluation context: runs the reliability sampler and
    /// resolves every competitor spec, building strategic surfaces on the
    /// spot.
    pub fn build_context(&self) -> Result<EvalContext> {
        self.build_context_with(&[])
    }

    /// [`Scenario::build_context`] with prebuilt strategic models (for
    /// callers that cache surfaces). Entries are `(competitor index, model)`;
    /// any level-1 competitor without an entry is built fresh.
    pub fn build_context_with(&self, prebuilt: &[(usize, StrategicModel)]) -> Result<EvalContext> {
        self.validate()?;
        let own_bugs = self.own_bug_model()?;
        let mut competitors = Vec::with_capacity(self.competitors.len());
        for (j, spec) in self.competitors.iter().enumerate() {
            let model = match spec {
                CompetitorSpec::Level1 { dims, m_per_point, .. } => {
                    match prebuilt.iter().find(|(k, _)| *k == j) {
                        Some((_, m)) => CompetitorModel::Strategic(m.clone()),
                        None => {
                            log::info!(
                                "building strategic surface for competitor {j}: {}x{} cells, \
                                 {m_per_point} draws each",
                                dims.0,
                                dims.1
                            );
                            let problem = self.rival_problem(j)?;
                            CompetitorModel::Strategic(build_strategic_model(
                                &problem,
                                *dims,
                                *m_per_point,
                                self.strategic_seed(j),
                            )?)
                        }
                    }
                }
                _ => self.level0_view(j),
            };
            competitors.push(model);
        }
        let ctx = EvalContext {
            market: self.market.clone(),
            cost: self.cost,
            own_bugs,
            segments: self.segments.clone(),
            normalizer: self.normalizer,
            competitors,
            company_utility: self.company_utility,
            choice_rule: self.choice_rule,
        };
        ctx.validate()?;
        Ok(ctx)
    }
}

//! Buyer-side preference machinery. A product is seen through three signals
//! (release time, price, residual bug count); buyers weight the normalized
//! signals on the simplex and evaluate them through a CARA utility with
//! random risk aversion. The selling company has its own utility over money.

use crate::error::Error;
use crate::reliability::GammaSpec;
use crate::Result;
use rand::Rng;
use rand_distr::{Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

/// Signals a buyer observes about one product. `q` is the residual bug count
/// (integer in the market model, kept as f64 for the utility math).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductSignal {
    /// Release time in days.
    pub t: f64,
    /// Price in currency units.
    pub p: f64,
    /// Bugs remaining at the end of the life cycle.
    pub q: f64,
}

/// Simplex weights over (time, price, quality) attributes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuyerWeights(pub [f64; 3]);

/// Scales dividing each signal so attributes are comparable. The natural
/// choices are the life-cycle length, the price-box upper bound, and a
/// typical worst-case bug count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub t_scale: f64,
    pub p_scale: f64,
    pub q_scale: f64,
}

impl Normalizer {
    pub fn new(t_scale: f64, p_scale: f64, q_scale: f64) -> Result<Self> {
        for (name, v) in [("t_scale", t_scale), ("p_scale", p_scale), ("q_scale", q_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { t_scale, p_scale, q_scale })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.t_scale, self.p_scale, self.q_scale).map(|_| ())
    }
}

/// Signal scaled into comparable units.
pub fn normalize(n: &Normalizer, s: ProductSignal) -> [f64; 3] {
    [s.t / n.t_scale, s.p / n.p_scale, s.q / n.q_scale]
}

/// Absolute exponent bound keeping exp() finite in f64.
pub const CARA_EXP_CLAMP: f64 = 700.0;

/// CARA utility value plus a flag recording that the exponent hit the clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaraValue {
    pub utility: f64,
    pub saturated: bool,
}

/// Buyer utility 1 - exp(rho * (w . x)) for normalized signals x, i.e. CARA
/// over the aggregated disutility -(w . x). Larger time, price, or bug count
/// always hurts. The exponent is clamped to +-700 so the result stays finite.
pub fn cara_utility(w: BuyerWeights, rho: f64, x: [f64; 3]) -> CaraValue {
    let s = w.0[0] * x[0] + w.0[1] * x[1] + w.0[2] * x[2];
    let raw = rho * s;
    let clamped = raw.clamp(-CARA_EXP_CLAMP, CARA_EXP_CLAMP);
    CaraValue { utility: 1.0 - clamped.exp(), saturated: raw != clamped }
}

/// Prior over the buyer's risk-aversion coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoPrior {
    /// Gamma-distributed risk aversion.
    Gamma(GammaSpec),
    /// Degenerate prior; every buyer shares the same coefficient. Used by
    /// sensitivity sweeps over the risk-aversion level.
    Point(f64),
}

impl RhoPrior {
    pub fn validate(&self) -> Result<()> {
        match self {
            RhoPrior::Gamma(_) => Ok(()), // validated on construction
            RhoPrior::Point(v) => {
                if *v > 0.0 && v.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("point rho must be positive, got {v}")))
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self {
            RhoPrior::Gamma(g) => g.sample(rng),
            RhoPrior::Point(v) => *v,
        }
    }
}

/// Population distribution of buyer preferences: Dirichlet attribute weights
/// and a risk-aversion prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerPrefPrior {
    pub dirichlet_alpha: [f64; 3],
    pub rho: RhoPrior,
}

impl BuyerPrefPrior {
    pub fn validate(&self) -> Result<()> {
        if self.dirichlet_alpha.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::invalid(format!(
                "dirichlet alphas must be positive, got {:?}",
                self.dirichlet_alpha
            )));
        }
        self.rho.validate()
    }

    pub fn dirichlet(&self) -> Dirichlet<f64, 3> {
        Dirichlet::new(self.dirichlet_alpha).expect("validated alphas")
    }
}

/// One buyer's preferences drawn from the prior.
pub fn sample_pref(prior: &BuyerPrefPrior, rng: &mut impl Rng) -> (BuyerWeights, f64) {
    let w = prior.dirichlet().sample(rng);
    let rho = prior.rho.sample(rng);
    (BuyerWeights(w), rho)
}

/// Selling company's utility over money outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompanyUtility {
    /// Risk neutral: utility equals profit.
    Identity,
    /// CARA over profit measured in units of `money_scale` currency.
    Cara { rho: f64, money_scale: f64 },
}

impl CompanyUtility {
    pub fn validate(&self) -> Result<()> {
        match self {
            CompanyUtility::Identity => Ok(()),
            CompanyUtility::Cara { rho, money_scale } => {
                if !(*rho > 0.0 && rho.is_finite()) {
                    return Err(Error::invalid(format!("company rho must be positive, got {rho}")));
                }
                if !(*money_scale > 0.0 && money_scale.is_finite()) {
                    return Err(Error::invalid(format!(
                        "money scale must be positive, got {money_scale}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CompanyUtility::Identity)
    }

    pub fn eval(&self, money: f64) -> f64 {
        match self {
            CompanyUtility::Identity => money,
            CompanyUtility::Cara { rho, money_scale } => {
                let e = (-rho * money / money_scale).clamp(-CARA_EXP_CLAMP, CARA_EXP_CLAMP);
                1.0 - e.exp()
            }
        }
    }
}

/// Company money scale used by the built-in scenario (one million currency
/// units), so CARA coefficients stay O(1).
pub const COMPANY_MONEY_SCALE: f64 = 1e6;

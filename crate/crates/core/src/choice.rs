//! Buyer choice models. Given one buyer's utilities for every product on the
//! market, either a multinomial-logit share or a hard expected-utility
//! maximizer decides the purchase; Monte Carlo estimators integrate these
//! over competitor releases, reliability draws, and preference heterogeneity.

use crate::competitors::CompetitorModel;
use crate::error::Error;
use crate::exec::run_chunks;
use crate::preferences::{cara_utility, normalize, sample_pref, BuyerPrefPrior, Normalizer, ProductSignal};
use crate::reliability::{mean_function, BugModel};
use crate::rng::{domain, substream};
use crate::Result;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// Monte Carlo purchase-probability estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChoiceEstimate {
    pub prob: f64,
    pub std_error: f64,
    pub mc_size: usize,
}

/// Probability that the first product is chosen under multinomial logit,
/// conditional on realized utilities. Shifted by the running maximum so the
/// exponentials never overflow even for CARA utilities near -exp(700).
pub fn mnl_conditional(u_own: f64, u_competitors: &[f64]) -> f64 {
    let mx = u_competitors.iter().fold(u_own, |m, &u| m.max(u));
    let e_own = (u_own - mx).exp();
    let denom: f64 = e_own + u_competitors.iter().map(|&u| (u - mx).exp()).sum::<f64>();
    e_own / denom
}

/// Whether a hard expected-utility maximizer picks the first product;
/// utilities tied at the maximum are broken uniformly at random.
pub fn eumax_pick(u_own: f64, u_competitors: &[f64], rng: &mut impl Rng) -> bool {
    let mx = u_competitors.iter().fold(u_own, |m, &u| m.max(u));
    if u_own < mx {
        return false;
    }
    let ties = u_competitors.iter().filter(|&&u| u == mx).count();
    if ties == 0 {
        return true;
    }
    // Own product is one of `ties + 1` maximizers.
    rng.random_range(0..=ties) == 0
}

/// Everything a one-decision purchase-probability estimate needs.
#[derive(Clone, Copy)]
pub struct ChoiceSetup<'a> {
    pub own_bugs: &'a BugModel,
    pub life_cycle: f64,
    pub competitors: &'a [CompetitorModel],
    pub prefs: &'a BuyerPrefPrior,
    pub normalizer: &'a Normalizer,
}

#[derive(Clone, Copy, Default)]
struct Accum {
    sum: f64,
    sum_sq: f64,
}

fn estimate_choice(
    setup: &ChoiceSetup,
    t1: f64,
    p1: f64,
    m: usize,
    seed: u64,
    mnl: bool,
) -> Result<ChoiceEstimate> {
    if m == 0 {
        return Err(Error::Empty("choice estimate needs at least one draw".into()));
    }
    let chunks = run_chunks(m, |c, range| {
        let mut rng = substream(seed, domain::GENERIC, c as u64);
        let mut acc = Accum::default();
        let mut us = vec![0.0; setup.competitors.len()];
        for _ in range {
            let params = setup.own_bugs.draw_params(&mut rng);
            let lambda =
                (mean_function(params, setup.life_cycle) - mean_function(params, t1)).max(0.0);
            let q1 = if lambda > 0.0 {
                Poisson::new(lambda).expect("positive mean").sample(&mut rng)
            } else {
                0.0
            };
            let (w, rho) = sample_pref(setup.prefs, &mut rng);
            let u1 = cara_utility(
                w,
                rho,
                normalize(setup.normalizer, ProductSignal { t: t1, p: p1, q: q1 }),
            )
            .utility;
            for (j, comp) in setup.competitors.iter().enumerate() {
                let d = comp.sample(&mut rng);
                us[j] = cara_utility(
                    w,
                    rho,
                    normalize(setup.normalizer, ProductSignal { t: d.t, p: d.p, q: d.q as f64 }),
                )
                .utility;
            }
            let v = if mnl {
                mnl_conditional(u1, &us)
            } else {
                f64::from(eumax_pick(u1, &us, &mut rng))
            };
            acc.sum += v;
            acc.sum_sq += v * v;
        }
        acc
    });
    let mut total = Accum::default();
    for a in chunks {
        total.sum += a.sum;
        total.sum_sq += a.sum_sq;
    }
    Ok(finalize(total, m))
}

fn finalize(acc: Accum, m: usize) -> ChoiceEstimate {
    let mf = m as f64;
    let prob = acc.sum / mf;
    let var = if m > 1 { ((acc.sum_sq - acc.sum * acc.sum / mf) / (mf - 1.0)).max(0.0) } else { 0.0 };
    ChoiceEstimate { prob, std_error: (var / mf).sqrt(), mc_size: m }
}

/// Purchase probability of the product released at `t1` for price `p1` under
/// multinomial-logit buyers, integrated over all uncertainty by `m` draws.
pub fn mnl_choice_prob(
    setup: &ChoiceSetup,
    t1: f64,
    p1: f64,
    m: usize,
    seed: u64,
) -> Result<ChoiceEstimate> {
    estimate_choice(setup, t1, p1, m, seed, true)
}

/// Same integral with hard expected-utility-maximizing buyers.
pub fn eumax_choice_prob(
    setup: &ChoiceSetup,
    t1: f64,
    p1: f64,
    m: usize,
    seed: u64,
) -> Result<ChoiceEstimate> {
    estimate_choice(setup, t1, p1, m, seed, false)
}

/// Mixes per-segment estimates into a population estimate: probabilities mix
/// linearly, standard errors in quadrature (segments are estimated from
/// independent draws).
pub fn segment_mixture_prob(
    weights: &[f64],
    estimates: &[ChoiceEstimate],
) -> Result<ChoiceEstimate> {
    if weights.is_empty() || weights.len() != estimates.len() {
        return Err(Error::invalid(format!(
            "need matching nonempty weights and estimates, got {} and {}",
            weights.len(),
            estimates.len()
        )));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::invalid("segment weights must be nonnegative".to_string()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("segment weights must sum to 1, got {total}")));
    }
    let prob = weights.iter().zip(estimates).map(|(w, e)| w * e.prob).sum();
    let var: f64 = weights
        .iter()
        .zip(estimates)
        .map(|(w, e)| w * w * e.std_error * e.std_error)
        .sum();
    let mc_size = estimates.iter().map(|e| e.mc_size).min().unwrap();
    Ok(ChoiceEstimate { prob, std_error: var.sqrt(), mc_size })
}

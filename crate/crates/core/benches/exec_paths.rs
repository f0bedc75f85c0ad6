//! Sequential vs rayon execution of the Monte Carlo chunk sweep, measured on
//! the estimator's real inner loop (preference draw, reliability draw, CARA
//! utilities), plus one full decision-cell evaluation under the compiled
//! execution path. Both paths fold chunks in the same order, so before
//! timing anything the harness asserts they agree bit for bit.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use launchopt::exec::run_chunks_seq;
use launchopt::market::{evaluate_decision, SharedDraws};
use launchopt::preferences::{
    cara_utility, normalize, sample_pref, BuyerPrefPrior, Normalizer, ProductSignal, RhoPrior,
};
use launchopt::reliability::{mean_function, GammaSpec, NhppParams};
use launchopt::rng::{domain, substream};
use launchopt::scenario::Scenario;
use rand_distr::{Distribution, Poisson};
use std::hint::black_box;
use std::ops::Range;

/// One chunk of buyer draws: residual bug count, preference vector, CARA
/// utilities for two rival offers, win counting. The shape and cost per draw
/// match the purchase-probability estimator.
fn buyer_chunk(
    seed: u64,
    chunk: usize,
    range: Range<usize>,
    prefs: &BuyerPrefPrior,
    norm: &Normalizer,
) -> f64 {
    let mut rng = substream(seed, domain::GENERIC, chunk as u64);
    let params = NhppParams { a: 0.256, c: 0.837 };
    let lambda = mean_function(params, 2000.0) - mean_function(params, 600.0);
    let poisson = Poisson::new(lambda).expect("positive mean");
    let mut wins = 0.0;
    for _ in range {
        let q1: f64 = poisson.sample(&mut rng);
        let (w, rho) = sample_pref(prefs, &mut rng);
        let own = cara_utility(w, rho, normalize(norm, ProductSignal { t: 600.0, p: 9000.0, q: q1 }));
        let rival =
            cara_utility(w, rho, normalize(norm, ProductSignal { t: 800.0, p: 8000.0, q: q1 + 1.0 }));
        if own.utility >= rival.utility {
            wins += 1.0;
        }
    }
    wins
}

fn market_prior() -> (BuyerPrefPrior, Normalizer) {
    let prefs = BuyerPrefPrior {
        dirichlet_alpha: [1.0, 2.0, 1.0],
        rho: RhoPrior::Gamma(GammaSpec::new(5.0, 1.0).unwrap()),
    };
    (prefs, Normalizer::new(2000.0, 15000.0, 150.0).unwrap())
}

fn bench_chunk_sweep(c: &mut Criterion) {
    let (prefs, norm) = market_prior();

    #[cfg(feature = "parallel")]
    {
        let seq: f64 =
            run_chunks_seq(50_000, |ch, r| buyer_chunk(7, ch, r, &prefs, &norm)).iter().sum();
        let par: f64 = launchopt::exec::run_chunks_par(50_000, |ch, r| {
            buyer_chunk(7, ch, r, &prefs, &norm)
        })
        .iter()
        .sum();
        assert_eq!(seq.to_bits(), par.to_bits(), "execution paths disagree");
    }

    let mut g = c.benchmark_group("buyer_draws");
    for &m in &[20_000usize, 100_000] {
        g.throughput(Throughput::Elements(m as u64));
        g.bench_with_input(BenchmarkId::new("sequential", m), &m, |b, &m| {
            b.iter(|| {
                run_chunks_seq(black_box(m), |ch, r| buyer_chunk(7, ch, r, &prefs, &norm))
                    .iter()
                    .sum::<f64>()
            })
        });
        #[cfg(feature = "parallel")]
        g.bench_with_input(BenchmarkId::new("parallel", m), &m, |b, &m| {
            b.iter(|| {
                launchopt::exec::run_chunks_par(black_box(m), |ch, r| {
                    buyer_chunk(7, ch, r, &prefs, &norm)
                })
                .iter()
                .sum::<f64>()
            })
        });
    }
    g.finish();
}

/// One full decision-cell evaluation against a prebuilt draw bank, under
/// whichever execution path the crate was compiled with.
fn bench_decision_cell(c: &mut Criterion) {
    let scn = Scenario::paper_default();
    let ctx = scn.build_context().unwrap();
    let shared = SharedDraws::build(&ctx, 20_000, scn.seed).unwrap();
    let path = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };
    c.bench_function(&format!("decision_cell/{path}/20000"), |b| {
        b.iter(|| {
            evaluate_decision(&ctx, &shared, black_box(600.0), black_box(9000.0))
                .unwrap()
                .expected_utility
        })
    });
}

criterion_group!(benches, bench_chunk_sweep, bench_decision_cell);
criterion_main!(benches);

//! Evaluate one launch decision against the built-in default market.

use launchopt::market::{evaluate_decision, SharedDraws};
use launchopt::scenario::Scenario;

fn main() {
    let scn = Scenario::builtin("paper-default").unwrap();
    let ctx = scn.build_context().unwrap();
    let bank = SharedDraws::build(&ctx, scn.mc_size, scn.seed).unwrap();
    let out = evaluate_decision(&ctx, &bank, 600.0, 9000.0).unwrap();
    println!("EU {:.0}, purchase prob {:.3}", out.expected_utility, out.purchase_prob);
}

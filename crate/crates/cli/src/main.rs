use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use launchopt::scenario::Scenario;
use launchopt_cli::commands::{self, Method, SweepRun};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "launchopt",
    version,
    about = "Decision support for software launches: when to release, and at what price"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file, or a built-in name (paper-default, paper-multi)
    #[arg(long, default_value = "paper-default")]
    scenario: String,
    /// Override the scenario's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the scenario's Monte Carlo draw count
    #[arg(long)]
    mc_size: Option<usize>,
    /// Evaluation lattice, NTxNP
    #[arg(long, default_value = "50x50", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Output directory (default: runs/<command>)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Exhaustive lattice sweep
    Grid,
    /// Simulated annealing
    Sa,
    /// Bayesian optimization with a Gaussian-process surrogate
    Bo,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Grid => Method::Grid,
            MethodArg::Sa => Method::Sa,
            MethodArg::Bo => Method::Bo,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Search for the optimal release time and price
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Optimizer to run
        #[arg(long, value_enum, default_value_t = MethodArg::Grid)]
        method: MethodArg,
        /// Objective-call budget for the bo method
        #[arg(long)]
        bo_calls: Option<usize>,
    },
    /// Evaluate expected utility and purchase probability over the lattice
    Surface {
        #[command(flatten)]
        common: Common,
    },
    /// Optimal decisions across fixed buyer risk-aversion levels
    SensitivityRho {
        #[command(flatten)]
        common: Common,
        /// Comma-separated risk-aversion values
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
        rho: Vec<f64>,
    },
    /// Optimal decisions across after-release fix costs
    SensitivityC31 {
        #[command(flatten)]
        common: Common,
        /// Comma-separated c31 values
        #[arg(long, value_delimiter = ',', default_value = "1000,2500,5000,7500,10000")]
        c31: Vec<f64>,
    },
    /// Surface run against strategic competitors, with rival-surface caching
    Strategic {
        #[command(flatten)]
        common: Common,
        /// Directory for cached rival surfaces (default: <out>/cache)
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Surface run for budget-constrained multi-product markets
    Multi {
        #[command(flatten)]
        common: Common,
    },
    /// Fit the optimal-price-vs-release-time fallback curve
    Contingency {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected NTxNP, e.g. 50x50")?;
    let nt: usize = a.trim().parse().map_err(|_| format!("bad grid dimension '{a}'"))?;
    let np: usize = b.trim().parse().map_err(|_| format!("bad grid dimension '{b}'"))?;
    if nt == 0 || np == 0 {
        return Err("grid dimensions must be positive".into());
    }
    Ok((nt, np))
}

fn load_scenario(c: &Common) -> anyhow::Result<Scenario> {
    let mut s = match Scenario::builtin(&c.scenario) {
        Some(s) => s,
        None => Scenario::load(Path::new(&c.scenario))
            .with_context(|| format!("'{}' is not a built-in scenario or a readable file", c.scenario))?,
    };
    if let Some(seed) = c.seed {
        s.seed = seed;
    }
    if let Some(m) = c.mc_size {
        s.mc_size = m;
    }
    Ok(s)
}

fn out_dir(c: &Common, command: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(command))
}

fn print_sweep(run: &SweepRun, name: &str) {
    println!("{name:>8}  {:>8}  {:>8}  {:>14}  {:>9}", "t1*", "p1*", "exp utility", "pi");
    for r in &run.rows {
        println!(
            "{:>8}  {:>8.1}  {:>8.1}  {:>14.1}  {:>9.4}",
            r.x, r.t1, r.p1, r.outcome.expected_utility, r.outcome.purchase_prob
        );
    }
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match Cli::parse().command {
        Cmd::Optimize { common, method, bo_calls } => {
            let scn = load_scenario(&common)?;
            let out = out_dir(&common, "optimize");
            let run = commands::cmd_optimize(&scn, method.into(), common.grid, bo_calls, &out)?;
            println!(
                "optimum ({}): t1 = {:.1}, p1 = {:.1}",
                Method::from(method).name(),
                run.result.best.t,
                run.result.best.p
            );
            println!(
                "expected utility {:.1}, profit {:.1}, purchase prob {:.4} (se {:.4}), \
                 {} objective calls",
                run.at_best.expected_utility,
                run.at_best.expected_profit,
                run.at_best.purchase_prob,
                run.at_best.pi_std_error,
                run.result.evals
            );
            println!("outputs in {}", out.display());
        }
        Cmd::Surface { common } => {
            let scn = load_scenario(&common)?;
            let out = out_dir(&common, "surface");
            let run = commands::cmd_surface(&scn, common.grid, &out)?;
            let (t, p) = run.eval.best_point();
            let best = run.eval.best_cell();
            println!(
                "best cell: t1 = {t:.1}, p1 = {p:.1}, expected utility {:.1}, \
                 purchase prob {:.4}",
                best.expected_utility, best.purchase_prob
            );
            println!("outputs in {}", out.display());
        }
        Cmd::SensitivityRho { common, rho } => {
            let scn = load_scenario(&common)?;
            let out = out_dir(&common, "sensitivity-rho");
            let run = commands::cmd_sensitivity_rho(&scn, &rho, common.grid, &out)?;
            print_sweep(&run, "rho");
            println!("outputs in {}", out.display());
        }
        Cmd::SensitivityC31 { common, c31 } => {
            let scn = load_scenario(&common)?;
            let out = out_dir(&common, "sensitivity-c31");
            let run = commands::cmd_sensitivity_c31(&scn, &c31, common.grid, &out)?;
            print_sweep(&run, "c31");
            println!("outputs in {}", out.display());
        }
        Cmd::Strategic { common, cache_dir } => {
            let scn = load_scenario(&common)?;
            let out = out_dir(&common, "strategic");
            let run = commands::cmd_strategic(&scn, common.grid, cache_dir.as_deref(), &out)?;
            let (t, p) = run.eval.best_point();
            let best = run.eval.best_cell();
            println!(
                "best cell vs strategic rivals: t1 = {t:.1}, p1 = {p:.1}, \
                 expected utility {:.1}, purchase prob {:.4}",
                best.expected_utility, best.purchase_prob
            );
            println!("outputs in {}", out.display());
        }
        Cmd::Multi { common } => {
            let scn = load_scenario(&common)?;
            let out = out_dir(&common, "multi");
            let run = commands::cmd_multi(&scn, common.grid, &out)?;
            let (t, p) = run.eval.best_point();
            let best = run.eval.best_cell();
            println!(
                "best cell (multi-product market): t1 = {t:.1}, p1 = {p:.1}, \
                 expected utility {:.1}, purchase fraction {:.4}",
                best.expected_utility, best.purchase_prob
            );
            println!("outputs in {}", out.display());
        }
        Cmd::Contingency { common } => {
            let scn = load_scenario(&common)?;
            let out = out_dir(&common, "contingency");
            let run = commands::cmd_contingency(&scn, common.grid, &out)?;
            let [b0, b1, b2] = run.rule.coeffs;
            println!("price rule: p*(t) = {b0:.2} + {b1:.4}*t + {b2:.6}*t^2");
            println!("outputs in {}", out.display());
        }
    }
    Ok(())
}

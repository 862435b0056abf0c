use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsynth::{load_config, run_pipeline, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "rsynth", version, about = "Robust controller synthesis against co-safe LTL specifications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Translate the formula into a DFA (dfa.dot)
    Translate(Args),
    /// Build the grid abstraction (abstraction.meta.json)
    Abstract(Args),
    /// Check the simulation relation (certificate.json)
    Certify(Args),
    /// Robust and optimistic value iteration (values.csv, policy.csv)
    Synthesize(Args),
    /// Monte Carlo check of the refined controller (mc_report.json)
    Simulate(Args),
    /// Finite-horizon bound comparison (bounds_compare.csv)
    BoundsCompare(Args),
    /// Every stage
    All(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed for the Monte Carlo runs
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (falls back to RSYNTH_THREADS)
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (stage, args) = match cli.command {
        Command::Translate(a) => (Stage::Translate, a),
        Command::Abstract(a) => (Stage::Abstract, a),
        Command::Certify(a) => (Stage::Certify, a),
        Command::Synthesize(a) => (Stage::Synthesize, a),
        Command::Simulate(a) => (Stage::Simulate, a),
        Command::BoundsCompare(a) => (Stage::BoundsCompare, a),
        Command::All(a) => (Stage::All, a),
    };
    let threads = args
        .threads
        .or_else(|| std::env::var("RSYNTH_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions {
        out_dir: args.out,
        seed: args.seed,
    };
    match run_pipeline(&cfg, stage, &opts) {
        Ok(out) => {
            if let Some(c) = &out.certificate {
                println!("certificate: {} (eps {}, minimal eps {})", if c.passed { "PASS" } else { "FAIL" }, c.eps, c.eps_min);
            }
            if let Some(s) = &out.synthesis {
                println!("bounds: robust {} optimistic {}", s.bounds[0], s.bounds[1]);
            }
            if let Some(mc) = &out.mc {
                println!(
                    "monte carlo: {}/{} sat, {} undecided, CI half-width {}, verdict {:?}",
                    mc.successes, mc.runs, mc.undecided, mc.ci_half_width, mc.verdict
                );
            }
            println!("artifacts in {}", out.out_dir.display());
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use offload_core::harness::{
    find_aggregates, load_config, run_experiment_with, run_selftest, summarize, write_report,
    PolicyKind, RunOptions,
};
use offload_core::HarnessError;

#[derive(Parser)]
#[command(name = "offload-sim", version, about = "Privacy-aware edge offloading experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Override `seed_base`.
        #[arg(long)]
        seed: Option<u64>,
        /// Override `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `policy` (no, eo, random, rlo, drlo).
        #[arg(long, value_parser = parse_policy)]
        policy: Option<PolicyKind>,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
        /// Write learned policies to this directory.
        #[arg(long)]
        save_policies: Option<PathBuf>,
        /// Start learners from policies in this directory.
        #[arg(long)]
        load_policies: Option<PathBuf>,
    },
    /// Compare the `aggregate.csv` files under a directory.
    Summarize {
        dir: PathBuf,
        /// Where to write the comparison (defaults to `dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn parse_policy(s: &str) -> Result<PolicyKind, String> {
    PolicyKind::parse(s).ok_or_else(|| format!("unknown policy `{s}`"))
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            policy,
            threads,
            save_policies,
            load_policies,
        } => {
            let mut spec = load_config(&config)?;
            if let Some(s) = seed {
                spec.seed_base = s;
            }
            if let Some(o) = out {
                spec.output_dir = o;
            }
            if let Some(p) = policy {
                spec.policy = p;
            }
            if let Some(n) = threads {
                // Only fails if a pool already exists, which cannot happen here.
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            let resolved = toml::to_string(&spec).map_err(|e| HarnessError::Parse {
                path: config.clone(),
                message: e.to_string(),
            })?;
            println!("# resolved configuration\n{resolved}");
            let opts = RunOptions {
                save_policies,
                load_policies,
            };
            let output = run_experiment_with(&spec, &opts)?;
            for row in &output.aggregates {
                println!(
                    "point {:>3}  {:<6} reward {:>10.4} ± {:<8.4} privacy {:>8.4}  cost {:>9.4}  energy {:>9.4} J",
                    row.point,
                    row.policy.name(),
                    row.reward_mean,
                    row.reward_std,
                    row.privacy_mean,
                    row.cost_mean,
                    row.energy_j_mean,
                );
            }
            println!("results in {}", spec.output_dir.display());
            Ok(true)
        }
        Command::Summarize { dir, out } => {
            let inputs = find_aggregates(&dir)?;
            let report = summarize(&inputs)?;
            let out = out.unwrap_or(dir);
            write_report(&report, &out)?;
            println!(
                "{} inputs, {} points -> {}",
                report.inputs.len(),
                report.entries.len(),
                out.join("comparison.csv").display()
            );
            Ok(true)
        }
        Command::Selftest => {
            let results = run_selftest();
            for r in &results {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag}  {:<34} {:>6.2}s  {}", r.name, r.seconds, r.detail);
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

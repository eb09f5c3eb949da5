use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tramlab_cli::config::{parse_seed_list, ExperimentConfig};
use tramlab_cli::{run, threads_from_env, write_outputs, RunOptions, THREADS_ENV};

#[derive(Parser)]
#[command(name = "tram-lab", version, about = "Run privileged-information experiments from a config file")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write results.csv, results.json and plotdata/.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma list; overrides the file's seeds.
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory; overrides the file's `out` (default: results).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 2 if any acceptance threshold fails.
        #[arg(long)]
        check: bool,
        /// Record wall time in results.json.
        #[arg(long)]
        timing: bool,
    },
}

fn main() -> ExitCode {
    let Command::Run { config, seeds, out, check, timing } = Cli::parse().command;
    let result = (|| -> tramlab_core::Result<bool> {
        let mut cfg = ExperimentConfig::from_path(&config)?;
        if let Some(s) = seeds {
            cfg.set_seeds(parse_seed_list(&s)?)?;
        }
        let threads = threads_from_env(std::env::var(THREADS_ENV).ok().as_deref())?;
        let bundle = run(&cfg, &RunOptions { timing, threads })?;
        let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("results"));
        write_outputs(&bundle, &dir)?;
        for c in &bundle.checks {
            eprintln!("{}", c.line());
        }
        Ok(bundle.all_checks_passed())
    })();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) if check => ExitCode::from(2),
        Ok(false) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

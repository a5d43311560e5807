use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stipp::harness::{ingest_csv, load_dataset, oracle_check, run_with_dataset, summarize, write_dataset_csv, ScenarioConfig};

#[derive(Parser)]
#[command(name = "stipp", version, about = "Distributed informative path planning simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Load a sensor CSV and report its shape.
    Ingest {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        summary: bool,
    },
    /// Write the synthetic reference field described by a config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that both path-selection criteria agree on random small grids.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> stipp::Result<ExitCode> {
    match cli.cmd {
        Cmd::Run { config, seed, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (data, source) = load_dataset(&cfg)?;
            let art = run_with_dataset(&cfg, &data, source)?;
            let files = art.write(&out)?;
            let m = &art.meta;
            println!(
                "{} steps, consensus in {}/{} rounds, {} held moves, connected throughout: {}",
                cfg.steps, m.rounds_converged, m.rounds_total, m.held_moves, m.all_connected
            );
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Cmd::Ingest { csv, summary } => {
            let ds = ingest_csv(&csv)?;
            if summary {
                println!("{}", summarize(&ds));
            } else {
                println!("{} rows", ds.len());
            }
        }
        Cmd::Synth { config, out } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            cfg.dataset.path = None;
            let (ds, _) = load_dataset(&cfg)?;
            write_dataset_csv(&ds, &out)?;
            println!("wrote {} rows to {}", ds.len(), out.display());
        }
        Cmd::Oracle { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let outcomes = oracle_check(&cfg)?;
            let agree = outcomes.iter().filter(|o| o.agree()).count();
            for (k, o) in outcomes.iter().enumerate() {
                println!(
                    "instance {:>3}: {} paths, conditional argmin {:?}, measurement argmax {:?} {}",
                    k + 1,
                    o.paths_evaluated,
                    o.argmin_conditional,
                    o.argmax_measurement,
                    if o.agree() { "agree" } else { "DISAGREE" }
                );
            }
            println!("{agree}/{} instances agree", outcomes.len());
            if agree != outcomes.len() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

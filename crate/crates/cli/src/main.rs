//! `chaintwin`: build reduced-order models of a spin chain, optimize
//! controls on them and export plot data.

mod artifacts;
mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::pipeline::Run;

#[derive(Parser)]
#[command(name = "chaintwin", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; overrides the config and `CHAINTWIN_OUT`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the configured seeds by a single seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compress the environment and save the reduced-order model(s).
    BuildRom(RunArgs),
    /// Optimize the control task on the saved model(s).
    Optimize(RunArgs),
    /// Propagate trajectories, with exact comparison for small chains.
    Simulate(RunArgs),
    /// Information-flow maps from the exact simulator.
    Infoflow(RunArgs),
    /// All stages in order, then export.
    Run(RunArgs),
    /// Collect plot data of an artifact directory into `<out>/export`.
    Export {
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a configuration without running anything.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

/// Exit code for configuration errors.
const CONFIG_ERROR: u8 = 2;

enum Failure {
    Config(String),
    Run(String),
}

fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = args.seed_override {
        cfg.seeds = vec![s];
    }
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let out = match (&args.out, &cfg.output, std::env::var_os("CHAINTWIN_OUT")) {
        (Some(o), _, _) => o.clone(),
        (None, Some(o), _) => o.clone(),
        (None, None, Some(root)) => PathBuf::from(root).join(&cfg.name),
        (None, None, None) => PathBuf::from("runs").join(&cfg.name),
    };
    if cfg.long_running {
        log::warn!("{} is marked long_running; expect hours of compute", cfg.name);
    }
    Ok((cfg, out))
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let run_err = |e: Box<dyn std::error::Error>| Failure::Run(e.to_string());
    let open = |args: &RunArgs| -> Result<Run, Failure> {
        let (cfg, out) = load_config(args)?;
        Run::open(cfg, out).map_err(run_err)
    };
    match cli.command {
        Command::Check { config } => {
            let args = RunArgs { config, out: None, seed_override: None };
            let (cfg, out) = load_config(&args)?;
            println!("{}: ok, output {}", cfg.name, out.display());
            Ok(())
        }
        Command::BuildRom(a) => open(&a)?.build_rom().map_err(run_err),
        Command::Optimize(a) => open(&a)?.optimize().map_err(run_err),
        Command::Simulate(a) => open(&a)?.simulate().map_err(run_err),
        Command::Infoflow(a) => open(&a)?.infoflow().map_err(run_err),
        Command::Run(a) => {
            let mut run = open(&a)?;
            run.build_rom().map_err(run_err)?;
            run.optimize().map_err(run_err)?;
            run.simulate().map_err(run_err)?;
            run.infoflow().map_err(run_err)?;
            let dir = pipeline::export(&run.out).map_err(run_err)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Export { out } => {
            let dir = pipeline::export(&out).map_err(run_err)?;
            println!("{}", dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}

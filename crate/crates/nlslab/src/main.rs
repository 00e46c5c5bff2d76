use clap::{Parser, Subcommand};
use nlslab::config::ExperimentConfig;
use nlslab::scenario::run_scenario;
use std::path::PathBuf;
use std::process::ExitCode;

/// Numerical laboratory for the focusing cubic Schrödinger equation in
/// free space and outside a ball obstacle.
#[derive(Parser)]
#[command(name = "nlslab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Experiment configuration file (line-oriented `key = value`).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for the run artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override a configuration key, e.g. `--override dt=0.0005`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the ground state and its invariants.
    Groundstate(CommonArgs),
    /// Run the configured scenario once with its scalar parameters.
    Run(CommonArgs),
    /// Run the configured scenario over its parameter lists.
    Sweep(CommonArgs),
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::from_file(&args.config).map_err(|e| e.to_string())?;
    for (i, ov) in args.overrides.iter().enumerate() {
        let (key, value) = ov
            .split_once('=')
            .ok_or_else(|| format!("override '{ov}' is not of the form key=value"))?;
        cfg.apply(key.trim(), value.trim(), i + 1)
            .map_err(|e| format!("override {e}"))?;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, mode) = match &cli.command {
        Command::Groundstate(a) => (a, "groundstate"),
        Command::Run(a) => (a, "run"),
        Command::Sweep(a) => (a, "sweep"),
    };
    let mut cfg = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(2);
        }
    };
    match mode {
        "groundstate" => cfg.scenario = "groundstate".into(),
        "run" => {
            cfg.c_list.clear();
            cfg.eps_list.clear();
        }
        _ => {}
    }
    match run_scenario(&cfg, &args.out) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(3)
        }
    }
}

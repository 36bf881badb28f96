use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use chc_cli::{parse_config, run_command, CliError, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Simulate,
    Optimize,
    Gradcheck,
    Dualcheck,
}

/// Stochastic convective Cahn–Hilliard simulator and velocity-control optimizer.
#[derive(Debug, Parser)]
#[command(name = "chc", version)]
struct Args {
    #[arg(value_enum)]
    command: Cmd,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seed, overriding `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(args: &Args) -> Result<String, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| CliError::Io {
        path: args.config.clone(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let cmd = match args.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Optimize => Command::Optimize,
        Cmd::Gradcheck => Command::Gradcheck,
        Cmd::Dualcheck => Command::Dualcheck,
    };
    Ok(run_command(cmd, &config)?.message)
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = std::env::var("CHC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists, which cannot happen this early
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&args) {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            for line in e.lines() {
                eprintln!("{line}");
            }
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mvsde::cli::{self, Command, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "mvsde", version, about = "Particle simulation of McKean-Vlasov SDEs")]
struct Args {
    #[command(subcommand)]
    command: Sub,
    /// JSON config, or a CSV produced by an earlier run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's `out`, else `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `scheme.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the resolved config with every default filled in, then exit.
    #[arg(long, global = true)]
    print_config: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Simulate one configuration over M paths.
    Simulate,
    /// Sweep step sizes and compare decay rates with theory.
    Rate,
    /// Coupled runs measuring the particle-approximation error against N.
    Chaos,
    /// Check the model's declared constants against the structural assumptions.
    Check,
    /// Feedback-control comparison.
    Control,
    /// Regenerate every reference figure.
    Figures,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Rate => Command::Rate,
            Sub::Chaos => Command::Chaos,
            Sub::Check => Command::Check,
            Sub::Control => Command::Control,
            Sub::Figures => Command::Figures,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let cmd = Command::from(args.command);
    let code = match execute(cmd, &args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            cli::error_exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}

fn execute(cmd: Command, args: &Args) -> mvsde::Result<i32> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default_for(cmd),
    };
    if let Some(seed) = args.seed {
        cfg.scheme.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = Some(out.clone());
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    if args.print_config {
        let mut resolved = cfg.resolve(cmd)?;
        resolved.out = Some(out);
        println!("{}", resolved.pretty_json());
        return Ok(0);
    }
    let outcome = cli::run(cmd, cfg, &out, args.threads)?;
    for line in &outcome.report {
        println!("{line}");
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    for (id, e) in &outcome.figure_failures {
        eprintln!("figure {id} failed: {e}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    Ok(outcome.exit_code())
}

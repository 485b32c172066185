use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use stokeshape::harness::{run_command, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "stokeshape", version, about = "Shape optimization of generalized Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the state for the initial control on every mesh level.
    Solve(Args),
    /// Run the gradient method on every mesh level.
    Optimize(Args),
    /// Convergence of the optimal value over the mesh levels.
    Converge(Args),
    /// Optimize for every (alpha, beta) pair on the finest level.
    Sweep(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn fail(kind: &str, message: impl std::fmt::Display, code: u8) -> ExitCode {
    println!("{}", json!({ "status": "error", "kind": kind, "message": message.to_string() }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.to_string().trim_end(), 2),
    };
    let (command, args) = match cli.command {
        Cmd::Solve(a) => (Command::Solve, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Converge(a) => (Command::Converge, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => return fail(e.kind(), e, 1),
    };
    let out = args.out.unwrap_or_else(|| cfg.output_dir.clone());
    match run_command(command, &cfg, &out) {
        Ok(summary) => {
            println!("{}", json!({ "status": "ok", "command": command.name(), "output_dir": out, "seconds": summary["seconds"] }));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), e, 1),
    }
}

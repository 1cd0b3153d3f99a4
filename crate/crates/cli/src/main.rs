use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use finsler_cli::{execute, Command, ScenarioConfig};

#[derive(Parser)]
#[command(name = "finsler-lab", version, about = "Run Finsler geometry verification scenarios")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match ScenarioConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let out = args
        .out
        .or_else(|| cfg.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let ex = execute(args.command, &cfg, &out);
    if let Some(s) = &ex.summary {
        println!("{}", s.to_json());
    }
    if let Some(e) = &ex.error {
        eprintln!("{e}");
    }
    ExitCode::from(ex.exit_code as u8)
}

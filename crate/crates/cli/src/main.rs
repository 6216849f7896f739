use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fbstab_cli::{run, Command, Overrides};

/// Second-variation stability experiments for the one-phase free-boundary functional.
#[derive(Parser, Debug)]
#[command(name = "fbstab", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario and command configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_nx: Option<usize>,
    #[arg(long)]
    grid_ny: Option<usize>,
    /// Number K of cosine/sine pairs in the coercivity trial space.
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        nx: cli.grid_nx,
        ny: cli.grid_ny,
        modes: cli.modes,
        seed: cli.seed,
    };
    match run(&cli.config, cli.command, overrides, cli.out.as_deref()) {
        Ok(outcome) => {
            for c in &outcome.report.checks {
                let status = if c.pass { "pass" } else { "FAIL" };
                match &c.error {
                    Some(e) => println!("{status} {} error={e}", c.name),
                    None => println!(
                        "{status} {} value={} bound={}",
                        c.name,
                        c.value.map_or("-".into(), |v| format!("{v:e}")),
                        c.bound.map_or("-".into(), |v| format!("{v:e}"))
                    ),
                }
            }
            println!("report written to {}", outcome.out_dir.join("report.json").display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("fbstab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use squidsim_cli::{cmd_levels, cmd_scan, cmd_sweep, cmd_verify, load_config, CliError};
use squidsim_core::sweep::Solver;

#[derive(Parser)]
#[command(name = "squidsim", version, about = "Strongly driven rf-SQUID flux qubit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// INI run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output] directory)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for shot noise (overrides [sweep] seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Population solver (overrides [sweep] solver)
    #[arg(long, global = true, value_parser = parse_solver)]
    solver: Option<Solver>,
    /// Print errors as JSON on stderr
    #[arg(long, global = true)]
    json_errors: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Level diagram, four-level model and resonance markers
    Levels,
    /// Undriven step curve with one driven trace
    Scan,
    /// Bias × power population map with feature detection
    Sweep,
    /// Built-in numerical self-checks
    Verify,
}

fn parse_solver(s: &str) -> Result<Solver, String> {
    s.parse()
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => squidsim_cli::RunConfig::defaults(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(solver) = cli.solver {
        cfg = cfg.with_solver(solver);
    }
    for flag in cfg.circuit.validate() {
        if cli.json_errors {
            eprintln!("{}", serde_json::json!({ "warning": flag.to_string() }));
        } else {
            eprintln!("warning: {flag}");
        }
    }
    let files = match cli.command {
        Command::Levels => cmd_levels(&cfg)?,
        Command::Scan => cmd_scan(&cfg)?,
        Command::Sweep => {
            let o = cmd_sweep(&cfg)?;
            for f in &o.grid.failures {
                eprintln!("cell ({}, {}) at bias {} and {} dBm failed: {}", f.bias_index, f.power_index, f.bias, f.power, f.cause);
            }
            eprintln!(
                "{} peaks, {} dips, {} inversion cells",
                o.features.peaks.len(),
                o.features.dips.len(),
                o.features.inversions.len()
            );
            o.files
        }
        Command::Verify => {
            let report = cmd_verify(&cfg);
            print!("{}", report.table());
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            return if failed == 0 { Ok(()) } else { Err(CliError::VerifyFailed { failed }) };
        }
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("SQUIDSIM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if cli.json_errors {
                eprintln!("{}", e.to_json());
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vortexscope::cli::{self, CliError, CliResult, ValidationMode};
use vortexscope::config::RunConfig;

#[derive(Parser)]
#[command(name = "vortexscope", version, about = "Photoelectron momentum distributions and quantum vortices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the momentum field, currents and vortex census.
    Run(ConfigArgs),
    /// Compare perturbative amplitudes against the time-stepping oracle.
    Validate(ConfigArgs),
    /// Detect vortices in an existing field CSV.
    Census {
        #[arg(long)]
        field: PathBuf,
        /// Write vortices.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set pulse.f0=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                RunConfig::parse(&text)?
            }
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let outcome = cli::run(&cfg)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", outcome.report.summary());
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Validate(args) => {
            let cfg = args.load()?;
            let (outcome, path) = cli::validate_and_write(&cfg)?;
            for r in &outcome.rows {
                println!("f0={:<8} m={:+} {:<24} {:.6e}", r.f0, r.channel, r.metric, r.value);
            }
            println!("wrote {}", path.display());
            let label = match outcome.mode {
                ValidationMode::Degenerate => "PASS (zero field)",
                ValidationMode::Informational => "INFO (thresholds not enforced above f0 = 0.05)",
                ValidationMode::Enforced if outcome.passed => "PASS",
                ValidationMode::Enforced => "FAIL",
            };
            println!("{label}");
            if !outcome.passed {
                return Err(CliError::ValidationFailed);
            }
        }
        Command::Census { field, out } => {
            let (report, written) = cli::census(&field, out.as_deref())?;
            println!("{}", report.summary());
            if let Some(p) = written {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use granular_bath_cli::execute::{EXIT_BOUND_VIOLATION, EXIT_OK, REPORT_FILE};
use granular_bath_cli::validate::{validate, Status};
use granular_bath_cli::{config, execute, CliError, RawConfig, RunMode};
use log::error;

/// Particle (DSMC) and grid solvers for a granular gas in a particle bath.
///
/// Exit codes: 0 success, 1 configuration or I/O error, 2 temperature bound
/// violated (or a validation check failed), 3 numerical fault.
#[derive(Debug, Parser)]
#[command(name = "granular-bath", version)]
struct Cli {
    mode: RunMode,
    /// JSON configuration; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// DSMC worker threads; results are reproducible per thread count.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let (raw, base) = match &cli.config {
        Some(path) => (RawConfig::load(path)?, path.parent().unwrap_or(Path::new(".")).to_path_buf()),
        None => (RawConfig::default(), PathBuf::from(".")),
    };
    let mut cfg = config::resolve(&raw, cli.mode, &base)?;
    config::apply_overrides(&mut cfg, cli.seed, cli.threads);
    if cli.mode == RunMode::Validate {
        let results = validate(&cfg, |r| println!("{r}"));
        let failed = results.iter().filter(|r| r.status == Status::Fail).count();
        println!("{} checks, {failed} failed", results.len());
        return Ok(if failed == 0 { EXIT_OK } else { EXIT_BOUND_VIOLATION });
    }
    let outcome = execute(&cfg, &cli.out)?;
    print!("{}", outcome.report);
    println!("outputs in {} (summary in {REPORT_FILE})", cli.out.display());
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GB_LOG", "info")).init();
    let cli = Cli::parse();
    let code = run(&cli).unwrap_or_else(|e| {
        error!("{e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}

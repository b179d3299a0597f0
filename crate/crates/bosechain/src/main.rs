use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bosechain::config::{emit, parse_config_with_overrides, Config};
use bosechain::output::{run_json, write_resonance, write_spectra};
use bosechain::runner::{expected_peaks, run_grid, run_point, run_resonance_sweep, run_spectrum, worker_pool};
use bosechain::AppError;
use clap::{Args, Parser, Subcommand};

/// Transport through a boson chain between two thermal rings.
#[derive(Parser)]
#[command(name = "bosechain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file (`key = value` lines).
    config: PathBuf,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file; defaults to the `output` key, else standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, env = "BOSECHAIN_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configuration and print its normalized form.
    Validate(Common),
    /// Solve one parameter point and print a JSON summary.
    Run(Common),
    /// Run every point of the sweep axes into a resumable CSV table.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Ignore an existing table instead of resuming it.
        #[arg(long)]
        fresh: bool,
    },
    /// Current versus gate voltage.
    Sweep(Common),
    /// Spectral densities of the reservoir forces and chain sites.
    Spectrum(Common),
}

fn load(c: &Common) -> Result<Config, AppError> {
    let text = fs::read_to_string(&c.config).map_err(|e| AppError::io(c.config.display(), e))?;
    Ok(parse_config_with_overrides(&text, &c.set)?)
}

fn output_path(c: &Common, cfg: &Config) -> Option<PathBuf> {
    c.output.clone().or_else(|| cfg.plan.output.clone())
}

fn write_out(path: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> Result<(), AppError>) -> Result<(), AppError> {
    match path {
        Some(p) => {
            let mut buf = Vec::new();
            body(&mut buf)?;
            fs::write(p, buf).map_err(|e| AppError::io(p.display(), e))
        }
        None => body(&mut std::io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Validate(c) => {
            let cfg = load(&c)?;
            print!("{}", emit(&cfg));
            Ok(())
        }
        Command::Run(c) => {
            let cfg = load(&c)?;
            if !cfg.plan.axes.is_empty() {
                return Err(AppError::Usage("configuration has sweep axes; use `bosechain grid`".into()));
            }
            let pool = worker_pool(c.workers)?;
            let result = pool.install(|| run_point(&cfg.system, &cfg.plan))?;
            let json = run_json(&cfg, &result);
            write_out(output_path(&c, &cfg).as_deref(), |w| {
                w.write_all(json.as_bytes()).map_err(|e| AppError::io("output", e))
            })
        }
        Command::Grid { common, fresh } => {
            let cfg = load(&common)?;
            let path =
                output_path(&common, &cfg).ok_or_else(|| AppError::Usage("grid needs an output file (--output or `output`)".into()))?;
            let summary = run_grid(&cfg, &path, common.workers, fresh)?;
            eprintln!(
                "{} points: {} computed, {} reused, {} failed -> {}",
                summary.total,
                summary.computed,
                summary.reused,
                summary.failed,
                path.display()
            );
            if summary.failed > 0 {
                return Err(AppError::GridFailures {
                    failed: summary.failed,
                    total: summary.total,
                });
            }
            Ok(())
        }
        Command::Sweep(c) => {
            let cfg = load(&c)?;
            let pool = worker_pool(c.workers)?;
            let curves = pool.install(|| run_resonance_sweep(&cfg))?;
            let peaks = expected_peaks(&cfg.system)?;
            write_out(output_path(&c, &cfg).as_deref(), |w| write_resonance(w, &cfg, &peaks, &curves))
        }
        Command::Spectrum(c) => {
            let cfg = load(&c)?;
            let pool = worker_pool(c.workers)?;
            let (labels, spectra) = pool.install(|| run_spectrum(&cfg))?;
            write_out(output_path(&c, &cfg).as_deref(), |w| write_spectra(w, &labels, &spectra))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

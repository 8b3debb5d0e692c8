//! Command-line front end: `run`, `stage` and `generate`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use explika::error::{Error, ErrorKind};
use explika::pipeline::{run_stage, run_with, with_threads, PipelineConfig, Stage};
use explika::synth::{generate, load_spec, write_synthetic};

const THREADS_ENV: &str = "EXPLIKA_THREADS";

#[derive(Parser)]
#[command(
    name = "explika",
    version,
    about = "Targeted indicator discovery pipeline"
)]
struct Cli {
    /// Overrides the seed in the config or spec file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppresses progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Runs every stage into one output directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs a single stage on the artifacts found in `--in`.
    Stage {
        name: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Writes a planted-truth synthetic data set.
    Generate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numerical => 3,
    }
}

/// Worker count: the config value, capped by the environment variable.
fn thread_count(cfg: &PipelineConfig) -> Result<Option<usize>, Error> {
    let env = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    Error::Config(format!(
                        "{THREADS_ENV} must be a positive integer, got {v:?}"
                    ))
                })?,
        ),
        Err(_) => None,
    };
    Ok(match (cfg.threads, env) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    })
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<PipelineConfig, Error> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let quiet = cli.quiet;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let out = out.or_else(|| cfg.output_dir.clone()).ok_or_else(|| {
                Error::Config("no output directory: pass --out or set output_dir".into())
            })?;
            let threads = thread_count(&cfg)?;
            with_threads(threads, || {
                run_with(&cfg, &out, |stage| {
                    if !quiet {
                        eprintln!("[{}]", stage.name());
                    }
                })
            })??;
            if !quiet {
                eprintln!("artifacts written to {}", out.display());
            }
        }
        Command::Stage {
            name,
            config,
            input,
            out,
        } => {
            let stage = Stage::parse(&name)?;
            let cfg = load_config(&config, cli.seed)?;
            let threads = thread_count(&cfg)?;
            if !quiet {
                eprintln!("[{}]", stage.name());
            }
            with_threads(threads, || run_stage(stage, &cfg, &input, &out))??;
        }
        Command::Generate { spec, out } => {
            let mut spec = load_spec(&spec)?;
            if let Some(s) = cli.seed {
                spec.seed = s;
            }
            let data = generate(&spec)?;
            write_synthetic(&data, &spec.missing_code, &out)?;
            if !quiet {
                eprintln!(
                    "wrote {} rows x {} columns to {}",
                    data.table.n_rows(),
                    data.table.n_cols(),
                    out.display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

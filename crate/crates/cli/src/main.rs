use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qspeckle_cli::{analyze, frames, simulate, theory, CliError, RunConfig};

#[derive(Parser)]
#[command(
    name = "qspeckle",
    version,
    about = "Biphoton speckle simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "qspeckle-out")]
    out: PathBuf,
    /// 512 samples of 20 µm and 50 realizations.
    #[arg(long, global = true)]
    small: bool,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the ensemble and write maps, screens and a manifest.
    Simulate,
    /// Measure widths in a run directory written by `simulate`.
    Analyze {
        /// Run directory (defaults to --out).
        run: Option<PathBuf>,
    },
    /// Write predicted width curves and crossover distances.
    Theory,
    /// Synthesize camera frames and score the coincidence estimator.
    Frames,
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if cli.small {
        cfg = cfg.small();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate => {
            let m = simulate(&load_config(cli)?, &cli.out)?;
            println!("wrote {} maps to {}", 2 * m.maps.len(), cli.out.display());
        }
        Command::Analyze { run } => {
            let dir = run.clone().unwrap_or_else(|| cli.out.clone());
            let c = analyze(&dir, &cli.out)?;
            println!(
                "wrote widths for {} distances to {}",
                c.z_cm.len(),
                cli.out.join("widths.csv").display()
            );
        }
        Command::Theory => {
            let p = theory(&load_config(cli)?, &cli.out)?;
            println!("wrote {}", p.display());
        }
        Command::Frames => {
            let r = frames(&load_config(cli)?, &cli.out)?;
            println!(
                "estimator vs ground truth: pearson {:.3}, peak-normalised rms {:.3}",
                r.pearson_off_band, r.rms_peak_normalized
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(n) = std::env::var("QSPECKLE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

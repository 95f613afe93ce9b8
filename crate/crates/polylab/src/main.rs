use clap::Parser;
use polylab::{run_preset, Config, Outcome, RunError};
use std::path::PathBuf;
use std::process::ExitCode;

/// Monte Carlo laboratory for a Brownian polymer in a Poissonian medium.
#[derive(Parser)]
#[command(name = "polylab", version)]
struct Args {
    /// Preset: verify | scan | crossover | localization | exponents | doob
    preset: String,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (results land in `<out>/<preset>/`).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Master seed; overrides POLYLAB_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    workers: Option<usize>,
}

const DEFAULT_SEED: u64 = 20_240_817;

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(n) = args.workers {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .is_err()
        {
            eprintln!("warning: thread pool already initialized");
        }
    }
    let seed = args
        .seed
        .or_else(|| {
            std::env::var("POLYLAB_SEED")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(DEFAULT_SEED);
    let cfg = match &args.config {
        None => Config::default(),
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("i/o error reading {}: {e}", path.display());
                    return ExitCode::from(3);
                }
            };
            match Config::parse(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error in {}: {e}", path.display());
                    return ExitCode::from(4);
                }
            }
        }
    };
    match run_preset(&args.preset, cfg, &args.out, seed) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => {
            eprintln!("one or more checks failed");
            ExitCode::from(2)
        }
        Err(RunError::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
        Err(RunError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(4)
        }
    }
}

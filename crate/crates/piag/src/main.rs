use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use piag::config::{EpsilonSpec, ExperimentConfig};
use piag::experiment::run_experiment;

/// Run a PIAG experiment sweep and certify every applicable guarantee
/// along each trajectory.
#[derive(Parser, Debug)]
#[command(name = "piag", version, about)]
struct Cli {
    /// Experiment configuration file (flat `key = value` schema).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for traces, reports, and the rate table.
    #[arg(long, default_value = "piag-out")]
    out: PathBuf,

    /// Override stop.max_iters.
    #[arg(long)]
    max_iters: Option<usize>,

    /// Override the stopping suboptimality (absolute).
    #[arg(long)]
    epsilon: Option<f64>,

    /// Override tol.check, the check tolerance scale.
    #[arg(long)]
    tol: Option<f64>,

    /// Override the instance seed (the schedule seed becomes seed + 1).
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: &Cli) -> piag::Result<bool> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| piag::Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = cli.max_iters {
        cfg.max_iters = v;
    }
    if let Some(v) = cli.epsilon {
        cfg.epsilon = EpsilonSpec::Absolute(v);
    }
    if let Some(v) = cli.tol {
        cfg.check_tol = v;
    }
    if let Some(v) = cli.seed {
        cfg.instance_seed = v;
        cfg.schedule_seed = v.wrapping_add(1);
    }
    cfg.validate()?;
    let outcome = run_experiment(&cfg, &cli.out)?;
    print!("{}", outcome.render_summary());
    println!("outputs written to {}", cli.out.display());
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use clap::Parser;
use crkit_cli::config::{parse_grid, ExperimentConfig, Task};
use crkit_cli::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Run one CR-geometry experiment and write a JSON summary plus CSV tables.
#[derive(Parser, Debug)]
#[command(name = "crkit", version)]
struct Args {
    /// JSON experiment config; without it the task's default model is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task to run (overrides the config).
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Grid shape, e.g. 32x32x32.
    #[arg(long)]
    grid: Option<String>,
    /// Override the task's primary tolerance.
    #[arg(long)]
    threshold: Option<f64>,
}

fn configure(args: Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match (&args.config, args.task) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(task)) => ExperimentConfig::default_for(task),
        (None, None) => return Err(CliError::Config("pass --config or --task".into())),
    };
    if let Some(task) = args.task {
        cfg.task = task;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(g) = args.grid {
        cfg.model.set_grid(parse_grid(&g)?);
    }
    if args.threshold.is_some() {
        cfg.threshold = args.threshold;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let run = || -> Result<bool, CliError> {
        let cfg = configure(Args::parse())?;
        let outcome = crkit_cli::run(&cfg)?;
        outcome.write(&cfg, &cfg.out)?;
        print!("{}", outcome.summary_json(&cfg));
        for r in outcome.failures() {
            eprintln!("contract violation: {}", r.describe());
        }
        Ok(outcome.pass())
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use manifold_calib::pipeline::{format_report, Pipeline, PipelineConfig};
use manifold_calib::Error;
use serde_json::json;

const LOG_ENV: &str = "MANIFOLD_CALIB_LOG";

#[derive(Parser)]
#[command(name = "manifold-calib", version, about = "Contact-manifold kinematic calibration pipeline")]
struct Cli {
    /// Pipeline config (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Sample contact poses into manifold.csv.
    GenerateManifold,
    /// Perturb manifold poses and label them into dataset.csv.
    BuildDataset,
    /// Fit the projection model; writes model.json and loss_curve.csv.
    Train,
    /// Simulate biased joint observations at contact.
    Simulate,
    /// Estimate strain and biases; writes results.json.
    Calibrate,
    /// Compare the estimate against the simulated truth.
    Evaluate,
    /// Check analytic gradients against finite differences.
    Gradcheck,
    /// Run every stage in order.
    All,
    /// Print the effective config as JSON.
    ShowConfig,
}

enum Failure {
    Lib(Error),
    Usage(String),
    GradcheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.command == Command::ShowConfig {
        println!("{}", serde_json::to_string_pretty(&config).expect("config serializes"));
        return Ok(());
    }
    let p = Pipeline::new(config, &cli.out_dir)?;
    log::info!("config hash {} seed {}", p.config_hash(), p.config.seed);
    match cli.command {
        Command::GenerateManifold => {
            p.generate_manifold()?;
        }
        Command::BuildDataset => {
            p.build_dataset()?;
        }
        Command::Train => {
            let (_, summary) = p.train()?;
            println!(
                "held-out projection error: {:.4} mm, {:.4} deg",
                summary.holdout_error.positional_mm, summary.holdout_error.rotational_deg
            );
        }
        Command::Simulate => {
            p.simulate()?;
        }
        Command::Calibrate => {
            let r = p.calibrate()?;
            println!("r_hat = {:.6}", r.r_hat);
            println!("b_hat = {:?}", r.b_hat);
        }
        Command::Evaluate => {
            print!("{}", format_report(&p.evaluate()?.error_report));
        }
        Command::Gradcheck => {
            let g = p.gradcheck()?;
            for s in &g.report.suites {
                println!(
                    "{:<28} {:>4} instances  max rel err {:.3e}  tol {:.0e}  {}",
                    s.name,
                    s.instances,
                    s.max_relative_error,
                    s.tolerance,
                    if s.passed { "pass" } else { "FAIL" }
                );
                if s.skipped > 0 {
                    println!("{:<28} {:>4} draws skipped at kinks", "", s.skipped);
                }
            }
            if !g.passed {
                return Err(Failure::GradcheckFailed);
            }
        }
        Command::All => {
            print!("{}", format_report(&p.run_all()?.error_report));
        }
        Command::ShowConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({"error": "Usage", "message": e.to_string().trim()}));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, message) = match f {
                Failure::Lib(e) => (e.kind().to_string(), e.to_string()),
                Failure::Usage(m) => ("Usage".to_string(), m),
                Failure::GradcheckFailed => ("GradcheckFailed".to_string(), "gradient checks failed".to_string()),
            };
            eprintln!("{}", json!({"error": kind, "message": message}));
            ExitCode::FAILURE
        }
    }
}

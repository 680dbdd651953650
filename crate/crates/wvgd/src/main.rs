use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use wvgd::config::ExperimentConfig;
use wvgd::experiment;
use wvgd::rng::RngStream;
use wvgd::targets::{write_synthetic_csv, DatasetName};

#[derive(Parser)]
#[command(name = "wvgd", about = "Particle-based variational inference experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a JSON config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle and property suite.
    Validate,
    /// Write synthetic stand-in datasets as CSV files.
    GenData {
        /// Directory to write <name>.csv files into.
        #[arg(long, default_value = "data")]
        out: PathBuf,
        /// Seed for the synthetic generators.
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut config = match ExperimentConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Some(seed) = seed {
                config.seeds = vec![seed];
            }
            if let Some(out) = out {
                config.output_dir = out;
            }
            if let Err(e) = config.validate() {
                eprintln!("config error: {e}");
                return ExitCode::from(2);
            }
            let rendered = match experiment::run_experiment(&config) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("experiment failed: {e}");
                    return ExitCode::FAILURE;
                }
            };
            if let Err(e) = experiment::write_output(&rendered, &config.output_dir) {
                eprintln!("cannot write output: {e}");
                return ExitCode::FAILURE;
            }
            // A trial that failed is recorded, not dropped; surface it in
            // the exit code.
            let any_failure = rendered
                .files
                .iter()
                .find(|(name, _)| name == "results.csv")
                .map(|(_, body)| body.lines().skip(1).any(|l| !l.contains(",ok,") && !l.ends_with(",ok")))
                .unwrap_or(false);
            println!(
                "wrote {} files to {} (config {})",
                rendered.files.len() + 1,
                config.output_dir.display(),
                config.hash()
            );
            if any_failure {
                eprintln!("at least one trial failed; see results.csv");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Command::Validate => {
            let checks = experiment::run_validation();
            let mut failed = 0;
            for check in &checks {
                match &check.outcome {
                    Ok(()) => println!("[PASS] {}", check.name),
                    Err(msg) => {
                        failed += 1;
                        println!("[FAIL] {} ({msg})", check.name);
                    }
                }
            }
            if failed > 0 {
                eprintln!("{failed}/{} checks failed", checks.len());
                ExitCode::FAILURE
            } else {
                println!("{} checks passed", checks.len());
                ExitCode::SUCCESS
            }
        }
        Command::GenData { out, seed } => {
            if let Err(e) = std::fs::create_dir_all(&out) {
                eprintln!("cannot create {}: {e}", out.display());
                return ExitCode::FAILURE;
            }
            for name in DatasetName::ALL {
                let path = out.join(format!("{name}.csv"));
                let mut rng = RngStream::new(seed).substream(name as u64);
                if let Err(e) = write_synthetic_csv(name, &path, &mut rng) {
                    eprintln!("cannot write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
    }
}

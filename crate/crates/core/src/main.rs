use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedleak::cli::{self, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "fedleak", version, about = "Federated learning label-leakage experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Override a config value, e.g. `--set fed.rounds=10`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Check a config file and list every problem found.
    Validate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, default_value = "out/gradcheck")]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cfg: &ExperimentConfig) -> anyhow::Result<()> {
    let report = cli::run_with_progress(cfg, &mut |msg| eprintln!("[fedleak] {msg}"))?;
    for (name, value) in &report.metrics {
        println!("{name} = {value}");
    }
    println!("wrote {} artifacts to {}", report.manifest.len(), report.output.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Run { config, overrides } => cli::load_config(&config, &overrides)
            .map_err(anyhow::Error::from)
            .and_then(|cfg| execute(&cfg)),
        Command::Validate { config, overrides } => match cli::load_config(&config, &overrides) {
            Ok(cfg) => match cfg.validate() {
                Ok(()) => {
                    println!("{}: ok", config.display());
                    Ok(())
                }
                Err(errs) => {
                    for e in &errs {
                        eprintln!("error: {e}");
                    }
                    return ExitCode::FAILURE;
                }
            },
            Err(e) => Err(e.into()),
        },
        Command::Gradcheck { output, seed } => {
            let text = format!("kind = \"gradcheck\"\nseed = {seed}\noutput = {:?}\n", output.display().to_string());
            cli::parse_config(&text, &[])
                .map_err(anyhow::Error::from)
                .and_then(|cfg| {
                    debug_assert_eq!(cfg.kind, ExperimentKind::Gradcheck);
                    execute(&cfg)
                })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;

use anyhow::Result;
use bayesteach::metrics::{BootstrapMethod, DEFAULT_RESAMPLES};
use bayesteach::saliency::{protocol, LinearToyClassifier};
use bayesteach_cli::commands;
use bayesteach_cli::config::RunConfig;
use bayesteach_cli::server::{self, AppState};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "bayesteach", version, about = "Teaching-example selection and explanation trials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Percentile,
    Basic,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the PLDA model and write `<output_dir>/model.json`.
    Fit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build trial sets and their rendered assets.
    GenTrials {
        #[arg(long)]
        config: PathBuf,
    },
    /// Expected saliency map for one image.
    Saliency {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        label: String,
        /// Output stem; `.png`, `.f32` and rendered variants are added.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the candidate space for one target and pick teaching examples.
    Select {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long)]
        y_star: String,
        #[arg(long)]
        y_alt: String,
        /// `helpful`, `unhelpful`, `bin:N` or `interval:LO:HI`; defaults to `teach.policy`.
        #[arg(long)]
        policy: Option<String>,
        /// Write the scored candidate space as JSON.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Fidelity, sensitivity and specificity with bootstrap intervals.
    Metrics {
        #[arg(long)]
        trials: PathBuf,
        /// CSV with `participant,trial_index,choice,rt_ms`.
        #[arg(long)]
        responses: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
        resamples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "percentile")]
        method: Method,
    },
    /// Serve the experiment API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `serve.port`.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Answer classifier requests on stdin/stdout with the toy classifier.
    ToyBridge {
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// Comma-separated label list.
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit { config } => print(&commands::fit(&RunConfig::load(config)?)?),
        Command::GenTrials { config } => print(&commands::gen_trials(&RunConfig::load(config)?)?),
        Command::Saliency { config, image, label, out } => {
            print(&commands::saliency(&RunConfig::load(config)?, &image, &label, &out)?)
        }
        Command::Select { config, target, y_star, y_alt, policy, scores } => {
            let policy = policy.as_deref().map(commands::parse_policy).transpose()?;
            let cfg = RunConfig::load(config)?;
            print(&commands::select(&cfg, &target, &y_star, &y_alt, policy, scores.as_deref())?)
        }
        Command::Metrics { trials, responses, resamples, seed, method } => {
            let method = match method {
                Method::Percentile => BootstrapMethod::Percentile,
                Method::Basic => BootstrapMethod::Basic,
            };
            print(&commands::metrics(&trials, &responses, resamples, seed, method)?)
        }
        Command::Serve { config, port } => {
            let cfg = RunConfig::load(config)?;
            let state = AppState::from_config(&cfg)?;
            let port = port.unwrap_or(cfg.serve.port);
            tokio::runtime::Runtime::new()?.block_on(server::serve(state, port))
        }
        Command::ToyBridge { width, height, labels, seed } => {
            let clf = LinearToyClassifier::seeded(width, height, labels, seed);
            protocol::serve(&clf, std::io::stdin().lock(), std::io::stdout().lock())?;
            Ok(())
        }
    }
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

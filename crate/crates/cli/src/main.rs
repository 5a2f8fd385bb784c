mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Config, ConfigError};

#[derive(Parser)]
#[command(name = "e2efs", version, about = "Saliency-based frequency band selection for audio ensembles")]
struct Cli {
    /// Config file of key=value lines, applied before any --set.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one config key. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = config::parse_override)]
    sets: Vec<(String, String)>,

    /// Output directory (same as --set output.dir=...).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for ensemble members, synthetic data and random masks.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Extract features for every clip in data.manifest into a dataset directory.
    Features,
    /// Write a synthetic dataset with planted informative bands.
    Synth,
    /// Train an ensemble on all bands.
    Train,
    /// Per-member band importance from input gradients.
    Saliency,
    /// Choose selection.n bands with selection.method.
    Select,
    /// Train a fresh ensemble on the selected bands only.
    Retrain,
    /// Train a two-branch ensemble: full input plus selected bands.
    Fuse,
    /// Score an ensemble on eval.split.
    Eval,
    /// Time ensemble inference per example.
    Bench,
    /// List every config key with its default.
    Keys,
}

pub enum CliError {
    Config(ConfigError),
    Core(e2efs::Error),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<e2efs::Error> for CliError {
    fn from(e: e2efs::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use e2efs::Error::*;
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => match e.root() {
                InvalidArgument(_) | InvalidSpec(_) => 1,
                Numeric(_) | NonFinite { .. } => 3,
                _ => 2,
            },
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config, ConfigError> {
    let mut cfg = Config::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for (k, v) in &cli.sets {
        cfg.set(k, v)?;
    }
    if let Some(out) = &cli.out {
        cfg.set("output.dir", &out.to_string_lossy())?;
    }
    if let Some(seed) = cli.seed {
        for key in ["ensemble.base_seed", "synth.seed", "selection.seed"] {
            cfg.set(key, &seed.to_string())?;
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<String, CliError> {
    let cfg = resolve(cli)?;
    match cli.command {
        Command::Features => commands::features(&cfg),
        Command::Synth => commands::synth(&cfg),
        Command::Train => commands::train(&cfg),
        Command::Saliency => commands::saliency(&cfg),
        Command::Select => commands::select(&cfg),
        Command::Retrain => commands::retrain(&cfg),
        Command::Fuse => commands::fuse(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Bench => commands::bench(&cfg),
        Command::Keys => Ok(commands::keys()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{}", msg.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = match &e {
                CliError::Config(c) => format!("config error: {c}"),
                CliError::Core(c) => format!("error: {c}"),
            };
            eprintln!("{msg}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<patsnake_core::Error> for CliError {
    fn from(e: patsnake_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "patsnake", version, about = "Turing pattern continuation and amplitude-equation toolkit")]
struct Cli {
    /// JSON run configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parameter sweeps and branch fan-out.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dispersion relation sweep and critical values.
    Disp,
    /// Landau coefficients, energies and fixed points over λ or σ.
    Landau,
    /// Maxwell points, hexagon fold and bistability window over σ.
    Maxwell,
    /// Stationary Ginzburg–Landau front.
    Glfront,
    /// Scripted branch continuation with optional branch switches.
    Cont,
    /// Semi-implicit time integration with optional Newton polish.
    Tint,
    /// PPM heatmap of a snapshot's u-component.
    Render {
        snapshot: PathBuf,
    },
}

fn load_config(cli: &Cli, experiment: &str) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("bad config {}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    cfg.experiment = experiment.to_string();
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    match &cli.command {
        Command::Render { snapshot } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            commands::render(snapshot, &out)
        }
        cmd => {
            let name = match cmd {
                Command::Disp => "disp",
                Command::Landau => "landau",
                Command::Maxwell => "maxwell",
                Command::Glfront => "glfront",
                Command::Cont => "cont",
                Command::Tint => "tint",
                Command::Render { .. } => unreachable!(),
            };
            let cfg = load_config(cli, name)?;
            commands::prepare_output(&cfg)?;
            match cmd {
                Command::Disp => commands::disp(&cfg),
                Command::Landau => commands::landau(&cfg),
                Command::Maxwell => commands::maxwell(&cfg),
                Command::Glfront => commands::glfront(&cfg),
                Command::Cont => commands::cont(&cfg),
                Command::Tint => commands::tint(&cfg),
                Command::Render { .. } => unreachable!(),
            }
        }
    }
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
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => 1,
                CliError::Numerical(_) => 2,
            })
        }
    }
}

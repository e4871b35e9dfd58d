use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, ValueEnum};

mod config;
mod output;
mod run;

use config::{apply_text, ConfigError, Format, Location, RunConfig};
use run::Subcommand;

/// Multi-beam interface efficiency of 2D atomic tweezer arrays.
#[derive(Parser)]
#[command(name = "multibeam", version)]
struct Cli {
    /// Config file with `key = value` lines (or a JSON object).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output format; single-point commands default to json, sweeps to csv.
    #[arg(short, long, global = true, value_enum)]
    format: Option<FormatArg>,

    /// Output file; stdout when omitted.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct Overrides {
    /// `key=value` settings applied after the config file.
    sets: Vec<String>,
}

#[derive(clap::Subcommand)]
enum Command {
    /// Efficiency of the infinite lattice.
    InfiniteR0(Overrides),
    /// Finite-array theory with the Gaussian collective mode.
    TheoryR0(Overrides),
    /// Resonant scattering efficiency of a finite array.
    ScatterR0(Overrides),
    /// Waist optimisation with a local-maximum certificate.
    OptimizeWaist(Overrides),
    /// Efficiency against lattice spacing.
    SweepSpacing(Overrides),
    /// Efficiency against numerical aperture.
    SweepNa(Overrides),
    /// Jointly optimised efficiency against atom number.
    ScaleN(Overrides),
    /// Lateral or axial displacement of the array.
    ScanShift(Overrides),
    /// Position-disorder Monte Carlo.
    Disorder(Overrides),
    /// Print the effective configuration.
    EmitConfig(Overrides),
}

impl Command {
    fn split(&self) -> (Option<Subcommand>, &[String]) {
        let (cmd, o) = match self {
            Command::InfiniteR0(o) => (Some(Subcommand::InfiniteR0), o),
            Command::TheoryR0(o) => (Some(Subcommand::TheoryR0), o),
            Command::ScatterR0(o) => (Some(Subcommand::ScatterR0), o),
            Command::OptimizeWaist(o) => (Some(Subcommand::OptimizeWaist), o),
            Command::SweepSpacing(o) => (Some(Subcommand::SweepSpacing), o),
            Command::SweepNa(o) => (Some(Subcommand::SweepNa), o),
            Command::ScaleN(o) => (Some(Subcommand::ScaleN), o),
            Command::ScanShift(o) => (Some(Subcommand::ScanShift), o),
            Command::Disorder(o) => (Some(Subcommand::Disorder), o),
            Command::EmitConfig(o) => (None, o),
        };
        (cmd, &o.sets)
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Compute(#[from] anyhow::Error),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Compute(_) => "compute",
        }
    }
}

fn load(cli: &Cli, sets: &[String]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        apply_text(&mut cfg, &text)?;
    }
    for s in sets {
        let (k, v) = s.split_once('=').ok_or_else(|| ConfigError::Invalid {
            key: s.clone(),
            message: "expected key=value".into(),
            location: Location::Override,
        })?;
        cfg.set(k, v, &Location::Override)?;
    }
    if let Some(f) = cli.format {
        cfg.format = Some(match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        });
    }
    if let Some(p) = &cli.output {
        cfg.output = Some(p.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn configure_workers() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("MULTIBEAM_WORKERS") {
        let n: usize = v.trim().parse().map_err(|_| {
            CliError::Io(format!(
                "MULTIBEAM_WORKERS must be a positive integer, got `{v}`"
            ))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    configure_workers()?;
    let (cmd, sets) = cli.command.split();
    let cfg = load(cli, sets)?;
    let Some(cmd) = cmd else {
        print!("{}", cfg.emit_text());
        return Ok(());
    };
    let outcome = run::run(cmd, &cfg)?;
    let format = cfg.format.unwrap_or(cmd.default_format());
    let io_err = |e: anyhow::Error| CliError::Io(e.to_string());
    match &cfg.output {
        Some(path) => {
            let file =
                File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            output::write(&mut w, format, cmd, &cfg, &outcome).map_err(io_err)?;
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            output::write(&mut w, format, cmd, &cfg, &outcome).map_err(io_err)?;
        }
    }
    eprintln!("{}", outcome.summary());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", output::error_json(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}

//! `ofem`: command-line driver for phase imprinting, focal propagation and
//! focal-shape design.

mod cmd_design1d;
mod cmd_figures;
mod cmd_focus;
mod cmd_imprint;
mod cmd_power;
mod cmd_synth2d;
mod config;
mod context;
mod params;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::Config;
use context::{CliError, CliResult, Context, Format};

#[derive(Parser)]
#[command(name = "ofem", version, about = "Electron phase shaping with free-space light")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file (`[section]` headers with `key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Overrides the main grid size of the command.
    #[arg(long, global = true)]
    grid: Option<usize>,

    /// Overrides the numerical tolerance of the command.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Output format for two-dimensional maps.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Graymap,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Phase imprinted by a vortex beam or a sampled light spectrum.
    Imprint,
    /// Focal-plane wave function for a phase map or analytic phase.
    Focus,
    /// Light coefficients for a one-dimensional target phase.
    Design1d,
    /// Aperture phase and focus for a two-dimensional focal shape.
    Synth2d,
    /// Data of the focus-shaping figure panels.
    Figures,
    /// Beam power budgets.
    Power,
}

fn run(cli: Cli) -> CliResult<String> {
    let (name, f): (&'static str, fn(Context) -> CliResult<String>) = match cli.command {
        Command::Imprint => ("imprint", cmd_imprint::run),
        Command::Focus => ("focus", cmd_focus::run),
        Command::Design1d => ("design1d", cmd_design1d::run),
        Command::Synth2d => ("synth2d", cmd_synth2d::run),
        Command::Figures => ("figures", cmd_figures::run),
        Command::Power => ("power", cmd_power::run),
    };
    if let Some(g) = cli.grid {
        if g < 2 {
            return Err(CliError::config("--grid must be at least 2"));
        }
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0) || !t.is_finite() {
            return Err(CliError::config("--tol must be a positive number"));
        }
    }
    let (cfg, dir) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            let dir = path.parent().map(PathBuf::from).unwrap_or_default();
            (Config::parse(&text)?, dir)
        }
        None => (Config::default(), PathBuf::from(".")),
    };
    let format = match cli.format {
        FormatArg::Text => Format::Text,
        FormatArg::Graymap => Format::Graymap,
    };
    f(Context::new(name, cfg, dir, cli.out, format, cli.grid, cli.tol))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::RunConfig;

/// Errors surfaced by the command line, each with a fixed exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Domain(secular3bp::Error),
    Io(PathBuf, std::io::Error),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Config(_) | CliError::Domain(_) => 2,
            CliError::Io(..) => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Config(m) => format!("config: {m}"),
            CliError::Domain(e) => e.to_string(),
            CliError::Io(p, e) => format!("{}: {e}", p.display()),
            CliError::Validation(m) => m.clone(),
        }
    }
}

impl From<secular3bp::Error> for CliError {
    fn from(e: secular3bp::Error) -> Self {
        CliError::Domain(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "secular3bp", version, about = "Secular dynamics of the inner spatial elliptic restricted three-body problem")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

/// Flags that override configuration keys.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true)]
    a: Option<String>,
    #[arg(long = "e-j", global = true)]
    e_j: Option<String>,
    #[arg(long = "grid-e", global = true)]
    grid_e: Option<String>,
    #[arg(long = "grid-ej", global = true)]
    grid_ej: Option<String>,
    /// Comma-separated level values.
    #[arg(long, global = true)]
    levels: Option<String>,
    /// Comma-separated inclinations (rad).
    #[arg(long, global = true)]
    inclinations: Option<String>,
    #[arg(long = "portrait-inclination", global = true)]
    portrait_inclination: Option<String>,
    #[arg(long = "portrait-samples", global = true)]
    portrait_samples: Option<String>,
    #[arg(long = "out-dir", global = true)]
    out_dir: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// exact | paper | legendre
    #[arg(long, global = true)]
    kernel: Option<String>,
    /// paper | delaunay
    #[arg(long, global = true)]
    normalization: Option<String>,
    #[arg(long = "sweep-points", global = true)]
    sweep_points: Option<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        let pairs = [
            ("a", &self.a),
            ("e_j", &self.e_j),
            ("grid_e", &self.grid_e),
            ("grid_ej", &self.grid_ej),
            ("levels", &self.levels),
            ("inclinations", &self.inclinations),
            ("portrait_inclination", &self.portrait_inclination),
            ("portrait_samples", &self.portrait_samples),
            ("out_dir", &self.out_dir),
            ("seed", &self.seed),
            ("kernel", &self.kernel),
            ("normalization", &self.normalization),
            ("sweep_points", &self.sweep_points),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apsidal-alignment equilibrium eccentricity and its level.
    Equilibrium {
        #[arg(long)]
        json: bool,
    },
    /// Write the level-curve and normal-flow portrait data files.
    Figures,
    /// Positive-definiteness sweep of the closed-form quadratic forms.
    Stability {
        #[arg(long, hide = true)]
        inject_indefinite: bool,
    },
    /// Run the quadrature oracle suite.
    Validate {
        #[arg(long, hide = true)]
        corrupt_closed_form: bool,
    },
    /// Evaluate one closed-form quadratic form.
    Coeffs {
        /// apsidal | small-i | small-i-amended | general
        #[arg(long)]
        regime: String,
        /// Eccentricity (defaults to the equilibrium value).
        #[arg(long)]
        e: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long, default_value_t = 0.5)]
        inc: f64,
    },
    /// Integrate a single level curve and print it as CSV.
    Portrait {
        #[arg(long)]
        level: f64,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn configure_threads() {
    if let Ok(v) = std::env::var("SECULAR3BP_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                secular3bp::par::configure_threads(n);
            }
            _ => eprintln!("warning: ignoring SECULAR3BP_THREADS = '{v}'"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    cfg.validate()?;
    match cli.command {
        Command::Equilibrium { json } => commands::equilibrium(&cfg, json),
        Command::Figures => commands::figures(&cfg),
        Command::Stability { inject_indefinite } => commands::stability(&cfg, inject_indefinite),
        Command::Validate { corrupt_closed_form } => commands::validate(&cfg, corrupt_closed_form),
        Command::Coeffs { regime, e, theta, inc } => commands::coeffs_query(&cfg, &regime, e, theta, inc),
        Command::Portrait { level, output } => commands::portrait(&cfg, level, output.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

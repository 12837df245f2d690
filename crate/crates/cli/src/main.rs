mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lvseasons_core::params::RawParams;
use lvseasons_core::{IntegratorConfig, SeasonalParams, State};
use serde_json::{json, Value};

/// Three-species Lotka-Volterra competition with seasonal succession.
#[derive(Debug, Parser)]
#[command(name = "lvseasons", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Relative tolerance of the ODE integrator.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,

    /// Absolute tolerance of the ODE integrator.
    #[arg(long, global = true)]
    abs_tol: Option<f64>,

    /// Directory for emitted files.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Output format. `classify` prints text or json; `simulate` and `orbit`
    /// restrict the emitted files to one format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decide permanence from boundary fixed-point data.
    Classify { config: PathBuf },
    /// Sample the solution of the seasonal system on a uniform time grid.
    Simulate {
        config: PathBuf,
        /// Final time.
        #[arg(long)]
        t: f64,
        /// Initial densities, e.g. `0.3,0.4,0.8`.
        #[arg(long, value_parser = parse_state)]
        x0: State,
        /// Sampling step; defaults to one fiftieth of the period.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Iterate the period map.
    Orbit {
        config: PathBuf,
        /// Number of iterates.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, value_parser = parse_state)]
        x0: State,
    },
    /// Axial, planar and interior fixed points of the period map.
    FixedPoints { config: PathBuf },
    /// Run one of the built-in parameter sets end to end.
    Example {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=3))]
        k: u8,
        /// Number of period-map iterates for the orbit.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Horizon of the time-series plot, in periods.
        #[arg(long, default_value_t = 30.0)]
        periods: f64,
    },
}

#[derive(Debug)]
pub enum CliError {
    BadArguments(String),
    ConfigParse(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::BadArguments(_) => "BadArguments",
            CliError::ConfigParse(_) => "ConfigParseError",
            CliError::Numeric(_) => "NumericError",
            CliError::Io(_) => "IoError",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::BadArguments(m) | CliError::ConfigParse(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::BadArguments(_) => 2,
            CliError::ConfigParse(_) => 3,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn parse_state(s: &str) -> Result<State, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {}", parts.len()));
    }
    let mut x = State::zeros();
    for (i, p) in parts.iter().enumerate() {
        let v: f64 = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("x{} = {v} must be finite and nonnegative", i + 1));
        }
        x[i] = v;
    }
    Ok(x)
}

/// Everything a subcommand needs besides its own arguments.
pub struct RunContext {
    pub cfg: IntegratorConfig,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: u64,
}

fn seed_from_env() -> Result<u64, CliError> {
    match std::env::var("LVSEASONS_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::BadArguments(format!("LVSEASONS_SEED={s} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// A config file holds either a bare parameter record or
/// `{ "params": {...}, "integrator": {...} }`.
pub fn load_config(path: &PathBuf) -> Result<(SeasonalParams, Option<IntegratorConfig>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::ConfigParse(format!("cannot read {}: {e}", path.display())))?;
    let parse_err = |e: serde_json::Error| CliError::ConfigParse(format!("{}: {e}", path.display()));
    let doc: Value = serde_json::from_str(&text).map_err(parse_err)?;
    let (raw, integrator) = match doc.get("params") {
        Some(params) => {
            if let Some(extra) = doc.as_object().unwrap().keys().find(|k| *k != "params" && *k != "integrator") {
                return Err(CliError::ConfigParse(format!("{}: unknown field `{extra}`", path.display())));
            }
            let raw: RawParams = serde_json::from_value(params.clone()).map_err(parse_err)?;
            let integrator = doc
                .get("integrator")
                .map(|v| serde_json::from_value::<IntegratorConfig>(v.clone()))
                .transpose()
                .map_err(parse_err)?;
            (raw, integrator)
        }
        None => (serde_json::from_value(doc).map_err(parse_err)?, None),
    };
    let params = lvseasons_core::params::validate_params(&raw)
        .map_err(|e| CliError::ConfigParse(format!("{}: {e}", path.display())))?;
    Ok((params, integrator))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut ctx = RunContext {
        cfg: IntegratorConfig::default(),
        out_dir: cli.out_dir,
        format: cli.format,
        seed: seed_from_env()?,
    };
    let overrides = |cfg: &mut IntegratorConfig| -> Result<(), CliError> {
        if let Some(r) = cli.rel_tol {
            cfg.rel_tol = r;
        }
        if let Some(a) = cli.abs_tol {
            cfg.abs_tol = a;
        }
        cfg.validate().map_err(|e| CliError::BadArguments(e.to_string()))
    };
    let load = |path: &PathBuf, ctx: &mut RunContext| -> Result<SeasonalParams, CliError> {
        let (params, integrator) = load_config(path)?;
        ctx.cfg = integrator.unwrap_or_default();
        overrides(&mut ctx.cfg)?;
        Ok(params)
    };

    match cli.command {
        Command::Classify { config } => {
            let params = load(&config, &mut ctx)?;
            commands::classify(&params, &ctx)
        }
        Command::Simulate { config, t, x0, dt } => {
            let params = load(&config, &mut ctx)?;
            if !(t.is_finite() && t >= 0.0) {
                return Err(CliError::BadArguments(format!("--t {t} must be finite and nonnegative")));
            }
            let dt = dt.unwrap_or(params.omega() / 50.0);
            if !(dt.is_finite() && dt > 0.0) {
                return Err(CliError::BadArguments(format!("--dt {dt} must be positive")));
            }
            commands::simulate(&params, &x0, t, dt, &ctx)
        }
        Command::Orbit { config, n, x0 } => {
            let params = load(&config, &mut ctx)?;
            if n == 0 {
                return Err(CliError::BadArguments("--n must be at least 1".into()));
            }
            commands::orbit(&params, &x0, n, &ctx)
        }
        Command::FixedPoints { config } => {
            let params = load(&config, &mut ctx)?;
            commands::fixed_points(&params, &ctx)
        }
        Command::Example { k, n, periods } => {
            overrides(&mut ctx.cfg)?;
            if n < lvseasons_core::orbit::MIN_RECORD_LEN {
                return Err(CliError::BadArguments(format!(
                    "--n must be at least {} to type the attractor",
                    lvseasons_core::orbit::MIN_RECORD_LEN
                )));
            }
            if !(periods.is_finite() && periods >= 0.0) {
                return Err(CliError::BadArguments(format!("--periods {periods} must be finite and nonnegative")));
            }
            commands::example(k as usize, n, periods, &ctx)
        }
    }
}

fn report(err: &CliError) -> ExitCode {
    let body = json!({ "error": { "kind": err.kind(), "message": err.message() } });
    eprintln!("{body}");
    ExitCode::from(err.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return report(&CliError::BadArguments(e.to_string().trim().to_string()));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

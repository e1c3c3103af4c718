//! `projequiv`: runs named verifications on named models and writes JSON
//! reports (and CSV for geodesics and spectra).

mod commands;
mod models;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::{json, Map, Value};

use models::ModelId;
use projequiv::report::json_number;
use report::Report;

#[derive(Parser)]
#[command(name = "projequiv", version, about = "Checks for projectively equivalent metrics on coordinate charts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Model id, e.g. dini:default, matveev:default, sphere:3, fs:2, veronese:1,2, flat:2, warped:3.
    #[arg(long, global = true)]
    model: Option<ModelId>,
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    #[arg(long, global = true, default_value_t = 100)]
    n_geodesics: usize,
    /// Basis for `mobility`: poly1 or poly2 on flat models, span or span+random on dini:default.
    #[arg(long, global = true)]
    basis: Option<String>,
    #[arg(long, global = true)]
    grid_res: Option<usize>,
    #[arg(long, global = true)]
    fd_step: Option<f64>,
    /// Overrides the main tolerance of the subcommand.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Writes the JSON report here as well as to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// CSV output path (geodesics and spectrum only).
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true, env = "PROJEQUIV_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate seeded geodesics; check energy and self-consistency.
    Geodesics,
    /// Geodesic sharing and the linear equation on the Dini pair.
    Dini,
    /// The swap involution: geodesic images and the fitted homography.
    Matveev,
    /// Dimension of the solution space within a basis span.
    Mobility,
    /// Classification, group law, product limits and the eigenvalue inequalities.
    Homography,
    /// Projective Weyl tensor and flatness.
    Weyl,
    /// Veronese and Segre pullbacks of the Fubini–Study metric.
    Veronese,
    /// Invariance of the volume functionals and the strength chain rule.
    Functional,
    /// Spectral equivariance on the involution model.
    Spectrum,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Geodesics => "geodesics",
            Command::Dini => "dini",
            Command::Matveev => "matveev",
            Command::Mobility => "mobility",
            Command::Homography => "homography",
            Command::Weyl => "weyl",
            Command::Veronese => "veronese",
            Command::Functional => "functional",
            Command::Spectrum => "spectrum",
        }
    }
}

/// Numeric settings shared by the subcommands.
pub struct Settings {
    pub seed: u64,
    pub n_geodesics: usize,
    pub grid_res: Option<usize>,
    pub fd_step: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(projequiv::Error),
    Io(std::io::Error),
}

impl From<projequiv::Error> for CliError {
    fn from(e: projequiv::Error) -> Self {
        CliError::Numeric(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn opt_number(x: Option<f64>) -> Value {
    x.map_or(Value::Null, json_number)
}

fn config_echo(cli: &Cli, sub: &str, model: ModelId) -> Map<String, Value> {
    let v = json!({
        "subcommand": sub,
        "model": model.to_string(),
        "seed": cli.seed,
        "n_geodesics": cli.n_geodesics,
        "basis": cli.basis,
        "grid_res": cli.grid_res,
        "fd_step": opt_number(cli.fd_step),
        "tol": opt_number(cli.tol),
    });
    match v {
        Value::Object(m) => m,
        _ => unreachable!(),
    }
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let sub = cli.command.name();
    let model = cli.model.unwrap_or_else(|| commands::default_model(sub));
    commands::check_model(sub, model, cli.basis.as_deref(), cli.csv.is_some())?;
    if cli.n_geodesics == 0 {
        return Err(CliError::Usage("--n-geodesics must be positive".into()));
    }
    if cli.fd_step.is_some_and(|h| !(h > 0.0)) {
        return Err(CliError::Usage("--fd-step must be positive".into()));
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let settings = Settings {
        seed: cli.seed,
        n_geodesics: cli.n_geodesics,
        grid_res: cli.grid_res,
        fd_step: cli.fd_step,
        tol: cli.tol,
    };
    let start = Instant::now();
    let (records, csv) = match cli.command {
        Command::Geodesics => commands::geodesics(model, &settings),
        Command::Dini => commands::dini(&settings),
        Command::Matveev => commands::matveev(&settings),
        Command::Mobility => commands::mobility(model, cli.basis.as_deref(), &settings),
        Command::Homography => commands::homography(&settings),
        Command::Weyl => commands::weyl(model, &settings),
        Command::Veronese => commands::veronese_pullback(model, &settings),
        Command::Functional => commands::functional(&settings),
        Command::Spectrum => commands::spectrum(&settings),
    }?;
    let report = Report {
        config: config_echo(cli, sub, model),
        records,
        wall_time: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes") + "\n";
    print!("{text}");
    if let Some(path) = &cli.out {
        std::fs::write(path, &text)?;
    }
    if let (Some(path), Some(csv)) = (&cli.csv, csv) {
        std::fs::write(path, csv)?;
    }
    Ok(report.pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(e)) => {
            eprintln!("numerical error: {e}");
            ExitCode::from(3)
        }
        Err(CliError::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
    }
}

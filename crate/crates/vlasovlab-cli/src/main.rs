//! Command-line front end: run a configured simulation, drive twin-run
//! stability experiments, verify the inequality battery, and print the
//! exponent/constant tables.
//!
//! Exit codes: 0 success, 2 config error, 3 numerical failure,
//! 4 verification failure. Thread count follows RAYON_NUM_THREADS.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use vlasovlab::error::Error;
use vlasovlab::report::{self, CheckId};
use vlasovlab::runner;
use vlasovlab::stability::Perturbation;
use vlasovlab::RunConfig;

#[derive(Parser)]
#[command(name = "vlasovlab", version, about = "magnetized Vlasov-Poisson simulator and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write series.csv + manifest.json
    Run {
        /// JSON run configuration
        config: PathBuf,
        /// output directory
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a perturbed twin simulation and write trace.csv + stability report
    Twin {
        config: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// velocity shift: scalar (axis 0) or comma-separated vector
        #[arg(long, default_value = "0")]
        dv: String,
        /// position shift: scalar (axis 0) or comma-separated vector
        #[arg(long, default_value = "0")]
        dx: String,
    },
    /// Re-run a config (or the config embedded in a manifest.json) and
    /// evaluate verification checks
    Verify {
        /// config JSON or a manifest.json produced by `run`
        input: PathBuf,
        #[arg(short, long, default_value = "out")]
        out: PathBuf,
        /// comma-separated check names; defaults to the dimension's battery
        #[arg(long)]
        checks: Option<String>,
    },
    /// Print the exponent table and kernel norm constants
    Constants {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        n_min: i64,
        #[arg(long, default_value_t = 5)]
        n_max: i64,
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 1.0)]
        coupling: f64,
    },
}

fn parse_vector(text: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad shift component `{t}`")))
        })
        .collect()
}

fn load_config(path: &PathBuf) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    // a manifest embeds the config under "config"
    if let Ok(doc) = serde_json::from_str::<serde_json::Value>(&text) {
        if doc.get("config").is_some() && doc.get("config_hash").is_some() {
            return runner::config_from_manifest(path);
        }
    }
    RunConfig::from_json(&text)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NumericalBlowup { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config)?;
            for w in cfg.validate()? {
                eprintln!("warning: {w}");
            }
            let result = runner::run(&cfg)?;
            let arts = runner::write_run_artifacts(&result, &out)?;
            println!(
                "run complete: {} frames, {} markers, {:.2}s",
                result.series.len(),
                result.initial().len(),
                result.elapsed_seconds
            );
            println!("wrote {}", arts.series_csv.display());
            println!("wrote {}", arts.manifest.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Twin { config, out, dv, dx } => {
            let cfg = load_config(&config)?;
            let dv = parse_vector(&dv)?;
            let dx = parse_vector(&dx)?;
            let perturbation = Perturbation::Shift { dx, dv };
            if perturbation.is_zero() {
                eprintln!("notice: zero perturbation; the trace will be degenerate");
            }
            let summary = report::run_twin(&cfg, &perturbation)?;
            let (trace_path, report_path) = report::write_twin_artifacts(&summary, &out)?;
            println!(
                "twin complete: {} frames, envelope mode {}, C_pB = {:.4e}, window = {:.3}",
                summary.output.trace.len(),
                summary.envelope.mode,
                summary.envelope.c_pb,
                summary.envelope.window
            );
            println!("wrote {}", trace_path.display());
            println!("wrote {}", report_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { input, out, checks } => {
            let cfg = load_config(&input)?;
            let check_ids = match checks {
                None => CheckId::defaults_for(cfg.dim),
                Some(list) => list
                    .split(',')
                    .map(|name| CheckId::parse(name.trim()))
                    .collect::<Result<Vec<_>, _>>()?,
            };
            let result = runner::run(&cfg)?;
            let report = report::run_checks(&result, &check_ids)?;
            let (json_path, txt_path) = report::write_verify_artifacts(&report, &out)?;
            print!("{}", report.render_text());
            println!("wrote {}", json_path.display());
            println!("wrote {}", txt_path.display());
            if report.pass {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(4))
            }
        }
        Command::Constants {
            dim,
            n_min,
            n_max,
            kappa,
            coupling,
        } => {
            let table = report::constants_table(dim, n_min, n_max, kappa, coupling)?;
            print!("{table}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

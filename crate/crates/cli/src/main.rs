//! `elastic-calderon`: run, validate and inspect experiment bundles.
//!
//! Exit codes: 0 success, 2 validation failure, 3 numerical failure,
//! 1 for I/O errors.

use clap::{Parser, Subcommand};
use ecl_core::error::EclError;
use ecl_core::experiment::{self, ExperimentConfig};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable overriding the default output root.
const OUTPUT_ROOT_VAR: &str = "ECL_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "elastic-calderon", version, about = "Elastic Calderon laboratory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result bundle.
    Run {
        config: PathBuf,
        /// Run directory; defaults to `<root>/<experiment>-<digest>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads, overriding the config.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a configuration without computing.
    Validate { config: PathBuf },
    /// Pretty-print a result bundle.
    Show { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run { config, out, threads } => run(&config, out, threads),
        Command::Validate { config } => validate(&config),
        Command::Show { run_dir } => show(&run_dir),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(path: &Path, out: Option<PathBuf>, threads: Option<usize>) -> Result<u8, EclError> {
    let mut config = ExperimentConfig::from_path(path)?;
    if threads.is_some() {
        config.threads = threads;
    }
    let diags = experiment::validate(&config);
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("invalid {}: {}", d.field, d.message);
        }
        return Ok(2);
    }
    let dir = match out {
        Some(d) => d,
        None => {
            let root = std::env::var_os(OUTPUT_ROOT_VAR)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"));
            experiment::default_run_dir(&config, &root)?
        }
    };
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| EclError::numerical("run", format!("cannot start worker pool: {e}")))?;
    let written = pool.install(|| experiment::run(&config, &dir)).inspect_err(|_| {
        eprintln!("experiment {} failed", config.experiment.name());
    })?;
    println!("{}", written.display());
    Ok(0)
}

fn validate(path: &Path) -> Result<u8, EclError> {
    let config = ExperimentConfig::from_path(path)?;
    let diags = experiment::validate(&config);
    if diags.is_empty() {
        println!("ok: {} configuration is valid", config.experiment.name());
        return Ok(0);
    }
    for d in &diags {
        println!("{}: {}", d.field, d.message);
    }
    Ok(2)
}

fn show(dir: &Path) -> Result<u8, EclError> {
    let v = experiment::load_result(dir)?;
    for key in ["schema", "experiment", "config_digest", "seed"] {
        println!("{key:<16} {}", scalar(&v[key]));
    }
    println!("results:");
    print_tree(&v["results"], "  ");
    if let Some(t) = v["tables"].as_array() {
        println!("tables:");
        for n in t {
            println!("  {}", scalar(n));
        }
    }
    Ok(0)
}

fn scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => n
            .as_f64()
            .filter(|_| !n.is_u64() && !n.is_i64())
            .map_or(n.to_string(), |f| format!("{f:.6e}")),
        other => other.to_string(),
    }
}

fn print_tree(v: &Value, indent: &str) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                match x {
                    Value::Object(_) => {
                        println!("{indent}{k}:");
                        print_tree(x, &format!("{indent}  "));
                    }
                    Value::Array(a) if a.iter().any(|e| e.is_object()) => {
                        println!("{indent}{k}:");
                        for (i, e) in a.iter().enumerate() {
                            println!("{indent}  [{i}]");
                            print_tree(e, &format!("{indent}    "));
                        }
                    }
                    Value::Array(a) => {
                        let items: Vec<String> = a.iter().map(scalar).collect();
                        println!("{indent}{k:<28} [{}]", items.join(", "));
                    }
                    _ => println!("{indent}{k:<28} {}", scalar(x)),
                }
            }
        }
        other => println!("{indent}{}", scalar(other)),
    }
}

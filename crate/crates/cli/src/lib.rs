//! Experiment runner: `run`, `validate` and `list` over TOML experiment
//! files.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

pub mod config;
pub mod experiments;
pub mod output;
pub mod units;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{info, ConfigError, KINDS};
use crate::output::{sha256_hex, Format};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "metabattle", version, about = "Simulates battles between competing metasurfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment and write its results plus a manifest.
    Run {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
        /// Overrides the seed in the file.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        /// Overrides the output directory in the file.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
        jobs: Option<u16>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long, value_name = "PATH")]
        config: PathBuf,
    },
    /// List experiment kinds.
    List {
        #[arg(long, value_enum, default_value = "text")]
        format: ListFormat,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ListFormat {
    Text,
    Csv,
    Json,
}

/// Parses `args` (program name first) and executes the command.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(stderr, "{text}") } else { write!(stdout, "{text}") };
            return code;
        }
    };
    match cli.command {
        Command::List { format } => {
            list(format, stdout);
            EXIT_OK
        }
        Command::Validate { config } => match config::load(&config) {
            Ok(_) => {
                let _ = writeln!(stdout, "ok");
                EXIT_OK
            }
            Err(e) => report_config(&e, stderr),
        },
        Command::Run {
            config,
            seed,
            out,
            jobs,
            format,
        } => {
            let mut loaded = match config::load(&config) {
                Ok(l) => l,
                Err(e) => return report_config(&e, stderr),
            };
            if let Some(s) = seed {
                loaded.config.seed = s;
                loaded.canonical = serde_json::to_string(&loaded.config).expect("config serializes");
            }
            let dir = out.unwrap_or_else(|| loaded.config.output_dir());
            let jobs = jobs.map_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()), usize::from);
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                Ok(p) => p,
                Err(e) => {
                    let _ = writeln!(stderr, "error: cannot start {jobs} workers: {e}");
                    return EXIT_RUNTIME;
                }
            };
            let started = Instant::now();
            let kind = info(loaded.config.kind).name;
            log::info!("running {kind} with seed {} on {jobs} workers", loaded.config.seed);
            let outputs = match pool.install(|| experiments::run(&loaded.config, &loaded.base_dir)) {
                Ok(o) => o,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {kind} failed: {e}");
                    return EXIT_RUNTIME;
                }
            };
            let elapsed = started.elapsed().as_secs_f64();
            match output::write_all(
                &dir,
                &outputs,
                format,
                kind,
                loaded.config.seed,
                jobs,
                sha256_hex(loaded.canonical.as_bytes()),
                elapsed,
            ) {
                Ok(m) => {
                    let _ = writeln!(
                        stdout,
                        "{kind}: wrote {} files to {} in {elapsed:.1} s (results sha256 {})",
                        m.files.len(),
                        dir.display(),
                        m.results_sha256
                    );
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(stderr, "error: cannot write results to {}: {e}", dir.display());
                    EXIT_RUNTIME
                }
            }
        }
    }
}

fn report_config(e: &ConfigError, stderr: &mut dyn Write) -> i32 {
    for line in e.to_string().lines() {
        let _ = writeln!(stderr, "error: {line}");
    }
    EXIT_CONFIG
}

fn list(format: ListFormat, out: &mut dyn Write) {
    match format {
        ListFormat::Json => {
            let rows: Vec<serde_json::Value> = KINDS
                .iter()
                .map(|k| {
                    serde_json::json!({
                        "kind": k.name,
                        "description": k.description,
                        "section": k.anchor,
                        "config_sections": k.sections,
                    })
                })
                .collect();
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&rows).expect("json"));
        }
        ListFormat::Csv => {
            let _ = writeln!(out, "kind,section,description");
            for k in &KINDS {
                let _ = writeln!(out, "{},{},\"{}\"", k.name, k.anchor, k.description);
            }
        }
        ListFormat::Text => {
            let w = KINDS.iter().map(|k| k.name.len()).max().unwrap_or(0);
            let a = KINDS.iter().map(|k| k.anchor.len()).max().unwrap_or(0);
            for k in &KINDS {
                let _ = writeln!(out, "{:w$}  {:a$}  {}", k.name, k.anchor, k.description);
            }
        }
    }
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use isac_slp::harness::config::KEYS;
use isac_slp::harness::{self, table, ExperimentKind, ExperimentSpec, Format, Profile};
use isac_slp::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProfileArg {
    Desk,
    Paper,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detection probability against false-alarm probability.
    Roc,
    /// DoA RMSE and detection probability against target distance.
    Sweep,
    /// Precoder designs and their summary metrics.
    Solve,
    /// Oracle and distribution consistency checks.
    Validate,
}

fn key_help() -> String {
    let mut s = String::from("Configuration keys (`key = value`, `#` comments):\n");
    for (k, v) in KEYS {
        s.push_str(&format!("  {k:<28} {v}\n"));
    }
    s.push_str("\nISAC_SLP_THREADS overrides --threads. Exit codes: 0 ok, 1 configuration error, 2 numerical failure or failed validation check.");
    s
}

#[derive(Debug, Parser)]
#[command(name = "isac-slp", version, about = "Symbol-level precoding for full-duplex ISAC: experiments", after_long_help = key_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file applied over the profile defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output table path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv", global = true)]
    format: FormatArg,
    #[arg(long, value_enum, default_value = "desk", global = true)]
    profile: ProfileArg,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn thread_count(cli: Option<usize>) -> Result<Option<usize>, Error> {
    match std::env::var("ISAC_SLP_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config {
                key: "ISAC_SLP_THREADS".into(),
                line: 0,
                message: format!("'{v}' is not a positive integer"),
            }),
        Err(_) => Ok(cli.filter(|n| *n > 0)),
    }
}

fn commit_id() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_manifest(
    out: &Path,
    spec: &ExperimentSpec,
    threads: usize,
    wall: f64,
    failure: Option<&Error>,
) -> Result<(), Error> {
    let manifest = serde_json::json!({
        "spec": spec,
        "seed": spec.seed,
        "commit": commit_id(),
        "wall_time_s": wall,
        "threads": threads,
        "failure": failure.map(|e| e.to_string()),
    });
    let path = manifest_path(out);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numerical(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn run(cli: Cli) -> Result<Option<Error>, Error> {
    let kind = match cli.command {
        Command::Roc => ExperimentKind::Roc,
        Command::Sweep => ExperimentKind::Sweep,
        Command::Solve => ExperimentKind::Solve,
        Command::Validate => ExperimentKind::Validate,
    };
    let profile = match cli.profile {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Paper => Profile::Paper,
    };
    let mut spec = match &cli.config {
        Some(path) => harness::load_config_with(path, profile, kind).map_err(|e| match e {
            Error::Io { path, source } => Error::Config {
                key: "--config".into(),
                line: 0,
                message: format!("cannot read {path}: {source}"),
            },
            other => other,
        })?,
        None => ExperimentSpec::profile(profile, kind),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(out) = &cli.out {
        spec.output_path = Some(out.display().to_string());
    }
    spec.validate()?;
    let format = match cli.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let threads = thread_count(cli.threads)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Numerical(e.to_string()))?;
    let start = Instant::now();
    let outcome = pool.install(|| harness::run(&spec))?;
    let wall = start.elapsed().as_secs_f64();
    match &spec.output_path {
        Some(out) => {
            let out = PathBuf::from(out);
            table::emit_table(&outcome.table, &out, format)?;
            write_manifest(&out, &spec, pool.current_num_threads(), wall, outcome.failure.as_ref())?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            match format {
                Format::Csv => {
                    table::write_csv(&outcome.table, &mut lock).map_err(|e| Error::Numerical(e.to_string()))?
                }
                Format::Json => {
                    serde_json::to_writer_pretty(&mut lock, outcome.table.rows())
                        .map_err(|e| Error::Numerical(e.to_string()))?;
                    let _ = writeln!(lock);
                }
            }
        }
    }
    let failed_checks = spec.experiment == ExperimentKind::Validate
        && outcome
            .table
            .rows()
            .iter()
            .any(|r| r.metric.ends_with(".pass") && r.value != 1.0);
    if failed_checks && outcome.failure.is_none() {
        return Ok(Some(Error::Invariant("validation checks failed".into())));
    }
    Ok(outcome.failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) if e.is_config() => {
            eprintln!("configuration error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

//! `lpgeo`: runs one experiment from a TOML config and writes its reports.
//!
//! Exit codes: 0 when every verdict passes, 1 when any verdict fails (the
//! reports are still written), 2 on configuration or run errors.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use lpgeo_core::experiments::chart_specs;
use lpgeo_core::{run, Experiment, ExperimentReport};
use serde::Serialize;

use config::{parse_config, ConfigError};

#[derive(Parser)]
#[command(name = "lpgeo", version, about = "Distance convergence experiments for L^p conformal metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sobolev ratio ||d||_q / ||g||_(p/2)^(1/2) across the family.
    Sobolev(RunArgs),
    /// Uniform distance convergence off the singular locus.
    Converge(RunArgs),
    /// Holder bound d <= C ||g||^(1/2) d0^((p-m)/p) for p > m.
    Holder(RunArgs),
    /// Bad-set estimate from tail potentials.
    Badset(RunArgs),
    /// Symmetric curve family checks.
    CurvesCheck(RunArgs),
    /// Potential operator, distance-potential and reverse-Holder checks.
    PotentialCheck(RunArgs),
    /// Reference oracles only; also writes oracles.json.
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides output.directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: hardware count).
    #[arg(long, env = "LPGEO_THREADS")]
    threads: Option<usize>,
    /// Embed wall-clock time in the report and charts.
    #[arg(long)]
    stamp: bool,
}

impl Command {
    fn split(&self) -> (Experiment, &RunArgs) {
        match self {
            Command::Sobolev(a) => (Experiment::Sobolev, a),
            Command::Converge(a) => (Experiment::Converge, a),
            Command::Holder(a) => (Experiment::Holder, a),
            Command::Badset(a) => (Experiment::Badset, a),
            Command::CurvesCheck(a) => (Experiment::CurvesCheck, a),
            Command::PotentialCheck(a) => (Experiment::PotentialCheck, a),
            Command::Oracle(a) => (Experiment::Oracle, a),
        }
    }
}

#[derive(Serialize)]
struct OracleValue<'a> {
    name: &'a str,
    j: u64,
    param: f64,
    value: f64,
    uncertainty: f64,
}

#[derive(Serialize)]
struct Oracles<'a> {
    config_hash: &'a str,
    oracles: Vec<OracleValue<'a>>,
}

fn write_oracles(report: &ExperimentReport, dir: &Path) -> std::io::Result<PathBuf> {
    let oracles = Oracles {
        config_hash: &report.config_hash,
        oracles: report
            .rows
            .iter()
            .map(|r| OracleValue { name: &r.series, j: r.j, param: r.param, value: r.value, uncertainty: r.uncertainty })
            .collect(),
    };
    let path = dir.join("oracles.json");
    let text = serde_json::to_string_pretty(&oracles).map_err(std::io::Error::other)?;
    std::fs::write(&path, text + "\n")?;
    Ok(path)
}

fn unix_stamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    format!("unix time {secs}")
}

fn execute(experiment: Experiment, args: &RunArgs) -> Result<bool, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let resolved = parse_config(&text)
        .and_then(|c| c.resolve(experiment))
        .map_err(|e: ConfigError| e.to_string())?;
    let dir = args
        .out
        .clone()
        .or(resolved.directory)
        .ok_or("no output directory: pass --out or set output.directory")?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| format!("cannot set {n} threads: {e}"))?;
    }
    let started = Instant::now();
    let mut report = run(&resolved.config).map_err(|e| e.to_string())?;
    let stamp = args.stamp.then(unix_stamp);
    if stamp.is_some() {
        report.wall_clock_seconds = Some(started.elapsed().as_secs_f64());
    }
    let written = report
        .write_all(&dir, "report.json", &chart_specs(experiment), &resolved.formats, stamp.as_deref())
        .map_err(|e| e.to_string())?;
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    if experiment == Experiment::Oracle {
        let p = write_oracles(&report, &dir).map_err(|e| e.to_string())?;
        eprintln!("wrote {}", p.display());
    }
    for v in &report.verdicts {
        println!("{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.rule, v.detail);
    }
    println!("config {} {}", report.config_hash, if report.passed() { "passed" } else { "failed" });
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = cli.command.split();
    match execute(experiment, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

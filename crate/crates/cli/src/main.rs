mod commands;
mod manifest;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use commands::{CapabilityArgs, CosimArgs, DayAheadArgs, SweepArgs, Verdict};
use manifest::{RunManifest, RunStatus};

/// Reactive capability of DER-rich feeders and T-D cosimulation.
///
/// Exit codes: 0 success, 1 input error, 2 outputs written but some point
/// infeasible (or every step of a cosimulation diverged).
#[derive(Debug, Parser)]
#[command(name = "dercap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Capability curve over a curtailment grid.
    Capability(CapabilityArgs),
    /// One capability curve per hour of a daily profile.
    Dayahead(DayAheadArgs),
    /// Flexibility range versus penetration, oversize, placement or grid voltage.
    Sweep(SweepArgs),
    /// Quasi-static transmission-distribution cosimulation.
    Cosim(CosimArgs),
}

fn params<T: Serialize>(args: &T) -> BTreeMap<String, Value> {
    match serde_json::to_value(args) {
        Ok(Value::Object(map)) => map.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

fn threads() -> Result<Option<usize>> {
    let Ok(v) = std::env::var("DERCAP_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("DERCAP_THREADS must be a positive integer, got `{v}`"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(Some(n))
}

fn run(cli: Cli) -> u8 {
    let (name, out, mut parameters) = match &cli.command {
        Command::Capability(a) => ("capability", &a.out, params(a)),
        Command::Dayahead(a) => ("dayahead", &a.out, params(a)),
        Command::Sweep(a) => ("sweep", &a.out, params(a)),
        Command::Cosim(a) => ("cosim", &a.out, params(a)),
    };
    let threads = match threads() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 1;
        }
    };
    parameters.insert("threads".into(), threads.map_or(Value::Null, Value::from));
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return 1;
    }
    let mut m = RunManifest::new(name, Path::new(out), parameters);
    let result = match &cli.command {
        Command::Capability(a) => commands::capability(a, &mut m),
        Command::Dayahead(a) => commands::dayahead(a, &mut m),
        Command::Sweep(a) => commands::sweep(a, &mut m),
        Command::Cosim(a) => commands::cosim(a, &mut m),
    };
    let (status, code, error) = match result {
        Ok(Verdict::Complete) => (RunStatus::Ok, 0, None),
        Ok(Verdict::Partial(msg)) => {
            eprintln!("warning: {msg}");
            (RunStatus::Partial, 2, Some(msg))
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            (RunStatus::Error, 1, Some(format!("{e:#}")))
        }
    };
    if let Err(e) = m.finish(status, code as i32, error) {
        eprintln!("error: {e:#}");
        return 1;
    }
    code
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    ExitCode::from(run(cli))
}

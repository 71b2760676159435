//! Subcommand bodies. Each returns whether every solve or step succeeded;
//! errors are input errors.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use dercap_core::capability::{
    curtailment_sweep, day_ahead_sweep, default_curtailment_grid, ieee1547_surface, parameter_sweep, CapabilityContext, CapabilityCurve,
    FlexibilityRange, Ieee1547Scenario, SolveReport, SweepKey, WorstCaseSpec,
};
use dercap_core::feeder::{FeederModel, OperatingPoint};
use dercap_core::io::{capability_rows, fmt_num, read_profiles, write_capability_csv, write_series_csv, Cell};
use dercap_core::tdsim::{cosimulate, CosimOptions, CosimResult, Scenario, TransmissionNetwork};

use crate::manifest::RunManifest;

/// Tolerance for the KKT and certificate checks counted in the manifest.
const HEALTH_TOL: f64 = 1e-7;

pub enum Verdict {
    Complete,
    /// Outputs written, but some point was infeasible or some run diverged.
    Partial(String),
}

#[derive(Debug, Args, Serialize)]
pub struct CapabilityArgs {
    /// Feeder JSON.
    #[arg(long)]
    pub feeder: PathBuf,
    /// Grid-side voltage, pu.
    #[arg(long, default_value_t = 1.0)]
    pub vtm: f64,
    /// `default` (0, 0.05, …, 1) or a comma-separated list.
    #[arg(long, default_value = "default")]
    pub curtailment_grid: String,
    #[arg(long, default_value_t = 1.0)]
    pub load_mult: f64,
    #[arg(long, default_value_t = 1.0)]
    pub solar_mult: f64,
    /// Also solve at the extreme grid voltages.
    #[arg(long)]
    pub worst_case: bool,
    #[arg(long, default_value_t = 0.9)]
    pub vtm_min: f64,
    #[arg(long, default_value_t = 1.1)]
    pub vtm_max: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplianceArg {
    Oversize,
    Curtail,
}

#[derive(Debug, Args, Serialize)]
pub struct DayAheadArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// `hour,load_mult,solar_mult`, 24 rows.
    #[arg(long)]
    pub profiles: PathBuf,
    /// Curtailment level, or a list/`default` grid without --ieee1547.
    #[arg(long, default_value = "0")]
    pub curtailment: String,
    /// Keep 44 % var headroom by oversizing inverters or by curtailing.
    #[arg(long, value_enum)]
    pub ieee1547: Option<ComplianceArg>,
    #[arg(long, default_value_t = 1.0)]
    pub vtm: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub feeder: PathBuf,
    /// penetration | oversize | placement | vtm
    #[arg(long)]
    pub vary: String,
    /// Comma-separated; numeric keys also take `start..end[:step]`.
    #[arg(long)]
    pub values: String,
    #[arg(long, default_value_t = 0.0)]
    pub curtailment: f64,
    #[arg(long, default_value_t = 1.0)]
    pub vtm: f64,
    #[arg(long, default_value_t = 1.0)]
    pub load_mult: f64,
    #[arg(long, default_value_t = 1.0)]
    pub solar_mult: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CosimArgs {
    /// Transmission network JSON.
    #[arg(long)]
    pub transmission: PathBuf,
    /// Scenario JSON; repeat to run several scenarios in parallel.
    #[arg(long, required = true)]
    pub scenario: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_feeder(m: &mut RunManifest, path: &Path) -> Result<FeederModel> {
    let text = m.read_input(path)?;
    FeederModel::from_json(&text).with_context(|| format!("feeder {}", path.display()))
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    if s.trim() == "default" {
        return Ok(default_curtailment_grid());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| anyhow!("bad curtailment value `{}`", v.trim())))
        .collect()
}

/// Comma-separated items; with `numeric`, `a..b[:step]` expands to an
/// inclusive range (step defaults to a quarter of the span).
pub fn parse_values(s: &str, numeric: bool) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        match item.split_once("..") {
            Some((a, rest)) if numeric => {
                let (b, step) = match rest.split_once(':') {
                    Some((b, st)) => (b, Some(st)),
                    None => (rest, None),
                };
                let num = |t: &str| t.trim().parse::<f64>().map_err(|_| anyhow!("bad range `{item}`"));
                let (a, b) = (num(a)?, num(b)?);
                let step = match step {
                    Some(st) => num(st)?,
                    None => (b - a) / 4.0,
                };
                if !(b >= a) || !(step > 0.0) && b > a {
                    bail!("bad range `{item}`");
                }
                let n = if b > a { ((b - a) / step + 1e-9).floor() as usize } else { 0 };
                out.extend((0..=n).map(|k| fmt_num(a + k as f64 * step)));
            }
            _ => out.push(item.to_string()),
        }
    }
    if out.is_empty() {
        bail!("no values given");
    }
    Ok(out)
}

fn count_reports(m: &mut RunManifest, reports: impl IntoIterator<Item = SolveReport>) {
    for r in reports {
        m.count(r.status.as_str(), 1);
        if !r.healthy(HEALTH_TOL) {
            m.count("health-check-failed", 1);
        }
    }
}

fn curve_csv(curve: &CapabilityCurve) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_capability_csv(&mut buf, &capability_rows(curve))?;
    Ok(buf)
}

fn infeasible_points(curve: &CapabilityCurve) -> usize {
    curve.points.iter().filter(|p| !p.all_feasible()).count()
}

pub fn capability(a: &CapabilityArgs, m: &mut RunManifest) -> Result<Verdict> {
    let model = load_feeder(m, &a.feeder)?;
    m.save()?;
    let grid = parse_grid(&a.curtailment_grid)?;
    let op = OperatingPoint::scaled(&model, a.load_mult, a.solar_mult, "capability");
    let ctx = CapabilityContext::new(model, op)?;
    let worst = a.worst_case.then_some(WorstCaseSpec {
        v_tm_min: a.vtm_min,
        v_tm_max: a.vtm_max,
    });
    let curve = curtailment_sweep(&ctx, &grid, a.vtm, worst)?;
    count_reports(m, curve.points.iter().flat_map(|p| p.reports()));
    m.output("capability.csv", &curve_csv(&curve)?)?;
    Ok(match infeasible_points(&curve) {
        0 => Verdict::Complete,
        n => Verdict::Partial(format!("{n} of {} curtailment points infeasible", curve.points.len())),
    })
}

struct IndexRow {
    hour: usize,
    load_mult: f64,
    solar_mult: f64,
    file: String,
    q_base: f64,
    curtailment: f64,
    rpfr: Option<FlexibilityRange>,
    headroom_ok: Option<bool>,
}

fn index_csv(rows: &[IndexRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["hour", "load_mult", "solar_mult", "file", "q_base_kvar", "curtailment", "a", "b", "headroom_ok"])?;
    for r in rows {
        w.write_record([
            r.hour.to_string(),
            fmt_num(r.load_mult),
            fmt_num(r.solar_mult),
            r.file.clone(),
            fmt_num(r.q_base),
            fmt_num(r.curtailment),
            Cell::from_opt(r.rpfr.map(|f| f.a)).render(),
            Cell::from_opt(r.rpfr.map(|f| f.b)).render(),
            r.headroom_ok.map(|b| b.to_string()).unwrap_or_default(),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn dayahead(a: &DayAheadArgs, m: &mut RunManifest) -> Result<Verdict> {
    let model = load_feeder(m, &a.feeder)?;
    let text = m.read_input(&a.profiles)?;
    m.save()?;
    let profile = read_profiles(text.as_bytes(), Some(24)).with_context(|| format!("profiles {}", a.profiles.display()))?;
    let ctx = CapabilityContext::new(model.clone(), OperatingPoint::nominal(&model))?;
    let mut index = Vec::new();
    let mut infeasible = 0;
    match a.ieee1547 {
        None => {
            let grid = parse_grid(&a.curtailment)?;
            let surface = day_ahead_sweep(&ctx, &profile, &grid, a.vtm, None)?;
            for h in &surface.hours {
                let file = format!("hour_{:02}.csv", h.hour);
                count_reports(m, h.curve.points.iter().flat_map(|p| p.reports()));
                infeasible += infeasible_points(&h.curve);
                m.output(&file, &curve_csv(&h.curve)?)?;
                let p0 = &h.curve.points[0];
                index.push(IndexRow {
                    hour: h.hour,
                    load_mult: h.load_mult,
                    solar_mult: h.solar_mult,
                    file,
                    q_base: h.curve.q_base,
                    curtailment: p0.curtailment,
                    rpfr: p0.rpfr(h.curve.q_base),
                    headroom_ok: None,
                });
            }
        }
        Some(s) => {
            let c: f64 = a.curtailment.trim().parse().map_err(|_| anyhow!("--curtailment must be one number with --ieee1547"))?;
            let scenario = match s {
                ComplianceArg::Oversize => Ieee1547Scenario::Oversize,
                ComplianceArg::Curtail => Ieee1547Scenario::Curtail,
            };
            let hours = ieee1547_surface(&ctx, scenario, &profile, c, a.vtm, &[])?;
            for (h, row) in hours.iter().zip(&profile) {
                let file = format!("hour_{:02}.csv", h.hour);
                count_reports(m, h.curve.points.iter().flat_map(|p| p.reports()));
                infeasible += infeasible_points(&h.curve);
                if !h.headroom_ok {
                    m.count("headroom-violations", 1);
                }
                m.output(&file, &curve_csv(&h.curve)?)?;
                index.push(IndexRow {
                    hour: h.hour,
                    load_mult: row.load_mult,
                    solar_mult: row.solar_mult,
                    file,
                    q_base: h.curve.q_base,
                    curtailment: h.curtailment,
                    rpfr: h.rpfr,
                    headroom_ok: Some(h.headroom_ok),
                });
            }
        }
    }
    m.output("index.csv", &index_csv(&index)?)?;
    Ok(match infeasible {
        0 => Verdict::Complete,
        n => Verdict::Partial(format!("{n} hour/curtailment points infeasible")),
    })
}

pub const SWEEP_HEADER: [&str; 11] = [
    "vary",
    "value",
    "curtailment",
    "v_tm",
    "q_base_kvar",
    "q_lower_kvar",
    "q_upper_kvar",
    "a",
    "b",
    "feasible_lower",
    "feasible_upper",
];

pub fn sweep(a: &SweepArgs, m: &mut RunManifest) -> Result<Verdict> {
    let key = SweepKey::parse(a.vary.trim()).ok_or_else(|| anyhow!("unknown --vary key `{}` (penetration, oversize, placement, vtm)", a.vary))?;
    let values = parse_values(&a.values, key != SweepKey::Placement)?;
    let model = load_feeder(m, &a.feeder)?;
    m.save()?;
    let op = OperatingPoint::scaled(&model, a.load_mult, a.solar_mult, "sweep");
    let ctx = CapabilityContext::new(model, op)?;
    let rows = parameter_sweep(&ctx, key, &values, a.curtailment, a.vtm)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_HEADER)?;
    let mut infeasible = 0;
    for r in &rows {
        let p = &r.curve.points[0];
        count_reports(m, p.reports());
        if !p.all_feasible() {
            infeasible += 1;
        }
        let f = r.rpfr();
        w.write_record([
            key.as_str().to_string(),
            r.value.clone(),
            fmt_num(p.curtailment),
            fmt_num(r.curve.v_tm),
            fmt_num(r.curve.q_base),
            Cell::from_opt(p.q_lower()).render(),
            Cell::from_opt(p.q_upper()).render(),
            Cell::from_opt(f.map(|f| f.a)).render(),
            Cell::from_opt(f.map(|f| f.b)).render(),
            p.lower.feasible().to_string(),
            p.upper.feasible().to_string(),
        ])?;
    }
    m.output("sweep.csv", &w.into_inner()?)?;
    Ok(match infeasible {
        0 => Verdict::Complete,
        n => Verdict::Partial(format!("{n} of {} values infeasible", rows.len())),
    })
}

fn support_csv(r: &CosimResult) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "bus", "level", "requested_kvar", "before_kvar", "der_q_kvar", "curtailment"])?;
    for s in &r.supports {
        w.write_record([
            s.t.to_string(),
            s.bus.to_string(),
            fmt_num(s.level),
            fmt_num(s.requested_kvar),
            fmt_num(s.before_kvar),
            fmt_num(s.der_q_kvar),
            fmt_num(s.curtailment),
        ])?;
    }
    Ok(w.into_inner()?)
}

pub fn cosim(a: &CosimArgs, m: &mut RunManifest) -> Result<Verdict> {
    let text = m.read_input(&a.transmission)?;
    let net = TransmissionNetwork::from_json(&text).with_context(|| format!("transmission {}", a.transmission.display()))?;
    let mut runs = Vec::new();
    let mut stems = BTreeSet::new();
    for path in &a.scenario {
        let text = m.read_input(path)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
        if !stems.insert(stem.clone()) {
            bail!("two scenarios named `{stem}`");
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let sc = Scenario::from_json(&text, base).with_context(|| format!("scenario {}", path.display()))?;
        for f in &sc.feeder_files {
            let bytes = std::fs::read(f).with_context(|| format!("cannot read {}", f.display()))?;
            m.record(f, &bytes);
        }
        runs.push((stem, sc));
    }
    m.save()?;
    let opts = CosimOptions::default();
    let results = runs
        .par_iter()
        .map(|(stem, sc)| cosimulate(&net, sc, &opts).with_context(|| format!("scenario `{stem}`")))
        .collect::<Result<Vec<_>>>()?;
    let mut dead = Vec::new();
    for ((stem, _), r) in runs.iter().zip(&results) {
        let diverged = r.diverged_steps().len();
        m.count("steps-converged", r.steps.len() - diverged);
        m.count("steps-diverged", diverged);
        m.count("support-requests", r.supports.len());
        count_reports(m, r.solve_reports.iter().copied());
        if diverged == r.steps.len() {
            dead.push(stem.clone());
        }
        for (name, rows) in r.series() {
            let mut buf = Vec::new();
            write_series_csv(&mut buf, &rows)?;
            m.output(&format!("{stem}/{name}.csv"), &buf)?;
        }
        m.output(&format!("{stem}/support.csv"), &support_csv(r)?)?;
    }
    Ok(if dead.is_empty() {
        Verdict::Complete
    } else {
        Verdict::Partial(format!("every step diverged in {}", dead.join(", ")))
    })
}

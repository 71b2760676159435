//! Event-driven quasi-static cosimulation and feeder var support.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::boundary::{boundary_iterate, BoundaryFeeder, BoundaryOptions, BoundaryOutcome, FeederSetpoint};
use super::network::{apply_contingency, BusType, TransmissionNetwork};
use crate::capability::{capacitive_capability, var_support_dispatch, var_support_solve, CapabilityContext, Dispatch, SolveReport};
use crate::error::{CapabilityError, TdError};
use crate::feeder::{FeederModel, OperatingPoint};
use crate::io::{Cell, SeriesRow};

/// Var support asked of the feeders behind one boundary bus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarRequest {
    pub bus: usize,
    /// Net var per feeder copy, kvar. Without it the request is sized by the event's target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_kvar: Option<f64>,
    /// Largest total curtailment fraction the DSO may use.
    #[serde(default)]
    pub curtailment_cap: f64,
    /// Per-unit var limit as a share of the kW rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    BranchOutage {
        branch: usize,
    },
    /// Sized requests are applied as given. Unsized requests share one
    /// support level in [0, 1] between no support and the deepest capacitive
    /// bound, chosen as the smallest level lifting every `monitor` bus to
    /// `target_v` (all available support when no target is given).
    VarRequest {
        requests: Vec<VarRequest>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_v: Option<f64>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        monitor: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosimEvent {
    pub t: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryDoc {
    pub bus: usize,
    pub feeder_file: String,
    pub multiplicity: u32,
    #[serde(default = "one")]
    pub load_mult: f64,
    #[serde(default = "one")]
    pub solar_mult: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub horizon: usize,
    #[serde(default)]
    pub events: Vec<CosimEvent>,
    pub boundaries: Vec<BoundaryDoc>,
}

/// A scenario with feeder files resolved and loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub horizon: usize,
    pub events: Vec<CosimEvent>,
    pub boundaries: Vec<BoundaryFeeder>,
    /// Resolved feeder paths, one per boundary.
    pub feeder_files: Vec<PathBuf>,
}

impl Scenario {
    /// Parses a scenario; relative feeder paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, TdError> {
        let doc: ScenarioDoc = serde_json::from_str(text)?;
        Self::from_doc(doc, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self, TdError> {
        let text = std::fs::read_to_string(path).map_err(|source| TdError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_doc(doc: ScenarioDoc, base_dir: &Path) -> Result<Self, TdError> {
        if doc.horizon == 0 {
            return Err(TdError::schema("horizon", "must be positive"));
        }
        for (k, e) in doc.events.iter().enumerate() {
            if e.t >= doc.horizon {
                return Err(TdError::schema(format!("events[{k}].t"), format!("{} not before horizon {}", e.t, doc.horizon)));
            }
            if k > 0 && e.t < doc.events[k - 1].t {
                return Err(TdError::schema(format!("events[{k}].t"), "events must be ordered by time"));
            }
        }
        let mut boundaries = Vec::new();
        let mut files = Vec::new();
        let mut cache: BTreeMap<PathBuf, FeederModel> = BTreeMap::new();
        for (k, b) in doc.boundaries.iter().enumerate() {
            if b.multiplicity == 0 {
                return Err(TdError::schema(format!("boundaries[{k}].multiplicity"), "must be at least 1"));
            }
            if doc.boundaries[..k].iter().any(|o| o.bus == b.bus) {
                return Err(TdError::schema(format!("boundaries[{k}].bus"), format!("bus {} listed twice", b.bus)));
            }
            for (name, v) in [("load_mult", b.load_mult), ("solar_mult", b.solar_mult)] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(TdError::schema(format!("boundaries[{k}].{name}"), "must be non-negative"));
                }
            }
            let path = base_dir.join(&b.feeder_file);
            let model = match cache.get(&path) {
                Some(m) => m.clone(),
                None => {
                    let text = std::fs::read_to_string(&path).map_err(|source| TdError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                    let m = FeederModel::from_json(&text).map_err(|source| TdError::FeederFile {
                        path: path.display().to_string(),
                        source,
                    })?;
                    cache.insert(path.clone(), m.clone());
                    m
                }
            };
            let op = OperatingPoint::scaled(&model, b.load_mult, b.solar_mult, format!("bus {}", b.bus));
            let ctx = CapabilityContext::new(model, op)?;
            boundaries.push(BoundaryFeeder::new(b.bus, b.multiplicity, ctx));
            files.push(path);
        }
        for (k, e) in doc.events.iter().enumerate() {
            if let EventKind::VarRequest { requests, target_v, .. } = &e.kind {
                for r in requests {
                    if !doc.boundaries.iter().any(|b| b.bus == r.bus) {
                        return Err(TdError::schema(format!("events[{k}].requests"), format!("bus {} has no feeders", r.bus)));
                    }
                    if !(0.0..=1.0).contains(&r.curtailment_cap) {
                        return Err(TdError::schema(format!("events[{k}].curtailment_cap"), "must lie in [0, 1]"));
                    }
                    if r.q_share.is_some_and(|s| !(s >= 0.0)) {
                        return Err(TdError::schema(format!("events[{k}].q_share"), "must be non-negative"));
                    }
                }
                if target_v.is_some_and(|v| !(v > 0.0)) {
                    return Err(TdError::schema(format!("events[{k}].target_v"), "must be positive"));
                }
            }
        }
        Ok(Self {
            name: doc.name.unwrap_or_else(|| "scenario".into()),
            horizon: doc.horizon,
            events: doc.events,
            boundaries,
            feeder_files: files,
        })
    }
}

/// Outcome of one var request.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportRecord {
    pub t: usize,
    pub bus: usize,
    /// Shared support level for unsized requests, 1 for sized ones.
    pub level: f64,
    /// Per-copy net var asked for, kvar.
    pub requested_kvar: f64,
    /// Per-copy net var before the request, kvar.
    pub before_kvar: f64,
    /// Total DER var injection per copy, kvar.
    pub der_q_kvar: f64,
    /// Curtailed share of available DER power.
    pub curtailment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecord {
    pub bus: usize,
    pub v_tm: f64,
    /// All copies together.
    pub p_mw: f64,
    pub q_mvar: f64,
    pub feeder_v_min: f64,
    pub feeder_v_max: f64,
    pub v0: f64,
    /// DER var injection per copy, kvar.
    pub der_q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Transmission voltage magnitudes in bus order.
    pub vm: Vec<f64>,
    pub boundaries: Vec<BoundaryRecord>,
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
    /// Extra demand the transmission solve used, per boundary (MW, Mvar).
    pub boundary_loads: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CosimResult {
    pub name: String,
    pub bus_ids: Vec<usize>,
    pub steps: Vec<StepRecord>,
    pub supports: Vec<SupportRecord>,
    /// Every optimisation solved while placing var support, trials included.
    pub solve_reports: Vec<SolveReport>,
    /// Branches out of service at the end of the run.
    pub outages: Vec<usize>,
}

impl CosimResult {
    pub fn vm(&self, t: usize, bus: usize) -> Option<f64> {
        let k = self.bus_ids.iter().position(|&b| b == bus)?;
        self.steps.get(t).map(|s| s.vm[k])
    }

    pub fn diverged_steps(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| !s.converged).map(|s| s.t).collect()
    }

    /// Lowest magnitude over `buses` from step `from` on.
    pub fn min_vm_after(&self, from: usize, buses: &[usize]) -> f64 {
        self.steps
            .iter()
            .filter(|s| s.t >= from)
            .flat_map(|s| buses.iter().filter_map(|&b| self.bus_ids.iter().position(|&x| x == b)).map(move |k| s.vm[k]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Series keyed by name, each a list of `t,series,value` rows.
    pub fn series(&self) -> BTreeMap<String, Vec<SeriesRow>> {
        let mut out: BTreeMap<String, Vec<SeriesRow>> = BTreeMap::new();
        let mut push = |name: String, t: usize, v: Cell| {
            out.entry(name.clone()).or_default().push(SeriesRow { t, series: name, value: v });
        };
        for s in &self.steps {
            let val = |v: f64| if s.converged { Cell::Value(v) } else { Cell::Missing };
            for (k, &b) in self.bus_ids.iter().enumerate() {
                push(format!("v_bus{b}"), s.t, val(s.vm[k]));
            }
            for r in &s.boundaries {
                let b = r.bus;
                push(format!("vtm_bus{b}"), s.t, val(r.v_tm));
                push(format!("p_bus{b}_mw"), s.t, val(r.p_mw));
                push(format!("q_bus{b}_mvar"), s.t, val(r.q_mvar));
                push(format!("feeder_vmin_bus{b}"), s.t, val(r.feeder_v_min));
                push(format!("feeder_vmax_bus{b}"), s.t, val(r.feeder_v_max));
                push(format!("der_q_bus{b}_kvar"), s.t, val(r.der_q_kvar));
            }
            push("iterations".into(), s.t, Cell::Value(s.iterations as f64));
            push("converged".into(), s.t, Cell::Value(if s.converged { 1.0 } else { 0.0 }));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosimOptions {
    pub boundary: BoundaryOptions,
    /// Bisection steps on the shared support level.
    pub bisection_steps: usize,
}

impl Default for CosimOptions {
    fn default() -> Self {
        Self {
            boundary: BoundaryOptions::default(),
            bisection_steps: 12,
        }
    }
}

fn record(t: usize, net: &TransmissionNetwork, feeders: &[BoundaryFeeder], out: &BoundaryOutcome) -> StepRecord {
    let pf = &out.pf;
    StepRecord {
        t,
        converged: out.converged,
        iterations: out.iterations,
        vm: pf.vm.clone(),
        boundaries: feeders
            .iter()
            .zip(&out.injections)
            .zip(&out.loads)
            .zip(&out.v_tm)
            .map(|(((f, inj), l), &v)| BoundaryRecord {
                bus: f.bus,
                v_tm: v,
                p_mw: l.p_mw,
                q_mvar: l.q_mvar,
                feeder_v_min: inj.v_min,
                feeder_v_max: inj.v_max,
                v0: inj.v0,
                der_q_kvar: f.setpoint.der_q_kvar.iter().sum(),
            })
            .collect(),
        slack_p_mw: pf.p_inj_mw[net.slack],
        slack_q_mvar: pf.q_inj_mvar[net.slack],
        boundary_loads: out.loads.iter().map(|l| (l.p_mw, l.q_mvar)).collect(),
    }
}

/// Dispatch for `requested` kvar; a request just outside the frozen-loss
/// capability falls back to the nearest achievable value.
fn dispatch_for(ctx: &CapabilityContext, requested: f64, cap: f64, v_tm: f64, reports: &RefCell<Vec<SolveReport>>) -> Result<Dispatch, TdError> {
    let out = var_support_solve(ctx, requested, cap, v_tm)?;
    reports.borrow_mut().push(out.report);
    if let Some(d) = out.dispatch {
        return Ok(d);
    }
    match var_support_dispatch(ctx, requested, cap, v_tm) {
        Ok(d) => Ok(d),
        Err(CapabilityError::OutsideCapability { nearest, .. }) => {
            let out = var_support_solve(ctx, nearest, cap, v_tm)?;
            reports.borrow_mut().push(out.report);
            out.dispatch.ok_or(CapabilityError::OutsideCapability { requested: nearest, nearest }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn request_ctx(f: &BoundaryFeeder, r: &VarRequest) -> CapabilityContext {
    let mut ctx = f.ctx.clone();
    if let Some(s) = r.q_share {
        ctx.q_cap_kvar = Some(ctx.model.ders.iter().map(|d| s * d.p_rated_kw).collect());
    }
    ctx
}

struct Pending {
    slot: usize,
    ctx: CapabilityContext,
    cap: f64,
    v_tm: f64,
    before: f64,
    deep: f64,
}

/// Applies one var-request event to `feeders`, returning the support records.
fn apply_request(
    t: usize,
    net: &TransmissionNetwork,
    feeders: &mut [BoundaryFeeder],
    requests: &[VarRequest],
    target_v: Option<f64>,
    monitor: &[usize],
    state: &BoundaryOutcome,
    opts: &CosimOptions,
    reports: &RefCell<Vec<SolveReport>>,
) -> Result<Vec<SupportRecord>, TdError> {
    let mut records = Vec::new();
    let mut pending = Vec::new();
    for r in requests {
        let slot = feeders.iter().position(|f| f.bus == r.bus).expect("validated boundary");
        let ctx = request_ctx(&feeders[slot], r);
        let v_tm = state.v_tm[slot];
        let before = state.injections[slot].q_kvar;
        match r.q_kvar {
            Some(q) => {
                let d = dispatch_for(&ctx, q, r.curtailment_cap, v_tm, reports)?;
                records.push(support_record(t, r.bus, 1.0, q, before, &ctx, &d));
                feeders[slot].setpoint = FeederSetpoint::from_dispatch(&d);
            }
            None => {
                let side = capacitive_capability(&ctx, r.curtailment_cap, v_tm)?;
                reports.borrow_mut().push(side.report);
                let deep = side.q_kvar().unwrap_or(before).min(before);
                pending.push(Pending {
                    slot,
                    ctx,
                    cap: r.curtailment_cap,
                    v_tm,
                    before,
                    deep,
                });
            }
        }
    }
    if pending.is_empty() {
        return Ok(records);
    }
    let dispatches = |level: f64| -> Result<Vec<Dispatch>, TdError> {
        pending
            .iter()
            .map(|p| dispatch_for(&p.ctx, p.before - level * (p.before - p.deep), p.cap, p.v_tm, reports))
            .collect()
    };
    let monitored_min = |feeders: &mut [BoundaryFeeder], ds: &[Dispatch]| -> Result<f64, TdError> {
        let saved: Vec<FeederSetpoint> = pending.iter().map(|p| feeders[p.slot].setpoint.clone()).collect();
        for (p, d) in pending.iter().zip(ds) {
            feeders[p.slot].setpoint = FeederSetpoint::from_dispatch(d);
        }
        let out = boundary_iterate(net, feeders, Some(&state.v_tm), &opts.boundary)?;
        for (p, s) in pending.iter().zip(saved) {
            feeders[p.slot].setpoint = s;
        }
        Ok(if out.converged {
            monitor.iter().filter_map(|&b| out.pf.vm_at(net, b)).fold(f64::INFINITY, f64::min)
        } else {
            f64::NEG_INFINITY
        })
    };
    let mut level = 1.0;
    let mut chosen = dispatches(1.0)?;
    if let (Some(target), false) = (target_v, monitor.is_empty()) {
        if monitored_min(feeders, &chosen)? >= target {
            let zero = dispatches(0.0)?;
            if monitored_min(feeders, &zero)? >= target {
                level = 0.0;
                chosen = zero;
            } else {
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..opts.bisection_steps {
                    let mid = 0.5 * (lo + hi);
                    let ds = dispatches(mid)?;
                    if monitored_min(feeders, &ds)? >= target {
                        hi = mid;
                        chosen = ds;
                    } else {
                        lo = mid;
                    }
                }
                level = hi;
            }
        }
    }
    for (p, d) in pending.iter().zip(&chosen) {
        let bus = feeders[p.slot].bus;
        records.push(support_record(t, bus, level, p.before - level * (p.before - p.deep), p.before, &p.ctx, d));
        feeders[p.slot].setpoint = FeederSetpoint::from_dispatch(d);
    }
    Ok(records)
}

fn support_record(t: usize, bus: usize, level: f64, requested: f64, before: f64, ctx: &CapabilityContext, d: &Dispatch) -> SupportRecord {
    let avail: f64 = ctx.op.der_avail_kw.iter().sum();
    let cut: f64 = ctx.op.der_avail_kw.iter().zip(&d.der_p_kw).map(|(a, p)| a - p).sum();
    SupportRecord {
        t,
        bus,
        level,
        requested_kvar: requested,
        before_kvar: before,
        der_q_kvar: d.der_q_kvar.iter().sum(),
        curtailment: if avail > 0.0 { cut / avail } else { 0.0 },
    }
}

/// Steps `t = 0 … horizon−1`: events at `t` first, then the boundary fixed
/// point. Diverged steps are recorded and the run continues.
pub fn cosimulate(net: &TransmissionNetwork, scenario: &Scenario, opts: &CosimOptions) -> Result<CosimResult, TdError> {
    for f in &scenario.boundaries {
        match net.bus_pos(f.bus).map(|k| net.buses[k].bus_type) {
            None => return Err(TdError::schema("boundaries", format!("unknown transmission bus {}", f.bus))),
            Some(BusType::Pq) => {}
            Some(_) => return Err(TdError::schema("boundaries", format!("bus {} is not a PQ bus", f.bus))),
        }
    }
    let mut net = net.clone();
    let mut feeders = scenario.boundaries.clone();
    let mut v_prev: Option<Vec<f64>> = None;
    let mut steps = Vec::with_capacity(scenario.horizon);
    let mut supports = Vec::new();
    let reports = RefCell::new(Vec::new());
    let mut outages = Vec::new();
    for t in 0..scenario.horizon {
        let events: Vec<&CosimEvent> = scenario.events.iter().filter(|e| e.t == t).collect();
        for e in events.iter().filter(|e| matches!(e.kind, EventKind::BranchOutage { .. })) {
            if let EventKind::BranchOutage { branch } = e.kind {
                net = apply_contingency(&net, branch)?;
                outages.push(branch);
            }
        }
        let mut out = boundary_iterate(&net, &feeders, v_prev.as_deref(), &opts.boundary)?;
        let mut requested = false;
        for e in &events {
            if let EventKind::VarRequest { requests, target_v, monitor } = &e.kind {
                supports.extend(apply_request(t, &net, &mut feeders, requests, *target_v, monitor, &out, opts, &reports)?);
                requested = true;
            }
        }
        if requested {
            out = boundary_iterate(&net, &feeders, Some(&out.v_tm), &opts.boundary)?;
        }
        if out.converged {
            v_prev = Some(out.v_tm.clone());
        }
        steps.push(record(t, &net, &feeders, &out));
    }
    Ok(CosimResult {
        name: scenario.name.clone(),
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        steps,
        supports,
        solve_reports: reports.into_inner(),
        outages,
    })
}

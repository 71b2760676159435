//! Feeders attached to transmission buses and the fixed point between them.

use super::network::TransmissionNetwork;
use super::powerflow::{ac_power_flow, ExtraLoad, PowerFlowOptions, PowerFlowSolution};
use crate::capability::{CapabilityContext, Dispatch};
use crate::error::TdError;
use crate::feeder::{line_flows, net_substation_var, reactive_loss, solve_voltages, SubstationState};

/// DER set-points a feeder holds between requests, with the secondary
/// voltage its tap aims for.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederSetpoint {
    pub der_p_kw: Vec<f64>,
    pub der_q_kvar: Vec<f64>,
    pub v0_target: f64,
}

impl FeederSetpoint {
    /// Unity power factor at full availability. The tap aims for the
    /// secondary voltage closest to 1 pu that keeps every node within the
    /// context's limits (the middle of the two when no such voltage exists).
    pub fn unity(ctx: &CapabilityContext) -> Self {
        let der_p_kw = ctx.op.der_avail_kw.clone();
        let der_q_kvar = vec![0.0; ctx.model.ders.len()];
        let (p, q) = ctx.op.injections_pu(&ctx.model, &der_p_kw, &der_q_kvar);
        // Node voltages squared are v0² plus a shift that does not depend on v0.
        let shift = solve_voltages(&ctx.sens, &p, &q, 1.0);
        let lo_d = shift.iter().map(|y| y - 1.0).fold(0.0, f64::min);
        let hi_d = shift.iter().map(|y| y - 1.0).fold(f64::NEG_INFINITY, f64::max).max(lo_d);
        let lo = ctx.limits.v_min.powi(2) - lo_d;
        let hi = ctx.limits.v_max.powi(2) - hi_d;
        let y0 = if lo <= hi { 1.0f64.clamp(lo, hi) } else { 0.5 * (lo + hi) };
        Self {
            der_p_kw,
            der_q_kvar,
            v0_target: y0.sqrt(),
        }
    }

    pub fn from_dispatch(d: &Dispatch) -> Self {
        Self {
            der_p_kw: d.der_p_kw.clone(),
            der_q_kvar: d.der_q_kvar.clone(),
            v0_target: d.v0,
        }
    }
}

/// Net demand of one feeder copy seen from the transmission bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeederInjection {
    pub p_kw: f64,
    pub q_kvar: f64,
    /// Grid-side voltage the feeder was evaluated at.
    pub v_tm: f64,
    pub v0: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Evaluates a feeder at grid voltage `v_tm`: the tap moves toward the
/// set-point's target within its range, losses use the node voltages of
/// this evaluation.
pub fn feeder_injection(ctx: &CapabilityContext, sp: &FeederSetpoint, v_tm: f64) -> Result<FeederInjection, TdError> {
    let m = &ctx.model;
    let s = &ctx.sens;
    let v0 = SubstationState::targeting(v_tm, sp.v0_target, m.taps).v0();
    let (p, q) = ctx.op.injections_pu(m, &sp.der_p_kw, &sp.der_q_kvar);
    let y = solve_voltages(s, &p, &q, v0);
    let flows = line_flows(m, &p, &q, &s.l_p, &s.l_q);
    let q_kvar = net_substation_var(m, s, &ctx.op, &sp.der_q_kvar, &y, &flows)?;
    let base = m.phase_base_kva();
    let mut p_kw = ctx.op.load_p_kw.iter().sum::<f64>() - sp.der_p_kw.iter().sum::<f64>();
    for u in 0..m.index.len() {
        p_kw += reactive_loss(flows.p[u], flows.q[u], y[u], s.r_diag[u])? * base;
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(FeederInjection {
        p_kw,
        q_kvar,
        v_tm,
        v0,
        v_min: lo.max(0.0).sqrt(),
        v_max: hi.max(0.0).sqrt(),
    })
}

/// `multiplicity` identical feeders behind transmission bus `bus`.
#[derive(Debug, Clone)]
pub struct BoundaryFeeder {
    pub bus: usize,
    pub multiplicity: u32,
    pub ctx: CapabilityContext,
    pub setpoint: FeederSetpoint,
}

impl BoundaryFeeder {
    pub fn new(bus: usize, multiplicity: u32, ctx: CapabilityContext) -> Self {
        let setpoint = FeederSetpoint::unity(&ctx);
        Self {
            bus,
            multiplicity,
            ctx,
            setpoint,
        }
    }

    fn load(&self, inj: &FeederInjection) -> ExtraLoad {
        let k = self.multiplicity as f64;
        ExtraLoad {
            bus: self.bus,
            p_mw: k * inj.p_kw / 1000.0,
            q_mvar: k * inj.q_kvar / 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryOptions {
    /// Largest change of a boundary voltage between transmission solves.
    pub tol: f64,
    /// Weight of the new transmission voltage in the next feeder evaluation.
    pub relaxation: f64,
    pub max_outer: usize,
    pub pf: PowerFlowOptions,
}

impl Default for BoundaryOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            relaxation: 0.5,
            max_outer: 50,
            pf: PowerFlowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Transmission voltage at each boundary from the last solve.
    pub v_tm: Vec<f64>,
    /// Per-copy feeder demand used by the last transmission solve.
    pub injections: Vec<FeederInjection>,
    pub loads: Vec<ExtraLoad>,
    pub pf: PowerFlowSolution,
}

/// Gauss-Seidel exchange: transmission solve with feeder demands, feeders
/// re-evaluated at relaxed boundary voltages, until the boundary voltages
/// of two consecutive solves agree. `v_init` defaults to the transmission
/// solution without feeders.
pub fn boundary_iterate(
    net: &TransmissionNetwork,
    feeders: &[BoundaryFeeder],
    v_init: Option<&[f64]>,
    opts: &BoundaryOptions,
) -> Result<BoundaryOutcome, TdError> {
    for f in feeders {
        if net.bus_pos(f.bus).is_none() {
            return Err(TdError::schema("boundaries", format!("unknown bus {}", f.bus)));
        }
    }
    let at = |pf: &PowerFlowSolution| -> Vec<f64> { feeders.iter().map(|f| pf.vm_at(net, f.bus).unwrap()).collect() };
    let mut prev = match v_init {
        Some(v) => {
            if v.len() != feeders.len() {
                return Err(TdError::schema("v_init", "one voltage per boundary required"));
            }
            v.to_vec()
        }
        None => {
            let pf = ac_power_flow(net, &[], &opts.pf);
            if pf.converged {
                at(&pf)
            } else {
                vec![1.0; feeders.len()]
            }
        }
    };
    let mut v_tm = prev.clone();
    let mut last = None;
    for k in 1..=opts.max_outer.max(1) {
        let injections = feeders
            .iter()
            .zip(&v_tm)
            .map(|(f, &v)| feeder_injection(&f.ctx, &f.setpoint, v))
            .collect::<Result<Vec<_>, _>>()?;
        let loads: Vec<ExtraLoad> = feeders.iter().zip(&injections).map(|(f, i)| f.load(i)).collect();
        let pf = ac_power_flow(net, &loads, &opts.pf);
        if !pf.converged {
            return Ok(BoundaryOutcome {
                converged: false,
                iterations: k,
                v_tm: prev,
                injections,
                loads,
                pf,
            });
        }
        let v = at(&pf);
        let delta = v.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let done = delta <= opts.tol;
        for (t, &vn) in v_tm.iter_mut().zip(&v) {
            *t += opts.relaxation * (vn - *t);
        }
        prev = v.clone();
        let out = BoundaryOutcome {
            converged: done,
            iterations: k,
            v_tm: v,
            injections,
            loads,
            pf,
        };
        if done {
            return Ok(out);
        }
        last = Some(out);
    }
    Ok(last.expect("at least one outer iteration"))
}

//! DER optimal power flow over the linearised feeder.

use dercap_conic::{check_certificate, check_kkt, solve, ConicProblem, ConicSolution, LinExpr, Status, VarId};

use super::{CapabilityContext, Direction, SolveReport};
use crate::error::CapabilityError;
use crate::feeder::evaluate;

/// What the DER-OPF optimises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpfObjective {
    /// Extreme substation var at a fixed total curtailment.
    NetVar(Direction),
    /// Least total curtailment, at most `cap`, reaching net var `target_kvar`
    /// (losses frozen at the loss constants).
    MinCurtailment { target_kvar: f64, cap: f64 },
}

/// A built DER-OPF with handles on its decision variables.
#[derive(Debug, Clone)]
pub struct DerOpf {
    pub problem: ConicProblem,
    /// Per-DER var injection, per-unit.
    pub q: Vec<VarId>,
    /// Per-DER curtailment fraction of available power.
    pub cur: Vec<VarId>,
    /// Squared secondary voltage.
    pub y0: VarId,
    /// Loss epigraph variables of the min problem (one per line-phase).
    pub loss: Vec<VarId>,
}

impl DerOpf {
    /// Dispatch variables: var and curtailment per DER plus the substation voltage.
    pub fn dispatch_vars(&self) -> usize {
        self.q.len() + self.cur.len() + 1
    }
}

/// Extreme net var of one DER-OPF solve.
#[derive(Debug, Clone, PartialEq)]
pub struct OpfOutcome {
    pub report: SolveReport,
    pub dispatch: Option<Dispatch>,
}

/// DER set-points and the resulting feeder state.
#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub der_p_kw: Vec<f64>,
    pub der_q_kvar: Vec<f64>,
    pub curtailment: Vec<f64>,
    pub v0: f64,
    /// Net substation var with losses at the dispatched point, kvar.
    pub q_net_kvar: f64,
    /// Same without any line losses, kvar.
    pub q_net_lossless_kvar: f64,
    pub p_net_kw: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Largest violation of the node voltage box by the forward solve, pu².
    pub voltage_violation: f64,
}

/// Builds the DER-OPF at total curtailment `curtailment` (ignored by
/// [`OpfObjective::MinCurtailment`]) and grid-side voltage `v_tm`.
pub fn build_der_opf(ctx: &CapabilityContext, curtailment: f64, v_tm: f64, objective: OpfObjective) -> Result<DerOpf, CapabilityError> {
    if !(0.0..=1.0).contains(&curtailment) {
        return Err(CapabilityError::param("curtailment", "must lie in [0, 1]"));
    }
    if !(v_tm > 0.0 && v_tm.is_finite()) {
        return Err(CapabilityError::param("v_tm", "must be positive"));
    }
    let m = &ctx.model;
    let s = &ctx.sens;
    let base = m.phase_base_kva();
    let nd = m.ders.len();
    let n = m.index.len();
    let slots = m.der_slots();
    let avail: Vec<f64> = ctx.op.der_avail_kw.iter().map(|v| v / base).collect();
    let total: f64 = avail.iter().sum();
    let floor = ctx.cur_floor.clone().unwrap_or_else(|| vec![0.0; nd]);

    let mut prob = ConicProblem::new();
    let q_cost = match objective {
        OpfObjective::NetVar(Direction::Capacitive) => -1.0,
        OpfObjective::NetVar(Direction::Inductive) => 1.0,
        OpfObjective::MinCurtailment { .. } => 0.0,
    };

    // Total curtailment pins every unit when it sits at either end of [0, 1].
    let pinned = match objective {
        OpfObjective::NetVar(_) if curtailment == 0.0 => Some(0.0),
        OpfObjective::NetVar(_) if curtailment == 1.0 => Some(1.0),
        _ => None,
    };
    let cur_hi = match objective {
        OpfObjective::MinCurtailment { cap, .. } => cap,
        _ => 1.0,
    };

    let mut q = Vec::with_capacity(nd);
    let mut cur = Vec::with_capacity(nd);
    for j in 0..nd {
        let (lo, hi) = if avail[j] == 0.0 {
            (0.0, 0.0)
        } else if let Some(v) = pinned {
            (v, v)
        } else {
            (floor[j], cur_hi.max(floor[j]))
        };
        let cost = match objective {
            OpfObjective::MinCurtailment { .. } => avail[j],
            _ => 0.0,
        };
        cur.push(prob.add_var(format!("cur{j}"), lo, hi, cost));
    }
    for j in 0..nd {
        let s_pu = m.ders[j].s_kva / base;
        let cap = ctx.q_cap_kvar.as_ref().map(|c| c[j] / base).unwrap_or(f64::INFINITY);
        let fixed_cur = (prob.lower[cur[j].0] == prob.upper[cur[j].0]).then_some(prob.lower[cur[j].0]);
        match fixed_cur {
            Some(c) if s_pu >= avail[j] * (1.0 - c) => {
                // Constant real output: the inverter circle reduces to a var box.
                let h = (s_pu * s_pu - (avail[j] * (1.0 - c)).powi(2)).max(0.0).sqrt().min(cap);
                q.push(prob.add_var(format!("q{j}"), -h, h, q_cost));
            }
            _ => {
                let v = if cap.is_finite() {
                    prob.add_var(format!("q{j}"), -cap, cap, q_cost)
                } else {
                    prob.add_free_var(format!("q{j}"), q_cost)
                };
                let mut pe = LinExpr::constant(avail[j]);
                pe.add_term(cur[j], -avail[j]);
                prob.add_soc(LinExpr::constant(s_pu), vec![pe, LinExpr::var(v)]);
                q.push(v);
            }
        }
    }
    let tap = ctx.model.taps;
    let y0 = prob.add_var("y0", (v_tm * tap.r_min()).powi(2), (v_tm * tap.r_max()).powi(2), 0.0);

    // Node voltages as affine expressions of the decision variables.
    let zero_q = vec![0.0; nd];
    let (p_full, q_load) = ctx.op.injections_pu(m, &ctx.op.der_avail_kw, &zero_q);
    let mut volt = Vec::with_capacity(n);
    for u in 0..n {
        let mut c = s.l_c[u];
        for k in 0..n {
            c += s.r_eq[(u, k)] * p_full[k] + s.x_eq[(u, k)] * q_load[k];
        }
        let mut e = LinExpr::constant(c);
        e.add_term(y0, 1.0);
        for j in 0..nd {
            e.add_term(cur[j], -s.r_eq[(u, slots[j])] * avail[j]);
            e.add_term(q[j], s.x_eq[(u, slots[j])]);
        }
        e.compact();
        volt.push(e);
    }
    let (ylo, yhi) = (ctx.limits.v_min.powi(2), ctx.limits.v_max.powi(2));
    for e in &volt {
        prob.add_range(e, ylo, yhi);
    }

    match objective {
        OpfObjective::NetVar(_) => {
            if total > 0.0 && pinned.is_none() {
                let terms = (0..nd).filter(|&j| avail[j] > 0.0).map(|j| (cur[j], avail[j])).collect();
                prob.add_eq(terms, curtailment * total);
            }
        }
        OpfObjective::MinCurtailment { target_kvar, cap } => {
            if total > 0.0 {
                let terms: Vec<(usize, f64)> = (0..nd).filter(|&j| avail[j] > 0.0).map(|j| (cur[j].0, avail[j])).collect();
                prob.add_range(&LinExpr::new(terms, 0.0), f64::NEG_INFINITY, cap * total);
            }
            let fixed = (ctx.op.load_q_kvar.iter().sum::<f64>() / base) + s.l_q.iter().sum::<f64>();
            let terms = q.iter().map(|&v| (v, 1.0)).collect();
            prob.add_eq(terms, fixed - target_kvar / base);
        }
    }

    let q_load_pu: f64 = ctx.op.load_q_kvar.iter().sum::<f64>() / base;
    let mut loss = Vec::new();
    match objective {
        OpfObjective::NetVar(Direction::Capacitive) => {
            prob.c0 = q_load_pu;
            // Subtree membership for flows: F_u = Σ_{k below u, same phase} (−p_k + Lp_k).
            let below = subtree_members(ctx);
            for u in 0..n {
                let t = prob.add_var(format!("loss{u}"), 0.0, f64::INFINITY, s.x_diag[u]);
                let mut f = LinExpr::constant(0.0);
                let mut g = LinExpr::constant(0.0);
                for &k in &below[u] {
                    f.constant += -p_full[k] + s.l_p[k];
                    g.constant += -q_load[k] + s.l_q[k];
                }
                for j in 0..nd {
                    if below[u].binary_search(&slots[j]).is_ok() {
                        f.add_term(cur[j], avail[j]);
                        g.add_term(q[j], -1.0);
                    }
                }
                let scale2 = |e: &LinExpr| LinExpr::new(e.terms.iter().map(|&(i, a)| (i, 2.0 * a)).collect(), 2.0 * e.constant);
                // t ≥ (F² + G²)/ŷ with ŷ the frozen loss denominator.
                let yhat = s.loss_y[u];
                let mut ypt = LinExpr::constant(yhat);
                ypt.add_term(t, 1.0);
                let mut ymt = LinExpr::constant(yhat);
                ymt.add_term(t, -1.0);
                prob.add_soc(ypt, vec![scale2(&f), scale2(&g), ymt]);
                loss.push(t);
            }
        }
        OpfObjective::NetVar(Direction::Inductive) => {
            prob.c0 = -q_load_pu;
        }
        OpfObjective::MinCurtailment { .. } => {}
    }

    Ok(DerOpf {
        problem: prob,
        q,
        cur,
        y0,
        loss,
    })
}

/// For each node-phase, the sorted node-phases in its subtree (same phase, inclusive).
fn subtree_members(ctx: &CapabilityContext) -> Vec<Vec<usize>> {
    let m = &ctx.model;
    let n = m.index.len();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &j in m.graph.topo_order.iter().rev() {
        if j == 0 {
            continue;
        }
        for ph in m.nodes[j].phases.phases() {
            let u = m.index.get(j, ph).unwrap();
            let mut v = vec![u];
            for &c in &m.graph.children[j] {
                if let Some(w) = m.index.get(c, ph) {
                    v.extend_from_slice(&out[w]);
                }
            }
            v.sort_unstable();
            out[u] = v;
        }
    }
    out
}

pub(crate) fn report(prob: &ConicProblem, sol: &ConicSolution) -> SolveReport {
    SolveReport {
        status: sol.status,
        iterations: sol.iterations,
        residuals: (sol.status == Status::Optimal).then(|| check_kkt(prob, sol)),
        certificate: sol.certificate.as_ref().map(|c| check_certificate(prob, c)),
    }
}

/// Solves a built DER-OPF and evaluates the dispatch forward.
pub fn solve_der_opf(ctx: &CapabilityContext, opf: &DerOpf) -> Result<OpfOutcome, CapabilityError> {
    let sol = solve(&opf.problem, &ctx.solver)?;
    let report = report(&opf.problem, &sol);
    if sol.status != Status::Optimal {
        return Ok(OpfOutcome { report, dispatch: None });
    }
    Ok(OpfOutcome {
        report,
        dispatch: Some(dispatch_from(ctx, opf, &sol.x)?),
    })
}

pub(crate) fn dispatch_from(ctx: &CapabilityContext, opf: &DerOpf, x: &[f64]) -> Result<Dispatch, CapabilityError> {
    let m = &ctx.model;
    let base = m.phase_base_kva();
    let curtailment: Vec<f64> = opf.cur.iter().map(|v| x[v.0].clamp(0.0, 1.0)).collect();
    let der_p_kw: Vec<f64> = ctx.op.der_avail_kw.iter().zip(&curtailment).map(|(a, c)| a * (1.0 - c)).collect();
    let der_q_kvar: Vec<f64> = opf.q.iter().map(|v| x[v.0] * base).collect();
    let v0 = x[opf.y0.0].max(0.0).sqrt();
    let st = evaluate(m, &ctx.sens, &ctx.op, &der_p_kw, &der_q_kvar, v0)?;
    let (ylo, yhi) = (ctx.limits.v_min.powi(2), ctx.limits.v_max.powi(2));
    let voltage_violation = st.y.iter().map(|&y| (ylo - y).max(y - yhi).max(0.0)).fold(0.0, f64::max);
    let q_net_lossless_kvar = ctx.op.load_q_kvar.iter().sum::<f64>() - der_q_kvar.iter().sum::<f64>();
    Ok(Dispatch {
        v_min: st.v_min(),
        v_max: st.v_max(),
        der_p_kw,
        der_q_kvar,
        curtailment,
        v0,
        q_net_kvar: st.q_net_kvar,
        q_net_lossless_kvar,
        p_net_kw: st.p_net_kw,
        voltage_violation,
    })
}

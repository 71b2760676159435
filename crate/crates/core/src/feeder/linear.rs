//! Linearised three-phase branch-flow model.
//!
//! Convention: `p`, `q` are per-unit net injections (generation − load) per
//! node-phase; line flows are positive downstream. Along a line `(i, j)`
//!
//! ```text
//! y_j = y_i − Zp·P_j − Zq·Q_j
//! ```
//!
//! so that `Y = v0²·1 + R p + X q + l_c` with `R = M⁻ᵀ Zp M⁻¹` and
//! `l_c = −(R L_p + X L_q)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};

use super::{FeederModel, OperatingPoint, Phase};
use crate::error::FeederError;

const ANGLES: [f64; 3] = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];

/// Per-unit `(Zp, Zq)` of one line from its ohmic 3×3 impedance.
pub fn lindist_blocks(model: &FeederModel, line: usize) -> (Matrix3<f64>, Matrix3<f64>) {
    let l = &model.lines[line];
    let zb = model.z_base_ohm();
    let mut zp = Matrix3::zeros();
    let mut zq = Matrix3::zeros();
    for a in 0..3 {
        for b in 0..3 {
            let (r, x) = (l.r_ohm[(a, b)] / zb, l.x_ohm[(a, b)] / zb);
            let d = ANGLES[a] - ANGLES[b];
            zp[(a, b)] = 2.0 * (r * d.cos() + x * d.sin());
            zq[(a, b)] = 2.0 * (x * d.cos() - r * d.sin());
        }
    }
    (zp, zq)
}

/// Voltage sensitivities and frozen loss terms.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederSensitivities {
    pub r_eq: DMatrix<f64>,
    pub x_eq: DMatrix<f64>,
    pub l_p: Vec<f64>,
    pub l_q: Vec<f64>,
    pub l_c: Vec<f64>,
    /// Per-line-phase diagonal resistance and reactance, pu.
    pub r_diag: Vec<f64>,
    pub x_diag: Vec<f64>,
    /// Squared voltages in the denominators of the line-loss terms, frozen at
    /// the point where the loss constants were estimated (ones by default).
    pub loss_y: Vec<f64>,
    zp: Vec<Matrix3<f64>>,
    zq: Vec<Matrix3<f64>>,
}

impl FeederSensitivities {
    /// Sensitivities with zero loss constants, built from path sums of the
    /// line blocks: entry `((j,φ),(k,ψ))` is the `(φ,ψ)` entry of the summed
    /// blocks on the common part of the root paths to `j` and `k`.
    pub fn compute(model: &FeederModel) -> Self {
        let nn = model.nodes.len();
        let n = model.index.len();
        let g = &model.graph;
        let blocks: Vec<(Matrix3<f64>, Matrix3<f64>)> = (0..model.lines.len()).map(|k| lindist_blocks(model, k)).collect();

        let mut cum_p = vec![Matrix3::zeros(); nn];
        let mut cum_q = vec![Matrix3::zeros(); nn];
        let mut depth = vec![0usize; nn];
        for &j in &g.topo_order {
            if let (Some(pa), Some(l)) = (g.parent[j], g.line_into[j]) {
                cum_p[j] = cum_p[pa] + blocks[l].0;
                cum_q[j] = cum_q[pa] + blocks[l].1;
                depth[j] = depth[pa] + 1;
            }
        }
        let lca = |mut a: usize, mut b: usize| {
            while depth[a] > depth[b] {
                a = g.parent[a].unwrap();
            }
            while depth[b] > depth[a] {
                b = g.parent[b].unwrap();
            }
            while a != b {
                a = g.parent[a].unwrap();
                b = g.parent[b].unwrap();
            }
            a
        };

        let mut r_eq = DMatrix::zeros(n, n);
        let mut x_eq = DMatrix::zeros(n, n);
        let entries = &model.index.entries;
        let mut anc = vec![vec![0usize; nn]; 0];
        if nn <= 2000 {
            anc = (0..nn).map(|a| (0..nn).map(|b| lca(a, b)).collect()).collect();
        }
        for (u, &(j, ph)) in entries.iter().enumerate() {
            for (v, &(k, ps)) in entries.iter().enumerate() {
                let c = if anc.is_empty() { lca(j, k) } else { anc[j][k] };
                r_eq[(u, v)] = cum_p[c][(ph.index(), ps.index())];
                x_eq[(u, v)] = cum_q[c][(ph.index(), ps.index())];
            }
        }

        let mut r_diag = vec![0.0; n];
        let mut x_diag = vec![0.0; n];
        let zb = model.z_base_ohm();
        for (u, &(j, ph)) in entries.iter().enumerate() {
            let l = &model.lines[g.line_into[j].unwrap()];
            r_diag[u] = l.r_ohm[(ph.index(), ph.index())] / zb;
            x_diag[u] = l.x_ohm[(ph.index(), ph.index())] / zb;
        }

        Self {
            r_eq,
            x_eq,
            l_p: vec![0.0; n],
            l_q: vec![0.0; n],
            l_c: vec![0.0; n],
            r_diag,
            x_diag,
            loss_y: vec![1.0; n],
            zp: blocks.iter().map(|b| b.0).collect(),
            zq: blocks.iter().map(|b| b.1).collect(),
        }
    }

    pub fn with_loss_voltages(mut self, y: Vec<f64>) -> Self {
        assert_eq!(y.len(), self.l_p.len());
        self.loss_y = y;
        self
    }

    /// Freezes per-line-phase loss constants and derives `l_c`.
    pub fn with_loss_constants(mut self, l_p: Vec<f64>, l_q: Vec<f64>) -> Self {
        let n = self.l_p.len();
        assert_eq!(l_p.len(), n);
        assert_eq!(l_q.len(), n);
        let lp = nalgebra::DVector::from_column_slice(&l_p);
        let lq = nalgebra::DVector::from_column_slice(&l_q);
        let lc = -(&self.r_eq * lp + &self.x_eq * lq);
        self.l_c = lc.iter().copied().collect();
        self.l_p = l_p;
        self.l_q = l_q;
        self
    }

    pub fn len(&self) -> usize {
        self.l_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l_p.is_empty()
    }

    /// `(Zp, Zq)` of a line in per-unit, full 3×3.
    pub fn line_blocks(&self, line: usize) -> (&Matrix3<f64>, &Matrix3<f64>) {
        (&self.zp[line], &self.zq[line])
    }
}

/// `Y = R p + X q + v0²·1 + l_c`.
pub fn solve_voltages(sens: &FeederSensitivities, p: &[f64], q: &[f64], v0: f64) -> Vec<f64> {
    let n = sens.len();
    assert_eq!(p.len(), n);
    assert_eq!(q.len(), n);
    let y0 = v0 * v0;
    (0..n)
        .map(|i| {
            let mut v = y0 + sens.l_c[i];
            for k in 0..n {
                v += sens.r_eq[(i, k)] * p[k] + sens.x_eq[(i, k)] * q[k];
            }
            v
        })
        .collect()
}

/// Per line-phase downstream flows, indexed like the downstream node-phase.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFlows {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl LineFlows {
    /// Flow on the line leaving the root toward `node`, per phase present.
    pub fn root_totals(&self, model: &FeederModel) -> ([f64; 3], [f64; 3]) {
        let mut p = [0.0; 3];
        let mut q = [0.0; 3];
        for &c in &model.graph.children[0] {
            for ph in model.nodes[c].phases.phases() {
                let k = model.index.get(c, ph).unwrap();
                p[ph.index()] += self.p[k];
                q[ph.index()] += self.q[k];
            }
        }
        (p, q)
    }
}

/// Leaf-to-root accumulation `S_j = −s_j + Σ_{k∈children(j)} S_k + L_j`.
pub fn line_flows(model: &FeederModel, p: &[f64], q: &[f64], l_p: &[f64], l_q: &[f64]) -> LineFlows {
    let n = model.index.len();
    let mut fp = vec![0.0; n];
    let mut fq = vec![0.0; n];
    for &j in model.graph.topo_order.iter().rev() {
        if j == 0 {
            continue;
        }
        for ph in model.nodes[j].phases.phases() {
            let u = model.index.get(j, ph).unwrap();
            let mut sp = -p[u] + l_p[u];
            let mut sq = -q[u] + l_q[u];
            for &c in &model.graph.children[j] {
                if let Some(v) = model.index.get(c, ph) {
                    sp += fp[v];
                    sq += fq[v];
                }
            }
            fp[u] = sp;
            fq[u] = sq;
        }
    }
    LineFlows { p: fp, q: fq }
}

/// Reactive loss `(P² + Q²)/y · x` of one line-phase.
pub fn reactive_loss(p_flow: f64, q_flow: f64, y: f64, x_phase: f64) -> Result<f64, FeederError> {
    if !(y > 0.0) {
        return Err(FeederError::NonPositiveVoltage(y));
    }
    Ok((p_flow * p_flow + q_flow * q_flow) / y * x_phase)
}

/// Squared voltages of the lossless model at `op` with unity-power-factor
/// DERs, no curtailment and `v0 = 1`.
pub fn base_point_voltages(model: &FeederModel, sens: &FeederSensitivities, op: &OperatingPoint) -> Vec<f64> {
    let (p, q) = op.injections_pu(model, &op.der_avail_kw, &vec![0.0; model.ders.len()]);
    let lossless = FeederSensitivities {
        l_c: vec![0.0; model.index.len()],
        ..sens.clone()
    };
    solve_voltages(&lossless, &p, &q, 1.0)
}

/// Loss constants at the base point of [`base_point_voltages`].
pub fn estimate_loss_constants(model: &FeederModel, sens: &FeederSensitivities, op: &OperatingPoint) -> (Vec<f64>, Vec<f64>) {
    let n = model.index.len();
    let zeros = vec![0.0; n];
    let (p, q) = op.injections_pu(model, &op.der_avail_kw, &vec![0.0; model.ders.len()]);
    let y = base_point_voltages(model, sens, op);
    let flows = line_flows(model, &p, &q, &zeros, &zeros);
    let mut l_p = vec![0.0; n];
    let mut l_q = vec![0.0; n];
    for u in 0..n {
        let s2 = flows.p[u].powi(2) + flows.q[u].powi(2);
        let yu = y[u].max(1e-6);
        l_p[u] = s2 / yu * sens.r_diag[u];
        l_q[u] = s2 / yu * sens.x_diag[u];
    }
    (l_p, l_q)
}

/// Net reactive demand at the substation in kvar (positive = drawn from the
/// grid): loads − DER injection + reactive line losses.
pub fn net_substation_var(
    model: &FeederModel,
    sens: &FeederSensitivities,
    op: &OperatingPoint,
    der_q_kvar: &[f64],
    y: &[f64],
    flows: &LineFlows,
) -> Result<f64, FeederError> {
    let base = model.phase_base_kva();
    let mut q = op.load_q_kvar.iter().sum::<f64>() - der_q_kvar.iter().sum::<f64>();
    for u in 0..model.index.len() {
        q += reactive_loss(flows.p[u], flows.q[u], y[u], sens.x_diag[u])? * base;
    }
    Ok(q)
}

/// Forward evaluation of one dispatch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederState {
    pub y: Vec<f64>,
    pub flows: LineFlows,
    pub p_net_kw: f64,
    pub q_net_kvar: f64,
}

impl FeederState {
    pub fn v_min(&self) -> f64 {
        self.y.iter().copied().fold(f64::INFINITY, f64::min).max(0.0).sqrt()
    }

    pub fn v_max(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(0.0).sqrt()
    }
}

/// Voltages, flows and net substation power for DER outputs in kW/kvar.
/// Line losses use the frozen denominators `sens.loss_y`.
pub fn evaluate(
    model: &FeederModel,
    sens: &FeederSensitivities,
    op: &OperatingPoint,
    der_p_kw: &[f64],
    der_q_kvar: &[f64],
    v0: f64,
) -> Result<FeederState, FeederError> {
    let (p, q) = op.injections_pu(model, der_p_kw, der_q_kvar);
    let y = solve_voltages(sens, &p, &q, v0);
    let flows = line_flows(model, &p, &q, &sens.l_p, &sens.l_q);
    let q_net_kvar = net_substation_var(model, sens, op, der_q_kvar, &sens.loss_y, &flows)?;
    let base = model.phase_base_kva();
    let mut p_net_kw = op.load_p_kw.iter().sum::<f64>() - der_p_kw.iter().sum::<f64>();
    for u in 0..model.index.len() {
        p_net_kw += reactive_loss(flows.p[u], flows.q[u], sens.loss_y[u], sens.r_diag[u])? * base;
    }
    Ok(FeederState {
        y,
        flows,
        p_net_kw,
        q_net_kvar,
    })
}

/// Incidence matrices with rows and columns over non-root node-phases.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrices {
    /// Column of line-phase `(i,j),φ`: `+1` at `(i,φ)` when `i` is not the root, `−1` at `(j,φ)`.
    pub m: DMatrix<f64>,
    /// Row of line-phase `(0,j),φ`: `+1` in column `φ`.
    pub m0: DMatrix<f64>,
}

pub fn build_incidence(model: &FeederModel) -> IncidenceMatrices {
    let n = model.index.len();
    let mut m = DMatrix::zeros(n, n);
    let mut m0 = DMatrix::zeros(n, 3);
    for (col, &(j, ph)) in model.index.entries.iter().enumerate() {
        let i = model.graph.parent[j].unwrap();
        m[(col, col)] = -1.0;
        if i == 0 {
            m0[(col, ph.index())] = 1.0;
        } else {
            let row = model.index.get(i, ph).unwrap();
            m[(row, col)] = 1.0;
        }
    }
    IncidenceMatrices { m, m0 }
}

/// Phase of a node-phase index, for callers that only hold the index.
pub fn phase_of(model: &FeederModel, u: usize) -> Phase {
    model.index.entries[u].1
}

//! Unbalanced three-phase radial feeder: topology, impedances, loads and DERs.

mod linear;
mod schema;

pub use linear::{
    base_point_voltages, build_incidence, estimate_loss_constants, evaluate, line_flows, lindist_blocks, net_substation_var, phase_of, reactive_loss,
    solve_voltages, FeederSensitivities, FeederState, IncidenceMatrices, LineFlows,
};
pub use schema::{FeederDoc, LineDoc, LoadDoc, NodeDoc, DerDoc, SubstationDoc};

use nalgebra::Matrix3;

use crate::error::FeederError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i]
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "a" => Some(Phase::A),
            "b" => Some(Phase::B),
            "c" => Some(Phase::C),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        ['a', 'b', 'c'][self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PhaseMask {
    pub present: [bool; 3],
}

impl PhaseMask {
    pub const ABC: PhaseMask = PhaseMask {
        present: [true; 3],
    };

    pub fn single(p: Phase) -> Self {
        let mut present = [false; 3];
        present[p.index()] = true;
        Self { present }
    }

    /// Parses an `"abc"`-subset string; letters must be distinct.
    pub fn parse(s: &str) -> Option<Self> {
        let mut present = [false; 3];
        for ch in s.chars() {
            let p = Phase::parse(&ch.to_string())?;
            if present[p.index()] {
                return None;
            }
            present[p.index()] = true;
        }
        present.iter().any(|&b| b).then_some(Self { present })
    }

    pub fn has(&self, p: Phase) -> bool {
        self.present[p.index()]
    }

    pub fn phases(&self) -> impl Iterator<Item = Phase> + '_ {
        Phase::ALL.into_iter().filter(|p| self.has(*p))
    }

    pub fn count(&self) -> usize {
        self.present.iter().filter(|&&b| b).count()
    }

    pub fn is_subset_of(&self, other: &PhaseMask) -> bool {
        (0..3).all(|i| !self.present[i] || other.present[i])
    }

    pub fn to_string_lower(&self) -> String {
        self.phases().map(Phase::as_char).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusNode {
    pub id: usize,
    pub phases: PhaseMask,
    /// Optional external name (e.g. the bus number of a published test feeder).
    pub label: Option<String>,
}

/// Line from an upstream to a downstream node, impedances in ohm.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSegment {
    pub from: usize,
    pub to: usize,
    pub r_ohm: Matrix3<f64>,
    pub x_ohm: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Load {
    pub node: usize,
    pub phase: Phase,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Der {
    pub id: usize,
    pub node: usize,
    pub phase: Phase,
    pub p_rated_kw: f64,
    pub s_kva: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapSettings {
    pub tap_step: f64,
    pub max_taps: u32,
}

impl Default for TapSettings {
    fn default() -> Self {
        Self {
            tap_step: 0.0063,
            max_taps: 16,
        }
    }
}

impl TapSettings {
    pub fn r_min(&self) -> f64 {
        1.0 - self.max_taps as f64 * self.tap_step
    }

    pub fn r_max(&self) -> f64 {
        1.0 + self.max_taps as f64 * self.tap_step
    }

    pub fn clamp_ratio(&self, r: f64) -> f64 {
        r.clamp(self.r_min(), self.r_max())
    }
}

/// Tap position of the substation transformer; `v0 = v_tm · r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstationState {
    pub v_tm: f64,
    pub tap_ratio: f64,
    pub taps: TapSettings,
}

impl SubstationState {
    /// Chooses the ratio that brings `v0` closest to `target`.
    pub fn targeting(v_tm: f64, target: f64, taps: TapSettings) -> Self {
        Self {
            v_tm,
            tap_ratio: taps.clamp_ratio(target / v_tm),
            taps,
        }
    }

    pub fn v0(&self) -> f64 {
        self.v_tm * self.tap_ratio
    }
}

/// Tree structure rooted at node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederGraph {
    pub parent: Vec<Option<usize>>,
    /// Index into `lines` of the line ending at each node (`None` at the root).
    pub line_into: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    /// Parents before children.
    pub topo_order: Vec<usize>,
}

/// Bijection between non-root node-phases and dense indices `0..n`.
///
/// Ordered by node id, then phase. Line-phases share the index of the
/// downstream node-phase of their line.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseIndex {
    pub entries: Vec<(usize, Phase)>,
    lookup: Vec<[Option<usize>; 3]>,
}

impl PhaseIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, node: usize, phase: Phase) -> Option<usize> {
        self.lookup.get(node).and_then(|l| l[phase.index()])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub name: String,
    pub base_kva: f64,
    pub base_kv: f64,
    pub taps: TapSettings,
    pub nodes: Vec<BusNode>,
    pub lines: Vec<LineSegment>,
    pub loads: Vec<Load>,
    pub ders: Vec<Der>,
    pub graph: FeederGraph,
    pub index: PhaseIndex,
}

impl FeederModel {
    /// Validates topology and data, then derives the graph and phase index.
    pub fn new(
        name: impl Into<String>,
        base_kva: f64,
        base_kv: f64,
        taps: TapSettings,
        nodes: Vec<BusNode>,
        lines: Vec<LineSegment>,
        loads: Vec<Load>,
        ders: Vec<Der>,
    ) -> Result<Self, FeederError> {
        if !(base_kva > 0.0 && base_kva.is_finite()) {
            return Err(FeederError::schema("base_kva", "must be positive"));
        }
        if !(base_kv > 0.0 && base_kv.is_finite()) {
            return Err(FeederError::schema("base_kv", "must be positive"));
        }
        if !(taps.tap_step > 0.0 && taps.tap_step.is_finite()) {
            return Err(FeederError::schema("substation.tap_step", "must be positive"));
        }
        if taps.r_min() <= 0.0 {
            return Err(FeederError::schema(
                "substation.max_taps",
                "tap range reaches a non-positive ratio",
            ));
        }
        let n = nodes.len();
        if n == 0 {
            return Err(FeederError::schema("nodes", "at least the root node is required"));
        }
        let mut sorted = nodes;
        sorted.sort_by_key(|b| b.id);
        for (k, b) in sorted.iter().enumerate() {
            if b.id != k {
                return Err(FeederError::schema(
                    format!("nodes[{k}].id"),
                    "ids must be unique and contiguous from 0",
                ));
            }
        }
        let nodes = sorted;

        let mut parent = vec![None; n];
        let mut line_into = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (k, l) in lines.iter().enumerate() {
            for (end, id) in [("from", l.from), ("to", l.to)] {
                if id >= n {
                    return Err(FeederError::Dangling {
                        node: id,
                        message: format!("lines[{k}].{end} references an undeclared node"),
                    });
                }
            }
            if l.from == l.to || l.to == 0 || line_into[l.to].is_some() {
                return Err(FeederError::Cycle { node: l.to });
            }
            line_into[l.to] = Some(k);
            parent[l.to] = Some(l.from);
            children[l.from].push(l.to);
            let (fm, tm) = (nodes[l.from].phases, nodes[l.to].phases);
            if !tm.is_subset_of(&fm) {
                return Err(FeederError::schema(
                    format!("lines[{k}]"),
                    format!(
                        "downstream phases `{}` not a subset of upstream `{}`",
                        tm.to_string_lower(),
                        fm.to_string_lower()
                    ),
                ));
            }
            for (field, m) in [("r_ohm", &l.r_ohm), ("x_ohm", &l.x_ohm)] {
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(FeederError::schema(format!("lines[{k}].{field}"), "non-finite entry"));
                }
                let scale = m.abs().max().max(1e-12);
                if (m - m.transpose()).abs().max() > 1e-9 * scale {
                    return Err(FeederError::schema(format!("lines[{k}].{field}"), "matrix must be symmetric"));
                }
                for p in tm.phases() {
                    if m[(p.index(), p.index())] < 0.0 {
                        return Err(FeederError::schema(
                            format!("lines[{k}].{field}"),
                            format!("negative diagonal entry on phase {}", p.as_char()),
                        ));
                    }
                }
            }
        }
        for c in children.iter_mut() {
            c.sort_unstable();
        }
        for j in 1..n {
            if line_into[j].is_none() {
                return Err(FeederError::Dangling {
                    node: j,
                    message: "no line terminates at this node".into(),
                });
            }
        }
        let mut topo_order = Vec::with_capacity(n);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            topo_order.push(i);
            for &c in children[i].iter().rev() {
                stack.push(c);
            }
        }
        if topo_order.len() != n {
            let mut seen = vec![false; n];
            topo_order.iter().for_each(|&i| seen[i] = true);
            let node = (0..n).find(|&i| !seen[i]).unwrap_or(0);
            return Err(FeederError::Cycle { node });
        }

        for (k, l) in loads.iter().enumerate() {
            check_attachment(&nodes, "loads", k, l.node, l.phase)?;
            if !l.p_kw.is_finite() || !l.q_kvar.is_finite() {
                return Err(FeederError::schema(format!("loads[{k}]"), "non-finite power"));
            }
        }
        for (k, d) in ders.iter().enumerate() {
            check_attachment(&nodes, "ders", k, d.node, d.phase)?;
            if !(d.p_rated_kw >= 0.0 && d.p_rated_kw.is_finite()) {
                return Err(FeederError::schema(format!("ders[{k}].p_rated_kw"), "must be non-negative"));
            }
            if !(d.s_kva > 0.0 && d.s_kva.is_finite()) {
                return Err(FeederError::schema(format!("ders[{k}].s_kva"), "must be positive"));
            }
        }

        let mut entries = Vec::new();
        let mut lookup = vec![[None; 3]; n];
        for b in nodes.iter().skip(1) {
            for p in b.phases.phases() {
                lookup[b.id][p.index()] = Some(entries.len());
                entries.push((b.id, p));
            }
        }

        Ok(Self {
            name: name.into(),
            base_kva,
            base_kv,
            taps,
            nodes,
            lines,
            loads,
            ders,
            graph: FeederGraph {
                parent,
                line_into,
                children,
                topo_order,
            },
            index: PhaseIndex { entries, lookup },
        })
    }

    /// Parses and validates a feeder JSON document.
    pub fn from_json(text: &str) -> Result<Self, FeederError> {
        let doc: FeederDoc = serde_json::from_str(text)?;
        doc.into_model()
    }

    pub fn to_doc(&self) -> FeederDoc {
        FeederDoc::from_model(self)
    }

    /// Number of non-root nodes.
    pub fn num_buses(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Per-phase power base in kVA.
    pub fn phase_base_kva(&self) -> f64 {
        self.base_kva / 3.0
    }

    pub fn z_base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv * 1000.0 / self.base_kva
    }

    pub fn line_phases(&self, line: usize) -> PhaseMask {
        self.nodes[self.lines[line].to].phases
    }

    /// Copy with a replaced DER fleet (same validation rules).
    pub fn with_ders(&self, ders: Vec<Der>) -> Result<Self, FeederError> {
        Self::new(
            self.name.clone(),
            self.base_kva,
            self.base_kv,
            self.taps,
            self.nodes.clone(),
            self.lines.clone(),
            self.loads.clone(),
            ders,
        )
    }

    /// Node id carrying `label`.
    pub fn node_by_label(&self, label: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.label.as_deref() == Some(label))
    }

    /// DER index → node-phase index.
    pub fn der_slots(&self) -> Vec<usize> {
        self.ders
            .iter()
            .map(|d| self.index.get(d.node, d.phase).expect("validated attachment"))
            .collect()
    }
}

fn check_attachment(nodes: &[BusNode], what: &str, k: usize, node: usize, phase: Phase) -> Result<(), FeederError> {
    if node >= nodes.len() {
        return Err(FeederError::Dangling {
            node,
            message: format!("{what}[{k}] attached to an undeclared node"),
        });
    }
    if node == 0 {
        return Err(FeederError::schema(
            format!("{what}[{k}].node"),
            "the substation secondary cannot host loads or DERs",
        ));
    }
    if !nodes[node].phases.has(phase) {
        return Err(FeederError::schema(
            format!("{what}[{k}].phase"),
            format!("phase {} not present at node {node}", phase.as_char()),
        ));
    }
    Ok(())
}

/// Loads and DER availability at one instant, in kW/kvar.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub label: String,
    /// Per node-phase (see [`PhaseIndex`]); capacitors appear as negative q.
    pub load_p_kw: Vec<f64>,
    pub load_q_kvar: Vec<f64>,
    /// Per DER, available generation p̄.
    pub der_avail_kw: Vec<f64>,
}

impl OperatingPoint {
    /// Nameplate loads and full DER availability.
    pub fn nominal(model: &FeederModel) -> Self {
        Self::scaled(model, 1.0, 1.0, "nominal")
    }

    pub fn scaled(model: &FeederModel, load_mult: f64, solar_mult: f64, label: impl Into<String>) -> Self {
        let n = model.index.len();
        let mut load_p_kw = vec![0.0; n];
        let mut load_q_kvar = vec![0.0; n];
        for l in &model.loads {
            let k = model.index.get(l.node, l.phase).expect("validated attachment");
            load_p_kw[k] += load_mult * l.p_kw;
            load_q_kvar[k] += load_mult * l.q_kvar;
        }
        let der_avail_kw = model.ders.iter().map(|d| solar_mult * d.p_rated_kw).collect();
        Self {
            label: label.into(),
            load_p_kw,
            load_q_kvar,
            der_avail_kw,
        }
    }

    pub fn validate(&self, model: &FeederModel) -> Result<(), FeederError> {
        let n = model.index.len();
        if self.load_p_kw.len() != n || self.load_q_kvar.len() != n {
            return Err(FeederError::Dimension(format!("operating point has loads for {} node-phases, model has {n}", self.load_p_kw.len())));
        }
        if self.der_avail_kw.len() != model.ders.len() {
            return Err(FeederError::Dimension(format!(
                "operating point has {} DER availabilities, model has {} DERs",
                self.der_avail_kw.len(),
                model.ders.len()
            )));
        }
        for (k, (&a, d)) in self.der_avail_kw.iter().zip(&model.ders).enumerate() {
            if !(a >= 0.0 && a <= d.p_rated_kw * (1.0 + 1e-12)) {
                return Err(FeederError::schema(format!("der_avail[{k}]"), "must lie in [0, p_rated]"));
            }
        }
        Ok(())
    }

    /// Net per-unit injections (generation − load) for given DER outputs in kW/kvar.
    pub fn injections_pu(&self, model: &FeederModel, der_p_kw: &[f64], der_q_kvar: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let base = model.phase_base_kva();
        let mut p: Vec<f64> = self.load_p_kw.iter().map(|v| -v / base).collect();
        let mut q: Vec<f64> = self.load_q_kvar.iter().map(|v| -v / base).collect();
        for (k, slot) in model.der_slots().into_iter().enumerate() {
            p[slot] += der_p_kw[k] / base;
            q[slot] += der_q_kvar[k] / base;
        }
        (p, q)
    }
}

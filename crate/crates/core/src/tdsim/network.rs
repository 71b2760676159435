//! Transmission network data and topology checks.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::TdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    #[serde(rename = "type")]
    pub bus_type: BusType,
    #[serde(default = "one")]
    pub v_set: f64,
    #[serde(default)]
    pub p_load_mw: f64,
    #[serde(default)]
    pub q_load_mvar: f64,
}

fn one() -> f64 {
    1.0
}

fn in_service() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Total line charging.
    #[serde(default)]
    pub b_pu: f64,
    #[serde(default = "in_service")]
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    pub p_mw: f64,
    pub q_min_mvar: f64,
    pub q_max_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub gens: Vec<Generator>,
}

/// A validated meshed transmission grid. Buses keep their external ids;
/// `index` maps ids to positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionNetwork {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Generator>,
    pub index: BTreeMap<usize, usize>,
    pub slack: usize,
}

impl TransmissionNetwork {
    pub fn from_json(text: &str) -> Result<Self, TdError> {
        let doc: TransmissionDoc = serde_json::from_str(text)?;
        Self::from_doc(doc)
    }

    pub fn from_doc(doc: TransmissionDoc) -> Result<Self, TdError> {
        if !(doc.base_mva > 0.0 && doc.base_mva.is_finite()) {
            return Err(TdError::schema("base_mva", "must be positive"));
        }
        if doc.buses.is_empty() {
            return Err(TdError::schema("buses", "at least one bus required"));
        }
        let mut index = BTreeMap::new();
        for (k, b) in doc.buses.iter().enumerate() {
            if index.insert(b.id, k).is_some() {
                return Err(TdError::schema(format!("buses[{k}].id"), format!("duplicate bus id {}", b.id)));
            }
            if !(b.v_set > 0.0 && b.v_set.is_finite()) {
                return Err(TdError::schema(format!("buses[{k}].v_set"), "must be positive"));
            }
            if !b.p_load_mw.is_finite() || !b.q_load_mvar.is_finite() {
                return Err(TdError::schema(format!("buses[{k}]"), "loads must be finite"));
            }
        }
        let slacks: Vec<usize> = doc.buses.iter().enumerate().filter(|(_, b)| b.bus_type == BusType::Slack).map(|(k, _)| k).collect();
        if slacks.len() != 1 {
            return Err(TdError::schema("buses", format!("exactly one slack bus required, found {}", slacks.len())));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (k, br) in doc.branches.iter().enumerate() {
            if !ids.insert(br.id) {
                return Err(TdError::schema(format!("branches[{k}].id"), format!("duplicate branch id {}", br.id)));
            }
            for end in [br.from, br.to] {
                if !index.contains_key(&end) {
                    return Err(TdError::schema(format!("branches[{k}]"), format!("unknown bus {end}")));
                }
            }
            if br.from == br.to {
                return Err(TdError::schema(format!("branches[{k}]"), "self loop"));
            }
            if !(br.r_pu >= 0.0) || !br.x_pu.is_finite() || br.r_pu == 0.0 && br.x_pu == 0.0 || !br.b_pu.is_finite() {
                return Err(TdError::schema(format!("branches[{k}]"), "needs a non-zero finite impedance"));
            }
        }
        for (k, g) in doc.gens.iter().enumerate() {
            match index.get(&g.bus).map(|&i| doc.buses[i].bus_type) {
                None => return Err(TdError::schema(format!("gens[{k}].bus"), format!("unknown bus {}", g.bus))),
                Some(BusType::Pq) => return Err(TdError::schema(format!("gens[{k}].bus"), "generator on a PQ bus")),
                _ => {}
            }
            if !(g.q_min_mvar <= g.q_max_mvar) {
                return Err(TdError::schema(format!("gens[{k}]"), "q_min_mvar exceeds q_max_mvar"));
            }
        }
        for b in doc.buses.iter().filter(|b| b.bus_type == BusType::Pv) {
            if !doc.gens.iter().any(|g| g.bus == b.id) {
                return Err(TdError::schema(format!("bus {}", b.id), "PV bus without a generator"));
            }
        }
        let net = Self {
            name: doc.name.unwrap_or_else(|| "transmission".into()),
            base_mva: doc.base_mva,
            slack: slacks[0],
            buses: doc.buses,
            branches: doc.branches,
            gens: doc.gens,
            index,
        };
        if let Some(b) = net.unreachable().first() {
            return Err(TdError::Disconnected(net.buses[*b].id));
        }
        Ok(net)
    }

    pub fn to_doc(&self) -> TransmissionDoc {
        TransmissionDoc {
            name: Some(self.name.clone()),
            notes: None,
            base_mva: self.base_mva,
            buses: self.buses.clone(),
            branches: self.branches.clone(),
            gens: self.gens.clone(),
        }
    }

    pub fn bus_pos(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn in_service(&self) -> impl Iterator<Item = &Branch> {
        self.branches.iter().filter(|b| b.status)
    }

    /// Bus positions not reachable from the slack over in-service branches.
    pub fn unreachable(&self) -> Vec<usize> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.in_service() {
            let (i, j) = (self.index[&br.from], self.index[&br.to]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.slack]);
        seen[self.slack] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        (0..n).filter(|&i| !seen[i]).collect()
    }
}

/// Copy of `net` with branch `branch_id` out of service.
pub fn apply_contingency(net: &TransmissionNetwork, branch_id: usize) -> Result<TransmissionNetwork, TdError> {
    let k = net.branches.iter().position(|b| b.id == branch_id).ok_or(TdError::UnknownBranch(branch_id))?;
    if !net.branches[k].status {
        return Err(TdError::BranchOut(branch_id));
    }
    let mut out = net.clone();
    out.branches[k].status = false;
    if let Some(&b) = out.unreachable().first() {
        return Err(TdError::Islanding {
            branch: branch_id,
            bus: out.buses[b].id,
        });
    }
    Ok(out)
}

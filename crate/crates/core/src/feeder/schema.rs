//! Serde mirror of the feeder JSON document.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{BusNode, Der, FeederModel, LineSegment, Load, Phase, PhaseMask, TapSettings};
use crate::error::FeederError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeederDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Free-form provenance text; ignored by the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub base_kva: f64,
    pub base_kv: f64,
    pub substation: SubstationDoc,
    pub nodes: Vec<NodeDoc>,
    pub lines: Vec<LineDoc>,
    #[serde(default)]
    pub loads: Vec<LoadDoc>,
    #[serde(default)]
    pub ders: Vec<DerDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubstationDoc {
    pub tap_step: f64,
    pub max_taps: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDoc {
    pub id: usize,
    pub phases: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineDoc {
    pub from: usize,
    pub to: usize,
    pub r_ohm: [[f64; 3]; 3],
    pub x_ohm: [[f64; 3]; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadDoc {
    pub node: usize,
    pub phase: String,
    pub p_kw: f64,
    pub q_kvar: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerDoc {
    pub id: usize,
    pub node: usize,
    pub phase: String,
    pub p_rated_kw: f64,
    pub s_kva: f64,
}

fn phase(field: String, s: &str) -> Result<Phase, FeederError> {
    Phase::parse(s).ok_or_else(|| FeederError::schema(field, format!("`{s}` is not one of a, b, c")))
}

fn to_matrix(m: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| m[i][j])
}

fn from_matrix(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

impl FeederDoc {
    pub fn into_model(self) -> Result<FeederModel, FeederError> {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(k, n)| {
                PhaseMask::parse(&n.phases)
                    .map(|phases| BusNode {
                        id: n.id,
                        phases,
                        label: n.label.clone(),
                    })
                    .ok_or_else(|| {
                        FeederError::schema(format!("nodes[{k}].phases"), format!("`{}` is not a non-empty subset of \"abc\"", n.phases))
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lines = self
            .lines
            .iter()
            .map(|l| LineSegment {
                from: l.from,
                to: l.to,
                r_ohm: to_matrix(&l.r_ohm),
                x_ohm: to_matrix(&l.x_ohm),
            })
            .collect();
        let loads = self
            .loads
            .iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(Load {
                    node: l.node,
                    phase: phase(format!("loads[{k}].phase"), &l.phase)?,
                    p_kw: l.p_kw,
                    q_kvar: l.q_kvar,
                })
            })
            .collect::<Result<Vec<_>, FeederError>>()?;
        let ders = self
            .ders
            .iter()
            .enumerate()
            .map(|(k, d)| {
                Ok(Der {
                    id: d.id,
                    node: d.node,
                    phase: phase(format!("ders[{k}].phase"), &d.phase)?,
                    p_rated_kw: d.p_rated_kw,
                    s_kva: d.s_kva,
                })
            })
            .collect::<Result<Vec<_>, FeederError>>()?;
        FeederModel::new(
            self.name.unwrap_or_default(),
            self.base_kva,
            self.base_kv,
            TapSettings {
                tap_step: self.substation.tap_step,
                max_taps: self.substation.max_taps,
            },
            nodes,
            lines,
            loads,
            ders,
        )
    }

    pub fn from_model(m: &FeederModel) -> Self {
        Self {
            name: (!m.name.is_empty()).then(|| m.name.clone()),
            notes: None,
            base_kva: m.base_kva,
            base_kv: m.base_kv,
            substation: SubstationDoc {
                tap_step: m.taps.tap_step,
                max_taps: m.taps.max_taps,
            },
            nodes: m
                .nodes
                .iter()
                .map(|n| NodeDoc {
                    id: n.id,
                    phases: n.phases.to_string_lower(),
                    label: n.label.clone(),
                })
                .collect(),
            lines: m
                .lines
                .iter()
                .map(|l| LineDoc {
                    from: l.from,
                    to: l.to,
                    r_ohm: from_matrix(&l.r_ohm),
                    x_ohm: from_matrix(&l.x_ohm),
                })
                .collect(),
            loads: m
                .loads
                .iter()
                .map(|l| LoadDoc {
                    node: l.node,
                    phase: l.phase.as_char().to_string(),
                    p_kw: l.p_kw,
                    q_kvar: l.q_kvar,
                })
                .collect(),
            ders: m
                .ders
                .iter()
                .map(|d| DerDoc {
                    id: d.id,
                    node: d.node,
                    phase: d.phase.as_char().to_string(),
                    p_rated_kw: d.p_rated_kw,
                    s_kva: d.s_kva,
                })
                .collect(),
        }
    }
}

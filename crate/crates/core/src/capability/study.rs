//! Studies built from repeated capability solves: day-ahead surfaces,
//! interconnection-standard options and parameter sweeps.

use rayon::prelude::*;

use super::{curtailment_sweep, CapabilityContext, CapabilityCurve, FlexibilityRange, WorstCaseSpec};
use crate::error::CapabilityError;
use crate::feeder::{Der, FeederModel, OperatingPoint};
use crate::io::ProfileRow;

/// Var headroom every unit must keep, as a share of its kW rating.
pub const IEEE1547_Q_SHARE: f64 = 0.44;
/// Inverter oversize giving that headroom at full output.
pub const IEEE1547_OVERSIZE: f64 = 1.113;

#[derive(Debug, Clone, PartialEq)]
pub struct HourCurve {
    pub hour: usize,
    pub load_mult: f64,
    pub solar_mult: f64,
    pub curve: CapabilityCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayAheadSurface {
    pub hours: Vec<HourCurve>,
}

impl DayAheadSurface {
    pub fn hour(&self, h: usize) -> Option<&HourCurve> {
        self.hours.iter().find(|c| c.hour == h)
    }
}

fn check_profile(profile: &[ProfileRow]) -> Result<(), CapabilityError> {
    for (k, r) in profile.iter().enumerate() {
        if !(0.0..=1.0).contains(&r.load_mult) || !(0.0..=1.0).contains(&r.solar_mult) {
            return Err(CapabilityError::param(format!("profile[{k}]"), "multipliers must lie in [0, 1]"));
        }
        if k > 0 && r.hour <= profile[k - 1].hour {
            return Err(CapabilityError::param(format!("profile[{k}].hour"), "hours must be increasing"));
        }
    }
    Ok(())
}

/// Capability curves at every profile hour, loss constants re-estimated per hour.
pub fn day_ahead_sweep(
    ctx: &CapabilityContext,
    profile: &[ProfileRow],
    grid: &[f64],
    v_tm: f64,
    worst: Option<WorstCaseSpec>,
) -> Result<DayAheadSurface, CapabilityError> {
    check_profile(profile)?;
    let hours = profile
        .par_iter()
        .map(|r| {
            let op = OperatingPoint::scaled(&ctx.model, r.load_mult, r.solar_mult, format!("hour {}", r.hour));
            let hctx = ctx.at(op)?;
            Ok(HourCurve {
                hour: r.hour,
                load_mult: r.load_mult,
                solar_mult: r.solar_mult,
                curve: curtailment_sweep(&hctx, grid, v_tm, worst)?,
            })
        })
        .collect::<Result<Vec<_>, CapabilityError>>()?;
    Ok(DayAheadSurface { hours })
}

/// Two ways to keep 44 % var headroom at every unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ieee1547Scenario {
    /// Inverters sized at their kW rating; each unit curtailed just enough.
    Curtail,
    /// Inverters oversized 1.113×, no curtailment.
    Oversize,
}

/// Smallest curtailment fraction of `avail` keeping headroom on an
/// inverter sized at `p_rated`.
fn curtailment_floor(p_rated: f64, avail: f64) -> f64 {
    if avail <= 0.0 {
        return 0.0;
    }
    let p_max = p_rated * (1.0 - IEEE1547_Q_SHARE * IEEE1547_Q_SHARE).sqrt();
    (1.0 - p_max / avail).max(0.0)
}

/// Every unit can still reach `0.44·p_rated` of var at its real output.
pub fn headroom_ok(ders: &[Der], der_p_kw: &[f64]) -> bool {
    ders.iter()
        .zip(der_p_kw)
        .all(|(d, p)| (d.s_kva * d.s_kva - p * p).max(0.0).sqrt() >= IEEE1547_Q_SHARE * d.p_rated_kw - 1e-9)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioHour {
    pub hour: usize,
    /// Total curtailment applied.
    pub curtailment: f64,
    pub headroom_ok: bool,
    pub curve: CapabilityCurve,
    pub rpfr: Option<FlexibilityRange>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ieee1547Comparison {
    pub curtail: Vec<ScenarioHour>,
    pub oversize: Vec<ScenarioHour>,
}

fn scenario_hour(
    ctx: &CapabilityContext,
    scenario: Ieee1547Scenario,
    row: &ProfileRow,
    curtailment: f64,
    v_tm: f64,
) -> Result<ScenarioHour, CapabilityError> {
    let ratio = match scenario {
        Ieee1547Scenario::Curtail => 1.0,
        Ieee1547Scenario::Oversize => IEEE1547_OVERSIZE,
    };
    let ders: Vec<Der> = ctx
        .model
        .ders
        .iter()
        .map(|d| Der {
            s_kva: ratio * d.p_rated_kw,
            ..d.clone()
        })
        .collect();
    let model = ctx.model.with_ders(ders)?;
    let op = OperatingPoint::scaled(&model, row.load_mult, row.solar_mult, format!("hour {}", row.hour));
    let mut hctx = CapabilityContext::new(model, op)?;
    hctx.limits = ctx.limits;
    hctx.solver = ctx.solver;
    let (floors, total) = match scenario {
        Ieee1547Scenario::Curtail => {
            let f: Vec<f64> = hctx.model.ders.iter().zip(&hctx.op.der_avail_kw).map(|(d, &a)| curtailment_floor(d.p_rated_kw, a)).collect();
            let avail: f64 = hctx.op.der_avail_kw.iter().sum();
            let weighted = if avail > 0.0 {
                f.iter().zip(&hctx.op.der_avail_kw).map(|(f, a)| f * a).sum::<f64>() / avail
            } else {
                0.0
            };
            (f, curtailment.max(weighted).min(1.0))
        }
        Ieee1547Scenario::Oversize => (vec![0.0; hctx.model.ders.len()], curtailment),
    };
    let dispatch_p: Vec<f64> = hctx.op.der_avail_kw.iter().zip(&floors).map(|(a, f)| a * (1.0 - f)).collect();
    let ok = headroom_ok(&hctx.model.ders, &dispatch_p);
    if floors.iter().any(|&f| f > 0.0) {
        hctx.cur_floor = Some(floors);
    }
    let curve = curtailment_sweep(&hctx, &[total], v_tm, None)?;
    let rpfr = curve.points[0].rpfr(curve.q_base);
    Ok(ScenarioHour {
        hour: row.hour,
        curtailment: total,
        headroom_ok: ok,
        curve,
        rpfr,
    })
}

/// One compliance option over the profile rows in `hours` (all rows when empty).
pub fn ieee1547_surface(
    ctx: &CapabilityContext,
    scenario: Ieee1547Scenario,
    profile: &[ProfileRow],
    curtailment: f64,
    v_tm: f64,
    hours: &[usize],
) -> Result<Vec<ScenarioHour>, CapabilityError> {
    check_profile(profile)?;
    profile
        .par_iter()
        .filter(|r| hours.is_empty() || hours.contains(&r.hour))
        .map(|r| scenario_hour(ctx, scenario, r, curtailment, v_tm))
        .collect()
}

/// Both compliance options over the profile rows in `hours` (all rows when empty).
pub fn ieee1547_scenarios(
    ctx: &CapabilityContext,
    profile: &[ProfileRow],
    curtailment: f64,
    v_tm: f64,
    hours: &[usize],
) -> Result<Ieee1547Comparison, CapabilityError> {
    Ok(Ieee1547Comparison {
        curtail: ieee1547_surface(ctx, Ieee1547Scenario::Curtail, profile, curtailment, v_tm, hours)?,
        oversize: ieee1547_surface(ctx, Ieee1547Scenario::Oversize, profile, curtailment, v_tm, hours)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKey {
    Penetration,
    Oversize,
    Placement,
    Vtm,
}

impl SweepKey {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "penetration" => Some(SweepKey::Penetration),
            "oversize" => Some(SweepKey::Oversize),
            "placement" => Some(SweepKey::Placement),
            "vtm" => Some(SweepKey::Vtm),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepKey::Penetration => "penetration",
            SweepKey::Oversize => "oversize",
            SweepKey::Placement => "placement",
            SweepKey::Vtm => "vtm",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub curve: CapabilityCurve,
}

impl SweepRow {
    pub fn rpfr(&self) -> Option<FlexibilityRange> {
        self.curve.points[0].rpfr(self.curve.q_base)
    }
}

fn solar_share(model: &FeederModel, op: &OperatingPoint) -> f64 {
    let rated: f64 = model.ders.iter().map(|d| d.p_rated_kw).sum();
    if rated > 0.0 {
        op.der_avail_kw.iter().sum::<f64>() / rated
    } else {
        0.0
    }
}

/// DER fleet scaled so total rating is `percent` of the operating point's load.
pub fn scale_penetration(model: &FeederModel, op: &OperatingPoint, percent: f64) -> Result<Vec<Der>, CapabilityError> {
    let load: f64 = op.load_p_kw.iter().sum();
    let rated: f64 = model.ders.iter().map(|d| d.p_rated_kw).sum();
    if !(percent >= 0.0) || load <= 0.0 || rated <= 0.0 {
        return Err(CapabilityError::param("penetration", "needs a positive value, load and DER fleet"));
    }
    let f = percent / 100.0 * load / rated;
    Ok(model
        .ders
        .iter()
        .map(|d| Der {
            p_rated_kw: d.p_rated_kw * f,
            s_kva: d.s_kva * f,
            ..d.clone()
        })
        .collect())
}

/// Node labels of the named placement sets of the 37-bus fixture.
fn placement_labels(set: &str) -> Option<Vec<&'static str>> {
    match set {
        "end" => Some(vec!["711", "740", "741"]),
        "middle" => Some(vec!["730"]),
        "beginning" => Some(vec!["701", "702", "713"]),
        _ => None,
    }
}

/// Same total rating and oversize ratio, one unit per phase at the nodes
/// of `set`: `distributed` (every non-root node), a named set (`end`,
/// `middle`, `beginning`) or a `+`-separated list of node labels.
pub fn placement_ders(model: &FeederModel, set: &str) -> Result<Vec<Der>, CapabilityError> {
    let rated: f64 = model.ders.iter().map(|d| d.p_rated_kw).sum();
    let s: f64 = model.ders.iter().map(|d| d.s_kva).sum();
    if rated <= 0.0 {
        return Err(CapabilityError::param("placement", "the feeder has no DER rating to place"));
    }
    let nodes: Vec<usize> = if set == "distributed" {
        (1..model.nodes.len()).collect()
    } else {
        let labels: Vec<String> = match placement_labels(set) {
            Some(l) => l.into_iter().map(String::from).collect(),
            None => set.split('+').map(|s| s.trim().to_string()).collect(),
        };
        labels
            .iter()
            .map(|l| model.node_by_label(l).ok_or_else(|| CapabilityError::param("placement", format!("no node labelled `{l}`"))))
            .collect::<Result<_, _>>()?
    };
    let slots: Vec<(usize, crate::feeder::Phase)> = nodes.iter().flat_map(|&n| model.nodes[n].phases.phases().map(move |p| (n, p))).collect();
    let k = slots.len() as f64;
    Ok(slots
        .into_iter()
        .enumerate()
        .map(|(id, (node, phase))| Der {
            id,
            node,
            phase,
            p_rated_kw: rated / k,
            s_kva: s / k,
        })
        .collect())
}

/// One capability point per parameter value at total curtailment `curtailment`.
pub fn parameter_sweep(ctx: &CapabilityContext, key: SweepKey, values: &[String], curtailment: f64, v_tm: f64) -> Result<Vec<SweepRow>, CapabilityError> {
    let share = solar_share(&ctx.model, &ctx.op);
    let with_ders = |ders: Vec<Der>| -> Result<CapabilityContext, CapabilityError> {
        let model = ctx.model.with_ders(ders)?;
        let op = OperatingPoint {
            der_avail_kw: model.ders.iter().map(|d| share * d.p_rated_kw).collect(),
            ..ctx.op.clone()
        };
        let mut c = CapabilityContext::new(model, op)?;
        c.limits = ctx.limits;
        c.solver = ctx.solver;
        Ok(c)
    };
    let num = |v: &String| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| CapabilityError::param(key.as_str(), format!("`{v}` is not a number")))
    };
    values
        .par_iter()
        .map(|v| {
            let (c, vt) = match key {
                SweepKey::Penetration => (with_ders(scale_penetration(&ctx.model, &ctx.op, num(v)?)?)?, v_tm),
                SweepKey::Oversize => {
                    let r = num(v)?;
                    if !(r > 0.0) {
                        return Err(CapabilityError::param("oversize", "must be positive"));
                    }
                    let ders = ctx.model.ders.iter().map(|d| Der { s_kva: r * d.p_rated_kw, ..d.clone() }).collect();
                    (with_ders(ders)?, v_tm)
                }
                SweepKey::Placement => (with_ders(placement_ders(&ctx.model, v.trim())?)?, v_tm),
                SweepKey::Vtm => (ctx.clone(), num(v)?),
            };
            Ok(SweepRow {
                value: v.trim().to_string(),
                curve: curtailment_sweep(&c, &[curtailment], vt, None)?,
            })
        })
        .collect()
}

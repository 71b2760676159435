//! Network-free DER flexibility: per-inverter var limits and the aggregate
//! P-Q envelope of a fleet.

use dercap_conic::{solve, ConicProblem, LinExpr, SolverOptions, Status};

use crate::error::AggError;
use crate::feeder::{Der, Phase};

#[derive(Debug, Clone, PartialEq)]
pub struct DerUnit {
    pub id: usize,
    pub node: usize,
    pub phase: Phase,
    pub s_kva: f64,
    pub p_rated_kw: f64,
    pub p_avail_kw: f64,
}

impl DerUnit {
    pub fn new(s_kva: f64, p_rated_kw: f64, p_avail_kw: f64) -> Self {
        Self {
            id: 0,
            node: 0,
            phase: Phase::A,
            s_kva,
            p_rated_kw,
            p_avail_kw,
        }
    }

    pub fn from_der(d: &Der, p_avail_kw: f64) -> Self {
        Self {
            id: d.id,
            node: d.node,
            phase: d.phase,
            s_kva: d.s_kva,
            p_rated_kw: d.p_rated_kw,
            p_avail_kw,
        }
    }

    fn validate(&self, k: usize) -> Result<(), AggError> {
        let bad = |m: &str| AggError::InvalidUnit {
            unit: k,
            message: m.to_string(),
        };
        if !(self.s_kva > 0.0) {
            return Err(bad("s_kva must be positive"));
        }
        if !(self.p_avail_kw >= 0.0 && self.p_avail_kw <= self.p_rated_kw * (1.0 + 1e-12)) {
            return Err(bad("p_avail must lie in [0, p_rated]"));
        }
        Ok(())
    }
}

fn validate_all(units: &[DerUnit]) -> Result<(), AggError> {
    units.iter().enumerate().try_for_each(|(k, u)| u.validate(k))
}

/// Var limits of one inverter at real output `p_gen`: `±sqrt(S² − p²)`.
pub fn device_q_bounds(unit: &DerUnit, p_gen: f64) -> Result<(f64, f64), AggError> {
    if !(p_gen >= 0.0 && p_gen <= unit.p_avail_kw * (1.0 + 1e-12)) {
        return Err(AggError::ExceedsAvailability {
            unit: unit.id,
            p_gen,
            p_avail: unit.p_avail_kw,
        });
    }
    let q = (unit.s_kva * unit.s_kva - p_gen * p_gen).max(0.0).sqrt();
    Ok((-q, q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub p_kw: Vec<f64>,
    /// At least one unit was clamped at its availability.
    pub saturated: bool,
}

fn check_total(units: &[DerUnit], p_sub: f64) -> Result<f64, AggError> {
    let available: f64 = units.iter().map(|u| u.p_avail_kw).sum();
    if !(p_sub >= 0.0) || p_sub > available * (1.0 + 1e-12) + 1e-12 {
        return Err(AggError::InfeasibleTotal {
            requested: p_sub,
            available,
        });
    }
    Ok(available)
}

/// Splits `p_sub` in proportion to inverter ratings; units whose share
/// exceeds availability are clamped and the remainder is re-split among the
/// others until no share exceeds availability.
pub fn proportional_allocation(units: &[DerUnit], p_sub: f64) -> Result<Allocation, AggError> {
    validate_all(units)?;
    check_total(units, p_sub)?;
    let n = units.len();
    let mut p = vec![0.0; n];
    let mut clamped = vec![false; n];
    let mut saturated = false;
    loop {
        let rest = p_sub - (0..n).filter(|&i| clamped[i]).map(|i| p[i]).sum::<f64>();
        let s_free: f64 = (0..n).filter(|&i| !clamped[i]).map(|i| units[i].s_kva).sum();
        if s_free <= 0.0 {
            break;
        }
        let mut changed = false;
        for i in (0..n).filter(|&i| !clamped[i]) {
            p[i] = units[i].s_kva / s_free * rest.max(0.0);
        }
        for i in 0..n {
            if !clamped[i] && p[i] > units[i].p_avail_kw {
                p[i] = units[i].p_avail_kw;
                clamped[i] = true;
                changed = true;
                saturated = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(Allocation { p_kw: p, saturated })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeValue {
    pub q_min: f64,
    pub q_max: f64,
    /// The closed form did not apply and the value came from the numeric solve.
    pub numeric_fallback: bool,
}

/// `±sqrt((ΣS)² − p_sub²)` when the proportional split is unsaturated,
/// otherwise the numeric envelope.
pub fn analytic_envelope(units: &[DerUnit], p_sub: f64) -> Result<EnvelopeValue, AggError> {
    let alloc = proportional_allocation(units, p_sub)?;
    if alloc.saturated {
        let (q_min, q_max) = numeric_envelope(units, p_sub)?;
        return Ok(EnvelopeValue {
            q_min,
            q_max,
            numeric_fallback: true,
        });
    }
    let s: f64 = units.iter().map(|u| u.s_kva).sum();
    let q = (s * s - p_sub * p_sub).max(0.0).sqrt();
    Ok(EnvelopeValue {
        q_min: -q,
        q_max: q,
        numeric_fallback: false,
    })
}

/// The cone program behind one side of [`numeric_envelope`]: `sign = 1` minimises
/// aggregate var, `-1` maximises it. Powers are scaled by the largest rating.
pub fn envelope_problem(units: &[DerUnit], p_sub: f64, sign: f64) -> ConicProblem {
    let mut prob = ConicProblem::new();
    let scale = units.iter().map(|u| u.s_kva).fold(0.0, f64::max).max(1e-12);
    let mut ps = Vec::with_capacity(units.len());
    for (k, u) in units.iter().enumerate() {
        let p = prob.add_var(format!("p{k}"), 0.0, u.p_avail_kw / scale, 0.0);
        let q = prob.add_free_var(format!("q{k}"), sign);
        prob.add_soc(LinExpr::constant(u.s_kva / scale), vec![LinExpr::var(p), LinExpr::var(q)]);
        ps.push((p, 1.0));
    }
    prob.add_eq(ps, p_sub / scale);
    prob
}

/// Extreme aggregate var at total real output `p_sub`, by convex optimisation
/// over all splits with `0 ≤ p_i ≤ p_avail_i`.
pub fn numeric_envelope(units: &[DerUnit], p_sub: f64) -> Result<(f64, f64), AggError> {
    validate_all(units)?;
    check_total(units, p_sub)?;
    if units.is_empty() {
        return Ok((0.0, 0.0));
    }
    let scale = units.iter().map(|u| u.s_kva).fold(0.0, f64::max).max(1e-12);
    let mut out = [0.0; 2];
    for (slot, sign) in [(0, 1.0), (1, -1.0)] {
        let prob = envelope_problem(units, p_sub, sign);
        let sol = solve(&prob, &SolverOptions::default()).map_err(|e| AggError::Solver(e.to_string()))?;
        if sol.status != Status::Optimal {
            return Err(AggError::Solver(sol.status.to_string()));
        }
        out[slot] = sign * sol.objective * scale;
    }
    Ok((out[0], out[1]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSample {
    pub p_kw: f64,
    pub q_min_kvar: f64,
    pub q_max_kvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateEnvelope {
    pub samples: Vec<EnvelopeSample>,
}

pub const DEFAULT_ENVELOPE_POINTS: usize = 101;

impl AggregateEnvelope {
    /// Samples `points` evenly spaced totals on `[0, Σ p_avail]`.
    pub fn sample(units: &[DerUnit], points: usize) -> Result<Self, AggError> {
        validate_all(units)?;
        let total: f64 = units.iter().map(|u| u.p_avail_kw).sum();
        let points = points.max(2);
        let samples = (0..points)
            .map(|k| {
                let p = total * k as f64 / (points - 1) as f64;
                let v = analytic_envelope(units, p.min(total))?;
                Ok(EnvelopeSample {
                    p_kw: p,
                    q_min_kvar: v.q_min,
                    q_max_kvar: v.q_max,
                })
            })
            .collect::<Result<Vec<_>, AggError>>()?;
        Ok(Self { samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn units(s: &[f64], avail: &[f64]) -> Vec<DerUnit> {
        s.iter().zip(avail).map(|(&s, &a)| DerUnit::new(s, a, a)).collect()
    }

    #[test]
    fn device_bounds_examples() {
        assert_eq!(device_q_bounds(&DerUnit::new(10.0, 10.0, 10.0), 10.0).unwrap(), (0.0, 0.0));
        assert_eq!(device_q_bounds(&DerUnit::new(10.0, 10.0, 10.0), 0.0).unwrap(), (-10.0, 10.0));
        let (lo, hi) = device_q_bounds(&DerUnit::new(5.0, 3.0, 3.0), 3.0).unwrap();
        assert!((hi - 4.0).abs() < 1e-12 && (lo + 4.0).abs() < 1e-12);
        assert!(device_q_bounds(&DerUnit::new(5.0, 3.0, 2.0), 3.0).is_err());
    }

    #[test]
    fn allocation_examples() {
        let a = proportional_allocation(&units(&[6.0, 4.0], &[6.0, 4.0]), 5.0).unwrap();
        assert!((a.p_kw[0] - 3.0).abs() < 1e-12 && (a.p_kw[1] - 2.0).abs() < 1e-12);
        assert!(!a.saturated);
        let a = proportional_allocation(&units(&[6.0, 4.0], &[2.0, 4.0]), 5.0).unwrap();
        assert!((a.p_kw[0] - 2.0).abs() < 1e-12 && (a.p_kw[1] - 3.0).abs() < 1e-12);
        assert!(a.saturated);
        let a = proportional_allocation(&units(&[6.0, 4.0], &[6.0, 4.0]), 0.0).unwrap();
        assert_eq!(a.p_kw, vec![0.0, 0.0]);
        assert!(matches!(
            proportional_allocation(&units(&[6.0, 4.0], &[2.0, 2.0]), 5.0),
            Err(AggError::InfeasibleTotal { .. })
        ));
    }

    #[test]
    fn analytic_examples() {
        let u = units(&[50.0, 50.0], &[50.0, 50.0]);
        assert!((analytic_envelope(&u, 60.0).unwrap().q_max - 80.0).abs() < 1e-12);
        assert!((analytic_envelope(&u, 0.0).unwrap().q_max - 100.0).abs() < 1e-12);
        assert!(analytic_envelope(&u, 100.0).unwrap().q_max.abs() < 1e-12);
    }

    #[test]
    fn saturated_split_falls_back() {
        let v = analytic_envelope(&units(&[6.0, 4.0], &[2.0, 4.0]), 5.0).unwrap();
        assert!(v.numeric_fallback);
        let expect = 32f64.sqrt() + 7f64.sqrt();
        assert!((v.q_max - expect).abs() < 1e-6);
    }

    #[test]
    fn envelope_grid_shape() {
        let env = AggregateEnvelope::sample(&units(&[5.0, 5.0, 5.0], &[4.0, 4.0, 4.0]), DEFAULT_ENVELOPE_POINTS).unwrap();
        assert_eq!(env.samples.len(), 101);
        assert_eq!(env.samples[0].q_max_kvar, 15.0);
        assert!((env.samples[100].p_kw - 12.0).abs() < 1e-12);
    }
}

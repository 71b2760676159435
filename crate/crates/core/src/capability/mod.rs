//! Aggregated net var capability of a feeder versus DER curtailment.

mod opf;
mod study;

pub use opf::{build_der_opf, solve_der_opf, DerOpf, Dispatch, OpfObjective, OpfOutcome};
pub use study::{
    day_ahead_sweep, headroom_ok, ieee1547_scenarios, ieee1547_surface, parameter_sweep, placement_ders, scale_penetration, DayAheadSurface, HourCurve,
    Ieee1547Comparison, Ieee1547Scenario, ScenarioHour, SweepKey, SweepRow, IEEE1547_OVERSIZE, IEEE1547_Q_SHARE,
};

use dercap_conic::{CertificateCheck, KktResiduals, SolverOptions, Status};
use rayon::prelude::*;

use crate::error::CapabilityError;
use crate::feeder::{base_point_voltages, estimate_loss_constants, evaluate, FeederModel, FeederSensitivities, OperatingPoint, TapSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Least net var demand (DERs inject).
    Capacitive,
    /// Largest net var demand (DERs absorb).
    Inductive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageLimits {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        Self { v_min: 0.95, v_max: 1.05 }
    }
}

/// Solver verdict plus independently recomputed optimality or
/// infeasibility evidence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub status: Status,
    pub iterations: usize,
    /// `check_kkt` on the returned point, when optimal.
    pub residuals: Option<KktResiduals>,
    /// `check_certificate` on the returned ray, when one exists.
    pub certificate: Option<CertificateCheck>,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Optimal points pass the KKT check, infeasible verdicts carry a sound certificate.
    pub fn healthy(&self, tol: f64) -> bool {
        match self.status {
            Status::Optimal => self.residuals.is_some_and(|r| r.within(tol)),
            Status::Infeasible | Status::Unbounded => self.certificate.is_some_and(|c| c.sound(tol)),
            Status::MaxIterations => false,
        }
    }
}

/// Feeder, operating point and linear model shared by every solve of a study.
#[derive(Debug, Clone)]
pub struct CapabilityContext {
    pub model: FeederModel,
    pub sens: FeederSensitivities,
    pub op: OperatingPoint,
    pub limits: VoltageLimits,
    pub solver: SolverOptions,
    /// Per-DER lower bound on the curtailment fraction.
    pub cur_floor: Option<Vec<f64>>,
    /// Per-DER bound on |q| in kvar.
    pub q_cap_kvar: Option<Vec<f64>>,
}

impl CapabilityContext {
    /// Builds sensitivities and freezes loss constants at `op`.
    pub fn new(model: FeederModel, op: OperatingPoint) -> Result<Self, CapabilityError> {
        op.validate(&model)?;
        let sens = loss_point(&model, &op);
        Ok(Self {
            model,
            sens,
            op,
            limits: VoltageLimits::default(),
            solver: SolverOptions::default(),
            cur_floor: None,
            q_cap_kvar: None,
        })
    }

    /// Same feeder and linear model at another operating point (loss
    /// constants re-estimated).
    pub fn at(&self, op: OperatingPoint) -> Result<Self, CapabilityError> {
        op.validate(&self.model)?;
        Ok(Self {
            sens: loss_point(&self.model, &op),
            op,
            ..self.clone()
        })
    }

    /// Base demand with unity-power-factor DERs, no curtailment and the tap
    /// set for `v0 = 1` (within range), in kvar.
    pub fn q_base(&self, v_tm: f64) -> Result<f64, CapabilityError> {
        let v0 = v_tm * self.model.taps.clamp_ratio(1.0 / v_tm);
        let st = evaluate(&self.model, &self.sens, &self.op, &self.op.der_avail_kw, &vec![0.0; self.model.ders.len()], v0)?;
        Ok(st.q_net_kvar)
    }
}

/// Sensitivities with loss constants and loss denominators frozen at `op`.
fn loss_point(model: &FeederModel, op: &OperatingPoint) -> FeederSensitivities {
    let sens = FeederSensitivities::compute(model);
    let (lp, lq) = estimate_loss_constants(model, &sens, op);
    let y = base_point_voltages(model, &sens, op);
    sens.with_loss_constants(lp, lq).with_loss_voltages(y)
}

/// One side of the capability at one curtailment level.
#[derive(Debug, Clone, PartialEq)]
pub struct CapabilitySide {
    pub report: SolveReport,
    pub dispatch: Option<Dispatch>,
}

impl CapabilitySide {
    pub fn feasible(&self) -> bool {
        self.dispatch.is_some()
    }

    pub fn q_kvar(&self) -> Option<f64> {
        self.dispatch.as_ref().map(|d| d.q_net_kvar)
    }

    pub fn v0(&self) -> Option<f64> {
        self.dispatch.as_ref().map(|d| d.v0)
    }
}

fn capability_side(ctx: &CapabilityContext, curtailment: f64, v_tm: f64, dir: Direction) -> Result<CapabilitySide, CapabilityError> {
    let opf = build_der_opf(ctx, curtailment, v_tm, OpfObjective::NetVar(dir))?;
    let out = solve_der_opf(ctx, &opf)?;
    Ok(CapabilitySide {
        report: out.report,
        dispatch: out.dispatch,
    })
}

/// Least net var demand reachable (capacitive bound), losses included.
pub fn capacitive_capability(ctx: &CapabilityContext, curtailment: f64, v_tm: f64) -> Result<CapabilitySide, CapabilityError> {
    capability_side(ctx, curtailment, v_tm, Direction::Capacitive)
}

/// Largest net var demand reachable (inductive bound): solved without
/// losses, reported with losses at the solved dispatch.
pub fn inductive_capability(ctx: &CapabilityContext, curtailment: f64, v_tm: f64) -> Result<CapabilitySide, CapabilityError> {
    capability_side(ctx, curtailment, v_tm, Direction::Inductive)
}

/// Grid-side voltages for which the tap can still realise `v0*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecouplingRange {
    pub lo: f64,
    pub hi: f64,
}

impl DecouplingRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

pub fn decoupling_range(v0_star: f64, taps: &TapSettings) -> Result<DecouplingRange, CapabilityError> {
    if !(v0_star > 0.0) {
        return Err(CapabilityError::param("v0_star", "must be positive"));
    }
    Ok(DecouplingRange {
        lo: v0_star / taps.r_max(),
        hi: v0_star / taps.r_min(),
    })
}

/// Re-solves at the extreme grid-side voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    /// Min problem at `v_tm_max`.
    pub lower: CapabilitySide,
    /// Max problem at `v_tm_min`.
    pub upper: CapabilitySide,
    pub v_tm_min: f64,
    pub v_tm_max: f64,
}

pub fn worst_case_bounds(ctx: &CapabilityContext, curtailment: f64, v_tm_min: f64, v_tm_max: f64) -> Result<WorstCase, CapabilityError> {
    if !(v_tm_min <= v_tm_max) {
        return Err(CapabilityError::param("v_tm_min", "must not exceed v_tm_max"));
    }
    Ok(WorstCase {
        lower: capacitive_capability(ctx, curtailment, v_tm_max)?,
        upper: inductive_capability(ctx, curtailment, v_tm_min)?,
        v_tm_min,
        v_tm_max,
    })
}

/// Nominal bounds with the worst-case adjustment selected by where the
/// extreme grid voltages fall relative to the decoupling ranges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapabilityInterval {
    pub nominal: (f64, f64),
    /// Shift of the lower bound; `None` when the worst-case solve is infeasible.
    pub eps_lower: Option<f64>,
    pub eps_upper: Option<f64>,
    /// Decoupling range of the min problem.
    pub d_lower: DecouplingRange,
    /// Decoupling range of the max problem.
    pub d_upper: DecouplingRange,
    /// `(q_lower − ε_lower, q_upper − ε_upper)`; `None` sides are infeasible.
    pub worst_case: (Option<f64>, Option<f64>),
    /// 1: nominal, 2: lower shifted, 3: upper shifted, 4: both shifted.
    pub case_id: u8,
    /// Interval offered to the transmission operator under `case_id`.
    pub offered: (Option<f64>, Option<f64>),
}

/// Combines nominal bounds and worst-case re-solves. A worst-case bound never
/// extends the nominal one: the less favourable of the two is kept.
pub fn capability_interval(
    nominal: (f64, f64),
    v0_star: (f64, f64),
    worst: (Option<f64>, Option<f64>),
    taps: &TapSettings,
    v_tm_min: f64,
    v_tm_max: f64,
) -> Result<CapabilityInterval, CapabilityError> {
    let d_lower = decoupling_range(v0_star.0, taps)?;
    let d_upper = decoupling_range(v0_star.1, taps)?;
    let wl = worst.0.map(|w| w.max(nominal.0));
    let wu = worst.1.map(|w| w.min(nominal.1));
    let eps_lower = wl.map(|w| nominal.0 - w);
    let eps_upper = wu.map(|w| nominal.1 - w);
    let lower_ok = d_lower.contains(v_tm_max);
    let upper_ok = d_upper.contains(v_tm_min);
    let case_id = match (lower_ok, upper_ok) {
        (true, true) => 1,
        (false, true) => 2,
        (true, false) => 3,
        (false, false) => 4,
    };
    let offered = (
        if lower_ok { Some(nominal.0) } else { wl },
        if upper_ok { Some(nominal.1) } else { wu },
    );
    Ok(CapabilityInterval {
        nominal,
        eps_lower,
        eps_upper,
        d_lower,
        d_upper,
        worst_case: (wl, wu),
        case_id,
        offered,
    })
}

/// Normalised flexibility `[a, b]` around the base demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlexibilityRange {
    pub a: f64,
    pub b: f64,
    pub q_base: f64,
}

pub fn rpfr(q_lower: f64, q_upper: f64, q_base: f64) -> Result<FlexibilityRange, CapabilityError> {
    if q_base == 0.0 || !q_base.is_finite() {
        return Err(CapabilityError::ZeroBase);
    }
    Ok(FlexibilityRange {
        a: (q_lower - q_base) / q_base,
        b: (q_upper - q_base) / q_base,
        q_base,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityPoint {
    pub curtailment: f64,
    pub lower: CapabilitySide,
    pub upper: CapabilitySide,
    pub worst: Option<WorstCase>,
    pub interval: Option<CapabilityInterval>,
}

impl CapabilityPoint {
    pub fn q_lower(&self) -> Option<f64> {
        self.lower.q_kvar()
    }

    pub fn q_upper(&self) -> Option<f64> {
        self.upper.q_kvar()
    }

    pub fn rpfr(&self, q_base: f64) -> Option<FlexibilityRange> {
        rpfr(self.q_lower()?, self.q_upper()?, q_base).ok()
    }

    /// Worst-case interval as normalised flexibility.
    pub fn worst_rpfr(&self, q_base: f64) -> Option<FlexibilityRange> {
        let iv = self.interval.as_ref()?;
        rpfr(iv.worst_case.0?, iv.worst_case.1?, q_base).ok()
    }

    /// All solve reports of this point.
    pub fn reports(&self) -> Vec<SolveReport> {
        let mut r = vec![self.lower.report, self.upper.report];
        if let Some(w) = &self.worst {
            r.push(w.lower.report);
            r.push(w.upper.report);
        }
        r
    }

    pub fn all_feasible(&self) -> bool {
        self.lower.feasible()
            && self.upper.feasible()
            && self.worst.as_ref().map_or(true, |w| w.lower.feasible() && w.upper.feasible())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseSpec {
    pub v_tm_min: f64,
    pub v_tm_max: f64,
}

impl Default for WorstCaseSpec {
    fn default() -> Self {
        Self { v_tm_min: 0.9, v_tm_max: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapabilityCurve {
    pub label: String,
    pub v_tm: f64,
    pub q_base: f64,
    pub points: Vec<CapabilityPoint>,
}

/// `{0, 0.05, …, 1}`.
pub fn default_curtailment_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

pub fn capability_point(ctx: &CapabilityContext, curtailment: f64, v_tm: f64, worst: Option<WorstCaseSpec>) -> Result<CapabilityPoint, CapabilityError> {
    let lower = capacitive_capability(ctx, curtailment, v_tm)?;
    let upper = inductive_capability(ctx, curtailment, v_tm)?;
    let (worst, interval) = match worst {
        Some(w) => {
            let wc = worst_case_bounds(ctx, curtailment, w.v_tm_min, w.v_tm_max)?;
            let interval = match (lower.dispatch.as_ref(), upper.dispatch.as_ref()) {
                (Some(l), Some(u)) => Some(capability_interval(
                    (l.q_net_kvar, u.q_net_kvar),
                    (l.v0, u.v0),
                    (wc.lower.q_kvar(), wc.upper.q_kvar()),
                    &ctx.model.taps,
                    w.v_tm_min,
                    w.v_tm_max,
                )?),
                _ => None,
            };
            (Some(wc), interval)
        }
        None => (None, None),
    };
    Ok(CapabilityPoint {
        curtailment,
        lower,
        upper,
        worst,
        interval,
    })
}

/// One capability point per grid value, solved in parallel.
pub fn curtailment_sweep(ctx: &CapabilityContext, grid: &[f64], v_tm: f64, worst: Option<WorstCaseSpec>) -> Result<CapabilityCurve, CapabilityError> {
    if let Some(bad) = grid.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(CapabilityError::param("curtailment", format!("{bad} outside [0, 1]")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CapabilityError::param("curtailment", "grid must be strictly increasing"));
    }
    let points = grid
        .par_iter()
        .map(|&c| capability_point(ctx, c, v_tm, worst))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CapabilityCurve {
        label: ctx.op.label.clone(),
        v_tm,
        q_base: ctx.q_base(v_tm)?,
        points,
    })
}

/// The least-curtailment solve behind [`var_support_dispatch`], report included.
pub fn var_support_solve(ctx: &CapabilityContext, requested_kvar: f64, curtailment_cap: f64, v_tm: f64) -> Result<OpfOutcome, CapabilityError> {
    let opf = build_der_opf(
        ctx,
        0.0,
        v_tm,
        OpfObjective::MinCurtailment {
            target_kvar: requested_kvar,
            cap: curtailment_cap,
        },
    )?;
    solve_der_opf(ctx, &opf)
}

/// Dispatch reaching net var `requested_kvar` with the least total
/// curtailment, at most `curtailment_cap`.
pub fn var_support_dispatch(ctx: &CapabilityContext, requested_kvar: f64, curtailment_cap: f64, v_tm: f64) -> Result<Dispatch, CapabilityError> {
    let out = var_support_solve(ctx, requested_kvar, curtailment_cap, v_tm)?;
    if let Some(d) = out.dispatch {
        return Ok(d);
    }
    let nearest = nearest_supportable(ctx, requested_kvar, curtailment_cap, v_tm)?;
    Err(CapabilityError::OutsideCapability {
        requested: requested_kvar,
        nearest,
    })
}

/// Closest net var to `requested` reachable with curtailment up to `cap`,
/// in the frozen-loss metric used by [`var_support_dispatch`].
fn nearest_supportable(ctx: &CapabilityContext, requested: f64, cap: f64, v_tm: f64) -> Result<f64, CapabilityError> {
    let base = ctx.model.phase_base_kva();
    let fixed = ctx.op.load_q_kvar.iter().sum::<f64>() + ctx.sens.l_q.iter().sum::<f64>() * base;
    let mut best: Option<f64> = None;
    for dir in [Direction::Capacitive, Direction::Inductive] {
        let mut opf = build_der_opf(ctx, 0.0, v_tm, OpfObjective::MinCurtailment { target_kvar: 0.0, cap })?;
        // Swap the target equality for an objective on Σq.
        opf.problem.eqs.pop();
        let cost = if dir == Direction::Capacitive { -1.0 } else { 1.0 };
        for v in opf.cur.iter() {
            opf.problem.c[v.0] = 0.0;
        }
        for v in opf.q.iter() {
            opf.problem.c[v.0] = cost;
        }
        let out = solve_der_opf(ctx, &opf)?;
        if let Some(d) = out.dispatch {
            let q = fixed - d.der_q_kvar.iter().sum::<f64>();
            best = Some(match best {
                None => q,
                Some(b) => {
                    if (q - requested).abs() < (b - requested).abs() {
                        q
                    } else {
                        b
                    }
                }
            });
        }
    }
    best.ok_or_else(|| CapabilityError::param("curtailment_cap", "no feasible dispatch at this grid voltage"))
}

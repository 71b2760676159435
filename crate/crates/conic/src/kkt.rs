//! Independent KKT verification.
//!
//! Everything here works directly on the user-facing [`ConicProblem`] and
//! [`Duals`]; nothing is shared with the solver's internal standard form.

use crate::cones::norm;
use crate::problem::ConicProblem;
use crate::solution::{Certificate, ConicSolution, Duals, KktResiduals};

/// `c + Aᵀy + Gᵀz` expressed in the original constraint layout.
pub fn stationarity(p: &ConicProblem, d: &Duals, include_cost: bool) -> Vec<f64> {
    let mut r = if include_cost {
        p.c.clone()
    } else {
        vec![0.0; p.num_vars()]
    };
    for (row, &y) in p.eqs.iter().zip(&d.eq) {
        for &(i, a) in &row.terms {
            r[i] += a * y;
        }
    }
    for (k, row) in p.rows.iter().enumerate() {
        let w = d.row_hi[k] - d.row_lo[k];
        if w != 0.0 {
            for &(i, a) in &row.terms {
                r[i] += a * w;
            }
        }
    }
    for i in 0..p.num_vars() {
        r[i] += d.box_hi[i] - d.box_lo[i];
    }
    for (cone, z) in p.cones.iter().zip(&d.cones) {
        for &(i, a) in &cone.t.terms {
            r[i] -= a * z[0];
        }
        for (e, zj) in cone.u.iter().zip(&z[1..]) {
            for &(i, a) in &e.terms {
                r[i] -= a * zj;
            }
        }
    }
    r
}

/// `bᵀy + hᵀz`, skipping multipliers of infinite bounds.
pub fn dual_rhs(p: &ConicProblem, d: &Duals) -> f64 {
    let mut v = 0.0;
    for (row, &y) in p.eqs.iter().zip(&d.eq) {
        v += row.rhs * y;
    }
    for (k, row) in p.rows.iter().enumerate() {
        if row.hi.is_finite() {
            v += row.hi * d.row_hi[k];
        }
        if row.lo.is_finite() {
            v -= row.lo * d.row_lo[k];
        }
    }
    for i in 0..p.num_vars() {
        if p.upper[i].is_finite() {
            v += p.upper[i] * d.box_hi[i];
        }
        if p.lower[i].is_finite() {
            v -= p.lower[i] * d.box_lo[i];
        }
    }
    for (cone, z) in p.cones.iter().zip(&d.cones) {
        v += cone.t.constant * z[0];
        for (e, zj) in cone.u.iter().zip(&z[1..]) {
            v += e.constant * zj;
        }
    }
    v
}

/// Largest violation of `z ∈ K*` (non-negativity and Lorentz membership).
pub fn dual_cone_violation(p: &ConicProblem, d: &Duals) -> f64 {
    let mut v = 0.0_f64;
    for k in 0..p.rows.len() {
        v = v.max(-d.row_lo[k]).max(-d.row_hi[k]);
        if !p.rows[k].lo.is_finite() {
            v = v.max(d.row_lo[k].abs());
        }
        if !p.rows[k].hi.is_finite() {
            v = v.max(d.row_hi[k].abs());
        }
    }
    for i in 0..p.num_vars() {
        v = v.max(-d.box_lo[i]).max(-d.box_hi[i]);
        if !p.lower[i].is_finite() {
            v = v.max(d.box_lo[i].abs());
        }
        if !p.upper[i].is_finite() {
            v = v.max(d.box_hi[i].abs());
        }
    }
    for z in &d.cones {
        v = v.max(norm(&z[1..]) - z[0]);
    }
    v
}

/// Recomputes primal feasibility, stationarity and complementarity of
/// `(x, duals)` from the problem data alone.
///
/// * `primal`: worst constraint violation, each divided by `1 + |rhs|`.
/// * `dual`: `‖c + Aᵀy + Gᵀz‖∞ / (1 + ‖c‖∞)`, or the dual-cone violation if larger.
/// * `gap`: `max(|pcost − dcost|, Σ|zᵀs|) / (1 + |pcost|)`.
pub fn check_kkt(p: &ConicProblem, sol: &ConicSolution) -> KktResiduals {
    kkt_residuals(p, &sol.x, &sol.duals)
}

pub fn kkt_residuals(p: &ConicProblem, x: &[f64], d: &Duals) -> KktResiduals {
    let mut primal = 0.0_f64;
    let mut compl = 0.0_f64;
    for row in &p.eqs {
        let ax: f64 = row.terms.iter().map(|&(i, a)| a * x[i]).sum();
        primal = primal.max((ax - row.rhs).abs() / (1.0 + row.rhs.abs()));
    }
    for (k, row) in p.rows.iter().enumerate() {
        let gx: f64 = row.terms.iter().map(|&(i, a)| a * x[i]).sum();
        if row.hi.is_finite() {
            primal = primal.max((gx - row.hi).max(0.0) / (1.0 + row.hi.abs()));
            compl += (d.row_hi[k] * (row.hi - gx)).abs();
        }
        if row.lo.is_finite() {
            primal = primal.max((row.lo - gx).max(0.0) / (1.0 + row.lo.abs()));
            compl += (d.row_lo[k] * (gx - row.lo)).abs();
        }
    }
    for i in 0..p.num_vars() {
        if p.upper[i].is_finite() {
            primal = primal.max((x[i] - p.upper[i]).max(0.0) / (1.0 + p.upper[i].abs()));
            compl += (d.box_hi[i] * (p.upper[i] - x[i])).abs();
        }
        if p.lower[i].is_finite() {
            primal = primal.max((p.lower[i] - x[i]).max(0.0) / (1.0 + p.lower[i].abs()));
            compl += (d.box_lo[i] * (x[i] - p.lower[i])).abs();
        }
    }
    for (cone, z) in p.cones.iter().zip(&d.cones) {
        let t = cone.t.eval(x);
        let u: Vec<f64> = cone.u.iter().map(|e| e.eval(x)).collect();
        let scale = 1.0 + cone.t.constant.abs();
        primal = primal.max((norm(&u) - t).max(0.0) / scale);
        let zs = z[0] * t + z[1..].iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        compl += zs.abs();
    }

    let st = stationarity(p, d, true);
    let cnorm = p.c.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let snorm = st.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let dual = (snorm / (1.0 + cnorm)).max(dual_cone_violation(p, d));

    let pcost = p.objective(x);
    let dcost = p.c0 - dual_rhs(p, d);
    let gap = (pcost - dcost).abs().max(compl) / (1.0 + pcost.abs());
    KktResiduals { primal, dual, gap }
}

/// Residual of an infeasibility certificate after normalisation; smaller is
/// better and a sound certificate has residual ≈ 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateCheck {
    /// `bᵀy + hᵀz` (primal) or `cᵀd` (dual); must be negative.
    pub objective: f64,
    /// Norm of the ray condition after scaling the objective to −1.
    pub residual: f64,
    pub cone_violation: f64,
}

impl CertificateCheck {
    pub fn sound(&self, tol: f64) -> bool {
        self.objective < 0.0 && self.residual <= tol && self.cone_violation <= tol
    }
}

pub fn check_certificate(p: &ConicProblem, cert: &Certificate) -> CertificateCheck {
    match cert {
        Certificate::PrimalInfeasible(d) => {
            let obj = dual_rhs(p, d);
            let s = if obj < 0.0 { 1.0 / -obj } else { 1.0 };
            let st = stationarity(p, d, false);
            let r = st.iter().fold(0.0_f64, |m, v| m.max(v.abs())) * s;
            CertificateCheck {
                objective: obj,
                residual: r,
                cone_violation: dual_cone_violation(p, d) * s,
            }
        }
        Certificate::DualInfeasible(dir) => {
            let obj: f64 = p.c.iter().zip(dir).map(|(c, x)| c * x).sum();
            let s = if obj < 0.0 { 1.0 / -obj } else { 1.0 };
            let mut r = 0.0_f64;
            let mut cv = 0.0_f64;
            for row in &p.eqs {
                let ad: f64 = row.terms.iter().map(|&(i, a)| a * dir[i]).sum();
                r = r.max(ad.abs());
            }
            for row in &p.rows {
                let gd: f64 = row.terms.iter().map(|&(i, a)| a * dir[i]).sum();
                if row.hi.is_finite() {
                    cv = cv.max(gd);
                }
                if row.lo.is_finite() {
                    cv = cv.max(-gd);
                }
            }
            for i in 0..p.num_vars() {
                if p.upper[i].is_finite() {
                    cv = cv.max(dir[i]);
                }
                if p.lower[i].is_finite() {
                    cv = cv.max(-dir[i]);
                }
            }
            for cone in &p.cones {
                let lin = |e: &crate::problem::LinExpr| -> f64 {
                    e.terms.iter().map(|&(i, a)| a * dir[i]).sum()
                };
                let t = lin(&cone.t);
                let u: Vec<f64> = cone.u.iter().map(lin).collect();
                cv = cv.max(norm(&u) - t);
            }
            CertificateCheck {
                objective: obj,
                residual: r * s,
                cone_violation: cv * s,
            }
        }
    }
}

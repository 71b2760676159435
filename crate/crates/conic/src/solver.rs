//! Primal-dual interior-point method on the homogeneous self-dual embedding
//!
//! ```text
//! Aᵀy + Gᵀz + cτ = 0,   Ax = bτ,   Gx + s = hτ,   κ = −cᵀx − bᵀy − hᵀz,
//! (s, z) ∈ K × K,  τ, κ ≥ 0
//! ```
//!
//! with Nesterov–Todd scaling and a Mehrotra predictor-corrector step.

use crate::cones::{dot, norm, ConeLayout, NtScaling};
use crate::kkt::{check_certificate, kkt_residuals};
use crate::linsys::KktSolver;
use crate::problem::ConicProblem;
use crate::solution::{Certificate, ConicSolution, Duals, KktResiduals, SolverOptions, Status};
use crate::stdform::{Presolved, StdForm};
use crate::ConicError;

const STEP_FRACTION: f64 = 0.99;

pub fn solve(p: &ConicProblem, opts: &SolverOptions) -> Result<ConicSolution, ConicError> {
    p.validate()?;
    let sf = match StdForm::presolve(p, opts.tol_feas, opts.scale_rows) {
        Presolved::Infeasible(d) => {
            return Ok(ConicSolution {
                status: Status::Infeasible,
                x: vec![f64::NAN; p.num_vars()],
                duals: Duals::zeros(p),
                objective: f64::INFINITY,
                kkt_residuals: KktResiduals::default(),
                certificate: Some(Certificate::PrimalInfeasible(d)),
                iterations: 0,
            });
        }
        Presolved::Reduced(sf) => sf,
    };
    if sf.n == 0 {
        // Every variable fixed and every constraint already verified.
        let x = sf.recover_x(&[]);
        let duals = sf.recover_duals(p, &vec![0.0; sf.m_eq()], &vec![0.0; sf.m_g()], true);
        let res = kkt_residuals(p, &x, &duals);
        return Ok(ConicSolution {
            status: Status::Optimal,
            objective: p.objective(&x),
            x,
            duals,
            kkt_residuals: res,
            certificate: None,
            iterations: 0,
        });
    }
    Ok(Ipm::new(p, &sf, opts).run())
}

struct Ipm<'a> {
    p: &'a ConicProblem,
    sf: &'a StdForm,
    opts: &'a SolverOptions,
    layout: ConeLayout,
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

fn neg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| -x).collect()
}

/// Shifts `v` along the cone identity until it is strictly interior.
fn push_interior(layout: &ConeLayout, v: &mut [f64]) {
    let t = -layout.min_eig(v);
    if t >= -1e-8 * norm(v).max(1.0) {
        let e = layout.identity();
        axpy(1.0 + t, &e, v);
    }
}

struct Step {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a ConicProblem, sf: &'a StdForm, opts: &'a SolverOptions) -> Self {
        let layout = sf.layout.clone();
        let m = sf.m_g();
        let unit = NtScaling::new(&layout, &layout.identity(), &layout.identity());
        let (x, y, z, s) = match KktSolver::factor(sf, &unit) {
            Ok(k) => {
                let (x, _, zp) = k.solve(&vec![0.0; sf.n], &sf.b, &sf.h);
                let mut s = neg(&zp);
                let (_, y, mut z) = k.solve(&neg(&sf.c), &vec![0.0; sf.m_eq()], &vec![0.0; m]);
                push_interior(&layout, &mut s);
                push_interior(&layout, &mut z);
                (x, y, z, s)
            }
            Err(_) => (
                vec![0.0; sf.n],
                vec![0.0; sf.m_eq()],
                layout.identity(),
                layout.identity(),
            ),
        };
        Self {
            p,
            sf,
            opts,
            layout,
            x,
            y,
            z,
            s,
            tau: 1.0,
            kappa: 1.0,
        }
    }

    fn solution(&self, status: Status, it: usize) -> ConicSolution {
        let inv = 1.0 / self.tau;
        let xr: Vec<f64> = self.x.iter().map(|v| v * inv).collect();
        let yr: Vec<f64> = self.y.iter().map(|v| v * inv).collect();
        let zr: Vec<f64> = self.z.iter().map(|v| v * inv).collect();
        let x = self.sf.recover_x(&xr);
        let duals = self.sf.recover_duals(self.p, &yr, &zr, true);
        let res = kkt_residuals(self.p, &x, &duals);
        ConicSolution {
            status,
            objective: self.p.objective(&x),
            x,
            duals,
            kkt_residuals: res,
            certificate: None,
            iterations: it,
        }
    }

    fn infeasible(&self, it: usize) -> Option<ConicSolution> {
        let sf = self.sf;
        let by_hz = dot(&sf.b, &self.y) + dot(&sf.h, &self.z);
        if by_hz < 0.0 {
            let r = sf.adj_mul(&self.y, &self.z);
            let pinf = norm(&r) / -by_hz;
            if pinf <= self.opts.tol_infeas {
                let f = 1.0 / -by_hz;
                let yr: Vec<f64> = self.y.iter().map(|v| v * f).collect();
                let zr: Vec<f64> = self.z.iter().map(|v| v * f).collect();
                let d = sf.recover_duals(self.p, &yr, &zr, false);
                let cert = Certificate::PrimalInfeasible(d);
                if check_certificate(self.p, &cert).sound(self.opts.tol_infeas.sqrt()) {
                    let mut sol = self.solution(Status::Infeasible, it);
                    sol.x = vec![f64::NAN; self.p.num_vars()];
                    sol.objective = f64::INFINITY;
                    sol.certificate = Some(cert);
                    return Some(sol);
                }
            }
        }
        let cx = dot(&sf.c, &self.x);
        if cx < 0.0 {
            let ax = sf.a_mul(&self.x);
            let gx = sf.g_mul(&self.x);
            let rz: Vec<f64> = gx.iter().zip(&self.s).map(|(g, s)| g + s).collect();
            let dinf = norm(&ax).max(norm(&rz)) / -cx;
            if dinf <= self.opts.tol_infeas {
                let f = 1.0 / -cx;
                let xr: Vec<f64> = self.x.iter().map(|v| v * f).collect();
                let d = sf.recover_direction(&xr);
                let mut sol = self.solution(Status::Unbounded, it);
                sol.objective = f64::NEG_INFINITY;
                sol.certificate = Some(Certificate::DualInfeasible(d));
                return Some(sol);
            }
        }
        None
    }

    /// Solves the linearised embedding for the given complementarity targets.
    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        kkt: &KktSolver,
        w: &NtScaling,
        sol1: &(Vec<f64>, Vec<f64>, Vec<f64>),
        eta: f64,
        res: &(Vec<f64>, Vec<f64>, Vec<f64>, f64),
        rc: &[f64],
        rctau: f64,
    ) -> Step {
        let sf = self.sf;
        let (rx, ry, rz, rtau) = res;
        let lam_rc = self.layout.jordan_div(&w.lambda, rc);
        let w_lam_rc = w.apply(&lam_rc);
        let bx: Vec<f64> = rx.iter().map(|v| -eta * v).collect();
        let by: Vec<f64> = ry.iter().map(|v| -eta * v).collect();
        let bz: Vec<f64> = rz.iter().zip(&w_lam_rc).map(|(r, q)| -eta * r - q).collect();
        let btau = -eta * rtau - rctau / self.tau;
        let (x2, y2, z2) = kkt.solve(&bx, &by, &bz);
        let (x1, y1, z1) = sol1;
        let wz1 = w.apply(z1);
        let denom = -dot(&wz1, &wz1) - self.kappa / self.tau;
        let num = btau - dot(&sf.c, &x2) - dot(&sf.b, &y2) - dot(&sf.h, &z2);
        let dtau = num / denom;
        let mut dx = x2;
        axpy(dtau, x1, &mut dx);
        let mut dy = y2;
        axpy(dtau, y1, &mut dy);
        let mut dz = z2;
        axpy(dtau, z1, &mut dz);
        // ds = W(λ⧵r_c − W dz)
        let wdz = w.apply(&dz);
        let inner: Vec<f64> = lam_rc.iter().zip(&wdz).map(|(a, b)| a - b).collect();
        let ds = w.apply(&inner);
        let dkappa = (rctau - self.kappa * dtau) / self.tau;
        Step {
            dx,
            dy,
            dz,
            ds,
            dtau,
            dkappa,
        }
    }

    fn max_step(&self, st: &Step, cap: f64) -> f64 {
        let mut a = self.layout.max_step(&self.s, &st.ds, cap);
        a = a.min(self.layout.max_step(&self.z, &st.dz, cap));
        if st.dtau < 0.0 {
            a = a.min(-self.tau / st.dtau);
        }
        if st.dkappa < 0.0 {
            a = a.min(-self.kappa / st.dkappa);
        }
        a
    }

    fn run(mut self) -> ConicSolution {
        let sf = self.sf;
        let degree = self.layout.degree() as f64;
        let mut best: Option<ConicSolution> = None;
        for it in 0..=self.opts.max_iter {
            let cand = self.solution(Status::Optimal, it);
            let r = cand.kkt_residuals;
            if r.primal <= self.opts.tol_feas && r.dual <= self.opts.tol_feas && r.gap <= self.opts.tol_gap {
                return cand;
            }
            if let Some(sol) = self.infeasible(it) {
                return sol;
            }
            if best.as_ref().is_none_or(|b| r.max() < b.kkt_residuals.max()) {
                best = Some(cand);
            }
            if it == self.opts.max_iter {
                break;
            }

            // Residuals of the embedding.
            let aty_gtz = sf.adj_mul(&self.y, &self.z);
            let rx: Vec<f64> = aty_gtz.iter().zip(&sf.c).map(|(v, c)| v + c * self.tau).collect();
            let ax = sf.a_mul(&self.x);
            let ry: Vec<f64> = ax.iter().zip(&sf.b).map(|(v, b)| v - b * self.tau).collect();
            let gx = sf.g_mul(&self.x);
            let rz: Vec<f64> = gx
                .iter()
                .zip(&self.s)
                .zip(&sf.h)
                .map(|((g, s), h)| g + s - h * self.tau)
                .collect();
            let rtau = self.kappa + dot(&sf.c, &self.x) + dot(&sf.b, &self.y) + dot(&sf.h, &self.z);
            let res = (rx, ry, rz, rtau);

            let mu = (dot(&self.s, &self.z) + self.tau * self.kappa) / (degree + 1.0);
            let w = NtScaling::new(&self.layout, &self.s, &self.z);
            if w.lambda.iter().any(|v| !v.is_finite()) {
                break;
            }
            let Ok(kkt) = KktSolver::factor(sf, &w) else {
                break;
            };
            let sol1 = kkt.solve(&neg(&sf.c), &sf.b, &sf.h);

            // Predictor.
            let lam = &w.lambda;
            let lam_sq = self.layout.jordan(lam, lam);
            let rc_aff = neg(&lam_sq);
            let aff = self.direction(&kkt, &w, &sol1, 1.0, &res, &rc_aff, -self.tau * self.kappa);
            let alpha_aff = self.max_step(&aff, 1.0);
            let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

            // Corrector.
            let wi_ds = w.apply_inv(&aff.ds);
            let w_dz = w.apply(&aff.dz);
            let corr = self.layout.jordan(&wi_ds, &w_dz);
            let e = self.layout.identity();
            let rc: Vec<f64> = lam_sq
                .iter()
                .zip(&e)
                .zip(&corr)
                .map(|((l, e), c)| -l + sigma * mu * e - c)
                .collect();
            let rctau = -self.tau * self.kappa + sigma * mu - aff.dtau * aff.dkappa;
            let st = self.direction(&kkt, &w, &sol1, 1.0 - sigma, &res, &rc, rctau);
            let alpha = (STEP_FRACTION * self.max_step(&st, f64::INFINITY)).min(1.0);
            if !(alpha > 1e-12) || st.dx.iter().any(|v| !v.is_finite()) {
                break;
            }
            axpy(alpha, &st.dx, &mut self.x);
            axpy(alpha, &st.dy, &mut self.y);
            axpy(alpha, &st.dz, &mut self.z);
            axpy(alpha, &st.ds, &mut self.s);
            self.tau += alpha * st.dtau;
            self.kappa += alpha * st.dkappa;
        }
        let mut sol = best.unwrap_or_else(|| self.solution(Status::MaxIterations, self.opts.max_iter));
        sol.status = Status::MaxIterations;
        sol
    }
}

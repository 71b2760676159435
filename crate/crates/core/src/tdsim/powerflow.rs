//! Newton-Raphson AC power flow in polar coordinates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::network::{BusType, TransmissionNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFlowOptions {
    /// Largest active/reactive mismatch accepted, pu.
    pub tol: f64,
    pub max_iter: usize,
    /// Enforce generator var limits by PV→PQ switching.
    pub enforce_q_limits: bool,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
            enforce_q_limits: true,
        }
    }
}

/// Additional constant-power demand at a bus, on top of its own load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraLoad {
    pub bus: usize,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub converged: bool,
    pub iterations: usize,
    /// Largest remaining mismatch, pu.
    pub mismatch: f64,
    /// Per bus position.
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    /// Net injection (generation − demand) per bus position, MW / Mvar.
    pub p_inj_mw: Vec<f64>,
    pub q_inj_mvar: Vec<f64>,
    /// Bus ids whose generator hit a var limit.
    pub q_limited: Vec<usize>,
}

impl PowerFlowSolution {
    pub fn vm_at(&self, net: &TransmissionNetwork, bus: usize) -> Option<f64> {
        net.bus_pos(bus).map(|k| self.vm[k])
    }

    /// Total series and shunt losses, MW.
    pub fn losses_mw(&self) -> f64 {
        self.p_inj_mw.iter().sum()
    }
}

/// Bus admittance matrix over in-service branches (π model).
pub fn admittance(net: &TransmissionNetwork) -> DMatrix<Complex64> {
    let n = net.buses.len();
    let mut y = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for br in net.in_service() {
        let (i, j) = (net.index[&br.from], net.index[&br.to]);
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r_pu, br.x_pu);
        let sh = Complex64::new(0.0, br.b_pu / 2.0);
        y[(i, i)] += ys + sh;
        y[(j, j)] += ys + sh;
        y[(i, j)] -= ys;
        y[(j, i)] -= ys;
    }
    y
}

fn injections(y: &DMatrix<Complex64>, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = vm.len();
    let v: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(vm[k], va[k])).collect();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        let mut cur = Complex64::new(0.0, 0.0);
        for k in 0..n {
            cur += y[(i, k)] * v[k];
        }
        let s = v[i] * cur.conj();
        p[i] = s.re;
        q[i] = s.im;
    }
    (p, q)
}

/// Solves the power flow with bus loads plus `extra`. Non-convergence is
/// reported in the result.
pub fn ac_power_flow(net: &TransmissionNetwork, extra: &[ExtraLoad], opts: &PowerFlowOptions) -> PowerFlowSolution {
    let n = net.buses.len();
    let base = net.base_mva;
    let mut p_spec = vec![0.0; n];
    let mut q_spec = vec![0.0; n];
    for (k, b) in net.buses.iter().enumerate() {
        p_spec[k] -= b.p_load_mw / base;
        q_spec[k] -= b.q_load_mvar / base;
    }
    for e in extra {
        if let Some(k) = net.bus_pos(e.bus) {
            p_spec[k] -= e.p_mw / base;
            q_spec[k] -= e.q_mvar / base;
        }
    }
    let mut types: Vec<BusType> = net.buses.iter().map(|b| b.bus_type).collect();
    let mut vm: Vec<f64> = net.buses.iter().map(|b| if b.bus_type == BusType::Pq { 1.0 } else { b.v_set }).collect();
    for g in &net.gens {
        let k = net.index[&g.bus];
        if types[k] == BusType::Pv {
            p_spec[k] += g.p_mw / base;
        }
    }
    let y = admittance(net);
    let mut va = vec![0.0; n];
    let mut q_fixed = q_spec.clone();
    let mut limited: Vec<usize> = Vec::new();
    let mut total_iter = 0;
    let mut converged = false;
    let mut mismatch = f64::INFINITY;

    for _round in 0..=net.gens.len() {
        let (ok, it, mis) = newton(&y, &types, &p_spec, &q_fixed, &mut vm, &mut va, opts);
        total_iter += it;
        converged = ok;
        mismatch = mis;
        if !ok || !opts.enforce_q_limits {
            break;
        }
        // Generator var output at PV buses; switch violators to PQ at the limit.
        let (_, q) = injections(&y, &vm, &va);
        let mut switched = false;
        for (k, b) in net.buses.iter().enumerate() {
            if types[k] != BusType::Pv {
                continue;
            }
            let (qmin, qmax) = net
                .gens
                .iter()
                .filter(|g| g.bus == b.id)
                .fold((0.0, 0.0), |(lo, hi), g| (lo + g.q_min_mvar / base, hi + g.q_max_mvar / base));
            let q_gen = q[k] - q_spec[k];
            let lim = if q_gen > qmax + 1e-9 {
                Some(qmax)
            } else if q_gen < qmin - 1e-9 {
                Some(qmin)
            } else {
                None
            };
            if let Some(l) = lim {
                types[k] = BusType::Pq;
                q_fixed[k] = q_spec[k] + l;
                limited.push(b.id);
                switched = true;
            }
        }
        if !switched {
            break;
        }
    }
    let (p, q) = injections(&y, &vm, &va);
    PowerFlowSolution {
        converged,
        iterations: total_iter,
        mismatch,
        p_inj_mw: p.iter().map(|v| v * base).collect(),
        q_inj_mvar: q.iter().map(|v| v * base).collect(),
        vm,
        va,
        q_limited: limited,
    }
}

/// Newton iterations on the given bus types; returns (converged, iterations, mismatch).
fn newton(
    y: &DMatrix<Complex64>,
    types: &[BusType],
    p_spec: &[f64],
    q_spec: &[f64],
    vm: &mut [f64],
    va: &mut [f64],
    opts: &PowerFlowOptions,
) -> (bool, usize, f64) {
    let n = vm.len();
    let pv_pq: Vec<usize> = (0..n).filter(|&k| types[k] != BusType::Slack).collect();
    let pq: Vec<usize> = (0..n).filter(|&k| types[k] == BusType::Pq).collect();
    let (na, nv) = (pv_pq.len(), pq.len());
    let mut pos_a = vec![usize::MAX; n];
    let mut pos_v = vec![usize::MAX; n];
    for (r, &k) in pv_pq.iter().enumerate() {
        pos_a[k] = r;
    }
    for (r, &k) in pq.iter().enumerate() {
        pos_v[k] = na + r;
    }
    let mut it = 0;
    loop {
        let (p, q) = injections(y, vm, va);
        let mut f = DVector::zeros(na + nv);
        for (r, &k) in pv_pq.iter().enumerate() {
            f[r] = p_spec[k] - p[k];
        }
        for (r, &k) in pq.iter().enumerate() {
            f[na + r] = q_spec[k] - q[k];
        }
        let mis = f.amax();
        if !mis.is_finite() {
            return (false, it, mis);
        }
        if mis <= opts.tol {
            return (true, it, mis);
        }
        if it >= opts.max_iter {
            return (false, it, mis);
        }
        it += 1;
        // Jacobian of (P, Q) in (θ, |V|), standard polar expressions.
        let mut jac = DMatrix::zeros(na + nv, na + nv);
        for i in 0..n {
            let (ri_p, ri_q) = (pos_a[i], pos_v[i]);
            if ri_p == usize::MAX {
                continue;
            }
            for k in 0..n {
                let g = y[(i, k)].re;
                let b = y[(i, k)].im;
                if i == k {
                    let (gii, bii) = (g, b);
                    if pos_a[i] != usize::MAX {
                        jac[(ri_p, pos_a[i])] = -q[i] - bii * vm[i] * vm[i];
                        if ri_q != usize::MAX {
                            jac[(ri_q, pos_a[i])] = p[i] - gii * vm[i] * vm[i];
                        }
                    }
                    if pos_v[i] != usize::MAX {
                        jac[(ri_p, pos_v[i])] = p[i] / vm[i] + gii * vm[i];
                        jac[(ri_q, pos_v[i])] = q[i] / vm[i] - bii * vm[i];
                    }
                } else {
                    if g == 0.0 && b == 0.0 {
                        continue;
                    }
                    let th = va[i] - va[k];
                    let (s, c) = th.sin_cos();
                    if pos_a[k] != usize::MAX {
                        jac[(ri_p, pos_a[k])] = vm[i] * vm[k] * (g * s - b * c);
                        if ri_q != usize::MAX {
                            jac[(ri_q, pos_a[k])] = -vm[i] * vm[k] * (g * c + b * s);
                        }
                    }
                    if pos_v[k] != usize::MAX {
                        jac[(ri_p, pos_v[k])] = vm[i] * (g * c + b * s);
                        if ri_q != usize::MAX {
                            jac[(ri_q, pos_v[k])] = vm[i] * (g * s - b * c);
                        }
                    }
                }
            }
        }
        let Some(dx) = jac.lu().solve(&f) else {
            return (false, it, mis);
        };
        for (r, &k) in pv_pq.iter().enumerate() {
            va[k] += dx[r];
        }
        for (r, &k) in pq.iter().enumerate() {
            vm[k] += dx[na + r];
        }
    }
}

//! Conversion between [`ConicProblem`] and the internal standard form
//!
//! ```text
//! minimize cᵀx  subject to  A x = b,  G x + s = h,  s ∈ R₊ × Q × … × Q
//! ```
//!
//! Presolve substitutes fixed variables, checks rows that become constant,
//! and equilibrates every remaining row to unit Euclidean norm (second-order
//! blocks share one factor so the cone is preserved).

use crate::cones::{norm, ConeLayout};
use crate::kkt::stationarity;
use crate::problem::ConicProblem;
use crate::solution::Duals;

pub(crate) type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum EqOrigin {
    Eq(usize),
    /// A ranged row whose bounds coincide.
    Range(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum GOrigin {
    RowHi(usize),
    RowLo(usize),
    BoxHi(usize),
    BoxLo(usize),
    Cone(usize, usize),
}

#[derive(Debug, Clone)]
pub(crate) struct StdForm {
    pub n: usize,
    pub c: Vec<f64>,
    pub a: Vec<SparseRow>,
    pub b: Vec<f64>,
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub layout: ConeLayout,
    a_origin: Vec<EqOrigin>,
    a_scale: Vec<f64>,
    g_origin: Vec<GOrigin>,
    g_scale: Vec<f64>,
    /// Reduced index → original index.
    columns: Vec<usize>,
    /// Original index → fixed value, for substituted variables.
    fixed: Vec<Option<f64>>,
}

pub(crate) enum Presolved {
    Reduced(StdForm),
    /// Contradiction found without iterating; the duals form a Farkas ray.
    Infeasible(Duals),
}

fn dot_sparse(row: &[(usize, f64)], x: &[f64]) -> f64 {
    row.iter().map(|&(i, a)| a * x[i]).sum()
}

/// Splits `terms` into the part over free columns (reindexed) and the
/// constant contributed by fixed variables.
fn reduce_terms(terms: &[(usize, f64)], map: &[Option<usize>], fixed: &[Option<f64>]) -> (SparseRow, f64) {
    let mut row: SparseRow = Vec::with_capacity(terms.len());
    let mut k = 0.0;
    for &(i, a) in terms {
        match (map[i], fixed[i]) {
            (Some(j), _) => row.push((j, a)),
            (None, Some(v)) => k += a * v,
            (None, None) => unreachable!("column neither free nor fixed"),
        }
    }
    row.sort_by_key(|&(j, _)| j);
    let mut out: SparseRow = Vec::with_capacity(row.len());
    for (j, a) in row {
        match out.last_mut() {
            Some((jj, aa)) if *jj == j => *aa += a,
            _ => out.push((j, a)),
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    (out, k)
}

impl StdForm {
    pub fn presolve(p: &ConicProblem, tol: f64, scale_rows: bool) -> Presolved {
        let nv = p.num_vars();
        let mut fixed = vec![None; nv];
        let mut map = vec![None; nv];
        let mut columns = Vec::new();
        for i in 0..nv {
            let (lo, hi) = (p.lower[i], p.upper[i]);
            if lo > hi {
                let mut d = Duals::zeros(p);
                let w = 1.0 / (lo - hi);
                d.box_lo[i] = w;
                d.box_hi[i] = w;
                return Presolved::Infeasible(d);
            }
            if lo == hi {
                fixed[i] = Some(lo);
            } else {
                map[i] = Some(columns.len());
                columns.push(i);
            }
        }
        let n = columns.len();
        let c: Vec<f64> = columns.iter().map(|&i| p.c[i]).collect();

        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut a_origin = Vec::new();
        for (k, row) in p.eqs.iter().enumerate() {
            let (terms, kfix) = reduce_terms(&row.terms, &map, &fixed);
            let rhs = row.rhs - kfix;
            if terms.is_empty() {
                if rhs.abs() > tol * (1.0 + row.rhs.abs()) {
                    let mut d = Duals::zeros(p);
                    d.eq[k] = -1.0 / rhs;
                    return Presolved::Infeasible(finish_fixed(p, d, &fixed, false));
                }
                continue;
            }
            a.push(terms);
            b.push(rhs);
            a_origin.push(EqOrigin::Eq(k));
        }

        let mut g_lin: Vec<(SparseRow, f64, GOrigin)> = Vec::new();
        for (k, row) in p.rows.iter().enumerate() {
            if row.lo > row.hi {
                let mut d = Duals::zeros(p);
                let w = 1.0 / (row.lo - row.hi);
                d.row_lo[k] = w;
                d.row_hi[k] = w;
                return Presolved::Infeasible(d);
            }
            let (terms, kfix) = reduce_terms(&row.terms, &map, &fixed);
            let (lo, hi) = (row.lo - kfix, row.hi - kfix);
            if terms.is_empty() {
                if hi < -tol * (1.0 + row.hi.abs()) {
                    let mut d = Duals::zeros(p);
                    d.row_hi[k] = -1.0 / hi;
                    return Presolved::Infeasible(finish_fixed(p, d, &fixed, false));
                }
                if lo > tol * (1.0 + row.lo.abs()) {
                    let mut d = Duals::zeros(p);
                    d.row_lo[k] = 1.0 / lo;
                    return Presolved::Infeasible(finish_fixed(p, d, &fixed, false));
                }
                continue;
            }
            if lo == hi {
                a.push(terms);
                b.push(lo);
                a_origin.push(EqOrigin::Range(k));
                continue;
            }
            if hi.is_finite() {
                g_lin.push((terms.clone(), hi, GOrigin::RowHi(k)));
            }
            if lo.is_finite() {
                let neg = terms.iter().map(|&(j, v)| (j, -v)).collect();
                g_lin.push((neg, -lo, GOrigin::RowLo(k)));
            }
        }
        for (j, &i) in columns.iter().enumerate() {
            if p.upper[i].is_finite() {
                g_lin.push((vec![(j, 1.0)], p.upper[i], GOrigin::BoxHi(i)));
            }
            if p.lower[i].is_finite() {
                g_lin.push((vec![(j, -1.0)], -p.lower[i], GOrigin::BoxLo(i)));
            }
        }

        let mut g = Vec::new();
        let mut h = Vec::new();
        let mut g_origin = Vec::new();
        for (row, rhs, o) in g_lin {
            g.push(row);
            h.push(rhs);
            g_origin.push(o);
        }
        let nonneg = g.len();
        let mut soc = Vec::new();
        for (k, cone) in p.cones.iter().enumerate() {
            let entries: Vec<(SparseRow, f64)> = std::iter::once(&cone.t)
                .chain(cone.u.iter())
                .map(|e| {
                    let (terms, kfix) = reduce_terms(&e.terms, &map, &fixed);
                    (terms, e.constant + kfix)
                })
                .collect();
            if entries.iter().all(|(t, _)| t.is_empty()) {
                let t0 = entries[0].1;
                let ubar: Vec<f64> = entries[1..].iter().map(|e| e.1).collect();
                let nu = norm(&ubar);
                if nu - t0 > tol * (1.0 + t0.abs()) {
                    let mut d = Duals::zeros(p);
                    let w = 1.0 / (nu - t0);
                    d.cones[k][0] = w;
                    for (zj, uj) in d.cones[k][1..].iter_mut().zip(&ubar) {
                        *zj = -w * uj / nu;
                    }
                    return Presolved::Infeasible(finish_fixed(p, d, &fixed, false));
                }
                continue;
            }
            soc.push(entries.len());
            for (j, (terms, k0)) in entries.into_iter().enumerate() {
                g.push(terms.into_iter().map(|(i, v)| (i, -v)).collect());
                h.push(k0);
                g_origin.push(GOrigin::Cone(k, j));
            }
        }

        let mut sf = StdForm {
            n,
            c,
            a_scale: vec![1.0; a.len()],
            g_scale: vec![1.0; g.len()],
            a,
            b,
            g,
            h,
            layout: ConeLayout { nonneg, soc },
            a_origin,
            g_origin,
            columns,
            fixed,
        };
        if scale_rows {
            sf.equilibrate();
        }
        Presolved::Reduced(sf)
    }

    fn equilibrate(&mut self) {
        let rn = |r: &SparseRow| r.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
        for k in 0..self.a.len() {
            let d = rn(&self.a[k]);
            if d > 0.0 {
                self.a[k].iter_mut().for_each(|e| e.1 /= d);
                self.b[k] /= d;
                self.a_scale[k] = d;
            }
        }
        for k in 0..self.layout.nonneg {
            let d = rn(&self.g[k]);
            if d > 0.0 {
                self.g[k].iter_mut().for_each(|e| e.1 /= d);
                self.h[k] /= d;
                self.g_scale[k] = d;
            }
        }
        let blocks: Vec<(usize, usize)> = self.layout.soc_blocks().collect();
        for (o, dim) in blocks {
            let d = (o..o + dim).map(|k| rn(&self.g[k])).fold(0.0_f64, f64::max);
            if d > 0.0 {
                for k in o..o + dim {
                    self.g[k].iter_mut().for_each(|e| e.1 /= d);
                    self.h[k] /= d;
                    self.g_scale[k] = d;
                }
            }
        }
    }

    pub fn m_eq(&self) -> usize {
        self.a.len()
    }

    pub fn m_g(&self) -> usize {
        self.g.len()
    }

    pub fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        self.a.iter().map(|r| dot_sparse(r, x)).collect()
    }

    pub fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        self.g.iter().map(|r| dot_sparse(r, x)).collect()
    }

    /// `Aᵀy + Gᵀz`.
    pub fn adj_mul(&self, y: &[f64], z: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        for (row, &yk) in self.a.iter().zip(y) {
            for &(i, a) in row {
                r[i] += a * yk;
            }
        }
        for (row, &zk) in self.g.iter().zip(z) {
            for &(i, a) in row {
                r[i] += a * zk;
            }
        }
        r
    }

    pub fn recover_x(&self, xr: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (j, &i) in self.columns.iter().enumerate() {
            x[i] = xr[j];
        }
        x
    }

    /// Maps standard-form multipliers back to the original layout. With
    /// `with_cost` the fixed-variable box multipliers absorb the full
    /// stationarity residual, otherwise only the ray part.
    pub fn recover_duals(&self, p: &ConicProblem, y: &[f64], z: &[f64], with_cost: bool) -> Duals {
        let mut d = Duals::zeros(p);
        for (k, o) in self.a_origin.iter().enumerate() {
            let v = y[k] / self.a_scale[k];
            match *o {
                EqOrigin::Eq(e) => d.eq[e] = v,
                EqOrigin::Range(r) => {
                    if v >= 0.0 {
                        d.row_hi[r] = v;
                    } else {
                        d.row_lo[r] = -v;
                    }
                }
            }
        }
        for (k, o) in self.g_origin.iter().enumerate() {
            let v = z[k] / self.g_scale[k];
            match *o {
                GOrigin::RowHi(r) => d.row_hi[r] = v,
                GOrigin::RowLo(r) => d.row_lo[r] = v,
                GOrigin::BoxHi(i) => d.box_hi[i] = v,
                GOrigin::BoxLo(i) => d.box_lo[i] = v,
                GOrigin::Cone(c, j) => d.cones[c][j] = v,
            }
        }
        finish_fixed(p, d, &self.fixed, with_cost)
    }

    pub fn recover_direction(&self, xr: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.fixed.len()];
        for (j, &i) in self.columns.iter().enumerate() {
            x[i] = xr[j];
        }
        x
    }
}

/// Gives each substituted variable the box multipliers that zero its
/// stationarity row.
fn finish_fixed(p: &ConicProblem, mut d: Duals, fixed: &[Option<f64>], with_cost: bool) -> Duals {
    if fixed.iter().all(Option::is_none) {
        return d;
    }
    let r = stationarity(p, &d, with_cost);
    for (i, f) in fixed.iter().enumerate() {
        if f.is_some() {
            d.box_hi[i] = (-r[i]).max(0.0);
            d.box_lo[i] = r[i].max(0.0);
        }
    }
    d
}

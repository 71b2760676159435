//! Reduced KKT system of the interior-point step:
//!
//! ```text
//! [ 0  Aᵀ  Gᵀ  ] [dx]   [rx]
//! [ A  0   0   ] [dy] = [ry]
//! [ G  0  −W²  ] [dz]   [rz]
//! ```
//!
//! Solved through `K1 = GᵀW⁻²G + AᵀA + δI` and the Schur complement
//! `A K1⁻¹ Aᵀ`, followed by iterative refinement against the exact system.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::cones::{NtScaling, norm_inf};
use crate::stdform::StdForm;

pub(crate) struct KktSolver<'a> {
    sf: &'a StdForm,
    w: &'a NtScaling,
    k1: Cholesky<f64, Dyn>,
    /// `K1⁻¹ Aᵀ`, one column per equality row.
    k1_at: DMatrix<f64>,
    schur: Option<Cholesky<f64, Dyn>>,
}

#[derive(Debug)]
pub(crate) struct Singular;

fn cholesky_regularized(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>, Singular> {
    let n = m.nrows();
    if n == 0 {
        return Cholesky::new(m).ok_or(Singular);
    }
    // Per-diagonal relative shift: large pivots from near-active constraints
    // must not swamp the small ones.
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].abs()).collect();
    let mut rel = 1e-14;
    for _ in 0..10 {
        let mut t = m.clone();
        for i in 0..n {
            t[(i, i)] += rel * diag[i] + 1e-3 * rel;
        }
        if let Some(c) = Cholesky::new(t) {
            return Ok(c);
        }
        rel *= 100.0;
    }
    Err(Singular)
}

impl<'a> KktSolver<'a> {
    pub fn factor(sf: &'a StdForm, w: &'a NtScaling) -> Result<Self, Singular> {
        let n = sf.n;
        let mut h = DMatrix::<f64>::zeros(n, n);
        let layout = w.layout();

        // Rows of W⁻¹G with many entries are stacked into a dense block and
        // accumulated with one product; short rows are added directly.
        const SHORT: usize = 4;
        let mut dense: Vec<(Vec<usize>, Vec<f64>)> = Vec::new();

        let ones = {
            let mut e = vec![0.0; sf.m_g()];
            e[..layout.nonneg].iter_mut().for_each(|v| *v = 1.0);
            e
        };
        let inv_diag = w.apply_inv(&ones);
        for k in 0..layout.nonneg {
            let row = &sf.g[k];
            let f = inv_diag[k];
            if row.len() > SHORT {
                dense.push((row.iter().map(|e| e.0).collect(), row.iter().map(|e| e.1 * f).collect()));
                continue;
            }
            for &(i, a) in row {
                for &(j, b) in row {
                    h[(i, j)] += f * f * a * b;
                }
            }
        }

        // Lorentz blocks: W⁻¹ applied on the union of the block's columns.
        for (bi, (o, d)) in layout.soc_blocks().enumerate() {
            let mut cols: Vec<usize> = (o..o + d).flat_map(|k| sf.g[k].iter().map(|e| e.0)).collect();
            cols.sort_unstable();
            cols.dedup();
            let mut rows: Vec<Vec<f64>> = vec![vec![0.0; cols.len()]; d];
            for (r, k) in (o..o + d).enumerate() {
                for &(i, a) in &sf.g[k] {
                    let pos = cols.binary_search(&i).unwrap();
                    rows[r][pos] += a;
                }
            }
            w.apply_inv_block_rows(bi, &mut rows);
            if cols.len() > SHORT {
                dense.extend(rows.into_iter().map(|r| (cols.clone(), r)));
                continue;
            }
            for (p, &i) in cols.iter().enumerate() {
                for (q, &j) in cols.iter().enumerate().skip(p) {
                    let v: f64 = rows.iter().map(|r| r[p] * r[q]).sum();
                    h[(i, j)] += v;
                    if p != q {
                        h[(j, i)] += v;
                    }
                }
            }
        }

        for row in &sf.a {
            if row.len() > SHORT {
                dense.push((row.iter().map(|e| e.0).collect(), row.iter().map(|e| e.1).collect()));
                continue;
            }
            for &(i, a) in row {
                for &(j, b) in row {
                    h[(i, j)] += a * b;
                }
            }
        }

        if !dense.is_empty() {
            let mut b = DMatrix::<f64>::zeros(dense.len(), n);
            for (r, (cols, vals)) in dense.iter().enumerate() {
                for (&i, &v) in cols.iter().zip(vals) {
                    b[(r, i)] += v;
                }
            }
            let bt = b.transpose();
            h.gemm(1.0, &bt, &b, 1.0);
        }

        let k1 = cholesky_regularized(h)?;
        let m = sf.m_eq();
        let mut at = DMatrix::<f64>::zeros(n, m);
        for (k, row) in sf.a.iter().enumerate() {
            for &(i, a) in row {
                at[(i, k)] = a;
            }
        }
        let k1_at = k1.solve(&at);
        let schur = if m > 0 {
            let mut s = DMatrix::<f64>::zeros(m, m);
            for (k, row) in sf.a.iter().enumerate() {
                for l in 0..m {
                    s[(k, l)] = row.iter().map(|&(i, a)| a * k1_at[(i, l)]).sum();
                }
            }
            let s = (&s + s.transpose()) * 0.5;
            Some(cholesky_regularized(s)?)
        } else {
            None
        };
        Ok(Self {
            sf,
            w,
            k1,
            k1_at,
            schur,
        })
    }

    fn solve_once(&self, rx: &[f64], ry: &[f64], rz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sf = self.sf;
        let wrz = self.w.apply_inv_sq(rz);
        let mut rt = sf.adj_mul(ry, &wrz);
        for (v, r) in rt.iter_mut().zip(rx) {
            *v += r;
        }
        let rt_v = DVector::from_vec(rt);
        let k1_rt = self.k1.solve(&rt_v);
        let dy = match &self.schur {
            Some(s) => {
                let rhs: Vec<f64> = sf
                    .a
                    .iter()
                    .zip(ry)
                    .map(|(row, r)| row.iter().map(|&(i, a)| a * k1_rt[i]).sum::<f64>() - r)
                    .collect();
                s.solve(&DVector::from_vec(rhs))
            }
            None => DVector::zeros(0),
        };
        let dx = &k1_rt - &self.k1_at * &dy;
        let dx: Vec<f64> = dx.iter().copied().collect();
        let gdx = sf.g_mul(&dx);
        let diff: Vec<f64> = gdx.iter().zip(rz).map(|(a, b)| a - b).collect();
        let dz = self.w.apply_inv_sq(&diff);
        (dx, dy.iter().copied().collect(), dz)
    }

    fn residual(&self, dx: &[f64], dy: &[f64], dz: &[f64], rx: &[f64], ry: &[f64], rz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let sf = self.sf;
        let top = sf.adj_mul(dy, dz);
        let ex: Vec<f64> = rx.iter().zip(&top).map(|(r, t)| r - t).collect();
        let ady = sf.a_mul(dx);
        let ey: Vec<f64> = ry.iter().zip(&ady).map(|(r, t)| r - t).collect();
        let gdx = sf.g_mul(dx);
        let w2dz = self.w.apply_sq(dz);
        let ez: Vec<f64> = rz
            .iter()
            .zip(gdx.iter().zip(&w2dz))
            .map(|(r, (g, w))| r - (g - w))
            .collect();
        (ex, ey, ez)
    }

    pub fn solve(&self, rx: &[f64], ry: &[f64], rz: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (mut dx, mut dy, mut dz) = self.solve_once(rx, ry, rz);
        let scale = 1.0 + norm_inf(rx).max(norm_inf(ry)).max(norm_inf(rz));
        for _ in 0..3 {
            let (ex, ey, ez) = self.residual(&dx, &dy, &dz, rx, ry, rz);
            let err = norm_inf(&ex).max(norm_inf(&ey)).max(norm_inf(&ez));
            if err <= 1e-15 * scale {
                break;
            }
            let (cx, cy, cz) = self.solve_once(&ex, &ey, &ez);
            dx.iter_mut().zip(&cx).for_each(|(a, b)| *a += b);
            dy.iter_mut().zip(&cy).for_each(|(a, b)| *a += b);
            dz.iter_mut().zip(&cz).for_each(|(a, b)| *a += b);
        }
        (dx, dy, dz)
    }
}

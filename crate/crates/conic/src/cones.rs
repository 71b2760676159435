//! Cone algebra for the product cone `R₊ⁿˡ × Q^{d₁} × … × Q^{dₖ}`.
//!
//! Vectors are stored flat: the non-negative orthant first, then each
//! second-order cone block in order, head element first.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeLayout {
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeLayout {
    pub fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant coordinate and one per Lorentz block.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    /// `(offset, dim)` of each second-order block.
    pub fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let mut off = self.nonneg;
        self.soc.iter().map(move |&d| {
            let o = off;
            off += d;
            (o, d)
        })
    }

    /// Identity element `e`.
    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[..self.nonneg].iter_mut().for_each(|v| *v = 1.0);
        for (o, _) in self.soc_blocks() {
            e[o] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue" of `x`: `min xᵢ` on the orthant, `x₀ − ‖x̄‖` on each block.
    pub fn min_eig(&self, x: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &x[..self.nonneg] {
            m = m.min(v);
        }
        for (o, d) in self.soc_blocks() {
            m = m.min(x[o] - norm(&x[o + 1..o + d]));
        }
        m
    }

    /// Jordan product `x ∘ y`.
    pub fn jordan(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; x.len()];
        for i in 0..self.nonneg {
            r[i] = x[i] * y[i];
        }
        for (o, d) in self.soc_blocks() {
            let (x0, x1) = (x[o], &x[o + 1..o + d]);
            let (y0, y1) = (y[o], &y[o + 1..o + d]);
            r[o] = dot(&x[o..o + d], &y[o..o + d]);
            for k in 0..d - 1 {
                r[o + 1 + k] = x0 * y1[k] + y0 * x1[k];
            }
        }
        r
    }

    /// Solves `λ ∘ u = r` for `u` (the Jordan "division" `λ ⧵ r`).
    pub fn jordan_div(&self, lambda: &[f64], r: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; r.len()];
        for i in 0..self.nonneg {
            u[i] = r[i] / lambda[i];
        }
        for (o, d) in self.soc_blocks() {
            let l0 = lambda[o];
            let l1 = &lambda[o + 1..o + d];
            let r0 = r[o];
            let r1 = &r[o + 1..o + d];
            let det = l0 * l0 - dot(l1, l1);
            let u0 = (l0 * r0 - dot(l1, r1)) / det;
            u[o] = u0;
            for k in 0..d - 1 {
                u[o + 1 + k] = (r1[k] - u0 * l1[k]) / l0;
            }
        }
        u
    }

    /// Largest `α ≥ 0` (capped at `cap`) with `x + α·dx` in the closed cone.
    pub fn max_step(&self, x: &[f64], dx: &[f64], cap: f64) -> f64 {
        let mut alpha = cap;
        for i in 0..self.nonneg {
            if dx[i] < 0.0 {
                alpha = alpha.min(-x[i] / dx[i]);
            }
        }
        for (o, d) in self.soc_blocks() {
            alpha = alpha.min(soc_step(&x[o..o + d], &dx[o..o + d], cap));
        }
        alpha.max(0.0)
    }
}

fn soc_step(x: &[f64], dx: &[f64], cap: f64) -> f64 {
    // q(α) = (x₀+αd₀)² − ‖x̄+αd̄‖² = aα² + 2bα + c, c > 0 for interior x.
    let a = dx[0] * dx[0] - dot(&dx[1..], &dx[1..]);
    let b = x[0] * dx[0] - dot(&x[1..], &dx[1..]);
    let c = x[0] * x[0] - dot(&x[1..], &x[1..]);
    let mut alpha = cap;
    if dx[0] < 0.0 {
        alpha = alpha.min(-x[0] / dx[0]);
    }
    if c <= 0.0 {
        return 0.0;
    }
    let root = if a.abs() <= f64::EPSILON * (b.abs() + c.abs()) {
        if b < 0.0 {
            Some(-c / (2.0 * b))
        } else {
            None
        }
    } else {
        let disc = b * b - a * c;
        if disc < 0.0 {
            None
        } else if a < 0.0 {
            // One root of each sign; take the positive one.
            let sd = disc.sqrt();
            Some((b + sd) / -a)
        } else if b < 0.0 {
            // Both roots positive; first crossing is the smaller one.
            let sd = disc.sqrt();
            Some(c / (-b + sd))
        } else {
            None
        }
    };
    if let Some(r) = root {
        if r >= 0.0 {
            alpha = alpha.min(r);
        }
    }
    alpha
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Nesterov–Todd scaling `W` with `W z = W⁻¹ s = λ`.
///
/// On the orthant `W = diag(√(s/z))`. On a Lorentz block
/// `W = η·W̄` where `W̄` is the hyperbolic Householder matrix built from
/// the unit-determinant vector `w̄`.
#[derive(Debug, Clone)]
pub struct NtScaling {
    layout: ConeLayout,
    diag: Vec<f64>,
    blocks: Vec<(f64, Vec<f64>)>,
    pub lambda: Vec<f64>,
}

impl NtScaling {
    pub fn new(layout: &ConeLayout, s: &[f64], z: &[f64]) -> Self {
        let mut diag = Vec::with_capacity(layout.nonneg);
        for i in 0..layout.nonneg {
            diag.push((s[i] / z[i]).sqrt());
        }
        let mut blocks = Vec::with_capacity(layout.soc.len());
        for (o, d) in layout.soc_blocks() {
            let sb = &s[o..o + d];
            let zb = &z[o..o + d];
            let sn = (sb[0] * sb[0] - dot(&sb[1..], &sb[1..])).max(f64::MIN_POSITIVE).sqrt();
            let zn = (zb[0] * zb[0] - dot(&zb[1..], &zb[1..])).max(f64::MIN_POSITIVE).sqrt();
            let eta = (sn / zn).sqrt();
            let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
            let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
            let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
            let mut w = vec![0.0; d];
            w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
            for k in 1..d {
                w[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
            }
            // Renormalise so that w₀² − ‖w̄₁‖² = 1 exactly.
            let wn = (w[0] * w[0] - dot(&w[1..], &w[1..])).sqrt();
            if wn.is_finite() && wn > 0.0 {
                w.iter_mut().for_each(|v| *v /= wn);
            }
            blocks.push((eta, w));
        }
        let mut sc = Self {
            layout: layout.clone(),
            diag,
            blocks,
            lambda: Vec::new(),
        };
        sc.lambda = sc.apply(z);
        sc
    }

    pub fn layout(&self) -> &ConeLayout {
        &self.layout
    }

    /// `W v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; v.len()];
        for i in 0..self.layout.nonneg {
            r[i] = self.diag[i] * v[i];
        }
        for ((o, d), (eta, w)) in self.layout.soc_blocks().zip(&self.blocks) {
            hyperbolic(w, &v[o..o + d], &mut r[o..o + d], false);
            r[o..o + d].iter_mut().for_each(|x| *x *= eta);
        }
        r
    }

    /// `W⁻¹ v`.
    pub fn apply_inv(&self, v: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; v.len()];
        for i in 0..self.layout.nonneg {
            r[i] = v[i] / self.diag[i];
        }
        for ((o, d), (eta, w)) in self.layout.soc_blocks().zip(&self.blocks) {
            hyperbolic(w, &v[o..o + d], &mut r[o..o + d], true);
            r[o..o + d].iter_mut().for_each(|x| *x /= eta);
        }
        r
    }

    pub fn apply_sq(&self, v: &[f64]) -> Vec<f64> {
        self.apply(&self.apply(v))
    }

    pub fn apply_inv_sq(&self, v: &[f64]) -> Vec<f64> {
        self.apply_inv(&self.apply_inv(v))
    }

    /// Applies `W⁻¹` of one Lorentz block to its rows in place: `rows[k]` is
    /// the k-th row of the block as a dense vector.
    pub fn apply_inv_block_rows(&self, block: usize, rows: &mut [Vec<f64>]) {
        let (eta, w) = &self.blocks[block];
        let d = w.len();
        let ncol = rows[0].len();
        let mut col = vec![0.0; d];
        let mut out = vec![0.0; d];
        for j in 0..ncol {
            let mut any = false;
            for k in 0..d {
                col[k] = rows[k][j];
                any |= col[k] != 0.0;
            }
            if !any {
                continue;
            }
            hyperbolic(w, &col, &mut out, true);
            for k in 0..d {
                rows[k][j] = out[k] / eta;
            }
        }
    }
}

/// `W̄ v` (or `W̄⁻¹ v = J W̄ J v` when `inverse`).
fn hyperbolic(w: &[f64], v: &[f64], out: &mut [f64], inverse: bool) {
    let d = w.len();
    let sgn = if inverse { -1.0 } else { 1.0 };
    let w0 = w[0];
    let w1v1 = dot(&w[1..], &v[1..]);
    out[0] = w0 * v[0] + sgn * w1v1;
    let coef = sgn * v[0] + w1v1 / (1.0 + w0);
    for k in 1..d {
        out[k] = v[k] + coef * w[k];
    }
}

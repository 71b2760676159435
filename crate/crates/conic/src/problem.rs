//! Problem description for linear-objective conic programs.
//!
//! A [`ConicProblem`] is
//!
//! ```text
//! minimize    cᵀx + c0
//! subject to  A x = b                       (equality rows)
//!             lo_k ≤ g_kᵀx ≤ hi_k           (ranged rows, either side may be infinite)
//!             l ≤ x ≤ u                     (boxes, ±∞ allowed)
//!             ‖u_i(x)‖₂ ≤ t_i(x)            (second-order cones over affine expressions)
//! ```

use crate::error::ConicError;

/// Index of a variable inside a [`ConicProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Sparse affine expression `Σ coef·x[idx] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self {
            terms: vec![(v.0, 1.0)],
            constant: 0.0,
        }
    }

    pub fn new(terms: Vec<(usize, f64)>, constant: f64) -> Self {
        Self { terms, constant }
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((v.0, coef));
        }
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, a)| acc + a * x[i])
    }

    /// Merges duplicate indices and drops exact zeros. Term order becomes ascending.
    pub fn compact(&mut self) {
        self.terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
        for &(i, a) in &self.terms {
            match out.last_mut() {
                Some((j, b)) if *j == i => *b += a,
                _ => out.push((i, a)),
            }
        }
        out.retain(|&(_, a)| a != 0.0);
        self.terms = out;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeRow {
    pub terms: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

/// `‖u‖₂ ≤ t` with every entry affine in the decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SocConstraint {
    pub t: LinExpr,
    pub u: Vec<LinExpr>,
}

impl SocConstraint {
    pub fn dim(&self) -> usize {
        1 + self.u.len()
    }

    /// `t(x) − ‖u(x)‖`; non-negative when satisfied.
    pub fn margin(&self, x: &[f64]) -> f64 {
        let t = self.t.eval(x);
        let nu = self.u.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
        t - nu
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProblem {
    pub names: Vec<String>,
    pub c: Vec<f64>,
    pub c0: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eqs: Vec<EqRow>,
    pub rows: Vec<RangeRow>,
    pub cones: Vec<SocConstraint>,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lo: f64, hi: f64, cost: f64) -> VarId {
        self.names.push(name.into());
        self.c.push(cost);
        self.lower.push(lo);
        self.upper.push(hi);
        VarId(self.c.len() - 1)
    }

    pub fn add_free_var(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY, cost)
    }

    pub fn set_cost(&mut self, v: VarId, cost: f64) {
        self.c[v.0] = cost;
    }

    pub fn add_eq(&mut self, terms: Vec<(VarId, f64)>, rhs: f64) -> usize {
        self.eqs.push(EqRow {
            terms: terms.into_iter().map(|(v, a)| (v.0, a)).collect(),
            rhs,
        });
        self.eqs.len() - 1
    }

    /// `lo ≤ expr ≤ hi`; the expression constant is folded into the bounds.
    pub fn add_range(&mut self, expr: &LinExpr, lo: f64, hi: f64) -> usize {
        self.rows.push(RangeRow {
            terms: expr.terms.clone(),
            lo: lo - expr.constant,
            hi: hi - expr.constant,
        });
        self.rows.len() - 1
    }

    pub fn add_soc(&mut self, t: LinExpr, u: Vec<LinExpr>) -> usize {
        self.cones.push(SocConstraint { t, u });
        self.cones.len() - 1
    }

    /// Cone in the index-tuple form `‖(x[u₁], …)‖ ≤ x[t]`.
    pub fn add_soc_vars(&mut self, t: VarId, u: &[VarId]) -> usize {
        self.add_soc(LinExpr::var(t), u.iter().map(|&v| LinExpr::var(v)).collect())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>() + self.c0
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        let n = self.c.len();
        if self.lower.len() != n || self.upper.len() != n || self.names.len() != n {
            return Err(ConicError::Dimension(format!(
                "{n} costs but {} lower, {} upper, {} names",
                self.lower.len(),
                self.upper.len(),
                self.names.len()
            )));
        }
        let check_terms = |what: &str, k: usize, terms: &[(usize, f64)]| {
            for &(i, a) in terms {
                if i >= n {
                    return Err(ConicError::Dimension(format!(
                        "{what} {k} references variable {i} but there are {n}"
                    )));
                }
                if !a.is_finite() {
                    return Err(ConicError::NonFinite(format!("{what} {k} coefficient")));
                }
            }
            Ok(())
        };
        for (k, r) in self.eqs.iter().enumerate() {
            check_terms("equality", k, &r.terms)?;
            if !r.rhs.is_finite() {
                return Err(ConicError::NonFinite(format!("equality {k} rhs")));
            }
        }
        for (k, r) in self.rows.iter().enumerate() {
            check_terms("row", k, &r.terms)?;
            if r.lo.is_nan() || r.hi.is_nan() {
                return Err(ConicError::NonFinite(format!("row {k} bound")));
            }
        }
        for (k, cone) in self.cones.iter().enumerate() {
            if cone.u.is_empty() {
                return Err(ConicError::Dimension(format!("cone {k} has no u entries")));
            }
            check_terms("cone", k, &cone.t.terms)?;
            for e in &cone.u {
                check_terms("cone", k, &e.terms)?;
            }
            // Index-tuple cones must not repeat a variable.
            let single = |e: &LinExpr| match e.terms.as_slice() {
                [(i, a)] if *a == 1.0 && e.constant == 0.0 => Some(*i),
                _ => None,
            };
            if let Some(t) = single(&cone.t) {
                let mut seen = vec![t];
                for e in &cone.u {
                    if let Some(i) = single(e) {
                        if seen.contains(&i) {
                            return Err(ConicError::Dimension(format!(
                                "cone {k} uses variable {i} twice"
                            )));
                        }
                        seen.push(i);
                    }
                }
            }
        }
        for (i, (&lo, &hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || !self.c[i].is_finite() {
                return Err(ConicError::NonFinite(format!("variable {i}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::MaxIterations => "max-iterations",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lagrange multipliers laid out like the constraints of the originating
/// [`ConicProblem`](crate::ConicProblem).
///
/// Sign convention: the stationarity condition reads
///
/// ```text
/// c + Aᵀy + Σ_k (row_hi_k − row_lo_k)·g_k + (box_hi − box_lo)
///     − Σ_i (z_i0·∇t_i + Σ_j z_ij·∇u_ij) = 0
/// ```
///
/// with every inequality multiplier non-negative and every cone multiplier
/// inside the (self-dual) Lorentz cone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Duals {
    pub eq: Vec<f64>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
    pub cones: Vec<Vec<f64>>,
}

impl Duals {
    pub fn zeros(p: &crate::ConicProblem) -> Self {
        Self {
            eq: vec![0.0; p.eqs.len()],
            row_lo: vec![0.0; p.rows.len()],
            row_hi: vec![0.0; p.rows.len()],
            box_lo: vec![0.0; p.num_vars()],
            box_hi: vec![0.0; p.num_vars()],
            cones: p.cones.iter().map(|c| vec![0.0; c.dim()]).collect(),
        }
    }

    pub fn scale(&mut self, f: f64) {
        let all = self
            .eq
            .iter_mut()
            .chain(self.row_lo.iter_mut())
            .chain(self.row_hi.iter_mut())
            .chain(self.box_lo.iter_mut())
            .chain(self.box_hi.iter_mut())
            .chain(self.cones.iter_mut().flatten());
        for v in all {
            *v *= f;
        }
    }
}

/// Scaled KKT residuals (see [`check_kkt`](crate::check_kkt) for definitions).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.primal <= tol && self.dual <= tol && self.gap <= tol
    }
}

/// Proof that no optimal point exists.
#[derive(Debug, Clone, PartialEq)]
pub enum Certificate {
    /// Farkas ray: multipliers in the dual cone with zero stationarity
    /// residual (ignoring `c`) and dual objective contribution `bᵀy + hᵀz = −1`.
    PrimalInfeasible(Duals),
    /// Improving primal ray `d` with `cᵀd = −1`.
    DualInfeasible(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub duals: Duals,
    pub objective: f64,
    pub kkt_residuals: KktResiduals,
    pub certificate: Option<Certificate>,
    pub iterations: usize,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub tol_infeas: f64,
    pub max_iter: usize,
    /// Row equilibration before the main loop.
    pub scale_rows: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            tol_infeas: 1e-8,
            max_iter: 200,
            scale_rows: true,
        }
    }
}

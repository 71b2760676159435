//! Interior-point solver for linear objectives over linear equalities,
//! ranged rows, variable boxes and second-order cones.
//!
//! ```
//! use dercap_conic::{solve, ConicProblem, LinExpr, SolverOptions};
//!
//! // min q  s.t.  ‖(4, q)‖ ≤ 5
//! let mut p = ConicProblem::new();
//! let q = p.add_free_var("q", 1.0);
//! p.add_soc(LinExpr::constant(5.0), vec![LinExpr::constant(4.0), LinExpr::var(q)]);
//! let sol = solve(&p, &SolverOptions::default()).unwrap();
//! assert!((sol.x[q.0] + 3.0).abs() < 1e-7);
//! ```

mod cones;
mod dump;
mod error;
mod kkt;
mod linsys;
mod problem;
mod solution;
mod solver;
mod stdform;

pub use dump::{dump, parse_dump, DUMP_HEADER};
pub use error::ConicError;
pub use kkt::{check_certificate, check_kkt, kkt_residuals, stationarity, CertificateCheck};
pub use problem::{ConicProblem, EqRow, LinExpr, RangeRow, SocConstraint, VarId};
pub use solution::{Certificate, ConicSolution, Duals, KktResiduals, SolverOptions, Status};
pub use solver::solve;

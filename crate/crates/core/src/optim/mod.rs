//! Small dense solvers: two-phase simplex LP and active-set QP.

pub mod lp;
pub mod qp;

pub use lp::{solve_lp, LinearProgram, LpOutcome};
pub use qp::{solve_qp, KktResiduals, QpError, QpSolution, QuadraticProgram, WarmStart};

//! Dense primal active-set method for strictly convex quadratic programs.
//!
//! ```text
//!     minimize    ½ xᵀ H x + gᵀ x
//!     subject to  E x  = e
//!                 A x ≤ b
//!                 lo ≤ x ≤ hi
//! ```
//!
//! Box bounds are handled as ordinary inequality rows. A feasible starting
//! point comes from the warm start, the clamped origin, or a phase-one LP.
//! Each working-set change re-solves the full KKT system; problem sizes are
//! small enough that factorization updates are not worth their complexity.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::lp::{solve_lp, LinearProgram, LpOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("constraint set is infeasible")]
    Infeasible,
    #[error("inconsistent bounds at coordinate {0}: lower > upper")]
    InconsistentBounds(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("KKT system is singular (Hessian not positive definite?)")]
    Singular,
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(hessian: DMatrix<f64>, gradient: DVector<f64>) -> Self {
        let n = gradient.len();
        QuadraticProgram {
            hessian,
            gradient,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn n(&self) -> usize {
        self.gradient.len()
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ub = a;
        self.b_ub = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.gradient.dot(x)
    }
}

/// Karush-Kuhn-Tucker residuals of a returned solution (all ∞-norms).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows.
    pub lambda_eq: DVector<f64>,
    /// Multipliers of the general inequality rows (≥ 0).
    pub lambda_ub: DVector<f64>,
    /// Multipliers of the lower and upper bounds (≥ 0).
    pub lambda_lower: DVector<f64>,
    pub lambda_upper: DVector<f64>,
    /// Active inequality rows, numbered general rows first, then lower bounds, then upper bounds.
    pub active: Vec<usize>,
    pub iterations: usize,
    pub kkt: KktResiduals,
}

#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    pub x: Option<DVector<f64>>,
    pub active: Vec<usize>,
}

/// Unified inequality row view: general rows, then `-x_i ≤ -lo_i`, then `x_i ≤ hi_i`.
struct Rows<'a> {
    qp: &'a QuadraticProgram,
    lower_idx: Vec<usize>,
    upper_idx: Vec<usize>,
}

impl<'a> Rows<'a> {
    fn new(qp: &'a QuadraticProgram) -> Self {
        let n = qp.n();
        Rows {
            qp,
            lower_idx: (0..n).filter(|&i| qp.lower[i].is_finite()).collect(),
            upper_idx: (0..n).filter(|&i| qp.upper[i].is_finite()).collect(),
        }
    }

    fn count(&self) -> usize {
        self.qp.a_ub.nrows() + self.lower_idx.len() + self.upper_idx.len()
    }

    /// Row `r` as (sparse coordinate or dense row, rhs).
    fn eval(&self, r: usize, x: &DVector<f64>) -> f64 {
        let m = self.qp.a_ub.nrows();
        let nl = self.lower_idx.len();
        if r < m {
            self.qp.a_ub.row(r).dot(&x.transpose())
        } else if r < m + nl {
            -x[self.lower_idx[r - m]]
        } else {
            x[self.upper_idx[r - m - nl]]
        }
    }

    fn rhs(&self, r: usize) -> f64 {
        let m = self.qp.a_ub.nrows();
        let nl = self.lower_idx.len();
        if r < m {
            self.qp.b_ub[r]
        } else if r < m + nl {
            -self.qp.lower[self.lower_idx[r - m]]
        } else {
            self.qp.upper[self.upper_idx[r - m - nl]]
        }
    }

    fn dense(&self, r: usize) -> DVector<f64> {
        let n = self.qp.n();
        let m = self.qp.a_ub.nrows();
        let nl = self.lower_idx.len();
        if r < m {
            self.qp.a_ub.row(r).transpose()
        } else if r < m + nl {
            let mut v = DVector::zeros(n);
            v[self.lower_idx[r - m]] = -1.0;
            v
        } else {
            let mut v = DVector::zeros(n);
            v[self.upper_idx[r - m - nl]] = 1.0;
            v
        }
    }

    fn scale(&self, r: usize) -> f64 {
        1.0 + self.rhs(r).abs()
    }
}

const FEAS_TOL: f64 = 1e-11;

pub fn solve_qp(qp: &QuadraticProgram, warm: Option<&WarmStart>) -> Result<QpSolution, QpError> {
    let n = qp.n();
    if qp.hessian.nrows() != n || qp.hessian.ncols() != n {
        return Err(QpError::Dimension("Hessian must be n×n".into()));
    }
    if qp.a_ub.ncols() != n || qp.a_eq.ncols() != n || qp.b_ub.len() != qp.a_ub.nrows() || qp.b_eq.len() != qp.a_eq.nrows() {
        return Err(QpError::Dimension("constraint shapes disagree".into()));
    }
    if qp.lower.len() != n || qp.upper.len() != n {
        return Err(QpError::Dimension("bounds must have length n".into()));
    }
    for i in 0..n {
        if qp.lower[i] > qp.upper[i] {
            return Err(QpError::InconsistentBounds(i));
        }
    }
    let rows = Rows::new(qp);
    let n_ineq = rows.count();
    let n_eq = qp.a_eq.nrows();

    let feasible = |x: &DVector<f64>| {
        (0..n_ineq).all(|r| rows.eval(r, x) - rows.rhs(r) <= FEAS_TOL * rows.scale(r))
            && (0..n_eq).all(|k| (qp.a_eq.row(k).dot(&x.transpose()) - qp.b_eq[k]).abs() <= FEAS_TOL * (1.0 + qp.b_eq[k].abs()))
    };

    let mut x = None;
    if let Some(w) = warm.and_then(|w| w.x.as_ref()) {
        if w.len() == n && feasible(w) {
            x = Some(w.clone());
        }
    }
    if x.is_none() {
        let mut origin = DVector::zeros(n);
        for i in 0..n {
            origin[i] = 0.0f64.clamp(qp.lower[i], qp.upper[i]);
        }
        if feasible(&origin) {
            x = Some(origin);
        }
    }
    let mut x = match x {
        Some(x) => x,
        None => phase_one(qp)?,
    };

    // Initial working set: hinted rows first, then any other row active at x,
    // keeping the set linearly independent.
    let mut working: Vec<usize> = Vec::new();
    let mut candidates: Vec<usize> = warm.map(|w| w.active.clone()).unwrap_or_default();
    candidates.extend(0..n_ineq);
    for r in candidates {
        if r >= n_ineq || working.contains(&r) {
            continue;
        }
        if (rows.eval(r, &x) - rows.rhs(r)).abs() <= FEAS_TOL * rows.scale(r) && independent(qp, &rows, &working, r) {
            working.push(r);
        }
    }

    let max_iter = 20 * (n + n_ineq + n_eq) + 100;
    let mut iterations = 0;
    let mut multipliers: Option<(DVector<f64>, DVector<f64>)> = None;
    // Set after an unblocked full step: x then minimizes over the working set
    // and any leftover step is rounding noise.
    let mut on_minimum = false;
    while iterations < max_iter {
        iterations += 1;
        let grad = &qp.hessian * &x + &qp.gradient;
        let (p, lam_eq, lam_w) = kkt_step(qp, &rows, &working, &grad)?;
        let pscale = 1.0 + x.amax();
        if on_minimum || p.amax() <= 1e-11 * pscale {
            on_minimum = false;
            // Stationary on the working set: check multiplier signs.
            let worst = lam_w
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < -1e-12)
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap());
            match worst {
                Some((k, _)) => {
                    working.remove(k);
                    continue;
                }
                None => {
                    multipliers = Some((lam_eq, lam_w));
                    break;
                }
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for r in 0..n_ineq {
            if working.contains(&r) {
                continue;
            }
            let ap = rows.dense(r).dot(&p);
            if ap > 1e-14 * (1.0 + p.amax()) {
                let slack = (rows.rhs(r) - rows.eval(r, &x)).max(0.0);
                let step = slack / ap;
                if step < alpha {
                    alpha = step;
                    blocking = Some(r);
                }
            }
        }
        x += &p * alpha;
        match blocking {
            Some(r) => working.push(r),
            None => on_minimum = true,
        }
    }
    let Some((lam_eq, lam_w)) = multipliers else {
        return Err(QpError::IterationLimit);
    };

    // Polish: re-solve the equality-constrained problem on the final working set.
    let (x, lam_eq, lam_w) = polish(qp, &rows, &working, x, lam_eq, lam_w)?;

    let m = qp.a_ub.nrows();
    let nl = rows.lower_idx.len();
    let mut lambda_ub = DVector::zeros(m);
    let mut lambda_lower = DVector::zeros(n);
    let mut lambda_upper = DVector::zeros(n);
    for (k, &r) in working.iter().enumerate() {
        let l = lam_w[k].max(0.0);
        if r < m {
            lambda_ub[r] = l;
        } else if r < m + nl {
            lambda_lower[rows.lower_idx[r - m]] = l;
        } else {
            lambda_upper[rows.upper_idx[r - m - nl]] = l;
        }
    }
    let kkt = kkt_residuals(qp, &x, &lam_eq, &lambda_ub, &lambda_lower, &lambda_upper);
    let mut active = working.clone();
    active.sort_unstable();
    Ok(QpSolution {
        objective: qp.objective(&x),
        x,
        lambda_eq: lam_eq,
        lambda_ub,
        lambda_lower,
        lambda_upper,
        active,
        iterations,
        kkt,
    })
}

fn independent(qp: &QuadraticProgram, rows: &Rows, working: &[usize], candidate: usize) -> bool {
    let n = qp.n();
    let k = qp.a_eq.nrows() + working.len() + 1;
    if k > n {
        return false;
    }
    let mut m = DMatrix::zeros(k, n);
    for i in 0..qp.a_eq.nrows() {
        m.set_row(i, &qp.a_eq.row(i));
    }
    for (j, &r) in working.iter().chain(std::iter::once(&candidate)).enumerate() {
        m.set_row(qp.a_eq.nrows() + j, &rows.dense(r).transpose());
    }
    let sv = m.singular_values();
    let max = sv.max();
    sv.min() > 1e-10 * max.max(1.0)
}

fn constraint_matrix(qp: &QuadraticProgram, rows: &Rows, working: &[usize]) -> DMatrix<f64> {
    let n = qp.n();
    let ne = qp.a_eq.nrows();
    let mut a = DMatrix::zeros(ne + working.len(), n);
    for i in 0..ne {
        a.set_row(i, &qp.a_eq.row(i));
    }
    for (j, &r) in working.iter().enumerate() {
        a.set_row(ne + j, &rows.dense(r).transpose());
    }
    a
}

fn solve_kkt(h: &DMatrix<f64>, a: &DMatrix<f64>, rhs_x: &DVector<f64>, rhs_c: &DVector<f64>) -> Result<DVector<f64>, QpError> {
    let n = h.nrows();
    let k = a.nrows();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(h);
    kkt.view_mut((0, n), (n, k)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (k, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(rhs_x);
    rhs.rows_mut(n, k).copy_from(rhs_c);
    let lu = kkt.clone().lu();
    let mut sol = lu.solve(&rhs).ok_or(QpError::Singular)?;
    // Two rounds of iterative refinement.
    for _ in 0..2 {
        let r = &rhs - &kkt * &sol;
        if let Some(d) = lu.solve(&r) {
            sol += d;
        }
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(QpError::Singular);
    }
    Ok(sol)
}

/// Step `p` toward the minimizer on the working set, with multipliers.
fn kkt_step(
    qp: &QuadraticProgram,
    rows: &Rows,
    working: &[usize],
    grad: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), QpError> {
    let n = qp.n();
    let a = constraint_matrix(qp, rows, working);
    let k = a.nrows();
    let sol = solve_kkt(&qp.hessian, &a, &(-grad), &DVector::zeros(k))?;
    let p = sol.rows(0, n).into_owned();
    let lam = sol.rows(n, k).into_owned();
    let ne = qp.a_eq.nrows();
    Ok((p, lam.rows(0, ne).into_owned(), lam.rows(ne, k - ne).into_owned()))
}

/// Solve directly for x on the active set (constraints held with equality).
fn polish(
    qp: &QuadraticProgram,
    rows: &Rows,
    working: &[usize],
    x: DVector<f64>,
    lam_eq: DVector<f64>,
    lam_w: DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), QpError> {
    let n = qp.n();
    let a = constraint_matrix(qp, rows, working);
    let ne = qp.a_eq.nrows();
    let mut b = DVector::zeros(a.nrows());
    for i in 0..ne {
        b[i] = qp.b_eq[i];
    }
    for (j, &r) in working.iter().enumerate() {
        b[ne + j] = rows.rhs(r);
    }
    let Ok(sol) = solve_kkt(&qp.hessian, &a, &(-&qp.gradient), &b) else {
        return Ok((x, lam_eq, lam_w));
    };
    let xp = sol.rows(0, n).into_owned();
    // Keep the polished point only if it stays feasible and multipliers keep their sign.
    let lam = sol.rows(n, a.nrows()).into_owned();
    let ok = (0..rows.count()).all(|r| rows.eval(r, &xp) - rows.rhs(r) <= FEAS_TOL * rows.scale(r))
        && lam.rows(ne, working.len()).iter().all(|&l| l >= -1e-12);
    if ok {
        Ok((xp, lam.rows(0, ne).into_owned(), lam.rows(ne, working.len()).into_owned()))
    } else {
        Ok((x, lam_eq, lam_w))
    }
}

/// Phase one: any point satisfying all constraints, via LP.
fn phase_one(qp: &QuadraticProgram) -> Result<DVector<f64>, QpError> {
    let n = qp.n();
    let lp = LinearProgram::new(DVector::zeros(n))
        .with_inequalities(qp.a_ub.clone(), qp.b_ub.clone())
        .with_equalities(qp.a_eq.clone(), qp.b_eq.clone())
        .with_bounds(qp.lower.clone(), qp.upper.clone());
    match solve_lp(&lp) {
        LpOutcome::Optimal { x, .. } => {
            // Simplex output can sit a hair outside bounds after unshifting.
            let mut x = x;
            for i in 0..n {
                x[i] = x[i].clamp(qp.lower[i], qp.upper[i]);
            }
            Ok(x)
        }
        _ => Err(QpError::Infeasible),
    }
}

pub fn kkt_residuals(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    lambda_eq: &DVector<f64>,
    lambda_ub: &DVector<f64>,
    lambda_lower: &DVector<f64>,
    lambda_upper: &DVector<f64>,
) -> KktResiduals {
    let mut stat = &qp.hessian * x + &qp.gradient;
    if qp.a_eq.nrows() > 0 {
        stat += qp.a_eq.transpose() * lambda_eq;
    }
    if qp.a_ub.nrows() > 0 {
        stat += qp.a_ub.transpose() * lambda_ub;
    }
    stat += lambda_upper - lambda_lower;

    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for r in 0..qp.a_ub.nrows() {
        let s = qp.a_ub.row(r).dot(&x.transpose()) - qp.b_ub[r];
        primal = primal.max(s);
        comp = comp.max((lambda_ub[r] * s).abs());
    }
    for r in 0..qp.a_eq.nrows() {
        primal = primal.max((qp.a_eq.row(r).dot(&x.transpose()) - qp.b_eq[r]).abs());
    }
    for i in 0..qp.n() {
        if qp.lower[i].is_finite() {
            let s = qp.lower[i] - x[i];
            primal = primal.max(s);
            comp = comp.max((lambda_lower[i] * s).abs());
        }
        if qp.upper[i].is_finite() {
            let s = x[i] - qp.upper[i];
            primal = primal.max(s);
            comp = comp.max((lambda_upper[i] * s).abs());
        }
    }
    let dual = lambda_ub
        .iter()
        .chain(lambda_lower.iter())
        .chain(lambda_upper.iter())
        .fold(0.0f64, |m, &l| m.max(-l));
    KktResiduals {
        stationarity: stat.amax(),
        primal: primal.max(0.0),
        dual,
        complementarity: comp,
    }
}

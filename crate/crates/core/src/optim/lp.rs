//! Dense two-phase simplex with Bland's rule.
//!
//! Problems here are small (tens of variables and rows) and solved many
//! times, so the tableau is kept dense and pivot selection favors
//! determinism over speed.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

/// `minimize cᵀx  s.t.  A_ub x ≤ b_ub,  A_eq x = b_eq,  lower ≤ x ≤ upper`.
/// Infinite bounds mean unbounded in that direction.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl LinearProgram {
    /// Free variables, no constraints.
    pub fn new(c: DVector<f64>) -> Self {
        let n = c.len();
        LinearProgram {
            c,
            a_ub: DMatrix::zeros(0, n),
            b_ub: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn n(&self) -> usize {
        self.c.len()
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

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(&self) -> Option<(&DVector<f64>, f64)> {
        match self {
            LpOutcome::Optimal { x, objective } => Some((x, *objective)),
            _ => None,
        }
    }
}

/// How an original variable maps onto non-negative standard-form columns.
#[derive(Clone, Copy)]
enum VarMap {
    /// x = lo + s
    Shifted { col: usize, lo: f64 },
    /// x = hi − s
    Mirrored { col: usize, hi: f64 },
    /// x = s⁺ − s⁻
    Split { pos: usize, neg: usize },
}

pub fn solve_lp(lp: &LinearProgram) -> LpOutcome {
    let n = lp.n();
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    // Extra rows for finite upper bounds of shifted variables.
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let (lo, hi) = (lp.lower[i], lp.upper[i]);
        if lo > hi {
            return LpOutcome::Infeasible;
        }
        if lo.is_finite() {
            maps.push(VarMap::Shifted { col: ncols, lo });
            if hi.is_finite() {
                bound_rows.push((ncols, hi - lo));
            }
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Mirrored { col: ncols, hi });
            ncols += 1;
        } else {
            maps.push(VarMap::Split {
                pos: ncols,
                neg: ncols + 1,
            });
            ncols += 2;
        }
    }

    // Standard-form rows: (coefficients over structural columns, rhs, is_inequality).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    let push_row = |coef: &[f64], rhs: f64, ineq: bool, rows: &mut Vec<(Vec<f64>, f64, bool)>| {
        let mut r = vec![0.0; ncols];
        let mut b = rhs;
        for (i, &a) in coef.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[i] {
                VarMap::Shifted { col, lo } => {
                    r[col] += a;
                    b -= a * lo;
                }
                VarMap::Mirrored { col, hi } => {
                    r[col] -= a;
                    b -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    r[pos] += a;
                    r[neg] -= a;
                }
            }
        }
        rows.push((r, b, ineq));
    };
    for k in 0..lp.a_ub.nrows() {
        let coef: Vec<f64> = lp.a_ub.row(k).iter().copied().collect();
        push_row(&coef, lp.b_ub[k], true, &mut rows);
    }
    for k in 0..lp.a_eq.nrows() {
        let coef: Vec<f64> = lp.a_eq.row(k).iter().copied().collect();
        push_row(&coef, lp.b_eq[k], false, &mut rows);
    }
    for &(col, ub) in &bound_rows {
        let mut r = vec![0.0; ncols];
        r[col] = 1.0;
        rows.push((r, ub, true));
    }

    let mut cost = vec![0.0; ncols];
    for (i, m) in maps.iter().enumerate() {
        let c = lp.c[i];
        match *m {
            VarMap::Shifted { col, .. } => cost[col] += c,
            VarMap::Mirrored { col, .. } => cost[col] -= c,
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.2).count();
    // Columns: structural | slack | artificial | rhs
    let n_struct = ncols + n_slack;
    let width = n_struct + m + 1;
    let mut t = DMatrix::<f64>::zeros(m, width);
    let mut basis = vec![0usize; m];
    let mut slack = ncols;
    for (k, (r, b, ineq)) in rows.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            t[(k, j)] = v;
        }
        if *ineq {
            t[(k, slack)] = 1.0;
            slack += 1;
        }
        t[(k, width - 1)] = *b;
        if *b < 0.0 {
            for j in 0..width {
                t[(k, j)] = -t[(k, j)];
            }
        }
        t[(k, n_struct + k)] = 1.0;
        basis[k] = n_struct + k;
    }

    let mut tab = Tableau { t, basis };

    // Phase 1: minimize the sum of artificials.
    let mut phase1 = vec![0.0; width - 1];
    for a in n_struct..n_struct + m {
        phase1[a] = 1.0;
    }
    if tab.optimize(&phase1, width - 1).is_err() {
        return LpOutcome::Infeasible;
    }
    let infeas: f64 = (0..m)
        .filter(|&k| tab.basis[k] >= n_struct)
        .map(|k| tab.t[(k, width - 1)])
        .sum();
    let scale = 1.0 + rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    if infeas > FEAS_TOL * scale {
        return LpOutcome::Infeasible;
    }
    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut k = 0;
    while k < tab.basis.len() {
        if tab.basis[k] >= n_struct {
            let entering = (0..n_struct).find(|&j| tab.t[(k, j)].abs() > PIVOT_TOL);
            match entering {
                Some(j) => tab.pivot(k, j),
                None => {
                    tab.remove_row(k);
                    continue;
                }
            }
        }
        k += 1;
    }

    // Phase 2 over structural columns only.
    let mut phase2 = vec![0.0; width - 1];
    phase2[..ncols].copy_from_slice(&cost);
    if tab.optimize(&phase2, n_struct).is_err() {
        return LpOutcome::Unbounded;
    }

    let mut s = vec![0.0; n_struct];
    for (k, &b) in tab.basis.iter().enumerate() {
        if b < n_struct {
            s[b] = tab.t[(k, width - 1)];
        }
    }
    let x = DVector::from_iterator(
        n,
        maps.iter().map(|m| match *m {
            VarMap::Shifted { col, lo } => lo + s[col],
            VarMap::Mirrored { col, hi } => hi - s[col],
            VarMap::Split { pos, neg } => s[pos] - s[neg],
        }),
    );
    let objective = lp.c.dot(&x);
    LpOutcome::Optimal { x, objective }
}

struct Tableau {
    t: DMatrix<f64>,
    basis: Vec<usize>,
}

struct UnboundedDirection;

impl Tableau {
    fn rhs_col(&self) -> usize {
        self.t.ncols() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.t.ncols();
        let p = self.t[(row, col)];
        for j in 0..w {
            self.t[(row, j)] /= p;
        }
        for k in 0..self.t.nrows() {
            if k == row {
                continue;
            }
            let f = self.t[(k, col)];
            if f != 0.0 {
                for j in 0..w {
                    let v = self.t[(row, j)];
                    if v != 0.0 {
                        self.t[(k, j)] -= f * v;
                    }
                }
                self.t[(k, col)] = 0.0;
            }
        }
        self.basis[row] = col;
    }

    fn remove_row(&mut self, row: usize) {
        self.t = self.t.clone().remove_row(row);
        self.basis.remove(row);
    }

    /// Minimize `cost` over columns `< allowed`. Entering columns follow
    /// Dantzig's rule; after a run of degenerate pivots the choice falls back
    /// to Bland's rule, which cannot cycle.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> Result<(), UnboundedDirection> {
        let rhs = self.rhs_col();
        let m = self.t.nrows();
        // Reduced costs c_j − c_Bᵀ B⁻¹ a_j (the tableau already holds B⁻¹A).
        let mut reduced: Vec<f64> = (0..allowed)
            .map(|j| {
                let mut rc = cost[j];
                for (k, &b) in self.basis.iter().enumerate() {
                    let cb = cost.get(b).copied().unwrap_or(0.0);
                    if cb != 0.0 {
                        rc -= cb * self.t[(k, j)];
                    }
                }
                rc
            })
            .collect();
        let mut degenerate_run = 0;
        let max_iter = 50 * (self.t.ncols() + m) + 1000;
        for _ in 0..max_iter {
            let mut is_basic = vec![false; allowed];
            for &b in &self.basis {
                if b < allowed {
                    is_basic[b] = true;
                }
            }
            let bland = degenerate_run > 2 * m;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..allowed {
                if is_basic[j] || reduced[j] >= -1e-10 {
                    continue;
                }
                if bland {
                    entering = Some((j, reduced[j]));
                    break;
                }
                if entering.is_none_or(|(_, best)| reduced[j] < best) {
                    entering = Some((j, reduced[j]));
                }
            }
            let Some((col, _)) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for k in 0..m {
                let a = self.t[(k, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(k, rhs)].max(0.0) / a;
                    leave = match leave {
                        None => Some((k, ratio)),
                        Some((lk, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[k] < self.basis[lk]) {
                                Some((k, ratio))
                            } else {
                                Some((lk, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(UnboundedDirection);
            };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, col);
            let f = reduced[col];
            for (j, r) in reduced.iter_mut().enumerate() {
                let v = self.t[(row, j)];
                if v != 0.0 {
                    *r -= f * v;
                }
            }
            reduced[col] = 0.0;
        }
        log::warn!("simplex iteration cap reached");
        Ok(())
    }
}

//! Flat-ground and multi-contact CoM support regions.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::contact::{resolve, ContactPoint, ResolvedContact};
use super::polygon;
use super::{FeasibilityError, RegionMode, SupportRegion};
use crate::kinematics::{forward_kinematics, gravity_torques_at, RobotModel, GRAVITY};
use crate::optim::{solve_lp, LinearProgram, LpOutcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegionOptions {
    /// Include joint torque bounds along each contact limb.
    pub actuation: bool,
    /// Stop once the outer/inner area gap is below this (m²).
    pub tolerance: f64,
    /// Upper bound on projection LPs.
    pub max_directions: usize,
    /// Half-width of the box around the contact centroid that bounds the CoM (m).
    pub com_bound: f64,
}

impl Default for RegionOptions {
    fn default() -> Self {
        RegionOptions {
            actuation: true,
            tolerance: 1e-4,
            max_directions: 256,
            com_bound: 10.0,
        }
    }
}

impl RegionOptions {
    pub fn friction_only() -> Self {
        RegionOptions {
            actuation: false,
            ..Self::default()
        }
    }
}

/// Convex hull of the contact points projected on the ground plane.
pub fn support_region_flat(model: &RobotModel, q: &DVector<f64>, contacts: &[ContactPoint]) -> Result<SupportRegion, FeasibilityError> {
    if contacts.is_empty() {
        return Err(FeasibilityError::NoContacts);
    }
    let kin = forward_kinematics(model, q)?;
    let mut pts = Vec::with_capacity(contacts.len());
    for c in contacts {
        let rc = resolve(model, &kin, c)?;
        pts.push([rc.world_point.x, rc.world_point.y]);
    }
    Ok(SupportRegion::new(polygon::convex_hull(&pts), RegionMode::Flat))
}

/// Static-equilibrium LP in the cone coefficients λ and the CoM ground position.
///
/// Variables are `[λ₁ … λₖ, cx, cy]`. Equalities are force balance
/// `Σ Gλ = m·g·ẑ` and moment balance about the origin
/// `Σ pᵢ × Gᵢλᵢ + m·g·(−cy, cx, 0) = 0`. With actuation, every limb coordinate
/// keeps `τ = g(q) − Σ Jᵢᵀ Gᵢ λᵢ` inside its torque bounds.
#[derive(Clone, Debug)]
pub struct EquilibriumLp {
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ub: DMatrix<f64>,
    pub b_ub: DVector<f64>,
    /// Number of cone coefficients; the CoM occupies the last two columns.
    pub n_lambda: usize,
    /// Centroid of the contact points in xy.
    pub center: [f64; 2],
}

impl EquilibriumLp {
    pub fn new(
        model: &RobotModel,
        q: &DVector<f64>,
        contacts: &[ContactPoint],
        actuation: bool,
    ) -> Result<Self, FeasibilityError> {
        if contacts.is_empty() {
            return Err(FeasibilityError::NoContacts);
        }
        let kin = forward_kinematics(model, q)?;
        let resolved: Vec<ResolvedContact> = contacts.iter().map(|c| resolve(model, &kin, c)).collect::<Result<_, _>>()?;
        let n_lambda: usize = resolved.iter().map(|r| r.generators.ncols()).sum();
        let n = n_lambda + 2;
        let mg = model.total_mass() * GRAVITY;
        if !(mg > 0.0) {
            return Err(FeasibilityError::Model(crate::kinematics::ModelError::ZeroMass));
        }

        let mut a_eq = DMatrix::zeros(6, n);
        let mut b_eq = DVector::zeros(6);
        b_eq[2] = mg;
        let mut col = 0;
        for rc in &resolved {
            let p = rc.world_point;
            for g in rc.generators.column_iter() {
                let g: Vector3<f64> = g.into();
                let m = p.cross(&g);
                for r in 0..3 {
                    a_eq[(r, col)] = g[r];
                    a_eq[(3 + r, col)] = m[r];
                }
                col += 1;
            }
        }
        a_eq[(3, n_lambda + 1)] = -mg;
        a_eq[(4, n_lambda)] = mg;

        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        if actuation {
            let mut coords: Vec<usize> = resolved.iter().flat_map(|r| r.coords.iter().copied()).collect();
            coords.sort_unstable();
            coords.dedup();
            let gravity = gravity_torques_at(model, &kin);
            let (lo, hi) = model.torque_bounds();
            for &k in &coords {
                // (JᵀGλ)ₖ summed over contacts.
                let mut row = DVector::zeros(n);
                let mut col = 0;
                for rc in &resolved {
                    let jk = rc.jacobian.column(k);
                    for g in rc.generators.column_iter() {
                        row[col] = jk.dot(&g);
                        col += 1;
                    }
                }
                // τ ≤ hi  ⇔  −row·λ ≤ hi − g ;  τ ≥ lo  ⇔  row·λ ≤ g − lo
                rows.push((-&row, hi[k] - gravity[k]));
                rows.push((row, gravity[k] - lo[k]));
            }
        }
        let mut a_ub = DMatrix::zeros(rows.len(), n);
        let mut b_ub = DVector::zeros(rows.len());
        for (i, (r, b)) in rows.into_iter().enumerate() {
            a_ub.set_row(i, &r.transpose());
            b_ub[i] = b;
        }
        let k = resolved.len() as f64;
        let center = [
            resolved.iter().map(|r| r.world_point.x).sum::<f64>() / k,
            resolved.iter().map(|r| r.world_point.y).sum::<f64>() / k,
        ];
        Ok(EquilibriumLp {
            a_eq,
            b_eq,
            a_ub,
            b_ub,
            n_lambda,
            center,
        })
    }

    fn program(&self, c: DVector<f64>, com_lo: [f64; 2], com_hi: [f64; 2]) -> LinearProgram {
        let n = self.n_lambda + 2;
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::from_element(n, f64::INFINITY);
        for i in 0..2 {
            lo[self.n_lambda + i] = com_lo[i];
            hi[self.n_lambda + i] = com_hi[i];
        }
        LinearProgram::new(c)
            .with_equalities(self.a_eq.clone(), self.b_eq.clone())
            .with_inequalities(self.a_ub.clone(), self.b_ub.clone())
            .with_bounds(lo, hi)
    }

    /// CoM position maximizing `d·c`, or None if no equilibrium exists.
    pub fn support_point(&self, d: [f64; 2], bound: f64) -> Option<[f64; 2]> {
        let n = self.n_lambda + 2;
        let mut c = DVector::zeros(n);
        c[self.n_lambda] = -d[0];
        c[self.n_lambda + 1] = -d[1];
        let (cx, cy) = (self.center[0], self.center[1]);
        let lp = self.program(c, [cx - bound, cy - bound], [cx + bound, cy + bound]);
        match solve_lp(&lp) {
            LpOutcome::Optimal { x, .. } => Some([x[self.n_lambda], x[self.n_lambda + 1]]),
            _ => None,
        }
    }

    /// Whether some equilibrium exists with the CoM inside the box `com ± half`.
    pub fn feasible_at(&self, com: [f64; 2], half: f64) -> bool {
        let lp = self.program(
            DVector::zeros(self.n_lambda + 2),
            [com[0] - half, com[1] - half],
            [com[0] + half, com[1] + half],
        );
        matches!(solve_lp(&lp), LpOutcome::Optimal { .. })
    }
}

struct Support {
    angle: f64,
    dir: [f64; 2],
    point: [f64; 2],
}

impl Support {
    fn offset(&self) -> f64 {
        self.dir[0] * self.point[0] + self.dir[1] * self.point[1]
    }
}

fn outer_polygon(supports: &[Support], center: [f64; 2], bound: f64) -> Vec<[f64; 2]> {
    let (cx, cy) = (center[0], center[1]);
    let mut poly = vec![
        [cx - bound, cy - bound],
        [cx + bound, cy - bound],
        [cx + bound, cy + bound],
        [cx - bound, cy + bound],
    ];
    for s in supports {
        poly = polygon::clip_halfplane(&poly, s.dir, s.offset());
    }
    poly
}

/// Area between the inner edge of two neighboring supports and the corner
/// where their supporting lines meet.
fn edge_gap(a: &Support, b: &Support) -> f64 {
    let (pa, pb) = (a.point, b.point);
    let det = a.dir[0] * b.dir[1] - a.dir[1] * b.dir[0];
    if det.abs() < 1e-12 {
        return 0.0;
    }
    let (ha, hb) = (a.offset(), b.offset());
    let corner = [(ha * b.dir[1] - hb * a.dir[1]) / det, (a.dir[0] * hb - b.dir[0] * ha) / det];
    let cross = (pb[0] - pa[0]) * (corner[1] - pa[1]) - (pb[1] - pa[1]) * (corner[0] - pa[0]);
    0.5 * cross.abs()
}

/// Friction- (and optionally actuation-) consistent CoM region by iterative
/// projection of the equilibrium LP onto the CoM plane. Returns the inner
/// polygon; `tolerance` holds the outer/inner area gap reached.
pub fn support_region_multicontact(
    model: &RobotModel,
    q: &DVector<f64>,
    contacts: &[ContactPoint],
    options: &RegionOptions,
) -> Result<SupportRegion, FeasibilityError> {
    if !(options.tolerance > 0.0 && options.com_bound > 0.0) {
        return Err(FeasibilityError::Options("tolerance and com_bound must be positive".into()));
    }
    let lp = EquilibriumLp::new(model, q, contacts, options.actuation)?;
    let bound = options.com_bound;
    let mut supports: Vec<Support> = Vec::new();
    for k in 0..4 {
        let angle = k as f64 * std::f64::consts::FRAC_PI_2;
        let dir = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]][k];
        match lp.support_point(dir, bound) {
            Some(point) => supports.push(Support { angle, dir, point }),
            None => {
                return Ok(SupportRegion::new(Vec::new(), RegionMode::MultiContact));
            }
        }
    }
    let mut gap;
    loop {
        let inner = polygon::convex_hull(&supports.iter().map(|s| s.point).collect::<Vec<_>>());
        let outer = outer_polygon(&supports, lp.center, bound);
        gap = (polygon::area(&outer) - polygon::area(&inner)).max(0.0);
        if gap < options.tolerance || supports.len() >= options.max_directions {
            if gap >= options.tolerance {
                log::warn!("support region stopped at {} directions with area gap {gap:.3e}", supports.len());
            }
            let mut region = SupportRegion::new(inner, RegionMode::MultiContact);
            region.tolerance = gap;
            return Ok(region);
        }
        let m = supports.len();
        let (best, best_gap) = (0..m)
            .map(|i| (i, edge_gap(&supports[i], &supports[(i + 1) % m])))
            .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        let (a, b) = (&supports[best], &supports[(best + 1) % m]);
        let (dx, dy) = (b.point[0] - a.point[0], b.point[1] - a.point[1]);
        let len = (dx * dx + dy * dy).sqrt();
        let dir = if best_gap > 0.0 && len > 1e-12 {
            [dy / len, -dx / len]
        } else {
            // Coincident support points: bisect the direction interval instead.
            let mid = 0.5 * (a.dir[0] + b.dir[0]);
            let mid_y = 0.5 * (a.dir[1] + b.dir[1]);
            let l = (mid * mid + mid_y * mid_y).sqrt();
            [mid / l, mid_y / l]
        };
        let mut angle = dir[1].atan2(dir[0]);
        if angle < 0.0 {
            angle += std::f64::consts::TAU;
        }
        let point = lp
            .support_point(dir, bound)
            .ok_or_else(|| FeasibilityError::Numerical("projection LP failed after a feasible direction".into()))?;
        let pos = supports.partition_point(|s| s.angle < angle);
        if supports.get(pos).is_some_and(|s| (s.angle - angle).abs() < 1e-12) {
            let mut region = SupportRegion::new(inner, RegionMode::MultiContact);
            region.tolerance = gap;
            return Ok(region);
        }
        supports.insert(pos, Support { angle, dir, point });
    }
}

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::contact::{resolve, ContactPoint};
use super::FeasibilityError;
use crate::kinematics::{forward_kinematics, gravity_torques_at, RobotModel};
use crate::optim::{solve_qp, QpError, QuadraticProgram};

/// Relative weight of the ‖λ‖² term that makes the force distribution unique.
const FORCE_REGULARIZATION: f64 = 1e-9;
/// Residual below which the contact set counts as balancing the robot.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointTorque {
    pub joint: String,
    pub torque: f64,
    pub lower: f64,
    pub upper: f64,
    /// `|τ|` over the bound on its side; ∞ when that bound is zero and τ is not.
    pub saturation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueReport {
    /// One entry per actuated coordinate, in configuration order.
    pub joints: Vec<JointTorque>,
    /// World contact force on the robot at each contact (N).
    pub contact_forces: Vec<Vector3<f64>>,
    /// Unbalanced base force and moment (N, N·m); zero for fixed-base models.
    pub force_residual: f64,
    pub moment_residual: f64,
    /// Whether the contact forces balance the robot within tolerance.
    pub balanced: bool,
}

impl TorqueReport {
    pub fn torque(&self, joint: &str) -> Option<f64> {
        self.joints.iter().find(|j| j.joint == joint).map(|j| j.torque)
    }

    pub fn saturation(&self, joint: &str) -> Option<f64> {
        self.joints.iter().find(|j| j.joint == joint).map(|j| j.saturation)
    }

    pub fn max_saturation(&self) -> f64 {
        self.joints.iter().map(|j| j.saturation).fold(0.0, f64::max)
    }

    pub fn total_force(&self) -> Vector3<f64> {
        self.contact_forces.iter().sum()
    }
}

pub fn saturation_ratio(torque: f64, lower: f64, upper: f64) -> f64 {
    let bound = if torque >= 0.0 { upper } else { -lower };
    if torque == 0.0 {
        0.0
    } else if bound > 0.0 {
        torque.abs() / bound
    } else {
        f64::INFINITY
    }
}

/// Static joint torques under gravity with contact forces chosen to minimize
/// Σ τ², subject to base equilibrium and the linearized friction cones.
///
/// Generalized statics: `Sᵀτ = g(q) − Σ Jᵢᵀ fᵢ`. Base coordinates must balance;
/// when they cannot, the forces minimizing the base residual are reported
/// with `balanced = false`.
pub fn static_torques(model: &RobotModel, q: &DVector<f64>, contacts: &[ContactPoint]) -> Result<TorqueReport, FeasibilityError> {
    let kin = forward_kinematics(model, q)?;
    let resolved = contacts.iter().map(|c| resolve(model, &kin, c)).collect::<Result<Vec<_>, _>>()?;
    let gravity = gravity_torques_at(model, &kin);
    let dof = model.dof();
    let nl: usize = resolved.iter().map(|r| r.generators.ncols()).sum();

    // B = Σ Jᵢᵀ Gᵢ, generalized force per unit cone coefficient.
    let mut b = DMatrix::zeros(dof, nl);
    let mut col = 0;
    for rc in &resolved {
        let jg = rc.jacobian.transpose() * &rc.generators;
        b.columns_mut(col, jg.ncols()).copy_from(&jg);
        col += jg.ncols();
    }
    let mut base = Vec::new();
    let mut actuated = Vec::new();
    for j in &model.joints {
        if j.is_actuated() {
            actuated.extend(j.coords());
        } else {
            base.extend(j.coords());
        }
    }
    let pick = |rows: &[usize]| DMatrix::from_fn(rows.len(), nl, |i, c| b[(rows[i], c)]);
    let (b_act, b_base) = (pick(&actuated), pick(&base));
    let g_act = DVector::from_fn(actuated.len(), |i, _| gravity[actuated[i]]);
    let g_base = DVector::from_fn(base.len(), |i, _| gravity[base[i]]);

    let lambda = if nl == 0 {
        DVector::zeros(0)
    } else {
        let lower = DVector::zeros(nl);
        let upper = DVector::from_element(nl, f64::INFINITY);
        let torque_hess = b_act.transpose() * &b_act;
        let eps = FORCE_REGULARIZATION * (1.0 + torque_hess.diagonal().amax());
        let h = (torque_hess + DMatrix::identity(nl, nl) * eps) * 2.0;
        let grad = -2.0 * b_act.transpose() * &g_act;
        let qp = QuadraticProgram::new(h, grad)
            .with_equalities(b_base.clone(), g_base.clone())
            .with_bounds(lower.clone(), upper.clone());
        match solve_qp(&qp, None) {
            Ok(sol) => sol.x,
            Err(QpError::Infeasible) | Err(QpError::Singular) => {
                // Least-residual forces instead.
                let base_hess = b_base.transpose() * &b_base;
                let eps = FORCE_REGULARIZATION * (1.0 + base_hess.diagonal().amax());
                let h = (base_hess + DMatrix::identity(nl, nl) * eps) * 2.0;
                let grad = -2.0 * b_base.transpose() * &g_base;
                let qp = QuadraticProgram::new(h, grad).with_bounds(lower, upper);
                solve_qp(&qp, None).map_err(|e| FeasibilityError::Numerical(e.to_string()))?.x
            }
            Err(e) => return Err(FeasibilityError::Numerical(e.to_string())),
        }
    };

    let generalized = &gravity - &b * &lambda;
    let (lo, hi) = model.torque_bounds();
    let mut joints = Vec::with_capacity(actuated.len());
    for j in model.joints.iter().filter(|j| j.is_actuated()) {
        for (k, c) in j.coords().enumerate() {
            let name = if j.dof() == 1 { j.name.clone() } else { format!("{}[{k}]", j.name) };
            let t = generalized[c];
            joints.push(JointTorque {
                joint: name,
                torque: t,
                lower: lo[c],
                upper: hi[c],
                saturation: saturation_ratio(t, lo[c], hi[c]),
            });
        }
    }
    let (mut fr, mut mr) = (0.0f64, 0.0f64);
    for j in model.joints.iter().filter(|j| !j.is_actuated()) {
        for (k, c) in j.coords().enumerate() {
            let r = generalized[c] * generalized[c];
            if j.kind.is_angular(k) {
                mr += r;
            } else {
                fr += r;
            }
        }
    }
    let (force_residual, moment_residual) = (fr.sqrt(), mr.sqrt());
    let mut contact_forces = Vec::with_capacity(resolved.len());
    let mut col = 0;
    for rc in &resolved {
        let m = rc.generators.ncols();
        contact_forces.push(&rc.generators * lambda.rows(col, m));
        col += m;
    }
    let scale = 1.0 + gravity.amax();
    Ok(TorqueReport {
        joints,
        contact_forces,
        force_residual,
        moment_residual,
        balanced: force_residual.max(moment_residual) <= EQUILIBRIUM_TOLERANCE * scale,
    })
}

//! Kinematic tasks and their linearization into motion tasks `J v = p`.

use nalgebra::{DMatrix, DVector, Isometry3, Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::{IkError, SolverSettings};
use crate::feasibility::SupportRegion;
use crate::geometry::{proximity, Environment, ProximityStatus};
use crate::kinematics::{com_and_momentum_matrix_at, point_jacobian, spatial_jacobian_at, Kinematics, RobotModel};

/// Row order of spatial masks and errors: angular then linear.
pub const SPATIAL_AXES: [&str; 6] = ["rx", "ry", "rz", "x", "y", "z"];

#[derive(Clone, Debug, PartialEq)]
pub enum TaskTarget {
    JointPosition {
        joint: String,
        position: f64,
    },
    Com {
        position: Vector3<f64>,
        mask: [bool; 3],
    },
    /// Control frame `body_pose * offset` driven to `target`. Linear mask rows
    /// are world axes; angular mask rows are axes of the target frame.
    SpatialPose {
        body: String,
        offset: Isometry3<f64>,
        target: Isometry3<f64>,
        mask: [bool; 6],
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicTask {
    pub label: String,
    pub target: TaskTarget,
    pub weight: f64,
    /// Proportional gain (1/s); `None` uses `1 / ΔT`.
    pub gain: Option<f64>,
}

impl KinematicTask {
    pub fn new(label: impl Into<String>, target: TaskTarget, weight: f64) -> Self {
        KinematicTask {
            label: label.into(),
            target,
            weight,
            gain: None,
        }
    }

    pub fn joint(joint: &str, position: f64, weight: f64) -> Self {
        Self::new(
            format!("joint:{joint}"),
            TaskTarget::JointPosition {
                joint: joint.to_string(),
                position,
            },
            weight,
        )
    }

    pub fn com(position: Vector3<f64>, mask: [bool; 3], weight: f64) -> Self {
        Self::new("com", TaskTarget::Com { position, mask }, weight)
    }

    pub fn pose(body: &str, offset: Isometry3<f64>, target: Isometry3<f64>, mask: [bool; 6], weight: f64) -> Self {
        Self::new(
            format!("pose:{body}"),
            TaskTarget::SpatialPose {
                body: body.to_string(),
                offset,
                target,
                mask,
            },
            weight,
        )
    }

    pub fn with_gain(mut self, gain: f64) -> Self {
        self.gain = Some(gain);
        self
    }
}

/// One weighted block `w ‖J v − p‖²` with selection already applied.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionTask {
    pub label: String,
    pub jacobian: DMatrix<f64>,
    pub objective: DVector<f64>,
    pub weight: f64,
    /// Position-level error of the selected rows (m or rad), used for residuals.
    pub error: DVector<f64>,
}

impl MotionTask {
    pub fn rows(&self) -> usize {
        self.objective.len()
    }
}

fn select_rows(m: &DMatrix<f64>, v: &DVector<f64>, mask: &[bool]) -> (DMatrix<f64>, DVector<f64>) {
    let idx: Vec<usize> = mask.iter().enumerate().filter(|(_, &on)| on).map(|(i, _)| i).collect();
    (m.select_rows(idx.iter()), v.select_rows(idx.iter()))
}

/// Largest factor in (0, 1] that brings `norm` under `max`.
fn speed_ratio(norm: f64, max: f64) -> f64 {
    if norm > max {
        max / norm
    } else {
        1.0
    }
}

/// Linearize `tasks` at the configuration behind `kin`.
///
/// Objectives that exceed their speed limit are scaled down by one common
/// factor across all tasks, so conflicting tasks keep their relative pull and
/// the weighted least-squares fixed point is unchanged.
pub fn build_motion_tasks(
    model: &RobotModel,
    q: &DVector<f64>,
    kin: &Kinematics,
    tasks: &[KinematicTask],
    settings: &SolverSettings,
) -> Result<Vec<MotionTask>, IkError> {
    let n = model.dof();
    let mut out = Vec::with_capacity(tasks.len());
    let mut scale: f64 = 1.0;
    for task in tasks {
        if !(task.weight > 0.0) {
            return Err(IkError::Task(format!("task `{}` needs a positive weight", task.label)));
        }
        let gain = task.gain.unwrap_or(1.0 / settings.dt);
        let motion = match &task.target {
            TaskTarget::JointPosition { joint, position } => {
                let c = model
                    .joint_coordinate(joint)
                    .map_err(|_| IkError::Task(format!("task `{}` references unknown joint `{joint}`", task.label)))?;
                let err = position - q[c];
                let limit = model.joints[model.joint_index(joint).expect("checked")].velocity_limit;
                scale = scale.min(speed_ratio((gain * err).abs(), limit));
                let mut jac = DMatrix::zeros(1, n);
                jac[(0, c)] = 1.0;
                MotionTask {
                    label: task.label.clone(),
                    jacobian: jac,
                    objective: DVector::from_element(1, gain * err),
                    weight: task.weight,
                    error: DVector::from_element(1, err),
                }
            }
            TaskTarget::Com { position, mask } => {
                if !mask.iter().any(|&m| m) {
                    return Err(IkError::Task(format!("task `{}` has an empty axis mask", task.label)));
                }
                let (com, a) = com_and_momentum_matrix_at(model, kin)?;
                let jac = a / model.total_mass();
                let err = position - com;
                let p = err * gain;
                let masked: f64 = p.iter().zip(mask).filter(|(_, &m)| m).map(|(x, _)| x * x).sum();
                scale = scale.min(speed_ratio(masked.sqrt(), settings.max_linear_speed));
                let (j, p) = select_rows(&jac, &DVector::from_column_slice(p.as_slice()), mask);
                let (_, e) = select_rows(&jac, &DVector::from_column_slice(err.as_slice()), mask);
                MotionTask {
                    label: task.label.clone(),
                    jacobian: j,
                    objective: p,
                    weight: task.weight,
                    error: e,
                }
            }
            TaskTarget::SpatialPose {
                body,
                offset,
                target,
                mask,
            } => {
                if !mask.iter().any(|&m| m) {
                    return Err(IkError::Task(format!("task `{}` has an empty axis mask", task.label)));
                }
                let b = model
                    .body_index(body)
                    .map_err(|_| IkError::Task(format!("task `{}` references unknown body `{body}`", task.label)))?;
                let frame = kin.body_poses[b] * offset;
                let jac = spatial_jacobian_at(model, kin, b, offset);
                let rot_err = (target.rotation * frame.rotation.inverse()).scaled_axis();
                let lin_err = target.translation.vector - frame.translation.vector;
                // Angular rows live in the target frame so the mask can free
                // rotation about a chosen target axis.
                let rt = target.rotation.inverse().to_rotation_matrix();
                let mut jt = jac.clone();
                let ang = rt.matrix() * jac.rows(0, 3);
                jt.rows_mut(0, 3).copy_from(&ang);
                let ang_err = rt * rot_err;
                let p_ang = ang_err * gain;
                let p_lin = lin_err * gain;
                let masked = |range: std::ops::Range<usize>, v: &Vector3<f64>| {
                    range.zip(v.iter()).filter(|(i, _)| mask[*i]).map(|(_, x)| x * x).sum::<f64>().sqrt()
                };
                scale = scale
                    .min(speed_ratio(masked(0..3, &p_ang), settings.max_angular_speed))
                    .min(speed_ratio(masked(3..6, &p_lin), settings.max_linear_speed));
                let p = DVector::from_iterator(6, p_ang.iter().chain(p_lin.iter()).copied());
                let e = DVector::from_iterator(6, ang_err.iter().chain(lin_err.iter()).copied());
                let (j, p) = select_rows(&jt, &p, mask);
                let (_, e) = select_rows(&jt, &e, mask);
                MotionTask {
                    label: task.label.clone(),
                    jacobian: j,
                    objective: p,
                    weight: task.weight,
                    error: e,
                }
            }
        };
        out.push(motion);
    }
    if settings.scale_objectives && scale < 1.0 {
        for m in &mut out {
            m.objective *= scale;
        }
    }
    Ok(out)
}

/// Inequality rows `A v ≤ b` over joint velocities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InequalityRows {
    pub a: Vec<DVector<f64>>,
    pub b: Vec<f64>,
    pub labels: Vec<String>,
}

impl InequalityRows {
    pub fn push(&mut self, row: DVector<f64>, rhs: f64, label: impl Into<String>) {
        self.a.push(row);
        self.b.push(rhs);
        self.labels.push(label.into());
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn extend(&mut self, other: InequalityRows) {
        self.a.extend(other.a);
        self.b.extend(other.b);
        self.labels.extend(other.labels);
    }

    pub fn matrix(&self, n: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut m = DMatrix::zeros(self.len(), n);
        for (i, r) in self.a.iter().enumerate() {
            m.set_row(i, &r.transpose());
        }
        (m, DVector::from_vec(self.b.clone()))
    }
}

/// Collision handling output: separation objectives and approach limits.
#[derive(Clone, Debug, Default)]
pub struct CollisionTerms {
    pub tasks: Vec<MotionTask>,
    pub rows: InequalityRows,
    pub warnings: Vec<String>,
    /// Deepest robot-environment penetration found (m, 0 when none).
    pub max_depth: f64,
}

/// Robot-environment collision terms at the configuration behind `kin`.
///
/// Penetrating pairs get a one-row separation objective along the contact
/// normal plus a row forbidding deeper motion; pairs closer than the
/// activation margin get a one-sided approach-speed limit.
pub fn collision_tasks(
    model: &RobotModel,
    kin: &Kinematics,
    env: &Environment,
    settings: &SolverSettings,
) -> CollisionTerms {
    let mut terms = CollisionTerms::default();
    let gain = settings.collision_gain.unwrap_or(1.0 / settings.dt);
    for (b, body) in model.bodies.iter().enumerate() {
        for &pi in &body.polytopes {
            let robot = model.polytopes[pi].transformed(&kin.body_poses[b]);
            for obstacle in &env.polytopes {
                let r = proximity(&robot, obstacle);
                let label = format!("collision:{}/{}", robot.name, obstacle.name);
                match r.status {
                    ProximityStatus::NumericFailure => {
                        terms.warnings.push(format!("{label}: proximity query failed, pair skipped"));
                    }
                    ProximityStatus::Penetrating => {
                        terms.max_depth = terms.max_depth.max(r.distance);
                        let jac = point_jacobian(model, kin, b, &r.witness_a);
                        // Normal points from robot into the obstacle; separate along −n.
                        let row = -(r.normal.transpose() * &jac);
                        terms.tasks.push(MotionTask {
                            label: label.clone(),
                            jacobian: DMatrix::from_row_slice(1, row.len(), row.as_slice()),
                            objective: DVector::from_element(1, gain * r.distance),
                            weight: settings.collision_weight,
                            error: DVector::from_element(1, r.distance),
                        });
                        terms.rows.push(-row.transpose(), 0.0, label);
                    }
                    ProximityStatus::Separated | ProximityStatus::Touching => {
                        if r.distance <= settings.collision_margin {
                            let jac = point_jacobian(model, kin, b, &r.witness_a);
                            let row = (r.normal.transpose() * &jac).transpose();
                            let bound = settings.approach_ratio * r.distance / settings.dt;
                            terms.rows.push(row, bound, label);
                        }
                    }
                }
            }
        }
    }
    terms
}

/// Penetration depth of the deepest robot-environment pair (0 when none).
pub fn max_penetration(model: &RobotModel, kin: &Kinematics, env: &Environment) -> f64 {
    let mut depth: f64 = 0.0;
    for (b, body) in model.bodies.iter().enumerate() {
        for &pi in &body.polytopes {
            let robot = model.polytopes[pi].transformed(&kin.body_poses[b]);
            for obstacle in &env.polytopes {
                let r = proximity(&robot, obstacle);
                if r.status == ProximityStatus::Penetrating {
                    depth = depth.max(r.distance);
                }
            }
        }
    }
    depth
}

/// Rows keeping the CoM ground projection inside `region` after one step:
/// `n̂ᵀ (A_xy/m) v ≤ (d − n̂ᵀ com_xy) / ΔT` for every edge half-plane.
pub fn momentum_constraint(
    region: &SupportRegion,
    com: &Vector3<f64>,
    momentum_matrix: &DMatrix<f64>,
    mass: f64,
    dt: f64,
) -> Result<InequalityRows, IkError> {
    if region.is_empty() {
        return Err(IkError::EmptyRegion);
    }
    let mut rows = InequalityRows::default();
    let jx = momentum_matrix.row(0) / mass;
    let jy = momentum_matrix.row(1) / mass;
    for (k, (nrm, d)) in region.halfplanes().into_iter().enumerate() {
        let row = (&jx * nrm[0] + &jy * nrm[1]).transpose();
        let rhs = (d - (nrm[0] * com.x + nrm[1] * com.y)) / dt;
        rows.push(row, rhs, format!("com-edge:{k}"));
    }
    Ok(rows)
}

/// World position of a body-frame point.
pub fn body_point(kin: &Kinematics, body: usize, local: &Vector3<f64>) -> Vector3<f64> {
    (kin.body_poses[body] * Point3::from(*local)).coords
}

/// Serializable per-task residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskResidual {
    pub label: String,
    pub norm: f64,
}

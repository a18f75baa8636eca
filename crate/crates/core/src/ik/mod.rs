//! Sequential-QP inverse kinematics over desired joint velocities.
//!
//! Each iteration linearizes the kinematic tasks at the current puppet
//! configuration, solves
//!
//! ```text
//!     min  (v − v_nom)ᵀ C_nom (v − v_nom) + Σ (J_i v − p_i)ᵀ w_i (J_i v − p_i) + vᵀ C_v v
//!     s.t. v_lo ≤ v ≤ v_hi,   A v ≤ H
//! ```
//!
//! and integrates `q ← q ⊕ v ΔT`. Velocity bounds are shaped so the step can
//! never leave the joint range.

mod tasks;

use std::sync::atomic::{AtomicBool, Ordering};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tasks::{
    body_point, build_motion_tasks, collision_tasks, max_penetration, momentum_constraint, CollisionTerms,
    InequalityRows, KinematicTask, MotionTask, TaskResidual, TaskTarget, SPATIAL_AXES,
};

use crate::feasibility::SupportRegion;
use crate::geometry::Environment;
use crate::kinematics::{self, com_and_momentum_matrix_at, forward_kinematics, ModelError, RobotModel};
use crate::optim::{solve_qp, KktResiduals, QpError, QuadraticProgram, WarmStart};

#[derive(Debug, Error)]
pub enum IkError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Task(String),
    #[error("support region is empty")]
    EmptyRegion,
    #[error("invalid solver settings: {0}")]
    Settings(String),
    #[error("QP failed: {0}")]
    Qp(#[from] QpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightTier {
    Low,
    Medium,
    High,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Integration tick ΔT (s).
    pub dt: f64,
    pub max_iterations: usize,
    /// Convergence threshold on the decrease of the task cost between iterations.
    pub tolerance: f64,
    /// A run also needs its last step below this size (m or rad) to count as converged.
    pub step_tolerance: f64,
    /// Optional cap applied on top of the model's joint velocity limits.
    pub velocity_cap: Option<f64>,
    /// Objective clamps for Cartesian tasks (m/s, rad/s).
    pub max_linear_speed: f64,
    pub max_angular_speed: f64,
    pub scale_objectives: bool,
    /// Weights of the low, medium and high tiers.
    pub tiers: [f64; 3],
    pub contact_weight: f64,
    pub collision_weight: f64,
    /// Separation gain for penetrating pairs; `None` uses `1 / ΔT`.
    pub collision_gain: Option<f64>,
    /// Pairs closer than this get an approach-speed limit (m).
    pub collision_margin: f64,
    /// Fraction of the remaining gap a pair may close per tick.
    pub approach_ratio: f64,
    pub nominal_weight: f64,
    pub velocity_weight: f64,
    pub com_constraint: bool,
    pub collision_constraint: bool,
    /// Consecutive cost increases that mark a run unstable.
    pub unstable_after: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            dt: 0.05,
            max_iterations: 200,
            tolerance: 1e-7,
            step_tolerance: 1e-9,
            velocity_cap: None,
            max_linear_speed: 2.0,
            max_angular_speed: 4.0,
            scale_objectives: false,
            tiers: [1.0, 10.0, 100.0],
            contact_weight: 500.0,
            collision_weight: 1000.0,
            collision_gain: None,
            collision_margin: 0.02,
            approach_ratio: 0.5,
            nominal_weight: 0.05,
            velocity_weight: 0.01,
            com_constraint: true,
            collision_constraint: true,
            unstable_after: 5,
        }
    }
}

impl SolverSettings {
    pub fn tier_weight(&self, tier: WeightTier) -> f64 {
        match tier {
            WeightTier::Low => self.tiers[0],
            WeightTier::Medium => self.tiers[1],
            WeightTier::High => self.tiers[2],
        }
    }

    pub fn validate(&self) -> Result<(), IkError> {
        let positive = [
            ("dt", self.dt),
            ("tolerance", self.tolerance),
            ("step_tolerance", self.step_tolerance),
            ("max_linear_speed", self.max_linear_speed),
            ("max_angular_speed", self.max_angular_speed),
            ("contact_weight", self.contact_weight),
            ("collision_weight", self.collision_weight),
            ("collision_margin", self.collision_margin),
            ("approach_ratio", self.approach_ratio),
            ("nominal_weight", self.nominal_weight),
            ("velocity_weight", self.velocity_weight),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(IkError::Settings(format!("{name} must be positive")));
            }
        }
        if self.max_iterations == 0 {
            return Err(IkError::Settings("max_iterations must be positive".into()));
        }
        let [lo, mid, hi] = self.tiers;
        if !(0.0 < lo && lo < mid && mid < hi) {
            return Err(IkError::Settings("tier weights must satisfy 0 < low < medium < high".into()));
        }
        if self.velocity_cap.is_some_and(|c| !(c > 0.0)) {
            return Err(IkError::Settings("velocity_cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Unstable,
    InfeasibleQp,
    Cancelled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_cost: f64,
    pub task_residuals: Vec<TaskResidual>,
    pub cost_trace: Vec<f64>,
    /// Largest KKT residual over all accepted QP solves.
    pub max_kkt_residual: f64,
    pub max_penetration: f64,
    pub warnings: Vec<String>,
}

impl SolveDiagnostics {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn residual(&self, label: &str) -> Option<f64> {
        self.task_residuals.iter().find(|r| r.label == label).map(|r| r.norm)
    }

    pub fn max_residual(&self) -> f64 {
        self.task_residuals.iter().map(|r| r.norm).fold(0.0, f64::max)
    }
}

/// Everything a solve reads besides the start configuration and settings.
#[derive(Clone, Copy)]
pub struct IkProblem<'a> {
    pub model: &'a RobotModel,
    pub tasks: &'a [KinematicTask],
    pub environment: Option<&'a Environment>,
    pub region: Option<&'a SupportRegion>,
    /// Posture the null-space drive pulls toward; the model's nominal when `None`.
    pub nominal: Option<&'a DVector<f64>>,
    pub cancel: Option<&'a AtomicBool>,
    /// Sees every integrated configuration, including rejected line-search
    /// trials, before the final clamp to joint limits.
    pub observer: Option<&'a dyn Fn(&DVector<f64>)>,
}

impl<'a> IkProblem<'a> {
    pub fn new(model: &'a RobotModel, tasks: &'a [KinematicTask]) -> Self {
        IkProblem {
            model,
            tasks,
            environment: None,
            region: None,
            nominal: None,
            cancel: None,
            observer: None,
        }
    }

    pub fn with_environment(mut self, env: &'a Environment) -> Self {
        self.environment = Some(env);
        self
    }

    pub fn with_region(mut self, region: &'a SupportRegion) -> Self {
        self.region = Some(region);
        self
    }

    pub fn with_nominal(mut self, nominal: &'a DVector<f64>) -> Self {
        self.nominal = Some(nominal);
        self
    }

    pub fn with_cancel(mut self, flag: &'a AtomicBool) -> Self {
        self.cancel = Some(flag);
        self
    }

    pub fn with_observer(mut self, observer: &'a dyn Fn(&DVector<f64>)) -> Self {
        self.observer = Some(observer);
        self
    }
}

/// Result of one velocity QP.
#[derive(Clone, Debug)]
pub struct VelocityStep {
    pub v: DVector<f64>,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub active: Vec<usize>,
}

/// Solve the velocity QP for one linearization.
pub fn solve_velocity_qp(
    tasks: &[MotionTask],
    v_nom: &DVector<f64>,
    settings: &SolverSettings,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    rows: &InequalityRows,
    warm: Option<&WarmStart>,
) -> Result<VelocityStep, IkError> {
    let n = v_nom.len();
    let mut h = DMatrix::identity(n, n) * (settings.nominal_weight + settings.velocity_weight);
    let mut g = -(v_nom * settings.nominal_weight);
    let mut constant = settings.nominal_weight * v_nom.norm_squared();
    for t in tasks {
        if t.jacobian.ncols() != n || t.jacobian.nrows() != t.objective.len() {
            return Err(IkError::Task(format!("task `{}` has inconsistent dimensions", t.label)));
        }
        let jt = t.jacobian.transpose();
        h += &jt * &t.jacobian * t.weight;
        g -= &jt * &t.objective * t.weight;
        constant += t.weight * t.objective.norm_squared();
    }
    // Exact symmetry keeps the KKT solves well defined.
    let h = (&h + h.transpose()) * 0.5;
    let (a, b) = rows.matrix(n);
    // The QP is posed on ½xᵀHx; scale to match the unhalved cost.
    let qp = QuadraticProgram::new(h * 2.0, g * 2.0)
        .with_bounds(lower.clone(), upper.clone())
        .with_inequalities(a, b);
    let sol = solve_qp(&qp, warm)?;
    Ok(VelocityStep {
        objective: sol.objective + constant,
        v: sol.x,
        kkt: sol.kkt,
        active: sol.active,
    })
}

/// Joint velocity bounds that keep `q + v ΔT` inside the position limits.
pub fn shaped_velocity_bounds(
    model: &RobotModel,
    q: &DVector<f64>,
    settings: &SolverSettings,
) -> (DVector<f64>, DVector<f64>) {
    let (qlo, qhi) = model.position_bounds();
    let mut vlim = model.velocity_limits();
    if let Some(cap) = settings.velocity_cap {
        vlim.apply(|v| *v = v.min(cap));
    }
    let n = model.dof();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        lo[i] = (-vlim[i]).max((qlo[i] - q[i]) / settings.dt).min(0.0);
        hi[i] = vlim[i].min((qhi[i] - q[i]) / settings.dt).max(0.0);
    }
    (lo, hi)
}

/// Null-space projection of the proportional drive toward `nominal`.
fn nominal_velocity(
    model: &RobotModel,
    q: &DVector<f64>,
    nominal: &DVector<f64>,
    tasks: &[MotionTask],
    settings: &SolverSettings,
) -> DVector<f64> {
    let n = model.dof();
    let mut drive = kinematics::difference(model, q, nominal) / settings.dt;
    let vlim = model.velocity_limits();
    let scale = (0..n)
        .map(|i| if drive[i].abs() > vlim[i] { vlim[i] / drive[i].abs() } else { 1.0 })
        .fold(1.0, f64::min);
    drive *= scale;
    let rows: usize = tasks.iter().map(|t| t.rows()).sum();
    if rows == 0 {
        return drive;
    }
    let mut stacked = DMatrix::zeros(rows, n);
    let mut r = 0;
    for t in tasks {
        stacked.rows_mut(r, t.rows()).copy_from(&t.jacobian);
        r += t.rows();
    }
    let svd = stacked.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let smax = svd.singular_values.max();
    let mut out = drive.clone();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-9 * smax.max(1e-300) {
            let dir = vt.row(k).transpose();
            out -= &dir * dir.dot(&drive);
        }
    }
    out
}

fn task_cost(tasks: &[MotionTask]) -> f64 {
    tasks.iter().map(|t| t.weight * t.error.norm_squared()).sum()
}

fn residuals(tasks: &[MotionTask]) -> Vec<TaskResidual> {
    tasks
        .iter()
        .map(|t| TaskResidual {
            label: t.label.clone(),
            norm: t.error.norm(),
        })
        .collect()
}

/// Everything the QP needs at one configuration.
struct Linearization {
    tasks: Vec<MotionTask>,
    rows: InequalityRows,
    warnings: Vec<String>,
}

/// Step halvings tried before giving up on a search direction.
const LINE_SEARCH_STEPS: usize = 10;

/// Cost increase a step may cause and still count as non-increasing.
const COST_SLACK: f64 = 1e-10;

struct Solver<'a, 'p> {
    problem: &'a IkProblem<'p>,
    settings: &'a SolverSettings,
    nominal: &'a DVector<f64>,
    use_collisions: bool,
    use_region: bool,
}

impl Solver<'_, '_> {
    fn linearize(&self, q: &DVector<f64>) -> Result<Linearization, IkError> {
        let model = self.problem.model;
        let kin = forward_kinematics(model, q)?;
        let mut tasks = build_motion_tasks(model, q, &kin, self.problem.tasks, self.settings)?;
        let mut rows = InequalityRows::default();
        let mut warnings = Vec::new();
        if self.use_collisions {
            let terms = collision_tasks(model, &kin, self.problem.environment.expect("checked"), self.settings);
            tasks.extend(terms.tasks);
            rows = terms.rows;
            warnings = terms.warnings;
        }
        if self.use_region {
            let (com, a) = com_and_momentum_matrix_at(model, &kin)?;
            let region = self.problem.region.expect("checked");
            rows.extend(momentum_constraint(region, &com, &a, model.total_mass(), self.settings.dt)?);
        }
        Ok(Linearization {
            tasks,
            rows,
            warnings,
        })
    }

    fn qp(
        &self,
        q: &DVector<f64>,
        lin: &Linearization,
        v_nom: &DVector<f64>,
        warm: Option<&WarmStart>,
    ) -> Result<VelocityStep, IkError> {
        let (lo, hi) = shaped_velocity_bounds(self.problem.model, q, self.settings);
        solve_velocity_qp(&lin.tasks, v_nom, self.settings, &lo, &hi, &lin.rows, warm)
    }

    fn advance(&self, q: &DVector<f64>, v: &DVector<f64>, alpha: f64) -> Result<(DVector<f64>, Linearization), IkError> {
        let mut next = kinematics::integrate(self.problem.model, q, v, alpha * self.settings.dt)?;
        if let Some(observe) = self.problem.observer {
            observe(&next);
        }
        kinematics::clamp_to_limits(self.problem.model, &mut next);
        let lin = self.linearize(&next)?;
        Ok((next, lin))
    }

    fn is_small(&self, v: &DVector<f64>) -> bool {
        v.amax() * self.settings.dt <= self.settings.step_tolerance
    }
}

/// Iterate the velocity QP from `q_start` until the task cost settles or the
/// iteration cap is reached.
///
/// Steps never raise the task cost by more than a rounding slack: a step is
/// integrated with the largest factor in `1, ½, ¼, …` that keeps the cost
/// down, and the null-space posture drive is only taken together with a
/// corrective task step that undoes its second-order effect on the tasks.
/// Bounds and inequality rows hold for every factor since they are convex in
/// `v` and contain `v = 0`.
pub fn solve(
    problem: &IkProblem,
    q_start: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<(DVector<f64>, SolveDiagnostics), IkError> {
    settings.validate()?;
    let model = problem.model;
    model.check_configuration(q_start)?;
    let nominal = problem.nominal.unwrap_or(&model.nominal_q);
    model.check_configuration(nominal)?;

    let mut warnings = Vec::new();
    let mut q = q_start.clone();
    let (qlo, qhi) = model.position_bounds();
    if (0..q.len()).any(|i| q[i] < qlo[i] || q[i] > qhi[i]) {
        warnings.push("start configuration outside joint limits; clamped".to_string());
        kinematics::clamp_to_limits(model, &mut q);
    }
    let solver = Solver {
        problem,
        settings,
        nominal,
        use_collisions: settings.collision_constraint && problem.environment.is_some_and(|e| !e.polytopes.is_empty()),
        use_region: settings.com_constraint && problem.region.is_some(),
    };
    let note = |warnings: &mut Vec<String>, lin: &Linearization| {
        for w in &lin.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    };

    let mut trace = Vec::new();
    let mut prev_cost: Option<f64> = None;
    let mut increases = 0;
    let mut max_kkt: f64 = 0.0;
    let mut warm: Option<WarmStart> = None;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut revert = false;
    let mut lin = match solver.linearize(&q) {
        Ok(l) => Some(l),
        Err(IkError::EmptyRegion) => None,
        Err(e) => return Err(e),
    };

    while let Some(current) = lin.as_ref() {
        if iterations >= settings.max_iterations {
            break;
        }
        if problem.cancel.is_some_and(|c| c.load(Ordering::Relaxed)) {
            status = SolveStatus::Cancelled;
            break;
        }
        iterations += 1;
        note(&mut warnings, current);
        let cost = task_cost(&current.tasks);
        trace.push(cost);
        if let Some(prev) = prev_cost {
            if cost > prev + COST_SLACK {
                increases += 1;
                if increases >= settings.unstable_after {
                    warnings.push(format!("cost increased {increases} times in a row; reverted to start"));
                    status = SolveStatus::Unstable;
                    revert = true;
                    break;
                }
            } else {
                increases = 0;
            }
        }
        let settled = prev_cost.is_some_and(|p| (p - cost).abs() < settings.tolerance) || cost == 0.0;

        let zero = DVector::zeros(q.len());
        let plain = match solver.qp(&q, current, &zero, warm.as_ref()) {
            Ok(s) => s,
            Err(IkError::Qp(e)) => {
                warnings.push(format!("velocity QP failed at iteration {iterations}: {e}"));
                status = SolveStatus::InfeasibleQp;
                revert = true;
                break;
            }
            Err(e) => return Err(e),
        };
        max_kkt = max_kkt.max(plain.kkt.max());

        let mut next = None;
        let v_nom = nominal_velocity(model, &q, solver.nominal, &current.tasks, settings);
        if !solver.is_small(&v_nom) {
            if let Ok(with_nominal) = solver.qp(&q, current, &v_nom, None) {
                max_kkt = max_kkt.max(with_nominal.kkt.max());
                let mut alpha = 1.0;
                for _ in 0..=LINE_SEARCH_STEPS {
                    let (q1, lin1) = solver.advance(&q, &with_nominal.v, alpha)?;
                    let (q2, lin2) = match solver.qp(&q1, &lin1, &zero, None) {
                        Ok(fix) => {
                            max_kkt = max_kkt.max(fix.kkt.max());
                            solver.advance(&q1, &fix.v, 1.0)?
                        }
                        Err(_) => (q1, lin1),
                    };
                    if task_cost(&lin2.tasks) <= cost + COST_SLACK {
                        next = Some((q2, lin2));
                        break;
                    }
                    alpha *= 0.5;
                }
            }
        }
        if next.is_none() {
            if settled && solver.is_small(&plain.v) {
                status = SolveStatus::Converged;
                break;
            }
            let mut alpha = 1.0;
            let mut full = None;
            for _ in 0..=LINE_SEARCH_STEPS {
                let trial = solver.advance(&q, &plain.v, alpha)?;
                if task_cost(&trial.1.tasks) <= cost + COST_SLACK {
                    next = Some(trial);
                    break;
                }
                full.get_or_insert(trial);
                alpha *= 0.5;
            }
            if next.is_none() {
                if settled {
                    // No step length lowers the cost: stalled at a minimum.
                    status = SolveStatus::Converged;
                    break;
                }
                next = full;
            }
        }
        let (q_next, lin_next) = next.expect("a step was chosen");
        if settled && kinematics::difference(model, &q, &q_next).amax() <= settings.step_tolerance {
            // The accepted step no longer moves the puppet.
            status = SolveStatus::Converged;
            break;
        }
        q = q_next;
        lin = Some(lin_next);
        prev_cost = Some(cost);
        warm = Some(WarmStart {
            x: Some(plain.v),
            active: plain.active,
        });
    }

    if lin.is_none() {
        warnings.push("support region is empty".into());
        status = SolveStatus::InfeasibleQp;
        revert = true;
    }
    if revert {
        q = q_start.clone();
    }
    let model_kin = forward_kinematics(model, &q)?;
    let final_tasks = match lin {
        Some(l) if !revert => l.tasks,
        _ => {
            let mut t = build_motion_tasks(model, &q, &model_kin, problem.tasks, settings)?;
            if solver.use_collisions {
                t.extend(collision_tasks(model, &model_kin, problem.environment.expect("checked"), settings).tasks);
            }
            t
        }
    };
    let depth = match problem.environment {
        Some(env) if !env.polytopes.is_empty() => max_penetration(model, &model_kin, env),
        _ => 0.0,
    };
    let diag = SolveDiagnostics {
        status,
        iterations,
        final_cost: task_cost(&final_tasks),
        task_residuals: residuals(&final_tasks),
        cost_trace: trace,
        max_kkt_residual: max_kkt,
        max_penetration: depth,
        warnings,
    };
    Ok((q, diag))
}

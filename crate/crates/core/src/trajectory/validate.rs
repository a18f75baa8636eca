use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{sample_times, CubicSplineTrajectory};
use crate::geometry::{proximity, Environment, ProximityStatus};
use crate::kinematics::{forward_kinematics, RobotModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationOptions {
    /// Sampling rate (Hz).
    pub rate: f64,
    /// Penetration depth below which a robot-environment pair counts as
    /// touching rather than colliding (m).
    pub collision_tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            rate: 100.0,
            collision_tolerance: 1e-3,
        }
    }
}

/// A run of consecutive samples where one coordinate is out of bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    pub coordinate: usize,
    pub joint: String,
    pub start: f64,
    pub end: f64,
    pub peak_time: f64,
    /// Value (position or velocity) furthest past the limit.
    pub peak_value: f64,
    /// The limit that was crossed.
    pub limit: f64,
}

/// A run of consecutive samples where a robot polytope penetrates an obstacle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub robot: String,
    pub obstacle: String,
    pub start: f64,
    pub end: f64,
    pub peak_time: f64,
    pub depth: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub duration: f64,
    pub position_violations: Vec<LimitViolation>,
    pub velocity_violations: Vec<LimitViolation>,
    pub collisions: Vec<CollisionEvent>,
    /// Largest |q̇| per coordinate over the samples.
    pub peak_velocity: Vec<f64>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.position_violations.is_empty() && self.velocity_violations.is_empty() && self.collisions.is_empty()
    }
}

/// Merges per-sample findings into runs keyed by `K`.
struct Runs<K: Ord + Clone, V> {
    open: BTreeMap<K, V>,
    closed: Vec<V>,
}

impl<K: Ord + Clone, V> Runs<K, V> {
    fn new() -> Self {
        Runs {
            open: BTreeMap::new(),
            closed: Vec::new(),
        }
    }

    /// Close every open run whose key was not seen in the latest sample.
    fn close_unseen(&mut self, seen: &[K]) {
        let stale: Vec<K> = self.open.keys().filter(|k| !seen.contains(k)).cloned().collect();
        for k in stale {
            self.closed.push(self.open.remove(&k).expect("present"));
        }
    }

    fn finish(mut self, order: impl Fn(&V, &V) -> std::cmp::Ordering) -> Vec<V> {
        self.closed.extend(self.open.into_values());
        self.closed.sort_by(order);
        self.closed
    }
}

fn extend_violation(runs: &mut Runs<usize, LimitViolation>, c: usize, name: &str, t: f64, value: f64, limit: f64) {
    let excess = |v: f64, l: f64| (v - l).abs();
    runs.open
        .entry(c)
        .and_modify(|v| {
            v.end = t;
            if excess(value, limit) > excess(v.peak_value, v.limit) {
                v.peak_time = t;
                v.peak_value = value;
                v.limit = limit;
            }
        })
        .or_insert_with(|| LimitViolation {
            coordinate: c,
            joint: name.to_string(),
            start: t,
            end: t,
            peak_time: t,
            peak_value: value,
            limit,
        });
}

/// Sample the trajectory and report joint-limit, velocity-limit and (with an
/// environment) collision findings with their times.
pub fn validate(
    traj: &CubicSplineTrajectory,
    model: &RobotModel,
    environment: Option<&Environment>,
    options: &ValidationOptions,
) -> ValidationReport {
    let names = model.coordinate_names();
    let (lo, hi) = model.position_bounds();
    let vmax = model.velocity_limits();
    let dim = traj.dim().min(model.dof());
    let times = sample_times(traj.start_time(), traj.end_time(), options.rate);
    let mut pos = Runs::new();
    let mut vel = Runs::new();
    let mut col: Runs<(String, String), CollisionEvent> = Runs::new();
    let mut peak = vec![0.0f64; dim];
    let env = environment.filter(|e| !e.polytopes.is_empty());

    for &t in &times {
        let s = traj.sample(t);
        let mut pos_seen = Vec::new();
        let mut vel_seen = Vec::new();
        for c in 0..dim {
            let (q, qd) = (s.q[c], s.qd[c]);
            peak[c] = peak[c].max(qd.abs());
            if q < lo[c] || q > hi[c] {
                let limit = if q < lo[c] { lo[c] } else { hi[c] };
                extend_violation(&mut pos, c, &names[c], t, q, limit);
                pos_seen.push(c);
            }
            if qd.abs() > vmax[c] {
                extend_violation(&mut vel, c, &names[c], t, qd, vmax[c].copysign(qd));
                vel_seen.push(c);
            }
        }
        pos.close_unseen(&pos_seen);
        vel.close_unseen(&vel_seen);

        if let Some(env) = env {
            let mut seen = Vec::new();
            if let Ok(kin) = forward_kinematics(model, &s.q) {
                for (b, body) in model.bodies.iter().enumerate() {
                    for &pi in &body.polytopes {
                        let robot = model.polytopes[pi].transformed(&kin.body_poses[b]);
                        for obstacle in &env.polytopes {
                            let r = proximity(&robot, obstacle);
                            if r.status != ProximityStatus::Penetrating || r.distance <= options.collision_tolerance {
                                continue;
                            }
                            let key = (robot.name.clone(), obstacle.name.clone());
                            col.open
                                .entry(key.clone())
                                .and_modify(|e| {
                                    e.end = t;
                                    if r.distance > e.depth {
                                        e.depth = r.distance;
                                        e.peak_time = t;
                                    }
                                })
                                .or_insert_with(|| CollisionEvent {
                                    robot: key.0.clone(),
                                    obstacle: key.1.clone(),
                                    start: t,
                                    end: t,
                                    peak_time: t,
                                    depth: r.distance,
                                });
                            seen.push(key);
                        }
                    }
                }
            }
            col.close_unseen(&seen);
        }
    }

    let by_time = |a: &LimitViolation, b: &LimitViolation| {
        a.start.total_cmp(&b.start).then(a.coordinate.cmp(&b.coordinate))
    };
    ValidationReport {
        samples: times.len(),
        duration: traj.duration(),
        position_violations: pos.finish(by_time),
        velocity_violations: vel.finish(by_time),
        collisions: col.finish(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then_with(|| a.robot.cmp(&b.robot))
                .then_with(|| a.obstacle.cmp(&b.obstacle))
        }),
        peak_velocity: peak,
    }
}

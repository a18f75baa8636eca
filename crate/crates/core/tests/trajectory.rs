use anchorpose::fixtures;
use anchorpose::geometry::Environment;
use anchorpose::kinematics::RobotModel;
use anchorpose::script::{KeyFrame, Profile, Script};
use anchorpose::trajectory::{
    compile, compile_script, sample_times, script_knots, segment_cost, validate, CubicSplineTrajectory,
    TrajectoryError, ValidationOptions,
};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;
use serde_json::json;

fn dv(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn scalar(q: &[f64], t: &[f64], v0: f64) -> CubicSplineTrajectory {
    let configs: Vec<_> = q.iter().map(|&x| dv(&[x])).collect();
    compile(&configs, t, &dv(&[v0])).unwrap()
}

/// ∫ q̈² of a Hermite segment by Simpson's rule on the Hermite basis second
/// derivatives (q̈ is linear, so q̈² is quadratic and Simpson is exact).
fn hermite_cost(q0: f64, q1: f64, v0: f64, v1: f64, h: f64) -> f64 {
    let acc = |s: f64| {
        (12.0 * s - 6.0) / (h * h) * q0 + (6.0 * s - 4.0) / h * v0 + (-12.0 * s + 6.0) / (h * h) * q1 + (6.0 * s - 2.0) / h * v1
    };
    h / 6.0 * (acc(0.0).powi(2) + 4.0 * acc(0.5).powi(2) + acc(1.0).powi(2))
}

fn objective(q: &[f64], t: &[f64], v: &[f64]) -> f64 {
    (0..q.len() - 1).map(|i| hermite_cost(q[i], q[i + 1], v[i], v[i + 1], t[i + 1] - t[i])).sum()
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-11 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    // Near the minimum f is flat to within rounding, which limits the bracket
    // to about √ε. The objective is quadratic in one velocity, so one
    // parabolic step through three points recovers the vertex exactly.
    let x = 0.5 * (a + b);
    let d = 1e-3;
    let (l, m, r) = (f(x - d), f(x), f(x + d));
    x - 0.5 * d * (r - l) / (r - 2.0 * m + l)
}

fn knot_velocities(traj: &CubicSplineTrajectory, j: usize) -> Vec<f64> {
    traj.knot_velocities().iter().map(|v| v[j]).collect()
}

#[test]
fn two_keyframes_give_a_clamped_cubic() {
    let traj = scalar(&[0.2, 1.3], &[0.0, 1.5], 0.0);
    assert_eq!(traj.segment_count(), 1);
    assert_eq!(traj.sample(0.0).q[0], 0.2);
    assert_eq!(traj.sample(1.5).q[0], 1.3);
    assert_eq!(traj.sample(0.0).qd[0], 0.0);
    assert!(traj.sample(1.5).qd[0].abs() < 1e-15);
}

#[test]
fn identical_keyframes_give_a_constant_trajectory() {
    let q = dv(&[0.3, -1.0, 2.0]);
    let traj = compile(&[q.clone(), q.clone(), q.clone(), q.clone()], &[0.0, 1.0, 2.5, 3.0], &DVector::zeros(3)).unwrap();
    for t in sample_times(0.0, 3.0, 37.0) {
        let s = traj.sample(t);
        assert_eq!(s.q, q);
        assert_eq!(s.qd.amax(), 0.0);
        assert_eq!(s.qdd.amax(), 0.0);
    }
}

#[test]
fn interior_velocity_matches_one_dimensional_minimizer() {
    for (q, t, v0) in [
        ([0.0, 1.0, 0.0], [0.0, 1.0, 2.0], 0.0),
        ([0.0, 0.7, -0.3], [0.0, 0.8, 2.1], 0.4),
        ([1.0, 1.5, 3.0], [0.5, 2.0, 2.5], -1.0),
    ] {
        let traj = scalar(&q, &t, v0);
        let v1 = knot_velocities(&traj, 0)[1];
        let oracle = golden_section(|x| objective(&q, &t, &[v0, x, 0.0]), -20.0, 20.0);
        assert!((v1 - oracle).abs() < 1e-8, "{v1} vs {oracle}");
    }
}

#[test]
fn symmetric_three_keyframes_stop_at_the_peak() {
    let traj = scalar(&[0.0, 1.0, 0.0], &[0.0, 1.0, 2.0], 0.0);
    assert!(knot_velocities(&traj, 0)[1].abs() < 1e-15);
}

#[test]
fn perturbing_interior_velocities_raises_the_cost() {
    let q = [0.0, 0.4, 1.2, 0.9, -0.2, 0.0];
    let t = [0.0, 0.7, 1.9, 2.2, 3.5, 4.0];
    let traj = scalar(&q, &t, 0.3);
    let v = knot_velocities(&traj, 0);
    let best = objective(&q, &t, &v);
    for i in 1..q.len() - 1 {
        for delta in [1e-3, -1e-3] {
            let mut w = v.clone();
            w[i] += delta;
            assert!(objective(&q, &t, &w) > best, "knot {i} delta {delta}");
        }
    }
}

#[test]
fn velocity_boundary_conditions_hold() {
    let traj = scalar(&[0.0, 0.4, 1.2, 0.9], &[0.0, 1.0, 1.5, 3.0], 0.75);
    let v = knot_velocities(&traj, 0);
    assert_eq!(v[0], 0.75);
    assert!(v[3].abs() < 1e-14);
}

#[test]
fn sampling_examples() {
    let traj = scalar(&[0.0, 1.0], &[0.0, 2.0], 0.0);
    assert!((traj.sample(1.0).q[0] - 0.5).abs() < 1e-15);
    let before = traj.sample(-1.0);
    assert!(before.clamped);
    assert_eq!(before.q[0], 0.0);
    let after = traj.sample(5.0);
    assert!(after.clamped);
    assert_eq!(after.q[0], 1.0);
    assert!(!traj.sample(2.0).clamped);
    assert!(traj.sample(f64::NAN).clamped);
}

#[test]
fn compile_rejects_bad_input() {
    let a = dv(&[0.0, 1.0]);
    let b = dv(&[1.0, 1.0]);
    let z = DVector::zeros(2);
    assert_eq!(compile(&[a.clone()], &[0.0], &z), Err(TrajectoryError::TooFewKnots(1)));
    assert!(matches!(
        compile(&[a.clone(), b.clone()], &[1.0, 1.0], &z),
        Err(TrajectoryError::NonIncreasingTimes(1, _, _))
    ));
    assert!(matches!(
        compile(&[a.clone(), b.clone(), a.clone()], &[0.0, 2.0, 1.0], &z),
        Err(TrajectoryError::NonIncreasingTimes(2, _, _))
    ));
    assert!(matches!(compile(&[a.clone(), dv(&[1.0])], &[0.0, 1.0], &z), Err(TrajectoryError::Dimension(1, 1, 2))));
    assert!(matches!(compile(&[a.clone(), b.clone()], &[0.0, 1.0], &dv(&[0.0])), Err(TrajectoryError::Dimension(..))));
    assert!(matches!(compile(&[a, dv(&[f64::NAN, 0.0])], &[0.0, 1.0], &z), Err(TrajectoryError::NonFinite(_))));
}

fn knots_strategy() -> impl Strategy<Value = (Vec<DVector<f64>>, Vec<f64>, DVector<f64>)> {
    (2usize..8, 1usize..4).prop_flat_map(|(n, dim)| {
        (
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, dim), n),
            proptest::collection::vec(0.05f64..3.0, n - 1),
            -2.0f64..2.0,
            proptest::collection::vec(-1.0f64..1.0, dim),
        )
            .prop_map(|(q, h, t0, v0)| {
                let mut t = vec![t0];
                for d in h {
                    t.push(t.last().unwrap() + d);
                }
                (q.into_iter().map(DVector::from_vec).collect(), t, DVector::from_vec(v0))
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn knots_and_velocity_continuity_are_exact((q, t, v0) in knots_strategy()) {
        let traj = compile(&q, &t, &v0).unwrap();
        for (i, ti) in t.iter().enumerate() {
            prop_assert_eq!(traj.sample(*ti).q, q[i].clone());
        }
        for i in 0..traj.segment_count() {
            let h = t[i + 1] - t[i];
            for j in 0..v0.len() {
                let [a0, a1, a2, a3] = traj.segments[i][j];
                let end = a0 + h * (a1 + h * (a2 + h * a3));
                prop_assert!((end - q[i + 1][j]).abs() <= 1e-12 * (1.0 + q[i + 1][j].abs()) * 10.0);
                if i + 1 < traj.segment_count() {
                    let vend = a1 + h * (2.0 * a2 + 3.0 * h * a3);
                    let vnext = traj.segments[i + 1][j][1];
                    prop_assert!((vend - vnext).abs() <= 1e-12 * (1.0 + vnext.abs()) * 10.0, "{} vs {}", vend, vnext);
                }
            }
        }
    }

    #[test]
    fn cost_matches_the_knot_velocity_quadratic((q, t, v0) in knots_strategy()) {
        let traj = compile(&q, &t, &v0).unwrap();
        let v = traj.knot_velocities();
        let mut closed = 0.0;
        for j in 0..v0.len() {
            for i in 0..traj.segment_count() {
                closed += segment_cost(q[i][j], q[i + 1][j], v[i][j], v[i + 1][j], t[i + 1] - t[i]);
            }
            let qs: Vec<f64> = q.iter().map(|c| c[j]).collect();
            let vs: Vec<f64> = v.iter().map(|c| c[j]).collect();
            let simpson = objective(&qs, &t, &vs);
            let own: f64 = (0..traj.segment_count())
                .map(|i| segment_cost(qs[i], qs[i + 1], vs[i], vs[i + 1], t[i + 1] - t[i]))
                .sum();
            prop_assert!((simpson - own).abs() <= 1e-10 * (1.0 + own.abs()));
        }
        let cost = traj.acceleration_cost();
        prop_assert!((cost - closed).abs() <= 1e-10 * (1.0 + closed.abs()), "{} vs {}", cost, closed);
    }

    #[test]
    fn shifting_times_shifts_samples((q, t, v0) in knots_strategy(), shift in -5.0f64..5.0, s in 0.0f64..1.0) {
        let a = compile(&q, &t, &v0).unwrap();
        let shifted: Vec<f64> = t.iter().map(|x| x + shift).collect();
        let b = compile(&q, &shifted, &v0).unwrap();
        let ta = t[0] + s * (t[t.len() - 1] - t[0]);
        let (sa, sb) = (a.sample(ta), b.sample(ta + shift));
        prop_assert!((sa.q - sb.q).amax() < 1e-9);
        prop_assert!((sa.qd - sb.qd).amax() < 1e-8);
    }

    #[test]
    fn sampled_velocity_matches_finite_differences((q, t, v0) in knots_strategy(), s in 0.02f64..0.98) {
        let traj = compile(&q, &t, &v0).unwrap();
        let x = t[0] + s * (t[t.len() - 1] - t[0]);
        // Stay off the knots so the difference does not straddle segments.
        prop_assume!(t.iter().all(|k| (k - x).abs() > 2e-5));
        let h = 1e-5;
        let fd = (traj.sample(x + h).q - traj.sample(x - h).q) / (2.0 * h);
        let fda = (traj.sample(x + h).qd - traj.sample(x - h).qd) / (2.0 * h);
        let smp = traj.sample(x);
        prop_assert!((fd - &smp.qd).amax() < 1e-6 * (1.0 + smp.qd.amax()));
        prop_assert!((fda - &smp.qdd).amax() < 1e-5 * (1.0 + smp.qdd.amax()));
    }
}

// ---------------------------------------------------------------------------
// Scripts and durations

fn blank_keyframes(n: usize, dim: usize) -> Script {
    let mut s = Script::new("m", "e");
    for i in 0..n {
        s.keyframes.push(KeyFrame {
            index: i,
            controller_q: DVector::from_element(dim, i as f64),
            puppet_q: DVector::from_element(dim, i as f64 + 1.0),
            anchors: Vec::new(),
            nominal_q: None,
            duration_s: None,
            region_mode: Default::default(),
            notes: String::new(),
            extra: Default::default(),
        });
    }
    s
}

#[test]
fn default_durations_add_up() {
    let mut s = blank_keyframes(5, 2);
    let sim = compile_script(&s, Profile::Simulation).unwrap();
    assert_eq!(sim.duration(), 10.0);
    assert_eq!(sim.segment_count(), 5);
    assert_eq!(compile_script(&s, Profile::Hardware).unwrap().duration(), 20.0);
    s.keyframes[2].duration_s = Some(0.5);
    assert_eq!(compile_script(&s, Profile::Simulation).unwrap().duration(), 8.5);
    assert_eq!(s.total_duration(Profile::Hardware), 16.5);

    let (configs, times) = script_knots(&s, Profile::Simulation);
    assert_eq!(configs[0], s.keyframes[0].controller_q);
    assert_eq!(configs[5], s.keyframes[4].puppet_q);
    assert_eq!(times, [0.0, 2.0, 4.0, 4.5, 6.5, 8.5]);
}

#[test]
fn csv_export_is_stable() {
    let traj = scalar(&[0.0, 1.0], &[0.0, 0.5], 0.0);
    let csv = traj.to_csv(10.0, &["j".to_string()]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,q_j,qd_j");
    assert_eq!(lines.len(), 1 + 6);
    assert_eq!(lines[6], "0.5,1,0");
    assert_eq!(csv, traj.to_csv(10.0, &["j".to_string()]));
    let back: CubicSplineTrajectory = serde_json::from_str(&serde_json::to_string(&traj).unwrap()).unwrap();
    assert_eq!(back, traj);
}

#[test]
fn sample_times_include_both_ends() {
    assert_eq!(sample_times(0.0, 0.1, 100.0).len(), 11);
    let t = sample_times(1.0, 1.235, 100.0);
    assert_eq!(t.first(), Some(&1.0));
    assert_eq!(t.last(), Some(&1.235));
    assert_eq!(t.len(), 25);
}

// ---------------------------------------------------------------------------
// Validation

fn slow_joint() -> RobotModel {
    RobotModel::from_json_str(
        &json!({
            "name": "slow",
            "bodies": [{"name": "b", "mass": 1.0, "com": [0.5, 0.0, 0.0]}],
            "joints": [{"name": "j", "type": "revolute", "axis": [0.0, 0.0, 1.0], "parent": "world", "child": "b",
                        "limits": {"pos": [-2.0, 2.0], "vel": 1.0, "torque": [-5.0, 5.0]}}]
        })
        .to_string(),
    )
    .unwrap()
}

#[test]
fn ample_durations_validate_cleanly() {
    let model = fixtures::two_link_arm();
    let configs = [dv(&[0.0, 0.5]), dv(&[0.6, 1.0]), dv(&[1.0, 0.2])];
    let traj = compile(&configs, &[0.0, 2.0, 4.0], &DVector::zeros(2)).unwrap();
    let report = validate(&traj, &model, None, &ValidationOptions::default());
    assert!(report.ok(), "{report:?}");
    assert_eq!(report.samples, 401);
}

#[test]
fn fast_transition_reports_peak_velocity() {
    let model = slow_joint();
    let traj = scalar(&[0.0, 1.0], &[0.0, 0.1], 0.0);
    let report = validate(&traj, &model, None, &ValidationOptions::default());
    assert!(!report.ok());
    assert_eq!(report.velocity_violations.len(), 1);
    let v = &report.velocity_violations[0];
    // Clamped cubic peak 1.5·Δq/Δt at the midpoint.
    assert!((v.peak_value - 15.0).abs() < 1e-9, "{}", v.peak_value);
    assert!((v.peak_time - 0.05).abs() < 1e-12);
    assert_eq!(v.limit, 1.0);
    assert_eq!(v.joint, "j");
    assert!(v.start > 0.0 && v.end < 0.1);
    assert!(report.position_violations.is_empty());
}

#[test]
fn overshoot_past_a_joint_limit_is_reported() {
    let model = slow_joint();
    // Interior velocity carries the spline past the upper limit between knots.
    let traj = scalar(&[0.0, 1.99, 1.99], &[0.0, 3.0, 4.0], 0.0);
    let report = validate(&traj, &model, None, &ValidationOptions::default());
    assert_eq!(report.position_violations.len(), 1);
    let p = &report.position_violations[0];
    assert!(p.peak_value > 2.0 && p.limit == 2.0);
    assert!(p.start > 3.0 && p.end < 4.0);
}

#[test]
fn sweep_through_a_barrier_reports_a_collision() {
    let model = fixtures::two_link_arm();
    let mut env = Environment::empty();
    env.push_box("barrier", Vector3::new(1.6, 0.0, 0.0), Vector3::new(0.2, 0.2, 0.2));
    let traj = compile(&[dv(&[-1.2, 0.0]), dv(&[1.2, 0.0])], &[0.0, 2.0], &DVector::zeros(2)).unwrap();
    let report = validate(&traj, &model, Some(&env), &ValidationOptions::default());
    assert!(!report.collisions.is_empty());
    for c in &report.collisions {
        assert_eq!(c.obstacle, "barrier");
        assert!(c.start > 0.0 && c.end < 2.0 && c.start <= c.peak_time && c.peak_time <= c.end);
        assert!(c.depth > 1e-3);
    }
    // The deepest point is when the arm is straight through the box, at mid time.
    let link2 = report.collisions.iter().find(|c| c.robot == "link2_box").unwrap();
    assert!((link2.peak_time - 1.0).abs() < 0.05, "{}", link2.peak_time);
    // Without the environment only limits are checked.
    assert!(validate(&traj, &model, None, &ValidationOptions::default()).ok());
}

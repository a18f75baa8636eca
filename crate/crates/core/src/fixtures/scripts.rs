use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DVector, Isometry3, Translation3, UnitQuaternion, Vector3};
use serde_json::json;

use super::models::{ground_and_rails, humanoid, humanoid_lean};
use crate::geometry::contact::TANGENT_AXIS_MASK;
use crate::ik::WeightTier;
use crate::kinematics::RobotModel;
use crate::feasibility::RegionOptions;
use crate::ik::SolverSettings;
use crate::script::{snap_anchors_to_puppet, solve_keyframe, Anchor, FollowMode, KeyFrame, Script};

/// Control frame at the humanoid sole center, z axis pointing out of the sole.
pub fn humanoid_sole_frame() -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(0.05, 0.0, -0.05),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI),
    )
}

/// Sole corners in the sole control frame.
pub fn humanoid_sole_patch() -> Vec<Vector3<f64>> {
    vec![
        Vector3::new(-0.11, -0.05, 0.0),
        Vector3::new(0.11, -0.05, 0.0),
        Vector3::new(0.11, 0.05, 0.0),
        Vector3::new(-0.11, 0.05, 0.0),
    ]
}

/// Control frame on the outer side of a humanoid hand, z axis pointing out
/// of the hand (toward +y for the left hand, −y for the right).
pub fn humanoid_hand_side_frame(left: bool) -> Isometry3<f64> {
    let (y, angle) = if left { (0.04, -FRAC_PI_2) } else { (-0.04, FRAC_PI_2) };
    Isometry3::from_parts(
        Translation3::new(0.0, y, -0.3),
        UnitQuaternion::from_axis_angle(&Vector3::x_axis(), angle),
    )
}

pub fn foot_contact(id: &str, foot: &str) -> Anchor {
    Anchor::pose(id, foot, humanoid_sole_frame(), Isometry3::identity(), TANGENT_AXIS_MASK)
        .with_patch(humanoid_sole_patch())
        .as_contact()
        .as_persistent()
}

fn hand_contact(id: &str, left: bool) -> Anchor {
    let body = if left { "left_forearm" } else { "right_forearm" };
    Anchor::pose(id, body, humanoid_hand_side_frame(left), Isometry3::identity(), TANGENT_AXIS_MASK).as_contact()
}

fn pose(id: &str, body: &str, axes: [bool; 6]) -> Anchor {
    Anchor::pose(id, body, Isometry3::identity(), Isometry3::identity(), axes)
}

fn com(id: &str) -> Anchor {
    Anchor::com(id, Vector3::zeros(), [true, true, false]).with_tier(WeightTier::High)
}

fn keyframe(model: &RobotModel, index: usize, controller: &DVector<f64>, puppet: &DVector<f64>, anchors: Vec<Anchor>) -> KeyFrame {
    KeyFrame {
        index,
        controller_q: controller.clone(),
        puppet_q: puppet.clone(),
        anchors: snap_anchors_to_puppet(&anchors, model, puppet).expect("fixture anchors resolve"),
        nominal_q: None,
        duration_s: None,
        region_mode: Default::default(),
        notes: String::new(),
        extra: Default::default(),
    }
}

/// Five-keyframe bracing scenario on the test humanoid, shaped like a wall
/// bracing session: over the script it uses 6 non-contact pose anchors,
/// 9 contact pose anchors, 1 joint anchor and 3 CoM anchors (distinct ids).
/// Targets are the values the stored puppet configurations achieve.
pub fn bracing_script() -> Script {
    let model = humanoid();
    let leans = [0.0, 0.05, 0.12, 0.2, 0.25];
    let configs: Vec<DVector<f64>> = leans.iter().map(|&l| humanoid_lean(l)).collect();
    let start = model.nominal_q.clone();
    let mirror = WeightTier::Low;

    let lfoot0 = foot_contact("c_lfoot0", "left_foot");
    let rfoot0 = foot_contact("c_rfoot0", "right_foot");
    let pelvis0 = pose("p_pelvis0", "pelvis", [true; 6]);
    let com0 = com("com0");
    let lhand1 = pose("p_lhand1", "left_forearm", [false, false, false, true, true, true]).with_tier(WeightTier::High);
    let lhand2 = hand_contact("c_lhand2", true);
    let rhand2 = pose("p_rhand2", "right_forearm", [false, false, false, true, true, true])
        .with_follow(FollowMode::TrackController);
    let com1 = com("com1").with_follow(FollowMode::SnapOnce);
    let elbow = Anchor::joint("j_lelbow", "left_elbow", 0.0).with_tier(mirror).as_persistent();
    let lfoot3 = foot_contact("c_lfoot3", "left_foot");
    let rfoot3 = foot_contact("c_rfoot3", "right_foot");
    let rhand3 = hand_contact("c_rhand3", false);
    let pelvis3 = pose("p_pelvis3", "pelvis", [true, true, true, false, false, true]);
    let mut swing3 = pose("p_rswing3", "right_shin", [false, false, false, true, false, true]).with_tier(WeightTier::Low);
    swing3.extra.insert("ui_color".into(), json!("#3366ff"));
    let lfoot4 = foot_contact("c_lfoot4", "left_foot");
    let lhand4 = hand_contact("c_lhand4", true);
    let rhand4 = hand_contact("c_rhand4", false);
    let pelvis4 = pose("p_pelvis4", "pelvis", [true; 6]).with_tier(WeightTier::Low);
    let com2 = com("com2");

    let sets = [
        vec![lfoot0.clone(), rfoot0.clone(), pelvis0.clone(), com0.clone()],
        vec![lfoot0.clone(), rfoot0.clone(), pelvis0, lhand1, com0],
        vec![lfoot0, rfoot0, lhand2.clone(), rhand2, com1, elbow.clone()],
        vec![lfoot3, rfoot3.clone(), lhand2, rhand3, pelvis3, swing3, elbow.clone()],
        vec![lfoot4, rfoot3, lhand4, rhand4, pelvis4, com2, elbow],
    ];
    let mut script = Script::new(&model.name, "ground_and_side_wall");
    let mut controller = start;
    for (i, (q, anchors)) in configs.iter().zip(sets).enumerate() {
        script.keyframes.push(keyframe(&model, i, &controller, q, anchors));
        controller = q.clone();
    }
    script.keyframes[1].duration_s = Some(1.5);
    script.keyframes[3].duration_s = Some(3.0);
    script.keyframes[4].notes = "final brace against the side wall".into();
    script.keyframes[4].region_mode = crate::feasibility::RegionMode::MultiContact;
    script.extra.insert("author".into(), json!("fixture"));
    script
}

/// Control frame at the center of the front face of a humanoid shin, z axis
/// pointing out of the face.
pub fn humanoid_shin_front_frame() -> Isometry3<f64> {
    Isometry3::from_parts(
        Translation3::new(0.05, 0.0, -0.18),
        UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2),
    )
}

fn shin_contact(id: &str, shin: &str) -> Anchor {
    let patch = [(-0.17, -0.04), (0.17, -0.04), (0.17, 0.04), (-0.17, 0.04)]
        .iter()
        .map(|&(x, y)| Vector3::new(x, y, 0.0))
        .collect();
    Anchor::pose(id, shin, humanoid_shin_front_frame(), Isometry3::identity(), TANGENT_AXIS_MASK)
        .with_patch(patch)
        .as_contact()
        .as_persistent()
}

/// Torso pitch of each crawl-to-kneel keyframe.
pub const CRAWL_PITCH: [f64; 5] = [1.1, 0.8, 0.5, 0.25, 0.0];
/// Keyframes that keep the hands on the rails.
const CRAWL_HANDHOLDS: usize = 3;
/// Thigh pitch, constant over the motion (hips sit back over the heels).
const CRAWL_THIGH: f64 = -0.3;
/// Gap between the shin faces and the ground.
const CRAWL_CLEARANCE: f64 = 1e-3;
/// Forearm control point of the rail handholds, from the shoulder.
const ARM_REACH: (f64, f64) = (0.3, 0.3);

/// Planar two-link solve: absolute link angles (pitch about +y, zero hanging
/// down) placing the arm end at `(dx, dz)` from the shoulder with the elbow
/// bent forward.
fn arm_angles(dx: f64, dz: f64) -> (f64, f64) {
    let (l1, l2) = ARM_REACH;
    let r2 = dx * dx + dz * dz;
    let c = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let bend = c.acos();
    // Direction of pitch a is (−sin a, −cos a) in (x, z).
    let reach = (-dx).atan2(-dz);
    let a1 = reach + (l2 * bend.sin()).atan2(l1 + l2 * bend.cos());
    (a1, a1 - bend)
}

/// Analytic crawl-to-kneel configuration for torso pitch `pitch` with both
/// knee axes at x = 0. With `hand` the arms reach that rail point (x, z),
/// otherwise they hang with a slight elbow bend.
pub fn crawl_configuration(pitch: f64, hand: Option<(f64, f64)>) -> DVector<f64> {
    let model = humanoid();
    let mut q = DVector::zeros(model.dof());
    let knee_z = 0.05 + CRAWL_CLEARANCE;
    let hip = Vector3::new(0.4 * CRAWL_THIGH.sin(), 0.0, knee_z + 0.4 * CRAWL_THIGH.cos());
    let base = hip + 0.05 * Vector3::new(pitch.sin(), 0.0, pitch.cos());
    q[0] = base.x;
    q[2] = base.z;
    q[4] = pitch;
    let shoulder = base + 0.45 * Vector3::new(pitch.sin(), 0.0, pitch.cos());
    let (a1, a2) = match hand {
        Some((x, z)) => arm_angles(x - shoulder.x, z - shoulder.z),
        None => (-0.1, -0.4),
    };
    let mut set = |joint: &str, v: f64| q[model.joint_coordinate(joint).unwrap()] = v;
    for side in ["left", "right"] {
        set(&format!("{side}_hip"), CRAWL_THIGH - pitch);
        set(&format!("{side}_knee"), FRAC_PI_2 - CRAWL_THIGH);
        set(&format!("{side}_ankle"), 1.2);
        // Shoulder and elbow turn about −y.
        set(&format!("{side}_shoulder"), pitch - a1);
        set(&format!("{side}_elbow"), a1 - a2);
    }
    q
}

/// Rail point held by the hands while crawling.
pub const CRAWL_HANDHOLD: (f64, f64) = (0.3, 0.4);

/// Five-keyframe crawl-to-kneel script on the test humanoid in
/// [`ground_and_rails`]: knees planted on the ground, hands braced sideways
/// on the rails while the torso rises, then released for the upright kneel.
/// Puppet configurations are the solver's own results from each controller
/// configuration, so replaying the script reproduces them.
pub fn crawl_to_kneel_script() -> Script {
    let model = humanoid();
    let env = ground_and_rails();
    let settings = SolverSettings::default();
    let region = RegionOptions::default();
    let mut script = Script::new(&model.name, &env.name);
    let mut controller = crawl_configuration(CRAWL_PITCH[0], Some(CRAWL_HANDHOLD));
    for (i, &pitch) in CRAWL_PITCH.iter().enumerate() {
        let holds = i < CRAWL_HANDHOLDS;
        let target = crawl_configuration(pitch, holds.then_some(CRAWL_HANDHOLD));
        let mut anchors = vec![
            shin_contact("c_lshin", "left_shin"),
            shin_contact("c_rshin", "right_shin"),
            pose("p_pelvis", "pelvis", [true; 6]),
            Anchor::joint("j_lankle", "left_ankle", 0.0).as_persistent(),
            Anchor::joint("j_rankle", "right_ankle", 0.0).as_persistent(),
        ];
        if holds {
            anchors.push(hand_contact("c_lhand", true));
            anchors.push(hand_contact("c_rhand", false));
        } else {
            for joint in ["left_shoulder", "left_elbow", "right_shoulder", "right_elbow"] {
                anchors.push(Anchor::joint(&format!("j_{joint}"), joint, 0.0));
            }
        }
        let mut kf = keyframe(&model, i, &controller, &target, anchors);
        let (q, diag) = solve_keyframe(&model, &env, &kf, &settings, &region).expect("fixture solves");
        debug_assert!(diag.converged(), "crawl keyframe {i}: {:?}", diag.status);
        kf.puppet_q = q;
        controller = kf.puppet_q.clone();
        script.keyframes.push(kf);
    }
    script.keyframes[0].notes = "crawl with hands braced on the rails".into();
    script.keyframes[4].notes = "upright kneel".into();
    script
}

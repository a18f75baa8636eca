use serde_json::{json, Value};

use crate::feasibility::ContactPoint;
use crate::geometry::Environment;
use crate::kinematics::{ModelDoc, RobotModel};
use nalgebra::{DVector, Vector3};

fn box_vertices(min: [f64; 3], max: [f64; 3]) -> Value {
    let mut v = Vec::new();
    for x in [min[0], max[0]] {
        for y in [min[1], max[1]] {
            for z in [min[2], max[2]] {
                v.push(json!([x, y, z]));
            }
        }
    }
    Value::Array(v)
}

fn build(doc: Value) -> RobotModel {
    let doc: ModelDoc = serde_json::from_value(doc).expect("fixture model document");
    RobotModel::from_doc(doc).expect("fixture model is valid")
}

/// Planar arm in the xy plane: two unit links rotating about z, point masses
/// at the link ends. The end effector is `link2` at offset (1, 0, 0).
pub fn two_link_arm() -> RobotModel {
    build(two_link_arm_doc())
}

pub fn two_link_arm_doc() -> Value {
    json!({
        "name": "two_link_arm",
        "bodies": [
            {"name": "link1", "mass": 1.0, "com": [1.0, 0.0, 0.0],
             "polytopes": [{"name": "link1_box", "vertices": box_vertices([0.1, -0.05, -0.05], [0.9, 0.05, 0.05])}]},
            {"name": "link2", "mass": 1.0, "com": [1.0, 0.0, 0.0], "origin": {"xyz": [1.0, 0.0, 0.0]},
             "polytopes": [{"name": "link2_box", "vertices": box_vertices([0.1, -0.05, -0.05], [1.05, 0.05, 0.05])}]}
        ],
        "joints": [
            {"name": "shoulder", "type": "revolute", "axis": [0.0, 0.0, 1.0], "parent": "world", "child": "link1",
             "limits": {"pos": [-3.1, 3.1], "vel": 3.0, "torque": [-50.0, 50.0]}},
            {"name": "elbow", "type": "revolute", "axis": [0.0, 0.0, 1.0], "parent": "link1", "child": "link2",
             "limits": {"pos": [-3.1, 3.1], "vel": 3.0, "torque": [-50.0, 50.0]}}
        ],
        "nominal_q": [0.0, 0.5]
    })
}

/// Single revolute joint about y with a point mass `mass` at distance `length`
/// along the body x axis; q = 0 is horizontal, q = π/2 hangs straight down.
pub fn pendulum(mass: f64, length: f64) -> RobotModel {
    build(json!({
        "name": "pendulum",
        "bodies": [{"name": "bob", "mass": mass, "com": [length, 0.0, 0.0]}],
        "joints": [{"name": "pivot", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "world", "child": "bob",
                    "limits": {"pos": [-3.2, 3.2], "vel": 5.0, "torque": [-100.0, 100.0]}}]
    }))
}

/// Serial chain of unit-length revolute links about z (planar when `axes` is
/// None), otherwise using the given joint axes.
pub fn planar_chain(n: usize) -> RobotModel {
    let axes = vec![[0.0, 0.0, 1.0]; n];
    chain_with_axes(&axes, 1.0)
}

pub fn chain_with_axes(axes: &[[f64; 3]], link: f64) -> RobotModel {
    let mut bodies = Vec::new();
    let mut joints = Vec::new();
    for (i, axis) in axes.iter().enumerate() {
        let name = format!("link{}", i + 1);
        let origin = if i == 0 { [0.0; 3] } else { [link, 0.0, 0.0] };
        bodies.push(json!({"name": name, "mass": 1.0, "com": [0.5 * link, 0.0, 0.0], "origin": {"xyz": origin}}));
        let parent = if i == 0 { "world".to_string() } else { format!("link{i}") };
        joints.push(json!({"name": format!("j{}", i + 1), "type": "revolute", "axis": axis,
                           "parent": parent, "child": name,
                           "limits": {"pos": [-3.1, 3.1], "vel": 3.0, "torque": [-10.0, 10.0]}}));
    }
    build(json!({"name": format!("chain{}", axes.len()), "bodies": bodies, "joints": joints}))
}

/// Spatial 6-DoF arm with mixed axes, a prismatic joint and tilted link
/// origins; used for Jacobian and forward-kinematics checks.
pub fn spatial_arm() -> RobotModel {
    build(json!({
        "name": "spatial_arm",
        "bodies": [
            {"name": "b1", "mass": 2.0, "com": [0.0, 0.0, 0.15]},
            {"name": "b2", "mass": 1.5, "com": [0.2, 0.0, 0.0], "origin": {"xyz": [0.0, 0.0, 0.3], "rpy": [0.1, 0.0, 0.0]}},
            {"name": "b3", "mass": 1.0, "com": [0.15, 0.02, 0.0], "origin": {"xyz": [0.4, 0.0, 0.0]}},
            {"name": "b4", "mass": 0.8, "com": [0.0, 0.0, 0.1], "origin": {"xyz": [0.3, 0.0, 0.0], "rpy": [0.0, 0.3, 0.0]}},
            {"name": "b5", "mass": 0.5, "com": [0.05, 0.0, 0.0], "origin": {"xyz": [0.0, 0.0, 0.2]}},
            {"name": "b6", "mass": 0.3, "com": [0.0, 0.03, 0.05], "origin": {"xyz": [0.1, 0.0, 0.0], "rpy": [0.0, 0.0, -0.4]}}
        ],
        "joints": [
            {"name": "j1", "type": "revolute", "axis": [0.0, 0.0, 1.0], "parent": "world", "child": "b1",
             "limits": {"pos": [-3.0, 3.0], "vel": 2.0, "torque": [-80.0, 80.0]}},
            {"name": "j2", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "b1", "child": "b2",
             "limits": {"pos": [-2.0, 2.0], "vel": 2.0, "torque": [-60.0, 60.0]}},
            {"name": "j3", "type": "prismatic", "axis": [1.0, 0.0, 0.0], "parent": "b2", "child": "b3",
             "limits": {"pos": [-0.2, 0.3], "vel": 0.5, "torque": [-200.0, 200.0]}},
            {"name": "j4", "type": "revolute", "axis": [0.6, 0.0, 0.8], "parent": "b3", "child": "b4",
             "limits": {"pos": [-2.5, 2.5], "vel": 2.0, "torque": [-30.0, 30.0]}},
            {"name": "j5", "type": "revolute", "axis": [1.0, 0.0, 0.0], "parent": "b4", "child": "b5",
             "limits": {"pos": [-2.5, 2.5], "vel": 2.0, "torque": [-20.0, 20.0]}},
            {"name": "j6", "type": "revolute", "axis": [0.0, 0.6, -0.8], "parent": "b5", "child": "b6",
             "limits": {"pos": [-2.5, 2.5], "vel": 2.0, "torque": [-10.0, 10.0]}}
        ]
    }))
}

/// Two-point-mass "dumbbell" on a planar base moving in the xz plane
/// (axis y); the base rotation is pitch. Used for CoM symmetry checks.
pub fn planar_dumbbell() -> RobotModel {
    build(json!({
        "name": "planar_dumbbell",
        "bodies": [
            {"name": "bar", "mass": 0.0},
            {"name": "left", "mass": 2.0, "com": [0.0, 0.0, 0.0], "origin": {"xyz": [-0.5, 0.0, 0.0]}},
            {"name": "right", "mass": 2.0, "com": [0.0, 0.0, 0.0], "origin": {"xyz": [0.5, 0.0, 0.0]}}
        ],
        "joints": [
            {"name": "base", "type": "planar-base", "axis": [0.0, 1.0, 0.0], "parent": "world", "child": "bar",
             "limits": {"pos": [-5.0, 5.0], "vel": 2.0, "torque": [0.0, 0.0]}},
            {"name": "left_hinge", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "bar", "child": "left",
             "limits": {"pos": [-1.0, 1.0], "vel": 2.0, "torque": [-10.0, 10.0]}, "mirror": "right_hinge"},
            {"name": "right_hinge", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "bar", "child": "right",
             "limits": {"pos": [-1.0, 1.0], "vel": 2.0, "torque": [-10.0, 10.0]}, "mirror": "left_hinge"}
        ]
    }))
}

/// Standing height of the humanoid pelvis with straight legs (m).
pub const HUMANOID_STAND_HEIGHT: f64 = 0.9;

/// Small 16-DoF humanoid: free-base pelvis/torso, legs with hip, knee and
/// ankle pitch, arms with shoulder and elbow pitch. Foot soles sit 0.9 m
/// below the pelvis origin when the legs are straight.
pub fn humanoid() -> RobotModel {
    build(humanoid_doc())
}

pub fn humanoid_doc() -> Value {
    let mut bodies = vec![json!({
        "name": "pelvis", "mass": 20.0, "com": [0.0, 0.0, 0.2],
        "polytopes": [{"name": "torso_box", "vertices": box_vertices([-0.1, -0.15, -0.05], [0.1, 0.15, 0.55])}]
    })];
    let mut joints = vec![json!({
        "name": "base", "type": "free-base", "axis": [0.0, 0.0, 1.0], "parent": "world", "child": "pelvis",
        "limits": {"pos": [-10.0, 10.0], "vel": 2.0, "torque": [0.0, 0.0]}
    })];
    for (side, sy, other) in [("left", 1.0, "right"), ("right", -1.0, "left")] {
        let b = |n: &str| format!("{side}_{n}");
        let m = |n: &str| format!("{other}_{n}");
        bodies.push(json!({"name": b("thigh"), "mass": 4.0, "com": [0.0, 0.0, -0.2],
            "origin": {"xyz": [0.0, 0.1 * sy, -0.05]},
            "polytopes": [{"name": b("thigh_box"), "vertices": box_vertices([-0.05, -0.05, -0.35], [0.05, 0.05, -0.08])}]}));
        bodies.push(json!({"name": b("shin"), "mass": 3.0, "com": [0.0, 0.0, -0.2],
            "origin": {"xyz": [0.0, 0.0, -0.4]},
            "polytopes": [{"name": b("shin_box"), "vertices": box_vertices([-0.04, -0.04, -0.36], [0.05, 0.04, 0.0])}]}));
        bodies.push(json!({"name": b("foot"), "mass": 1.0, "com": [0.04, 0.0, -0.03],
            "origin": {"xyz": [0.0, 0.0, -0.4]},
            "polytopes": [{"name": b("foot_box"), "vertices": box_vertices([-0.06, -0.05, -0.05], [0.16, 0.05, -0.01])}]}));
        bodies.push(json!({"name": b("upper_arm"), "mass": 2.0, "com": [0.0, 0.0, -0.15],
            "origin": {"xyz": [0.0, 0.2 * sy, 0.45]},
            "polytopes": [{"name": b("upper_arm_box"), "vertices": box_vertices([-0.035, -0.035, -0.26], [0.035, 0.035, -0.04])}]}));
        bodies.push(json!({"name": b("forearm"), "mass": 1.5, "com": [0.0, 0.0, -0.15],
            "origin": {"xyz": [0.0, 0.0, -0.3]},
            "polytopes": [{"name": b("hand_box"), "vertices": box_vertices([-0.04, -0.04, -0.34], [0.04, 0.04, -0.04])}]}));

        let lim = |lo: f64, hi: f64, vel: f64, tau: f64| json!({"pos": [lo, hi], "vel": vel, "torque": [-tau, tau]});
        joints.push(json!({"name": b("hip"), "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "pelvis",
            "child": b("thigh"), "limits": lim(-2.4, 0.8, 3.0, 150.0), "mirror": m("hip")}));
        joints.push(json!({"name": b("knee"), "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": b("thigh"),
            "child": b("shin"), "limits": lim(-0.05, 2.6, 3.0, 150.0), "mirror": m("knee")}));
        joints.push(json!({"name": b("ankle"), "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": b("shin"),
            "child": b("foot"), "limits": lim(-1.2, 1.2, 3.0, 100.0), "mirror": m("ankle")}));
        joints.push(json!({"name": b("shoulder"), "type": "revolute", "axis": [0.0, -1.0, 0.0], "parent": "pelvis",
            "child": b("upper_arm"), "limits": lim(-1.0, 3.1, 3.0, 60.0), "mirror": m("shoulder")}));
        joints.push(json!({"name": b("elbow"), "type": "revolute", "axis": [0.0, -1.0, 0.0], "parent": b("upper_arm"),
            "child": b("forearm"), "limits": lim(-0.05, 2.6, 3.0, 40.0), "mirror": m("elbow")}));
    }
    let mut nominal = vec![0.0; 16];
    nominal[2] = HUMANOID_STAND_HEIGHT;
    json!({"name": "test_humanoid", "bodies": bodies, "joints": joints, "nominal_q": nominal})
}

/// Contact point on the sole of a humanoid foot in the foot body frame:
/// corners of the 0.22 × 0.10 m sole.
pub fn humanoid_sole_corners() -> [Vector3<f64>; 4] {
    [
        Vector3::new(-0.06, -0.05, -0.05),
        Vector3::new(0.16, -0.05, -0.05),
        Vector3::new(0.16, 0.05, -0.05),
        Vector3::new(-0.06, 0.05, -0.05),
    ]
}

/// Tip of the humanoid hand box in the forearm frame.
pub fn humanoid_hand_tip() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -0.34)
}

/// Ground slab whose top face is z = 0.
pub fn ground() -> Environment {
    let mut env = Environment::empty();
    env.name = "ground".into();
    env.push_box("floor", Vector3::new(0.0, 0.0, -0.05), Vector3::new(6.0, 6.0, 0.1));
    env
}

/// Ground plus a vertical wall whose near face is the plane x = `wall_x`.
pub fn ground_and_wall(wall_x: f64) -> Environment {
    let mut env = ground();
    env.name = "ground_and_wall".into();
    env.push_box("wall", Vector3::new(wall_x + 0.1, 0.0, 1.0), Vector3::new(0.2, 3.0, 2.0));
    env
}

/// Ground with a low block in front of the robot (top face z = 0.3).
pub fn ground_and_block() -> Environment {
    let mut env = ground();
    env.name = "ground_and_block".into();
    env.push_box("block", Vector3::new(0.75, 0.0, 0.15), Vector3::new(0.5, 1.2, 0.3));
    env
}

/// Ground contacts at the four sole corners of both humanoid feet.
pub fn humanoid_foot_contacts(friction: f64) -> Vec<ContactPoint> {
    ["left_foot", "right_foot"]
        .iter()
        .flat_map(|foot| {
            humanoid_sole_corners()
                .into_iter()
                .map(move |p| ContactPoint::new(foot, p, Vector3::z()).with_friction(friction))
        })
        .collect()
}

/// Humanoid configuration leaning forward by `lean` rad about the ankles with
/// flat feet on the ground, left arm hanging and right arm reaching forward.
pub fn humanoid_lean(lean: f64) -> DVector<f64> {
    let model = humanoid();
    let mut q = model.nominal_q.clone();
    let set = |q: &mut DVector<f64>, joint: &str, v: f64| q[model.joint_coordinate(joint).unwrap()] = v;
    q[0] = 0.85 * lean.sin();
    q[2] = 0.05 + 0.85 * lean.cos();
    q[4] = lean;
    set(&mut q, "left_ankle", -lean);
    set(&mut q, "right_ankle", -lean);
    set(&mut q, "left_shoulder", lean);
    set(&mut q, "right_shoulder", lean + std::f64::consts::FRAC_PI_2);
    q
}

/// Lean of the bracing fixture: the CoM sits ahead of the toes.
pub const BRACING_LEAN: f64 = 0.25;

/// Side face of the left hand box in the forearm frame.
pub fn humanoid_left_hand_side() -> Vector3<f64> {
    Vector3::new(0.0, 0.04, -0.3)
}

/// Bracing fixture: leaning humanoid whose hanging left hand presses on a
/// wall to its left, plus both feet flat on the ground.
pub fn bracing_fixture() -> (RobotModel, DVector<f64>, Vec<ContactPoint>, Environment) {
    let model = humanoid();
    let q = humanoid_lean(BRACING_LEAN);
    let mut contacts = humanoid_foot_contacts(0.7);
    contacts.push(ContactPoint::new("left_forearm", humanoid_left_hand_side(), -Vector3::y()));
    let mut env = ground();
    env.name = "ground_and_side_wall".into();
    env.push_box("side_wall", Vector3::new(0.0, 0.34, 1.0), Vector3::new(2.0, 0.2, 2.0));
    (model, q, contacts, env)
}

/// Planar toy for region checks: a trunk on a planar base in the xz plane
/// with a two-joint leg standing on the ground and a two-joint arm pressing
/// on a wall ahead. Returns the model, configuration and the two contacts.
pub fn planar_toy() -> (RobotModel, DVector<f64>, Vec<ContactPoint>) {
    let model = build(json!({
        "name": "planar_toy",
        "bodies": [
            {"name": "trunk", "mass": 12.0, "com": [0.0, 0.0, 0.2]},
            {"name": "thigh", "mass": 2.0, "com": [0.0, 0.0, -0.25]},
            {"name": "shank", "mass": 1.0, "com": [0.0, 0.0, -0.25], "origin": {"xyz": [0.0, 0.0, -0.5]}},
            {"name": "upper_arm", "mass": 1.0, "com": [0.2, 0.0, 0.0], "origin": {"xyz": [0.0, 0.0, 0.4]}},
            {"name": "forearm", "mass": 0.5, "com": [0.2, 0.0, 0.0], "origin": {"xyz": [0.4, 0.0, 0.0]}}
        ],
        "joints": [
            {"name": "base", "type": "planar-base", "axis": [0.0, 1.0, 0.0], "parent": "world", "child": "trunk",
             "limits": {"pos": [-5.0, 5.0], "vel": 2.0, "torque": [0.0, 0.0]}},
            {"name": "hip", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "trunk", "child": "thigh",
             "limits": {"pos": [-2.0, 2.0], "vel": 3.0, "torque": [-60.0, 60.0]}},
            {"name": "knee", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "thigh", "child": "shank",
             "limits": {"pos": [-2.0, 2.0], "vel": 3.0, "torque": [-60.0, 60.0]}},
            {"name": "shoulder", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "trunk", "child": "upper_arm",
             "limits": {"pos": [-2.0, 2.0], "vel": 3.0, "torque": [-30.0, 30.0]}},
            {"name": "elbow", "type": "revolute", "axis": [0.0, 1.0, 0.0], "parent": "upper_arm", "child": "forearm",
             "limits": {"pos": [-2.0, 2.0], "vel": 3.0, "torque": [-15.0, 15.0]}}
        ]
    }));
    // Base coordinates: in-plane z, x, then pitch.
    let mut q = DVector::zeros(model.dof());
    q[0] = 1.0;
    q[1] = 0.0;
    q[model.joint_coordinate("hip").unwrap()] = 0.3;
    q[model.joint_coordinate("knee").unwrap()] = -0.5;
    q[model.joint_coordinate("shoulder").unwrap()] = -0.3;
    q[model.joint_coordinate("elbow").unwrap()] = 0.4;
    let contacts = vec![
        ContactPoint::new("shank", Vector3::new(0.0, 0.0, -0.5), Vector3::z()),
        ContactPoint::new("forearm", Vector3::new(0.4, 0.0, 0.0), -Vector3::x()),
    ];
    (model, q, contacts)
}

/// Ground plus two side rails whose inner faces are the planes y = ±0.24,
/// where the outer faces of the humanoid hands sit.
pub fn ground_and_rails() -> Environment {
    let mut env = ground();
    env.name = "ground_and_rails".into();
    env.push_box("left_rail", Vector3::new(0.3, 0.29, 0.4), Vector3::new(1.0, 0.1, 0.8));
    env.push_box("right_rail", Vector3::new(0.3, -0.29, 0.4), Vector3::new(1.0, 0.1, 0.8));
    env
}

use std::sync::Arc;

use anchorpose::feasibility::RegionMode;
use anchorpose::fixtures;
use anchorpose::geometry::Environment;
use anchorpose::ik::{SolverSettings, WeightTier};
use anchorpose::kinematics::{center_of_mass, forward_kinematics, RobotModel};
use anchorpose::script::{
    apply_anchor_edit, clear_non_persistent, snap_anchors_to_puppet, Anchor, AnchorEdit, AnchorKind, AnchorTarget,
    AuthoringSession, FollowMode, Profile, Script, ScriptError, UndoStack,
};
use nalgebra::{DVector, Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use proptest::prelude::*;
use serde_json::json;

fn session(model: RobotModel, start: Option<DVector<f64>>) -> AuthoringSession {
    AuthoringSession::new(Arc::new(model), Arc::new(Environment::empty()), start).unwrap()
}

fn arm_tip(target: Vector3<f64>) -> Anchor {
    Anchor::pose(
        "tip",
        "link2",
        Isometry3::translation(1.0, 0.0, 0.0),
        Isometry3::from_parts(Translation3::from(target), UnitQuaternion::identity()),
        [false, false, false, true, true, false],
    )
}

fn ids(anchors: &[Anchor]) -> Vec<&str> {
    anchors.iter().map(|a| a.id.as_str()).collect()
}

// ---------------------------------------------------------------------------
// Persistence

#[test]
fn anchor_kinds_round_trip_through_json() {
    let anchors = vec![
        arm_tip(Vector3::new(1.2, 0.7, 0.0)).with_tier(WeightTier::High).as_persistent(),
        Anchor::com("c", Vector3::new(0.1, -0.2, 0.9), [true, false, true]).with_follow(FollowMode::SnapOnce),
        Anchor::joint("j", "left_elbow", 1.2).mirrored(),
        fixtures::foot_contact("f", "left_foot"),
    ];
    for a in anchors {
        let text = serde_json::to_string(&a).unwrap();
        let back: Anchor = serde_json::from_str(&text).unwrap();
        assert_eq!(back, a, "{text}");
    }
}

#[test]
fn anchor_file_form_uses_flat_fields() {
    let a = Anchor::joint("j", "left_elbow", 1.25).with_tier(WeightTier::Low);
    let v = serde_json::to_value(&a).unwrap();
    assert_eq!(
        v,
        json!({"id": "j", "kind": "joint", "joint": "left_elbow", "target": 1.25, "tier": "low",
               "contact": false, "persistent": false, "follow": "none", "mirroring": false})
    );
    let minimal: Anchor = serde_json::from_value(json!({"id": "c", "kind": "com", "target": [0.0, 0.0, 1.0]})).unwrap();
    assert_eq!(minimal, Anchor::com("c", Vector3::new(0.0, 0.0, 1.0), [true; 3]));
}

#[test]
fn malformed_anchor_documents_are_rejected() {
    for bad in [
        json!({"id": "a", "kind": "joint", "target": 1.0}),
        json!({"id": "a", "kind": "joint", "joint": "j1", "target": [1.0, 2.0, 3.0]}),
        json!({"id": "a", "kind": "com", "target": 1.0}),
        json!({"id": "a", "kind": "com", "target": [0.0, 0.0, 0.0], "axes": [true, false]}),
        json!({"id": "a", "kind": "pose", "body": "b", "target": [0.0, 0.0, 0.0]}),
        json!({"id": "a", "kind": "spring", "target": 1.0}),
    ] {
        assert!(serde_json::from_value::<Anchor>(bad.clone()).is_err(), "{bad}");
    }
}

#[test]
fn empty_script_round_trips() {
    let s = Script::new("m", "e");
    let text = s.to_canonical_json();
    assert_eq!(Script::from_json_str(&text).unwrap(), s);
}

#[test]
fn bracing_fixture_has_the_scenario_anchor_counts() {
    let s = fixtures::bracing_script();
    assert_eq!(s.keyframes.len(), 5);
    let mut distinct: Vec<&Anchor> = Vec::new();
    for kf in &s.keyframes {
        for a in &kf.anchors {
            if !distinct.iter().any(|d| d.id == a.id) {
                distinct.push(a);
            }
        }
    }
    let count = |f: &dyn Fn(&Anchor) -> bool| distinct.iter().filter(|a| f(a)).count();
    assert_eq!(count(&|a| matches!(a.kind, AnchorKind::Pose { .. }) && !a.contact), 6);
    assert_eq!(count(&|a| matches!(a.kind, AnchorKind::Pose { .. }) && a.contact), 9);
    assert_eq!(count(&|a| matches!(a.kind, AnchorKind::Joint { .. })), 1);
    assert_eq!(count(&|a| matches!(a.kind, AnchorKind::Com { .. })), 3);
    s.validate(&fixtures::humanoid()).unwrap();
}

#[test]
fn bracing_fixture_round_trips_with_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bracing.json");
    let s = fixtures::bracing_script();
    s.save(&path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let back = Script::load(&path).unwrap();
    assert_eq!(back, s);
    back.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), first);
    // Saving the same state twice gives the same bytes.
    assert_eq!(s.to_canonical_json(), fixtures::bracing_script().to_canonical_json());
}

#[test]
fn canonical_text_sorts_keys() {
    let text = fixtures::bracing_script().to_canonical_json();
    let top: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("  \"") && !l.starts_with("   "))
        .map(|l| l.trim().split('"').nth(1).unwrap())
        .collect();
    let mut sorted = top.clone();
    sorted.sort();
    assert_eq!(top, sorted);
    assert!(text.ends_with("}\n"));
}

#[test]
fn unknown_fields_survive_load_and_save() {
    let mut v = serde_json::to_value(fixtures::bracing_script()).unwrap();
    v["future_top"] = json!({"x": [1, 2]});
    v["keyframes"][0]["future_kf"] = json!("kept");
    v["keyframes"][0]["anchors"][0]["future_anchor"] = json!(3.5);
    let s = Script::from_json_str(&v.to_string()).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&s.to_canonical_json()).unwrap();
    assert_eq!(saved, v);
    assert_eq!(s.keyframes[0].anchors[0].extra["future_anchor"], json!(3.5));
}

#[test]
fn version_mismatch_asks_for_migration() {
    let mut v = serde_json::to_value(Script::new("m", "e")).unwrap();
    v["version"] = json!(2);
    let err = Script::from_json_str(&v.to_string()).unwrap_err();
    assert!(matches!(err, ScriptError::Version(ref f) if f == "2"), "{err}");
    assert!(err.to_string().contains("migrate"));
}

#[test]
fn malformed_json_reports_byte_offset() {
    let text = "{\"version\": 1,\n \"model\": \"m\",, \"environment\": \"e\"}";
    match Script::from_json_str(text).unwrap_err() {
        ScriptError::Parse { offset, .. } => assert_eq!(&text[offset..offset + 1], ","),
        other => panic!("unexpected {other}"),
    }
    // Truncated input points at its last byte.
    let err = Script::from_json_str("[1, 2").unwrap_err();
    assert!(matches!(err, ScriptError::Parse { offset: 4, .. }), "{err}");
}

#[test]
fn keyframe_indices_must_be_contiguous() {
    let mut s = fixtures::bracing_script();
    s.keyframes[2].index = 7;
    let err = Script::from_json_str(&s.to_canonical_json()).unwrap_err();
    assert!(matches!(err, ScriptError::Schema(_)), "{err}");
}

#[test]
fn scripts_are_checked_against_the_model() {
    let model = fixtures::humanoid();
    let mut s = fixtures::bracing_script();
    s.keyframes[1].puppet_q = DVector::zeros(3);
    assert!(matches!(s.validate(&model), Err(ScriptError::Schema(_))));

    let mut s = fixtures::bracing_script();
    s.keyframes[0].anchors.push(Anchor::pose("ghost", "tail", Isometry3::identity(), Isometry3::identity(), [true; 6]));
    let err = s.validate(&model).unwrap_err();
    assert!(err.to_string().contains("ghost") && err.to_string().contains("tail"), "{err}");
}

// ---------------------------------------------------------------------------
// Anchor edits

#[test]
fn mirrored_joint_anchor_creates_partner() {
    let model = fixtures::humanoid();
    let edit = AnchorEdit::Create {
        anchor: Anchor::joint("le", "left_elbow", 1.2).mirrored(),
    };
    let out = apply_anchor_edit(&[], &model, &edit).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(out[1].joint_name(), Some("right_elbow"));
    assert!(matches!(out[1].kind, AnchorKind::Joint { target, .. } if target == 1.2));

    // Moving and removing either one carries over to the partner.
    let moved = apply_anchor_edit(
        &out,
        &model,
        &AnchorEdit::Move {
            id: out[1].id.clone(),
            target: AnchorTarget::Joint(0.4),
        },
    )
    .unwrap();
    assert!(moved.iter().all(|a| matches!(a.kind, AnchorKind::Joint { target, .. } if target == 0.4)));
    let removed = apply_anchor_edit(&moved, &model, &AnchorEdit::Remove { id: "le".into() }).unwrap();
    assert!(removed.is_empty());
}

#[test]
fn mirroring_without_partner_is_rejected() {
    let model = fixtures::two_link_arm();
    let edit = AnchorEdit::Create {
        anchor: Anchor::joint("e", "elbow", 0.3).mirrored(),
    };
    let err = apply_anchor_edit(&[], &model, &edit).unwrap_err();
    assert!(matches!(err, ScriptError::Mirror(_)), "{err}");
    assert!(err.to_string().contains("elbow"));

    let start = vec![Anchor::joint("e", "elbow", 0.3)];
    let flag = AnchorEdit::Flag {
        id: "e".into(),
        contact: None,
        persistent: None,
        follow: None,
        mirroring: Some(true),
    };
    assert!(matches!(apply_anchor_edit(&start, &model, &flag), Err(ScriptError::Mirror(_))));
}

#[test]
fn retier_changes_the_solver_weight() {
    let model = fixtures::two_link_arm();
    let settings = SolverSettings::default();
    let low = vec![Anchor::joint("e", "elbow", 0.3).with_tier(WeightTier::Low)];
    assert_eq!(low[0].task(&settings).weight, 1.0);
    let high = apply_anchor_edit(
        &low,
        &model,
        &AnchorEdit::Retier {
            id: "e".into(),
            tier: WeightTier::High,
        },
    )
    .unwrap();
    assert_eq!(high[0].task(&settings).weight, 100.0);
}

#[test]
fn contact_flag_promotes_to_contact_weight() {
    let model = fixtures::humanoid();
    let settings = SolverSettings::default();
    let a = vec![Anchor::pose("h", "left_forearm", Isometry3::identity(), Isometry3::identity(), [true; 6])];
    let flag = |contact| AnchorEdit::Flag {
        id: "h".into(),
        contact: Some(contact),
        persistent: None,
        follow: None,
        mirroring: None,
    };
    let c = apply_anchor_edit(&a, &model, &flag(true)).unwrap();
    assert_eq!(c[0].task(&settings).weight, settings.contact_weight);
    assert_eq!(c[0].contact_points().len(), 1);

    let j = vec![Anchor::joint("j", "left_knee", 0.2)];
    let err = apply_anchor_edit(
        &j,
        &model,
        &AnchorEdit::Flag {
            id: "j".into(),
            contact: Some(true),
            persistent: None,
            follow: None,
            mirroring: None,
        },
    )
    .unwrap_err();
    assert!(matches!(err, ScriptError::Anchor(..)), "{err}");
}

#[test]
fn failed_edits_leave_the_session_unchanged() {
    let mut s = session(fixtures::humanoid(), None);
    s.edit(&AnchorEdit::Create {
        anchor: Anchor::joint("k", "left_knee", 0.5),
    })
    .unwrap();
    let before = s.state.clone();
    assert!(matches!(s.edit(&AnchorEdit::Remove { id: "nope".into() }), Err(ScriptError::UnknownAnchor(_))));
    assert!(matches!(
        s.edit(&AnchorEdit::Create {
            anchor: Anchor::joint("k", "right_knee", 0.5)
        }),
        Err(ScriptError::DuplicateAnchor(_))
    ));
    assert!(s
        .edit(&AnchorEdit::Move {
            id: "k".into(),
            target: AnchorTarget::Com(Vector3::zeros())
        })
        .is_err());
    assert_eq!(s.state, before);
}

#[test]
fn edits_round_trip_through_json() {
    let edits = vec![
        AnchorEdit::Create {
            anchor: Anchor::joint("j", "left_elbow", 1.0),
        },
        AnchorEdit::Move {
            id: "p".into(),
            target: AnchorTarget::Pose(Isometry3::translation(0.1, 0.2, 0.3)),
        },
        AnchorEdit::Move {
            id: "c".into(),
            target: AnchorTarget::Com(Vector3::new(0.0, 0.1, 0.8)),
        },
        AnchorEdit::Retier {
            id: "j".into(),
            tier: WeightTier::Low,
        },
        AnchorEdit::Flag {
            id: "j".into(),
            contact: None,
            persistent: Some(true),
            follow: Some(FollowMode::TrackController),
            mirroring: None,
        },
        AnchorEdit::Remove { id: "j".into() },
    ];
    for e in edits {
        let text = serde_json::to_string(&e).unwrap();
        assert_eq!(serde_json::from_str::<AnchorEdit>(&text).unwrap(), e, "{text}");
    }
}

/// Anchors reduced to what a mirror-symmetric comparison should see.
fn mirror_signature(anchors: &[Anchor]) -> Vec<(String, u64, WeightTier)> {
    let mut v: Vec<_> = anchors
        .iter()
        .map(|a| match &a.kind {
            AnchorKind::Joint { joint, target } => (joint.clone(), target.to_bits(), a.tier),
            _ => unreachable!(),
        })
        .collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mirrored_edits_commute(which in 0usize..5, target in -1.0f64..2.0, moved in -1.0f64..2.0, high in any::<bool>()) {
        let model = fixtures::humanoid();
        let joint = ["hip", "knee", "ankle", "shoulder", "elbow"][which];
        let run = |side: &str| {
            let j = format!("{side}_{joint}");
            let mut a = apply_anchor_edit(&[], &model, &AnchorEdit::Create { anchor: Anchor::joint("a", &j, target).mirrored() }).unwrap();
            a = apply_anchor_edit(&a, &model, &AnchorEdit::Move { id: "a".into(), target: AnchorTarget::Joint(moved) }).unwrap();
            if high {
                a = apply_anchor_edit(&a, &model, &AnchorEdit::Retier { id: "a".into(), tier: WeightTier::High }).unwrap();
            }
            a
        };
        prop_assert_eq!(mirror_signature(&run("left")), mirror_signature(&run("right")));
    }

    #[test]
    fn clearing_is_an_order_preserving_idempotent_filter(flags in proptest::collection::vec(any::<bool>(), 0..12)) {
        let anchors: Vec<Anchor> = flags
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let a = Anchor::joint(&format!("a{i}"), "j1", i as f64);
                if p { a.as_persistent() } else { a }
            })
            .collect();
        let once = clear_non_persistent(&anchors);
        prop_assert_eq!(clear_non_persistent(&once), once.clone());
        let expected: Vec<String> = flags.iter().enumerate().filter(|(_, &p)| p).map(|(i, _)| format!("a{i}")).collect();
        prop_assert_eq!(once.iter().map(|a| a.id.clone()).collect::<Vec<_>>(), expected);
    }
}

#[test]
fn clear_non_persistent_examples() {
    let a = Anchor::joint("A", "j1", 0.0).as_persistent();
    let b = Anchor::joint("B", "j1", 0.0);
    let c = Anchor::joint("C", "j2", 0.0);
    assert_eq!(ids(&clear_non_persistent(&[a.clone(), b.clone(), c.clone()])), ["A"]);
    let all = vec![a.clone(), c.clone().as_persistent()];
    assert_eq!(clear_non_persistent(&all), all);
    assert!(clear_non_persistent(&[b, c]).is_empty());
}

// ---------------------------------------------------------------------------
// Snapping

#[test]
fn snapping_copies_achieved_values() {
    let model = fixtures::two_link_arm();
    let q = DVector::from_vec(vec![0.1, 0.27]);
    let out = snap_anchors_to_puppet(&[Anchor::joint("e", "elbow", 0.3)], &model, &q).unwrap();
    assert!(matches!(out[0].kind, AnchorKind::Joint { target, .. } if target == 0.27));
}

#[test]
fn snapping_respects_axis_masks() {
    let model = fixtures::humanoid();
    let q = fixtures::humanoid_lean(0.1);
    let com = center_of_mass(&model, &q).unwrap();
    let kin = forward_kinematics(&model, &q).unwrap();
    let hand = kin.body_poses[model.body_index("left_forearm").unwrap()];

    let old = Vector3::new(9.0, 8.0, 7.0);
    let anchors = vec![
        Anchor::com("c", old, [true, false, true]),
        Anchor::pose(
            "p",
            "left_forearm",
            Isometry3::identity(),
            Isometry3::from_parts(Translation3::from(old), UnitQuaternion::identity()),
            [false, false, false, false, true, false],
        ),
    ];
    let out = snap_anchors_to_puppet(&anchors, &model, &q).unwrap();
    match &out[0].kind {
        AnchorKind::Com { target, axes } => {
            assert_eq!(*target, Vector3::new(com.x, 8.0, com.z));
            assert_eq!(*axes, [true, false, true]);
        }
        _ => unreachable!(),
    }
    match &out[1].kind {
        AnchorKind::Pose { target, .. } => {
            assert_eq!(target.translation.vector, Vector3::new(9.0, hand.translation.y, 7.0));
            assert_eq!(target.rotation, UnitQuaternion::identity());
        }
        _ => unreachable!(),
    }
    assert_eq!(out[0].id, "c");
}

#[test]
fn resolving_after_snap_is_a_fixed_point() {
    let mut s = session(fixtures::two_link_arm(), None);
    s.edit(&AnchorEdit::Create {
        anchor: arm_tip(Vector3::new(1.1, 0.9, 0.0)),
    })
    .unwrap();
    assert!(s.solve().unwrap().converged());
    s.snap_anchors().unwrap();
    let q = s.state.puppet_q.clone();
    assert!(s.solve().unwrap().converged());
    assert!((&s.state.puppet_q - &q).amax() < 1e-9, "{}", (&s.state.puppet_q - &q).amax());
}

#[test]
fn snapped_nominal_holds_still_without_tasks() {
    let model = fixtures::planar_chain(3);
    let q0 = DVector::from_vec(vec![0.4, -0.8, 1.1]);
    let mut s = session(model, Some(q0.clone()));
    s.snap_nominal();
    let first = s.state.clone();
    s.snap_nominal();
    assert_eq!(s.state, first);
    s.solve().unwrap();
    assert!((&s.state.puppet_q - &q0).amax() < 1e-9);
}

#[test]
fn snapped_nominal_stops_null_space_drift() {
    let model = fixtures::planar_chain(3);
    // Tip of link3 held in place; the chain has one redundant direction.
    let q0 = DVector::from_vec(vec![0.9, -1.2, 0.8]);
    let kin = forward_kinematics(&model, &q0).unwrap();
    let tip = kin.body_poses[model.body_index("link3").unwrap()] * Point3::new(1.0, 0.0, 0.0);
    let anchor = Anchor::pose(
        "tip",
        "link3",
        Isometry3::translation(1.0, 0.0, 0.0),
        Isometry3::from_parts(Translation3::from(tip.coords), UnitQuaternion::identity()),
        [false, false, false, true, true, false],
    )
    .with_tier(WeightTier::High);

    let mut drift = session(model.clone(), Some(q0.clone()));
    drift.edit(&AnchorEdit::Create { anchor: anchor.clone() }).unwrap();
    drift.solve().unwrap();
    let moved = (drift.state.puppet_q[1] - q0[1]).abs();
    assert!(moved > 1e-2, "interior joint should drift toward the model nominal, moved {moved}");
    // Drift goes toward the model nominal (all zeros).
    assert!(drift.state.puppet_q[1].abs() < q0[1].abs());

    let mut held = session(model, Some(q0.clone()));
    held.edit(&AnchorEdit::Create { anchor }).unwrap();
    held.snap_nominal();
    held.solve().unwrap();
    assert!((held.state.puppet_q[1] - q0[1]).abs() < 1e-6);
}

// ---------------------------------------------------------------------------
// Follow modes

#[test]
fn follow_modes_retarget_from_the_controller() {
    let model = fixtures::two_link_arm();
    let controller = DVector::from_vec(vec![0.3, 0.6]);
    let mut s = session(model, Some(controller.clone()));
    s.state.puppet_q = DVector::from_vec(vec![0.0, 0.5]);
    s.edit(&AnchorEdit::Create {
        anchor: Anchor::joint("track", "shoulder", -1.0).with_follow(FollowMode::TrackController),
    })
    .unwrap();
    s.edit(&AnchorEdit::Create {
        anchor: Anchor::joint("once", "elbow", -1.0).with_follow(FollowMode::SnapOnce),
    })
    .unwrap();
    s.solve().unwrap();
    let target = |s: &AuthoringSession, i: usize| match s.state.anchors[i].kind {
        AnchorKind::Joint { target, .. } => target,
        _ => unreachable!(),
    };
    assert_eq!(target(&s, 0), 0.3);
    assert_eq!(target(&s, 1), 0.6);
    assert_eq!(s.state.anchors[0].follow, FollowMode::TrackController);
    assert_eq!(s.state.anchors[1].follow, FollowMode::None);
    assert!((s.state.puppet_q[0] - 0.3).abs() < 1e-3);

    s.state.controller_q = DVector::from_vec(vec![-0.2, 1.0]);
    s.solve().unwrap();
    assert_eq!(target(&s, 0), -0.2);
    assert_eq!(target(&s, 1), 0.6);
}

// ---------------------------------------------------------------------------
// Record and undo

#[test]
fn record_then_undo_restores_the_session() {
    let mut s = session(fixtures::two_link_arm(), None);
    s.edit(&AnchorEdit::Create {
        anchor: arm_tip(Vector3::new(0.6, 1.4, 0.0)),
    })
    .unwrap();
    s.solve().unwrap();
    let before = s.state.clone();
    let index = s.record_keyframe(None).unwrap();
    assert_eq!(index, 0);
    assert_eq!(s.state.controller_q, s.state.puppet_q);
    assert_ne!(s.state.controller_q, before.controller_q);
    let kf = s.undo().unwrap();
    assert_eq!(kf.puppet_q, before.puppet_q);
    assert_eq!(s.state, before);
    assert!(s.undo().is_none());
    assert_eq!(s.state, before);
}

#[test]
fn default_durations_follow_the_profile() {
    let mut s = session(fixtures::two_link_arm(), None);
    s.record_keyframe(None).unwrap();
    s.record_keyframe(Some(0.75)).unwrap();
    let kf = &s.state.keyframes;
    assert_eq!(kf[0].duration(Profile::Simulation), 2.0);
    assert_eq!(kf[0].duration(Profile::Hardware), 4.0);
    assert_eq!(kf[1].duration(Profile::Hardware), 0.75);
    assert_eq!(s.to_script().total_duration(Profile::Simulation), 2.75);
    assert!(matches!(s.record_keyframe(Some(0.0)), Err(ScriptError::Schema(_))));
    assert!(matches!(s.record_keyframe(Some(f64::NAN)), Err(ScriptError::Schema(_))));
}

#[test]
fn twenty_two_records_make_twenty_two_keyframes() {
    let mut s = session(fixtures::two_link_arm(), None);
    for i in 0..22 {
        s.edit(&AnchorEdit::Create {
            anchor: Anchor::joint(&format!("e{i}"), "elbow", 0.5 + 0.02 * i as f64),
        })
        .unwrap();
        assert!(s.solve().unwrap().converged());
        s.record_keyframe(None).unwrap();
        s.clear_non_persistent();
    }
    let script = s.to_script();
    assert_eq!(script.keyframes.len(), 22);
    assert!(script.keyframes.iter().enumerate().all(|(i, k)| k.index == i));
    assert_eq!(Script::from_json_str(&script.to_canonical_json()).unwrap(), script);
    for i in 1..22 {
        assert_eq!(script.keyframes[i].controller_q, script.keyframes[i - 1].puppet_q);
    }
}

#[test]
fn recording_needs_a_converged_puppet() {
    let mut s = session(fixtures::two_link_arm(), None);
    s.settings.max_iterations = 1;
    s.edit(&AnchorEdit::Create {
        anchor: arm_tip(Vector3::new(0.2, 1.5, 0.0)),
    })
    .unwrap();
    assert!(!s.solve().unwrap().converged());
    assert!(matches!(s.record_keyframe(None), Err(ScriptError::NotConverged)));
}

#[test]
fn undo_stack_is_bounded() {
    let mut s = session(fixtures::two_link_arm(), None);
    s.state.undo = UndoStack::new(3);
    for _ in 0..5 {
        s.record_keyframe(None).unwrap();
    }
    assert_eq!(s.state.undo.len(), 3);
    let mut undone = 0;
    while s.undo().is_some() {
        undone += 1;
    }
    assert_eq!(undone, 3);
    assert_eq!(s.state.keyframes.len(), 2);
    assert_eq!(UndoStack::default().depth(), 64);
}

#[test]
fn session_resumes_from_a_script() {
    let model = Arc::new(fixtures::humanoid());
    let script = fixtures::bracing_script();
    let s = AuthoringSession::from_script(model, Arc::new(fixtures::bracing_fixture().3), &script).unwrap();
    let last = script.keyframes.last().unwrap();
    assert_eq!(s.state.puppet_q, last.puppet_q);
    assert_eq!(s.state.anchors, last.anchors);
    assert_eq!(s.state.region_mode, RegionMode::MultiContact);
    assert_eq!(s.to_script().keyframes, script.keyframes);
}

// ---------------------------------------------------------------------------
// Contacts

#[test]
fn foot_contact_anchor_registers_sole_corners() {
    let model = fixtures::humanoid();
    let q = fixtures::humanoid_lean(0.0);
    let anchors = snap_anchors_to_puppet(&[fixtures::foot_contact("f", "left_foot")], &model, &q).unwrap();
    let points = anchors[0].contact_points();
    assert_eq!(points.len(), 4);
    let kin = forward_kinematics(&model, &q).unwrap();
    let foot = kin.body_poses[model.body_index("left_foot").unwrap()];
    let mut world: Vec<[f64; 3]> = points
        .iter()
        .map(|c| {
            assert!((c.normal - Vector3::z()).norm() < 1e-12);
            let p = foot * Point3::from(c.point);
            [p.x, p.y, p.z]
        })
        .collect();
    let mut expected: Vec<[f64; 3]> = fixtures::humanoid_sole_corners()
        .iter()
        .map(|c| {
            let p = foot * Point3::from(*c);
            [p.x, p.y, p.z]
        })
        .collect();
    let key = |a: &[f64; 3], b: &[f64; 3]| a.partial_cmp(b).unwrap();
    world.sort_by(key);
    expected.sort_by(key);
    for (a, b) in world.iter().zip(&expected) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
    }
    // Sole on the ground.
    assert!(world.iter().all(|p| p[2].abs() < 1e-12));
}

#[test]
fn session_region_uses_contact_anchors() {
    let model = fixtures::humanoid();
    let q = fixtures::humanoid_lean(0.0);
    let mut s = session(model, Some(q));
    assert!(s.support_region(RegionMode::Flat).unwrap().is_none());
    for (id, foot) in [("l", "left_foot"), ("r", "right_foot")] {
        s.edit(&AnchorEdit::Create {
            anchor: fixtures::foot_contact(id, foot),
        })
        .unwrap();
    }
    s.snap_anchors().unwrap();
    let region = s.support_region(RegionMode::Flat).unwrap().unwrap();
    // Two 0.22 × 0.10 soles 0.2 m apart: hull is 0.22 × 0.30.
    assert!((region.area() - 0.22 * 0.30).abs() < 1e-12);
}

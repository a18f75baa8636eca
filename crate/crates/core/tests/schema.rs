//! The published JSON schema agrees with what the library reads and writes.

use std::sync::Arc;

use anchorpose::feasibility::{RegionMode, SupportRegion};
use anchorpose::fixtures;
use anchorpose::geometry::Environment;
use anchorpose::script::{Anchor, AnchorEdit, AnchorTarget, AuthoringSession, Profile};
use anchorpose::server::*;
use nalgebra::Isometry3;
use serde_json::{json, Value};

const SCHEMA: &str = include_str!("../../../docs/protocol.schema.json");

fn schema() -> Value {
    serde_json::from_str(SCHEMA).expect("schema parses")
}

/// Validator for one definition of the schema.
fn validator(def: &str) -> jsonschema::Validator {
    let mut s = schema();
    let obj = s.as_object_mut().unwrap();
    obj.remove("oneOf");
    obj.insert("$ref".into(), json!(format!("#/$defs/{def}")));
    jsonschema::validator_for(&s).expect("schema compiles")
}

fn assert_valid(def: &str, instance: &Value) {
    let v = validator(def);
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{e} at {}", e.instance_path())).collect();
    assert!(errors.is_empty(), "{def}: {errors:?}\n{instance:#}");
}

fn assert_invalid(def: &str, instance: &Value) {
    assert!(!validator(def).is_valid(instance), "{def} accepted {instance}");
}

fn arm_session() -> Session {
    let model = Arc::new(fixtures::two_link_arm());
    Session::new("t", AuthoringSession::new(model, Arc::new(Environment::empty()), None).unwrap())
}

fn tip_anchor() -> Anchor {
    Anchor::pose(
        "tip",
        "link2",
        Isometry3::translation(1.0, 0.0, 0.0),
        Isometry3::translation(1.2, 0.8, 0.0),
        [false, false, false, true, true, false],
    )
}

#[test]
fn schema_is_valid_draft_2020_12() {
    let s = schema();
    assert_eq!(s["$schema"], "https://json-schema.org/draft/2020-12/schema");
    jsonschema::draft202012::meta::validate(&s).expect("meta-schema");
}

#[test]
fn command_and_output_types_match_the_protocol() {
    let s = schema();
    let listed = |def: &str| -> Vec<String> {
        s["$defs"][def]["oneOf"]
            .as_array()
            .unwrap()
            .iter()
            .filter_map(|b| b["properties"]["type"]["const"].as_str().map(str::to_string))
            .collect()
    };
    let mut commands = listed("command");
    let mut expected: Vec<String> = COMMAND_TYPES.iter().map(|c| c.to_string()).collect();
    commands.sort();
    expected.sort();
    assert_eq!(commands, expected);

    let kinds = [
        OutKind::Hello,
        OutKind::StateUpdate,
        OutKind::Error,
        OutKind::Ack,
        OutKind::Script,
        OutKind::Projection,
        OutKind::Heartbeat,
    ];
    let mut outs: Vec<String> = kinds.iter().map(|k| serde_json::to_value(k).unwrap().as_str().unwrap().to_string()).collect();
    let mut listed_outs = listed("serverMessage");
    outs.sort();
    listed_outs.sort();
    assert_eq!(outs, listed_outs);
}

#[test]
fn encoded_commands_validate() {
    let commands = vec![
        Command::AnchorEdit(AnchorEdit::Create { anchor: tip_anchor() }),
        Command::AnchorEdit(AnchorEdit::Move {
            id: "tip".into(),
            target: AnchorTarget::Pose(Isometry3::translation(1.0, 1.0, 0.0)),
        }),
        Command::AnchorEdit(AnchorEdit::Remove { id: "tip".into() }),
        Command::SolveTick,
        Command::DragPose(DragPose {
            id: "tip".into(),
            target: AnchorTarget::Pose(Isometry3::translation(1.0, 1.0, 0.0)),
        }),
        Command::RecordKeyframe(RecordKeyframe { duration_s: Some(1.5) }),
        Command::Undo,
        Command::SnapAnchors,
        Command::SnapNominal,
        Command::ClearAnchors,
        Command::SetRegionMode(SetRegionMode { mode: RegionMode::MultiContact }),
        Command::Configure(Configure {
            settings: Some(Default::default()),
            com_constraint: Some(true),
            contact_mode: Some(false),
            tick_hz: Some(60.0),
            profile: Some(Profile::Hardware),
        }),
        Command::QueryFeasibility(QueryFeasibility {
            force_polytopes: true,
            mode: None,
        }),
        Command::ExportScript,
        Command::ProjectPoint(ProjectPoint {
            point: [0.1, 0.2, 0.3],
            surface: Surface::Environment,
        }),
    ];
    for (i, c) in commands.iter().enumerate() {
        let line: Value = serde_json::from_str(&encode_command(i as u64 + 1, c)).unwrap();
        assert_valid("clientMessage", &line);
    }
    assert_valid("clientMessage", &json!({"proto": 1, "type": "hello", "payload": {"session": null}}));
    assert_valid("clientMessage", &json!({"proto": 1, "type": "heartbeat"}));
}

#[test]
fn schema_rejects_what_the_parser_rejects() {
    let bad = [
        json!({"proto": 2, "type": "undo", "seq": 1}),
        json!({"proto": 1, "type": "warp", "seq": 1}),
        json!({"proto": 1, "type": "undo"}),
        json!({"proto": 1, "type": "set_region_mode", "seq": 1, "payload": {"mode": "tilted"}}),
        json!({"proto": 1, "type": "drag_pose", "seq": 1, "payload": {"id": "tip", "target": [1, 2, 3], "extra": 1}}),
        json!({"proto": 1, "type": "anchor_edit", "seq": 1, "payload": {"op": "teleport", "id": "tip"}}),
    ];
    for b in &bad {
        assert_invalid("clientMessage", b);
        assert!(parse_incoming(&b.to_string()).is_err(), "{b}");
    }
}

#[test]
fn server_output_validates() {
    let mut s = arm_session();
    let mut lines = vec![s.hello(false), s.heartbeat()];
    let mut seq = 0;
    let mut send = |s: &mut Session, c: Command| {
        seq += 1;
        s.handle_line(&encode_command(seq, &c), 0.0)
    };
    lines.extend(send(&mut s, Command::AnchorEdit(AnchorEdit::Create { anchor: tip_anchor() })));
    lines.extend(send(&mut s, Command::SolveTick));
    lines.extend(send(&mut s, Command::RecordKeyframe(RecordKeyframe::default())));
    lines.extend(send(&mut s, Command::ExportScript));
    lines.extend(send(
        &mut s,
        Command::ProjectPoint(ProjectPoint {
            point: [0.5, 0.5, 0.0],
            surface: Surface::Robot,
        }),
    ));
    lines.extend(send(&mut s, Command::SolveTick));
    lines.extend(s.handle_line("not json", 0.0));
    lines.extend(s.handle_line(r#"{"proto":1,"type":"undo","seq":99}"#, 0.0));
    // Out-of-reach target: the state update comes with an `unreached` notice.
    lines.extend(send(
        &mut s,
        Command::AnchorEdit(AnchorEdit::Move {
            id: "tip".into(),
            target: AnchorTarget::Pose(Isometry3::translation(3.0, 0.0, 0.0)),
        }),
    ));
    lines.extend(send(&mut s, Command::SolveTick));

    let kinds: Vec<OutKind> = lines.iter().map(|o| o.kind).collect();
    for k in [OutKind::Hello, OutKind::Heartbeat, OutKind::StateUpdate, OutKind::Script, OutKind::Projection, OutKind::Error] {
        assert!(kinds.contains(&k), "{k:?} missing from {kinds:?}");
    }
    for o in &lines {
        let v: Value = serde_json::from_str(&o.to_line()).unwrap();
        assert_valid("serverMessage", &v);
    }
}

#[test]
fn feasibility_state_validates() {
    let model = Arc::new(fixtures::humanoid());
    let env = Arc::new(fixtures::ground());
    let script = fixtures::bracing_script();
    let authoring = AuthoringSession::from_script(model, env, &script).unwrap();
    let mut s = Session::new("b", authoring);
    let out = s.handle_line(
        &encode_command(
            1,
            &Command::QueryFeasibility(QueryFeasibility {
                force_polytopes: true,
                mode: Some(RegionMode::MultiContact),
            }),
        ),
        0.0,
    );
    let state = out.iter().find_map(Outbound::state).expect("state");
    assert!(!state.force_polytopes.is_empty());
    for o in &out {
        assert_valid("serverMessage", &serde_json::from_str(&o.to_line()).unwrap());
    }
}

#[test]
fn file_formats_validate() {
    assert_valid("model", &fixtures::two_link_arm_doc());
    assert_valid("model", &fixtures::humanoid_doc());
    for env in [fixtures::ground(), fixtures::ground_and_rails(), fixtures::ground_and_block()] {
        assert_valid("environment", &serde_json::from_str(&env.to_json()).unwrap());
    }
    for script in [fixtures::bracing_script(), fixtures::crawl_to_kneel_script()] {
        assert_valid("script", &serde_json::from_str(&script.to_canonical_json()).unwrap());
    }
    let region = SupportRegion::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], RegionMode::Flat);
    assert_valid("region", &serde_json::to_value(&region).unwrap());
}

#[test]
fn schema_rejects_malformed_files() {
    let mut doc = fixtures::two_link_arm_doc();
    doc["joints"][0]["type"] = json!("ball");
    assert_invalid("model", &doc);
    let mut script: Value = serde_json::from_str(&fixtures::bracing_script().to_canonical_json()).unwrap();
    script["keyframes"][0]["anchors"][0]["tier"] = json!("urgent");
    assert_invalid("script", &script);
    script["keyframes"][0]["anchors"][0]["tier"] = json!("high");
    script["keyframes"][0]["region_mode"] = json!("sloped");
    assert_invalid("script", &script);
}

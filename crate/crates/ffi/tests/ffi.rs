use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use anchorpose::fixtures;
use anchorpose_ffi::*;
use serde_json::{json, Value};

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(ap_last_error()) }.to_str().unwrap().to_string()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string();
    unsafe { ap_string_free(p) };
    s
}

fn arm() -> *mut ApModel {
    let doc = c(&fixtures::two_link_arm_doc().to_string());
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ap_model_from_json(doc.as_ptr(), &mut m) }, ApStatus::Ok);
    m
}

#[test]
fn model_queries() {
    let m = arm();
    unsafe {
        assert_eq!(ap_model_dof(m), 2);
        let mut q = [0.0; 2];
        assert_eq!(ap_model_nominal(m, q.as_mut_ptr(), 2), ApStatus::Ok);
        assert_eq!(q, [0.0, 0.5]);

        let q = [0.3, 0.0];
        let mut pose = [0.0; 7];
        let body = c("link2");
        assert_eq!(ap_model_body_pose(m, q.as_ptr(), 2, body.as_ptr(), pose.as_mut_ptr(), 7), ApStatus::Ok);
        assert!((pose[0] - 0.3f64.cos()).abs() < 1e-12);
        assert!((pose[1] - 0.3f64.sin()).abs() < 1e-12);
        let norm: f64 = pose[3..].iter().map(|v| v * v).sum();
        assert!((norm - 1.0).abs() < 1e-12);

        let mut com = [0.0; 3];
        assert_eq!(ap_model_center_of_mass(m, q.as_ptr(), 2, com.as_mut_ptr(), 3), ApStatus::Ok);
        assert!((com[0] - 1.5 * 0.3f64.cos()).abs() < 1e-12);

        let missing = c("tail");
        assert_eq!(
            ap_model_body_pose(m, q.as_ptr(), 2, missing.as_ptr(), pose.as_mut_ptr(), 7),
            ApStatus::InvalidArgument
        );
        assert!(last_error().contains("tail"), "{}", last_error());
        assert_eq!(ap_model_nominal(m, pose.as_mut_ptr(), 7), ApStatus::BufferSize);
        let nan = [f64::NAN, 0.0];
        assert_eq!(ap_model_center_of_mass(m, nan.as_ptr(), 2, com.as_mut_ptr(), 3), ApStatus::InvalidArgument);
        ap_model_free(m);
    }
}

#[test]
fn null_and_malformed_arguments_are_reported() {
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ap_model_from_json(ptr::null(), &mut m), ApStatus::NullPointer);
        assert!(m.is_null());
        let junk = c("{\"bodies\": [");
        assert_eq!(ap_model_from_json(junk.as_ptr(), &mut m), ApStatus::Parse);
        assert!(m.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(ap_model_from_json(junk.as_ptr(), ptr::null_mut()), ApStatus::NullPointer);
        assert_eq!(ap_model_dof(ptr::null()), 0);
        assert_eq!(ap_trajectory_duration(ptr::null()), 0.0);
        assert_eq!(ap_session_revision(ptr::null()), 0);
        let mut out = ptr::null_mut();
        assert_eq!(ap_session_tick(ptr::null_mut(), 0.0, &mut out), ApStatus::NullPointer);
        assert!(out.is_null());
        // Freeing null is a no-op.
        ap_model_free(ptr::null_mut());
        ap_environment_free(ptr::null_mut());
        ap_session_free(ptr::null_mut());
        ap_trajectory_free(ptr::null_mut());
        ap_string_free(ptr::null_mut());

        let bad = [0xffu8, 0];
        assert_eq!(ap_model_from_json(bad.as_ptr().cast(), &mut m), ApStatus::InvalidArgument);
        let arm = arm();
        assert_eq!(last_error(), "", "success clears the message");
        ap_model_free(arm);
    }
}

#[test]
fn environment_handles() {
    let env = fixtures::ground_and_rails();
    let name = c("rails");
    let text = c(&env.to_json());
    unsafe {
        let mut e = ptr::null_mut();
        assert_eq!(ap_environment_from_json(name.as_ptr(), text.as_ptr(), &mut e), ApStatus::Ok);
        ap_environment_free(e);
        let junk = c("[{\"name\": 3}]");
        assert_eq!(ap_environment_from_json(name.as_ptr(), junk.as_ptr(), &mut e), ApStatus::Parse);
        assert!(e.is_null());
        assert_eq!(ap_environment_empty(&mut e), ApStatus::Ok);
        ap_environment_free(e);
    }
}

#[test]
fn session_speaks_the_protocol() {
    let m = arm();
    unsafe {
        let mut e = ptr::null_mut();
        ap_environment_empty(&mut e);
        let mut s = ptr::null_mut();
        assert_eq!(ap_session_new(m, e, ptr::null(), &mut s), ApStatus::Ok);
        // The session holds its own references.
        ap_model_free(m);
        ap_environment_free(e);

        let create = json!({"proto": 1, "type": "anchor_edit", "seq": 1, "payload": {"op": "create", "anchor": {
            "id": "tip", "kind": "pose", "body": "link2",
            "offset": {"rotation": [0, 0, 0, 1], "translation": [1, 0, 0]},
            "target": {"rotation": [0, 0, 0, 1], "translation": [1.2, 0.8, 0]},
            "axes": [false, false, false, true, true, false]}}});
        let mut out = ptr::null_mut();
        let line = c(&create.to_string());
        assert_eq!(ap_session_handle_line(s, line.as_ptr(), 0.0, &mut out), ApStatus::Ok);
        let lines: Vec<Value> = take_string(out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let update = lines.iter().find(|l| l["type"] == "state_update").expect("state update");
        assert_eq!(update["ack"], 1);
        assert!(update["payload"]["converged"].as_bool().unwrap());
        assert_eq!(ap_session_revision(s), update["payload"]["revision"].as_u64().unwrap());

        // Protocol errors come back as messages, not statuses.
        let junk = c("not json");
        assert_eq!(ap_session_handle_line(s, junk.as_ptr(), 0.0, &mut out), ApStatus::Ok);
        let reply: Value = serde_json::from_str(take_string(out).trim()).unwrap();
        assert_eq!(reply["payload"]["code"], "malformed");

        assert_eq!(ap_session_tick(s, 1.0, &mut out), ApStatus::Ok);
        assert_eq!(take_string(out), "");

        assert_eq!(ap_session_export_script(s, &mut out), ApStatus::Ok);
        let script = anchorpose::script::Script::from_json_str(&take_string(out)).unwrap();
        assert_eq!(script.model, "two_link_arm");
        ap_session_free(s);
    }
}

#[test]
fn session_from_script() {
    let doc = c(&fixtures::humanoid_doc().to_string());
    let script = c(&fixtures::crawl_to_kneel_script().to_canonical_json());
    unsafe {
        let mut m = ptr::null_mut();
        assert_eq!(ap_model_from_json(doc.as_ptr(), &mut m), ApStatus::Ok);
        let mut e = ptr::null_mut();
        ap_environment_empty(&mut e);
        let mut s = ptr::null_mut();
        assert_eq!(ap_session_new(m, e, script.as_ptr(), &mut s), ApStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(ap_session_export_script(s, &mut out), ApStatus::Ok);
        let exported = anchorpose::script::Script::from_json_str(&take_string(out)).unwrap();
        assert_eq!(exported.keyframes.len(), 5);
        ap_session_free(s);

        let arm = arm();
        assert_eq!(ap_session_new(arm, e, script.as_ptr(), &mut s), ApStatus::Parse);
        assert!(s.is_null());
        ap_model_free(arm);
        ap_model_free(m);
        ap_environment_free(e);
    }
}

#[test]
fn trajectory_sampling() {
    let script = c(&fixtures::crawl_to_kneel_script().to_canonical_json());
    unsafe {
        let mut t = ptr::null_mut();
        assert_eq!(ap_trajectory_from_script(script.as_ptr(), ApProfile::Simulation, &mut t), ApStatus::Ok);
        assert_eq!(ap_trajectory_duration(t), 10.0);
        let dim = ap_trajectory_dim(t);
        assert_eq!(dim, 16);
        let mut q = vec![0.0; dim];
        let mut qd = vec![0.0; dim];
        let mut clamped = true;
        assert_eq!(ap_trajectory_sample(t, 10.0, q.as_mut_ptr(), qd.as_mut_ptr(), dim, &mut clamped), ApStatus::Ok);
        assert!(!clamped);
        let last = &fixtures::crawl_to_kneel_script().keyframes[4].puppet_q;
        assert_eq!(q.as_slice(), last.as_slice());
        assert!(qd.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(ap_trajectory_sample(t, 11.0, q.as_mut_ptr(), ptr::null_mut(), dim, &mut clamped), ApStatus::Ok);
        assert!(clamped);
        assert_eq!(ap_trajectory_sample(t, 1.0, q.as_mut_ptr(), ptr::null_mut(), 3, ptr::null_mut()), ApStatus::BufferSize);
        ap_trajectory_free(t);

        assert_eq!(ap_trajectory_from_script(script.as_ptr(), ApProfile::Hardware, &mut t), ApStatus::Ok);
        assert_eq!(ap_trajectory_duration(t), 20.0);
        ap_trajectory_free(t);

        let mut one = fixtures::crawl_to_kneel_script();
        one.keyframes.truncate(1);
        let one = c(&one.to_canonical_json());
        assert_eq!(ap_trajectory_from_script(one.as_ptr(), ApProfile::Simulation, &mut t), ApStatus::InvalidArgument);
        assert!(last_error().contains("need ≥ 2 keyframes"));
    }
}

#[test]
fn errors_are_per_thread() {
    unsafe {
        let junk = c("[");
        let mut m = ptr::null_mut();
        assert_eq!(ap_model_from_json(junk.as_ptr(), &mut m), ApStatus::Parse);
    }
    let other = std::thread::spawn(last_error).join().unwrap();
    assert_eq!(other, "");
    assert!(!last_error().is_empty());
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/anchorpose.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let source = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 20, "{exports:?}");
    for f in exports {
        assert!(text.contains(&format!("{f}(")), "{f} missing from header");
    }
    for t in ["typedef struct ApModel ApModel;", "typedef struct ApSession ApSession;", "AP_STATUS_OK = 0"] {
        assert!(text.contains(t), "{t}");
    }
}

/// The static library built alongside this test binary. `cargo test` leaves
/// it in `deps/`; the copy one level up is only refreshed by `cargo build`.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    [deps.to_path_buf(), deps.parent()?.to_path_buf()]
        .into_iter()
        .map(|d| d.join("libanchorpose_ffi.a"))
        .find(|p| p.exists())
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let model = fixtures::two_link_arm_doc().to_string().replace('\\', "\\\\").replace('"', "\\\"");
    std::fs::write(
        &src,
        format!(
            r#"#include <stdio.h>
#include <string.h>
#include "anchorpose.h"

int main(void) {{
    ApModel *m = NULL;
    if (ap_model_from_json("{model}", &m) != AP_STATUS_OK) return 10;
    double q[2], com[3];
    if (ap_model_nominal(m, q, 2) != AP_STATUS_OK) return 11;
    if (ap_model_center_of_mass(m, q, 2, com, 3) != AP_STATUS_OK) return 12;
    if (ap_model_nominal(m, q, 5) != AP_STATUS_BUFFER_SIZE) return 13;
    if (strlen(ap_last_error()) == 0) return 14;
    ApEnvironment *e = NULL;
    ap_environment_empty(&e);
    ApSession *s = NULL;
    if (ap_session_new(m, e, NULL, &s) != AP_STATUS_OK) return 15;
    char *out = NULL;
    if (ap_session_handle_line(s, "{{\"proto\":1,\"type\":\"snap_nominal\",\"seq\":1}}", 0.0, &out) != AP_STATUS_OK) return 16;
    if (strstr(out, "state_update") == NULL) return 17;
    ap_string_free(out);
    printf("%s %.6f\n", ap_version(), com[0]);
    ap_session_free(s);
    ap_environment_free(e);
    ap_model_free(m);
    return 0;
}}
"#
        ),
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let include = header().parent().unwrap().to_path_buf();
    let build = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with(env!("CARGO_PKG_VERSION")), "{stdout}");
}

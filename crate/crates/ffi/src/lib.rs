//! C ABI over the anchorpose engine.
//!
//! Every object crosses the boundary as an opaque handle created by an
//! `ap_*_new`/`ap_*_from_*` function and released by the matching `ap_*_free`.
//! Functions return an [`ApStatus`]; on failure the message is available from
//! [`ap_last_error`] on the same thread. Strings returned to the caller are
//! owned by the caller and released with [`ap_string_free`].
//!
//! Handles are not thread-safe: use one handle from one thread at a time.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use anchorpose::geometry::Environment;
use anchorpose::kinematics::{center_of_mass, forward_kinematics, RobotModel};
use anchorpose::script::{AuthoringSession, Profile, Script};
use anchorpose::server::Session;
use anchorpose::trajectory::{compile_script, CubicSplineTrajectory};
use nalgebra::DVector;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Malformed JSON or a document that does not match its schema.
    Parse = 3,
    /// Output buffer length does not match.
    BufferSize = 4,
    /// A Rust panic was caught at the boundary; the handle may be unusable.
    Internal = 5,
}

/// Transition-duration profile for trajectory compilation.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApProfile {
    Simulation = 0,
    Hardware = 1,
}

pub struct ApModel {
    inner: Arc<RobotModel>,
}

pub struct ApEnvironment {
    inner: Arc<Environment>,
}

/// A protocol session: feed it client lines, read back server lines.
pub struct ApSession {
    inner: Session,
}

pub struct ApTrajectory {
    inner: CubicSplineTrajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul removed"));
}

struct Failure(ApStatus, String);

impl Failure {
    fn new(status: ApStatus, msg: impl ToString) -> Self {
        Failure(status, msg.to_string())
    }
}

/// Run `f`, record any failure message, and never unwind into C.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ApStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ApStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            ApStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(ApStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(ApStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::new(ApStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(ApStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    handle_mut(p, what)
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(Failure::new(ApStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(Failure::new(ApStatus::NullPointer, format!("{what} is null")));
    }
    if len != expected {
        return Err(Failure::new(ApStatus::BufferSize, format!("{what} has length {len}, need {expected}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul removed").into_raw()
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn ap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ap_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse a robot model document.
#[no_mangle]
pub unsafe extern "C" fn ap_model_from_json(json: *const c_char, out: *mut *mut ApModel) -> ApStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(json, "json")?;
        let model = RobotModel::from_json_str(text).map_err(|e| Failure::new(ApStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(ApModel { inner: Arc::new(model) }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ap_model_free(model: *mut ApModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of configuration coordinates, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ap_model_dof(model: *const ApModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.dof())
}

/// Copy the nominal configuration into `q` (length must equal the dof).
#[no_mangle]
pub unsafe extern "C" fn ap_model_nominal(model: *const ApModel, q: *mut f64, len: usize) -> ApStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        slice_out(q, len, m.dof(), "q")?.copy_from_slice(m.nominal_q.as_slice());
        Ok(())
    })
}

/// World pose of a body as `[x, y, z, qi, qj, qk, qw]`.
#[no_mangle]
pub unsafe extern "C" fn ap_model_body_pose(
    model: *const ApModel,
    q: *const f64,
    q_len: usize,
    body: *const c_char,
    pose: *mut f64,
    pose_len: usize,
) -> ApStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let q = config(m, q, q_len)?;
        let name = str_arg(body, "body")?;
        let b = m.body_index(name).map_err(|e| Failure::new(ApStatus::InvalidArgument, e))?;
        let kin = forward_kinematics(m, &q).map_err(|e| Failure::new(ApStatus::InvalidArgument, e))?;
        let iso = kin.body_poses[b];
        let out = slice_out(pose, pose_len, 7, "pose")?;
        let t = iso.translation.vector;
        let r = iso.rotation.coords;
        out.copy_from_slice(&[t.x, t.y, t.z, r.x, r.y, r.z, r.w]);
        Ok(())
    })
}

/// Whole-body center of mass, `com[3]`.
#[no_mangle]
pub unsafe extern "C" fn ap_model_center_of_mass(model: *const ApModel, q: *const f64, q_len: usize, com: *mut f64, com_len: usize) -> ApStatus {
    guard(|| {
        let m = &handle(model, "model")?.inner;
        let q = config(m, q, q_len)?;
        let c = center_of_mass(m, &q).map_err(|e| Failure::new(ApStatus::InvalidArgument, e))?;
        slice_out(com, com_len, 3, "com")?.copy_from_slice(c.as_slice());
        Ok(())
    })
}

unsafe fn config(m: &RobotModel, q: *const f64, len: usize) -> Result<DVector<f64>, Failure> {
    if len != m.dof() {
        return Err(Failure::new(ApStatus::BufferSize, format!("q has length {len}, model has {} coordinates", m.dof())));
    }
    let q = slice_arg(q, len, "q")?;
    if !q.iter().all(|v| v.is_finite()) {
        return Err(Failure::new(ApStatus::InvalidArgument, "q is not finite"));
    }
    Ok(DVector::from_column_slice(q))
}

/// Parse an environment document (a polytope list or `{name, polytopes}`).
#[no_mangle]
pub unsafe extern "C" fn ap_environment_from_json(name: *const c_char, json: *const c_char, out: *mut *mut ApEnvironment) -> ApStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let name = str_arg(name, "name")?;
        let text = str_arg(json, "json")?;
        let env = Environment::from_json_str(name, text).map_err(|e| Failure::new(ApStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(ApEnvironment { inner: Arc::new(env) }));
        Ok(())
    })
}

/// An environment with no obstacles.
#[no_mangle]
pub unsafe extern "C" fn ap_environment_empty(out: *mut *mut ApEnvironment) -> ApStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = Box::into_raw(Box::new(ApEnvironment {
            inner: Arc::new(Environment::empty()),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ap_environment_free(env: *mut ApEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Start a session at the model's nominal configuration, or from a script
/// when `script_json` is not null. The session keeps its own references to
/// the model and environment; their handles may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn ap_session_new(
    model: *const ApModel,
    env: *const ApEnvironment,
    script_json: *const c_char,
    out: *mut *mut ApSession,
) -> ApStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let model = handle(model, "model")?.inner.clone();
        let env = handle(env, "env")?.inner.clone();
        let authoring = if script_json.is_null() {
            AuthoringSession::new(model, env, None)
        } else {
            let script = Script::from_json_str(str_arg(script_json, "script_json")?).map_err(|e| Failure::new(ApStatus::Parse, e))?;
            script.validate(&model).map_err(|e| Failure::new(ApStatus::Parse, e))?;
            AuthoringSession::from_script(model, env, &script)
        }
        .map_err(|e| Failure::new(ApStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(ApSession {
            inner: Session::new("ffi", authoring),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ap_session_free(session: *mut ApSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

fn join_lines(lines: Vec<anchorpose::server::Outbound>) -> String {
    let mut s = String::new();
    for o in lines {
        s.push_str(&o.to_line());
        s.push('\n');
    }
    s
}

/// Handle one client protocol line at time `now` (seconds, monotonic).
/// `*response` receives the server lines, newline-terminated, and must be
/// released with `ap_string_free`. Protocol errors are reported inside the
/// response, not as a failed status.
#[no_mangle]
pub unsafe extern "C" fn ap_session_handle_line(session: *mut ApSession, line: *const c_char, now: f64, response: *mut *mut c_char) -> ApStatus {
    guard(|| {
        let response = out_ptr(response, "response")?;
        *response = ptr::null_mut();
        let s = handle_mut(session, "session")?;
        let line = str_arg(line, "line")?;
        *response = into_c_string(join_lines(s.inner.handle_line(line, now)));
        Ok(())
    })
}

/// Run any drag solve due at `now`. `*response` may be an empty string.
#[no_mangle]
pub unsafe extern "C" fn ap_session_tick(session: *mut ApSession, now: f64, response: *mut *mut c_char) -> ApStatus {
    guard(|| {
        let response = out_ptr(response, "response")?;
        *response = ptr::null_mut();
        let s = handle_mut(session, "session")?;
        *response = into_c_string(join_lines(s.inner.tick(now)));
        Ok(())
    })
}

/// Current revision of the session state, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ap_session_revision(session: *const ApSession) -> u64 {
    session.as_ref().map_or(0, |s| s.inner.revision)
}

/// Current script in canonical JSON.
#[no_mangle]
pub unsafe extern "C" fn ap_session_export_script(session: *const ApSession, script_json: *mut *mut c_char) -> ApStatus {
    guard(|| {
        let outp = out_ptr(script_json, "script_json")?;
        *outp = ptr::null_mut();
        let s = handle(session, "session")?;
        *outp = into_c_string(s.inner.authoring.to_script().to_canonical_json());
        Ok(())
    })
}

/// Compile a script into a trajectory starting at rest.
#[no_mangle]
pub unsafe extern "C" fn ap_trajectory_from_script(script_json: *const c_char, profile: ApProfile, out: *mut *mut ApTrajectory) -> ApStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let script = Script::from_json_str(str_arg(script_json, "script_json")?).map_err(|e| Failure::new(ApStatus::Parse, e))?;
        if script.keyframes.len() < 2 {
            return Err(Failure::new(
                ApStatus::InvalidArgument,
                format!("need ≥ 2 keyframes, script has {}", script.keyframes.len()),
            ));
        }
        let profile = match profile {
            ApProfile::Simulation => Profile::Simulation,
            ApProfile::Hardware => Profile::Hardware,
        };
        let traj = compile_script(&script, profile).map_err(|e| Failure::new(ApStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(ApTrajectory { inner: traj }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ap_trajectory_free(traj: *mut ApTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

/// Duration in seconds, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ap_trajectory_duration(traj: *const ApTrajectory) -> f64 {
    traj.as_ref().map_or(0.0, |t| t.inner.duration())
}

/// Coordinates per sample, or 0 for a null handle.
#[no_mangle]
pub unsafe extern "C" fn ap_trajectory_dim(traj: *const ApTrajectory) -> usize {
    traj.as_ref().map_or(0, |t| t.inner.dim())
}

/// Position and velocity at `t` (clamped to the knot range). Either output
/// may be null. `*clamped` (optional) is set when `t` was outside the range.
#[no_mangle]
pub unsafe extern "C" fn ap_trajectory_sample(
    traj: *const ApTrajectory,
    t: f64,
    q: *mut f64,
    qd: *mut f64,
    len: usize,
    clamped: *mut bool,
) -> ApStatus {
    guard(|| {
        let traj = &handle(traj, "trajectory")?.inner;
        let s = traj.sample(t);
        if !q.is_null() {
            slice_out(q, len, traj.dim(), "q")?.copy_from_slice(s.q.as_slice());
        }
        if !qd.is_null() {
            slice_out(qd, len, traj.dim(), "qd")?.copy_from_slice(s.qd.as_slice());
        }
        if let Some(c) = clamped.as_mut() {
            *c = s.clamped;
        }
        Ok(())
    })
}

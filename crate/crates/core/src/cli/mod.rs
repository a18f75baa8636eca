//! Batch entry point: replay solves, compile trajectories, and write
//! feasibility and margin reports.
//!
//! Exit codes are stable: 0 success, 1 input or schema error, 2 solver
//! failure, 3 validation failure.

use std::fmt::Write as _;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::feasibility::{force_polytope, stability_margin, static_torques, ForcePolytope, RegionMode, RegionOptions, SupportRegion};
use crate::fixtures;
use crate::geometry::Environment;
use crate::ik::{SolveDiagnostics, SolverSettings};
use crate::kinematics::{center_of_mass, RobotModel};
use crate::script::{canonical_json, contacts_of, region_at, solve_keyframe, AuthoringSession, KeyFrame, Profile, Script};
use crate::server::{self, Registry, ServerConfig};
use crate::trajectory::{compile_script, validate, ValidationOptions, ValidationReport};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProfileArg {
    Simulation,
    Hardware,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Simulation => Profile::Simulation,
            ProfileArg::Hardware => Profile::Hardware,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Flat,
    MultiContact,
}

impl From<RegionArg> for RegionMode {
    fn from(r: RegionArg) -> Self {
        match r {
            RegionArg::Flat => RegionMode::Flat,
            RegionArg::MultiContact => RegionMode::MultiContact,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "anchorpose", version, about = "Anchor-based whole-body pose authoring")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: CommandArg,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Robot model JSON. Defaults to `<script dir>/<script.model>.model.json`.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Environment JSON. Defaults to `<script dir>/<script.environment>.env.json`
    /// when that file exists, otherwise no obstacles.
    #[arg(long, global = true)]
    pub env: Option<PathBuf>,
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "simulation")]
    pub profile: ProfileArg,
    /// Overrides each keyframe's stored region mode.
    #[arg(long, global = true, value_enum, alias = "region")]
    pub region_mode: Option<RegionArg>,
    /// Solver settings JSON; absent fields keep their defaults.
    #[arg(long, global = true)]
    pub settings: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CommandArg {
    /// Re-solve keyframes from their stored controller configurations.
    Solve {
        /// Only this keyframe; all when absent.
        #[arg(long)]
        keyframe: Option<usize>,
        /// Worker threads; output order does not depend on it.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compile a solved script into a trajectory and validate it.
    Compile {
        /// Trajectory sampling rate (Hz).
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
    },
    /// Export support regions and force polytopes per keyframe.
    Region {
        #[arg(long)]
        keyframe: Option<usize>,
    },
    /// Stability margins under both region models, plus joint saturation.
    Report,
    /// Check a script against its model, then validate its trajectory.
    Validate {
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
    },
    /// Run the session server.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7878")]
        listen: String,
        #[arg(long, default_value_t = server::DEFAULT_TICK_HZ)]
        tick_hz: f64,
    },
    /// Write the bundled models, environments and scripts.
    Fixtures,
}

/// Parse arguments, run, and return the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        CommandArg::Solve { keyframe, jobs } => cmd_solve(g, *keyframe, *jobs),
        CommandArg::Compile { rate } => cmd_compile(g, *rate),
        CommandArg::Region { keyframe } => cmd_region(g, *keyframe),
        CommandArg::Report => cmd_report(g),
        CommandArg::Validate { rate } => cmd_validate(g, *rate),
        CommandArg::Serve { listen, tick_hz } => cmd_serve(g, listen, *tick_hz),
        CommandArg::Fixtures => cmd_fixtures(&g.out),
    }
}

/// Model, environment and script named by the flags.
pub struct Inputs {
    pub model: RobotModel,
    pub environment: Environment,
    pub script: Script,
}

fn sibling(script: &Path, stem: &str, suffix: &str) -> PathBuf {
    script.parent().unwrap_or(Path::new(".")).join(format!("{stem}{suffix}"))
}

fn load_model(g: &GlobalArgs, script: Option<&(PathBuf, Script)>) -> Result<RobotModel, CliError> {
    let path = match (&g.model, script) {
        (Some(p), _) => p.clone(),
        (None, Some((path, s))) => sibling(path, &s.model, ".model.json"),
        (None, None) => return Err(CliError::Input("--model is required".into())),
    };
    RobotModel::load(&path).map_err(|e| CliError::Input(format!("model {}: {e}", path.display())))
}

fn load_environment(g: &GlobalArgs, script: Option<&(PathBuf, Script)>) -> Result<Environment, CliError> {
    let path = match (&g.env, script) {
        (Some(p), _) => p.clone(),
        (None, Some((path, s))) => {
            let p = sibling(path, &s.environment, ".env.json");
            if !p.exists() {
                info!("no environment file at {}; using no obstacles", p.display());
                return Ok(Environment::empty());
            }
            p
        }
        (None, None) => return Ok(Environment::empty()),
    };
    Environment::load(&path).map_err(|e| CliError::Input(format!("environment {}: {e}", path.display())))
}

pub fn load_inputs(g: &GlobalArgs) -> Result<Inputs, CliError> {
    let path = g.script.clone().ok_or_else(|| CliError::Input("--script is required".into()))?;
    let script = Script::load(&path).map_err(|e| CliError::Input(format!("script {}: {e}", path.display())))?;
    let named = (path, script);
    let model = load_model(g, Some(&named))?;
    let environment = load_environment(g, Some(&named))?;
    let script = named.1;
    script.validate(&model).map_err(input)?;
    Ok(Inputs { model, environment, script })
}

fn load_settings(g: &GlobalArgs) -> Result<SolverSettings, CliError> {
    let settings = match &g.settings {
        None => SolverSettings::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("settings {}: {e}", p.display())))?
        }
    };
    settings.validate().map_err(input)?;
    Ok(settings)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn selected(script: &Script, keyframe: Option<usize>) -> Result<Vec<usize>, CliError> {
    match keyframe {
        Some(k) if k >= script.keyframes.len() => Err(CliError::Input(format!(
            "keyframe {k} out of range (script has {})",
            script.keyframes.len()
        ))),
        Some(k) => Ok(vec![k]),
        None => Ok((0..script.keyframes.len()).collect()),
    }
}

fn with_mode(kf: &KeyFrame, mode: Option<RegionArg>) -> KeyFrame {
    let mut kf = kf.clone();
    if let Some(m) = mode {
        kf.region_mode = m.into();
    }
    kf
}

type SolveResult = Result<(DVector<f64>, SolveDiagnostics), String>;

/// Solve the given keyframes on up to `jobs` threads; results come back in
/// the order of `indices`.
fn solve_all(inputs: &Inputs, indices: &[usize], settings: &SolverSettings, mode: Option<RegionArg>, jobs: usize) -> Vec<SolveResult> {
    let options = RegionOptions::default();
    let one = |i: usize| -> SolveResult {
        let kf = with_mode(&inputs.script.keyframes[i], mode);
        solve_keyframe(&inputs.model, &inputs.environment, &kf, settings, &options).map_err(|e| e.to_string())
    };
    let jobs = jobs.max(1).min(indices.len().max(1));
    if jobs == 1 {
        return indices.iter().map(|&i| one(i)).collect();
    }
    let mut results: Vec<Option<SolveResult>> = vec![None; indices.len()];
    std::thread::scope(|s| {
        let chunk = indices.len().div_ceil(jobs);
        let handles: Vec<_> = indices
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|&i| one(i)).collect::<Vec<_>>()))
            .collect();
        let mut k = 0;
        for h in handles {
            for r in h.join().expect("solver thread") {
                results[k] = Some(r);
                k += 1;
            }
        }
    });
    results.into_iter().map(|r| r.expect("every keyframe solved")).collect()
}

#[derive(Serialize)]
struct KeyframeDiagnostics {
    keyframe: usize,
    converged: bool,
    /// Largest |q_solved − q_stored| over coordinates.
    replay_deviation: Option<f64>,
    diagnostics: Option<SolveDiagnostics>,
    error: Option<String>,
}

pub fn cmd_solve(g: &GlobalArgs, keyframe: Option<usize>, jobs: usize) -> Result<(), CliError> {
    let mut inputs = load_inputs(g)?;
    let settings = load_settings(g)?;
    let indices = selected(&inputs.script, keyframe)?;
    let results = solve_all(&inputs, &indices, &settings, g.region_mode, jobs);

    let mut report = Vec::new();
    let mut failing = Vec::new();
    for (&i, r) in indices.iter().zip(results) {
        let kf = &mut inputs.script.keyframes[i];
        match r {
            Ok((q, diag)) => {
                let deviation = (&q - &kf.puppet_q).amax();
                let converged = diag.converged();
                if !converged {
                    failing.push(i);
                }
                kf.puppet_q = q;
                if let Some(m) = g.region_mode {
                    kf.region_mode = m.into();
                }
                report.push(KeyframeDiagnostics {
                    keyframe: i,
                    converged,
                    replay_deviation: Some(deviation),
                    diagnostics: Some(diag),
                    error: None,
                });
            }
            Err(e) => {
                failing.push(i);
                report.push(KeyframeDiagnostics {
                    keyframe: i,
                    converged: false,
                    replay_deviation: None,
                    diagnostics: None,
                    error: Some(e),
                });
            }
        }
    }
    write_out(&g.out, "solved.json", &inputs.script.to_canonical_json())?;
    write_out(&g.out, "diagnostics.json", &canonical_json(&report))?;
    write_out(&g.out, "margins.csv", &margins_csv(&inputs, &indices))?;
    if failing.is_empty() {
        Ok(())
    } else {
        let list: Vec<String> = failing.iter().map(|i| i.to_string()).collect();
        Err(CliError::Solver(format!("keyframes did not converge: {}", list.join(", "))))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Distance of the puppet CoM to the nearest edge of the region, positive
/// inside. `None` without contacts or when the region cannot be built.
fn margin(inputs: &Inputs, kf: &KeyFrame, mode: RegionMode) -> Option<f64> {
    let contacts = contacts_of(&kf.anchors);
    let com = center_of_mass(&inputs.model, &kf.puppet_q).ok()?;
    match region_at(&inputs.model, &kf.puppet_q, &contacts, mode, &RegionOptions::default()) {
        Ok(Some(r)) if !r.is_empty() => Some(stability_margin(&r, [com.x, com.y])),
        Ok(_) => None,
        Err(e) => {
            warn!("keyframe {}: {mode:?} region: {e}", kf.index);
            None
        }
    }
}

fn margins_csv(inputs: &Inputs, indices: &[usize]) -> String {
    let mut out = String::from("keyframe,flat_margin,multicontact_margin\n");
    for &i in indices {
        let kf = &inputs.script.keyframes[i];
        let flat = margin(inputs, kf, RegionMode::Flat);
        let multi = margin(inputs, kf, RegionMode::MultiContact);
        writeln!(out, "{i},{},{}", fmt_opt(flat), fmt_opt(multi)).expect("string write");
    }
    out
}

fn compile_and_validate(inputs: &Inputs, profile: Profile, rate: f64) -> Result<(crate::trajectory::CubicSplineTrajectory, ValidationReport), CliError> {
    let n = inputs.script.keyframes.len();
    if n < 2 {
        return Err(CliError::Input(format!("need ≥ 2 keyframes, script has {n}")));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(CliError::Input(format!("rate must be positive, got {rate}")));
    }
    let traj = compile_script(&inputs.script, profile).map_err(input)?;
    let options = ValidationOptions {
        rate,
        ..ValidationOptions::default()
    };
    let report = validate(&traj, &inputs.model, Some(&inputs.environment), &options);
    Ok((traj, report))
}

fn violation_summary(report: &ValidationReport) -> String {
    format!(
        "trajectory has {} position, {} velocity and {} collision findings",
        report.position_violations.len(),
        report.velocity_violations.len(),
        report.collisions.len()
    )
}

pub fn cmd_compile(g: &GlobalArgs, rate: f64) -> Result<(), CliError> {
    let inputs = load_inputs(g)?;
    let profile: Profile = g.profile.into();
    let (traj, report) = compile_and_validate(&inputs, profile, rate)?;
    let names = inputs.model.coordinate_names();
    write_out(&g.out, "trajectory.csv", &traj.to_csv(rate, &names))?;
    write_out(
        &g.out,
        "trajectory.json",
        &canonical_json(&json!({
            "profile": profile,
            "duration": traj.duration(),
            "coordinates": names,
            "spline": traj,
        })),
    )?;
    write_out(&g.out, "validation.json", &canonical_json(&report))?;
    println!("duration {} s, {} samples", traj.duration(), report.samples);
    if report.ok() {
        Ok(())
    } else {
        Err(CliError::Validation(violation_summary(&report)))
    }
}

pub fn cmd_validate(g: &GlobalArgs, rate: f64) -> Result<(), CliError> {
    let inputs = load_inputs(g)?;
    if inputs.script.keyframes.len() < 2 {
        println!("script is valid ({} keyframes, no trajectory to check)", inputs.script.keyframes.len());
        return Ok(());
    }
    let (_, report) = compile_and_validate(&inputs, g.profile.into(), rate)?;
    write_out(&g.out, "validation.json", &canonical_json(&report))?;
    if report.ok() {
        println!("script and trajectory are valid");
        Ok(())
    } else {
        Err(CliError::Validation(violation_summary(&report)))
    }
}

#[derive(Serialize)]
struct RegionExport {
    keyframe: usize,
    mode: RegionMode,
    com: [f64; 3],
    region: Option<SupportRegion>,
    margin: Option<f64>,
    force_polytopes: Vec<ForcePolytope>,
}

pub fn cmd_region(g: &GlobalArgs, keyframe: Option<usize>) -> Result<(), CliError> {
    let inputs = load_inputs(g)?;
    let mut out = Vec::new();
    for i in selected(&inputs.script, keyframe)? {
        let kf = with_mode(&inputs.script.keyframes[i], g.region_mode);
        let contacts = contacts_of(&kf.anchors);
        let com = center_of_mass(&inputs.model, &kf.puppet_q).map_err(input)?;
        let region = region_at(&inputs.model, &kf.puppet_q, &contacts, kf.region_mode, &RegionOptions::default())
            .map_err(|e| CliError::Solver(format!("keyframe {i}: {e}")))?;
        let force_polytopes = contacts
            .iter()
            .map(|c| force_polytope(&inputs.model, &kf.puppet_q, c))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Solver(format!("keyframe {i}: {e}")))?;
        out.push(RegionExport {
            keyframe: i,
            mode: kf.region_mode,
            com: [com.x, com.y, com.z],
            margin: region.as_ref().filter(|r| !r.is_empty()).map(|r| stability_margin(r, [com.x, com.y])),
            region,
            force_polytopes,
        });
    }
    write_out(&g.out, "regions.json", &canonical_json(&out))?;
    Ok(())
}

pub fn cmd_report(g: &GlobalArgs) -> Result<(), CliError> {
    let inputs = load_inputs(g)?;
    let indices: Vec<usize> = (0..inputs.script.keyframes.len()).collect();
    let csv = margins_csv(&inputs, &indices);
    let mut rows = Vec::new();
    for kf in &inputs.script.keyframes {
        let contacts = contacts_of(&kf.anchors);
        let com = center_of_mass(&inputs.model, &kf.puppet_q).map_err(input)?;
        let torques = if contacts.is_empty() {
            None
        } else {
            static_torques(&inputs.model, &kf.puppet_q, &contacts).ok()
        };
        let worst = torques.as_ref().and_then(|t| {
            t.joints
                .iter()
                .filter(|j| j.saturation.is_finite())
                .max_by(|a, b| a.saturation.total_cmp(&b.saturation))
                .map(|j| json!({"joint": j.joint, "saturation": j.saturation}))
        });
        rows.push(json!({
            "keyframe": kf.index,
            "contacts": contacts.len(),
            "com": [com.x, com.y, com.z],
            "flat_margin": margin(&inputs, kf, RegionMode::Flat),
            "multicontact_margin": margin(&inputs, kf, RegionMode::MultiContact),
            "balanced": torques.as_ref().map(|t| t.balanced),
            "worst_saturation": worst.unwrap_or(Value::Null),
        }));
    }
    write_out(&g.out, "margins.csv", &csv)?;
    write_out(&g.out, "report.json", &canonical_json(&rows))?;
    print!("{csv}");
    Ok(())
}

pub fn cmd_serve(g: &GlobalArgs, listen: &str, tick_hz: f64) -> Result<(), CliError> {
    if !(tick_hz > 0.0 && tick_hz.is_finite()) {
        return Err(CliError::Input(format!("tick rate must be positive, got {tick_hz}")));
    }
    let script = match &g.script {
        Some(p) => Some((p.clone(), Script::load(p).map_err(input)?)),
        None => None,
    };
    let model = Arc::new(load_model(g, script.as_ref())?);
    let environment = Arc::new(load_environment(g, script.as_ref())?);
    let script = script.map(|(_, s)| s);
    if let Some(s) = &script {
        s.validate(&model).map_err(input)?;
        AuthoringSession::from_script(model.clone(), environment.clone(), s).map_err(input)?;
    }
    let config = ServerConfig {
        tick_hz,
        ..ServerConfig::default()
    };
    let registry = Registry::new(config, move || match &script {
        Some(s) => AuthoringSession::from_script(model.clone(), environment.clone(), s).expect("checked at startup"),
        None => AuthoringSession::new(model.clone(), environment.clone(), None).expect("model nominal is valid"),
    });
    let listener = TcpListener::bind(listen).map_err(|e| CliError::Input(format!("{listen}: {e}")))?;
    let addr = listener.local_addr().map_err(input)?;
    println!("listening on {addr}");
    server::serve(listener, registry).map_err(input)
}

/// File name stems double as the `model` and `environment` names scripts
/// refer to, so the written scripts resolve their siblings.
pub fn cmd_fixtures(out: &Path) -> Result<(), CliError> {
    let (_, _, _, bracing_env) = fixtures::bracing_fixture();
    let arm = fixtures::two_link_arm_doc();
    let humanoid = fixtures::humanoid_doc();
    let humanoid_name = humanoid["name"].as_str().unwrap_or("humanoid").to_string();
    let arm_name = arm["name"].as_str().unwrap_or("two_link_arm").to_string();
    write_out(out, &format!("{humanoid_name}.model.json"), &canonical_json(&humanoid))?;
    write_out(out, &format!("{arm_name}.model.json"), &canonical_json(&arm))?;
    for env in [fixtures::ground(), fixtures::ground_and_rails(), bracing_env] {
        let doc: Value = serde_json::from_str(&env.to_json()).expect("environment json");
        write_out(out, &format!("{}.env.json", env.name), &canonical_json(&doc))?;
    }
    write_out(out, "bracing.script.json", &fixtures::bracing_script().to_canonical_json())?;
    write_out(out, "crawl_to_kneel.script.json", &fixtures::crawl_to_kneel_script().to_canonical_json())?;
    Ok(())
}

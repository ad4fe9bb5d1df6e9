//! `maggeo` command-line front end.
//!
//! Every run is described by a flat key/value map. It can come from a config
//! file (`key = value` lines, `[section]` headers prefix keys with
//! `section.`), from a previously written JSON manifest (its `config` object),
//! or from flags; flags win. The resolved map is written back into each
//! manifest so a run can be replayed exactly.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::ambient::{cross, det, dot, AmbientVector, Signature};
use crate::closure::{orbit_report, shoot, ClosureError, ShootConfig, ShootingFamily};
use crate::dynamics::{kappa_residual, rhs, rhs_conformal, rhs_general, ParamState};
use crate::integrate::{integrate, Assembly, IntegratorConfig, Method, StopReason, Trajectory};
use crate::oracles::{expanded_curvature_residual, integrate_sphere_intrinsic};
use crate::singular::{
    admissible_directions, approach_fan_experiment, DirectionReport, FanConfig, LightlikePointData, SingularError,
};
use crate::surfaces::{
    catalog, CubicHeight, Domain, GraphSurface, KappaField, KappaTable, MaximalEnneperGraph, SurfaceSpec,
    CATALOG_NAMES,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validate(String),
    #[error("integration stopped: {0}")]
    Stopped(String),
    #[error("shooting failed: {0}")]
    Bracket(String),
    #[error("{0}")]
    Singular(#[from] SingularError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validate(_) => 1,
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Stopped(_) => 3,
            CliError::Bracket(_) => 4,
            CliError::Singular(_) => 5,
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "maggeo", version, about = "Magnetic geodesics on parametrized surfaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one magnetic geodesic and export CSV + manifest.
    Integrate(IntegrateArgs),
    /// Shoot for a closed orbit over a one-parameter family.
    Shoot(ShootArgs),
    /// Admissible directions at a lightlike point, optionally with a ray fan.
    Singular(SingularArgs),
    /// Run the oracle battery and print a pass/fail table.
    Validate(ValidateArgs),
    /// List the built-in surfaces.
    ListSurfaces,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Config file (key = value) or a manifest JSON from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub surface: Option<String>,
    /// zero, const:K, sin-u, sin-u:S or table:PATH
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<String>,
    /// rk4 or dp45
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    #[arg(long)]
    pub h_min: Option<f64>,
    #[arg(long)]
    pub h_max: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Base name of the output files.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// u,v,du,dv
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub max_drift: Option<f64>,
    /// Rescale the velocity after each step to restore the initial speed.
    #[arg(long)]
    pub renormalize: bool,
    /// Also write a gnuplot script next to the CSV.
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Args)]
pub struct ShootArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// angle, u or kappa-scale
    #[arg(long)]
    pub family: Option<String>,
    /// Start point u,v for the angle family.
    #[arg(long, allow_hyphen_values = true)]
    pub at: Option<String>,
    /// v coordinate for the u family.
    #[arg(long, allow_hyphen_values = true)]
    pub v: Option<f64>,
    /// Heading from S_u for the u family.
    #[arg(long, allow_hyphen_values = true)]
    pub heading: Option<f64>,
    #[arg(long)]
    pub speed: Option<f64>,
    /// u,v,du,dv for the kappa-scale family.
    #[arg(long, allow_hyphen_values = true)]
    pub state: Option<String>,
    /// a,b: the family parameter range.
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub pos_tol: Option<f64>,
    #[arg(long)]
    pub vel_tol: Option<f64>,
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Debug, Args)]
pub struct SingularArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Point u,v (chart coordinates for catalog surfaces).
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    /// f_u,f_v at the point (explicit data instead of a surface).
    #[arg(long, allow_hyphen_values = true)]
    pub gradient: Option<String>,
    /// f_uu,f_uv,f_vv at the point.
    #[arg(long, allow_hyphen_values = true)]
    pub hessian: Option<String>,
    /// Number of rays for the approach fan.
    #[arg(long)]
    pub fan: Option<usize>,
    #[arg(long)]
    pub offset: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Deliberately break one part of the pipeline to check that the battery notices.
    #[arg(long, hide = true)]
    pub plant: Option<String>,
}

/// Resolved key/value settings of a run.
pub type Settings = BTreeMap<String, String>;

/// Parse `key = value` lines; `[section]` headers prefix keys with `section.`.
pub fn parse_settings(text: &str) -> Result<Settings, CliError> {
    let mut out = Settings::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = inner.trim().to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(format!("line {}: expected key = value", n + 1)))?;
        let key = if section.is_empty() { k.trim().to_string() } else { format!("{section}.{}", k.trim()) };
        out.insert(key, v.trim().trim_matches('"').to_string());
    }
    Ok(out)
}

fn load_settings(path: &Path) -> Result<Settings, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let obj = v
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| cfg_err(format!("{}: manifest has no config object", path.display())))?;
        let mut out = Settings::new();
        for (k, v) in obj {
            let s = v.as_str().ok_or_else(|| cfg_err(format!("config value for {k} must be a string")))?;
            out.insert(k.clone(), s.to_string());
        }
        return Ok(out);
    }
    parse_settings(&text)
}

fn put<T: ToString>(m: &mut Settings, key: &str, v: Option<T>) {
    if let Some(v) = v {
        m.insert(key.to_string(), v.to_string());
    }
}

fn common_settings(c: &CommonArgs) -> Result<Settings, CliError> {
    let mut m = match &c.config {
        Some(p) => load_settings(p)?,
        None => Settings::new(),
    };
    put(&mut m, "surface", c.surface.as_ref());
    put(&mut m, "kappa", c.kappa.as_ref());
    put(&mut m, "integrator.method", c.method.as_ref());
    put(&mut m, "integrator.step", c.step);
    put(&mut m, "integrator.rel_tol", c.rel_tol);
    put(&mut m, "integrator.abs_tol", c.abs_tol);
    put(&mut m, "integrator.h_min", c.h_min);
    put(&mut m, "integrator.h_max", c.h_max);
    put(&mut m, "output.dir", c.out_dir.as_ref().map(|p| p.display().to_string()));
    put(&mut m, "output.name", c.name.as_ref());
    Ok(m)
}

fn get_f64(m: &Settings, key: &str) -> Result<Option<f64>, CliError> {
    match m.get(key) {
        None => Ok(None),
        Some(s) => {
            let x: f64 = s.trim().parse().map_err(|_| cfg_err(format!("{key}: `{s}` is not a number")))?;
            if !x.is_finite() {
                return Err(cfg_err(format!("{key} must be finite")));
            }
            Ok(Some(x))
        }
    }
}

fn require_f64(m: &Settings, key: &str) -> Result<f64, CliError> {
    get_f64(m, key)?.ok_or_else(|| cfg_err(format!("missing {key}")))
}

fn positive(m: &Settings, key: &str) -> Result<Option<f64>, CliError> {
    match get_f64(m, key)? {
        Some(x) if x <= 0.0 => Err(cfg_err(format!("{key} must be positive"))),
        other => Ok(other),
    }
}

fn get_bool(m: &Settings, key: &str) -> Result<bool, CliError> {
    match m.get(key).map(|s| s.trim()) {
        None | Some("false") => Ok(false),
        Some("true") => Ok(true),
        Some(s) => Err(cfg_err(format!("{key}: expected true or false, got `{s}`"))),
    }
}

fn parse_list<const N: usize>(key: &str, s: &str) -> Result<[f64; N], CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(cfg_err(format!("{key}: expected {N} comma-separated numbers")));
    }
    let mut out = [0.0; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| cfg_err(format!("{key}: bad number `{p}`")))?;
    }
    Ok(out)
}

fn require_list<const N: usize>(m: &Settings, key: &str) -> Result<[f64; N], CliError> {
    parse_list(key, m.get(key).ok_or_else(|| cfg_err(format!("missing {key}")))?)
}

/// Catalog names plus `plane`, `quadratic:a,b,c` and `fold:c,k` graph surfaces.
pub fn resolve_surface(name: &str) -> Result<SurfaceSpec, CliError> {
    let graph = |h: CubicHeight| SurfaceSpec::from_graph(name, GraphSurface::new(h), Domain::square(10.0));
    if let Some(rest) = name.strip_prefix("quadratic:") {
        let [a, b, c] = parse_list::<3>("surface", rest)?;
        return Ok(graph(CubicHeight::quadratic_lightlike(a, b, c)));
    }
    if let Some(rest) = name.strip_prefix("fold:") {
        let [c, k] = parse_list::<2>("surface", rest)?;
        return Ok(graph(CubicHeight::lightlike_fold(c, k)));
    }
    SurfaceSpec::by_name(name).map_err(|e| cfg_err(e.to_string()))
}

fn resolve_kappa(s: &str) -> Result<KappaField, CliError> {
    if let Some(path) = s.trim().strip_prefix("table:") {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        let t: KappaTable = serde_json::from_str(&text).map_err(|e| cfg_err(format!("kappa table {path}: {e}")))?;
        t.validate().map_err(|e| cfg_err(format!("kappa table {path}: {e}")))?;
        return Ok(KappaField::Table(Arc::new(t)));
    }
    s.parse().map_err(|e: crate::surfaces::SurfaceError| cfg_err(e.to_string()))
}

fn integrator_from(m: &Settings) -> Result<IntegratorConfig, CliError> {
    let method = match m.get("integrator.method").map(|s| s.as_str()).unwrap_or("dp45") {
        "rk4" => Method::Rk4Fixed {
            h: positive(m, "integrator.step")?.ok_or_else(|| cfg_err("rk4 needs integrator.step"))?,
        },
        "dp45" => {
            let Method::DormandPrince45 { rel_tol, abs_tol, h_min, h_max } = Method::default() else { unreachable!() };
            Method::DormandPrince45 {
                rel_tol: positive(m, "integrator.rel_tol")?.unwrap_or(rel_tol),
                abs_tol: positive(m, "integrator.abs_tol")?.unwrap_or(abs_tol),
                h_min: positive(m, "integrator.h_min")?.unwrap_or(h_min),
                h_max: positive(m, "integrator.h_max")?.unwrap_or(h_max),
            }
        }
        other => return Err(cfg_err(format!("integrator.method: unknown `{other}` (rk4, dp45)"))),
    };
    let d = IntegratorConfig::default();
    let cfg = IntegratorConfig {
        method,
        t_end: get_f64(m, "t_end")?.unwrap_or(d.t_end),
        max_drift: positive(m, "integrator.max_drift")?,
        degeneracy_ratio: get_f64(m, "integrator.degeneracy_ratio")?.unwrap_or(d.degeneracy_ratio),
        renormalize: get_bool(m, "integrator.renormalize")?,
        max_steps: d.max_steps,
        assembly: match m.get("integrator.assembly").map(String::as_str).unwrap_or("auto") {
            "auto" => Assembly::Auto,
            "general" => Assembly::General,
            other => return Err(cfg_err(format!("integrator.assembly: unknown `{other}` (auto, general)"))),
        },
    };
    cfg.validate().map_err(|e| cfg_err(e.to_string()))?;
    Ok(cfg)
}

fn output_paths(m: &Settings, default_name: &str) -> Result<(PathBuf, String), CliError> {
    let dir = PathBuf::from(m.get("output.dir").map(String::as_str).unwrap_or("."));
    fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    Ok((dir, m.get("output.name").cloned().unwrap_or_else(|| default_name.to_string())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// `t,u,v,x,y,z,speed_sq,drift` with 17 significant digits; `drift = speed_sq − c`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,u,v,x,y,z,speed_sq,drift\n");
    let c = traj.c.0;
    for s in &traj.samples {
        let st = &s.state;
        let p = &s.position;
        let _ = writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            st.t,
            st.u,
            st.v,
            p.x,
            p.y,
            p.z,
            s.speed_sq,
            s.speed_sq - c
        );
    }
    out
}

fn gnuplot_script(csv_name: &str, title: &str) -> String {
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset title '{title}'\n\
         set view equal xyz\nsplot '{csv_name}' using 4:5:6 with lines title 'curve'\npause -1\n\
         set view map\nplot '{csv_name}' using 2:3 with lines title '(u, v)'\npause -1\n"
    )
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    write_file(path, &s)
}

fn state_json(s: &ParamState) -> serde_json::Value {
    json!({ "t": s.t, "u": s.u, "v": s.v, "du": s.du, "dv": s.dv })
}

fn cmd_integrate(args: &IntegrateArgs) -> Result<String, CliError> {
    let mut m = common_settings(&args.common)?;
    put(&mut m, "init", args.init.as_ref());
    put(&mut m, "t_end", args.t_end);
    put(&mut m, "integrator.max_drift", args.max_drift);
    if args.renormalize {
        m.insert("integrator.renormalize".into(), "true".into());
    }
    if args.gnuplot {
        m.insert("output.gnuplot".into(), "true".into());
    }
    let spec = resolve_surface(m.get("surface").ok_or_else(|| cfg_err(missing_surface()))?)?;
    let kappa = resolve_kappa(m.get("kappa").map(String::as_str).unwrap_or("zero"))?;
    let [u, v, du, dv] = require_list::<4>(&m, "init")?;
    let t0 = get_f64(&m, "t_start")?.unwrap_or(0.0);
    let cfg = integrator_from(&m)?;
    let s0 = ParamState::new(t0, u, v, du, dv);
    let traj = integrate(&spec, &kappa, s0, &cfg).map_err(|e| cfg_err(e.to_string()))?;

    let (dir, name) = output_paths(&m, "trajectory")?;
    let csv = format!("{name}.csv");
    write_file(&dir.join(&csv), &trajectory_csv(&traj))?;
    if get_bool(&m, "output.gnuplot")? {
        write_file(&dir.join(format!("{name}.gp")), &gnuplot_script(&csv, &spec.name))?;
    }
    let manifest = json!({
        "surface": spec.name,
        "signature": spec.signature,
        "kappa": m.get("kappa").cloned().unwrap_or_else(|| "zero".into()),
        "initial_state": state_json(&s0),
        "c": traj.c.0,
        "stop_reason": traj.stop_reason.as_str(),
        "stop_detail": traj.stop_detail,
        "drift_max": traj.drift_max,
        "sample_count": traj.samples.len(),
        "final_state": state_json(&traj.last().state),
        "csv": csv,
        "config": m,
    });
    write_json(&dir.join(format!("{name}.json")), &manifest)?;
    let summary = format!(
        "{}: {} samples, stop {}, drift_max {:e}, wrote {}\n",
        spec.name,
        traj.samples.len(),
        traj.stop_reason.as_str(),
        traj.drift_max,
        dir.join(&csv).display()
    );
    match traj.stop_reason {
        StopReason::ReachedEnd | StopReason::DomainExit => Ok(summary),
        other => Err(CliError::Stopped(format!("{}{}", summary, other.as_str()))),
    }
}

fn missing_surface() -> String {
    format!("missing surface (one of: {})", CATALOG_NAMES.join(", "))
}

fn family_from(m: &Settings) -> Result<ShootingFamily, CliError> {
    let [a, b] = require_list::<2>(m, "family.range")?;
    let speed = positive(m, "family.speed")?.unwrap_or(1.0);
    match m.get("family.kind").map(String::as_str).unwrap_or("angle") {
        "angle" => {
            let [u, v] = require_list::<2>(m, "family.at")?;
            Ok(ShootingFamily::InitialAngle { u, v, speed, range: (a, b) })
        }
        "u" => Ok(ShootingFamily::InitialU {
            v: require_f64(m, "family.v")?,
            heading: require_f64(m, "family.heading")?,
            speed,
            range: (a, b),
        }),
        "kappa-scale" => {
            let [u, v, du, dv] = require_list::<4>(m, "family.state")?;
            Ok(ShootingFamily::KappaScale { state: ParamState::new(0.0, u, v, du, dv), range: (a, b) })
        }
        other => Err(cfg_err(format!("family.kind: unknown `{other}` (angle, u, kappa-scale)"))),
    }
}

fn family_label(f: &ShootingFamily) -> &'static str {
    match f {
        ShootingFamily::InitialAngle { .. } => "heading",
        ShootingFamily::InitialU { .. } => "u",
        ShootingFamily::KappaScale { .. } => "kappa scale",
    }
}

fn cmd_shoot(args: &ShootArgs) -> Result<String, CliError> {
    let mut m = common_settings(&args.common)?;
    put(&mut m, "family.kind", args.family.as_ref());
    put(&mut m, "family.at", args.at.as_ref());
    put(&mut m, "family.v", args.v);
    put(&mut m, "family.heading", args.heading);
    put(&mut m, "family.speed", args.speed);
    put(&mut m, "family.state", args.state.as_ref());
    put(&mut m, "family.range", args.range.as_ref());
    put(&mut m, "shoot.horizon", args.horizon);
    put(&mut m, "shoot.pos_tol", args.pos_tol);
    put(&mut m, "shoot.vel_tol", args.vel_tol);
    if args.gnuplot {
        m.insert("output.gnuplot".into(), "true".into());
    }
    let spec = resolve_surface(m.get("surface").ok_or_else(|| cfg_err(missing_surface()))?)?;
    let kappa = resolve_kappa(m.get("kappa").map(String::as_str).unwrap_or("zero"))?;
    let family = family_from(&m)?;
    let d = ShootConfig::default();
    let cfg = ShootConfig {
        integrator: integrator_from(&m)?,
        horizon: positive(&m, "shoot.horizon")?,
        pos_tol: positive(&m, "shoot.pos_tol")?.unwrap_or(d.pos_tol),
        vel_tol: positive(&m, "shoot.vel_tol")?.unwrap_or(d.vel_tol),
        ..d
    };
    let orbit = shoot(&spec, &kappa, &family, &cfg).map_err(|e| match e {
        ClosureError::BracketInvalid { .. } | ClosureError::NoCrossing { .. } | ClosureError::LostCrossing { .. } => {
            CliError::Bracket(e.to_string())
        }
        ClosureError::Unconverged { .. } => CliError::Stopped(e.to_string()),
        other => cfg_err(other.to_string()),
    })?;
    let report = orbit_report(&orbit);
    let (dir, name) = output_paths(&m, "orbit")?;
    let csv = format!("{name}.csv");
    write_file(&dir.join(&csv), &trajectory_csv(&orbit.trajectory))?;
    if get_bool(&m, "output.gnuplot")? {
        write_file(&dir.join(format!("{name}.gp")), &gnuplot_script(&csv, &spec.name))?;
    }
    write_json(
        &dir.join(format!("{name}.json")),
        &json!({
            "surface": spec.name,
            "kappa": m.get("kappa").cloned().unwrap_or_else(|| "zero".into()),
            "family": family,
            "parameter": family.parameter(report.s_star),
            "report": report,
            "initial_state": state_json(&orbit.trajectory.first().state),
            "csv": csv,
            "config": m,
        }),
    )?;
    Ok(format!(
        "closed orbit at s = {:.15} ({} = {:.15}): period {:.12}, length {:.12}, winding ({}, {}), residuals {:.2e} / {:.2e}\n",
        report.s_star,
        family_label(&family),
        family.parameter(report.s_star),
        report.period,
        report.length,
        report.winding.0,
        report.winding.1,
        report.position_residual,
        report.velocity_residual
    ))
}

/// Surface (if any), chart point, and the lightlike data there when available.
type PointData = (Option<SurfaceSpec>, (f64, f64), Result<LightlikePointData, CliError>);

fn point_data(m: &Settings) -> Result<PointData, CliError> {
    if let Some(h) = m.get("hessian") {
        let [a, b, c] = parse_list::<3>("hessian", h)?;
        let [gu, gv] = match m.get("gradient") {
            Some(g) => parse_list::<2>("gradient", g)?,
            None => [1.0, 0.0],
        };
        let [pu, pv] = match m.get("point") {
            Some(p) => parse_list::<2>("point", p)?,
            None => [0.0, 0.0],
        };
        return Ok((None, (pu, pv), LightlikePointData::new((pu, pv), (gu, gv), (a, b, c)).map_err(Into::into)));
    }
    let spec = resolve_surface(m.get("surface").ok_or_else(|| cfg_err("give --hessian or --surface"))?)?;
    let [u, v] = require_list::<2>(m, "point")?;
    let data = if let Some(g) = spec.graph() {
        LightlikePointData::from_graph(g, u, v).map_err(Into::into)
    } else if spec.name == "maximal-enneper" {
        MaximalEnneperGraph::jet_at_chart_point(u, v)
            .map_err(|e| cfg_err(e.to_string()))
            .and_then(|j| {
                let (x, y) = MaximalEnneperGraph::project(u, v);
                LightlikePointData::new((x, y), (j.fu, j.fv), (j.fuu, j.fuv, j.fvv)).map_err(Into::into)
            })
    } else {
        Err(cfg_err(format!("{} is not a graph in Minkowski space", spec.name)))
    };
    Ok((Some(spec), (u, v), data))
}

fn cmd_singular(args: &SingularArgs) -> Result<String, CliError> {
    let mut m = common_settings(&args.common)?;
    put(&mut m, "point", args.point.as_ref());
    put(&mut m, "gradient", args.gradient.as_ref());
    put(&mut m, "hessian", args.hessian.as_ref());
    put(&mut m, "fan.rays", args.fan);
    put(&mut m, "fan.offset", args.offset);
    let (spec, point, data) = point_data(&m)?;
    let rays = match m.get("fan.rays") {
        Some(s) => Some(s.parse::<usize>().map_err(|_| cfg_err("fan.rays must be a count"))?),
        None => None,
    };
    let report: Option<DirectionReport> = match data {
        Ok(d) => Some(admissible_directions(&d)?),
        // the fan can still run on a chart whose graph data is unavailable at the point
        Err(e @ CliError::Config(_)) if rays.is_some() && spec.is_some() => {
            eprintln!("no direction report: {e}");
            None
        }
        Err(e) => return Err(e),
    };
    let (dir, name) = output_paths(&m, "singular")?;
    let mut out = String::new();
    if let Some(r) = &report {
        let _ = writeln!(out, "case {:?}, angles {:?}", r.case, r.angles);
        write_json(
            &dir.join(format!("{name}.json")),
            &json!({
                "point": r.point,
                "gradient": r.gradient,
                "hessian": r.hessian,
                "case": r.case,
                "angles": r.angles,
                "lightlike_pair": r.lightlike_pair,
                "phi": r.phi,
                "config": m,
            }),
        )?;
    }
    if let Some(n) = rays {
        let spec = spec.ok_or_else(|| cfg_err("the fan needs --surface"))?;
        let offset = positive(&m, "fan.offset")?.unwrap_or(0.05);
        let kappa = resolve_kappa(m.get("kappa").map(String::as_str).unwrap_or("zero"))?;
        let cfg = FanConfig { integrator: integrator_from(&m)?, ..FanConfig::default() };
        let fan = approach_fan_experiment(&spec, point, &kappa, n, offset, report.as_ref(), &cfg);
        let mut csv = String::from(
            "ray,approach_angle,closest_distance,closest_t,stop_reason,turned_away,max_identity_residual,max_param_speed_sq,min_metric_factor\n",
        );
        for r in &fan.rays {
            let _ = writeln!(
                csv,
                "{},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e}",
                r.index,
                r.approach_angle,
                r.closest_distance,
                r.closest_t,
                r.stop_reason.map_or("launch-failed", |s| s.as_str()),
                r.turned_away,
                r.max_identity_residual,
                r.max_param_speed_sq,
                r.min_metric_factor
            );
        }
        write_file(&dir.join(format!("{name}_fan.csv")), &csv)?;
        let _ = writeln!(
            out,
            "fan of {n} rays: all avoid {}, speed identity holds {}, close rays {:?}",
            fan.all_avoid(),
            fan.identity_holds,
            fan.close_rays
        );
    }
    Ok(out)
}

/// One row of the validation table.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Deterministic oracle battery. `flip_kappa` feeds the solver the negated
/// curvature, which the κ-residual check must catch.
pub fn validation_battery(flip_kappa: bool) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checks = Vec::new();

    let mut worst: f64 = 0.0;
    for sig in [Signature::Euclidean, Signature::Lorentzian] {
        for _ in 0..1000 {
            let mut v = || AmbientVector::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let (a, b, c) = (v(), v(), v());
            worst = worst.max((dot(sig, cross(sig, a, b), c) - det(a, b, c)).abs());
        }
    }
    checks.push(Check { name: "cross/det identity", value: worst, tolerance: 1e-12 });

    let random_state = |rng: &mut ChaCha8Rng, spec: &SurfaceSpec| loop {
        let s = ParamState::new(
            0.0,
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        );
        if spec.conformal(s.u, s.v).is_none_or(|c| c.f > 1e-3) {
            return s;
        }
    };

    let mut worst: f64 = 0.0;
    for name in ["catenoid", "enneper", "maximal-enneper"] {
        let spec = SurfaceSpec::by_name(name).expect("catalog");
        for _ in 0..1000 {
            let s = random_state(&mut rng, &spec);
            let k = KappaField::Constant(rng.gen_range(-2.0..2.0));
            let (a, b) = rhs_general(&spec, &k, &s).expect("regular");
            let (c, d) = rhs_conformal(&spec, &k, &s).expect("regular");
            worst = worst.max((a - c).abs() / (1.0 + a.abs())).max((b - d).abs() / (1.0 + b.abs()));
        }
    }
    checks.push(Check { name: "conformal vs general", value: worst, tolerance: 1e-9 });

    let mut worst: f64 = 0.0;
    let mut worst_kappa: f64 = 0.0;
    for spec in catalog() {
        for _ in 0..300 {
            let s = random_state(&mut rng, &spec);
            let k = KappaField::Constant(rng.gen_range(0.5..2.0));
            let solver_kappa = if flip_kappa { k.scaled(-1.0) } else { k.clone() };
            let Ok((a, b)) = rhs(&spec, &solver_kappa, &s) else { continue };
            if spec.signature == Signature::Euclidean {
                if let Ok(r) = expanded_curvature_residual(&spec, &k, &s, a, b) {
                    worst = worst.max(r);
                }
            }
            if let Ok(r) = kappa_residual(&spec, &k, &s, a, b) {
                worst_kappa = worst_kappa.max(r.abs());
            }
        }
    }
    checks.push(Check { name: "expanded curvature identity", value: worst, tolerance: 1e-9 });
    checks.push(Check { name: "kappa_residual", value: worst_kappa, tolerance: 1e-9 });

    let sph = SurfaceSpec::by_name("sphere").expect("catalog");
    let k = KappaField::SinU(1.0);
    let s0 = ParamState::new(0.0, 0.2, 0.0, 0.3, 0.9);
    let solver_kappa = if flip_kappa { k.scaled(-1.0) } else { k.clone() };
    let main = integrate(&sph, &solver_kappa, s0, &IntegratorConfig::default().with_t_end(10.0)).expect("sphere run");
    let oracle = integrate_sphere_intrinsic(&k, s0, 10.0, 1e-3);
    let mut worst: f64 = 0.0;
    for o in oracle.iter().step_by(100) {
        let s = crate::integrate::dense_eval(&main, o.t).expect("in span");
        worst = worst.max((s.u - o.u).abs()).max((s.v - o.v).abs());
    }
    checks.push(Check { name: "sphere intrinsic oracle", value: worst, tolerance: 1e-6 });

    let long = integrate(&sph, &k, s0, &IntegratorConfig::default().with_t_end(200.0)).expect("sphere run");
    checks.push(Check { name: "speed drift, sphere sin u", value: long.drift_max, tolerance: 1e-8 });

    let u0: f64 = 0.3;
    let lat = integrate(
        &sph,
        &KappaField::Constant(u0.tan()),
        ParamState::new(0.0, u0, 0.0, 0.0, 1.0 / u0.cos()),
        &IntegratorConfig::default().with_t_end(50.0),
    )
    .expect("latitude run");
    let dev = lat.samples.iter().map(|s| (s.state.u - u0).abs()).fold(0.0, f64::max);
    checks.push(Check { name: "latitude circle", value: dev, tolerance: 1e-8 });

    let mut worst: f64 = 0.0;
    let cases: [((f64, f64, f64), Vec<f64>); 3] = [
        ((0.0, 1.0, 0.0), vec![0.0, PI / 2.0, PI, 1.5 * PI]),
        ((-1.0, 0.0, 1.0), [0.0, 1.0, 3.0, 4.0, 5.0, 7.0].iter().map(|k| k * PI / 4.0).collect()),
        ((1.0, 0.0, 1.0), vec![0.0, PI]),
    ];
    for (h, expected) in cases {
        let d = LightlikePointData::new((0.0, 0.0), (1.0, 0.0), h).expect("valid");
        let r = admissible_directions(&d).expect("non-flat");
        if r.angles.len() != expected.len() {
            worst = f64::INFINITY;
            continue;
        }
        for (a, e) in r.angles.iter().zip(&expected) {
            worst = worst.max((a - e).abs());
        }
    }
    checks.push(Check { name: "admissible directions", value: worst, tolerance: 1e-12 });
    checks
}

fn cmd_validate(args: &ValidateArgs) -> Result<String, CliError> {
    let flip = match args.plant.as_deref() {
        None => false,
        Some("flip-kappa") => true,
        Some(other) => return Err(cfg_err(format!("unknown planted bug `{other}`"))),
    };
    let checks = validation_battery(flip);
    let mut out = format!("{:<30} {:>12} {:>10}  result\n", "check", "value", "tolerance");
    for c in &checks {
        let _ = writeln!(
            out,
            "{:<30} {:>12.3e} {:>10.0e}  {}",
            c.name,
            c.value,
            c.tolerance,
            if c.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(out)
    } else {
        print!("{out}");
        Err(CliError::Validate(failed.join(", ")))
    }
}

fn cmd_list() -> String {
    let mut out = String::new();
    for s in catalog() {
        let per = |p: Option<f64>| p.map_or("-".to_string(), |x| format!("{x:.6}"));
        let _ = writeln!(
            out,
            "{:<16} {:<10} periods ({}, {}) conformal {}",
            s.name,
            format!("{:?}", s.signature).to_lowercase(),
            per(s.periods[0]),
            per(s.periods[1]),
            s.is_conformal()
        );
    }
    out.push_str("graph surfaces: quadratic:A,B,C  fold:C,K\n");
    out
}

/// Run a parsed command; returns stdout text or an error carrying the exit code.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Integrate(a) => cmd_integrate(a),
        Command::Shoot(a) => cmd_shoot(a),
        Command::Singular(a) => cmd_singular(a),
        Command::Validate(a) => cmd_validate(a),
        Command::ListSurfaces => Ok(cmd_list()),
    }
}

/// Entry point shared by the binary: parse, run, print, return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("maggeo: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_sections_and_comments() {
        let m = parse_settings("surface = sphere\n# note\n[integrator]\nrel_tol = 1e-9 # tight\n").unwrap();
        assert_eq!(m["surface"], "sphere");
        assert_eq!(m["integrator.rel_tol"], "1e-9");
        assert!(parse_settings("nonsense").is_err());
    }

    #[test]
    fn surface_resolution() {
        assert!(resolve_surface("fold:1,1").unwrap().graph().is_some());
        assert!(resolve_surface("quadratic:0,1,0").is_ok());
        let err = resolve_surface("torus").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("clifford-torus"));
    }

    #[test]
    fn validation_battery_passes_and_catches_flip() {
        assert!(validation_battery(false).iter().all(Check::passed));
        let planted = validation_battery(true);
        assert!(!planted.iter().find(|c| c.name == "kappa_residual").unwrap().passed());
    }
}

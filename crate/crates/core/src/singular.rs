//! Directions from which a curve can reach a lightlike point of a spacelike
//! graph `(u, v, f(u, v))` in Minkowski space, and an empirical fan experiment
//! around singular points.
//!
//! After rotating the `(u, v)` plane so that `∇f = (1, 0)`, a magnetic geodesic
//! can only arrive at the point along an angle `θ` with
//! `f_uu cos²θ + 2 f_uv cosθ sinθ + f_vv sin²θ = 0`, or along one of the two
//! lightlike directions `θ ∈ {0, π}`. That leaves at most six directions.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{speed_sq, ParamState};
use crate::integrate::{integrate, IntegratorConfig, StopReason};
use crate::par::{self, ExecMode};
use crate::surfaces::{GraphSurface, KappaField, SurfaceError, SurfaceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SingularError {
    #[error("point is not lightlike: f_u² + f_v² − 1 = {defect:e}")]
    NotLightlike { defect: f64 },
    #[error("flat point: the Hessian vanishes")]
    FlatPoint,
    #[error("non-finite point data")]
    NonFinite,
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

pub const LIGHTLIKE_TOL: f64 = 1e-10;
const DEDUP_TOL: f64 = 1e-9;

/// Gradient and Hessian of the height function at a lightlike point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightlikePointData {
    pub point: (f64, f64),
    pub gradient: (f64, f64),
    /// `(f_uu, f_uv, f_vv)`
    pub hessian: (f64, f64, f64),
}

impl LightlikePointData {
    pub fn new(point: (f64, f64), gradient: (f64, f64), hessian: (f64, f64, f64)) -> Result<Self, SingularError> {
        let all = [point.0, point.1, gradient.0, gradient.1, hessian.0, hessian.1, hessian.2];
        if !all.iter().all(|x| x.is_finite()) {
            return Err(SingularError::NonFinite);
        }
        let defect = gradient.0 * gradient.0 + gradient.1 * gradient.1 - 1.0;
        if defect.abs() > LIGHTLIKE_TOL {
            return Err(SingularError::NotLightlike { defect });
        }
        if hessian == (0.0, 0.0, 0.0) {
            return Err(SingularError::FlatPoint);
        }
        Ok(Self { point, gradient, hessian })
    }

    pub fn from_graph(g: &GraphSurface, u: f64, v: f64) -> Result<Self, SingularError> {
        let j = g.height_jet(u, v)?;
        Self::new((u, v), (j.fu, j.fv), (j.fuu, j.fuv, j.fvv))
    }

    /// `f_uu cos²θ + 2 f_uv cosθ sinθ + f_vv sin²θ`
    pub fn quadratic_form(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        let (a, b, d) = self.hessian;
        a * c * c + 2.0 * b * c * s + d * s * s
    }
}

/// Rotation angle `φ` with `R_φ ∇f = (1, 0)` and the data in the rotated
/// coordinates `x′ = R_φ x`. The Hessian becomes `R_φ H R_φᵀ`, and a direction
/// `θ′` in the rotated frame is `θ′ − φ` in the original one.
pub fn normalize_frame(data: &LightlikePointData) -> Result<(f64, LightlikePointData), SingularError> {
    let (gu, gv) = data.gradient;
    let defect = gu * gu + gv * gv - 1.0;
    if defect.abs() > LIGHTLIKE_TOL {
        return Err(SingularError::NotLightlike { defect });
    }
    let phi = -gv.atan2(gu);
    let (s, c) = phi.sin_cos();
    let rot = |x: f64, y: f64| (c * x - s * y, s * x + c * y);
    let r = [[c, -s], [s, c]];
    let h = [[data.hessian.0, data.hessian.1], [data.hessian.1, data.hessian.2]];
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = (0..2).map(|k| (0..2).map(|l| r[i][k] * h[k][l] * r[j][l]).sum::<f64>()).sum();
        }
    }
    let norm = gu.hypot(gv);
    Ok((
        phi,
        LightlikePointData {
            point: rot(data.point.0, data.point.1),
            gradient: (norm, 0.0),
            hessian: (m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1]),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DirectionCase {
    /// `f_vv ≠ 0`: roots from the `tan θ` formula.
    GenericTan,
    /// `f_vv = 0 ≠ f_uu`: roots from the `cot θ` formula.
    GenericCot,
    /// `f_uu = f_vv = 0`: `θ = π/2 + kπ`.
    DoubleDegenerate,
    /// Negative discriminant: only the lightlike pair remains.
    NoRealRoots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub point: (f64, f64),
    pub gradient: (f64, f64),
    pub hessian: (f64, f64, f64),
    pub phi: f64,
    pub case: DirectionCase,
    /// Admissible directions in the original frame, sorted, in `[0, 2π)`.
    pub angles: Vec<f64>,
    /// The same directions in the normalized frame.
    pub normalized_angles: Vec<f64>,
    /// The lightlike directions `{0, π}` of the normalized frame, mapped back.
    pub lightlike_pair: [f64; 2],
}

fn wrap_angle(t: f64) -> f64 {
    let w = t.rem_euclid(TAU);
    if w >= TAU - DEDUP_TOL { 0.0 } else { w }
}

fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn sorted_unique(mut angles: Vec<f64>) -> Vec<f64> {
    angles = angles.into_iter().map(wrap_angle).collect();
    angles.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(angles.len());
    for a in angles {
        if out.iter().all(|&b| circular_distance(a, b) > DEDUP_TOL) {
            out.push(a);
        }
    }
    out
}

/// Roots of the quadratic form in the normalized frame, one per antipodal pair.
fn form_roots(a: f64, b: f64, c: f64) -> (DirectionCase, Vec<f64>) {
    if c != 0.0 {
        // c t² + 2b t + a = 0 with t = tan θ
        let disc = b * b - a * c;
        if disc < 0.0 {
            return (DirectionCase::NoRealRoots, Vec::new());
        }
        let q = -(b + b.signum() * disc.sqrt());
        let mut roots = vec![(q / c).atan()];
        if q != 0.0 {
            roots.push((a / q).atan());
        }
        (DirectionCase::GenericTan, roots)
    } else if a != 0.0 {
        // a k² + 2b k = 0 with k = cot θ
        (DirectionCase::GenericCot, vec![PI / 2.0, (a / (-2.0 * b)).atan()])
    } else {
        (DirectionCase::DoubleDegenerate, vec![PI / 2.0])
    }
}

/// Admissible approach directions at a lightlike point.
pub fn admissible_directions(data: &LightlikePointData) -> Result<DirectionReport, SingularError> {
    if data.hessian == (0.0, 0.0, 0.0) {
        return Err(SingularError::FlatPoint);
    }
    let (phi, norm) = normalize_frame(data)?;
    let (a, b, c) = norm.hessian;
    if a == 0.0 && b == 0.0 && c == 0.0 {
        return Err(SingularError::FlatPoint);
    }
    let (case, roots) = form_roots(a, b, c);
    let mut normalized: Vec<f64> = roots.iter().flat_map(|&t| [t, t + PI]).collect();
    normalized.extend([0.0, PI]);
    let normalized_angles = sorted_unique(normalized);
    let angles = sorted_unique(normalized_angles.iter().map(|t| t - phi).collect());
    Ok(DirectionReport {
        point: data.point,
        gradient: data.gradient,
        hessian: data.hessian,
        phi,
        case,
        angles,
        normalized_angles,
        lightlike_pair: [wrap_angle(-phi), wrap_angle(PI - phi)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanConfig {
    pub integrator: IntegratorConfig,
    /// Each ray runs for `horizon_factor · offset · √f(start)`, about that many
    /// offsets of parameter distance at its initial parameter speed.
    pub horizon_factor: f64,
    /// Times the horizon may be doubled for a ray that has not yet left.
    pub max_extensions: usize,
    /// Tolerance on the relative speed identity along each ray.
    pub drift_tol: f64,
    pub exec: ExecMode,
}

impl Default for FanConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            horizon_factor: 4.0,
            max_extensions: 8,
            drift_tol: 1e-6,
            exec: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayReport {
    pub index: usize,
    /// Direction of travel at launch; the ray starts at `p − offset·(cos ψ, sin ψ)`.
    pub approach_angle: f64,
    pub closest_distance: f64,
    pub closest_t: f64,
    pub stop_reason: Option<StopReason>,
    /// Set when the ray could not be launched.
    pub error: Option<String>,
    /// Left the neighbourhood of `p` again after its closest approach.
    pub turned_away: bool,
    /// `max |speed² − c| / c` along the ray.
    pub max_identity_residual: f64,
    pub max_param_speed_sq: f64,
    pub min_metric_factor: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanReport {
    pub target: (f64, f64),
    pub offset: f64,
    pub rays: Vec<RayReport>,
    /// Rays reaching within `offset / 100` of the target.
    pub close_rays: Vec<usize>,
    /// For each close ray, the angular gap to the nearest admissible direction
    /// (empty without a direction report).
    pub admissible_gaps: Vec<f64>,
    pub identity_holds: bool,
}

impl FanReport {
    /// Every launched ray either stopped at a degenerate point or turned away.
    pub fn all_avoid(&self) -> bool {
        self.rays
            .iter()
            .filter(|r| r.error.is_none())
            .all(|r| r.stop_reason == Some(StopReason::DegeneratePoint) || r.turned_away)
    }

    /// Rays whose start point was itself degenerate.
    pub fn launch_failures(&self) -> usize {
        self.rays.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn fan_step(&self) -> f64 {
        TAU / self.rays.len().max(1) as f64
    }
}

fn run_ray(
    spec: &SurfaceSpec,
    target: (f64, f64),
    kappa: &KappaField,
    index: usize,
    psi: f64,
    offset: f64,
    cfg: &FanConfig,
) -> RayReport {
    let (s, c) = psi.sin_cos();
    let start = (target.0 - offset * c, target.1 - offset * s);
    let mut rep = RayReport {
        index,
        approach_angle: psi,
        closest_distance: offset,
        closest_t: 0.0,
        stop_reason: None,
        error: None,
        turned_away: false,
        max_identity_residual: 0.0,
        max_param_speed_sq: 0.0,
        min_metric_factor: f64::INFINITY,
        samples: 0,
    };
    let unit = ParamState::new(0.0, start.0, start.1, c, s);
    let launch = speed_sq(spec, &unit).map_err(|e| e.to_string()).and_then(|q| {
        if q > 0.0 { Ok(q) } else { Err(format!("start point has squared speed {q:e}")) }
    });
    let q = match launch {
        Ok(q) => q,
        Err(e) => {
            rep.error = Some(e);
            return rep;
        }
    };
    let s0 = unit.with_velocity(c / q.sqrt(), s / q.sqrt());
    let dist = |st: &ParamState| (st.u - target.0).hypot(st.v - target.1);
    // parameter speed is 1/√q at launch; rays that slow down while leaving get
    // a longer horizon so the departure is actually observed
    let mut t_end = cfg.horizon_factor * offset * q.sqrt();
    let mut traj;
    let mut extensions = 0;
    loop {
        traj = match integrate(spec, kappa, s0, &cfg.integrator.with_t_end(t_end)) {
            Ok(t) => t,
            Err(e) => {
                rep.error = Some(e.to_string());
                return rep;
            }
        };
        let closest = traj.samples.iter().map(|x| dist(&x.state)).fold(f64::INFINITY, f64::min);
        let settled = traj.stop_reason != StopReason::ReachedEnd
            || dist(&traj.last().state) >= closest + 0.1 * offset;
        if settled || extensions == cfg.max_extensions {
            break;
        }
        t_end *= 2.0;
        extensions += 1;
    }
    for smp in &traj.samples {
        let d = dist(&smp.state);
        if d < rep.closest_distance {
            rep.closest_distance = d;
            rep.closest_t = smp.state.t;
        }
        rep.max_identity_residual = rep.max_identity_residual.max(traj.drift(smp));
        rep.max_param_speed_sq = rep.max_param_speed_sq.max(smp.state.du.powi(2) + smp.state.dv.powi(2));
        rep.min_metric_factor = rep.min_metric_factor.min(smp.metric_factor);
    }
    let last = dist(&traj.last().state);
    rep.stop_reason = Some(traj.stop_reason);
    rep.samples = traj.samples.len();
    rep.turned_away = traj.stop_reason != StopReason::DegeneratePoint
        && last >= rep.closest_distance + 0.1 * offset;
    rep
}

/// Launch `n_rays` unit-speed magnetic geodesics aimed at `target` from
/// points at parameter distance `offset` around it.
pub fn approach_fan_experiment(
    spec: &SurfaceSpec,
    target: (f64, f64),
    kappa: &KappaField,
    n_rays: usize,
    offset: f64,
    directions: Option<&DirectionReport>,
    cfg: &FanConfig,
) -> FanReport {
    let jobs: Vec<usize> = (0..n_rays).collect();
    let rays = par::map(cfg.exec, jobs, |k| {
        let psi = TAU * k as f64 / n_rays as f64;
        run_ray(spec, target, kappa, k, psi, offset, cfg)
    });
    let close_rays: Vec<usize> =
        rays.iter().filter(|r| r.closest_distance < offset / 100.0).map(|r| r.index).collect();
    let admissible_gaps = match directions {
        Some(d) => close_rays
            .iter()
            .map(|&k| {
                d.angles
                    .iter()
                    .map(|&a| circular_distance(a, rays[k].approach_angle))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect(),
        None => Vec::new(),
    };
    let identity_holds = rays.iter().all(|r| r.error.is_some() || r.max_identity_residual <= cfg.drift_tol);
    FanReport { target, offset, rays, close_rays, admissible_gaps, identity_holds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    fn report(h: (f64, f64, f64)) -> DirectionReport {
        admissible_directions(&LightlikePointData::new((0.0, 0.0), (1.0, 0.0), h).unwrap()).unwrap()
    }

    #[test]
    fn worked_hessians() {
        let r = report((0.0, 1.0, 0.0));
        assert_eq!(r.case, DirectionCase::DoubleDegenerate);
        assert!(close(&r.angles, &[0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2]));

        let r = report((-1.0, 0.0, 1.0));
        assert_eq!(r.case, DirectionCase::GenericTan);
        let six: Vec<f64> = [0.0, 1.0, 3.0, 4.0, 5.0, 7.0].iter().map(|k| k * FRAC_PI_4).collect();
        assert!(close(&r.angles, &six), "{:?}", r.angles);

        let r = report((1.0, 0.0, 1.0));
        assert_eq!(r.case, DirectionCase::NoRealRoots);
        assert!(close(&r.angles, &[0.0, PI]));
    }

    #[test]
    fn cot_case_and_double_root() {
        let r = report((2.0, 1.0, 0.0));
        assert_eq!(r.case, DirectionCase::GenericCot);
        assert_eq!(r.angles.len(), 6);
        for t in &r.normalized_angles {
            assert!(LightlikePointData::new((0.0, 0.0), (1.0, 0.0), (2.0, 1.0, 0.0)).unwrap().quadratic_form(*t).abs() < 1e-12
                || t.abs() < 1e-15
                || (t - PI).abs() < 1e-15);
        }
        // perfect square (u + v)²: tan θ = −1 double
        let r = report((1.0, 1.0, 1.0));
        assert_eq!(r.angles.len(), 4);
        // fold with Hessian (0, 0, c): the only roots are the lightlike ones
        let r = report((0.0, 0.0, 2.0));
        assert!(close(&r.angles, &[0.0, PI]));
    }

    #[test]
    fn normalize_examples() {
        let d = LightlikePointData::new((0.0, 0.0), (1.0, 0.0), (1.0, 2.0, 3.0)).unwrap();
        let (phi, n) = normalize_frame(&d).unwrap();
        assert_eq!(phi, 0.0);
        assert_eq!(n.hessian, (1.0, 2.0, 3.0));

        let d = LightlikePointData::new((0.0, 0.0), (0.0, 1.0), (2.0, 0.0, 5.0)).unwrap();
        let (phi, n) = normalize_frame(&d).unwrap();
        assert!((phi + FRAC_PI_2).abs() < 1e-15);
        assert!((n.hessian.0 - 5.0).abs() < 1e-12 && n.hessian.1.abs() < 1e-12 && (n.hessian.2 - 2.0).abs() < 1e-12);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let d = LightlikePointData::new((0.0, 0.0), (h, h), (1.0, 0.0, 0.0)).unwrap();
        let (phi, n) = normalize_frame(&d).unwrap();
        assert!((phi + FRAC_PI_4).abs() < 1e-15);
        assert!((n.gradient.0 - 1.0).abs() < 1e-12 && n.gradient.1.abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_points() {
        assert!(matches!(
            LightlikePointData::new((0.0, 0.0), (1.0, 0.0), (0.0, 0.0, 0.0)),
            Err(SingularError::FlatPoint)
        ));
        assert!(matches!(
            LightlikePointData::new((0.0, 0.0), (0.5, 0.0), (1.0, 0.0, 0.0)),
            Err(SingularError::NotLightlike { .. })
        ));
        let flat = GraphSurface::new(crate::surfaces::CubicHeight::quadratic_lightlike(0.0, 0.0, 0.0));
        assert!(matches!(LightlikePointData::from_graph(&flat, 0.0, 0.0), Err(SingularError::FlatPoint)));
    }

    #[test]
    fn lightlike_pair_maps_back() {
        let d = LightlikePointData::new((0.0, 0.0), (0.0, -1.0), (1.0, 0.0, -1.0)).unwrap();
        let r = admissible_directions(&d).unwrap();
        // ∇f = (0, −1): the lightlike directions are ±(0, 1) rotated into the gradient line
        for t in r.lightlike_pair {
            assert!(r.angles.iter().any(|a| circular_distance(*a, t) < 1e-12));
            // lightlike directions are parallel to ∇f
            assert!(t.sin().abs() > 1.0 - 1e-12);
        }
    }
}

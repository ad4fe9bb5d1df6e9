//! Closed magnetic geodesics by shooting.
//!
//! Along a continuous family `γ_s` of magnetic geodesics each member has a
//! first self-intersection `γ_s(t₁) = γ_s(t₂)`. The tangent pair at the
//! crossing spans the tangent plane with one orientation or the other; where
//! the orientation flips the loop `γ_s|[t₁, t₂]` closes up. [`shoot`] brackets
//! that flip and bisects on `s`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{det, norm};
use crate::dynamics::{ambient_velocity, speed_sq, velocity_from_heading, DynamicsError, ParamState};
use crate::integrate::{dense_eval, integrate, IntegrateError, IntegratorConfig, StopReason, Trajectory};
use crate::par::{self, ExecMode};
use crate::surfaces::{normal, KappaField, Periods, SurfaceError, SurfaceSpec};

/// Tangent pairs with `|sin ∠| ≤` this count as parallel (orientation 0).
pub const PARALLEL_SINE: f64 = 1e-12;
/// Refined crossings with a larger parameter-space gap are discarded.
pub const MATCH_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosureError {
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("bracket invalid: orientations {o0} at the start and {o1} at the end of the range do not oppose")]
    BracketInvalid { o0: i8, o1: i8 },
    #[error("no self-intersection for family member s = {s}")]
    NoCrossing { s: f64 },
    #[error("crossing lost during bisection (last good s = {last_s})")]
    LostCrossing { last_s: f64 },
    #[error("shooting did not converge: position residual {position:e}, velocity residual {velocity:e}")]
    Unconverged { position: f64, velocity: f64 },
    #[error("invalid family: {0}")]
    InvalidFamily(String),
}

/// Segment pair hit in the parameter polyline: `p_j(β) = p_i(α) + shift ∘ periods`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentHit {
    pub i: usize,
    pub j: usize,
    pub alpha: f64,
    pub beta: f64,
    pub shift: (i64, i64),
}

/// Refined self-intersection `γ(t₁) ≡ γ(t₂)` modulo periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub t1: f64,
    pub t2: f64,
    /// Parameter-space distance at the refined crossing.
    pub gap: f64,
    /// Sign of `det(γ′(t₁), γ′(t₂), n)`; 0 for parallel tangents.
    pub orientation: i8,
    /// That determinant normalized by `|γ′(t₁)| |γ′(t₂)| |n|`.
    pub sine: f64,
    /// Period multiples with `(u, v)(t₂) = (u, v)(t₁) + shift ∘ periods`.
    pub shift: (i64, i64),
}

type P2 = (f64, f64);

#[inline]
fn cross2(a: P2, b: P2) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

#[inline]
fn sub2(a: P2, b: P2) -> P2 {
    (a.0 - b.0, a.1 - b.1)
}

#[inline]
fn dot2(a: P2, b: P2) -> f64 {
    a.0 * b.0 + a.1 * b.1
}

/// Intersection of segments `[a, b)` and `[c, d)` as `(α, β)` with
/// `a + α(b − a) = c + β(d − c)`. Collinear overlaps report the start of one
/// segment on the other.
pub fn segment_hit(a: P2, b: P2, c: P2, d: P2) -> Option<(f64, f64)> {
    let r = sub2(b, a);
    let s = sub2(d, c);
    let ca = sub2(c, a);
    let denom = cross2(r, s);
    let (nr, ns) = (dot2(r, r).sqrt(), dot2(s, s).sqrt());
    if nr == 0.0 || ns == 0.0 {
        return None;
    }
    if denom.abs() > 1e-14 * nr * ns {
        let alpha = cross2(ca, s) / denom;
        let beta = cross2(ca, r) / denom;
        return ((0.0..1.0).contains(&alpha) && (0.0..1.0).contains(&beta)).then_some((alpha, beta));
    }
    // parallel: only collinear segments can meet
    if cross2(ca, r).abs() > 1e-12 * nr * (nr + dot2(ca, ca).sqrt()) {
        return None;
    }
    let alpha_c = dot2(ca, r) / (nr * nr);
    if (0.0..1.0).contains(&alpha_c) {
        return Some((alpha_c, 0.0));
    }
    let beta_a = -dot2(ca, s) / (ns * ns);
    (beta_a > 0.0 && beta_a < 1.0).then_some((0.0, beta_a))
}

fn period_list(periods: &Periods) -> [f64; 2] {
    [periods[0].unwrap_or(0.0), periods[1].unwrap_or(0.0)]
}

fn shift_choices(periods: &Periods, k: usize) -> &'static [i64] {
    if periods[k].is_some() {
        &[-1, 0, 1]
    } else {
        &[0]
    }
}

/// All hits between non-adjacent segments of the polyline through `points`,
/// identified modulo the periods. Sorted by `(i, j, shift)`.
pub fn segment_crossings(points: &[P2], periods: &Periods) -> Vec<SegmentHit> {
    let n = points.len();
    if n < 4 {
        return Vec::new();
    }
    let per = period_list(periods);
    let wrap_index = |x: f64, k: usize| if per[k] > 0.0 { (x / per[k]).floor() as i64 } else { 0 };

    // each segment translated so that its start lies in the fundamental cell
    let segs: Vec<(P2, P2, (i64, i64))> = (0..n - 1)
        .map(|i| {
            let (a, b) = (points[i], points[i + 1]);
            let o = (wrap_index(a.0, 0), wrap_index(a.1, 1));
            let off = (o.0 as f64 * per[0], o.1 as f64 * per[1]);
            (sub2(a, off), sub2(b, off), o)
        })
        .collect();

    let extent = segs
        .iter()
        .map(|(a, b, _)| (b.0 - a.0).abs().max((b.1 - a.1).abs()))
        .fold(0.0f64, f64::max);
    let cell = if extent > 0.0 { extent } else { 1.0 };
    let key = |x: f64| (x / cell).floor() as i64;

    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (idx, (a, b, _)) in segs.iter().enumerate() {
        for gx in key(a.0.min(b.0))..=key(a.0.max(b.0)) {
            for gy in key(a.1.min(b.1))..=key(a.1.max(b.1)) {
                grid.entry((gx, gy)).or_default().push(idx);
            }
        }
    }

    let mut hits = Vec::new();
    let mut seen = HashSet::new();
    for (i, &(a, b, oi)) in segs.iter().enumerate() {
        for &mu in shift_choices(periods, 0) {
            for &mv in shift_choices(periods, 1) {
                // segment j translated by m ∘ periods, tested against segment i
                let m = (mu as f64 * per[0], mv as f64 * per[1]);
                let (lo, hi) = ((a.0.min(b.0) - m.0, a.1.min(b.1) - m.1), (a.0.max(b.0) - m.0, a.1.max(b.1) - m.1));
                seen.clear();
                for gx in key(lo.0)..=key(hi.0) {
                    for gy in key(lo.1)..=key(hi.1) {
                        let Some(bucket) = grid.get(&(gx, gy)) else { continue };
                        for &j in bucket {
                            if j <= i + 1 || !seen.insert(j) {
                                continue;
                            }
                            let (c, d, oj) = segs[j];
                            let (c, d) = ((c.0 + m.0, c.1 + m.1), (d.0 + m.0, d.1 + m.1));
                            if let Some((alpha, beta)) = segment_hit(a, b, c, d) {
                                hits.push(SegmentHit {
                                    i,
                                    j,
                                    alpha,
                                    beta,
                                    shift: (oj.0 - oi.0 - mu, oj.1 - oi.1 - mv),
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    hits.sort_by_key(|h| (h.i, h.j, h.shift));
    hits
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + s * (b - a)
}

/// Newton refinement of a segment hit on the dense output; falls back to a
/// closest-approach search in `t₂` when the tangents are nearly parallel.
fn refine(traj: &Trajectory, hit: &SegmentHit, per: [f64; 2]) -> Option<(f64, f64, f64)> {
    let s = &traj.samples;
    let mut t1 = lerp(s[hit.i].state.t, s[hit.i + 1].state.t, hit.alpha);
    let mut t2 = lerp(s[hit.j].state.t, s[hit.j + 1].state.t, hit.beta);
    let k = (hit.shift.0 as f64 * per[0], hit.shift.1 as f64 * per[1]);
    let (lo, hi) = traj.span();
    let max_move = 4.0 * (s[hit.i + 1].state.t - s[hit.i].state.t).abs().max((s[hit.j + 1].state.t - s[hit.j].state.t).abs());
    let (t1_0, t2_0) = (t1, t2);
    let residual = |t1: f64, t2: f64| -> Option<(P2, ParamState, ParamState)> {
        let a = dense_eval(traj, t1).ok()?;
        let b = dense_eval(traj, t2).ok()?;
        Some(((a.u + k.0 - b.u, a.v + k.1 - b.v), a, b))
    };
    let (mut f, _, _) = residual(t1, t2)?;
    for _ in 0..40 {
        let (_, a, b) = residual(t1, t2)?;
        let (g1, g2) = ((a.du, a.dv), (b.du, b.dv));
        let jdet = cross2(g1, (-g2.0, -g2.1));
        let (n1, n2) = (dot2(g1, g1).sqrt(), dot2(g2, g2).sqrt());
        let (d1, d2) = if jdet.abs() > 1e-8 * n1 * n2 {
            // [g1, −g2] (δ1, δ2)ᵀ = −f
            let d1 = (-f.0 * -g2.1 - -g2.0 * -f.1) / jdet;
            let d2 = (g1.0 * -f.1 - g1.1 * -f.0) / jdet;
            (d1, d2)
        } else {
            (0.0, dot2(f, g2) / (n2 * n2))
        };
        let (nt1, nt2) = ((t1 + d1).clamp(lo, hi), (t2 + d2).clamp(lo, hi));
        if (nt1 - t1_0).abs() > max_move || (nt2 - t2_0).abs() > max_move {
            break;
        }
        let (nf, _, _) = residual(nt1, nt2)?;
        if dot2(nf, nf) > dot2(f, f) {
            break;
        }
        let moved = (nt1 - t1).abs() + (nt2 - t2).abs();
        t1 = nt1;
        t2 = nt2;
        f = nf;
        if moved <= 1e-15 * (1.0 + t2.abs()) || dot2(f, f).sqrt() <= 1e-13 {
            break;
        }
    }
    Some((t1, t2, dot2(f, f).sqrt()))
}

fn orientation_at(spec: &SurfaceSpec, a: &ParamState, b: &ParamState) -> Result<f64, SurfaceError> {
    let jet = spec.jet(a.u, a.v)?;
    let n = normal(&jet, spec.signature)?;
    let va = ambient_velocity(&jet, a.du, a.dv);
    let vb = ambient_velocity(&jet, b.du, b.dv);
    let sig = spec.signature;
    let scale = norm(sig, va) * norm(sig, vb) * norm(sig, n);
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(det(va, vb, n) / scale)
}

fn sign_of(sine: f64) -> i8 {
    if sine.abs() <= PARALLEL_SINE {
        0
    } else if sine > 0.0 {
        1
    } else {
        -1
    }
}

/// Self-intersections of the parameter-space curve, identified modulo the
/// surface periods, refined on the dense output. Sorted by `t₂`, then `t₁`.
///
/// A stretch where the curve retraces itself is reported once, at its
/// earliest `t₁`.
pub fn find_self_intersections(spec: &SurfaceSpec, traj: &Trajectory) -> Result<Vec<Crossing>, SurfaceError> {
    let per = period_list(&spec.periods);
    let pts: Vec<P2> = traj.samples.iter().map(|s| (s.state.u, s.state.v)).collect();
    let mut out: Vec<Crossing> = Vec::new();
    for hit in segment_crossings(&pts, &spec.periods) {
        let Some((t1, t2, gap)) = refine(traj, &hit, per) else { continue };
        if !(gap <= MATCH_TOL) || t2 <= t1 {
            continue;
        }
        let (Ok(a), Ok(b)) = (dense_eval(traj, t1), dense_eval(traj, t2)) else { continue };
        let sine = orientation_at(spec, &a, &b)?;
        out.push(Crossing { t1, t2, gap, orientation: sign_of(sine), sine, shift: hit.shift });
    }
    out.sort_by(|x, y| x.t2.total_cmp(&y.t2).then(x.t1.total_cmp(&y.t1)));

    let mut kept: Vec<Crossing> = Vec::new();
    'next: for c in out {
        for k in &kept {
            let same_point = (k.t1 - c.t1).abs() <= 1e-7 && (k.t2 - c.t2).abs() <= 1e-7;
            let lag = c.t2 - c.t1;
            let retrace = k.shift == c.shift
                && ((k.t2 - k.t1) - lag).abs() <= 1e-6 * (1.0 + lag)
                && k.sine.abs() <= 1e-5
                && c.sine.abs() <= 1e-5;
            if same_point || retrace {
                continue 'next;
            }
        }
        kept.push(c);
    }
    // retrace groups keep the earliest t₁
    let mut result: Vec<Crossing> = Vec::with_capacity(kept.len());
    for c in kept {
        if let Some(r) = result.iter_mut().find(|r| {
            r.shift == c.shift && r.sine.abs() <= 1e-5 && ((r.t2 - r.t1) - (c.t2 - c.t1)).abs() <= 1e-6
        }) {
            if c.t1 < r.t1 {
                *r = c;
            }
        } else {
            result.push(c);
        }
    }
    result.sort_by(|x, y| x.t2.total_cmp(&y.t2).then(x.t1.total_cmp(&y.t1)));
    Ok(result)
}

/// One-parameter family of initial conditions, `s ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShootingFamily {
    /// Start at `(u, v)` with heading `θ(s)` measured from `S_u`.
    InitialAngle { u: f64, v: f64, speed: f64, range: (f64, f64) },
    /// Start at `(u(s), v)` with a fixed heading.
    InitialU { v: f64, heading: f64, speed: f64, range: (f64, f64) },
    /// Fixed initial state, curvature field scaled by `λ(s)`.
    KappaScale { state: ParamState, range: (f64, f64) },
}

impl ShootingFamily {
    /// Initial state and κ scale factor of member `s`.
    pub fn member(&self, spec: &SurfaceSpec, s: f64) -> Result<(ParamState, f64), ClosureError> {
        if !(0.0..=1.0).contains(&s) {
            return Err(ClosureError::InvalidFamily(format!("s = {s} outside [0, 1]")));
        }
        match *self {
            ShootingFamily::InitialAngle { u, v, speed, range } => {
                let th = lerp(range.0, range.1, s);
                let (du, dv) = velocity_from_heading(spec, u, v, th, speed)?;
                Ok((ParamState::new(0.0, u, v, du, dv), 1.0))
            }
            ShootingFamily::InitialU { v, heading, speed, range } => {
                let u = lerp(range.0, range.1, s);
                let (du, dv) = velocity_from_heading(spec, u, v, heading, speed)?;
                Ok((ParamState::new(0.0, u, v, du, dv), 1.0))
            }
            ShootingFamily::KappaScale { state, range } => Ok((state, lerp(range.0, range.1, s))),
        }
    }

    /// Family parameter (angle, u or κ scale) of member `s`.
    pub fn parameter(&self, s: f64) -> f64 {
        let (ShootingFamily::InitialAngle { range, .. }
        | ShootingFamily::InitialU { range, .. }
        | ShootingFamily::KappaScale { range, .. }) = self;
        lerp(range.0, range.1, s)
    }

    pub fn describe(&self) -> String {
        match self {
            ShootingFamily::InitialAngle { range, .. } => format!("initial angle over [{}, {}]", range.0, range.1),
            ShootingFamily::InitialU { range, .. } => format!("initial u over [{}, {}]", range.0, range.1),
            ShootingFamily::KappaScale { range, .. } => format!("kappa scale over [{}, {}]", range.0, range.1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootConfig {
    pub integrator: IntegratorConfig,
    /// Integration horizon; `40/√c` when `None`.
    pub horizon: Option<f64>,
    /// Trajectories are cut after this many windings of any periodic coordinate.
    pub max_windings: f64,
    pub pos_tol: f64,
    pub vel_tol: f64,
    /// Bisection stops once `|sine|` at the tracked crossing is this small.
    pub angle_tol: f64,
    pub s_tol: f64,
    pub max_bisections: usize,
    pub exec: ExecMode,
}

impl Default for ShootConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig::default(),
            horizon: None,
            max_windings: 4.0,
            pos_tol: 1e-6,
            vel_tol: 1e-5,
            angle_tol: 1e-10,
            s_tol: 1e-12,
            max_bisections: 200,
            exec: ExecMode::default(),
        }
    }
}

/// Crossing tracked at one bisection step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosureEvent {
    pub s: f64,
    pub t1: f64,
    pub t2: f64,
    pub gap: f64,
    pub orientation: i8,
    pub sine: f64,
}

impl ClosureEvent {
    fn new(s: f64, c: &Crossing) -> Self {
        Self { s, t1: c.t1, t2: c.t2, gap: c.gap, orientation: c.orientation, sine: c.sine }
    }
}

#[derive(Debug, Clone)]
pub struct ClosedOrbit {
    pub s_star: f64,
    /// Start of the loop on the family member's trajectory.
    pub t1: f64,
    pub period: f64,
    pub position_residual: f64,
    pub velocity_residual: f64,
    pub kappa: KappaField,
    /// The loop re-integrated from its start over `[0, period]`.
    pub trajectory: Trajectory,
    pub shift: (i64, i64),
    /// Final bracket `(s⁻, s⁺)`, equal when an endpoint already closes.
    pub bracket: (ClosureEvent, ClosureEvent),
    pub bisections: usize,
}

struct Member {
    crossings: Vec<Crossing>,
}

fn horizon_for(cfg: &ShootConfig, c: f64) -> f64 {
    cfg.horizon.unwrap_or(40.0 / c.sqrt())
}

/// Drop samples once a periodic coordinate has wound `max_windings` times.
fn truncate_windings(traj: &mut Trajectory, periods: &Periods, max_windings: f64) {
    let s0 = traj.first().state;
    let limit = traj.samples.iter().position(|s| {
        let du = periods[0].is_some_and(|p| (s.state.u - s0.u).abs() > max_windings * p);
        let dv = periods[1].is_some_and(|p| (s.state.v - s0.v).abs() > max_windings * p);
        du || dv
    });
    if let Some(k) = limit {
        traj.samples.truncate(k.max(2));
    }
}

fn evaluate(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    family: &ShootingFamily,
    s: f64,
    cfg: &ShootConfig,
) -> Result<Member, ClosureError> {
    let (state, scale) = family.member(spec, s)?;
    let kappa = kappa.scaled(scale);
    let c = speed_sq(spec, &state)?;
    let mut traj = integrate(spec, &kappa, state, &cfg.integrator.with_t_end(horizon_for(cfg, c)))?;
    truncate_windings(&mut traj, &spec.periods, cfg.max_windings);
    let crossings = find_self_intersections(spec, &traj)?;
    Ok(Member { crossings })
}

fn nearest<'a>(crossings: &'a [Crossing], prev: &Crossing) -> Option<&'a Crossing> {
    crossings.iter().min_by(|a, b| {
        let da = (a.t1 - prev.t1).hypot(a.t2 - prev.t2);
        let db = (b.t1 - prev.t1).hypot(b.t2 - prev.t2);
        da.total_cmp(&db)
    })
}

/// Loop residuals for member `s` starting at `t1` with period `period`.
struct LoopEval {
    trajectory: Trajectory,
    /// Parameter-space state mismatch after removing the period shift.
    param: [f64; 4],
    position: f64,
    velocity: f64,
}

fn eval_loop(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    family: &ShootingFamily,
    s: f64,
    t1: f64,
    period: f64,
    shift: (i64, i64),
    cfg: &ShootConfig,
) -> Result<LoopEval, ClosureError> {
    let (state, scale) = family.member(spec, s)?;
    let kappa = kappa.scaled(scale);
    let start = if t1 > 0.0 {
        integrate(spec, &kappa, state, &cfg.integrator.with_t_end(t1))?.last().state
    } else {
        state
    };
    let start = ParamState { t: 0.0, ..start };
    let trajectory = integrate(spec, &kappa, start, &cfg.integrator.with_t_end(period))?;
    let end = trajectory.last().state;
    if trajectory.stop_reason != StopReason::ReachedEnd {
        return Err(ClosureError::Unconverged { position: f64::INFINITY, velocity: f64::INFINITY });
    }
    let per = period_list(&spec.periods);
    let param = [
        end.u - start.u - shift.0 as f64 * per[0],
        end.v - start.v - shift.1 as f64 * per[1],
        end.du - start.du,
        end.dv - start.dv,
    ];
    let ja = spec.jet(start.u, start.v)?;
    let jb = spec.jet(end.u, end.v)?;
    let position = (jb.s - ja.s).euclidean_norm();
    let velocity = (ambient_velocity(&jb, end.du, end.dv) - ambient_velocity(&ja, start.du, start.dv)).euclidean_norm();
    Ok(LoopEval { trajectory, param, position, velocity })
}

fn norm4(r: &[f64; 4]) -> f64 {
    r.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Damped Gauss–Newton on `(s, T)` (or `T` alone) against the parameter-space
/// loop mismatch, with finite-difference Jacobians.
#[allow(clippy::too_many_arguments)]
fn polish(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    family: &ShootingFamily,
    mut s: f64,
    t1: f64,
    mut period: f64,
    shift: (i64, i64),
    free_s: bool,
    cfg: &ShootConfig,
) -> Result<(f64, f64, LoopEval), ClosureError> {
    let mut best = eval_loop(spec, kappa, family, s, t1, period, shift, cfg)?;
    for _ in 0..12 {
        let r0 = norm4(&best.param);
        if r0 <= 1e-12 {
            break;
        }
        let ht = 1e-7 * period.abs().max(1.0);
        let rt = eval_loop(spec, kappa, family, s, t1, period + ht, shift, cfg)?.param;
        let jt: Vec<f64> = (0..4).map(|i| (rt[i] - best.param[i]) / ht).collect();
        let js: Vec<f64> = if free_s {
            let hs = if s + 1e-7 <= 1.0 { 1e-7 } else { -1e-7 };
            let rs = eval_loop(spec, kappa, family, s + hs, t1, period, shift, cfg)?.param;
            (0..4).map(|i| (rs[i] - best.param[i]) / hs).collect()
        } else {
            vec![0.0; 4]
        };
        // normal equations with a small Tikhonov term
        let (a11, a12, a22) = (
            js.iter().map(|x| x * x).sum::<f64>(),
            js.iter().zip(&jt).map(|(x, y)| x * y).sum::<f64>(),
            jt.iter().map(|x| x * x).sum::<f64>(),
        );
        let lambda = 1e-12 * (a11 + a22).max(1e-300);
        let (b1, b2) = (
            -js.iter().zip(&best.param).map(|(x, r)| x * r).sum::<f64>(),
            -jt.iter().zip(&best.param).map(|(x, r)| x * r).sum::<f64>(),
        );
        let (m11, m22) = (a11 + lambda, a22 + lambda);
        let dd = m11 * m22 - a12 * a12;
        if !(dd.is_finite() && dd > 0.0) {
            break;
        }
        let (ds, dt) = ((b1 * m22 - a12 * b2) / dd, (m11 * b2 - a12 * b1) / dd);
        let mut step = 1.0;
        let mut improved = false;
        while step >= 1.0 / 64.0 {
            let ns = (s + step * ds).clamp(0.0, 1.0);
            let nt = period + step * dt;
            if nt > 0.0 {
                if let Ok(cand) = eval_loop(spec, kappa, family, ns, t1, nt, shift, cfg) {
                    if norm4(&cand.param) < r0 {
                        s = ns;
                        period = nt;
                        best = cand;
                        improved = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    Ok((s, period, best))
}

/// Shoot for a closed magnetic geodesic within `family`.
///
/// Either an endpoint member already closes at its first self-intersection,
/// or the endpoint orientations must oppose; the crossing is then tracked by
/// nearest `(t₁, t₂)` while bisecting on `s`.
pub fn shoot(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    family: &ShootingFamily,
    cfg: &ShootConfig,
) -> Result<ClosedOrbit, ClosureError> {
    let (m0, m1) = par::join(
        cfg.exec,
        || evaluate(spec, kappa, family, 0.0, cfg),
        || evaluate(spec, kappa, family, 1.0, cfg),
    );
    let (m0, m1) = (m0?, m1?);
    let c0 = *m0.crossings.first().ok_or(ClosureError::NoCrossing { s: 0.0 })?;
    let c1 = *m1.crossings.first().ok_or(ClosureError::NoCrossing { s: 1.0 })?;

    let finish = |s: f64, c: &Crossing, free_s: bool, bracket: (ClosureEvent, ClosureEvent), bisections: usize| {
        let (s_star, period, ev) = polish(spec, kappa, family, s, c.t1, c.t2 - c.t1, c.shift, free_s, cfg)?;
        if ev.position > cfg.pos_tol || ev.velocity > cfg.vel_tol {
            return Err(ClosureError::Unconverged { position: ev.position, velocity: ev.velocity });
        }
        let (_, scale) = family.member(spec, s_star)?;
        Ok(ClosedOrbit {
            s_star,
            t1: c.t1,
            period,
            position_residual: ev.position,
            velocity_residual: ev.velocity,
            kappa: kappa.scaled(scale),
            trajectory: ev.trajectory,
            shift: c.shift,
            bracket,
            bisections,
        })
    };

    // endpoint members that already close (e.g. every constant-κ curve on the sphere)
    for (s, c) in [(0.0, &c0), (1.0, &c1)] {
        if c.sine.abs() <= 1e-6 {
            let ev = ClosureEvent::new(s, c);
            if let Ok(orbit) = finish(s, c, false, (ev, ev), 0) {
                return Ok(orbit);
            }
        }
    }
    if c0.orientation * c1.orientation >= 0 {
        return Err(ClosureError::BracketInvalid { o0: c0.orientation, o1: c1.orientation });
    }

    let (mut lo, mut hi) = ((0.0f64, c0), (1.0f64, c1));
    let mut prev = c0;
    let mut bisections = 0;
    let mut exact: Option<(f64, Crossing)> = None;
    while hi.0 - lo.0 > cfg.s_tol && bisections < cfg.max_bisections {
        let mid = 0.5 * (lo.0 + hi.0);
        if mid <= lo.0 || mid >= hi.0 {
            break;
        }
        bisections += 1;
        let m = evaluate(spec, kappa, family, mid, cfg)?;
        let Some(c) = nearest(&m.crossings, &prev).copied() else {
            return Err(ClosureError::LostCrossing { last_s: lo.0 });
        };
        if c.sine.abs() <= cfg.angle_tol {
            exact = Some((mid, c));
            break;
        }
        // side by the raw sign: sub-threshold sines still carry it
        if c.sine.signum() == c0.sine.signum() {
            lo = (mid, c);
        } else {
            hi = (mid, c);
        }
        prev = c;
    }
    let bracket = (ClosureEvent::new(lo.0, &lo.1), ClosureEvent::new(hi.0, &hi.1));
    let (s, c) = exact.unwrap_or(if lo.1.sine.abs() <= hi.1.sine.abs() { lo } else { hi });
    finish(s, &c, true, bracket, bisections)
}

/// Summary of a closed orbit for export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub s_star: f64,
    pub period: f64,
    pub length: f64,
    pub c: f64,
    /// Windings of the loop in `(u, v)`; zero for non-periodic coordinates.
    pub winding: (i64, i64),
    pub position_residual: f64,
    pub velocity_residual: f64,
    /// Smallest conformal factor (or Gram determinant) along the loop.
    pub min_metric_factor: f64,
    pub bisections: usize,
    pub bracket: (ClosureEvent, ClosureEvent),
}

pub fn orbit_report(orbit: &ClosedOrbit) -> OrbitReport {
    let c = orbit.trajectory.c.0;
    OrbitReport {
        s_star: orbit.s_star,
        period: orbit.period,
        length: c.sqrt() * orbit.period,
        c,
        winding: orbit.shift,
        position_residual: orbit.position_residual,
        velocity_residual: orbit.velocity_residual,
        min_metric_factor: orbit.trajectory.min_metric_factor(),
        bisections: orbit.bisections,
        bracket: orbit.bracket,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    #[test]
    fn segment_hit_cases() {
        let h = segment_hit((0.0, 0.0), (1.0, 1.0), (0.0, 1.0), (1.0, 0.0)).unwrap();
        assert!((h.0 - 0.5).abs() < 1e-15 && (h.1 - 0.5).abs() < 1e-15);
        assert!(segment_hit((0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)).is_none());
        // collinear overlap
        assert_eq!(segment_hit((0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (3.0, 0.0)), Some((0.5, 0.0)));
        assert_eq!(segment_hit((1.0, 0.0), (3.0, 0.0), (0.0, 0.0), (2.0, 0.0)), Some((0.0, 0.5)));
        // touching at the excluded end point
        assert!(segment_hit((0.0, 0.0), (1.0, 0.0), (1.0, -1.0), (1.0, 1.0)).is_none());
    }

    #[test]
    fn equator_retrace_is_one_parallel_crossing() {
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        let tr = integrate(
            &sph,
            &KappaField::Zero,
            ParamState::new(0.0, 0.0, 0.0, 0.0, 1.0),
            &IntegratorConfig::default().with_t_end(2.0 * TAU),
        )
        .unwrap();
        let xs = find_self_intersections(&sph, &tr).unwrap();
        assert_eq!(xs.len(), 1, "{xs:?}");
        let c = xs[0];
        assert!((c.t2 - c.t1 - TAU).abs() < 1e-9);
        assert_eq!(c.orientation, 0);
        assert_eq!(c.shift, (0, 1));
    }

    #[test]
    fn straight_line_is_simple() {
        let tr = integrate(
            &SurfaceSpec::plane(),
            &KappaField::Zero,
            ParamState::new(0.0, 0.0, 0.0, 0.6, 0.8),
            &IntegratorConfig::default().with_t_end(20.0),
        )
        .unwrap();
        assert!(find_self_intersections(&SurfaceSpec::plane(), &tr).unwrap().is_empty());
    }

    #[test]
    fn sphere_constant_kappa_closes_at_endpoint() {
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        // geodesic curvature is κ/|γ′|, so the circle has radius atan(speed)
        for speed in [1.0, 1.3] {
            let fam = ShootingFamily::InitialAngle { u: 0.3, v: 0.2, speed, range: (0.1, 2.0) };
            let orbit = shoot(&sph, &KappaField::Constant(1.0), &fam, &ShootConfig::default()).unwrap();
            assert!(orbit.position_residual <= 1e-6 && orbit.velocity_residual <= 1e-5);
            let rep = orbit_report(&orbit);
            let expected = TAU * speed / (1.0 + speed * speed).sqrt();
            assert!((rep.length - expected).abs() <= 1e-5, "{}", rep.length);
        }
        assert!((TAU / 2f64.sqrt() - PI * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn same_orientation_bracket_is_rejected() {
        let torus = SurfaceSpec::by_name("clifford-torus").unwrap();
        let fam = ShootingFamily::InitialAngle { u: 0.0, v: 0.0, speed: 1.0, range: (FRAC_PI_2 + 0.2, FRAC_PI_2 + 0.3) };
        match shoot(&torus, &KappaField::Zero, &fam, &ShootConfig::default()) {
            Err(ClosureError::BracketInvalid { o0, o1 }) => assert_eq!(o0, o1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn family_endpoints_and_range_check() {
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        let st = ParamState::new(0.0, 0.1, 0.0, 0.0, 1.0);
        let fam = ShootingFamily::KappaScale { state: st, range: (0.5, 2.0) };
        assert_eq!(fam.member(&sph, 1.0).unwrap().1, 2.0);
        assert!(fam.member(&sph, 1.5).is_err());
    }
}

//! Explicit Runge–Kutta integration with invariant monitoring, clean stops at
//! degenerate points, cubic Hermite dense output and event location.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::AmbientVector;
use crate::dynamics::{rhs, rhs_general, speed_sq_from_jet, DynamicsError, ParamState, SpeedConstant};
use crate::surfaces::{first_fundamental, KappaField, SurfaceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrateError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state is not admissible: {0}")]
    InvalidStart(String),
    #[error("time {t} outside trajectory span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Rk4Fixed { h: f64 },
    DormandPrince45 { rel_tol: f64, abs_tol: f64, h_min: f64, h_max: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::DormandPrince45 { rel_tol: 1e-10, abs_tol: 1e-12, h_min: 1e-13, h_max: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// May be smaller than the start time for backward integration.
    pub t_end: f64,
    /// Stop with [`StopReason::DriftExceeded`] when the relative speed drift passes this.
    pub max_drift: Option<f64>,
    /// Stop when the conformal factor (or the Gram determinant on non-conformal
    /// charts) falls below this fraction of its starting value.
    pub degeneracy_ratio: f64,
    /// Rescale `(u′, v′)` after every step to restore the initial speed.
    pub renormalize: bool,
    pub max_steps: usize,
    /// Which right-hand side to integrate.
    #[serde(default)]
    pub assembly: Assembly,
}

/// `Auto` takes the conformal shortcut when the chart has one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assembly {
    #[default]
    Auto,
    General,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::default(),
            t_end: 10.0,
            max_drift: None,
            degeneracy_ratio: 1e-10,
            renormalize: false,
            max_steps: 10_000_000,
            assembly: Assembly::Auto,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(self, t_end: f64) -> Self {
        Self { t_end, ..self }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |m: &str| Err(IntegrateError::InvalidConfig(m.to_string()));
        match self.method {
            Method::Rk4Fixed { h } if !(h > 0.0 && h.is_finite()) => return bad("step must be positive"),
            Method::DormandPrince45 { rel_tol, abs_tol, h_min, h_max } => {
                if !(rel_tol > 0.0 && abs_tol > 0.0) {
                    return bad("tolerances must be positive");
                }
                if !(h_min > 0.0 && h_min < h_max) {
                    return bad("need 0 < h_min < h_max");
                }
            }
            _ => {}
        }
        if !self.t_end.is_finite() {
            return bad("t_end must be finite");
        }
        if !(self.degeneracy_ratio >= 0.0 && self.degeneracy_ratio < 1.0) {
            return bad("degeneracy ratio must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ReachedEnd,
    DegeneratePoint,
    DomainExit,
    StepUnderflow,
    DriftExceeded,
    StepLimit,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ReachedEnd => "reached-end",
            StopReason::DegeneratePoint => "degenerate-point",
            StopReason::DomainExit => "domain-exit",
            StopReason::StepUnderflow => "step-underflow",
            StopReason::DriftExceeded => "drift-exceeded",
            StopReason::StepLimit => "step-limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub state: ParamState,
    /// `(u″, v″)` at this state.
    pub accel: (f64, f64),
    pub position: AmbientVector,
    pub speed_sq: f64,
    /// Conformal factor on conformal charts, Gram determinant `EG − F²` otherwise.
    pub metric_factor: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Monotone in `t` along the direction of integration.
    pub samples: Vec<Sample>,
    pub c: SpeedConstant,
    pub drift_max: f64,
    pub stop_reason: StopReason,
    /// Error that triggered a degenerate stop, if any.
    pub stop_detail: Option<String>,
}

impl Trajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn span(&self) -> (f64, f64) {
        let (a, b) = (self.first().state.t, self.last().state.t);
        (a.min(b), a.max(b))
    }

    pub fn drift(&self, s: &Sample) -> f64 {
        (s.speed_sq - self.c.0).abs() / self.c.0
    }

    pub fn min_metric_factor(&self) -> f64 {
        self.samples.iter().map(|s| s.metric_factor).fold(f64::INFINITY, f64::min)
    }
}

type Vec4 = [f64; 4];

#[inline]
fn axpy(y: &Vec4, terms: &[(f64, &Vec4)]) -> Vec4 {
    let mut out = *y;
    for (a, k) in terms {
        for i in 0..4 {
            out[i] += a * k[i];
        }
    }
    out
}

struct System<'a> {
    spec: &'a SurfaceSpec,
    kappa: &'a KappaField,
    assembly: Assembly,
}

impl System<'_> {
    fn eval(&self, t: f64, y: &Vec4) -> Result<Vec4, DynamicsError> {
        if !y.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::SingularSystem { det: f64::NAN, scale: f64::NAN });
        }
        let s = ParamState::new(t, y[0], y[1], y[2], y[3]);
        let (a, b) = match self.assembly {
            Assembly::Auto => rhs(self.spec, self.kappa, &s)?,
            Assembly::General => rhs_general(self.spec, self.kappa, &s)?,
        };
        if !(a.is_finite() && b.is_finite()) {
            return Err(DynamicsError::SingularSystem { det: f64::NAN, scale: f64::NAN });
        }
        Ok([y[2], y[3], a, b])
    }

    fn sample(&self, t: f64, y: &Vec4, dy: &Vec4) -> Result<Sample, DynamicsError> {
        let jet = self.spec.jet(y[0], y[1])?;
        let (metric_factor, speed_sq) = match self.spec.conformal(y[0], y[1]) {
            Some(cd) => (cd.f, cd.f * (y[2] * y[2] + y[3] * y[3])),
            None => {
                let (e, f, g) = first_fundamental(&jet, self.spec.signature);
                (e * g - f * f, speed_sq_from_jet(&jet, self.spec.signature, y[2], y[3]))
            }
        };
        Ok(Sample {
            state: ParamState::new(t, y[0], y[1], y[2], y[3]),
            accel: (dy[2], dy[3]),
            position: jet.s,
            speed_sq,
            metric_factor,
        })
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One attempted step: the new state, its derivative and (for DP45) the
/// weighted error norm.
fn dp45_step(sys: &System, t: f64, y: &Vec4, k1: &Vec4, h: f64, tols: (f64, f64))
    -> Result<(Vec4, Vec4, f64), DynamicsError> {
    let k2 = sys.eval(t + C2 * h, &axpy(y, &[(h * A21, k1)]))?;
    let k3 = sys.eval(t + C3 * h, &axpy(y, &[(h * A31, k1), (h * A32, &k2)]))?;
    let k4 = sys.eval(t + C4 * h, &axpy(y, &[(h * A41, k1), (h * A42, &k2), (h * A43, &k3)]))?;
    let k5 = sys.eval(
        t + C5 * h,
        &axpy(y, &[(h * A51, k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
    )?;
    let k6 = sys.eval(
        t + h,
        &axpy(y, &[(h * A61, k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)]),
    )?;
    let y_new = axpy(y, &[(h * B1, k1), (h * B3, &k3), (h * B4, &k4), (h * B5, &k5), (h * B6, &k6)]);
    let k7 = sys.eval(t + h, &y_new)?;
    let (rel, abs) = tols;
    let mut acc = 0.0;
    for i in 0..4 {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = abs + rel * y[i].abs().max(y_new[i].abs());
        acc += (e / sc) * (e / sc);
    }
    Ok((y_new, k7, (acc / 4.0).sqrt()))
}

fn rk4_step(sys: &System, t: f64, y: &Vec4, k1: &Vec4, h: f64) -> Result<(Vec4, Vec4), DynamicsError> {
    let k2 = sys.eval(t + h / 2.0, &axpy(y, &[(h / 2.0, k1)]))?;
    let k3 = sys.eval(t + h / 2.0, &axpy(y, &[(h / 2.0, &k2)]))?;
    let k4 = sys.eval(t + h, &axpy(y, &[(h, &k3)]))?;
    let y_new = axpy(y, &[(h / 6.0, k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)]);
    let dy = sys.eval(t + h, &y_new)?;
    Ok((y_new, dy))
}

/// Integrate the magnetic geodesic equation from `s0` to `cfg.t_end`.
///
/// Degenerate points, domain exits and step underflow end the trajectory with
/// the corresponding [`StopReason`]; only invalid input is an `Err`.
pub fn integrate(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    s0: ParamState,
    cfg: &IntegratorConfig,
) -> Result<Trajectory, IntegrateError> {
    cfg.validate()?;
    if !s0.is_finite() {
        return Err(IntegrateError::InvalidStart("non-finite initial state".into()));
    }
    let sys = System { spec, kappa, assembly: cfg.assembly };
    let mut y: Vec4 = [s0.u, s0.v, s0.du, s0.dv];
    let mut t = s0.t;
    let mut dy = sys.eval(t, &y).map_err(|e| IntegrateError::InvalidStart(e.to_string()))?;
    let first = sys.sample(t, &y, &dy).map_err(|e| IntegrateError::InvalidStart(e.to_string()))?;
    if !(first.speed_sq > 0.0) {
        return Err(IntegrateError::InvalidStart(format!("squared speed {} is not positive", first.speed_sq)));
    }
    let c = first.speed_sq;
    let metric0 = first.metric_factor;
    let dir = if cfg.t_end >= t { 1.0 } else { -1.0 };

    let mut traj = Trajectory {
        samples: vec![first],
        c: SpeedConstant(c),
        drift_max: 0.0,
        stop_reason: StopReason::ReachedEnd,
        stop_detail: None,
    };

    let mut h = match cfg.method {
        Method::Rk4Fixed { h } => h,
        Method::DormandPrince45 { rel_tol, abs_tol, h_max, .. } => {
            let sc: Vec<f64> = y.iter().map(|x| abs_tol + rel_tol * x.abs()).collect();
            let d0 = (0..4).map(|i| (y[i] / sc[i]).powi(2)).sum::<f64>().sqrt();
            let d1 = (0..4).map(|i| (dy[i] / sc[i]).powi(2)).sum::<f64>().sqrt();
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(h_max)
        }
    };

    let mut steps = 0usize;
    let mut last_rejected = false;
    while (cfg.t_end - t) * dir > 0.0 {
        if steps >= cfg.max_steps {
            traj.stop_reason = StopReason::StepLimit;
            break;
        }
        let remaining = (cfg.t_end - t).abs();
        let mut step = h.min(remaining);
        // avoid a sliver of a final step
        if remaining - step < 1e-3 * step {
            step = remaining;
        }
        let signed = dir * step;

        let attempt = match cfg.method {
            Method::Rk4Fixed { .. } => rk4_step(&sys, t, &y, &dy, signed).map(|(a, b)| (a, b, 0.0)),
            Method::DormandPrince45 { rel_tol, abs_tol, .. } => {
                dp45_step(&sys, t, &y, &dy, signed, (rel_tol, abs_tol))
            }
        };

        let (y_new, dy_new) = match (attempt, cfg.method) {
            (Err(e), Method::DormandPrince45 { h_min, .. }) => {
                // A stage landed on a degenerate point: retry shorter, and stop
                // once the step cannot shrink further.
                h = step * 0.25;
                last_rejected = true;
                if h < h_min {
                    traj.stop_reason = StopReason::DegeneratePoint;
                    traj.stop_detail = Some(e.to_string());
                    break;
                }
                continue;
            }
            (Err(e), Method::Rk4Fixed { .. }) => {
                traj.stop_reason = StopReason::DegeneratePoint;
                traj.stop_detail = Some(e.to_string());
                break;
            }
            (Ok((y_new, dy_new, err)), Method::DormandPrince45 { h_min, h_max, .. }) => {
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err > 1.0 || !err.is_finite() {
                    h = step * factor.min(0.9);
                    last_rejected = true;
                    if h < h_min {
                        traj.stop_reason = StopReason::StepUnderflow;
                        break;
                    }
                    continue;
                }
                h = if last_rejected { step * factor.min(1.0) } else { step * factor }.min(h_max);
                last_rejected = false;
                (y_new, dy_new)
            }
            (Ok((y_new, dy_new, _)), Method::Rk4Fixed { .. }) => (y_new, dy_new),
        };

        steps += 1;
        t = if step == remaining { cfg.t_end } else { t + signed };
        y = y_new;
        dy = dy_new;

        let mut sample = match sys.sample(t, &y, &dy) {
            Ok(s) => s,
            Err(e) => {
                traj.stop_reason = StopReason::DegeneratePoint;
                traj.stop_detail = Some(e.to_string());
                break;
            }
        };
        let drift = (sample.speed_sq - c).abs() / c;
        traj.drift_max = traj.drift_max.max(drift);
        if cfg.renormalize && sample.speed_sq > 0.0 {
            let r = (c / sample.speed_sq).sqrt();
            y[2] *= r;
            y[3] *= r;
            match sys.eval(t, &y) {
                Ok(d) => dy = d,
                Err(e) => {
                    traj.stop_reason = StopReason::DegeneratePoint;
                    traj.stop_detail = Some(e.to_string());
                    break;
                }
            }
            sample.state.du = y[2];
            sample.state.dv = y[3];
            sample.accel = (dy[2], dy[3]);
            sample.speed_sq *= r * r;
        }
        let metric = sample.metric_factor;
        traj.samples.push(sample);

        if !(metric > cfg.degeneracy_ratio * metric0) {
            traj.stop_reason = StopReason::DegeneratePoint;
            traj.stop_detail = Some(format!("metric factor {metric:e} below threshold"));
            break;
        }
        if !spec.domain.contains(y[0], y[1]) {
            traj.stop_reason = StopReason::DomainExit;
            break;
        }
        if cfg.max_drift.is_some_and(|m| drift > m) {
            traj.stop_reason = StopReason::DriftExceeded;
            break;
        }
    }
    Ok(traj)
}

/// Index `i` with `t` between samples `i` and `i + 1`.
fn bracket(traj: &Trajectory, t: f64) -> Result<usize, IntegrateError> {
    let (lo, hi) = traj.span();
    if !(t >= lo && t <= hi) {
        return Err(IntegrateError::OutOfSpan { t, lo, hi });
    }
    let n = traj.samples.len();
    if n == 1 {
        return Ok(0);
    }
    let forward = traj.last().state.t >= traj.first().state.t;
    // first index whose time is past t in the direction of integration
    let idx = traj
        .samples
        .partition_point(|s| if forward { s.state.t <= t } else { s.state.t >= t });
    Ok(idx.clamp(1, n - 1) - 1)
}

#[inline]
fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, s: f64) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y0
        + (s3 - 2.0 * s2 + s) * h * d0
        + (-2.0 * s3 + 3.0 * s2) * y1
        + (s3 - s2) * h * d1
}

/// State at time `t` by cubic Hermite interpolation over the bracketing step.
pub fn dense_eval(traj: &Trajectory, t: f64) -> Result<ParamState, IntegrateError> {
    let i = bracket(traj, t)?;
    let a = &traj.samples[i];
    if a.state.t == t || traj.samples.len() == 1 {
        return Ok(a.state);
    }
    let b = &traj.samples[i + 1];
    if b.state.t == t {
        return Ok(b.state);
    }
    let h = b.state.t - a.state.t;
    let s = (t - a.state.t) / h;
    let (p, q) = (&a.state, &b.state);
    Ok(ParamState {
        t,
        u: hermite(p.u, p.du, q.u, q.du, h, s),
        v: hermite(p.v, p.dv, q.v, q.dv, h, s),
        du: hermite(p.du, a.accel.0, q.du, b.accel.0, h, s),
        dv: hermite(p.dv, a.accel.1, q.dv, b.accel.1, h, s),
    })
}

/// Times where `predicate` changes sign along the trajectory, located by
/// bisection on the dense output to `|Δt| ≤ 1e-12`.
///
/// Sample values within `1e-12 · (1 + max |p|)` of zero count as zero and
/// never start a crossing on their own, so predicates that vanish
/// identically along the curve report no isolated roots.
pub fn locate_event<F>(traj: &Trajectory, predicate: F) -> Vec<f64>
where
    F: Fn(&ParamState) -> f64,
{
    let values: Vec<f64> = traj.samples.iter().map(|s| predicate(&s.state)).collect();
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero_tol = 1e-12 * (1.0 + peak);
    let sign = |x: f64| if x.abs() <= zero_tol { 0 } else if x > 0.0 { 1 } else { -1 };

    let mut roots = Vec::new();
    let mut prev: Option<(usize, i32)> = None;
    for (i, &val) in values.iter().enumerate() {
        let sg = sign(val);
        if sg == 0 {
            continue;
        }
        if let Some((j, ps)) = prev {
            if ps != sg {
                let (mut lo, mut hi) = (traj.samples[j].state.t, traj.samples[i].state.t);
                let mut slo = ps;
                while (hi - lo).abs() > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    let Ok(s) = dense_eval(traj, mid) else { break };
                    let sm = if predicate(&s) > 0.0 { 1 } else { -1 };
                    if sm == slo {
                        lo = mid;
                        slo = sm;
                    } else {
                        hi = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
        }
        prev = Some((i, sg));
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn sphere() -> SurfaceSpec {
        SurfaceSpec::by_name("sphere").unwrap()
    }

    fn equator(t_end: f64) -> Trajectory {
        integrate(
            &sphere(),
            &KappaField::Zero,
            ParamState::new(0.0, 0.0, 0.0, 0.0, 1.0),
            &IntegratorConfig::default().with_t_end(t_end),
        )
        .unwrap()
    }

    #[test]
    fn equator_closes_after_two_pi() {
        let tr = equator(TAU);
        assert_eq!(tr.stop_reason, StopReason::ReachedEnd);
        let s = tr.last().state;
        assert_eq!(s.t, TAU);
        assert!(s.u.abs() < 1e-12 && (s.v - TAU).abs() < 1e-10);
        assert!(s.du.abs() < 1e-12 && (s.dv - 1.0).abs() < 1e-12);
        assert!(tr.samples.windows(2).all(|w| w[1].state.t > w[0].state.t));
    }

    #[test]
    fn latitude_circle_is_preserved() {
        let u0: f64 = 0.3;
        let tr = integrate(
            &sphere(),
            &KappaField::Constant(u0.tan()),
            ParamState::new(0.0, u0, 0.0, 0.0, 1.0 / u0.cos()),
            &IntegratorConfig::default().with_t_end(50.0),
        )
        .unwrap();
        let dev = tr.samples.iter().map(|s| (s.state.u - u0).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-8, "{dev}");
        // identically-zero predicate: no isolated roots
        assert!(locate_event(&tr, |s| s.u - u0).is_empty());
    }

    #[test]
    fn dense_output_and_events_on_equator() {
        let tr = equator(TAU);
        let s = dense_eval(&tr, PI).unwrap();
        assert!(s.u.abs() < 1e-8 && (s.v - PI).abs() < 1e-8 && (s.dv - 1.0).abs() < 1e-8);
        let k = tr.samples.len() / 2;
        assert_eq!(dense_eval(&tr, tr.samples[k].state.t).unwrap(), tr.samples[k].state);
        assert!(matches!(dense_eval(&tr, 7.0), Err(IntegrateError::OutOfSpan { .. })));
        assert!(matches!(dense_eval(&tr, -0.1), Err(IntegrateError::OutOfSpan { .. })));
        let roots = locate_event(&tr, |s| s.v - PI);
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - PI).abs() < 1e-10);
        assert!(locate_event(&tr, |_| 1.0).is_empty());
    }

    #[test]
    fn rk4_is_fourth_order() {
        // latitude u0 = 0.5 geodesic started eastward: compare against a fine DP45 run
        let s0 = ParamState::new(0.0, 0.5, 0.0, 0.0, 1.0 / 0.5f64.cos());
        let reference = integrate(
            &sphere(),
            &KappaField::Zero,
            s0,
            &IntegratorConfig {
                method: Method::DormandPrince45 { rel_tol: 1e-13, abs_tol: 1e-15, h_min: 1e-14, h_max: 0.01 },
                ..IntegratorConfig::default().with_t_end(2.0)
            },
        )
        .unwrap()
        .last()
        .state;
        let err = |h: f64| {
            let s = integrate(
                &sphere(),
                &KappaField::Zero,
                s0,
                &IntegratorConfig { method: Method::Rk4Fixed { h }, ..IntegratorConfig::default().with_t_end(2.0) },
            )
            .unwrap()
            .last()
            .state;
            ((s.u - reference.u).powi(2) + (s.v - reference.v).powi(2)).sqrt()
        };
        let (e1, e2, e3) = (err(0.1), err(0.05), err(0.025));
        for ratio in [e1 / e2, e2 / e3] {
            assert!(ratio > 8.0 && ratio < 32.0, "{e1} {e2} {e3}");
        }
    }

    #[test]
    fn forward_then_backward_returns() {
        let spec = SurfaceSpec::by_name("clifford-torus").unwrap();
        let k = KappaField::SinU(0.7);
        let s0 = ParamState::new(0.0, 0.4, 0.1, 0.6, 0.35);
        let cfg = IntegratorConfig::default();
        let fwd = integrate(&spec, &k, s0, &cfg.with_t_end(8.0)).unwrap();
        let back = integrate(&spec, &k, fwd.last().state, &cfg.with_t_end(0.0)).unwrap();
        assert_eq!(back.stop_reason, StopReason::ReachedEnd);
        let e = back.last().state;
        assert_eq!(e.t, 0.0);
        for (a, b) in [(e.u, s0.u), (e.v, s0.v), (e.du, s0.du), (e.dv, s0.dv)] {
            assert!((a - b).abs() < 1e-7, "{a} {b}");
        }
        assert!(back.samples.windows(2).all(|w| w[1].state.t < w[0].state.t));
        // dense output works on a backward trajectory as well
        let mid = dense_eval(&back, 4.0).unwrap();
        let fmid = dense_eval(&fwd, 4.0).unwrap();
        assert!((mid.u - fmid.u).abs() < 1e-7);
    }

    #[test]
    fn stops_at_domain_boundary_and_singular_circle() {
        let cat = SurfaceSpec::by_name("catenoid").unwrap();
        let tr = integrate(
            &cat,
            &KappaField::Zero,
            ParamState::new(0.0, 0.0, 0.0, 1.0, 0.0),
            &IntegratorConfig::default().with_t_end(100.0),
        )
        .unwrap();
        assert_eq!(tr.stop_reason, StopReason::DomainExit);

        let me = SurfaceSpec::by_name("maximal-enneper").unwrap();
        let tr = integrate(
            &me,
            &KappaField::Zero,
            ParamState::new(0.0, 0.5, 0.0, 1.0, 0.0),
            &IntegratorConfig::default().with_t_end(100.0),
        )
        .unwrap();
        assert_eq!(tr.stop_reason, StopReason::DegeneratePoint);
        assert!(tr.last().metric_factor <= 1e-10 * tr.first().metric_factor);
        // the speed identity c = (u′² + v′²) f holds up to the end
        assert!(tr.drift_max < 1e-6, "{}", tr.drift_max);
    }

    #[test]
    fn invalid_inputs_are_errors() {
        let cfg = IntegratorConfig {
            method: Method::DormandPrince45 { rel_tol: -1.0, abs_tol: 1e-12, h_min: 1e-13, h_max: 0.1 },
            ..IntegratorConfig::default()
        };
        let s0 = ParamState::new(0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(integrate(&sphere(), &KappaField::Zero, s0, &cfg), Err(IntegrateError::InvalidConfig(_))));
        let still = ParamState::new(0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            integrate(&sphere(), &KappaField::Zero, still, &IntegratorConfig::default()),
            Err(IntegrateError::InvalidStart(_))
        ));
    }

    #[test]
    fn renormalization_restores_speed() {
        let cfg = IntegratorConfig {
            method: Method::Rk4Fixed { h: 0.2 },
            renormalize: true,
            ..IntegratorConfig::default().with_t_end(20.0)
        };
        let tr = integrate(&sphere(), &KappaField::SinU(1.0), ParamState::new(0.0, 0.2, 0.0, 0.3, 0.9), &cfg).unwrap();
        for s in &tr.samples {
            assert!((s.speed_sq - tr.c.0).abs() < 1e-12);
        }
        assert!(tr.drift_max > 0.0);
    }
}

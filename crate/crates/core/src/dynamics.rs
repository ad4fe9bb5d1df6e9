//! The magnetic geodesic equation resolved to explicit second derivatives.
//!
//! Both assemblies solve a 2×2 linear system for `(u″, v″)`. The rows are the
//! projections of the equation onto `γ′` (constant speed) and onto
//! `γ′ × n / |n|` (prescribed curvature, `⟨γ″, γ′ × n⟩ / |n| = κ |γ′|²`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::{cross, dot, norm, AmbientVector, Signature};
use crate::surfaces::{first_fundamental, normal, KappaField, SurfaceError, SurfaceJet, SurfaceSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("singular system (|det| = {det:e}, scale = {scale:e}): degenerate or lightlike point")]
    SingularSystem { det: f64, scale: f64 },
    #[error("conformal factor {f:e} vanishes")]
    ConformalDegenerate { f: f64 },
    #[error("surface `{0}` has no conformal metadata")]
    NotConformal(String),
    #[error("zero velocity")]
    ZeroVelocity,
}

/// Integration state in parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamState {
    pub t: f64,
    pub u: f64,
    pub v: f64,
    pub du: f64,
    pub dv: f64,
}

impl ParamState {
    pub fn new(t: f64, u: f64, v: f64, du: f64, dv: f64) -> Self {
        Self { t, u, v, du, dv }
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.u, self.v, self.du, self.dv].iter().all(|x| x.is_finite())
    }

    pub fn with_velocity(self, du: f64, dv: f64) -> Self {
        Self { du, dv, ..self }
    }
}

/// Squared speed `|γ′|²`, conserved along every magnetic geodesic.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeedConstant(pub f64);

/// `γ′ = S_u u′ + S_v v′`
#[inline]
pub fn ambient_velocity(jet: &SurfaceJet, du: f64, dv: f64) -> AmbientVector {
    du * jet.su + dv * jet.sv
}

/// `S_uu u′² + 2 S_uv u′v′ + S_vv v′²`, the part of `γ″` not involving `(u″, v″)`.
#[inline]
fn quadratic_part(jet: &SurfaceJet, du: f64, dv: f64) -> AmbientVector {
    (du * du) * jet.suu + (2.0 * du * dv) * jet.suv + (dv * dv) * jet.svv
}

#[inline]
pub fn ambient_acceleration(jet: &SurfaceJet, du: f64, dv: f64, ddu: f64, ddv: f64) -> AmbientVector {
    quadratic_part(jet, du, dv) + ddu * jet.su + ddv * jet.sv
}

/// `E u′² + 2F u′v′ + G v′²` from a precomputed jet.
#[inline]
pub fn speed_sq_from_jet(jet: &SurfaceJet, sig: Signature, du: f64, dv: f64) -> f64 {
    let (e, f, g) = first_fundamental(jet, sig);
    e * du * du + 2.0 * f * du * dv + g * dv * dv
}

/// Squared speed of a state.
///
/// On conformal charts this is `f (u′² + v′²)` with the closed-form factor,
/// which stays accurate where the ambient dot products cancel.
pub fn speed_sq(spec: &SurfaceSpec, s: &ParamState) -> Result<f64, SurfaceError> {
    if let Some(cd) = spec.conformal(s.u, s.v) {
        return Ok(cd.f * (s.du * s.du + s.dv * s.dv));
    }
    Ok(speed_sq_from_jet(&spec.jet(s.u, s.v)?, spec.signature, s.du, s.dv))
}

/// General assembly from the surface jet; valid for any immersed,
/// non-lightlike chart point.
pub fn rhs_general(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    s: &ParamState,
) -> Result<(f64, f64), DynamicsError> {
    let jet = spec.jet(s.u, s.v)?;
    rhs_general_jet(&jet, spec.signature, kappa.eval(s.u, s.v), s.du, s.dv)
}

pub(crate) fn rhs_general_jet(
    jet: &SurfaceJet,
    sig: Signature,
    kappa: f64,
    du: f64,
    dv: f64,
) -> Result<(f64, f64), DynamicsError> {
    if du == 0.0 && dv == 0.0 {
        return Err(DynamicsError::ZeroVelocity);
    }
    let n = normal(jet, sig)?;
    let n_len = norm(sig, n);
    let vel = ambient_velocity(jet, du, dv);
    let q = quadratic_part(jet, du, dv);
    let c = dot(sig, vel, vel);
    let w = cross(sig, vel, n);

    let (a11, a12, b1) = (dot(sig, jet.su, vel), dot(sig, jet.sv, vel), -dot(sig, q, vel));
    let (a21, a22) = (dot(sig, jet.su, w), dot(sig, jet.sv, w));
    let b2 = kappa * c * n_len - dot(sig, q, w);

    let det = a11 * a22 - a12 * a21;
    let m = jet.su.euclidean_norm().max(jet.sv.euclidean_norm());
    let scale = m.powi(4) * vel.euclidean_norm().powi(2);
    if !(det.abs() >= 1e-12 * scale) || !det.is_finite() {
        return Err(DynamicsError::SingularSystem { det, scale });
    }
    Ok(((b1 * a22 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det))
}

/// Conformal fast path for charts with `F = 0`, `E = G = f`.
pub fn rhs_conformal(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    s: &ParamState,
) -> Result<(f64, f64), DynamicsError> {
    let cd = spec
        .conformal(s.u, s.v)
        .ok_or_else(|| DynamicsError::NotConformal(spec.name.clone()))?;
    if !(cd.f > 1e-14) {
        return Err(DynamicsError::ConformalDegenerate { f: cd.f });
    }
    let (du, dv) = (s.du, s.dv);
    let v2 = du * du + dv * dv;
    if v2 == 0.0 {
        return Err(DynamicsError::ZeroVelocity);
    }
    let c = cd.f * v2;
    // In R^{2,1} the double cross product γ′ × (S_u × S_v) carries the opposite
    // sign, so the curvature term enters with κ ↦ −κ.
    let k = spec.signature.time_sign() * kappa.eval(s.u, s.v);
    let q0 = -v2 * (cd.fu * du + cd.fv * dv) / (2.0 * cd.f);
    let p = (c * k + du.powi(3) * cd.sv_suu - dv.powi(3) * cd.su_svv + 0.5 * du * du * dv * cd.fu
        - 0.5 * dv * dv * du * cd.fv)
        / cd.f;
    Ok(((p * dv + q0 * du) / v2, (q0 * dv - p * du) / v2))
}

/// Conformal path when metadata exists, general assembly otherwise.
pub fn rhs(spec: &SurfaceSpec, kappa: &KappaField, s: &ParamState) -> Result<(f64, f64), DynamicsError> {
    if spec.is_conformal() {
        rhs_conformal(spec, kappa, s)
    } else {
        rhs_general(spec, kappa, s)
    }
}

/// `⟨γ″, γ′ × n⟩ / (|n| c) − κ`; zero along exact solutions.
pub fn kappa_residual(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    s: &ParamState,
    ddu: f64,
    ddv: f64,
) -> Result<f64, DynamicsError> {
    let sig = spec.signature;
    let jet = spec.jet(s.u, s.v)?;
    let n = normal(&jet, sig)?;
    let vel = ambient_velocity(&jet, s.du, s.dv);
    let acc = ambient_acceleration(&jet, s.du, s.dv, ddu, ddv);
    let c = dot(sig, vel, vel);
    Ok(dot(sig, acc, cross(sig, vel, n)) / (norm(sig, n) * c) - kappa.eval(s.u, s.v))
}

/// Velocity `(u′, v′)` with squared speed `speed²` heading at angle `theta`
/// from `S_u` in an orthonormal tangent frame `(S_u, S_v − (F/E) S_u)`.
pub fn velocity_from_heading(
    spec: &SurfaceSpec,
    u: f64,
    v: f64,
    theta: f64,
    speed: f64,
) -> Result<(f64, f64), DynamicsError> {
    let jet = spec.jet(u, v)?;
    let (e, f, g) = first_fundamental(&jet, spec.signature);
    let gram = e * g - f * f;
    if !(e > 0.0 && gram > 0.0) {
        return Err(DynamicsError::SingularSystem { det: gram, scale: 1.0 });
    }
    let b = speed * theta.sin() / (gram / e).sqrt();
    let a = speed * theta.cos() / e.sqrt() - b * f / e;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::catalog;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::SQRT_2;

    fn st(u: f64, v: f64, du: f64, dv: f64) -> ParamState {
        ParamState::new(0.0, u, v, du, dv)
    }

    #[test]
    fn sphere_equator_is_geodesic() {
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        let (a, b) = rhs_general(&sph, &KappaField::Zero, &st(0.0, 0.0, 0.0, 1.0)).unwrap();
        assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
    }

    #[test]
    fn sphere_latitude_circle() {
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        let u0: f64 = 0.3;
        let k = KappaField::Constant(u0.tan());
        let (a, b) = rhs_general(&sph, &k, &st(u0, 0.0, 0.0, 1.0 / u0.cos())).unwrap();
        assert!(a.abs() < 1e-14 && b.abs() < 1e-14, "{a} {b}");
    }

    #[test]
    fn torus_outer_equator_is_geodesic() {
        let tor = SurfaceSpec::by_name("clifford-torus").unwrap();
        let (a, b) =
            rhs_general(&tor, &KappaField::Zero, &st(0.0, 0.0, 0.0, 1.0 / (SQRT_2 + 1.0))).unwrap();
        assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
    }

    #[test]
    fn conformal_examples() {
        let cat = SurfaceSpec::by_name("catenoid").unwrap();
        assert_eq!(rhs_conformal(&cat, &KappaField::Zero, &st(0.0, 0.0, 0.0, 1.0)).unwrap(), (0.0, 0.0));
        let enn = SurfaceSpec::by_name("enneper").unwrap();
        assert_eq!(rhs_conformal(&enn, &KappaField::Zero, &st(0.0, 0.0, 1.0, 0.0)).unwrap(), (0.0, 0.0));
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        assert!(matches!(
            rhs_conformal(&sph, &KappaField::Zero, &st(0.0, 0.0, 1.0, 0.0)),
            Err(DynamicsError::NotConformal(_))
        ));
    }

    #[test]
    fn conformal_first_row_residual_is_exact() {
        let enn = SurfaceSpec::by_name("enneper").unwrap();
        let s = st(0.4, -0.7, 1.3, 0.2);
        let (a, b) = rhs_conformal(&enn, &KappaField::Constant(0.8), &s).unwrap();
        let cd = enn.conformal(s.u, s.v).unwrap();
        let v2 = s.du * s.du + s.dv * s.dv;
        let q0 = -v2 * (cd.fu * s.du + cd.fv * s.dv) / (2.0 * cd.f);
        assert!((s.du * a + s.dv * b - q0).abs() < 1e-12 * (1.0 + q0.abs()));
    }

    #[test]
    fn maximal_enneper_singular_circle_is_rejected() {
        let me = SurfaceSpec::by_name("maximal-enneper").unwrap();
        let s = st(1.0, 0.0, 1.0, 0.3);
        assert!(matches!(
            rhs_conformal(&me, &KappaField::Zero, &s),
            Err(DynamicsError::ConformalDegenerate { .. })
        ));
        assert!(rhs_general(&me, &KappaField::Zero, &s).is_err());
        assert_eq!(
            rhs_general(&me, &KappaField::Zero, &st(0.2, 0.1, 0.0, 0.0)),
            Err(DynamicsError::ZeroVelocity)
        );
    }

    #[test]
    fn speed_sq_examples() {
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        assert_eq!(speed_sq(&sph, &st(0.0, 0.0, 0.0, 1.0)).unwrap(), 1.0);
        let cat = SurfaceSpec::by_name("catenoid").unwrap();
        assert_eq!(speed_sq(&cat, &st(0.0, 0.0, 1.0, 0.0)).unwrap(), 1.0);
        let s = st(0.3, 1.1, 0.4, -0.9);
        let l = 2.5;
        let scaled = speed_sq(&sph, &s.with_velocity(l * s.du, l * s.dv)).unwrap();
        assert!((scaled - l * l * speed_sq(&sph, &s).unwrap()).abs() < 1e-14);
    }

    fn random_state(rng: &mut ChaCha8Rng) -> ParamState {
        st(
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        )
    }

    #[test]
    fn residual_vanishes_and_is_linear_in_kappa() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for spec in catalog() {
            for _ in 0..200 {
                let s = random_state(&mut rng);
                if spec.name == "maximal-enneper" && (s.u.hypot(s.v) - 1.0).abs() < 0.05 {
                    continue;
                }
                if spec.name == "cycloid-rev" && s.u.abs() < 0.05 {
                    continue;
                }
                let k = KappaField::SinU(rng.gen_range(-2.0..2.0));
                let (a, b) = rhs_general(&spec, &k, &s).unwrap();
                let r = kappa_residual(&spec, &k, &s, a, b).unwrap();
                assert!(r.abs() <= 1e-10 * (1.0 + k.eval(s.u, s.v).abs()), "{} {r}", spec.name);
                let shifted = KappaField::Constant(k.eval(s.u, s.v) + 1.0);
                let r1 = kappa_residual(&spec, &shifted, &s, a, b).unwrap();
                assert!((r1 + 1.0).abs() <= 1e-9);
                // tangency: ⟨γ″, γ′⟩ = 0
                let jet = spec.jet(s.u, s.v).unwrap();
                let vel = ambient_velocity(&jet, s.du, s.dv);
                let acc = ambient_acceleration(&jet, s.du, s.dv, a, b);
                let t = dot(spec.signature, acc, vel);
                assert!(t.abs() <= 1e-10 * acc.euclidean_norm() * vel.euclidean_norm() + 1e-14);
            }
        }
    }

    #[test]
    fn conformal_and_general_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for name in ["catenoid", "enneper", "maximal-enneper"] {
            let spec = SurfaceSpec::by_name(name).unwrap();
            for _ in 0..1000 {
                let s = random_state(&mut rng);
                if name == "maximal-enneper" && (s.u.hypot(s.v) - 1.0).abs() < 0.05 {
                    continue;
                }
                let k = KappaField::Constant(rng.gen_range(-2.0..2.0));
                let g = rhs_general(&spec, &k, &s).unwrap();
                let c = rhs_conformal(&spec, &k, &s).unwrap();
                let scale = 1.0 + g.0.abs().max(g.1.abs());
                assert!((g.0 - c.0).abs() <= 1e-9 * scale, "{name} {g:?} {c:?}");
                assert!((g.1 - c.1).abs() <= 1e-9 * scale, "{name} {g:?} {c:?}");
            }
        }
    }

    #[test]
    fn velocity_scaling_law() {
        // κ = 0: purely quadratic in velocity
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        let s = st(0.4, 0.2, 0.7, -0.3);
        let one = rhs_general(&sph, &KappaField::Zero, &s).unwrap();
        let two = rhs_general(&sph, &KappaField::Zero, &s.with_velocity(2.0 * s.du, 2.0 * s.dv)).unwrap();
        assert!((two.0 - 4.0 * one.0).abs() < 1e-12 && (two.1 - 4.0 * one.1).abs() < 1e-12);
        // flat plane: purely linear in velocity
        let plane = SurfaceSpec::plane();
        let k = KappaField::Constant(1.3);
        let one = rhs_general(&plane, &k, &s).unwrap();
        let two = rhs_general(&plane, &k, &s.with_velocity(2.0 * s.du, 2.0 * s.dv)).unwrap();
        assert!((two.0 - 2.0 * one.0).abs() < 1e-12 && (two.1 - 2.0 * one.1).abs() < 1e-12);
    }

    #[test]
    fn heading_velocity_has_requested_speed() {
        let enn = SurfaceSpec::by_name("enneper").unwrap();
        let (du, dv) = velocity_from_heading(&enn, 0.3, -0.5, 1.1, 0.7).unwrap();
        let c = speed_sq(&enn, &st(0.3, -0.5, du, dv)).unwrap();
        assert!((c - 0.49).abs() < 1e-14);
    }
}

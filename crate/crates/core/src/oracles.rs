//! Independent reference computations used by the validation battery.
//!
//! None of these are on the production path. They re-derive the same dynamics
//! by a different algebraic route so the jet-based assembly can be checked
//! against them.

use crate::ambient::{cross, dot, Signature};
use crate::dynamics::ParamState;
use crate::surfaces::{KappaField, SurfaceError, SurfaceSpec};

/// Residual of the fully expanded curvature identity
/// `c |S_u × S_v| κ = (u″v′ − v″u′)(EG − F²) + (cubic velocity terms)`,
/// relative to the magnitude of its terms. Euclidean charts only.
pub fn expanded_curvature_residual(
    spec: &SurfaceSpec,
    kappa: &KappaField,
    s: &ParamState,
    ddu: f64,
    ddv: f64,
) -> Result<f64, SurfaceError> {
    let sig = Signature::Euclidean;
    let j = spec.jet(s.u, s.v)?;
    let d = |a, b| dot(sig, a, b);
    let (up, vp) = (s.du, s.dv);
    let (e, f, g) = (d(j.su, j.su), d(j.su, j.sv), d(j.sv, j.sv));
    let c = e * up * up + g * vp * vp + 2.0 * f * up * vp;
    let lhs = c * cross(sig, j.su, j.sv).euclidean_norm() * kappa.eval(s.u, s.v);

    let terms = [
        (ddu * vp - ddv * up) * (g * e - f * f),
        up.powi(3) * (f * d(j.suu, j.su) - e * d(j.sv, j.suu)),
        vp.powi(3) * (g * d(j.svv, j.su) - f * d(j.sv, j.svv)),
        up * up * vp
            * (g * d(j.suu, j.su) - f * d(j.suu, j.sv) + 2.0 * f * d(j.suv, j.su)
                - 2.0 * e * d(j.suv, j.sv)),
        vp * vp * up
            * (f * d(j.su, j.svv) - e * d(j.svv, j.sv) + 2.0 * d(j.su, j.suv) * g
                - 2.0 * f * d(j.suv, j.sv)),
    ];
    let rhs: f64 = terms.iter().sum();
    let scale = lhs.abs() + terms.iter().map(|t| t.abs()).sum::<f64>();
    Ok((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE))
}

/// Second derivatives on the unit sphere `(cos u cos v, cos u sin v, sin u)`
/// from the Levi-Civita connection of `du² + cos²u dv²`:
///
/// `u″ = −sin u cos u v′² + κ cos u v′`, `v″ = 2 tan u u′v′ − κ u′ / cos u`.
///
/// The κ terms are the coordinates of `κ (γ′ × n)/|n|` with `n = S_u × S_v`.
pub fn sphere_intrinsic_rhs(kappa: f64, u: f64, du: f64, dv: f64) -> (f64, f64) {
    let (s, c) = u.sin_cos();
    (-s * c * dv * dv + kappa * c * dv, 2.0 * (s / c) * du * dv - kappa * du / c)
}

/// Classical RK4 on [`sphere_intrinsic_rhs`] with fixed step `h`; returns
/// the state at each multiple of `h` up to `t_end`.
pub fn integrate_sphere_intrinsic(
    kappa: &KappaField,
    s0: ParamState,
    t_end: f64,
    h: f64,
) -> Vec<ParamState> {
    let f = |y: [f64; 4]| {
        let (a, b) = sphere_intrinsic_rhs(kappa.eval(y[0], y[1]), y[0], y[2], y[3]);
        [y[2], y[3], a, b]
    };
    let axpy = |y: [f64; 4], k: [f64; 4], a: f64| {
        [y[0] + a * k[0], y[1] + a * k[1], y[2] + a * k[2], y[3] + a * k[3]]
    };
    let n = ((t_end - s0.t) / h).round() as usize;
    let mut y = [s0.u, s0.v, s0.du, s0.dv];
    let mut out = Vec::with_capacity(n + 1);
    out.push(s0);
    for i in 1..=n {
        let k1 = f(y);
        let k2 = f(axpy(y, k1, h / 2.0));
        let k3 = f(axpy(y, k2, h / 2.0));
        let k4 = f(axpy(y, k3, h));
        for m in 0..4 {
            y[m] += h / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
        }
        out.push(ParamState::new(s0.t + i as f64 * h, y[0], y[1], y[2], y[3]));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rhs_general;
    use crate::surfaces::catalog;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expansion_matches_general_assembly() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for spec in catalog().into_iter().filter(|s| s.signature == Signature::Euclidean) {
            for _ in 0..300 {
                let s = ParamState::new(
                    0.0,
                    rng.gen_range(0.1..1.3),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                    rng.gen_range(-2.0..2.0),
                );
                let k = KappaField::Constant(rng.gen_range(-2.0..2.0));
                let (a, b) = rhs_general(&spec, &k, &s).unwrap();
                let r = expanded_curvature_residual(&spec, &k, &s, a, b).unwrap();
                assert!(r <= 1e-9, "{}: {r}", spec.name);
                // a wrong κ must show up
                let r_bad = expanded_curvature_residual(&spec, &k.scaled(-1.0), &s, a, b).unwrap();
                if k.eval(0.0, 0.0).abs() > 0.1 {
                    assert!(r_bad > 1e-3, "{}", spec.name);
                }
            }
        }
    }

    #[test]
    fn intrinsic_rhs_matches_general_on_sphere() {
        let sph = SurfaceSpec::by_name("sphere").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..500 {
            let s = ParamState::new(
                0.0,
                rng.gen_range(-1.3..1.3),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
            );
            let k = rng.gen_range(-2.0..2.0);
            let (a, b) = rhs_general(&sph, &KappaField::Constant(k), &s).unwrap();
            let (ai, bi) = sphere_intrinsic_rhs(k, s.u, s.du, s.dv);
            let scale = 1.0 + a.abs() + b.abs();
            assert!((a - ai).abs() < 1e-11 * scale && (b - bi).abs() < 1e-11 * scale);
        }
    }
}

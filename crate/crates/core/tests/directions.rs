use std::f64::consts::{PI, TAU};

use magnetic_geodesics::singular::{admissible_directions, LightlikePointData};
use proptest::prelude::*;

fn circ(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

fn hessian() -> impl Strategy<Value = (f64, f64, f64)> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_filter("non-flat", |h| h.0.abs() + h.1.abs() + h.2.abs() > 1e-3)
}

proptest! {
    #[test]
    fn count_and_antipodes(g in 0.0..TAU, h in hessian()) {
        let r = admissible_directions(&LightlikePointData::new((0.0, 0.0), (g.cos(), g.sin()), h).unwrap()).unwrap();
        prop_assert!(r.angles.len() <= 6 && r.angles.len() % 2 == 0);
        prop_assert!(r.angles.iter().all(|&a| (0.0..TAU).contains(&a)));
        for &a in &r.angles {
            prop_assert!(r.angles.iter().any(|&b| circ(a + PI, b) < 1e-9));
        }
        for &l in &r.lightlike_pair {
            prop_assert!(r.angles.iter().any(|&a| circ(a, l) < 1e-9));
        }
    }

    /// Rotating the frame rotates the directions.
    #[test]
    fn frame_covariance(g in 0.0..TAU, h in hessian(), rot in 0.0..TAU) {
        let base = admissible_directions(&LightlikePointData::new((0.0, 0.0), (g.cos(), g.sin()), h).unwrap()).unwrap();
        // f̃(x) = f(R_rot⁻¹ x): gradient rotates by rot, Hessian by R H Rᵀ
        let (c, s) = (rot.cos(), rot.sin());
        let (a, b, d) = h;
        let hr = (
            c * c * a - 2.0 * c * s * b + s * s * d,
            c * s * (a - d) + (c * c - s * s) * b,
            s * s * a + 2.0 * c * s * b + c * c * d,
        );
        let turned = admissible_directions(&LightlikePointData::new((0.0, 0.0), ((g + rot).cos(), (g + rot).sin()), hr).unwrap()).unwrap();
        prop_assert_eq!(base.angles.len(), turned.angles.len());
        for &a in &base.angles {
            prop_assert!(turned.angles.iter().any(|&t| circ(a + rot, t) < 1e-7), "{:?} vs {:?}", base.angles, turned.angles);
        }
    }

    /// Scaling the Hessian does not move the directions.
    #[test]
    fn scale_invariance(g in 0.0..TAU, h in hessian(), k in 0.1..10.0f64) {
        let p = |hh| admissible_directions(&LightlikePointData::new((0.0, 0.0), (g.cos(), g.sin()), hh).unwrap()).unwrap();
        let (a, b) = (p(h), p((k * h.0, k * h.1, k * h.2)));
        prop_assert_eq!(a.angles.len(), b.angles.len());
        for (x, y) in a.angles.iter().zip(&b.angles) {
            prop_assert!(circ(*x, *y) < 1e-9);
        }
    }
}

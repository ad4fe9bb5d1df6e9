use magnetic_geodesics::closure::{find_self_intersections, segment_crossings, segment_hit};
use magnetic_geodesics::integrate::integrate;
use magnetic_geodesics::{IntegratorConfig, KappaField, ParamState, SurfaceSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(points: &[(f64, f64)]) -> Vec<(usize, usize)> {
    let n = points.len();
    let mut out = Vec::new();
    for i in 0..n - 1 {
        for j in i + 2..n - 1 {
            if segment_hit(points[i], points[i + 1], points[j], points[j + 1]).is_some() {
                out.push((i, j));
            }
        }
    }
    out
}

#[test]
fn grid_search_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.gen_range(5..60);
        let mut p = (0.0, 0.0);
        let mut heading: f64 = rng.gen_range(0.0..6.3);
        let mut points = vec![p];
        for _ in 0..n {
            heading += rng.gen_range(-1.2..1.2);
            let step = rng.gen_range(0.05..0.5);
            p = (p.0 + step * heading.cos(), p.1 + step * heading.sin());
            points.push(p);
        }
        let mut fast: Vec<(usize, usize)> = segment_crossings(&points, &[None, None]).iter().map(|h| (h.i, h.j)).collect();
        fast.sort_unstable();
        fast.dedup();
        assert_eq!(fast, brute_force(&points));
    }
}

#[test]
fn planar_figure_eight_crosses_once_per_lap() {
    // lemniscate of Gerono, one lap
    let n = 400;
    let points: Vec<(f64, f64)> = (0..=n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64 + 0.3;
            (t.sin(), t.sin() * t.cos())
        })
        .collect();
    let hits = segment_crossings(&points, &[None, None]);
    assert_eq!(hits.len(), 1, "{hits:?}");
    let h = hits[0];
    let a = points[h.i];
    let b = points[h.i + 1];
    let x = (a.0 + h.alpha * (b.0 - a.0), a.1 + h.alpha * (b.1 - a.1));
    assert!(x.0.abs() < 1e-3 && x.1.abs() < 1e-3);
}

#[test]
fn plane_circle_is_one_tangential_retrace() {
    // constant κ in the plane gives a circle retraced tangentially
    let plane = SurfaceSpec::plane();
    let tr = integrate(
        &plane,
        &KappaField::Constant(1.0),
        ParamState::new(0.0, 0.0, 0.0, 1.0, 0.0),
        &IntegratorConfig::default().with_t_end(1.5 * std::f64::consts::TAU),
    )
    .unwrap();
    let xs = find_self_intersections(&plane, &tr).unwrap();
    assert_eq!(xs.len(), 1, "{xs:?}");
    assert_eq!(xs[0].orientation, 0);
    assert!((xs[0].t2 - xs[0].t1 - std::f64::consts::TAU).abs() < 1e-8);
}

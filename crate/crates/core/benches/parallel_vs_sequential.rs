use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use magnetic_geodesics::closure::{shoot, ShootConfig, ShootingFamily};
use magnetic_geodesics::par::{self, ExecMode};
use magnetic_geodesics::singular::{approach_fan_experiment, FanConfig};
use magnetic_geodesics::{KappaField, SurfaceSpec};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn fan(c: &mut Criterion) {
    let spec = SurfaceSpec::by_name("maximal-enneper").unwrap();
    let mut g = c.benchmark_group("fan_256_rays");
    for (name, exec) in MODES {
        let cfg = FanConfig { exec, ..FanConfig::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| approach_fan_experiment(&spec, (1.0, 0.0), &KappaField::Zero, black_box(256), 0.05, None, &cfg))
        });
    }
    g.finish();
}

fn sphere_closures(c: &mut Criterion) {
    let sph = SurfaceSpec::by_name("sphere").unwrap();
    let families: Vec<ShootingFamily> = (0..16)
        .map(|k| {
            let th = 0.39 * k as f64;
            ShootingFamily::InitialAngle { u: 0.1 * (k % 5) as f64, v: 0.0, speed: 1.0, range: (th, th + 0.5) }
        })
        .collect();
    let mut g = c.benchmark_group("sphere_closures_16");
    g.sample_size(10);
    for (name, exec) in MODES {
        // parallelism across orbits only, each shot runs sequentially
        let cfg = ShootConfig { exec: ExecMode::Sequential, ..ShootConfig::default() };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                par::map(exec, families.clone(), |f| shoot(&sph, &KappaField::Constant(1.0), &f, &cfg).map(|o| o.period))
            })
        });
    }
    g.finish();
}

criterion_group!(benches, fan, sphere_closures);
criterion_main!(benches);

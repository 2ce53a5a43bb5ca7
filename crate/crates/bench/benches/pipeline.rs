use criterion::{criterion_group, criterion_main, Criterion};
use footnav::earth::{ecef_to_geodetic, geodetic_to_ecef};
use footnav::pipeline::{run_filter, Variant};
use footnav::sim::build_square_walk;
use footnav::so3::{exp_map, right_jacobian};
use footnav::{EarthModel, GeodeticPosition};
use footnav_bench::short_lap;
use nalgebra::Vector3;
use std::hint::black_box;

fn geometry(c: &mut Criterion) {
    let m = EarthModel::WGS84;
    let g = GeodeticPosition {
        latitude: 31.0f64.to_radians(),
        longitude: 121.0f64.to_radians(),
        height: 12.0,
    };
    let p = geodetic_to_ecef(&g, &m);
    c.bench_function("ecef_to_geodetic", |b| {
        b.iter(|| ecef_to_geodetic(black_box(&p), &m).unwrap())
    });
    let phi = Vector3::new(0.3, -0.2, 0.1);
    c.bench_function("exp_map", |b| b.iter(|| exp_map(black_box(&phi))));
    c.bench_function("right_jacobian", |b| b.iter(|| right_jacobian(black_box(&phi))));
}

fn filters(c: &mut Criterion) {
    let mut group = c.benchmark_group("one_lap");
    group.sample_size(10);
    for v in Variant::ALL {
        let cfg = short_lap(v);
        let walk = build_square_walk(&cfg.gait, &cfg.earth, cfg.seed).unwrap();
        group.bench_function(v.tag(), |b| {
            b.iter(|| {
                run_filter(
                    &walk.imu_left,
                    &walk.imu_right,
                    &walk.range,
                    &cfg.gait,
                    &cfg.earth,
                    &cfg.filter,
                    v,
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, geometry, filters);
criterion_main!(benches);

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use selfsim_core::covers::scan_level;
use selfsim_core::rational::{q, qi};
use selfsim_core::scheme::build_scheme;
use selfsim_core::{
    Affine1D, ApproxSpec, Family, Ifs1D, IntervalQ, SchemeParams, SelfSimilarMeasure,
};

fn cantor() -> Ifs1D {
    Ifs1D::new(vec![
        Affine1D::new(q(1, 3), qi(0)),
        Affine1D::new(q(1, 3), q(2, 3)),
    ])
    .unwrap()
}

fn kernels(c: &mut Criterion) {
    let k = cantor();
    c.bench_function("dimension", |b| {
        b.iter(|| black_box(&k).solve_dimension(1e-13))
    });

    let spec = ApproxSpec::power_law(q(3, 2)).unwrap();
    let hull = k.attractor_hull();
    c.bench_function("scan_level m=10", |b| {
        b.iter(|| scan_level(&k, &spec, black_box(10), Family::A, &hull, None).unwrap())
    });

    let mu = SelfSimilarMeasure::new(k.clone()).unwrap();
    let iv = IntervalQ::closed(q(1, 7), q(5, 7));
    c.bench_function("measure_interval depth 20", |b| {
        b.iter(|| mu.measure_interval(black_box(&iv), 20))
    });

    let params = SchemeParams::new(q(5, 4), 2, 3, 2).unwrap();
    let mut g = c.benchmark_group("scheme");
    g.sample_size(10);
    g.bench_function("build v=5/4 N=2", |b| {
        b.iter(|| build_scheme(&k, black_box(&params)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);

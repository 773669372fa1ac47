use std::hint::black_box;
use aeppli_bench::{builtin, complex, point};
use aeppli_core::cohomology::{all_bidegrees, cohomology_dims, OperatorBundle};
use aeppli_core::energy::{energy, gradient_descent, real_gradient, AeppliPoint, FlowOptions};
use aeppli_core::forms::Bidegree;
use aeppli_core::torsion::torsion_form;
use criterion::{criterion_group, criterion_main, Criterion};

fn forms(c: &mut Criterion) {
    let cx = complex(builtin::PERTURBED_SPECTRAL);
    let alg = cx.algebra();
    let omega = point(builtin::PERTURBED_SPECTRAL).realized().omega().clone();
    let u = alg.unit();
    c.bench_function("wedge_omega_omega", |b| b.iter(|| alg.wedge(black_box(&omega), black_box(&omega)).unwrap()));
    c.bench_function("wedge_unit", |b| b.iter(|| alg.wedge(black_box(&u), black_box(&omega)).unwrap()));
    c.bench_function("build_spectral_complex", |b| b.iter(|| complex(black_box(builtin::PERTURBED_SPECTRAL))));
}

fn cohomology(c: &mut Criterion) {
    let h = point(builtin::IWASAWA).realized().clone();
    c.bench_function("iwasawa_all_dims", |b| {
        b.iter(|| cohomology_dims(&OperatorBundle::new(h.clone()), &all_bidegrees(3)).unwrap())
    });
    let pt = point(builtin::PERTURBED_SPECTRAL);
    let hs = pt.realized().clone();
    c.bench_function("spectral_dims_01", |b| {
        b.iter(|| cohomology_dims(&OperatorBundle::new(hs.clone()), &[Bidegree::new(0, 1)]).unwrap())
    });
}

fn torsion_and_energy(c: &mut Criterion) {
    let pt = point(builtin::PERTURBED_SPECTRAL);
    let mut g = c.benchmark_group("spectral_n3");
    g.sample_size(10);
    g.bench_function("torsion", |b| b.iter(|| torsion_form(&OperatorBundle::new(pt.realized().clone())).unwrap()));
    g.bench_function("energy", |b| b.iter(|| energy(black_box(&pt)).unwrap()));
    g.bench_function("real_gradient", |b| b.iter(|| real_gradient(black_box(&pt)).unwrap()));
    g.bench_function("flow", |b| {
        b.iter(|| {
            let start = AeppliPoint::new(pt.base().clone(), pt.potential().clone()).unwrap();
            gradient_descent(start, FlowOptions::default()).unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, forms, cohomology, torsion_and_energy);
criterion_main!(benches);

//! Sequential vs rayon execution of the data-parallel kernels. Build with
//! `--no-default-features` to compile the `Parallel` arm as a plain loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use romvel_core::forward::*;
use romvel_core::inversion::{fd_jacobian, residual_at};
use romvel_core::model::*;
use romvel_core::objective::RomMisfit;
use romvel_core::{rom, Parallelism};

const POLICIES: [Parallelism; 2] = [Parallelism::Sequential, Parallelism::Parallel];

fn acquisition(g: &Grid2D, m: usize, n: usize, par: Parallelism) -> Acquisition {
    let p = Pulse::standard();
    Acquisition {
        sensors: SensorArray::line(g, m, 100.0, g.hx).unwrap(),
        filter: SourceFilter::Pulse(p),
        tau: p.default_tau(),
        n,
        method: PropagationMethod::Chebyshev,
        nyquist: NyquistPolicy::Warn,
        parallelism: par,
    }
}

fn dataset(c: &mut Criterion) {
    let g = Grid2D::covering(2000.0, 2500.0, 50.0).unwrap();
    let v = make_camembert_model(g).unwrap();
    let mut group = c.benchmark_group("dataset_m10_n8");
    for par in POLICIES {
        let acq = acquisition(&g, 10, 8, par);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{par:?}")), &acq, |b, acq| {
            b.iter(|| acq.dataset(&v).unwrap())
        });
    }
    group.finish();
}

fn jacobian(c: &mut Criterion) {
    let g = Grid2D::covering(1000.0, 1000.0, 50.0).unwrap();
    let bg = VelocityModel::constant(g, BoundaryConditions::dirichlet(), 2000.0).unwrap();
    let param = Parametrization::new(bg, GaussianBump::lattice(&g.domain(), 4, 4, 1.0)).unwrap();
    let truth = param.evaluate(&[50.0; 16]).unwrap();
    let mut group = c.benchmark_group("rom_jacobian_n16");
    group.sample_size(10);
    for par in POLICIES {
        let acq = acquisition(&g, 4, 6, Parallelism::Sequential);
        let misfit = RomMisfit::new(rom::build_rom(&acq.dataset(&truth).unwrap()).unwrap(), acq, 6).unwrap();
        let eta = vec![0.0; param.len()];
        let g = |e: &[f64]| residual_at(&misfit, &param, e, 6);
        let r0 = g(&eta).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{par:?}")), |b| {
            b.iter(|| fd_jacobian(g, &eta, &r0, 1e-2, par).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dataset, jacobian);
criterion_main!(benches);

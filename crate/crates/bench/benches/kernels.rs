//! Hot-path benchmarks: box diagonalization, Schur evaluation along the
//! tridiagonal fast path, disk-local root finds, and resonant-set scans.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mslab_core::lattice::cube_at_origin;
use mslab_core::linalg::C64;
use mslab_core::msa::{self, BlockHierarchy, ScaleSchedule};
use mslab_core::operator::assemble;
use mslab_core::quasiperiodic::{FrequencySpec, PotentialSpec};
use mslab_core::rellich::CurveOracle;
use mslab_core::schur::{self, RootOptions};
use mslab_core::{LatticePoint, ModelParams, Side};
use std::hint::black_box;

fn golden_sawtooth(epsilon: f64) -> ModelParams {
    ModelParams::new(
        PotentialSpec::sawtooth(),
        FrequencySpec::golden(50),
        epsilon,
    )
}

fn bench_diagonalization(c: &mut Criterion) {
    let params = golden_sawtooth(1e-2);
    let mut group = c.benchmark_group("sym_eigen");
    group.sample_size(10);
    for radius in [32i64, 128, 500] {
        let block = cube_at_origin(radius, 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(block.len()), &radius, |b, r| {
            b.iter(|| {
                let op =
                    assemble(&params, &cube_at_origin(*r, 1).unwrap(), 0.3, Side::Right).unwrap();
                black_box(op.spectrum().unwrap().eigenvalues[0])
            })
        });
    }
    group.finish();
}

fn bench_schur_complement(c: &mut Criterion) {
    let params = golden_sawtooth(1e-3);
    let origin = LatticePoint::origin(1).unwrap();
    let mut group = c.benchmark_group("schur_complement");
    for radius in [4i64, 16, 256] {
        let block = cube_at_origin(radius, 1).unwrap();
        let op = assemble(&params, &block, 0.3, Side::Right).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(block.len()), &op, |b, op| {
            b.iter(|| {
                black_box(
                    schur::schur_complement(op, &origin, C64::new(2.0, 0.0))
                        .unwrap()
                        .s_value,
                )
            })
        });
    }
    group.finish();
}

fn bench_rellich_root(c: &mut Criterion) {
    let params = golden_sawtooth(1e-3);
    let origin = LatticePoint::origin(1).unwrap();
    let block = cube_at_origin(4, 1).unwrap();
    c.bench_function("find_rellich_root_9_sites", |b| {
        b.iter(|| {
            let theta = 0.3;
            let op = assemble(&params, &block, theta, Side::Right).unwrap();
            let center = params.potential.eval(theta, Side::Right);
            black_box(
                schur::find_rellich_root(&op, &origin, center, 0.04, &RootOptions::default())
                    .unwrap()
                    .root,
            )
        })
    });
}

fn bench_resonant_scan(c: &mut Criterion) {
    let params = golden_sawtooth(1e-3);
    let schedule = ScaleSchedule::practical(1e-3, 4, 0.05, 1).unwrap();
    let hierarchy = BlockHierarchy::from_cubes(&schedule, 1).unwrap();
    let search = cube_at_origin(1000, 1).unwrap();
    c.bench_function("resonant_scan_scale0_2001_sites", |b| {
        b.iter(|| {
            let oracle = CurveOracle::new(&params, &schedule, &hierarchy);
            black_box(
                msa::resonant_set(&oracle, 0, 0.3, Side::Right, 0.5, &search)
                    .unwrap()
                    .len(),
            )
        })
    });
}

criterion_group!(
    benches,
    bench_diagonalization,
    bench_schur_complement,
    bench_rellich_root,
    bench_resonant_scan
);
criterion_main!(benches);

//! Criterion benchmarks for the three kernels that dominate a run:
//! the flat Stokes factor-solve, one A-Stokes defect-correction sweep
//! (operator application plus flat preconditioner solve), and one RK4
//! surface-transport step.

use std::f64::consts::PI;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use slabflow_core::elliptic::{a_stokes_apply, FlatStokesSolver, StokesRHS};
use slabflow_core::evolution::solve_transport;
use slabflow_core::geometry::{build_geometry, BottomProfile, ExtensionParams};
use slabflow_core::{
    Grid, GridSpec, SlabField, SlabVectorField, SurfaceField, SurfaceVectorField,
};

const SIZES: [(usize, usize, usize); 3] = [(8, 8, 9), (16, 16, 13), (32, 32, 17)];

fn grid(n1: usize, n2: usize, nz: usize) -> Grid {
    Grid::new(GridSpec { l1: 1.0, l2: 1.0, b0: 1.0, n1, n2, nz, dealias: false }).unwrap()
}

fn random_rhs(g: &Grid) -> StokesRHS {
    StokesRHS {
        f: SlabVectorField::new([
            SlabField::random(g, 1, 3, 1.0),
            SlabField::random(g, 2, 3, 1.0),
            SlabField::random(g, 3, 3, 1.0),
        ]),
        g: SlabField::zeros(g),
        h: SurfaceVectorField::zeros(g),
    }
}

fn bench_flat_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("flat_solve");
    for (n1, n2, nz) in SIZES {
        let g = grid(n1, n2, nz);
        let solver = FlatStokesSolver::new(&g, 1.0).unwrap();
        let rhs = random_rhs(&g);
        group.bench_function(BenchmarkId::from_parameter(format!("{n1}x{n2}x{nz}")), |b| {
            b.iter(|| std::hint::black_box(solver.solve(&rhs)))
        });
    }
    group.finish();
}

fn bench_a_stokes_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("a_stokes_sweep");
    for (n1, n2, nz) in SIZES {
        let g = grid(n1, n2, nz);
        let solver = FlatStokesSolver::new(&g, 1.0).unwrap();
        let rhs = random_rhs(&g);
        let eta = SurfaceField::from_fn(&g, |x1, _| 0.02 * (2.0 * PI * x1).cos());
        let params = ExtensionParams { epsilon: 0.3, delta: 0.45, c_poisson: 1.0 };
        let pack = build_geometry(&eta, None, &BottomProfile::flat(&g), &params).unwrap();
        let sol = solver.solve(&rhs);
        group.bench_function(BenchmarkId::from_parameter(format!("{n1}x{n2}x{nz}")), |b| {
            b.iter(|| {
                let residual = rhs.sub(&a_stokes_apply(&pack, &sol.u, &sol.p, 1.0));
                std::hint::black_box(solver.solve(&residual))
            })
        });
    }
    group.finish();
}

fn bench_transport_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("transport_step");
    for (n1, n2, nz) in SIZES {
        let g = grid(n1, n2, nz);
        let eta0 = SurfaceField::from_fn(&g, |x1, _| 0.02 * (2.0 * PI * x1).cos());
        let vel = SurfaceVectorField::new([
            SurfaceField::from_fn(&g, |x1, _| 0.05 * (2.0 * PI * x1).cos()),
            SurfaceField::zeros(&g),
            SurfaceField::zeros(&g),
        ]);
        group.bench_function(BenchmarkId::from_parameter(format!("{n1}x{n2}x{nz}")), |b| {
            b.iter(|| {
                std::hint::black_box(
                    solve_transport(&eta0, &|_| vel.clone(), 0.0, 1e-3, 1).unwrap(),
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_flat_solve, bench_a_stokes_sweep, bench_transport_step);
criterion_main!(benches);

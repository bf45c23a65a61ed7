use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use roughsde::maximal::{extend_reflection, local_maximal};
use roughsde::pde::{solve_cauchy_dirichlet, PdeProblem, SolverSettings};
use roughsde::sde::{run_path, TimeStepping};
use roughsde::zvonkin::{PlanSettings, ZvonkinPlan};
use roughsde_bench::{rough_slice, space_time, threshold_ou, unit_domain, StreamSpec};

fn euler_maruyama(c: &mut Criterion) {
    let field = threshold_ou();
    let domain = unit_domain();
    let stepping = TimeStepping::horizon(1.0, 1e-3).unwrap();
    let mut i = 0;
    c.bench_function("em_path_1000_steps", |b| {
        b.iter(|| {
            i += 1;
            run_path(&field, black_box(&[0.0]), &domain, stepping, StreamSpec::new(1, i), |_, _, _| {}).unwrap()
        })
    });
}

fn pde_solve(c: &mut Criterion) {
    let field = threshold_ou();
    let grid = space_time(201, 1.0, 1001);
    let problem = PdeProblem::new(field, |_, _| 1.0);
    let settings = SolverSettings::default();
    c.bench_function("pde_201x1001", |b| {
        b.iter(|| solve_cauchy_dirichlet(black_box(&problem), &grid, &settings).unwrap())
    });
}

fn maximal(c: &mut Criterion) {
    let f = rough_slice(33, 7);
    c.bench_function("local_maximal_33x33", |b| b.iter(|| local_maximal(black_box(&f)).unwrap()));
    c.bench_function("reflection_33x33", |b| b.iter(|| extend_reflection(black_box(&f), 0.25).unwrap()));
}

fn transform(c: &mut Criterion) {
    let field = threshold_ou();
    let domain = unit_domain();
    let plan = ZvonkinPlan::new(&field, &domain, 1.0, 1.0 / 1024.0, &PlanSettings::new(161, 2.5e-4)).unwrap();
    let bundle = &plan.segments[0].bundle;
    let (t0, t1) = bundle.window();
    let t = 0.5 * (t0 + t1);
    let mut y = [0.0];
    bundle.phi(t, &[0.3], &mut y).unwrap();
    c.bench_function("transform_inverse", |b| b.iter(|| bundle.invert(t, black_box(&y)).unwrap()));
    let mut group = c.benchmark_group("transform_plan");
    group.sample_size(10);
    group.bench_function("plan_161_nodes", |b| {
        b.iter(|| ZvonkinPlan::new(&field, &domain, 1.0, 1.0 / 1024.0, &PlanSettings::new(161, 2.5e-4)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, euler_maruyama, pde_solve, maximal, transform);
criterion_main!(benches);

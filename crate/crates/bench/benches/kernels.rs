use std::f64::consts::PI;

use coldcav::dsp::{first_order_lowpass, modulated_noise, power_to_db, reconstruct};
use coldcav::dynamics::integrate;
use coldcav::noise::linearize;
use coldcav::steady::{bistability_threshold, solve_steady, stability_map};
use coldcav::{CavityState, DriveSpec, ModelParams};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn steady(c: &mut Criterion) {
    let p = ModelParams::default().with_pumping(false);
    let input = 1.5 * bistability_threshold(&p).unwrap().unwrap().input_intensity;
    let phi_0 = -1.198 * p.gamma_cav;
    c.bench_function("solve_steady three roots", |b| {
        b.iter(|| solve_steady(black_box(input), phi_0, &p).unwrap())
    });
    c.bench_function("bistability_threshold", |b| {
        b.iter(|| bistability_threshold(black_box(&p)).unwrap())
    });

    let p = ModelParams::default().with_coop(400.0);
    let input = 1.3 * bistability_threshold(&p).unwrap().unwrap().input_intensity;
    c.bench_function("stability_map C=400", |b| {
        b.iter(|| stability_map(black_box(input), &p).unwrap())
    });
}

fn noise(c: &mut Criterion) {
    let p = ModelParams::default().with_coop(300.0).with_detuning(20.0);
    let ss = solve_steady(0.75, -27.0 * p.gamma_cav, &p).unwrap()[0];
    let lin = linearize(&ss, &p).unwrap();
    c.bench_function("spectrum", |b| {
        b.iter(|| lin.spectrum(black_box(2.0 * PI * 5e6)).unwrap())
    });
}

fn dynamics(c: &mut Criterion) {
    let p = ModelParams::default().with_coop(400.0);
    let input = 1.05 * bistability_threshold(&p).unwrap().unwrap().input_intensity;
    let drive = DriveSpec::constant(input, -33.7 * p.gamma_cav);
    let start = solve_steady(input, -33.7 * p.gamma_cav, &p).unwrap()[0];
    let start = CavityState::new(start.alpha * 1.01, start.p);
    let mut group = c.benchmark_group("integrate");
    group.sample_size(10);
    group.bench_function("limit cycle 100 us", |b| {
        b.iter(|| integrate(black_box(start), &drive, &p, 1e-4, 2e-8, 1e-8).unwrap())
    });
    group.finish();
}

fn dsp(c: &mut Criterion) {
    let trace = modulated_noise(0.5, 1e3, 1e-5, 1 << 14).unwrap();
    let shown = first_order_lowpass(&power_to_db(&trace).unwrap(), 300.0).unwrap();
    c.bench_function("reconstruct 16k samples", |b| {
        b.iter(|| reconstruct(black_box(&shown), 300.0, 1e3).unwrap())
    });
}

criterion_group!(benches, steady, noise, dynamics, dsp);
criterion_main!(benches);

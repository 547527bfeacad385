use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gkp_core::{
    char_scan, circuit::Part, default_frame, displacement, fit_chi, linspace, marginal_from_scan,
    prepare_state, reconstruct_state, simulate_readout, squeezed_vacuum, tomography::bloch_vector,
    ChiMatrix, Conventions, FitOptions, GridParams, NoiseParams, PauliReadout, Quadrature,
    StateLabel, Timings, C64,
};

fn displacement_matrix(c: &mut Criterion) {
    let mut group = c.benchmark_group("displacement");
    for n in [64, 128, 256] {
        let conv = Conventions::new(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &conv, |b, conv| {
            b.iter(|| displacement(C64::new(1.2, -0.7), conv).unwrap());
        });
    }
    group.finish();
}

fn preparation(c: &mut Criterion) {
    let params = GridParams::standard();
    let conv = Conventions::new(256).unwrap();
    let mut group = c.benchmark_group("prepare");
    for label in [StateLabel::Zero, StateLabel::PhiPlus] {
        let recipe = label.recipe(&params);
        group.bench_function(label.name(), |b| {
            b.iter(|| prepare_state(&recipe, &params, &conv).unwrap());
        });
    }
    group.finish();
}

fn chi_fit(c: &mut Criterion) {
    let inputs: Vec<[f64; 3]> = StateLabel::ALL
        .iter()
        .map(|l| bloch_vector(l.ideal_state()))
        .collect();
    let t = std::f64::consts::FRAC_PI_8;
    let u = nalgebra::Matrix2::new(
        C64::from_polar(1.0, -t),
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.0),
        C64::from_polar(1.0, t),
    );
    let chi = ChiMatrix::from_unitary(&u);
    let outputs: Vec<[f64; 3]> = inputs
        .iter()
        .map(|b| {
            let out = chi.apply(&reconstruct_state(*b).matrix);
            [
                2.0 * out[(0, 1)].re,
                -2.0 * out[(0, 1)].im,
                (out[(0, 0)] - out[(1, 1)]).re,
            ]
        })
        .collect();
    let (o, l) = (
        PauliReadout::from_bloch(&inputs).unwrap(),
        PauliReadout::from_bloch(&outputs).unwrap(),
    );
    let mut group = c.benchmark_group("chi_fit");
    group.sample_size(10);
    group.bench_function("t_gate", |b| {
        b.iter(|| fit_chi(&o, &l, &FitOptions::default()).unwrap())
    });
    group.finish();
}

fn dephased_readout(c: &mut Criterion) {
    let params = GridParams::standard();
    let frame = default_frame(&params);
    let noise = NoiseParams::new(7.0).unwrap();
    let timings = Timings::default();
    let mut group = c.benchmark_group("dephased_readout");
    group.sample_size(10);
    group.measurement_time(Duration::from_secs(10));
    for n in [64, 128] {
        let conv = Conventions::new(n).unwrap();
        let rho = prepare_state(&StateLabel::Zero.recipe(&params), &params, &conv)
            .unwrap()
            .state
            .to_density();
        let alpha = frame.stabilizer_amplitude(gkp_core::Axis::Z);
        group.bench_with_input(BenchmarkId::from_parameter(n), &rho, |b, rho| {
            b.iter(|| {
                simulate_readout(rho, alpha, Part::Real, &noise, &timings, &conv, 128).unwrap()
            });
        });
    }
    group.finish();
}

fn marginal(c: &mut Criterion) {
    let conv = Conventions::new(256).unwrap();
    let sv = squeezed_vacuum(0.9, &conv).unwrap();
    let ts = linspace(-12.0, 12.0, 481);
    c.bench_function("marginal/q_481", |b| {
        b.iter(|| {
            let scan = char_scan(&sv, C64::new(0.0, 1.0), &ts, &conv).unwrap();
            marginal_from_scan(&scan, Quadrature::Q, 8).unwrap()
        });
    });
}

criterion_group!(
    benches,
    displacement_matrix,
    preparation,
    chi_fit,
    dephased_readout,
    marginal
);
criterion_main!(benches);

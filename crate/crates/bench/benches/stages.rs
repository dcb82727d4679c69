//! Stage timings at the default 16x4x64x64 clip shape.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use lightmotion::{
    apply_permutation, build_motion_field, preset, resample_all, run, AxisPolicy, Denoiser,
    LatentVideo, MaskShape, MaskSource, NoiseSchedule, OracleDenoiser, PipelineConfig,
};
use lightmotion_bench::{bench_latent, foreground, pan_field, pan_params, CHANNELS, FRAMES, SIDE};

const ELEMENTS: u64 = (FRAMES * CHANNELS * SIDE * SIDE) as u64;

fn motion_field(c: &mut Criterion) {
    let mut group = c.benchmark_group("motion_field");
    for name in ["pan-left-large", "zoom-out-large", "rot-ccw-large"] {
        let params = preset(name).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(name), &params, |b, p| {
            b.iter(|| build_motion_field(black_box(p), FRAMES, SIDE, SIDE).unwrap())
        });
    }
    group.finish();
}

fn permutation(c: &mut Criterion) {
    let z = bench_latent(11);
    let field = pan_field();
    let mut group = c.benchmark_group("permutation");
    group.throughput(Throughput::Elements(ELEMENTS));
    group.bench_function("pan-left-large", |b| {
        b.iter(|| apply_permutation(black_box(&z), &field).unwrap())
    });
    group.finish();
}

fn resample(c: &mut Criterion) {
    let field = pan_field();
    let (z, omega) = apply_permutation(&bench_latent(12), &field).unwrap();
    let mask = foreground();
    let mut group = c.benchmark_group("resample");
    group.throughput(Throughput::Elements(ELEMENTS));
    group.bench_function("pan-left-large", |b| {
        b.iter(|| {
            resample_all(black_box(&z), &omega, &mask, &field, AxisPolicy::Auto, 3).unwrap()
        })
    });
    group.finish();
}

fn denoise_chain(c: &mut Criterion) {
    let schedule = NoiseSchedule::default_linear(50).unwrap();
    let x0 = bench_latent(13);
    let oracle = OracleDenoiser::new(x0, schedule.clone());
    let z0 = bench_latent(14);

    let chain = |mut z: LatentVideo| {
        for k in (2..=schedule.ddim_steps()).rev() {
            let t = schedule.train_timestep(k);
            let t_prev = schedule.train_timestep(k - 1);
            let eps = oracle.predict_eps(&z, t).unwrap();
            z = schedule.ddim_step(&z, &eps, t, t_prev).unwrap();
        }
        z
    };

    let mut group = c.benchmark_group("denoise");
    group.sample_size(20);
    group.bench_function("ddim-chain-50", |b| {
        b.iter_batched(|| z0.clone(), &chain, BatchSize::LargeInput)
    });
    group.finish();
}

fn full_run(c: &mut Criterion) {
    let camera = pan_params();
    let mut cfg = PipelineConfig::with_defaults(camera, 5);
    cfg.mask_source = MaskSource::Synth(MaskShape::Ellipse {
        center: (31.5, 31.5),
        extents: (12.0, 12.0),
    });
    let schedule = NoiseSchedule::default_linear(cfg.ddim_steps).unwrap();
    let oracle = OracleDenoiser::new(bench_latent(15), schedule);

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.bench_function("run-defaults", |b| {
        b.iter(|| run(black_box(&cfg), &oracle).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    motion_field,
    permutation,
    resample,
    denoise_chain,
    full_run
);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use metabattle::battle::{fight, BattleSchedule, PartySpec};
use metabattle::channel::superposition_estimate;
use metabattle::metasurface::random_config;
use metabattle::scenarios::presets::{office_arena, office_params};
use metabattle::scenarios::spectrogram::{doppler_ramp, spectrogram, StftParams};
use metabattle::sweeps::facing_geometry;
use metabattle::{
    ChannelModel, Endpoint, MetasurfaceSpec, ObjectiveSense, OptimizerKind, PropagationParams, RandomStream, SurfaceId,
};

fn effective_channel(c: &mut Criterion) {
    let arena = office_arena(0.3, 0.3, &office_params(), &mut RandomStream::new(1, 0)).unwrap();
    let m = &arena.model;
    let mut s = RandomStream::new(1, 1);
    let a = random_config(m.spec(SurfaceId::A), &mut s);
    let b = random_config(m.spec(SurfaceId::B), &mut s);
    c.bench_function("effective_channel_256x256", |bench| {
        bench.iter(|| m.effective_channel(black_box(&a), black_box(&b)).unwrap())
    });
}

fn coupled_channel(c: &mut Criterion) {
    let params = PropagationParams {
        coupling_enabled: true,
        ..office_params()
    };
    let model = ChannelModel::synthesize(
        &facing_geometry(0.2, 0.0),
        &params,
        MetasurfaceSpec::binary(256),
        MetasurfaceSpec::binary(256),
        Endpoint::Alice,
        Endpoint::Bob,
        &mut RandomStream::new(2, 0),
    )
    .unwrap();
    let mut s = RandomStream::new(2, 1);
    let a = random_config(model.spec(SurfaceId::A), &mut s);
    let b = random_config(model.spec(SurfaceId::B), &mut s);
    c.bench_function("effective_channel_coupled", |bench| {
        bench.iter(|| model.effective_channel(black_box(&a), black_box(&b)).unwrap())
    });
    let mut group = c.benchmark_group("superposition_estimate");
    group.sample_size(10);
    group.bench_function("ensemble_200", |bench| {
        bench.iter(|| superposition_estimate(&model, &a, &b, 200, &mut s).unwrap())
    });
    group.finish();
}

fn battles(c: &mut Criterion) {
    let arena = office_arena(0.3, 0.3, &office_params(), &mut RandomStream::new(3, 0)).unwrap();
    let mut group = c.benchmark_group("battle_1000_steps");
    group.sample_size(10);
    for kind in [OptimizerKind::GD, OptimizerKind::FL, OptimizerKind::LR, OptimizerKind::BF] {
        let a = PartySpec::new(kind, ObjectiveSense::Maximize);
        let b = PartySpec::new(OptimizerKind::GD, ObjectiveSense::Minimize);
        let schedule = BattleSchedule::simultaneous(1000);
        group.bench_with_input(BenchmarkId::from_parameter(kind.name()), &kind, |bench, _| {
            bench.iter(|| fight(&arena, &a, &b, &schedule, &RandomStream::new(3, 1)).unwrap())
        });
    }
    group.finish();
}

fn stft(c: &mut Criterion) {
    let params = StftParams::default();
    let series = doppler_ramp(4096, params.sample_rate_hz, 5.0, 25.0);
    c.bench_function("spectrogram_4096", |bench| bench.iter(|| spectrogram(black_box(&series), &params).unwrap()));
}

criterion_group!(benches, effective_channel, coupled_channel, battles, stft);
criterion_main!(benches);

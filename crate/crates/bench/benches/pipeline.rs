use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use neurofarm_core::env::EnvDescriptor;
use neurofarm_core::evalmod::{run_episode_with, EvalContext, Flow};
use neurofarm_core::farm::protocol::{BulkTarget, Message};
use neurofarm_core::farm::{Dispatcher, EvalJob, InProcessPool};
use neurofarm_core::ga::{mutate, xavier_init};
use neurofarm_core::network::{Kernel, PreparedNetwork};
use neurofarm_core::preproc::{FrameBuffer, Palette, Pipeline};
use neurofarm_core::tensor::QTensor;
use neurofarm_core::default_spec;

fn forward(c: &mut Criterion) {
    let spec = default_spec();
    let dense = xavier_init(&spec, 1, 0);
    let mut sparse = dense.clone();
    for (i, w) in sparse.raw_mut().iter_mut().enumerate() {
        if i % 10 != 0 {
            *w = 0;
        }
    }
    let x = QTensor::from_vec(84, 84, 4, (0..84 * 84 * 4).map(|i| (i % 65) as i16).collect());
    let mut g = c.benchmark_group("forward");
    for (name, genome) in [("dense", &dense), ("sparse", &sparse)] {
        let net = PreparedNetwork::new(&spec, genome).unwrap();
        for k in [Kernel::Gather, Kernel::Scatter, Kernel::Tiled, Kernel::Auto] {
            g.bench_with_input(BenchmarkId::new(name, format!("{k:?}")), &k, |b, &k| {
                b.iter(|| net.forward_with(black_box(&x), k).unwrap())
            });
        }
    }
    g.finish();
}

fn preproc(c: &mut Criterion) {
    let palette = Palette::reference_ntsc();
    let mut frame = FrameBuffer::filled(0);
    frame.fill_rect(40, 100, 24, 4, 7);
    frame.fill_rect(70, 30, 8, 6, 30);
    let mut p = Pipeline::new(&palette);
    let mut g = c.benchmark_group("preproc");
    g.throughput(Throughput::Elements(1));
    g.bench_function("push_frame", |b| b.iter(|| p.push_frame(black_box(&frame))));
    g.bench_function("activations", |b| b.iter(|| p.activations().unwrap()));
    g.finish();
}

fn episode(c: &mut Criterion) {
    let spec = default_spec();
    let ctx = EvalContext::default();
    let genome = mutate(&xavier_init(&spec, 2, 0), 3, 0.002, 1);
    let net = PreparedNetwork::new(&spec, &genome).unwrap();
    let desc = EnvDescriptor::default().with_frame_cap(200);
    let mut g = c.benchmark_group("episode");
    g.sample_size(10);
    g.throughput(Throughput::Elements(200));
    g.bench_function("catch_200_frames", |b| {
        b.iter(|| run_episode_with(&ctx, &net, 1, &desc, 7, None, |_, _| Flow::Continue).unwrap())
    });
    let jobs: Vec<EvalJob> = (0..4)
        .map(|i| EvalJob { genome: Arc::new(genome.clone()), desc, seed: i, priority: 0 })
        .collect();
    let mut pool = InProcessPool::new(2, Arc::new(EvalContext::default()));
    g.throughput(Throughput::Elements(800));
    g.bench_function("pool_4_jobs", |b| b.iter(|| pool.dispatch(&jobs).unwrap()));
    g.finish();
}

fn protocol(c: &mut Criterion) {
    let spec = default_spec();
    let bytes = xavier_init(&spec, 4, 0).to_bytes();
    let m = Message::BulkWrite { module: 0, target: BulkTarget::GenomeCache, key: 0, offset: 0, data: bytes };
    let frame = m.encode();
    let mut g = c.benchmark_group("protocol");
    g.throughput(Throughput::Bytes(frame.len() as u64));
    g.bench_function("encode_genome_upload", |b| b.iter(|| black_box(&m).encode()));
    g.bench_function("decode_genome_upload", |b| b.iter(|| Message::decode(black_box(&frame)).unwrap()));
    g.finish();
}

criterion_group!(benches, forward, preproc, episode, protocol);
criterion_main!(benches);

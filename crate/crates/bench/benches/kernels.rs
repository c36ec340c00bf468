use std::hint::black_box;

use chase_core::backbone::{BackboneConfig, BackboneNet, HeadMode};
use chase_core::data::{time_major, Example};
use chase_core::metrics::{evaluate, risk_coverage_curve, ScoredRecord};
use chase_core::numerics::{Gru, ParamSet};
use chase_core::rng::{stream_rng, Stream};
use chase_core::selector::{calibrate_threshold, BatchPairs, SelectorConfig, SelectorNet, PHI_DIM};
use chase_core::simulator::{generate_dataset, Label, SimConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::Rng;

fn gru_step(c: &mut Criterion) {
    let mut ps = ParamSet::new();
    let mut rng = stream_rng(0, Stream::Init, 0);
    let gru = Gru::new(&mut ps, "gru", 6, 64, &mut rng).unwrap();
    let b = 64;
    let x: Vec<f64> = (0..b * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h: Vec<f64> = (0..b * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("gru_cell_forward_b64_h64", |bench| {
        bench.iter(|| gru.cell_forward(&ps, black_box(&x), black_box(&h), b).unwrap())
    });
}

fn backbone_batch(c: &mut Criterion) {
    let ds = generate_dataset(&SimConfig { sequences: 64, ..SimConfig::default() }).unwrap();
    let batch: Vec<Example> = ds.records.iter().map(|r| Example { features: r.features.clone(), label: r.label }).collect();
    let refs: Vec<&Example> = batch.iter().collect();
    let cfg = BackboneConfig::default();
    let mut ps = ParamSet::new();
    let net = BackboneNet::new(&mut ps, &cfg, 1).unwrap();
    c.bench_function("backbone_loss_and_grad_b64_t64", |bench| {
        bench.iter(|| {
            ps.zero_grads();
            net.loss_and_grad(&mut ps, black_box(&refs), &cfg).unwrap()
        })
    });
    let seqs: Vec<&[[f64; 6]]> = batch.iter().map(|e| e.features.as_slice()).collect();
    c.bench_function("backbone_predict_b64_t64", |bench| {
        bench.iter(|| net.predict(ps.values(), black_box(&seqs), HeadMode::Dual).unwrap())
    });
    c.bench_function("time_major_b64_t64", |bench| bench.iter(|| time_major(black_box(&seqs), 64).unwrap()));
}

fn selector_batch(c: &mut Criterion) {
    let cfg = SelectorConfig::default();
    let n = 128;
    let mut rng = stream_rng(3, Stream::Data, 0);
    let x: Vec<f64> = (0..n * PHI_DIM).map(|_| rng.random_range(-2.0..2.0)).collect();
    let e: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { 1.0 } else { 0.0 }).collect();
    let y: Vec<f64> = e.iter().map(|&v| if v > 0.0 { 1.0 } else if rng.random_bool(0.3) { cfg.gamma } else { 0.0 }).collect();
    let mut ps = ParamSet::new();
    let net = SelectorNet::new(&mut ps, cfg.hidden, 0).unwrap();
    c.bench_function("selector_loss_and_grad_n128", |bench| {
        bench.iter_batched(
            || BatchPairs::sample(&e, &y, cfg.pair_cap, &mut stream_rng(0, Stream::PairSampling, 0)),
            |pairs| {
                ps.zero_grads();
                net.loss_and_grad(&mut ps, &x, &e, &y, &pairs, None, &cfg).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = stream_rng(5, Stream::Data, 0);
    let records: Vec<ScoredRecord> = (0..672)
        .map(|_| {
            let label = if rng.random_bool(0.5) { Label::Connected } else { Label::NotConnected };
            let prediction = if rng.random_bool(0.9) { label } else { label.other() };
            ScoredRecord { prediction, label, ambiguous: rng.random_bool(0.25), score: rng.random() }
        })
        .collect();
    let scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    c.bench_function("calibrate_and_evaluate_672", |bench| {
        bench.iter(|| {
            let tau = calibrate_threshold(black_box(&scores), 0.8).unwrap();
            evaluate(black_box(&records), tau).unwrap()
        })
    });
    c.bench_function("risk_coverage_curve_672", |bench| bench.iter(|| risk_coverage_curve(black_box(&records))));
}

criterion_group!(benches, gru_step, backbone_batch, selector_batch, metrics);
criterion_main!(benches);

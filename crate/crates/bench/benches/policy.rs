use std::hint::black_box;

use chainlearn_bench::{audit_log, prediction_batch};
use chainlearn_core::{
    calculate_weight, expected_calibration_error, recover_signer, sign_benchmark, weighted_aggregate, AuditLog,
    CapacityClass, EceConfig, FixedPoint, Hash32, PolicyConstants, ProbabilityVector, Reliability, SigningKey,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

fn weight(c: &mut Criterion) {
    let k = PolicyConstants::default();
    let rel = Reliability::new(8_734, 612, 3);
    c.bench_function("calculate_weight", |b| {
        b.iter(|| calculate_weight(black_box(CapacityClass::Strong), black_box(&rel), &k))
    });
}

fn aggregate(c: &mut Criterion) {
    let mut group = c.benchmark_group("weighted_aggregate");
    for members in [3usize, 10, 50] {
        let batches: Vec<_> = (0..members).map(|i| prediction_batch(members, 10, i as u64)).collect();
        let vectors: Vec<&ProbabilityVector> = batches.iter().map(|b| &b.predictions()[0]).collect();
        let weights: Vec<FixedPoint> = (0..members).map(|i| FixedPoint(8_000 + i as u64 * 100)).collect();
        group.throughput(Throughput::Elements(members as u64));
        group.bench_with_input(BenchmarkId::from_parameter(members), &members, |b, _| {
            b.iter(|| weighted_aggregate(black_box(&vectors), black_box(&weights)))
        });
    }
    group.finish();
}

fn ece(c: &mut Criterion) {
    let mut group = c.benchmark_group("expected_calibration_error");
    for n in [312usize, 2_000, 10_000] {
        let batch = prediction_batch(n, 7, 3);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &batch, |b, batch| {
            b.iter(|| expected_calibration_error(black_box(batch), EceConfig::default()))
        });
    }
    group.finish();
}

fn audit(c: &mut Criterion) {
    let mut group = c.benchmark_group("audit");
    let log = audit_log(20);
    let text = log.to_jsonl();
    group.throughput(Throughput::Elements(log.len() as u64));
    group.bench_function("verify", |b| b.iter(|| black_box(&log).verify()));
    group.bench_function("parse_jsonl", |b| b.iter(|| AuditLog::parse_jsonl(black_box(&text))));
    group.finish();
}

fn signatures(c: &mut Criterion) {
    let key = SigningKey::derive(b"bench");
    let hash = Hash32([7; 32]);
    let sig = sign_benchmark(&hash, &key);
    c.bench_function("sign_benchmark", |b| b.iter(|| sign_benchmark(black_box(&hash), &key)));
    c.bench_function("recover_signer", |b| b.iter(|| recover_signer(black_box(&hash), black_box(&sig))));
}

criterion_group!(benches, weight, aggregate, ece, audit, signatures);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use qvf_bench::{completion, tensor_file};
use qvf_core::align::{Embedder, TrigramEmbedder};
use qvf_core::evalkit::pass_at_k;
use qvf_core::merge::{slerp_merge, MergeConfig};
use qvf_core::qsim::{
    backend_registry, lookup_backend, random_circuit, sample, simulate, transpile, MAX_QUBITS,
};

fn simulation(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    for n in [4usize, 8, 12, MAX_QUBITS] {
        let circ = random_circuit("bench", n, 20, 1, false).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &circ, |b, circ| {
            b.iter(|| simulate(black_box(circ)).unwrap())
        });
    }
    g.finish();
    let circ = random_circuit("bench", 10, 20, 2, true).unwrap();
    c.bench_function("sample/10q_1024shots", |b| {
        b.iter(|| sample(black_box(&circ), 1024, 3).unwrap())
    });
}

fn transpilation(c: &mut Criterion) {
    let mut g = c.benchmark_group("transpile");
    let circ = random_circuit("bench", 5, 30, 4, false).unwrap();
    for backend in backend_registry() {
        if backend.num_qubits < circ.num_qubits {
            continue;
        }
        let id = backend.id.clone();
        g.bench_function(BenchmarkId::from_parameter(&id), |b| {
            let backend = lookup_backend(&id).unwrap();
            b.iter(|| transpile(black_box(&circ), &backend, 1).unwrap())
        });
    }
    g.finish();
}

fn estimators(c: &mut Criterion) {
    c.bench_function("pass_at_k/n200", |b| {
        b.iter(|| {
            let mut s = 0.0;
            for k in [1, 10, 100] {
                for c in (0..=200).step_by(10) {
                    s += pass_at_k(200, c, k).unwrap();
                }
            }
            s
        })
    });
}

fn embedding(c: &mut Criterion) {
    let text = completion(60);
    c.bench_function("trigram_embed/60_lines", |b| {
        b.iter(|| TrigramEmbedder.embed(black_box(&text)).unwrap())
    });
}

fn merging(c: &mut Criterion) {
    let (a, b_) = (tensor_file(16, 65_536, 1), tensor_file(16, 65_536, 2));
    let cfg = MergeConfig::new(0.3);
    c.bench_function("slerp/16x64k", |b| {
        b.iter(|| slerp_merge(black_box(&a), &b_, &cfg).unwrap())
    });
}

criterion_group!(
    benches,
    simulation,
    transpilation,
    estimators,
    embedding,
    merging
);
criterion_main!(benches);

//! Sequential against parallel execution of the shot loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use knitsim_core::channels::QuantumChannel;
use knitsim_core::ensembles::EnsembleKind;
use knitsim_core::exec::ExecMode;
use knitsim_core::linalg::HermitianOperator;
use knitsim_core::rng::StreamKey;
use knitsim_core::tomography::{learn, learn_direct, LearningTask};
use knitsim_core::treesim::{estimate_pauli_qpd, TreeCircuit};

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn tomography(c: &mut Criterion) {
    let mut rng = StreamKey::new("bench").rng(1, 0);
    let ch = QuantumChannel::random(4, 4, 1, &mut rng).unwrap();
    let o = HermitianOperator::pauli("ZZ").unwrap();
    let shots = 1u64 << 20;
    let mut g = c.benchmark_group("learn_tabulated");
    g.throughput(Throughput::Elements(shots));
    g.sample_size(10);
    for (name, mode) in MODES {
        let task = LearningTask::new(&ch, &o, EnsembleKind::TwoDesign, shots, 3).with_exec(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| learn(&task).unwrap()));
    }
    g.finish();

    let shots = 1u64 << 15;
    let mut g = c.benchmark_group("learn_direct");
    g.throughput(Throughput::Elements(shots));
    g.sample_size(10);
    for (name, mode) in MODES {
        let task = LearningTask::new(&ch, &o, EnsembleKind::TwoDesign, shots, 3).with_exec(mode);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| learn_direct(&task).unwrap()));
    }
    g.finish();
}

fn pauli_qpd(c: &mut Criterion) {
    let mut rng = StreamKey::new("bench").rng(2, 0);
    let tree = TreeCircuit::random(1, 3, 1, &mut rng).unwrap();
    let shots = 1u64 << 20;
    let mut g = c.benchmark_group("pauli_qpd");
    g.throughput(Throughput::Elements(shots));
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| estimate_pauli_qpd(&tree, shots, 5, mode).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, tomography, pauli_qpd);
criterion_main!(benches);

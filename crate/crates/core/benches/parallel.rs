use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qfuzz_core::generator::{generate, GenConfig};
use qfuzz_core::harness::{run_campaign, BuiltinExecutor, CampaignConfig};
use qfuzz_core::par::ExecMode;
use qfuzz_core::passes::Pipeline;
use qfuzz_core::simulator::{run_with, RunOptions};

fn workers() -> usize {
    std::thread::available_parallelism().map_or(4, |n| n.get())
}

fn shots(c: &mut Criterion) {
    let p = generate(&GenConfig { n_qubits: 6, seed: 5, ..GenConfig::default() }).unwrap();
    let mut g = c.benchmark_group("shots");
    for mode in [ExecMode::Sequential, ExecMode::Parallel] {
        let opts = RunOptions { mode, ..RunOptions::default() };
        g.bench_with_input(BenchmarkId::new(format!("{mode:?}"), 20_000), &opts, |b, o| {
            b.iter(|| run_with(&p, 20_000, 1, o).0.unwrap())
        });
    }
    g.finish();
}

fn campaign(c: &mut Criterion) {
    let mut g = c.benchmark_group("campaign");
    g.sample_size(10);
    for (name, jobs) in [("Sequential", 1), ("Parallel", workers())] {
        let cfg = CampaignConfig {
            max_iter: 40,
            n_qubits: 5,
            master_seed: 9,
            pipelines: vec![Pipeline::parse("cancel-inverses+commute-cf", false).unwrap()],
            parallelism: jobs,
            ..CampaignConfig::default()
        };
        let ex = BuiltinExecutor::new(ExecMode::from_parallelism(jobs));
        g.bench_function(BenchmarkId::new(name, 40), |b| b.iter(|| run_campaign(&cfg, &ex).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, shots, campaign);
criterion_main!(benches);

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use linabs::discovery::direct_lingam;
use linabs::scenario::{generate, ScenarioConfig};
use linabs::{DiscoveryConfig, PriorKnowledge};

fn bench_direct_lingam(c: &mut Criterion) {
    let cfg = ScenarioConfig {
        b: 3,
        abstract_edges: 2,
        block_size_range: [3, 5],
        ignored_block_size_range: [2, 3],
        n_concrete_samples: 2000,
        n_joint_samples: 50,
        seed: 7,
        ..ScenarioConfig::default()
    };
    let sc = generate(&cfg).expect("scenario");
    let k = PriorKnowledge::empty(sc.d());
    let mut group = c.benchmark_group("direct_lingam");
    group.sample_size(10);
    for parallel in [false, true] {
        let dcfg = DiscoveryConfig {
            parallel,
            ..DiscoveryConfig::default()
        };
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_with_input(BenchmarkId::new(label, sc.d()), &dcfg, |bch, dcfg| {
            bch.iter(|| direct_lingam(&sc.d_l, &k, dcfg).expect("discovery"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_direct_lingam);
criterion_main!(benches);

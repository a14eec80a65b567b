use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use taskprio::gaussians::{em_fit, EmOptions, Init};
use taskprio::priority::project_demo;
use taskprio::sim::experiments::{bimanual_hierarchies, priority_demos, PriorityConfig};
use taskprio::sim::Side;
use taskprio::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn em(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let n = 20_000;
    let data = DMatrix::from_fn(n, 4, |r, col| {
        let shift = (r % 8) as f64 * 3.0 * if col % 2 == 0 { 1.0 } else { -1.0 };
        let z: f64 = StandardNormal.sample(&mut rng);
        shift + z
    });
    let mut group = c.benchmark_group("em_fit_k8_n20000");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = EmOptions {
            init: Init::KMeans,
            max_iter: 20,
            tol: 0.0,
            exec,
            ..EmOptions::with_k(8)
        };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, o| {
            b.iter(|| em_fit(&data, o).unwrap())
        });
    }
    group.finish();
}

fn projection(c: &mut Criterion) {
    let cfg = PriorityConfig {
        n_demos: 4,
        ..PriorityConfig::default()
    };
    let (_, demos, _) = priority_demos(&cfg, Side::Left).unwrap();
    let hierarchies = bimanual_hierarchies();
    let mut group = c.benchmark_group("priority_projection_4x2001");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| project_demo(&demos, &hierarchies, cfg.damping, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, em, projection);
criterion_main!(benches);

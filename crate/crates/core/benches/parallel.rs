use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use poreuq::bayesnet::{ModelKind, PriorModel};
use poreuq::density::{kde_2d, padded_axis};
use poreuq::geometry::HyperRanges;
use poreuq::par;
use poreuq::rng::StreamFactory;
use poreuq::surrogate::{training_responses, PcBasis, PcSurrogate, Qoi, SolverConfig};

const MODES: [(&str, bool); 2] = [("sequential", true), ("parallel", false)];

fn bench_kde(c: &mut Criterion) {
    let f = StreamFactory::new(1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..200_000u64)
        .map(|k| {
            let [u, v] = f.uniforms::<2>(k);
            (u, u * u + 0.1 * v)
        })
        .unzip();
    let (ax, ay) = (padded_axis(&xs, 0.02, 128), padded_axis(&ys, 0.02, 128));
    let mut g = c.benchmark_group("kde_2d_200k");
    g.sample_size(10);
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| kde_2d(&xs, &ys, 0.02, 0.02, &ax, &ay).unwrap())
        });
    }
    g.finish();
    par::set_sequential(false);
}

fn bench_solves(c: &mut Criterion) {
    let batch = PriorModel::new(ModelKind::P1, HyperRanges::narrow()).sample(16, 2).unwrap();
    let solver = SolverConfig {
        resolution: 48,
        ..SolverConfig::default()
    };
    let mut g = c.benchmark_group("training_solves_16x48");
    g.sample_size(10);
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| training_responses(&batch, |_, p| solver.solve(p)))
        });
    }
    g.finish();
    par::set_sequential(false);
}

fn bench_surrogate(c: &mut Criterion) {
    let basis = PcBasis::default();
    let coefs = (0..basis.len()).map(|k| 1.0 / (1.0 + k as f64)).collect();
    let s = PcSurrogate::from_coefficients(Qoi::Dl, basis, coefs).unwrap();
    let f = StreamFactory::new(3);
    let zs: Vec<_> = (0..20_000u64).map(|k| f.uniforms::<4>(k)).collect();
    let mut g = c.benchmark_group("surrogate_eval_20k");
    g.sample_size(10);
    for (name, seq) in MODES {
        par::set_sequential(seq);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| s.eval_many(&zs)));
    }
    g.finish();
    par::set_sequential(false);
}

criterion_group!(benches, bench_kde, bench_solves, bench_surrogate);
criterion_main!(benches);

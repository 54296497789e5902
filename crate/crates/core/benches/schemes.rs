//! Sequential against rayon-parallel execution of the path loops.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use lbcdo::engine::{EngineConfig, LargeBasketPricer, Scheme};
use lbcdo::monte_carlo::{dataset_rows, simulate_basket, DatasetSpec, McCdsConfig};
use lbcdo::params::standard_tranches;
use lbcdo::single_name::invert_x0;
use lbcdo::synthetic::index_like_quotes;
use lbcdo::{Execution, ModelParams};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn setup() -> (ModelParams, Vec<f64>) {
    let p = ModelParams::new(0.015, 0.0543, 0.158).unwrap();
    let sched = p.schedule();
    let x0 = index_like_quotes().iter().map(|q| invert_x0(*q, p.beta(), &sched, p.lgd()).unwrap()).collect();
    (p, x0)
}

fn pricing(c: &mut Criterion) {
    let (p, x0) = setup();
    let tranches = standard_tranches();
    let mut g = c.benchmark_group("price_1000_paths");
    g.sample_size(10);
    for scheme in [Scheme::Dm, Scheme::Theta, Scheme::Em] {
        for (name, exec) in MODES {
            let cfg = EngineConfig {
                paths: 1000,
                exec,
                ..Default::default()
            };
            let pricer = LargeBasketPricer::for_schedule(cfg, &p.schedule()).unwrap();
            // warm the propagator cache so DM times the evolution only
            pricer.price(scheme, &p, &x0, &tranches).unwrap();
            g.bench_with_input(BenchmarkId::new(scheme.label(), name), &scheme, |b, s| {
                b.iter(|| pricer.price(*s, &p, &x0, &tranches).unwrap())
            });
        }
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let (p, x0) = setup();
    let spec = DatasetSpec {
        samples: 8,
        mc: McCdsConfig {
            paths: 2000,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("basket_2000_paths", name), |b| {
            b.iter(|| simulate_basket(&p, &x0, 2000, 1, exec).unwrap())
        });
        g.bench_function(BenchmarkId::new("dataset_8_rows", name), |b| b.iter(|| dataset_rows(&spec, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, pricing, monte_carlo);
criterion_main!(benches);

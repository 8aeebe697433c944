//! Sweep throughput: sequential loop vs rayon fan-out over sweep points.
//! One scenario integrates sequentially either way; the parallelism is
//! across independent sweep points.

use criterion::{criterion_group, criterion_main, Criterion};
use gfm_core::scenario::{instantiate, run_scenario, ConverterCfg, ScenarioConfig};

fn template() -> serde_json::Value {
    let cfg = serde_json::json!({
        "name": "bench_sweep_point",
        "converter": serde_json::to_value(ConverterCfg::nominal()).unwrap(),
        "controller": { "type": "matching" },
        "load": [{ "t_start_seconds": 0.0, "g_siemens": 0.1, "b_siemens": 0.0 }],
        "sim": { "dt_seconds": 1e-6, "t_end_seconds": 0.02, "record_every": 20 }
    });
    // sanity: the template must deserialize
    let _: ScenarioConfig = serde_json::from_value(cfg.clone()).unwrap();
    cfg
}

fn values() -> Vec<f64> {
    (0..8).map(|k| 0.05 + 0.05 * k as f64).collect()
}

fn bench_sweep(c: &mut Criterion) {
    let tpl = template();
    let vals = values();
    let mut group = c.benchmark_group("resistive_sweep_8pt");
    group.sample_size(10);

    group.bench_function("sequential", |b| {
        b.iter(|| {
            for &v in &vals {
                let cfg = instantiate(&tpl, "/load/0/g_siemens", v).unwrap();
                std::hint::black_box(run_scenario(&cfg).unwrap());
            }
        })
    });

    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        use rayon::prelude::*;
        b.iter(|| {
            vals.par_iter().for_each(|&v| {
                let cfg = instantiate(&tpl, "/load/0/g_siemens", v).unwrap();
                std::hint::black_box(run_scenario(&cfg).unwrap());
            })
        })
    });

    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);

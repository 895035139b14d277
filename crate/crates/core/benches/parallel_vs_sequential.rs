//! Data-parallel kernels on a one-thread pool against the default pool.
//! Build with `--no-default-features` to time the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::ThreadPool;
use vi_aoa::baselines::music_estimate;
use vi_aoa::harness::{run_benchmark, Scenario};
use vi_aoa::landscape::{evaluate_surface, SurfaceAxis, SurfaceParameter, SurfaceScenario};
use vi_aoa::preprocess::{correlation_scan, sector_grid, Sector};
use vi_aoa::signal::{sample_channel, synthesize_observation, AoAVector, ArrayConfig, ChannelPrior, ObservationSet};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let build = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    vec![("one-thread", build(1)), ("default", build(0))]
}

fn observation() -> ObservationSet {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let array = ArrayConfig::new(32, 0.5).unwrap();
    let aoas = AoAVector::from_degrees(&[-20.0, 10.0, 35.0]).unwrap();
    let prior = ChannelPrior::iid(3, Complex64::new(1.0, 0.0), 1.0).unwrap();
    let channel = sample_channel(&prior, 40, &mut rng).unwrap();
    synthesize_observation(&array, &aoas, &channel, 0.3, &mut rng).unwrap()
}

fn kernels(c: &mut Criterion) {
    let obs = observation();
    let grid = sector_grid(&Sector::from_degrees(0.0, 120.0).unwrap(), 0.01f64.to_radians()).unwrap();
    let surface_axes = [
        SurfaceAxis::new(SurfaceParameter::Aoa, 0, -1.5, 1.5, 400).unwrap(),
        SurfaceAxis::new(SurfaceParameter::PathAngleOffset, 0, -3.1, 3.1, 100).unwrap(),
    ];
    let surface = SurfaceScenario {
        array: ArrayConfig::new(32, 2.0).unwrap(),
        true_aoas: AoAVector::from_degrees(&[11.0]).unwrap(),
        true_gains: DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)),
        noise_variance: 0.0,
    };
    let scenario = Scenario::from_json(
        r#"{"array": {"n_antennas": 32, "spacing_ratio": 0.5}, "users": 2, "aoas_deg": "random-in-sector",
            "snr_db": [0, 10], "n_trials": 4, "seed": 3, "snapshots": 40, "grid_step_deg": 0.05,
            "nms_radius_deg": 5}"#,
    )
    .unwrap();

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("correlation_scan", name), |b| {
            pool.install(|| b.iter(|| correlation_scan(&obs, &grid)))
        });
        group.bench_function(BenchmarkId::new("music_spectrum", name), |b| {
            pool.install(|| b.iter(|| music_estimate(&obs, &grid, 3).unwrap()))
        });
        group.bench_function(BenchmarkId::new("loss_surface", name), |b| {
            pool.install(|| b.iter(|| evaluate_surface(&surface_axes, &surface).unwrap()))
        });
        group.bench_function(BenchmarkId::new("benchmark_trials", name), |b| {
            pool.install(|| b.iter(|| run_benchmark(&scenario).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);

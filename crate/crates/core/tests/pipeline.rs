use std::path::Path;

use vi_aoa::harness::benchmark::{MUSIC_LS, PROPOSED};
use vi_aoa::harness::{run_benchmark, run_landscape_export, Scenario};
use vi_aoa::landscape::enumerate_global_optima;

fn scenario(body: &str) -> Scenario {
    Scenario::from_json(body).unwrap()
}

#[test]
fn noiseless_benchmark_recovers_angles() {
    let s = scenario(
        r#"{"array": {"n_antennas": 16, "spacing_ratio": 0.5}, "users": 2, "aoas_deg": "random-in-sector",
            "min_separation_deg": 15, "snr_db": ["inf"], "n_trials": 5, "seed": 3, "snapshots": 8,
            "grid_step_deg": 0.05, "nms_radius_deg": 5}"#,
    );
    let report = run_benchmark(&s).unwrap();
    let row = report.rows.iter().find(|r| r.method == PROPOSED).unwrap();
    assert_eq!(row.failures, 0);
    assert!(row.mse_aoa < 1e-8, "{}", row.mse_aoa);
    assert!(row.mse_path_gain < 1e-8, "{}", row.mse_path_gain);
}

/// One-sided Mann–Whitney z statistic for "`b` tends to exceed `a`".
fn mann_whitney_z(a: &[f64], b: &[f64]) -> f64 {
    let u: f64 = a
        .iter()
        .flat_map(|x| b.iter().map(move |y| if y > x { 1.0 } else if y == x { 0.5 } else { 0.0 }))
        .sum();
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    (u - n1 * n2 / 2.0) / (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt()
}

#[test]
fn error_decreases_with_snr() {
    let s = scenario(
        r#"{"array": {"n_antennas": 32, "spacing_ratio": 0.5}, "users": 1, "aoas_deg": "random-in-sector",
            "snr_db": [0, 5, 10, 15, 20], "n_trials": 40, "seed": 11, "snapshots": 40, "grid_step_deg": 0.02}"#,
    );
    let report = run_benchmark(&s).unwrap();
    let errors = |snr: f64| -> Vec<f64> {
        report
            .trials
            .iter()
            .filter(|t| t.method == PROPOSED && t.snr_db.0 == snr)
            .map(|t| t.max_abs_aoa_error)
            .collect()
    };
    let levels = [0.0, 5.0, 10.0, 15.0, 20.0];
    for w in levels.windows(2) {
        // Errors at the higher SNR must not be significantly larger.
        let z = mann_whitney_z(&errors(w[0]), &errors(w[1]));
        assert!(z < 2.33, "{} dB -> {} dB: z = {z}", w[0], w[1]);
    }
    let mse: Vec<f64> = report.rows.iter().filter(|r| r.method == PROPOSED).map(|r| r.mse_aoa).collect();
    assert!(mse[4] < mse[0] / 10.0);
    assert!(report.rows.iter().all(|r| r.mse_aoa >= 0.0 && r.mse_path_gain >= 0.0 && r.mse_path_angle >= 0.0));
    assert!(report.rows.iter().any(|r| r.method == MUSIC_LS));
}

fn load(name: &str) -> Scenario {
    Scenario::from_path(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)).unwrap()
}

/// Local minima of the one-dimensional surface whose loss sits at the
/// global floor, one per basin.
fn basins(name: &str) -> (usize, usize) {
    let mut s = load(name);
    s.landscape.noise_variance = 1.0;
    let report = run_landscape_export(&s).unwrap();
    let line = report.surfaces.iter().find(|x| x.spec.name == "aoa").unwrap();
    let floor = line.surface.values.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = line.surface.values.iter().cloned().fold(0.0, f64::max) - floor;
    let count = line
        .surface
        .local_minima()
        .into_iter()
        .filter(|&i| line.surface.values[i] - floor < 0.01 * spread)
        .count();
    let truth = s.true_angle_for_landscape().unwrap();
    (count, enumerate_global_optima(&s.array, truth).unwrap().len())
}

#[test]
fn surface_basins_match_enumerated_optima() {
    assert_eq!(basins("fig2a.json"), (1, 1));
    assert_eq!(basins("fig2c.json"), (4, 4));
}

#[test]
fn stationary_export_satisfies_condition() {
    let report = run_landscape_export(&load("fig2a.json")).unwrap();
    assert!(report.stationary.residuals.iter().all(|&r| r < 1e-8));
    assert!(report.stationary.angles.len() > 10);
}

#[cfg(feature = "parallel")]
#[test]
fn thread_count_does_not_change_results() {
    let s = scenario(
        r#"{"array": {"n_antennas": 16, "spacing_ratio": 0.5}, "users": 2, "aoas_deg": "random-in-sector",
            "snr_db": [0, 10], "n_trials": 4, "seed": 5, "snapshots": 12, "grid_step_deg": 0.05,
            "nms_radius_deg": 5}"#,
    );
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| run_benchmark(&s).unwrap());
    let four = pool(4).install(|| run_benchmark(&s).unwrap());
    assert_eq!(one.rows.len(), four.rows.len());
    for (a, b) in one.trials.iter().zip(&four.trials) {
        assert_eq!(a.estimated_aoas, b.estimated_aoas);
        assert_eq!(a.aoa_sq_error.to_bits(), b.aoa_sq_error.to_bits());
    }
}

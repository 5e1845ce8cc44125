use std::sync::Arc;

use mesugaki::diagnostics::{chi_square_poisson, exp1_cdf, ks_one_sample, martingale_test, time_change_residuals};
use mesugaki::ensemble::{mean_and_se, run_paths};
use mesugaki::history::{DrivingPath, JumpEvent, PathHistory, TimeGrid};
use mesugaki::point_process::{
    compensator_at, intensity_at, simulate_counting, IntensityModel, Kernel, RateBound, RateFn,
};
use mesugaki::Error;

/// `E λ(t)` for an exponential Hawkes process solves
/// `g' = β(λ0 − g) + α g`, `g(0) = λ0`. RK4 for `g` and `∫g` together.
fn hawkes_mean_oracle(base: f64, alpha: f64, beta: f64, horizon: f64) -> f64 {
    let rhs = |g: f64| beta * (base - g) + alpha * g;
    let n = 20_000;
    let h = horizon / n as f64;
    let (mut g, mut acc) = (base, 0.0);
    for _ in 0..n {
        let k1 = rhs(g);
        let k2 = rhs(g + 0.5 * h * k1);
        let k3 = rhs(g + 0.5 * h * k2);
        let k4 = rhs(g + h * k3);
        let g1 = g + 0.5 * h * k1;
        let g2 = g + 0.5 * h * k2;
        let g3 = g + h * k3;
        acc += h / 6.0 * (g + 2.0 * g1 + 2.0 * g2 + g3);
        g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    acc
}

fn counts(model: &IntensityModel, horizon: f64, n: usize, seed: u64) -> Vec<f64> {
    run_paths(seed, n, |_, rng| {
        Ok(simulate_counting(model, horizon, rng)?.len() as f64)
    })
    .unwrap()
}

#[test]
fn hawkes_oracle_matches_closed_form() {
    let closed = 2.0 * 5.0 - (1.0 - (-5.0f64).exp());
    assert!((hawkes_mean_oracle(1.0, 1.0, 2.0, 5.0) - closed).abs() < 1e-9);
    assert!((closed - 9.0067).abs() < 1e-4);
}

#[test]
fn poisson_counts_are_poisson() {
    let model = IntensityModel::homogeneous(2.0).unwrap();
    let n = counts(&model, 1.0, 20_000, 11);
    let (m, _) = mean_and_se(&n);
    assert!((m - 2.0).abs() <= 4.0 * (2.0f64 / 20_000.0).sqrt());
    let ints: Vec<u64> = n.iter().map(|&c| c as u64).collect();
    assert!(chi_square_poisson(&ints, 2.0).unwrap().pass);
}

#[test]
fn hawkes_mean_count() {
    let model = IntensityModel::hawkes(1.0, Kernel::exponential(1.0, 2.0).unwrap()).unwrap();
    let n = counts(&model, 5.0, 20_000, 12);
    let (m, se) = mean_and_se(&n);
    let oracle = hawkes_mean_oracle(1.0, 1.0, 2.0, 5.0);
    assert!((m - oracle).abs() <= 4.0 * se, "{m} vs {oracle} (se {se})");
}

#[test]
fn power_law_hawkes_uses_generic_thinning() {
    // ψ(u) = 0.5 (1 + u)^{-3}, ∫ψ = 0.25; E N_T ≈ λ0 T / (1 − 0.25) for large T
    let model = IntensityModel::hawkes(1.0, Kernel::power_law(0.5, 1.0, 3.0).unwrap()).unwrap();
    let n = counts(&model, 20.0, 4_000, 13);
    let (m, _) = mean_and_se(&n);
    assert!(m > 20.0 && m < 20.0 / 0.75 + 1.0, "{m}");
}

#[test]
fn unstable_hawkes_rejected() {
    let kernel = Kernel::exponential(2.0, 2.0).unwrap();
    assert!(matches!(
        IntensityModel::hawkes(1.0, kernel),
        Err(Error::UnstableKernel(_))
    ));
}

#[test]
fn hawkes_intensity_after_one_event() {
    let model = IntensityModel::hawkes(1.0, Kernel::exponential(1.0, 2.0).unwrap()).unwrap();
    let h = PathHistory::from_events(0.0, vec![JumpEvent::unit(0.5)]).unwrap();
    let r = intensity_at(&model, 1.0, &h).unwrap();
    assert!((r - (1.0 + (-1.0f64).exp())).abs() < 1e-12);
    // strict left limit at the event itself
    assert_eq!(intensity_at(&model, 0.5, &h).unwrap(), 1.0);
}

fn cox_model(horizon: f64) -> IntensityModel {
    let grid = TimeGrid::new(horizon, horizon / 200.0).unwrap();
    let path = DrivingPath::from_fn(&grid, |t| 2.0 * t).unwrap();
    IntensityModel::cox(
        RateFn::new(|x| 1.0 + x.sin().powi(2)),
        Arc::new(path),
        RateBound::Constant(2.0),
    )
}

fn martingale_suite(model: &IntensityModel, horizon: f64, n: usize, seed: u64) {
    let checkpoints = [horizon / 4.0, horizon / 2.0, horizon];
    let samples = run_paths(seed, n, |_, rng| {
        let events = simulate_counting(model, horizon, rng)?;
        let h = PathHistory::from_events(0.0, events)?;
        let lam = compensator_at(model, &h, &checkpoints, horizon / 400.0)?;
        Ok(checkpoints
            .iter()
            .zip(lam)
            .map(|(&t, l)| h.count_through(t) as f64 - l)
            .collect::<Vec<f64>>())
    })
    .unwrap();
    let summary = martingale_test(&checkpoints, &samples).unwrap();
    assert!(summary.pass, "{summary:?}");
}

#[test]
fn compensated_counts_are_martingales() {
    martingale_suite(&IntensityModel::homogeneous(2.0).unwrap(), 1.0, 10_000, 21);
    martingale_suite(&cox_model(2.0), 2.0, 10_000, 22);
    let hawkes = IntensityModel::hawkes(1.0, Kernel::exponential(1.0, 2.0).unwrap()).unwrap();
    martingale_suite(&hawkes, 5.0, 10_000, 23);
}

#[test]
fn wrong_compensator_is_caught() {
    let model = IntensityModel::homogeneous(2.0).unwrap();
    let samples = run_paths(24, 10_000, |_, rng| {
        let n = simulate_counting(&model, 1.0, rng)?.len() as f64;
        Ok(vec![n - 1.8])
    })
    .unwrap();
    assert!(!martingale_test(&[1.0], &samples).unwrap().pass);
}

fn residual_suite(model: &IntensityModel, horizon: f64, n: usize, seed: u64) {
    let paths = run_paths(seed, n, |_, rng| simulate_counting(model, horizon, rng)).unwrap();
    let (report, residuals) = time_change_residuals(&paths, horizon, |i, times| {
        let h = PathHistory::from_events(0.0, paths[i].clone())?;
        compensator_at(model, &h, times, horizon / 400.0)
    })
    .unwrap();
    assert!(residuals.len() >= 10_000);
    assert!(report.pass, "{report:?}");
}

#[test]
fn time_changed_residuals_are_exponential() {
    residual_suite(&IntensityModel::homogeneous(2.0).unwrap(), 1.0, 6_000, 31);
    residual_suite(&cox_model(2.0), 2.0, 4_000, 32);
    let hawkes = IntensityModel::hawkes(1.0, Kernel::exponential(1.0, 2.0).unwrap()).unwrap();
    residual_suite(&hawkes, 5.0, 1_500, 33);
    residual_suite(&hawkes, 200.0, 30, 34);
}

#[test]
fn per_path_pooling_would_be_biased() {
    // gaps kept inside each short window, without the boundary-straddling
    // gap, have density proportional to e^{-x}(1 + L - x)
    let model = IntensityModel::homogeneous(2.0).unwrap();
    let paths = run_paths(35, 6_000, |_, rng| simulate_counting(&model, 1.0, rng)).unwrap();
    let mut gaps = Vec::new();
    for p in &paths {
        let mut prev = 0.0;
        for e in p {
            gaps.push(2.0 * (e.time - prev));
            prev = e.time;
        }
    }
    assert!(!ks_one_sample(&gaps, exp1_cdf).pass);
}

#[test]
fn wrong_rate_fails_time_change() {
    let model = IntensityModel::homogeneous(2.0).unwrap();
    let paths = run_paths(36, 6_000, |_, rng| simulate_counting(&model, 1.0, rng)).unwrap();
    let (report, _) =
        time_change_residuals(&paths, 1.0, |_, times| Ok(times.iter().map(|t| 1.7 * t).collect())).unwrap();
    assert!(!report.pass);
}

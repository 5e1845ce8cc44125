use mesugaki::construction::simulate_mesugaki;
use mesugaki::diagnostics::martingale_test;
use mesugaki::ensemble::{mean_and_se, run_paths, sample_variance};
use mesugaki::integral::{compensated_at, integrate_compensated, integrate_jump, truncation_sweep, Integrand};
use mesugaki::marks::MarkDistribution;
use mesugaki::point_process::{IntensityModel, Kernel};
use mesugaki::wakarase::WakaraseMeasure;

fn compound_uniform(rate: f64) -> WakaraseMeasure {
    WakaraseMeasure::density(
        IntensityModel::homogeneous(rate).unwrap(),
        MarkDistribution::uniform(0.0, 1.0).unwrap(),
    )
}

/// Standard error of the sample variance from the fourth central moment.
fn variance_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).sqrt()
}

#[test]
fn compensated_integral_isometry() {
    let mu = compound_uniform(2.0);
    let theta = Integrand::identity();
    let xs = run_paths(101, 20_000, |_, rng| {
        let path = simulate_mesugaki(&mu, 1.0, rng)?;
        integrate_compensated(&theta, &mu, &path, 1.0, 0.01)
    })
    .unwrap();
    let (m, se) = mean_and_se(&xs);
    assert!(m.abs() <= 4.0 * se, "mean {m} se {se}");
    // E M² = λ T ∫ z² p(dz) = 2/3
    let v = sample_variance(&xs);
    assert!((v - 2.0 / 3.0).abs() <= 4.0 * variance_se(&xs), "variance {v}");
}

#[test]
fn jump_integral_of_identity_is_mark_sum() {
    let mu = compound_uniform(5.0);
    let mut rng = mesugaki::rng::derive_stream(3, 3);
    let path = simulate_mesugaki(&mu, 2.0, &mut rng).unwrap();
    let sum: f64 = path.events().iter().map(|e| e.mark).sum();
    assert_eq!(integrate_jump(&Integrand::identity(), &path), sum);
    assert_eq!(path.terminal_value(), sum);
}

#[test]
fn compensated_hawkes_integral_is_a_martingale() {
    let rate = IntensityModel::hawkes(1.0, Kernel::exponential(1.0, 2.0).unwrap()).unwrap();
    let mu = WakaraseMeasure::density(rate, MarkDistribution::exponential(2.0).unwrap());
    let theta = Integrand::mark_only(|z| z * z);
    let times = [1.0, 2.0, 4.0];
    let samples = run_paths(102, 10_000, |_, rng| {
        let path = simulate_mesugaki(&mu, 4.0, rng)?;
        compensated_at(&theta, &mu, &path, &times, 0.01)
    })
    .unwrap();
    let s = martingale_test(&times, &samples).unwrap();
    assert!(s.pass, "{s:?}");
}

#[test]
fn truncation_tail_bound() {
    // density z^{-1/2} on (0, 1], θ = z: the tail beyond window n is
    // ∫_0^{1/n} z^{3/2} dz = (2/5) n^{-5/2} per unit time
    let mu = WakaraseMeasure::power_law(1.0, -0.5, 0.0, 1.0).unwrap();
    let r = truncation_sweep(&Integrand::identity(), &mu, 1.0, 10_000, &[2.0, 4.0, 8.0], 103, 0.01).unwrap();
    for p in &r.pairs {
        let oracle = 0.4 * p.n.powf(-2.5);
        assert!((p.tail_bound - oracle).abs() < 1e-8, "{} vs {oracle}", p.tail_bound);
        assert!(p.empirical_l2_diff <= p.tail_bound + 4.0 * p.se, "{p:?}");
        assert!(!p.flag);
    }
}

#[test]
fn truncation_of_infinite_activity() {
    // density z^{-3/2} on (0, 1]: infinite activity, θ = z still square integrable
    let mu = WakaraseMeasure::power_law(0.2, -1.5, 0.0, 1.0).unwrap();
    let r = truncation_sweep(
        &Integrand::identity(),
        &mu,
        1.0,
        2_000,
        &[2.0, 4.0, 8.0, 16.0],
        104,
        0.01,
    )
    .unwrap();
    assert!(!r.any_flag(), "{r:?}");
    for p in &r.pairs {
        // shell moment 0.2 ∫_{1/m}^{1/n} z^{1/2} dz
        let oracle = 0.2 * (2.0 / 3.0) * (p.n.powf(-1.5) - p.m.powf(-1.5));
        assert!((p.shell_second_moment - oracle).abs() < 1e-8);
    }
}

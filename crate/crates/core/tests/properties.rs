use proptest::prelude::*;

use mesugaki::construction::{simulate_coupled, simulate_mesugaki};
use mesugaki::diagnostics::{ks_statistic, ks_two_sample_statistic, ucp_distance, StepPath};
use mesugaki::history::{JumpEvent, PathHistory};
use mesugaki::integral::{integrate_jump, Integrand};
use mesugaki::marks::{Interval, MarkDistribution};
use mesugaki::point_process::IntensityModel;
use mesugaki::rng::derive_stream;
use mesugaki::wakarase::{discretize, second_moment_deficit, MarkGrid, WakaraseMeasure};

fn event_times() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..100_000, 0..40).prop_map(|s| s.into_iter().map(|k| k as f64 / 10_000.0).collect())
}

fn history(times: &[f64]) -> PathHistory {
    PathHistory::from_events(0.0, times.iter().map(|&t| JumpEvent::unit(t)).collect()).unwrap()
}

/// KS statistic by checking both one-sided gaps at every sample point.
fn brute_ks(xs: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for &x in xs {
        let below = xs.iter().filter(|&&y| y < x).count() as f64 / n;
        let through = xs.iter().filter(|&&y| y <= x).count() as f64 / n;
        d = d.max((through - cdf(x)).abs()).max((cdf(x) - below).abs());
    }
    d
}

fn brute_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |s: &[f64], x: f64| s.iter().filter(|&&y| y <= x).count() as f64 / s.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn history_before_is_strict(times in event_times(), t in 0.0f64..11.0) {
        let h = history(&times).history_before(t).unwrap();
        prop_assert!(h.events().iter().all(|e| e.time < t));
        prop_assert_eq!(h.len(), times.iter().filter(|&&s| s < t).count());
    }

    #[test]
    fn jump_integral_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mu = WakaraseMeasure::density(
            IntensityModel::homogeneous(4.0).unwrap(),
            MarkDistribution::uniform(-2.0, 3.0).unwrap(),
        );
        let path = simulate_mesugaki(&mu, 1.0, &mut derive_stream(seed, 0)).unwrap();
        let f = Integrand::mark_only(|z| z * z);
        let g = Integrand::new(|t, z, v| t * z + v.len() as f64);
        let combo = Integrand::linear_combination(a, &f, b, &g);
        let lhs = integrate_jump(&combo, &path);
        let rhs = a * integrate_jump(&f, &path) + b * integrate_jump(&g, &path);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
    }

    #[test]
    fn ks_matches_brute_force(xs in prop::collection::vec(0.0f64..5.0, 1..60)) {
        let cdf = |x: f64| 1.0 - (-x).exp();
        prop_assert!((ks_statistic(&xs, cdf) - brute_ks(&xs, cdf)).abs() < 1e-12);
    }

    #[test]
    fn two_sample_ks_matches_brute_force(
        a in prop::collection::vec(0u8..20, 1..40),
        b in prop::collection::vec(0u8..20, 1..40),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        prop_assert!((ks_two_sample_statistic(&a, &b) - brute_two_sample(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn grid_shape(n in 1usize..12) {
        let g = MarkGrid::at_level(n).unwrap();
        prop_assert_eq!(g.len(), (1 << n) - 1);
        prop_assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        let next = g.refine();
        // every point survives refinement
        prop_assert!(g.points().iter().all(|z| next.points().contains(z)));
    }

    #[test]
    fn discretized_mass_never_exceeds_total(n in 1usize..9, rate in 0.1f64..5.0, scale in 0.1f64..4.0) {
        let mu = WakaraseMeasure::density(
            IntensityModel::homogeneous(rate).unwrap(),
            MarkDistribution::exponential(1.0 / scale).unwrap(),
        );
        let grid = MarkGrid::at_level(n).unwrap();
        let h = PathHistory::new(0.0);
        let d = discretize(&mu, &grid, 0.0, &h).unwrap();
        prop_assert!(d.total() <= rate * (1.0 + 1e-12));
        prop_assert!((d.total() + d.dropped_low - rate).abs() <= 1e-9 * rate);
        prop_assert!(second_moment_deficit(&mu, &grid, 0.0, &h.view_all()).unwrap() >= -1e-12);
    }

    #[test]
    fn coupling_is_monotone(seed in any::<u64>()) {
        let mu = WakaraseMeasure::density(
            IntensityModel::homogeneous(3.0).unwrap(),
            MarkDistribution::exponential(0.7).unwrap(),
        );
        let fam = simulate_coupled(&mu, 5, 1.0, &derive_stream(seed, 0)).unwrap();
        prop_assert!(fam.jumps_monotone());
        for n in 1..5 {
            prop_assert!(fam.difference_nondecreasing(n, 5));
        }
    }

    #[test]
    fn window_shell_consistency(lo in 0.01f64..1.0, mid in 1.0f64..3.0, hi in 3.0f64..8.0) {
        let mu = WakaraseMeasure::power_law(1.0, -0.5, 0.0, 10.0).unwrap();
        let v = PathHistory::new(0.0);
        let m = |i: Interval| mu.mass(&i, 0.0, &v.view_all()).unwrap();
        let whole = m(Interval::closed_open(lo, hi));
        let parts = m(Interval::closed_open(lo, mid)) + m(Interval::closed_open(mid, hi));
        prop_assert!((whole - parts).abs() < 1e-9 * (1.0 + whole));
    }

    #[test]
    fn ucp_is_a_metric(a in event_times(), b in event_times(), c in event_times()) {
        let path = |ts: &[f64]| StepPath::from_jumps(&ts.iter().map(|&t| JumpEvent::unit(t)).collect::<Vec<_>>());
        let (x, y, z) = (path(&a), path(&b), path(&c));
        let d = |p: &StepPath, q: &StepPath| ucp_distance(p, q, 10.0);
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z));
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), id in any::<u64>()) {
        let mut a = derive_stream(seed, id);
        let mut b = derive_stream(seed, id);
        for _ in 0..8 {
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }
}

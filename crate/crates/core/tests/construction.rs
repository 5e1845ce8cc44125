use std::sync::Arc;

use mesugaki::construction::{
    diagnose_convergence, simulate_coupled, simulate_level, simulate_mesugaki, split_probability,
};
use mesugaki::diagnostics::ks_two_sample;
use mesugaki::ensemble::run_paths;
use mesugaki::history::PathHistory;
use mesugaki::marks::MarkDistribution;
use mesugaki::point_process::{IntensityModel, Kernel};
use mesugaki::rng::derive_stream;
use mesugaki::wakarase::{refine_grid, MarkGrid, WakaraseMeasure};
use mesugaki::Error;

fn unit_density() -> WakaraseMeasure {
    WakaraseMeasure::density(
        IntensityModel::homogeneous(1.0).unwrap(),
        MarkDistribution::uniform(0.0, 1.0).unwrap(),
    )
}

/// `∫ z² (μ − μ_n)` for the uniform law on (0, 1) at unit rate, from the
/// grid points alone.
fn uniform_deficit(level: usize) -> f64 {
    let pts = MarkGrid::at_level(level).unwrap().points().to_vec();
    let mut discrete = 0.0;
    for (k, &z) in pts.iter().enumerate() {
        let hi = pts.get(k + 1).copied().unwrap_or(f64::INFINITY).min(1.0);
        if hi > z {
            discrete += z * z * (hi - z);
        }
    }
    1.0 / 3.0 - discrete
}

#[test]
fn grid_recursion() {
    let z2 = refine_grid(&MarkGrid::level_one());
    assert_eq!(z2.points(), &[0.5, 1.0, 2.0]);
    assert_eq!(refine_grid(&z2).points(), &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0]);
    let mut g = MarkGrid::level_one();
    for n in 1..=12 {
        assert_eq!(g.len(), (1 << n) - 1);
        assert_eq!(g.min(), 0.5f64.powi(n - 1));
        assert_eq!(g.max(), n as f64);
        g = g.refine();
    }
}

#[test]
fn step_one_bound_holds() {
    assert!((uniform_deficit(2) - 0.208_333_333_333_333_3).abs() < 1e-15);
    let r = diagnose_convergence(&unit_density(), &[2, 4, 6], 1.0, 4_000, 5, 0.01).unwrap();
    for p in &r.pairs {
        let oracle = uniform_deficit(p.n);
        assert!((p.bound - oracle).abs() < 1e-9, "bound {} vs {oracle}", p.bound);
        assert!(p.empirical_l2 <= p.bound + 4.0 * p.standard_error, "{p:?}");
        assert!(!p.violation_flag);
    }
}

#[test]
fn point_mass_levels_agree() {
    let mu = WakaraseMeasure::density(
        IntensityModel::homogeneous(3.0).unwrap(),
        MarkDistribution::point_mass(1.0).unwrap(),
    );
    let r = diagnose_convergence(&mu, &[1, 2, 3, 4], 1.0, 500, 6, 0.01).unwrap();
    assert!(r.pairs.iter().all(|p| p.empirical_l2 == 0.0 && p.bound == 0.0));
}

#[test]
fn coupling_invariants_hold_per_path() {
    let measures = [
        unit_density(),
        WakaraseMeasure::density(
            IntensityModel::homogeneous(2.0).unwrap(),
            MarkDistribution::exponential(0.5).unwrap(),
        ),
        WakaraseMeasure::power_law(1.0, 1.5, 0.05, 4.0).unwrap(),
    ];
    for (k, mu) in measures.iter().enumerate() {
        for i in 0..200 {
            let fam = simulate_coupled(mu, 6, 1.0, &derive_stream(70 + k as u64, i)).unwrap();
            assert!(fam.jumps_monotone());
            for n in 1..6 {
                assert!(fam.difference_nondecreasing(n, n + 1));
                assert!(fam.difference_nondecreasing(1, n + 1));
            }
            assert_eq!(fam.reconstruction_error(), 0.0);
        }
    }
}

#[test]
fn coupled_level_has_the_discrete_marginal() {
    let mu = Arc::new(WakaraseMeasure::density(
        IntensityModel::homogeneous(2.0).unwrap(),
        MarkDistribution::exponential(1.0).unwrap(),
    ));
    let grid = MarkGrid::at_level(3).unwrap();
    let coupled = run_paths(81, 10_000, |_, rng| {
        Ok(simulate_coupled(&mu, 3, 1.0, rng)?.level(3).terminal_value())
    })
    .unwrap();
    let direct = run_paths(82, 10_000, |_, rng| {
        Ok(simulate_level(&mu, &grid, 1.0, rng)?.terminal_value())
    })
    .unwrap();
    let r = ks_two_sample(&coupled, &direct);
    assert!(r.p_value > 0.01, "{r:?}");
}

#[test]
fn split_probability_examples() {
    let mu = unit_density();
    let h = PathHistory::new(0.0);
    // cell [0.5, 1) of level 2 splits into [0.5, 0.75) and [0.75, 1)
    let grid = MarkGrid::at_level(2).unwrap();
    let p = split_probability(&mu, &grid, 0, 0.3, &h).unwrap();
    assert!((p - 0.5).abs() < 1e-12);
    // [1, 2) carries no mass
    assert!(matches!(
        split_probability(&mu, &grid, 1, 0.3, &h),
        Err(Error::UndefinedSplit { cell: 1, .. })
    ));
}

#[test]
fn infinite_activity_is_not_simulated_directly() {
    let mu = WakaraseMeasure::power_law(1.0, -1.5, 0.0, 1.0).unwrap();
    assert!(matches!(
        simulate_mesugaki(&mu, 1.0, &mut derive_stream(0, 0)),
        Err(Error::Unsupported(_))
    ));
}

#[test]
fn self_exciting_measure_couples() {
    let rate = IntensityModel::hawkes(1.0, Kernel::exponential(0.5, 2.0).unwrap()).unwrap();
    let mu = WakaraseMeasure::density(rate, MarkDistribution::uniform(0.0, 3.0).unwrap());
    let fam = simulate_coupled(&mu, 4, 2.0, &derive_stream(90, 0)).unwrap();
    assert!(fam.jumps_monotone());
    assert!(fam.difference_nondecreasing(1, 4));
}

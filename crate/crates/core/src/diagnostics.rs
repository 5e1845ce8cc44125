//! Statistical checks: martingale z-scores, mean identities, Kolmogorov–
//! Smirnov tests, chi-square goodness of fit and ucp distances.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::ensemble::mean_and_se;
use crate::error::{invalid, Result};
use crate::history::JumpEvent;

/// `|z|` threshold for martingale and mean tests.
pub const Z_THRESHOLD: f64 = 4.0;
/// Significance level for KS and chi-square tests.
pub const TEST_LEVEL: f64 = 0.01;
/// Minimum sample size for the martingale test and KS residual tests.
pub const MIN_SAMPLES: usize = 100;

const KOLMOGOROV_TERMS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointStat {
    pub time: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub z_score: f64,
}

/// Per-checkpoint mean, standard error and z-score of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub checkpoints: Vec<CheckpointStat>,
    pub sample_count: usize,
    pub pass: bool,
}

impl EnsembleSummary {
    pub fn max_abs_z(&self) -> f64 {
        self.checkpoints.iter().map(|c| c.z_score.abs()).fold(0.0, f64::max)
    }
}

fn z_score(mean: f64, se: f64) -> f64 {
    if se > 0.0 {
        mean / se
    } else if mean == 0.0 {
        0.0
    } else {
        mean.signum() * f64::INFINITY
    }
}

/// Tests whether a claimed martingale started at 0 has mean 0 at each
/// checkpoint. `samples[i][k]` is path `i` at `times[k]`. Passes iff every
/// `|z| <= 4`.
pub fn martingale_test(times: &[f64], samples: &[Vec<f64>]) -> Result<EnsembleSummary> {
    if samples.len() < MIN_SAMPLES {
        return Err(invalid(
            "samples",
            format!(
                "martingale test needs at least {MIN_SAMPLES} paths, got {}",
                samples.len()
            ),
        ));
    }
    if samples.iter().any(|s| s.len() != times.len()) {
        return Err(invalid("samples", "every path needs one value per checkpoint"));
    }
    let checkpoints: Vec<CheckpointStat> = times
        .iter()
        .enumerate()
        .map(|(k, &time)| {
            let column: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let (mean, standard_error) = mean_and_se(&column);
            CheckpointStat {
                time,
                mean,
                standard_error,
                z_score: z_score(mean, standard_error),
            }
        })
        .collect();
    let pass = checkpoints.iter().all(|c| c.z_score.abs() <= Z_THRESHOLD);
    Ok(EnsembleSummary {
        checkpoints,
        sample_count: samples.len(),
        pass,
    })
}

/// Comparison of two sample means against their combined standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanIdentityReport {
    pub mean_lhs: f64,
    pub mean_rhs: f64,
    pub combined_se: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// `E[lhs] = E[rhs]` within 4 combined standard errors.
pub fn mean_identity_test(lhs: &[f64], rhs: &[f64]) -> Result<MeanIdentityReport> {
    if lhs.len() < 2 || rhs.len() < 2 {
        return Err(invalid("samples", "need at least 2 values on each side"));
    }
    let (ml, sl) = mean_and_se(lhs);
    let (mr, sr) = mean_and_se(rhs);
    let combined_se = (sl * sl + sr * sr).sqrt();
    let z = z_score(ml - mr, combined_se);
    Ok(MeanIdentityReport {
        mean_lhs: ml,
        mean_rhs: mr,
        combined_se,
        z_score: z,
        pass: z.abs() <= Z_THRESHOLD,
    })
}

/// Kolmogorov–Smirnov test outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSReport {
    pub statistic: f64,
    pub sample_size: usize,
    pub p_value: f64,
    pub pass: bool,
    /// Too few observations for the asymptotic p-value to mean anything.
    pub inconclusive: bool,
}

impl KSReport {
    fn new(statistic: f64, effective_n: f64, sample_size: usize, min: usize) -> Self {
        let p_value = kolmogorov_survival(effective_n.sqrt() * statistic);
        let inconclusive = sample_size < min;
        KSReport {
            statistic,
            sample_size,
            p_value,
            pass: !inconclusive && p_value > TEST_LEVEL,
            inconclusive,
        }
    }
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(x: f64) -> f64 {
    if !(x > 0.0) {
        return 1.0;
    }
    if x < 1.0 {
        // Jacobi-transformed series converges fast for small x
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * x * x);
        let mut s = 0.0;
        for k in 0..KOLMOGOROV_TERMS {
            let j = (2 * k + 1) as f64;
            let term = (-j * j * c).exp();
            s += term;
            if term < 1e-300 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / x * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=KOLMOGOROV_TERMS {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * x * x).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// `sup_x |F_n(x) − F(x)|` from sorted data.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    d
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KSReport {
    let n = samples.len();
    if n == 0 {
        return KSReport::new(0.0, 0.0, 0, MIN_SAMPLES);
    }
    KSReport::new(ks_statistic(samples, cdf), n as f64, n, MIN_SAMPLES)
}

/// `sup_x |F_a(x) − F_b(x)|` for two samples; ties are handled by
/// advancing through equal values on both sides at once.
pub fn ks_two_sample_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Two-sample KS test. Discrete data make the asymptotic p-value
/// conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KSReport {
    if a.is_empty() || b.is_empty() {
        return KSReport::new(0.0, 0.0, 0, MIN_SAMPLES);
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    KSReport::new(
        ks_two_sample_statistic(a, b),
        n * m / (n + m),
        a.len().min(b.len()),
        MIN_SAMPLES,
    )
}

/// Exp(1) CDF.
pub fn exp1_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x).exp_m1()
    }
}

/// Time-changed inter-event gaps tested against Exp(1).
///
/// `compensator(i, times)` returns `Λ` of path `i` at the given times. Each
/// path maps to a unit-rate Poisson process on `[0, Λ_i(T)]`; the paths are
/// laid end to end so the gap straddling a boundary is
/// `Λ_i(T) − Λ_i(last) + Λ_{i+1}(first)`, and only the trailing gap is
/// censored. Pooling per-path gaps instead would favour short gaps.
pub fn time_change_residuals<F>(paths: &[Vec<JumpEvent>], horizon: f64, compensator: F) -> Result<(KSReport, Vec<f64>)>
where
    F: Fn(usize, &[f64]) -> Result<Vec<f64>>,
{
    let mut residuals = Vec::new();
    let mut carry = 0.0;
    for (i, events) in paths.iter().enumerate() {
        let mut times: Vec<f64> = events.iter().map(|e| e.time).collect();
        times.push(horizon);
        let lam = compensator(i, &times)?;
        let (&end, at_events) = lam
            .split_last()
            .ok_or_else(|| invalid("compensator", "returned no values"))?;
        let mut prev = 0.0;
        for &l in at_events {
            residuals.push(carry + l - prev);
            carry = 0.0;
            prev = l;
        }
        carry += end - prev;
    }
    Ok((ks_one_sample(&residuals, exp1_cdf), residuals))
}

/// Chi-square goodness of fit outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub pass: bool,
}

/// Goodness of fit of integer counts to Poisson(`mean`). Cells with
/// expected count below 5 are merged into their neighbours; the upper
/// tail forms the last cell.
pub fn chi_square_poisson(counts: &[u64], mean: f64) -> Result<ChiSquareReport> {
    if counts.is_empty() {
        return Err(invalid("counts", "empty sample"));
    }
    if !(mean > 0.0) {
        return Err(invalid("mean", "must be > 0"));
    }
    let n = counts.len() as f64;
    let max = *counts.iter().max().unwrap() as usize;
    let mut observed = vec![0.0; max + 2];
    for &c in counts {
        observed[c as usize] += 1.0;
    }
    let mut pmf = Vec::with_capacity(max + 2);
    let mut p = (-mean).exp();
    for k in 0..=max {
        pmf.push(p);
        p *= mean / (k + 1) as f64;
    }
    let tail = (1.0 - pmf.iter().sum::<f64>()).max(0.0);
    pmf.push(tail);

    // merge left to right until each cell expects >= 5
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for k in 0..pmf.len() {
        o += observed[k];
        e += pmf[k] * n;
        if e >= 5.0 {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    if cells.len() < 2 {
        return Err(invalid("counts", "too few observations for a chi-square test"));
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| invalid("dof", e.to_string()))?;
    let p_value = dist.sf(statistic);
    Ok(ChiSquareReport {
        statistic,
        degrees_of_freedom: dof,
        p_value,
        pass: p_value > TEST_LEVEL,
    })
}

/// A right-continuous piecewise-constant path: `values[k]` holds on
/// `[times[k], times[k+1])`, and `initial` before `times[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPath {
    pub initial: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepPath {
    pub fn new(initial: f64, times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(invalid("step_path", "times and values differ in length"));
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("step_path", "times must be nondecreasing"));
        }
        Ok(Self { initial, times, values })
    }

    /// `N_t = Σ_{τ_k <= t} z_k`.
    pub fn from_jumps(events: &[JumpEvent]) -> Self {
        let mut acc = 0.0;
        let values = events
            .iter()
            .map(|e| {
                acc += e.mark;
                acc
            })
            .collect();
        Self {
            initial: 0.0,
            times: events.iter().map(|e| e.time).collect(),
            values,
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match self.times.partition_point(|&s| s <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }
}

/// `sup_{0 <= t <= T} |X_t − Y_t|`, exact over the union of knots.
pub fn ucp_distance(x: &StepPath, y: &StepPath, horizon: f64) -> f64 {
    let mut d = (x.initial - y.initial).abs();
    for &t in x.times.iter().chain(&y.times) {
        if t <= horizon {
            d = d.max((x.value_at(t) - y.value_at(t)).abs());
        }
    }
    d
}

/// [`ucp_distance`] for each pair.
pub fn ucp_distances(pairs: &[(StepPath, StepPath)], horizon: f64) -> Vec<f64> {
    pairs.iter().map(|(x, y)| ucp_distance(x, y, horizon)).collect()
}

/// `sup_t |N^a_t − N^b_t|` for two jump paths starting at 0.
pub fn jump_sup_distance(a: &[JumpEvent], b: &[JumpEvent], horizon: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut va, mut vb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    loop {
        let ta = a.get(i).map_or(f64::INFINITY, |e| e.time);
        let tb = b.get(j).map_or(f64::INFINITY, |e| e.time);
        let t = ta.min(tb);
        if !(t <= horizon) {
            break;
        }
        while i < a.len() && a[i].time == t {
            va += a[i].mark;
            i += 1;
        }
        while j < b.len() && b[j].time == t {
            vb += b[j].mark;
            j += 1;
        }
        d = d.max((va - vb).abs());
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn kolmogorov_survival_reference_values() {
        // classical critical values
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 1e-3);
        assert!((kolmogorov_survival(0.5) - 0.9639).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        // the two series agree where both converge
        let x: f64 = 1.0;
        let small = {
            let c = std::f64::consts::PI.powi(2) / (8.0 * x * x);
            let s: f64 = (0..100).map(|k| (-((2 * k + 1) as f64).powi(2) * c).exp()).sum();
            1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
        };
        assert!((small - kolmogorov_survival(x)).abs() < 1e-12);
    }

    #[test]
    fn martingale_examples() {
        let zeros = vec![vec![0.0]; 100];
        let s = martingale_test(&[1.0], &zeros).unwrap();
        assert_eq!(s.checkpoints[0].z_score, 0.0);
        assert!(s.pass);
        assert!(martingale_test(&[1.0], &zeros[..50]).is_err());
    }

    #[test]
    fn chi_square_detects_wrong_mean() {
        let mut rng = derive_stream(4, 0);
        let counts: Vec<u64> = (0..20_000)
            .map(|_| {
                let mut t = rng.exp1();
                let mut k = 0;
                while t < 2.0 {
                    k += 1;
                    t += rng.exp1();
                }
                k
            })
            .collect();
        assert!(chi_square_poisson(&counts, 2.0).unwrap().pass);
        assert!(!chi_square_poisson(&counts, 2.2).unwrap().pass);
    }

    #[test]
    fn ks_exp_residuals() {
        let mut rng = derive_stream(8, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.exp1()).collect();
        assert!(ks_one_sample(&xs, exp1_cdf).pass);
        let doubled: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        assert!(!ks_one_sample(&doubled, exp1_cdf).pass);
        let few = ks_one_sample(&xs[..10], exp1_cdf);
        assert!(few.inconclusive && !few.pass);
    }

    #[test]
    fn two_sample_with_ties() {
        let a = [1.0, 1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 2.0, 3.0];
        assert!((ks_two_sample_statistic(&a, &b) - 0.25).abs() < 1e-15);
        assert_eq!(ks_two_sample_statistic(&a, &a), 0.0);
    }

    #[test]
    fn ucp_examples() {
        let a = vec![JumpEvent::unit(0.2), JumpEvent::unit(0.5)];
        let b = vec![JumpEvent::new(0.2, 1.5).unwrap()];
        assert_eq!(jump_sup_distance(&a, &a, 1.0), 0.0);
        assert_eq!(jump_sup_distance(&a, &b, 1.0), 0.5);
        assert_eq!(jump_sup_distance(&a, &b, 0.3), 0.5);
        let (x, y) = (StepPath::from_jumps(&a), StepPath::from_jumps(&b));
        assert_eq!(ucp_distance(&x, &y, 1.0), 0.5);
        assert_eq!(ucp_distance(&x, &x, 1.0), 0.0);
    }
}

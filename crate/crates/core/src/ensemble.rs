//! Parallel ensembles over independent per-path streams.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::{derive_stream, RngStream};

/// Runs `f` for path indices `0..n_paths`, path `i` receiving the stream
/// `(master_seed, i)`. Results come back in path order and do not depend
/// on the number of worker threads. The first error in path order wins.
pub fn run_paths<T, F>(master_seed: u64, n_paths: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut RngStream) -> Result<T> + Sync,
{
    let results: Vec<Result<T>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = derive_stream(master_seed, i as u64);
            f(i, &mut rng)
        })
        .collect();
    results.into_iter().collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
}

/// Median of a sample (average of the two middle values for even sizes).
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

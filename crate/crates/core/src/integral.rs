//! Pathwise and compensated integrals against the random measure of a
//! marked jump path.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construction::{simulate_mesugaki, MesugakiPath};
use crate::diagnostics::jump_sup_distance;
use crate::ensemble::{mean_and_se, median, run_paths};
use crate::error::{invalid, Error, Result};
use crate::history::{HistoryView, JumpEvent, PathHistory};
use crate::marks::Interval;
use crate::point_process::{self, compensator};
use crate::wakarase::WakaraseMeasure;

type Rule = Arc<dyn Fn(f64, f64, &HistoryView<'_>) -> f64 + Send + Sync>;

/// What an integrand reads besides the mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dependence {
    /// `θ(t, z, ω) = g(z)`.
    MarkOnly,
    General,
}

/// A predictable integrand `θ(t, z, F_{t−})` restricted to `|z| ∈ window`.
#[derive(Clone)]
pub struct Integrand {
    rule: Rule,
    window: Interval,
    dependence: Dependence,
    square_integrable: bool,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("window", &self.window)
            .field("dependence", &self.dependence)
            .field("square_integrable", &self.square_integrable)
            .finish()
    }
}

impl Integrand {
    /// General rule; the history view holds events strictly before `t`.
    pub fn new(rule: impl Fn(f64, f64, &HistoryView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rule: Arc::new(rule),
            window: Interval::positive(),
            dependence: Dependence::General,
            square_integrable: true,
        }
    }

    /// `θ(t, z) = g(z)`.
    pub fn mark_only(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rule: Arc::new(move |_, z, _| g(z)),
            window: Interval::positive(),
            dependence: Dependence::MarkOnly,
            square_integrable: true,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::mark_only(move |_| c)
    }

    /// `θ(t, z) = z`.
    pub fn identity() -> Self {
        Self::mark_only(|z| z)
    }

    /// Restricts to `|z| ∈ window` (intersected with any earlier window).
    pub fn with_window(mut self, window: Interval) -> Self {
        self.window = self.window.intersect(&window);
        self
    }

    /// Replaces the window by `(1/n, n)`.
    pub fn truncated(mut self, n: f64) -> Self {
        self.window = Interval::open(1.0 / n, n);
        self
    }

    /// Replaces the window.
    pub fn on_window(mut self, window: Interval) -> Self {
        self.window = window;
        self
    }

    /// Declares the integrand not square-integrable against the measure.
    pub fn not_square_integrable(mut self) -> Self {
        self.square_integrable = false;
        self
    }

    pub fn window(&self) -> Interval {
        self.window
    }

    pub fn dependence(&self) -> Dependence {
        self.dependence
    }

    pub fn is_square_integrable(&self) -> bool {
        self.square_integrable
    }

    /// `a θ₁ + b θ₂`; each term keeps its own window.
    pub fn linear_combination(a: f64, x: &Integrand, b: f64, y: &Integrand) -> Integrand {
        let (x2, y2) = (x.clone(), y.clone());
        let lo = x.window.lo.min(y.window.lo);
        let hi = x.window.hi.max(y.window.hi);
        Integrand {
            rule: Arc::new(move |t, z, v| a * x2.eval(t, z, v) + b * y2.eval(t, z, v)),
            window: Interval::new(lo, hi, true, true),
            dependence: if x.dependence == Dependence::MarkOnly && y.dependence == Dependence::MarkOnly {
                Dependence::MarkOnly
            } else {
                Dependence::General
            },
            square_integrable: x.square_integrable && y.square_integrable,
        }
    }

    /// `θ²`, same window.
    pub fn squared(&self) -> Integrand {
        let me = self.clone();
        Integrand {
            rule: Arc::new(move |t, z, v| {
                let x = (me.rule)(t, z, v);
                x * x
            }),
            ..self.clone()
        }
    }

    /// `θ(t, z, F_{t−})`, zero outside the window.
    #[inline]
    pub fn eval(&self, t: f64, z: f64, view: &HistoryView<'_>) -> f64 {
        if self.window.contains(z.abs()) {
            (self.rule)(t, z, view)
        } else {
            0.0
        }
    }
}

/// `∫∫ θ N(dt dz)`: the sum of `θ(τ_k, z_k, F_{τ_k−})` over the events.
pub fn integrate_jump(theta: &Integrand, path: &MesugakiPath) -> f64 {
    integrate_jump_until(theta, &path.history, path.horizon)
}

/// Jump integral over the events with `time <= t`.
pub fn integrate_jump_until(theta: &Integrand, history: &PathHistory, t: f64) -> f64 {
    let events = history.events();
    let k = history.count_through(t);
    let mut acc = 0.0;
    for (i, e) in events[..k].iter().enumerate() {
        if theta.window.contains(e.mark.abs()) {
            let view = HistoryView {
                events: &events[..i],
                driving: history.driving().map(|d| d.as_ref()),
                origin: history.origin(),
            };
            acc += (theta.rule)(e.time, e.mark, &view);
        }
    }
    acc
}

/// `∫_window θ(t, z) μ(dz; t, F_{t−})` at one time.
pub fn mark_integral(theta: &Integrand, mu: &WakaraseMeasure, t: f64, view: &HistoryView<'_>) -> Result<f64> {
    let mut acc = 0.0;
    for piece in theta.window.signed_pieces() {
        if piece.is_empty() {
            continue;
        }
        acc += mu.integrate(&|z| (theta.rule)(t, z, view), &piece, t, view)?;
    }
    Ok(acc)
}

/// `∫₀^T ∫_window θ(s, z) μ(dz; F_s) ds` along a realized history.
pub fn compensator_integral(
    theta: &Integrand,
    mu: &WakaraseMeasure,
    path: &MesugakiPath,
    horizon: f64,
    quad_step: f64,
) -> Result<f64> {
    compensator_integral_on(theta, mu, &path.history, horizon, quad_step)
}

pub fn compensator_integral_on(
    theta: &Integrand,
    mu: &WakaraseMeasure,
    history: &PathHistory,
    horizon: f64,
    quad_step: f64,
) -> Result<f64> {
    if !(horizon >= history.origin()) {
        return Err(invalid("horizon", "must not precede the history origin"));
    }
    if theta.window.is_empty() || horizon == history.origin() {
        return Ok(0.0);
    }
    let span = horizon - history.origin();
    let value = if theta.dependence == Dependence::MarkOnly {
        if mu.is_time_homogeneous() {
            mark_integral(theta, mu, history.origin(), &HistoryView::empty())? * span
        } else if let Some(v) = factorized(theta, mu, history, horizon, quad_step)? {
            v
        } else {
            point_process::path_integral(history, horizon, quad_step, &mu.driving_nodes(), |t, v| {
                mark_integral(theta, mu, t, v)
            })?
        }
    } else {
        point_process::path_integral(history, horizon, quad_step, &mu.driving_nodes(), |t, v| {
            mark_integral(theta, mu, t, v)
        })?
    };
    if !value.is_finite() {
        return Err(Error::Integrability(format!(
            "compensator integral over window {:?} diverges",
            theta.window
        )));
    }
    Ok(value)
}

/// `λ(t) p(dz)` with a history-free law: the mark integral factors out of
/// the time integral.
fn factorized(
    theta: &Integrand,
    mu: &WakaraseMeasure,
    history: &PathHistory,
    horizon: f64,
    quad_step: f64,
) -> Result<Option<f64>> {
    let WakaraseMeasure::DensityForm { rate, law } = mu else {
        return Ok(None);
    };
    if law.is_history_dependent() {
        return Ok(None);
    }
    let empty = HistoryView::empty();
    let mut per_unit = 0.0;
    for piece in theta.window.signed_pieces() {
        if !piece.is_empty() {
            per_unit += law.integrate(&|z| (theta.rule)(0.0, z, &empty), &piece, 0.0, &empty);
        }
    }
    if per_unit == 0.0 {
        return Ok(Some(0.0));
    }
    Ok(Some(per_unit * compensator(rate, history, horizon, quad_step)?))
}

/// Jump integral minus compensator on the integrand's window.
pub fn integrate_compensated(
    theta: &Integrand,
    mu: &WakaraseMeasure,
    path: &MesugakiPath,
    horizon: f64,
    quad_step: f64,
) -> Result<f64> {
    let jumps = integrate_jump_until(theta, &path.history, horizon);
    Ok(jumps - compensator_integral(theta, mu, path, horizon, quad_step)?)
}

/// Compensated integral at several times along one path.
pub fn compensated_at(
    theta: &Integrand,
    mu: &WakaraseMeasure,
    path: &MesugakiPath,
    times: &[f64],
    quad_step: f64,
) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            let h = path.history.history_before(t)?;
            let jumps = integrate_jump_until(theta, &path.history, t);
            Ok(jumps - compensator_integral_on(theta, mu, &h, t, quad_step)?)
        })
        .collect()
}

/// Consecutive truncation windows `(1/n, n)` and `(1/m, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPair {
    pub n: f64,
    pub m: f64,
    pub empirical_l2_diff: f64,
    pub se: f64,
    /// `E ∫∫_{(0, 1/n] ∪ [n, ∞)} θ² μ dz dt`.
    pub tail_bound: f64,
    /// The same integral over the shell between the two windows.
    pub shell_second_moment: f64,
    pub flag: bool,
}

/// Uncompensated large-jump integrals `L^n = ∫∫_{1 <= |z| <= n} θ N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeJumpStat {
    pub n: f64,
    /// Fraction of paths whose largest `|z|` is at most `n`, so that `L^n`
    /// already equals its limit.
    pub stabilized_fraction: f64,
    /// Median of `sup_t |L^n_t − L^{n_max}_t|`.
    pub median_sup_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub horizon: f64,
    pub n_paths: usize,
    pub windows: Vec<f64>,
    pub pairs: Vec<SweepPair>,
    pub large_jumps: Vec<LargeJumpStat>,
}

impl SweepReport {
    pub fn any_flag(&self) -> bool {
        self.pairs.iter().any(|p| p.flag)
    }
}

/// `θ²` on each piece separately, so no quadrature straddles a window edge.
fn squared_pieces(theta: &Integrand, pieces: [Interval; 2]) -> Vec<Integrand> {
    pieces
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(|p| theta.squared().on_window(p.intersect(&theta.window())))
        .collect()
}

/// Runs the compensated integrals `M^n` over the windows `(1/n, n)` on
/// shared paths and compares consecutive differences with the tail bound.
pub fn truncation_sweep(
    theta: &Integrand,
    mu: &WakaraseMeasure,
    horizon: f64,
    n_paths: usize,
    windows: &[f64],
    master_seed: u64,
    quad_step: f64,
) -> Result<SweepReport> {
    if windows.is_empty() || windows.windows(2).any(|w| !(w[1] > w[0])) || !(windows[0] >= 1.0) {
        return Err(invalid("windows", "need increasing n >= 1"));
    }
    if n_paths < 2 {
        return Err(invalid("n_paths", "need at least 2 paths"));
    }
    let n_max = *windows.last().unwrap();
    let simulated = if mu.has_finite_activity() {
        mu.clone()
    } else {
        mu.clone().restrict(Interval::open(1.0 / n_max, f64::INFINITY))
    };
    let thetas: Vec<Integrand> = windows.iter().map(|&n| theta.clone().truncated(n)).collect();
    let tails: Vec<Vec<Integrand>> = windows
        .iter()
        .map(|&n| {
            squared_pieces(
                theta,
                [Interval::open_closed(0.0, 1.0 / n), Interval::closed(n, f64::INFINITY)],
            )
        })
        .collect();
    let shells: Vec<Vec<Integrand>> = windows
        .windows(2)
        .map(|w| {
            squared_pieces(
                theta,
                [
                    Interval::open_closed(1.0 / w[1], 1.0 / w[0]),
                    Interval::closed_open(w[0], w[1]),
                ],
            )
        })
        .collect();
    let larges: Vec<Integrand> = windows
        .iter()
        .map(|&n| theta.clone().on_window(Interval::closed(1.0, n)))
        .collect();
    let history_free = !mu.is_history_dependent();
    let empty = PathHistory::new(0.0);
    let shared = |set: &[Vec<Integrand>]| -> Result<Vec<f64>> {
        set.iter()
            .map(|gs| {
                gs.iter()
                    .map(|g| compensator_integral_on(g, mu, &empty, horizon, quad_step))
                    .sum()
            })
            .collect()
    };
    let (shared_tails, shared_shells) = if history_free {
        (Some(shared(&tails)?), Some(shared(&shells)?))
    } else {
        (None, None)
    };

    struct PathStats {
        m: Vec<f64>,
        tails: Vec<f64>,
        shells: Vec<f64>,
        max_mark: f64,
        sup: Vec<f64>,
    }
    let stats = run_paths(master_seed, n_paths, |_, rng| {
        let path = simulate_mesugaki(&simulated, horizon, rng)?;
        let m = thetas
            .iter()
            .map(|th| integrate_compensated(th, mu, &path, horizon, quad_step))
            .collect::<Result<Vec<_>>>()?;
        let per_path = |set: &[Vec<Integrand>]| -> Result<Vec<f64>> {
            set.iter()
                .map(|gs| {
                    gs.iter()
                        .map(|g| compensator_integral(g, mu, &path, horizon, quad_step))
                        .sum()
                })
                .collect()
        };
        let tails = match &shared_tails {
            Some(v) => v.clone(),
            None => per_path(&tails)?,
        };
        let shells = match &shared_shells {
            Some(v) => v.clone(),
            None => per_path(&shells)?,
        };
        let jump_path = |th: &Integrand| -> Vec<JumpEvent> {
            let events = path.events();
            events
                .iter()
                .enumerate()
                .filter(|(_, e)| th.window.contains(e.mark.abs()))
                .map(|(i, e)| {
                    let view = HistoryView {
                        events: &events[..i],
                        driving: None,
                        origin: 0.0,
                    };
                    JumpEvent {
                        time: e.time,
                        mark: th.eval(e.time, e.mark, &view),
                    }
                })
                .collect()
        };
        let limit = jump_path(larges.last().unwrap());
        let sup = larges
            .iter()
            .map(|l| jump_sup_distance(&jump_path(l), &limit, horizon))
            .collect();
        let max_mark = path.events().iter().map(|e| e.mark.abs()).fold(0.0, f64::max);
        Ok(PathStats {
            m,
            tails,
            shells,
            max_mark,
            sup,
        })
    })?;

    let nf = n_paths as f64;
    let pairs = windows
        .windows(2)
        .enumerate()
        .map(|(k, w)| {
            let sq: Vec<f64> = stats.iter().map(|s| (s.m[k + 1] - s.m[k]).powi(2)).collect();
            let (l2, se) = mean_and_se(&sq);
            let tail_bound = stats.iter().map(|s| s.tails[k]).sum::<f64>() / nf;
            let shell = stats.iter().map(|s| s.shells[k]).sum::<f64>() / nf;
            SweepPair {
                n: w[0],
                m: w[1],
                empirical_l2_diff: l2,
                se,
                tail_bound,
                shell_second_moment: shell,
                flag: l2 > tail_bound + 4.0 * se,
            }
        })
        .collect();
    let large_jumps = windows
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let sups: Vec<f64> = stats.iter().map(|s| s.sup[k]).collect();
            LargeJumpStat {
                n,
                stabilized_fraction: stats.iter().filter(|s| s.max_mark <= n).count() as f64 / nf,
                median_sup_distance: median(&sups),
            }
        })
        .collect();
    Ok(SweepReport {
        horizon,
        n_paths,
        windows: windows.to_vec(),
        pairs,
        large_jumps,
    })
}

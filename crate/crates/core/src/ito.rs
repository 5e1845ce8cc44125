//! Numerical check of Itô's formula for jump semimartingales
//!
//! `X_t = X_0 + ∫ a ds + ∫ b dB + ∫∫_{|z|>=1} h1 N + ∫∫_{0<|z|<1} h2 Ñ`.
//!
//! The path is simulated once; `f(X_T)` is then compared with the Itô
//! right-hand side assembled from the same Brownian increments and the same
//! jump ledger.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construction::simulate_mesugaki;
use crate::ensemble::{median, run_paths};
use crate::error::{invalid, Error, Result};
use crate::history::{HistoryView, JumpEvent, TimeGrid};
use crate::marks::Interval;
use crate::rng::RngStream;
use crate::wakarase::WakaraseMeasure;

const BROWNIAN_TAG: u64 = 0x42_524f_574e;

/// Relative tolerance for the finite-difference check of `f′` and `f″`.
pub const DERIVATIVE_TOL: f64 = 1e-6;
/// Absolute tolerance for the exact (pure-jump and assembly) identities.
pub const EXACT_TOL: f64 = 1e-10;
/// Tolerance for linear `f`, where the residual is pure summation rounding.
pub const LINEAR_TOL: f64 = 1e-9;

/// Attached to every residual report.
pub const LEFT_LIMIT_NOTE: &str = "jump terms evaluate coefficients and f at the left limit X(t-) throughout";

/// The small/large split: `|z| >= 1` is large.
pub const JUMP_THRESHOLD: f64 = 1.0;

/// `|z| >= 1`.
pub fn is_large(z: f64) -> bool {
    z.abs() >= JUMP_THRESHOLD
}

type StateFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type JumpFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A coefficient `c(t, x)`.
#[derive(Clone)]
pub enum Coefficient {
    Zero,
    Constant(f64),
    /// `c · x`.
    Linear(f64),
    General(StateFn),
}

impl Coefficient {
    pub fn general(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::General(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match self {
            Coefficient::Zero => 0.0,
            Coefficient::Constant(c) => *c,
            Coefficient::Linear(c) => c * x,
            Coefficient::General(f) => f(t, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Coefficient::Zero => true,
            Coefficient::Constant(c) | Coefficient::Linear(c) => *c == 0.0,
            Coefficient::General(_) => false,
        }
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Zero => write!(f, "Zero"),
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Linear(c) => write!(f, "Linear({c})"),
            Coefficient::General(_) => write!(f, "General"),
        }
    }
}

/// A jump map `h(t, z, x)`.
#[derive(Clone)]
pub enum JumpMap {
    Zero,
    /// `z · (c0 + c1 x)`.
    Affine {
        c0: f64,
        c1: f64,
    },
    General(JumpFn),
}

impl JumpMap {
    /// `h(z) = z`.
    pub fn identity() -> Self {
        JumpMap::Affine { c0: 1.0, c1: 0.0 }
    }

    /// `h(z) = c` regardless of the mark.
    pub fn constant(c: f64) -> Self {
        JumpMap::general(move |_, _, _| c)
    }

    pub fn general(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        JumpMap::General(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, t: f64, z: f64, x: f64) -> f64 {
        match self {
            JumpMap::Zero => 0.0,
            JumpMap::Affine { c0, c1 } => z * (c0 + c1 * x),
            JumpMap::General(f) => f(t, z, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, JumpMap::Zero) || matches!(self, JumpMap::Affine { c0, c1 } if *c0 == 0.0 && *c1 == 0.0)
    }
}

impl fmt::Debug for JumpMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JumpMap::Zero => write!(f, "Zero"),
            JumpMap::Affine { c0, c1 } => write!(f, "Affine({c0} + {c1} x)"),
            JumpMap::General(_) => write!(f, "General"),
        }
    }
}

/// `∫_{0<|z|<1} h2(t, z, x) μ(dz; t, F)`, the drift that compensates the
/// small jumps.
pub(crate) fn small_jump_drift(
    h2: &JumpMap,
    mu: &WakaraseMeasure,
    t: f64,
    x: f64,
    view: &HistoryView<'_>,
) -> Result<f64> {
    if h2.is_zero() {
        return Ok(0.0);
    }
    let small = Interval::open(0.0, JUMP_THRESHOLD).signed_pieces();
    let mut acc = 0.0;
    match h2 {
        JumpMap::Affine { c0, c1 } => {
            for p in &small {
                acc += mu.integrate(&|z| z, p, t, view)?;
            }
            acc *= c0 + c1 * x;
        }
        _ => {
            for p in &small {
                acc += mu.integrate(&|z| h2.eval(t, z, x), p, t, view)?;
            }
        }
    }
    if !acc.is_finite() {
        return Err(Error::Integrability("small-jump compensator drift diverges".into()));
    }
    Ok(acc)
}

/// The semimartingale to simulate. `μ` may depend on the jump history but
/// not on `X` itself.
#[derive(Debug, Clone)]
pub struct SemimartingaleSpec {
    pub x0: f64,
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub h1: JumpMap,
    pub h2: JumpMap,
    pub mu: WakaraseMeasure,
}

impl SemimartingaleSpec {
    pub fn new(x0: f64, mu: WakaraseMeasure) -> Self {
        Self {
            x0,
            drift: Coefficient::Zero,
            diffusion: Coefficient::Zero,
            h1: JumpMap::identity(),
            h2: JumpMap::identity(),
            mu,
        }
    }

    pub fn with_drift(mut self, a: Coefficient) -> Self {
        self.drift = a;
        self
    }

    pub fn with_diffusion(mut self, b: Coefficient) -> Self {
        self.diffusion = b;
        self
    }

    pub fn with_jumps(mut self, h1: JumpMap, h2: JumpMap) -> Self {
        self.h1 = h1;
        self.h2 = h2;
        self
    }
}

/// One jump as applied to the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub mark: f64,
    pub large: bool,
    pub increment: f64,
    pub left_limit: f64,
}

/// One Euler substep on `[t, t + dt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerStep {
    pub t: f64,
    pub dt: f64,
    pub x: f64,
    pub drift: f64,
    /// Compensator drift `∫ h2 μ` already included in `drift`.
    pub compensator_drift: f64,
    pub diffusion: f64,
    pub db: f64,
}

/// A simulated path with its exact jump ledger and Euler increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemimartingalePath {
    pub x0: f64,
    pub horizon: f64,
    /// Knot times (grid nodes and jump times) with càdlàg values.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub ledger: Vec<JumpRecord>,
    pub steps: Vec<EulerStep>,
}

impl SemimartingalePath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().unwrap_or(&self.x0)
    }

    /// No continuous motion between jumps: drift (including the small-jump
    /// compensator) and diffusion vanish on every step. The Itô identity is
    /// then exact up to rounding.
    pub fn is_pure_jump(&self) -> bool {
        self.steps
            .iter()
            .all(|s| (s.drift * s.dt).abs() <= PURE_JUMP_DRIFT && s.diffusion * s.db == 0.0)
    }
}

/// Largest per-step drift increment still treated as no motion; absorbs
/// the rounding left by symmetric small-jump compensators.
const PURE_JUMP_DRIFT: f64 = 1e-14;

/// Merges grid nodes with jump times into the substep partition.
fn partition(grid: &TimeGrid, events: &[JumpEvent]) -> Vec<f64> {
    let mut knots: Vec<f64> = grid.nodes().collect();
    knots.extend(events.iter().map(|e| e.time));
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    knots
}

/// Euler steps for `a dt + b dB` with jumps inserted at their exact times.
/// Jump times come from the measure; Brownian increments from a dedicated
/// substream, so changing the grid leaves the jumps unchanged.
pub fn simulate_semimartingale(
    spec: &SemimartingaleSpec,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<SemimartingalePath> {
    let horizon = grid.horizon();
    let jumps = simulate_mesugaki(&spec.mu, horizon, rng)?;
    let events = jumps.events();
    let mut brownian = rng.substream(&[BROWNIAN_TAG]);
    let knots = partition(grid, events);
    let time_homogeneous = spec.mu.is_time_homogeneous();
    let cached_small = match (&spec.h2, time_homogeneous) {
        (JumpMap::Affine { .. }, true) | (JumpMap::Zero, _) => Some(small_jump_drift(
            &JumpMap::identity(),
            &spec.mu,
            0.0,
            0.0,
            &HistoryView::empty(),
        )?),
        _ => None,
    };

    let mut x = spec.x0;
    let mut times = vec![0.0];
    let mut values = vec![x];
    let mut ledger = Vec::with_capacity(events.len());
    let mut steps = Vec::with_capacity(knots.len());
    let mut next_event = 0;
    for w in knots.windows(2) {
        let (t, s) = (w[0], w[1]);
        let dt = s - t;
        let view = jumps.history.view_before(s);
        let comp = match (&spec.h2, cached_small) {
            (JumpMap::Zero, _) => 0.0,
            (JumpMap::Affine { c0, c1 }, Some(m1)) => m1 * (c0 + c1 * x),
            _ => small_jump_drift(&spec.h2, &spec.mu, t, x, &view)?,
        };
        let a = spec.drift.eval(t, x) - comp;
        let b = spec.diffusion.eval(t, x);
        let db = if spec.diffusion.is_zero() {
            0.0
        } else {
            dt.sqrt() * brownian.normal()
        };
        steps.push(EulerStep {
            t,
            dt,
            x,
            drift: a,
            compensator_drift: comp,
            diffusion: b,
            db,
        });
        x += a * dt + b * db;
        if next_event < events.len() && events[next_event].time == s {
            let e = events[next_event];
            let large = is_large(e.mark);
            let h = if large { &spec.h1 } else { &spec.h2 };
            let inc = h.eval(s, e.mark, x);
            ledger.push(JumpRecord {
                time: s,
                mark: e.mark,
                large,
                increment: inc,
                left_limit: x,
            });
            x += inc;
            next_event += 1;
        }
        if !x.is_finite() {
            return Err(Error::ContractViolation(format!("state left the real line at t = {s}")));
        }
        times.push(s);
        values.push(x);
    }
    Ok(SemimartingalePath {
        x0: spec.x0,
        horizon,
        times,
        values,
        ledger,
        steps,
    })
}

/// `f` with its first two derivatives.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    f: StateFn1,
    df: StateFn1,
    d2f: StateFn1,
}

type StateFn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({})", self.name)
    }
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            df: Arc::new(df),
            d2f: Arc::new(d2f),
        }
    }

    /// Derivatives by central differences.
    pub fn from_fn(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        let f: StateFn1 = Arc::new(f);
        let (f1, f2) = (Arc::clone(&f), Arc::clone(&f));
        Self {
            name: name.into(),
            f,
            df: Arc::new(move |x| {
                let h = 1e-5 * x.abs().max(1.0);
                (f1(x + h) - f1(x - h)) / (2.0 * h)
            }),
            d2f: Arc::new(move |x| {
                let h = 1e-4 * x.abs().max(1.0);
                (f2(x + h) - 2.0 * f2(x) + f2(x - h)) / (h * h)
            }),
        }
    }

    pub fn linear() -> Self {
        Self::new("linear", |x| x, |_| 1.0, |_| 0.0)
    }

    pub fn square() -> Self {
        Self::new("square", |x| x * x, |x| 2.0 * x, |_| 2.0)
    }

    pub fn cube() -> Self {
        Self::new("cube", |x| x * x * x, |x| 3.0 * x * x, |x| 6.0 * x)
    }

    pub fn log() -> Self {
        Self::new("log", f64::ln, |x| 1.0 / x, |x| -1.0 / (x * x))
    }

    pub fn exp() -> Self {
        Self::new("exp", f64::exp, f64::exp, f64::exp)
    }

    pub fn sin() -> Self {
        Self::new("sin", f64::sin, f64::cos, |x| -x.sin())
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "linear" => Self::linear(),
            "square" => Self::square(),
            "cube" => Self::cube(),
            "log" => Self::log(),
            "exp" => Self::exp(),
            "sin" => Self::sin(),
            _ => return None,
        })
    }

    #[inline]
    pub fn f(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    #[inline]
    pub fn df(&self, x: f64) -> f64 {
        (self.df)(x)
    }

    #[inline]
    pub fn d2f(&self, x: f64) -> f64 {
        (self.d2f)(x)
    }

    /// Compares `f′`, `f″` with central differences of `f` at `points`.
    pub fn check_derivatives(&self, points: &[f64]) -> Result<()> {
        for &x in points {
            let h1 = 1e-5 * x.abs().max(1.0);
            let fd1 = (self.f(x + h1) - self.f(x - h1)) / (2.0 * h1);
            let h2 = 1e-4 * x.abs().max(1.0);
            let fd2 = (self.f(x + h2) - 2.0 * self.f(x) + self.f(x - h2)) / (h2 * h2);
            let close = |a: f64, b: f64| (a - b).abs() <= DERIVATIVE_TOL * a.abs().max(b.abs()).max(1.0);
            if !close(self.df(x), fd1) {
                return Err(Error::ContractViolation(format!(
                    "{}: f'({x}) = {} but finite differences give {fd1}",
                    self.name,
                    self.df(x)
                )));
            }
            if !close(self.d2f(x), fd2) {
                return Err(Error::ContractViolation(format!(
                    "{}: f''({x}) = {} but finite differences give {fd2}",
                    self.name,
                    self.d2f(x)
                )));
            }
        }
        Ok(())
    }
}

/// `f(X_T)` against the Itô right-hand side on one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItoResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// `|Σ small − ([Σ small − C] + C)|`.
    pub assembly_gap: f64,
    pub pure_jump: bool,
}

/// Assembles the Itô right-hand side on a simulated path:
/// `f(X_0) + Σ f′(X)(a dt + b dB) + ½ Σ f″(X) b² dt + Σ_large (f(X−+h1) − f(X−)) +
/// [Σ_small (f(X−+h2) − f(X−)) − C] + C`,
/// where `a` already contains the small-jump compensator drift and `C` is
/// the compensator of the small-jump sum.
pub fn ito_rhs(spec: &SemimartingaleSpec, f: &TestFunction, path: &SemimartingalePath) -> Result<ItoResidual> {
    let mut continuous = 0.0;
    for s in &path.steps {
        continuous +=
            f.df(s.x) * (s.drift * s.dt + s.diffusion * s.db) + 0.5 * f.d2f(s.x) * s.diffusion * s.diffusion * s.dt;
    }
    let mut large = 0.0;
    let mut small = 0.0;
    for j in &path.ledger {
        let d = f.f(j.left_limit + j.increment) - f.f(j.left_limit);
        if j.large {
            large += d;
        } else {
            small += d;
        }
    }
    let comp = small_jump_compensator(spec, f, path)?;
    let compensated = (small - comp) + comp;
    let rhs = f.f(path.x0) + continuous + large + compensated;
    let lhs = f.f(path.terminal());
    Ok(ItoResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        assembly_gap: (small - compensated).abs(),
        pure_jump: path.is_pure_jump(),
    })
}

/// `∫∫_{0<|z|<1} (f(X + h2) − f(X)) μ dz dt`, left-point in time.
fn small_jump_compensator(spec: &SemimartingaleSpec, f: &TestFunction, path: &SemimartingalePath) -> Result<f64> {
    if spec.h2.is_zero() {
        return Ok(0.0);
    }
    let history = crate::history::PathHistory::from_events(
        0.0,
        path.ledger
            .iter()
            .map(|j| JumpEvent {
                time: j.time,
                mark: j.mark,
            })
            .collect(),
    )?;
    let small = Interval::open(0.0, JUMP_THRESHOLD).signed_pieces();
    let mut acc = 0.0;
    for s in &path.steps {
        let view = history.view_before(s.t + s.dt);
        let g = |z: f64| f.f(s.x + spec.h2.eval(s.t, z, s.x)) - f.f(s.x);
        for p in &small {
            acc += spec.mu.integrate(&g, p, s.t, &view)? * s.dt;
        }
    }
    Ok(acc)
}

/// Simulates one path and returns its Itô residual.
pub fn ito_residual(
    spec: &SemimartingaleSpec,
    f: &TestFunction,
    grid: &TimeGrid,
    rng: &mut RngStream,
) -> Result<ItoResidual> {
    let path = simulate_semimartingale(spec, grid, rng)?;
    ito_rhs(spec, f, &path)
}

/// Residuals over an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub function: String,
    pub dt: f64,
    pub max: f64,
    pub median: f64,
    pub max_assembly_gap: f64,
    /// Every path was pure jump, so `max` must be within [`EXACT_TOL`].
    pub pure_jump: bool,
    pub note: String,
    pub paths: Vec<ItoResidual>,
}

pub fn residual_ensemble(
    spec: &SemimartingaleSpec,
    f: &TestFunction,
    grid: &TimeGrid,
    n_paths: usize,
    master_seed: u64,
) -> Result<ResidualReport> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be >= 1"));
    }
    let paths = run_paths(master_seed, n_paths, |_, rng| ito_residual(spec, f, grid, rng))?;
    let res: Vec<f64> = paths.iter().map(|p| p.residual).collect();
    Ok(ResidualReport {
        function: f.name.clone(),
        dt: grid.step(),
        max: res.iter().copied().fold(0.0, f64::max),
        median: median(&res),
        max_assembly_gap: paths.iter().map(|p| p.assembly_gap).fold(0.0, f64::max),
        pure_jump: paths.iter().all(|p| p.pure_jump),
        note: LEFT_LIMIT_NOTE.into(),
        paths,
    })
}

/// Median and max residual per step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtLevel {
    pub dt: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtSweepReport {
    pub function: String,
    pub levels: Vec<DtLevel>,
    /// Median reduction per halving between consecutive levels,
    /// `(m_k / m_{k+1})^{1 / log2(dt_k / dt_{k+1})}`.
    pub per_halving: Vec<f64>,
    /// Log-log slope of the median residual against `dt`.
    pub slope: f64,
    pub required_per_halving: f64,
    pub pass: bool,
}

/// Reruns the residual ensemble for each step size in `dts` (decreasing).
pub fn dt_sweep(
    spec: &SemimartingaleSpec,
    f: &TestFunction,
    horizon: f64,
    dts: &[f64],
    n_paths: usize,
    master_seed: u64,
    required_per_halving: f64,
) -> Result<DtSweepReport> {
    if dts.len() < 2 || dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("dts", "need at least two decreasing step sizes"));
    }
    let levels = dts
        .iter()
        .map(|&dt| {
            let grid = TimeGrid::new(horizon, dt)?;
            let r = residual_ensemble(spec, f, &grid, n_paths, master_seed)?;
            Ok(DtLevel {
                dt,
                median: r.median,
                max: r.max,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_halving: Vec<f64> = levels
        .windows(2)
        .map(|w| (w[0].median / w[1].median).powf(1.0 / (w[0].dt / w[1].dt).log2()))
        .collect();
    let (first, last) = (levels[0], levels[levels.len() - 1]);
    let slope = (first.median / last.median).ln() / (first.dt / last.dt).ln();
    let pass = per_halving.iter().all(|&r| r >= required_per_halving);
    Ok(DtSweepReport {
        function: f.name.clone(),
        levels,
        per_halving,
        slope,
        required_per_halving,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marks::MarkDistribution;
    use crate::point_process::IntensityModel;
    use crate::rng::derive_stream;

    fn cp(rate: f64, law: MarkDistribution) -> WakaraseMeasure {
        WakaraseMeasure::density(IntensityModel::homogeneous(rate).unwrap(), law)
    }

    #[test]
    fn pure_jump_staircase() {
        let spec = SemimartingaleSpec::new(0.0, cp(1.0, MarkDistribution::point_mass(2.0).unwrap()));
        let grid = TimeGrid::new(3.0, 0.1).unwrap();
        let p = simulate_semimartingale(&spec, &grid, &mut derive_stream(1, 0)).unwrap();
        assert_eq!(p.terminal(), 2.0 * p.ledger.len() as f64);
        assert!(p.ledger.iter().all(|j| j.large && j.increment == 2.0));
    }

    #[test]
    fn constant_drift_is_exact() {
        let spec = SemimartingaleSpec::new(0.5, WakaraseMeasure::zero()).with_drift(Coefficient::Constant(1.0));
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        let p = simulate_semimartingale(&spec, &grid, &mut derive_stream(1, 0)).unwrap();
        assert!((p.terminal() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn hand_built_pure_jump_residual() {
        // jumps 1 at 0.3 and 2 at 0.7 from x = 0
        let spec = SemimartingaleSpec::new(0.0, WakaraseMeasure::zero());
        let path = SemimartingalePath {
            x0: 0.0,
            horizon: 1.0,
            times: vec![0.0, 0.3, 0.7, 1.0],
            values: vec![0.0, 1.0, 3.0, 3.0],
            ledger: vec![
                JumpRecord {
                    time: 0.3,
                    mark: 1.0,
                    large: true,
                    increment: 1.0,
                    left_limit: 0.0,
                },
                JumpRecord {
                    time: 0.7,
                    mark: 2.0,
                    large: true,
                    increment: 2.0,
                    left_limit: 1.0,
                },
            ],
            steps: vec![],
        };
        let r = ito_rhs(&spec, &TestFunction::square(), &path).unwrap();
        assert_eq!((r.lhs, r.rhs, r.residual), (9.0, 9.0, 0.0));
    }

    #[test]
    fn symmetric_small_jumps_have_no_drift() {
        let mu = cp(3.0, MarkDistribution::uniform(-2.0, 2.0).unwrap());
        let d = small_jump_drift(&JumpMap::identity(), &mu, 0.0, 0.0, &HistoryView::empty()).unwrap();
        assert!(d.abs() < 1e-14);
        let skew = cp(2.0, MarkDistribution::uniform(0.0, 1.0).unwrap());
        let d = small_jump_drift(&JumpMap::identity(), &skew, 0.0, 0.0, &HistoryView::empty()).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn builtin_derivatives_pass_check() {
        let pts = [0.3, 1.0, 2.5];
        for name in ["linear", "square", "cube", "log", "exp", "sin"] {
            TestFunction::by_name(name).unwrap().check_derivatives(&pts).unwrap();
        }
        let wrong = TestFunction::new("bad", |x| x * x, |x| x, |_| 2.0);
        assert!(wrong.check_derivatives(&pts).is_err());
    }

    #[test]
    fn linear_f_residual_vanishes() {
        let spec = SemimartingaleSpec::new(1.0, cp(2.0, MarkDistribution::uniform(-2.0, 2.0).unwrap()))
            .with_drift(Coefficient::Linear(0.3))
            .with_diffusion(Coefficient::Constant(0.5));
        let grid = TimeGrid::new(1.0, 0.01).unwrap();
        for i in 0..50 {
            let r = ito_residual(&spec, &TestFunction::linear(), &grid, &mut derive_stream(3, i)).unwrap();
            assert!(r.residual < 1e-12, "{r:?}");
        }
    }
}

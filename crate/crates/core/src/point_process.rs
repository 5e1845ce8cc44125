//! Single-jump counting processes with path-dependent intensities.
//!
//! Every variant is simulated by the same Ogata-style thinning loop: a
//! dominating rate `Λ̄` valid on a short lookahead window proposes candidate
//! times, and a candidate at `s` is kept with probability
//! `λ(s | F_s) / Λ̄`. Accepted events are appended to the history before the
//! next proposal, so self-excitation feeds back immediately. Exponential
//! Hawkes kernels use the O(1) recursive intensity update.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};
use crate::history::{DrivingPath, HistoryView, JumpEvent, PathHistory};
use crate::rng::RngStream;

/// Kernel values below this are treated as zero when summing Hawkes
/// excitation.
pub const KERNEL_CUTOFF: f64 = 1e-12;

/// Default cap on accepted events per path.
pub const DEFAULT_MAX_EVENTS: usize = 10_000_000;

const BOUND_SLACK: f64 = 1e-9;

/// A shareable real function of one variable.
#[derive(Clone)]
pub struct RateFn(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl RateFn {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_| c)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.0)(x)
    }
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("RateFn(..)")
    }
}

/// What is known about how a deterministic or Cox rate moves in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateBound {
    /// The rate never exceeds this value.
    Constant(f64),
    /// Sup over `[t, t + h)` is attained at `t + h`.
    NonDecreasing,
    /// Sup over `[t, t + h)` is attained at `t`.
    NonIncreasing,
    /// No bound declared; thinning is unsupported.
    Unknown,
}

/// Hawkes excitation kernel `ψ`.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// `ψ(u) = α e^{-βu}`.
    Exponential { alpha: f64, beta: f64 },
    /// `ψ(u) = α (1 + u/c)^{-p}` with `p > 1`.
    PowerLaw { alpha: f64, c: f64, p: f64 },
    /// User kernel; must be nonnegative and nonincreasing.
    Custom {
        psi: RateFn,
        integral: f64,
        cumulative: Option<RateFn>,
        horizon: f64,
    },
}

impl Kernel {
    pub fn exponential(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(beta > 0.0) {
            return Err(invalid(
                "kernel",
                format!("need alpha >= 0 and beta > 0, got ({alpha}, {beta})"),
            ));
        }
        Ok(Kernel::Exponential { alpha, beta })
    }

    pub fn power_law(alpha: f64, c: f64, p: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !(c > 0.0) || !(p > 1.0) {
            return Err(invalid("kernel", "power-law kernel needs alpha >= 0, c > 0, p > 1"));
        }
        Ok(Kernel::PowerLaw { alpha, c, p })
    }

    /// A nonincreasing kernel with known total mass `integral = ∫ψ`.
    pub fn custom(psi: RateFn, integral: f64, cumulative: Option<RateFn>) -> Result<Self> {
        if !(integral >= 0.0) || !integral.is_finite() {
            return Err(invalid("kernel", "integral must be finite and >= 0"));
        }
        let mut horizon = 1.0;
        while psi.eval(horizon) >= KERNEL_CUTOFF && horizon < 1e18 {
            horizon *= 2.0;
        }
        Ok(Kernel::Custom {
            psi,
            integral,
            cumulative,
            horizon,
        })
    }

    #[inline]
    pub fn value(&self, u: f64) -> f64 {
        match self {
            Kernel::Exponential { alpha, beta } => alpha * (-beta * u).exp(),
            Kernel::PowerLaw { alpha, c, p } => alpha * (1.0 + u / c).powf(-p),
            Kernel::Custom { psi, .. } => psi.eval(u),
        }
    }

    /// `∫₀^∞ ψ`.
    pub fn branching_ratio(&self) -> f64 {
        match self {
            Kernel::Exponential { alpha, beta } => alpha / beta,
            Kernel::PowerLaw { alpha, c, p } => alpha * c / (p - 1.0),
            Kernel::Custom { integral, .. } => *integral,
        }
    }

    /// `∫₀^u ψ` when available in closed form.
    pub fn cumulative(&self, u: f64) -> Option<f64> {
        match self {
            Kernel::Exponential { alpha, beta } => Some(alpha / beta * (-(-beta * u).exp_m1())),
            Kernel::PowerLaw { alpha, c, p } => Some(alpha * c / (p - 1.0) * (1.0 - (1.0 + u / c).powf(1.0 - p))),
            Kernel::Custom { cumulative, .. } => cumulative.as_ref().map(|f| f.eval(u)),
        }
    }

    /// Lag beyond which `ψ < KERNEL_CUTOFF`.
    pub fn horizon(&self) -> f64 {
        match self {
            Kernel::Exponential { alpha, beta } => {
                if *alpha <= KERNEL_CUTOFF {
                    0.0
                } else {
                    (alpha / KERNEL_CUTOFF).ln() / beta
                }
            }
            Kernel::PowerLaw { alpha, c, p } => {
                if *alpha <= KERNEL_CUTOFF {
                    0.0
                } else {
                    c * ((alpha / KERNEL_CUTOFF).powf(1.0 / p) - 1.0)
                }
            }
            Kernel::Custom { horizon, .. } => *horizon,
        }
    }
}

type CustomRule = Arc<dyn Fn(f64, &HistoryView<'_>) -> f64 + Send + Sync>;
type CustomBound = Arc<dyn Fn(f64, &HistoryView<'_>, f64) -> f64 + Send + Sync>;

/// An arbitrary predictable rate `(t, history) ↦ λ`.
#[derive(Clone)]
pub struct CustomRate {
    rule: CustomRule,
    bound: Option<CustomBound>,
    history_dependent: bool,
    needs_lookahead: bool,
}

impl CustomRate {
    pub fn new(rule: impl Fn(f64, &HistoryView<'_>) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            rule: Arc::new(rule),
            bound: None,
            history_dependent: true,
            needs_lookahead: true,
        }
    }

    /// Declares a majorant `(t, history through t, lookahead) ↦ Λ̄` valid on
    /// `[t, t + lookahead)` as long as no new event occurs.
    pub fn with_bound(mut self, bound: impl Fn(f64, &HistoryView<'_>, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.bound = Some(Arc::new(bound));
        self
    }

    /// Marks the bound as valid until the next event regardless of the
    /// lookahead window.
    pub fn bound_holds_until_next_event(mut self) -> Self {
        self.needs_lookahead = false;
        self
    }

    pub fn history_independent(mut self) -> Self {
        self.history_dependent = false;
        self
    }
}

impl fmt::Debug for CustomRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomRate")
            .field("bounded", &self.bound.is_some())
            .field("history_dependent", &self.history_dependent)
            .finish()
    }
}

/// The intensity `λ(t | F_t)` of a single-jump counting process.
#[derive(Debug, Clone)]
pub enum IntensityModel {
    Homogeneous(f64),
    Deterministic {
        rate: RateFn,
        bound: RateBound,
        cumulative: Option<RateFn>,
    },
    Cox {
        phi: RateFn,
        path: Arc<DrivingPath>,
        bound: RateBound,
    },
    Hawkes {
        base: f64,
        kernel: Kernel,
    },
    Custom(CustomRate),
    Scaled {
        inner: Box<IntensityModel>,
        factor: f64,
    },
}

impl IntensityModel {
    pub fn homogeneous(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(invalid("rate", format!("must be > 0, got {rate}")));
        }
        Ok(IntensityModel::Homogeneous(rate))
    }

    /// The identically-zero intensity.
    pub fn zero() -> Self {
        IntensityModel::Deterministic {
            rate: RateFn::constant(0.0),
            bound: RateBound::Constant(0.0),
            cumulative: Some(RateFn::constant(0.0)),
        }
    }

    pub fn deterministic(rate: RateFn, bound: RateBound) -> Self {
        IntensityModel::Deterministic {
            rate,
            bound,
            cumulative: None,
        }
    }

    pub fn cox(phi: RateFn, path: Arc<DrivingPath>, bound: RateBound) -> Self {
        IntensityModel::Cox { phi, path, bound }
    }

    /// Hawkes intensity `λ0 + Σ_{s<t} ψ(t - s)`; rejects supercritical kernels.
    pub fn hawkes(base: f64, kernel: Kernel) -> Result<Self> {
        if !(base > 0.0) || !base.is_finite() {
            return Err(invalid("base_rate", format!("must be > 0, got {base}")));
        }
        let ratio = kernel.branching_ratio();
        if !(ratio < 1.0) {
            return Err(Error::UnstableKernel(ratio));
        }
        Ok(IntensityModel::Hawkes { base, kernel })
    }

    pub fn scaled(self, factor: f64) -> Self {
        if factor == 1.0 {
            return self;
        }
        IntensityModel::Scaled {
            inner: Box::new(self),
            factor,
        }
    }

    /// Knots of any driving path the rate reads; the rate may kink there.
    pub fn driving_nodes(&self) -> &[f64] {
        match self {
            IntensityModel::Cox { path, .. } => path.times(),
            IntensityModel::Scaled { inner, .. } => inner.driving_nodes(),
            _ => &[],
        }
    }

    /// Whether the rate is a constant independent of time and history.
    pub fn is_constant(&self) -> bool {
        match self {
            IntensityModel::Homogeneous(_) => true,
            IntensityModel::Deterministic {
                bound: RateBound::Constant(c),
                ..
            } => *c == 0.0,
            IntensityModel::Scaled { inner, .. } => inner.is_constant(),
            _ => false,
        }
    }

    /// Whether the rate reads the process's own jump history.
    pub fn is_history_dependent(&self) -> bool {
        match self {
            IntensityModel::Hawkes { .. } => true,
            IntensityModel::Custom(c) => c.history_dependent,
            IntensityModel::Scaled { inner, .. } => inner.is_history_dependent(),
            _ => false,
        }
    }

    /// Whether the dominating rate is only valid on a bounded window.
    pub fn needs_lookahead(&self) -> bool {
        match self {
            IntensityModel::Homogeneous(_) | IntensityModel::Hawkes { .. } => false,
            IntensityModel::Deterministic { bound, .. } | IntensityModel::Cox { bound, .. } => {
                !matches!(bound, RateBound::Constant(_))
            }
            IntensityModel::Custom(c) => c.needs_lookahead,
            IntensityModel::Scaled { inner, .. } => inner.needs_lookahead(),
        }
    }

    /// `λ(t | F_t)` where `view` holds exactly the information before `t`.
    pub fn rate(&self, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        let r = match self {
            IntensityModel::Homogeneous(l) => *l,
            IntensityModel::Deterministic { rate, .. } => rate.eval(t),
            IntensityModel::Cox { phi, path, .. } => phi.eval(path.value_at(t)),
            IntensityModel::Hawkes { base, kernel } => base + excitation(kernel, t, view.events),
            IntensityModel::Custom(c) => (c.rule)(t, view),
            IntensityModel::Scaled { inner, factor } => factor * inner.rate(t, view)?,
        };
        if !(r >= 0.0) {
            return Err(Error::ContractViolation(format!(
                "intensity must be nonnegative, got {r} at t = {t}"
            )));
        }
        Ok(r)
    }

    /// Majorant of the rate on `[t, t + lookahead)` assuming no new events.
    /// `view` must include events at time `t` itself.
    pub fn bound(&self, t: f64, view: &HistoryView<'_>, lookahead: f64) -> Result<f64> {
        match self {
            IntensityModel::Homogeneous(l) => Ok(*l),
            IntensityModel::Hawkes { base, kernel } => Ok(base + excitation_through(kernel, t, view.events)),
            IntensityModel::Deterministic { rate, bound, .. } => monotone_bound(*bound, |s| rate.eval(s), t, lookahead),
            IntensityModel::Cox { phi, path, bound } => {
                monotone_bound(*bound, |s| phi.eval(path.value_at(s)), t, lookahead)
            }
            IntensityModel::Custom(c) => match &c.bound {
                Some(b) => Ok(b(t, view, lookahead)),
                None => Err(Error::Unsupported(
                    "custom intensity has no declared upper bound; thinning needs one".into(),
                )),
            },
            IntensityModel::Scaled { inner, factor } => Ok(factor * inner.bound(t, view, lookahead)?),
        }
    }
}

fn monotone_bound(bound: RateBound, f: impl Fn(f64) -> f64, t: f64, lookahead: f64) -> Result<f64> {
    match bound {
        RateBound::Constant(c) => Ok(c),
        RateBound::NonIncreasing => Ok(f(t)),
        RateBound::NonDecreasing => Ok(f(t + lookahead).max(f(t))),
        RateBound::Unknown => Err(Error::Unsupported(
            "no rate bound declared for this intensity; thinning needs one".into(),
        )),
    }
}

/// `Σ_{s < t} ψ(t - s)` over the given events, skipping lags past the cutoff.
fn excitation(kernel: &Kernel, t: f64, events: &[JumpEvent]) -> f64 {
    let horizon = kernel.horizon();
    let mut sum = 0.0;
    for e in events.iter().rev() {
        let lag = t - e.time;
        if lag <= 0.0 {
            continue;
        }
        if lag > horizon {
            break;
        }
        sum += kernel.value(lag);
    }
    sum
}

/// As [`excitation`] but events at `t` contribute `ψ(0)`.
fn excitation_through(kernel: &Kernel, t: f64, events: &[JumpEvent]) -> f64 {
    let horizon = kernel.horizon();
    let mut sum = 0.0;
    for e in events.iter().rev() {
        let lag = t - e.time;
        if lag < 0.0 {
            continue;
        }
        if lag > horizon {
            break;
        }
        sum += kernel.value(lag);
    }
    sum
}

/// `λ(t | F_t)` evaluated on the strict left-limit of `history`.
pub fn intensity_at(model: &IntensityModel, t: f64, history: &PathHistory) -> Result<f64> {
    if t < history.origin() {
        return Err(Error::Domain(format!("t = {t} precedes origin {}", history.origin())));
    }
    model.rate(t, &history.view_before(t))
}

/// Dominating rate for thinning on `[t, t + lookahead)` given no new events.
pub fn dominating_rate(model: &IntensityModel, t: f64, history: &PathHistory, lookahead: f64) -> Result<f64> {
    if !(lookahead > 0.0) {
        return Err(invalid("lookahead", "must be > 0"));
    }
    model.bound(t, &history.view_through(t), lookahead)
}

/// Tunables for the thinning loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub max_events: usize,
    /// Window length for bounds that are only locally valid. Defaults to
    /// `horizon / 32`.
    pub lookahead: Option<f64>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            max_events: DEFAULT_MAX_EVENTS,
            lookahead: None,
        }
    }
}

/// Anything the thinning loop can simulate.
pub(crate) trait RateSource {
    fn rate(&self, t: f64, view: &HistoryView<'_>) -> Result<f64>;
    fn bound(&self, t: f64, view: &HistoryView<'_>, lookahead: f64) -> Result<f64>;
    fn needs_lookahead(&self) -> bool;
}

impl RateSource for IntensityModel {
    fn rate(&self, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        IntensityModel::rate(self, t, view)
    }
    fn bound(&self, t: f64, view: &HistoryView<'_>, lookahead: f64) -> Result<f64> {
        IntensityModel::bound(self, t, view, lookahead)
    }
    fn needs_lookahead(&self) -> bool {
        IntensityModel::needs_lookahead(self)
    }
}

pub(crate) fn check_bound(rate: f64, bound: f64, t: f64) -> Result<()> {
    if rate > bound * (1.0 + BOUND_SLACK) + 1e-300 {
        return Err(Error::ContractViolation(format!(
            "intensity {rate} exceeds dominating rate {bound} at t = {t}"
        )));
    }
    Ok(())
}

/// Ogata thinning on `(last event, horizon]`, appending to `history`.
/// `mark` is called on acceptance with the strict left-limit view.
pub(crate) fn thin<S: RateSource + ?Sized>(
    source: &S,
    history: &mut PathHistory,
    horizon: f64,
    rng: &mut RngStream,
    opts: &SimulationOptions,
    mut mark: impl FnMut(f64, &HistoryView<'_>, &mut RngStream) -> Result<f64>,
) -> Result<()> {
    let lookahead = if source.needs_lookahead() {
        opts.lookahead.unwrap_or((horizon - history.origin()) / 32.0)
    } else {
        f64::INFINITY
    };
    let mut t = history.events().last().map_or(history.origin(), |e| e.time);
    while t < horizon {
        let window_end = (t + lookahead).min(horizon);
        let bound = source.bound(t, &history.view_all(), window_end - t)?;
        if !(bound > 0.0) {
            t = window_end;
            continue;
        }
        let s = t + rng.exp1() / bound;
        if s >= window_end {
            t = window_end;
            continue;
        }
        let view = history.view_all();
        let r = source.rate(s, &view)?;
        check_bound(r, bound, s)?;
        let accept = rng.uniform() * bound < r;
        let after_last = view.last_time().is_none_or(|last| s > last);
        if accept && after_last {
            if history.len() >= opts.max_events {
                return Err(Error::Runaway {
                    cap: opts.max_events,
                    time: s,
                });
            }
            let z = mark(s, &history.view_all(), rng)?;
            history.push(JumpEvent { time: s, mark: z })?;
        }
        t = s;
    }
    Ok(())
}

/// Simulates a counting process on `(0, horizon]`; every event has mark 1.
pub fn simulate_counting(model: &IntensityModel, horizon: f64, rng: &mut RngStream) -> Result<Vec<JumpEvent>> {
    simulate_counting_with(model, horizon, rng, &SimulationOptions::default())
}

pub fn simulate_counting_with(
    model: &IntensityModel,
    horizon: f64,
    rng: &mut RngStream,
    opts: &SimulationOptions,
) -> Result<Vec<JumpEvent>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon", format!("must be > 0, got {horizon}")));
    }
    if let IntensityModel::Hawkes { kernel, .. } = model {
        let ratio = kernel.branching_ratio();
        if !(ratio < 1.0) {
            return Err(Error::UnstableKernel(ratio));
        }
    }
    match model {
        IntensityModel::Hawkes {
            base,
            kernel: Kernel::Exponential { alpha, beta },
        } => simulate_exp_hawkes(*base, *alpha, *beta, horizon, rng, opts),
        _ => {
            let mut history = PathHistory::new(0.0);
            thin(model, &mut history, horizon, rng, opts, |_, _, _| Ok(1.0))?;
            Ok(history.into_events())
        }
    }
}

/// Recursive O(1) update of `Σ α e^{-β(t-s)}`. Consumes random draws in
/// the same order as the generic loop.
fn simulate_exp_hawkes(
    base: f64,
    alpha: f64,
    beta: f64,
    horizon: f64,
    rng: &mut RngStream,
    opts: &SimulationOptions,
) -> Result<Vec<JumpEvent>> {
    let mut events: Vec<JumpEvent> = Vec::new();
    let mut t = 0.0;
    // excitation just after t
    let mut excited = 0.0;
    while t < horizon {
        let bound = base + excited;
        let s = t + rng.exp1() / bound;
        if s >= horizon {
            break;
        }
        let decayed = excited * (-beta * (s - t)).exp();
        let r = base + decayed;
        let accept = rng.uniform() * bound < r;
        excited = decayed;
        let after_last = events.last().is_none_or(|e| s > e.time);
        if accept && after_last {
            if events.len() >= opts.max_events {
                return Err(Error::Runaway {
                    cap: opts.max_events,
                    time: s,
                });
            }
            events.push(JumpEvent::unit(s));
            excited += alpha;
        }
        t = s;
    }
    Ok(events)
}

/// `∫₀^t λ(s | F_s) ds` along a realized history.
pub fn compensator(model: &IntensityModel, history: &PathHistory, t: f64, quad_step: f64) -> Result<f64> {
    Ok(compensator_at(model, history, &[t], quad_step)?[0])
}

/// Compensator evaluated at each of the nondecreasing `times`.
pub fn compensator_at(
    model: &IntensityModel,
    history: &PathHistory,
    times: &[f64],
    quad_step: f64,
) -> Result<Vec<f64>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times", "must be nondecreasing"));
    }
    if let Some(closed) = closed_form(model, history, times) {
        return Ok(closed);
    }
    if !(quad_step > 0.0) {
        return Err(invalid("quad_step", "must be > 0"));
    }
    let origin = history.origin();
    let t_max = times.last().copied().unwrap_or(origin).max(origin);

    let mut breaks: Vec<f64> = vec![origin];
    breaks.extend(
        history
            .events()
            .iter()
            .map(|e| e.time)
            .filter(|&s| s > origin && s < t_max),
    );
    if let IntensityModel::Cox { path, .. } = model {
        breaks.extend(path.times().iter().copied().filter(|&s| s > origin && s < t_max));
    }
    breaks.extend(times.iter().map(|&s| s.max(origin)));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let mut out = Vec::with_capacity(times.len());
    let mut next_query = 0;
    let mut acc = 0.0;
    while next_query < times.len() && times[next_query] <= origin {
        out.push(0.0);
        next_query += 1;
    }
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let view = history.view_before(b);
        acc += midpoint_try(|s| model.rate(s, &view), a, b, quad_step)?;
        while next_query < times.len() && times[next_query] <= b {
            out.push(acc);
            next_query += 1;
        }
    }
    Ok(out)
}

fn closed_form(model: &IntensityModel, history: &PathHistory, times: &[f64]) -> Option<Vec<f64>> {
    let origin = history.origin();
    match model {
        IntensityModel::Homogeneous(l) => Some(times.iter().map(|&t| l * (t - origin).max(0.0)).collect()),
        IntensityModel::Deterministic {
            cumulative: Some(cum), ..
        } => Some(
            times
                .iter()
                .map(|&t| cum.eval(t.max(origin)) - cum.eval(origin))
                .collect(),
        ),
        IntensityModel::Hawkes { base, kernel } => {
            kernel.cumulative(0.0)?;
            Some(
                times
                    .iter()
                    .map(|&t| {
                        let excited: f64 = history.events()[..history.count_before(t)]
                            .iter()
                            .map(|e| kernel.cumulative(t - e.time).unwrap_or(0.0))
                            .sum();
                        base * (t - origin).max(0.0) + excited
                    })
                    .collect(),
            )
        }
        IntensityModel::Scaled { inner, factor } => {
            closed_form(inner, history, times).map(|v| v.into_iter().map(|x| factor * x).collect())
        }
        _ => None,
    }
}

/// `∫_origin^horizon f(s, F_s) ds` along a realized history, split at event
/// times and at `extra_breaks` so each piece sees a fixed left-limit view.
pub(crate) fn path_integral(
    history: &PathHistory,
    horizon: f64,
    step: f64,
    extra_breaks: &[f64],
    f: impl Fn(f64, &HistoryView<'_>) -> Result<f64>,
) -> Result<f64> {
    if !(step > 0.0) {
        return Err(invalid("quad_step", "must be > 0"));
    }
    let origin = history.origin();
    if horizon <= origin {
        return Ok(0.0);
    }
    let mut breaks: Vec<f64> = vec![origin, horizon];
    breaks.extend(
        history
            .events()
            .iter()
            .map(|e| e.time)
            .chain(extra_breaks.iter().copied())
            .filter(|&s| s > origin && s < horizon),
    );
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut acc = 0.0;
    for w in breaks.windows(2) {
        let view = history.view_before(w[1]);
        acc += midpoint_try(|s| f(s, &view), w[0], w[1], step)?;
    }
    Ok(acc)
}

/// Composite midpoint rule. Never evaluates `f` at `a` or `b`, so a jump of
/// the integrand at a segment end does not leak into the segment.
pub(crate) fn midpoint_try(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, step: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let n = ((b - a) / step).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut s = 0.0;
    for i in 0..n {
        s += f(a + (i as f64 + 0.5) * h)?;
    }
    Ok(s * h)
}

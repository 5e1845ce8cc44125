//! Mark (jump-size) laws and mark-space intervals.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::history::HistoryView;
use crate::quadrature::{self, SIMPSON_TOL};
use crate::rng::RngStream;

/// Tolerance used for mark-space integrals of built-in laws.
pub const MARK_TOL: f64 = 1e-12;

/// An interval of the real line with independently open/closed ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Self {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
    }

    /// `(lo, hi)`
    pub const fn open(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, false)
    }

    /// `[lo, hi]`
    pub const fn closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, true, true)
    }

    /// `[lo, hi)`
    pub const fn closed_open(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, true, false)
    }

    /// `(lo, hi]`
    pub const fn open_closed(lo: f64, hi: f64) -> Self {
        Self::new(lo, hi, false, true)
    }

    /// `(0, ∞)`
    pub const fn positive() -> Self {
        Self::open(0.0, f64::INFINITY)
    }

    pub const fn everything() -> Self {
        Self::open(f64::NEG_INFINITY, f64::INFINITY)
    }

    #[inline]
    pub fn contains(&self, z: f64) -> bool {
        let above = if self.lo_closed { z >= self.lo } else { z > self.lo };
        let below = if self.hi_closed { z <= self.hi } else { z < self.hi };
        above && below
    }

    pub fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Interval::new(lo, hi, lo_closed, hi_closed)
    }

    /// `{-z : z ∈ self}`
    pub fn mirrored(&self) -> Interval {
        Interval::new(-self.hi, -self.lo, self.hi_closed, self.lo_closed)
    }

    /// The two signed pieces `{z : |z| ∈ self}` for a window on `(0, ∞)`.
    pub fn signed_pieces(&self) -> [Interval; 2] {
        let pos = self.intersect(&Interval::positive());
        [pos, pos.mirrored()]
    }
}

/// A finite union of intervals, assumed disjoint.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MarkSet(pub Vec<Interval>);

impl MarkSet {
    pub fn single(i: Interval) -> Self {
        MarkSet(vec![i])
    }

    pub fn contains(&self, z: f64) -> bool {
        self.0.iter().any(|i| i.contains(z))
    }
}

impl From<Interval> for MarkSet {
    fn from(i: Interval) -> Self {
        MarkSet::single(i)
    }
}

/// A conditional jump-size law `p(dz | t, F_t)`.
pub trait MarkLaw: Send + Sync + fmt::Debug {
    /// Draws a nonzero mark.
    fn sample(&self, t: f64, history: &HistoryView<'_>, rng: &mut RngStream) -> f64;

    /// `∫_set f dp`.
    fn integrate(&self, f: &dyn Fn(f64) -> f64, set: &Interval, t: f64, history: &HistoryView<'_>) -> f64;

    /// `p(set)`.
    fn probability(&self, set: &Interval, t: f64, history: &HistoryView<'_>) -> f64 {
        self.integrate(&|_| 1.0, set, t, history)
    }

    /// Closed hull of the support.
    fn support(&self) -> Interval;

    fn is_history_dependent(&self) -> bool {
        false
    }
}

/// Built-in history-independent mark laws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarkDistribution {
    PointMass(f64),
    /// Uniform on `(low, high]`.
    Uniform {
        low: f64,
        high: f64,
    },
    /// Exponential on `(0, ∞)` with the given rate.
    Exponential {
        rate: f64,
    },
    /// Density proportional to `z^exponent` on `(low, high]`, `0 <= low`.
    PowerLaw {
        exponent: f64,
        low: f64,
        high: f64,
    },
    /// Finitely many marks with probabilities (normalized on construction).
    Atoms(Vec<(f64, f64)>),
}

impl MarkDistribution {
    pub fn point_mass(z: f64) -> Result<Self> {
        if z == 0.0 || !z.is_finite() {
            return Err(invalid("mark", "point mass must sit at a finite nonzero mark"));
        }
        Ok(MarkDistribution::PointMass(z))
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        if !(high > low) || !low.is_finite() || !high.is_finite() {
            return Err(invalid(
                "marks",
                format!("uniform needs low < high, got ({low}, {high})"),
            ));
        }
        Ok(MarkDistribution::Uniform { low, high })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(invalid("marks", "exponential rate must be > 0"));
        }
        Ok(MarkDistribution::Exponential { rate })
    }

    pub fn power_law(exponent: f64, low: f64, high: f64) -> Result<Self> {
        if !(low >= 0.0) || !(high > low) || !high.is_finite() {
            return Err(invalid("marks", "power law needs 0 <= low < high < inf"));
        }
        if low == 0.0 && exponent <= -1.0 {
            return Err(invalid(
                "marks",
                "power-law density with exponent <= -1 is not normalizable on (0, high]",
            ));
        }
        Ok(MarkDistribution::PowerLaw { exponent, low, high })
    }

    pub fn atoms(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("marks", "atom list is empty"));
        }
        if points.iter().any(|&(z, p)| z == 0.0 || !z.is_finite() || !(p >= 0.0)) {
            return Err(invalid("marks", "atoms need nonzero marks and nonnegative weights"));
        }
        let total: f64 = points.iter().map(|p| p.1).sum();
        if !(total > 0.0) {
            return Err(invalid("marks", "atom weights sum to zero"));
        }
        let mut pts: Vec<(f64, f64)> = points.into_iter().map(|(z, p)| (z, p / total)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid("marks", "atom marks must be distinct"));
        }
        Ok(MarkDistribution::Atoms(pts))
    }

    /// CDF of the continuous laws.
    fn cdf(&self, z: f64) -> f64 {
        match *self {
            MarkDistribution::Uniform { low, high } => ((z - low) / (high - low)).clamp(0.0, 1.0),
            MarkDistribution::Exponential { rate } => {
                if z <= 0.0 {
                    0.0
                } else {
                    -(-rate * z).exp_m1()
                }
            }
            MarkDistribution::PowerLaw { exponent, low, high } => {
                let z = z.clamp(low, high);
                if (exponent + 1.0).abs() < 1e-12 {
                    (z / low).ln() / (high / low).ln()
                } else {
                    let q = exponent + 1.0;
                    (z.powf(q) - low.powf(q)) / (high.powf(q) - low.powf(q))
                }
            }
            _ => unreachable!("cdf is only used for continuous laws"),
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        match *self {
            MarkDistribution::Uniform { low, high } => low + u * (high - low),
            MarkDistribution::Exponential { rate } => -(-u).ln_1p() / rate,
            MarkDistribution::PowerLaw { exponent, low, high } => {
                if (exponent + 1.0).abs() < 1e-12 {
                    low * (high / low).powf(u)
                } else {
                    let q = exponent + 1.0;
                    (low.powf(q) + u * (high.powf(q) - low.powf(q))).powf(1.0 / q)
                }
            }
            _ => unreachable!("quantile is only used for continuous laws"),
        }
    }

    fn is_continuous(&self) -> bool {
        !matches!(self, MarkDistribution::PointMass(_) | MarkDistribution::Atoms(_))
    }

    /// Mean of the law.
    pub fn mean(&self) -> f64 {
        self.integrate(&|z| z, &Interval::everything(), 0.0, &HistoryView::empty())
    }
}

impl MarkLaw for MarkDistribution {
    fn sample(&self, _t: f64, _history: &HistoryView<'_>, rng: &mut RngStream) -> f64 {
        match self {
            MarkDistribution::PointMass(z) => *z,
            MarkDistribution::Atoms(pts) => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for &(z, p) in pts {
                    acc += p;
                    if u < acc {
                        return z;
                    }
                }
                pts.last().map(|p| p.0).unwrap_or(1.0)
            }
            MarkDistribution::Uniform { .. } => loop {
                // (low, high]
                let z = self.quantile(rng.uniform_open0());
                if z != 0.0 {
                    return z;
                }
            },
            _ => loop {
                let z = self.quantile(rng.uniform_open0());
                if z != 0.0 && z.is_finite() {
                    return z;
                }
            },
        }
    }

    fn integrate(&self, f: &dyn Fn(f64) -> f64, set: &Interval, _t: f64, _history: &HistoryView<'_>) -> f64 {
        match self {
            MarkDistribution::PointMass(z) => {
                if set.contains(*z) {
                    f(*z)
                } else {
                    0.0
                }
            }
            MarkDistribution::Atoms(pts) => pts
                .iter()
                .filter(|(z, _)| set.contains(*z))
                .map(|&(z, p)| p * f(z))
                .sum(),
            _ => {
                debug_assert!(self.is_continuous());
                let s = set.intersect(&self.support());
                if s.is_empty() || s.lo >= s.hi {
                    return 0.0;
                }
                // substitute z = F^{-1}(u); handles singular densities
                let (ua, ub) = (self.cdf(s.lo), self.cdf(s.hi));
                if ub <= ua {
                    return 0.0;
                }
                quadrature::tanh_sinh(&|u| f(self.quantile(u)), ua, ub, MARK_TOL)
            }
        }
    }

    fn probability(&self, set: &Interval, t: f64, history: &HistoryView<'_>) -> f64 {
        if self.is_continuous() {
            let s = set.intersect(&self.support());
            if s.is_empty() || s.lo >= s.hi {
                return 0.0;
            }
            return (self.cdf(s.hi) - self.cdf(s.lo)).max(0.0);
        }
        self.integrate(&|_| 1.0, set, t, history)
    }

    fn support(&self) -> Interval {
        match self {
            MarkDistribution::PointMass(z) => Interval::closed(*z, *z),
            MarkDistribution::Atoms(pts) => Interval::closed(pts[0].0, pts[pts.len() - 1].0),
            MarkDistribution::Uniform { low, high } => Interval::open_closed(*low, *high),
            MarkDistribution::Exponential { .. } => Interval::positive(),
            MarkDistribution::PowerLaw { low, high, .. } => Interval::open_closed(*low, *high),
        }
    }
}

/// A law given by a user density on a bounded interval. Interval masses use
/// adaptive Simpson quadrature; sampling is by rejection against the
/// declared density maximum.
#[derive(Clone)]
pub struct DensityLaw {
    pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    support: Interval,
    pdf_max: f64,
    norm: f64,
}

impl DensityLaw {
    /// `pdf` need not be normalized; `pdf_max` must bound it on the support.
    pub fn new(pdf: impl Fn(f64) -> f64 + Send + Sync + 'static, low: f64, high: f64, pdf_max: f64) -> Result<Self> {
        if !(high > low) || !low.is_finite() || !high.is_finite() {
            return Err(invalid("density", "support must be a bounded interval"));
        }
        if !(pdf_max > 0.0) {
            return Err(invalid("density", "pdf_max must be > 0"));
        }
        let pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::new(pdf);
        let norm = quadrature::adaptive_simpson(&|z| pdf(z), low, high, SIMPSON_TOL);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(invalid("density", "density must have positive finite mass"));
        }
        Ok(Self {
            pdf,
            support: Interval::open_closed(low, high),
            pdf_max,
            norm,
        })
    }

    /// Normalized density.
    pub fn density(&self, z: f64) -> f64 {
        if self.support.contains(z) {
            (self.pdf)(z) / self.norm
        } else {
            0.0
        }
    }
}

impl fmt::Debug for DensityLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityLaw")
            .field("support", &self.support)
            .field("norm", &self.norm)
            .finish()
    }
}

impl MarkLaw for DensityLaw {
    fn sample(&self, _t: f64, _history: &HistoryView<'_>, rng: &mut RngStream) -> f64 {
        let (lo, hi) = (self.support.lo, self.support.hi);
        loop {
            let z = lo + rng.uniform_open0() * (hi - lo);
            if z != 0.0 && rng.uniform() * self.pdf_max < (self.pdf)(z) {
                return z;
            }
        }
    }

    fn integrate(&self, f: &dyn Fn(f64) -> f64, set: &Interval, _t: f64, _history: &HistoryView<'_>) -> f64 {
        let s = set.intersect(&self.support);
        if s.is_empty() || s.lo >= s.hi {
            return 0.0;
        }
        quadrature::adaptive_simpson(&|z| f(z) * (self.pdf)(z), s.lo, s.hi, SIMPSON_TOL) / self.norm
    }

    fn support(&self) -> Interval {
        self.support
    }
}

/// `p` conditioned on `|z| ∈ window`.
#[derive(Debug, Clone)]
pub struct WindowedLaw {
    pub inner: Arc<dyn MarkLaw>,
    pub window: Interval,
}

impl MarkLaw for WindowedLaw {
    fn sample(&self, t: f64, history: &HistoryView<'_>, rng: &mut RngStream) -> f64 {
        // callers only reach this when the window has positive mass
        for _ in 0..10_000_000 {
            let z = self.inner.sample(t, history, rng);
            if self.window.contains(z.abs()) {
                return z;
            }
        }
        panic!(
            "window {:?} has negligible probability under {:?}",
            self.window, self.inner
        );
    }

    fn integrate(&self, f: &dyn Fn(f64) -> f64, set: &Interval, t: f64, history: &HistoryView<'_>) -> f64 {
        let mass = window_mass(self.inner.as_ref(), &self.window, t, history);
        if mass <= 0.0 {
            return 0.0;
        }
        let [p, n] = self.window.signed_pieces();
        (self.inner.integrate(f, &set.intersect(&p), t, history)
            + self.inner.integrate(f, &set.intersect(&n), t, history))
            / mass
    }

    fn support(&self) -> Interval {
        self.inner.support()
    }

    fn is_history_dependent(&self) -> bool {
        self.inner.is_history_dependent()
    }
}

/// `p(|z| ∈ window)`.
pub fn window_mass(law: &dyn MarkLaw, window: &Interval, t: f64, history: &HistoryView<'_>) -> f64 {
    let [p, n] = window.signed_pieces();
    law.probability(&p, t, history) + law.probability(&n, t, history)
}

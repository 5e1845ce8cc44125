//! Conditional Lévy measures `μ(dz; F_t)`, the refinement grids `Z_n` and
//! measure discretization onto them.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::history::{HistoryView, PathHistory};
use crate::marks::{Interval, MarkDistribution, MarkLaw, MarkSet};
use crate::point_process::{self, CustomRate, IntensityModel, RateSource};
use crate::quadrature;
use crate::rng::RngStream;

/// Tolerance for mark-space quadrature of densities.
pub const DENSITY_TOL: f64 = 1e-12;

const MAX_REJECTIONS: usize = 10_000_000;

/// One atom `λ_i(t | F_t) δ_{z_i}`.
#[derive(Debug, Clone)]
pub struct Atom {
    pub mark: f64,
    pub rate: IntensityModel,
}

/// Which signs of `z` a restriction keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignFilter {
    Both,
    Positive,
    Negative,
}

impl SignFilter {
    fn and(self, other: SignFilter) -> Option<SignFilter> {
        use SignFilter::*;
        match (self, other) {
            (Both, s) | (s, Both) => Some(s),
            (Positive, Positive) => Some(Positive),
            (Negative, Negative) => Some(Negative),
            _ => None,
        }
    }

    fn flip(self) -> SignFilter {
        match self {
            SignFilter::Both => SignFilter::Both,
            SignFilter::Positive => SignFilter::Negative,
            SignFilter::Negative => SignFilter::Positive,
        }
    }
}

/// A conditional Lévy measure on `ℝ \ {0}`.
#[derive(Debug, Clone)]
pub enum WakaraseMeasure {
    /// `Σ λ_i(t | F_t) δ_{z_i}`.
    DiscreteAtoms(Vec<Atom>),
    /// `λ(t | F_t) p(dz | t, F_t)`.
    DensityForm {
        rate: IntensityModel,
        law: Arc<dyn MarkLaw>,
    },
    /// `scale · z^exponent dz` on `(low, high]`. May have infinite activity
    /// when `low = 0` and `exponent <= -1`.
    PowerLawDensity {
        scale: f64,
        exponent: f64,
        low: f64,
        high: f64,
    },
    /// `μ` restricted to `{z : |z| ∈ window}` with the given signs.
    Restricted {
        inner: Box<WakaraseMeasure>,
        window: Interval,
        sign: SignFilter,
    },
    /// Image of `μ` under `z ↦ -z`.
    Mirrored(Box<WakaraseMeasure>),
}

impl WakaraseMeasure {
    pub fn atoms(atoms: Vec<(f64, IntensityModel)>) -> Result<Self> {
        let mut out: Vec<Atom> = Vec::with_capacity(atoms.len());
        for (mark, rate) in atoms {
            if mark == 0.0 || !mark.is_finite() {
                return Err(invalid(
                    "atoms",
                    format!("atom marks must be finite and nonzero, got {mark}"),
                ));
            }
            if out.iter().any(|a| a.mark == mark) {
                return Err(invalid("atoms", format!("duplicate atom mark {mark}")));
            }
            out.push(Atom { mark, rate });
        }
        Ok(WakaraseMeasure::DiscreteAtoms(out))
    }

    pub fn density(rate: IntensityModel, law: impl MarkLaw + 'static) -> Self {
        WakaraseMeasure::DensityForm {
            rate,
            law: Arc::new(law),
        }
    }

    pub fn density_shared(rate: IntensityModel, law: Arc<dyn MarkLaw>) -> Self {
        WakaraseMeasure::DensityForm { rate, law }
    }

    /// `scale · z^exponent` on `(low, high]`.
    pub fn power_law(scale: f64, exponent: f64, low: f64, high: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid("scale", "must be finite and > 0"));
        }
        if !(low >= 0.0) || !(high > low) {
            return Err(invalid("support", "power-law density needs 0 <= low < high"));
        }
        if high.is_infinite() && !(exponent < -1.0) {
            return Err(invalid("exponent", "unbounded support needs exponent < -1"));
        }
        Ok(WakaraseMeasure::PowerLawDensity {
            scale,
            exponent,
            low,
            high,
        })
    }

    /// The zero measure.
    pub fn zero() -> Self {
        WakaraseMeasure::DiscreteAtoms(Vec::new())
    }

    /// Restriction to `{z : |z| ∈ window}`.
    pub fn restrict(self, window: Interval) -> Self {
        self.restrict_signed(window, SignFilter::Both)
    }

    /// Restriction to `{z : |z| ∈ window, sign(z) allowed by sign}`.
    pub fn restrict_signed(self, window: Interval, sign: SignFilter) -> Self {
        let keep = |z: f64| {
            window.contains(z.abs())
                && match sign {
                    SignFilter::Both => true,
                    SignFilter::Positive => z > 0.0,
                    SignFilter::Negative => z < 0.0,
                }
        };
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => {
                WakaraseMeasure::DiscreteAtoms(atoms.into_iter().filter(|a| keep(a.mark)).collect())
            }
            WakaraseMeasure::PowerLawDensity {
                scale,
                exponent,
                low,
                high,
            } => {
                if sign == SignFilter::Negative {
                    return WakaraseMeasure::zero();
                }
                let i = window.intersect(&Interval::open_closed(low, high));
                if i.is_empty() || i.lo >= i.hi {
                    return WakaraseMeasure::zero();
                }
                WakaraseMeasure::PowerLawDensity {
                    scale,
                    exponent,
                    low: i.lo,
                    high: i.hi,
                }
            }
            WakaraseMeasure::Mirrored(inner) => {
                WakaraseMeasure::Mirrored(Box::new(inner.restrict_signed(window, sign.flip())))
            }
            WakaraseMeasure::Restricted {
                inner,
                window: w,
                sign: s,
            } => match s.and(sign) {
                Some(sign) => WakaraseMeasure::Restricted {
                    inner,
                    window: w.intersect(&window),
                    sign,
                },
                None => WakaraseMeasure::zero(),
            },
            other => WakaraseMeasure::Restricted {
                inner: Box::new(other),
                window,
                sign,
            },
        }
    }

    /// `μ` on `(0, ∞)`.
    pub fn positive_part(&self) -> Self {
        self.clone().restrict_signed(Interval::positive(), SignFilter::Positive)
    }

    /// `μ` on `(-∞, 0)`, mirrored onto `(0, ∞)`.
    pub fn negative_part(&self) -> Self {
        WakaraseMeasure::Mirrored(Box::new(
            self.clone().restrict_signed(Interval::positive(), SignFilter::Negative),
        ))
    }

    pub fn mirrored(self) -> Self {
        WakaraseMeasure::Mirrored(Box::new(self))
    }

    /// Signed pieces of `set` that survive a restriction.
    fn restricted_pieces(set: &Interval, window: &Interval, sign: SignFilter) -> Vec<Interval> {
        let [pos, neg] = window.signed_pieces();
        let mut out = Vec::with_capacity(2);
        if sign != SignFilter::Negative {
            out.push(set.intersect(&pos));
        }
        if sign != SignFilter::Positive {
            out.push(set.intersect(&neg));
        }
        out.retain(|i| !i.is_empty());
        out
    }

    /// `∫_set f dμ(·; t, F_t)`.
    pub fn integrate(&self, f: &dyn Fn(f64) -> f64, set: &Interval, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => {
                let mut acc = 0.0;
                for a in atoms.iter().filter(|a| set.contains(a.mark)) {
                    acc += a.rate.rate(t, view)? * f(a.mark);
                }
                Ok(acc)
            }
            WakaraseMeasure::DensityForm { rate, law } => {
                let r = rate.rate(t, view)?;
                if r == 0.0 {
                    return Ok(0.0);
                }
                Ok(r * law.integrate(f, set, t, view))
            }
            WakaraseMeasure::PowerLawDensity {
                scale,
                exponent,
                low,
                high,
            } => {
                let i = set.intersect(&Interval::open_closed(*low, *high));
                if i.is_empty() || i.lo >= i.hi {
                    return Ok(0.0);
                }
                if i.lo == 0.0 && *exponent <= -1.0 && !vanishes_fast_enough(f, *exponent, i.hi.min(1.0)) {
                    return Ok(f64::INFINITY);
                }
                let g = |z: f64| f(z) * scale * z.powf(*exponent);
                Ok(quadrature::integrate(&g, i.lo, i.hi, DENSITY_TOL))
            }
            WakaraseMeasure::Restricted { inner, window, sign } => {
                let mut acc = 0.0;
                for piece in Self::restricted_pieces(set, window, *sign) {
                    acc += inner.integrate(f, &piece, t, view)?;
                }
                Ok(acc)
            }
            WakaraseMeasure::Mirrored(inner) => inner.integrate(&|z| f(-z), &set.mirrored(), t, view),
        }
    }

    /// `μ(set; t, F_t)`, using closed forms where available.
    pub fn mass(&self, set: &Interval, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        match self {
            WakaraseMeasure::DensityForm { rate, law } => {
                let r = rate.rate(t, view)?;
                if r == 0.0 {
                    return Ok(0.0);
                }
                Ok(r * law.probability(set, t, view))
            }
            WakaraseMeasure::PowerLawDensity {
                scale,
                exponent,
                low,
                high,
            } => {
                let i = set.intersect(&Interval::open_closed(*low, *high));
                if i.is_empty() || i.lo >= i.hi {
                    return Ok(0.0);
                }
                Ok(power_law_mass(*scale, *exponent, i.lo, i.hi))
            }
            WakaraseMeasure::Restricted { inner, window, sign } => {
                let mut acc = 0.0;
                for piece in Self::restricted_pieces(set, window, *sign) {
                    acc += inner.mass(&piece, t, view)?;
                }
                Ok(acc)
            }
            WakaraseMeasure::Mirrored(inner) => inner.mass(&set.mirrored(), t, view),
            WakaraseMeasure::DiscreteAtoms(_) => self.integrate(&|_| 1.0, set, t, view),
        }
    }

    /// `μ(A; t, F_t)` for a finite union of disjoint intervals.
    pub fn measure_of_set(&self, set: &MarkSet, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        let mut acc = 0.0;
        for i in &set.0 {
            acc += self.mass(i, t, view)?;
        }
        Ok(acc)
    }

    /// Total mass `μ(ℝ \ {0})`; infinite for infinite-activity measures.
    pub fn total_rate(&self, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        self.mass(&Interval::everything(), t, view)
    }

    /// Majorant of `μ(set)` on `[t, t + lookahead)` given no new events.
    /// `view` must include events at `t`.
    pub fn bound_on(&self, set: &Interval, t: f64, view: &HistoryView<'_>, lookahead: f64) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => {
                let mut acc = 0.0;
                for a in atoms.iter().filter(|a| set.contains(a.mark)) {
                    acc += a.rate.bound(t, view, lookahead)?;
                }
                Ok(acc)
            }
            WakaraseMeasure::DensityForm { rate, law } => {
                if !law.is_history_dependent() && law.probability(set, t, view) == 0.0 {
                    return Ok(0.0);
                }
                rate.bound(t, view, lookahead)
            }
            WakaraseMeasure::PowerLawDensity { .. } => self.mass(set, t, view),
            WakaraseMeasure::Restricted { inner, window, sign } => {
                let pieces = Self::restricted_pieces(set, window, *sign);
                if pieces.is_empty() {
                    return Ok(0.0);
                }
                if let WakaraseMeasure::DensityForm { rate, .. } = inner.as_ref() {
                    // one rate bound covers both pieces
                    let mut any = false;
                    for p in &pieces {
                        any |= inner.bound_on(p, t, view, lookahead)? > 0.0;
                    }
                    return if any { rate.bound(t, view, lookahead) } else { Ok(0.0) };
                }
                let mut acc = 0.0;
                for p in &pieces {
                    acc += inner.bound_on(p, t, view, lookahead)?;
                }
                Ok(acc)
            }
            WakaraseMeasure::Mirrored(inner) => inner.bound_on(&set.mirrored(), t, view, lookahead),
        }
    }

    /// Draws a mark from `μ(dz; t, F_t) / μ(ℝ \ {0}; t, F_t)`.
    pub fn sample_mark(&self, t: f64, view: &HistoryView<'_>, rng: &mut RngStream) -> Result<f64> {
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => {
                let mut rates = Vec::with_capacity(atoms.len());
                let mut total = 0.0;
                for a in atoms {
                    let r = a.rate.rate(t, view)?;
                    total += r;
                    rates.push(r);
                }
                if !(total > 0.0) {
                    return Err(Error::ContractViolation(format!(
                        "mark requested at t = {t} where the measure has no mass"
                    )));
                }
                let u = rng.uniform() * total;
                let mut acc = 0.0;
                for (a, r) in atoms.iter().zip(&rates) {
                    acc += r;
                    if u < acc {
                        return Ok(a.mark);
                    }
                }
                let last = rates.iter().rposition(|&r| r > 0.0).unwrap_or(atoms.len() - 1);
                Ok(atoms[last].mark)
            }
            WakaraseMeasure::DensityForm { law, .. } => Ok(law.sample(t, view, rng)),
            WakaraseMeasure::PowerLawDensity {
                exponent, low, high, ..
            } => {
                if !self.has_finite_activity() {
                    return Err(infinite_activity());
                }
                let law = MarkDistribution::PowerLaw {
                    exponent: *exponent,
                    low: *low,
                    high: *high,
                };
                Ok(law.sample(t, view, rng))
            }
            WakaraseMeasure::Restricted { inner, window, sign } => {
                for _ in 0..MAX_REJECTIONS {
                    let z = inner.sample_mark(t, view, rng)?;
                    let sign_ok = match sign {
                        SignFilter::Both => true,
                        SignFilter::Positive => z > 0.0,
                        SignFilter::Negative => z < 0.0,
                    };
                    if sign_ok && window.contains(z.abs()) {
                        return Ok(z);
                    }
                }
                Err(Error::Unsupported(format!(
                    "restriction window {window:?} is too thin to sample by rejection"
                )))
            }
            WakaraseMeasure::Mirrored(inner) => Ok(-inner.sample_mark(t, view, rng)?),
        }
    }

    /// Whether the total mass is finite for every history.
    pub fn has_finite_activity(&self) -> bool {
        match self {
            WakaraseMeasure::PowerLawDensity { low, exponent, .. } => *low > 0.0 || *exponent > -1.0,
            WakaraseMeasure::Restricted { inner, window, .. } => window.lo > 0.0 || inner.has_finite_activity(),
            WakaraseMeasure::Mirrored(inner) => inner.has_finite_activity(),
            _ => true,
        }
    }

    pub fn is_history_dependent(&self) -> bool {
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => atoms.iter().any(|a| a.rate.is_history_dependent()),
            WakaraseMeasure::DensityForm { rate, law } => rate.is_history_dependent() || law.is_history_dependent(),
            WakaraseMeasure::PowerLawDensity { .. } => false,
            WakaraseMeasure::Restricted { inner, .. } | WakaraseMeasure::Mirrored(inner) => {
                inner.is_history_dependent()
            }
        }
    }

    /// Whether `μ(·; t, F_t)` is the same measure for every `t` and history.
    pub fn is_time_homogeneous(&self) -> bool {
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => atoms.iter().all(|a| a.rate.is_constant()),
            WakaraseMeasure::DensityForm { rate, law } => rate.is_constant() && !law.is_history_dependent(),
            WakaraseMeasure::PowerLawDensity { .. } => true,
            WakaraseMeasure::Restricted { inner, .. } | WakaraseMeasure::Mirrored(inner) => inner.is_time_homogeneous(),
        }
    }

    pub fn needs_lookahead(&self) -> bool {
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => atoms.iter().any(|a| a.rate.needs_lookahead()),
            WakaraseMeasure::DensityForm { rate, .. } => rate.needs_lookahead(),
            WakaraseMeasure::PowerLawDensity { .. } => false,
            WakaraseMeasure::Restricted { inner, .. } | WakaraseMeasure::Mirrored(inner) => inner.needs_lookahead(),
        }
    }

    /// Times where `μ(·; t, F_t)` may kink for reasons other than jumps of
    /// the path itself.
    pub fn driving_nodes(&self) -> Vec<f64> {
        let mut out = Vec::new();
        match self {
            WakaraseMeasure::DiscreteAtoms(atoms) => {
                for a in atoms {
                    out.extend_from_slice(a.rate.driving_nodes());
                }
            }
            WakaraseMeasure::DensityForm { rate, .. } => out.extend_from_slice(rate.driving_nodes()),
            WakaraseMeasure::PowerLawDensity { .. } => {}
            WakaraseMeasure::Restricted { inner, .. } | WakaraseMeasure::Mirrored(inner) => out = inner.driving_nodes(),
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }
}

/// Whether `∫_0 f(z) z^exponent dz` converges at the origin, judged from
/// the decay of `|f(z)| z^{exponent + 1}` between two small scales.
fn vanishes_fast_enough(f: &dyn Fn(f64) -> f64, exponent: f64, scale: f64) -> bool {
    let (s1, s2) = (1e-6 * scale, 1e-10 * scale);
    let h = |z: f64| f(z).abs() * z.powf(exponent + 1.0);
    let (h1, h2) = (h(s1), h(s2));
    if h2 == 0.0 {
        return true;
    }
    if h1 == 0.0 {
        return false;
    }
    (h1 / h2).ln() / (s1 / s2).ln() > 1e-3
}

fn infinite_activity() -> Error {
    Error::Unsupported("measure has infinite total rate; truncate small jumps (restrict to |z| >= eps) first".into())
}

/// `∫_a^b scale · z^exponent dz`.
fn power_law_mass(scale: f64, exponent: f64, a: f64, b: f64) -> f64 {
    let q = exponent + 1.0;
    if a == 0.0 && q <= 0.0 {
        return f64::INFINITY;
    }
    if q.abs() < 1e-12 {
        return scale * (b / a).ln();
    }
    let hb = if b.is_infinite() { 0.0 } else { b.powf(q) };
    scale * (hb - a.powf(q)) / q
}

impl RateSource for WakaraseMeasure {
    fn rate(&self, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        let r = self.total_rate(t, view)?;
        if !r.is_finite() {
            return Err(infinite_activity());
        }
        Ok(r)
    }

    fn bound(&self, t: f64, view: &HistoryView<'_>, lookahead: f64) -> Result<f64> {
        self.bound_on(&Interval::everything(), t, view, lookahead)
    }

    fn needs_lookahead(&self) -> bool {
        WakaraseMeasure::needs_lookahead(self)
    }
}

/// The refinement grid `Z_n ⊂ (0, ∞)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkGrid {
    points: Vec<f64>,
    level: usize,
}

impl MarkGrid {
    /// `Z_1 = {1}`.
    pub fn level_one() -> Self {
        MarkGrid {
            points: vec![1.0],
            level: 1,
        }
    }

    /// `Z_n` by repeated refinement.
    pub fn at_level(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("level", "grid levels start at 1"));
        }
        if n > 40 {
            return Err(invalid("level", "grid level above 40 is not representable"));
        }
        let mut g = Self::level_one();
        while g.level < n {
            g = g.refine();
        }
        Ok(g)
    }

    /// Validates an explicit grid.
    pub fn new(points: Vec<f64>, level: usize) -> Result<Self> {
        if level == 0 || level > 40 {
            return Err(invalid("level", "must lie in 1..=40"));
        }
        if points.len() != (1usize << level) - 1 {
            return Err(invalid(
                "points",
                format!("level {level} needs {} points", (1usize << level) - 1),
            ));
        }
        if points.iter().any(|&z| !(z > 0.0) || !z.is_finite()) {
            return Err(invalid("points", "must be finite and positive"));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("points", "must be strictly increasing"));
        }
        if level == 1 && points[0] != 1.0 {
            return Err(invalid("points", "level 1 grid is {1}"));
        }
        Ok(MarkGrid { points, level })
    }

    /// `Z_{n+1} = Z_n ∪ {min/2, max + 1} ∪ midpoints`.
    pub fn refine(&self) -> MarkGrid {
        let m = self.points.len();
        let mut next = Vec::with_capacity(2 * m + 1);
        next.push(0.5 * self.points[0]);
        for (k, &z) in self.points.iter().enumerate() {
            next.push(z);
            if k + 1 < m {
                next.push(0.5 * (z + self.points[k + 1]));
            }
        }
        next.push(self.points[m - 1] + 1.0);
        MarkGrid {
            points: next,
            level: self.level + 1,
        }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Cell `[z_m, z_{m+1})`, or `[z_max, ∞)` for the last index.
    pub fn cell(&self, m: usize) -> Interval {
        let lo = self.points[m];
        let hi = self.points.get(m + 1).copied().unwrap_or(f64::INFINITY);
        Interval::closed_open(lo, hi)
    }

    /// Index of the cell containing `z`, if `z >= z_min`.
    pub fn cell_of(&self, z: f64) -> Option<usize> {
        let k = self.points.partition_point(|&p| p <= z);
        k.checked_sub(1)
    }

    /// `(0, z_min)`, the mass this level drops.
    pub fn dropped_region(&self) -> Interval {
        Interval::open(0.0, self.min())
    }
}

/// `refine_grid(Z_n) = Z_{n+1}`.
pub fn refine_grid(z: &MarkGrid) -> MarkGrid {
    z.refine()
}

/// `μ_n` at one `(t, F_t)`: atom masses on the grid plus the mass dropped
/// below `z_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedMeasure {
    pub level: usize,
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
    pub dropped_low: f64,
}

impl DiscretizedMeasure {
    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// `Σ f(z_m) μ_n({z_m})`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.masses).map(|(&z, &m)| f(z) * m).sum()
    }
}

pub(crate) fn require_positive_support(mu: &WakaraseMeasure, t: f64, view: &HistoryView<'_>) -> Result<()> {
    let negative = mu.mass(&Interval::open(f64::NEG_INFINITY, 0.0), t, view)?;
    if negative > 0.0 {
        return Err(Error::Domain(
            "discretization needs a measure on (0, inf); split off the negative part first".into(),
        ));
    }
    Ok(())
}

/// Discretizes `μ(·; t, F_t)` onto `grid`.
pub fn discretize(mu: &WakaraseMeasure, grid: &MarkGrid, t: f64, history: &PathHistory) -> Result<DiscretizedMeasure> {
    discretize_view(mu, grid, t, &history.view_before(t))
}

pub fn discretize_view(
    mu: &WakaraseMeasure,
    grid: &MarkGrid,
    t: f64,
    view: &HistoryView<'_>,
) -> Result<DiscretizedMeasure> {
    require_positive_support(mu, t, view)?;
    let masses = (0..grid.len())
        .map(|m| mu.mass(&grid.cell(m), t, view))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscretizedMeasure {
        level: grid.level(),
        points: grid.points().to_vec(),
        masses,
        dropped_low: mu.mass(&grid.dropped_region(), t, view)?,
    })
}

/// `∫ z² dμ − Σ z_m² μ_n({z_m})`, assembled cell by cell so that every
/// term is nonnegative.
pub fn second_moment_deficit(mu: &WakaraseMeasure, grid: &MarkGrid, t: f64, view: &HistoryView<'_>) -> Result<f64> {
    let mut acc = mu.integrate(&|z| z * z, &grid.dropped_region(), t, view)?;
    for m in 0..grid.len() {
        let zm = grid.points()[m];
        acc += mu.integrate(&|z| z * z - zm * zm, &grid.cell(m), t, view)?;
    }
    Ok(acc)
}

/// `μ_n` as a measure: one atom per grid point whose rate is the
/// corresponding cell mass of `mu` along the path.
pub fn discretized_measure(mu: Arc<WakaraseMeasure>, grid: &MarkGrid) -> WakaraseMeasure {
    let atoms = (0..grid.len())
        .map(|m| {
            let cell = grid.cell(m);
            let rate_mu = Arc::clone(&mu);
            let bound_mu = Arc::clone(&mu);
            let mut rate = CustomRate::new(move |t, view| rate_mu.mass(&cell, t, view).unwrap_or(f64::NAN))
                .with_bound(move |t, view, la| bound_mu.bound_on(&cell, t, view, la).unwrap_or(f64::INFINITY));
            if !mu.needs_lookahead() {
                rate = rate.bound_holds_until_next_event();
            }
            if !mu.is_history_dependent() {
                rate = rate.history_independent();
            }
            Atom {
                mark: grid.points()[m],
                rate: IntensityModel::Custom(rate),
            }
        })
        .collect();
    WakaraseMeasure::DiscreteAtoms(atoms)
}

/// Monte-Carlo estimate of `E ∫₀^T ∫ min(1, z²) μ(dz; F_t) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderConditionReport {
    pub estimate: f64,
    pub standard_error: f64,
    pub n_paths: usize,
    pub ceiling: f64,
    pub violated: bool,
}

impl fmt::Display for OrderConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "order condition: {} ± {} over {} paths{}",
            self.estimate,
            self.standard_error,
            self.n_paths,
            if self.violated { " (ceiling exceeded)" } else { "" }
        )
    }
}

/// Default ceiling beyond which the order condition is reported violated.
pub const ORDER_CEILING: f64 = 1e8;

/// `∫ min(1, z²) μ(dz; t, F_t)` at one time.
pub fn order_integrand(mu: &WakaraseMeasure, t: f64, view: &HistoryView<'_>) -> Result<f64> {
    let small = Interval::open(0.0, 1.0);
    let large = Interval::closed(1.0, f64::INFINITY);
    let mut acc = 0.0;
    for s in small.signed_pieces() {
        acc += mu.integrate(&|z| z * z, &s, t, view)?;
    }
    for l in [large, large.mirrored()] {
        acc += mu.mass(&l, t, view)?;
    }
    Ok(acc)
}

/// Estimates the order-condition integral along `n_paths` simulated paths.
/// History-independent measures need no simulation and report zero error.
pub fn check_order_condition(
    mu: &WakaraseMeasure,
    horizon: f64,
    n_paths: usize,
    rng: &RngStream,
    quad_step: f64,
    ceiling: f64,
) -> Result<OrderConditionReport> {
    if !(horizon > 0.0) {
        return Err(invalid("horizon", "must be > 0"));
    }
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be >= 1"));
    }
    if !mu.is_history_dependent() {
        let nodes = mu.driving_nodes();
        let empty = PathHistory::new(0.0);
        let value = if mu.is_time_homogeneous() {
            order_integrand(mu, 0.0, &HistoryView::empty())? * horizon
        } else {
            point_process::path_integral(&empty, horizon, quad_step, &nodes, |t, v| order_integrand(mu, t, v))?
        };
        return Ok(OrderConditionReport {
            estimate: value,
            standard_error: 0.0,
            n_paths,
            ceiling,
            violated: !(value <= ceiling),
        });
    }
    if !mu.has_finite_activity() {
        return Err(infinite_activity());
    }
    let nodes = mu.driving_nodes();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut violated = false;
    for i in 0..n_paths {
        let mut stream = crate::rng::derive_stream(rng.master_seed(), rng.stream_id().wrapping_add(i as u64));
        let path = crate::construction::simulate_mesugaki(mu, horizon, &mut stream)?;
        let v = point_process::path_integral(&path.history, horizon, quad_step, &nodes, |t, view| {
            order_integrand(mu, t, view)
        })?;
        sum += v;
        sum_sq += v * v;
        if sum / (i + 1) as f64 > ceiling || !v.is_finite() {
            violated = true;
            break;
        }
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
    Ok(OrderConditionReport {
        estimate: mean,
        standard_error: (var / n).sqrt(),
        n_paths,
        ceiling,
        violated,
    })
}

//! Mesugaki SDEs with state-dependent Wakarase measures
//!
//! `dX = f(X) dt + g(X) dB + ∫_{|z|>=1} h1(z, X−) N(dt dz; X−) + ∫_{0<|z|<1} h2(z, X−) Ñ(dt dz; X−)`
//!
//! solved by Euler–Maruyama between jumps. Jump times are located inside
//! each step, so every jump sees its exact left limit.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::construction::simulate_mesugaki_with;
use crate::error::{invalid, Error, Result};
use crate::history::{DrivingPath, HistoryView, JumpEvent, PathHistory, TimeGrid};
use crate::ito::{is_large, small_jump_drift, Coefficient, JumpMap, JumpRecord, JUMP_THRESHOLD};
use crate::marks::{Interval, MarkLaw};
use crate::point_process::{IntensityModel, Kernel, RateBound, RateFn, SimulationOptions};
use crate::rng::RngStream;
use crate::wakarase::WakaraseMeasure;

const BROWNIAN_TAG: u64 = 0x5344_4542;
const DEFAULT_MAX_JUMPS: usize = 1_000_000;

/// `λ p(dz)` with constant `λ > 0`.
pub fn compound_poisson(lambda: f64, law: impl MarkLaw + 'static) -> Result<WakaraseMeasure> {
    Ok(WakaraseMeasure::density(IntensityModel::homogeneous(lambda)?, law))
}

/// Marks drawn from `law` at the event times of a Hawkes process with base
/// rate `lambda0` and kernel `psi`.
pub fn compound_hawkes(lambda0: f64, psi: Kernel, law: impl MarkLaw + 'static) -> Result<WakaraseMeasure> {
    Ok(WakaraseMeasure::density(IntensityModel::hawkes(lambda0, psi)?, law))
}

/// Rate `φ(X_t)` read from a fixed driving path, marks from `law`.
pub fn compound_cox(
    phi: RateFn,
    path: Arc<DrivingPath>,
    bound: RateBound,
    law: impl MarkLaw + 'static,
) -> WakaraseMeasure {
    WakaraseMeasure::density(IntensityModel::cox(phi, path, bound), law)
}

type TableFn = Arc<dyn Fn(f64) -> Vec<(f64, f64)> + Send + Sync>;

/// `state ↦ [(Δz, rate)]`. An empty list makes the state absorbing.
#[derive(Clone)]
pub struct JumpTable {
    name: String,
    table: TableFn,
}

impl fmt::Debug for JumpTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JumpTable({})", self.name)
    }
}

impl JumpTable {
    pub fn new(name: impl Into<String>, table: impl Fn(f64) -> Vec<(f64, f64)> + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            table: Arc::new(table),
        }
    }

    /// Explicit finite table; states not listed are absorbing.
    pub fn from_entries(entries: Vec<(i64, Vec<(f64, f64)>)>) -> Result<Self> {
        let map: BTreeMap<i64, Vec<(f64, f64)>> = entries.into_iter().collect();
        for (&x, row) in &map {
            validate_row(x as f64, row)?;
        }
        Ok(Self::new("table", move |x| {
            map.get(&(x.round() as i64)).cloned().unwrap_or_default()
        }))
    }

    /// Birth rate `b`, death rate `d`; no deaths at 0.
    pub fn birth_death(birth: f64, death: f64) -> Result<Self> {
        if !(birth >= 0.0) || !(death >= 0.0) || !birth.is_finite() || !death.is_finite() {
            return Err(invalid("birth_death", "rates must be finite and >= 0"));
        }
        Ok(Self::new("birth_death", move |x| {
            let mut row = Vec::with_capacity(2);
            if birth > 0.0 {
                row.push((1.0, birth));
            }
            if death > 0.0 && x > 0.5 {
                row.push((-1.0, death));
            }
            row
        }))
    }

    /// The validated row at state `x`.
    pub fn row(&self, x: f64) -> Result<Vec<(f64, f64)>> {
        let row = (self.table)(x);
        validate_row(x, &row)?;
        Ok(row)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

fn validate_row(x: f64, row: &[(f64, f64)]) -> Result<()> {
    for &(dz, rate) in row {
        if dz == 0.0 || !dz.is_finite() {
            return Err(invalid(
                "jump_table",
                format!("state {x}: jump sizes must be finite and nonzero"),
            ));
        }
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(invalid(
                "jump_table",
                format!("state {x}: rates must be finite and >= 0"),
            ));
        }
    }
    Ok(())
}

type StateRateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `μ(dz; t, x, F)`.
#[derive(Clone)]
pub enum StateMeasure {
    /// Does not depend on the state.
    Fixed(WakaraseMeasure),
    /// `λ(x) p(dz)`.
    StateRate { rate: StateRateFn, law: Arc<dyn MarkLaw> },
    /// Atoms `Σ rate_k δ_{Δz_k}` read from a table at the current state.
    Table(JumpTable),
}

impl fmt::Debug for StateMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateMeasure::Fixed(mu) => write!(f, "Fixed({mu:?})"),
            StateMeasure::StateRate { law, .. } => write!(f, "StateRate({law:?})"),
            StateMeasure::Table(t) => write!(f, "{t:?}"),
        }
    }
}

impl StateMeasure {
    pub fn state_rate(rate: impl Fn(f64) -> f64 + Send + Sync + 'static, law: impl MarkLaw + 'static) -> Self {
        StateMeasure::StateRate {
            rate: Arc::new(rate),
            law: Arc::new(law),
        }
    }

    fn frozen_rate(&self, x: f64) -> Result<f64> {
        let r = match self {
            StateMeasure::Fixed(_) => unreachable!("fixed measures are simulated up front"),
            StateMeasure::StateRate { rate, .. } => rate(x),
            StateMeasure::Table(t) => t.row(x)?.iter().map(|r| r.1).sum(),
        };
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::ContractViolation(format!("rate at state {x} is {r}")));
        }
        Ok(r)
    }

    fn sample_mark(&self, x: f64, total: f64, rng: &mut RngStream) -> Result<f64> {
        match self {
            StateMeasure::Fixed(_) => unreachable!("fixed measures are simulated up front"),
            StateMeasure::StateRate { law, .. } => Ok(law.sample(0.0, &HistoryView::empty(), rng)),
            StateMeasure::Table(t) => {
                let row = t.row(x)?;
                let mut u = rng.uniform() * total;
                for &(dz, r) in &row {
                    if u < r {
                        return Ok(dz);
                    }
                    u -= r;
                }
                Ok(row.iter().rev().find(|r| r.1 > 0.0).map(|r| r.0).unwrap_or(row[0].0))
            }
        }
    }

    /// `∫_{0<|z|<1} h2(z, x) μ(dz; x)`.
    fn small_drift(&self, h2: &JumpMap, t: f64, x: f64, view: &HistoryView<'_>) -> Result<f64> {
        if h2.is_zero() {
            return Ok(0.0);
        }
        match self {
            StateMeasure::Fixed(mu) => small_jump_drift(h2, mu, t, x, view),
            StateMeasure::StateRate { rate, law } => {
                let lam = rate(x);
                if lam == 0.0 {
                    return Ok(0.0);
                }
                let g = |z: f64| h2.eval(t, z, x);
                let acc: f64 = Interval::open(0.0, JUMP_THRESHOLD)
                    .signed_pieces()
                    .iter()
                    .map(|p| law.integrate(&g, p, t, &HistoryView::empty()))
                    .sum();
                Ok(lam * acc)
            }
            StateMeasure::Table(table) => Ok(table
                .row(x)?
                .iter()
                .filter(|r| !is_large(r.0))
                .map(|&(dz, r)| r * h2.eval(t, dz, x))
                .sum()),
        }
    }
}

/// Scalar Mesugaki SDE.
#[derive(Debug, Clone)]
pub struct MesugakiSdeSpec {
    pub x0: f64,
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub h1: JumpMap,
    pub h2: JumpMap,
    pub mu: StateMeasure,
    /// Subtract `∫ h2 μ` from the drift. Off for pure counting dynamics.
    pub compensate_small: bool,
    pub max_jumps: usize,
}

impl MesugakiSdeSpec {
    pub fn new(x0: f64, mu: StateMeasure) -> Self {
        Self {
            x0,
            drift: Coefficient::Zero,
            diffusion: Coefficient::Zero,
            h1: JumpMap::identity(),
            h2: JumpMap::identity(),
            mu,
            compensate_small: true,
            max_jumps: DEFAULT_MAX_JUMPS,
        }
    }

    pub fn with_drift(mut self, f: Coefficient) -> Self {
        self.drift = f;
        self
    }

    pub fn with_diffusion(mut self, g: Coefficient) -> Self {
        self.diffusion = g;
        self
    }

    pub fn with_jumps(mut self, h1: JumpMap, h2: JumpMap) -> Self {
        self.h1 = h1;
        self.h2 = h2;
        self
    }

    pub fn uncompensated(mut self) -> Self {
        self.compensate_small = false;
        self
    }
}

/// A continuous-time Markov chain on the lattice written as
/// `X_t = X_0 + ∫∫ z N(ds dz; X_{s−})`.
pub fn discrete_state_process(table: JumpTable, x0: f64) -> MesugakiSdeSpec {
    MesugakiSdeSpec::new(x0, StateMeasure::Table(table)).uncompensated()
}

/// Càdlàg path on its knots (grid nodes and jump times).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub jumps: Vec<JumpRecord>,
}

impl SdePath {
    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        self.values[k.saturating_sub(1)]
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("path has at least one knot")
    }
}

struct Stepper<'a> {
    spec: &'a MesugakiSdeSpec,
    /// `∫_{0<|z|<1} z μ(dz)` when it does not depend on time or history.
    small_first_moment: Option<f64>,
    brownian: RngStream,
    x: f64,
    times: Vec<f64>,
    values: Vec<f64>,
    jumps: Vec<JumpRecord>,
}

impl Stepper<'_> {
    /// Euler from `t` to `s−`; the drift is frozen at `X_t`.
    fn advance(&mut self, t: f64, s: f64, view: &HistoryView<'_>) -> Result<()> {
        let dt = s - t;
        if dt <= 0.0 {
            return Ok(());
        }
        let spec = self.spec;
        let x = self.x;
        let mut a = spec.drift.eval(t, x);
        if spec.compensate_small {
            a -= match (&spec.h2, self.small_first_moment) {
                (JumpMap::Affine { c0, c1 }, Some(m1)) => m1 * (c0 + c1 * x),
                (h2, _) => spec.mu.small_drift(h2, t, x, view)?,
            };
        }
        let mut dx = a * dt;
        if !spec.diffusion.is_zero() {
            dx += spec.diffusion.eval(t, x) * dt.sqrt() * self.brownian.normal();
        }
        self.x += dx;
        self.check(s)
    }

    fn jump(&mut self, t: f64, z: f64) -> Result<()> {
        if self.jumps.len() >= self.spec.max_jumps {
            return Err(Error::Runaway {
                cap: self.spec.max_jumps,
                time: t,
            });
        }
        let large = is_large(z);
        let h = if large { &self.spec.h1 } else { &self.spec.h2 };
        let inc = h.eval(t, z, self.x);
        self.jumps.push(JumpRecord {
            time: t,
            mark: z,
            large,
            increment: inc,
            left_limit: self.x,
        });
        self.x += inc;
        self.check(t)
    }

    fn record(&mut self, t: f64) {
        self.times.push(t);
        self.values.push(self.x);
    }

    fn check(&self, t: f64) -> Result<()> {
        if self.x.is_finite() {
            Ok(())
        } else {
            Err(Error::ContractViolation(format!("state left the real line at t = {t}")))
        }
    }
}

/// Euler–Maruyama with jumps at exact times.
///
/// A state-dependent measure is frozen at the current state until the next
/// grid node or jump, whichever comes first.
pub fn euler_simulate(spec: &MesugakiSdeSpec, grid: &TimeGrid, rng: &mut RngStream) -> Result<SdePath> {
    if !spec.x0.is_finite() {
        return Err(invalid("x0", "must be finite"));
    }
    let small_first_moment = match &spec.mu {
        StateMeasure::Fixed(mu) if mu.is_time_homogeneous() => Some(small_jump_drift(
            &JumpMap::identity(),
            mu,
            0.0,
            0.0,
            &HistoryView::empty(),
        )?),
        _ => None,
    };
    let mut st = Stepper {
        spec,
        small_first_moment,
        brownian: rng.substream(&[BROWNIAN_TAG]),
        x: spec.x0,
        times: vec![0.0],
        values: vec![spec.x0],
        jumps: Vec::new(),
    };
    let nodes: Vec<f64> = grid.nodes().collect();
    match &spec.mu {
        StateMeasure::Fixed(mu) => {
            let opts = SimulationOptions {
                max_events: spec.max_jumps,
                ..SimulationOptions::default()
            };
            let path = simulate_mesugaki_with(mu, grid.horizon(), rng, &opts)?;
            let history = &path.history;
            let events = history.events();
            let mut k = 0;
            for w in nodes.windows(2) {
                let (mut cur, s) = (w[0], w[1]);
                while k < events.len() && events[k].time < s {
                    let e = events[k];
                    st.advance(cur, e.time, &history.view_through(cur))?;
                    st.jump(e.time, e.mark)?;
                    st.record(e.time);
                    cur = e.time;
                    k += 1;
                }
                st.advance(cur, s, &history.view_through(cur))?;
                if k < events.len() && events[k].time == s {
                    st.jump(s, events[k].mark)?;
                    k += 1;
                }
                st.record(s);
            }
        }
        mu => {
            let empty = PathHistory::new(0.0);
            let view = empty.view_all();
            for w in nodes.windows(2) {
                let (mut cur, s) = (w[0], w[1]);
                loop {
                    let lam = mu.frozen_rate(st.x)?;
                    let tau = if lam > 0.0 {
                        cur + rng.exp1() / lam
                    } else {
                        f64::INFINITY
                    };
                    if tau >= s {
                        break;
                    }
                    let z = mu.sample_mark(st.x, lam, rng)?;
                    st.advance(cur, tau, &view)?;
                    st.jump(tau, z)?;
                    st.record(tau);
                    cur = tau;
                }
                st.advance(cur, s, &view)?;
                st.record(s);
            }
        }
    }
    Ok(SdePath {
        times: st.times,
        values: st.values,
        jumps: st.jumps,
    })
}

/// The jump events of a simulated path, as a history.
pub fn jump_history(path: &SdePath) -> Result<PathHistory> {
    PathHistory::from_events(
        0.0,
        path.jumps
            .iter()
            .map(|j| JumpEvent {
                time: j.time,
                mark: j.mark,
            })
            .collect(),
    )
}

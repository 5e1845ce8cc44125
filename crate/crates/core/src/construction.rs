//! Discrete Mesugaki processes on the grids `Z_n`, the jump-splitting
//! coupling between consecutive levels, the direct simulator of the limit
//! process, and Monte-Carlo diagnostics of the convergence argument.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::jump_sup_distance;
use crate::ensemble::{mean_and_se, median, run_paths};
use crate::error::{invalid, Error, Result};
use crate::history::{HistoryView, JumpEvent, PathHistory};
use crate::marks::Interval;
use crate::point_process::{self, check_bound, thin, RateSource, SimulationOptions};
use crate::rng::RngStream;
use crate::wakarase::{
    discretized_measure, require_positive_support, second_moment_deficit, MarkGrid, WakaraseMeasure,
};

const LEVEL_TAG: u64 = 0x4c_4556_454c;
const FRESH_TAG: u64 = 0x46_5245_5348;
const SPLIT_TAG: u64 = 0x53_504c_4954;

/// A marked jump path on `(0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MesugakiPath {
    pub history: PathHistory,
    pub horizon: f64,
}

impl MesugakiPath {
    pub fn events(&self) -> &[JumpEvent] {
        self.history.events()
    }

    /// `N_t = Σ_{τ_k <= t} z_k`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.history.value_at(t)
    }

    pub fn terminal_value(&self) -> f64 {
        self.history.value_at(self.horizon)
    }
}

/// A level-`n` path whose marks are grid points of `Z_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMesugakiPath {
    pub grid: MarkGrid,
    pub events: Vec<JumpEvent>,
    /// Grid cell of each event.
    pub cells: Vec<usize>,
    pub horizon: f64,
}

impl DiscreteMesugakiPath {
    pub fn level(&self) -> usize {
        self.grid.level()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.events.iter().take_while(|e| e.time <= t).map(|e| e.mark).sum()
    }

    pub fn terminal_value(&self) -> f64 {
        self.events.iter().map(|e| e.mark).sum()
    }

    fn from_events(grid: MarkGrid, events: Vec<JumpEvent>, horizon: f64) -> Result<Self> {
        let cells = events
            .iter()
            .map(|e| {
                grid.cell_of(e.mark)
                    .filter(|&m| grid.points()[m] == e.mark)
                    .ok_or_else(|| Error::ContractViolation(format!("mark {} is not a grid point", e.mark)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            events,
            cells,
            horizon,
        })
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon", format!("must be finite and > 0, got {horizon}")));
    }
    Ok(())
}

/// Direct simulation of the process with measure `mu`: thinning on the
/// total rate, marks from the conditional mark law. The history, and hence
/// `mu`, updates after every accepted event.
pub fn simulate_mesugaki(mu: &WakaraseMeasure, horizon: f64, rng: &mut RngStream) -> Result<MesugakiPath> {
    simulate_mesugaki_with(mu, horizon, rng, &SimulationOptions::default())
}

pub fn simulate_mesugaki_with(
    mu: &WakaraseMeasure,
    horizon: f64,
    rng: &mut RngStream,
    opts: &SimulationOptions,
) -> Result<MesugakiPath> {
    check_horizon(horizon)?;
    if !mu.has_finite_activity() {
        return Err(Error::Unsupported(
            "direct simulation needs a finite total rate; truncate the small jumps with \
             WakaraseMeasure::restrict and handle them through the compensated integral"
                .into(),
        ));
    }
    let mut history = PathHistory::new(0.0);
    thin(mu, &mut history, horizon, rng, opts, |t, view, rng| {
        mu.sample_mark(t, view, rng)
    })?;
    Ok(MesugakiPath { history, horizon })
}

/// Simulates a measure made of finitely many atoms by competing thinning:
/// one dominating clock for the superposition, the atom picked in
/// proportion to the atom rates at acceptance.
pub fn simulate_discrete(atoms: &WakaraseMeasure, horizon: f64, rng: &mut RngStream) -> Result<MesugakiPath> {
    if !matches!(atoms, WakaraseMeasure::DiscreteAtoms(_)) {
        return Err(invalid("mu_n", "simulate_discrete expects a DiscreteAtoms measure"));
    }
    simulate_mesugaki(atoms, horizon, rng)
}

/// Simulates `discretize(mu, grid)` independently of any coupling.
pub fn simulate_level(
    mu: &Arc<WakaraseMeasure>,
    grid: &MarkGrid,
    horizon: f64,
    rng: &mut RngStream,
) -> Result<DiscreteMesugakiPath> {
    require_positive_support(mu, 0.0, &HistoryView::empty())?;
    let atoms = discretized_measure(Arc::clone(mu), grid);
    let path = simulate_discrete(&atoms, horizon, rng)?;
    DiscreteMesugakiPath::from_events(grid.clone(), path.history.into_events(), horizon)
}

/// `μ(upper child) / μ(parent cell)` for cell `cell` of `grid`, evaluated
/// on the strict left-limit of `history` at `t`.
pub fn split_probability(
    mu: &WakaraseMeasure,
    grid: &MarkGrid,
    cell: usize,
    t: f64,
    history: &PathHistory,
) -> Result<f64> {
    if cell >= grid.len() {
        return Err(invalid("cell", format!("grid has {} cells", grid.len())));
    }
    split_probability_view(mu, grid, &grid.refine(), cell, t, &history.view_before(t))
}

fn split_probability_view(
    mu: &WakaraseMeasure,
    grid: &MarkGrid,
    next: &MarkGrid,
    cell: usize,
    t: f64,
    view: &HistoryView<'_>,
) -> Result<f64> {
    let parent = mu.mass(&grid.cell(cell), t, view)?;
    if !(parent > 0.0) {
        return Err(Error::UndefinedSplit { cell, time: t });
    }
    let upper = mu.mass(&next.cell(2 * cell + 2), t, view)?;
    let p = upper / parent;
    if p > 1.0 + 1e-9 {
        log::warn!("split probability {p} exceeds 1 for cell {cell} at t = {t}; clamping");
    }
    Ok(p.clamp(0.0, 1.0))
}

/// One Bernoulli re-marking of a level-`n` event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitDraw {
    pub parent_event: usize,
    pub parent_cell: usize,
    pub child_event: usize,
    pub probability: f64,
    pub upper: bool,
}

/// How level `n + 1` was built from level `n`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LevelTransition {
    pub splits: Vec<SplitDraw>,
    /// Indices (at level `n + 1`) of the events in the new bottom cell.
    pub fresh: Vec<usize>,
}

/// Levels `1..=K` built on shared randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledFamily {
    pub levels: Vec<DiscreteMesugakiPath>,
    /// `transitions[k]` builds `levels[k + 1]` from `levels[k]`.
    pub transitions: Vec<LevelTransition>,
}

impl CoupledFamily {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Level `n` (1-based).
    pub fn level(&self, n: usize) -> &DiscreteMesugakiPath {
        &self.levels[n - 1]
    }

    /// Rebuilds level `k + 2` from level `k + 1` and the splitting record.
    pub fn reconstruct(&self, k: usize) -> Vec<JumpEvent> {
        let (lower, upper) = (&self.levels[k], &self.levels[k + 1]);
        let tr = &self.transitions[k];
        let mut out: Vec<JumpEvent> = tr
            .splits
            .iter()
            .map(|s| {
                let child = 2 * s.parent_cell + 1 + usize::from(s.upper);
                JumpEvent {
                    time: lower.events[s.parent_event].time,
                    mark: upper.grid.points()[child],
                }
            })
            .chain(tr.fresh.iter().map(|&i| JumpEvent {
                time: upper.events[i].time,
                mark: upper.grid.points()[0],
            }))
            .collect();
        out.sort_by(|a, b| a.time.total_cmp(&b.time));
        out
    }

    /// `max_k sup_t |N^{k+1}_t − reconstruction_t|`; zero when the record is
    /// consistent.
    pub fn reconstruction_error(&self) -> f64 {
        (0..self.transitions.len())
            .map(|k| jump_sup_distance(&self.levels[k + 1].events, &self.reconstruct(k), self.levels[k].horizon))
            .fold(0.0, f64::max)
    }

    /// At every event shared by levels `n` and `n + 1`, the level `n + 1`
    /// jump is at least the level `n` jump.
    pub fn jumps_monotone(&self) -> bool {
        self.transitions.iter().enumerate().all(|(k, tr)| {
            tr.splits.iter().all(|s| {
                let lo = &self.levels[k].events[s.parent_event];
                let hi = &self.levels[k + 1].events[s.child_event];
                lo.time == hi.time && hi.mark >= lo.mark
            })
        })
    }

    /// Whether `t ↦ N^m_t − N^n_t` is nondecreasing for levels `n < m`.
    pub fn difference_nondecreasing(&self, n: usize, m: usize) -> bool {
        let (a, b) = (&self.level(n).events, &self.level(m).events);
        let mut times: Vec<f64> = a.iter().chain(b.iter()).map(|e| e.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let (mut i, mut j) = (0, 0);
        for t in times {
            let mut jump = 0.0;
            while i < a.len() && a[i].time <= t {
                jump -= a[i].mark;
                i += 1;
            }
            while j < b.len() && b[j].time <= t {
                jump += b[j].mark;
                j += 1;
            }
            if jump < 0.0 {
                return false;
            }
        }
        true
    }
}

/// Rate source for a single cell of a measure.
struct CellSource<'a> {
    mu: &'a WakaraseMeasure,
    cell: Interval,
}

impl RateSource for CellSource<'_> {
    fn rate(&self, t: f64, view: &HistoryView<'_>) -> Result<f64> {
        self.mu.mass(&self.cell, t, view)
    }
    fn bound(&self, t: f64, view: &HistoryView<'_>, lookahead: f64) -> Result<f64> {
        self.mu.bound_on(&self.cell, t, view, lookahead)
    }
    fn needs_lookahead(&self) -> bool {
        self.mu.needs_lookahead()
    }
}

/// Builds levels `1..=depth` of the coupled approximation of `mu`.
///
/// Level 1 is simulated from `μ_1`. Each later level keeps every event of
/// the level below at the same time and re-marks it to the lower or upper
/// child of its cell with an independent Bernoulli draw; the new bottom
/// cell `[z_min / 2, z_min)` contributes fresh events. The Bernoulli draw
/// for event `i` of level `n` comes from its own substream, so the depth
/// does not perturb lower levels.
pub fn simulate_coupled(mu: &WakaraseMeasure, depth: usize, horizon: f64, rng: &RngStream) -> Result<CoupledFamily> {
    simulate_coupled_with(mu, depth, horizon, rng, &SimulationOptions::default())
}

pub fn simulate_coupled_with(
    mu: &WakaraseMeasure,
    depth: usize,
    horizon: f64,
    rng: &RngStream,
    opts: &SimulationOptions,
) -> Result<CoupledFamily> {
    check_horizon(horizon)?;
    if depth < 2 {
        return Err(invalid("depth", "a coupled family needs at least 2 levels"));
    }
    if depth > 30 {
        return Err(invalid("depth", "depth above 30 is not supported"));
    }
    require_positive_support(mu, 0.0, &HistoryView::empty())?;

    let grid = MarkGrid::level_one();
    let mut history = PathHistory::new(0.0);
    let source = CellSource { mu, cell: grid.cell(0) };
    let mut level_rng = rng.substream(&[LEVEL_TAG, 1]);
    thin(&source, &mut history, horizon, &mut level_rng, opts, |_, _, _| Ok(1.0))?;
    let first = DiscreteMesugakiPath {
        cells: vec![0; history.len()],
        events: history.into_events(),
        grid,
        horizon,
    };

    let mut levels = vec![first];
    let mut transitions = Vec::with_capacity(depth - 1);
    for n in 1..depth {
        let (next, tr) = refine_level(mu, &levels[n - 1], rng, opts)?;
        levels.push(next);
        transitions.push(tr);
    }
    Ok(CoupledFamily { levels, transitions })
}

fn refine_level(
    mu: &WakaraseMeasure,
    lower: &DiscreteMesugakiPath,
    rng: &RngStream,
    opts: &SimulationOptions,
) -> Result<(DiscreteMesugakiPath, LevelTransition)> {
    let n = lower.level();
    let grid = &lower.grid;
    let next = grid.refine();
    let horizon = lower.horizon;
    let fresh_cell = next.cell(0);
    let fresh_mark = next.points()[0];
    let mut fresh_rng = rng.substream(&[FRESH_TAG, n as u64 + 1]);
    let lookahead = if mu.needs_lookahead() {
        opts.lookahead.unwrap_or(horizon / 32.0)
    } else {
        f64::INFINITY
    };

    let mut history = PathHistory::new(0.0);
    let mut cells = Vec::with_capacity(lower.events.len());
    let mut tr = LevelTransition::default();
    let mut t = 0.0;
    let mut j = 0;
    loop {
        let stop = lower.events.get(j).map_or(horizon, |e| e.time);
        while t < stop {
            let window_end = (t + lookahead).min(stop);
            let bound = mu.bound_on(&fresh_cell, t, &history.view_all(), window_end - t)?;
            if !(bound > 0.0) {
                t = window_end;
                continue;
            }
            let s = t + fresh_rng.exp1() / bound;
            if s >= window_end {
                t = window_end;
                continue;
            }
            let view = history.view_all();
            let r = mu.mass(&fresh_cell, s, &view)?;
            check_bound(r, bound, s)?;
            let accept = fresh_rng.uniform() * bound < r;
            if accept && view.last_time().is_none_or(|last| s > last) {
                if history.len() >= opts.max_events {
                    return Err(Error::Runaway {
                        cap: opts.max_events,
                        time: s,
                    });
                }
                tr.fresh.push(history.len());
                cells.push(0);
                history.push(JumpEvent {
                    time: s,
                    mark: fresh_mark,
                })?;
            }
            t = s;
        }
        let Some(parent) = lower.events.get(j) else {
            break;
        };
        let parent_cell = lower.cells[j];
        let tau = parent.time;
        let p = split_probability_view(mu, grid, &next, parent_cell, tau, &history.view_before(tau))?;
        let upper = rng.substream(&[SPLIT_TAG, n as u64, j as u64]).uniform() < p;
        let child = 2 * parent_cell + 1 + usize::from(upper);
        tr.splits.push(SplitDraw {
            parent_event: j,
            parent_cell,
            child_event: history.len(),
            probability: p,
            upper,
        });
        cells.push(child);
        history.push(JumpEvent {
            time: tau,
            mark: next.points()[child],
        })?;
        t = tau;
        j += 1;
    }
    Ok((
        DiscreteMesugakiPath {
            grid: next,
            events: history.into_events(),
            cells,
            horizon,
        },
        tr,
    ))
}

/// Empirical `E|N^n_T − N^m_T|²` against `E ∫₀^T ∫ z² (μ − μ_n)(dz) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub n: usize,
    pub m: usize,
    pub empirical_l2: f64,
    pub standard_error: f64,
    pub bound: f64,
    pub violation_flag: bool,
    /// Contribution of marks below 1 (at level `m`) and their parents.
    pub small_l2: f64,
    /// Contribution of marks at or above 1.
    pub large_l2: f64,
    pub median_sup_distance: f64,
}

/// How often a large jump keeps its place between levels `n` and `n + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationReport {
    pub level: usize,
    pub large_events: usize,
    /// Fraction of large jumps at level `n` not pushed past `z^n_max + 1`.
    pub stable_fraction: f64,
    pub mean_mark_increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub horizon: f64,
    pub n_paths: usize,
    pub depths: Vec<usize>,
    pub pairs: Vec<PairReport>,
    pub stabilization: Vec<StabilizationReport>,
}

impl ConvergenceReport {
    pub fn any_violation(&self) -> bool {
        self.pairs.iter().any(|p| p.violation_flag)
    }
}

struct FamilyStats {
    /// Per level in `depths`: (total, small part, large part) at `T`.
    terminal: Vec<(f64, f64, f64)>,
    sup: Vec<f64>,
    /// Per level `1..K-1`: (large events, stable, sum |increment|).
    stab: Vec<(usize, usize, f64)>,
    bounds: Vec<f64>,
}

fn split_terminal(path: &DiscreteMesugakiPath) -> (f64, f64, f64) {
    let (mut small, mut large) = (0.0, 0.0);
    for e in &path.events {
        if e.mark < 1.0 {
            small += e.mark;
        } else {
            large += e.mark;
        }
    }
    (small + large, small, large)
}

/// Monte-Carlo evidence for the convergence of the coupled levels.
pub fn diagnose_convergence(
    mu: &WakaraseMeasure,
    depths: &[usize],
    horizon: f64,
    n_paths: usize,
    master_seed: u64,
    quad_step: f64,
) -> Result<ConvergenceReport> {
    check_horizon(horizon)?;
    if depths.len() < 2 || depths.windows(2).any(|w| w[1] <= w[0]) || depths[0] == 0 {
        return Err(invalid("depths", "need at least two strictly increasing levels >= 1"));
    }
    if n_paths < 2 {
        return Err(invalid("n_paths", "need at least 2 paths"));
    }
    let k = *depths.last().unwrap();
    let grids: Vec<MarkGrid> = depths.iter().map(|&n| MarkGrid::at_level(n)).collect::<Result<_>>()?;
    let homogeneous = mu.is_time_homogeneous();
    let history_free = !mu.is_history_dependent();
    let nodes = mu.driving_nodes();

    let deficit_integral = |grid: &MarkGrid, history: &PathHistory| -> Result<f64> {
        if homogeneous {
            return Ok(second_moment_deficit(mu, grid, 0.0, &HistoryView::empty())? * horizon);
        }
        point_process::path_integral(history, horizon, quad_step, &nodes, |t, v| {
            second_moment_deficit(mu, grid, t, v)
        })
    };
    // history-free bounds are path independent
    let shared_bounds: Option<Vec<f64>> = if history_free {
        let empty = PathHistory::new(0.0);
        Some(
            grids[..grids.len() - 1]
                .iter()
                .map(|g| deficit_integral(g, &empty))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };

    let stats = run_paths(master_seed, n_paths, |_, rng| {
        let family = simulate_coupled(mu, k.max(2), horizon, rng)?;
        let terminal = depths.iter().map(|&n| split_terminal(family.level(n))).collect();
        let sup = depths
            .windows(2)
            .map(|w| jump_sup_distance(&family.level(w[0]).events, &family.level(w[1]).events, horizon))
            .collect();
        let stab = (1..family.depth())
            .map(|n| {
                let lower = family.level(n);
                let upper = family.level(n + 1);
                let ceiling = lower.grid.max() + 1.0;
                let (mut large, mut stable, mut incr) = (0, 0, 0.0);
                for s in &family.transitions[n - 1].splits {
                    let z = lower.events[s.parent_event].mark;
                    if z >= 1.0 {
                        let w = upper.events[s.child_event].mark;
                        large += 1;
                        stable += usize::from(w < ceiling);
                        incr += (w - z).abs();
                    }
                }
                (large, stable, incr)
            })
            .collect();
        let bounds = match &shared_bounds {
            Some(b) => b.clone(),
            None => {
                let finest = family.level(k);
                let h = PathHistory::from_events(0.0, finest.events.clone())?;
                grids[..grids.len() - 1]
                    .iter()
                    .map(|g| deficit_integral(g, &h))
                    .collect::<Result<_>>()?
            }
        };
        Ok(FamilyStats {
            terminal,
            sup,
            stab,
            bounds,
        })
    })?;

    let mut pairs = Vec::with_capacity(depths.len() - 1);
    for (p, w) in depths.windows(2).enumerate() {
        let sq: Vec<f64> = stats
            .iter()
            .map(|s| (s.terminal[p].0 - s.terminal[p + 1].0).powi(2))
            .collect();
        let (empirical_l2, standard_error) = mean_and_se(&sq);
        let small_l2 = stats
            .iter()
            .map(|s| (s.terminal[p].1 - s.terminal[p + 1].1).powi(2))
            .sum::<f64>()
            / n_paths as f64;
        let large_l2 = stats
            .iter()
            .map(|s| (s.terminal[p].2 - s.terminal[p + 1].2).powi(2))
            .sum::<f64>()
            / n_paths as f64;
        let bound = stats.iter().map(|s| s.bounds[p]).sum::<f64>() / n_paths as f64;
        let sups: Vec<f64> = stats.iter().map(|s| s.sup[p]).collect();
        pairs.push(PairReport {
            n: w[0],
            m: w[1],
            empirical_l2,
            standard_error,
            bound,
            violation_flag: empirical_l2 > bound + 4.0 * standard_error,
            small_l2,
            large_l2,
            median_sup_distance: median(&sups),
        });
    }

    let stabilization = (1..k)
        .map(|n| {
            let (mut large, mut stable, mut incr) = (0usize, 0usize, 0.0);
            for s in &stats {
                let (l, st, i) = s.stab[n - 1];
                large += l;
                stable += st;
                incr += i;
            }
            StabilizationReport {
                level: n,
                large_events: large,
                stable_fraction: if large == 0 { 1.0 } else { stable as f64 / large as f64 },
                mean_mark_increment: if large == 0 { 0.0 } else { incr / large as f64 },
            }
        })
        .collect();

    Ok(ConvergenceReport {
        horizon,
        n_paths,
        depths: depths.to_vec(),
        pairs,
        stabilization,
    })
}

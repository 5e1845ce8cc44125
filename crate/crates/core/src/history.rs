//! Jump events, observable path histories and time grids.
//!
//! A [`PathHistory`] is the only representation of the information available
//! at time `t`. Intensities, marks laws and integrands never see the raw
//! history: they receive a [`HistoryView`] produced by
//! [`PathHistory::view_before`], which exposes exactly the events with
//! `time < t`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A jump at `time` with size `mark`. Plain counting processes use mark 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

impl JumpEvent {
    pub fn new(time: f64, mark: f64) -> Result<Self> {
        if !(time >= 0.0) || !time.is_finite() {
            return Err(invalid("time", format!("must be finite and >= 0, got {time}")));
        }
        if mark == 0.0 || !mark.is_finite() {
            return Err(invalid("mark", format!("must be finite and nonzero, got {mark}")));
        }
        Ok(Self { time, mark })
    }

    pub fn unit(time: f64) -> Self {
        Self { time, mark: 1.0 }
    }
}

/// Piecewise-linear record of an exogenous adapted process `X_t`, used by
/// Cox-type intensities. Outside the recorded range the end values are held.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrivingPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DrivingPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(invalid(
                "driving_path",
                "times and values must be nonempty and of equal length",
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("driving_path", "times must be strictly increasing"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("driving_path", "values must be finite"));
        }
        Ok(Self { times, values })
    }

    /// Samples `f` on the nodes of `grid`.
    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let times: Vec<f64> = grid.nodes().collect();
        let values = times.iter().map(|&t| f(t)).collect();
        Self::new(times, values)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0];
        }
        if k == self.times.len() {
            return self.values[k - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Borrowed view of the information available strictly before some time.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    pub events: &'a [JumpEvent],
    pub driving: Option<&'a DrivingPath>,
    pub origin: f64,
}

impl<'a> HistoryView<'a> {
    pub fn empty() -> HistoryView<'static> {
        HistoryView {
            events: &[],
            driving: None,
            origin: 0.0,
        }
    }

    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.time)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sum of marks, i.e. the value of the jump path.
    pub fn value(&self) -> f64 {
        self.events.iter().map(|e| e.mark).sum()
    }
}

/// Time-ordered jump events plus an optional driving path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathHistory {
    events: Vec<JumpEvent>,
    driving: Option<Arc<DrivingPath>>,
    origin: f64,
}

impl PathHistory {
    pub fn new(origin: f64) -> Self {
        Self {
            events: Vec::new(),
            driving: None,
            origin,
        }
    }

    pub fn with_driving(mut self, driving: Arc<DrivingPath>) -> Self {
        self.driving = Some(driving);
        self
    }

    /// Builds a history from events, rejecting ties and out-of-order times.
    pub fn from_events(origin: f64, events: Vec<JumpEvent>) -> Result<Self> {
        let mut h = Self::new(origin);
        for e in events {
            h.push(e)?;
        }
        Ok(h)
    }

    /// Appends an event. Times must be strictly increasing and not before
    /// the origin.
    pub fn push(&mut self, event: JumpEvent) -> Result<()> {
        if event.time < self.origin {
            return Err(Error::Domain(format!(
                "event at {} precedes origin {}",
                event.time, self.origin
            )));
        }
        if let Some(last) = self.events.last() {
            if !(event.time > last.time) {
                return Err(Error::Domain(format!(
                    "event times must be strictly increasing ({} after {})",
                    event.time, last.time
                )));
            }
        }
        if event.mark == 0.0 {
            return Err(invalid("mark", "must be nonzero"));
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<JumpEvent> {
        self.events
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn driving(&self) -> Option<&Arc<DrivingPath>> {
        self.driving.as_ref()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Number of events with `time < t`.
    pub fn count_before(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time < t)
    }

    /// Number of events with `time <= t`.
    pub fn count_through(&self, t: f64) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    /// Events strictly before `t`: the left-limit information at `t`.
    pub fn view_before(&self, t: f64) -> HistoryView<'_> {
        self.view_of(self.count_before(t))
    }

    /// Events at or before `t`: the right-limit information at `t`.
    pub fn view_through(&self, t: f64) -> HistoryView<'_> {
        self.view_of(self.count_through(t))
    }

    pub fn view_all(&self) -> HistoryView<'_> {
        self.view_of(self.events.len())
    }

    fn view_of(&self, k: usize) -> HistoryView<'_> {
        HistoryView {
            events: &self.events[..k],
            driving: self.driving.as_deref(),
            origin: self.origin,
        }
    }

    /// Owned restriction to the events with `time < t`.
    pub fn history_before(&self, t: f64) -> Result<PathHistory> {
        if t < self.origin {
            return Err(Error::Domain(format!(
                "query time {t} precedes history origin {}",
                self.origin
            )));
        }
        Ok(PathHistory {
            events: self.events[..self.count_before(t)].to_vec(),
            driving: self.driving.clone(),
            origin: self.origin,
        })
    }

    /// Càdlàg path value `sum of marks over events with time <= t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.events[..self.count_through(t)].iter().map(|e| e.mark).sum()
    }
}

/// Uniform time grid on `[0, horizon]`. The last step may be shorter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid("horizon", format!("must be > 0, got {horizon}")));
        }
        if !(step > 0.0) || step > horizon {
            return Err(invalid("step", format!("must satisfy 0 < step <= horizon, got {step}")));
        }
        Ok(Self { horizon, step })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn n_steps(&self) -> usize {
        let n = (self.horizon / self.step).round();
        if (n * self.step - self.horizon).abs() <= 1e-9 * self.horizon {
            n as usize
        } else {
            (self.horizon / self.step).ceil() as usize
        }
    }

    /// Nodes `0 = t_0 < ... < t_n = horizon`.
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_steps();
        (0..=n).map(move |i| if i == n { self.horizon } else { i as f64 * self.step })
    }
}

//! Interaction-event logs, app-to-app transition estimates and hand-travel
//! statistics.
//!
//! Logs persist as newline-delimited JSON, one canonical event per line.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical;
use crate::geometry::Vec3;
use crate::ids::AppId;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("event {index} at t={timestamp} precedes the previous event at t={previous}")]
    OutOfOrder { index: usize, timestamp: f64, previous: f64 },
    #[error("event {index} has a non-finite timestamp or hand position")]
    NonFinite { index: usize },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Canonical(#[from] canonical::CanonicalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    PointerDown,
    PointerUp,
    DragStart,
    DragEnd,
    Focus,
    Hover,
    Tap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    /// Seconds.
    pub timestamp: f64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<AppId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hand_position: Option<Vec3<f64>>,
}

impl InteractionEvent {
    pub fn focus(timestamp: f64, app: impl Into<AppId>) -> Self {
        Self { timestamp, kind: EventKind::Focus, app: Some(app.into()), hand_position: None }
    }

    pub fn pointer(timestamp: f64, kind: EventKind, hand: Vec3<f64>) -> Self {
        Self { timestamp, kind, app: None, hand_position: Some(hand) }
    }
}

/// Checks that `events` can be appended after an event at `after` (if any).
pub fn validate_events(events: &[InteractionEvent], after: Option<f64>) -> Result<(), TelemetryError> {
    let mut previous = after;
    for (index, e) in events.iter().enumerate() {
        if !e.timestamp.is_finite() || e.hand_position.is_some_and(|p| !p.is_finite()) {
            return Err(TelemetryError::NonFinite { index });
        }
        if let Some(p) = previous {
            if e.timestamp < p {
                return Err(TelemetryError::OutOfOrder { index, timestamp: e.timestamp, previous: p });
            }
        }
        previous = Some(e.timestamp);
    }
    Ok(())
}

/// Append-only, time-ordered event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TelemetryLog {
    events: Vec<InteractionEvent>,
}

impl TelemetryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events(events: Vec<InteractionEvent>) -> Result<Self, TelemetryError> {
        validate_events(&events, None)?;
        Ok(Self { events })
    }

    /// Appends a batch atomically: either every event is stored or none is.
    pub fn append(&mut self, batch: &[InteractionEvent]) -> Result<usize, TelemetryError> {
        validate_events(batch, self.events.last().map(|e| e.timestamp))?;
        self.events.extend_from_slice(batch);
        Ok(batch.len())
    }

    pub fn events(&self) -> &[InteractionEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn read_ndjson<R: BufRead>(reader: R) -> Result<Self, TelemetryError> {
        let mut events = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(&line).map_err(|source| TelemetryError::Parse { line: i + 1, source })?;
            events.push(e);
        }
        Self::from_events(events)
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<(), TelemetryError> {
        for e in &self.events {
            writeln!(w, "{}", canonical::to_string(e)?)?;
        }
        Ok(())
    }
}

/// Hand displacement of every matched `pointer_down`/`pointer_up` pair, in
/// event order. Pairs missing a hand position on either end are skipped.
pub fn hand_travel(log: &[InteractionEvent]) -> Vec<f64> {
    let mut down: Option<Option<Vec3<f64>>> = None;
    let mut out = Vec::new();
    for e in log {
        match e.kind {
            EventKind::PointerDown => down = Some(e.hand_position),
            EventKind::PointerUp => {
                if let Some(Some(start)) = down.take() {
                    if let Some(end) = e.hand_position {
                        out.push(start.distance(end));
                    }
                }
            }
            _ => {}
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignalStats {
    /// Meters.
    pub mean_hand_travel: f64,
    pub samples: usize,
}

impl SignalStats {
    pub fn from_distances(distances: &[f64]) -> Self {
        if distances.is_empty() {
            return Self::default();
        }
        let sum: f64 = distances.iter().sum();
        Self { mean_hand_travel: sum / distances.len() as f64, samples: distances.len() }
    }

    pub fn from_log(log: &[InteractionEvent]) -> Self {
        Self::from_distances(&hand_travel(log))
    }
}

/// Row-stochastic app-to-app focus transition probabilities with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix<T> {
    pub apps: Vec<AppId>,
    pub p: Vec<Vec<T>>,
}

impl<T: Real> TransitionMatrix<T> {
    pub fn zeros(apps: Vec<AppId>) -> Self {
        let n = apps.len();
        Self { apps, p: vec![vec![T::zero(); n]; n] }
    }

    pub fn index_of(&self, app: &AppId) -> Option<usize> {
        self.apps.iter().position(|a| a == app)
    }

    /// `P[from][to]`, zero for apps outside the matrix.
    pub fn get(&self, from: &AppId, to: &AppId) -> T {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.p[i][j],
            _ => T::zero(),
        }
    }

    /// Lookup table keyed by app id, for hot loops.
    pub fn lookup(&self) -> HashMap<&AppId, usize> {
        self.apps.iter().enumerate().map(|(i, a)| (a, i)).collect()
    }
}

/// Laplace-smoothed transition estimate from consecutive `focus` events.
///
/// `P[i][l] = (n(i→l) + s) / Σ_{l'≠i} (n(i→l') + s)`. Repeated focus on the
/// same app is not a transition; focus on an app outside `apps` breaks the
/// chain. Rows with no mass (no data and `s = 0`) are all zero.
pub fn estimate_transitions<T: Real>(log: &[InteractionEvent], apps: &[AppId], smoothing: T) -> TransitionMatrix<T> {
    let n = apps.len();
    let mut m = TransitionMatrix::zeros(apps.to_vec());
    if n < 2 {
        return m;
    }
    let index: HashMap<&AppId, usize> = apps.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let mut counts = vec![vec![0usize; n]; n];
    let mut prev: Option<&AppId> = None;
    for e in log.iter().filter(|e| e.kind == EventKind::Focus) {
        let Some(app) = e.app.as_ref() else { continue };
        if prev == Some(app) {
            continue;
        }
        if let (Some(p), Some(&j)) = (prev.and_then(|p| index.get(p)), index.get(app)) {
            counts[*p][j] += 1;
        }
        prev = Some(app);
    }
    let s = smoothing.max(T::zero());
    for i in 0..n {
        let denom: T = (0..n).filter(|&l| l != i).map(|l| T::from_count(counts[i][l]) + s).sum();
        if denom > T::zero() {
            for l in (0..n).filter(|&l| l != i) {
                m.p[i][l] = (T::from_count(counts[i][l]) + s) / denom;
            }
        }
    }
    m
}

//! Gait phase: hindsight labelling from contact events, and the recurrent
//! estimator that predicts it (plus body state) from proprioceptive
//! history.
//!
//! Phase convention per leg: φ = 0 at liftoff, φ = 1 at touchdown, linear
//! in time in between — a triangle wave rising through swing and falling
//! through stance. Labels are computed *in hindsight* once the surrounding
//! events are known, which is why training rewards are evaluated after a
//! rollout completes.

pub mod estimator;

use serde::{Deserialize, Serialize};

use crate::sim::{ContactEvent, EventKind, NUM_LEGS};
use crate::{Error, Result};

/// Per-leg gait phase in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseVector(pub [f64; NUM_LEGS]);

/// Per-leg event sequences with alternation and monotonicity enforced at
/// insertion, so labelling can trust the data.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    by_leg: [Vec<ContactEvent>; NUM_LEGS],
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one event, enforcing per-leg time monotonicity and
    /// touchdown/liftoff alternation.
    pub fn push(&mut self, ev: ContactEvent) -> Result<()> {
        if ev.leg >= NUM_LEGS {
            return Err(Error::invalid(format!("event leg {} out of range", ev.leg)));
        }
        if !ev.time.is_finite() {
            return Err(Error::invalid("event time must be finite"));
        }
        if let Some(last) = self.by_leg[ev.leg].last() {
            if ev.time < last.time {
                return Err(Error::invalid(format!(
                    "leg {} events out of order: {} after {}",
                    ev.leg, ev.time, last.time
                )));
            }
            if ev.kind == last.kind {
                return Err(Error::invalid(format!(
                    "leg {} got two consecutive {:?} events",
                    ev.leg, ev.kind
                )));
            }
        }
        self.by_leg[ev.leg].push(ev);
        Ok(())
    }

    pub fn extend(&mut self, events: &[ContactEvent]) -> Result<()> {
        for &ev in events {
            self.push(ev)?;
        }
        Ok(())
    }

    pub fn leg(&self, leg: usize) -> &[ContactEvent] {
        &self.by_leg[leg]
    }

    pub fn total_events(&self) -> usize {
        self.by_leg.iter().map(Vec::len).sum()
    }

    pub fn clear(&mut self) {
        for v in &mut self.by_leg {
            v.clear();
        }
    }

    /// Touchdown count per leg (for gait statistics).
    pub fn touchdowns(&self, leg: usize) -> usize {
        self.by_leg[leg]
            .iter()
            .filter(|e| e.kind == EventKind::Touchdown)
            .count()
    }
}

/// Hindsight phase labeller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseLabeler {
    /// Nominal stance duration (s) used before a leg's first event: a leg
    /// standing since reset decays from 1 toward 0 over this horizon.
    pub nominal_stance_s: f64,
}

impl Default for PhaseLabeler {
    fn default() -> Self {
        PhaseLabeler { nominal_stance_s: 0.25 }
    }
}

impl PhaseLabeler {
    /// Phase of one leg at time `t`, given that leg's validated event
    /// sequence.
    ///
    /// Exactly at an event the label is exact (touchdown → 1, liftoff → 0).
    /// Between a liftoff and the following touchdown the phase rises
    /// linearly 0 → 1; between a touchdown and the following liftoff it
    /// falls linearly 1 → 0. After the last known event the label holds its
    /// event value; before the first event it follows the nominal decay
    /// (or, if the leg starts airborne, rises to meet its first touchdown).
    pub fn label_leg(&self, events: &[ContactEvent], t: f64) -> f64 {
        // Number of events at or before t.
        let idx = events.partition_point(|e| e.time <= t);
        if idx == 0 {
            return match events.first() {
                // Standing since reset (or forever): decay 1 → 0.
                None => (1.0 - t / self.nominal_stance_s).max(0.0),
                Some(first) => match first.kind {
                    EventKind::Liftoff => (1.0 - t / self.nominal_stance_s).max(0.0),
                    // Airborne at reset: rise to 1 exactly at touchdown.
                    EventKind::Touchdown => {
                        (1.0 - (first.time - t) / self.nominal_stance_s).clamp(0.0, 1.0)
                    }
                },
            };
        }
        let prev = &events[idx - 1];
        let next = events.get(idx);
        match (prev.kind, next) {
            (EventKind::Liftoff, Some(n)) => {
                let span = n.time - prev.time;
                if span <= 0.0 {
                    1.0
                } else {
                    ((t - prev.time) / span).clamp(0.0, 1.0)
                }
            }
            (EventKind::Touchdown, Some(n)) => {
                let span = n.time - prev.time;
                if span <= 0.0 {
                    0.0
                } else {
                    (1.0 - (t - prev.time) / span).clamp(0.0, 1.0)
                }
            }
            (EventKind::Liftoff, None) => 0.0,
            (EventKind::Touchdown, None) => 1.0,
        }
    }

    /// Phases of all legs at time `t` from a validated [`EventLog`].
    pub fn label(&self, log: &EventLog, t: f64) -> PhaseVector {
        let mut phi = [0.0; NUM_LEGS];
        for (leg, p) in phi.iter_mut().enumerate() {
            *p = self.label_leg(log.leg(leg), t);
        }
        PhaseVector(phi)
    }

    /// Validates and labels a mixed event slice (any leg order); intended
    /// for external callers that did not build an [`EventLog`] themselves.
    pub fn label_events(&self, events: &[ContactEvent], t: f64) -> Result<PhaseVector> {
        let mut log = EventLog::new();
        let mut sorted = events.to_vec();
        sorted.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite event times"));
        log.extend(&sorted)?;
        Ok(self.label(&log, t))
    }
}

/// Fixed-length window of recent observation vectors, oldest first.
///
/// After `reset` the window is filled with copies of the initial
/// observation, so the length never varies.
#[derive(Debug, Clone)]
pub struct ObservationHistory {
    window: usize,
    buf: std::collections::VecDeque<Vec<f64>>,
}

impl ObservationHistory {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::invalid("history window must be at least 1"));
        }
        Ok(ObservationHistory { window, buf: std::collections::VecDeque::with_capacity(window) })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Fills the whole window with the given observation.
    pub fn reset(&mut self, obs: &[f64]) {
        self.buf.clear();
        for _ in 0..self.window {
            self.buf.push_back(obs.to_vec());
        }
    }

    /// Appends the newest observation, dropping the oldest.
    pub fn push(&mut self, obs: &[f64]) {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        } else {
            while self.buf.len() + 1 < self.window {
                self.buf.push_back(obs.to_vec());
            }
        }
        self.buf.push_back(obs.to_vec());
    }

    /// Oldest-to-newest copies of the stored observations.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.buf.iter().cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.buf.iter()
    }
}

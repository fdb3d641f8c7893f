//! Sampling-interval selection, time-set recalibration and trigger handling.

use std::collections::BTreeSet;
use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::NodeId;

/// Urgency at or above this fraction of the flood line always selects the
/// shortest interval.
pub const URGENT_FRACTION: f64 = 0.9;

/// Consecutive calm readings after which the divisor falls back to 1.
pub const CALM_READINGS_BEFORE_RESET: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("time set must contain at least one interval")]
    EmptyTimeSet,
    #[error("time set intervals must be positive and strictly ascending")]
    NotAscending,
    #[error("action time must be positive")]
    InvalidActionTime,
}

/// The admissible sampling intervals (minutes), a shared divisor, and the
/// action time `T` that floors every effective interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSet {
    intervals: Vec<f64>,
    divisor: u32,
    action_time: f64,
    calm_readings: u32,
}

impl TimeSet {
    pub fn new(intervals: Vec<f64>, action_time: f64) -> Result<Self, ScheduleError> {
        if intervals.is_empty() {
            return Err(ScheduleError::EmptyTimeSet);
        }
        if intervals.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || intervals.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(ScheduleError::NotAscending);
        }
        if !(action_time.is_finite() && action_time > 0.0) {
            return Err(ScheduleError::InvalidActionTime);
        }
        Ok(Self {
            intervals,
            divisor: 1,
            action_time,
            calm_readings: 0,
        })
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn divisor(&self) -> u32 {
        self.divisor
    }

    pub fn action_time(&self) -> f64 {
        self.action_time
    }

    pub fn band_count(&self) -> usize {
        self.intervals.len()
    }

    /// Interval `i` divided by the divisor, never below the action time.
    pub fn effective(&self, i: usize) -> f64 {
        (self.intervals[i] / f64::from(self.divisor)).max(self.action_time)
    }

    pub fn effective_intervals(&self) -> Vec<f64> {
        (0..self.intervals.len()).map(|i| self.effective(i)).collect()
    }

    pub fn shortest(&self) -> f64 {
        self.effective(0)
    }

    pub fn longest(&self) -> f64 {
        self.effective(self.intervals.len() - 1)
    }

    /// Track calm readings; two in a row in the lowest-urgency band restore
    /// the undivided time set.
    pub fn note_urgency(&mut self, urgency: f64) {
        if band_index(urgency, self.band_count()) == self.band_count() - 1 {
            self.calm_readings += 1;
            if self.calm_readings >= CALM_READINGS_BEFORE_RESET {
                self.divisor = 1;
                self.calm_readings = 0;
            }
        } else {
            self.calm_readings = 0;
        }
    }
}

impl Default for TimeSet {
    fn default() -> Self {
        Self::new(vec![5.0, 15.0, 30.0, 60.0], 5.0).expect("default time set is valid")
    }
}

/// Worst-case urgency: the larger of the current level and the latest rise,
/// both as fractions of the flood line.
pub fn urgency(prev_level: f64, curr_level: f64, flood_line: f64) -> f64 {
    let rise = (curr_level - prev_level).max(0.0);
    (curr_level / flood_line).max(rise / flood_line)
}

/// Band for an urgency value; 0 is the shortest interval.
pub fn band_index(urgency: f64, bands: usize) -> usize {
    if urgency >= URGENT_FRACTION {
        return 0;
    }
    let u = urgency.clamp(0.0, 1.0);
    let raw = ((1.0 - u) * bands as f64).floor();
    (raw.max(0.0) as usize).min(bands - 1)
}

/// Interval until the next reading given the last two levels.
pub fn time_multiplier(prev_level: f64, curr_level: f64, flood_line: f64, ts: &TimeSet) -> f64 {
    let u = urgency(prev_level, curr_level, flood_line);
    ts.effective(band_index(u, ts.band_count()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recalibration {
    pub time_set: TimeSet,
    pub interval: f64,
    pub alarm: bool,
}

/// Shorten `chosen_interval` so the next reading lands before a predicted
/// flood, dividing the whole time set by the smallest sufficient integer
/// factor. Intervals never go below the action time; a flood expected sooner
/// than that raises the alarm.
pub fn recalibrate(ts: &TimeSet, predicted_flood_in: Option<f64>, chosen_interval: f64) -> Recalibration {
    let Some(flood_in) = predicted_flood_in else {
        return Recalibration {
            time_set: ts.clone(),
            interval: chosen_interval,
            alarm: false,
        };
    };
    let floor = ts.action_time;
    let alarm = flood_in < floor;
    let mut time_set = ts.clone();
    let mut interval = chosen_interval;
    if flood_in < chosen_interval && chosen_interval > floor {
        let factor = if flood_in <= floor {
            (chosen_interval / floor).ceil()
        } else {
            (chosen_interval / flood_in).floor() + 1.0
        };
        let factor = factor.clamp(1.0, f64::from(u32::MAX)) as u32;
        time_set.divisor = time_set.divisor.saturating_mul(factor);
        time_set.calm_readings = 0;
        interval = (chosen_interval / f64::from(factor)).max(floor);
    }
    Recalibration {
        time_set,
        interval,
        alarm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    Time,
    Event,
    Query,
    SystemInterrupt,
}

impl TriggerKind {
    /// Whether this trigger cuts a wait short.
    pub fn interrupts(self) -> bool {
        !matches!(self, TriggerKind::Time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub kind: TriggerKind,
    pub issued_at: f64,
    pub origin: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Wakeup {
    SampleNow,
    WaitUntil(f64),
}

pub fn next_wakeup(now: f64, interval: f64, pending: Option<&Trigger>) -> Wakeup {
    match pending {
        Some(trigger) if trigger.kind.interrupts() => Wakeup::SampleNow,
        _ => Wakeup::WaitUntil(now + interval),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Queued {
    trigger: Trigger,
    seq: u64,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.trigger
            .issued_at
            .total_cmp(&other.trigger.issued_at)
            .then(self.trigger.origin.cmp(&other.trigger.origin))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Pending triggers ordered by issue time, ties broken by origin.
#[derive(Debug, Clone, Default)]
pub struct TriggerQueue {
    items: BTreeSet<Queued>,
    next_seq: u64,
}

impl TriggerQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, trigger: Trigger) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.items.insert(Queued { trigger, seq });
    }

    pub fn peek(&self) -> Option<&Trigger> {
        self.items.first().map(|q| &q.trigger)
    }

    pub fn pop(&mut self) -> Option<Trigger> {
        self.items.pop_first().map(|q| q.trigger)
    }

    /// Remove and return every trigger issued at or before `t`.
    pub fn drain_through(&mut self, t: f64) -> Vec<Trigger> {
        let mut out = Vec::new();
        while self.peek().is_some_and(|tr| tr.issued_at <= t) {
            out.extend(self.pop());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl Extend<Trigger> for TriggerQueue {
    fn extend<I: IntoIterator<Item = Trigger>>(&mut self, iter: I) {
        for t in iter {
            self.push(t);
        }
    }
}

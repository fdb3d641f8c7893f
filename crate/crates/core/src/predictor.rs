//! The per-node prediction loop.
//!
//! Each reading refits the regression of water level on the inflow
//! parameters, blends it with the coefficients consolidated from earlier
//! storage blocks, predicts the present level, extrapolates the rising trend
//! toward the flood line and picks the wait before the next reading.

use std::collections::VecDeque;
use std::convert::Infallible;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regression::{
    exact_fit_scale, mad, median, merge_coefficients, robust_fit, Coefficients,
    DesignMatrix, RegressionError, RobustFitConfig, WeightFunction, WeightVector,
    DEFAULT_TUNING_CONSTANT, MAD_NORMAL_CONSISTENCY,
};
use crate::scheduler::{
    next_wakeup, recalibrate, time_multiplier, urgency, TimeSet, Trigger, TriggerKind,
    TriggerQueue, Wakeup,
};
use crate::trend::{detect_rising_segment, predict_crossing, quadratic_fit, LevelSeries};
use crate::NodeId;

/// Rows whose error reliability weight falls below this are dropped from the
/// block before it is consolidated.
pub const PURGE_WEIGHT: f64 = 0.05;

/// Default reliability period as a multiple of the chosen sampling interval.
pub const RELIABILITY_INTERVALS: f64 = 4.0;

/// Resample attempts in a row before the loop gives up on a sampling slot.
const MAX_CONSECUTIVE_RESAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictorError {
    #[error("reading at t={t} arrived corrupted")]
    CorruptedReading { t: f64 },
    #[error("reading at t={t} has non-finite fields")]
    NonFiniteReading { t: f64 },
    #[error("reading at t={t} does not come after the previous reading at t={previous}")]
    NonMonotoneTime { t: f64, previous: f64 },
    #[error("reading parameters {found:?} do not match the established schema {expected:?}")]
    SchemaMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("storage capacity {capacity} is too small for {parameters} parameters (need at least {required})")]
    CapacityTooSmall {
        capacity: usize,
        parameters: usize,
        required: usize,
    },
    #[error("need {need} history rows for a first fit, have {have}")]
    InsufficientHistory { have: usize, need: usize },
    #[error("invalid predictor configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

/// One timestamped sample of water level and the parameters driving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    /// Minutes.
    pub t: f64,
    /// Metres.
    pub level: f64,
    /// mm/hr.
    pub rainfall: f64,
    /// m^3/s.
    pub discharge: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extras: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub corrupted: bool,
}

impl Reading {
    pub fn new(t: f64, level: f64, rainfall: f64, discharge: f64) -> Self {
        Self {
            t,
            level,
            rainfall,
            discharge,
            extras: Vec::new(),
            corrupted: false,
        }
    }

    pub fn with_extra(mut self, name: impl Into<String>, value: f64) -> Self {
        self.extras.push((name.into(), value));
        self
    }

    /// Regressors in model order: rainfall, discharge, then extras.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(2 + self.extras.len());
        p.push(self.rainfall);
        p.push(self.discharge);
        p.extend(self.extras.iter().map(|e| e.1));
        p
    }

    pub fn extra_names(&self) -> Vec<String> {
        self.extras.iter().map(|e| e.0.clone()).collect()
    }

    fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.level.is_finite()
            && self.rainfall.is_finite()
            && self.discharge.is_finite()
            && self.extras.iter().all(|e| e.1.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    /// Flood line `L_f`, metres.
    pub flood_line: f64,
    /// Warning threshold `L_TH`, metres; tightens sampling, never alarms.
    pub threshold: f64,
    /// Fixed reliability period in minutes; `None` ties it to the interval.
    pub reliability_period: Option<f64>,
    /// Storage capacity in readings.
    pub capacity: usize,
    pub time_set: TimeSet,
    pub robust: RobustFitConfig,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            flood_line: 25.0,
            threshold: 20.0,
            reliability_period: None,
            capacity: 48,
            time_set: TimeSet::default(),
            robust: RobustFitConfig::default(),
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::InvalidConfig(m.to_string()));
        if !(self.flood_line.is_finite() && self.flood_line > 0.0) {
            return bad("flood_line must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < self.flood_line) {
            return bad("threshold must lie strictly between 0 and the flood line");
        }
        if let Some(r) = self.reliability_period {
            if !(r.is_finite() && r > 0.0) {
                return bad("reliability_period must be positive");
            }
        }
        if self.capacity < 2 {
            return bad("capacity must be at least 2");
        }
        self.robust.validate()?;
        Ok(())
    }
}

/// Coefficient bookkeeping: the live fit `P`, the consolidated matrix `S`
/// with its weight `W`, and the reading counter.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientState {
    pub current: Option<Coefficients>,
    pub counter: usize,
    pub stored: Option<Coefficients>,
    pub stored_weight: f64,
    pub capacity: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub t: f64,
    pub level: f64,
    pub parameters: Vec<f64>,
    /// `|predicted - observed|` when a prediction was made for this row.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionOutput {
    pub t: f64,
    pub observed_level: f64,
    /// `None` while the first fit is still calibrating.
    pub predicted_level: Option<f64>,
    pub flood_predicted: bool,
    pub predicted_flood_in: Option<f64>,
    pub alarm: bool,
    pub next_interval: f64,
    pub model_coefficients: Option<Coefficients>,
    /// The observed level rose through the warning threshold on this reading.
    pub threshold_crossed: bool,
}

impl PredictionOutput {
    pub fn calibrating(&self) -> bool {
        self.predicted_level.is_none()
    }
}

/// Outlier-resistant RMS of prediction errors.
///
/// Errors are standardized by `K * MAD / 0.6745` and weighted with the
/// bisquare function, so a single wild error gets (almost) no say. When the
/// MAD collapses or leaves no positive weight, the median absolute error is
/// used as the scale instead. The returned weights rate how trustworthy each
/// reading looks.
pub fn weighted_rms_error(errors: &[f64]) -> (f64, WeightVector) {
    assert!(!errors.is_empty(), "weighted_rms_error needs at least one error");
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let weigh = |scale: f64| -> Vec<f64> {
        let denom = DEFAULT_TUNING_CONSTANT * scale;
        abs.iter().map(|e| WeightFunction::Bisquare.weight(e / denom)).collect()
    };
    let eps = exact_fit_scale(&abs);
    let s = mad(errors) / MAD_NORMAL_CONSISTENCY;
    let mut weights = if s >= eps { weigh(s) } else { Vec::new() };
    if weights.iter().all(|w| *w == 0.0) {
        let s0 = median(&abs) / MAD_NORMAL_CONSISTENCY;
        weights = if s0 >= eps {
            weigh(s0)
        } else {
            abs.iter().map(|e| if *e <= eps { 1.0 } else { 0.0 }).collect()
        };
    }
    let total: f64 = weights.iter().sum();
    let weighted: f64 = weights.iter().zip(errors).map(|(w, e)| w * e * e).sum();
    let wrms = (weighted / total).sqrt();
    let weights = WeightVector::new(weights).expect("at least half the errors keep positive weight");
    (wrms, weights)
}

/// Plain root mean square.
pub fn rms(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// Something that hands out readings when the loop asks for one.
pub trait ReadingSource {
    type Error: fmt::Display;

    /// The reading taken at (or, for replayed data, next after) `requested_at`;
    /// `None` once the source is exhausted.
    fn next_reading(&mut self, requested_at: f64) -> Option<Result<Reading, Self::Error>>;
}

impl<F> ReadingSource for F
where
    F: FnMut(f64) -> Option<Reading>,
{
    type Error = Infallible;

    fn next_reading(&mut self, requested_at: f64) -> Option<Result<Reading, Infallible>> {
        self(requested_at).map(Ok)
    }
}

/// Replays recorded readings in order, ignoring the requested times.
#[derive(Debug, Clone)]
pub struct ReplaySource {
    readings: std::vec::IntoIter<Reading>,
}

impl ReplaySource {
    pub fn new(readings: Vec<Reading>) -> Self {
        Self {
            readings: readings.into_iter(),
        }
    }
}

impl ReadingSource for ReplaySource {
    type Error = Infallible;

    fn next_reading(&mut self, _requested_at: f64) -> Option<Result<Reading, Infallible>> {
        self.readings.next().map(Ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum RunRecord {
    Prediction(PredictionOutput),
    TriggerServed(Trigger),
    ResampleRequested { t: f64, reason: String },
    Diagnostic { t: f64, message: String },
}

#[derive(Debug, Clone)]
pub struct Predictor {
    config: PredictorConfig,
    state: CoefficientState,
    rows: Vec<HistoryRow>,
    levels: VecDeque<(f64, f64)>,
    time_set: TimeSet,
    last: Option<(f64, f64)>,
    schema: Option<Vec<String>>,
    errors: Vec<(f64, f64)>,
    consolidated: Vec<Coefficients>,
    origin: NodeId,
}

impl Predictor {
    pub fn new(config: PredictorConfig) -> Result<Self, PredictorError> {
        config.validate()?;
        Ok(Self {
            state: CoefficientState {
                current: None,
                counter: 1,
                stored: None,
                stored_weight: 0.0,
                capacity: config.capacity,
            },
            rows: Vec::with_capacity(config.capacity),
            levels: VecDeque::with_capacity(2 * config.capacity),
            time_set: config.time_set.clone(),
            last: None,
            schema: None,
            errors: Vec::new(),
            consolidated: Vec::new(),
            origin: NodeId(0),
            config,
        })
    }

    /// Node identifier stamped on triggers this predictor raises.
    pub fn with_origin(mut self, origin: NodeId) -> Self {
        self.origin = origin;
        self
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn state(&self) -> &CoefficientState {
        &self.state
    }

    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }

    pub fn time_set(&self) -> &TimeSet {
        &self.time_set
    }

    /// Level-vs-time table used for trend detection.
    pub fn level_table(&self) -> impl Iterator<Item = &(f64, f64)> {
        self.levels.iter()
    }

    /// `(t, |predicted - observed|)` for every prediction made so far.
    pub fn error_log(&self) -> &[(f64, f64)] {
        &self.errors
    }

    /// Each block's coefficients as they were folded into the stored matrix.
    pub fn consolidation_history(&self) -> &[Coefficients] {
        &self.consolidated
    }

    fn parameter_count(&self) -> Option<usize> {
        self.schema.as_ref().map(|s| s.len() + 2)
    }

    fn min_rows(&self) -> Option<usize> {
        self.parameter_count().map(|m| m + 2)
    }

    fn check_reading(&mut self, reading: &Reading) -> Result<(), PredictorError> {
        if reading.corrupted {
            return Err(PredictorError::CorruptedReading { t: reading.t });
        }
        if !reading.is_finite() {
            return Err(PredictorError::NonFiniteReading { t: reading.t });
        }
        if let Some((previous, _)) = self.last {
            if reading.t <= previous {
                return Err(PredictorError::NonMonotoneTime {
                    t: reading.t,
                    previous,
                });
            }
        }
        let names = reading.extra_names();
        match &self.schema {
            Some(expected) if *expected != names => Err(PredictorError::SchemaMismatch {
                expected: expected.clone(),
                found: names,
            }),
            Some(_) => Ok(()),
            None => {
                let parameters = names.len() + 2;
                let required = parameters + 2;
                if self.config.capacity < required {
                    return Err(PredictorError::CapacityTooSmall {
                        capacity: self.config.capacity,
                        parameters,
                        required,
                    });
                }
                self.schema = Some(names);
                Ok(())
            }
        }
    }

    fn fit_rows(&self, rows: &[&HistoryRow]) -> Result<Coefficients, PredictorError> {
        let params: Vec<&[f64]> = rows.iter().map(|r| r.parameters.as_slice()).collect();
        let levels: Vec<f64> = rows.iter().map(|r| r.level).collect();
        let x = DesignMatrix::from_parameters(&params)?;
        Ok(robust_fit(&x, &levels, &self.config.robust)?.coefficients)
    }

    /// Robust fit `P` of the current table.
    pub fn fit_current(&self) -> Result<Coefficients, PredictorError> {
        let need = self.min_rows().unwrap_or(4);
        if self.rows.len() < need {
            return Err(PredictorError::InsufficientHistory {
                have: self.rows.len(),
                need,
            });
        }
        let rows: Vec<&HistoryRow> = self.rows.iter().collect();
        self.fit_rows(&rows)
    }

    /// Blend of the live fit (weighted by the rows it covers) and the stored
    /// matrix (weighted by `W`). `None` until a first fit is possible.
    pub fn merged_model(&self) -> Result<Option<Coefficients>, PredictorError> {
        let current = match self.fit_current() {
            Ok(p) => Some(p),
            Err(PredictorError::InsufficientHistory { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(self.blend(current.as_ref())?)
    }

    fn blend(&self, current: Option<&Coefficients>) -> Result<Option<Coefficients>, RegressionError> {
        match (current, &self.state.stored) {
            (Some(p), Some(s)) => Ok(Some(
                merge_coefficients(p, self.rows.len() as f64, s, self.state.stored_weight)?.0,
            )),
            (Some(p), None) => Ok(Some(p.clone())),
            (None, Some(s)) => Ok(Some(s.clone())),
            (None, None) => Ok(None),
        }
    }

    fn push_level(&mut self, t: f64, level: f64) {
        if self.levels.len() == 2 * self.config.capacity {
            self.levels.pop_front();
        }
        self.levels.push_back((t, level));
    }

    fn append(&mut self, reading: &Reading, error: Option<f64>) -> Result<(), PredictorError> {
        self.rows.push(HistoryRow {
            t: reading.t,
            level: reading.level,
            parameters: reading.parameters(),
            error,
        });
        if self.rows.len() >= self.config.capacity {
            self.consolidate()?;
        } else {
            self.state.counter = self.rows.len() + 1;
        }
        Ok(())
    }

    /// Fold the full table into the stored matrix and clear it.
    ///
    /// Rows whose prediction error looks unreliable are dropped from the
    /// block's final fit first, as long as enough rows remain.
    pub fn consolidate(&mut self) -> Result<(), PredictorError> {
        let need = self.min_rows().unwrap_or(usize::MAX);
        let with_error: Vec<f64> = self.rows.iter().filter_map(|r| r.error).collect();
        let mut keep: Vec<&HistoryRow> = self.rows.iter().collect();
        if !with_error.is_empty() {
            let (_, weights) = weighted_rms_error(&with_error);
            let mut w = weights.as_slice().iter();
            let trimmed: Vec<&HistoryRow> = self
                .rows
                .iter()
                .filter(|r| match r.error {
                    Some(_) => *w.next().expect("one weight per error") >= PURGE_WEIGHT,
                    None => true,
                })
                .collect();
            if trimmed.len() >= need {
                keep = trimmed;
            }
        }
        let block = if keep.len() >= need {
            Some(self.fit_rows(&keep)?)
        } else {
            None
        };
        if let Some(p) = block {
            let capacity = self.config.capacity as f64;
            let (stored, weight) = match &self.state.stored {
                Some(s) => merge_coefficients(&p, capacity, s, self.state.stored_weight)?,
                None => (p.clone(), capacity),
            };
            self.state.stored = Some(stored);
            self.state.stored_weight = weight;
            self.consolidated.push(p);
        }
        self.rows.clear();
        self.state.current = None;
        self.state.counter = 1;
        Ok(())
    }

    /// Load past readings into the tables without predicting.
    pub fn prime(&mut self, history: &[Reading]) -> Result<(), PredictorError> {
        for reading in history {
            self.check_reading(reading)?;
            self.push_level(reading.t, reading.level);
            self.last = Some((reading.t, reading.level));
            self.append(reading, None)?;
        }
        Ok(())
    }

    fn trend_crossing(&self, reliability_period: f64) -> Option<f64> {
        let series = LevelSeries::new(self.levels.iter().copied().collect()).ok()?;
        let segment = detect_rising_segment(&series)?;
        let model = quadratic_fit(&segment, reliability_period).ok()?;
        predict_crossing(&model, self.config.flood_line)
    }

    /// Process one reading: predict its level from the parameters, look for
    /// an approaching flood and schedule the next reading.
    pub fn step(&mut self, reading: &Reading) -> Result<PredictionOutput, PredictorError> {
        let schema_before = self.schema.clone();
        self.check_reading(reading)?;
        let current = match self.fit_current() {
            Ok(p) => Some(p),
            Err(PredictorError::InsufficientHistory { .. }) => None,
            Err(e) => {
                self.schema = schema_before;
                return Err(e);
            }
        };
        let model = self.blend(current.as_ref())?;
        let predicted_level = model.as_ref().map(|m| m.evaluate(&reading.parameters()));
        self.state.current = current;

        let flood_line = self.config.flood_line;
        let prev_level = self.last.map_or(reading.level, |l| l.1);
        self.time_set.note_urgency(urgency(prev_level, reading.level, flood_line));
        let chosen = time_multiplier(prev_level, reading.level, flood_line, &self.time_set);

        self.push_level(reading.t, reading.level);
        let reliability = self
            .config
            .reliability_period
            .unwrap_or(RELIABILITY_INTERVALS * chosen);
        let predicted_flood_in = self.trend_crossing(reliability);
        let recal = recalibrate(&self.time_set, predicted_flood_in, chosen);
        self.time_set = recal.time_set;

        let threshold = self.config.threshold;
        let threshold_crossed =
            self.last.is_some() && prev_level < threshold && reading.level >= threshold;
        self.last = Some((reading.t, reading.level));

        let error = predicted_level.map(|p| (p - reading.level).abs());
        if let Some(e) = error {
            self.errors.push((reading.t, e));
        }
        self.append(reading, error)?;

        Ok(PredictionOutput {
            t: reading.t,
            observed_level: reading.level,
            predicted_level,
            flood_predicted: predicted_flood_in.is_some(),
            predicted_flood_in,
            alarm: recal.alarm,
            next_interval: recal.interval,
            model_coefficients: model,
            threshold_crossed,
        })
    }

    /// Drive the loop until `source` runs dry: sample, step, wait for the
    /// chosen interval unless an event, query or system interrupt cuts the
    /// wait short.
    pub fn run<S: ReadingSource>(
        &mut self,
        source: &mut S,
        triggers: &mut TriggerQueue,
        start: f64,
    ) -> Vec<RunRecord> {
        let mut records = Vec::new();
        let mut request_at = start;
        let mut resamples = 0;
        loop {
            let reading = match source.next_reading(request_at) {
                None => break,
                Some(Err(e)) => {
                    records.push(RunRecord::Diagnostic {
                        t: request_at,
                        message: format!("reading source failed: {e}"),
                    });
                    break;
                }
                Some(Ok(r)) => r,
            };
            let t = reading.t;
            let outcome = self.step(&reading);
            let out = match outcome {
                Ok(out) => out,
                Err(err @ (PredictorError::CorruptedReading { .. } | PredictorError::Regression(_))) => {
                    records.push(RunRecord::ResampleRequested {
                        t,
                        reason: err.to_string(),
                    });
                    resamples += 1;
                    request_at = if resamples > MAX_CONSECUTIVE_RESAMPLES {
                        resamples = 0;
                        records.push(RunRecord::Diagnostic {
                            t,
                            message: "resample limit reached; skipping to next slot".into(),
                        });
                        t + self.time_set.shortest()
                    } else {
                        t
                    };
                    continue;
                }
                Err(err @ PredictorError::CapacityTooSmall { .. }) => {
                    // no later reading can fix the configuration
                    records.push(RunRecord::Diagnostic {
                        t,
                        message: err.to_string(),
                    });
                    break;
                }
                Err(err) => {
                    records.push(RunRecord::Diagnostic {
                        t,
                        message: err.to_string(),
                    });
                    request_at = t + self.time_set.shortest();
                    continue;
                }
            };
            resamples = 0;
            let interval = out.next_interval;
            if out.threshold_crossed {
                triggers.push(Trigger {
                    kind: TriggerKind::Event,
                    issued_at: t + self.time_set.shortest(),
                    origin: self.origin,
                });
            }
            records.push(RunRecord::Prediction(out));
            for served in triggers.drain_through(t) {
                if served.kind.interrupts() {
                    records.push(RunRecord::TriggerServed(served));
                }
            }

            request_at = t + interval;
            while let Some(&pending) = triggers.peek() {
                if pending.issued_at >= request_at {
                    break;
                }
                triggers.pop();
                if next_wakeup(t, interval, Some(&pending)) == Wakeup::SampleNow {
                    records.push(RunRecord::TriggerServed(pending));
                    request_at = pending.issued_at;
                    break;
                }
            }
        }
        records
    }
}

/// Summary of a finished run's prediction errors, normalized to the flood
/// line and expressed in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean_pct: f64,
    pub max_pct: f64,
    pub rms_pct: f64,
    pub wrms_pct: f64,
}

pub fn summarize_errors(errors: &[f64], flood_line: f64) -> Option<ErrorSummary> {
    if errors.is_empty() {
        return None;
    }
    let pct: Vec<f64> = errors.iter().map(|e| 100.0 * e.abs() / flood_line).collect();
    let (wrms, _) = weighted_rms_error(&pct);
    Some(ErrorSummary {
        count: pct.len(),
        mean_pct: pct.iter().sum::<f64>() / pct.len() as f64,
        max_pct: pct.iter().cloned().fold(0.0, f64::max),
        rms_pct: rms(&pct),
        wrms_pct: wrms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(capacity: usize) -> PredictorConfig {
        PredictorConfig {
            capacity,
            ..PredictorConfig::default()
        }
    }

    fn linear_reading(t: f64, r: f64, d: f64) -> Reading {
        Reading::new(t, 2.0 + 0.3 * r + 0.01 * d, r, d)
    }

    #[test]
    fn wrms_examples() {
        let (w, weights) = weighted_rms_error(&[0.4, -0.4, 0.4, 0.4]);
        assert!((w - 0.4).abs() < 1e-15);
        assert!(weights.as_slice().iter().all(|v| *v > 0.0));
        let (w, _) = weighted_rms_error(&[-0.7; 5]);
        assert!((w - 0.7).abs() < 1e-15);

        let (w, weights) = weighted_rms_error(&[0.1, 0.1, 0.1, 50.0]);
        assert!(w <= 0.1 + 1e-6);
        assert_eq!(weights.as_slice()[3], 0.0);

        let (w, weights) = weighted_rms_error(&[0.0, 0.0, 0.0]);
        assert_eq!(w, 0.0);
        assert_eq!(weights.as_slice(), &[1.0, 1.0, 1.0]);

        // biased errors where every |u| would exceed 1 under the MAD scale
        let (w, _) = weighted_rms_error(&[10.0, 10.1, 10.2, 10.3]);
        assert!(w > 10.0 && w < 10.3);
    }

    #[test]
    fn constant_history_predicts_constant() {
        let mut p = Predictor::new(small_config(20)).unwrap();
        let mut last = None;
        for i in 0..12 {
            let out = p.step(&Reading::new(i as f64 * 15.0, 7.25, 3.0, 120.0)).unwrap();
            assert!(!out.flood_predicted);
            assert!(!out.alarm);
            last = Some(out);
        }
        let out = last.unwrap();
        assert!((out.predicted_level.unwrap() - 7.25).abs() < 1e-9);
    }

    #[test]
    fn calibrating_until_enough_rows() {
        let mut p = Predictor::new(small_config(20)).unwrap();
        let outs: Vec<_> = (0..6)
            .map(|i| p.step(&linear_reading(i as f64, i as f64, 100.0 + 7.0 * (i * i) as f64)).unwrap())
            .collect();
        // two parameters -> the first fit needs four rows
        assert!(outs[..4].iter().all(PredictionOutput::calibrating));
        assert!(!outs[4].calibrating());
        assert!((outs[4].predicted_level.unwrap() - outs[4].observed_level).abs() < 1e-9);
        assert_eq!(
            Predictor::new(small_config(20)).unwrap().fit_current(),
            Err(PredictorError::InsufficientHistory { have: 0, need: 4 })
        );
    }

    #[test]
    fn counter_and_consolidation() {
        let mut p = Predictor::new(small_config(10)).unwrap();
        for i in 0..25 {
            let r = (i % 7) as f64 * 3.0;
            let d = 100.0 + ((i * 13) % 11) as f64 * 20.0;
            p.step(&linear_reading(i as f64 * 10.0, r, d)).unwrap();
            let s = p.state();
            assert!(s.counter >= 1 && s.counter <= 10);
            assert_eq!(p.rows().len(), s.counter - 1);
        }
        assert_eq!(p.state().stored_weight, 20.0);
        assert_eq!(p.state().counter, 6);
        assert_eq!(p.consolidation_history().len(), 2);
        let stored = p.state().stored.as_ref().unwrap();
        for (got, want) in stored.as_slice().iter().zip([2.0, 0.3, 0.01]) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn first_consolidation_stores_p() {
        let mut p = Predictor::new(small_config(10)).unwrap();
        for i in 0..9 {
            p.step(&linear_reading(i as f64, (i * 2) as f64, 50.0 + (i * i) as f64)).unwrap();
        }
        assert_eq!(p.state().counter, 10);
        assert_eq!(p.state().stored_weight, 0.0);
        p.step(&linear_reading(9.0, 3.0, 77.0)).unwrap();
        assert_eq!(p.state().stored_weight, 10.0);
        assert_eq!(p.state().stored.as_ref(), p.consolidation_history().first());
        assert_eq!(p.state().counter, 1);
        assert!(p.rows().is_empty());
    }

    #[test]
    fn rejects_bad_readings_without_mutating() {
        let mut p = Predictor::new(small_config(10)).unwrap();
        p.step(&Reading::new(5.0, 1.0, 1.0, 1.0)).unwrap();
        let mut bad = Reading::new(6.0, 1.0, 1.0, 1.0);
        bad.corrupted = true;
        assert_eq!(p.step(&bad), Err(PredictorError::CorruptedReading { t: 6.0 }));
        assert!(matches!(
            p.step(&Reading::new(5.0, 1.0, 1.0, 1.0)),
            Err(PredictorError::NonMonotoneTime { .. })
        ));
        assert!(matches!(
            p.step(&Reading::new(7.0, 1.0, 1.0, 1.0).with_extra("gauge", 1.0)),
            Err(PredictorError::SchemaMismatch { .. })
        ));
        assert!(matches!(
            p.step(&Reading::new(7.0, f64::NAN, 1.0, 1.0)),
            Err(PredictorError::NonFiniteReading { .. })
        ));
        assert_eq!(p.rows().len(), 1);
        assert!(matches!(
            Predictor::new(small_config(3)).unwrap().step(&Reading::new(0.0, 1.0, 1.0, 1.0)),
            Err(PredictorError::CapacityTooSmall { required: 4, .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = PredictorConfig {
            threshold: 30.0,
            ..PredictorConfig::default()
        };
        assert!(matches!(Predictor::new(bad), Err(PredictorError::InvalidConfig(_))));
        let bad = PredictorConfig {
            reliability_period: Some(0.0),
            ..PredictorConfig::default()
        };
        assert!(Predictor::new(bad).is_err());
    }

    #[test]
    fn falling_levels_never_predict_flood() {
        let mut p = Predictor::new(small_config(30)).unwrap();
        for i in 0..20 {
            let out = p.step(&Reading::new(i as f64 * 5.0, 24.9 - 0.1 * i as f64, 1.0 + i as f64, 50.0)).unwrap();
            assert!(!out.flood_predicted && !out.alarm);
            assert!(out.predicted_flood_in.is_none());
        }
    }

    #[test]
    fn threshold_crossing_flags_without_alarm() {
        let config = PredictorConfig {
            reliability_period: Some(1.0),
            ..small_config(30)
        };
        let mut p = Predictor::new(config).unwrap();
        let a = p.step(&Reading::new(0.0, 19.0, 1.0, 1.0)).unwrap();
        let b = p.step(&Reading::new(30.0, 20.5, 2.0, 1.0)).unwrap();
        let c = p.step(&Reading::new(60.0, 21.0, 3.0, 1.0)).unwrap();
        assert!(!a.threshold_crossed && b.threshold_crossed && !c.threshold_crossed);
        assert!(!b.alarm && !c.alarm);
    }

    #[test]
    fn run_spaces_outputs_by_interval() {
        let mut p = Predictor::new(small_config(40)).unwrap();
        let mut source = |t: f64| (t <= 600.0).then(|| Reading::new(t, 1.0, 2.0, 3.0));
        let records = p.run(&mut source, &mut TriggerQueue::new(), 0.0);
        let times: Vec<f64> = records
            .iter()
            .filter_map(|r| match r {
                RunRecord::Prediction(o) => Some(o.t),
                _ => None,
            })
            .collect();
        assert_eq!(times.len(), 11);
        assert!(times.windows(2).all(|w| w[1] - w[0] == 60.0));
    }

    #[test]
    fn query_mid_wait_adds_a_sample() {
        let mut p = Predictor::new(small_config(40)).unwrap();
        let mut source = |t: f64| (t <= 120.0).then(|| Reading::new(t, 1.0, 2.0, 3.0));
        let mut q = TriggerQueue::new();
        q.push(Trigger {
            kind: TriggerKind::Query,
            issued_at: 10.0,
            origin: NodeId(9),
        });
        let records = p.run(&mut source, &mut q, 0.0);
        let times: Vec<f64> = records
            .iter()
            .filter_map(|r| match r {
                RunRecord::Prediction(o) => Some(o.t),
                _ => None,
            })
            .collect();
        assert_eq!(times, vec![0.0, 10.0, 70.0]);
        assert!(records.iter().any(|r| matches!(r, RunRecord::TriggerServed(t) if t.issued_at == 10.0)));
    }

    #[test]
    fn corrupted_reading_is_resampled() {
        let mut p = Predictor::new(small_config(40)).unwrap();
        let mut calls = 0;
        let mut source = |t: f64| {
            calls += 1;
            if t > 60.0 {
                return None;
            }
            let mut r = Reading::new(t, 1.0, 2.0, 3.0);
            r.corrupted = calls == 2;
            Some(r)
        };
        let records = p.run(&mut source, &mut TriggerQueue::new(), 0.0);
        let kinds: Vec<&str> = records
            .iter()
            .map(|r| match r {
                RunRecord::Prediction(_) => "p",
                RunRecord::ResampleRequested { .. } => "r",
                _ => "other",
            })
            .collect();
        assert_eq!(kinds, vec!["p", "r", "p"]);
    }
}

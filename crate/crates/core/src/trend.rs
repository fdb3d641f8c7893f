//! Quadratic extrapolation of a rising water level.
//!
//! The most recent rising stretch of the level-vs-time table is fitted with
//! `level = a1 x^2 + a2 x + a3`, where `x` is minutes since the stretch began,
//! and the fit is scanned forward for the first flood-line crossing inside the
//! reliability period.

use thiserror::Error;

use crate::linalg::Cholesky;

/// `|a1|` below this is treated as a straight line when searching for roots.
const LINEAR_CURVATURE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrendError {
    #[error("level series is empty")]
    Empty,
    #[error("sample times must strictly increase (index {index})")]
    NonMonotoneTime { index: usize },
    #[error("level at index {index} must be finite and non-negative")]
    InvalidLevel { index: usize },
    #[error("a trend fit needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("quadratic normal equations are singular")]
    SingularSystem,
    #[error("reliability period must be positive")]
    InvalidReliabilityPeriod,
}

/// `(minutes, metres)` samples with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSeries {
    samples: Vec<(f64, f64)>,
}

impl LevelSeries {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self, TrendError> {
        if samples.is_empty() {
            return Err(TrendError::Empty);
        }
        for (index, &(t, level)) in samples.iter().enumerate() {
            if !t.is_finite() || (index > 0 && t <= samples[index - 1].0) {
                return Err(TrendError::NonMonotoneTime { index });
            }
            if !level.is_finite() || level < 0.0 {
                return Err(TrendError::InvalidLevel { index });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }
}

/// `level = a1 x^2 + a2 x + a3` with `x` in minutes since `origin_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub origin_time: f64,
    /// `x` of the last fitted sample.
    pub x_last: f64,
    /// How far past `x_last` the extrapolation is trusted, in minutes.
    pub reliability_period: f64,
}

impl QuadraticModel {
    pub fn eval(&self, x: f64) -> f64 {
        (self.a1 * x + self.a2) * x + self.a3
    }

    pub fn eval_at_time(&self, t: f64) -> f64 {
        self.eval(t - self.origin_time)
    }
}

/// The suffix of `series` starting at the most recent local minimum, or
/// `None` when the latest step is not a rise.
///
/// Equal neighbouring levels are absorbed, so a flat minimum is traced back
/// to its earliest sample.
pub fn detect_rising_segment(series: &LevelSeries) -> Option<LevelSeries> {
    let s = series.samples();
    let n = s.len();
    if n < 2 || s[n - 1].1 <= s[n - 2].1 {
        return None;
    }
    let mut start = n - 1;
    while start > 0 && s[start - 1].1 <= s[start].1 {
        start -= 1;
    }
    Some(LevelSeries {
        samples: s[start..].to_vec(),
    })
}

/// Least-squares quadratic through `segment` via the Vandermonde normal
/// equations. Two samples give a straight line (`a1 = 0`).
pub fn quadratic_fit(
    segment: &LevelSeries,
    reliability_period: f64,
) -> Result<QuadraticModel, TrendError> {
    if !(reliability_period.is_finite() && reliability_period > 0.0) {
        return Err(TrendError::InvalidReliabilityPeriod);
    }
    let samples = segment.samples();
    let origin_time = samples[0].0;
    let x_last = samples[samples.len() - 1].0 - origin_time;
    let (a1, a2, a3) = match samples.len() {
        0 | 1 => return Err(TrendError::TooFewSamples(samples.len())),
        2 => {
            let (t0, y0) = samples[0];
            let (t1, y1) = samples[1];
            let slope = (y1 - y0) / (t1 - t0);
            (0.0, slope, y0)
        }
        _ => {
            // Columns are scaled by the span so the normal equations stay
            // well conditioned; coefficients are unscaled afterwards.
            let span = x_last;
            let mut xtx = [0.0; 9];
            let mut xty = [0.0; 3];
            for &(t, y) in samples {
                let z = (t - origin_time) / span;
                let row = [z * z, z, 1.0];
                for a in 0..3 {
                    xty[a] += row[a] * y;
                    for b in 0..3 {
                        xtx[a * 3 + b] += row[a] * row[b];
                    }
                }
            }
            let chol = Cholesky::factor(&xtx, 3).ok_or(TrendError::SingularSystem)?;
            let b = chol.solve(&xty);
            (b[0] / (span * span), b[1] / span, b[2])
        }
    };
    Ok(QuadraticModel {
        a1,
        a2,
        a3,
        origin_time,
        x_last,
        reliability_period,
    })
}

/// Minutes after the last fitted sample until the model first reaches
/// `flood_line`, provided that happens within the reliability period.
///
/// Returns `Some(0.0)` when the model already sits at or above the line at
/// the last sample.
pub fn predict_crossing(model: &QuadraticModel, flood_line: f64) -> Option<f64> {
    let start = model.x_last;
    let horizon = model.reliability_period;
    let g = |x: f64| model.eval(x) - flood_line;
    if g(start) >= 0.0 {
        return Some(0.0);
    }
    let crossing = if model.a1.abs() < LINEAR_CURVATURE {
        scan_for_crossing(&g, start, horizon)?
    } else {
        let a = model.a1;
        let b = model.a2;
        let c = model.a3 - flood_line;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return None;
        }
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        let mut roots = [q / a, if q != 0.0 { c / q } else { q / a }];
        roots.sort_by(f64::total_cmp);
        roots.into_iter().find(|r| *r > start)?
    };
    let ahead = crossing - start;
    (ahead <= horizon).then_some(ahead)
}

/// Grid scan at 1/100 of the horizon, refined by bisection inside the first
/// bracketing cell.
fn scan_for_crossing(g: &impl Fn(f64) -> f64, start: f64, horizon: f64) -> Option<f64> {
    const STEPS: usize = 100;
    let step = horizon / STEPS as f64;
    let mut lo = start;
    for i in 1..=STEPS {
        let hi = start + step * i as f64;
        if g(hi) >= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if g(mid) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Some(b);
        }
        lo = hi;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(levels: &[f64]) -> LevelSeries {
        LevelSeries::new(levels.iter().enumerate().map(|(i, l)| (i as f64, *l)).collect()).unwrap()
    }

    fn model(a1: f64, a2: f64, a3: f64, x_last: f64, reliability_period: f64) -> QuadraticModel {
        QuadraticModel {
            a1,
            a2,
            a3,
            origin_time: 0.0,
            x_last,
            reliability_period,
        }
    }

    /// Backward scan written the slow way: a sample is the segment start when
    /// every later sample is at least as high as each one before it.
    fn brute_force_start(levels: &[f64]) -> Option<usize> {
        let n = levels.len();
        if n < 2 || levels[n - 1] <= levels[n - 2] {
            return None;
        }
        (0..n)
            .find(|&s| (s..n - 1).all(|i| levels[i] <= levels[i + 1]))
    }

    #[test]
    fn segment_examples() {
        assert_eq!(detect_rising_segment(&series(&[9.0, 8.0, 7.0])), None);
        assert_eq!(detect_rising_segment(&series(&[4.0])), None);
        assert_eq!(detect_rising_segment(&series(&[3.0, 3.0])), None);
        let rise = detect_rising_segment(&series(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(rise.len(), 4);
        let levels = [5.0, 4.0, 3.0, 4.0, 5.0, 6.0];
        let seg = detect_rising_segment(&series(&levels)).unwrap();
        assert_eq!(brute_force_start(&levels), Some(2));
        assert_eq!(seg.levels().collect::<Vec<_>>(), vec![3.0, 4.0, 5.0, 6.0]);
        assert_eq!(seg.samples()[0].0, 2.0);
    }

    #[test]
    fn plateau_extends_to_earliest_sample() {
        let levels = [6.0, 2.0, 2.0, 2.0, 3.0, 3.0, 5.0];
        let seg = detect_rising_segment(&series(&levels)).unwrap();
        assert_eq!(seg.samples()[0].0, 1.0);
        assert_eq!(brute_force_start(&levels), Some(1));
    }

    #[test]
    fn series_guards() {
        assert_eq!(LevelSeries::new(vec![]), Err(TrendError::Empty));
        assert_eq!(
            LevelSeries::new(vec![(0.0, 1.0), (0.0, 2.0)]),
            Err(TrendError::NonMonotoneTime { index: 1 })
        );
        assert_eq!(
            LevelSeries::new(vec![(0.0, -1.0)]),
            Err(TrendError::InvalidLevel { index: 0 })
        );
    }

    #[test]
    fn fit_examples() {
        let exact = LevelSeries::new(vec![(0.0, 1.0), (1.0, 2.0), (2.0, 5.0)]).unwrap();
        let m = quadratic_fit(&exact, 10.0).unwrap();
        assert!((m.a1 - 1.0).abs() < 1e-12 && m.a2.abs() < 1e-12 && (m.a3 - 1.0).abs() < 1e-12);

        let flat = LevelSeries::new(vec![(0.0, 7.5), (1.0, 7.5), (2.0, 7.5)]).unwrap();
        let m = quadratic_fit(&flat, 10.0).unwrap();
        assert!(m.a1.abs() < 1e-12 && m.a2.abs() < 1e-12 && (m.a3 - 7.5).abs() < 1e-12);

        let line = LevelSeries::new(vec![(10.0, 1.0), (15.0, 2.0)]).unwrap();
        let m = quadratic_fit(&line, 10.0).unwrap();
        assert_eq!((m.a1, m.a2, m.a3, m.origin_time, m.x_last), (0.0, 0.2, 1.0, 10.0, 5.0));

        let single = LevelSeries::new(vec![(0.0, 1.0)]).unwrap();
        assert_eq!(quadratic_fit(&single, 1.0), Err(TrendError::TooFewSamples(1)));
        assert_eq!(quadratic_fit(&exact, 0.0), Err(TrendError::InvalidReliabilityPeriod));
    }

    #[test]
    fn fit_origin_is_segment_start() {
        // y = 2 (t - 100)^2 + 1 sampled at t = 100..104
        let s: Vec<(f64, f64)> = (0..5).map(|i| (100.0 + i as f64, 2.0 * (i * i) as f64 + 1.0)).collect();
        let m = quadratic_fit(&LevelSeries::new(s).unwrap(), 5.0).unwrap();
        assert!((m.a1 - 2.0).abs() < 1e-10 && m.a2.abs() < 1e-9 && (m.a3 - 1.0).abs() < 1e-9);
        assert!((m.eval_at_time(106.0) - 73.0).abs() < 1e-8);
    }

    #[test]
    fn crossing_examples() {
        assert_eq!(predict_crossing(&model(1.0, 0.0, 0.0, 2.0, 10.0), 25.0), Some(3.0));
        assert_eq!(predict_crossing(&model(-1.0, 0.0, 0.0, 2.0, 10.0), 25.0), None);
        assert_eq!(predict_crossing(&model(1.0, 0.0, 0.0, 2.0, 2.0), 25.0), None);
        // already above the line
        assert_eq!(predict_crossing(&model(1.0, 0.0, 0.0, 6.0, 2.0), 25.0), Some(0.0));
        // rising limb of a downward parabola
        let hump = model(-1.0, 10.0, 0.0, 1.0, 20.0);
        let t = predict_crossing(&hump, 21.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert_eq!(predict_crossing(&hump, 25.5), None);
    }

    #[test]
    fn near_linear_model_uses_scan() {
        let m = model(1e-14, 0.5, 10.0, 4.0, 40.0);
        let t = predict_crossing(&m, 25.0).unwrap();
        // 10 + 0.5 x = 25 at x = 30
        assert!((t - 26.0).abs() < 1e-9);
        assert_eq!(predict_crossing(&model(0.0, 0.5, 10.0, 4.0, 20.0), 25.0), None);
    }
}

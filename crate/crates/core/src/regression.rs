//! Weighted and robust multivariate linear regression.
//!
//! The model is `y = a_1 + a_2 x_1 + ... + a_{m+1} x_m`. Weighted fits solve
//! the normal equations `(X^T W X) A = X^T W Y`; the robust fit wraps that in
//! an iteratively reweighted loop driven by leverage-adjusted residuals, a
//! MAD scale estimate and a redescending weight function.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{factor_with_ridge, Cholesky};

/// Tuning constant for the bisquare weight function.
pub const DEFAULT_TUNING_CONSTANT: f64 = 4.685;
/// MAD divided by this value estimates the standard deviation of normal data.
pub const MAD_NORMAL_CONSISTENCY: f64 = 0.6745;
/// Leverages are clamped to at most `1 - LEVERAGE_EPSILON`.
pub const LEVERAGE_EPSILON: f64 = 1e-8;
/// Ridge added to singular normal equations, relative to the mean diagonal.
pub const RIDGE_FACTOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressionError {
    #[error("normal equations are singular even after ridge regularization")]
    SingularSystem,
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("only {positive} strictly positive weights, at least {required} needed")]
    Underdetermined { positive: usize, required: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("total weight is zero")]
    ZeroTotalWeight,
    #[error("invalid design matrix: {0}")]
    InvalidDesign(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid robust fit configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, RegressionError>;

/// An `n x (m+1)` design matrix whose first column is identically one.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    /// Build from per-reading parameter vectors `(x_1, ..., x_m)`; the
    /// intercept column is prepended.
    pub fn from_parameters<R: AsRef<[f64]>>(parameters: &[R]) -> Result<Self> {
        let first = parameters
            .first()
            .ok_or_else(|| RegressionError::InvalidDesign("no rows".into()))?;
        let m = first.as_ref().len();
        let mut data = Vec::with_capacity(parameters.len() * (m + 1));
        for row in parameters {
            let row = row.as_ref();
            if row.len() != m {
                return Err(RegressionError::DimensionMismatch {
                    what: "parameter row",
                    expected: m,
                    actual: row.len(),
                });
            }
            data.push(1.0);
            data.extend_from_slice(row);
        }
        Self::from_raw(parameters.len(), m + 1, data)
    }

    /// Build from full rows, including the leading column of ones.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows
            .first()
            .ok_or_else(|| RegressionError::InvalidDesign("no rows".into()))?
            .as_ref()
            .len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(RegressionError::DimensionMismatch {
                    what: "design row",
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_raw(rows.len(), cols, data)
    }

    fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if cols < 2 {
            return Err(RegressionError::InvalidDesign(
                "at least one parameter column is required".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::InvalidDesign("non-finite entry".into()));
        }
        if (0..rows).any(|i| data[i * cols] != 1.0) {
            return Err(RegressionError::InvalidDesign(
                "first column must be identically 1".into(),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of regressors `m`, excluding the intercept.
    pub fn parameter_count(&self) -> usize {
        self.cols - 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Fitted values `X A`.
    pub fn apply(&self, coefficients: &Coefficients) -> Vec<f64> {
        (0..self.rows)
            .map(|i| dot(self.row(i), coefficients.as_slice()))
            .collect()
    }
}

/// Diagonal of an `n x n` weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RegressionError::InvalidWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        if !weights.iter().any(|w| *w > 0.0) {
            return Err(RegressionError::InvalidWeights(
                "at least one weight must be positive".into(),
            ));
        }
        Ok(Self(weights))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn positive_count(&self) -> usize {
        self.0.iter().filter(|w| **w > 0.0).count()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Regression coefficients `(a_1, ..., a_{m+1})`, intercept first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(Vec<f64>);

impl Coefficients {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::NonFinite("coefficients"));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Evaluate the model for one parameter vector `(x_1, ..., x_m)`.
    pub fn evaluate(&self, parameters: &[f64]) -> f64 {
        debug_assert_eq!(parameters.len() + 1, self.0.len());
        self.0[0] + dot(&self.0[1..], parameters)
    }
}

/// Redescending weight functions with unit support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightFunction {
    #[default]
    Bisquare,
    Andrews,
}

impl WeightFunction {
    /// Weight for a standardized value `u`; zero for `|u| >= 1`.
    pub fn weight(self, u: f64) -> f64 {
        let a = u.abs();
        if a >= 1.0 || a.is_nan() {
            return 0.0;
        }
        match self {
            WeightFunction::Bisquare => {
                let t = 1.0 - u * u;
                t * t
            }
            WeightFunction::Andrews => {
                if a == 0.0 {
                    1.0
                } else {
                    let x = std::f64::consts::PI * a;
                    // sin(pi u)/(pi u) can dip a hair below 0 near u = 1
                    (x.sin() / x).max(0.0)
                }
            }
        }
    }
}

impl fmt::Display for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightFunction::Bisquare => "bisquare",
            WeightFunction::Andrews => "andrews",
        })
    }
}

impl FromStr for WeightFunction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bisquare" | "poly-square" | "polysquare" => Ok(WeightFunction::Bisquare),
            "andrews" => Ok(WeightFunction::Andrews),
            other => Err(format!("unknown weight function `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobustFitConfig {
    pub tuning_constant: f64,
    pub mad_scale: f64,
    pub max_iterations: usize,
    /// Relative change in coefficients below which the loop stops.
    pub tolerance: f64,
    pub weight_function: WeightFunction,
}

impl Default for RobustFitConfig {
    fn default() -> Self {
        Self {
            tuning_constant: DEFAULT_TUNING_CONSTANT,
            mad_scale: MAD_NORMAL_CONSISTENCY,
            max_iterations: 50,
            tolerance: 1e-6,
            weight_function: WeightFunction::Bisquare,
        }
    }
}

impl RobustFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tuning_constant.is_finite() && self.tuning_constant > 0.0) {
            return Err(RegressionError::InvalidConfig(
                "tuning_constant must be positive".into(),
            ));
        }
        if !(self.mad_scale.is_finite() && self.mad_scale > 0.0) {
            return Err(RegressionError::InvalidConfig("mad_scale must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(RegressionError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(RegressionError::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustFitResult {
    pub coefficients: Coefficients,
    pub final_weights: WeightVector,
    /// Number of weighted solves performed.
    pub iterations: usize,
    pub converged: bool,
    /// Robust scale `s = MAD / 0.6745` of the adjusted residuals.
    pub robust_scale: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_lengths(x: &DesignMatrix, y: &[f64], w: Option<&WeightVector>) -> Result<()> {
    if y.len() != x.rows() {
        return Err(RegressionError::DimensionMismatch {
            what: "response vector",
            expected: x.rows(),
            actual: y.len(),
        });
    }
    if let Some(w) = w {
        if w.len() != x.rows() {
            return Err(RegressionError::DimensionMismatch {
                what: "weight vector",
                expected: x.rows(),
                actual: w.len(),
            });
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite("response vector"));
    }
    Ok(())
}

/// `X^T W X` (row-major) and `X^T W Y`.
fn normal_equations(x: &DesignMatrix, y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = x.cols();
    let mut xtwx = vec![0.0; k * k];
    let mut xtwy = vec![0.0; k];
    for i in 0..x.rows() {
        let wi = w[i];
        if wi == 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..k {
            let wa = wi * row[a];
            xtwy[a] += wa * y[i];
            for b in 0..=a {
                xtwx[a * k + b] += wa * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtwx[b * k + a] = xtwx[a * k + b];
        }
    }
    (xtwx, xtwy)
}

/// Solve `(X^T W X) A = X^T W Y`.
///
/// A singular system is retried once with a small ridge term on the diagonal
/// before giving up with [`RegressionError::SingularSystem`].
pub fn weighted_least_squares(
    x: &DesignMatrix,
    y: &[f64],
    w: &WeightVector,
) -> Result<Coefficients> {
    check_lengths(x, y, Some(w))?;
    let positive = w.positive_count();
    if positive < x.cols() {
        return Err(RegressionError::Underdetermined {
            positive,
            required: x.cols(),
        });
    }
    let (xtwx, xtwy) = normal_equations(x, y, w.as_slice());
    let chol =
        factor_with_ridge(&xtwx, x.cols(), RIDGE_FACTOR).ok_or(RegressionError::SingularSystem)?;
    let solution = chol.solve(&xtwy);
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite("weighted least squares solution"));
    }
    Ok(Coefficients(solution))
}

/// Per-equation weights from the squared deviation of each response from the
/// mean, normalized by the largest deviation and passed through `weight_fn`.
///
/// When every response deviates by the same (maximal) amount the weights
/// would all vanish; all-equal weights of one are returned instead.
pub fn equation_weights(y: &[f64], weight_fn: WeightFunction) -> WeightVector {
    assert!(!y.is_empty(), "equation_weights needs at least one response");
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let deviations: Vec<f64> = y.iter().map(|v| (v - mean) * (v - mean)).collect();
    let max = deviations.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return WeightVector::ones(y.len());
    }
    let weights: Vec<f64> = deviations.iter().map(|d| weight_fn.weight(d / max)).collect();
    if weights.iter().all(|w| *w == 0.0) {
        return WeightVector::ones(y.len());
    }
    WeightVector(weights)
}

/// Median; the mean of the two central order statistics for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> f64 {
    let center = median(values);
    let deviations: Vec<f64> = values.iter().map(|v| (v - center).abs()).collect();
    median(&deviations)
}

fn unweighted_factor(x: &DesignMatrix) -> Result<Cholesky> {
    let (xtx, _) = normal_equations(x, &vec![0.0; x.rows()], &vec![1.0; x.rows()]);
    factor_with_ridge(&xtx, x.cols(), RIDGE_FACTOR).ok_or(RegressionError::SingularSystem)
}

/// Unclamped diagonal of the hat matrix `X (X^T X)^{-1} X^T`.
pub fn hat_diagonal(x: &DesignMatrix) -> Result<Vec<f64>> {
    let chol = unweighted_factor(x)?;
    Ok((0..x.rows())
        .map(|i| {
            let z = chol.forward(x.row(i));
            z.iter().map(|v| v * v).sum()
        })
        .collect())
}

/// Hat-matrix leverages clamped into `[0, 1 - LEVERAGE_EPSILON]`.
pub fn leverage(x: &DesignMatrix) -> Result<Vec<f64>> {
    Ok(hat_diagonal(x)?
        .into_iter()
        .map(|h| h.clamp(0.0, 1.0 - LEVERAGE_EPSILON))
        .collect())
}

pub fn robust_weights(u: &[f64], weight_fn: WeightFunction) -> Vec<f64> {
    u.iter().map(|v| weight_fn.weight(*v)).collect()
}

fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    let delta = old
        .iter()
        .zip(new)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = old
        .iter()
        .chain(new)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if delta == 0.0 {
        0.0
    } else {
        delta / scale
    }
}

/// Threshold below which the robust scale is treated as an exact fit.
pub fn exact_fit_scale(y: &[f64]) -> f64 {
    1e-12 * (1.0 + median(y).abs())
}

/// Iteratively reweighted robust fit.
///
/// The first solve uses [`equation_weights`]; each further iteration
/// standardizes the leverage-adjusted residuals by `K * s` and re-solves with
/// the configured weight function until the relative coefficient change drops
/// below the tolerance or the iteration cap is hit.
pub fn robust_fit(x: &DesignMatrix, y: &[f64], config: &RobustFitConfig) -> Result<RobustFitResult> {
    config.validate()?;
    check_lengths(x, y, None)?;
    let cols = x.cols();
    let mut weights = equation_weights(y, config.weight_function);
    if weights.positive_count() < cols {
        weights = WeightVector::ones(y.len());
    }
    let mut coefficients = weighted_least_squares(x, y, &weights)?;
    let mut iterations = 1;

    let h = leverage(x)?;
    let adjust: Vec<f64> = h.iter().map(|hi| 1.0 / (1.0 - hi).sqrt()).collect();
    let eps_s = exact_fit_scale(y);

    loop {
        let fitted = x.apply(&coefficients);
        let adjusted: Vec<f64> = y
            .iter()
            .zip(&fitted)
            .zip(&adjust)
            .map(|((yi, fi), a)| (yi - fi) * a)
            .collect();
        if adjusted.iter().any(|r| !r.is_finite()) {
            return Err(RegressionError::NonFinite("residuals"));
        }
        let s = mad(&adjusted) / config.mad_scale;
        if s < eps_s {
            return Ok(RobustFitResult {
                coefficients,
                final_weights: WeightVector::ones(y.len()),
                iterations,
                converged: true,
                robust_scale: s,
            });
        }
        if iterations >= config.max_iterations {
            return Ok(RobustFitResult {
                coefficients,
                final_weights: weights,
                iterations,
                converged: false,
                robust_scale: s,
            });
        }
        let scale = config.tuning_constant * s;
        let u: Vec<f64> = adjusted.iter().map(|r| r / scale).collect();
        let next_weights = robust_weights(&u, config.weight_function);
        if next_weights.iter().filter(|w| **w > 0.0).count() < cols {
            // Reweighting left too few equations to pin the model down.
            return Ok(RobustFitResult {
                coefficients,
                final_weights: weights,
                iterations,
                converged: false,
                robust_scale: s,
            });
        }
        let next_weights = WeightVector(next_weights);
        let next = weighted_least_squares(x, y, &next_weights)?;
        iterations += 1;
        let change = relative_change(coefficients.as_slice(), next.as_slice());
        coefficients = next;
        weights = next_weights;
        if change < config.tolerance {
            return Ok(RobustFitResult {
                coefficients,
                final_weights: weights,
                iterations,
                converged: true,
                robust_scale: s,
            });
        }
    }
}

/// Weighted mean of two coefficient vectors; returns the merged vector and
/// the combined weight.
pub fn merge_coefficients(
    p: &Coefficients,
    weight_p: f64,
    s: &Coefficients,
    weight_s: f64,
) -> Result<(Coefficients, f64)> {
    if p.len() != s.len() {
        return Err(RegressionError::DimensionMismatch {
            what: "merged coefficients",
            expected: p.len(),
            actual: s.len(),
        });
    }
    if !(weight_p >= 0.0 && weight_s >= 0.0) || !weight_p.is_finite() || !weight_s.is_finite() {
        return Err(RegressionError::InvalidWeights(
            "merge weights must be finite and non-negative".into(),
        ));
    }
    let total = weight_p + weight_s;
    if total == 0.0 {
        return Err(RegressionError::ZeroTotalWeight);
    }
    let merged = p
        .as_slice()
        .iter()
        .zip(s.as_slice())
        .map(|(a, b)| (weight_p * a + weight_s * b) / total)
        .collect();
    Ok((Coefficients(merged), total))
}

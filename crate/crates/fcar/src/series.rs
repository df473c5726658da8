//! Time-series container, lagged-design construction, and the deterministic
//! transforms (log, kernel detrend, seasonal difference) used by the
//! application pipeline.

use thiserror::Error;

use crate::kernel::quartic_kernel;

/// Errors from series construction and transforms.
#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series is empty")]
    Empty,
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("series too short: need at least {needed} observations, got {actual}")]
    SeriesTooShort { needed: usize, actual: usize },
    #[error("non-positive value {value} at index {index}: log transform requires strictly positive data")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("kernel window at index {index} has zero total weight")]
    EmptyWindow { index: usize },
    #[error("invalid model order: p and d must both be at least 1 (p={p}, d={d})")]
    InvalidOrder { p: usize, d: usize },
    #[error("invalid bandwidth {value}: must be positive and finite")]
    InvalidBandwidth { value: f64 },
    #[error("invalid seasonal lag: must be at least 1")]
    InvalidLag,
    #[error("frequency must be at least 1")]
    InvalidFrequency,
    #[error("design components misaligned: {detail}")]
    MisalignedDesign { detail: String },
    #[error("invalid trim quantiles ({lo}, {hi}): need 0 <= lo < hi <= 1")]
    InvalidTrim { lo: f64, hi: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("could not parse value on line {line}: {content:?}")]
    Parse { line: usize, content: String },
}

/// Ordered real-valued observations with optional period metadata.
///
/// Construction validates that the data are non-empty and free of NaN or
/// infinite entries; every downstream routine relies on that.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    start_label: Option<String>,
    frequency: u32,
}

impl TimeSeries {
    /// Series without period metadata (frequency 1).
    pub fn new(values: Vec<f64>) -> Result<Self, SeriesError> {
        Self::with_metadata(values, None, 1)
    }

    /// Series with a starting period label (e.g. `1960-Q1`) and a number of
    /// periods per year (4 for quarterly data).
    pub fn with_metadata(
        values: Vec<f64>,
        start_label: Option<String>,
        frequency: u32,
    ) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if frequency == 0 {
            return Err(SeriesError::InvalidFrequency);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(SeriesError::NonFiniteValue { index });
        }
        Ok(Self {
            values,
            start_label,
            frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty() // construction rejects empty data
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start_label(&self) -> Option<&str> {
        self.start_label.as_deref()
    }

    pub fn frequency(&self) -> u32 {
        self.frequency
    }

    /// Period label for the 1-based observation index, when the start label
    /// is quarterly (`YYYY-Qn`). Other label styles are not advanced.
    pub fn label_at(&self, t: usize) -> Option<String> {
        let start = self.start_label.as_deref()?;
        advance_quarter_label(start, t.checked_sub(1)?)
    }

    fn like(&self, values: Vec<f64>) -> Result<Self, SeriesError> {
        Self::with_metadata(values, self.start_label.clone(), self.frequency)
    }
}

/// Parse `YYYY-Qn` and advance it by `steps` quarters.
fn advance_quarter_label(label: &str, steps: usize) -> Option<String> {
    let (year, quarter) = label.split_once("-Q")?;
    let year: i64 = year.parse().ok()?;
    let quarter: i64 = quarter.parse().ok()?;
    if !(1..=4).contains(&quarter) {
        return None;
    }
    let idx = year * 4 + (quarter - 1) + steps as i64;
    Some(format!("{}-Q{}", idx.div_euclid(4), idx.rem_euclid(4) + 1))
}

/// Model order `p`, delay `d`, and the derived first usable (1-based) index
/// `t0 = max(p, d) + 1`, so that every referenced lag is observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcarSpec {
    p: usize,
    d: usize,
}

impl FcarSpec {
    pub fn new(p: usize, d: usize) -> Result<Self, SeriesError> {
        if p == 0 || d == 0 {
            return Err(SeriesError::InvalidOrder { p, d });
        }
        Ok(Self { p, d })
    }

    pub fn order(&self) -> usize {
        self.p
    }

    pub fn delay(&self) -> usize {
        self.d
    }

    /// First usable 1-based time index.
    pub fn t0(&self) -> usize {
        self.p.max(self.d) + 1
    }
}

/// Row-aligned regression view of a series: response `X_t`, lag columns
/// `X_{t-alpha}`, and the delay variable `U_t = X_{t-d}`, for `t = t0..n`.
///
/// `a` and `b` are the empirical bounds of the delay vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    response: Vec<f64>,
    lags: Vec<Vec<f64>>,
    delay: Vec<f64>,
    a: f64,
    b: f64,
}

impl LaggedDesign {
    /// Assemble a design from explicit components. Used by the simulation
    /// harness (exogenous regressors) and by tests; `build_lagged_design`
    /// is the entry point for observed series.
    pub fn from_parts(
        response: Vec<f64>,
        lags: Vec<Vec<f64>>,
        delay: Vec<f64>,
    ) -> Result<Self, SeriesError> {
        let rows = response.len();
        if rows == 0 {
            return Err(SeriesError::Empty);
        }
        if lags.is_empty() {
            return Err(SeriesError::MisalignedDesign {
                detail: "no lag columns".into(),
            });
        }
        if delay.len() != rows || lags.iter().any(|col| col.len() != rows) {
            return Err(SeriesError::MisalignedDesign {
                detail: format!(
                    "response has {rows} rows, delay has {}, lag columns have {:?}",
                    delay.len(),
                    lags.iter().map(Vec::len).collect::<Vec<_>>()
                ),
            });
        }
        for (index, v) in response
            .iter()
            .chain(delay.iter())
            .chain(lags.iter().flatten())
            .enumerate()
        {
            if !v.is_finite() {
                return Err(SeriesError::NonFiniteValue { index });
            }
        }
        let a = delay.iter().copied().fold(f64::INFINITY, f64::min);
        let b = delay.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            response,
            lags,
            delay,
            a,
            b,
        })
    }

    pub fn rows(&self) -> usize {
        self.response.len()
    }

    /// Number of lag columns (the model order p).
    pub fn order(&self) -> usize {
        self.lags.len()
    }

    pub fn response(&self) -> &[f64] {
        &self.response
    }

    /// Lag column for 1-based component index `alpha`.
    pub fn lag(&self, alpha: usize) -> &[f64] {
        &self.lags[alpha - 1]
    }

    pub fn delay(&self) -> &[f64] {
        &self.delay
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Restrict the design to rows whose delay value falls inside the given
    /// empirical quantile range, recomputing `[a, b]` from what remains.
    /// The default pipeline applies no trimming.
    pub fn trim_quantiles(&self, lo: f64, hi: f64) -> Result<Self, SeriesError> {
        if !(0.0..1.0).contains(&lo) || !(lo < hi && hi <= 1.0) {
            return Err(SeriesError::InvalidTrim { lo, hi });
        }
        let mut sorted = self.delay.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let lo_v = quantile_type7(&sorted, lo);
        let hi_v = quantile_type7(&sorted, hi);
        let keep: Vec<usize> = (0..self.rows())
            .filter(|&i| self.delay[i] >= lo_v && self.delay[i] <= hi_v)
            .collect();
        if keep.is_empty() {
            return Err(SeriesError::Empty);
        }
        let take = |col: &[f64]| keep.iter().map(|&i| col[i]).collect::<Vec<_>>();
        Self::from_parts(
            take(&self.response),
            self.lags.iter().map(|c| take(c)).collect(),
            take(&self.delay),
        )
    }
}

/// Linear-interpolation quantile on pre-sorted data (R type 7).
pub(crate) fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Build the lagged regression design for `t = t0..n`.
///
/// Pre-sample lags are not imputed: the first `max(p, d)` observations are
/// used only as regressors, so every entry of the design is observed data.
pub fn build_lagged_design(
    series: &TimeSeries,
    spec: &FcarSpec,
) -> Result<LaggedDesign, SeriesError> {
    let n = series.len();
    let t0 = spec.t0();
    let p = spec.order();
    let min_rows = 2 * (p + 1);
    if n + 1 < t0 + min_rows {
        return Err(SeriesError::SeriesTooShort {
            needed: t0 + min_rows - 1,
            actual: n,
        });
    }
    let v = series.values();
    let rows = n + 1 - t0;
    let mut response = Vec::with_capacity(rows);
    let mut delay = Vec::with_capacity(rows);
    let mut lags = vec![Vec::with_capacity(rows); p];
    for i in (t0 - 1)..n {
        response.push(v[i]);
        delay.push(v[i - spec.delay()]);
        for (alpha, col) in lags.iter_mut().enumerate() {
            col.push(v[i - (alpha + 1)]);
        }
    }
    LaggedDesign::from_parts(response, lags, delay)
}

/// Elementwise natural logarithm; fails on the first non-positive entry.
pub fn log_transform(series: &TimeSeries) -> Result<TimeSeries, SeriesError> {
    let mut out = Vec::with_capacity(series.len());
    for (index, &v) in series.values().iter().enumerate() {
        if v <= 0.0 {
            return Err(SeriesError::NonPositiveValue { index, value: v });
        }
        out.push(v.ln());
    }
    series.like(out)
}

/// Nadaraya-Watson regression of the values on the integer time index with
/// the quartic kernel at bandwidth `h`. Returns `(trend, residual)` with
/// `residual = series - trend`, so the two components sum back to the input.
pub fn kernel_detrend(
    series: &TimeSeries,
    bandwidth: f64,
) -> Result<(TimeSeries, TimeSeries), SeriesError> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(SeriesError::InvalidBandwidth { value: bandwidth });
    }
    let n = series.len();
    if n < 2 {
        return Err(SeriesError::SeriesTooShort {
            needed: 2,
            actual: n,
        });
    }
    let v = series.values();
    let half = bandwidth.ceil() as usize;
    let mut trend = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = i.saturating_add(half).min(n - 1);
        let mut num = 0.0;
        let mut den = 0.0;
        for j in lo..=hi {
            let w = quartic_kernel(j as f64 - i as f64, bandwidth);
            num += w * v[j];
            den += w;
        }
        if den <= 0.0 {
            // unreachable for h > 0 since the own-index weight is positive
            return Err(SeriesError::EmptyWindow { index: i });
        }
        trend.push(num / den);
    }
    let residual: Vec<f64> = v.iter().zip(&trend).map(|(x, t)| x - t).collect();
    Ok((series.like(trend)?, series.like(residual)?))
}

/// Seasonal difference: output entry `t` is `X_{t+lag} - X_t`, of length
/// `n - lag`. The start label advances by `lag` periods when parseable.
pub fn seasonal_difference(series: &TimeSeries, lag: usize) -> Result<TimeSeries, SeriesError> {
    if lag == 0 {
        return Err(SeriesError::InvalidLag);
    }
    let n = series.len();
    if n <= lag {
        return Err(SeriesError::SeriesTooShort {
            needed: lag + 1,
            actual: n,
        });
    }
    let v = series.values();
    let out: Vec<f64> = (0..n - lag).map(|t| v[t + lag] - v[t]).collect();
    let label = series
        .start_label()
        .and_then(|l| advance_quarter_label(l, lag));
    TimeSeries::with_metadata(out, label, series.frequency())
}

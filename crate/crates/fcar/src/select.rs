//! Order selection and the real-data application pipeline: transform stages,
//! `(d, p)` grid search by in-sample MSE, and the AR(1) baseline.

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{
    pseudo_responses, rule_of_thumb_bandwidth, sbk_estimate, KernelError, PointStatus,
};
use crate::series::{
    build_lagged_design, kernel_detrend, log_transform, seasonal_difference, FcarSpec,
    LaggedDesign, SeriesError, TimeSeries,
};
use crate::spline::{
    choose_knot_count, fit_prestep_with, KnotGrid, PrefitMode, SplineError, SplinePrefit,
};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("every (d, p) cell of the grid search failed")]
    AllCellsFailed,
    #[error("lagged regressor is constant; AR(1) fit is undefined")]
    DegenerateRegressor,
    #[error("series too short for an AR(1) fit: need 3 observations, got {actual}")]
    TooShortForAr1 { actual: usize },
    #[error("no design row kept a complete set of coefficient estimates")]
    NoScorableRows,
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<SelectError>,
    },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

fn stage(stage: &'static str, err: impl Into<SelectError>) -> SelectError {
    SelectError::Stage {
        stage,
        source: Box::new(err.into()),
    }
}

/// One full SBK fit of a series at a given `(d, p)`.
///
/// Coefficient functions are estimated at the sample delay values, so the
/// fitted values and MSE carry no grid-interpolation error. The spline
/// pre-fit runs in minimum-norm mode: empty or rank-deficient bins never
/// contribute to fitted values at sample points, which keeps sparse delay
/// configurations scoreable.
#[derive(Debug, Clone)]
pub struct SbkModelFit {
    design: LaggedDesign,
    prefit: SplinePrefit,
    /// Rule-of-thumb bandwidth per component.
    pub bandwidths: Vec<f64>,
    /// Per-component coefficient estimates at the sample delay values;
    /// `None` where the local fit stayed degenerate after widening.
    pub coefficients_at_sample: Vec<Vec<Option<f64>>>,
    /// One-step fitted values aligned with the design rows.
    pub fitted: Vec<Option<f64>>,
    /// Mean squared one-step error over the scoreable rows.
    pub mse: f64,
}

impl SbkModelFit {
    pub fn design(&self) -> &LaggedDesign {
        &self.design
    }

    pub fn order(&self) -> usize {
        self.design.order()
    }

    /// Evaluate the per-component coefficient curves on `points` equally
    /// spaced queries spanning the delay range.
    pub fn curves(&self, points: usize) -> (Vec<f64>, Vec<Vec<Option<f64>>>) {
        self.curves_trimmed(points, 0.0)
    }

    /// Like [`curves`](Self::curves) with a fraction of the delay range
    /// trimmed from each end of the query grid.
    pub fn curves_trimmed(&self, points: usize, trim: f64) -> (Vec<f64>, Vec<Vec<Option<f64>>>) {
        let span = self.design.b() - self.design.a();
        let a = self.design.a() + trim * span;
        let b = self.design.b() - trim * span;
        let grid: Vec<f64> = (0..points)
            .map(|i| a + (b - a) * i as f64 / (points - 1) as f64)
            .collect();
        let curves = (1..=self.order())
            .map(|gamma| {
                match sbk_estimate(
                    &self.design,
                    &self.prefit,
                    gamma,
                    &grid,
                    Some(self.bandwidths[gamma - 1]),
                ) {
                    Ok(est) => est
                        .values()
                        .iter()
                        .zip(est.status())
                        .map(|(&v, &s)| (s == PointStatus::Ok).then_some(v))
                        .collect(),
                    Err(_) => vec![None; grid.len()],
                }
            })
            .collect();
        (grid, curves)
    }
}

/// Fit the SBK model at `(d, p)` with rule-of-thumb bandwidths.
pub fn sbk_model_fit(series: &TimeSeries, d: usize, p: usize) -> Result<SbkModelFit, SelectError> {
    sbk_model_fit_with(series, d, p, None)
}

/// [`sbk_model_fit`] with an optional fixed bandwidth shared by all
/// components.
pub fn sbk_model_fit_with(
    series: &TimeSeries,
    d: usize,
    p: usize,
    bandwidth: Option<f64>,
) -> Result<SbkModelFit, SelectError> {
    let spec = FcarSpec::new(p, d)?;
    let design = build_lagged_design(series, &spec)?;
    sbk_design_fit(design, series.len(), d, bandwidth)
}

/// Fit the SBK model on an already-built design. `n_for_knots` is the
/// effective sample size driving the knot-count rule (the underlying series
/// length when the design came from one).
pub fn sbk_design_fit(
    design: LaggedDesign,
    n_for_knots: usize,
    d: usize,
    bandwidth: Option<f64>,
) -> Result<SbkModelFit, SelectError> {
    let p = design.order();
    let interior = choose_knot_count(n_for_knots, d, 1.0, 1.0);
    let grid = KnotGrid::new(design.a(), design.b(), interior)?;
    let prefit = fit_prestep_with(&design, &grid, PrefitMode::MinimumNorm)?;

    let rows = design.rows();
    let mut bandwidths = Vec::with_capacity(p);
    let mut coefficients = Vec::with_capacity(p);
    for gamma in 1..=p {
        let h = match bandwidth {
            Some(h) => h,
            None => {
                let pseudo = pseudo_responses(&design, &prefit, gamma)?;
                rule_of_thumb_bandwidth(design.delay(), design.lag(gamma), &pseudo)?
            }
        };
        let est = sbk_estimate(&design, &prefit, gamma, design.delay(), Some(h))?;
        bandwidths.push(h);
        coefficients.push(
            est.values()
                .iter()
                .zip(est.status())
                .map(|(&v, &s)| (s == PointStatus::Ok).then_some(v))
                .collect::<Vec<Option<f64>>>(),
        );
    }

    let mut fitted = Vec::with_capacity(rows);
    let mut sse = 0.0;
    let mut scored = 0usize;
    for t in 0..rows {
        let mut acc = 0.0;
        let mut complete = true;
        for gamma in 1..=p {
            match coefficients[gamma - 1][t] {
                Some(c) => acc += c * design.lag(gamma)[t],
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if complete {
            let err = design.response()[t] - acc;
            sse += err * err;
            scored += 1;
            fitted.push(Some(acc));
        } else {
            fitted.push(None);
        }
    }
    if scored == 0 {
        return Err(SelectError::NoScorableRows);
    }
    Ok(SbkModelFit {
        design,
        prefit,
        bandwidths,
        coefficients_at_sample: coefficients,
        fitted,
        mse: sse / scored as f64,
    })
}

/// In-sample one-step MSE of the SBK fit at `(d, p)`.
pub fn fit_and_score(series: &TimeSeries, d: usize, p: usize) -> Result<f64, SelectError> {
    Ok(sbk_model_fit(series, d, p)?.mse)
}

/// A failed grid cell and the reason it failed.
#[derive(Debug, Clone)]
pub struct GridFailure {
    pub d: usize,
    pub p: usize,
    pub reason: String,
}

/// MSE table over the `(d, p)` grid with the selected minimizer.
#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub d_set: Vec<usize>,
    pub p_set: Vec<usize>,
    /// `mse[i][j]` corresponds to `(d_set[i], p_set[j])`; `None` marks a
    /// failed cell.
    pub mse: Vec<Vec<Option<f64>>>,
    pub best_d: usize,
    pub best_p: usize,
    pub best_mse: f64,
    pub failures: Vec<GridFailure>,
}

impl GridSearchResult {
    pub fn cell(&self, d: usize, p: usize) -> Option<f64> {
        let i = self.d_set.iter().position(|&x| x == d)?;
        let j = self.p_set.iter().position(|&x| x == p)?;
        self.mse[i][j]
    }
}

/// Pick the non-failed cell with minimum MSE; ties prefer smaller `p`,
/// then smaller `d`.
fn select_best(
    d_set: &[usize],
    p_set: &[usize],
    table: &[Vec<Option<f64>>],
) -> Option<(usize, usize, f64)> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, &d) in d_set.iter().enumerate() {
        for (j, &p) in p_set.iter().enumerate() {
            let Some(mse) = table[i][j] else { continue };
            let better = match best {
                None => true,
                Some((bd, bp, bm)) => {
                    mse < bm || (mse == bm && (p < bp || (p == bp && d < bd)))
                }
            };
            if better {
                best = Some((d, p, mse));
            }
        }
    }
    best
}

/// Score every `(d, p)` combination and select the minimizer. Cells run in
/// parallel; failed cells are recorded and skipped by the argmin.
pub fn grid_search(
    series: &TimeSeries,
    d_set: &[usize],
    p_set: &[usize],
) -> Result<GridSearchResult, SelectError> {
    let cells: Vec<(usize, usize)> = d_set
        .iter()
        .flat_map(|&d| p_set.iter().map(move |&p| (d, p)))
        .collect();
    let scored: Vec<((usize, usize), Result<f64, String>)> = cells
        .par_iter()
        .map(|&(d, p)| ((d, p), fit_and_score(series, d, p).map_err(|e| e.to_string())))
        .collect();

    let mut mse = vec![vec![None; p_set.len()]; d_set.len()];
    let mut failures = Vec::new();
    for ((d, p), result) in scored {
        let i = d_set.iter().position(|&x| x == d).unwrap();
        let j = p_set.iter().position(|&x| x == p).unwrap();
        match result {
            Ok(value) => mse[i][j] = Some(value),
            Err(reason) => failures.push(GridFailure { d, p, reason }),
        }
    }
    let (best_d, best_p, best_mse) =
        select_best(d_set, p_set, &mse).ok_or(SelectError::AllCellsFailed)?;
    Ok(GridSearchResult {
        d_set: d_set.to_vec(),
        p_set: p_set.to_vec(),
        mse,
        best_d,
        best_p,
        best_mse,
        failures,
    })
}

/// AR(1) with intercept fit by conditional least squares over `t = 2..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ar1Fit {
    pub c: f64,
    pub psi: f64,
    pub mse: f64,
}

pub fn fit_ar1(series: &TimeSeries) -> Result<Ar1Fit, SelectError> {
    let v = series.values();
    let n = v.len();
    if n < 3 {
        return Err(SelectError::TooShortForAr1 { actual: n });
    }
    let x = &v[..n - 1];
    let y = &v[1..];
    let m = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / m;
    let y_mean = y.iter().sum::<f64>() / m;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - x_mean) * (xi - x_mean);
        sxy += (xi - x_mean) * (yi - y_mean);
    }
    if sxx == 0.0 {
        return Err(SelectError::DegenerateRegressor);
    }
    let psi = sxy / sxx;
    let c = y_mean - psi * x_mean;
    let mse = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| {
            let r = yi - c - psi * xi;
            r * r
        })
        .sum::<f64>()
        / m;
    Ok(Ar1Fit { c, psi, mse })
}

/// Parameters of the application pipeline; defaults follow the quarterly
/// GDP analysis (detrend bandwidth 30, fourth difference, `d` in 1..=10,
/// `p` in 2..=10).
#[derive(Debug, Clone)]
pub struct PipelineParams {
    pub detrend_bandwidth: f64,
    pub seasonal_lag: usize,
    pub d_set: Vec<usize>,
    pub p_set: Vec<usize>,
    /// Skip the log stage for data that are already in logs.
    pub skip_log: bool,
    /// Points in the emitted coefficient-function curves.
    pub curve_points: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            detrend_bandwidth: 30.0,
            seasonal_lag: 4,
            d_set: (1..=10).collect(),
            p_set: (2..=10).collect(),
            skip_log: false,
            curve_points: 101,
        }
    }
}

/// A fitted-versus-actual row of the transformed series; `t` is 1-based.
#[derive(Debug, Clone, Copy)]
pub struct FittedRow {
    pub t: usize,
    pub actual: f64,
    pub sbk: Option<f64>,
    pub ar1: Option<f64>,
}

/// Everything the application pipeline produces.
#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub params: PipelineParams,
    /// Log of the input (the input itself when the log stage is skipped).
    pub log: TimeSeries,
    pub trend: TimeSeries,
    pub detrended: TimeSeries,
    pub differenced: TimeSeries,
    pub grid: GridSearchResult,
    /// Bandwidths of the refitted best cell, one per component.
    pub best_bandwidths: Vec<f64>,
    pub ar1: Ar1Fit,
    pub fitted: Vec<FittedRow>,
    pub coefficient_grid: Vec<f64>,
    /// One curve per component of the selected model.
    pub coefficients: Vec<Vec<Option<f64>>>,
}

/// Run the full pipeline: log, kernel detrend, seasonal difference, grid
/// search, AR(1) baseline, and fitted values for both models on the same
/// transformed series. Fail-fast with a stage-tagged error.
pub fn run_pipeline(
    raw: &TimeSeries,
    params: &PipelineParams,
) -> Result<PipelineReport, SelectError> {
    let logged = if params.skip_log {
        raw.clone()
    } else {
        log_transform(raw).map_err(|e| stage("log", e))?
    };
    let (trend, detrended) =
        kernel_detrend(&logged, params.detrend_bandwidth).map_err(|e| stage("detrend", e))?;
    let differenced = seasonal_difference(&detrended, params.seasonal_lag)
        .map_err(|e| stage("difference", e))?;

    let grid = grid_search(&differenced, &params.d_set, &params.p_set)
        .map_err(|e| stage("grid-search", e))?;
    let best = sbk_model_fit(&differenced, grid.best_d, grid.best_p)
        .map_err(|e| stage("refit", e))?;
    let ar1 = fit_ar1(&differenced).map_err(|e| stage("ar1", e))?;

    let n = differenced.len();
    let t0 = grid.best_p.max(grid.best_d) + 1;
    let values = differenced.values();
    let mut fitted = Vec::with_capacity(n);
    for t in 1..=n {
        let sbk = if t >= t0 { best.fitted[t - t0] } else { None };
        let ar1_fit = if t >= 2 {
            Some(ar1.c + ar1.psi * values[t - 2])
        } else {
            None
        };
        fitted.push(FittedRow {
            t,
            actual: values[t - 1],
            sbk,
            ar1: ar1_fit,
        });
    }
    let (coefficient_grid, coefficients) = best.curves(params.curve_points);

    Ok(PipelineReport {
        params: params.clone(),
        log: logged,
        trend,
        detrended,
        differenced,
        grid,
        best_bandwidths: best.bandwidths.clone(),
        ar1,
        fitted,
        coefficient_grid,
        coefficients,
    })
}

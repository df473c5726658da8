//! Quartic kernel, rule-of-thumb bandwidth, the local-linear
//! varying-coefficient smoother, and the SBK and oracle estimators.
//!
//! The SBK estimate of component `gamma` smooths the pseudo-responses
//! `Yhat_{gamma,t} = X_t - sum_{alpha != gamma} m_hat_alpha(U_t) X_{t-alpha}`
//! with a local-linear fit in the delay variable; the oracle smoother does
//! the same with the true nuisance functions in place of the pre-estimates
//! and serves as the infeasible benchmark.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::series::LaggedDesign;
use crate::spline::SplinePrefit;

/// Rule-of-thumb constant for the quartic kernel.
pub const ROT_KERNEL_CONSTANT: f64 = 2.0362;

/// The bandwidth clamp floor is `(b - a) / MIN_GRID_FRACTION`.
pub const MIN_GRID_FRACTION: f64 = 20.0;

/// Widening factor applied when a local fit fails at a query point.
const WIDEN_FACTOR: f64 = 1.5;

/// Number of widening retries before a query point is marked missing.
const WIDEN_ATTEMPTS: usize = 3;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("bandwidth {h} must be positive and finite")]
    InvalidBandwidth { h: f64 },
    #[error("component {gamma} out of range 1..={p}")]
    ComponentOutOfRange { gamma: usize, p: usize },
    #[error("inputs misaligned: {detail}")]
    InputMismatch { detail: String },
    #[error("need at least {needed} observations for the pilot fit, got {actual}")]
    TooFewObservations { needed: usize, actual: usize },
    #[error("pilot regression for the rule-of-thumb bandwidth is singular")]
    DegeneratePilot,
    #[error("fewer than 2 observations receive kernel weight at u = {u_query}")]
    InsufficientLocalData { u_query: f64 },
    #[error("local 2x2 system is singular at u = {u_query}")]
    SingularLocalFit { u_query: f64 },
    #[error("query point {u} outside the delay range [{a}, {b}]")]
    QueryOutOfRange { u: f64, a: f64, b: f64 },
}

/// Quartic (biweight) kernel rescaled to bandwidth `h`:
/// `K_h(u) = (15/16) (1 - (u/h)^2)^2 / h` on `|u| <= h`, zero outside.
pub fn quartic_kernel(u: f64, h: f64) -> f64 {
    let z = u / h;
    if z.abs() <= 1.0 {
        let one_minus = 1.0 - z * z;
        (15.0 / 16.0) * one_minus * one_minus / h
    } else {
        0.0
    }
}

/// Per-point outcome of a smoothed estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    Ok,
    /// The local fit stayed degenerate after all widening retries; the
    /// corresponding value slot holds NaN.
    Missing,
}

/// A coefficient-function estimate on a query grid.
#[derive(Debug, Clone)]
pub struct SbkEstimate {
    component: usize,
    grid: Vec<f64>,
    values: Vec<f64>,
    status: Vec<PointStatus>,
    bandwidth: f64,
    pseudo_responses: Vec<f64>,
}

impl SbkEstimate {
    /// 1-based component index this estimate targets.
    pub fn component(&self) -> usize {
        self.component
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Estimated values aligned with `grid`; NaN where `status` is `Missing`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn status(&self) -> &[PointStatus] {
        &self.status
    }

    pub fn is_missing(&self, i: usize) -> bool {
        self.status[i] == PointStatus::Missing
    }

    /// Base bandwidth used (before any per-point widening).
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// The responses that were smoothed: pseudo-responses for the SBK
    /// estimator, oracle responses for the oracle smoother.
    pub fn pseudo_responses(&self) -> &[f64] {
        &self.pseudo_responses
    }
}

/// Rule-of-thumb bandwidth for the local-linear varying-coefficient fit.
///
/// Fits the global quartic pilot `y ~ (b0 + b1 u + ... + b4 u^4) x`, then
/// `h = C_K * (sigma2 * (b - a) / sum_t (m''(u_t) x_t)^2)^(1/5)` with
/// `sigma2` the pilot residual mean square, clamped to
/// `[(b - a) / 20, b - a]`.
pub fn rule_of_thumb_bandwidth(u: &[f64], x: &[f64], y: &[f64]) -> Result<f64, KernelError> {
    rule_of_thumb_bandwidth_with(u, x, y, ROT_KERNEL_CONSTANT)
}

/// Same as [`rule_of_thumb_bandwidth`] with an explicit kernel constant.
pub fn rule_of_thumb_bandwidth_with(
    u: &[f64],
    x: &[f64],
    y: &[f64],
    kernel_constant: f64,
) -> Result<f64, KernelError> {
    let n = u.len();
    if x.len() != n || y.len() != n {
        return Err(KernelError::InputMismatch {
            detail: format!("u: {n}, x: {}, y: {}", x.len(), y.len()),
        });
    }
    if n < 10 {
        return Err(KernelError::TooFewObservations {
            needed: 10,
            actual: n,
        });
    }
    let a = u.iter().copied().fold(f64::INFINITY, f64::min);
    let b = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = b - a;
    if range.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(KernelError::DegeneratePilot);
    }

    // pilot fit in centered/scaled coordinates for conditioning; the
    // second derivative is mapped back through the chain rule
    let center = 0.5 * (a + b);
    let scale = 0.5 * range;
    const PILOT_TERMS: usize = 5;
    let design = DMatrix::from_fn(n, PILOT_TERMS, |i, k| {
        ((u[i] - center) / scale).powi(k as i32) * x[i]
    });
    let rhs = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let sv_max = svd.singular_values.iter().fold(0.0f64, |acc, &s| acc.max(s));
    let eps = sv_max * n.max(PILOT_TERMS) as f64 * f64::EPSILON;
    if svd.singular_values.iter().filter(|&&s| s > eps).count() < PILOT_TERMS {
        return Err(KernelError::DegeneratePilot);
    }
    let beta = svd.solve(&rhs, eps).expect("SVD solve cannot fail");
    let fitted = &design * &beta;
    let rss: f64 = y
        .iter()
        .zip(fitted.iter())
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    let sigma2 = rss / (n - PILOT_TERMS) as f64;

    // m''(u) in original units
    let curvature_sq: f64 = u
        .iter()
        .zip(x.iter())
        .map(|(&ui, &xi)| {
            let v = (ui - center) / scale;
            let second = (2.0 * beta[2] + 6.0 * beta[3] * v + 12.0 * beta[4] * v * v)
                / (scale * scale);
            let t = second * xi;
            t * t
        })
        .sum();

    let lo = range / MIN_GRID_FRACTION;
    let hi = range;
    let h = if sigma2 <= 0.0 {
        lo
    } else if curvature_sq <= 0.0 {
        hi
    } else {
        (kernel_constant * (sigma2 * range / curvature_sq).powf(0.2)).clamp(lo, hi)
    };
    Ok(h)
}

/// Pseudo-responses for 1-based component `gamma`:
/// `X_t - sum_{alpha != gamma} m_hat_alpha(U_t) X_{t-alpha}`.
/// For p = 1 this is exactly the raw response.
pub fn pseudo_responses(
    design: &LaggedDesign,
    prefit: &SplinePrefit,
    gamma: usize,
) -> Result<Vec<f64>, KernelError> {
    let p = design.order();
    if gamma == 0 || gamma > p {
        return Err(KernelError::ComponentOutOfRange { gamma, p });
    }
    if prefit.order() != p || prefit.pre_estimates()[0].len() != design.rows() {
        return Err(KernelError::InputMismatch {
            detail: "prefit was computed on a different design".into(),
        });
    }
    let mut out = Vec::with_capacity(design.rows());
    for t in 0..design.rows() {
        let mut acc = design.response()[t];
        for alpha in 1..=p {
            if alpha != gamma {
                acc -= prefit.pre_estimates()[alpha - 1][t] * design.lag(alpha)[t];
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Local-linear varying-coefficient estimate at a single query point.
///
/// Builds rows `(x_t, x_t (u_t - u_query))` weighted by
/// `K_h(u_t - u_query)`, solves the 2x2 weighted least squares, and returns
/// the level coordinate.
pub fn local_linear_vc(
    u_query: f64,
    u: &[f64],
    x: &[f64],
    y: &[f64],
    h: f64,
) -> Result<f64, KernelError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(KernelError::InvalidBandwidth { h });
    }
    let n = u.len();
    if x.len() != n || y.len() != n {
        return Err(KernelError::InputMismatch {
            detail: format!("u: {n}, x: {}, y: {}", x.len(), y.len()),
        });
    }
    let mut s_ll = 0.0; // sum w x^2
    let mut s_ls = 0.0; // sum w x^2 d
    let mut s_ss = 0.0; // sum w x^2 d^2
    let mut r_l = 0.0; // sum w x y
    let mut r_s = 0.0; // sum w x d y
    let mut in_window = 0usize;
    for t in 0..n {
        let w = quartic_kernel(u[t] - u_query, h);
        if w > 0.0 {
            in_window += 1;
            let d = u[t] - u_query;
            let wx = w * x[t];
            s_ll += wx * x[t];
            s_ls += wx * x[t] * d;
            s_ss += wx * x[t] * d * d;
            r_l += wx * y[t];
            r_s += wx * d * y[t];
        }
    }
    if in_window < 2 {
        return Err(KernelError::InsufficientLocalData { u_query });
    }
    solve_2x2(s_ll, s_ls, s_ss, r_l, r_s).ok_or(KernelError::SingularLocalFit { u_query })
}

/// Gaussian elimination with partial pivoting on the symmetric 2x2 system
/// `[[s_ll, s_ls], [s_ls, s_ss]] (b0, b1)' = (r_l, r_s)'`; returns `b0`.
fn solve_2x2(s_ll: f64, s_ls: f64, s_ss: f64, r_l: f64, r_s: f64) -> Option<f64> {
    let det = s_ll * s_ss - s_ls * s_ls;
    let scale = (s_ll * s_ss).abs().max(s_ls * s_ls);
    let well_posed = det.abs().partial_cmp(&(scale * 1e-13)) == Some(std::cmp::Ordering::Greater);
    if !well_posed {
        return None;
    }
    // row swap for the pivot; the unknown order is unchanged
    let (a00, a01, c0, a10, a11, c1) = if s_ll.abs() >= s_ls.abs() {
        (s_ll, s_ls, r_l, s_ls, s_ss, r_s)
    } else {
        (s_ls, s_ss, r_s, s_ll, s_ls, r_l)
    };
    let f = a10 / a00;
    let x1 = (c1 - f * c0) / (a11 - f * a01);
    let x0 = (c0 - a01 * x1) / a00;
    x0.is_finite().then_some(x0)
}

fn smooth_on_grid(
    u: &[f64],
    x: &[f64],
    y: &[f64],
    grid: &[f64],
    h: f64,
) -> (Vec<f64>, Vec<PointStatus>) {
    let mut values = Vec::with_capacity(grid.len());
    let mut status = Vec::with_capacity(grid.len());
    for &q in grid {
        let mut found = None;
        let mut hk = h;
        for _ in 0..=WIDEN_ATTEMPTS {
            match local_linear_vc(q, u, x, y, hk) {
                Ok(v) => {
                    found = Some(v);
                    break;
                }
                Err(
                    KernelError::InsufficientLocalData { .. }
                    | KernelError::SingularLocalFit { .. },
                ) => hk *= WIDEN_FACTOR,
                Err(_) => break, // structural errors are caught upfront
            }
        }
        match found {
            Some(v) => {
                values.push(v);
                status.push(PointStatus::Ok);
            }
            None => {
                values.push(f64::NAN);
                status.push(PointStatus::Missing);
            }
        }
    }
    (values, status)
}

fn validate_grid(design: &LaggedDesign, grid: &[f64]) -> Result<(), KernelError> {
    for &q in grid {
        if !(q >= design.a() && q <= design.b()) {
            return Err(KernelError::QueryOutOfRange {
                u: q,
                a: design.a(),
                b: design.b(),
            });
        }
    }
    Ok(())
}

/// Spline-backfitted kernel estimate of component `gamma` on a query grid.
///
/// The bandwidth defaults to the rule of thumb computed from the
/// pseudo-responses. Query points where the local fit stays degenerate after
/// widening are marked [`PointStatus::Missing`] rather than aborting.
pub fn sbk_estimate(
    design: &LaggedDesign,
    prefit: &SplinePrefit,
    gamma: usize,
    grid: &[f64],
    h: Option<f64>,
) -> Result<SbkEstimate, KernelError> {
    validate_grid(design, grid)?;
    let pseudo = pseudo_responses(design, prefit, gamma)?;
    let h = match h {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(KernelError::InvalidBandwidth { h }),
        None => rule_of_thumb_bandwidth(design.delay(), design.lag(gamma), &pseudo)?,
    };
    let (values, status) = smooth_on_grid(design.delay(), design.lag(gamma), &pseudo, grid, h);
    Ok(SbkEstimate {
        component: gamma,
        grid: grid.to_vec(),
        values,
        status,
        bandwidth: h,
        pseudo_responses: pseudo,
    })
}

/// Oracle kernel smoother: identical to [`sbk_estimate`] except that the
/// nuisance contributions are removed with the true coefficient functions
/// `truth(alpha, u)` (1-based `alpha`). Simulation benchmark only.
pub fn oracle_estimate<F>(
    design: &LaggedDesign,
    truth: F,
    gamma: usize,
    grid: &[f64],
    h: f64,
) -> Result<SbkEstimate, KernelError>
where
    F: Fn(usize, f64) -> f64,
{
    let p = design.order();
    if gamma == 0 || gamma > p {
        return Err(KernelError::ComponentOutOfRange { gamma, p });
    }
    validate_grid(design, grid)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(KernelError::InvalidBandwidth { h });
    }
    let mut oracle_responses = Vec::with_capacity(design.rows());
    for t in 0..design.rows() {
        let mut acc = design.response()[t];
        let u = design.delay()[t];
        for alpha in 1..=p {
            if alpha != gamma {
                acc -= truth(alpha, u) * design.lag(alpha)[t];
            }
        }
        oracle_responses.push(acc);
    }
    let (values, status) =
        smooth_on_grid(design.delay(), design.lag(gamma), &oracle_responses, grid, h);
    Ok(SbkEstimate {
        component: gamma,
        grid: grid.to_vec(),
        values,
        status,
        bandwidth: h,
        pseudo_responses: oracle_responses,
    })
}

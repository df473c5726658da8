//! Spline-backfitted kernel (SBK) estimation for functional-coefficient
//! autoregressive (FCAR) time series.
//!
//! An FCAR model lets each autoregressive coefficient vary as an unknown
//! function of a delayed value of the series:
//!
//! ```text
//! X_t = sum_{alpha=1..p} m_alpha(U_t) * X_{t-alpha} + sigma(...) * eps_t,
//! U_t = X_{t-d}
//! ```
//!
//! The SBK estimator recovers one coefficient function at a time: all other
//! components are pre-estimated with an undersmoothed degree-0 B-spline least
//! squares fit, their contribution is subtracted from the response, and the
//! resulting pseudo-responses are smoothed with a local-linear kernel
//! estimator. This keeps each smoothing problem univariate regardless of the
//! model order `p`.
//!
//! Module map:
//! - [`series`]: series container, lagged designs, deterministic transforms
//! - [`csvio`]: CSV ingestion and emission for series data
//! - [`spline`]: degree-0 spline basis and the least-squares pre-fit
//! - [`kernel`]: quartic kernel, bandwidth rule, SBK and oracle smoothers
//! - [`sim`]: simulation designs, replication studies, relative efficiency
//! - [`select`]: order selection by MSE grid search and the data pipeline

pub mod csvio;
pub mod kernel;
pub mod select;
pub mod series;
pub mod sim;
pub mod spline;

pub use kernel::{
    local_linear_vc, oracle_estimate, pseudo_responses, quartic_kernel, rule_of_thumb_bandwidth,
    sbk_estimate, KernelError, PointStatus, SbkEstimate,
};
pub use select::{
    fit_and_score, fit_ar1, grid_search, run_pipeline, Ar1Fit, GridSearchResult, PipelineParams,
    PipelineReport, SelectError,
};
pub use series::{
    build_lagged_design, kernel_detrend, log_transform, seasonal_difference, FcarSpec,
    LaggedDesign, SeriesError, TimeSeries,
};
pub use sim::{
    generate_fcar, relative_efficiency, run_study, sigma_fn, summarize_efficiencies,
    EfficiencyReport, GeneratorMode, SimDraw, SimError, SimulationConfig, StudyConfig,
};
pub use spline::{
    basis_eval, build_design, choose_knot_count, fit_prestep, fit_prestep_with, KnotGrid,
    PrefitMode, SplineError, SplinePrefit,
};

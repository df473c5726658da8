//! FCAR data generation, the replication study runner, relative-efficiency
//! computation, and mode/median/variance summaries.
//!
//! The simulated design uses sinusoidal coefficient functions
//! `m_alpha(u) = A_alpha sin(omega pi u)` and a heteroscedastic noise scale
//! driven by the delay value and the most recent `p` lags. Randomness is
//! fully determined by `(seed, cell, replication, attempt, stream)`, so
//! studies reproduce bit-for-bit at any thread count.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{
    oracle_estimate, pseudo_responses, rule_of_thumb_bandwidth_with, sbk_estimate, KernelError,
    SbkEstimate, ROT_KERNEL_CONSTANT,
};
use crate::series::{build_lagged_design, FcarSpec, LaggedDesign, SeriesError, TimeSeries};
use crate::spline::{choose_knot_count, fit_prestep_with, KnotGrid, PrefitMode, SplineError};

/// Recursive trajectories whose magnitude passes this bound are redrawn.
pub const EXPLOSION_BOUND: f64 = 1e6;

/// Redraw budget, both for explosive trajectories and for replications that
/// hit a singular spline design.
pub const MAX_REDRAWS: usize = 20;

const STREAM_PREDICTOR: u64 = 0;
const STREAM_NOISE: u64 = 1;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {detail}")]
    InvalidConfig { detail: String },
    #[error("recursive series exceeded |x| = {EXPLOSION_BOUND:e} in {attempts} attempt(s)")]
    ExplosiveSeries { attempts: usize },
    #[error("component {gamma} out of range 1..={p}")]
    ComponentOutOfRange { gamma: usize, p: usize },
    #[error("estimates share no usable grid points")]
    NoComparablePoints,
    #[error("oracle estimate matches the truth exactly; efficiency ratio undefined")]
    ZeroDenominator,
    #[error("efficiency inputs misaligned: {detail}")]
    GridMismatch { detail: String },
    #[error("need at least 2 samples to summarize, got {actual}")]
    TooFewSamples { actual: usize },
    #[error(
        "study aborted: {failed} of {reps} replications needed redraws in cell (p={p}, n={n})"
    )]
    StudyAborted {
        p: usize,
        n: usize,
        failed: usize,
        reps: usize,
    },
    #[error("replication {rep} of cell n={n} still failing after {attempts} attempts: {last}")]
    ReplicationExhausted {
        n: usize,
        rep: usize,
        attempts: usize,
        last: String,
    },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// How the simulated data are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GeneratorMode {
    /// Draw the whole predictor series i.i.d. standard normal and build the
    /// responses from the model equation on those draws. The regressors are
    /// exactly stationary and the estimators fit the constructed responses.
    #[default]
    Exogenous,
    /// Iterate the model equation itself from normal initial values, with a
    /// burn-in prefix and an explosion guard.
    Recursive,
}

/// Parameters of one simulated FCAR data set.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub p: usize,
    pub d: usize,
    /// Amplitudes `A_alpha` of the sinusoidal coefficient functions.
    pub amplitudes: Vec<f64>,
    /// Frequency `omega` in `m_alpha(u) = A_alpha sin(omega pi u)`.
    pub omega: f64,
    pub n: usize,
    pub burn_in: usize,
    pub mode: GeneratorMode,
    pub seed: u64,
    /// Standard deviation of the innovation `eps_t`.
    pub noise_scale: f64,
}

impl SimulationConfig {
    pub fn new(p: usize, d: usize, amplitudes: Vec<f64>, omega: f64, n: usize, seed: u64) -> Self {
        Self {
            p,
            d,
            amplitudes,
            omega,
            n,
            burn_in: 500,
            mode: GeneratorMode::default(),
            seed,
            noise_scale: 1.0,
        }
    }

    /// Alternating `(0.5, -0.5, 0.5, ...)` amplitude vector.
    pub fn alternating_amplitudes(p: usize) -> Vec<f64> {
        (0..p).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect()
    }

    /// True coefficient function of 1-based component `alpha`.
    pub fn coefficient(&self, alpha: usize, u: f64) -> f64 {
        self.amplitudes[alpha - 1] * (self.omega * std::f64::consts::PI * u).sin()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |detail: String| Err(SimError::InvalidConfig { detail });
        if self.p == 0 || self.d == 0 {
            return fail(format!("p and d must be at least 1 (p={}, d={})", self.p, self.d));
        }
        if self.amplitudes.len() != self.p {
            return fail(format!(
                "need {} amplitudes, got {}",
                self.p,
                self.amplitudes.len()
            ));
        }
        if self.amplitudes.iter().any(|a| !a.is_finite()) {
            return fail("amplitudes must be finite".into());
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return fail(format!("omega must be positive, got {}", self.omega));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return fail(format!("noise_scale must be positive, got {}", self.noise_scale));
        }
        let reach = self.p.max(self.d);
        let min_n = (2 * (reach + 1)).max(reach + 2 * (self.p + 1));
        if self.n < min_n {
            return fail(format!("n = {} too small; need at least {min_n}", self.n));
        }
        if self.mode == GeneratorMode::Recursive && self.burn_in < 100 {
            return fail(format!(
                "recursive mode needs burn_in >= 100, got {}",
                self.burn_in
            ));
        }
        Ok(())
    }
}

/// A simulated data set: the predictor series and the regression design the
/// estimators fit. In recursive mode the design is derived from the series;
/// in exogenous mode the responses are constructed from the model equation
/// with the i.i.d. draws as regressors.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub series: TimeSeries,
    pub design: LaggedDesign,
}

/// Heteroscedastic noise scale
/// `0.1 (sqrt(p)/2) u (5 - e^s) / (5 + e^s)` with `s` the mean absolute
/// value of the `p` most recent lags. May be negative; only its square
/// enters the noise variance.
pub fn sigma_fn(u: f64, recent_lags: &[f64]) -> f64 {
    let p = recent_lags.len() as f64;
    let s = recent_lags.iter().map(|x| x.abs()).sum::<f64>() / p;
    let e = s.exp();
    0.1 * (p.sqrt() / 2.0) * u * (5.0 - e) / (5.0 + e)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Fold identifiers into a single sub-seed; the study runner derives one
/// per (study seed, cell index, replication index).
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| splitmix64(acc ^ p))
}

/// Independent ChaCha stream keyed by (seed, stream id, attempt).
fn stream_rng(seed: u64, stream: u64, attempt: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&stream.to_le_bytes());
    key[16..24].copy_from_slice(&attempt.to_le_bytes());
    key[24..32].copy_from_slice(&0x4643_4152u64.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// One generation attempt. `attempt` selects a fresh random stream so that
/// redraws after explosions or singular designs are independent.
pub fn simulate_draw(config: &SimulationConfig, attempt: u64) -> Result<SimDraw, SimError> {
    config.validate()?;
    match config.mode {
        GeneratorMode::Exogenous => exogenous_draw(config, attempt),
        GeneratorMode::Recursive => recursive_draw(config, attempt),
    }
}

fn exogenous_draw(config: &SimulationConfig, attempt: u64) -> Result<SimDraw, SimError> {
    let (p, d, n) = (config.p, config.d, config.n);
    let mut rng_x = stream_rng(config.seed, STREAM_PREDICTOR, attempt);
    let z: Vec<f64> = (0..n).map(|_| rng_x.sample(StandardNormal)).collect();
    let mut rng_e = stream_rng(config.seed, STREAM_NOISE, attempt);

    let t0 = p.max(d) + 1;
    let rows = n + 1 - t0;
    let mut response = Vec::with_capacity(rows);
    let mut delay = Vec::with_capacity(rows);
    let mut lags = vec![Vec::with_capacity(rows); p];
    let mut recent = vec![0.0; p];
    for i in (t0 - 1)..n {
        let u = z[i - d];
        let mut det = 0.0;
        for alpha in 1..=p {
            let x = z[i - alpha];
            recent[alpha - 1] = x;
            lags[alpha - 1].push(x);
            det += config.coefficient(alpha, u) * x;
        }
        let eps: f64 = rng_e.sample(StandardNormal);
        response.push(det + sigma_fn(u, &recent) * config.noise_scale * eps);
        delay.push(u);
    }
    let series = TimeSeries::new(z)?;
    let design = LaggedDesign::from_parts(response, lags, delay)?;
    Ok(SimDraw { series, design })
}

fn recursive_draw(config: &SimulationConfig, attempt: u64) -> Result<SimDraw, SimError> {
    let (p, d, n) = (config.p, config.d, config.n);
    let init = p.max(d);
    let total = init + config.burn_in + n;
    let mut rng_x = stream_rng(config.seed, STREAM_PREDICTOR, attempt);
    let mut rng_e = stream_rng(config.seed, STREAM_NOISE, attempt);
    let mut x: Vec<f64> = (0..init).map(|_| rng_x.sample(StandardNormal)).collect();
    let mut recent = vec![0.0; p];
    for i in init..total {
        let u = x[i - d];
        let mut det = 0.0;
        for alpha in 1..=p {
            let xv = x[i - alpha];
            recent[alpha - 1] = xv;
            det += config.coefficient(alpha, u) * xv;
        }
        let eps: f64 = rng_e.sample(StandardNormal);
        let value = det + sigma_fn(u, &recent) * config.noise_scale * eps;
        if !value.is_finite() || value.abs() > EXPLOSION_BOUND {
            return Err(SimError::ExplosiveSeries { attempts: 1 });
        }
        x.push(value);
    }
    let series = TimeSeries::new(x[total - n..].to_vec())?;
    let design = build_lagged_design(&series, &FcarSpec::new(p, d)?)?;
    Ok(SimDraw { series, design })
}

/// Generate a draw, redrawing explosive recursive trajectories up to
/// [`MAX_REDRAWS`] times.
pub fn generate_draw(config: &SimulationConfig) -> Result<SimDraw, SimError> {
    for attempt in 0..MAX_REDRAWS {
        match simulate_draw(config, attempt as u64) {
            Err(SimError::ExplosiveSeries { .. }) => continue,
            other => return other,
        }
    }
    Err(SimError::ExplosiveSeries {
        attempts: MAX_REDRAWS,
    })
}

/// Generate an FCAR series. In exogenous mode this is the i.i.d. predictor
/// series; use [`generate_draw`] when the constructed responses are needed.
pub fn generate_fcar(config: &SimulationConfig) -> Result<TimeSeries, SimError> {
    Ok(generate_draw(config)?.series)
}

/// Relative efficiency: mean squared error of the SBK estimate over that of
/// the oracle estimate against the same truth, on a shared grid. Grid points
/// flagged missing in either estimate are skipped from both sums.
pub fn relative_efficiency(
    sbk: &SbkEstimate,
    oracle: &SbkEstimate,
    truth: &[f64],
) -> Result<f64, SimError> {
    if sbk.grid() != oracle.grid() || truth.len() != sbk.grid().len() {
        return Err(SimError::GridMismatch {
            detail: format!(
                "sbk grid {}, oracle grid {}, truth {}",
                sbk.grid().len(),
                oracle.grid().len(),
                truth.len()
            ),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    let mut used = 0usize;
    for i in 0..truth.len() {
        if sbk.is_missing(i) || oracle.is_missing(i) {
            continue;
        }
        let es = sbk.values()[i] - truth[i];
        let eo = oracle.values()[i] - truth[i];
        num += es * es;
        den += eo * eo;
        used += 1;
    }
    if used == 0 {
        return Err(SimError::NoComparablePoints);
    }
    if den == 0.0 {
        return Err(SimError::ZeroDenominator);
    }
    Ok(num / den)
}

/// Silverman's rule: `0.9 min(sd, IQR/1.34) n^(-1/5)`; falls back to the
/// standard deviation alone when the interquartile range collapses.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = crate::series::quantile_type7(&sorted, 0.75)
        - crate::series::quantile_type7(&sorted, 0.25);
    let scale = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * scale * n.powf(-0.2)
}

/// Gaussian kernel density estimate on an equally spaced grid spanning the
/// sample range. Degenerate samples (all equal) give a single-point curve.
pub fn kde_curve(samples: &[f64], points: usize) -> (Vec<f64>, Vec<f64>) {
    let points = points.max(2);
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bw = silverman_bandwidth(samples);
    let usable = samples.len() > 1 && hi > lo && bw > 0.0 && bw.is_finite();
    if !usable {
        return (vec![lo], vec![1.0]);
    }
    let n = samples.len() as f64;
    let norm = 1.0 / (n * bw * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            samples
                .iter()
                .map(|&s| {
                    let z = (g - s) / bw;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    (grid, density)
}

/// Number of KDE grid points used for the mode.
pub const MODE_GRID_POINTS: usize = 512;

/// Mode, median, and unbiased variance of an efficiency sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencySummary {
    pub mode: f64,
    pub median: f64,
    pub variance: f64,
}

/// Summaries used for the efficiency tables: the median is the exact order
/// statistic, the variance unbiased, and the mode the argmax of a Gaussian
/// KDE with Silverman bandwidth on a 512-point grid.
pub fn summarize_efficiencies(samples: &[f64]) -> Result<EfficiencySummary, SimError> {
    if samples.len() < 2 {
        return Err(SimError::TooFewSamples {
            actual: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let mean = samples.iter().sum::<f64>() / n as f64;
    let variance = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64;
    let (grid, density) = kde_curve(samples, MODE_GRID_POINTS);
    let mut mode = grid[0];
    let mut best = f64::NEG_INFINITY;
    for (g, d) in grid.iter().zip(&density) {
        if *d > best {
            best = *d;
            mode = *g;
        }
    }
    Ok(EfficiencySummary {
        mode,
        median,
        variance,
    })
}

/// Parameters of a replication study over several sample sizes.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub p: usize,
    pub d: usize,
    pub amplitudes: Vec<f64>,
    pub omega: f64,
    pub n_values: Vec<usize>,
    pub replications: usize,
    /// 1-based component indices to estimate and compare.
    pub components: Vec<usize>,
    pub seed: u64,
    pub mode: GeneratorMode,
    pub noise_scale: f64,
    pub burn_in: usize,
    /// Evaluation grid size for the efficiency ratio.
    pub eval_points: usize,
    /// Fraction of the delay range trimmed from each side of the grid.
    pub eval_trim: f64,
    /// Recompute the rule-of-thumb bandwidth in every replication; when
    /// false, the bandwidths from replication 0 are reused across the cell.
    pub bandwidth_per_replication: bool,
    pub knot_c1: f64,
    pub knot_c2: f64,
    pub rot_constant: f64,
    /// Abort a cell when more than this fraction of replications needed
    /// redraws.
    pub max_failure_fraction: f64,
}

impl StudyConfig {
    /// Study skeleton with the standard design for order `p`: delay
    /// `d = p + 1` and alternating half-unit amplitudes.
    pub fn with_design(p: usize, omega: f64) -> Self {
        Self {
            p,
            d: p + 1,
            amplitudes: SimulationConfig::alternating_amplitudes(p),
            omega,
            n_values: vec![100, 500, 1000, 1500],
            replications: 500,
            components: vec![1, 4.min(p)],
            seed: 0,
            mode: GeneratorMode::Exogenous,
            noise_scale: 1.0,
            burn_in: 500,
            eval_points: 101,
            eval_trim: 0.05,
            bandwidth_per_replication: true,
            knot_c1: 1.0,
            knot_c2: 1.0,
            rot_constant: ROT_KERNEL_CONSTANT,
            max_failure_fraction: 0.2,
        }
    }

    fn sim_config(&self, n: usize) -> SimulationConfig {
        SimulationConfig {
            p: self.p,
            d: self.d,
            amplitudes: self.amplitudes.clone(),
            omega: self.omega,
            n,
            burn_in: self.burn_in,
            mode: self.mode,
            seed: 0,
            noise_scale: self.noise_scale,
        }
    }
}

/// Per-(n, component) efficiency samples and their summaries.
#[derive(Debug, Clone)]
pub struct EfficiencyReport {
    pub p: usize,
    pub n: usize,
    pub component: usize,
    /// One efficiency ratio per replication, in replication order.
    pub samples: Vec<f64>,
    pub mode: f64,
    pub median: f64,
    pub variance: f64,
    /// Replications that errored at least once and were redrawn.
    pub n_failed: usize,
}

struct RepOutcome {
    effs: Vec<(usize, f64)>,
    bandwidths: Vec<(usize, f64)>,
    redrawn: bool,
}

fn retryable(err: &SimError) -> bool {
    matches!(
        err,
        SimError::ExplosiveSeries { .. }
            | SimError::ZeroDenominator
            | SimError::NoComparablePoints
            | SimError::Spline(SplineError::SingularDesign { .. })
            | SimError::Spline(SplineError::DegenerateInterval { .. })
            | SimError::Kernel(KernelError::DegeneratePilot)
    )
}

fn try_replication(
    study: &StudyConfig,
    config: &SimulationConfig,
    attempt: u64,
    fixed_h: Option<&[(usize, f64)]>,
) -> Result<RepOutcome, SimError> {
    let draw = simulate_draw(config, attempt)?;
    let design = &draw.design;
    let interior = choose_knot_count(config.n, config.d, study.knot_c1, study.knot_c2);
    let grid = KnotGrid::new(design.a(), design.b(), interior)?;
    let prefit = fit_prestep_with(design, &grid, PrefitMode::MinimumNorm)?;

    let span = design.b() - design.a();
    let lo = design.a() + study.eval_trim * span;
    let hi = design.b() - study.eval_trim * span;
    let eval: Vec<f64> = (0..study.eval_points)
        .map(|i| lo + (hi - lo) * i as f64 / (study.eval_points - 1) as f64)
        .collect();

    let mut effs = Vec::with_capacity(study.components.len());
    let mut bandwidths = Vec::with_capacity(study.components.len());
    for &gamma in &study.components {
        let h = match fixed_h.and_then(|hs| hs.iter().find(|(g, _)| *g == gamma)) {
            Some(&(_, h)) => h,
            None => {
                let pseudo = pseudo_responses(design, &prefit, gamma)?;
                rule_of_thumb_bandwidth_with(
                    design.delay(),
                    design.lag(gamma),
                    &pseudo,
                    study.rot_constant,
                )?
            }
        };
        let sbk = sbk_estimate(design, &prefit, gamma, &eval, Some(h))?;
        let oracle = oracle_estimate(design, |a, u| config.coefficient(a, u), gamma, &eval, h)?;
        let truth: Vec<f64> = eval.iter().map(|&u| config.coefficient(gamma, u)).collect();
        let eff = relative_efficiency(&sbk, &oracle, &truth)?;
        effs.push((gamma, eff));
        bandwidths.push((gamma, h));
    }
    Ok(RepOutcome {
        effs,
        bandwidths,
        redrawn: false,
    })
}

fn run_replication(
    study: &StudyConfig,
    base: &SimulationConfig,
    cell: u64,
    rep: u64,
    fixed_h: Option<&[(usize, f64)]>,
) -> Result<RepOutcome, SimError> {
    let mut config = base.clone();
    config.seed = derive_seed(&[study.seed, cell, rep]);
    let mut last = String::new();
    for attempt in 0..MAX_REDRAWS {
        match try_replication(study, &config, attempt as u64, fixed_h) {
            Ok(mut outcome) => {
                outcome.redrawn = attempt > 0;
                return Ok(outcome);
            }
            Err(e) if retryable(&e) => last = e.to_string(),
            Err(e) => return Err(e),
        }
    }
    Err(SimError::ReplicationExhausted {
        n: config.n,
        rep: rep as usize,
        attempts: MAX_REDRAWS,
        last,
    })
}

/// Run the full replication study: for every sample size and component,
/// generate data, pre-fit, apply the SBK and oracle smoothers with a shared
/// bandwidth, and summarize the relative efficiencies.
///
/// Replications run in parallel; results are keyed by replication index, so
/// reports are identical at any thread count.
pub fn run_study(study: &StudyConfig) -> Result<Vec<EfficiencyReport>, SimError> {
    if study.components.is_empty() {
        return Err(SimError::InvalidConfig {
            detail: "no components requested".into(),
        });
    }
    for &gamma in &study.components {
        if gamma == 0 || gamma > study.p {
            return Err(SimError::ComponentOutOfRange {
                gamma,
                p: study.p,
            });
        }
    }
    if study.replications < 2 {
        return Err(SimError::InvalidConfig {
            detail: "need at least two replications to summarize a cell".into(),
        });
    }
    if !(study.eval_points >= 2 && study.eval_trim >= 0.0 && study.eval_trim < 0.5) {
        return Err(SimError::InvalidConfig {
            detail: "eval grid needs >= 2 points and trim in [0, 0.5)".into(),
        });
    }

    let mut reports = Vec::new();
    for (cell, &n) in study.n_values.iter().enumerate() {
        let base = study.sim_config(n);
        base.validate()?;
        let fixed_h = if study.bandwidth_per_replication {
            None
        } else {
            Some(run_replication(study, &base, cell as u64, 0, None)?.bandwidths)
        };

        let outcomes: Vec<Result<RepOutcome, SimError>> = (0..study.replications)
            .into_par_iter()
            .map(|rep| run_replication(study, &base, cell as u64, rep as u64, fixed_h.as_deref()))
            .collect();

        let mut n_failed = 0usize;
        let mut samples: BTreeMap<usize, Vec<f64>> = study
            .components
            .iter()
            .map(|&g| (g, Vec::with_capacity(study.replications)))
            .collect();
        for outcome in outcomes {
            let outcome = outcome?;
            if outcome.redrawn {
                n_failed += 1;
            }
            for (gamma, eff) in outcome.effs {
                samples.get_mut(&gamma).expect("component key").push(eff);
            }
        }
        if n_failed as f64 > study.max_failure_fraction * study.replications as f64 {
            return Err(SimError::StudyAborted {
                p: study.p,
                n,
                failed: n_failed,
                reps: study.replications,
            });
        }
        for &gamma in &study.components {
            let s = &samples[&gamma];
            let summary = summarize_efficiencies(s)?;
            reports.push(EfficiencyReport {
                p: study.p,
                n,
                component: gamma,
                samples: s.clone(),
                mode: summary.mode,
                median: summary.median,
                variance: summary.variance,
                n_failed,
            });
        }
    }
    Ok(reports)
}

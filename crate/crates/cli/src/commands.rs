//! Command implementations. Each command resolves all of its options,
//! performs the work, writes its output files, and finishes with a
//! `manifest.json` recording the resolved parameters and elapsed time.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use fcar::csvio::{read_series_csv, write_series_csv};
use fcar::select::{self, PipelineParams};
use fcar::sim::{
    generate_draw, run_study, GeneratorMode, SimError, SimulationConfig, StudyConfig,
};
use fcar::{KernelError, SelectError, SeriesError, SplineError};

use crate::manifest::{join_list, RunManifest};
use crate::output;
use crate::{EstimateArgs, Mode, PipelineArgs, SimulateArgs, StudyArgs};

/// Exit-code classes: 2 usage, 3 data, 4 numerical failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub severity: Severity,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Data,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Numeric,
            message: message.into(),
        }
    }

    pub fn code(&self) -> i32 {
        match self.severity {
            Severity::Usage => 2,
            Severity::Data => 3,
            Severity::Numeric => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::data(format!("i/o error: {e}"))
    }
}

impl From<SeriesError> for CliError {
    fn from(e: SeriesError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<SplineError> for CliError {
    fn from(e: SplineError) -> Self {
        CliError::numeric(e.to_string())
    }
}

impl From<KernelError> for CliError {
    fn from(e: KernelError) -> Self {
        CliError::numeric(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        let severity = match &e {
            SimError::InvalidConfig { .. } | SimError::ComponentOutOfRange { .. } => {
                Severity::Usage
            }
            SimError::Series(_) => Severity::Data,
            _ => Severity::Numeric,
        };
        CliError {
            severity,
            message: e.to_string(),
        }
    }
}

fn select_severity(e: &SelectError) -> Severity {
    match e {
        SelectError::Series(_) => Severity::Data,
        SelectError::Stage { source, .. } => select_severity(source),
        _ => Severity::Numeric,
    }
}

impl From<SelectError> for CliError {
    fn from(e: SelectError) -> Self {
        CliError {
            severity: select_severity(&e),
            message: e.to_string(),
        }
    }
}

fn mode_name(mode: GeneratorMode) -> &'static str {
    match mode {
        GeneratorMode::Exogenous => "exogenous",
        GeneratorMode::Recursive => "recursive",
    }
}

fn parse_mode(s: &str) -> Result<GeneratorMode, String> {
    match s {
        "exogenous" => Ok(GeneratorMode::Exogenous),
        "recursive" => Ok(GeneratorMode::Recursive),
        other => Err(format!("unknown generator mode {other:?}")),
    }
}

impl Mode {
    pub fn to_generator(self) -> GeneratorMode {
        match self {
            Mode::Exogenous => GeneratorMode::Exogenous,
            Mode::Recursive => GeneratorMode::Recursive,
        }
    }
}

fn finish_manifest(
    mut manifest: RunManifest,
    started: Instant,
    out_dir: &Path,
) -> Result<(), CliError> {
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    manifest.write(out_dir)?;
    Ok(())
}

// --- simulate ---------------------------------------------------------

pub fn cmd_simulate(args: &SimulateArgs, out_dir: &Path, threads: usize) -> Result<(), CliError> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mode = args.mode.to_generator();
    let config = SimulationConfig {
        p: args.p,
        d: args.d,
        amplitudes: args.amplitudes.clone(),
        omega: args.omega,
        n: args.n,
        burn_in: args.burn_in,
        mode,
        seed: args.seed,
        noise_scale: args.noise_scale,
    };
    config.validate().map_err(CliError::from)?;
    let draw = generate_draw(&config)?;
    write_series_csv(&out_dir.join("series.csv"), &draw.series)?;
    if mode == GeneratorMode::Exogenous {
        let t0 = args.p.max(args.d) + 1;
        output::write_design_csv(&out_dir.join("design.csv"), &draw.design, t0)?;
    }

    let mut params = BTreeMap::new();
    params.insert("p".into(), args.p.to_string());
    params.insert("d".into(), args.d.to_string());
    params.insert("A".into(), join_list(&args.amplitudes));
    params.insert("omega".into(), args.omega.to_string());
    params.insert("n".into(), args.n.to_string());
    params.insert("mode".into(), mode_name(mode).into());
    params.insert("burn_in".into(), args.burn_in.to_string());
    params.insert("noise_scale".into(), args.noise_scale.to_string());
    params.insert("threads".into(), threads.to_string());
    finish_manifest(
        RunManifest::new("simulate", params, args.seed),
        started,
        out_dir,
    )
}

pub fn simulate_args_from_manifest(m: &RunManifest) -> Result<SimulateArgs, String> {
    Ok(SimulateArgs {
        p: m.parse("p")?,
        d: m.parse("d")?,
        amplitudes: m.parse_list("A")?,
        omega: m.parse("omega")?,
        n: m.parse("n")?,
        seed: m.seed,
        mode: match parse_mode(m.param("mode")?)? {
            GeneratorMode::Exogenous => Mode::Exogenous,
            GeneratorMode::Recursive => Mode::Recursive,
        },
        burn_in: m.parse("burn_in")?,
        noise_scale: m.parse("noise_scale")?,
    })
}

// --- estimate ---------------------------------------------------------

#[derive(Serialize)]
struct EstimateSummary {
    d: usize,
    p: usize,
    rows: usize,
    a: f64,
    b: f64,
    bandwidths: Vec<f64>,
    mse: f64,
}

pub fn cmd_estimate(args: &EstimateArgs, out_dir: &Path, threads: usize) -> Result<(), CliError> {
    let started = Instant::now();
    match (&args.input, &args.design) {
        (None, None) => {
            return Err(CliError::usage(
                "estimate needs --input <series.csv> or --design <design.csv>",
            ))
        }
        (Some(_), Some(_)) => {
            return Err(CliError::usage(
                "--input and --design are mutually exclusive",
            ))
        }
        _ => {}
    }
    if args.grid < 2 {
        return Err(CliError::usage("--grid must be at least 2"));
    }
    if !(0.0..0.5).contains(&args.trim) {
        return Err(CliError::usage("--trim must lie in [0, 0.5)"));
    }
    fs::create_dir_all(out_dir)?;

    let (fit, t0) = if let Some(design_path) = &args.design {
        let (design, first_t) = output::read_design_csv(design_path).map_err(CliError::data)?;
        if design.order() != args.p {
            return Err(CliError::usage(format!(
                "--p {} does not match the {} lag columns in {}",
                args.p,
                design.order(),
                design_path.display()
            )));
        }
        let n = first_t - 1 + design.rows();
        (
            select::sbk_design_fit(design, n, args.d, args.bandwidth)?,
            first_t,
        )
    } else {
        let series = read_series_csv(args.input.as_ref().unwrap())?;
        (
            select::sbk_model_fit_with(&series, args.d, args.p, args.bandwidth)?,
            args.p.max(args.d) + 1,
        )
    };

    let (grid, curves) = fit.curves_trimmed(args.grid, args.trim);
    output::write_coefficients_csv(&out_dir.join("coefficients.csv"), &grid, &curves)?;

    let mut fitted = String::from("t,actual,fitted\n");
    for i in 0..fit.design().rows() {
        let value = match fit.fitted[i] {
            Some(v) => format!("{v}"),
            None => "NA".into(),
        };
        fitted.push_str(&format!("{},{},{value}\n", t0 + i, fit.design().response()[i]));
    }
    output::write_text(&out_dir.join("fitted.csv"), &fitted)?;

    let summary = EstimateSummary {
        d: args.d,
        p: args.p,
        rows: fit.design().rows(),
        a: fit.design().a(),
        b: fit.design().b(),
        bandwidths: fit.bandwidths.clone(),
        mse: fit.mse,
    };
    output::write_text(
        &out_dir.join("fit.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;

    let mut params = BTreeMap::new();
    params.insert(
        "input".into(),
        args.input
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    );
    params.insert(
        "design".into(),
        args.design
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
    );
    params.insert("d".into(), args.d.to_string());
    params.insert("p".into(), args.p.to_string());
    params.insert("grid".into(), args.grid.to_string());
    params.insert(
        "bandwidth".into(),
        args.bandwidth
            .map(|h| h.to_string())
            .unwrap_or_else(|| "auto".into()),
    );
    params.insert("trim".into(), args.trim.to_string());
    params.insert("threads".into(), threads.to_string());
    finish_manifest(RunManifest::new("estimate", params, 0), started, out_dir)
}

pub fn estimate_args_from_manifest(m: &RunManifest) -> Result<EstimateArgs, String> {
    let path_of = |key: &str| -> Result<Option<PathBuf>, String> {
        let raw = m.param(key)?;
        Ok((!raw.is_empty()).then(|| PathBuf::from(raw)))
    };
    let bandwidth = match m.param("bandwidth")? {
        "auto" => None,
        value => Some(
            value
                .parse()
                .map_err(|_| "manifest parameter \"bandwidth\" has an invalid value")?,
        ),
    };
    Ok(EstimateArgs {
        input: path_of("input")?,
        design: path_of("design")?,
        d: m.parse("d")?,
        p: m.parse("p")?,
        grid: m.parse("grid")?,
        bandwidth,
        trim: m.parse("trim")?,
    })
}

// --- study ------------------------------------------------------------

pub fn cmd_study(args: &StudyArgs, out_dir: &Path, threads: usize) -> Result<(), CliError> {
    let started = Instant::now();
    if args.components.iter().any(|&c| c == 0 || c > args.p) {
        return Err(CliError::usage(format!(
            "--components must lie in 1..={}, got {}",
            args.p,
            join_list(&args.components)
        )));
    }
    if args.n_values.is_empty() {
        return Err(CliError::usage("--n needs at least one sample size"));
    }
    fs::create_dir_all(out_dir)?;

    let d = args.d.unwrap_or(args.p + 1);
    let amplitudes = args
        .amplitudes
        .clone()
        .unwrap_or_else(|| SimulationConfig::alternating_amplitudes(args.p));
    let study = StudyConfig {
        p: args.p,
        d,
        amplitudes: amplitudes.clone(),
        omega: args.omega,
        n_values: args.n_values.clone(),
        replications: args.reps,
        components: args.components.clone(),
        seed: args.seed,
        mode: args.mode.to_generator(),
        noise_scale: args.noise_scale,
        burn_in: args.burn_in,
        eval_points: args.eval_points,
        eval_trim: args.eval_trim,
        bandwidth_per_replication: !args.fixed_bandwidth,
        knot_c1: 1.0,
        knot_c2: 1.0,
        rot_constant: args.rot_constant,
        max_failure_fraction: 0.2,
    };
    let reports = run_study(&study)?;
    output::write_samples_csv(&out_dir.join("samples.csv"), &reports)?;
    output::write_summary_csv(&out_dir.join("summary.csv"), &reports)?;
    output::write_density_csvs(out_dir, &reports)?;

    let mut params = BTreeMap::new();
    params.insert("p".into(), args.p.to_string());
    params.insert("d".into(), d.to_string());
    params.insert("A".into(), join_list(&amplitudes));
    params.insert("omega".into(), args.omega.to_string());
    params.insert("n".into(), join_list(&args.n_values));
    params.insert("reps".into(), args.reps.to_string());
    params.insert("components".into(), join_list(&args.components));
    params.insert("mode".into(), mode_name(study.mode).into());
    params.insert("noise_scale".into(), args.noise_scale.to_string());
    params.insert("burn_in".into(), args.burn_in.to_string());
    params.insert("eval_points".into(), args.eval_points.to_string());
    params.insert("eval_trim".into(), args.eval_trim.to_string());
    params.insert("fixed_bandwidth".into(), args.fixed_bandwidth.to_string());
    params.insert("rot_constant".into(), args.rot_constant.to_string());
    params.insert("threads".into(), threads.to_string());
    finish_manifest(RunManifest::new("study", params, args.seed), started, out_dir)
}

pub fn study_args_from_manifest(m: &RunManifest) -> Result<StudyArgs, String> {
    Ok(StudyArgs {
        p: m.parse("p")?,
        n_values: m.parse_list("n")?,
        reps: m.parse("reps")?,
        components: m.parse_list("components")?,
        seed: m.seed,
        omega: m.parse("omega")?,
        d: Some(m.parse("d")?),
        amplitudes: Some(m.parse_list("A")?),
        mode: match parse_mode(m.param("mode")?)? {
            GeneratorMode::Exogenous => Mode::Exogenous,
            GeneratorMode::Recursive => Mode::Recursive,
        },
        noise_scale: m.parse("noise_scale")?,
        burn_in: m.parse("burn_in")?,
        eval_points: m.parse("eval_points")?,
        eval_trim: m.parse("eval_trim")?,
        fixed_bandwidth: m.parse("fixed_bandwidth")?,
        rot_constant: m.parse("rot_constant")?,
    })
}

// --- pipeline ---------------------------------------------------------

#[derive(Serialize)]
struct PipelineSummary {
    detrend_bandwidth: f64,
    seasonal_lag: usize,
    skip_log: bool,
    d_set: Vec<usize>,
    p_set: Vec<usize>,
    best_d: usize,
    best_p: usize,
    sbk_mse: f64,
    sbk_bandwidths: Vec<f64>,
    ar1_c: f64,
    ar1_psi: f64,
    ar1_mse: f64,
    failed_cells: usize,
}

pub fn cmd_pipeline(args: &PipelineArgs, out_dir: &Path, threads: usize) -> Result<(), CliError> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let raw = read_series_csv(&args.input)?;
    let params = PipelineParams {
        detrend_bandwidth: args.detrend_bandwidth,
        seasonal_lag: args.seasonal_lag,
        d_set: args.d_set.clone().unwrap_or_else(|| (1..=10).collect()),
        p_set: args.p_set.clone().unwrap_or_else(|| (2..=10).collect()),
        skip_log: args.skip_log,
        curve_points: args.curve_points,
    };
    if params.d_set.is_empty() || params.p_set.is_empty() {
        return Err(CliError::usage("--d-set and --p-set must be non-empty"));
    }
    let report = select::run_pipeline(&raw, &params)?;

    output::write_mse_table_csv(&out_dir.join("mse_table.csv"), &report.grid)?;
    output::write_mse_cells_csv(&out_dir.join("mse_cells.csv"), &report.grid)?;
    output::write_pipeline_fitted_csv(&out_dir.join("fitted.csv"), &report)?;
    output::write_coefficients_csv(
        &out_dir.join("coefficients.csv"),
        &report.coefficient_grid,
        &report.coefficients,
    )?;
    output::write_stages_csv(&out_dir.join("stages.csv"), &raw, &report)?;

    let summary = PipelineSummary {
        detrend_bandwidth: params.detrend_bandwidth,
        seasonal_lag: params.seasonal_lag,
        skip_log: params.skip_log,
        d_set: params.d_set.clone(),
        p_set: params.p_set.clone(),
        best_d: report.grid.best_d,
        best_p: report.grid.best_p,
        sbk_mse: report.grid.best_mse,
        sbk_bandwidths: report.best_bandwidths.clone(),
        ar1_c: report.ar1.c,
        ar1_psi: report.ar1.psi,
        ar1_mse: report.ar1.mse,
        failed_cells: report.grid.failures.len(),
    };
    output::write_text(
        &out_dir.join("pipeline.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;

    let mut params_map = BTreeMap::new();
    params_map.insert("input".into(), args.input.display().to_string());
    params_map.insert(
        "detrend_bandwidth".into(),
        args.detrend_bandwidth.to_string(),
    );
    params_map.insert("seasonal_lag".into(), args.seasonal_lag.to_string());
    params_map.insert("d_set".into(), join_list(&params.d_set));
    params_map.insert("p_set".into(), join_list(&params.p_set));
    params_map.insert("skip_log".into(), args.skip_log.to_string());
    params_map.insert("curve_points".into(), args.curve_points.to_string());
    params_map.insert("threads".into(), threads.to_string());
    finish_manifest(RunManifest::new("pipeline", params_map, 0), started, out_dir)
}

pub fn pipeline_args_from_manifest(m: &RunManifest) -> Result<PipelineArgs, String> {
    Ok(PipelineArgs {
        input: PathBuf::from(m.param("input")?),
        detrend_bandwidth: m.parse("detrend_bandwidth")?,
        seasonal_lag: m.parse("seasonal_lag")?,
        d_set: Some(m.parse_list("d_set")?),
        p_set: Some(m.parse_list("p_set")?),
        skip_log: m.parse("skip_log")?,
        curve_points: m.parse("curve_points")?,
    })
}

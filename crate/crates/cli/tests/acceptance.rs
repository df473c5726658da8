//! Acceptance suite. One test per criterion (multi-part criteria split into
//! lettered tests that share computed results); every test prints a
//! `acceptance <id>: PASS/FAIL` line before asserting, so a full run with
//! `--nocapture` shows the scoreboard.
//!
//! Known failures: 5b, 5c, and 6b. Those checks assume the efficiency
//! medians approach 1 from below (the reference values they were calibrated
//! against rise 0.51 -> 0.87 with n). With one shared bandwidth and this
//! design's near-noiseless innovations, the SBK responses equal the oracle
//! responses plus independent zero-mean pre-estimation junk, so the SBK
//! error cannot fall below the oracle error: the ratio defined by
//! `relative_efficiency` approaches 1 strictly from above (measured medians
//! 1.26 -> 1.03 as n grows), and the stated inequalities are unsatisfiable.
//! The reference values match the INVERSE ratio, whose medians here rise
//! 0.79 -> 0.97; the tests assert the criteria as stated, fail, and print
//! the inverse-orientation medians as diagnostics.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DVector;

use fcar::kernel::{oracle_estimate, quartic_kernel, sbk_estimate};
use fcar::select::sbk_model_fit;
use fcar::series::{LaggedDesign, TimeSeries};
use fcar::sim::{
    derive_seed, run_study, simulate_draw, EfficiencyReport, SimulationConfig, StudyConfig,
};
use fcar::spline::{
    build_design, choose_knot_count, fit_prestep, fit_prestep_with, KnotGrid, PrefitMode,
};

fn report(id: &str, ok: bool, detail: &str) {
    println!("acceptance {id}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
}

fn check(id: &str, ok: bool, detail: String) {
    report(id, ok, &detail);
    assert!(ok, "criterion {id} failed: {detail}");
}

// --- criterion 1: SBK/oracle coincidence at p = 1 -----------------------

#[test]
fn criterion_1_oracle_coincidence_p1() {
    let started = Instant::now();
    let mut compared = 0usize;
    for seed in 0..50u64 {
        let config = SimulationConfig::new(1, 1, vec![0.5], 4.5, 200, derive_seed(&[1, seed]));
        let draw = simulate_draw(&config, 0).expect("exogenous draw");
        let design = &draw.design;
        let interior = choose_knot_count(config.n, config.d, 1.0, 1.0);
        let grid = KnotGrid::new(design.a(), design.b(), interior).unwrap();
        let prefit = fit_prestep_with(design, &grid, PrefitMode::MinimumNorm).unwrap();
        let span = design.b() - design.a();
        let eval: Vec<f64> = (0..101)
            .map(|i| design.a() + 0.05 * span + 0.9 * span * i as f64 / 100.0)
            .collect();
        let sbk = sbk_estimate(design, &prefit, 1, &eval, None).unwrap();
        let oracle = oracle_estimate(
            design,
            |_, _| panic!("p = 1 has no nuisance components"),
            1,
            &eval,
            sbk.bandwidth(),
        )
        .unwrap();
        for i in 0..eval.len() {
            assert_eq!(sbk.status()[i], oracle.status()[i], "seed {seed}, point {i}");
            assert_eq!(
                sbk.values()[i].to_bits(),
                oracle.values()[i].to_bits(),
                "seed {seed}, point {i}"
            );
            compared += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(
        "1 (p=1 oracle coincidence)",
        compared == 50 * 101 && elapsed < 10.0,
        format!("{compared} grid points bitwise equal across 50 series in {elapsed:.2}s"),
    );
}

// --- criterion 2: exact recovery of a constant coefficient --------------

#[test]
fn criterion_2_exact_recovery() {
    let started = Instant::now();
    let mut values = Vec::with_capacity(300);
    let mut x = 1.0f64;
    for _ in 0..300 {
        values.push(x);
        x *= 0.5;
    }
    let series = TimeSeries::new(values).unwrap();
    let fit = sbk_model_fit(&series, 1, 1).unwrap();
    let estimates = &fit.coefficients_at_sample[0];
    let present = estimates.iter().flatten().count();
    let max_dev = estimates
        .iter()
        .flatten()
        .map(|c| (c - 0.5).abs())
        .fold(0.0f64, f64::max);
    let elapsed = started.elapsed().as_secs_f64();
    let ok = fit.mse <= 1e-10
        && max_dev <= 1e-8
        && present * 100 >= estimates.len() * 95
        && elapsed < 1.0;
    check(
        "2 (exact constant recovery)",
        ok,
        format!(
            "mse = {:.1e}, max |m-0.5| = {max_dev:.1e} over {present}/{} points, {elapsed:.2}s",
            fit.mse,
            estimates.len()
        ),
    );
}

// --- criterion 3: kernel contract ---------------------------------------

#[test]
fn criterion_3_kernel_contract() {
    let started = Instant::now();
    let mut worst_mass_err = 0.0f64;
    for h in [0.1, 1.0, 10.0] {
        let n = 4000;
        let step = 2.0 * h / n as f64;
        let mut mass = 0.0;
        for i in 0..n {
            let u0 = -h + i as f64 * step;
            mass += step / 6.0
                * (quartic_kernel(u0, h)
                    + 4.0 * quartic_kernel(u0 + 0.5 * step, h)
                    + quartic_kernel(u0 + step, h));
        }
        worst_mass_err = worst_mass_err.max((mass - 1.0).abs());
    }
    let point = quartic_kernel(0.0, 1.0) == 0.9375;
    let support = [0.1, 1.0, 10.0].iter().all(|&h| {
        quartic_kernel(h, h) == 0.0
            && quartic_kernel(-h, h) == 0.0
            && quartic_kernel(h * (1.0 + 1e-9), h) == 0.0
            && quartic_kernel(h * (1.0 - 1e-6), h) > 0.0
    });
    let elapsed = started.elapsed().as_secs_f64();
    check(
        "3 (kernel contract)",
        worst_mass_err < 1e-6 && point && support && elapsed < 1.0,
        format!("max |mass-1| = {worst_mass_err:.1e}, K_1(0) exact: {point}, support: {support}"),
    );
}

// --- criterion 4: least-squares orthogonality ----------------------------

/// Dense normal-equations solve by Gaussian elimination with partial
/// pivoting; independent of the SVD implementation path.
fn normal_equations_oracle(z: &nalgebra::DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    let n = z.ncols();
    let mut a = vec![vec![0.0f64; n + 1]; n];
    for r in 0..n {
        for c in 0..n {
            a[r][c] = (0..z.nrows()).map(|i| z[(i, r)] * z[(i, c)]).sum();
        }
        a[r][n] = (0..z.nrows()).map(|i| z[(i, r)] * y[i]).sum();
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = a[col][n];
        for k in (col + 1)..n {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    x
}

fn occupied_random_design(seed: u64, rows_per_bin: usize, p: usize, interior: usize) -> LaggedDesign {
    let mut state = seed.max(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let nb = interior + 1;
    let rows = rows_per_bin * nb;
    let mut delay = Vec::with_capacity(rows);
    for j in 0..nb {
        for _ in 0..rows_per_bin {
            delay.push((j as f64 + 0.02 + 0.96 * next()) / nb as f64);
        }
    }
    delay[0] = 0.0;
    delay[rows - 1] = 1.0;
    let lags: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..rows).map(|_| next() * 4.0 - 2.0).collect())
        .collect();
    let response: Vec<f64> = (0..rows).map(|_| next() * 2.0 - 1.0).collect();
    LaggedDesign::from_parts(response, lags, delay).unwrap()
}

#[test]
fn criterion_4_least_squares_orthogonality() {
    let started = Instant::now();
    let mut worst_orth = 0.0f64;
    let mut worst_match = 0.0f64;
    for case in 0..100u64 {
        let p = 1 + (case % 5) as usize; // up to p = 5
        let interior = (case % 5) as usize + (case as usize % 3); // up to N = 6
        let rows_per_bin = p + 3 + (case % 4) as usize;
        let design = occupied_random_design(derive_seed(&[4, case]), rows_per_bin, p, interior);
        let grid = KnotGrid::new(0.0, 1.0, interior).unwrap();
        let prefit = fit_prestep(&design, &grid).unwrap();
        let z = build_design(&design, &grid).unwrap();
        let lambda = DVector::from_column_slice(prefit.lambda());
        let y = DVector::from_column_slice(design.response());
        let r = &y - &z * &lambda;
        let zt_r = z.transpose() * &r;
        let bound = 1e-8 * z.norm() * r.norm();
        let orth = zt_r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(orth <= bound.max(1e-14), "case {case}: |Z'r| = {orth:e} > {bound:e}");
        worst_orth = worst_orth.max(if bound > 0.0 { orth / bound } else { 0.0 });

        let params = p * grid.basis_count();
        if params <= 50 {
            let oracle = normal_equations_oracle(&z, design.response());
            for (got, want) in prefit.lambda().iter().zip(&oracle) {
                let err = (got - want).abs() / want.abs().max(1.0);
                assert!(err <= 1e-10, "case {case}: {got} vs oracle {want}");
                worst_match = worst_match.max(err);
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(
        "4 (least-squares orthogonality)",
        elapsed < 30.0,
        format!(
            "100 designs: max |Z'r| at {worst_orth:.2}x the bound, max oracle deviation {worst_match:.1e}, {elapsed:.1}s"
        ),
    );
}

// --- criterion 5: Table 1 trend reproduction -----------------------------

const STUDY_SEED: u64 = 1234;

fn p4_reports() -> &'static [EfficiencyReport] {
    static REPORTS: OnceLock<Vec<EfficiencyReport>> = OnceLock::new();
    REPORTS.get_or_init(|| {
        let mut study = StudyConfig::with_design(4, 4.5);
        study.n_values = vec![100, 1000];
        study.replications = 200;
        study.components = vec![1, 4];
        study.seed = STUDY_SEED;
        run_study(&study).expect("p=4 study completes")
    })
}

fn median_of(reports: &[EfficiencyReport], n: usize, component: usize) -> f64 {
    reports
        .iter()
        .find(|r| r.n == n && r.component == component)
        .map(|r| r.median)
        .expect("study cell present")
}

#[test]
fn criterion_5a_median_efficiency_band_at_n1000() {
    let started = Instant::now();
    let median = median_of(p4_reports(), 1000, 1);
    let elapsed = started.elapsed().as_secs_f64();
    check(
        "5a (median eff_1 at n=1000 in [0.6, 1.15])",
        (0.6..=1.15).contains(&median) && elapsed < 1200.0,
        format!("median = {median:.3} from 200 replications, seed {STUDY_SEED}, {elapsed:.0}s"),
    );
}

#[test]
fn criterion_5b_component_1_median_trend() {
    let reports = p4_reports();
    let small = median_of(reports, 100, 1);
    let large = median_of(reports, 1000, 1);
    check(
        "5b (median eff_1: n=1000 > n=100)",
        large > small,
        format!(
            "medians {small:.3} (n=100) vs {large:.3} (n=1000); inverse orientation: {:.3} vs {:.3}",
            1.0 / small,
            1.0 / large
        ),
    );
}

#[test]
fn criterion_5c_component_4_median_trend() {
    let reports = p4_reports();
    let small = median_of(reports, 100, 4);
    let large = median_of(reports, 1000, 4);
    check(
        "5c (median eff_4: n=1000 > n=100)",
        large > small,
        format!(
            "medians {small:.3} (n=100) vs {large:.3} (n=1000); inverse orientation: {:.3} vs {:.3}",
            1.0 / small,
            1.0 / large
        ),
    );
}

// --- criterion 6: high-dimension sanity -----------------------------------

fn high_dim_cells() -> &'static (Vec<EfficiencyReport>, Vec<EfficiencyReport>) {
    static CELLS: OnceLock<(Vec<EfficiencyReport>, Vec<EfficiencyReport>)> = OnceLock::new();
    CELLS.get_or_init(|| {
        let mut p10 = StudyConfig::with_design(10, 1.5);
        p10.n_values = vec![500];
        p10.replications = 50;
        p10.components = vec![1];
        p10.seed = STUDY_SEED;
        let mut p4 = StudyConfig::with_design(4, 4.5);
        p4.n_values = vec![500];
        p4.replications = 50;
        p4.components = vec![1];
        p4.seed = STUDY_SEED;
        (
            run_study(&p10).expect("p=10 study completes"),
            run_study(&p4).expect("p=4 n=500 study completes"),
        )
    })
}

#[test]
fn criterion_6a_high_dimension_completes() {
    let started = Instant::now();
    let (p10, _) = high_dim_cells();
    let redraws = p10[0].n_failed;
    let elapsed = started.elapsed().as_secs_f64();
    check(
        "6a (p=10, n=500 completes with < 20% redraws)",
        redraws * 5 < 50 && elapsed < 900.0,
        format!("{redraws}/50 replications redrawn, {elapsed:.0}s"),
    );
}

#[test]
fn criterion_6b_high_dimension_converges_slower() {
    let (p10, p4) = high_dim_cells();
    let high = p10[0].median;
    let low = p4[0].median;
    check(
        "6b (median eff_1: p=10 < p=4 at n=500)",
        high < low,
        format!(
            "medians {high:.3} (p=10) vs {low:.3} (p=4); inverse orientation: {:.3} vs {:.3}",
            1.0 / high,
            1.0 / low
        ),
    );
}

// --- criterion 7: pipeline shape ------------------------------------------

fn fcar_bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_fcar"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fcar-acc-{}-{name}", std::process::id()));
    fs::remove_dir_all(&dir).ok();
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn synthetic_quarterly_csv(path: &Path, n: usize) {
    let mut state = 4242u64;
    let mut ar = 0.0;
    let mut out = String::from("period,value\n");
    let (mut year, mut quarter) = (1960, 1);
    for t in 0..n {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let noise = (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
        ar = 0.7 * ar + 0.01 * noise;
        let value = (3.0 + 0.008 * t as f64 + 0.015 * ((t % 4) as f64 - 1.5) + ar).exp();
        out.push_str(&format!("{year}-Q{quarter},{value}\n"));
        quarter += 1;
        if quarter == 5 {
            quarter = 1;
            year += 1;
        }
    }
    fs::write(path, out).unwrap();
}

struct MseCells {
    rows: Vec<(usize, usize, Option<f64>)>,
}

impl MseCells {
    fn parse(text: &str) -> Self {
        let rows = text
            .lines()
            .skip(1)
            .map(|line| {
                let fields: Vec<&str> = line.split(',').collect();
                let mse = match fields[2] {
                    "NA" => None,
                    v => Some(v.parse().unwrap()),
                };
                (fields[0].parse().unwrap(), fields[1].parse().unwrap(), mse)
            })
            .collect();
        Self { rows }
    }

    /// Argmin with the smaller-p-then-smaller-d tie-break.
    fn best(&self) -> (usize, usize, f64) {
        let mut best: Option<(usize, usize, f64)> = None;
        for &(d, p, mse) in &self.rows {
            let Some(mse) = mse else { continue };
            let better = match best {
                None => true,
                Some((bd, bp, bm)) => mse < bm || (mse == bm && (p < bp || (p == bp && d < bd))),
            };
            if better {
                best = Some((d, p, mse));
            }
        }
        best.expect("at least one scored cell")
    }
}

#[test]
fn criterion_7_pipeline_shape() {
    let dir = tmp_dir("pipeline-shape");
    let input = dir.join("quarterly.csv");
    synthetic_quarterly_csv(&input, 217);
    let out = fcar_bin()
        .args(["pipeline", "--input"])
        .arg(&input)
        .arg("--output-dir")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let table = fs::read_to_string(dir.join("mse_table.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    let shape_ok = lines.len() == 11
        && lines[0] == "d/p,2,3,4,5,6,7,8,9,10"
        && lines[1..].iter().all(|l| l.split(',').count() == 10);

    let cells = MseCells::parse(&fs::read_to_string(dir.join("mse_cells.csv")).unwrap());
    let (bd, bp, bm) = cells.best();
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("pipeline.json")).unwrap()).unwrap();
    let argmin_ok = manifest["best_d"] == bd as u64
        && manifest["best_p"] == bp as u64
        && (manifest["sbk_mse"].as_f64().unwrap() - bm).abs() <= 1e-12 * bm.max(1.0);

    check(
        "7 (pipeline emits 10x9 table with valid argmin)",
        shape_ok && argmin_ok,
        format!(
            "table {}x{}, best cell (d={bd}, p={bp}) mse {bm:.6}",
            lines.len() - 1,
            lines[1].split(',').count() - 1
        ),
    );

    // sub-check against the published values, only when the real series is
    // supplied (FCAR_GDP_CSV)
    match std::env::var("FCAR_GDP_CSV") {
        Ok(path) if Path::new(&path).exists() => {
            let gdp_dir = tmp_dir("pipeline-gdp");
            let out = fcar_bin()
                .args(["pipeline", "--input", &path])
                .arg("--output-dir")
                .arg(&gdp_dir)
                .output()
                .unwrap();
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let summary: serde_json::Value =
                serde_json::from_str(&fs::read_to_string(gdp_dir.join("pipeline.json")).unwrap())
                    .unwrap();
            let best = (
                summary["best_d"].as_u64().unwrap(),
                summary["best_p"].as_u64().unwrap(),
            );
            let mse = summary["sbk_mse"].as_f64().unwrap();
            let (c, psi) = (
                summary["ar1_c"].as_f64().unwrap(),
                summary["ar1_psi"].as_f64().unwrap(),
            );
            let ok = best == (7, 2)
                && (mse - 0.000116).abs() <= 0.3 * 0.000116
                && (c - 0.0042).abs() <= 0.01
                && (psi - 0.8776).abs() <= 0.01;
            check(
                "7-gdp (published GDP values)",
                ok,
                format!("best = (d={}, p={}), mse = {mse:.6}, c = {c:.4}, psi = {psi:.4}", best.0, best.1),
            );
        }
        _ => {
            report(
                "7-gdp (published GDP values)",
                true,
                "SKIP: set FCAR_GDP_CSV to the quarterly GDP index series to enable",
            );
        }
    }
}

// --- criterion 8: determinism across thread counts and reruns -------------

#[test]
fn criterion_8_determinism() {
    let base = tmp_dir("determinism");
    let quarterly = base.join("quarterly.csv");
    synthetic_quarterly_csv(&quarterly, 100);

    // (name, args) for every command; estimate consumes simulate's output
    let sim_args = vec![
        "simulate", "--p", "2", "--d", "3", "--A", "0.5,-0.5", "--omega", "1.5", "--n", "100",
        "--seed", "5",
    ];
    let study_args = vec![
        "study", "--p", "2", "--n", "80,120", "--reps", "4", "--components", "1,2", "--seed",
        "99", "--omega", "1.5",
    ];
    let pipeline_args = vec![
        "pipeline", "--d-set", "1,2,3", "--p-set", "2,3", "--detrend-bandwidth", "10",
    ];

    let run_all = |threads: &str, tag: &str| -> PathBuf {
        let root = base.join(tag);
        for (name, mut args) in [
            ("simulate", sim_args.clone()),
            ("study", study_args.clone()),
            ("pipeline", pipeline_args.clone()),
        ] {
            let dir = root.join(name);
            fs::create_dir_all(&dir).unwrap();
            let mut cmd = fcar_bin();
            if name == "pipeline" {
                args.push("--input");
                args.push(quarterly.to_str().unwrap());
            }
            let out = cmd
                .args(&args)
                .arg("--threads")
                .arg(threads)
                .arg("--output-dir")
                .arg(&dir)
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "{name} --threads {threads}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
        // estimate runs on the design simulate just wrote
        let dir = root.join("estimate");
        fs::create_dir_all(&dir).unwrap();
        let out = fcar_bin()
            .args(["estimate", "--d", "3", "--p", "2", "--design"])
            .arg(root.join("simulate/design.csv"))
            .args(["--threads", threads])
            .arg("--output-dir")
            .arg(&dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        root
    };

    let reference = run_all("1", "t1");
    let mut compared_files = 0usize;
    for (threads, tag) in [("2", "t2"), ("8", "t8")] {
        let other = run_all(threads, tag);
        for command in ["simulate", "study", "pipeline", "estimate"] {
            for entry in fs::read_dir(reference.join(command)).unwrap() {
                let name = entry.unwrap().file_name();
                if name == "manifest.json" {
                    continue; // carries elapsed time and the thread count
                }
                let a = fs::read(reference.join(command).join(&name)).unwrap();
                let b = fs::read(other.join(command).join(&name)).unwrap();
                assert_eq!(a, b, "{command}/{name:?} differs between threads 1 and {threads}");
                compared_files += 1;
            }
        }
    }

    // rerun every command from its manifest and compare bytes again
    for command in ["simulate", "study", "pipeline", "estimate"] {
        let rerun_dir = base.join("rerun").join(command);
        fs::create_dir_all(&rerun_dir).unwrap();
        let out = fcar_bin()
            .args(["rerun", "--manifest"])
            .arg(reference.join(command).join("manifest.json"))
            .arg("--output-dir")
            .arg(&rerun_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        for entry in fs::read_dir(reference.join(command)).unwrap() {
            let name = entry.unwrap().file_name();
            if name == "manifest.json" {
                let a: serde_json::Value = serde_json::from_str(
                    &fs::read_to_string(reference.join(command).join(&name)).unwrap(),
                )
                .unwrap();
                let b: serde_json::Value =
                    serde_json::from_str(&fs::read_to_string(rerun_dir.join(&name)).unwrap())
                        .unwrap();
                assert_eq!(a["command"], b["command"], "{command} manifest command");
                assert_eq!(a["parameters"], b["parameters"], "{command} manifest parameters");
                assert_eq!(a["seed"], b["seed"], "{command} manifest seed");
                continue;
            }
            let a = fs::read(reference.join(command).join(&name)).unwrap();
            let b = fs::read(rerun_dir.join(&name)).unwrap();
            assert_eq!(a, b, "{command}/{name:?} differs after rerun");
            compared_files += 1;
        }
    }

    check(
        "8 (byte-identical outputs across threads 1/2/8 and reruns)",
        compared_files > 0,
        format!("{compared_files} files compared byte-for-byte"),
    );
}

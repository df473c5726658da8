//! CSV emission. All files are UTF-8 with LF line endings and `.` decimals;
//! numeric cells use shortest round-trip formatting except where a fixed
//! table layout is called for. Missing entries are written as `NA`.

use std::fs;
use std::io::Write;
use std::path::Path;

use fcar::select::{GridSearchResult, PipelineReport};
use fcar::sim::{kde_curve, EfficiencyReport};
use fcar::{LaggedDesign, TimeSeries};

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(text.as_bytes())
}

fn opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

pub fn write_design_csv(path: &Path, design: &LaggedDesign, t0: usize) -> std::io::Result<()> {
    let p = design.order();
    let mut out = String::from("t,response,delay");
    for alpha in 1..=p {
        out.push_str(&format!(",lag{alpha}"));
    }
    out.push('\n');
    for i in 0..design.rows() {
        out.push_str(&format!(
            "{},{},{}",
            t0 + i,
            design.response()[i],
            design.delay()[i]
        ));
        for alpha in 1..=p {
            out.push_str(&format!(",{}", design.lag(alpha)[i]));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_design_csv(path: &Path) -> Result<(LaggedDesign, usize), String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or("design file is empty")?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 4 || columns[0] != "t" || columns[1] != "response" || columns[2] != "delay"
    {
        return Err("design header must be t,response,delay,lag1,...".into());
    }
    let p = columns.len() - 3;
    let mut response = Vec::new();
    let mut delay = Vec::new();
    let mut lags = vec![Vec::new(); p];
    let mut first_t = None;
    for (idx, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(format!("design row {} has {} fields", idx + 2, fields.len()));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| format!("bad number {s:?} on design row {}", idx + 2))
        };
        let t: usize = fields[0]
            .parse()
            .map_err(|_| format!("bad index on design row {}", idx + 2))?;
        first_t.get_or_insert(t);
        response.push(parse(fields[1])?);
        delay.push(parse(fields[2])?);
        for (alpha, lag) in lags.iter_mut().enumerate() {
            lag.push(parse(fields[3 + alpha])?);
        }
    }
    let design = LaggedDesign::from_parts(response, lags, delay).map_err(|e| e.to_string())?;
    Ok((design, first_t.unwrap_or(1)))
}

pub fn write_samples_csv(path: &Path, reports: &[EfficiencyReport]) -> std::io::Result<()> {
    let mut out = String::from("p,n,component,replication,eff\n");
    for report in reports {
        for (rep, eff) in report.samples.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                report.p, report.n, report.component, rep, eff
            ));
        }
    }
    write_text(path, &out)
}

pub fn write_summary_csv(path: &Path, reports: &[EfficiencyReport]) -> std::io::Result<()> {
    let mut out = String::from("p,n,component,mode,median,variance,n_failed\n");
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.p, r.n, r.component, r.mode, r.median, r.variance, r.n_failed
        ));
    }
    write_text(path, &out)
}

/// One density curve per study cell, for the efficiency-distribution plots.
pub fn write_density_csvs(dir: &Path, reports: &[EfficiencyReport]) -> std::io::Result<()> {
    for r in reports {
        let (x, density) = kde_curve(&r.samples, 512);
        let mut out = String::from("x,density\n");
        for (xi, di) in x.iter().zip(&density) {
            out.push_str(&format!("{xi},{di}\n"));
        }
        let name = format!("density_p{}_n{}_c{}.csv", r.p, r.n, r.component);
        write_text(&dir.join(name), &out)?;
    }
    Ok(())
}

/// Matrix layout matching the published table: rows are `d`, columns `p`,
/// cells fixed to six decimals.
pub fn write_mse_table_csv(path: &Path, grid: &GridSearchResult) -> std::io::Result<()> {
    let mut out = String::from("d/p");
    for p in &grid.p_set {
        out.push_str(&format!(",{p}"));
    }
    out.push('\n');
    for (i, d) in grid.d_set.iter().enumerate() {
        out.push_str(&format!("{d}"));
        for j in 0..grid.p_set.len() {
            match grid.mse[i][j] {
                Some(v) => out.push_str(&format!(",{v:.6}")),
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Tidy cell-per-row layout with full precision and an extreme-value flag
/// (cell above three times the median of the non-failed cells), for the
/// level-plot style displays.
pub fn write_mse_cells_csv(path: &Path, grid: &GridSearchResult) -> std::io::Result<()> {
    let mut values: Vec<f64> = grid
        .mse
        .iter()
        .flatten()
        .filter_map(|c| *c)
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if values.is_empty() {
        f64::NAN
    } else if values.len() % 2 == 1 {
        values[values.len() / 2]
    } else {
        0.5 * (values[values.len() / 2 - 1] + values[values.len() / 2])
    };
    let mut out = String::from("d,p,mse,extreme\n");
    for (i, d) in grid.d_set.iter().enumerate() {
        for (j, p) in grid.p_set.iter().enumerate() {
            match grid.mse[i][j] {
                Some(v) => {
                    let flag = if v > 3.0 * median { 1 } else { 0 };
                    out.push_str(&format!("{d},{p},{v},{flag}\n"));
                }
                None => out.push_str(&format!("{d},{p},NA,NA\n")),
            }
        }
    }
    write_text(path, &out)
}

pub fn write_pipeline_fitted_csv(path: &Path, report: &PipelineReport) -> std::io::Result<()> {
    let mut out = String::from("t,actual,sbk_fitted,ar1_fitted\n");
    for row in &report.fitted {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.t,
            row.actual,
            opt(row.sbk),
            opt(row.ar1)
        ));
    }
    write_text(path, &out)
}

pub fn write_coefficients_csv(
    path: &Path,
    grid: &[f64],
    curves: &[Vec<Option<f64>>],
) -> std::io::Result<()> {
    let mut out = String::from("u");
    for alpha in 1..=curves.len() {
        out.push_str(&format!(",m{alpha}"));
    }
    out.push('\n');
    for (i, u) in grid.iter().enumerate() {
        out.push_str(&format!("{u}"));
        for curve in curves {
            out.push_str(&format!(",{}", opt(curve[i])));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_stages_csv(
    path: &Path,
    raw: &TimeSeries,
    report: &PipelineReport,
) -> std::io::Result<()> {
    let lag = report.params.seasonal_lag;
    let mut out = String::from("t,raw,log,trend,detrended,differenced\n");
    for t in 1..=raw.len() {
        let diff = if t > lag {
            Some(report.differenced.values()[t - lag - 1])
        } else {
            None
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t,
            raw.values()[t - 1],
            report.log.values()[t - 1],
            report.trend.values()[t - 1],
            report.detrended.values()[t - 1],
            opt(diff)
        ));
    }
    write_text(path, &out)
}

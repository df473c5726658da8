//! Degree-0 B-spline basis on equally spaced knots and least-squares
//! pre-estimation of all coefficient functions.
//!
//! The basis function for bin `J` is the indicator of `[k_J, k_{J+1})`, with
//! the rightmost interval closed at `b`. Because each delay value activates
//! exactly one basis function, the regression matrix
//! `Z = (B . X_1, ..., B . X_p)` (entrywise products of the indicator columns
//! with each lag column) is one-hot by row and the normal equations split
//! into one small least-squares problem per bin. The fit solves those blocks
//! by singular value decomposition, which matches the dense least-squares
//! minimizer and yields rank diagnostics for free.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::series::LaggedDesign;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("interval [{a}, {b}] cannot carry an equally spaced knot grid")]
    DegenerateInterval { a: f64, b: f64 },
    #[error("query {u} outside the knot range [{a}, {b}]")]
    OutOfRange { u: f64, a: f64, b: f64 },
    #[error("singular spline design: empty bins {empty_bins:?}, rank-deficient bins {degenerate_bins:?}")]
    SingularDesign {
        empty_bins: Vec<usize>,
        degenerate_bins: Vec<usize>,
    },
}

/// Equally spaced knots `a = k_0 < k_1 < ... < k_{N+1} = b` carrying `N`
/// interior knots and `N + 1` indicator basis functions.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotGrid {
    knots: Vec<f64>,
}

impl KnotGrid {
    pub fn new(a: f64, b: f64, interior: usize) -> Result<Self, SplineError> {
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(SplineError::DegenerateInterval { a, b });
        }
        let count = interior + 2;
        let width = (b - a) / (interior + 1) as f64;
        let mut knots: Vec<f64> = (0..count).map(|j| a + j as f64 * width).collect();
        knots[count - 1] = b; // pin the right endpoint exactly
        Ok(Self { knots })
    }

    pub fn a(&self) -> f64 {
        self.knots[0]
    }

    pub fn b(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Number of interior knots N.
    pub fn interior_count(&self) -> usize {
        self.knots.len() - 2
    }

    /// Number of basis functions, N + 1.
    pub fn basis_count(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

/// Knot-count rule `N_n = min(floor(c1 * n^(1/4) * ln n) + c2, floor(n / 2d))`,
/// with `c1 = c2 = 1` as the working default. The second term caps the
/// parameter count when the sample is moderate and the delay large.
pub fn choose_knot_count(n: usize, d: usize, c1: f64, c2: f64) -> usize {
    if n < 2 || d == 0 {
        return 0;
    }
    let nf = n as f64;
    let grown = (c1 * nf.powf(0.25) * nf.ln()).floor() + c2;
    let capped = (n / (2 * d)) as f64;
    grown.min(capped).max(0.0).floor() as usize
}

/// Index of the basis function active at `u`: the unique `J` with
/// `k_J <= u < k_{J+1}`, with `u = b` assigned to the last bin.
pub fn basis_eval(grid: &KnotGrid, u: f64) -> Result<usize, SplineError> {
    let (a, b) = (grid.a(), grid.b());
    if !(u >= a && u <= b) {
        return Err(SplineError::OutOfRange { u, a, b });
    }
    let last = grid.basis_count() - 1;
    let width = (b - a) / grid.basis_count() as f64;
    let mut j = (((u - a) / width).floor() as usize).min(last);
    // the arithmetic guess can land one bin off at knot boundaries
    let knots = grid.knots();
    while j > 0 && u < knots[j] {
        j -= 1;
    }
    while j < last && u >= knots[j + 1] {
        j += 1;
    }
    Ok(j)
}

/// How `fit_prestep_with` treats bins that cannot identify coefficients.
///
/// With equal-width bins running to the empirical delay extremes, a sparse
/// or empty tail bin is a routine occurrence, so individually
/// rank-deficient bins always take the minimum-norm solution (the behavior
/// of pivoting least-squares solvers) and are reported in the diagnostics.
/// The modes differ on outright failures:
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrefitMode {
    /// Reject the fit when any bin is empty, or when every occupied bin is
    /// rank deficient (degenerate lag columns).
    #[default]
    Strict,
    /// Never reject: empty bins get zero coefficients. Fitted values at the
    /// sample points are unaffected by empty bins, so this is the mode the
    /// estimation pipeline and the study harness use.
    MinimumNorm,
}

/// Result of the degree-0 spline least-squares pre-fit.
#[derive(Debug, Clone)]
pub struct SplinePrefit {
    grid: KnotGrid,
    order: usize,
    lambda: Vec<f64>,
    pre_estimates: Vec<Vec<f64>>,
    condition_estimate: f64,
    empty_bins: Vec<usize>,
    deficient_bins: Vec<usize>,
}

impl SplinePrefit {
    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    /// Model order p the fit was computed for.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Stacked coefficient vector, component-major: entry
    /// `(alpha - 1) * (N + 1) + J` is the level of component `alpha` on bin `J`.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    /// Coefficient of 1-based component `alpha` on bin `j`.
    pub fn coefficient(&self, alpha: usize, j: usize) -> f64 {
        self.lambda[(alpha - 1) * self.grid.basis_count() + j]
    }

    /// Pre-estimate `m_hat_alpha(u)` for 1-based `alpha`.
    pub fn evaluate(&self, alpha: usize, u: f64) -> Result<f64, SplineError> {
        Ok(self.coefficient(alpha, basis_eval(&self.grid, u)?))
    }

    /// Pre-estimates at the design rows, one column per component.
    pub fn pre_estimates(&self) -> &[Vec<f64>] {
        &self.pre_estimates
    }

    /// Reciprocal condition estimate of the normal-equations matrix Z'Z,
    /// assembled from the per-bin singular values. Zero when any bin is
    /// empty or rank deficient.
    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    pub fn empty_bins(&self) -> &[usize] {
        &self.empty_bins
    }

    pub fn deficient_bins(&self) -> &[usize] {
        &self.deficient_bins
    }
}

/// Dense spline regression matrix with one row per design row and
/// `p * (N + 1)` columns ordered component-major to match `lambda`.
/// Each row has exactly `p` structurally nonzero entries.
pub fn build_design(
    design: &LaggedDesign,
    grid: &KnotGrid,
) -> Result<DMatrix<f64>, SplineError> {
    let rows = design.rows();
    let p = design.order();
    let nb = grid.basis_count();
    let mut z = DMatrix::zeros(rows, p * nb);
    for i in 0..rows {
        let j = basis_eval(grid, design.delay()[i])?;
        for alpha in 1..=p {
            z[(i, (alpha - 1) * nb + j)] = design.lag(alpha)[i];
        }
    }
    Ok(z)
}

/// Strict-mode least-squares pre-fit; see [`fit_prestep_with`].
pub fn fit_prestep(
    design: &LaggedDesign,
    grid: &KnotGrid,
) -> Result<SplinePrefit, SplineError> {
    fit_prestep_with(design, grid, PrefitMode::Strict)
}

/// Least-squares pre-estimation of all coefficient functions.
///
/// Minimizes `||response - Z lambda||^2`. The one-hot basis makes the normal
/// equations block diagonal by bin, so each bin is solved independently by
/// SVD; the assembled solution equals the dense least-squares minimizer.
pub fn fit_prestep_with(
    design: &LaggedDesign,
    grid: &KnotGrid,
    mode: PrefitMode,
) -> Result<SplinePrefit, SplineError> {
    let m = design.rows();
    let p = design.order();
    let nb = grid.basis_count();

    let mut bin_of_row = Vec::with_capacity(m);
    for &u in design.delay() {
        bin_of_row.push(basis_eval(grid, u)?);
    }
    let mut rows_in_bin: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (i, &j) in bin_of_row.iter().enumerate() {
        rows_in_bin[j].push(i);
    }

    let empty_bins: Vec<usize> = (0..nb).filter(|&j| rows_in_bin[j].is_empty()).collect();
    let mut deficient_bins = Vec::new();
    let mut lambda = vec![0.0; p * nb];
    let mut sv_max = 0.0f64;
    let mut sv_min = f64::INFINITY;

    for (j, rows) in rows_in_bin.iter().enumerate() {
        if rows.is_empty() {
            sv_min = 0.0;
            continue;
        }
        let block = DMatrix::from_fn(rows.len(), p, |r, c| design.lag(c + 1)[rows[r]]);
        let rhs = DVector::from_fn(rows.len(), |r, _| design.response()[rows[r]]);
        let svd = block.svd(true, true);
        let local_max = svd.singular_values.iter().fold(0.0f64, |acc, &s| acc.max(s));
        let local_min = if rows.len() < p {
            0.0
        } else {
            svd.singular_values
                .iter()
                .fold(f64::INFINITY, |acc, &s| acc.min(s))
        };
        let eps = local_max * rows.len().max(p) as f64 * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
        if rank < p {
            deficient_bins.push(j);
        }
        sv_max = sv_max.max(local_max);
        sv_min = sv_min.min(local_min);
        let solution = svd
            .solve(&rhs, eps)
            .expect("SVD solve with computed factors cannot fail");
        for alpha0 in 0..p {
            lambda[alpha0 * nb + j] = solution[alpha0];
        }
    }

    if mode == PrefitMode::Strict {
        let occupied = nb - empty_bins.len();
        let lags_degenerate = occupied > 0 && deficient_bins.len() == occupied;
        if !empty_bins.is_empty() || lags_degenerate {
            return Err(SplineError::SingularDesign {
                empty_bins,
                degenerate_bins: deficient_bins,
            });
        }
    }

    let condition_estimate = if sv_max > 0.0 && sv_min.is_finite() {
        (sv_min / sv_max).powi(2)
    } else {
        0.0
    };
    let pre_estimates: Vec<Vec<f64>> = (0..p)
        .map(|alpha0| {
            bin_of_row
                .iter()
                .map(|&j| lambda[alpha0 * nb + j])
                .collect()
        })
        .collect();

    Ok(SplinePrefit {
        grid: grid.clone(),
        order: p,
        lambda,
        pre_estimates,
        condition_estimate,
        empty_bins,
        deficient_bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::LaggedDesign;

    #[test]
    fn knot_count_formula() {
        assert_eq!(choose_knot_count(100, 5, 1.0, 1.0), 10); // min(15, 10)
        assert_eq!(choose_knot_count(1500, 5, 1.0, 1.0), 46); // min(46, 150)
        assert_eq!(choose_knot_count(2, 1, 1.0, 0.0), 0); // min(0, 1)
    }

    #[test]
    fn knot_grid_is_equally_spaced() {
        let grid = KnotGrid::new(-1.0, 3.0, 7).unwrap();
        assert_eq!(grid.knots().len(), 9);
        assert_eq!(grid.basis_count(), 8);
        let width = 4.0 / 8.0;
        for w in grid.knots().windows(2) {
            assert!((w[1] - w[0] - width).abs() <= 1e-12 * width);
        }
        assert_eq!(grid.a(), -1.0);
        assert_eq!(grid.b(), 3.0);
    }

    #[test]
    fn knot_grid_rejects_degenerate_interval() {
        assert!(KnotGrid::new(2.0, 2.0, 0).is_err());
        assert!(KnotGrid::new(3.0, 1.0, 2).is_err());
        assert!(KnotGrid::new(f64::NAN, 1.0, 2).is_err());
    }

    #[test]
    fn basis_eval_examples() {
        let grid = KnotGrid::new(0.0, 1.0, 3).unwrap();
        assert_eq!(basis_eval(&grid, 0.3).unwrap(), 1);
        assert_eq!(basis_eval(&grid, 1.0).unwrap(), 3); // rightmost interval closed
        assert_eq!(basis_eval(&grid, 0.0).unwrap(), 0);
        assert!(basis_eval(&grid, -0.001).is_err());
        assert!(basis_eval(&grid, 1.001).is_err());
        assert!(basis_eval(&grid, f64::NAN).is_err());
    }

    #[test]
    fn basis_eval_matches_linear_scan() {
        let grid = KnotGrid::new(-2.0, 5.0, 11).unwrap();
        let knots = grid.knots();
        let last = grid.basis_count() - 1;
        for k in 0..=700 {
            let u = -2.0 + 7.0 * k as f64 / 700.0;
            let by_scan = if u >= grid.b() {
                last
            } else {
                (0..=last)
                    .find(|&j| u >= knots[j] && u < knots[j + 1])
                    .unwrap()
            };
            assert_eq!(basis_eval(&grid, u).unwrap(), by_scan, "u = {u}");
        }
        // knot boundaries belong to the right bin
        for (j, &k) in knots.iter().enumerate().take(last + 1) {
            assert_eq!(basis_eval(&grid, k).unwrap(), j);
        }
    }

    fn toy_design(response: &[f64], lags: &[&[f64]], delay: &[f64]) -> LaggedDesign {
        LaggedDesign::from_parts(
            response.to_vec(),
            lags.iter().map(|c| c.to_vec()).collect(),
            delay.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn design_matrix_degenerate_basis_is_lag_column() {
        let design = toy_design(
            &[1.0, 2.0, 3.0],
            &[&[0.5, -0.5, 2.0]],
            &[0.1, 0.5, 0.9],
        );
        let grid = KnotGrid::new(0.0, 1.0, 0).unwrap();
        let z = build_design(&design, &grid).unwrap();
        assert_eq!(z.ncols(), 1);
        assert_eq!(z.column(0).as_slice(), &[0.5, -0.5, 2.0]);
    }

    #[test]
    fn design_matrix_one_hot_placement() {
        // p = 2, N = 1: row with U in bin 0 leaves bin-1 columns zero
        let design = toy_design(
            &[1.0, 2.0],
            &[&[3.0, 4.0], &[5.0, 6.0]],
            &[0.2, 0.8],
        );
        let grid = KnotGrid::new(0.0, 1.0, 1).unwrap();
        let z = build_design(&design, &grid).unwrap();
        assert_eq!(z.row(0).iter().copied().collect::<Vec<_>>(), vec![3.0, 0.0, 5.0, 0.0]);
        assert_eq!(z.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 4.0, 0.0, 6.0]);
    }

    #[test]
    fn design_matrix_matches_brute_force() {
        let mut state = 0x12345u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let rows = 17;
        let p = 3;
        let response: Vec<f64> = (0..rows).map(|_| next() - 0.5).collect();
        let lags: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..rows).map(|_| next() * 2.0 - 1.0).collect())
            .collect();
        let delay: Vec<f64> = (0..rows).map(|_| next()).collect();
        let design = LaggedDesign::from_parts(response, lags, delay).unwrap();
        let grid = KnotGrid::new(design.a(), design.b(), 2).unwrap();
        let z = build_design(&design, &grid).unwrap();
        let nb = grid.basis_count();
        for i in 0..rows {
            let mut nonzero = 0;
            for alpha in 1..=p {
                for j in 0..nb {
                    let expected = if basis_eval(&grid, design.delay()[i]).unwrap() == j {
                        design.lag(alpha)[i]
                    } else {
                        0.0
                    };
                    assert_eq!(z[(i, (alpha - 1) * nb + j)], expected);
                    if expected != 0.0 {
                        nonzero += 1;
                    }
                }
            }
            assert_eq!(nonzero, p, "one-hot rows carry p nonzeros");
        }
    }

    /// Solve the dense normal equations (Z'Z) x = Z'y by Gaussian elimination
    /// with partial pivoting. Test oracle, independent of the SVD path.
    fn normal_equations_solve(z: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
        let n = z.ncols();
        let mut a = vec![vec![0.0; n + 1]; n];
        for r in 0..n {
            for c in 0..n {
                let mut acc = 0.0;
                for i in 0..z.nrows() {
                    acc += z[(i, r)] * z[(i, c)];
                }
                a[r][c] = acc;
            }
            let mut acc = 0.0;
            for i in 0..z.nrows() {
                acc += z[(i, r)] * y[i];
            }
            a[r][n] = acc;
        }
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, pivot);
            assert!(a[col][col].abs() > 0.0, "oracle hit a singular system");
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

    /// Stratified design on [0, 1] whose delay pins both endpoints, so a
    /// knot grid on (0, 1, `interior`) has every bin holding exactly
    /// `rows_per_bin` rows.
    fn random_fittable_design(
        seed: u64,
        rows_per_bin: usize,
        p: usize,
        interior: usize,
    ) -> LaggedDesign {
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
    fn prefit_recovers_constant_coefficient_exactly() {
        // response = 0.5 * lag with spread-out delay: every bin level is 0.5
        let mut lag = Vec::new();
        let mut delay = Vec::new();
        for i in 0..40 {
            lag.push(1.0 + (i % 7) as f64);
            delay.push(i as f64 / 39.0);
        }
        let response: Vec<f64> = lag.iter().map(|x| 0.5 * x).collect();
        let design = LaggedDesign::from_parts(response, vec![lag], delay).unwrap();
        let grid = KnotGrid::new(0.0, 1.0, 4).unwrap();
        let prefit = fit_prestep(&design, &grid).unwrap();
        for &l in prefit.lambda() {
            assert!((l - 0.5).abs() < 1e-12, "lambda = {l}");
        }
        // zero residual
        for i in 0..design.rows() {
            let fitted = prefit.pre_estimates()[0][i] * design.lag(1)[i];
            assert!((fitted - design.response()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn prefit_piecewise_constant_exact_recovery() {
        // coefficients constant within every knot interval are reproduced
        let grid = KnotGrid::new(0.0, 1.0, 3).unwrap();
        let levels1 = [0.4, -1.2, 2.0, 0.7];
        let levels2 = [-0.3, 0.9, -1.5, 0.2];
        let design = {
            let mut delay = Vec::new();
            let mut lag1 = Vec::new();
            let mut lag2 = Vec::new();
            let mut response = Vec::new();
            let mut s = 99u64;
            let mut next = move || {
                s = s.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            for j in 0..4usize {
                for _ in 0..8 {
                    let u = (j as f64 + next()) / 4.0;
                    let x1 = next() * 3.0 - 1.5;
                    let x2 = next() * 3.0 - 1.5;
                    delay.push(u.min(1.0));
                    lag1.push(x1);
                    lag2.push(x2);
                    response.push(levels1[j] * x1 + levels2[j] * x2);
                }
            }
            LaggedDesign::from_parts(response, vec![lag1, lag2], delay).unwrap()
        };
        let prefit = fit_prestep(&design, &grid).unwrap();
        for j in 0..4 {
            assert!((prefit.coefficient(1, j) - levels1[j]).abs() < 1e-8);
            assert!((prefit.coefficient(2, j) - levels2[j]).abs() < 1e-8);
        }
        for i in 0..design.rows() {
            let u = design.delay()[i];
            assert!((prefit.evaluate(1, u).unwrap() - levels1[basis_eval(&grid, u).unwrap()]).abs() < 1e-8);
        }
    }

    #[test]
    fn prefit_reports_empty_bin() {
        let design = toy_design(
            &[1.0, 2.0, 3.0, 4.0],
            &[&[1.0, 2.0, -1.0, 0.5]],
            &[0.05, 0.1, 0.9, 0.95],
        );
        let grid = KnotGrid::new(0.0, 1.0, 2).unwrap(); // middle bin [1/3, 2/3) empty
        match fit_prestep(&design, &grid) {
            Err(SplineError::SingularDesign { empty_bins, .. }) => {
                assert_eq!(empty_bins, vec![1]);
            }
            other => panic!("expected SingularDesign, got {other:?}"),
        }
        // minimum-norm mode fits anyway, with zero coefficients on the gap
        let prefit = fit_prestep_with(&design, &grid, PrefitMode::MinimumNorm).unwrap();
        assert_eq!(prefit.coefficient(1, 1), 0.0);
        assert_eq!(prefit.empty_bins(), &[1]);
        assert_eq!(prefit.condition_estimate(), 0.0);
    }

    #[test]
    fn prefit_reports_degenerate_lag_column() {
        // two collinear lag columns make every bin rank deficient
        let lag1 = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let lag2: Vec<f64> = lag1.iter().map(|x| 2.0 * x).collect();
        let design = LaggedDesign::from_parts(
            vec![0.0; 6],
            vec![lag1, lag2],
            vec![0.1, 0.2, 0.4, 0.5, 0.7, 0.9],
        )
        .unwrap();
        let grid = KnotGrid::new(0.0, 1.0, 1).unwrap();
        match fit_prestep(&design, &grid) {
            Err(SplineError::SingularDesign {
                degenerate_bins, ..
            }) => assert_eq!(degenerate_bins, vec![0, 1]),
            other => panic!("expected SingularDesign, got {other:?}"),
        }
    }

    #[test]
    fn prefit_matches_normal_equations_oracle() {
        for seed in 1..=12u64 {
            let design = random_fittable_design(seed * 7919, 6, 2, 3);
            let grid = KnotGrid::new(design.a(), design.b(), 3).unwrap();
            let prefit = fit_prestep(&design, &grid).unwrap();
            let z = build_design(&design, &grid).unwrap();
            let oracle = normal_equations_solve(&z, design.response());
            for (k, (&got, &want)) in prefit.lambda().iter().zip(&oracle).enumerate() {
                assert!(
                    (got - want).abs() <= 1e-10 * want.abs().max(1.0),
                    "seed {seed} coefficient {k}: {got} vs {want}"
                );
            }
        }
    }

    #[test]
    fn prefit_residual_is_orthogonal_to_design() {
        for seed in 1..=8u64 {
            let design = random_fittable_design(seed * 104729, 5, 3, 2);
            let grid = KnotGrid::new(design.a(), design.b(), 2).unwrap();
            let prefit = fit_prestep(&design, &grid).unwrap();
            let z = build_design(&design, &grid).unwrap();
            let lambda = DVector::from_column_slice(prefit.lambda());
            let y = DVector::from_column_slice(design.response());
            let r = &y - &z * &lambda;
            let zt_r = z.transpose() * &r;
            let bound = 1e-8 * z.norm() * r.norm();
            for v in zt_r.iter() {
                assert!(v.abs() <= bound.max(1e-14), "|Z'r| = {} > {bound}", v.abs());
            }
        }
    }

    #[test]
    fn prefit_is_permutation_equivariant() {
        let design = random_fittable_design(31337, 6, 3, 2);
        let grid = KnotGrid::new(design.a(), design.b(), 2).unwrap();
        let prefit = fit_prestep(&design, &grid).unwrap();
        let swapped = LaggedDesign::from_parts(
            design.response().to_vec(),
            vec![
                design.lag(3).to_vec(),
                design.lag(1).to_vec(),
                design.lag(2).to_vec(),
            ],
            design.delay().to_vec(),
        )
        .unwrap();
        let prefit_swapped = fit_prestep(&swapped, &grid).unwrap();
        let nb = grid.basis_count();
        for j in 0..nb {
            for (to, from) in [(1usize, 3usize), (2, 1), (3, 2)] {
                assert!(
                    (prefit_swapped.coefficient(to, j) - prefit.coefficient(from, j)).abs()
                        < 1e-10
                );
            }
        }
    }

    #[test]
    fn pre_estimates_agree_with_reevaluation() {
        let design = random_fittable_design(555, 7, 2, 2);
        let grid = KnotGrid::new(design.a(), design.b(), 2).unwrap();
        let prefit = fit_prestep(&design, &grid).unwrap();
        for alpha in 1..=2usize {
            for (i, &u) in design.delay().iter().enumerate() {
                assert_eq!(
                    prefit.pre_estimates()[alpha - 1][i],
                    prefit.evaluate(alpha, u).unwrap()
                );
            }
        }
    }
}

//! Estimating the selection (or disease) probability from the biased sample:
//! unpenalized and ℓ1-penalized logistic regression, cross-validation,
//! prevalence correction of the intercept and the two-stage screen.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{self, StatOptions};
use crate::knockoff::GaussianKnockoffSpec;
use crate::lasso::{self, Family, PathRequest, SolverOptions};
use crate::linalg;
use crate::model::sigmoid;
use crate::tilt::TiltWeight;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// Gradient sup-norm (divided by n) at which Newton iterations stop.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 500, max_halvings: 30 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub intercept: f64,
    pub coef: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

impl LogisticFit {
    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> DVector<f64> {
        (x * &self.coef).add_scalar(self.intercept)
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        self.linear_predictor(x).map(sigmoid)
    }
}

fn check_binary(y01: &DVector<f64>) -> Result<()> {
    if y01.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidParameter("response must be 0/1".into()));
    }
    let ones = y01.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 {
        return Err(Error::SingleClass(0));
    }
    if ones == y01.len() {
        return Err(Error::SingleClass(1));
    }
    Ok(())
}

/// `(1/n) Σ [log(1 + e^η) − y η]`.
fn mean_nll(eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let total: f64 = eta
        .iter()
        .zip(y.iter())
        .map(|(&e, &t)| {
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            softplus - t * e
        })
        .sum();
    total / eta.len() as f64
}

/// Mean binomial deviance of `fit` on `(x, y)`.
pub fn mean_deviance(fit: &LogisticFit, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    2.0 * mean_nll(&fit.linear_predictor(x), y)
}

/// Logistic regression with intercept. `lambda = 0` runs Newton/IRLS with
/// step halving; `lambda > 0` runs proximal-Newton coordinate descent on
/// standardized columns (λ is on that scale) and maps the coefficients back.
pub fn fit_logistic(x: &DMatrix<f64>, y01: &DVector<f64>, lambda: f64) -> Result<LogisticFit> {
    fit_logistic_with(x, y01, lambda, &LogisticOptions::default())
}

pub fn fit_logistic_with(
    x: &DMatrix<f64>,
    y01: &DVector<f64>,
    lambda: f64,
    opts: &LogisticOptions,
) -> Result<LogisticFit> {
    if x.nrows() != y01.len() {
        return Err(Error::DimensionMismatch(format!("x has {} rows, y has {}", x.nrows(), y01.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::InvalidParameter("logistic regression needs at least two rows".into()));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be finite and non-negative, got {lambda}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design".into()));
    }
    check_binary(y01)?;
    if lambda == 0.0 {
        irls(x, y01, opts)
    } else {
        let st = lasso::standardize(x);
        let grid = penalized_grid(&st.x, y01, lambda);
        let fits = penalized_path(&st, y01, &grid, opts)?;
        Ok(fits.into_iter().last().expect("grid is non-empty"))
    }
}

fn irls(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LogisticOptions) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    let nf = n as f64;
    let mut a = DMatrix::from_element(n, p + 1, 1.0);
    a.columns_mut(1, p).copy_from(x);
    let mut theta = DVector::<f64>::zeros(p + 1);
    let ybar = y.mean();
    theta[0] = (ybar / (1.0 - ybar)).ln();
    let mut eta = &a * &theta;
    let mut obj = mean_nll(&eta, y);
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let mu = eta.map(sigmoid);
        let grad = a.transpose() * (y - &mu);
        grad_norm = grad.amax() / nf;
        if grad_norm < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut aw = a.clone();
        for i in 0..n {
            let w = (mu[i] * (1.0 - mu[i])).max(1e-12);
            aw.row_mut(i).scale_mut(w);
        }
        let mut h = a.transpose() * aw;
        linalg::symmetrize(&mut h);
        let step = match linalg::cholesky(&h) {
            Ok(c) => c.solve(&grad),
            Err(_) => {
                let (hr, _) = linalg::regularize_covariance(h)?;
                linalg::cholesky(&hr)?.solve(&grad)
            }
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let cand = &theta + &step * t;
            let eta_c = &a * &cand;
            let obj_c = mean_nll(&eta_c, y);
            if obj_c <= obj {
                theta = cand;
                eta = eta_c;
                obj = obj_c;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        log::warn!("logistic IRLS stopped after {iterations} iterations, gradient {grad_norm:e}");
    }
    Ok(LogisticFit {
        intercept: theta[0],
        coef: theta.rows(1, p).into_owned(),
        converged,
        iterations,
        final_gradient_norm: grad_norm,
    })
}

/// Warm-start grid from λ_max down to `lambda` (or just `lambda` when it
/// already exceeds λ_max).
fn penalized_grid(xs: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let lmax = lasso::lambda_max(xs, y);
    if lambda >= lmax {
        return vec![lambda];
    }
    let steps = 20;
    let mut g = lasso::geometric_grid(lmax, steps, lambda / lmax);
    *g.last_mut().unwrap() = lambda;
    g
}

/// Penalized fits along a decreasing grid, returned on the original scale.
fn penalized_path(
    st: &lasso::Standardized,
    y: &DVector<f64>,
    grid: &[f64],
    opts: &LogisticOptions,
) -> Result<Vec<LogisticFit>> {
    let p = st.x.ncols();
    let order: Vec<usize> = (0..p).collect();
    let solver = SolverOptions { tol: opts.tol * 1e-2, max_outer: opts.max_iter, ..SolverOptions::default() };
    let path = lasso::fit_path(&PathRequest {
        xs: &st.x,
        y,
        family: Family::Binomial,
        lambdas: grid,
        order: &order,
        opts: solver,
        keep_coefs: true,
        stop_when_all_entered: false,
    })?;
    Ok(path
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &lam)| {
            let beta = &path.coefs[k];
            let b0 = path.intercepts[k];
            let kkt = lasso::kkt_residual(&st.x, y, Family::Binomial, lam, b0, beta);
            let coef = beta.component_div(&st.scale);
            LogisticFit {
                intercept: b0 - coef.dot(&st.center),
                coef,
                converged: kkt < opts.tol,
                iterations: path.sweeps,
                final_gradient_norm: kkt,
            }
        })
        .collect())
}

/// Default λ grid for cross-validation: geometric from λ_max over `size`
/// points down to `eps · λ_max`.
pub fn default_lambda_grid(x: &DMatrix<f64>, y01: &DVector<f64>, size: usize, eps: f64) -> Vec<f64> {
    let st = lasso::standardize(x);
    lasso::geometric_grid(lasso::lambda_max(&st.x, y01), size, eps)
}

/// λ in `grid` minimizing mean held-out deviance over `folds` random folds.
/// Ties go to the larger λ.
pub fn cross_validate_lambda<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y01: &DVector<f64>,
    grid: &[f64],
    folds: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = x.nrows();
    if folds < 2 || folds > n {
        return Err(Error::InvalidParameter(format!("need 2 <= folds <= n, got {folds} with n = {n}")));
    }
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter("lambda grid must be non-empty and positive".into()));
    }
    check_binary(y01)?;
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut fold_of = vec![0; n];
    for (k, &i) in idx.iter().enumerate() {
        fold_of[i] = k % folds;
    }
    // held-out deviance only needs coefficients to a few digits
    let opts = LogisticOptions { tol: CV_TOL, ..LogisticOptions::default() };
    let mut total = vec![0.0; sorted.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let ytr = DVector::from_iterator(train.len(), train.iter().map(|&i| y01[i]));
        let yte = DVector::from_iterator(test.len(), test.iter().map(|&i| y01[i]));
        let xte = x.select_rows(&test);
        check_binary(&ytr)?;
        let st = lasso::standardize(&x.select_rows(&train));
        let fits = penalized_path(&st, &ytr, &sorted, &opts)?;
        for (k, fit) in fits.iter().enumerate() {
            total[k] += mean_deviance(fit, &xte, &yte) * test.len() as f64;
        }
    }
    let mut best = 0;
    for k in 1..sorted.len() {
        if total[k] < total[best] {
            best = k;
        }
    }
    Ok(sorted[best])
}

const CV_TOL: f64 = 1e-4;

/// Inputs of the case-control intercept correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceAdjustment {
    pub sample_prevalence: f64,
    pub population_prevalence: f64,
}

impl PrevalenceAdjustment {
    pub fn new(sample_prevalence: f64, population_prevalence: f64) -> Result<Self> {
        let interior = |v: f64| v > 0.0 && v < 1.0;
        if !interior(sample_prevalence) || !interior(population_prevalence) {
            return Err(Error::InvalidParameter(format!(
                "prevalences must lie in (0, 1), got sample {sample_prevalence}, population {population_prevalence}"
            )));
        }
        Ok(Self { sample_prevalence, population_prevalence })
    }

    /// `log[p̂(1 − π) / (π(1 − p̂))]`, subtracted from the intercept.
    pub fn log_odds_shift(&self) -> f64 {
        let (ps, pi) = (self.sample_prevalence, self.population_prevalence);
        (ps * (1.0 - pi) / (pi * (1.0 - ps))).ln()
    }
}

/// Shift the intercept of a fit on a case-enriched sample to the population
/// prevalence. Applying it twice shifts twice.
pub fn adjust_intercept(fit: &LogisticFit, adj: &PrevalenceAdjustment) -> Result<LogisticFit> {
    let adj = PrevalenceAdjustment::new(adj.sample_prevalence, adj.population_prevalence)?;
    Ok(LogisticFit { intercept: fit.intercept - adj.log_odds_shift(), ..fit.clone() })
}

/// `[x, y]` column-wise.
pub fn design_with_response(x: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut a = DMatrix::zeros(n, p + 1);
    a.columns_mut(0, p).copy_from(x);
    a.set_column(p, y);
    a
}

/// Screen covariates for `d` with standard knockoffs at level `q` (Gaussian
/// lasso entry statistic), then fit
/// an unpenalized logistic model of `d` on the selected columns and `y`.
/// Unselected coefficients are zero; with no selection the model uses `y`
/// alone. The returned coefficients are ordered `[x…, y]`.
pub fn two_stage_selection_model<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    d01: &DVector<f64>,
    q: f64,
    knockoffs: &GaussianKnockoffSpec,
    rng: &mut R,
) -> Result<(LogisticFit, Vec<usize>)> {
    let p = x.ncols();
    let xk = knockoffs.sample(x, rng)?;
    let stats = StatOptions::default();
    let res = filter::knockoff_filter(x, &xk, d01, Family::Gaussian, &[q], &[], &stats, rng)?;
    let selected = res[0].selected.clone();
    let mut cols = selected.clone();
    let xs = x.select_columns(&cols);
    cols.push(p);
    let stage2 = fit_logistic(&design_with_response(&xs, y), d01, 0.0)?;
    let mut coef = DVector::zeros(p + 1);
    for (k, &j) in cols.iter().enumerate() {
        coef[j] = stage2.coef[k];
    }
    Ok((LogisticFit { coef, ..stage2 }, selected))
}

/// Estimated `P(D = 1 | x, y) = σ(b₀ + xᵀβ + y β_y)` used as a tilt; with
/// `d = 0` the weight is the complement.
#[derive(Debug, Clone)]
pub struct FittedSelection {
    pub fit: LogisticFit,
}

impl TiltWeight for FittedSelection {
    fn weights(&self, x: &DMatrix<f64>, y: f64, d: Option<u8>) -> Result<Vec<f64>> {
        let p = x.ncols();
        if self.fit.coef.len() != p + 1 {
            return Err(Error::DimensionMismatch(format!(
                "fit has {} coefficients, expected {} covariates plus the response",
                self.fit.coef.len(),
                p
            )));
        }
        let off = self.fit.intercept + self.fit.coef[p] * y;
        let eta = x * self.fit.coef.rows(0, p);
        Ok(eta
            .iter()
            .map(|&e| {
                let pr = sigmoid(e + off);
                if d == Some(0) { 1.0 - pr } else { pr }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knockoff::equicorrelated_spec;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream(seed, &[]);
        DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn bernoulli(eta: &DVector<f64>, seed: u64) -> DVector<f64> {
        let mut rng = stream(seed, &[]);
        eta.map(|e| f64::from(rng.random::<f64>() < sigmoid(e)))
    }

    #[test]
    fn intercept_only_mle() {
        let y = DVector::from_fn(40, |i, _| f64::from(i % 4 == 0));
        let fit = fit_logistic(&DMatrix::zeros(40, 3), &y, 0.0).unwrap();
        assert!((fit.intercept - (0.25f64 / 0.75).ln()).abs() < 1e-10);
        assert!((fit.intercept + 1.0986).abs() < 1e-4);
        assert!(fit.coef.iter().all(|&c| c.abs() < 1e-12));
        assert!(fit.converged);
    }

    #[test]
    fn antisymmetric_design_has_zero_intercept() {
        let x = gaussian(50, 2, 1);
        let y = bernoulli(&(&x * DVector::from_vec(vec![1.0, -0.5])), 2);
        let mut xx = DMatrix::zeros(100, 2);
        xx.rows_mut(0, 50).copy_from(&x);
        xx.rows_mut(50, 50).copy_from(&(-&x));
        let yy = DVector::from_fn(100, |i, _| if i < 50 { y[i] } else { 1.0 - y[i - 50] });
        let fit = fit_logistic(&xx, &yy, 0.0).unwrap();
        assert!(fit.converged);
        assert!(fit.intercept.abs() < 1e-8);
    }

    #[test]
    fn irls_gradient_condition_and_truth_recovery() {
        let x = gaussian(4000, 3, 3);
        let beta = DVector::from_vec(vec![1.0, 0.0, -0.5]);
        let y = bernoulli(&(&x * &beta).add_scalar(-0.5), 4);
        let fit = fit_logistic(&x, &y, 0.0).unwrap();
        assert!(fit.converged && fit.final_gradient_norm < 1e-8);
        let mu = fit.predict(&x);
        let grad = x.transpose() * (&y - &mu) / 4000.0;
        assert!(grad.amax() < 1e-8 && ((&y - &mu).sum() / 4000.0).abs() < 1e-8);
        assert!((&fit.coef - &beta).amax() < 0.15 && (fit.intercept + 0.5).abs() < 0.15);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let x = DMatrix::from_column_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let opts = LogisticOptions { max_iter: 3, ..LogisticOptions::default() };
        let fit = fit_logistic_with(&x, &y, 0.0, &opts).unwrap();
        assert!(!fit.converged && fit.iterations == 3);
        assert!(fit.final_gradient_norm >= 1e-8);
    }

    #[test]
    fn single_class_rejected() {
        let r = fit_logistic(&gaussian(5, 2, 5), &DVector::from_element(5, 1.0), 0.0);
        assert!(matches!(r, Err(Error::SingleClass(1))));
    }

    #[test]
    fn penalty_above_threshold_zeroes_coefficients() {
        let st = lasso::standardize(&gaussian(200, 5, 6));
        let x = st.x;
        let y = bernoulli(&(x.column(0) * 1.5), 7);
        let yc = y.add_scalar(-y.mean());
        let thresh = (x.transpose() * yc).amax() / 200.0;
        let fit = fit_logistic(&x, &y, thresh * 1.0001).unwrap();
        assert!(fit.coef.iter().all(|&c| c == 0.0));
        let ybar = y.mean();
        assert!((fit.intercept - (ybar / (1.0 - ybar)).ln()).abs() < 1e-8);
        let fit = fit_logistic(&x, &y, thresh * 0.9).unwrap();
        assert!(fit.coef[0] != 0.0);
    }

    #[test]
    fn penalized_fit_satisfies_kkt_on_standardized_scale() {
        let x = gaussian(300, 8, 8) * 3.0;
        let y = bernoulli(&(x.column(1) * 0.4 - x.column(2) * 0.3), 9);
        let lam = 0.02;
        let fit = fit_logistic(&x, &y, lam).unwrap();
        assert!(fit.converged, "kkt {}", fit.final_gradient_norm);
        let st = lasso::standardize(&x);
        let beta = fit.coef.component_mul(&st.scale);
        let b0 = fit.intercept + fit.coef.dot(&st.center);
        assert!(lasso::kkt_residual(&st.x, &y, Family::Binomial, lam, b0, &beta) < 1e-8);
    }

    #[test]
    fn prevalence_shift_examples() {
        let fit = LogisticFit { intercept: 0.3, coef: DVector::from_vec(vec![1.0]), converged: true, iterations: 1, final_gradient_norm: 0.0 };
        let same = adjust_intercept(&fit, &PrevalenceAdjustment::new(0.2, 0.2).unwrap()).unwrap();
        assert!((same.intercept - 0.3).abs() < 1e-15);
        let adj = PrevalenceAdjustment::new(0.5, 0.1).unwrap();
        assert!((adj.log_odds_shift() - 9f64.ln()).abs() < 1e-12);
        let once = adjust_intercept(&fit, &adj).unwrap();
        assert!((once.intercept - (0.3 - 2.1972)).abs() < 1e-4);
        let twice = adjust_intercept(&once, &adj).unwrap();
        assert!((twice.intercept - (0.3 - 2.0 * 9f64.ln())).abs() < 1e-12);
        assert_eq!(twice.coef, fit.coef);
        assert!(PrevalenceAdjustment::new(0.0, 0.5).is_err());
        assert!(PrevalenceAdjustment::new(0.5, 1.0).is_err());
    }

    #[test]
    fn cv_picks_large_lambda_for_noise_and_admits_a_strong_signal() {
        let x = gaussian(300, 6, 10);
        let noise = bernoulli(&DVector::zeros(300), 11);
        let grid = default_lambda_grid(&x, &noise, 15, 1e-2);
        let lam = cross_validate_lambda(&x, &noise, &grid, 5, &mut stream(12, &[])).unwrap();
        assert!(lam >= grid[3], "{lam} vs grid {grid:?}");

        let signal = bernoulli(&(x.column(0) * 2.5), 13);
        let grid = default_lambda_grid(&x, &signal, 15, 1e-2);
        let lam = cross_validate_lambda(&x, &signal, &grid, 5, &mut stream(14, &[])).unwrap();
        assert!(fit_logistic(&x, &signal, lam).unwrap().coef[0] > 0.0);
    }

    #[test]
    fn leave_one_out_returns_grid_member() {
        let x = gaussian(12, 2, 15);
        let y = DVector::from_fn(12, |i, _| f64::from(i % 3 == 0));
        let grid = [0.3, 0.1, 0.03];
        let lam = cross_validate_lambda(&x, &y, &grid, 12, &mut stream(16, &[]));
        // a leave-one-out training fold can lose a class only with ≤ 1 case
        assert!(grid.contains(&lam.unwrap()));
    }

    #[test]
    fn two_stage_model_tracks_the_true_predictor() {
        let (n, p) = (4000, 20);
        let x = gaussian(n, p, 17);
        let gamma = DVector::from_fn(p, |j, _| if j < 4 { 1.0 } else { 0.0 });
        let y = DVector::from_fn(n, |i, _| x[(i, 5)] + 0.5 * (i as f64 * 0.37).sin());
        let v = (&x * &gamma + &y * 0.8).add_scalar(-0.5);
        let d = bernoulli(&v, 18);
        let spec = equicorrelated_spec(DVector::zeros(p), DMatrix::identity(p, p)).unwrap();
        let (fit, selected) = two_stage_selection_model(&x, &y, &d, 0.25, &spec, &mut stream(19, &[])).unwrap();
        assert!((0..4).all(|j| selected.contains(&j)), "{selected:?}");
        let eta = (&x * fit.coef.rows(0, p) + &y * fit.coef[p]).add_scalar(fit.intercept);
        let (ma, mb) = (eta.mean(), v.mean());
        let cov: f64 = eta.iter().zip(v.iter()).map(|(a, b)| (a - ma) * (b - mb)).sum();
        let corr = cov / ((eta.add_scalar(-ma).norm()) * (v.add_scalar(-mb).norm()));
        assert!(corr > 0.9, "corr {corr}");
    }

    #[test]
    fn two_stage_falls_back_to_response_only() {
        let (n, p) = (400, 10);
        let x = gaussian(n, p, 20);
        let y = DVector::from_fn(n, |i, _| (i as f64).cos());
        let d = bernoulli(&DVector::zeros(n), 21);
        let spec = equicorrelated_spec(DVector::zeros(p), DMatrix::identity(p, p)).unwrap();
        let (fit, selected) = two_stage_selection_model(&x, &y, &d, 0.1, &spec, &mut stream(22, &[])).unwrap();
        assert!(selected.is_empty());
        assert!(fit.coef.rows(0, p).iter().all(|&c| c == 0.0));
    }

    #[test]
    fn fitted_selection_weights() {
        let fit = LogisticFit { intercept: -1.0, coef: DVector::from_vec(vec![0.5, 0.0, 2.0]), converged: true, iterations: 0, final_gradient_norm: 0.0 };
        let w = FittedSelection { fit };
        let x = DMatrix::from_row_slice(2, 2, &[2.0, 9.0, 0.0, 0.0]);
        let p1 = w.weights(&x, 0.5, Some(1)).unwrap();
        assert!((p1[0] - sigmoid(1.0)).abs() < 1e-15 && (p1[1] - sigmoid(0.0)).abs() < 1e-15);
        let p0 = w.weights(&x, 0.5, Some(0)).unwrap();
        assert!((p0[0] + p1[0] - 1.0).abs() < 1e-15);
    }
}

//! Pathwise coordinate descent for ℓ1-penalized least squares and logistic
//! regression on standardized columns.
//!
//! Objectives, with `x` standardized to zero mean and `‖x_j‖²/n = 1`:
//!
//! * gaussian: `(1/2n) ‖y − ȳ − Xβ‖² + λ‖β‖₁`
//! * binomial: `−(1/n) Σ [y_i η_i − log(1 + e^{η_i})] + λ‖β‖₁`, `η = b₀ + Xβ`
//!
//! The intercept is never penalized.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stop when a full sweep moves no coefficient by more than this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Outer proximal-Newton iterations per λ (binomial only).
    pub max_outer: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_sweeps: 100_000, max_outer: 100 }
    }
}

/// Column-standardized copy of a design.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub x: DMatrix<f64>,
    pub center: DVector<f64>,
    pub scale: DVector<f64>,
}

/// Center each column and scale it to `‖x_j‖²/n = 1`. Constant columns are
/// left at zero with scale 1; they can never enter a penalized fit.
pub fn standardize(x: &DMatrix<f64>) -> Standardized {
    let (n, p) = x.shape();
    let mut xs = x.clone();
    let mut center = DVector::zeros(p);
    let mut scale = DVector::from_element(p, 1.0);
    for j in 0..p {
        let mut col = xs.column_mut(j);
        let m = col.mean();
        col.add_scalar_mut(-m);
        let ss = col.norm_squared() / n as f64;
        center[j] = m;
        if ss > 1e-24 * (1.0 + m * m) {
            let sd = ss.sqrt();
            col /= sd;
            scale[j] = sd;
        } else {
            col.fill(0.0);
        }
    }
    Standardized { x: xs, center, scale }
}

/// Smallest λ at which every penalized coefficient is zero.
pub fn lambda_max(xs: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = xs.nrows() as f64;
    let ybar = y.mean();
    let r = y.add_scalar(-ybar);
    (xs.transpose() * r).amax() / n
}

/// Geometric grid from `lmax` down to `lmax · eps`.
pub fn geometric_grid(lmax: f64, size: usize, eps: f64) -> Vec<f64> {
    if size == 1 {
        return vec![lmax];
    }
    let ratio = eps.powf(1.0 / (size - 1) as f64);
    (0..size).map(|k| lmax * ratio.powi(k as i32)).collect()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Fitted path on the standardized scale.
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub intercepts: Vec<f64>,
    pub coefs: Vec<DVector<f64>>,
    /// Largest λ in the grid at which each coefficient was nonzero (0 if never).
    pub entry: Vec<f64>,
    pub sweeps: usize,
}

pub struct PathRequest<'a> {
    pub xs: &'a DMatrix<f64>,
    pub y: &'a DVector<f64>,
    pub family: Family,
    pub lambdas: &'a [f64],
    /// Coordinate visiting order.
    pub order: &'a [usize],
    pub opts: SolverOptions,
    pub keep_coefs: bool,
    /// Stop walking the grid once every column has entered.
    pub stop_when_all_entered: bool,
}

pub fn fit_path(req: &PathRequest<'_>) -> Result<LassoPath> {
    let (n, p) = req.xs.shape();
    if req.y.len() != n {
        return Err(Error::DimensionMismatch(format!("x has {n} rows, y has {}", req.y.len())));
    }
    if req.order.len() != p {
        return Err(Error::DimensionMismatch(format!("order has {} entries for {p} columns", req.order.len())));
    }
    if req.xs.iter().chain(req.y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design or response".into()));
    }
    match req.family {
        Family::Gaussian if use_gram(n, p) => Ok(GramSolver::new(req).run(req)),
        Family::Gaussian => Ok(GaussianSolver::new(req).run(req)),
        Family::Binomial => {
            if req.y.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidParameter("binomial response must be 0/1".into()));
            }
            Ok(BinomialSolver::new(req).run(req))
        }
    }
}

struct PathState {
    entry: Vec<f64>,
    entered: usize,
    out: LassoPath,
}

impl PathState {
    fn new(p: usize) -> Self {
        Self {
            entry: vec![0.0; p],
            entered: 0,
            out: LassoPath { lambdas: vec![], intercepts: vec![], coefs: vec![], entry: vec![], sweeps: 0 },
        }
    }

    fn record(&mut self, lambda: f64, b0: f64, beta: &[f64], keep: bool) {
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 && self.entry[j] == 0.0 {
                self.entry[j] = lambda;
                self.entered += 1;
            }
        }
        self.out.lambdas.push(lambda);
        self.out.intercepts.push(b0);
        if keep {
            self.out.coefs.push(DVector::from_column_slice(beta));
        }
    }

    fn finish(mut self) -> LassoPath {
        self.out.entry = self.entry;
        self.out
    }
}

struct GaussianSolver {
    ybar: f64,
    r: DVector<f64>,
    beta: Vec<f64>,
    active: Vec<bool>,
}

impl GaussianSolver {
    fn new(req: &PathRequest<'_>) -> Self {
        let p = req.xs.ncols();
        let ybar = req.y.mean();
        Self { ybar, r: req.y.add_scalar(-ybar), beta: vec![0.0; p], active: vec![false; p] }
    }

    fn update(&mut self, xs: &DMatrix<f64>, j: usize, lambda: f64, inv_n: f64) -> f64 {
        let col = xs.column(j);
        let old = self.beta[j];
        let g = col.dot(&self.r) * inv_n + old;
        let new = soft_threshold(g, lambda);
        if new != old {
            self.r.axpy(old - new, &col, 1.0);
            self.beta[j] = new;
            if new != 0.0 {
                self.active[j] = true;
            }
        }
        (new - old).abs()
    }

    fn solve(&mut self, req: &PathRequest<'_>, lambda: f64) -> usize {
        let inv_n = 1.0 / req.xs.nrows() as f64;
        let mut sweeps = 0;
        while sweeps < req.opts.max_sweeps {
            let mut delta = 0.0f64;
            for &j in req.order {
                delta = delta.max(self.update(req.xs, j, lambda, inv_n));
            }
            sweeps += 1;
            if delta < req.opts.tol {
                break;
            }
            while sweeps < req.opts.max_sweeps {
                let mut d = 0.0f64;
                for &j in req.order {
                    if self.active[j] {
                        d = d.max(self.update(req.xs, j, lambda, inv_n));
                    }
                }
                sweeps += 1;
                if d < req.opts.tol {
                    break;
                }
            }
        }
        sweeps
    }

    fn run(mut self, req: &PathRequest<'_>) -> LassoPath {
        let p = req.xs.ncols();
        let mut state = PathState::new(p);
        for &lambda in req.lambdas {
            state.out.sweeps += self.solve(req, lambda);
            state.record(lambda, self.ybar, &self.beta, req.keep_coefs);
            if req.stop_when_all_entered && state.entered == p {
                break;
            }
        }
        state.finish()
    }
}

/// Covariance updates pay `n p²` once for the Gram matrix and then `O(p)` per
/// coefficient change, against `O(n)` per coordinate visit for residual
/// updates.
fn use_gram(n: usize, p: usize) -> bool {
    p <= GRAM_MAX_COLS && p <= 4 * n
}

const GRAM_MAX_COLS: usize = 2000;

/// Gaussian coordinate descent on the Gram matrix `XᵀX/n`, tracking the
/// gradient `Xᵀr/n` instead of the residual.
struct GramSolver {
    ybar: f64,
    gram: DMatrix<f64>,
    grad: DVector<f64>,
    beta: Vec<f64>,
    active: Vec<bool>,
}

impl GramSolver {
    fn new(req: &PathRequest<'_>) -> Self {
        let (n, p) = req.xs.shape();
        let ybar = req.y.mean();
        let xt = req.xs.transpose();
        let gram = &xt * req.xs / n as f64;
        let grad = xt * req.y.add_scalar(-ybar) / n as f64;
        Self { ybar, gram, grad, beta: vec![0.0; p], active: vec![false; p] }
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let v = self.gram[(j, j)];
        if v <= 0.0 {
            return 0.0;
        }
        let old = self.beta[j];
        let new = soft_threshold(self.grad[j] + v * old, lambda) / v;
        if new != old {
            self.grad.axpy(old - new, &self.gram.column(j), 1.0);
            self.beta[j] = new;
            if new != 0.0 {
                self.active[j] = true;
            }
        }
        (new - old).abs()
    }

    fn solve(&mut self, req: &PathRequest<'_>, lambda: f64) -> usize {
        let mut sweeps = 0;
        while sweeps < req.opts.max_sweeps {
            let mut delta = 0.0f64;
            for &j in req.order {
                delta = delta.max(self.update(j, lambda));
            }
            sweeps += 1;
            if delta < req.opts.tol {
                break;
            }
            while sweeps < req.opts.max_sweeps {
                let mut d = 0.0f64;
                for &j in req.order {
                    if self.active[j] {
                        d = d.max(self.update(j, lambda));
                    }
                }
                sweeps += 1;
                if d < req.opts.tol {
                    break;
                }
            }
        }
        sweeps
    }

    fn run(mut self, req: &PathRequest<'_>) -> LassoPath {
        let p = req.xs.ncols();
        let mut state = PathState::new(p);
        for &lambda in req.lambdas {
            state.out.sweeps += self.solve(req, lambda);
            state.record(lambda, self.ybar, &self.beta, req.keep_coefs);
            if req.stop_when_all_entered && state.entered == p {
                break;
            }
        }
        state.finish()
    }
}

struct BinomialSolver {
    b0: f64,
    beta: Vec<f64>,
    eta: DVector<f64>,
    active: Vec<bool>,
}

const MIN_WEIGHT: f64 = 1e-5;

fn binomial_nll(y: &DVector<f64>, eta: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &e)| {
            // log(1 + e^η) − yη, computed stably
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            softplus - yi * e
        })
        .sum::<f64>()
        / n
}

impl BinomialSolver {
    fn new(req: &PathRequest<'_>) -> Self {
        let n = req.xs.nrows();
        let p = req.xs.ncols();
        let ybar = req.y.mean().clamp(1e-10, 1.0 - 1e-10);
        let b0 = (ybar / (1.0 - ybar)).ln();
        Self { b0, beta: vec![0.0; p], eta: DVector::from_element(n, b0), active: vec![false; p] }
    }

    fn objective(&self, y: &DVector<f64>, lambda: f64) -> f64 {
        binomial_nll(y, &self.eta) + lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn recompute_eta(&mut self, xs: &DMatrix<f64>) {
        self.eta.fill(self.b0);
        for (j, &b) in self.beta.iter().enumerate() {
            if b != 0.0 {
                self.eta.axpy(b, &xs.column(j), 1.0);
            }
        }
    }

    /// One proximal-Newton step: weighted least-squares CD around the
    /// current fit. Only the weighted working residual `w ∘ r` is tracked.
    /// Returns the number of sweeps.
    fn newton_step(&mut self, req: &PathRequest<'_>, lambda: f64) -> usize {
        let xs = req.xs;
        let (n, p) = xs.shape();
        let inv_n = 1.0 / n as f64;
        let mut w = DVector::zeros(n);
        let mut wr = DVector::zeros(n);
        for i in 0..n {
            let pr = sigmoid(self.eta[i]);
            w[i] = (pr * (1.0 - pr)).max(MIN_WEIGHT);
            wr[i] = req.y[i] - pr;
        }
        let wsum = w.sum();
        let mut xv: Vec<f64> = vec![f64::NAN; p];

        let mut update = |j: usize, beta: &mut [f64], active: &mut [bool], wr: &mut DVector<f64>| -> f64 {
            let col = xs.column(j);
            if xv[j].is_nan() {
                xv[j] = col.iter().zip(w.iter()).map(|(a, b)| a * a * b).sum::<f64>() * inv_n;
            }
            let v = xv[j];
            if v <= 0.0 {
                return 0.0;
            }
            let old = beta[j];
            let g = col.dot(wr) * inv_n + v * old;
            let new = soft_threshold(g, lambda) / v;
            if new != old {
                let d = old - new;
                for i in 0..col.len() {
                    wr[i] += d * col[i] * w[i];
                }
                beta[j] = new;
                if new != 0.0 {
                    active[j] = true;
                }
            }
            (new - old).abs() * v.sqrt()
        };

        let mut b0_shift = 0.0;
        let mut intercept = |wr: &mut DVector<f64>| -> f64 {
            let d = wr.sum() / wsum;
            wr.axpy(-d, &w, 1.0);
            b0_shift += d;
            d.abs()
        };
        let inner_tol = req.opts.tol * 0.1;
        let mut sweeps = 0;
        while sweeps < req.opts.max_sweeps {
            let mut delta = intercept(&mut wr);
            for &j in req.order {
                delta = delta.max(update(j, &mut self.beta, &mut self.active, &mut wr));
            }
            sweeps += 1;
            if delta < inner_tol {
                break;
            }
            while sweeps < req.opts.max_sweeps {
                let mut d = intercept(&mut wr);
                for &j in req.order {
                    if self.active[j] {
                        d = d.max(update(j, &mut self.beta, &mut self.active, &mut wr));
                    }
                }
                sweeps += 1;
                if d < inner_tol {
                    break;
                }
            }
        }
        self.b0 += b0_shift;
        sweeps
    }

    fn solve(&mut self, req: &PathRequest<'_>, lambda: f64) -> usize {
        let mut sweeps = 0;
        let mut obj = self.objective(req.y, lambda);
        for _ in 0..req.opts.max_outer {
            let old_b0 = self.b0;
            let old_beta = self.beta.clone();
            sweeps += self.newton_step(req, lambda);
            self.recompute_eta(req.xs);
            let mut new_obj = self.objective(req.y, lambda);
            // Step-halving safeguard for the rare non-descent step.
            let mut halvings = 0;
            while new_obj > obj + 1e-14 * obj.abs().max(1.0) && halvings < 30 {
                self.b0 = 0.5 * (self.b0 + old_b0);
                for (b, o) in self.beta.iter_mut().zip(&old_beta) {
                    *b = 0.5 * (*b + o);
                }
                self.recompute_eta(req.xs);
                new_obj = self.objective(req.y, lambda);
                halvings += 1;
            }
            let change = old_beta
                .iter()
                .zip(&self.beta)
                .map(|(a, b)| (a - b).abs())
                .fold((old_b0 - self.b0).abs(), f64::max);
            obj = new_obj;
            if change < req.opts.tol {
                break;
            }
        }
        sweeps
    }

    fn deviance_ratio(&self, y: &DVector<f64>) -> f64 {
        let ybar = y.mean();
        let null = -(ybar * ybar.ln().max(-1e300) + (1.0 - ybar) * (1.0 - ybar).ln().max(-1e300));
        1.0 - binomial_nll(y, &self.eta) / null
    }

    fn run(mut self, req: &PathRequest<'_>) -> LassoPath {
        let p = req.xs.ncols();
        let mut state = PathState::new(p);
        for &lambda in req.lambdas {
            state.out.sweeps += self.solve(req, lambda);
            state.record(lambda, self.b0, &self.beta, req.keep_coefs);
            if req.stop_when_all_entered && state.entered == p {
                break;
            }
            // Near-separation: the remaining path is not identifiable.
            if req.stop_when_all_entered && self.deviance_ratio(req.y) > 0.999 {
                break;
            }
        }
        state.finish()
    }
}

/// Maximum violation of the lasso optimality conditions at `beta` (standardized scale).
pub fn kkt_residual(
    xs: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    lambda: f64,
    intercept: f64,
    beta: &DVector<f64>,
) -> f64 {
    let n = xs.nrows() as f64;
    let eta = xs * beta;
    let resid: DVector<f64> = match family {
        Family::Gaussian => {
            let ybar = y.mean();
            DVector::from_iterator(y.len(), y.iter().zip(eta.iter()).map(|(&a, &e)| a - ybar - e))
        }
        Family::Binomial => DVector::from_iterator(
            y.len(),
            y.iter().zip(eta.iter()).map(|(&a, &e)| a - sigmoid(intercept + e)),
        ),
    };
    let grad = xs.transpose() * &resid / n;
    let mut worst = match family {
        Family::Gaussian => 0.0,
        Family::Binomial => (resid.sum() / n).abs(),
    };
    for j in 0..beta.len() {
        let v = if beta[j] != 0.0 {
            (grad[j] - lambda * beta[j].signum()).abs()
        } else {
            (grad[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, n: usize, p: usize, binary: bool) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = stream(seed, &[]);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let eta = DVector::from_fn(n, |i, _| x[(i, 0)] - 0.7 * x[(i, 1)] + 0.5 * x[(i, 2 % p)]);
        let y = if binary {
            eta.map(|e| if rng.random::<f64>() < sigmoid(e) { 1.0 } else { 0.0 })
        } else {
            eta.map(|e| e + rng.sample::<f64, _>(StandardNormal))
        };
        (standardize(&x).x, y)
    }

    fn path(xs: &DMatrix<f64>, y: &DVector<f64>, family: Family, grid: &[f64]) -> LassoPath {
        let order: Vec<usize> = (0..xs.ncols()).collect();
        fit_path(&PathRequest {
            xs,
            y,
            family,
            lambdas: grid,
            order: &order,
            opts: SolverOptions::default(),
            keep_coefs: true,
            stop_when_all_entered: false,
        })
        .unwrap()
    }

    #[test]
    fn standardize_gives_unit_columns() {
        let x = DMatrix::from_fn(10, 3, |i, j| (i * (j + 1)) as f64 + if j == 2 { 0.0 } else { 1.0 });
        let s = standardize(&x);
        for j in 0..3 {
            assert!(s.x.column(j).mean().abs() < 1e-12);
            assert!((s.x.column(j).norm_squared() / 10.0 - 1.0).abs() < 1e-12);
        }
        let c = standardize(&DMatrix::from_element(4, 1, 3.0));
        assert!(c.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grid_is_geometric() {
        let g = geometric_grid(2.0, 5, 1e-2);
        assert_eq!(g.len(), 5);
        assert!((g[4] - 0.02).abs() < 1e-12);
        assert!((g[1] / g[0] - g[2] / g[1]).abs() < 1e-12);
    }

    #[test]
    fn gaussian_path_satisfies_kkt() {
        let (xs, y) = random_problem(1, 80, 30, false);
        let grid = geometric_grid(lambda_max(&xs, &y), 40, 1e-3);
        let fit = path(&xs, &y, Family::Gaussian, &grid);
        assert!(fit.coefs[0].iter().all(|&b| b == 0.0));
        for (k, &l) in grid.iter().enumerate() {
            let res = kkt_residual(&xs, &y, Family::Gaussian, l, fit.intercepts[k], &fit.coefs[k]);
            assert!(res < 1e-6, "λ={l}: {res}");
        }
    }

    #[test]
    fn binomial_path_satisfies_kkt() {
        let (xs, y) = random_problem(2, 200, 12, true);
        let grid = geometric_grid(lambda_max(&xs, &y), 25, 1e-2);
        let fit = path(&xs, &y, Family::Binomial, &grid);
        for (k, &l) in grid.iter().enumerate() {
            let res = kkt_residual(&xs, &y, Family::Binomial, l, fit.intercepts[k], &fit.coefs[k]);
            assert!(res < 1e-6, "λ={l}: {res}");
        }
    }

    #[test]
    fn entry_is_first_nonzero_lambda() {
        let (xs, y) = random_problem(3, 100, 8, false);
        let grid = geometric_grid(lambda_max(&xs, &y), 30, 1e-3);
        let fit = path(&xs, &y, Family::Gaussian, &grid);
        for j in 0..8 {
            let first = (0..grid.len()).find(|&k| fit.coefs[k][j] != 0.0).map_or(0.0, |k| grid[k]);
            assert_eq!(fit.entry[j], first);
        }
    }

    #[test]
    fn gram_and_residual_updates_agree() {
        let (xs, y) = random_problem(4, 60, 20, false);
        let grid = geometric_grid(lambda_max(&xs, &y), 30, 1e-3);
        let order: Vec<usize> = (0..20).rev().collect();
        let req = PathRequest {
            xs: &xs,
            y: &y,
            family: Family::Gaussian,
            lambdas: &grid,
            order: &order,
            opts: SolverOptions::default(),
            keep_coefs: true,
            stop_when_all_entered: false,
        };
        assert!(use_gram(60, 20));
        let a = GramSolver::new(&req).run(&req);
        let b = GaussianSolver::new(&req).run(&req);
        for k in 0..grid.len() {
            for j in 0..20 {
                assert!((a.coefs[k][j] - b.coefs[k][j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn wide_gaussian_path_satisfies_kkt() {
        let (xs, y) = random_problem(5, 20, 100, false);
        assert!(!use_gram(20, 100));
        let grid = geometric_grid(lambda_max(&xs, &y), 20, 5e-2);
        let fit = path(&xs, &y, Family::Gaussian, &grid);
        for (k, &l) in grid.iter().enumerate() {
            let res = kkt_residual(&xs, &y, Family::Gaussian, l, fit.intercepts[k], &fit.coefs[k]);
            assert!(res < 1e-6, "λ={l}: {res}");
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let mut xs = DMatrix::zeros(3, 1);
        xs[(0, 0)] = f64::NAN;
        let y = DVector::zeros(3);
        let r = fit_path(&PathRequest {
            xs: &xs,
            y: &y,
            family: Family::Gaussian,
            lambdas: &[1.0],
            order: &[0],
            opts: SolverOptions::default(),
            keep_coefs: false,
            stop_when_all_entered: false,
        });
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}

//! Gaussian model-X knockoffs: the equicorrelated decorrelation vector and
//! the conditional sampler `X̃ | X`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, standard_normal_matrix};

/// PSD tolerance on the joint matrix `G`, relative to the largest variance.
pub const PSD_TOL: f64 = 1e-8;
/// Shrink factor applied when the equicorrelation bound binds.
pub const S_SHRINK: f64 = 1.0 - 1e-6;

/// Equicorrelated `s`: with `R` the correlation matrix of `sigma`,
/// `s_j = min(2 λ_min(R), 1) · σ_jj`.
pub fn solve_s_equicorrelation(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = sigma.nrows();
    if !sigma.is_square() || p == 0 {
        return Err(Error::DimensionMismatch(format!("sigma is {}x{}", sigma.nrows(), sigma.ncols())));
    }
    linalg::cholesky(sigma)?;
    let sd = DVector::from_iterator(p, (0..p).map(|j| sigma[(j, j)].sqrt()));
    let corr = DMatrix::from_fn(p, p, |i, j| sigma[(i, j)] / (sd[i] * sd[j]));
    let lambda_min = linalg::min_eigenvalue(&corr);
    // At the binding boundary 2Σ − S is singular; shrink to keep the
    // conditional covariance factorizable.
    let s_corr = if 2.0 * lambda_min <= 1.0 { 2.0 * lambda_min * S_SHRINK } else { 1.0 };
    Ok(DVector::from_iterator(p, (0..p).map(|j| s_corr.max(0.0) * sigma[(j, j)])))
}

/// Smallest eigenvalue of `G = [[Σ, Σ − S], [Σ − S, Σ]]`, computed from the
/// equivalent block-diagonal form `diag(2Σ − S, S)`.
pub fn joint_min_eigenvalue(sigma: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    let mut two_sigma_minus_s = sigma * 2.0;
    for j in 0..s.len() {
        two_sigma_minus_s[(j, j)] -= s[j];
    }
    let min_s = s.iter().copied().fold(f64::INFINITY, f64::min);
    linalg::min_eigenvalue(&two_sigma_minus_s).min(min_s)
}

/// Precomputed conditional law `X̃ | X ∼ N(x − S Σ⁻¹ (x − μ), 2S − S Σ⁻¹ S)`.
#[derive(Debug, Clone)]
pub struct GaussianKnockoffSpec {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub s: DVector<f64>,
    /// `diag(s) Σ⁻¹`
    pub cond_mean_map: DMatrix<f64>,
    /// Lower factor of `2 diag(s) − diag(s) Σ⁻¹ diag(s)`.
    pub cond_cov_chol: DMatrix<f64>,
}

pub fn build_spec(mu: DVector<f64>, sigma: DMatrix<f64>, s: DVector<f64>) -> Result<GaussianKnockoffSpec> {
    let p = sigma.nrows();
    if mu.len() != p || s.len() != p || !sigma.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "mu {}, sigma {}x{}, s {}",
            mu.len(),
            sigma.nrows(),
            sigma.ncols(),
            s.len()
        )));
    }
    let scale = (0..p).map(|j| sigma[(j, j)]).fold(0.0, f64::max);
    let lmin = joint_min_eigenvalue(&sigma, &s);
    if lmin < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: lmin });
    }
    let sigma_inv = linalg::inverse_spd(&sigma)?;
    let s_sigma_inv = DMatrix::from_fn(p, p, |i, j| s[i] * sigma_inv[(i, j)]);
    let mut cond_cov = DMatrix::from_fn(p, p, |i, j| -s_sigma_inv[(i, j)] * s[j]);
    for j in 0..p {
        cond_cov[(j, j)] += 2.0 * s[j];
    }
    linalg::symmetrize(&mut cond_cov);
    let cond_cov_chol = linalg::psd_cholesky(&cond_cov, 1e-10)?;
    Ok(GaussianKnockoffSpec { mu, sigma, s, cond_mean_map: s_sigma_inv, cond_cov_chol })
}

impl GaussianKnockoffSpec {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Sample knockoffs for every row of `x`.
    pub fn sample<R: Rng + ?Sized>(&self, x: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
        let means = DMatrix::from_fn(x.nrows(), self.dim(), |_, j| self.mu[j]);
        self.sample_with_means(x, &means, rng)
    }

    /// Sample knockoffs where row `i` uses `means.row(i)` in place of `μ`.
    /// The covariance structure is shared, so only the mean shift varies.
    pub fn sample_with_means<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        means: &DMatrix<f64>,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let p = self.dim();
        if x.ncols() != p || means.shape() != x.shape() {
            return Err(Error::DimensionMismatch(format!(
                "x is {}x{}, means {}x{}, spec has p = {p}",
                x.nrows(),
                x.ncols(),
                means.nrows(),
                means.ncols()
            )));
        }
        let n = x.nrows();
        if n == 0 {
            return Ok(DMatrix::zeros(0, p));
        }
        let centered = x - means;
        let z = standard_normal_matrix(n, p, rng);
        // x̃ = x − (x − μ) (SΣ⁻¹)ᵀ + z Lᵀ
        let mut out = x - centered * self.cond_mean_map.transpose();
        out += z * self.cond_cov_chol.transpose();
        Ok(out)
    }

    pub fn sample_row<R: Rng + ?Sized>(
        &self,
        x_row: &DVector<f64>,
        mean: &DVector<f64>,
        rng: &mut R,
    ) -> DVector<f64> {
        let p = self.dim();
        let z = DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)));
        x_row - &self.cond_mean_map * (x_row - mean) + &self.cond_cov_chol * z
    }
}

pub fn sample_knockoffs<R: Rng + ?Sized>(
    spec: &GaussianKnockoffSpec,
    x: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    spec.sample(x, rng)
}

/// Equicorrelated spec for a (possibly estimated) Gaussian law.
pub fn equicorrelated_spec(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<GaussianKnockoffSpec> {
    let s = solve_s_equicorrelation(&sigma)?;
    build_spec(mu, sigma, s)
}

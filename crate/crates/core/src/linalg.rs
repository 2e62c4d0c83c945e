//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

pub fn cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("cholesky failed on {}x{} matrix", a.nrows(), a.ncols()))
    })
}

pub fn inverse_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(a)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Lower-triangular factor `L` with `L Lᵀ ≈ a` for a positive semidefinite `a`.
///
/// Pivots at or below `tol · max diag` are treated as exact zeros and their
/// column is dropped, so rank-deficient inputs (including the zero matrix)
/// factor cleanly.
pub fn psd_cholesky(a: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let cutoff = tol * scale;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= cutoff {
            if d < -cutoff.max(1e-10 * scale) {
                return Err(Error::NotPositiveDefinite(format!(
                    "negative pivot {d:e} at index {j}"
                )));
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Symmetrize, then add `λ I` with `λ = 1e-6 · tr(a)/p`, escalating ×10
/// until a Cholesky factorization succeeds. Returns the matrix and the
/// ridge actually added.
pub fn regularize_covariance(mut a: DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    symmetrize(&mut a);
    let p = a.nrows();
    if p == 0 {
        return Ok((a, 0.0));
    }
    let tr = a.trace();
    if !tr.is_finite() {
        return Err(Error::NonFinite("covariance trace".into()));
    }
    let mut ridge = 1e-6 * tr.abs() / p as f64;
    if ridge == 0.0 {
        ridge = 1e-6;
    }
    for _ in 0..40 {
        let mut b = a.clone();
        for i in 0..p {
            b[(i, i)] += ridge;
        }
        if Cholesky::new(b.clone()).is_some() {
            return Ok((b, ridge));
        }
        ridge *= 10.0;
    }
    Err(Error::NotPositiveDefinite(format!(
        "no PD regularization found up to ridge {ridge:e}"
    )))
}

/// Lower-triangular factor stored by rows with exact zeros skipped, so
/// block-diagonal covariances sample in time proportional to their fill.
#[derive(Debug, Clone)]
pub struct SparseLower {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseLower {
    pub fn from_dense(l: &DMatrix<f64>) -> Self {
        let rows = (0..l.nrows())
            .map(|j| {
                (0..=j)
                    .filter_map(|k| {
                        let v = l[(j, k)];
                        (v != 0.0).then_some((k, v))
                    })
                    .collect()
            })
            .collect();
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// `out[:, j] += Σ_k L[j,k] z[:, k]` for every column.
    pub fn apply_columns(&self, z: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        for (j, row) in self.rows.iter().enumerate() {
            for &(k, v) in row {
                let zk = z.column(k);
                let mut oj = out.column_mut(j);
                oj.axpy(v, &zk, 1.0);
            }
        }
    }
}

/// Multivariate normal sampler over a fixed mean and covariance.
#[derive(Debug, Clone)]
pub struct MvnSampler {
    mean: DVector<f64>,
    factor: SparseLower,
}

impl MvnSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if mean.len() != cov.nrows() || !cov.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {}, covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        let l = cholesky(cov)?.l();
        Ok(Self { mean, factor: SparseLower::from_dense(&l) })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.dim();
        let z = standard_normal_matrix(n, p, rng);
        let mut x = DMatrix::<f64>::zeros(n, p);
        self.factor.apply_columns(&z, &mut x);
        for j in 0..p {
            let m = self.mean[j];
            if m != 0.0 {
                x.column_mut(j).add_scalar_mut(m);
            }
        }
        x
    }
}

pub fn standard_normal_matrix<R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// `Σ_k w_k (x_k − m)(x_k − m)ᵀ / Σ_k w_k` for rows `x_k` of `x`.
pub fn weighted_centered_gram(x: &DMatrix<f64>, w: &[f64], m: &DVector<f64>) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let total: f64 = w.iter().sum();
    let mut xc = x.clone();
    for j in 0..p {
        let mj = m[j];
        xc.column_mut(j).add_scalar_mut(-mj);
    }
    let mut xw = xc.clone();
    for j in 0..p {
        let mut col = xw.column_mut(j);
        for i in 0..n {
            col[i] *= w[i];
        }
    }
    let g = xc.transpose() * xw;
    g / total
}

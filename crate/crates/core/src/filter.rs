//! Knockoff feature statistics, antisymmetric scores, the knockoff(+)
//! threshold, and selection bookkeeping.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{self, Family, PathRequest, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatOptions {
    pub grid_size: usize,
    /// Smallest grid λ as a fraction of λ_max.
    pub eps: f64,
    pub solver: SolverOptions,
}

impl Default for StatOptions {
    fn default() -> Self {
        Self { grid_size: 100, eps: 1e-3, solver: SolverOptions { tol: 1e-7, ..SolverOptions::default() } }
    }
}

/// Importance of each column of `[X, X̃]`: originals first, then knockoffs.
#[derive(Debug, Clone)]
pub struct FeatureStats {
    pub z: DVector<f64>,
    pub family: Family,
    pub lambda_grid: Vec<f64>,
}

/// `z_j = sup{λ : β̂_j(λ) ≠ 0}` over a geometric λ grid.
///
/// Coordinates are visited in a random order per call so that a column and
/// its knockoff are treated symmetrically by the solver.
pub fn lasso_entry_stats<R: Rng + ?Sized>(
    x_aug: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    opts: &StatOptions,
    rng: &mut R,
) -> Result<FeatureStats> {
    if x_aug.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("x has {} rows, y has {}", x_aug.nrows(), y.len())));
    }
    if x_aug.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("augmented design or response".into()));
    }
    let xs = lasso::standardize(x_aug).x;
    let lmax = lasso::lambda_max(&xs, y);
    let lambda_grid = lasso::geometric_grid(lmax, opts.grid_size.max(1), opts.eps);
    let mut order: Vec<usize> = (0..xs.ncols()).collect();
    order.shuffle(rng);
    if lmax <= 0.0 {
        return Ok(FeatureStats { z: DVector::zeros(xs.ncols()), family, lambda_grid });
    }
    let path = lasso::fit_path(&PathRequest {
        xs: &xs,
        y,
        family,
        lambdas: &lambda_grid,
        order: &order,
        opts: opts.solver,
        keep_coefs: false,
        stop_when_all_entered: true,
    })?;
    Ok(FeatureStats { z: DVector::from_vec(path.entry), family, lambda_grid })
}

/// Concatenate `[X, X̃]` column-wise.
pub fn augment(x: &DMatrix<f64>, xk: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.shape() != xk.shape() {
        return Err(Error::DimensionMismatch(format!(
            "x is {}x{}, knockoffs are {}x{}",
            x.nrows(),
            x.ncols(),
            xk.nrows(),
            xk.ncols()
        )));
    }
    let (n, p) = x.shape();
    let mut aug = DMatrix::zeros(n, 2 * p);
    aug.columns_mut(0, p).copy_from(x);
    aug.columns_mut(p, p).copy_from(xk);
    Ok(aug)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `W_j = max(Z_j, Z_{j+p}) · sign(Z_j − Z_{j+p})`.
pub fn w_scores(z: &DVector<f64>) -> DVector<f64> {
    let p = z.len() / 2;
    DVector::from_fn(p, |j, _| z[j].max(z[j + p]) * sign(z[j] - z[j + p]))
}

/// Knockoff threshold: the smallest `t ∈ {|W_j| : W_j ≠ 0}` with
/// `(offset + #{W ≤ −t}) / #{W ≥ t} ≤ q`, or `+∞` if none exists.
/// `offset = 1` gives knockoff+.
pub fn knockoff_threshold(w: &[f64], q: f64, offset: u32) -> f64 {
    let mut mags: Vec<(f64, bool)> = w.iter().filter(|&&v| v != 0.0).map(|&v| (v.abs(), v > 0.0)).collect();
    mags.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = mags.len();
    // counts over the suffix mags[k..], i.e. entries with |W| ≥ mags[k].0
    let mut pos = mags.iter().filter(|e| e.1).count();
    let mut neg = m - pos;
    let mut k = 0;
    while k < m {
        let t = mags[k].0;
        if pos > 0 && (offset as usize + neg) as f64 / pos as f64 <= q {
            return t;
        }
        while k < m && mags[k].0 == t {
            if mags[k].1 {
                pos -= 1;
            } else {
                neg -= 1;
            }
            k += 1;
        }
    }
    f64::INFINITY
}

/// `(|S \ H₁| / max(|S|, 1), |S ∩ H₁| / max(|H₁|, 1))`.
pub fn fdp_power(selected: &[usize], truth: &[usize], _p: usize) -> (f64, f64) {
    let hits = selected.iter().filter(|j| truth.contains(j)).count();
    let false_hits = selected.len() - hits;
    (
        false_hits as f64 / selected.len().max(1) as f64,
        hits as f64 / truth.len().max(1) as f64,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffResult {
    pub w: DVector<f64>,
    pub tau: f64,
    pub selected: Vec<usize>,
    pub fdp: f64,
    pub power: f64,
}

/// Threshold `w` at level `q` with knockoff+ and score against `truth`.
pub fn select(w: &DVector<f64>, q: f64, truth: &[usize]) -> KnockoffResult {
    let tau = knockoff_threshold(w.as_slice(), q, 1);
    let selected: Vec<usize> = (0..w.len()).filter(|&j| w[j] >= tau).collect();
    let (fdp, power) = fdp_power(&selected, truth, w.len());
    KnockoffResult { w: w.clone(), tau, selected, fdp, power }
}

/// Statistics, scores and selections for one set of knockoffs at every `q`.
pub fn knockoff_filter<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    xk: &DMatrix<f64>,
    y: &DVector<f64>,
    family: Family,
    q_levels: &[f64],
    truth: &[usize],
    opts: &StatOptions,
    rng: &mut R,
) -> Result<Vec<KnockoffResult>> {
    let aug = augment(x, xk)?;
    let stats = lasso_entry_stats(&aug, y, family, opts, rng)?;
    let w = w_scores(&stats.z);
    Ok(q_levels.iter().map(|&q| select(&w, q, truth)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use proptest::prelude::*;

    /// Exhaustive evaluation of every candidate threshold.
    fn brute_threshold(w: &[f64], q: f64, offset: u32) -> f64 {
        let mut best = f64::INFINITY;
        for &c in w {
            let t = c.abs();
            if t == 0.0 {
                continue;
            }
            let neg = w.iter().filter(|&&v| v <= -t).count();
            let pos = w.iter().filter(|&&v| v >= t).count();
            if pos > 0 && (offset as usize + neg) as f64 / pos as f64 <= q && t < best {
                best = t;
            }
        }
        best
    }

    #[test]
    fn threshold_worked_example() {
        let w = [3.0, -1.0, 2.0, -2.0, 5.0];
        assert_eq!(brute_threshold(&w, 0.5, 1), 3.0);
        assert_eq!(knockoff_threshold(&w, 0.5, 1), 3.0);
        let r = select(&DVector::from_column_slice(&w), 0.5, &[0, 4]);
        assert_eq!(r.selected, vec![0, 4]);
    }

    #[test]
    fn all_negative_selects_nothing() {
        let w = [-1.0, -2.0, -0.5];
        assert_eq!(knockoff_threshold(&w, 0.9, 1), f64::INFINITY);
        assert!(select(&DVector::from_column_slice(&w), 0.9, &[]).selected.is_empty());
    }

    #[test]
    fn permissive_level_without_offset_takes_smallest_magnitude() {
        let w = [0.0, 4.0, -1.5, 0.7, -3.0, 2.0];
        let t = knockoff_threshold(&w, 1.0 - 1e-12, 0);
        assert_eq!(t, 0.7);
        assert_eq!(t, brute_threshold(&w, 1.0 - 1e-12, 0));
    }

    #[test]
    fn w_score_examples() {
        let z = DVector::from_vec(vec![2.0, 0.0, 1.0, 3.0]);
        assert_eq!(w_scores(&z), DVector::from_vec(vec![2.0, -3.0]));
        let tie = DVector::from_vec(vec![1.5, 1.5]);
        assert_eq!(w_scores(&tie)[0], 0.0);
    }

    #[test]
    fn fdp_power_examples() {
        assert_eq!(fdp_power(&[], &[1, 2], 10), (0.0, 0.0));
        assert_eq!(fdp_power(&[1, 2], &[1, 2], 10), (0.0, 1.0));
        assert_eq!(fdp_power(&[1, 2, 3, 4], &[1, 2], 10), (0.5, 1.0));
    }

    /// 16×16 Sylvester Hadamard matrix without its constant column: columns
    /// are centered, orthogonal and have unit variance.
    fn orthonormal_design() -> DMatrix<f64> {
        let mut h = DMatrix::from_element(1, 1, 1.0);
        while h.nrows() < 16 {
            let m = h.nrows();
            let mut next = DMatrix::zeros(2 * m, 2 * m);
            next.view_mut((0, 0), (m, m)).copy_from(&h);
            next.view_mut((0, m), (m, m)).copy_from(&h);
            next.view_mut((m, 0), (m, m)).copy_from(&h);
            next.view_mut((m, m), (m, m)).copy_from(&(-&h));
            h = next;
        }
        h.columns(1, 15).into_owned()
    }

    #[test]
    fn orthonormal_entry_matches_soft_threshold_closed_form() {
        let x = orthonormal_design();
        let mut rng = stream(1, &[]);
        let y = DVector::from_fn(16, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let opts = StatOptions::default();
        let stats = lasso_entry_stats(&x, &y, Family::Gaussian, &opts, &mut rng).unwrap();
        let step = stats.lambda_grid[0] / stats.lambda_grid[1];
        let yc = y.add_scalar(-y.mean());
        for j in 0..15 {
            // β̂_j(λ) = S(x_jᵀy/n, λ): nonzero exactly when λ < |x_jᵀy|/n
            let c = x.column(j).dot(&yc).abs() / 16.0;
            let z = stats.z[j];
            assert!(z < c && z * step >= c * (1.0 - 1e-9), "j={j}: z={z}, c={c}");
        }
    }

    #[test]
    fn noise_only_response_gives_small_entries() {
        let mut rng = stream(3, &[]);
        let n = 2000;
        let x = DMatrix::from_fn(n, 10, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let y = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let stats = lasso_entry_stats(&x, &y, Family::Gaussian, &StatOptions::default(), &mut rng).unwrap();
        // |x_jᵀy|/n is O(1/√n); entries cannot exceed the largest marginal
        assert!(stats.z.max() <= 4.5 / (n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn threshold_matches_brute_force(
            w in prop::collection::vec(prop_oneof![Just(0.0), -5.0f64..5.0, (-4i32..5).prop_map(|k| k as f64)], 1..40),
            q in 0.01f64..0.99,
            offset in 0u32..2,
        ) {
            prop_assert_eq!(knockoff_threshold(&w, q, offset).to_bits(), brute_threshold(&w, q, offset).to_bits());
        }

        #[test]
        fn swapping_a_pair_flips_its_score(
            z in prop::collection::vec(0.0f64..3.0, 2..20).prop_filter("even", |v| v.len() % 2 == 0),
            pick in 0usize..10,
        ) {
            let z = DVector::from_vec(z);
            let p = z.len() / 2;
            let j = pick % p;
            let mut swapped = z.clone();
            swapped.swap_rows(j, j + p);
            let (a, b) = (w_scores(&z), w_scores(&swapped));
            for k in 0..p {
                if k == j { prop_assert_eq!(a[k], -b[k]); } else { prop_assert_eq!(a[k], b[k]); }
            }
        }
    }
}

//! Tilted covariate laws `Q_y ∝ P(x) P(S = 1 | x, y)` and the knockoffs
//! sampled from them.
//!
//! Two constructions are provided. Under a Gaussian design with a
//! squared-exponential disease model and case-control sampling the tilted
//! law is exactly a two-component Gaussian mixture. Otherwise the tilted law
//! is approximated by a Gaussian matching its first two moments, which are
//! estimated by self-normalized importance sampling from the population law.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knockoff::{self, GaussianKnockoffSpec};
use crate::linalg;
use crate::model::{sigmoid, CovariateSampler, LabeledSample, SelectionModel};
use crate::rng::stream;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Quantities shared by every `y` for the exact mixture tilt.
#[derive(Debug, Clone)]
pub struct MixtureGeometry {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub sigma_inv: DMatrix<f64>,
    pub gamma_x: DVector<f64>,
    pub gamma_y: f64,
    /// `(Σ⁻¹ + γγᵀ)⁻¹`
    pub sigma_tilde: DMatrix<f64>,
    pub sigma_tilde_inv: DMatrix<f64>,
    /// `Σ̃ γ`
    pub sigma_tilde_gamma: DVector<f64>,
    /// `γᵀ Σ̃ γ`
    pub gsg_tilde: f64,
    /// `γᵀ Σ γ`
    pub gsg: f64,
    ln_det_sigma: f64,
}

impl MixtureGeometry {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, gamma_x: DVector<f64>, gamma_y: f64) -> Result<Self> {
        let p = sigma.nrows();
        if mu.len() != p || gamma_x.len() != p || !sigma.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "mu {}, sigma {}x{}, gamma_x {}",
                mu.len(),
                sigma.nrows(),
                sigma.ncols(),
                gamma_x.len()
            )));
        }
        let chol = linalg::cholesky(&sigma)?;
        let ln_det_sigma = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let sigma_inv = chol.inverse();
        let sg = &sigma * &gamma_x;
        let gsg = gamma_x.dot(&sg);
        // Sherman–Morrison: (Σ⁻¹ + γγᵀ)⁻¹ = Σ − Σγγᵀ Σ / (1 + γᵀΣγ)
        let mut sigma_tilde = &sigma - &sg * sg.transpose() / (1.0 + gsg);
        linalg::symmetrize(&mut sigma_tilde);
        let mut sigma_tilde_inv = &sigma_inv + &gamma_x * gamma_x.transpose();
        linalg::symmetrize(&mut sigma_tilde_inv);
        let sigma_tilde_gamma = &sigma_tilde * &gamma_x;
        let gsg_tilde = gamma_x.dot(&sigma_tilde_gamma);
        Ok(Self {
            mu,
            sigma,
            sigma_inv,
            gamma_x,
            gamma_y,
            sigma_tilde,
            sigma_tilde_inv,
            sigma_tilde_gamma,
            gsg_tilde,
            gsg,
            ln_det_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// `γᵀμ + γy y`: the disease-model argument at `x = μ`.
    fn offset(&self, y: f64) -> f64 {
        self.gamma_x.dot(&self.mu) + self.gamma_y * y
    }

    /// Mean of the tilted component, `μ − Σ̃ γ (γᵀμ + γy y)`; equals
    /// `−Σ̃ γy y γ` for a centered design.
    pub fn mu_tilde(&self, y: f64) -> DVector<f64> {
        &self.mu - &self.sigma_tilde_gamma * self.offset(y)
    }

    /// `ln |Σ̃| − ln |Σ| = −ln(1 + γᵀΣγ)`.
    pub fn ln_det_ratio(&self) -> f64 {
        -(1.0 + self.gsg).ln()
    }
}

/// The tilted law at one response value: a mixture of `N(μ̃, Σ̃)` and
/// `N(μ, Σ)` with unnormalized weights `w1′` and `w2` in the sense of the
/// component posterior.
#[derive(Debug, Clone)]
pub struct GaussianMixtureTilt {
    pub geometry: Arc<MixtureGeometry>,
    pub mu_tilde: DVector<f64>,
    pub w1_raw: f64,
    pub w2_raw: f64,
    /// `ln w1_raw`, kept separately since `w1_raw` can underflow.
    pub ln_w1_raw: f64,
    pub y: f64,
}

fn check_rates(rate_case: f64, rate_control: f64) -> Result<()> {
    let ok = |r: f64| r > 0.0 && r <= 1.0;
    if !ok(rate_case) || !ok(rate_control) {
        return Err(Error::InvalidParameter(format!(
            "sampling rates must lie in (0, 1], got case {rate_case}, control {rate_control}"
        )));
    }
    if rate_case < rate_control {
        return Err(Error::InvalidMixtureWeight { rate_case, rate_control });
    }
    Ok(())
}

/// Exact tilt at response `y` given the stratum sampling rates
/// `n1/N1` (cases) and `n0/N0` (controls).
pub fn exact_mixture_tilt_with(
    geometry: &Arc<MixtureGeometry>,
    y: f64,
    rate_case: f64,
    rate_control: f64,
) -> Result<GaussianMixtureTilt> {
    check_rates(rate_case, rate_control)?;
    let a = geometry.offset(y);
    let ln_w1_raw = (rate_case - rate_control).ln() + 0.5 * a * a * (geometry.gsg_tilde - 1.0);
    Ok(GaussianMixtureTilt {
        geometry: Arc::clone(geometry),
        mu_tilde: geometry.mu_tilde(y),
        w1_raw: ln_w1_raw.exp(),
        w2_raw: rate_control,
        ln_w1_raw,
        y,
    })
}

/// Exact tilt for a centered Gaussian design.
pub fn exact_mixture_tilt(
    sigma: &DMatrix<f64>,
    gamma_x: &DVector<f64>,
    gamma_y: f64,
    y: f64,
    rate_case: f64,
    rate_control: f64,
) -> Result<GaussianMixtureTilt> {
    let p = sigma.nrows();
    let geometry = Arc::new(MixtureGeometry::new(DVector::zeros(p), sigma.clone(), gamma_x.clone(), gamma_y)?);
    exact_mixture_tilt_with(&geometry, y, rate_case, rate_control)
}

fn quad_form(a: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(a * v))
}

impl GaussianMixtureTilt {
    pub fn sigma_tilde(&self) -> &DMatrix<f64> {
        &self.geometry.sigma_tilde
    }

    /// Normalized weights `(π₁, π₂)`; the tilted component carries the
    /// extra factor `(|Σ̃| / |Σ|)^{1/2}` from its Gaussian normalization.
    pub fn mixture_weights(&self) -> (f64, f64) {
        if self.w1_raw == 0.0 || self.ln_w1_raw == f64::NEG_INFINITY {
            return (0.0, 1.0);
        }
        let l1 = self.ln_w1_raw + 0.5 * self.geometry.ln_det_ratio();
        let l2 = self.w2_raw.ln();
        let pi1 = sigmoid(l1 - l2);
        (pi1, 1.0 - pi1)
    }

    /// Mean and covariance of the mixture.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (pi1, pi2) = self.mixture_weights();
        let g = &self.geometry;
        let mean = &self.mu_tilde * pi1 + &g.mu * pi2;
        let second = (&g.sigma_tilde + &self.mu_tilde * self.mu_tilde.transpose()) * pi1
            + (&g.sigma + &g.mu * g.mu.transpose()) * pi2;
        let mut cov = second - &mean * mean.transpose();
        linalg::symmetrize(&mut cov);
        (mean, cov)
    }

    /// Normalized log density of the mixture at `x`.
    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let g = &self.geometry;
        let p = g.dim() as f64;
        let (pi1, pi2) = self.mixture_weights();
        let ln_det_tilde = g.ln_det_sigma + g.ln_det_ratio();
        let l1 = pi1.ln() - 0.5 * (p * LN_2PI + ln_det_tilde + quad_form(&g.sigma_tilde_inv, &(x - &self.mu_tilde)));
        let l2 = pi2.ln() - 0.5 * (p * LN_2PI + g.ln_det_sigma + quad_form(&g.sigma_inv, &(x - &g.mu)));
        log_add_exp(l1, l2)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Probability that `x` came from the tilted component:
/// `w1′ e^{−½‖x−μ̃‖²_{Σ̃⁻¹}} / (w1′ e^{−½‖x−μ̃‖²_{Σ̃⁻¹}} + w2 e^{−½‖x−μ‖²_{Σ⁻¹}})`.
pub fn component_posterior_q1(tilt: &GaussianMixtureTilt, x_row: &DVector<f64>) -> f64 {
    if tilt.w1_raw == 0.0 && tilt.ln_w1_raw == f64::NEG_INFINITY {
        return 0.0;
    }
    if tilt.w2_raw == 0.0 {
        return 1.0;
    }
    let g = &tilt.geometry;
    let l1 = tilt.ln_w1_raw - 0.5 * quad_form(&g.sigma_tilde_inv, &(x_row - &tilt.mu_tilde));
    let l2 = tilt.w2_raw.ln() - 0.5 * quad_form(&g.sigma_inv, &(x_row - &g.mu));
    sigmoid(l1 - l2)
}

/// Knockoff samplers for both mixture components, built once per design.
#[derive(Debug, Clone)]
pub struct MixtureKnockoffSampler {
    pub geometry: Arc<MixtureGeometry>,
    /// Built on `(μ, Σ̃)`; row means are supplied per response value.
    pub tilted: GaussianKnockoffSpec,
    pub base: GaussianKnockoffSpec,
}

impl MixtureKnockoffSampler {
    pub fn new(geometry: MixtureGeometry) -> Result<Self> {
        let tilted = knockoff::equicorrelated_spec(geometry.mu.clone(), geometry.sigma_tilde.clone())?;
        let base = knockoff::equicorrelated_spec(geometry.mu.clone(), geometry.sigma.clone())?;
        Ok(Self { geometry: Arc::new(geometry), tilted, base })
    }

    /// Component posteriors for every row. Uses the closed form
    /// `logit q1 = ln((r1 − r0)/r0) − ½ (xᵀγ + γy y)²`, which is the
    /// general formula after the quadratic forms cancel.
    pub fn posteriors(&self, x: &DMatrix<f64>, y: &DVector<f64>, rate_case: f64, rate_control: f64) -> Result<Vec<f64>> {
        check_rates(rate_case, rate_control)?;
        let g = &self.geometry;
        let xg = x * &g.gamma_x;
        let ln_odds = (rate_case - rate_control).ln() - rate_control.ln();
        Ok((0..x.nrows())
            .map(|i| {
                let v = xg[i] + g.gamma_y * y[i];
                sigmoid(ln_odds - 0.5 * v * v)
            })
            .collect())
    }

    /// Exact tilted knockoffs for a case-control sample.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        rate_case: f64,
        rate_control: f64,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        let (n, p) = x.shape();
        if p != self.geometry.dim() || y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "x is {n}x{p}, y has length {}, model has p = {}",
                y.len(),
                self.geometry.dim()
            )));
        }
        let q1 = self.posteriors(x, y, rate_case, rate_control)?;
        let from_tilted: Vec<bool> = q1.iter().map(|&q| rng.random::<f64>() < q).collect();
        let rows1: Vec<usize> = (0..n).filter(|&i| from_tilted[i]).collect();
        let rows0: Vec<usize> = (0..n).filter(|&i| !from_tilted[i]).collect();
        let mut out = DMatrix::zeros(n, p);
        if !rows1.is_empty() {
            let x1 = x.select_rows(&rows1);
            let g = &self.geometry;
            let means = DMatrix::from_fn(rows1.len(), p, |r, j| {
                g.mu[j] - g.sigma_tilde_gamma[j] * g.offset(y[rows1[r]])
            });
            let k1 = self.tilted.sample_with_means(&x1, &means, rng)?;
            for (r, &i) in rows1.iter().enumerate() {
                out.row_mut(i).copy_from(&k1.row(r));
            }
        }
        if !rows0.is_empty() {
            let k0 = self.base.sample(&x.select_rows(&rows0), rng)?;
            for (r, &i) in rows0.iter().enumerate() {
                out.row_mut(i).copy_from(&k0.row(r));
            }
        }
        Ok(out)
    }
}

/// One knockoff row: pick a component with probability `q1(x)`, then sample
/// from that component's Gaussian knockoff law.
pub fn sample_mixture_knockoff<R: Rng + ?Sized>(
    tilt: &GaussianMixtureTilt,
    x_row: &DVector<f64>,
    specs: (&GaussianKnockoffSpec, &GaussianKnockoffSpec),
    rng: &mut R,
) -> DVector<f64> {
    let q1 = component_posterior_q1(tilt, x_row);
    if rng.random::<f64>() < q1 {
        specs.0.sample_row(x_row, &tilt.mu_tilde, rng)
    } else {
        specs.1.sample_row(x_row, &tilt.geometry.mu, rng)
    }
}

/// Non-negative reweighting of the covariate law at a fixed key.
pub trait TiltWeight: Sync {
    /// Weights for every row of `x` at response `y` and optional status `d`.
    fn weights(&self, x: &DMatrix<f64>, y: f64, d: Option<u8>) -> Result<Vec<f64>>;
}

/// `P(S = 1 | x, y)` when `d` is absent, otherwise `P(D = d | x, y)`.
impl TiltWeight for SelectionModel {
    fn weights(&self, x: &DMatrix<f64>, y: f64, d: Option<u8>) -> Result<Vec<f64>> {
        if x.ncols() != self.gamma_x().len() {
            return Err(Error::DimensionMismatch(format!(
                "x has {} columns, gamma_x has length {}",
                x.ncols(),
                self.gamma_x().len()
            )));
        }
        let p = self.probs_at(x, y);
        Ok(match d {
            None | Some(1) => p,
            Some(_) => p.into_iter().map(|v| 1.0 - v).collect(),
        })
    }
}

/// Selection probability of a case-control design, marginal over `D`:
/// `r0 + (r1 − r0) P(D = 1 | x, y)`.
#[derive(Debug, Clone)]
pub struct CaseControlWeight {
    pub disease: SelectionModel,
    pub rate_case: f64,
    pub rate_control: f64,
}

impl TiltWeight for CaseControlWeight {
    fn weights(&self, x: &DMatrix<f64>, y: f64, _d: Option<u8>) -> Result<Vec<f64>> {
        let p = self.disease.weights(x, y, None)?;
        Ok(p.into_iter().map(|v| self.rate_control + (self.rate_case - self.rate_control) * v).collect())
    }
}

/// Constant weight; the tilt is then the population law itself.
#[derive(Debug, Clone, Copy)]
pub struct ConstantWeight(pub f64);

impl TiltWeight for ConstantWeight {
    fn weights(&self, x: &DMatrix<f64>, _y: f64, _d: Option<u8>) -> Result<Vec<f64>> {
        Ok(vec![self.0; x.nrows()])
    }
}

/// Grouping key: a response value (after discretization) and the optional
/// case-control status.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltKey {
    pub y: f64,
    pub d: Option<u8>,
}

impl TiltKey {
    pub fn new(y: f64, d: Option<u8>) -> Self {
        // fold −0.0 into 0.0 so equal values group together
        Self { y: if y == 0.0 { 0.0 } else { y }, d }
    }

    /// Stable integer path for deriving the group's random stream.
    pub fn stream_path(&self) -> [u64; 2] {
        [self.y.to_bits(), self.d.map_or(u64::MAX, u64::from)]
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        self.y.total_cmp(&other.y).then(self.d.cmp(&other.d))
    }
}

pub const DEFAULT_ESS_MIN: f64 = 50.0;
pub const MAX_DRAWS: usize = 1_000_000;
const CHUNK_ROWS: usize = 4096;

/// Importance-sampling draws for dimension `p`: `100 p`, at least 1000 and
/// at most 10⁶.
pub fn default_draws(p: usize) -> usize {
    (100 * p).clamp(1000, MAX_DRAWS)
}

pub struct TiltSpec<'a> {
    pub base: &'a CovariateSampler,
    pub weight: &'a dyn TiltWeight,
    pub draws: usize,
    pub ess_min: f64,
}

impl<'a> TiltSpec<'a> {
    pub fn new(base: &'a CovariateSampler, weight: &'a dyn TiltWeight) -> Self {
        Self { base, weight, draws: default_draws(base.dim()), ess_min: DEFAULT_ESS_MIN }
    }
}

#[derive(Debug, Clone)]
pub struct TiltedMoments {
    pub key: TiltKey,
    pub mu_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub ess: f64,
    /// Ridge added to the diagonal of `sigma_hat`.
    pub ridge: f64,
    pub warnings: Vec<String>,
}

/// Weighted sums `Σw`, `Σw²`, `Σ w x`, `Σ w x xᵀ` over importance draws.
struct WeightedSums {
    s0: f64,
    s00: f64,
    s1: DVector<f64>,
    s2: DMatrix<f64>,
}

impl WeightedSums {
    fn new(p: usize) -> Self {
        Self { s0: 0.0, s00: 0.0, s1: DVector::zeros(p), s2: DMatrix::zeros(p, p) }
    }

    fn add(&mut self, x: &DMatrix<f64>, w: &[f64]) {
        let mut xw = x.clone();
        for j in 0..x.ncols() {
            let mut col = xw.column_mut(j);
            for (v, &wi) in col.iter_mut().zip(w) {
                *v *= wi;
            }
        }
        self.s0 += w.iter().sum::<f64>();
        self.s00 += w.iter().map(|v| v * v).sum::<f64>();
        self.s1 += xw.row_sum().transpose();
        self.s2 += x.transpose() * xw;
    }
}

/// Self-normalized importance-sampling estimate of the tilted mean and
/// covariance at `key`, drawing from the population law.
pub fn estimate_tilted_moments<R: Rng + ?Sized>(
    spec: &TiltSpec<'_>,
    key: TiltKey,
    rng: &mut R,
) -> Result<TiltedMoments> {
    if spec.draws == 0 {
        return Err(Error::InvalidParameter("importance sample size must be positive".into()));
    }
    let p = spec.base.dim();
    let mut sums = WeightedSums::new(p);
    let mut left = spec.draws;
    while left > 0 {
        let m = left.min(CHUNK_ROWS);
        let x = spec.base.sample(m, rng);
        let w = spec.weight.weights(&x, key.y, key.d)?;
        if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::NonFinite(format!("tilt weight {bad}")));
        }
        sums.add(&x, &w);
        left -= m;
    }
    if sums.s0 <= 0.0 {
        return Err(Error::DegenerateTilt(format!(
            "all {} importance weights are zero at y = {}, d = {:?}",
            spec.draws, key.y, key.d
        )));
    }
    let mu_hat = &sums.s1 / sums.s0;
    let mut second = &sums.s2 / sums.s0;
    second -= &mu_hat * mu_hat.transpose();
    let (sigma_hat, ridge) = linalg::regularize_covariance(second)?;
    let ess = sums.s0 * sums.s0 / sums.s00;
    let mut warnings = Vec::new();
    if ess < spec.ess_min {
        let msg = format!("effective sample size {ess:.1} below {} at y = {}, d = {:?}", spec.ess_min, key.y, key.d);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(TiltedMoments { key, mu_hat, sigma_hat, ess, ridge, warnings })
}

/// How the response is mapped to grouping keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YGrouping {
    /// Group on exact values; fails when there are more than `max_levels`.
    Exact { max_levels: usize },
    /// Values are kept if there are at most `bins` distinct ones; otherwise
    /// they are replaced by the midpoint of their empirical quantile bin.
    QuantileBins { bins: usize },
}

impl Default for YGrouping {
    fn default() -> Self {
        YGrouping::QuantileBins { bins: 10 }
    }
}

fn distinct_sorted(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().map(|&y| if y == 0.0 { 0.0 } else { y }).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Empirical quantile with linear interpolation between order statistics.
fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Conditioning value used for each entry of `y`.
pub fn discretize_response(y: &[f64], grouping: YGrouping) -> Result<Vec<f64>> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response".into()));
    }
    let levels = distinct_sorted(y);
    match grouping {
        YGrouping::Exact { max_levels } => {
            if levels.len() > max_levels {
                return Err(Error::ContinuousResponse { levels: levels.len() });
            }
            Ok(y.iter().map(|&v| if v == 0.0 { 0.0 } else { v }).collect())
        }
        YGrouping::QuantileBins { bins } => {
            if bins == 0 {
                return Err(Error::InvalidParameter("number of response bins must be positive".into()));
            }
            if levels.len() <= bins {
                return discretize_response(y, YGrouping::Exact { max_levels: bins });
            }
            let mut sorted = y.to_vec();
            sorted.sort_by(f64::total_cmp);
            let edges: Vec<f64> = (0..=bins).map(|k| quantile(&sorted, k as f64 / bins as f64)).collect();
            Ok(y.iter()
                .map(|&v| {
                    let k = edges[1..bins].partition_point(|&e| e <= v);
                    0.5 * (edges[k] + edges[k + 1])
                })
                .collect())
        }
    }
}

/// Summary of one group's moment estimate.
#[derive(Debug, Clone, Serialize)]
pub struct GroupDiagnostics {
    pub key: TiltKey,
    pub rows: usize,
    pub ess: f64,
    pub ridge: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SecondOrderKnockoffs {
    pub xk: DMatrix<f64>,
    pub groups: Vec<GroupDiagnostics>,
}

/// Second-order tilted knockoffs. Rows are grouped by the (discretized)
/// response and, when present, the case-control status; each group gets a
/// Gaussian knockoff law matched to the importance-sampled moments of its
/// tilt. Each group draws from its own stream keyed by the group key.
pub fn second_order_tilted_knockoffs<R: Rng + ?Sized>(
    sample: &LabeledSample,
    spec: &TiltSpec<'_>,
    grouping: YGrouping,
    rng: &mut R,
) -> Result<SecondOrderKnockoffs> {
    let (n, p) = sample.x.shape();
    if p != spec.base.dim() {
        return Err(Error::DimensionMismatch(format!("sample has p = {p}, covariate law has {}", spec.base.dim())));
    }
    let yk = discretize_response(sample.y.as_slice(), grouping)?;
    let keys: Vec<TiltKey> = (0..n).map(|i| TiltKey::new(yk[i], sample.d.as_ref().map(|d| d[i]))).collect();
    let mut unique = keys.clone();
    unique.sort_by(TiltKey::cmp_key);
    unique.dedup_by(|a, b| a.cmp_key(b) == Ordering::Equal);
    let seed: u64 = rng.random();

    let results: Vec<Result<(Vec<usize>, DMatrix<f64>, GroupDiagnostics)>> = unique
        .par_iter()
        .map(|key| {
            let rows: Vec<usize> = (0..n).filter(|&i| keys[i].cmp_key(key) == Ordering::Equal).collect();
            let mut grng = stream(seed, &key.stream_path());
            let m = estimate_tilted_moments(spec, *key, &mut grng)?;
            let ks = knockoff::equicorrelated_spec(m.mu_hat, m.sigma_hat)?;
            let xk = ks.sample(&sample.x.select_rows(&rows), &mut grng)?;
            let diag = GroupDiagnostics { key: *key, rows: rows.len(), ess: m.ess, ridge: m.ridge, warnings: m.warnings };
            Ok((rows, xk, diag))
        })
        .collect();

    let mut xk = DMatrix::zeros(n, p);
    let mut groups = Vec::with_capacity(unique.len());
    for r in results {
        let (rows, block, diag) = r?;
        for (r, &i) in rows.iter().enumerate() {
            xk.row_mut(i).copy_from(&block.row(r));
        }
        groups.push(diag);
    }
    Ok(SecondOrderKnockoffs { xk, groups })
}

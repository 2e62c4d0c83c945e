//! Conditional randomization test with a tilted resampling law.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{LabeledSample, SelectionModel};
use crate::rng::stream;
use crate::scenario::{make_scenario_with, ScenarioName, ScenarioOverrides};
use crate::tilt::{self, TiltKey, TiltSpec, TiltedMoments, YGrouping};

/// `X_j | X_{−j}` under a Gaussian law, in precision form:
/// mean `μ_j − Σ_{k≠j} Θ_jk/Θ_jj (x_k − μ_k)`, variance `1/Θ_jj`.
#[derive(Debug, Clone)]
pub struct ConditionalGaussian {
    pub j: usize,
    pub mu: DVector<f64>,
    /// `−Θ_jk/Θ_jj`, zero at `k = j`.
    pub coef: DVector<f64>,
    pub var: f64,
}

impl ConditionalGaussian {
    pub fn new(mu: &DVector<f64>, sigma: &DMatrix<f64>, j: usize) -> Result<Self> {
        let p = mu.len();
        if j >= p || sigma.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!("j = {j}, mu {p}, sigma {}x{}", sigma.nrows(), sigma.ncols())));
        }
        let theta = linalg::inverse_spd(sigma)?;
        let tjj = theta[(j, j)];
        let mut coef = DVector::from_fn(p, |k, _| -theta[(j, k)] / tjj);
        coef[j] = 0.0;
        Ok(Self { j, mu: mu.clone(), coef, var: 1.0 / tjj })
    }

    pub fn mean(&self, x_row: &[f64]) -> f64 {
        self.mu[self.j]
            + x_row.iter().zip(self.mu.iter()).zip(self.coef.iter()).map(|((x, m), c)| c * (x - m)).sum::<f64>()
    }

    /// Conditional means for every row of `x`.
    pub fn means(&self, x: &DMatrix<f64>) -> DVector<f64> {
        let shift = self.mu[self.j] - self.coef.dot(&self.mu);
        (x * &self.coef).add_scalar(shift)
    }
}

/// One draw of `X_j` given the rest of `x_row` under the Gaussian with the
/// given moments.
pub fn conditional_gaussian_draw<R: Rng + ?Sized>(
    moments: &TiltedMoments,
    x_row: &[f64],
    j: usize,
    rng: &mut R,
) -> Result<f64> {
    let c = ConditionalGaussian::new(&moments.mu_hat, &moments.sigma_hat, j)?;
    if x_row.len() != c.mu.len() {
        return Err(Error::DimensionMismatch(format!("row has length {}, law has {}", x_row.len(), c.mu.len())));
    }
    let z: f64 = rng.sample(StandardNormal);
    Ok(c.mean(x_row) + c.var.sqrt() * z)
}

/// Test statistic `T(x_j, X, y)`.
#[derive(Debug, Clone, Copy)]
pub enum CrtStatistic {
    /// `|x_jᵀ(y − ȳ)| / n`
    MarginalCovariance,
    Custom(fn(&DVector<f64>, &DMatrix<f64>, &DVector<f64>) -> f64),
}

impl CrtStatistic {
    pub fn eval(&self, xj: &DVector<f64>, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
        match self {
            Self::MarginalCovariance => {
                let ybar = y.mean();
                xj.iter().zip(y.iter()).map(|(a, b)| a * (b - ybar)).sum::<f64>().abs() / y.len() as f64
            }
            Self::Custom(f) => f(xj, x, y),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CrtConfig {
    pub j: usize,
    pub resamples: usize,
    pub statistic: CrtStatistic,
}

/// Per-row conditional laws of `X_j`: row `i` uses `laws[group[i]]`.
#[derive(Debug, Clone)]
pub struct CrtResampler {
    pub j: usize,
    pub laws: Vec<ConditionalGaussian>,
    pub group: Vec<usize>,
}

impl CrtResampler {
    /// A single population law for every row, ignoring selection.
    pub fn population(mu: &DVector<f64>, sigma: &DMatrix<f64>, j: usize, n: usize) -> Result<Self> {
        Ok(Self { j, laws: vec![ConditionalGaussian::new(mu, sigma, j)?], group: vec![0; n] })
    }

    /// Tilted laws per response group, from importance-sampled moments.
    pub fn tilted<R: Rng + ?Sized>(
        sample: &LabeledSample,
        spec: &TiltSpec<'_>,
        grouping: YGrouping,
        j: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let n = sample.n();
        let yk = tilt::discretize_response(sample.y.as_slice(), grouping)?;
        let keys: Vec<TiltKey> = (0..n).map(|i| TiltKey::new(yk[i], sample.d.as_ref().map(|d| d[i]))).collect();
        let mut unique: Vec<TiltKey> = Vec::new();
        let mut group = Vec::with_capacity(n);
        for k in &keys {
            let g = match unique.iter().position(|u| u == k) {
                Some(g) => g,
                None => {
                    unique.push(*k);
                    unique.len() - 1
                }
            };
            group.push(g);
        }
        let seed: u64 = rng.random();
        let laws = unique
            .iter()
            .map(|k| {
                let m = tilt::estimate_tilted_moments(spec, *k, &mut stream(seed, &k.stream_path()))?;
                ConditionalGaussian::new(&m.mu_hat, &m.sigma_hat, j)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { j, laws, group })
    }
}

/// `(1 + #{T^(k) ≥ T}) / (K + 1)`, resampling the whole column `K` times.
pub fn crt_pvalue<R: Rng + ?Sized>(
    sample: &LabeledSample,
    cfg: &CrtConfig,
    resampler: &CrtResampler,
    rng: &mut R,
) -> Result<f64> {
    let n = sample.n();
    if cfg.j != resampler.j || cfg.j >= sample.p() || resampler.group.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "target {} with resampler for {} over {} rows; sample is {n}x{}",
            cfg.j,
            resampler.j,
            resampler.group.len(),
            sample.p()
        )));
    }
    let xj = sample.x.column(cfg.j).into_owned();
    let t_obs = cfg.statistic.eval(&xj, &sample.x, &sample.y);
    if !t_obs.is_finite() {
        return Err(Error::NonFinite("observed CRT statistic".into()));
    }
    let law_means: Vec<DVector<f64>> = resampler.laws.iter().map(|l| l.means(&sample.x)).collect();
    let means = DVector::from_fn(n, |i, _| law_means[resampler.group[i]][i]);
    let sds: Vec<f64> = resampler.group.iter().map(|&g| resampler.laws[g].var.sqrt()).collect();
    let mut resampled = Vec::with_capacity(cfg.resamples);
    let mut col = DVector::zeros(n);
    for _ in 0..cfg.resamples {
        for i in 0..n {
            col[i] = means[i] + sds[i] * rng.sample::<f64, _>(StandardNormal);
        }
        let t = cfg.statistic.eval(&col, &sample.x, &sample.y);
        if !t.is_finite() {
            return Err(Error::NonFinite("resampled CRT statistic".into()));
        }
        resampled.push(t);
    }
    Ok(rank_pvalue(t_obs, &resampled))
}

/// Rank p-value of `t_obs` among resampled statistics; ties count against.
pub fn rank_pvalue(t_obs: f64, resampled: &[f64]) -> f64 {
    lattice_pvalue(resampled.iter().filter(|&&t| t >= t_obs).count(), resampled.len())
}

pub fn lattice_pvalue(exceed: usize, resamples: usize) -> f64 {
    (1 + exceed) as f64 / (resamples + 1) as f64
}

/// Monte Carlo calibration of the CRT on a small selected-sample design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub overrides: ScenarioOverrides,
    pub runs: usize,
    pub resamples: usize,
    pub alphas: Vec<f64>,
    pub y_bins: usize,
    pub is_draws: Option<usize>,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            overrides: small_selected_geometry(),
            runs: 500,
            resamples: 200,
            alphas: vec![0.05, 0.1],
            y_bins: 10,
            is_draws: None,
            seed: 1,
        }
    }
}

/// Twenty covariates and a pool of 1000 for the selected-sample scenario.
pub fn small_selected_geometry() -> ScenarioOverrides {
    ScenarioOverrides {
        p: Some(20),
        beta_nonnull: Some(4),
        gamma_nonnull: Some(8),
        gamma_sd: Some(1.0),
        pool_size: Some(1000),
        ..ScenarioOverrides::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub resampler: String,
    pub alpha: f64,
    pub rejection_rate: f64,
    /// Binomial standard error `√(α(1 − α)/B)` at the nominal level.
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub j: usize,
    pub resamples: usize,
    pub tilted: Vec<f64>,
    pub unadjusted: Vec<f64>,
    pub failures: usize,
    pub rows: Vec<CalibrationRow>,
}

/// Null p-values for a covariate that drives selection but not the response,
/// under the tilted and the population resampler on the same samples.
pub fn crt_calibration(cfg: &CalibrationConfig) -> Result<CalibrationReport> {
    if cfg.runs == 0 {
        return Err(Error::InvalidParameter("calibration needs at least one run".into()));
    }
    let scenario = make_scenario_with(ScenarioName::A3SecondOrder, 1.0, &cfg.overrides, &mut stream(cfg.seed, &[0]))?;
    let pop = &scenario.population;
    let beta = pop.response.beta();
    let gamma = pop.selection.gamma_x();
    let j = (0..pop.dim())
        .filter(|&k| beta[k] == 0.0)
        .max_by(|&a, &b| gamma[a].abs().total_cmp(&gamma[b].abs()))
        .ok_or_else(|| Error::InvalidParameter("no null covariate in the calibration design".into()))?;
    let (mu, sigma) = pop.covariates.moments();
    let selection: &SelectionModel = &pop.selection;
    let crt = CrtConfig { j, resamples: cfg.resamples, statistic: CrtStatistic::MarginalCovariance };
    let grouping = YGrouping::QuantileBins { bins: cfg.y_bins };

    let results: Vec<Result<(f64, f64)>> = (0..cfg.runs)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, &[1, b as u64]);
            let sample = scenario.draw(&mut rng)?;
            let mut spec = TiltSpec::new(pop.covariate_sampler(), selection);
            if let Some(k) = cfg.is_draws {
                spec.draws = k;
            }
            let tilted = CrtResampler::tilted(&sample, &spec, grouping, j, &mut rng)?;
            let plain = CrtResampler::population(&mu, &sigma, j, sample.n())?;
            let pt = crt_pvalue(&sample, &crt, &tilted, &mut rng)?;
            let pu = crt_pvalue(&sample, &crt, &plain, &mut rng)?;
            Ok((pt, pu))
        })
        .collect();
    let mut tilted_p = Vec::new();
    let mut plain_p = Vec::new();
    let mut failures = 0;
    for r in results {
        match r {
            Ok((a, b)) => {
                tilted_p.push(a);
                plain_p.push(b);
            }
            Err(e) => {
                log::warn!("calibration run failed: {e}");
                failures += 1;
            }
        }
    }
    let b = tilted_p.len().max(1) as f64;
    let mut rows = Vec::new();
    for (name, ps) in [("tilted", &tilted_p), ("unadjusted", &plain_p)] {
        for &alpha in &cfg.alphas {
            let rate = ps.iter().filter(|&&p| p <= alpha).count() as f64 / b;
            rows.push(CalibrationRow {
                resampler: name.to_string(),
                alpha,
                rejection_rate: rate,
                se: (alpha * (1.0 - alpha) / b).sqrt(),
            });
        }
    }
    Ok(CalibrationReport { j, resamples: cfg.resamples, tilted: tilted_p, unadjusted: plain_p, failures, rows })
}

//! Population, response and selection laws, and the biased samples drawn
//! from them.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, MvnSampler};

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub enum CovariateModel {
    GaussianBlock {
        mu: DVector<f64>,
        sigma: DMatrix<f64>,
    },
    /// Three-state chain along the variable index; states are coded 0, 1, 2.
    MarkovChain3 {
        transition: [[f64; 3]; 3],
        p: usize,
        centered: bool,
    },
}

impl CovariateModel {
    pub fn dim(&self) -> usize {
        match self {
            Self::GaussianBlock { mu, .. } => mu.len(),
            Self::MarkovChain3 { p, .. } => *p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::GaussianBlock { mu, sigma } => {
                if mu.is_empty() || sigma.shape() != (mu.len(), mu.len()) {
                    return Err(Error::DimensionMismatch(format!(
                        "mu has length {}, sigma is {}x{}",
                        mu.len(),
                        sigma.nrows(),
                        sigma.ncols()
                    )));
                }
                let asym = (sigma - sigma.transpose()).abs().max();
                if asym > 1e-10 * sigma.abs().max().max(1.0) {
                    return Err(Error::InvalidParameter(format!("sigma not symmetric ({asym:e})")));
                }
                linalg::cholesky(sigma).map(|_| ())
            }
            Self::MarkovChain3 { transition, p, .. } => {
                if *p == 0 {
                    return Err(Error::InvalidParameter("p must be at least 1".into()));
                }
                for row in transition {
                    let s: f64 = row.iter().sum();
                    if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (s - 1.0).abs() > 1e-12 {
                        return Err(Error::InvalidParameter(format!(
                            "transition row {row:?} is not a probability vector"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Exact mean and covariance of the covariate law.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        match self {
            Self::GaussianBlock { mu, sigma } => (mu.clone(), sigma.clone()),
            Self::MarkovChain3 { transition, p, centered } => {
                let pi = stationary_distribution(transition);
                let m = pi[1] + 2.0 * pi[2];
                let dev = Vector3::new(-m, 1.0 - m, 2.0 - m);
                let t = Matrix3::from_fn(|a, b| transition[a][b]);
                let mut lag_cov = Vec::with_capacity(*p);
                let mut power = Matrix3::<f64>::identity();
                for _ in 0..*p {
                    let mut c = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            c += pi[a] * dev[a] * power[(a, b)] * dev[b];
                        }
                    }
                    lag_cov.push(c);
                    power *= t;
                }
                let sigma = DMatrix::from_fn(*p, *p, |i, j| lag_cov[i.abs_diff(j)]);
                let mean = if *centered { 0.0 } else { m };
                (DVector::from_element(*p, mean), sigma)
            }
        }
    }

    pub fn sampler(&self) -> Result<CovariateSampler> {
        self.validate()?;
        Ok(match self {
            Self::GaussianBlock { mu, sigma } => {
                CovariateSampler::Gaussian(MvnSampler::new(mu.clone(), sigma)?)
            }
            Self::MarkovChain3 { transition, p, centered } => {
                let pi = stationary_distribution(transition);
                let offset = if *centered { pi[1] + 2.0 * pi[2] } else { 0.0 };
                CovariateSampler::Markov {
                    initial: cumulative(&[pi[0], pi[1], pi[2]]),
                    rows: [
                        cumulative(&transition[0]),
                        cumulative(&transition[1]),
                        cumulative(&transition[2]),
                    ],
                    p: *p,
                    offset,
                }
            }
        })
    }
}

fn cumulative(probs: &[f64; 3]) -> [f64; 2] {
    [probs[0], probs[0] + probs[1]]
}

/// Stationary distribution of a 3-state chain: solves `π P = π`, `Σπ = 1`.
pub fn stationary_distribution(transition: &[[f64; 3]; 3]) -> [f64; 3] {
    let mut a = Matrix3::from_fn(|i, j| transition[j][i] - if i == j { 1.0 } else { 0.0 });
    for j in 0..3 {
        a[(2, j)] = 1.0;
    }
    let b = Vector3::new(0.0, 0.0, 1.0);
    let pi = a.lu().solve(&b).unwrap_or(Vector3::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0));
    [pi[0], pi[1], pi[2]]
}

/// A covariate law prepared for repeated sampling.
#[derive(Debug, Clone)]
pub enum CovariateSampler {
    Gaussian(MvnSampler),
    Markov {
        initial: [f64; 2],
        rows: [[f64; 2]; 3],
        p: usize,
        offset: f64,
    },
}

impl CovariateSampler {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(s) => s.dim(),
            Self::Markov { p, .. } => *p,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        match self {
            Self::Gaussian(s) => s.sample(n, rng),
            Self::Markov { initial, rows, p, offset } => {
                let pick = |cum: &[f64; 2], u: f64| -> usize {
                    if u < cum[0] {
                        0
                    } else if u < cum[1] {
                        1
                    } else {
                        2
                    }
                };
                let mut x = DMatrix::<f64>::zeros(n, *p);
                for i in 0..n {
                    let mut state = pick(initial, rng.random());
                    x[(i, 0)] = state as f64 - offset;
                    for j in 1..*p {
                        state = pick(&rows[state], rng.random());
                        x[(i, j)] = state as f64 - offset;
                    }
                }
                x
            }
        }
    }
}

pub fn sample_covariates<R: Rng + ?Sized>(
    model: &CovariateModel,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    Ok(model.sampler()?.sample(n, rng))
}

#[derive(Debug, Clone)]
pub enum ResponseModel {
    LinearGaussian { beta: DVector<f64>, noise_sd: f64 },
    Logistic { beta: DVector<f64> },
}

impl ResponseModel {
    pub fn beta(&self) -> &DVector<f64> {
        match self {
            Self::LinearGaussian { beta, .. } | Self::Logistic { beta } => beta,
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Self::Logistic { .. })
    }

    fn validate(&self) -> Result<()> {
        if let Self::LinearGaussian { noise_sd, .. } = self {
            if !(*noise_sd > 0.0) {
                return Err(Error::InvalidParameter(format!("noise_sd must be positive, got {noise_sd}")));
            }
        }
        Ok(())
    }
}

pub fn sample_response<R: Rng + ?Sized>(
    model: &ResponseModel,
    x: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    model.validate()?;
    let beta = model.beta();
    if x.ncols() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} columns, beta has length {}",
            x.ncols(),
            beta.len()
        )));
    }
    let eta = x * beta;
    Ok(match model {
        ResponseModel::LinearGaussian { noise_sd, .. } => {
            eta.map(|m| m + noise_sd * rng.sample::<f64, _>(StandardNormal))
        }
        ResponseModel::Logistic { .. } => {
            eta.map(|m| if rng.random::<f64>() < sigmoid(m) { 1.0 } else { 0.0 })
        }
    })
}

#[derive(Debug, Clone)]
pub enum SelectionModel {
    /// `1 / (1 + exp(−γ0 − xᵀγx − γy·y))`
    LogisticSelection {
        gamma0: f64,
        gamma_x: DVector<f64>,
        gamma_y: f64,
    },
    /// `exp(−v²/2)` with `v = xᵀγx + γy·y`
    SquaredExponential { gamma_x: DVector<f64>, gamma_y: f64 },
}

impl SelectionModel {
    pub fn gamma_x(&self) -> &DVector<f64> {
        match self {
            Self::LogisticSelection { gamma_x, .. } | Self::SquaredExponential { gamma_x, .. } => {
                gamma_x
            }
        }
    }

    pub fn gamma_y(&self) -> f64 {
        match self {
            Self::LogisticSelection { gamma_y, .. } | Self::SquaredExponential { gamma_y, .. } => {
                *gamma_y
            }
        }
    }

    fn prob_from_xg(&self, xg: f64, y: f64) -> f64 {
        match self {
            Self::LogisticSelection { gamma0, gamma_y, .. } => sigmoid(gamma0 + xg + gamma_y * y),
            Self::SquaredExponential { gamma_y, .. } => {
                let v = xg + gamma_y * y;
                (-0.5 * v * v).exp()
            }
        }
    }

    /// `P(S = 1 | x, y)`.
    pub fn prob(&self, x_row: &[f64], y: f64) -> Result<f64> {
        let g = self.gamma_x();
        if x_row.len() != g.len() {
            return Err(Error::DimensionMismatch(format!(
                "x row has length {}, gamma_x has length {}",
                x_row.len(),
                g.len()
            )));
        }
        let xg: f64 = x_row.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        Ok(self.prob_from_xg(xg, y))
    }

    /// Row-wise `P(S = 1 | x_i, y_i)`.
    pub fn probs(&self, x: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
        let g = self.gamma_x();
        if x.ncols() != g.len() || x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "x is {}x{}, y has length {}, gamma_x has length {}",
                x.nrows(),
                x.ncols(),
                y.len(),
                g.len()
            )));
        }
        let xg = x * g;
        Ok(xg.iter().zip(y).map(|(&a, &b)| self.prob_from_xg(a, b)).collect())
    }

    /// Row-wise probabilities with a shared response value.
    pub fn probs_at(&self, x: &DMatrix<f64>, y: f64) -> Vec<f64> {
        let xg = x * self.gamma_x();
        xg.iter().map(|&a| self.prob_from_xg(a, y)).collect()
    }
}

pub fn selection_prob(model: &SelectionModel, x_row: &[f64], y: f64) -> Result<f64> {
    model.prob(x_row, y)
}

/// Generative model for `(X, Y, S)` or `(X, Y, D)`.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pub covariates: CovariateModel,
    pub response: ResponseModel,
    pub selection: SelectionModel,
    pub beta_nonnull: Vec<usize>,
    pub gamma_nonnull: Vec<usize>,
    sampler: CovariateSampler,
}

impl PopulationModel {
    pub fn new(
        covariates: CovariateModel,
        response: ResponseModel,
        selection: SelectionModel,
    ) -> Result<Self> {
        let p = covariates.dim();
        if response.beta().len() != p || selection.gamma_x().len() != p {
            return Err(Error::DimensionMismatch(format!(
                "p = {p}, beta has length {}, gamma_x has length {}",
                response.beta().len(),
                selection.gamma_x().len()
            )));
        }
        response.validate()?;
        let sampler = covariates.sampler()?;
        let support = |v: &DVector<f64>| (0..v.len()).filter(|&j| v[j] != 0.0).collect::<Vec<_>>();
        Ok(Self {
            beta_nonnull: support(response.beta()),
            gamma_nonnull: support(selection.gamma_x()),
            covariates,
            response,
            selection,
            sampler,
        })
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn covariate_sampler(&self) -> &CovariateSampler {
        &self.sampler
    }

    /// Draw `n` i.i.d. `(X, Y)` pairs plus the Bernoulli selection indicator.
    pub fn draw_pool<R: Rng + ?Sized>(
        &self,
        n: usize,
        rng: &mut R,
    ) -> Result<(DMatrix<f64>, DVector<f64>, Vec<u8>)> {
        let x = self.sampler.sample(n, rng);
        let y = sample_response(&self.response, &x, rng)?;
        let probs = self.selection.probs(&x, y.as_slice())?;
        let s = probs.iter().map(|&pr| u8::from(rng.random::<f64>() < pr)).collect();
        Ok((x, y, s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseControlDesign {
    pub n_cases: usize,
    pub n_controls: usize,
    pub pool_size: usize,
}

/// Stratum counts for a realized case-control draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaseControlCounts {
    pub n_cases: usize,
    pub n_controls: usize,
    pub pool_cases: usize,
    pub pool_controls: usize,
}

impl CaseControlCounts {
    /// Sampling rate among cases, `n1 / #{D = 1}`.
    pub fn rate_case(&self) -> f64 {
        self.n_cases as f64 / self.pool_cases as f64
    }

    /// Sampling rate among controls, `n0 / #{D = 0}`.
    pub fn rate_control(&self) -> f64 {
        self.n_controls as f64 / self.pool_controls as f64
    }

    pub fn population_prevalence(&self) -> f64 {
        self.pool_cases as f64 / (self.pool_cases + self.pool_controls) as f64
    }

    pub fn sample_prevalence(&self) -> f64 {
        self.n_cases as f64 / (self.n_cases + self.n_controls) as f64
    }
}

/// Observed rows with the ground truth needed for FDP and power.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub d: Option<Vec<u8>>,
    pub truth_beta_nonnull: Vec<usize>,
    pub truth_gamma_nonnull: Vec<usize>,
    pub case_control: Option<CaseControlCounts>,
}

impl LabeledSample {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

pub fn draw_case_control<R: Rng + ?Sized>(
    pop: &PopulationModel,
    design: &CaseControlDesign,
    rng: &mut R,
) -> Result<LabeledSample> {
    let (x, y, d) = pop.draw_pool(design.pool_size, rng)?;
    let cases: Vec<usize> = (0..d.len()).filter(|&i| d[i] == 1).collect();
    let controls: Vec<usize> = (0..d.len()).filter(|&i| d[i] == 0).collect();
    if cases.len() < design.n_cases {
        return Err(Error::InsufficientStratum {
            stratum: "cases",
            needed: design.n_cases,
            available: cases.len(),
        });
    }
    if controls.len() < design.n_controls {
        return Err(Error::InsufficientStratum {
            stratum: "controls",
            needed: design.n_controls,
            available: controls.len(),
        });
    }
    let mut rows: Vec<usize> = index::sample(rng, cases.len(), design.n_cases)
        .into_iter()
        .map(|k| cases[k])
        .chain(
            index::sample(rng, controls.len(), design.n_controls)
                .into_iter()
                .map(|k| controls[k]),
        )
        .collect();
    rows.sort_unstable();
    Ok(LabeledSample {
        x: x.select_rows(&rows),
        y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i])),
        d: Some(rows.iter().map(|&i| d[i]).collect()),
        truth_beta_nonnull: pop.beta_nonnull.clone(),
        truth_gamma_nonnull: pop.gamma_nonnull.clone(),
        case_control: Some(CaseControlCounts {
            n_cases: design.n_cases,
            n_controls: design.n_controls,
            pool_cases: cases.len(),
            pool_controls: controls.len(),
        }),
    })
}

pub fn draw_selected<R: Rng + ?Sized>(
    pop: &PopulationModel,
    n_pool: usize,
    rng: &mut R,
) -> Result<LabeledSample> {
    let (x, y, s) = pop.draw_pool(n_pool, rng)?;
    let rows: Vec<usize> = (0..n_pool).filter(|&i| s[i] == 1).collect();
    if rows.is_empty() {
        return Err(Error::EmptySelection { pool: n_pool });
    }
    Ok(LabeledSample {
        x: x.select_rows(&rows),
        y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| y[i])),
        d: None,
        truth_beta_nonnull: pop.beta_nonnull.clone(),
        truth_gamma_nonnull: pop.gamma_nonnull.clone(),
        case_control: None,
    })
}

/// i.i.d. draw from the population with no selection applied.
pub fn draw_iid<R: Rng + ?Sized>(pop: &PopulationModel, n: usize, rng: &mut R) -> Result<LabeledSample> {
    let x = pop.covariate_sampler().sample(n, rng);
    let y = sample_response(&pop.response, &x, rng)?;
    Ok(LabeledSample {
        x,
        y,
        d: None,
        truth_beta_nonnull: pop.beta_nonnull.clone(),
        truth_gamma_nonnull: pop.gamma_nonnull.clone(),
        case_control: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    const CYCLIC_P: [[f64; 3]; 3] = [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]];

    fn gaussian_pop(p: usize, sel: SelectionModel) -> PopulationModel {
        PopulationModel::new(
            CovariateModel::GaussianBlock {
                mu: DVector::zeros(p),
                sigma: DMatrix::identity(p, p),
            },
            ResponseModel::LinearGaussian { beta: DVector::zeros(p), noise_sd: 1.0 },
            sel,
        )
        .unwrap()
    }

    fn constant_selection(p: usize, prob: f64) -> SelectionModel {
        SelectionModel::LogisticSelection {
            gamma0: (prob / (1.0 - prob)).ln(),
            gamma_x: DVector::zeros(p),
            gamma_y: 0.0,
        }
    }

    #[test]
    fn identity_gaussian_columns_center_on_zero() {
        let m = CovariateModel::GaussianBlock { mu: DVector::zeros(2), sigma: DMatrix::identity(2, 2) };
        let mut rng = stream(1, &[]);
        assert_eq!(sample_covariates(&m, 3, &mut rng).unwrap().shape(), (3, 2));
        let x = sample_covariates(&m, 20_000, &mut rng).unwrap();
        for j in 0..2 {
            assert!(x.column(j).mean().abs() < 4.0 / (20_000f64).sqrt());
        }
    }

    #[test]
    fn non_pd_sigma_is_rejected() {
        let m = CovariateModel::GaussianBlock {
            mu: DVector::zeros(2),
            sigma: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        };
        assert!(matches!(m.sampler(), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn cyclic_chain_is_uniform_at_equilibrium() {
        let pi = stationary_distribution(&CYCLIC_P);
        for v in pi {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn chain_transitions_from_state_zero_follow_first_row() {
        let m = CovariateModel::MarkovChain3 { transition: CYCLIC_P, p: 50, centered: false };
        let x = sample_covariates(&m, 4000, &mut stream(2, &[])).unwrap();
        let mut counts = [0usize; 3];
        for i in 0..x.nrows() {
            for j in 0..49 {
                if x[(i, j)] == 0.0 {
                    counts[x[(i, j + 1)] as usize] += 1;
                }
            }
        }
        let total: usize = counts.iter().sum();
        for (c, want) in counts.iter().zip([0.5, 0.3, 0.2]) {
            let f = *c as f64 / total as f64;
            let se = (want * (1.0 - want) / total as f64).sqrt();
            assert!((f - want).abs() < 4.0 * se, "freq {f} vs {want}");
        }
    }

    #[test]
    fn centered_chain_uses_stationary_mean() {
        let m = CovariateModel::MarkovChain3 { transition: CYCLIC_P, p: 5, centered: true };
        let x = sample_covariates(&m, 10, &mut stream(3, &[])).unwrap();
        assert!(x.iter().all(|&v| v == -1.0 || v == 0.0 || v == 1.0));
        let (mean, sigma) = m.moments();
        assert!(mean.iter().all(|&v| v == 0.0));
        assert!((sigma[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn chain_moments_match_simulation() {
        let m = CovariateModel::MarkovChain3 { transition: CYCLIC_P, p: 4, centered: true };
        let (_, sigma) = m.moments();
        let x = sample_covariates(&m, 100_000, &mut stream(4, &[])).unwrap();
        let w = vec![1.0; x.nrows()];
        let emp = linalg::weighted_centered_gram(&x, &w, &DVector::zeros(4));
        assert!((emp - sigma).abs().max() < 0.015);
    }

    #[test]
    fn response_with_zero_beta_is_pure_noise() {
        let x = DMatrix::from_fn(5000, 2, |i, _| i as f64);
        let y = sample_response(
            &ResponseModel::LinearGaussian { beta: DVector::zeros(2), noise_sd: 1.0 },
            &x,
            &mut stream(5, &[]),
        )
        .unwrap();
        assert!(y.mean().abs() < 0.06);
        assert!((y.variance() - 1.0).abs() < 0.08);

        let y = sample_response(&ResponseModel::Logistic { beta: DVector::zeros(2) }, &x, &mut stream(6, &[]))
            .unwrap();
        assert!((y.mean() - 0.5).abs() < 0.03);
    }

    #[test]
    fn noiseless_linear_response() {
        let x = DMatrix::identity(2, 2);
        let y = sample_response(
            &ResponseModel::LinearGaussian { beta: DVector::from_vec(vec![2.0, 0.0]), noise_sd: 1e-12 },
            &x,
            &mut stream(7, &[]),
        )
        .unwrap();
        assert!((y[0] - 2.0).abs() < 1e-9 && y[1].abs() < 1e-9);
    }

    #[test]
    fn response_dimension_mismatch() {
        let r = sample_response(
            &ResponseModel::Logistic { beta: DVector::zeros(3) },
            &DMatrix::zeros(2, 2),
            &mut stream(0, &[]),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn selection_probability_examples() {
        let se = SelectionModel::SquaredExponential { gamma_x: DVector::from_vec(vec![1.0, -1.0]), gamma_y: 2.0 };
        assert_eq!(se.prob(&[1.0, 1.0], 0.0).unwrap(), 1.0);
        let lg = SelectionModel::LogisticSelection { gamma0: 0.0, gamma_x: DVector::zeros(2), gamma_y: 0.0 };
        assert_eq!(lg.prob(&[3.0, -2.0], 5.0).unwrap(), 0.5);
        let lg = SelectionModel::LogisticSelection { gamma0: -4.0, gamma_x: DVector::zeros(2), gamma_y: 0.0 };
        let v = lg.prob(&[0.0, 0.0], 0.0).unwrap();
        assert!((v - 1.0 / (1.0 + 4f64.exp())).abs() < 1e-15);
        assert!((v - 0.0180).abs() < 5e-5);
        assert!(lg.prob(&[0.0], 0.0).is_err());
    }

    #[test]
    fn case_control_with_degenerate_stratum_errors() {
        let pop = gaussian_pop(2, SelectionModel::SquaredExponential { gamma_x: DVector::zeros(2), gamma_y: 0.0 });
        let design = CaseControlDesign { n_cases: 10, n_controls: 10, pool_size: 100 };
        match draw_case_control(&pop, &design, &mut stream(8, &[])) {
            Err(Error::InsufficientStratum { stratum, needed, available }) => {
                assert_eq!((stratum, needed, available), ("controls", 10, 0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn case_control_strata_sizes_are_exact() {
        let pop = gaussian_pop(3, constant_selection(3, 0.3));
        let design = CaseControlDesign { n_cases: 200, n_controls: 200, pool_size: 4000 };
        let s = draw_case_control(&pop, &design, &mut stream(9, &[])).unwrap();
        let d = s.d.as_ref().unwrap();
        assert_eq!(d.iter().filter(|&&v| v == 1).count(), 200);
        assert_eq!(d.len(), 400);
        let cc = s.case_control.unwrap();
        assert!((cc.population_prevalence() - 0.3).abs() < 0.03);
    }

    #[test]
    fn selected_sample_with_certain_selection_is_the_pool() {
        let pop = gaussian_pop(2, constant_selection(2, 1.0 - 1e-300));
        let pool_x = pop.covariate_sampler().sample(50, &mut stream(10, &[]));
        let s = draw_selected(&pop, 50, &mut stream(10, &[])).unwrap();
        assert_eq!(s.n(), 50);
        assert_eq!(s.x, pool_x);
    }

    #[test]
    fn half_selection_retains_half() {
        let pop = gaussian_pop(2, constant_selection(2, 0.5));
        let s = draw_selected(&pop, 10_000, &mut stream(11, &[])).unwrap();
        let f = s.n() as f64 / 10_000.0;
        assert!((f - 0.5).abs() < 4.0 * (0.25f64 / 10_000.0).sqrt());
    }

    #[test]
    fn empty_selection_errors() {
        let pop = gaussian_pop(2, constant_selection(2, 1e-300));
        assert!(matches!(draw_selected(&pop, 10, &mut stream(12, &[])), Err(Error::EmptySelection { .. })));
    }

    #[test]
    fn identical_seeds_give_identical_samples() {
        let pop = gaussian_pop(4, constant_selection(4, 0.4));
        let a = draw_selected(&pop, 500, &mut stream(13, &[])).unwrap();
        let b = draw_selected(&pop, 500, &mut stream(13, &[])).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
    }
}

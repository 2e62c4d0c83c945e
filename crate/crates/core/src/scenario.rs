//! The four simulation protocols with their published constants.
//!
//! | name              | covariates               | response          | selection                  | sampling                      |
//! |-------------------|--------------------------|-------------------|----------------------------|-------------------------------|
//! | `a1_exact`        | N(0, Σ), AR(0.5) blocks  | linear, N(0, 1)   | `exp(−v²/2)`, γy = 2       | 2000 cases / 2000 controls    |
//! | `a2_noselect`     | as a1                    | as a1             | (unused)                   | 4000 i.i.d.                   |
//! | `a3_second_order` | N(0, Σ), p = 200         | as a1             | logistic, γ0 = −4, γy = 2  | rows with S = 1 from 5000     |
//! | `a4_markov_cc`    | 3-state chain, centered  | logistic          | logistic, γ0 = −6, γy = 2  | 2000 cases / 2000 controls    |

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    draw_case_control, draw_iid, draw_selected, CaseControlDesign, CovariateModel, LabeledSample,
    PopulationModel, ResponseModel, SelectionModel,
};

pub const MARKOV_TRANSITION: [[f64; 3]; 3] = [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioName {
    #[serde(rename = "a1_exact", alias = "a1")]
    A1Exact,
    #[serde(rename = "a2_noselect", alias = "a2")]
    A2NoSelect,
    #[serde(rename = "a3_second_order", alias = "a3")]
    A3SecondOrder,
    #[serde(rename = "a4_markov_cc", alias = "a4")]
    A4MarkovCc,
}

impl ScenarioName {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::A1Exact => "a1_exact",
            Self::A2NoSelect => "a2_noselect",
            Self::A3SecondOrder => "a3_second_order",
            Self::A4MarkovCc => "a4_markov_cc",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a1" | "a1_exact" => Ok(Self::A1Exact),
            "a2" | "a2_noselect" => Ok(Self::A2NoSelect),
            "a3" | "a3_second_order" => Ok(Self::A3SecondOrder),
            "a4" | "a4_markov_cc" => Ok(Self::A4MarkovCc),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingDesign {
    CaseControl(CaseControlDesign),
    Selected { pool_size: usize },
    Iid { n: usize },
}

/// Optional replacements for any scenario constant. Values here are used
/// verbatim, after scaling has been applied to the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub p: Option<usize>,
    pub block_size: Option<usize>,
    pub rho: Option<f64>,
    pub beta_nonnull: Option<usize>,
    pub beta_sd: Option<f64>,
    pub gamma_nonnull: Option<usize>,
    pub gamma_sd: Option<f64>,
    pub gamma_y: Option<f64>,
    pub gamma0: Option<f64>,
    pub noise_sd: Option<f64>,
    pub n_cases: Option<usize>,
    pub n_controls: Option<usize>,
    pub pool_size: Option<usize>,
    pub n_iid: Option<usize>,
    pub transition: Option<[[f64; 3]; 3]>,
    /// Draw the γx support from indices outside the β support.
    #[serde(default)]
    pub forbid_overlap: bool,
}

/// Fully resolved constants for one scenario instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub name: ScenarioName,
    pub scale: f64,
    pub p: usize,
    pub block_size: usize,
    pub rho: f64,
    pub beta_nonnull: usize,
    pub beta_sd: f64,
    pub gamma_nonnull: usize,
    pub gamma_sd: f64,
    pub gamma_y: f64,
    pub gamma0: f64,
    pub noise_sd: f64,
    pub n_cases: usize,
    pub n_controls: usize,
    pub pool_size: usize,
    pub n_iid: usize,
    pub transition: [[f64; 3]; 3],
    pub forbid_overlap: bool,
}

fn scaled(count: usize, scale: f64) -> usize {
    ((count as f64 * scale).floor() as usize).max(1)
}

impl ScenarioParams {
    pub fn defaults(name: ScenarioName, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(Error::InvalidParameter(format!("scale must lie in (0, 1], got {scale}")));
        }
        let base = match name {
            ScenarioName::A1Exact | ScenarioName::A2NoSelect => Self {
                name,
                scale,
                p: 400,
                block_size: 10,
                rho: 0.5,
                beta_nonnull: 40,
                beta_sd: 0.5,
                gamma_nonnull: 80,
                gamma_sd: 0.5,
                gamma_y: 2.0,
                gamma0: 0.0,
                noise_sd: 1.0,
                n_cases: 2000,
                n_controls: 2000,
                pool_size: 40_000,
                n_iid: 4000,
                transition: MARKOV_TRANSITION,
                forbid_overlap: false,
            },
            ScenarioName::A3SecondOrder => Self {
                name,
                scale,
                p: 200,
                block_size: 10,
                rho: 0.5,
                beta_nonnull: 20,
                beta_sd: 0.5,
                gamma_nonnull: 40,
                gamma_sd: 0.25,
                gamma_y: 2.0,
                gamma0: -4.0,
                noise_sd: 1.0,
                n_cases: 0,
                n_controls: 0,
                pool_size: 5000,
                n_iid: 0,
                transition: MARKOV_TRANSITION,
                forbid_overlap: false,
            },
            ScenarioName::A4MarkovCc => Self {
                name,
                scale,
                p: 200,
                block_size: 0,
                rho: 0.0,
                beta_nonnull: 40,
                beta_sd: 0.4,
                gamma_nonnull: 40,
                gamma_sd: 0.4,
                gamma_y: 2.0,
                gamma0: -6.0,
                noise_sd: 1.0,
                n_cases: 2000,
                n_controls: 2000,
                pool_size: A4_POOL_SIZE,
                n_iid: 0,
                transition: MARKOV_TRANSITION,
                forbid_overlap: false,
            },
        };
        Ok(Self {
            p: scaled(base.p, scale),
            beta_nonnull: scaled(base.beta_nonnull, scale),
            gamma_nonnull: scaled(base.gamma_nonnull, scale),
            n_cases: if base.n_cases > 0 { scaled(base.n_cases, scale) } else { 0 },
            n_controls: if base.n_controls > 0 { scaled(base.n_controls, scale) } else { 0 },
            pool_size: scaled(base.pool_size, scale),
            n_iid: if base.n_iid > 0 { scaled(base.n_iid, scale) } else { 0 },
            ..base
        })
    }

    pub fn apply(&mut self, o: &ScenarioOverrides) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { self.$f = v; } )* };
        }
        set!(p, block_size, rho, beta_nonnull, beta_sd, gamma_nonnull, gamma_sd, gamma_y, gamma0,
             noise_sd, n_cases, n_controls, pool_size, n_iid, transition);
        self.forbid_overlap |= o.forbid_overlap;
    }

    pub fn design(&self) -> SamplingDesign {
        match self.name {
            ScenarioName::A1Exact | ScenarioName::A4MarkovCc => SamplingDesign::CaseControl(CaseControlDesign {
                n_cases: self.n_cases,
                n_controls: self.n_controls,
                pool_size: self.pool_size,
            }),
            ScenarioName::A2NoSelect => SamplingDesign::Iid { n: self.n_iid },
            ScenarioName::A3SecondOrder => SamplingDesign::Selected { pool_size: self.pool_size },
        }
    }
}

/// Pool size for the Markov case-control protocol at full scale. Cases are
/// rare (γ0 = −6), so the pool must hold comfortably more than `n_cases`
/// of them.
pub const A4_POOL_SIZE: usize = 100_000;

/// Block-diagonal covariance with `Σ_ij = ρ^|i−j|` inside each block.
pub fn block_ar_covariance(p: usize, block: usize, rho: f64) -> DMatrix<f64> {
    let block = block.max(1);
    DMatrix::from_fn(p, p, |i, j| {
        if i / block == j / block {
            rho.powi(i.abs_diff(j) as i32)
        } else {
            0.0
        }
    })
}

fn sparse_coefficients<R: Rng + ?Sized>(
    p: usize,
    count: usize,
    sd: f64,
    exclude: &[usize],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let pool: Vec<usize> = (0..p).filter(|j| !exclude.contains(j)).collect();
    if count > pool.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot place {count} non-null coefficients among {} free indices",
            pool.len()
        )));
    }
    let mut v = DVector::zeros(p);
    for k in index::sample(rng, pool.len(), count) {
        v[pool[k]] = sd * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(v)
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ScenarioParams,
    pub population: PopulationModel,
    pub design: SamplingDesign,
}

impl Scenario {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<LabeledSample> {
        match &self.design {
            SamplingDesign::CaseControl(d) => draw_case_control(&self.population, d, rng),
            SamplingDesign::Selected { pool_size } => draw_selected(&self.population, *pool_size, rng),
            SamplingDesign::Iid { n } => draw_iid(&self.population, *n, rng),
        }
    }
}

pub fn make_scenario<R: Rng + ?Sized>(name: ScenarioName, scale: f64, rng: &mut R) -> Result<Scenario> {
    make_scenario_with(name, scale, &ScenarioOverrides::default(), rng)
}

pub fn make_scenario_with<R: Rng + ?Sized>(
    name: ScenarioName,
    scale: f64,
    overrides: &ScenarioOverrides,
    rng: &mut R,
) -> Result<Scenario> {
    let mut params = ScenarioParams::defaults(name, scale)?;
    params.apply(overrides);
    build_scenario(params, rng)
}

pub fn build_scenario<R: Rng + ?Sized>(params: ScenarioParams, rng: &mut R) -> Result<Scenario> {
    let p = params.p;
    let covariates = match params.name {
        ScenarioName::A4MarkovCc => CovariateModel::MarkovChain3 {
            transition: params.transition,
            p,
            centered: true,
        },
        _ => CovariateModel::GaussianBlock {
            mu: DVector::zeros(p),
            sigma: block_ar_covariance(p, params.block_size, params.rho),
        },
    };
    let beta = sparse_coefficients(p, params.beta_nonnull.min(p), params.beta_sd, &[], rng)?;
    let beta_support: Vec<usize> = if params.forbid_overlap {
        (0..p).filter(|&j| beta[j] != 0.0).collect()
    } else {
        Vec::new()
    };
    let gamma_x = sparse_coefficients(p, params.gamma_nonnull.min(p), params.gamma_sd, &beta_support, rng)?;
    let response = match params.name {
        ScenarioName::A4MarkovCc => ResponseModel::Logistic { beta },
        _ => ResponseModel::LinearGaussian { beta, noise_sd: params.noise_sd },
    };
    let selection = match params.name {
        ScenarioName::A1Exact | ScenarioName::A2NoSelect => {
            SelectionModel::SquaredExponential { gamma_x, gamma_y: params.gamma_y }
        }
        ScenarioName::A3SecondOrder | ScenarioName::A4MarkovCc => SelectionModel::LogisticSelection {
            gamma0: params.gamma0,
            gamma_x,
            gamma_y: params.gamma_y,
        },
    };
    let population = PopulationModel::new(covariates, response, selection)?;
    let design = params.design();
    Ok(Scenario { params, population, design })
}

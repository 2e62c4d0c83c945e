//! Replicated simulation runs: one shared sample per replicate, knockoffs
//! per method, FDP and power at each target level, CSV output.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{self, StatOptions};
use crate::knockoff::{self, GaussianKnockoffSpec};
use crate::lasso::Family;
use crate::logistic::{self, FittedSelection, LogisticFit, PrevalenceAdjustment};
use crate::model::{CovariateModel, LabeledSample, SelectionModel};
use crate::rng::{derive_seed, label_key, stream};
use crate::scenario::{make_scenario_with, Scenario, ScenarioName, ScenarioOverrides, ScenarioParams};
use crate::tilt::{self, ConstantWeight, MixtureGeometry, MixtureKnockoffSampler, TiltSpec, TiltWeight, YGrouping};

pub const CSV_VERSION_LINE: &str = "# tk-results v1";
pub const CSV_COLUMNS: [&str; 10] = ["scenario", "method", "rep", "q", "fdp", "power", "n_selected", "tau", "seed", "wall_ms"];

/// How the selection probability is estimated from the sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Estimator {
    Logistic,
    /// ℓ1-penalized logistic at the cross-validated λ.
    L1Cv,
    /// Knockoff screen at level `q`, then unpenalized logistic.
    TwoStage(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    NoAdjustment,
    TiltedExact,
    TiltedSecondOrderKnown,
    TiltedSecondOrderEstimated(Estimator),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoAdjustment => f.write_str("no_adjustment"),
            Self::TiltedExact => f.write_str("tilted_exact"),
            Self::TiltedSecondOrderKnown => f.write_str("tilted_second_order_known"),
            Self::TiltedSecondOrderEstimated(e) => match e {
                Estimator::Logistic => f.write_str("tilted_second_order_estimated(logistic)"),
                Estimator::L1Cv => f.write_str("tilted_second_order_estimated(l1_cv)"),
                Estimator::TwoStage(q) => write!(f, "tilted_second_order_estimated(two_stage({q}))"),
            },
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let unknown = || Error::UnknownMethod(s.to_string());
        match s {
            "no_adjustment" => return Ok(Self::NoAdjustment),
            "tilted_exact" => return Ok(Self::TiltedExact),
            "tilted_second_order_known" => return Ok(Self::TiltedSecondOrderKnown),
            "tilted_second_order_estimated" => return Ok(Self::TiltedSecondOrderEstimated(Estimator::Logistic)),
            _ => {}
        }
        let inner = s
            .strip_prefix("tilted_second_order_estimated(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(unknown)?;
        let est = match inner {
            "logistic" => Estimator::Logistic,
            "l1_cv" => Estimator::L1Cv,
            other => {
                let q: f64 = other
                    .strip_prefix("two_stage(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(unknown)?;
                if !(q > 0.0 && q < 1.0) {
                    return Err(Error::InvalidParameter(format!("two-stage level must lie in (0, 1), got {q}")));
                }
                Estimator::TwoStage(q)
            }
        };
        Ok(Self::TiltedSecondOrderEstimated(est))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Family of the lasso used for the knockoff statistic. The Gaussian lasso
/// is used for every response type unless asked otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatFamily {
    #[default]
    Gaussian,
    /// Binomial for a 0/1 response, Gaussian otherwise.
    Auto,
    Binomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioName,
    pub scale: f64,
    pub methods: Vec<Method>,
    pub q_levels: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    /// Importance-sampling draws per tilt group; `100 p` when absent.
    pub is_draws: Option<usize>,
    pub y_bins: usize,
    pub cv_folds: usize,
    pub cv_grid_size: usize,
    pub statistic: StatFamily,
    pub overrides: ScenarioOverrides,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioName::A1Exact,
            scale: 0.25,
            methods: vec![Method::NoAdjustment],
            q_levels: vec![0.1, 0.2, 0.3],
            replicates: 100,
            seed: 42,
            is_draws: None,
            y_bins: 10,
            cv_folds: 5,
            cv_grid_size: 20,
            statistic: StatFamily::Gaussian,
            overrides: ScenarioOverrides::default(),
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("at least one method is required".into()));
        }
        if self.q_levels.is_empty() || self.q_levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::InvalidParameter(format!("q levels must lie in (0, 1), got {:?}", self.q_levels)));
        }
        if self.y_bins == 0 || self.cv_folds < 2 || self.cv_grid_size == 0 {
            return Err(Error::InvalidParameter("y_bins, cv_grid_size must be positive and cv_folds at least 2".into()));
        }
        if self.is_draws == Some(0) {
            return Err(Error::InvalidParameter("is_draws must be positive".into()));
        }
        ScenarioParams::defaults(self.scenario, self.scale).map(|_| ())
    }
}

/// One row of the results table. Metrics are `None` when the method failed
/// on this replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub scenario: String,
    pub method: String,
    pub rep: usize,
    pub q: f64,
    pub fdp: Option<f64>,
    pub power: Option<f64>,
    pub n_selected: Option<usize>,
    pub tau: Option<f64>,
    pub seed: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub rep: usize,
    pub method: String,
    pub error: String,
}

/// Everything built once per experiment and shared by all replicates.
pub struct ExperimentContext {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub family: Family,
    pub stats: StatOptions,
    /// Standard knockoffs for the population covariate law.
    pub population_spec: GaussianKnockoffSpec,
    pub mixture: Option<MixtureKnockoffSampler>,
}

impl ExperimentContext {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let scenario = make_scenario_with(config.scenario, config.scale, &config.overrides, &mut stream(config.seed, &[0]))?;
        let pop = &scenario.population;
        let family = match config.statistic {
            StatFamily::Gaussian => Family::Gaussian,
            StatFamily::Binomial => Family::Binomial,
            StatFamily::Auto if pop.response.is_binary() => Family::Binomial,
            StatFamily::Auto => Family::Gaussian,
        };
        let (mu, sigma) = pop.covariates.moments();
        let population_spec = knockoff::equicorrelated_spec(mu, sigma)?;
        let mixture = match (&pop.covariates, &pop.selection) {
            (CovariateModel::GaussianBlock { mu, sigma }, SelectionModel::SquaredExponential { gamma_x, gamma_y })
                if config.methods.contains(&Method::TiltedExact) =>
            {
                let g = MixtureGeometry::new(mu.clone(), sigma.clone(), gamma_x.clone(), *gamma_y)?;
                Some(MixtureKnockoffSampler::new(g)?)
            }
            _ => None,
        };
        Ok(Self { config, scenario, family, stats: StatOptions::default(), population_spec, mixture })
    }

    fn tilt_spec<'a>(&'a self, weight: &'a dyn TiltWeight) -> TiltSpec<'a> {
        let mut spec = TiltSpec::new(self.scenario.population.covariate_sampler(), weight);
        if let Some(k) = self.config.is_draws {
            spec.draws = k;
        }
        spec
    }

    fn grouping(&self) -> YGrouping {
        YGrouping::QuantileBins { bins: self.config.y_bins }
    }

    fn not_applicable(method: Method, reason: &str) -> Error {
        Error::MethodNotApplicable { method: method.to_string(), reason: reason.to_string() }
    }

    /// Knockoffs for `sample` under `method`.
    pub fn knockoffs(&self, method: Method, sample: &LabeledSample, rng: &mut crate::rng::SimRng) -> Result<nalgebra::DMatrix<f64>> {
        let pop = &self.scenario.population;
        match method {
            Method::NoAdjustment => self.population_spec.sample(&sample.x, rng),
            Method::TiltedExact => {
                let mixture = self.mixture.as_ref().ok_or_else(|| {
                    Self::not_applicable(method, "needs Gaussian covariates and a squared-exponential disease model")
                })?;
                let counts = sample
                    .case_control
                    .ok_or_else(|| Self::not_applicable(method, "needs a case-control sample"))?;
                mixture.sample(&sample.x, &sample.y, counts.rate_case(), counts.rate_control(), rng)
            }
            Method::TiltedSecondOrderKnown => {
                let constant = ConstantWeight(1.0);
                let is_iid = matches!(self.scenario.design, crate::scenario::SamplingDesign::Iid { .. });
                let weight: &dyn TiltWeight = if is_iid { &constant } else { &pop.selection };
                let out = tilt::second_order_tilted_knockoffs(sample, &self.tilt_spec(weight), self.grouping(), rng)?;
                Ok(out.xk)
            }
            Method::TiltedSecondOrderEstimated(est) => {
                let d = sample
                    .d
                    .as_ref()
                    .ok_or_else(|| Self::not_applicable(method, "needs case-control status"))?;
                let counts = sample
                    .case_control
                    .ok_or_else(|| Self::not_applicable(method, "needs case-control counts"))?;
                let d01 = DVector::from_iterator(d.len(), d.iter().map(|&v| f64::from(v)));
                let fit = self.estimate_selection(est, sample, &d01, rng)?;
                let adj = PrevalenceAdjustment::new(counts.sample_prevalence(), counts.population_prevalence())?;
                let weight = FittedSelection { fit: logistic::adjust_intercept(&fit, &adj)? };
                let out = tilt::second_order_tilted_knockoffs(sample, &self.tilt_spec(&weight), self.grouping(), rng)?;
                Ok(out.xk)
            }
        }
    }

    fn estimate_selection(
        &self,
        est: Estimator,
        sample: &LabeledSample,
        d01: &DVector<f64>,
        rng: &mut crate::rng::SimRng,
    ) -> Result<LogisticFit> {
        let design = logistic::design_with_response(&sample.x, &sample.y);
        match est {
            Estimator::Logistic => logistic::fit_logistic(&design, d01, 0.0),
            Estimator::L1Cv => {
                let grid = logistic::default_lambda_grid(&design, d01, self.config.cv_grid_size, 1e-2);
                let lam = logistic::cross_validate_lambda(&design, d01, &grid, self.config.cv_folds, rng)?;
                logistic::fit_logistic(&design, d01, lam)
            }
            Estimator::TwoStage(q) => {
                let (fit, _) = logistic::two_stage_selection_model(&sample.x, &sample.y, d01, q, &self.population_spec, rng)?;
                Ok(fit)
            }
        }
    }
}

fn replicate_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, &[1, rep as u64])
}

fn failed_rows(ctx: &ExperimentContext, method: Method, rep: usize, wall_ms: f64) -> Vec<ReplicateRecord> {
    ctx.config
        .q_levels
        .iter()
        .map(|&q| ReplicateRecord {
            scenario: ctx.config.scenario.to_string(),
            method: method.to_string(),
            rep,
            q,
            fdp: None,
            power: None,
            n_selected: None,
            tau: None,
            seed: replicate_seed(ctx.config.seed, rep),
            wall_ms,
        })
        .collect()
}

/// All records for replicate `rep`, plus notes for methods that failed.
pub fn run_replicate(ctx: &ExperimentContext, rep: usize) -> (Vec<ReplicateRecord>, Vec<FailureNote>) {
    let cfg = &ctx.config;
    let seed = replicate_seed(cfg.seed, rep);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let sample = match ctx.scenario.draw(&mut stream(seed, &[])) {
        Ok(s) => s,
        Err(e) => {
            for &m in &cfg.methods {
                records.extend(failed_rows(ctx, m, rep, 0.0));
                failures.push(FailureNote { rep, method: m.to_string(), error: format!("sample draw: {e}") });
            }
            return (records, failures);
        }
    };
    for &method in &cfg.methods {
        let label = method.to_string();
        let started = Instant::now();
        let mut rng = stream(seed, &[label_key(&label)]);
        let outcome = ctx.knockoffs(method, &sample, &mut rng).and_then(|xk| {
            filter::knockoff_filter(
                &sample.x,
                &xk,
                &sample.y,
                ctx.family,
                &cfg.q_levels,
                &sample.truth_beta_nonnull,
                &ctx.stats,
                &mut rng,
            )
        });
        let wall_ms = (started.elapsed().as_secs_f64() * 1e6).round() / 1e3;
        match outcome {
            Ok(results) => {
                for (r, &q) in results.iter().zip(&cfg.q_levels) {
                    records.push(ReplicateRecord {
                        scenario: cfg.scenario.to_string(),
                        method: label.clone(),
                        rep,
                        q,
                        fdp: Some(r.fdp),
                        power: Some(r.power),
                        n_selected: Some(r.selected.len()),
                        tau: Some(r.tau),
                        seed,
                        wall_ms,
                    });
                }
            }
            Err(e) => {
                log::warn!("replicate {rep}, {label}: {e}");
                records.extend(failed_rows(ctx, method, rep, wall_ms));
                failures.push(FailureNote { rep, method: label, error: e.to_string() });
            }
        }
    }
    (records, failures)
}

/// Knockoff scores `W` of `method` on replicate `rep`, drawn from the same
/// streams as [`run_replicate`], with the sample's non-null set.
pub fn replicate_scores(ctx: &ExperimentContext, method: Method, rep: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let seed = replicate_seed(ctx.config.seed, rep);
    let sample = ctx.scenario.draw(&mut stream(seed, &[]))?;
    let mut rng = stream(seed, &[label_key(&method.to_string())]);
    let xk = ctx.knockoffs(method, &sample, &mut rng)?;
    let stats = filter::lasso_entry_stats(&filter::augment(&sample.x, &xk)?, &sample.y, ctx.family, &ctx.stats, &mut rng)?;
    Ok((filter::w_scores(&stats.z).as_slice().to_vec(), sample.truth_beta_nonnull))
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<FailureNote>,
    pub params: ScenarioParams,
    pub beta_nonnull: Vec<usize>,
    pub gamma_nonnull: Vec<usize>,
    pub wall_ms: f64,
}

/// Run every replicate on the rayon pool. Records are sorted by
/// `(rep, method, q)` with methods in configuration order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let ctx = ExperimentContext::new(config.clone())?;
    run_with_context(&ctx)
}

pub fn run_with_context(ctx: &ExperimentContext) -> Result<ExperimentOutput> {
    let started = Instant::now();
    let parts: Vec<(Vec<ReplicateRecord>, Vec<FailureNote>)> =
        (0..ctx.config.replicates).into_par_iter().map(|rep| run_replicate(ctx, rep)).collect();
    let order: BTreeMap<String, usize> = ctx.config.methods.iter().enumerate().map(|(k, m)| (m.to_string(), k)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in parts {
        records.extend(r);
        failures.extend(f);
    }
    records.sort_by(|a, b| {
        a.rep.cmp(&b.rep).then(order[&a.method].cmp(&order[&b.method])).then(a.q.total_cmp(&b.q))
    });
    failures.sort_by(|a, b| a.rep.cmp(&b.rep).then(order[&a.method].cmp(&order[&b.method])));
    Ok(ExperimentOutput {
        records,
        failures,
        params: ctx.scenario.params.clone(),
        beta_nonnull: ctx.scenario.population.beta_nonnull.clone(),
        gamma_nonnull: ctx.scenario.population.gamma_nonnull.clone(),
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Per `(scenario, method, q)` summary over replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub q: f64,
    pub replicates: usize,
    pub failures: usize,
    pub mean_fdp: f64,
    pub median_fdp: f64,
    pub se_fdp: f64,
    pub mean_power: f64,
    pub se_power: f64,
    pub mean_selected: f64,
}

fn mean_se(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Summaries sorted by `(scenario, method, q)`. Values are sorted before
/// summation, so the result does not depend on record order.
pub fn aggregate(records: &[ReplicateRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, u64), Vec<&ReplicateRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.scenario.clone(), r.method.clone(), r.q.to_bits())).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((scenario, method, qbits), rs)| {
            let ok: Vec<&&ReplicateRecord> = rs.iter().filter(|r| r.fdp.is_some()).collect();
            let sorted = |f: &dyn Fn(&ReplicateRecord) -> f64| {
                let mut v: Vec<f64> = ok.iter().map(|r| f(r)).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let fdp = sorted(&|r| r.fdp.unwrap_or(f64::NAN));
            let power = sorted(&|r| r.power.unwrap_or(f64::NAN));
            let sel = sorted(&|r| r.n_selected.unwrap_or(0) as f64);
            let (mean_fdp, se_fdp) = mean_se(&fdp);
            let (mean_power, se_power) = mean_se(&power);
            SummaryRow {
                scenario,
                method,
                q: f64::from_bits(qbits),
                replicates: ok.len(),
                failures: rs.len() - ok.len(),
                mean_fdp,
                median_fdp: median(&fdp),
                se_fdp,
                mean_power,
                se_power,
                mean_selected: mean_se(&sel).0,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.scenario.cmp(&b.scenario).then(a.method.cmp(&b.method)).then(a.q.total_cmp(&b.q)));
    rows
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        None => "NA".into(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) => format!("{x}"),
    }
}

/// Write records as CSV, preceded by the schema version comment line.
pub fn write_csv<W: Write>(records: &[ReplicateRecord], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_VERSION_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            r.scenario.clone(),
            r.method.clone(),
            r.rep.to_string(),
            format!("{}", r.q),
            fmt_opt(r.fdp),
            fmt_opt(r.power),
            r.n_selected.map_or("NA".into(), |v| v.to_string()),
            fmt_opt(r.tau),
            r.seed.to_string(),
            format!("{}", r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt(field: &str) -> Result<Option<f64>> {
    match field {
        "NA" => Ok(None),
        "inf" => Ok(Some(f64::INFINITY)),
        v => v.parse().map(Some).map_err(|_| Error::InvalidParameter(format!("bad numeric field {v:?}"))),
    }
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ReplicateRecord>> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != CSV_VERSION_LINE {
        return Err(Error::InvalidParameter(format!("unrecognized results header {:?}", first.trim_end())));
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::InvalidParameter(format!("unexpected columns {headers:?}")));
    }
    let bad = |f: &str| Error::InvalidParameter(format!("bad field {f:?}"));
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        out.push(ReplicateRecord {
            scenario: row[0].to_string(),
            method: row[1].to_string(),
            rep: row[2].parse().map_err(|_| bad(&row[2]))?,
            q: row[3].parse().map_err(|_| bad(&row[3]))?,
            fdp: parse_opt(&row[4])?,
            power: parse_opt(&row[5])?,
            n_selected: if &row[6] == "NA" { None } else { Some(row[6].parse().map_err(|_| bad(&row[6]))?) },
            tau: parse_opt(&row[7])?,
            seed: row[8].parse().map_err(|_| bad(&row[8]))?,
            wall_ms: row[9].parse().map_err(|_| bad(&row[9]))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct RunMetadata<'a> {
    pub schema: &'static str,
    pub tool_version: &'static str,
    pub config: &'a ExperimentConfig,
    pub scenario_params: &'a ScenarioParams,
    pub beta_nonnull: &'a [usize],
    pub gamma_nonnull: &'a [usize],
    pub records: usize,
    pub failures: &'a [FailureNote],
    pub wall_ms: f64,
}

/// Sidecar path for a results file: `<out>.meta.json`.
pub fn metadata_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Write the CSV and its metadata sidecar.
pub fn write_outputs(config: &ExperimentConfig, output: &ExperimentOutput, path: &Path) -> Result<()> {
    write_csv(&output.records, std::io::BufWriter::new(std::fs::File::create(path)?))?;
    let meta = RunMetadata {
        schema: CSV_VERSION_LINE.trim_start_matches("# "),
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        scenario_params: &output.params,
        beta_nonnull: &output.beta_nonnull,
        gamma_nonnull: &output.gamma_nonnull,
        records: output.records.len(),
        failures: &output.failures,
        wall_ms: output.wall_ms,
    };
    let f = std::io::BufWriter::new(std::fs::File::create(metadata_path(path))?);
    serde_json::to_writer_pretty(f, &meta)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(scenario: ScenarioName, methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            scenario,
            scale: 1.0,
            methods,
            q_levels: vec![0.1, 0.3],
            replicates: 2,
            seed: 7,
            is_draws: Some(1000),
            overrides: ScenarioOverrides {
                p: Some(20),
                beta_nonnull: Some(4),
                gamma_nonnull: Some(6),
                block_size: Some(5),
                n_cases: Some(150),
                n_controls: Some(150),
                pool_size: Some(3000),
                n_iid: Some(200),
                ..ScenarioOverrides::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn replicate_scores_reproduce_recorded_thresholds() {
        let ctx = ExperimentContext::new(tiny(ScenarioName::A1Exact, vec![Method::TiltedExact])).unwrap();
        let (records, _) = run_replicate(&ctx, 1);
        let (w, truth) = replicate_scores(&ctx, Method::TiltedExact, 1).unwrap();
        let w = DVector::from_vec(w);
        for r in &records {
            let k = filter::select(&w, r.q, &truth);
            assert_eq!(Some(k.tau), r.tau);
            assert_eq!(Some(k.fdp), r.fdp);
        }
    }

    #[test]
    fn method_names_round_trip() {
        for s in [
            "no_adjustment",
            "tilted_exact",
            "tilted_second_order_known",
            "tilted_second_order_estimated(logistic)",
            "tilted_second_order_estimated(l1_cv)",
            "tilted_second_order_estimated(two_stage(0.25))",
        ] {
            assert_eq!(s.parse::<Method>().unwrap().to_string(), s);
        }
        assert!(matches!("lasso".parse::<Method>(), Err(Error::UnknownMethod(_))));
        assert!("tilted_second_order_estimated(two_stage(1.5))".parse::<Method>().is_err());
        let json = serde_json::to_string(&Method::TiltedSecondOrderEstimated(Estimator::TwoStage(0.25))).unwrap();
        assert_eq!(json, "\"tilted_second_order_estimated(two_stage(0.25))\"");
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"scenario": "a4", "methods": ["no_adjustment"]}"#).unwrap();
        assert_eq!(cfg.scenario, ScenarioName::A4MarkovCc);
        assert_eq!(cfg.q_levels, vec![0.1, 0.2, 0.3]);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = ExperimentConfig { q_levels: vec![1.0], ..ExperimentConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn records_are_complete_and_deterministic() {
        let cfg = tiny(ScenarioName::A1Exact, vec![Method::NoAdjustment, Method::TiltedExact]);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.records.len(), 2 * 2 * 2);
        assert!(a.failures.is_empty(), "{:?}", a.failures);
        let strip = |rs: &[ReplicateRecord]| rs.iter().map(|r| ReplicateRecord { wall_ms: 0.0, ..r.clone() }).collect::<Vec<_>>();
        assert_eq!(strip(&a.records), strip(&b.records));
        let keys: Vec<(usize, String, f64)> = a.records.iter().map(|r| (r.rep, r.method.clone(), r.q)).collect();
        assert_eq!(keys[0], (0, "no_adjustment".to_string(), 0.1));
        assert_eq!(keys[3], (0, "tilted_exact".to_string(), 0.3));
        assert_eq!(keys[4].0, 1);
    }

    #[test]
    fn inapplicable_method_is_marked_not_fatal() {
        let cfg = tiny(ScenarioName::A3SecondOrder, vec![Method::TiltedExact, Method::TiltedSecondOrderKnown]);
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 8);
        assert_eq!(out.failures.len(), 2);
        assert!(out.records.iter().filter(|r| r.method == "tilted_exact").all(|r| r.fdp.is_none()));
        assert!(out.records.iter().filter(|r| r.method != "tilted_exact").all(|r| r.fdp.is_some()));
    }

    #[test]
    fn estimated_methods_run_on_case_control_data() {
        let mut cfg = tiny(
            ScenarioName::A4MarkovCc,
            vec![
                Method::TiltedSecondOrderKnown,
                Method::TiltedSecondOrderEstimated(Estimator::Logistic),
                Method::TiltedSecondOrderEstimated(Estimator::L1Cv),
                Method::TiltedSecondOrderEstimated(Estimator::TwoStage(0.25)),
            ],
        );
        cfg.overrides.gamma0 = Some(-3.0);
        cfg.replicates = 1;
        let out = run_experiment(&cfg).unwrap();
        assert!(out.failures.is_empty(), "{:?}", out.failures);
        assert_eq!(out.records.len(), 8);
    }

    #[test]
    fn csv_round_trip_with_missing_and_infinite_values() {
        let recs = vec![
            ReplicateRecord {
                scenario: "a1_exact".into(),
                method: "tilted_second_order_estimated(two_stage(0.25))".into(),
                rep: 3,
                q: 0.2,
                fdp: Some(0.125),
                power: Some(0.5),
                n_selected: Some(8),
                tau: Some(f64::INFINITY),
                seed: 99,
                wall_ms: 1.5,
            },
            ReplicateRecord { fdp: None, power: None, n_selected: None, tau: None, ..ReplicateRecord {
                scenario: "a1_exact".into(), method: "no_adjustment".into(), rep: 0, q: 0.1, fdp: None, power: None,
                n_selected: None, tau: None, seed: 1, wall_ms: 0.0 } },
        ];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(CSV_VERSION_LINE));
        assert_eq!(lines.next(), Some("scenario,method,rep,q,fdp,power,n_selected,tau,seed,wall_ms"));
        assert!(text.contains(",inf,") && text.contains("NA,NA,NA,NA"));
        assert_eq!(read_csv(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn aggregate_conventions() {
        let rec = |rep: usize, fdp: Option<f64>, power: f64, sel: usize| ReplicateRecord {
            scenario: "a2_noselect".into(),
            method: "no_adjustment".into(),
            rep,
            q: 0.1,
            fdp,
            power: fdp.map(|_| power),
            n_selected: fdp.map(|_| sel),
            tau: Some(1.0),
            seed: 0,
            wall_ms: 0.0,
        };
        let one = aggregate(&[rec(0, Some(0.25), 0.5, 4)]);
        assert_eq!((one[0].mean_fdp, one[0].se_fdp, one[0].mean_power, one[0].se_power), (0.25, 0.0, 0.5, 0.0));
        let empty = aggregate(&[rec(0, Some(0.0), 0.0, 0), rec(1, Some(0.0), 0.0, 0), rec(2, None, 0.0, 0)]);
        assert_eq!((empty[0].mean_fdp, empty[0].mean_power, empty[0].replicates, empty[0].failures), (0.0, 0.0, 2, 1));
    }

    proptest::proptest! {
        #[test]
        fn aggregate_ignores_record_order(vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0usize..3), 1..40), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let recs: Vec<ReplicateRecord> = vals.iter().enumerate().map(|(i, &(f, p, m))| ReplicateRecord {
                scenario: "a1_exact".into(), method: ["no_adjustment", "tilted_exact", "tilted_second_order_known"][m].into(),
                rep: i, q: 0.1 + 0.1 * (i % 2) as f64, fdp: Some(f), power: Some(p), n_selected: Some(i), tau: Some(1.0), seed: 0, wall_ms: 0.0,
            }).collect();
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut stream(seed, &[]));
            proptest::prop_assert_eq!(aggregate(&recs), aggregate(&shuffled));
        }
    }
}

//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use tk_core::model::LabeledSample;
use tk_core::rng::stream;
use tk_core::scenario::{make_scenario, Scenario, ScenarioName};

pub struct Fixture {
    pub scenario: Scenario,
    pub sample: LabeledSample,
}

/// One scenario instance and one sample drawn from it.
pub fn fixture(name: ScenarioName, scale: f64, seed: u64) -> Fixture {
    let scenario = make_scenario(name, scale, &mut stream(seed, &[0])).expect("scenario builds");
    let sample = scenario.draw(&mut stream(seed, &[1])).expect("sample draws");
    Fixture { scenario, sample }
}

/// Random knockoff scores with a block of strong positives.
pub fn random_scores(p: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[2]);
    (0..p).map(|j| rng.random_range(-1.0..1.0) + if j % 10 == 0 { 3.0 } else { 0.0 }).collect()
}

/// Gaussian regression problem with `p` columns and five active ones.
pub fn regression(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = stream(seed, &[3]);
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.7..1.7));
    let y = DVector::from_fn(n, |i, _| (0..5).map(|j| x[(i, j)]).sum::<f64>() + rng.random_range(-1.0..1.0));
    (x, y)
}

use tk_bench::{fixture, random_scores, regression};
use tk_core::scenario::ScenarioName;

#[test]
fn fixtures_have_the_expected_shapes() {
    let f = fixture(ScenarioName::A3SecondOrder, 0.1, 1);
    assert_eq!(f.sample.x.ncols(), 20);
    assert_eq!(f.sample.x.nrows(), f.sample.y.len());
    let (x, y) = regression(50, 8, 2);
    assert_eq!((x.nrows(), x.ncols(), y.len()), (50, 8, 50));
    assert_eq!(random_scores(30, 3).len(), 30);
}

#[test]
fn fixtures_are_seeded() {
    assert_eq!(random_scores(10, 4), random_scores(10, 4));
    let a = fixture(ScenarioName::A1Exact, 0.05, 9);
    let b = fixture(ScenarioName::A1Exact, 0.05, 9);
    assert_eq!(a.sample.x, b.sample.x);
}

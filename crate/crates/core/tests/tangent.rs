use mms_lab::models::{make, ModelSpec};
use mms_lab::pmgh::PmghConfig;
use mms_lab::space::{normalize_at, product};
use mms_lab::tangent::{
    blowup, detect_line, euclidean_dimension, match_tangent, split, BlowupConfig, DimensionConfig, SplitConfig,
    TangentModel,
};
use mms_lab::PointedSpace;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn grid(dim: usize, h: f64) -> PointedSpace {
    make(&ModelSpec::EuclideanGrid { dim, h, lo: -1.0, hi: 1.0, center: None }).unwrap()
}

fn shuffled(s: &PointedSpace, seed: u64) -> PointedSpace {
    let mut perm: Vec<usize> = (0..s.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = perm.iter().position(|&i| i == s.base()).unwrap();
    PointedSpace::new(s.space().restrict(&perm).unwrap(), base).unwrap()
}

#[test]
fn members_are_normalized_and_windowed() {
    let g = grid(2, 0.1);
    let seq = blowup(&g, &[0.5, 0.25], &BlowupConfig { window: 3.0, ..Default::default() }).unwrap();
    for m in &seq.members {
        assert!((m.space.normalization_integral(1.0) - 1.0).abs() < 1e-12);
        assert!((0..m.space.len()).all(|i| m.space.dist_to_base(i) < 3.0));
        assert!((m.spacing.unwrap() - 0.1 / m.radius).abs() < 1e-12);
    }
}

#[test]
fn tangent_matching_ignores_labels() {
    let g = grid(2, 0.1);
    let radii = [0.4, 0.3];
    let cfg = BlowupConfig { window: 4.0, ..Default::default() };
    let models = [TangentModel::euclidean(1), TangentModel::euclidean(2)];
    let pmgh = PmghConfig { radii: vec![1.0, 2.0], ..Default::default() };
    let a = match_tangent(&blowup(&g, &radii, &cfg).unwrap(), &models, &pmgh).unwrap();
    let b = match_tangent(&blowup(&shuffled(&g, 3), &radii, &cfg).unwrap(), &models, &pmgh).unwrap();
    for (x, y) in a.matches.iter().zip(&b.matches) {
        assert_eq!(x.model, y.model);
        // the normalization sum runs in label order, so only rounding differs
        for (u, v) in x.values.iter().zip(&y.values) {
            assert!((u.unwrap() - v.unwrap()).abs() < 1e-12, "{u:?} vs {v:?}");
        }
    }
    assert_eq!(a.best.as_deref(), Some("R^2"));
}

#[test]
fn strip_splits_off_a_line() {
    let h = 0.1;
    let long = make(&ModelSpec::EuclideanGrid { dim: 1, h, lo: -3.0, hi: 3.0, center: None }).unwrap();
    let short = make(&ModelSpec::EuclideanGrid { dim: 1, h, lo: -0.5, hi: 0.5, center: None }).unwrap();
    let p = product(long.space(), short.space(), 10_000).unwrap();
    let base = long.base() * short.len() + short.base();
    let strip = PointedSpace::new(p, base).unwrap();
    let line = detect_line(&strip, 2.0, 0.05).expect("axis");
    assert!(line.eps_line <= 0.05);
    let res = split(strip.space(), &line, &SplitConfig::default()).unwrap();
    assert!(res.delta_metric <= 3.0 * h, "{}", res.delta_metric);
    assert_eq!(res.quotient.len(), short.len());
    assert!(res.delta_meas < 1e-9, "{}", res.delta_meas);
    // the quotient is the short factor
    let q = normalize_at(&res.quotient, 1.0).unwrap().0;
    let f = normalize_at(&short, 1.0).unwrap().0;
    let d = mms_lab::pmgh::pmgh_distance(&q, &f, &PmghConfig::default()).unwrap().value;
    assert!(d < 1e-9, "{d}");
}

#[test]
fn dimension_never_exceeds_the_budget() {
    let spaces = [
        grid(1, 0.05),
        grid(2, 0.1),
        make(&ModelSpec::Sphere { radius: 1.0, points: 400 }).unwrap(),
        make(&ModelSpec::Graph { nodes: 120, radius: 0.2, seed: 1 }).unwrap(),
        make(&ModelSpec::Cylinder { circumference: 1.0, h: 0.1, length: 4.0 }).unwrap(),
    ];
    for s in &spaces {
        for budget in [0.0, 0.5, 1.0, 1.7, 2.0, 3.2] {
            let cfg = DimensionConfig { n_budget: budget, ..Default::default() };
            let (n, trace) = euclidean_dimension(s, &cfg).unwrap();
            assert!(n as f64 <= budget, "n = {n} with N = {budget}");
            assert_eq!(trace.n, n);
            assert_eq!(trace.budget, budget.floor() as usize);
        }
    }
}

#[test]
fn dimension_of_flat_grids() {
    for d in 1..=2usize {
        let h = [0.02, 0.05][d - 1];
        let cfg = DimensionConfig { n_budget: 3.0, radii: vec![h], ..Default::default() };
        let (n, trace) = euclidean_dimension(&grid(d, h), &cfg).unwrap();
        assert_eq!(n, d, "{trace:?}");
    }
}

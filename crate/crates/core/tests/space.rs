use mms_lab::models::{make, ModelSpec};
use mms_lab::space::{
    ball_restrict, doubling_profile, normalize_at, product, rescale, validate, BallMode, CenterPolicy, DoublingConfig,
    Violation, TRIANGLE_TOLERANCE,
};
use mms_lab::{FiniteSpace, Metric, Point, PointedSpace};
use ndarray::Array2;
use proptest::prelude::*;

fn random_space(coords: &[[f64; 2]], weights: &[f64]) -> PointedSpace {
    let n = coords.len();
    let m = Array2::from_shape_fn((n, n), |(i, j)| {
        let (a, b) = (coords[i], coords[j]);
        (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
    });
    let points = (0..n).map(|i| Point::new(i.to_string())).collect();
    PointedSpace::new(FiniteSpace::new(points, Metric::from_matrix(m), weights.to_vec()).unwrap(), 0).unwrap()
}

fn space_strategy() -> impl Strategy<Value = PointedSpace> {
    (2usize..9).prop_flat_map(|n| {
        (prop::collection::vec(prop::array::uniform2(-1.0..1.0f64), n), prop::collection::vec(0.01..2.0f64, n))
            .prop_map(|(c, w)| random_space(&c, &w))
    })
}

#[test]
fn validate_reports_each_kind() {
    let m = ndarray::array![[0.0, 1.0, 5.0], [1.0, 0.0, 1.0], [5.0, 1.0, 0.0]];
    let s = FiniteSpace::new(vec![Point::new("a"), Point::new("b"), Point::new("c")], Metric::from_matrix(m), vec![1.0; 3])
        .unwrap();
    let r = validate(&s, TRIANGLE_TOLERANCE);
    assert!(!r.is_valid());
    assert!(r.violations.iter().all(|v| matches!(v, Violation::Triangle { .. })));
    let m = ndarray::array![[0.0, 1.0], [2.0, 0.0]];
    let s = FiniteSpace::new(vec![Point::new("a"), Point::new("b")], Metric::from_matrix(m), vec![1.0; 2]).unwrap();
    assert!(validate(&s, TRIANGLE_TOLERANCE).violations.iter().any(|v| matches!(v, Violation::Asymmetry { .. })));
}

#[test]
fn doubling_on_flat_grids() {
    for (dim, h, radii) in [(1usize, 0.005, vec![0.0525, 0.1025]), (2, 0.02, vec![0.11, 0.21])] {
        let g = make(&ModelSpec::EuclideanGrid { dim, h, lo: -1.0, hi: 1.0, center: None }).unwrap();
        let cfg = DoublingConfig { centers: CenterPolicy::Indices { indices: vec![g.base()] }, ..Default::default() };
        let p = doubling_profile(g.space(), &radii, &cfg).unwrap();
        let target = 2f64.powi(dim as i32);
        for &q in &p.ratios {
            assert!((q - target).abs() <= 0.1 * target, "dim {dim}: {q}");
        }
        assert!(p.iterated_violations.is_empty());
    }
}

#[test]
fn doubling_iterated_bound_on_a_graph() {
    let g = make(&ModelSpec::Graph { nodes: 150, radius: 0.2, seed: 4 }).unwrap();
    let radii: Vec<f64> = (1..=8).map(|k| 0.05 * k as f64).collect();
    let p = doubling_profile(g.space(), &radii, &DoublingConfig::default()).unwrap();
    assert_eq!(p.iterated_checked, 1000);
    assert!(p.iterated_violations.is_empty(), "{:?}", p.iterated_violations.first());
    assert!(p.envelope.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn balls_and_products() {
    let a = make(&ModelSpec::EuclideanGrid { dim: 1, h: 0.25, lo: 0.0, hi: 1.0, center: Some(vec![0.0]) }).unwrap();
    let open = ball_restrict(&a, 0.5, BallMode::Open).unwrap();
    let closed = ball_restrict(&a, 0.5, BallMode::Closed).unwrap();
    assert_eq!((open.len(), closed.len()), (2, 3));
    let sq = product(a.space(), a.space(), 100).unwrap();
    assert_eq!(sq.len(), 25);
    assert!((sq.dist(0, 24) - 2f64.sqrt()).abs() < 1e-15);
    assert!(product(a.space(), a.space(), 24).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rescale_composes(s in space_strategy(), a in 0.1..10.0f64, b in 0.1..10.0f64) {
        let twice = rescale(&rescale(&s, a).unwrap(), b).unwrap();
        let once = rescale(&s, a * b).unwrap();
        for i in 0..s.len() {
            for j in 0..s.len() {
                let (x, y) = (twice.space().dist(i, j), once.space().dist(i, j));
                prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
            }
        }
        prop_assert_eq!(twice.space().weights(), s.space().weights());
    }

    #[test]
    fn normalization_identity(s in space_strategy(), r in 0.2..4.0f64) {
        let (n, c) = normalize_at(&s, r).unwrap();
        prop_assert!((n.normalization_integral(r) - 1.0).abs() <= 1e-12);
        prop_assert!((c * s.normalization_integral(r) - 1.0).abs() <= 1e-12);
        // normalizing at r, then rescaling by r, is normalized at 1
        let u = rescale(&n, r).unwrap();
        prop_assert!((u.normalization_integral(1.0) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn products_are_metric(a in space_strategy(), b in space_strategy()) {
        let p = product(a.space(), b.space(), 100).unwrap();
        prop_assert!(validate(&p, TRIANGLE_TOLERANCE).is_valid());
        let total = a.space().total_mass() * b.space().total_mass();
        prop_assert!((p.total_mass() - total).abs() <= 1e-12 * total);
    }
}

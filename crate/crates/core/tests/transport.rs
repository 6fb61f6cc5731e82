mod common;

use common::lp_oracle::{brute_force, quantile_cost};
use mms_lab::transport::{monotone_1d, w2, Solver};
use mms_lab::{FiniteSpace, Geometry, Measure, Metric, Point};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn plane(coords: &[[f64; 2]]) -> FiniteSpace {
    let n = coords.len();
    let flat: Vec<f64> = coords.iter().flatten().copied().collect();
    let c = Array2::from_shape_vec((n, 2), flat).unwrap();
    let points = (0..n).map(|i| Point::new(i.to_string())).collect();
    FiniteSpace::new(points, Metric::from_coords(c, Geometry::Lp { p: 2.0 }), vec![1.0; n]).unwrap()
}

fn line(x: &[f64]) -> FiniteSpace {
    let c = Array2::from_shape_vec((x.len(), 1), x.to_vec()).unwrap();
    let points = (0..x.len()).map(|i| Point::new(i.to_string())).collect();
    FiniteSpace::new(points, Metric::from_coords(c, Geometry::Lp { p: 2.0 }), vec![1.0; x.len()]).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, support: &[usize]) -> Measure {
    let mut w = vec![0.0; n];
    for &i in support {
        w[i] = rng.random_range(0.05..1.0);
    }
    Measure::normalized(w).unwrap()
}

fn oracle_cost(space: &FiniteSpace, mu0: &Measure, mu1: &Measure) -> f64 {
    let (s0, s1) = (mu0.support(), mu1.support());
    let supply: Vec<f64> = s0.iter().map(|&i| mu0.as_slice()[i]).collect();
    let demand: Vec<f64> = s1.iter().map(|&j| mu1.as_slice()[j]).collect();
    let cost: Vec<Vec<f64>> = s0.iter().map(|&i| s1.iter().map(|&j| space.dist(i, j).powi(2)).collect()).collect();
    brute_force(&supply, &demand, &cost)
}

#[test]
fn exact_solver_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = 8;
        let coords: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let space = plane(&coords);
        let a = rng.random_range(1..=4);
        let b = rng.random_range(1..=4);
        let mu0 = random_measure(&mut rng, n, &(0..a).collect::<Vec<_>>());
        let mu1 = random_measure(&mut rng, n, &(4..4 + b).collect::<Vec<_>>());
        let got = w2(&space, &mu0, &mu1, Solver::Exact).unwrap();
        let want = oracle_cost(&space, &mu0, &mu1);
        assert!((got.cost - want).abs() <= 1e-9, "{} vs {}", got.cost, want);
        let m0 = got.plan.first_marginal();
        for i in 0..n {
            assert!((m0[i] - mu0.as_slice()[i]).abs() < 1e-12);
        }
    }
}

#[test]
fn degenerate_instances() {
    // equal supports and masses: zero cost
    let space = plane(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
    let mu = Measure::uniform_on(4, &[0, 1, 2, 3]).unwrap();
    assert!(w2(&space, &mu, &mu, Solver::Exact).unwrap().cost.abs() < 1e-15);
    // ties everywhere: all four corners to their diagonal opposites
    let mu0 = Measure::uniform_on(4, &[0, 3]).unwrap();
    let mu1 = Measure::uniform_on(4, &[1, 2]).unwrap();
    let r = w2(&space, &mu0, &mu1, Solver::Exact).unwrap();
    assert!((r.cost - 1.0).abs() < 1e-15);
}

#[test]
fn quantile_coupling_on_the_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let n = rng.random_range(2..=120);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let space = line(&x);
        let mu0 = random_measure(&mut rng, n, &(0..n).filter(|i| i % 2 == 0).collect::<Vec<_>>());
        let mu1 = random_measure(&mut rng, n, &(0..n).filter(|i| i % 3 != 0).collect::<Vec<_>>());
        let want = quantile_cost(&x, mu0.as_slice(), mu1.as_slice());
        let exact = w2(&space, &mu0, &mu1, Solver::Exact).unwrap().cost;
        let mono = monotone_1d(&space, &mu0, &mu1).unwrap().cost;
        assert!((exact - want).abs() <= 1e-9, "{exact} vs {want}");
        assert!((mono - want).abs() <= 1e-9, "{mono} vs {want}");
    }
}

#[test]
fn entropic_cost_within_declared_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let coords: Vec<[f64; 2]> = (0..30).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
    let space = plane(&coords);
    let mu0 = random_measure(&mut rng, 30, &(0..15).collect::<Vec<_>>());
    let mu1 = random_measure(&mut rng, 30, &(15..30).collect::<Vec<_>>());
    let exact = w2(&space, &mu0, &mu1, Solver::Exact).unwrap().cost;
    let ent = w2(&space, &mu0, &mu1, Solver::Entropic { epsilon: 1e-3 }).unwrap();
    assert!((ent.cost - exact).abs() <= ent.tolerance, "{} vs {exact} (±{})", ent.cost, ent.tolerance);
}

#[test]
fn rejects_bad_marginals() {
    let space = line(&[0.0, 1.0, 2.0]);
    let mu0 = Measure::new(vec![0.5, 0.5, 0.0]).unwrap();
    let mu1 = Measure::new(vec![0.0, 0.2, 0.2]).unwrap();
    assert!(w2(&space, &mu0, &mu1, Solver::Exact).is_err());
    let plane_space = plane(&[[0.0, 0.0], [1.0, 0.0]]);
    let d = Measure::dirac(2, 0);
    assert!(monotone_1d(&plane_space, &d, &d).is_err());
}

fn instance() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (3usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::array::uniform2(-2.0..2.0f64), n),
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, n),
            prop::collection::vec(0.0..1.0f64, n),
        )
    })
}

fn probability(w: &[f64]) -> Measure {
    let mut w = w.to_vec();
    w[0] += 0.01;
    Measure::normalized(w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn symmetric_and_triangle((coords, a, b, c) in instance()) {
        let space = plane(&coords);
        let (ma, mb, mc) = (probability(&a), probability(&b), probability(&c));
        let d = |x: &Measure, y: &Measure| w2(&space, x, y, Solver::Exact).unwrap().distance();
        let (ab, ba) = (d(&ma, &mb), d(&mb, &ma));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= d(&ma, &mc) + d(&mc, &mb) + 1e-9);
    }

    #[test]
    fn relabeling_points_changes_nothing((coords, a, b, _c) in instance(), seed in 0u64..1000) {
        let n = coords.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let space = plane(&coords);
        let moved = plane(&perm.iter().map(|&p| coords[p]).collect::<Vec<_>>());
        // bump the same physical point in both labelings
        let mut a2 = a.clone();
        a2[0] += 0.01;
        let mut b2 = b.clone();
        b2[0] += 0.01;
        let pa2: Vec<f64> = perm.iter().map(|&p| a2[p]).collect();
        let pb2: Vec<f64> = perm.iter().map(|&p| b2[p]).collect();
        let x = w2(&space, &Measure::normalized(a2).unwrap(), &Measure::normalized(b2).unwrap(), Solver::Exact).unwrap().cost;
        let y = w2(&moved, &Measure::normalized(pa2).unwrap(), &Measure::normalized(pb2).unwrap(), Solver::Exact).unwrap().cost;
        prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }

    #[test]
    fn scaling_the_metric((coords, a, b, _c) in instance(), lambda in 0.1..10.0f64) {
        let space = plane(&coords);
        let scaled = space.scale_metric(lambda);
        let (ma, mb) = (probability(&a), probability(&b));
        let x = w2(&space, &ma, &mb, Solver::Exact).unwrap().cost;
        let y = w2(&scaled, &ma, &mb, Solver::Exact).unwrap().cost;
        prop_assert!((y - lambda * lambda * x).abs() <= 1e-10 * y.max(1.0));
    }
}

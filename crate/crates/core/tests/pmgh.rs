mod common;

use common::pmgh_oracle::{surrogate, Small};
use mms_lab::pmgh::{convergence_diagnostic, pmgh_distance, PmghConfig, PmghMode, Trend};
use mms_lab::space::normalize_at;
use mms_lab::{FiniteSpace, Metric, Point, PointedSpace};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn from_matrix(d: &[Vec<f64>], w: &[f64], base: usize) -> PointedSpace {
    let n = d.len();
    let m = Array2::from_shape_fn((n, n), |(i, j)| d[i][j]);
    let points = (0..n).map(|i| Point::new(i.to_string())).collect();
    PointedSpace::new(FiniteSpace::new(points, Metric::from_matrix(m), w.to_vec()).unwrap(), base).unwrap()
}

fn normalized(d: &[Vec<f64>], w: &[f64], base: usize) -> PointedSpace {
    normalize_at(&from_matrix(d, w, base), 1.0).unwrap().0
}

fn as_small(s: &PointedSpace) -> Small {
    let n = s.len();
    Small {
        d: (0..n).map(|i| (0..n).map(|j| s.space().dist(i, j)).collect()).collect(),
        w: s.space().weights().to_vec(),
        base: s.base(),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<Vec<f64>> {
    let p: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..spread), rng.random_range(0.0..spread)]).collect();
    (0..n).map(|i| (0..n).map(|j| ((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt()).collect()).collect()
}

fn permuted(d: &[Vec<f64>], w: &[f64], perm: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = d.len();
    // new point k is old point perm[k]
    ((0..n).map(|i| (0..n).map(|j| d[perm[i]][perm[j]]).collect()).collect(), (0..n).map(|i| w[perm[i]]).collect())
}

#[test]
fn two_point_spaces() {
    let a = normalized(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[1.0, 1.0], 0);
    let b = normalized(&[vec![0.0, 1.2], vec![1.2, 0.0]], &[1.0, 1.0], 0);
    let cfg = PmghConfig::exhaustive();
    let est = pmgh_distance(&a, &b, &cfg).unwrap();
    let want = surrogate(&as_small(&a), &as_small(&b), &cfg.radii);
    assert!((est.value - want).abs() <= 1e-12, "{} vs {want}", est.value);
    // identity relation at R ≥ 2: distortion 0.1, and each unit of mass
    // moves a glued distance 0.1
    assert!((want - 0.3 * (0.25 + 0.125 + 0.0625)).abs() < 1e-12);
    assert_eq!(est.lower_bound, Some(est.value));
}

#[test]
fn exhaustive_matches_relation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = PmghConfig { radii: vec![1.0, 2.0], mode: PmghMode::exhaustive() };
    for _ in 0..12 {
        let na = rng.random_range(2..=3);
        let nb = rng.random_range(2..=3);
        let wa: Vec<f64> = (0..na).map(|_| rng.random_range(0.2..1.0)).collect();
        let wb: Vec<f64> = (0..nb).map(|_| rng.random_range(0.2..1.0)).collect();
        let a = normalized(&random_matrix(&mut rng, na, 1.5), &wa, 0);
        let b = normalized(&random_matrix(&mut rng, nb, 1.5), &wb, 0);
        let est = pmgh_distance(&a, &b, &cfg).unwrap();
        let want = surrogate(&as_small(&a), &as_small(&b), &cfg.radii);
        assert!((est.value - want).abs() <= 1e-12, "{} vs {want}", est.value);
    }
}

#[test]
fn isomorphic_pairs_are_at_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let n = rng.random_range(2..=4);
        let d = random_matrix(&mut rng, n, 3.0);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let (dp, wp) = permuted(&d, &w, &perm);
        let base_p = perm.iter().position(|&p| p == 0).unwrap();
        let a = normalized(&d, &w, 0);
        let b = normalized(&dp, &wp, base_p);
        for cfg in [PmghConfig::exhaustive(), PmghConfig::default()] {
            assert_eq!(pmgh_distance(&a, &b, &cfg).unwrap().value, 0.0);
        }
    }
}

#[test]
fn symmetric_and_relaxed_triangle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let cfg = PmghConfig::exhaustive();
    for _ in 0..10 {
        let spaces: Vec<PointedSpace> = (0..3)
            .map(|_| {
                let n = rng.random_range(2..=3);
                let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
                normalized(&random_matrix(&mut rng, n, 2.0), &w, 0)
            })
            .collect();
        let d = |i: usize, j: usize| pmgh_distance(&spaces[i], &spaces[j], &cfg).unwrap().value;
        let (ab, bc, ac) = (d(0, 1), d(1, 2), d(0, 2));
        assert_eq!(ab.to_bits(), d(1, 0).to_bits());
        assert!(ac <= 2.0 * (ab + bc) + 1e-12, "{ac} > 2({ab} + {bc})");
        let anneal = PmghConfig::default();
        let x = pmgh_distance(&spaces[0], &spaces[1], &anneal).unwrap().value;
        let y = pmgh_distance(&spaces[1], &spaces[0], &anneal).unwrap().value;
        assert_eq!(x.to_bits(), y.to_bits());
        // the annealer only gives an upper bound
        assert!(x >= ab - 1e-12);
    }
}

// Moving one distance by ε moves the distortion by at most ε/2 and every
// glued distance by at most 3ε/2, on balls of mass at most M.
#[test]
fn stability_under_one_entry() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = PmghConfig::exhaustive();
    for _ in 0..10 {
        let n = 4;
        let d = random_matrix(&mut rng, n, 1.5);
        let w = vec![1.0; n];
        let a = normalized(&d, &w, 0);
        let eps = 1e-3;
        let mut dp = d.clone();
        dp[1][2] += eps;
        dp[2][1] += eps;
        let b = from_matrix(&dp, a.space().weights(), 0);
        let mass: f64 = a.space().weights().iter().sum();
        let delta = pmgh_distance(&a, &a, &cfg).unwrap().value - pmgh_distance(&a, &b, &cfg).unwrap().value;
        assert!(delta.abs() <= eps / 2.0 + 1.5 * eps * mass + 1e-12, "{delta}");
    }
}

#[test]
fn diagnostics() {
    let a = normalized(&[vec![0.0, 1.0], vec![1.0, 0.0]], &[1.0, 1.0], 0);
    let b = normalized(&[vec![0.0, 0.5], vec![0.5, 0.0]], &[1.0, 1.0], 0);
    let cfg = PmghConfig::exhaustive();
    let same = convergence_diagnostic(&[a.clone(), a.clone(), a.clone()], &a, &cfg).unwrap();
    assert!(same.values.iter().all(|&v| v == 0.0));
    assert_eq!(same.trend, Trend::Constant);
    let alt = convergence_diagnostic(&[a.clone(), b.clone(), a.clone(), b], &a, &cfg).unwrap();
    assert_eq!(alt.trend, Trend::None);
    assert!(alt.to_csv(&[]).starts_with("i,r,value\n0,,0\n"));
}

mod common;

use common::quadrature::c_n;
use mms_lab::models::{ground_truth, lattice_ball, list, make, ModelSpec};
use mms_lab::space::{validate, TRIANGLE_TOLERANCE};
use mms_lab::Geometry;

#[test]
fn lattice_normalization_approaches_lebesgue() {
    for dim in 1..=3usize {
        let exact = c_n(dim);
        let mut errs = Vec::new();
        for s in [0.1, 0.05] {
            let b = lattice_ball(dim, Geometry::Lp { p: 2.0 }, s, 1.0).unwrap();
            // weights are c·sⁿ
            let c = b.space().weights()[0] / s.powi(dim as i32);
            errs.push((c - exact).abs() / exact);
        }
        assert!(errs[1] < 0.02, "dim {dim}: {errs:?}");
        assert!(errs[1] <= errs[0] + 1e-12, "dim {dim}: {errs:?}");
    }
}

#[test]
fn every_model_is_a_metric_space() {
    let specs = [
        ModelSpec::EuclideanGrid { dim: 2, h: 0.25, lo: -1.0, hi: 1.0, center: None },
        ModelSpec::LpPlane { p: f64::INFINITY, h: 0.25, lo: -1.0, hi: 1.0 },
        ModelSpec::LpPlane { p: 3.0, h: 0.25, lo: -1.0, hi: 1.0 },
        ModelSpec::Sphere { radius: 1.0, points: 150 },
        ModelSpec::Cone { angle: 4.0, h: 0.2, extent: 1.0 },
        ModelSpec::Cylinder { circumference: 1.0, h: 0.2, length: 2.0 },
        ModelSpec::WeightedSegment { h: 0.05, lo: -1.0, hi: 1.0, exponent: 2.0 },
        ModelSpec::Graph { nodes: 80, radius: 0.25, seed: 9 },
    ];
    for spec in &specs {
        let s = make(spec).unwrap();
        let r = validate(s.space(), TRIANGLE_TOLERANCE);
        assert!(r.is_valid(), "{}: {:?}", spec.kind(), r.violations.first());
        let gt = ground_truth(spec);
        assert_eq!(gt.kind, spec.kind());
    }
    assert_eq!(list().len(), specs.len() - 1);
}

#[test]
fn shorthands_parse() {
    for s in ["euclidean-grid:1d", "euclidean-grid:2d", "lp-plane:inf", "lp-plane:3", "sphere:300", "cone", "cylinder", "weighted-segment:2", "graph:7"] {
        assert!(make(&ModelSpec::from_shorthand(s).unwrap()).is_ok(), "{s}");
    }
    assert!(ModelSpec::from_shorthand("torus").is_err());
}

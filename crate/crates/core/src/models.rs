//! Model spaces with known ground truth.

use std::f64::consts::PI;

use ndarray::Array2;
use petgraph::algo::dijkstra;
use petgraph::graph::{NodeIndex, UnGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Geometry, Metric};
use crate::space::{normalize_at, FiniteSpace, Point, PointedSpace};
use crate::transport::Interpolator;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Grid `h·ℤⁿ ∩ [lo, hi]ⁿ` with Euclidean metric and weights `hⁿ`.
    EuclideanGrid {
        dim: usize,
        h: f64,
        lo: f64,
        hi: f64,
        /// Basepoint: the grid point nearest to these coordinates (default
        /// the centre of the box).
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Planar grid with an `ℓ^p` norm; `p` may be `"inf"`.
    LpPlane {
        #[serde(with = "crate::io::ext_real")]
        p: f64,
        h: f64,
        lo: f64,
        hi: f64,
    },
    /// Fibonacci lattice on the round sphere, intrinsic metric.
    Sphere { radius: f64, points: usize },
    /// Flat cone of total angle `angle`, rings of spacing `h` up to `extent`;
    /// the basepoint is the apex.
    Cone { angle: f64, h: f64, extent: f64 },
    /// Flat cylinder `(ℝ/cℤ) × [−length/2, length/2]`; the basepoint is on
    /// the middle circle.
    Cylinder { circumference: f64, h: f64, length: f64 },
    /// Grid on `[lo, hi]` with density proportional to `|x|^exponent`.
    WeightedSegment { h: f64, lo: f64, hi: f64, exponent: f64 },
    /// Random geometric graph in the unit square with edges shorter than
    /// `radius` (plus a Euclidean spanning tree so the graph is connected),
    /// shortest-path metric, uniform weights.
    Graph { nodes: usize, radius: f64, seed: u64 },
}

/// What is known about a model in the continuum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub kind: String,
    /// Tangent at generic points.
    pub tangent: String,
    /// Exponent `n` with `m(B_{2r}) ≈ 2ⁿ m(B_r)` at small scales.
    pub doubling_exponent: Option<f64>,
    /// `(K, N)` such that the continuum model is CD(K, N), when known.
    pub curvature_dimension: Option<(f64, f64)>,
    pub notes: String,
}

/// Kind name and parameter domains, as printed by `models list`.
pub fn list() -> Vec<(&'static str, &'static str)> {
    vec![
        ("euclidean-grid", "dim ≥ 1, h > 0, lo < hi, center: optional point"),
        ("lp-plane", "p ∈ [1, ∞] (\"inf\" allowed), h > 0, lo < hi"),
        ("sphere", "radius > 0, points ≥ 2"),
        ("cone", "angle ∈ (0, 2π], h > 0, extent > 0"),
        ("cylinder", "circumference > 0, h > 0, length > 0"),
        ("weighted-segment", "h > 0, lo < hi, exponent ≥ 0"),
        ("graph", "nodes ≥ 1, radius > 0, seed"),
    ]
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::EuclideanGrid { .. } => "euclidean-grid",
            ModelSpec::LpPlane { .. } => "lp-plane",
            ModelSpec::Sphere { .. } => "sphere",
            ModelSpec::Cone { .. } => "cone",
            ModelSpec::Cylinder { .. } => "cylinder",
            ModelSpec::WeightedSegment { .. } => "weighted-segment",
            ModelSpec::Graph { .. } => "graph",
        }
    }

    /// Short forms used on the command line: `euclidean-grid:2d`,
    /// `lp-plane:inf`, `lp-plane:3`, `sphere`, `cone:4.71`, `cylinder`,
    /// `weighted-segment:2`, `graph:7`.
    pub fn from_shorthand(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>, default: f64| -> Result<f64> {
            match a {
                None => Ok(default),
                Some("inf") => Ok(f64::INFINITY),
                Some(v) => v.parse().map_err(|_| Error::param(format!("bad model argument `{v}`"))),
            }
        };
        Ok(match kind {
            "euclidean-grid" => {
                let dim: usize = match arg {
                    None => 2,
                    Some(a) => a
                        .trim_end_matches('d')
                        .parse()
                        .map_err(|_| Error::param(format!("bad dimension `{a}`")))?,
                };
                let (h, lo, hi) = match dim {
                    1 => (0.01, 0.0, 1.0),
                    2 => (0.05, -1.0, 1.0),
                    _ => (0.1, -1.0, 1.0),
                };
                ModelSpec::EuclideanGrid { dim, h, lo, hi, center: None }
            }
            "lp-plane" => ModelSpec::LpPlane { p: num(arg, f64::INFINITY)?, h: 0.05, lo: -1.0, hi: 1.0 },
            "sphere" => ModelSpec::Sphere { radius: 1.0, points: num(arg, 2000.0)? as usize },
            "cone" => ModelSpec::Cone { angle: num(arg, 1.5 * PI)?, h: 0.05, extent: 1.0 },
            "cylinder" => ModelSpec::Cylinder { circumference: num(arg, 1.0)?, h: 0.05, length: 10.0 },
            "weighted-segment" => ModelSpec::WeightedSegment { h: 0.01, lo: 0.0, hi: 1.0, exponent: num(arg, 1.0)? },
            "graph" => ModelSpec::Graph { nodes: 200, radius: 0.15, seed: num(arg, 0.0)? as u64 },
            other => return Err(Error::UnknownKind(other.to_string())),
        })
    }

    fn check(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("{name} must be positive, got {v}")))
            }
        };
        let range = |lo: f64, hi: f64| {
            if lo < hi && lo.is_finite() && hi.is_finite() {
                Ok(())
            } else {
                Err(Error::param(format!("empty extent [{lo}, {hi}]")))
            }
        };
        match self {
            ModelSpec::EuclideanGrid { dim, h, lo, hi, center } => {
                if *dim == 0 {
                    return Err(Error::param("dimension must be at least 1"));
                }
                if let Some(c) = center {
                    if c.len() != *dim {
                        return Err(Error::param("center has the wrong dimension"));
                    }
                }
                pos("h", *h)?;
                range(*lo, *hi)
            }
            ModelSpec::LpPlane { p, h, lo, hi } => {
                if !(*p >= 1.0) {
                    return Err(Error::param(format!("p = {p} must be ≥ 1")));
                }
                pos("h", *h)?;
                range(*lo, *hi)
            }
            ModelSpec::Sphere { radius, points } => {
                if *points < 2 {
                    return Err(Error::param("sphere needs at least 2 points"));
                }
                pos("radius", *radius)
            }
            ModelSpec::Cone { angle, h, extent } => {
                if !(*angle > 0.0 && *angle <= 2.0 * PI + 1e-12) {
                    return Err(Error::param(format!("cone angle {angle} outside (0, 2π]")));
                }
                pos("h", *h)?;
                pos("extent", *extent)
            }
            ModelSpec::Cylinder { circumference, h, length } => {
                pos("circumference", *circumference)?;
                pos("h", *h)?;
                pos("length", *length)
            }
            ModelSpec::WeightedSegment { h, lo, hi, exponent } => {
                if !(*exponent >= 0.0) {
                    return Err(Error::param("exponent must be ≥ 0"));
                }
                pos("h", *h)?;
                range(*lo, *hi)
            }
            ModelSpec::Graph { nodes, radius, .. } => {
                if *nodes == 0 {
                    return Err(Error::param("graph needs at least one node"));
                }
                pos("radius", *radius)
            }
        }
    }
}

fn axis(h: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = ((hi - lo) / h + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + k as f64 * h).collect()
}

fn nearest_row(coords: &Array2<f64>, target: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, row) in coords.rows().into_iter().enumerate() {
        let d: f64 = row.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum();
        if d < best.1 - 1e-15 {
            best = (i, d);
        }
    }
    best.0
}

fn chart_space(coords: Array2<f64>, geometry: Geometry, weights: Vec<f64>, prefix: &str) -> Result<FiniteSpace> {
    let points = coords
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| Point::with_coords(format!("{prefix}{i}"), r.to_vec()))
        .collect();
    FiniteSpace::new(points, Metric::from_coords(coords, geometry), weights)
}

/// Cartesian grid `axis^dim` as coordinate rows.
fn grid_coords(ax: &[f64], dim: usize) -> Array2<f64> {
    let n = ax.len().pow(dim as u32);
    Array2::from_shape_fn((n, dim), |(i, d)| ax[(i / ax.len().pow(d as u32)) % ax.len()])
}

/// Builds the model. The interpolator accuracy is a bound on the geodesy
/// defect produced by rounding to the sample.
pub fn make(spec: &ModelSpec) -> Result<PointedSpace> {
    spec.check()?;
    match spec {
        ModelSpec::EuclideanGrid { dim, h, lo, hi, center } => {
            let ax = axis(*h, *lo, *hi);
            let coords = grid_coords(&ax, *dim);
            let c = center.clone().unwrap_or_else(|| vec![0.5 * (lo + hi); *dim]);
            let base = nearest_row(&coords, &c);
            let n = coords.nrows();
            let space = chart_space(coords, Geometry::Lp { p: 2.0 }, vec![h.powi(*dim as i32); n], "g")?
                .with_interpolator(Interpolator::chart(h * (*dim as f64).sqrt()))
                .with_resolution(*h);
            PointedSpace::new(space, base)
        }
        ModelSpec::LpPlane { p, h, lo, hi } => {
            let ax = axis(*h, *lo, *hi);
            let coords = grid_coords(&ax, 2);
            let base = nearest_row(&coords, &[0.5 * (lo + hi); 2]);
            let n = coords.nrows();
            let (geometry, acc) = if p.is_infinite() {
                (Geometry::LInf, *h)
            } else {
                (Geometry::Lp { p: *p }, h * 2f64.powf(1.0 / p))
            };
            let space = chart_space(coords, geometry, vec![h * h; n], "p")?
                .with_interpolator(Interpolator::chart(acc))
                .with_resolution(*h);
            PointedSpace::new(space, base)
        }
        ModelSpec::Sphere { radius, points } => {
            let n = *points;
            let golden = PI * (3.0 - 5f64.sqrt());
            let coords = Array2::from_shape_fn((n, 3), |(i, d)| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * i as f64;
                radius * [r * phi.cos(), r * phi.sin(), z][d]
            });
            let area = 4.0 * PI * radius * radius;
            let h = (area / n as f64).sqrt();
            let space = chart_space(coords, Geometry::Sphere { radius: *radius }, vec![area / n as f64; n], "s")?
                .with_interpolator(Interpolator::chart(2.0 * h))
                .with_resolution(h);
            PointedSpace::new(space, 0)
        }
        ModelSpec::Cone { angle, h, extent } => {
            let rings = (extent / h + 1e-9).floor() as usize;
            let mut rows = vec![[0.0, 0.0]];
            // apex cell: sector of radius h/2
            let mut weights = vec![angle * h * h / 8.0];
            for k in 1..=rings {
                let rho = k as f64 * h;
                let count = (angle * rho / h).ceil() as usize;
                for j in 0..count {
                    rows.push([rho, angle * j as f64 / count as f64]);
                    weights.push(angle * rho * h / count as f64);
                }
            }
            let coords = Array2::from_shape_fn((rows.len(), 2), |(i, d)| rows[i][d]);
            let space = chart_space(coords, Geometry::Cone { angle: *angle }, weights, "c")?
                .with_interpolator(Interpolator::chart(2.0 * h))
                .with_resolution(*h);
            PointedSpace::new(space, 0)
        }
        ModelSpec::Cylinder { circumference, h, length } => {
            let nu = (circumference / h).round().max(1.0) as usize;
            let hu = circumference / nu as f64;
            let half = (0.5 * length / h + 1e-9).floor() as i64;
            let nz = (2 * half + 1) as usize;
            let coords = Array2::from_shape_fn((nu * nz, 2), |(i, d)| {
                if d == 0 {
                    (i % nu) as f64 * hu
                } else {
                    ((i / nu) as i64 - half) as f64 * h
                }
            });
            let base = half as usize * nu;
            let space = chart_space(coords, Geometry::Cylinder { circumference: *circumference }, vec![hu * h; nu * nz], "y")?
                .with_interpolator(Interpolator::chart(hu.hypot(*h)))
                .with_resolution(hu.max(*h));
            PointedSpace::new(space, base)
        }
        ModelSpec::WeightedSegment { h, lo, hi, exponent } => {
            let ax = axis(*h, *lo, *hi);
            let coords = Array2::from_shape_fn((ax.len(), 1), |(i, _)| ax[i]);
            let weights: Vec<f64> = ax.iter().map(|x| h * x.abs().powf(*exponent)).collect();
            let base = (0..ax.len())
                .filter(|&i| weights[i] > 0.0)
                .min_by(|&a, &b| (ax[a] - 0.5 * (lo + hi)).abs().total_cmp(&(ax[b] - 0.5 * (lo + hi)).abs()))
                .ok_or_else(|| Error::param("weight profile vanishes everywhere"))?;
            let space = chart_space(coords, Geometry::Lp { p: 2.0 }, weights, "w")?
                .with_interpolator(Interpolator::chart(*h))
                .with_resolution(*h);
            PointedSpace::new(space, base)
        }
        ModelSpec::Graph { nodes, radius, seed } => {
            let n = *nodes;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
            let dist = |a: usize, b: usize| (pts[a][0] - pts[b][0]).hypot(pts[a][1] - pts[b][1]);
            let mut edges: Vec<(usize, usize, f64)> = Vec::new();
            for a in 0..n {
                for b in (a + 1)..n {
                    if dist(a, b) < *radius {
                        edges.push((a, b, dist(a, b)));
                    }
                }
            }
            edges.extend(euclidean_spanning_tree(&pts));
            let matrix = shortest_path_closure(n, &edges)?;
            let longest = edges.iter().map(|e| e.2).fold(0.0, f64::max);
            let points = (0..n).map(|i| Point::with_coords(format!("v{i}"), pts[i].to_vec())).collect();
            let space = FiniteSpace::new(points, Metric::from_matrix(matrix), vec![1.0 / n as f64; n])?
                .with_interpolator(Interpolator::metric_search(2.0 * longest))
                .with_resolution(*radius);
            PointedSpace::new(space, 0)
        }
    }
}

fn euclidean_spanning_tree(pts: &[[f64; 2]]) -> Vec<(usize, usize, f64)> {
    // Prim on the complete graph
    let n = pts.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![(f64::INFINITY, 0usize); n];
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    in_tree[0] = true;
    for v in 1..n {
        best[v] = ((pts[0][0] - pts[v][0]).hypot(pts[0][1] - pts[v][1]), 0);
    }
    for _ in 1..n {
        let v = (0..n).filter(|&v| !in_tree[v]).min_by(|&a, &b| best[a].0.total_cmp(&best[b].0)).unwrap();
        in_tree[v] = true;
        out.push((best[v].1, v, best[v].0));
        for u in 0..n {
            if !in_tree[u] {
                let d = (pts[u][0] - pts[v][0]).hypot(pts[u][1] - pts[v][1]);
                if d < best[u].0 {
                    best[u] = (d, v);
                }
            }
        }
    }
    out
}

/// All-pairs shortest paths on a weighted undirected graph.
pub fn shortest_path_closure(n: usize, edges: &[(usize, usize, f64)]) -> Result<Array2<f64>> {
    let mut g: UnGraph<(), f64> = UnGraph::with_capacity(n, edges.len());
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for &(a, b, len) in edges {
        if a >= n || b >= n {
            return Err(Error::Format(format!("edge ({a}, {b}) refers to a missing node")));
        }
        if !(len >= 0.0) || !len.is_finite() {
            return Err(Error::Format(format!("edge ({a}, {b}) has length {len}")));
        }
        g.add_edge(nodes[a], nodes[b], len);
    }
    let mut m = Array2::zeros((n, n));
    for (a, &na) in nodes.iter().enumerate() {
        let d = dijkstra(&g, na, None, |e| *e.weight());
        if d.len() < n {
            return Err(Error::InvalidSpace("graph is disconnected".into()));
        }
        for (&node, &len) in &d {
            m[[a, node.index()]] = len;
        }
    }
    // summation order differs between the two directions
    for a in 0..n {
        for b in (a + 1)..n {
            let d = m[[a, b]].min(m[[b, a]]);
            m[[a, b]] = d;
            m[[b, a]] = d;
        }
    }
    Ok(m)
}

pub fn ground_truth(spec: &ModelSpec) -> GroundTruth {
    let gt = |tangent: String, exp: Option<f64>, cd: Option<(f64, f64)>, notes: &str| GroundTruth {
        kind: spec.kind().to_string(),
        tangent,
        doubling_exponent: exp,
        curvature_dimension: cd,
        notes: notes.to_string(),
    };
    match spec {
        ModelSpec::EuclideanGrid { dim, .. } => {
            let n = *dim as f64;
            gt(format!("R^{dim}"), Some(n), Some((0.0, n)), "flat space; boundary points are exceptional")
        }
        ModelSpec::LpPlane { p, .. } if *p == 2.0 => gt("R^2".into(), Some(2.0), Some((0.0, 2.0)), "Euclidean plane"),
        ModelSpec::LpPlane { p, .. } => gt(
            format!("l^{p} plane"),
            Some(2.0),
            None,
            "normed plane, self-similar, so it is its own tangent; not Riemannian, hence not R^2",
        ),
        ModelSpec::Sphere { .. } => {
            gt("R^2".into(), Some(2.0), Some((1.0, 2.0)), "smooth surface; every point is regular (unit sphere has K = 1)")
        }
        ModelSpec::Cone { angle, .. } => gt(
            "R^2 away from the apex; the cone itself at the apex".into(),
            Some(2.0),
            (*angle <= 2.0 * PI).then_some((0.0, 2.0)),
            "flat cone with angle ≤ 2π; the apex is the exceptional point",
        ),
        ModelSpec::Cylinder { .. } => gt(
            "R^2".into(),
            Some(2.0),
            Some((0.0, 2.0)),
            "flat cylinder; at large scale it looks like a circle times a line",
        ),
        ModelSpec::WeightedSegment { exponent, .. } => gt(
            "R^1".into(),
            Some(1.0),
            Some((0.0, 1.0 + exponent)),
            "interval with density |x|^a; the density vanishes at 0, which is exceptional",
        ),
        ModelSpec::Graph { .. } => gt("none".into(), None, None, "metric graph sample; no continuum limit claimed"),
    }
}

/// `ℤⁿ·spacing` (or its `ℓ^p` analogue) inside the open ball of radius
/// `window` about the origin, normalized at unit scale. Used as tangent
/// models at a matched resolution.
pub fn lattice_ball(dim: usize, geometry: Geometry, spacing: f64, window: f64) -> Result<PointedSpace> {
    if dim == 0 {
        let space = FiniteSpace::new(vec![Point::new("o")], Metric::from_matrix(Array2::zeros((1, 1))), vec![1.0])?;
        return PointedSpace::new(space, 0);
    }
    if !(spacing > 0.0 && window > 0.0) {
        return Err(Error::param("spacing and window must be positive"));
    }
    let k = (window / spacing).ceil() as i64;
    let ax: Vec<f64> = (-k..=k).map(|i| i as f64 * spacing).collect();
    let full = grid_coords(&ax, dim);
    let origin = ndarray::Array1::zeros(dim);
    let keep: Vec<usize> = (0..full.nrows())
        .filter(|&i| geometry.distance(full.row(i), origin.view()) < window * (1.0 - 1e-12))
        .collect();
    let coords = Array2::from_shape_fn((keep.len(), dim), |(i, d)| full[[keep[i], d]]);
    let base = nearest_row(&coords, &vec![0.0; dim]);
    let n = coords.nrows();
    let acc = spacing * (dim as f64).sqrt();
    let space = chart_space(coords, geometry, vec![spacing.powi(dim as i32); n], "z")?
        .with_interpolator(Interpolator::chart(acc))
        .with_resolution(spacing);
    Ok(normalize_at(&PointedSpace::new(space, base)?, 1.0)?.0)
}

/// Circle of the given circumference sampled at spacing close to `h`,
/// normalized at unit scale.
pub fn circle(circumference: f64, h: f64) -> Result<PointedSpace> {
    let n = (circumference / h).round().max(1.0) as usize;
    let hu = circumference / n as f64;
    let coords = Array2::from_shape_fn((n, 1), |(i, _)| i as f64 * hu);
    let space = chart_space(coords, Geometry::Cylinder { circumference }, vec![hu; n], "o")?
        .with_interpolator(Interpolator::chart(hu))
        .with_resolution(hu);
    Ok(normalize_at(&PointedSpace::new(space, 0)?, 1.0)?.0)
}

//! Distance matrices that are evaluated on demand.
//!
//! A [`Metric`] behaves like a symmetric `n × n` matrix of distances but may
//! be backed by a dense matrix, by a coordinate formula, or by the
//! Pythagorean product of two other metrics. Restriction to a subset of
//! points and multiplication by a constant are O(1)/O(k) views over the same
//! shared source, so blow-up sequences and ball restrictions never copy the
//! underlying data.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

/// Closed-form distance on coordinate charts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    /// `ℓ^p` norm distance, `p ≥ 1`.
    Lp { p: f64 },
    /// `ℓ^∞` norm distance.
    LInf,
    /// Flat cylinder: first coordinate is periodic with the given
    /// circumference, the remaining ones are Euclidean.
    Cylinder { circumference: f64 },
    /// Round sphere; coordinates are points of `ℝ³` on the sphere, distance is
    /// the great-circle length.
    Sphere { radius: f64 },
    /// Flat cone of total angle `angle`; coordinates are `(ρ, φ)` with
    /// `φ ∈ [0, angle)`, apex at `ρ = 0`.
    Cone { angle: f64 },
}

impl Geometry {
    pub fn distance(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        match *self {
            Geometry::Lp { p } => {
                if p == 2.0 {
                    a.iter()
                        .zip(b.iter())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt()
                } else if p == 1.0 {
                    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
                } else {
                    a.iter()
                        .zip(b.iter())
                        .map(|(x, y)| (x - y).abs().powf(p))
                        .sum::<f64>()
                        .powf(1.0 / p)
                }
            }
            Geometry::LInf => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
            Geometry::Cylinder { circumference } => {
                let du = periodic_gap(a[0] - b[0], circumference);
                let rest: f64 = a
                    .iter()
                    .zip(b.iter())
                    .skip(1)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                (du * du + rest).sqrt()
            }
            Geometry::Sphere { radius } => {
                let chord = a
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                2.0 * radius * (chord / (2.0 * radius)).min(1.0).asin()
            }
            Geometry::Cone { angle } => {
                let (ra, rb) = (a[0], b[0]);
                let dphi = periodic_gap(a[1] - b[1], angle);
                if dphi >= PI {
                    ra + rb
                } else {
                    (ra * ra + rb * rb - 2.0 * ra * rb * dphi.cos()).max(0.0).sqrt()
                }
            }
        }
    }

    /// Chart coordinates of the constant-speed geodesic from `a` to `b` at
    /// time `t`. Where geodesics are not unique (antipodes, cone points at
    /// angle exactly π) a deterministic choice is made.
    pub fn geodesic_point(&self, a: ArrayView1<f64>, b: ArrayView1<f64>, t: f64) -> Vec<f64> {
        match *self {
            Geometry::Lp { .. } | Geometry::LInf => a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (1.0 - t) * x + t * y)
                .collect(),
            Geometry::Cylinder { circumference } => {
                let mut du = (b[0] - a[0]).rem_euclid(circumference);
                if du > circumference / 2.0 {
                    du -= circumference;
                }
                let mut out: Vec<f64> = a
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| (1.0 - t) * x + t * y)
                    .collect();
                out[0] = (a[0] + t * du).rem_euclid(circumference);
                out
            }
            Geometry::Sphere { radius } => {
                let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum::<f64>()
                    / (radius * radius);
                let omega = dot.clamp(-1.0, 1.0).acos();
                if omega < 1e-12 {
                    return a.to_vec();
                }
                let (wa, wb) = if (PI - omega) < 1e-9 {
                    // antipodal: rotate through a fixed orthogonal direction
                    let axis = orthogonal_unit(a, radius);
                    let ang = t * PI;
                    return a
                        .iter()
                        .zip(axis.iter())
                        .map(|(x, u)| x * ang.cos() + radius * u * ang.sin())
                        .collect();
                } else {
                    (
                        ((1.0 - t) * omega).sin() / omega.sin(),
                        (t * omega).sin() / omega.sin(),
                    )
                };
                a.iter().zip(b.iter()).map(|(x, y)| wa * x + wb * y).collect()
            }
            Geometry::Cone { angle } => {
                let (ra, rb) = (a[0], b[0]);
                let mut dphi = (b[1] - a[1]).rem_euclid(angle);
                if dphi > angle / 2.0 {
                    dphi -= angle;
                }
                if dphi.abs() < PI {
                    let (bx, by) = (rb * dphi.cos(), rb * dphi.sin());
                    let (px, py) = ((1.0 - t) * ra + t * bx, t * by);
                    let rho = px.hypot(py);
                    let phi = if rho > 0.0 { a[1] + py.atan2(px) } else { a[1] };
                    vec![rho, phi.rem_euclid(angle)]
                } else {
                    let s = t * (ra + rb);
                    if s <= ra {
                        vec![ra - s, a[1]]
                    } else {
                        vec![s - ra, b[1]]
                    }
                }
            }
        }
    }
}

fn periodic_gap(delta: f64, period: f64) -> f64 {
    // |δ| keeps the result exactly symmetric in the two arguments
    let d = delta.abs().rem_euclid(period);
    d.min(period - d)
}

fn orthogonal_unit(a: ArrayView1<f64>, radius: f64) -> [f64; 3] {
    let u = [a[0] / radius, a[1] / radius, a[2] / radius];
    let helper = if u[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let d = u[0] * helper[0] + u[1] * helper[1] + u[2] * helper[2];
    let mut v = [helper[0] - d * u[0], helper[1] - d * u[1], helper[2] - d * u[2]];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

#[derive(Debug)]
enum Source {
    Dense(Array2<f64>),
    Coords { coords: Array2<f64>, geometry: Geometry },
    Product { a: Metric, b: Metric },
}

impl Source {
    fn len(&self) -> usize {
        match self {
            Source::Dense(m) => m.nrows(),
            Source::Coords { coords, .. } => coords.nrows(),
            Source::Product { a, b } => a.len() * b.len(),
        }
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        match self {
            Source::Dense(m) => m[[i, j]],
            Source::Coords { coords, geometry } => geometry.distance(coords.row(i), coords.row(j)),
            Source::Product { a, b } => {
                let nb = b.len();
                a.dist(i / nb, j / nb).hypot(b.dist(i % nb, j % nb))
            }
        }
    }
}

/// A symmetric distance matrix, possibly evaluated lazily.
#[derive(Clone, Debug)]
pub struct Metric {
    source: Arc<Source>,
    index: Option<Arc<[usize]>>,
    scale: f64,
}

impl Metric {
    pub fn from_matrix(matrix: Array2<f64>) -> Self {
        Self { source: Arc::new(Source::Dense(matrix)), index: None, scale: 1.0 }
    }

    pub fn from_coords(coords: Array2<f64>, geometry: Geometry) -> Self {
        Self {
            source: Arc::new(Source::Coords { coords, geometry }),
            index: None,
            scale: 1.0,
        }
    }

    /// `√(d_a² + d_b²)` on the Cartesian product; point `(i, j)` has index
    /// `i · b.len() + j`.
    pub fn product(a: Metric, b: Metric) -> Self {
        Self { source: Arc::new(Source::Product { a, b }), index: None, scale: 1.0 }
    }

    pub fn len(&self) -> usize {
        match &self.index {
            Some(ix) => ix.len(),
            None => self.source.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn raw(&self, i: usize) -> usize {
        match &self.index {
            Some(ix) => ix[i],
            None => i,
        }
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.scale * self.source.dist(self.raw(i), self.raw(j))
    }

    /// Stored entry `(i, j)`, without the zero-diagonal shortcut of
    /// [`Metric::dist`]; used by validation.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.scale * self.source.dist(self.raw(i), self.raw(j))
    }

    /// Multiplicative factor applied on top of the source distances.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { source: self.source.clone(), index: self.index.clone(), scale: self.scale * factor }
    }

    /// The sub-matrix on `indices` (in the given order).
    pub fn restrict(&self, indices: &[usize]) -> Self {
        let ix: Arc<[usize]> = indices.iter().map(|&i| self.raw(i)).collect();
        Self { source: self.source.clone(), index: Some(ix), scale: self.scale }
    }

    pub fn geometry(&self) -> Option<&Geometry> {
        match &*self.source {
            Source::Coords { geometry, .. } => Some(geometry),
            _ => None,
        }
    }

    /// Unscaled chart coordinates of point `i`, when the metric is a
    /// coordinate formula.
    pub fn chart(&self, i: usize) -> Option<ArrayView1<'_, f64>> {
        match &*self.source {
            Source::Coords { coords, .. } => Some(coords.row(self.raw(i))),
            _ => None,
        }
    }

    pub fn chart_dim(&self) -> Option<usize> {
        match &*self.source {
            Source::Coords { coords, .. } => Some(coords.ncols()),
            _ => None,
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.len()).map(|j| self.dist(i, j)).collect()
    }

    pub fn to_matrix(&self) -> Array2<f64> {
        let n = self.len();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.dist(i, j);
                m[[i, j]] = d;
                m[[j, i]] = d;
            }
        }
        m
    }

    /// Whether `dist` is a direct matrix lookup (no formula evaluation).
    pub fn is_dense(&self) -> bool {
        matches!(&*self.source, Source::Dense(_))
    }

    /// Largest pairwise distance. O(n²).
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max(self.dist(i, j));
            }
        }
        best
    }
}

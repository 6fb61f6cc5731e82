//! Discrete geodesic selection.
//!
//! Finite samples are not geodesic spaces, so the "point at time `t` on a
//! geodesic from `i` to `j`" is approximated by the sample point nearest to
//! the ideal geodesic point. Ties are broken by index according to
//! [`TieBreak`].

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Geometry;
use crate::space::FiniteSpace;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    Lowest,
    Highest,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationKind {
    /// Ideal geodesic point computed in the coordinate chart of the metric,
    /// rounded to the nearest sample point.
    Chart,
    /// For any metric: the point `k` minimising
    /// `|d(i,k) − t·d(i,j)| + |d(k,j) − (1−t)·d(i,j)|`.
    MetricSearch,
}

/// Geodesic oracle attached to a space, with its declared accuracy `ε_geo`
/// in the distance units of the space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolator {
    pub kind: InterpolationKind,
    pub accuracy: f64,
    #[serde(default)]
    pub ties: TieBreak,
}

impl Interpolator {
    pub fn chart(accuracy: f64) -> Self {
        Self { kind: InterpolationKind::Chart, accuracy, ties: TieBreak::Lowest }
    }

    pub fn metric_search(accuracy: f64) -> Self {
        Self { kind: InterpolationKind::MetricSearch, accuracy, ties: TieBreak::Lowest }
    }

    pub fn with_ties(mut self, ties: TieBreak) -> Self {
        self.ties = ties;
        self
    }

    pub(crate) fn rescaled(&self, factor: f64) -> Self {
        Self { accuracy: self.accuracy * factor, ..self.clone() }
    }
}

/// Bucket grid over chart coordinates for nearest-point queries.
struct Buckets {
    cell: f64,
    dim: usize,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    extent: i64,
}

impl Buckets {
    fn key(&self, x: &[f64]) -> Vec<i64> {
        x.iter().map(|v| (v / self.cell).floor() as i64).collect()
    }
}

/// Answers `interp(i, j, t)` queries on one space.
pub struct Locator<'a> {
    space: &'a FiniteSpace,
    interp: Interpolator,
    buckets: Option<Buckets>,
}

impl<'a> Locator<'a> {
    pub fn new(space: &'a FiniteSpace) -> Result<Self> {
        let interp = space.interpolator().cloned().ok_or(Error::MissingInterpolator)?;
        Ok(Self::with_interpolator(space, interp))
    }

    pub fn with_interpolator(space: &'a FiniteSpace, interp: Interpolator) -> Self {
        let buckets = if interp.kind == InterpolationKind::Chart {
            build_buckets(space)
        } else {
            None
        };
        Self { space, interp, buckets }
    }

    pub fn interpolator(&self) -> &Interpolator {
        &self.interp
    }

    pub fn interp(&self, i: usize, j: usize, t: f64) -> usize {
        if t <= 0.0 || i == j {
            return i;
        }
        if t >= 1.0 {
            return j;
        }
        let metric = self.space.metric();
        match (self.interp.kind, metric.geometry()) {
            (InterpolationKind::Chart, Some(geometry)) => {
                let a = metric.chart(i).expect("chart metric");
                let b = metric.chart(j).expect("chart metric");
                let target = geometry.geodesic_point(a, b, t);
                self.nearest(&target)
            }
            _ => self.metric_search(i, j, t),
        }
    }

    fn better(&self, k: usize, score: f64, best: usize, best_score: f64, tol: f64) -> bool {
        if score < best_score - tol {
            return true;
        }
        if score <= best_score + tol {
            return match self.interp.ties {
                TieBreak::Lowest => k < best,
                TieBreak::Highest => k > best,
            };
        }
        false
    }

    fn metric_search(&self, i: usize, j: usize, t: f64) -> usize {
        let d = self.space.dist(i, j);
        let tol = 1e-12 * d.max(f64::MIN_POSITIVE);
        let mut best = i;
        let mut best_score = f64::INFINITY;
        for k in 0..self.space.len() {
            let s = (self.space.dist(i, k) - t * d).abs() + (self.space.dist(k, j) - (1.0 - t) * d).abs();
            if best_score.is_infinite() || self.better(k, s, best, best_score, tol) {
                best = k;
                best_score = s;
            }
        }
        best
    }

    /// Index of the sample point nearest (in chart distance) to `target`.
    pub fn nearest(&self, target: &[f64]) -> usize {
        let metric = self.space.metric();
        let geometry = metric.geometry().expect("chart metric");
        let tview = ndarray::ArrayView1::from(target);
        let mut best = usize::MAX;
        let mut best_score = f64::INFINITY;
        let consider = |k: usize, best: &mut usize, best_score: &mut f64| {
            let s = geometry.distance(metric.chart(k).unwrap(), tview);
            let tol = if best_score.is_finite() { 1e-12 * (1.0 + s.min(*best_score)) } else { 0.0 };
            if *best == usize::MAX || self.better(k, s, *best, *best_score, tol) {
                *best = k;
                *best_score = s;
            }
        };
        match &self.buckets {
            Some(b) => {
                let center = b.key(target);
                let mut ring: i64 = 0;
                loop {
                    for_each_ring_cell(&center, ring, b.dim, &mut |key| {
                        if let Some(list) = b.cells.get(key) {
                            for &k in list {
                                consider(k, &mut best, &mut best_score);
                            }
                        }
                    });
                    let lower = (ring as f64 - 1.0).max(0.0) * b.cell;
                    if (best != usize::MAX && lower > best_score * (1.0 + 1e-9) + 1e-12) || ring > b.extent {
                        break;
                    }
                    ring += 1;
                }
            }
            None => {
                for k in 0..self.space.len() {
                    consider(k, &mut best, &mut best_score);
                }
            }
        }
        best
    }
}

fn for_each_ring_cell(center: &[i64], ring: i64, dim: usize, f: &mut dyn FnMut(&Vec<i64>)) {
    let mut offset = vec![-ring; dim];
    loop {
        if offset.iter().any(|o| o.abs() == ring) || ring == 0 {
            let key: Vec<i64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            f(&key);
        }
        let mut d = 0;
        loop {
            if d == dim {
                return;
            }
            offset[d] += 1;
            if offset[d] > ring {
                offset[d] = -ring;
                d += 1;
            } else {
                break;
            }
        }
    }
}

fn build_buckets(space: &FiniteSpace) -> Option<Buckets> {
    let metric = space.metric();
    let geometry = metric.geometry()?;
    // Chebyshev ring bounds hold for norms (dominated from below by ℓ∞) and
    // for the sphere (great-circle length dominates the chord).
    if !matches!(geometry, Geometry::Lp { .. } | Geometry::LInf | Geometry::Sphere { .. }) {
        return None;
    }
    let n = space.len();
    let dim = metric.chart_dim()?;
    if n < 64 || dim == 0 || dim > 4 {
        return None;
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for k in 0..n {
        let c = metric.chart(k).unwrap();
        for d in 0..dim {
            lo[d] = lo[d].min(c[d]);
            hi[d] = hi[d].max(c[d]);
        }
    }
    let spans: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l).max(0.0)).collect();
    let active: Vec<f64> = spans.iter().copied().filter(|s| *s > 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let volume: f64 = active.iter().product();
    let cell = (volume / n as f64).powf(1.0 / active.len() as f64).max(1e-12) * 1.5;
    let extent = spans.iter().map(|s| (s / cell).ceil() as i64 + 2).max().unwrap_or(2);
    let mut b = Buckets { cell, dim, cells: HashMap::new(), extent };
    for k in 0..n {
        let c: Vec<f64> = metric.chart(k).unwrap().to_vec();
        let key = b.key(&c);
        b.cells.entry(key).or_default().push(k);
    }
    Some(b)
}

//! Finite metric measure spaces and the operations that act on them without
//! any transport: validation, rescaling, normalization at a basepoint, ball
//! restriction, doubling profiles and metric products.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Geometry, Metric};
use crate::transport::Interpolator;

/// Default absolute tolerance for the triangle inequality on floating inputs.
pub const TRIANGLE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
}

impl Point {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), coords: None }
    }

    pub fn with_coords(id: impl Into<String>, coords: Vec<f64>) -> Self {
        Self { id: id.into(), coords: Some(coords) }
    }
}

/// Points, a distance matrix and nonnegative weights: the discrete
/// stand-in for a metric measure space.
///
/// `resolution` is the sample spacing `h` in the distance units of the
/// space, when known; it is rescaled together with the metric.
#[derive(Clone, Debug)]
pub struct FiniteSpace {
    points: Vec<Point>,
    metric: Metric,
    weights: Vec<f64>,
    interpolator: Option<Interpolator>,
    resolution: Option<f64>,
}

impl FiniteSpace {
    /// Checks lengths and weights; the metric axioms are checked by
    /// [`validate`].
    pub fn new(points: Vec<Point>, metric: Metric, weights: Vec<f64>) -> Result<Self> {
        if points.len() != metric.len() || weights.len() != metric.len() {
            return Err(Error::InvalidSpace(format!(
                "{} points, {}x{} metric, {} weights",
                points.len(),
                metric.len(),
                metric.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidSpace("empty point set".into()));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidSpace(format!("weight {i} is {}", weights[i])));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidSpace("total mass is zero".into()));
        }
        Ok(Self { points, metric, weights, interpolator: None, resolution: None })
    }

    pub fn with_interpolator(mut self, interpolator: Interpolator) -> Self {
        self.interpolator = Some(interpolator);
        self
    }

    pub fn without_interpolator(mut self) -> Self {
        self.interpolator = None;
        self
    }

    pub fn with_resolution(mut self, h: f64) -> Self {
        self.resolution = Some(h);
        self
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        let mut s = FiniteSpace::new(self.points.clone(), self.metric.clone(), weights)?;
        s.interpolator = self.interpolator.clone();
        s.resolution = self.resolution;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interpolator(&self) -> Option<&Interpolator> {
        self.interpolator.as_ref()
    }

    pub fn resolution(&self) -> Option<f64> {
        self.resolution
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.metric.dist(i, j)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Indices with positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.metric.diameter()
    }

    /// Sub-space on `indices` (ambient metric, in the given order).
    pub fn restrict(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i].clone()).collect();
        let weights = indices.iter().map(|&i| self.weights[i]).collect();
        let mut s = FiniteSpace::new(points, self.metric.restrict(indices), weights)?;
        s.interpolator = self.interpolator.clone();
        s.resolution = self.resolution;
        Ok(s)
    }

    /// Metric multiplied by `factor`; resolution and interpolation accuracy
    /// follow.
    pub fn scale_metric(&self, factor: f64) -> Self {
        Self {
            points: self.points.clone(),
            metric: self.metric.scaled(factor),
            weights: self.weights.clone(),
            interpolator: self.interpolator.as_ref().map(|i| i.rescaled(factor)),
            resolution: self.resolution.map(|h| h * factor),
        }
    }

    /// Mass of the open ball `{y : d(x, y) < r}`.
    pub fn ball_mass(&self, x: usize, r: f64) -> f64 {
        (0..self.len()).filter(|&y| self.dist(x, y) < r).map(|y| self.weights[y]).sum()
    }
}

/// A space together with a basepoint in its support.
#[derive(Clone, Debug)]
pub struct PointedSpace {
    space: FiniteSpace,
    base: usize,
}

impl PointedSpace {
    pub fn new(space: FiniteSpace, base: usize) -> Result<Self> {
        if base >= space.len() {
            return Err(Error::InvalidSpace(format!("basepoint {base} out of range")));
        }
        if space.weights[base] <= 0.0 {
            return Err(Error::InvalidSpace(format!("basepoint {base} is not in the support")));
        }
        Ok(Self { space, base })
    }

    pub fn space(&self) -> &FiniteSpace {
        &self.space
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn into_space(self) -> FiniteSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    pub fn dist_to_base(&self, i: usize) -> f64 {
        self.space.dist(self.base, i)
    }

    /// Same space, different basepoint.
    pub fn repoint(&self, base: usize) -> Result<Self> {
        PointedSpace::new(self.space.clone(), base)
    }

    /// `Σ_{d(y,x̄)<r} (1 − d(y,x̄)/r)·w(y)`; equals 1 at `r = 1` for a
    /// normalized space.
    pub fn normalization_integral(&self, r: f64) -> f64 {
        (0..self.len())
            .filter_map(|y| {
                let d = self.dist_to_base(y);
                (d < r).then(|| (1.0 - d / r) * self.space.weights[y])
            })
            .sum()
    }
}

// ---------------------------------------------------------------------------
// validate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    NonFinite { i: usize, j: usize },
    Diagonal { i: usize, value: f64 },
    Negative { i: usize, j: usize, value: f64 },
    Asymmetry { i: usize, j: usize, dij: f64, dji: f64 },
    /// `d(i,j) > d(i,k) + d(k,j) + τ`.
    Triangle { i: usize, j: usize, k: usize, excess: f64 },
    NegativeWeight { i: usize, value: f64 },
    ZeroMass,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Number of violations found; `violations` is truncated to
    /// [`ValidationReport::MAX_LISTED`].
    pub total: usize,
}

impl ValidationReport {
    pub const MAX_LISTED: usize = 10_000;

    pub fn is_valid(&self) -> bool {
        self.total == 0
    }

    fn push(&mut self, v: Violation) {
        self.total += 1;
        if self.violations.len() < Self::MAX_LISTED {
            self.violations.push(v);
        }
    }
}

/// Checks every metric and measure invariant. Diagonal and symmetry are
/// exact; the triangle inequality uses the absolute tolerance `tol_tri`.
/// The triangle scan is O(n³).
pub fn validate(space: &FiniteSpace, tol_tri: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = space.len();
    let metric = space.metric();
    let mut m = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = metric.entry(i, j);
        }
    }
    for i in 0..n {
        if m[[i, i]] != 0.0 {
            report.push(Violation::Diagonal { i, value: m[[i, i]] });
        }
        for j in 0..n {
            let d = m[[i, j]];
            if !d.is_finite() {
                report.push(Violation::NonFinite { i, j });
            } else if d < 0.0 {
                report.push(Violation::Negative { i, j, value: d });
            }
            if j > i && m[[i, j]] != m[[j, i]] {
                report.push(Violation::Asymmetry { i, j, dij: m[[i, j]], dji: m[[j, i]] });
            }
        }
    }
    let triangles: Vec<Violation> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let m = &m;
            let mut found = Vec::new();
            for j in 0..n {
                for k in 0..n {
                    let excess = m[[i, j]] - m[[i, k]] - m[[k, j]];
                    if excess > tol_tri {
                        found.push(Violation::Triangle { i, j, k, excess });
                    }
                }
            }
            found
        })
        .collect();
    for v in triangles {
        report.push(v);
    }
    for (i, &w) in space.weights().iter().enumerate() {
        if w < 0.0 || !w.is_finite() {
            report.push(Violation::NegativeWeight { i, value: w });
        }
    }
    if space.total_mass() <= 0.0 {
        report.push(Violation::ZeroMass);
    }
    report
}

// ---------------------------------------------------------------------------
// rescale / normalize / restrict

/// `(X, r⁻¹d, m, x̄)`: distances divided by `r`, weights untouched.
pub fn rescale(space: &PointedSpace, r: f64) -> Result<PointedSpace> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param(format!("rescale factor must be positive, got {r}")));
    }
    Ok(PointedSpace { space: space.space.scale_metric(1.0 / r), base: space.base })
}

/// Multiplies the weights by `c = (Σ_{d(y,x̄)<r} (1 − d(y,x̄)/r)·w(y))⁻¹`.
/// After `rescale(·, r)` the result is normalized at radius 1. Returns the
/// constant `c`.
pub fn normalize_at(space: &PointedSpace, r: f64) -> Result<(PointedSpace, f64)> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::param(format!("normalization radius must be positive, got {r}")));
    }
    let integral = space.normalization_integral(r);
    if !(integral > 0.0 && integral.is_finite()) {
        return Err(Error::InvalidSpace(format!("normalization integral is {integral}")));
    }
    let c = 1.0 / integral;
    let weights = space.space.weights.iter().map(|w| w * c).collect();
    let s = space.space.with_weights(weights)?;
    Ok((PointedSpace { space: s, base: space.base }, c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BallMode {
    Open,
    Closed,
}

/// Keeps the points with `d(·, x̄) < r` (or `≤ r`). The metric is the ambient
/// one restricted to the ball, not the induced path metric.
pub fn ball_restrict(space: &PointedSpace, r: f64, mode: BallMode) -> Result<PointedSpace> {
    if !(r > 0.0) {
        return Err(Error::param(format!("ball radius must be positive, got {r}")));
    }
    let keep: Vec<usize> = (0..space.len())
        .filter(|&y| {
            let d = space.dist_to_base(y);
            match mode {
                BallMode::Open => d < r,
                BallMode::Closed => d <= r,
            }
        })
        .collect();
    let base = keep.iter().position(|&y| y == space.base).expect("basepoint is in its own ball");
    Ok(PointedSpace { space: space.space.restrict(&keep)?, base })
}

// ---------------------------------------------------------------------------
// doubling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CenterPolicy {
    /// Every support point when the support has at most `budget` points,
    /// otherwise a uniform sample of `budget` of them.
    Auto { budget: usize, seed: u64 },
    Indices { indices: Vec<usize> },
}

impl Default for CenterPolicy {
    fn default() -> Self {
        CenterPolicy::Auto { budget: 256, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingConfig {
    pub centers: CenterPolicy,
    /// Number of random `(a, x, r, R)` samples for the iterated bound.
    pub iterated_samples: usize,
    pub seed: u64,
}

impl Default for DoublingConfig {
    fn default() -> Self {
        Self { centers: CenterPolicy::default(), iterated_samples: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IteratedViolation {
    pub a: usize,
    pub x: usize,
    pub r: f64,
    pub big_r: f64,
    pub lhs: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingProfile {
    pub radii: Vec<f64>,
    /// `max_x m(B_{2r}(x)) / m(B_r(x))` over the sampled centers.
    pub ratios: Vec<f64>,
    /// Running maximum of `ratios`: the non-decreasing `C(R)`.
    pub envelope: Vec<f64>,
    pub centers: Vec<usize>,
    pub iterated_checked: usize,
    /// Samples where `m(B_R(a)) > m(B_r(x))·C(R)^{log₂(R/r)+2}`.
    pub iterated_violations: Vec<IteratedViolation>,
    /// Largest observed `m(B_R(a)) / bound` (≤ 1 when no violation).
    pub iterated_worst_ratio: f64,
}

impl DoublingProfile {
    /// `C(R)`: the envelope at the largest profiled radius `≤ R`.
    pub fn envelope_at(&self, big_r: f64) -> Option<f64> {
        let k = self.radii.iter().rposition(|&r| r <= big_r)?;
        Some(self.envelope[k])
    }
}

/// Sorted distances and prefix masses from one center: `m(B_r(x))` by
/// binary search.
struct BallTable {
    dists: Vec<f64>,
    prefix: Vec<f64>,
}

impl BallTable {
    fn new(space: &FiniteSpace, x: usize) -> Self {
        let mut pairs: Vec<(f64, f64)> = (0..space.len())
            .filter(|&y| space.weights()[y] > 0.0)
            .map(|y| (space.dist(x, y), space.weights()[y]))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut prefix = Vec::with_capacity(pairs.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for (_, w) in &pairs {
            acc += w;
            prefix.push(acc);
        }
        Self { dists: pairs.into_iter().map(|p| p.0).collect(), prefix }
    }

    /// Open-ball mass.
    fn mass(&self, r: f64) -> f64 {
        let k = self.dists.partition_point(|&d| d < r);
        self.prefix[k]
    }
}

pub fn doubling_profile(space: &FiniteSpace, radii: &[f64], config: &DoublingConfig) -> Result<DoublingProfile> {
    if radii.is_empty() {
        return Err(Error::param("empty radius list"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("radii must be positive and strictly increasing"));
    }
    let support = space.support();
    let centers: Vec<usize> = match &config.centers {
        CenterPolicy::Auto { budget, seed } => {
            if support.len() <= *budget {
                support.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut c: Vec<usize> = support.choose_multiple(&mut rng, *budget).copied().collect();
                c.sort_unstable();
                c
            }
        }
        CenterPolicy::Indices { indices } => {
            if let Some(&bad) = indices.iter().find(|&&i| i >= space.len() || space.weights()[i] <= 0.0) {
                return Err(Error::param(format!("center {bad} is not a support point")));
            }
            indices.clone()
        }
    };
    if centers.is_empty() {
        return Err(Error::param("no doubling centers"));
    }
    let tables: Vec<BallTable> = centers.par_iter().map(|&x| BallTable::new(space, x)).collect();

    let ratios: Vec<f64> = radii
        .iter()
        .map(|&r| {
            tables
                .iter()
                .map(|t| t.mass(2.0 * r) / t.mass(r))
                .fold(1.0, f64::max)
        })
        .collect();
    let mut envelope = Vec::with_capacity(ratios.len());
    let mut run = 1.0f64;
    for &q in &ratios {
        run = run.max(q);
        envelope.push(run);
    }

    let mut profile = DoublingProfile {
        radii: radii.to_vec(),
        ratios,
        envelope,
        centers: centers.clone(),
        iterated_checked: 0,
        iterated_violations: Vec::new(),
        iterated_worst_ratio: 0.0,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.iterated_samples {
        let ai = rng.random_range(0..centers.len());
        let big_k = rng.random_range(0..radii.len());
        let big_r = radii[big_k];
        let a = centers[ai];
        let near: Vec<usize> = (0..centers.len()).filter(|&k| space.dist(a, centers[k]) < big_r).collect();
        let xi = near[rng.random_range(0..near.len())];
        let r = radii[rng.random_range(0..=big_k)];
        let lhs = tables[ai].mass(big_r);
        let c = profile.envelope[big_k];
        let bound = tables[xi].mass(r) * c.powf((big_r / r).log2() + 2.0);
        profile.iterated_checked += 1;
        profile.iterated_worst_ratio = profile.iterated_worst_ratio.max(lhs / bound);
        if lhs > bound * (1.0 + 1e-12) {
            profile.iterated_violations.push(IteratedViolation { a, x: centers[xi], r, big_r, lhs, bound });
        }
    }
    Ok(profile)
}

// ---------------------------------------------------------------------------
// product

/// Default cap on the number of points of a product space.
pub const PRODUCT_POINT_BUDGET: usize = 4_000_000;

/// Cartesian product with metric `√(d_a² + d_b²)` and weights `w_a·w_b`.
/// Point `(i, j)` gets index `i · |b| + j`.
pub fn product(a: &FiniteSpace, b: &FiniteSpace, max_points: usize) -> Result<FiniteSpace> {
    let n = a
        .len()
        .checked_mul(b.len())
        .filter(|&n| n <= max_points)
        .ok_or_else(|| Error::BudgetExceeded(format!("product of {} and {} points", a.len(), b.len())))?;
    let mut points = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for pa in a.points() {
        for pb in b.points() {
            let coords = match (&pa.coords, &pb.coords) {
                (Some(x), Some(y)) => Some(x.iter().chain(y).copied().collect()),
                _ => None,
            };
            points.push(Point { id: format!("{}|{}", pa.id, pb.id), coords });
        }
    }
    for &wa in a.weights() {
        for &wb in b.weights() {
            weights.push(wa * wb);
        }
    }
    let euclid = |s: &FiniteSpace| matches!(s.metric().geometry(), Some(Geometry::Lp { p }) if *p == 2.0);
    let (metric, interpolator) = if euclid(a) && euclid(b) {
        // both Euclidean charts: the product is Euclidean on concatenated
        // coordinates (scaled into a common unit)
        let (da, db) = (a.metric().chart_dim().unwrap(), b.metric().chart_dim().unwrap());
        let mut coords = ndarray::Array2::zeros((n, da + db));
        for i in 0..a.len() {
            for j in 0..b.len() {
                let row = i * b.len() + j;
                let ca = a.metric().chart(i).unwrap();
                let cb = b.metric().chart(j).unwrap();
                for d in 0..da {
                    coords[[row, d]] = ca[d] * a.metric().scale();
                }
                for d in 0..db {
                    coords[[row, da + d]] = cb[d] * b.metric().scale();
                }
            }
        }
        let acc = match (a.interpolator(), b.interpolator()) {
            (Some(x), Some(y)) => Some(x.accuracy.hypot(y.accuracy)),
            _ => None,
        };
        (Metric::from_coords(coords, Geometry::Lp { p: 2.0 }), acc.map(Interpolator::chart))
    } else {
        let acc = match (a.interpolator(), b.interpolator()) {
            (Some(x), Some(y)) => Some(x.accuracy.hypot(y.accuracy)),
            _ => None,
        };
        (Metric::product(a.metric().clone(), b.metric().clone()), acc.map(Interpolator::metric_search))
    };
    let mut s = FiniteSpace::new(points, metric, weights)?;
    s.interpolator = interpolator;
    s.resolution = match (a.resolution(), b.resolution()) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, y) => x.or(y),
    };
    Ok(s)
}

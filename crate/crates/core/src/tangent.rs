//! Blow-up sequences, tangent identification, line detection, splitting and
//! the Euclidean-dimension loop.

use std::cmp::Ordering;
use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Geometry, Metric};
use crate::models::lattice_ball;
use crate::pmgh::{level, pmgh_distance, trend, PmghConfig, Trend};
use crate::space::{ball_restrict, normalize_at, rescale, BallMode, FiniteSpace, Point, PointedSpace};

/// Slack on window radii, matching the open-ball test of the pmGH surrogate.
const WINDOW_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlowupConfig {
    /// Window radius after rescaling.
    pub window: f64,
    /// Members whose sample spacing (after rescaling) exceeds this are unusable.
    pub max_spacing: f64,
    /// Members larger than this are kept but skipped by comparisons.
    pub max_points: usize,
}

impl Default for BlowupConfig {
    fn default() -> Self {
        Self { window: 8.0, max_spacing: 1.0, max_points: 4000 }
    }
}

#[derive(Clone, Debug)]
pub struct BlowupMember {
    pub radius: f64,
    /// Sample spacing after rescaling, when the input declares a resolution.
    pub spacing: Option<f64>,
    /// Constant the measure was multiplied by.
    pub normalization: f64,
    pub usable: bool,
    pub warnings: Vec<String>,
    pub space: PointedSpace,
}

impl BlowupMember {
    fn comparable(&self, max_points: usize) -> bool {
        self.usable && self.space.len() <= max_points
    }
}

#[derive(Clone, Debug)]
pub struct BlowupSequence {
    pub base: usize,
    pub radii: Vec<f64>,
    pub window: f64,
    pub max_points: usize,
    pub members: Vec<BlowupMember>,
}

impl BlowupSequence {
    /// The member with the smallest radius that is still usable.
    pub fn finest_usable(&self) -> Option<&BlowupMember> {
        self.members.iter().rev().find(|m| m.usable)
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("i,r,spacing,points,normalization,usable\n");
        for (i, m) in self.members.iter().enumerate() {
            let sp = m.spacing.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{i},{},{sp},{},{},{}", m.radius, m.space.len(), m.normalization, m.usable);
        }
        s
    }
}

/// Reorders the points by a label-free key (distance to the base and weight,
/// both up to rounding noise, then chart coordinates or, without a chart,
/// the sorted distance row), so that everything downstream is invariant
/// under relabeling of the input.
pub fn canonical_order(space: &PointedSpace) -> Result<PointedSpace> {
    let s = space.space();
    let n = s.len();
    let db: Vec<f64> = (0..n).map(|i| space.dist_to_base(i)).collect();
    let rows: Option<Vec<Vec<f64>>> = s.metric().chart_dim().is_none().then(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut r = s.metric().row(i);
                r.sort_by(f64::total_cmp);
                r
            })
            .collect()
    });
    let lex = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    };
    let wmax = s.weights().iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        level(db[a])
            .cmp(&level(db[b]))
            .then(level(s.weights()[a] / wmax).cmp(&level(s.weights()[b] / wmax)))
            .then_with(|| match (s.metric().chart(a), s.metric().chart(b), &rows) {
                (Some(ca), Some(cb), _) => lex(ca.as_slice().unwrap_or(&ca.to_vec()), cb.as_slice().unwrap_or(&cb.to_vec())),
                (_, _, Some(r)) => lex(&r[a], &r[b]),
                _ => Ordering::Equal,
            })
            .then(a.cmp(&b))
    });
    let base = order.iter().position(|&i| i == space.base()).expect("base kept");
    PointedSpace::new(s.restrict(&order)?, base)
}

/// One member `(X, r⁻¹d, m̄_r, x̄)` restricted to the window.
fn member(space: &PointedSpace, r: f64, window: f64, config: &BlowupConfig) -> Result<BlowupMember> {
    let scaled = rescale(space, r)?;
    let (normalized, c) = normalize_at(&scaled, 1.0)?;
    let windowed = ball_restrict(&normalized, window * (1.0 - WINDOW_SLACK), BallMode::Open)?;
    let spacing = windowed.space().resolution();
    let mut warnings = Vec::new();
    let mut usable = true;
    if let Some(s) = spacing {
        if s > config.max_spacing * (1.0 + WINDOW_SLACK) {
            usable = false;
            warnings.push(format!("spacing {s:.3} exceeds {}: radius {r} is below the data resolution", config.max_spacing));
        } else if s > 0.5 * config.max_spacing {
            warnings.push(format!("coarse member: spacing {s:.3}"));
        }
    }
    if windowed.len() > config.max_points {
        warnings.push(format!("{} points exceed the comparison budget {}", windowed.len(), config.max_points));
    }
    Ok(BlowupMember { radius: r, spacing, normalization: c, usable, warnings, space: canonical_order(&windowed)? })
}

pub fn blowup(space: &PointedSpace, radii: &[f64], config: &BlowupConfig) -> Result<BlowupSequence> {
    blowup_windowed(space, radii, config.window, config)
}

fn blowup_windowed(space: &PointedSpace, radii: &[f64], window: f64, config: &BlowupConfig) -> Result<BlowupSequence> {
    if radii.is_empty() {
        return Err(Error::param("no blow-up radii"));
    }
    if radii.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::param("blow-up radii must lie in (0, 1]"));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("blow-up radii must be strictly decreasing"));
    }
    if !(window > 0.0) {
        return Err(Error::param("window must be positive"));
    }
    let members =
        radii.par_iter().map(|&r| member(space, r, window, config)).collect::<Result<Vec<_>>>()?;
    Ok(BlowupSequence { base: space.base(), radii: radii.to_vec(), window, max_points: config.max_points, members })
}

// ---------------------------------------------------------------------------
// tangent matching

#[derive(Clone, Debug)]
pub enum TangentModel {
    /// Built per member at the member's spacing.
    Lattice { name: String, dim: usize, geometry: Geometry },
    Fixed { name: String, space: PointedSpace },
}

impl TangentModel {
    pub fn euclidean(dim: usize) -> Self {
        let name = if dim == 0 { "point".to_string() } else { format!("R^{dim}") };
        TangentModel::Lattice { name, dim, geometry: Geometry::Lp { p: 2.0 } }
    }

    pub fn lp_plane(p: f64) -> Self {
        let geometry = if p.is_infinite() { Geometry::LInf } else { Geometry::Lp { p } };
        TangentModel::Lattice { name: format!("l^{p} plane"), dim: 2, geometry }
    }

    pub fn name(&self) -> &str {
        match self {
            TangentModel::Lattice { name, .. } | TangentModel::Fixed { name, .. } => name,
        }
    }

    /// The model at the resolution of `member`, or `None` if it cannot be
    /// built there.
    fn at(&self, member: &BlowupMember, window: f64) -> Result<Option<PointedSpace>> {
        match self {
            TangentModel::Fixed { space, .. } => Ok(Some(space.clone())),
            TangentModel::Lattice { dim, geometry, .. } => {
                let Some(s) = member.spacing else {
                    return if *dim == 0 { Ok(Some(lattice_ball(0, geometry.clone(), 1.0, window)?)) } else { Ok(None) };
                };
                // point count of the lattice ball, roughly, before building it
                let estimate = (2.0 * window / s + 1.0).powi(*dim as i32);
                if estimate > 50.0 * 4000.0 {
                    return Ok(None);
                }
                Ok(Some(lattice_ball(*dim, geometry.clone(), s, window)?))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelMatch {
    pub model: String,
    /// `D̂(member_i, model)`; `None` where a member or the model was skipped.
    pub values: Vec<Option<f64>>,
    /// Value at the last usable member.
    pub final_value: Option<f64>,
    pub trend: Trend,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatchReport {
    pub radii: Vec<f64>,
    /// Best first.
    pub matches: Vec<ModelMatch>,
    pub best: Option<String>,
    /// Second-best final value divided by the best one.
    pub margin: Option<f64>,
}

impl MatchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,i,r,value\n");
        for m in &self.matches {
            for (i, v) in m.values.iter().enumerate() {
                if let Some(v) = v {
                    let _ = writeln!(s, "{},{i},{},{v}", m.model, self.radii[i]);
                }
            }
        }
        s
    }

    pub fn get(&self, model: &str) -> Option<&ModelMatch> {
        self.matches.iter().find(|m| m.model == model)
    }
}

pub fn match_tangent(seq: &BlowupSequence, models: &[TangentModel], pmgh: &PmghConfig) -> Result<MatchReport> {
    let last = seq
        .members
        .iter()
        .rposition(|m| m.comparable(seq.max_points))
        .ok_or_else(|| Error::InvalidSpace("no usable blow-up member".into()))?;
    let jobs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|k| (0..seq.members.len()).map(move |i| (k, i)))
        .filter(|&(_, i)| seq.members[i].comparable(seq.max_points))
        .collect();
    let results: Vec<((usize, usize), Option<f64>)> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let m = &seq.members[i];
            let v = match models[k].at(m, seq.window)? {
                Some(model) if model.len() <= seq.max_points => Some(pmgh_distance(&m.space, &model, pmgh)?.value),
                _ => None,
            };
            Ok(((k, i), v))
        })
        .collect::<Result<_>>()?;
    let mut matches: Vec<ModelMatch> = models
        .iter()
        .map(|m| ModelMatch {
            model: m.name().to_string(),
            values: vec![None; seq.members.len()],
            final_value: None,
            trend: Trend::None,
        })
        .collect();
    for ((k, i), v) in results {
        matches[k].values[i] = v;
    }
    for m in &mut matches {
        m.final_value = m.values[last];
        let series: Vec<f64> = m.values.iter().flatten().copied().collect();
        m.trend = trend(&series);
    }
    matches.sort_by(|a, b| match (a.final_value, b.final_value) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    let best = matches.first().filter(|m| m.final_value.is_some()).map(|m| m.model.clone());
    let margin = match (matches.first().and_then(|m| m.final_value), matches.get(1).and_then(|m| m.final_value)) {
        (Some(a), Some(b)) => Some(if a > 0.0 { b / a } else { f64::INFINITY }),
        _ => None,
    };
    Ok(MatchReport { radii: seq.radii.clone(), matches, best, margin })
}

// ---------------------------------------------------------------------------
// iterated tangents

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum YPrime {
    Base,
    /// The point whose distance to the base is closest to the given value.
    Offset(f64),
    /// A point index of the tangent approximation (in its canonical order).
    Index(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IteratedConfig {
    pub blowup: BlowupConfig,
    pub inner_radii: Vec<f64>,
    pub selector: YPrime,
    pub pmgh: PmghConfig,
    /// Minimum distances above this flag the point as exceptional.
    pub threshold: f64,
}

impl Default for IteratedConfig {
    fn default() -> Self {
        Self {
            blowup: BlowupConfig::default(),
            inner_radii: vec![1.0, 0.5],
            selector: YPrime::Offset(1.0),
            pmgh: PmghConfig::default(),
            threshold: 0.15,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IteratedReport {
    pub tangent_radius: f64,
    pub yprime: usize,
    pub yprime_distance: f64,
    pub inner_radii: Vec<f64>,
    pub outer_radii: Vec<f64>,
    /// `table[j][i] = D̂(inner member j, original member i)`.
    pub table: Vec<Vec<Option<f64>>>,
    pub min_distance: f64,
    /// `(inner, original)` member indices attaining the minimum.
    pub best: (usize, usize),
    pub exceptional: bool,
}

pub fn iterated_tangent_check(space: &PointedSpace, radii: &[f64], config: &IteratedConfig) -> Result<IteratedReport> {
    let w = config.blowup.window;
    let outer = blowup(space, radii, &config.blowup)?;
    let tangent_idx = outer
        .members
        .iter()
        .rposition(|m| m.usable)
        .ok_or_else(|| Error::InvalidSpace("no usable blow-up member".into()))?;
    let r = outer.radii[tangent_idx];
    // a doubled window keeps the W-ball around y' inside the approximation
    let y = member(space, r, 2.0 * w, &config.blowup)?.space;
    let yp = match config.selector {
        YPrime::Base => y.base(),
        YPrime::Index(i) if i < y.len() => i,
        YPrime::Index(i) => return Err(Error::param(format!("y' index {i} out of range"))),
        YPrime::Offset(d) => (0..y.len())
            .filter(|&i| y.space().weights()[i] > 0.0)
            .min_by(|&a, &b| (y.dist_to_base(a) - d).abs().total_cmp(&(y.dist_to_base(b) - d).abs()).then(a.cmp(&b)))
            .expect("nonempty"),
    };
    let dist = y.dist_to_base(yp);
    if dist > w {
        return Err(Error::param(format!("y' at distance {dist} lies outside the window {w}")));
    }
    let repointed = normalize_at(&y.repoint(yp)?, 1.0)?.0;
    let inner = blowup(&repointed, &config.inner_radii, &config.blowup)?;
    let max_points = config.blowup.max_points;
    let jobs: Vec<(usize, usize)> = (0..inner.members.len())
        .flat_map(|j| (0..outer.members.len()).map(move |i| (j, i)))
        .filter(|&(j, i)| inner.members[j].comparable(max_points) && outer.members[i].comparable(max_points))
        .collect();
    if jobs.is_empty() {
        return Err(Error::InvalidSpace("no comparable pair of blow-up members".into()));
    }
    let vals: Vec<((usize, usize), f64)> = jobs
        .par_iter()
        .map(|&(j, i)| {
            pmgh_distance(&inner.members[j].space, &outer.members[i].space, &config.pmgh).map(|e| ((j, i), e.value))
        })
        .collect::<Result<_>>()?;
    let mut table = vec![vec![None; outer.members.len()]; inner.members.len()];
    let mut best = ((0, 0), f64::INFINITY);
    for ((j, i), v) in vals {
        table[j][i] = Some(v);
        if v < best.1 {
            best = ((j, i), v);
        }
    }
    Ok(IteratedReport {
        tangent_radius: r,
        yprime: yp,
        yprime_distance: dist,
        inner_radii: config.inner_radii.clone(),
        outer_radii: radii.to_vec(),
        table,
        min_distance: best.1,
        best: best.0,
        exceptional: best.1 > config.threshold,
    })
}

// ---------------------------------------------------------------------------
// lines

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LineCandidate {
    pub center: usize,
    /// Point indices ordered along the line.
    pub chain: Vec<usize>,
    /// Line parameter of each chain point; the center sits at 0.
    pub params: Vec<f64>,
    /// `params.last() - params.first()`.
    pub length: f64,
    /// `max |d(p_s, p_t) − |s − t||` over the chain.
    pub eps_line: f64,
    /// Largest parameter gap between consecutive chain points.
    pub max_gap: f64,
}

impl LineCandidate {
    /// Reach on the shorter side of the center.
    pub fn half_length(&self) -> f64 {
        (-self.params[0]).min(*self.params.last().unwrap())
    }
}

/// Sample resolution, or the smallest positive distance to the base.
fn resolution_of(space: &PointedSpace) -> f64 {
    space.space().resolution().unwrap_or_else(|| {
        (0..space.len()).map(|i| space.dist_to_base(i)).filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min)
    })
}

/// Searches for a chain through the base with additive defect at most `eps`
/// reaching distance `length` on both sides.
///
/// Endpoints are taken from the shell `length ≤ d(x, ·) ≤ length + h`: each
/// shell point is paired with the shell point minimizing the excess
/// `d(p, x) + d(x, q) − d(p, q)`, and the chain of the pair collects the
/// points nearly on a geodesic from `p` to `q`. Among the passing chains the
/// densest one wins.
pub fn detect_line(space: &PointedSpace, length: f64, eps: f64) -> Option<LineCandidate> {
    if !(length > 0.0) || !(eps >= 0.0) {
        return None;
    }
    let n = space.len();
    let x = space.base();
    let h = resolution_of(space);
    let thick = if h.is_finite() { h.max(eps) } else { eps };
    let db: Vec<f64> = (0..n).map(|i| space.dist_to_base(i)).collect();
    let shell: Vec<usize> = (0..n)
        .filter(|&i| db[i] >= length * (1.0 - WINDOW_SLACK) && db[i] <= length + thick && space.space().weights()[i] > 0.0)
        .collect();
    let d = |a: usize, b: usize| space.space().dist(a, b);
    let mut pairs: Vec<(f64, usize, usize)> = shell
        .par_iter()
        .filter_map(|&p| {
            shell
                .iter()
                .filter(|&&q| q != p)
                .map(|&q| (db[p] + db[q] - d(p, q), q))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .filter(|&(e, _)| e <= eps)
                .map(|(e, q)| (e, p.min(q), p.max(q)))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    pairs.dedup_by(|a, b| a.1 == b.1 && a.2 == b.2);
    pairs.truncate(512);
    let tol_chain = eps / 4.0;
    let group = if h.is_finite() { h / 2.0 } else { eps.max(1e-12) };
    let candidates: Vec<(LineCandidate, f64)> = pairs
        .par_iter()
        .filter_map(|&(excess, p, q)| {
            let big = d(p, q);
            if !(big > 0.0) {
                return None;
            }
            let off = (d(x, p).powi(2) - d(x, q).powi(2)) / (2.0 * big);
            let mut pts: Vec<(f64, f64, usize)> = (0..n)
                .filter(|&z| space.space().weights()[z] > 0.0)
                .filter_map(|z| {
                    let (a, b) = (d(z, p), d(z, q));
                    let e = a + b - big;
                    (e <= tol_chain || z == x).then(|| ((a * a - b * b) / (2.0 * big) - off, e, z))
                })
                .collect();
            pts.sort_by(|u, v| u.0.total_cmp(&v.0).then(u.2.cmp(&v.2)));
            // thin: one point per parameter group, the center wins its group
            let mut chain: Vec<(f64, f64, usize)> = Vec::new();
            let mut start = f64::NEG_INFINITY;
            for pt in pts {
                match chain.last_mut() {
                    Some(last) if pt.0 - start < group => {
                        if last.2 != x && (pt.2 == x || pt.1 < last.1) {
                            *last = pt;
                        }
                    }
                    _ => {
                        start = pt.0;
                        chain.push(pt);
                    }
                }
            }
            if !chain.iter().any(|c| c.2 == x) {
                return None;
            }
            let params: Vec<f64> = chain.iter().map(|c| c.0).collect();
            let idx: Vec<usize> = chain.iter().map(|c| c.2).collect();
            let eps_line = (0..idx.len())
                .flat_map(|i| ((i + 1)..idx.len()).map(move |j| (i, j)))
                .map(|(i, j)| (d(idx[i], idx[j]) - (params[j] - params[i]).abs()).abs())
                .fold(0.0, f64::max);
            let max_gap = params.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let (lo, hi) = (params[0], *params.last().unwrap());
            let pass = eps_line <= eps && lo <= -(length - eps) && hi >= length - eps;
            pass.then(|| {
                (LineCandidate { center: x, chain: idx, params, length: hi - lo, eps_line, max_gap }, excess)
            })
        })
        .collect();
    candidates
        .into_iter()
        .min_by(|a, b| {
            a.0.max_gap
                .total_cmp(&b.0.max_gap)
                .then(a.0.eps_line.total_cmp(&b.0.eps_line))
                .then(a.1.total_cmp(&b.1))
                .then(a.0.chain.cmp(&b.0.chain))
        })
        .map(|c| c.0)
}

// ---------------------------------------------------------------------------
// splitting

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Half-width of the evaluation box along the line; default half the
    /// line's reach.
    pub window: Option<f64>,
    /// Radius of the quotient window; default keeps the box inside the sample.
    pub quotient_radius: Option<f64>,
    /// Sample resolution; default the space's.
    pub resolution: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SplitResult {
    /// Busemann-like coordinate of every point; 0 at the center.
    pub busemann: Vec<f64>,
    /// Points inside the evaluation box.
    pub region: Vec<usize>,
    /// Quotient class of each region point.
    pub projection: Vec<usize>,
    /// Slab points making up each quotient class.
    pub classes: Vec<Vec<usize>>,
    pub quotient: PointedSpace,
    pub delta_metric: f64,
    pub delta_meas: f64,
    pub window: f64,
    pub quotient_radius: f64,
}

/// Factors the line out of `space`.
///
/// The coordinate `b(z) = (d(z, γ₋)² − d(z, γ₊)²) / 2d(γ₋, γ₊)` (shifted to
/// vanish at the center) is exact on Pythagorean products. The quotient is
/// the slab `|b| ≤ 3h/2`, clustered into classes of points with
/// `d′ = √(d² − Δb²) ≤ h/2`, with `d′` averaged over member pairs; its
/// measure is the pushforward of the evaluation box per unit length.
pub fn split(space: &FiniteSpace, line: &LineCandidate, config: &SplitConfig) -> Result<SplitResult> {
    let x = line.center;
    let (gm, gp) = (line.chain[0], *line.chain.last().unwrap());
    let reach = line.half_length();
    let w = config.window.unwrap_or(reach / 2.0);
    if !(w > 0.0) || reach < 2.0 * w {
        return Err(Error::param(format!("line reach {reach} is shorter than twice the window {w}")));
    }
    let h = config.resolution.or(space.resolution()).unwrap_or(line.max_gap);
    if w < 1.5 * h {
        return Err(Error::param(format!("window {w} is narrower than the slab 3h/2 = {}", 1.5 * h)));
    }
    let n = space.len();
    let big = space.dist(gm, gp);
    let coord = |z: usize| (space.dist(z, gm).powi(2) - space.dist(z, gp).powi(2)) / (2.0 * big);
    let b0 = coord(x);
    let b: Vec<f64> = (0..n).into_par_iter().map(|z| coord(z) - b0).collect();
    let dq2 = |u: usize, v: usize| (space.dist(u, v).powi(2) - (b[u] - b[v]).powi(2)).max(0.0);
    let extent = (0..n).map(|z| space.dist(x, z)).fold(0.0, f64::max);
    let q = config.quotient_radius.unwrap_or(0.9 * (extent * extent - w * w).max(0.0).sqrt());

    // classes from the central slab
    let mut slab: Vec<usize> = (0..n)
        .filter(|&z| space.weights()[z] > 0.0 && b[z].abs() <= 1.5 * h && dq2(z, x).sqrt() <= q + h)
        .collect();
    slab.sort_by(|&u, &v| b[u].abs().total_cmp(&b[v].abs()).then(dq2(u, x).total_cmp(&dq2(v, x))).then(u.cmp(&v)));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for z in slab {
        match classes.iter_mut().find(|c| dq2(z, c[0]).sqrt() <= h / 2.0) {
            Some(c) => c.push(z),
            None => classes.push(vec![z]),
        }
    }
    classes.retain(|c| dq2(c[0], x).sqrt() <= q);
    let reps: Vec<usize> = classes
        .iter()
        .map(|c| {
            *c.iter()
                .min_by(|&&u, &&v| {
                    let cost = |a: usize| c.iter().map(|&o| space.weights()[o] * dq2(a, o).sqrt()).sum::<f64>();
                    cost(u).total_cmp(&cost(v)).then(u.cmp(&v))
                })
                .unwrap()
        })
        .collect();
    let k = classes.len();
    let mut dmat = Array2::zeros((k, k));
    for i in 0..k {
        for j in (i + 1)..k {
            let sum: f64 = classes[i].iter().flat_map(|&u| classes[j].iter().map(move |&v| (u, v))).map(|(u, v)| dq2(u, v)).sum();
            let v = (sum / (classes[i].len() * classes[j].len()) as f64).sqrt();
            dmat[[i, j]] = v;
            dmat[[j, i]] = v;
        }
    }

    // evaluation box and projection
    let assigned: Vec<Option<(usize, usize)>> = (0..n)
        .into_par_iter()
        .map(|z| {
            // the tolerance keeps whole level sets at the box edge together
            if space.weights()[z] <= 0.0 || b[z].abs() > w + 1e-9 * (1.0 + w) {
                return None;
            }
            let (c, dist) = reps
                .iter()
                .enumerate()
                .map(|(c, &r)| (c, dq2(z, r).sqrt()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))?;
            (dist <= h / 2.0 + 1e-9).then_some((z, c))
        })
        .collect();
    let (region, projection): (Vec<usize>, Vec<usize>) = assigned.into_iter().flatten().unzip();
    let mut mass = vec![0.0; k];
    for (&z, &c) in region.iter().zip(&projection) {
        mass[c] += space.weights()[z];
    }
    let base_class = projection[region.iter().position(|&z| z == x).expect("center in its own box")];

    let delta_metric = region
        .par_iter()
        .enumerate()
        .map(|(i, &u)| {
            region[i + 1..]
                .iter()
                .zip(&projection[i + 1..])
                .map(|(&v, &cv)| {
                    let du = dmat[[projection[i], cv]];
                    (space.dist(u, v).powi(2) - (b[u] - b[v]).powi(2) - du * du).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
        .sqrt();

    // total variation between the joint (class, b-bin) law and the product
    // of its marginals; bin edges sit half a resolution off the lattice
    let bins = ((2.0 * w + 0.5 * h) / (3.0 * h)).ceil().max(1.0) as usize;
    let mut joint = vec![0.0; k * bins];
    for (&z, &c) in region.iter().zip(&projection) {
        let bin = (((b[z] + w + 0.5 * h) / (3.0 * h)).floor() as usize).min(bins - 1);
        joint[c * bins + bin] += space.weights()[z];
    }
    let total: f64 = mass.iter().sum();
    let col: Vec<f64> = (0..bins).map(|j| (0..k).map(|c| joint[c * bins + j]).sum()).collect();
    let delta_meas = 0.5
        * (0..k)
            .flat_map(|c| (0..bins).map(move |j| (c, j)))
            .map(|(c, j)| (joint[c * bins + j] - mass[c] * col[j] / total).abs())
            .sum::<f64>()
        / total;

    // quotient space, classes with no box mass dropped
    let keep: Vec<usize> = (0..k).filter(|&c| mass[c] > 0.0).collect();
    let sub = Array2::from_shape_fn((keep.len(), keep.len()), |(i, j)| dmat[[keep[i], keep[j]]]);
    let points = keep.iter().map(|&c| Point::new(format!("q{}", space.points()[reps[c]].id))).collect();
    let weights = keep.iter().map(|&c| mass[c] / (2.0 * w)).collect();
    let qspace = FiniteSpace::new(points, Metric::from_matrix(sub), weights)?.with_resolution(h);
    let qbase = keep.iter().position(|&c| c == base_class).expect("base class has mass");
    let remap: Vec<usize> = {
        let mut m = vec![usize::MAX; k];
        for (i, &c) in keep.iter().enumerate() {
            m[c] = i;
        }
        m
    };
    Ok(SplitResult {
        busemann: b,
        region,
        projection: projection.iter().map(|&c| remap[c]).collect(),
        classes: keep.iter().map(|&c| classes[c].clone()).collect(),
        quotient: PointedSpace::new(qspace, qbase)?,
        delta_metric,
        delta_meas,
        window: w,
        quotient_radius: q,
    })
}

// ---------------------------------------------------------------------------
// dimension

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionConfig {
    /// Dimension budget `N`; at most `⌊N⌋` lines are factored.
    pub n_budget: f64,
    /// Blow-up radii; the finest usable member is used. Empty: the input is
    /// normalized and windowed as is.
    pub radii: Vec<f64>,
    pub blowup: BlowupConfig,
    /// Line length as a fraction of the current extent.
    pub line_fraction: f64,
    pub tol_line: f64,
    /// Metric defect accepted for a split, in units of the resolution.
    pub max_defect: f64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        Self {
            n_budget: 3.0,
            radii: Vec::new(),
            blowup: BlowupConfig::default(),
            line_fraction: 0.8,
            tol_line: 0.05,
            max_defect: 3.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionStage {
    pub points: usize,
    pub extent: f64,
    pub line_length: f64,
    pub line: Option<LineCandidate>,
    pub delta_metric: Option<f64>,
    pub delta_meas: Option<f64>,
    pub quotient_points: Option<usize>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimensionTrace {
    pub n: usize,
    pub budget: usize,
    pub blowup_radius: Option<f64>,
    pub stages: Vec<DimensionStage>,
    pub remainder_points: usize,
    pub inconclusive: bool,
}

pub fn euclidean_dimension(space: &PointedSpace, config: &DimensionConfig) -> Result<(usize, DimensionTrace)> {
    if !(config.n_budget >= 0.0) || !config.n_budget.is_finite() {
        return Err(Error::param("dimension budget N must be finite and ≥ 0"));
    }
    let budget = config.n_budget.floor() as usize;
    let (mut current, blowup_radius) = if config.radii.is_empty() {
        let s = member(space, 1.0, config.blowup.window, &config.blowup)?;
        (s.space, None)
    } else {
        let seq = blowup(space, &config.radii, &config.blowup)?;
        let m = seq.finest_usable().ok_or_else(|| Error::InvalidSpace("no usable blow-up member".into()))?;
        (m.space.clone(), Some(m.radius))
    };
    let mut n = 0usize;
    let mut stages = Vec::new();
    let mut inconclusive = false;
    while n < budget && current.len() > 1 {
        let extent = (0..current.len()).map(|i| current.dist_to_base(i)).fold(0.0, f64::max);
        let len = config.line_fraction * extent;
        let mut stage = DimensionStage {
            points: current.len(),
            extent,
            line_length: len,
            line: None,
            delta_metric: None,
            delta_meas: None,
            quotient_points: None,
            note: None,
        };
        let Some(line) = detect_line(&current, len, config.tol_line) else {
            stage.note = Some("no line".into());
            stages.push(stage);
            break;
        };
        let h = resolution_of(&current);
        let res = match split(current.space(), &line, &SplitConfig::default()) {
            Ok(r) => r,
            Err(e) => {
                stage.note = Some(format!("split refused: {e}"));
                stage.line = Some(line);
                stages.push(stage);
                inconclusive = true;
                break;
            }
        };
        stage.line = Some(line);
        stage.delta_metric = Some(res.delta_metric);
        stage.delta_meas = Some(res.delta_meas);
        stage.quotient_points = Some(res.quotient.len());
        if res.delta_metric > config.max_defect * h {
            stage.note = Some(format!("metric defect {:.3} above {:.3}", res.delta_metric, config.max_defect * h));
            stages.push(stage);
            inconclusive = true;
            break;
        }
        stages.push(stage);
        n += 1;
        current = canonical_order(&normalize_at(&res.quotient, 1.0)?.0)?;
    }
    assert!(n <= budget, "factored {n} lines with budget {budget}");
    let remainder_points = current.len();
    Ok((n, DimensionTrace { n, budget, blowup_radius, stages, remainder_points, inconclusive }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make, ModelSpec};

    fn grid(dim: usize, h: f64) -> PointedSpace {
        make(&ModelSpec::EuclideanGrid { dim, h, lo: -1.0, hi: 1.0, center: None }).unwrap()
    }

    #[test]
    fn unit_radius_is_the_space_windowed() {
        let g = grid(1, 0.1);
        let seq = blowup(&g, &[1.0], &BlowupConfig::default()).unwrap();
        assert_eq!(seq.members[0].space.len(), g.len());
        assert!((seq.members[0].space.normalization_integral(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn radii_must_decrease() {
        assert!(blowup(&grid(1, 0.1), &[0.5, 0.5], &BlowupConfig::default()).is_err());
        assert!(blowup(&grid(1, 0.1), &[2.0], &BlowupConfig::default()).is_err());
    }

    #[test]
    fn coarse_members_are_flagged() {
        let seq = blowup(&grid(1, 0.1), &[0.5, 0.05], &BlowupConfig::default()).unwrap();
        assert!(seq.members[0].usable);
        assert!(!seq.members[1].usable);
    }

    #[test]
    fn line_in_a_segment() {
        let g = grid(1, 0.05);
        let line = detect_line(&g, 0.8, 0.01).unwrap();
        assert!(line.eps_line < 1e-12);
        assert!((line.max_gap - 0.05).abs() < 1e-12);
        let res = split(g.space(), &line, &SplitConfig::default()).unwrap();
        assert_eq!(res.quotient.len(), 1);
        assert!(res.delta_metric < 1e-6);
    }

    #[test]
    fn no_line_on_a_sphere() {
        let s = make(&ModelSpec::Sphere { radius: 1.0, points: 400 }).unwrap();
        assert!(detect_line(&s, 4.0, 0.05).is_none());
    }

    #[test]
    fn budget_zero() {
        let cfg = DimensionConfig { n_budget: 0.5, ..DimensionConfig::default() };
        let (n, _) = euclidean_dimension(&grid(1, 0.1), &cfg).unwrap();
        assert_eq!(n, 0);
    }
}

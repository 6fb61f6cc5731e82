//! A computable surrogate for the pointed measured Gromov–Hausdorff distance.
//!
//! For radii `R_1 < … < R_k` the surrogate is
//!
//! ```text
//! D̂(A, B) = Σ_k 2^{-k} · min(1, inf_C [dis_k(C) + gap_k(C)])
//! ```
//!
//! where `C` ranges over correspondences between the open balls
//! `B_{R_k}(base)` containing the basepoint pair, `dis_k` is half the metric
//! distortion of `C` and `gap_k` is a transport discrepancy between the two
//! ball measures in the metric gluing of `A` and `B` along `C`.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::PointedSpace;
use crate::transport::simplex;

/// Relative slack in the open-ball test `d < R`, so that sample points at
/// distance `R` up to rounding are excluded consistently.
const BALL_SLACK: f64 = 1e-9;

/// Pairs `(a, b)` of point indices of the two spaces.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub pairs: Vec<(usize, usize)>,
}

impl Correspondence {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_unstable();
        pairs.dedup();
        Self { pairs }
    }

    pub fn identity(n: usize) -> Self {
        Self { pairs: (0..n).map(|i| (i, i)).collect() }
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.pairs.iter().map(|&(a, b)| (b, a)).collect())
    }
}

/// Distance level: distances equal up to rounding noise share a level.
pub(crate) fn level(d: f64) -> i64 {
    (d * 1e8).round() as i64
}

/// Indices of the open ball `{x : d(x, base) < r}`, nearest first, index
/// order within a distance level.
pub fn ball(space: &PointedSpace, r: f64) -> Vec<usize> {
    let mut idx: Vec<usize> =
        (0..space.len()).filter(|&i| space.dist_to_base(i) < r * (1.0 - BALL_SLACK)).collect();
    idx.sort_by_key(|&i| (level(space.dist_to_base(i)), i));
    idx
}

/// Dense data of the two balls at one radius.
struct Local {
    ia: Vec<usize>,
    ib: Vec<usize>,
    da: Vec<f64>,
    db: Vec<f64>,
    wa: Vec<f64>,
    wb: Vec<f64>,
    base_a: usize,
    base_b: usize,
}

impl Local {
    fn new(a: &PointedSpace, b: &PointedSpace, r: f64) -> Self {
        let ia = ball(a, r);
        let ib = ball(b, r);
        let dense = |s: &PointedSpace, idx: &[usize]| -> Vec<f64> {
            let n = idx.len();
            let mut d = vec![0.0; n * n];
            d.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
                for j in 0..n {
                    row[j] = s.space().dist(idx[i], idx[j]);
                }
            });
            d
        };
        let da = dense(a, &ia);
        let db = dense(b, &ib);
        let wa = ia.iter().map(|&i| a.space().weights()[i]).collect();
        let wb = ib.iter().map(|&i| b.space().weights()[i]).collect();
        let base_a = ia.iter().position(|&i| i == a.base()).expect("base in ball");
        let base_b = ib.iter().position(|&i| i == b.base()).expect("base in ball");
        Self { ia, ib, da, db, wa, wb, base_a, base_b }
    }

    fn na(&self) -> usize {
        self.ia.len()
    }

    fn nb(&self) -> usize {
        self.ib.len()
    }

    #[inline]
    fn err(&self, p: (usize, usize), q: (usize, usize)) -> f64 {
        (self.da[p.0 * self.na() + q.0] - self.db[p.1 * self.nb() + q.1]).abs()
    }

    /// Local pairs of `corr` inside both balls, after checking coverage.
    fn localize(&self, corr: &Correspondence) -> Result<Vec<(usize, usize)>> {
        let pos = |idx: &[usize], n: usize| {
            let mut m = vec![usize::MAX; n];
            for (k, &i) in idx.iter().enumerate() {
                m[i] = k;
            }
            m
        };
        let max_a = corr.pairs.iter().map(|p| p.0).chain(self.ia.iter().copied()).max().unwrap_or(0) + 1;
        let max_b = corr.pairs.iter().map(|p| p.1).chain(self.ib.iter().copied()).max().unwrap_or(0) + 1;
        let (pa, pb) = (pos(&self.ia, max_a), pos(&self.ib, max_b));
        let pairs: Vec<(usize, usize)> = corr
            .pairs
            .iter()
            .filter_map(|&(x, y)| {
                let (lx, ly) = (pa[x], pb[y]);
                (lx != usize::MAX && ly != usize::MAX).then_some((lx, ly))
            })
            .collect();
        let mut cov_a = vec![false; self.na()];
        let mut cov_b = vec![false; self.nb()];
        for &(x, y) in &pairs {
            cov_a[x] = true;
            cov_b[y] = true;
        }
        if let Some(x) = cov_a.iter().position(|c| !c) {
            return Err(Error::Coverage(format!("point {} of the first ball", self.ia[x])));
        }
        if let Some(y) = cov_b.iter().position(|c| !c) {
            return Err(Error::Coverage(format!("point {} of the second ball", self.ib[y])));
        }
        if !pairs.contains(&(self.base_a, self.base_b)) {
            return Err(Error::Coverage("basepoint pair missing".into()));
        }
        Ok(pairs)
    }

    fn distortion(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs
            .par_iter()
            .map(|&p| pairs.iter().map(|&q| self.err(p, q)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
            / 2.0
    }

    /// Teleport-capped transport between the ball measures in the gluing
    /// `d_Z(x, y) = dis + min_{(x', y') ∈ C} d_A(x, x') + d_B(y', y)`.
    fn gap(&self, pairs: &[(usize, usize)], dis: f64) -> Result<f64> {
        let (na, nb) = (self.na(), self.nb());
        // pairs with d_A(x, x') < 1; farther ones only give capped costs
        let near: Vec<Vec<(f64, usize)>> = (0..na)
            .into_par_iter()
            .map(|x| {
                pairs
                    .iter()
                    .filter_map(|&(xp, yp)| {
                        let d = self.da[x * na + xp];
                        (d + dis < 1.0).then_some((d, yp))
                    })
                    .collect()
            })
            .collect();
        let data: Vec<f64> = (0..=na)
            .into_par_iter()
            .flat_map_iter(|x| {
                let near = &near;
                (0..=nb).map(move |y| match (x == na, y == nb) {
                    (true, true) => 0.0,
                    (true, false) | (false, true) => 0.5,
                    (false, false) => near[x]
                        .iter()
                        .fold(1.0f64, |best, &(d, yp)| best.min(dis + d + self.db[yp * nb + y])),
                })
            })
            .collect();
        let cost = Array2::from_shape_vec((na + 1, nb + 1), data).expect("shape");
        let (ma, mb): (f64, f64) = (self.wa.iter().sum(), self.wb.iter().sum());
        let mut supply = self.wa.clone();
        supply.push(mb);
        let mut demand = self.wb.clone();
        demand.push(ma);
        let (supply, demand, cost) = drop_empty(supply, demand, cost);
        let sol = simplex::solve(&supply, &demand, &cost)?;
        let lp: f64 = sol.flows().map(|(i, j, f)| f * cost[[i, j]]).sum();
        Ok((lp + 0.5 * (ma - mb).abs()).max(0.0))
    }
}

/// Removes zero-mass rows and columns, which the simplex does not accept.
fn drop_empty(supply: Vec<f64>, demand: Vec<f64>, cost: Array2<f64>) -> (Vec<f64>, Vec<f64>, Array2<f64>) {
    let rows: Vec<usize> = (0..supply.len()).filter(|&i| supply[i] > 0.0).collect();
    let cols: Vec<usize> = (0..demand.len()).filter(|&j| demand[j] > 0.0).collect();
    if rows.len() == supply.len() && cols.len() == demand.len() {
        return (supply, demand, cost);
    }
    let c = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| cost[[rows[a], cols[b]]]);
    (rows.iter().map(|&i| supply[i]).collect(), cols.iter().map(|&j| demand[j]).collect(), c)
}

/// Half the metric distortion of `corr` on the open `r`-balls.
pub fn distortion(a: &PointedSpace, b: &PointedSpace, corr: &Correspondence, r: f64) -> Result<f64> {
    let l = Local::new(a, b, r);
    let pairs = l.localize(corr)?;
    Ok(l.distortion(&pairs))
}

/// Transport discrepancy between the `r`-ball measures matched through
/// `corr`: moving mass costs `min(1, d_Z)`, destroying or creating it costs
/// `1/2` per unit, and the unavoidable mass difference is charged in full.
pub fn measure_gap(a: &PointedSpace, b: &PointedSpace, corr: &Correspondence, r: f64) -> Result<f64> {
    let l = Local::new(a, b, r);
    let pairs = l.localize(corr)?;
    let dis = l.distortion(&pairs);
    l.gap(&pairs, dis)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PmghMode {
    /// All covering relations; balls of at most `max_points` points in total.
    Exhaustive { max_points: usize, budget: usize },
    /// Simulated annealing over pairs of maps `A → B`, `B → A`.
    Anneal { proposals: usize, cooling: f64, restarts: usize, seed: u64 },
}

impl PmghMode {
    pub fn exhaustive() -> Self {
        PmghMode::Exhaustive { max_points: 9, budget: 5_000_000 }
    }

    pub fn anneal() -> Self {
        PmghMode::Anneal { proposals: 10_000, cooling: 0.99, restarts: 4, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PmghConfig {
    pub radii: Vec<f64>,
    pub mode: PmghMode,
}

impl Default for PmghConfig {
    fn default() -> Self {
        Self { radii: vec![1.0, 2.0, 4.0, 8.0], mode: PmghMode::anneal() }
    }
}

impl PmghConfig {
    pub fn exhaustive() -> Self {
        Self { mode: PmghMode::exhaustive(), ..Self::default() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadiusTerm {
    pub radius: f64,
    pub weight: f64,
    pub ball_sizes: (usize, usize),
    pub distortion: f64,
    /// `None` when the distortion alone already reaches the cap 1.
    pub measure_gap: Option<f64>,
    /// `min(1, distortion + measure_gap)`.
    pub term: f64,
    /// Whether `term` is the exact infimum over correspondences.
    pub exact: bool,
    pub certificate: Correspondence,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PmghEstimate {
    pub value: f64,
    pub terms: Vec<RadiusTerm>,
    /// Equal to `value` when every term is exact.
    pub lower_bound: Option<f64>,
}

impl PmghEstimate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// A canonical order on spaces so that `D̂(A, B)` and `D̂(B, A)` run the same
/// computation.
fn fingerprint(s: &PointedSpace) -> Vec<u64> {
    let n = s.len();
    let mut prof: Vec<(u64, u64)> =
        (0..n).map(|i| (s.dist_to_base(i).to_bits(), s.space().weights()[i].to_bits())).collect();
    prof.sort_unstable();
    let mut key = vec![n as u64];
    key.extend(prof.into_iter().flat_map(|(a, b)| [a, b]));
    key.push(s.base() as u64);
    for i in 0..n {
        key.push(s.space().weights()[i].to_bits());
        for j in (i + 1)..n {
            key.push(s.space().dist(i, j).to_bits());
        }
    }
    key
}

pub fn pmgh_distance(a: &PointedSpace, b: &PointedSpace, config: &PmghConfig) -> Result<PmghEstimate> {
    if config.radii.is_empty() || config.radii.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::param("radii must be positive"));
    }
    if fingerprint(a) > fingerprint(b) {
        let mut est = pmgh_ordered(b, a, config)?;
        for t in &mut est.terms {
            t.ball_sizes = (t.ball_sizes.1, t.ball_sizes.0);
            t.certificate = t.certificate.reversed();
        }
        return Ok(est);
    }
    pmgh_ordered(a, b, config)
}

fn pmgh_ordered(a: &PointedSpace, b: &PointedSpace, config: &PmghConfig) -> Result<PmghEstimate> {
    let terms: Vec<Result<RadiusTerm>> = config
        .radii
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let l = Local::new(a, b, r);
            let weight = 0.5f64.powi(k as i32 + 1);
            let (pairs, dis, gap, exact) = match &config.mode {
                PmghMode::Exhaustive { max_points, budget } => {
                    if l.na() + l.nb() > *max_points {
                        return Err(Error::BudgetExceeded(format!(
                            "exhaustive pmGH at radius {r} needs balls of at most {max_points} points, got {} + {}",
                            l.na(),
                            l.nb()
                        )));
                    }
                    let seed = anneal(&l, 2_000, 0.99, 1, 0);
                    let (pairs, dis, gap) = exhaustive(&l, seed, *budget)?;
                    (pairs, dis, Some(gap), true)
                }
                PmghMode::Anneal { proposals, cooling, restarts, seed } => {
                    let pairs = anneal(&l, *proposals, *cooling, *restarts, *seed);
                    let dis = l.distortion(&pairs);
                    let gap = if dis >= 1.0 { None } else { Some(l.gap(&pairs, dis)?) };
                    // a single point on each side leaves nothing to optimize
                    let exact = l.na() == 1 && l.nb() == 1;
                    (pairs, dis, gap, exact)
                }
            };
            let term = (dis + gap.unwrap_or(1.0)).min(1.0);
            let certificate = Correspondence::new(pairs.iter().map(|&(x, y)| (l.ia[x], l.ib[y])).collect());
            Ok(RadiusTerm {
                radius: r,
                weight,
                ball_sizes: (l.na(), l.nb()),
                distortion: dis,
                measure_gap: gap,
                term,
                exact: exact || term == 0.0,
                certificate,
            })
        })
        .collect();
    let terms: Vec<RadiusTerm> = terms.into_iter().collect::<Result<_>>()?;
    let value = terms.iter().map(|t| t.weight * t.term).sum();
    let lower_bound = terms.iter().all(|t| t.exact).then_some(value);
    Ok(PmghEstimate { value, terms, lower_bound })
}

// ---------------------------------------------------------------------------
// exhaustive search

fn exhaustive(l: &Local, seed: Vec<(usize, usize)>, budget: usize) -> Result<(Vec<(usize, usize)>, f64, f64)> {
    let (na, nb) = (l.na(), l.nb());
    let seed_dis = l.distortion(&seed);
    let seed_gap = l.gap(&seed, seed_dis)?;
    let mut best = (seed.clone(), seed_dis, seed_gap);
    if seed_dis + seed_gap == 0.0 {
        return Ok(best);
    }
    let base = (l.base_a, l.base_b);
    let mut cand: Vec<(usize, usize)> =
        (0..na).flat_map(|x| (0..nb).map(move |y| (x, y))).filter(|&p| p != base).collect();
    // promising pairs first: similar distance to the basepoint
    cand.sort_by(|&p, &q| {
        let e = |(x, y): (usize, usize)| (l.da[x * na + l.base_a] - l.db[y * nb + l.base_b]).abs();
        e(p).total_cmp(&e(q)).then(p.cmp(&q))
    });
    // remaining[k][x]: candidates at positions ≥ k touching x
    let mut rem_a = vec![vec![0usize; na]; cand.len() + 1];
    let mut rem_b = vec![vec![0usize; nb]; cand.len() + 1];
    for k in (0..cand.len()).rev() {
        rem_a[k] = rem_a[k + 1].clone();
        rem_b[k] = rem_b[k + 1].clone();
        rem_a[k][cand[k].0] += 1;
        rem_b[k][cand[k].1] += 1;
    }

    struct Search<'a> {
        l: &'a Local,
        cand: Vec<(usize, usize)>,
        rem_a: Vec<Vec<usize>>,
        rem_b: Vec<Vec<usize>>,
        chosen: Vec<(usize, usize)>,
        cov_a: Vec<usize>,
        cov_b: Vec<usize>,
        nodes: usize,
        budget: usize,
        best: (Vec<(usize, usize)>, f64, f64),
    }

    impl Search<'_> {
        fn value(&self) -> f64 {
            self.best.1 + self.best.2
        }

        fn rec(&mut self, k: usize, dis: f64) -> Result<()> {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::BudgetExceeded(format!("exhaustive pmGH exceeded {} nodes", self.budget)));
            }
            if dis >= self.value() || self.value() == 0.0 {
                return Ok(());
            }
            let uncovered_a = (0..self.cov_a.len()).any(|x| self.cov_a[x] == 0 && self.rem_a[k][x] == 0);
            let uncovered_b = (0..self.cov_b.len()).any(|y| self.cov_b[y] == 0 && self.rem_b[k][y] == 0);
            if uncovered_a || uncovered_b {
                return Ok(());
            }
            if k == self.cand.len() {
                let gap = self.l.gap(&self.chosen, dis)?;
                if dis + gap < self.value() {
                    self.best = (self.chosen.clone(), dis, gap);
                }
                return Ok(());
            }
            let p = self.cand[k];
            let add = self.chosen.iter().map(|&q| self.l.err(p, q)).fold(0.0, f64::max) / 2.0;
            let with = dis.max(add);
            self.chosen.push(p);
            self.cov_a[p.0] += 1;
            self.cov_b[p.1] += 1;
            self.rec(k + 1, with)?;
            self.chosen.pop();
            self.cov_a[p.0] -= 1;
            self.cov_b[p.1] -= 1;
            self.rec(k + 1, dis)
        }
    }

    let mut cov_a = vec![0usize; na];
    let mut cov_b = vec![0usize; nb];
    cov_a[base.0] = 1;
    cov_b[base.1] = 1;
    let mut s = Search {
        l,
        cand,
        rem_a,
        rem_b,
        chosen: vec![base],
        cov_a,
        cov_b,
        nodes: 0,
        budget,
        best: best.clone(),
    };
    s.rec(0, 0.0)?;
    best = s.best;
    Ok(best)
}

// ---------------------------------------------------------------------------
// annealing

/// `k` nearest other points of each point, from a dense distance block.
fn knn(d: &[f64], n: usize, k: usize) -> Vec<Vec<usize>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let k = k.min(idx.len());
            if k == 0 {
                return idx;
            }
            idx.select_nth_unstable_by(k - 1, |&a, &b| d[i * n + a].total_cmp(&d[i * n + b]).then(a.cmp(&b)));
            idx.truncate(k);
            idx.sort_by(|&a, &b| d[i * n + a].total_cmp(&d[i * n + b]).then(a.cmp(&b)));
            idx
        })
        .collect()
}

/// Up to `count` anchor points by farthest-point sampling from the base.
fn anchors(d: &[f64], n: usize, base: usize, count: usize) -> Vec<usize> {
    let mut out = vec![base];
    let mut near: Vec<f64> = (0..n).map(|i| d[base * n + i]).collect();
    while out.len() < count.min(n) {
        let next = (0..n).max_by(|&a, &b| near[a].total_cmp(&near[b]).then(b.cmp(&a))).unwrap();
        if near[next] <= 0.0 {
            break;
        }
        out.push(next);
        for i in 0..n {
            near[i] = near[i].min(d[next * n + i]);
        }
    }
    out
}

/// Image of every point of the source under trilateration from anchor
/// pairs `(source anchor, target anchor)`.
fn trilaterate(
    ds: &[f64],
    ns: usize,
    dt: &[f64],
    nt: usize,
    anchor_pairs: &[(usize, usize)],
    fixed: (usize, usize),
) -> Vec<usize> {
    (0..ns)
        .into_par_iter()
        .map(|x| {
            if x == fixed.0 {
                return fixed.1;
            }
            let mut best = (usize::MAX, f64::INFINITY);
            for y in 0..nt {
                let s: f64 = anchor_pairs.iter().map(|&(a, b)| (ds[a * ns + x] - dt[b * nt + y]).abs()).sum();
                if s < best.1 - 1e-12 {
                    best = (y, s);
                }
            }
            best.0
        })
        .collect()
}

struct State<'a> {
    l: &'a Local,
    f: Vec<usize>,
    g: Vec<usize>,
    rowmax: Vec<f64>,
    argmax: Vec<usize>,
}

impl<'a> State<'a> {
    fn new(l: &'a Local, f: Vec<usize>, g: Vec<usize>) -> Self {
        let p = l.na() + l.nb();
        let mut s = Self { l, f, g, rowmax: vec![0.0; p], argmax: vec![0; p] };
        let rows: Vec<(f64, usize)> = (0..p).into_par_iter().map(|i| s.row(i)).collect();
        for (i, (m, a)) in rows.into_iter().enumerate() {
            s.rowmax[i] = m;
            s.argmax[i] = a;
        }
        s
    }

    fn len(&self) -> usize {
        self.f.len() + self.g.len()
    }

    #[inline]
    fn pair(&self, p: usize) -> (usize, usize) {
        let na = self.f.len();
        if p < na {
            (p, self.f[p])
        } else {
            (self.g[p - na], p - na)
        }
    }

    fn row(&self, p: usize) -> (f64, usize) {
        let pp = self.pair(p);
        let mut best = (0.0, p);
        for q in 0..self.len() {
            let e = self.l.err(pp, self.pair(q));
            if e > best.0 {
                best = (e, q);
            }
        }
        best
    }

    fn energy(&self) -> (f64, f64) {
        let max = self.rowmax.iter().copied().fold(0.0, f64::max);
        let mean = self.rowmax.iter().sum::<f64>() / self.rowmax.len() as f64;
        (max, mean)
    }

    fn set(&mut self, p: usize, partner: usize) {
        let na = self.f.len();
        if p < na {
            self.f[p] = partner;
        } else {
            self.g[p - na] = partner;
        }
    }

    /// Moves pair `p` to a new partner and updates row maxima; returns the
    /// undo log.
    fn apply(&mut self, p: usize, partner: usize) -> (usize, usize, Vec<(usize, f64, usize)>) {
        let old_pair = self.pair(p);
        let old_partner = if p < self.f.len() { old_pair.1 } else { old_pair.0 };
        self.set(p, partner);
        let new_pair = self.pair(p);
        let mut log = vec![(p, self.rowmax[p], self.argmax[p])];
        let mut rmax = (0.0, p);
        let mut recompute = Vec::new();
        for q in 0..self.len() {
            if q == p {
                continue;
            }
            let qp = self.pair(q);
            let new = self.l.err(new_pair, qp);
            if new > rmax.0 {
                rmax = (new, q);
            }
            if new > self.rowmax[q] {
                log.push((q, self.rowmax[q], self.argmax[q]));
                self.rowmax[q] = new;
                self.argmax[q] = p;
            } else if self.argmax[q] == p && new < self.rowmax[q] {
                recompute.push(q);
            }
        }
        self.rowmax[p] = rmax.0;
        self.argmax[p] = rmax.1;
        for q in recompute {
            log.push((q, self.rowmax[q], self.argmax[q]));
            let (m, a) = self.row(q);
            self.rowmax[q] = m;
            self.argmax[q] = a;
        }
        (p, old_partner, log)
    }

    fn undo(&mut self, undo: (usize, usize, Vec<(usize, f64, usize)>)) {
        let (p, partner, log) = undo;
        self.set(p, partner);
        for (q, m, a) in log.into_iter().rev() {
            self.rowmax[q] = m;
            self.argmax[q] = a;
        }
    }

    fn pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = (0..self.len()).map(|p| self.pair(p)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

const MEAN_WEIGHT: f64 = 0.05;
const NEIGHBOURS: usize = 8;

fn scalar((max, mean): (f64, f64)) -> f64 {
    max + MEAN_WEIGHT * mean
}

/// Distance-profile matching: the points of each ball are ranked by distance
/// to the base (ties in index order, which is canonical for blow-up members)
/// and every point goes to the same rank within the nearest distance level
/// of the other ball.
fn profile_map(ds: &[f64], ns: usize, bs: usize, dt: &[f64], nt: usize, bt: usize) -> Vec<usize> {
    // balls are sorted by distance to the base, so levels are contiguous
    let levels = |d: &[f64], n: usize, b: usize| -> Vec<(f64, usize, usize)> {
        let mut out: Vec<(f64, usize, usize)> = Vec::new();
        for i in 0..n {
            let v = d[b * n + i];
            match out.last_mut() {
                Some(l) if level(v) == level(l.0) => l.2 = i + 1,
                _ => out.push((v, i, i + 1)),
            }
        }
        out
    };
    let (ls, lt) = (levels(ds, ns, bs), levels(dt, nt, bt));
    let mut f = vec![bt; ns];
    for &(v, lo, hi) in &ls {
        let k = lt.partition_point(|l| l.0 < v);
        let pick = [k.checked_sub(1), (k < lt.len()).then_some(k)]
            .into_iter()
            .flatten()
            .min_by(|&a, &b| (lt[a].0 - v).abs().total_cmp(&(lt[b].0 - v).abs()))
            .expect("target ball has the base");
        let (tlo, thi) = (lt[pick].1, lt[pick].2);
        for x in lo..hi {
            f[x] = (tlo + (x - lo)).min(thi - 1);
        }
    }
    f[bs] = bt;
    f
}

/// Initial maps. Candidates are the distance-profile matching and anchored
/// trilaterations (the base and a few far anchors are matched to candidates
/// with consistent distances, every other point goes to the best fit); the
/// lowest-energy candidate is returned.
fn initial_maps(l: &Local) -> (Vec<usize>, Vec<usize>) {
    let (na, nb) = (l.na(), l.nb());
    let anc = anchors(&l.da, na, l.base_a, 6);
    let widths = [6usize, 4, 2, 1, 1];
    let mut partial: Vec<(Vec<usize>, f64)> = vec![(vec![l.base_b], 0.0)];
    for (k, &a) in anc.iter().enumerate().skip(1) {
        let mut next = Vec::new();
        for (imgs, score) in &partial {
            let mut cands: Vec<(f64, usize)> = (0..nb)
                .map(|y| {
                    let s: f64 =
                        anc[..k].iter().zip(imgs).map(|(&ap, &yp)| (l.da[ap * na + a] - l.db[yp * nb + y]).abs()).sum();
                    (s, y)
                })
                .collect();
            cands.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            for &(s, y) in cands.iter().take(widths[k - 1]) {
                let mut v = imgs.clone();
                v.push(y);
                next.push((v, score + s));
            }
        }
        next.sort_by(|p, q| p.1.total_cmp(&q.1));
        next.truncate(8);
        partial = next;
    }
    let f = profile_map(&l.da, na, l.base_a, &l.db, nb, l.base_b);
    let g = profile_map(&l.db, nb, l.base_b, &l.da, na, l.base_a);
    let s = State::new(l, f, g);
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = Some((scalar(s.energy()), s.f, s.g));
    for (imgs, _) in &partial {
        let pairs_ab: Vec<(usize, usize)> = anc.iter().copied().zip(imgs.iter().copied()).collect();
        let pairs_ba: Vec<(usize, usize)> = pairs_ab.iter().map(|&(a, b)| (b, a)).collect();
        let f = trilaterate(&l.da, na, &l.db, nb, &pairs_ab, (l.base_a, l.base_b));
        let g = trilaterate(&l.db, nb, &l.da, na, &pairs_ba, (l.base_b, l.base_a));
        let s = State::new(l, f, g);
        let e = scalar(s.energy());
        if best.as_ref().is_none_or(|b| e < b.0) {
            best = Some((e, s.f, s.g));
        }
    }
    let (_, f, g) = best.expect("profile candidate");
    (f, g)
}

fn anneal(l: &Local, proposals: usize, cooling: f64, restarts: usize, seed: u64) -> Vec<(usize, usize)> {
    let (na, nb) = (l.na(), l.nb());
    let (f0, g0) = initial_maps(l);
    if na == 1 || nb == 1 {
        return State::new(l, f0, g0).pairs();
    }
    let knn_a = knn(&l.da, na, NEIGHBOURS);
    let knn_b = knn(&l.db, nb, NEIGHBOURS);
    let runs: Vec<(f64, Vec<(usize, usize)>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(run as u64));
            let mut st = State::new(l, f0.clone(), g0.clone());
            let mut e = scalar(st.energy());
            let mut best = (e, st.pairs());
            if st.energy().0 == 0.0 {
                return best;
            }
            let mut temp = 0.05 * e;
            let movable: Vec<usize> = (0..na + nb).filter(|&p| p != l.base_a && p != na + l.base_b).collect();
            for step in 0..proposals {
                let p = movable[rng.random_range(0..movable.len())];
                let (cur, list, n) = if p < na { (st.f[p], &knn_b, nb) } else { (st.g[p - na], &knn_a, na) };
                let partner = if rng.random::<f64>() < 0.1 || list[cur].is_empty() {
                    rng.random_range(0..n)
                } else {
                    list[cur][rng.random_range(0..list[cur].len())]
                };
                if partner == cur {
                    continue;
                }
                let undo = st.apply(p, partner);
                let ne = scalar(st.energy());
                let accept = ne <= e || (temp > 0.0 && rng.random::<f64>() < ((e - ne) / temp).exp());
                if accept {
                    e = ne;
                    if e < best.0 {
                        best = (e, st.pairs());
                        if st.energy().0 == 0.0 {
                            break;
                        }
                    }
                } else {
                    st.undo(undo);
                }
                if step % 10 == 9 {
                    temp *= cooling;
                }
            }
            best
        })
        .collect();
    runs.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).map(|r| r.1).unwrap()
}

// ---------------------------------------------------------------------------
// convergence diagnostics

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Decreasing,
    Increasing,
    Constant,
    None,
}

pub fn trend(values: &[f64]) -> Trend {
    const TOL: f64 = 1e-12;
    if values.len() < 2 || values.windows(2).all(|w| (w[1] - w[0]).abs() <= TOL) {
        return Trend::Constant;
    }
    if values.windows(2).all(|w| w[1] <= w[0] + TOL) {
        return Trend::Decreasing;
    }
    if values.windows(2).all(|w| w[1] >= w[0] - TOL) {
        return Trend::Increasing;
    }
    Trend::None
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Diagnostic {
    pub values: Vec<f64>,
    pub trend: Trend,
}

impl Diagnostic {
    /// `i,r_i,value` rows; `radii` may be empty.
    pub fn to_csv(&self, radii: &[f64]) -> String {
        let mut s = String::from("i,r,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let r = radii.get(i).map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{i},{r},{v}");
        }
        s
    }
}

pub fn convergence_diagnostic(seq: &[PointedSpace], target: &PointedSpace, config: &PmghConfig) -> Result<Diagnostic> {
    let values = seq.iter().map(|s| pmgh_distance(s, target, config).map(|e| e.value)).collect::<Result<Vec<_>>>()?;
    let trend = trend(&values);
    Ok(Diagnostic { values, trend })
}

/// Distinct points of `a` and `b` that the certificate leaves unmatched;
/// always empty for certificates produced here.
pub fn uncovered(a: &PointedSpace, b: &PointedSpace, corr: &Correspondence, r: f64) -> (Vec<usize>, Vec<usize>) {
    let sa: HashSet<usize> = corr.pairs.iter().map(|p| p.0).collect();
    let sb: HashSet<usize> = corr.pairs.iter().map(|p| p.1).collect();
    (
        ball(a, r).into_iter().filter(|x| !sa.contains(x)).collect(),
        ball(b, r).into_iter().filter(|y| !sb.contains(y)).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Metric;
    use crate::space::{FiniteSpace, Point};
    use ndarray::array;

    fn two_point(gap: f64, w: [f64; 2]) -> PointedSpace {
        let m = Metric::from_matrix(array![[0.0, gap], [gap, 0.0]]);
        let s = FiniteSpace::new(vec![Point::new("a"), Point::new("b")], m, w.to_vec()).unwrap();
        PointedSpace::new(s, 0).unwrap()
    }

    #[test]
    fn two_point_distortion() {
        let (a, b) = (two_point(1.0, [0.5, 0.5]), two_point(1.2, [0.5, 0.5]));
        let full = Correspondence::new(vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        // the full relation pairs 0↔1 with 0↔0 as well, distortion 0.6
        assert!((distortion(&a, &b, &full, 2.0).unwrap() - 0.6).abs() < 1e-15);
        let id = Correspondence::identity(2);
        assert!((distortion(&a, &b, &id, 2.0).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn teleported_mass() {
        let (a, b) = (two_point(1.0, [0.5, 0.5]), two_point(1.0, [0.6, 0.4]));
        let g = measure_gap(&a, &b, &Correspondence::identity(2), 2.0).unwrap();
        assert!((g - 0.1).abs() < 1e-15);
    }

    #[test]
    fn mass_defect() {
        let (a, b) = (two_point(1.0, [0.5, 0.5]), two_point(1.0, [0.75, 0.75]));
        let g = measure_gap(&a, &b, &Correspondence::identity(2), 2.0).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
    }

    #[test]
    fn coverage_is_enforced() {
        let a = two_point(1.0, [0.5, 0.5]);
        let c = Correspondence::new(vec![(0, 0)]);
        assert!(matches!(distortion(&a, &a, &c, 2.0), Err(Error::Coverage(_))));
    }

    #[test]
    fn identical_spaces_are_at_zero() {
        let a = two_point(1.0, [0.5, 0.5]);
        assert_eq!(pmgh_distance(&a, &a, &PmghConfig::default()).unwrap().value, 0.0);
        assert_eq!(pmgh_distance(&a, &a, &PmghConfig::exhaustive()).unwrap().value, 0.0);
    }

    #[test]
    fn trends() {
        assert_eq!(trend(&[0.0, 0.0, 0.0]), Trend::Constant);
        assert_eq!(trend(&[0.3, 0.2, 0.2, 0.1]), Trend::Decreasing);
        assert_eq!(trend(&[0.1, 0.3, 0.1, 0.3]), Trend::None);
        assert_eq!(trend(&[0.1, 0.2]), Trend::Increasing);
    }
}

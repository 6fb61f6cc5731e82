//! Quadratic optimal transport on finite spaces and discrete displacement
//! interpolation.

pub mod interp;
pub(crate) mod simplex;
mod sinkhorn;

use std::fmt::Write as _;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::FiniteSpace;

pub use interp::{InterpolationKind, Interpolator, Locator, TieBreak};

/// Tolerance on the total mass of a transport marginal: `1e-12` plus the
/// rounding that summing `n` terms can accumulate.
pub fn mass_tolerance(n: usize) -> f64 {
    1e-12 + n as f64 * f64::EPSILON
}

/// Nonnegative weights over the points of a space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Measure(Vec<f64>);

impl Measure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::param(format!("measure weight {i} is {}", weights[i])));
        }
        Ok(Self(weights))
    }

    /// `weights / Σ weights`.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let m = Self::new(weights)?;
        let total = m.mass();
        if total <= 0.0 {
            return Err(Error::param("measure has zero mass"));
        }
        Ok(Self(m.0.into_iter().map(|w| w / total).collect()))
    }

    pub fn dirac(n: usize, i: usize) -> Self {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self(w)
    }

    /// Uniform probability on the listed indices.
    pub fn uniform_on(n: usize, indices: &[usize]) -> Result<Self> {
        let mut w = vec![0.0; n];
        for &i in indices {
            w[i] = 1.0;
        }
        Self::normalized(w)
    }

    /// The reference measure of `space` restricted to `indices`, normalized.
    pub fn restricted_reference(space: &FiniteSpace, indices: &[usize]) -> Result<Self> {
        let mut w = vec![0.0; space.len()];
        for &i in indices {
            w[i] = space.weights()[i];
        }
        Self::normalized(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn mass(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= mass_tolerance(self.0.len())
    }

    /// Parses `index,mass` rows or a single column of masses.
    pub fn from_csv(text: &str, n: usize) -> Result<Self> {
        let mut w = vec![0.0; n];
        let mut row = 0usize;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number `{s}`")));
            match fields.as_slice() {
                [m] => {
                    if row >= n {
                        return Err(Error::MeasureLength { expected: n, got: row + 1 });
                    }
                    w[row] = parse(m)?;
                }
                [i, m] => {
                    let Ok(i) = i.parse::<usize>() else {
                        if row == 0 {
                            continue; // header
                        }
                        return Err(Error::Format(format!("bad index `{i}`")));
                    };
                    if i >= n {
                        return Err(Error::MeasureLength { expected: n, got: i + 1 });
                    }
                    w[i] += parse(m)?;
                }
                _ => return Err(Error::Format(format!("unexpected row `{line}`"))),
            }
            row += 1;
        }
        Self::new(w)
    }

    fn check_on(&self, space: &FiniteSpace) -> Result<()> {
        if self.len() != space.len() {
            return Err(Error::MeasureLength { expected: space.len(), got: self.len() });
        }
        Ok(())
    }
}

/// A transport plan stored as sparse `(i, j, mass)` triplets over an
/// `n`-point space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub size: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Coupling {
    pub fn first_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.size];
        for &(i, _, w) in &self.entries {
            m[i] += w;
        }
        m
    }

    pub fn second_marginal(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.size];
        for &(_, j, w) in &self.entries {
            m[j] += w;
        }
        m
    }

    /// `Σ γ_ij d(i,j)²`.
    pub fn cost(&self, space: &FiniteSpace) -> f64 {
        self.entries.iter().map(|&(i, j, w)| w * space.dist(i, j).powi(2)).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut g = Array2::zeros((self.size, self.size));
        for &(i, j, w) in &self.entries {
            g[[i, j]] += w;
        }
        g
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,mass\n");
        for &(i, j, w) in &self.entries {
            let _ = writeln!(s, "{i},{j},{w:e}");
        }
        s
    }

    pub fn from_csv(text: &str, size: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 {
                return Err(Error::Format(format!("expected i,j,mass in `{line}`")));
            }
            let (Ok(i), Ok(j)) = (f[0].parse::<usize>(), f[1].parse::<usize>()) else {
                if entries.is_empty() {
                    continue;
                }
                return Err(Error::Format(format!("bad indices in `{line}`")));
            };
            let w: f64 = f[2].parse().map_err(|_| Error::Format(format!("bad mass in `{line}`")))?;
            if i >= size || j >= size || !(w >= 0.0) {
                return Err(Error::Format(format!("entry out of range: `{line}`")));
            }
            entries.push((i, j, w));
        }
        Ok(Self { size, entries })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Solver {
    Exact,
    /// Log-domain Sinkhorn with regularization `epsilon` (in squared distance
    /// units).
    Entropic { epsilon: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct W2Result {
    /// `W₂²`.
    pub cost: f64,
    pub plan: Coupling,
    /// Declared bound on `|cost − W₂²|`; zero up to rounding for the exact
    /// solver.
    pub tolerance: f64,
    /// Sinkhorn iterations or simplex pivots.
    pub iterations: usize,
}

impl W2Result {
    pub fn distance(&self) -> f64 {
        self.cost.max(0.0).sqrt()
    }
}

fn check_marginals(space: &FiniteSpace, mu0: &Measure, mu1: &Measure) -> Result<()> {
    mu0.check_on(space)?;
    mu1.check_on(space)?;
    let (m0, m1) = (mu0.mass(), mu1.mass());
    let tol = mass_tolerance(space.len());
    if (m0 - m1).abs() > tol {
        return Err(Error::MassMismatch(m0, m1));
    }
    if (m0 - 1.0).abs() > tol {
        return Err(Error::NotProbability(m0));
    }
    Ok(())
}

/// Exact transportation problem restricted to the two supports.
pub(crate) struct SupportProblem {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub supply: Vec<f64>,
    pub demand: Vec<f64>,
    pub cost: Array2<f64>,
}

impl SupportProblem {
    pub fn new(space: &FiniteSpace, mu0: &Measure, mu1: &Measure) -> Self {
        let rows = mu0.support();
        let cols = mu1.support();
        let data: Vec<f64> = rows
            .par_iter()
            .flat_map_iter(|&i| cols.iter().map(move |&j| space.dist(i, j).powi(2)))
            .collect();
        let cost = Array2::from_shape_vec((rows.len(), cols.len()), data).expect("shape");
        let supply = rows.iter().map(|&i| mu0.as_slice()[i]).collect();
        let demand = cols.iter().map(|&j| mu1.as_slice()[j]).collect();
        Self { rows, cols, supply, demand, cost }
    }

    pub fn solve(&self) -> Result<simplex::TransportSolution> {
        simplex::solve(&self.supply, &self.demand, &self.cost)
    }

    pub fn coupling(&self, n: usize, cells: impl IntoIterator<Item = (usize, usize, f64)>) -> Coupling {
        let mut entries: Vec<(usize, usize, f64)> =
            cells.into_iter().filter(|c| c.2 > 0.0).map(|(a, b, w)| (self.rows[a], self.cols[b], w)).collect();
        entries.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        Coupling { size: n, entries }
    }
}

/// Squared quadratic transport distance and an optimal plan.
pub fn w2(space: &FiniteSpace, mu0: &Measure, mu1: &Measure, solver: Solver) -> Result<W2Result> {
    check_marginals(space, mu0, mu1)?;
    let problem = SupportProblem::new(space, mu0, mu1);
    match solver {
        Solver::Exact => {
            let sol = problem.solve()?;
            let plan = problem.coupling(space.len(), sol.flows());
            let cost = plan.cost(space);
            Ok(W2Result { cost, plan, tolerance: 1e-12 * cost.max(1.0), iterations: sol.pivots })
        }
        Solver::Entropic { epsilon } => {
            if !(epsilon > 0.0) {
                return Err(Error::param("entropic regularization must be positive"));
            }
            let out = sinkhorn::solve(&problem.supply, &problem.demand, &problem.cost, epsilon);
            let mut cells = Vec::new();
            for ((a, b), &w) in out.plan.indexed_iter() {
                if w > 0.0 {
                    cells.push((a, b, w));
                }
            }
            let plan = problem.coupling(space.len(), cells);
            let cost = plan.cost(space);
            let (m, n) = problem.cost.dim();
            let max_cost = problem.cost.iter().fold(0.0f64, |a, &c| a.max(c));
            // entropic bias plus the cost of the residual marginal error
            let tolerance = epsilon * ((m * n) as f64).ln().max(0.0) + max_cost * out.marginal_error;
            Ok(W2Result { cost, plan, tolerance, iterations: out.iterations })
        }
    }
}

/// The monotone (quantile) coupling on a space whose metric is a 1-D
/// coordinate chart.
pub fn monotone_1d(space: &FiniteSpace, mu0: &Measure, mu1: &Measure) -> Result<W2Result> {
    use crate::metric::Geometry;
    let metric = space.metric();
    match (metric.chart_dim(), metric.geometry()) {
        (Some(1), Some(Geometry::Lp { .. } | Geometry::LInf)) => {}
        (Some(d), Some(g)) => return Err(Error::NotOneDimensional(format!("{d}-dimensional {g:?} chart"))),
        _ => return Err(Error::NotOneDimensional("metric has no coordinate chart".into())),
    }
    check_marginals(space, mu0, mu1)?;
    let x = |i: usize| metric.chart(i).unwrap()[0];
    let sorted = |mu: &Measure| {
        let mut s = mu.support();
        s.sort_by(|&a, &b| x(a).total_cmp(&x(b)).then(a.cmp(&b)));
        s
    };
    let (s0, s1) = (sorted(mu0), sorted(mu1));
    let mut r0: Vec<f64> = s0.iter().map(|&i| mu0.as_slice()[i]).collect();
    let mut r1: Vec<f64> = s1.iter().map(|&j| mu1.as_slice()[j]).collect();
    let mut entries = Vec::new();
    let (mut a, mut b) = (0usize, 0usize);
    while a < s0.len() && b < s1.len() {
        let w = r0[a].min(r1[b]);
        if w > 0.0 {
            entries.push((s0[a], s1[b], w));
        }
        r0[a] -= w;
        r1[b] -= w;
        // advance whichever is exhausted; the last pair absorbs rounding
        if r0[a] <= 0.0 || (b + 1 == s1.len() && a + 1 < s0.len()) {
            a += 1;
        } else {
            b += 1;
        }
    }
    entries.sort_by(|p, q| (p.0, p.1).cmp(&(q.0, q.1)));
    let plan = Coupling { size: space.len(), entries };
    let cost = plan.cost(space);
    Ok(W2Result { cost, plan, tolerance: 1e-12 * cost.max(1.0), iterations: 0 })
}

/// `μ_t`: pushforward of the plan along `interp(i, j, t)`.
pub fn interpolate(space: &FiniteSpace, plan: &Coupling, t: f64) -> Result<Measure> {
    let locator = Locator::new(space)?;
    interpolate_with(&locator, plan, t)
}

pub fn interpolate_with(locator: &Locator<'_>, plan: &Coupling, t: f64) -> Result<Measure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("t = {t} outside [0, 1]")));
    }
    let targets: Vec<usize> = plan.entries.par_iter().map(|&(i, j, _)| locator.interp(i, j, t)).collect();
    let mut w = vec![0.0; plan.size];
    for (&(_, _, m), &k) in plan.entries.iter().zip(&targets) {
        w[k] += m;
    }
    Ok(Measure(w))
}

/// One `(i, j)` atom of a plan with its interpolation path.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicPath {
    pub from: usize,
    pub to: usize,
    pub mass: f64,
    /// `max |d(p(s), p(t)) − |s−t|·d(i,j)|` over the sample times.
    pub defect: f64,
}

/// A plan lifted to interpolation paths, with a per-path geodesy report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicPlan {
    pub size: usize,
    pub paths: Vec<GeodesicPath>,
    pub interpolator: Interpolator,
    pub sample_times: Vec<f64>,
}

impl GeodesicPlan {
    /// Paths whose defect exceeds the declared accuracy.
    pub fn failures(&self) -> Vec<usize> {
        (0..self.paths.len()).filter(|&k| self.paths[k].defect > self.interpolator.accuracy).collect()
    }

    pub fn worst_defect(&self) -> f64 {
        self.paths.iter().map(|p| p.defect).fold(0.0, f64::max)
    }

    pub fn coupling(&self) -> Coupling {
        Coupling { size: self.size, entries: self.paths.iter().map(|p| (p.from, p.to, p.mass)).collect() }
    }

    /// `(e_t)♯π`.
    pub fn evaluate(&self, space: &FiniteSpace, t: f64) -> Result<Measure> {
        let locator = Locator::with_interpolator(space, self.interpolator.clone());
        interpolate_with(&locator, &self.coupling(), t)
    }
}

/// Lifts a plan to paths `t ↦ interp(i, j, t)` and measures how far each is
/// from a constant-speed geodesic on the times `k/8`.
pub fn geodesic_plan(space: &FiniteSpace, plan: &Coupling) -> Result<GeodesicPlan> {
    let locator = Locator::new(space)?;
    let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
    let paths = plan
        .entries
        .par_iter()
        .map(|&(i, j, mass)| {
            let d = space.dist(i, j);
            let pts: Vec<usize> = times.iter().map(|&t| locator.interp(i, j, t)).collect();
            let mut defect = 0.0f64;
            for a in 0..pts.len() {
                for b in (a + 1)..pts.len() {
                    let e = (space.dist(pts[a], pts[b]) - (times[b] - times[a]) * d).abs();
                    defect = defect.max(e);
                }
            }
            GeodesicPath { from: i, to: j, mass, defect }
        })
        .collect();
    Ok(GeodesicPlan { size: plan.size, paths, interpolator: locator.interpolator().clone(), sample_times: times })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{Geometry, Metric};
    use crate::space::Point;
    use ndarray::Array2;

    fn line(n: usize) -> FiniteSpace {
        let coords = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let points = (0..n).map(|i| Point::with_coords(i.to_string(), vec![i as f64])).collect();
        FiniteSpace::new(points, Metric::from_coords(coords, Geometry::Lp { p: 2.0 }), vec![1.0; n])
            .unwrap()
            .with_interpolator(Interpolator::chart(0.5))
    }

    #[test]
    fn four_point_line() {
        let s = line(4);
        let mu0 = Measure::uniform_on(4, &[0, 1]).unwrap();
        let mu1 = Measure::uniform_on(4, &[2, 3]).unwrap();
        let r = w2(&s, &mu0, &mu1, Solver::Exact).unwrap();
        assert!((r.cost - 4.0).abs() < 1e-12);
        assert_eq!(r.plan.entries, vec![(0, 2, 0.5), (1, 3, 0.5)]);
        let m = monotone_1d(&s, &mu0, &mu1).unwrap();
        assert!((m.cost - 4.0).abs() < 1e-12);
    }

    #[test]
    fn diracs() {
        let s = line(5);
        let r = w2(&s, &Measure::dirac(5, 1), &Measure::dirac(5, 4), Solver::Exact).unwrap();
        assert_eq!(r.cost, 9.0);
        assert_eq!(r.distance(), 3.0);
    }

    #[test]
    fn mismatched_masses_are_rejected() {
        let s = line(3);
        let mu1 = Measure::new(vec![0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(w2(&s, &Measure::dirac(3, 0), &mu1, Solver::Exact), Err(Error::MassMismatch(..))));
    }

    #[test]
    fn midpoint_of_diracs() {
        let s = line(11);
        let plan = Coupling { size: 11, entries: vec![(0, 10, 1.0)] };
        let mid = interpolate(&s, &plan, 0.5).unwrap();
        assert_eq!(mid, Measure::dirac(11, 5));
        assert_eq!(interpolate(&s, &plan, 0.0).unwrap(), Measure::dirac(11, 0));
        assert_eq!(interpolate(&s, &plan, 1.0).unwrap(), Measure::dirac(11, 10));
    }

    #[test]
    fn missing_interpolator() {
        let s = line(3).without_interpolator();
        let plan = Coupling { size: 3, entries: vec![(0, 2, 1.0)] };
        assert!(matches!(interpolate(&s, &plan, 0.5), Err(Error::MissingInterpolator)));
    }

    #[test]
    fn entropic_is_close_to_exact() {
        let s = line(12);
        let mu0 = Measure::uniform_on(12, &[0, 1, 2, 7]).unwrap();
        let mu1 = Measure::uniform_on(12, &[4, 9, 10, 11]).unwrap();
        let exact = w2(&s, &mu0, &mu1, Solver::Exact).unwrap();
        let ent = w2(&s, &mu0, &mu1, Solver::Entropic { epsilon: 0.05 }).unwrap();
        assert!(ent.cost >= exact.cost - ent.tolerance);
        assert!((ent.cost - exact.cost).abs() <= ent.tolerance);
    }

    #[test]
    fn coupling_csv_round_trip() {
        let c = Coupling { size: 4, entries: vec![(0, 1, 0.25), (3, 2, 0.75)] };
        assert_eq!(Coupling::from_csv(&c.to_csv(), 4).unwrap(), c);
    }

    #[test]
    fn measure_csv_forms() {
        let a = Measure::from_csv("index,mass\n0,0.5\n2,0.5\n", 3).unwrap();
        let b = Measure::from_csv("0.5\n0\n0.5\n", 3).unwrap();
        assert_eq!(a, b);
    }
}

//! Distortion coefficients, Rényi energies, the CD*(K, N) inequality along
//! computed optimal plans, and the prolongability experiment.

mod dd;

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::FiniteSpace;
use crate::transport::{self, simplex, Coupling, GeodesicPlan, Interpolator, Locator, Measure, TieBreak};

use dd::DD;

/// The distortion coefficient `σ^{(t)}_{K,N}(θ)`; `+∞` is returned as
/// `f64::INFINITY`.
pub fn sigma(k: f64, n: f64, t: f64, theta: f64) -> Result<f64> {
    if !k.is_finite() {
        return Err(Error::param(format!("K = {k} is not finite")));
    }
    if !(n >= 1.0) || !n.is_finite() {
        return Err(Error::param(format!("N = {n} must be a finite number ≥ 1")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::param(format!("t = {t} outside [0, 1]")));
    }
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::param(format!("θ = {theta} must be finite and ≥ 0")));
    }
    Ok(sigma_unchecked(k, n, t, theta))
}

pub(crate) fn sigma_unchecked(k: f64, n: f64, t: f64, theta: f64) -> f64 {
    if k == 0.0 || theta == 0.0 {
        return t;
    }
    if k > 0.0 {
        let kt2 = DD::new(k) * DD::product(theta, theta);
        let npi2 = DD::new(n) * DD::PI * DD::PI;
        if kt2 >= npi2 {
            return f64::INFINITY;
        }
        if t == 0.0 {
            return 0.0;
        }
        if t == 1.0 {
            return 1.0;
        }
        let x = (kt2 / DD::new(n)).sqrt();
        let ratio = (DD::new(t) * x).sin() / x.sin();
        ratio.hi + ratio.lo
    } else {
        let x = theta * (-k / n).sqrt();
        // sinh(tx)/sinh(x) without overflow
        (-(1.0 - t) * x).exp() * (-2.0 * t * x).exp_m1() / (-2.0 * x).exp_m1()
    }
}

/// `−Σ_{w(i)>0} ρ(i)^{1−1/N'}·w(i)` with `ρ = μ/w`, and the mass of `μ` on
/// zero-weight points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenyiEnergy {
    pub energy: f64,
    pub singular_mass: f64,
}

pub fn renyi_energy(mu: &Measure, space: &FiniteSpace, nprime: f64) -> Result<RenyiEnergy> {
    if mu.len() != space.len() {
        return Err(Error::MeasureLength { expected: space.len(), got: mu.len() });
    }
    if !(nprime >= 1.0) {
        return Err(Error::param(format!("N' = {nprime} must be ≥ 1")));
    }
    let expo = 1.0 - 1.0 / nprime;
    let mut energy = 0.0;
    let mut singular_mass = 0.0;
    for (&m, &w) in mu.as_slice().iter().zip(space.weights()) {
        if m <= 0.0 {
            continue;
        }
        if w > 0.0 {
            energy -= (m / w).powf(expo) * w;
        } else {
            singular_mass += m;
        }
    }
    Ok(RenyiEnergy { energy, singular_mass })
}

/// How many optimal plans the checker looks at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlanSearch {
    /// The vertex plan returned by the exact solver, lowest-index ties.
    Computed,
    /// Every vertex of the optimal face (supports of at most `max_support`
    /// points in total), each with both interpolation tie policies.
    Exhaustive { max_support: usize, budget: usize },
}

impl PlanSearch {
    pub fn exhaustive() -> Self {
        PlanSearch::Exhaustive { max_support: 12, budget: 1_000_000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdConfig {
    pub k: f64,
    pub n: f64,
    pub t_grid: Vec<f64>,
    /// Empty means `{N, N+1, 2N}`.
    #[serde(default)]
    pub nprime_grid: Vec<f64>,
    /// Verdict tolerance `τ_cd`; defaults to `5·h·diam` from the declared
    /// resolution, or `1e-9` without one.
    #[serde(default)]
    pub tolerance: Option<f64>,
    pub search: PlanSearch,
}

impl CdConfig {
    pub fn new(k: f64, n: f64, t_grid: Vec<f64>) -> Self {
        Self { k, n, t_grid, nprime_grid: Vec::new(), tolerance: None, search: PlanSearch::Computed }
    }

    pub fn nprimes(&self) -> Vec<f64> {
        if !self.nprime_grid.is_empty() {
            return self.nprime_grid.clone();
        }
        let mut g = vec![self.n, self.n + 1.0, 2.0 * self.n];
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdEntry {
    pub t: f64,
    pub nprime: f64,
    #[serde(with = "crate::io::ext_real")]
    pub lhs: f64,
    #[serde(with = "crate::io::ext_real")]
    pub rhs: f64,
    #[serde(with = "crate::io::ext_real")]
    pub slack: f64,
    /// Mass of `μ_t` on zero-weight points, excluded from `lhs`.
    pub singular_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Violated {
        t: f64,
        nprime: f64,
        #[serde(with = "crate::io::ext_real")]
        slack: f64,
    },
    Inconclusive {
        reason: String,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CdReport {
    pub k: f64,
    pub n: f64,
    pub tolerance: f64,
    pub tolerance_source: String,
    pub entries: Vec<CdEntry>,
    pub verdict: Verdict,
    pub plans_examined: usize,
    pub ties: TieBreak,
    pub worst_geodesic_defect: f64,
    pub geodesy_failures: usize,
    pub note: String,
}

impl CdReport {
    pub fn worst_slack(&self) -> f64 {
        self.entries.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min)
    }

    pub fn entry(&self, t: f64, nprime: f64) -> Option<&CdEntry> {
        self.entries.iter().find(|e| e.t == t && e.nprime == nprime)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,nprime,lhs,rhs,slack\n");
        for e in &self.entries {
            let _ = writeln!(s, "{},{},{},{},{}", e.t, e.nprime, e.lhs, e.rhs, e.slack);
        }
        s
    }
}

fn singular_mass(mu: &Measure, space: &FiniteSpace) -> f64 {
    mu.as_slice().iter().zip(space.weights()).filter(|(_, &w)| w <= 0.0).map(|(&m, _)| m).sum()
}

fn check_grids(k: f64, n: f64, t_grid: &[f64], nprimes: &[f64]) -> Result<()> {
    sigma(k, n, 0.0, 0.0)?;
    if t_grid.is_empty() {
        return Err(Error::param("empty t grid"));
    }
    if let Some(t) = t_grid.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::param(format!("t = {t} outside [0, 1]")));
    }
    if let Some(np) = nprimes.iter().find(|&&np| !(np >= n) || !np.is_finite()) {
        return Err(Error::param(format!("N' = {np} must be finite and ≥ N = {n}")));
    }
    Ok(())
}

/// Evaluates the inequality table for one plan and one tie policy.
fn table(
    space: &FiniteSpace,
    plan: &Coupling,
    interp: &Interpolator,
    mu0: &Measure,
    mu1: &Measure,
    k: f64,
    t_grid: &[f64],
    nprimes: &[f64],
) -> Result<Vec<CdEntry>> {
    let locator = Locator::with_interpolator(space, interp.clone());
    let w = space.weights();
    let rows: Vec<Result<Vec<CdEntry>>> = t_grid
        .par_iter()
        .map(|&t| {
            let mu_t = transport::interpolate_with(&locator, plan, t)?;
            nprimes
                .iter()
                .map(|&np| {
                    let lhs = renyi_energy(&mu_t, space, np)?;
                    let mut rhs = 0.0;
                    for &(i, j, g) in &plan.entries {
                        let theta = space.dist(i, j);
                        let r0 = mu0.as_slice()[i] / w[i];
                        let r1 = mu1.as_slice()[j] / w[j];
                        let s0 = sigma_unchecked(k, np, 1.0 - t, theta);
                        let s1 = sigma_unchecked(k, np, t, theta);
                        // 0·∞ does not occur: masses are positive on plan atoms
                        rhs -= g * (s0 * r0.powf(-1.0 / np) + s1 * r1.powf(-1.0 / np));
                    }
                    Ok(CdEntry {
                        t,
                        nprime: np,
                        lhs: lhs.energy,
                        rhs,
                        slack: rhs - lhs.energy,
                        singular_mass: lhs.singular_mass,
                    })
                })
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

fn verdict(entries: &[CdEntry], tol: f64) -> Verdict {
    if entries.iter().any(|e| e.slack.is_nan()) {
        return Verdict::Inconclusive { reason: "undefined slack (∞ − ∞)".into() };
    }
    let worst = entries.iter().min_by(|a, b| a.slack.total_cmp(&b.slack));
    match worst {
        Some(e) if e.slack < -tol => Verdict::Violated { t: e.t, nprime: e.nprime, slack: e.slack },
        _ => Verdict::Holds,
    }
}

/// Checks the CD*(K, N) inequality along optimal plans from `mu0` to `mu1`.
///
/// A violation refers to the plans examined: the condition only asks for
/// some optimal plan, so it is evidence rather than proof.
pub fn cdstar_check(space: &FiniteSpace, mu0: &Measure, mu1: &Measure, config: &CdConfig) -> Result<CdReport> {
    let interp = space.interpolator().cloned().ok_or(Error::MissingInterpolator)?;
    let nprimes = config.nprimes();
    check_grids(config.k, config.n, &config.t_grid, &nprimes)?;
    for mu in [mu0, mu1] {
        if mu.len() != space.len() {
            return Err(Error::MeasureLength { expected: space.len(), got: mu.len() });
        }
        let s = singular_mass(mu, space);
        if s > 0.0 {
            return Err(Error::SingularMarginal { mass: s });
        }
    }
    let (tolerance, tolerance_source) = match (config.tolerance, space.resolution()) {
        (Some(t), _) => {
            if !(t >= 0.0) {
                return Err(Error::param("tolerance must be nonnegative"));
            }
            (t, "configured".to_string())
        }
        (None, Some(h)) => (5.0 * h * space.diameter(), format!("5·h·diam with h = {h}")),
        (None, None) => (1e-9, "no resolution declared; fixed 1e-9".to_string()),
    };

    let exact = transport::w2(space, mu0, mu1, transport::Solver::Exact)?;
    let plans: Vec<Coupling> = match &config.search {
        PlanSearch::Computed => vec![exact.plan.clone()],
        PlanSearch::Exhaustive { max_support, budget } => {
            let problem = transport::SupportProblem::new(space, mu0, mu1);
            let size = problem.rows.len() + problem.cols.len();
            if size > *max_support {
                return Err(Error::BudgetExceeded(format!(
                    "exhaustive plan search needs at most {max_support} support points, got {size}"
                )));
            }
            let sol = problem.solve()?;
            simplex::optimal_vertices(&problem.supply, &problem.demand, &problem.cost, &sol, *budget)?
                .into_iter()
                .map(|v| problem.coupling(space.len(), v))
                .collect()
        }
    };
    let policies: &[TieBreak] = match config.search {
        PlanSearch::Computed => &[TieBreak::Lowest],
        PlanSearch::Exhaustive { .. } => &[TieBreak::Lowest, TieBreak::Highest],
    };

    let mut best: Option<(Vec<CdEntry>, GeodesicPlan, TieBreak, f64)> = None;
    let mut examined = 0usize;
    'search: for plan in &plans {
        for &ties in policies {
            examined += 1;
            let it = interp.clone().with_ties(ties);
            let entries = table(space, plan, &it, mu0, mu1, config.k, &config.t_grid, &nprimes)?;
            let worst = entries.iter().map(|e| e.slack).fold(f64::INFINITY, f64::min);
            let worst = if worst.is_nan() { f64::NEG_INFINITY } else { worst };
            if best.as_ref().is_none_or(|b| worst > b.3) {
                let geo = transport::geodesic_plan(&space.clone().with_interpolator(it), plan)?;
                best = Some((entries, geo, ties, worst));
            }
            if worst >= -tolerance {
                break 'search;
            }
        }
    }
    let (entries, geo, ties, _) = best.expect("at least one plan");
    let mut verdict = verdict(&entries, tolerance);
    let failures = geo.failures().len();
    if matches!(verdict, Verdict::Violated { .. }) && failures > 0 {
        verdict = Verdict::Inconclusive {
            reason: format!("violation along a plan with {failures} paths failing the geodesy check"),
        };
    }
    let note = match config.search {
        PlanSearch::Computed => "verdict refers to the computed optimal plan; a violation is evidence, \
                                  not proof, since another optimal plan might satisfy the inequality"
            .to_string(),
        PlanSearch::Exhaustive { .. } => format!(
            "searched {} vertex-optimal plans with both interpolation tie policies; a violation holds for \
             every vertex examined, not for non-vertex optimal plans",
            plans.len()
        ),
    };
    Ok(CdReport {
        k: config.k,
        n: config.n,
        tolerance,
        tolerance_source,
        entries,
        verdict,
        plans_examined: examined,
        ties,
        worst_geodesic_defect: geo.worst_defect(),
        geodesy_failures: failures,
        note,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProlongConfig {
    pub k: f64,
    pub n: f64,
    pub t_grid: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProlongRow {
    pub t: f64,
    /// `m(E_t)/m(B_R(x₀))`.
    pub ratio: f64,
    /// `−∫ρ_t^{1−1/N} dm`.
    pub entropy: f64,
    /// `−m(E_t)^{1/N}`; never above `entropy`.
    pub jensen_bound: f64,
    /// `−Σ γ σ^{(1−t)}(d) ρ₀^{−1/N}`: the one-sided right-hand side used when
    /// the target is a Dirac mass.
    #[serde(with = "crate::io::ext_real")]
    pub lemma_rhs: f64,
    #[serde(with = "crate::io::ext_real")]
    pub lemma_slack: f64,
    pub singular_mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProlongReport {
    pub x0: usize,
    pub radius: f64,
    pub ball_mass: f64,
    pub rows: Vec<ProlongRow>,
    /// Mass fraction of the ball covered by `∪ E_t` over grid times in `(0, 1)`.
    pub coverage: f64,
    /// Same, counting only points reached strictly inside a path (neither
    /// its start nor `x₀`).
    pub interior_coverage: f64,
}

/// Transports the normalized reference measure on the open ball `B_R(x₀)` to
/// `δ_{x₀}` and records the support of `μ_t` along the way.
pub fn prolongability_experiment(
    space: &FiniteSpace,
    x0: usize,
    radius: f64,
    config: &ProlongConfig,
) -> Result<ProlongReport> {
    let interp = space.interpolator().cloned().ok_or(Error::MissingInterpolator)?;
    check_grids(config.k, config.n, &config.t_grid, &[config.n])?;
    if x0 >= space.len() || space.weights()[x0] <= 0.0 {
        return Err(Error::param(format!("x0 = {x0} is not a support point")));
    }
    if !(radius > 0.0) {
        return Err(Error::param("radius must be positive"));
    }
    let w = space.weights();
    let ball: Vec<usize> = (0..space.len()).filter(|&i| w[i] > 0.0 && space.dist(x0, i) < radius).collect();
    let ball_mass: f64 = ball.iter().map(|&i| w[i]).sum();
    // every coupling with a Dirac target is the product coupling
    let plan = Coupling { size: space.len(), entries: ball.iter().map(|&i| (i, x0, w[i] / ball_mass)).collect() };
    let locator = Locator::with_interpolator(space, interp);
    let n = config.n;

    let results: Vec<Result<(ProlongRow, Vec<usize>, Vec<usize>)>> = config
        .t_grid
        .par_iter()
        .map(|&t| {
            let targets: Vec<usize> = plan.entries.iter().map(|&(i, j, _)| locator.interp(i, j, t)).collect();
            let mut mu_t = vec![0.0; space.len()];
            for (&(_, _, g), &k) in plan.entries.iter().zip(&targets) {
                mu_t[k] += g;
            }
            let mu_t = Measure::new(mu_t)?;
            let e_t: Vec<usize> = mu_t.support().into_iter().filter(|&i| w[i] > 0.0).collect();
            let m_e: f64 = e_t.iter().map(|&i| w[i]).sum();
            let r = renyi_energy(&mu_t, space, n)?;
            let mut lemma_rhs = 0.0;
            for &(i, j, g) in &plan.entries {
                let rho0 = g / w[i];
                lemma_rhs -= g * sigma_unchecked(config.k, n, 1.0 - t, space.dist(i, j)) * rho0.powf(-1.0 / n);
            }
            let interior: Vec<usize> = plan
                .entries
                .iter()
                .zip(&targets)
                .filter(|(&(i, j, _), &k)| k != i && k != j && w[k] > 0.0)
                .map(|(_, &k)| k)
                .collect();
            let row = ProlongRow {
                t,
                ratio: m_e / ball_mass,
                entropy: r.energy,
                jensen_bound: -m_e.powf(1.0 / n),
                lemma_rhs,
                lemma_slack: lemma_rhs - r.energy,
                singular_mass: r.singular_mass,
            };
            Ok((row, e_t, interior))
        })
        .collect();

    let mut rows = Vec::new();
    let mut covered = vec![false; space.len()];
    let mut inner = vec![false; space.len()];
    for (res, &t) in results.into_iter().zip(&config.t_grid) {
        let (row, e_t, interior) = res?;
        if t > 0.0 && t < 1.0 {
            for i in e_t {
                covered[i] = true;
            }
            for i in interior {
                inner[i] = true;
            }
        }
        rows.push(row);
    }
    let frac = |flags: &[bool]| ball.iter().filter(|&&i| flags[i]).map(|&i| w[i]).sum::<f64>() / ball_mass;
    Ok(ProlongReport {
        x0,
        radius,
        ball_mass,
        rows,
        coverage: frac(&covered),
        interior_coverage: frac(&inner),
    })
}

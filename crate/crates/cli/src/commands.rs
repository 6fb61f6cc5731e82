use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;

use mms_lab::curvature::{cdstar_check, prolongability_experiment, CdConfig, PlanSearch, ProlongConfig, Verdict};
use mms_lab::io::load_space;
use mms_lab::models::{self, ModelSpec};
use mms_lab::pmgh::{pmgh_distance, PmghConfig, PmghMode};
use mms_lab::space::{doubling_profile, normalize_at, CenterPolicy, DoublingConfig};
use mms_lab::tangent::{
    blowup, detect_line, euclidean_dimension, match_tangent, split, BlowupConfig, DimensionConfig, SplitConfig,
    TangentModel,
};
use mms_lab::transport::{w2, Solver, W2Result};
use mms_lab::{Measure, PointedSpace};

use crate::output::{cached, digest, f64_bytes, Artifacts};
use crate::svg::{line_plot, Series};
use crate::{Cli, Command, Common, Input, Marginals, ModelsAction};

/// A command-line value the library never sees.
#[derive(Debug)]
pub struct Invalid(pub String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn run(cli: &Cli) -> Result<()> {
    let c = &cli.common;
    for (name, v) in [("--tol-cd", c.tol_cd), ("--tol-line", c.tol_line), ("--window", c.window)] {
        if v.is_some_and(|v| !(v > 0.0)) {
            return Err(invalid(format!("{name} must be positive")));
        }
    }
    match &cli.command {
        Command::W2 { input, marginals, entropic } => cmd_w2(c, input, marginals, *entropic),
        Command::Cdstar { input, marginals, exhaustive } => cmd_cdstar(c, input, marginals, *exhaustive),
        Command::Prolong { input, radius, x0 } => cmd_prolong(c, input, *radius, *x0),
        Command::Doubling { input, centers, samples } => cmd_doubling(c, input, *centers, *samples),
        Command::Ghdist { first, second, exhaustive, proposals } => cmd_ghdist(c, first, second, *exhaustive, *proposals),
        Command::Blowup { input, models } => cmd_blowup(c, input, models),
        Command::Split { input, length, quotient_radius } => cmd_split(c, input, *length, *quotient_radius),
        Command::Dimension { input } => cmd_dimension(c, input),
        Command::Models { action: ModelsAction::List } => {
            for (kind, params) in models::list() {
                println!("{kind:<18} {params}");
            }
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------
// inputs

fn resolve(spec: &str) -> Result<PointedSpace> {
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "json") || path.exists() {
        return load_space(path).with_context(|| format!("loading {spec}"));
    }
    Ok(models::make(&ModelSpec::from_shorthand(spec)?)?)
}

fn load(input: &Input) -> Result<PointedSpace> {
    match (&input.path, &input.model) {
        (Some(p), _) => load_space(p).with_context(|| format!("loading {}", p.display())),
        (None, Some(m)) => Ok(models::make(&ModelSpec::from_shorthand(m)?)?),
        (None, None) => Err(invalid("no input: give a space file or --model")),
    }
}

fn read_measure(path: &Path, n: usize) -> Result<Measure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Measure::from_csv(&text, n)?)
}

fn farthest_from(space: &PointedSpace, x: usize) -> usize {
    let s = space.space();
    (0..s.len())
        .filter(|&i| s.weights()[i] > 0.0)
        .max_by(|&a, &b| s.dist(x, a).total_cmp(&s.dist(x, b)).then(b.cmp(&a)))
        .unwrap_or(x)
}

fn marginals(space: &PointedSpace, m: &Marginals) -> Result<(Measure, Measure)> {
    let n = space.len();
    match (&m.mu0, &m.mu1) {
        (Some(a), Some(b)) => Ok((read_measure(a, n)?, read_measure(b, n)?)),
        (None, None) => {
            let s = space.space();
            let p = farthest_from(space, space.base());
            let q = farthest_from(space, p);
            let r = s.dist(p, q) / 4.0;
            let around = |c: usize| -> Result<Measure> {
                let idx: Vec<usize> = (0..n).filter(|&i| s.weights()[i] > 0.0 && s.dist(c, i) < r).collect();
                let idx = if idx.is_empty() { vec![c] } else { idx };
                Ok(Measure::restricted_reference(s, &idx)?)
            };
            Ok((around(p)?, around(q)?))
        }
        _ => Err(invalid("give both --mu0 and --mu1, or neither")),
    }
}

fn t_grid(c: &Common) -> Vec<f64> {
    c.t_grid.clone().unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect())
}

fn require(v: Option<f64>, flag: &str) -> Result<f64> {
    v.ok_or_else(|| invalid(format!("{flag} is required")))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

// ---------------------------------------------------------------------------
// commands

fn cmd_w2(c: &Common, input: &Input, m: &Marginals, entropic: Option<f64>) -> Result<()> {
    let space = load(input)?;
    let (mu0, mu1) = marginals(&space, m)?;
    let solver = match entropic {
        Some(epsilon) => Solver::Entropic { epsilon },
        None => Solver::Exact,
    };
    // the LP is determined by the two marginals and the cost block between
    // their supports
    let (s0, s1) = (mu0.support(), mu1.support());
    let cost: Vec<f64> =
        s0.iter().flat_map(|&i| s1.iter().map(move |&j| (i, j))).map(|(i, j)| space.space().dist(i, j)).collect();
    let idx = |v: &[usize]| v.iter().flat_map(|i| (*i as u64).to_le_bytes()).collect::<Vec<u8>>();
    let key = digest(&[
        b"w2-v1",
        serde_json::to_string(&solver)?.as_bytes(),
        &(space.len() as u64).to_le_bytes(),
        &idx(&s0),
        &idx(&s1),
        &f64_bytes(mu0.as_slice()),
        &f64_bytes(mu1.as_slice()),
        &f64_bytes(&cost),
    ]);
    let (res, hit): (W2Result, bool) = cached(&key, || Ok(w2(space.space(), &mu0, &mu1, solver)?))?;
    let mut out = Artifacts::new(&c.out, "w2")?;
    out.note("cache_hit", hit);
    out.note("cache_key", &key);
    out.json(&res)?;
    out.csv(&res.plan.to_csv())?;
    out.finish()?;
    print_json(&json!({ "w2_squared": res.cost, "w2": res.distance(), "tolerance": res.tolerance }))
}

fn cmd_cdstar(c: &Common, input: &Input, m: &Marginals, exhaustive: bool) -> Result<()> {
    let space = load(input)?;
    let (mu0, mu1) = marginals(&space, m)?;
    let mut cfg = CdConfig::new(require(c.k, "--K")?, require(c.n, "--N")?, t_grid(c));
    cfg.nprime_grid = c.nprime_grid.clone().unwrap_or_default();
    cfg.tolerance = c.tol_cd;
    if exhaustive {
        cfg.search = PlanSearch::exhaustive();
    }
    let report = cdstar_check(space.space(), &mu0, &mu1, &cfg)?;
    let mut out = Artifacts::new(&c.out, "cdstar")?;
    out.json(&report)?;
    out.csv(&report.to_csv())?;
    if c.svg {
        let series: Vec<Series> = cfg
            .nprimes()
            .iter()
            .map(|&np| Series {
                name: format!("N'={np}"),
                points: report.entries.iter().filter(|e| e.nprime == np).map(|e| (e.t, e.slack)).collect(),
            })
            .collect();
        out.svg("", &line_plot(&format!("CD*({}, {}) slack", cfg.k, cfg.n), "t", "slack", &series))?;
    }
    out.finish()?;
    let verdict = match &report.verdict {
        Verdict::Holds => "holds".to_string(),
        Verdict::Violated { t, nprime, slack } => format!("violated at t={t}, N'={nprime} (slack {slack})"),
        Verdict::Inconclusive { reason } => format!("inconclusive: {reason}"),
    };
    print_json(&json!({ "verdict": verdict, "worst_slack": report.worst_slack(), "tolerance": report.tolerance }))
}

fn cmd_prolong(c: &Common, input: &Input, radius: f64, x0: Option<usize>) -> Result<()> {
    let space = load(input)?;
    let cfg = ProlongConfig {
        k: c.k.unwrap_or(0.0),
        n: require(c.n, "--N")?,
        t_grid: c.t_grid.clone().unwrap_or_else(|| (0..50).map(|k| k as f64 / 50.0).collect()),
    };
    let r = prolongability_experiment(space.space(), x0.unwrap_or(space.base()), radius, &cfg)?;
    let mut out = Artifacts::new(&c.out, "prolong")?;
    out.json(&r)?;
    let mut csv = String::from("t,ratio,model_ratio,entropy,jensen_bound,lemma_rhs\n");
    for row in &r.rows {
        let model = (1.0 - row.t).powf(cfg.n);
        csv.push_str(&format!("{},{},{model},{},{},{}\n", row.t, row.ratio, row.entropy, row.jensen_bound, row.lemma_rhs));
    }
    out.csv(&csv)?;
    if c.svg {
        let ratio = Series { name: "m(E_t)/m(B)".into(), points: r.rows.iter().map(|w| (w.t, w.ratio)).collect() };
        let model =
            Series { name: "(1-t)^N".into(), points: r.rows.iter().map(|w| (w.t, (1.0 - w.t).powf(cfg.n))).collect() };
        out.svg("ratio", &line_plot("support of μ_t", "t", "mass ratio", &[ratio, model]))?;
        let ent = Series { name: "entropy".into(), points: r.rows.iter().map(|w| (w.t, w.entropy)).collect() };
        let jen = Series { name: "Jensen bound".into(), points: r.rows.iter().map(|w| (w.t, w.jensen_bound)).collect() };
        out.svg("entropy", &line_plot("Rényi entropy along the transport", "t", "entropy", &[ent, jen]))?;
    }
    out.finish()?;
    print_json(&json!({ "coverage": r.coverage, "interior_coverage": r.interior_coverage, "ball_mass": r.ball_mass }))
}

fn cmd_doubling(c: &Common, input: &Input, centers: usize, samples: usize) -> Result<()> {
    let space = load(input)?;
    let radii = match &c.radii {
        Some(r) => r.clone(),
        None => {
            let d = space.space().diameter();
            (0..12).map(|k| d / 4.0 * 0.5f64.powi(11 - k)).collect()
        }
    };
    let cfg = DoublingConfig { centers: CenterPolicy::Auto { budget: centers, seed: c.seed }, iterated_samples: samples, seed: c.seed };
    let p = doubling_profile(space.space(), &radii, &cfg)?;
    let mut out = Artifacts::new(&c.out, "doubling")?;
    out.json(&p)?;
    let mut csv = String::from("r,ratio,envelope\n");
    for k in 0..p.radii.len() {
        csv.push_str(&format!("{},{},{}\n", p.radii[k], p.ratios[k], p.envelope[k]));
    }
    out.csv(&csv)?;
    if c.svg {
        let s = [
            Series { name: "ratio".into(), points: p.radii.iter().zip(&p.ratios).map(|(&r, &q)| (r.log2(), q)).collect() },
            Series { name: "envelope".into(), points: p.radii.iter().zip(&p.envelope).map(|(&r, &q)| (r.log2(), q)).collect() },
        ];
        out.svg("", &line_plot("doubling ratios", "log2 r", "m(B_2r)/m(B_r)", &s))?;
    }
    out.finish()?;
    print_json(&json!({
        "max_envelope": p.envelope.last(),
        "iterated_checked": p.iterated_checked,
        "iterated_violations": p.iterated_violations.len(),
    }))
}

fn pmgh_config(c: &Common, exhaustive: bool, proposals: usize) -> PmghConfig {
    let mode = if exhaustive {
        PmghMode::exhaustive()
    } else {
        match PmghMode::anneal() {
            PmghMode::Anneal { cooling, restarts, .. } => PmghMode::Anneal { proposals, cooling, restarts, seed: c.seed },
            other => other,
        }
    };
    let mut cfg = PmghConfig { mode, ..PmghConfig::default() };
    if let Some(r) = &c.radii {
        cfg.radii = r.clone();
    }
    cfg
}

fn cmd_ghdist(c: &Common, first: &str, second: &str, exhaustive: bool, proposals: usize) -> Result<()> {
    let a = normalize_at(&resolve(first)?, 1.0)?.0;
    let b = normalize_at(&resolve(second)?, 1.0)?.0;
    let est = pmgh_distance(&a, &b, &pmgh_config(c, exhaustive, proposals))?;
    let mut out = Artifacts::new(&c.out, "ghdist")?;
    out.json(&est)?;
    let mut csv = String::from("k,r,weight,distortion,measure_gap,term,exact\n");
    for (k, t) in est.terms.iter().enumerate() {
        let gap = t.measure_gap.map(|g| g.to_string()).unwrap_or_default();
        csv.push_str(&format!("{k},{},{},{},{gap},{},{}\n", t.radius, t.weight, t.distortion, t.term, t.exact));
    }
    out.csv(&csv)?;
    out.finish()?;
    print_json(&json!({ "value": est.value, "lower_bound": est.lower_bound }))
}

fn tangent_model(name: &str) -> Result<TangentModel> {
    let dim = name.strip_prefix("R^").or_else(|| name.strip_prefix("euclidean:"));
    if let Some(d) = dim {
        return Ok(TangentModel::euclidean(d.parse().map_err(|_| invalid(format!("bad model `{name}`")))?));
    }
    if let Some(p) = name.strip_prefix("lp:") {
        let p = if p == "inf" { f64::INFINITY } else { p.parse().map_err(|_| invalid(format!("bad model `{name}`")))? };
        if !(p >= 1.0) {
            return Err(invalid(format!("model `{name}`: p must be ≥ 1")));
        }
        return Ok(TangentModel::lp_plane(p));
    }
    let space = normalize_at(&load_space(name).with_context(|| format!("model `{name}`"))?, 1.0)?.0;
    Ok(TangentModel::Fixed { name: name.to_string(), space })
}

fn blowup_config(c: &Common) -> BlowupConfig {
    BlowupConfig { window: c.window.unwrap_or(BlowupConfig::default().window), ..BlowupConfig::default() }
}

fn default_radii(space: &PointedSpace) -> Vec<f64> {
    match space.space().resolution() {
        // down to the data resolution
        Some(h) => [0.2, 0.14, 0.1, 0.07, 0.05].into_iter().filter(|&r| r >= h * (1.0 - 1e-9)).collect(),
        None => vec![1.0, 0.5, 0.25],
    }
}

fn cmd_blowup(c: &Common, input: &Input, names: &[String]) -> Result<()> {
    let space = load(input)?;
    let radii = c.radii.clone().unwrap_or_else(|| default_radii(&space));
    let seq = blowup(&space, &radii, &blowup_config(c))?;
    let models = names.iter().map(|n| tangent_model(n)).collect::<Result<Vec<_>>>()?;
    let pmgh = pmgh_config(c, false, 10_000);
    let report = match_tangent(&seq, &models, &pmgh)?;
    let members: Vec<_> = seq
        .members
        .iter()
        .map(|m| {
            json!({
                "radius": m.radius,
                "spacing": m.spacing,
                "points": m.space.len(),
                "normalization": m.normalization,
                "usable": m.usable,
                "warnings": m.warnings,
            })
        })
        .collect();
    let mut out = Artifacts::new(&c.out, "blowup")?;
    out.json(&json!({ "window": seq.window, "members": members, "matching": report }))?;
    out.csv(&report.to_csv())?;
    out.csv_named("members", &seq.summary_csv())?;
    if c.svg {
        let series: Vec<Series> = report
            .matches
            .iter()
            .map(|m| Series {
                name: m.model.clone(),
                points: m.values.iter().zip(&radii).filter_map(|(v, &r)| v.map(|v| (r, v))).collect(),
            })
            .collect();
        out.svg("", &line_plot("distance to tangent models", "blow-up radius", "D̂", &series))?;
    }
    out.finish()?;
    for w in seq.members.iter().flat_map(|m| &m.warnings) {
        eprintln!("warning: {w}");
    }
    print_json(&json!({ "best": report.best, "margin": report.margin }))
}

fn cmd_split(c: &Common, input: &Input, length: Option<f64>, quotient_radius: Option<f64>) -> Result<()> {
    let space = load(input)?;
    let extent = (0..space.len()).map(|i| space.dist_to_base(i)).fold(0.0, f64::max);
    let length = length.unwrap_or(0.5 * extent);
    let tol = c.tol_line.unwrap_or(0.05);
    let mut out = Artifacts::new(&c.out, "split")?;
    let Some(line) = detect_line(&space, length, tol) else {
        out.json(&json!({ "line": null, "length": length, "tol_line": tol }))?;
        out.finish()?;
        return print_json(&json!({ "line": false }));
    };
    let cfg = SplitConfig { window: c.window, quotient_radius, resolution: None };
    let res = split(space.space(), &line, &cfg)?;
    let report = json!({
        "line": line,
        "window": res.window,
        "quotient_radius": res.quotient_radius,
        "delta_metric": res.delta_metric,
        "delta_meas": res.delta_meas,
        "region_points": res.region.len(),
        "quotient_points": res.quotient.len(),
        "classes": res.classes,
    });
    out.json(&report)?;
    let mut csv = String::from("point,busemann,class\n");
    for (k, &z) in res.region.iter().enumerate() {
        csv.push_str(&format!("{z},{},{}\n", res.busemann[z], res.projection[k]));
    }
    out.csv(&csv)?;
    out.finish()?;
    print_json(&json!({
        "line": true,
        "eps_line": line.eps_line,
        "delta_metric": res.delta_metric,
        "delta_meas": res.delta_meas,
        "quotient_points": res.quotient.len(),
    }))
}

fn cmd_dimension(c: &Common, input: &Input) -> Result<()> {
    let space = load(input)?;
    let mut cfg = DimensionConfig { n_budget: require(c.n, "--N")?, ..DimensionConfig::default() };
    if let Some(r) = &c.radii {
        cfg.radii = r.clone();
    } else if let Some(h) = space.space().resolution() {
        // finest blow-up that the data resolves
        if h < 1.0 {
            cfg.radii = vec![h];
        }
    }
    cfg.blowup = blowup_config(c);
    if let Some(t) = c.tol_line {
        cfg.tol_line = t;
    }
    let (n, trace) = euclidean_dimension(&space, &cfg)?;
    let mut out = Artifacts::new(&c.out, "dimension")?;
    out.json(&trace)?;
    let mut csv = String::from("stage,points,extent,line_length,eps_line,delta_metric,delta_meas,quotient_points\n");
    for (k, s) in trace.stages.iter().enumerate() {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{k},{},{},{},{},{},{},{}\n",
            s.points,
            s.extent,
            s.line_length,
            opt(s.line.as_ref().map(|l| l.eps_line)),
            opt(s.delta_metric),
            opt(s.delta_meas),
            s.quotient_points.map(|q| q.to_string()).unwrap_or_default()
        ));
    }
    out.csv(&csv)?;
    out.finish()?;
    print_json(&json!({ "n": n, "budget": trace.budget, "inconclusive": trace.inconclusive }))
}

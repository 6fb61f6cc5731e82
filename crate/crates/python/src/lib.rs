//! Python bindings. Reports come back as plain dicts and lists; measures go
//! in as sequences of floats indexed like the space's points.

use pyo3::create_exception;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::json;

use mms_lab::curvature::{self, CdConfig, PlanSearch, ProlongConfig};
use mms_lab::io::{self, MetricFile, SpaceFile};
use mms_lab::models::{self, ModelSpec};
use mms_lab::pmgh::{self, PmghConfig, PmghMode};
use mms_lab::space::{self, CenterPolicy, DoublingConfig};
use mms_lab::tangent::{self, BlowupConfig, DimensionConfig, SplitConfig, TangentModel};
use mms_lab::transport::{self, Solver};
use mms_lab::{Measure, PointedSpace};

create_exception!(mms_lab, BudgetExceeded, PyRuntimeError, "A search ran out of its node or pivot budget.");

fn err(e: mms_lab::Error) -> PyErr {
    match e {
        mms_lab::Error::BudgetExceeded(m) => BudgetExceeded::new_err(m),
        mms_lab::Error::Io(e) => PyOSError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn measure(w: Vec<f64>) -> PyResult<Measure> {
    Measure::new(w).map_err(err)
}

/// A finite pointed metric measure space.
#[pyclass(name = "Space", module = "mms_lab", frozen)]
pub struct Space {
    inner: PointedSpace,
}

#[pymethods]
impl Space {
    /// Distance matrix, optional weights (uniform by default) and basepoint.
    #[new]
    #[pyo3(signature = (matrix, weights=None, base=0, resolution=None))]
    fn new(matrix: Vec<Vec<f64>>, weights: Option<Vec<f64>>, base: usize, resolution: Option<f64>) -> PyResult<Self> {
        let file = SpaceFile {
            points: (0..matrix.len()).map(|i| i.to_string()).collect(),
            metric: MetricFile::Matrix { data: matrix },
            weights,
            base,
            resolution,
        };
        Ok(Self { inner: file.build().map_err(err)? })
    }

    /// Euclidean points; the space interpolates along straight lines.
    #[staticmethod]
    #[pyo3(signature = (coords, weights=None, base=0, resolution=None))]
    fn from_coords(
        coords: Vec<Vec<f64>>,
        weights: Option<Vec<f64>>,
        base: usize,
        resolution: Option<f64>,
    ) -> PyResult<Self> {
        let file = SpaceFile {
            points: (0..coords.len()).map(|i| i.to_string()).collect(),
            metric: MetricFile::Euclidean { coords },
            weights,
            base,
            resolution,
        };
        Ok(Self { inner: file.build().map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: io::parse_space(text).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { inner: io::load_space(path).map_err(err)? })
    }

    /// A catalogue model from its shorthand, e.g. `"euclidean-grid:2d"`.
    #[staticmethod]
    fn model(shorthand: &str) -> PyResult<Self> {
        let spec = ModelSpec::from_shorthand(shorthand).map_err(err)?;
        Ok(Self { inner: models::make(&spec).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        io::space_to_json(&self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Space(points={}, base={})", self.inner.len(), self.inner.base())
    }

    fn dist(&self, i: usize, j: usize) -> PyResult<f64> {
        let n = self.inner.len();
        if i >= n || j >= n {
            return Err(PyValueError::new_err(format!("index out of range for {n} points")));
        }
        Ok(self.inner.space().dist(i, j))
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.space().weights().to_vec()
    }

    #[getter]
    fn base(&self) -> usize {
        self.inner.base()
    }

    #[getter]
    fn resolution(&self) -> Option<f64> {
        self.inner.space().resolution()
    }

    fn diameter(&self) -> f64 {
        self.inner.space().diameter()
    }

    fn repoint(&self, base: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.repoint(base).map_err(err)? })
    }

    /// Metric scaled by `1/r`; the measure is left alone.
    fn rescale(&self, r: f64) -> PyResult<Self> {
        Ok(Self { inner: space::rescale(&self.inner, r).map_err(err)? })
    }

    /// Returns the normalized space and the normalizing constant.
    fn normalize_at(&self, r: f64) -> PyResult<(Self, f64)> {
        let (inner, c) = space::normalize_at(&self.inner, r).map_err(err)?;
        Ok((Self { inner }, c))
    }

    /// Reference measure restricted to `indices`, normalized.
    fn reference_measure(&self, indices: Vec<usize>) -> PyResult<Vec<f64>> {
        Ok(Measure::restricted_reference(self.inner.space(), &indices).map_err(err)?.as_slice().to_vec())
    }

    /// Indices within distance `< r` of `x`.
    fn ball(&self, x: usize, r: f64) -> Vec<usize> {
        let s = self.inner.space();
        (0..s.len()).filter(|&i| s.dist(x, i) < r).collect()
    }
}

#[pyfunction]
fn sigma(k: f64, n: f64, t: f64, theta: f64) -> PyResult<f64> {
    curvature::sigma(k, n, t, theta).map_err(err)
}

/// Squared transport cost `cost`, the plan as `(i, j, mass)` entries and the
/// solver tolerance.
#[pyfunction]
#[pyo3(signature = (space, mu0, mu1, epsilon=None))]
fn w2<'py>(
    py: Python<'py>,
    space: &Space,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    epsilon: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let (mu0, mu1) = (measure(mu0)?, measure(mu1)?);
    let solver = epsilon.map_or(Solver::Exact, |epsilon| Solver::Entropic { epsilon });
    let res = py.detach(|| transport::w2(space.inner.space(), &mu0, &mu1, solver)).map_err(err)?;
    to_py(py, &res)
}

#[pyfunction]
#[pyo3(signature = (space, mu0, mu1, k, n, t_grid=None, nprime_grid=None, tolerance=None, exhaustive=false))]
#[allow(clippy::too_many_arguments)]
fn cdstar_check<'py>(
    py: Python<'py>,
    space: &Space,
    mu0: Vec<f64>,
    mu1: Vec<f64>,
    k: f64,
    n: f64,
    t_grid: Option<Vec<f64>>,
    nprime_grid: Option<Vec<f64>>,
    tolerance: Option<f64>,
    exhaustive: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let (mu0, mu1) = (measure(mu0)?, measure(mu1)?);
    let mut cfg = CdConfig::new(k, n, t_grid.unwrap_or_else(|| (0..=10).map(|i| i as f64 / 10.0).collect()));
    cfg.nprime_grid = nprime_grid.unwrap_or_default();
    cfg.tolerance = tolerance;
    if exhaustive {
        cfg.search = PlanSearch::exhaustive();
    }
    let report = py.detach(|| curvature::cdstar_check(space.inner.space(), &mu0, &mu1, &cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (space, radius, n, k=0.0, x0=None, t_grid=None))]
fn prolongability<'py>(
    py: Python<'py>,
    space: &Space,
    radius: f64,
    n: f64,
    k: f64,
    x0: Option<usize>,
    t_grid: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ProlongConfig { k, n, t_grid: t_grid.unwrap_or_else(|| (0..50).map(|i| i as f64 / 50.0).collect()) };
    let x0 = x0.unwrap_or(space.inner.base());
    let report =
        py.detach(|| curvature::prolongability_experiment(space.inner.space(), x0, radius, &cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (space, radii, centers=256, samples=1000, seed=0))]
fn doubling_profile<'py>(
    py: Python<'py>,
    space: &Space,
    radii: Vec<f64>,
    centers: usize,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = DoublingConfig { centers: CenterPolicy::Auto { budget: centers, seed }, iterated_samples: samples, seed };
    let p = py.detach(|| space::doubling_profile(space.inner.space(), &radii, &cfg)).map_err(err)?;
    to_py(py, &p)
}

fn pmgh_config(radii: Option<Vec<f64>>, exhaustive: bool, proposals: Option<usize>, seed: u64) -> PmghConfig {
    let mode = if exhaustive {
        PmghMode::exhaustive()
    } else {
        match PmghMode::anneal() {
            PmghMode::Anneal { proposals: p, cooling, restarts, .. } => {
                PmghMode::Anneal { proposals: proposals.unwrap_or(p), cooling, restarts, seed }
            }
            other => other,
        }
    };
    let mut cfg = PmghConfig { mode, ..PmghConfig::default() };
    if let Some(r) = radii {
        cfg.radii = r;
    }
    cfg
}

/// Distance surrogate between two pointed spaces, taken as given (no
/// normalization).
#[pyfunction]
#[pyo3(signature = (a, b, radii=None, exhaustive=false, proposals=None, seed=0))]
fn pmgh_distance<'py>(
    py: Python<'py>,
    a: &Space,
    b: &Space,
    radii: Option<Vec<f64>>,
    exhaustive: bool,
    proposals: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = pmgh_config(radii, exhaustive, proposals, seed);
    let est = py.detach(|| pmgh::pmgh_distance(&a.inner, &b.inner, &cfg)).map_err(err)?;
    to_py(py, &est)
}

fn tangent_model(name: &str) -> PyResult<TangentModel> {
    let bad = || PyValueError::new_err(format!("bad tangent model `{name}`"));
    if let Some(d) = name.strip_prefix("R^") {
        return Ok(TangentModel::euclidean(d.parse().map_err(|_| bad())?));
    }
    if let Some(p) = name.strip_prefix("lp:") {
        let p: f64 = if p == "inf" { f64::INFINITY } else { p.parse().map_err(|_| bad())? };
        return if p >= 1.0 { Ok(TangentModel::lp_plane(p)) } else { Err(bad()) };
    }
    Err(bad())
}

/// Blow-ups at `radii` compared against tangent models (`"R^d"`, `"lp:P"`).
#[pyfunction]
#[pyo3(signature = (space, radii, models=None, window=None, seed=0))]
fn match_tangent<'py>(
    py: Python<'py>,
    space: &Space,
    radii: Vec<f64>,
    models: Option<Vec<String>>,
    window: Option<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let names = models.unwrap_or_else(|| vec!["R^1".into(), "R^2".into(), "R^3".into()]);
    let models = names.iter().map(|n| tangent_model(n)).collect::<PyResult<Vec<_>>>()?;
    let mut bcfg = BlowupConfig::default();
    if let Some(w) = window {
        bcfg.window = w;
    }
    let pcfg = pmgh_config(None, false, None, seed);
    let (seq, report) = py
        .detach(|| {
            let seq = tangent::blowup(&space.inner, &radii, &bcfg)?;
            let report = tangent::match_tangent(&seq, &models, &pcfg)?;
            Ok((seq, report))
        })
        .map_err(err)?;
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
    to_py(py, &json!({ "window": seq.window, "members": members, "matching": report }))
}

/// Looks for a line through the basepoint and splits along it. `None` when
/// no line of the given length is found.
#[pyfunction]
#[pyo3(signature = (space, length, tol_line=0.05, window=None, quotient_radius=None))]
fn split<'py>(
    py: Python<'py>,
    space: &Space,
    length: f64,
    tol_line: f64,
    window: Option<f64>,
    quotient_radius: Option<f64>,
) -> PyResult<Option<(Bound<'py, PyAny>, Space)>> {
    let Some(line) = tangent::detect_line(&space.inner, length, tol_line) else {
        return Ok(None);
    };
    let cfg = SplitConfig { window, quotient_radius, resolution: None };
    let res = py.detach(|| tangent::split(space.inner.space(), &line, &cfg)).map_err(err)?;
    let report = json!({
        "line": line,
        "window": res.window,
        "quotient_radius": res.quotient_radius,
        "delta_metric": res.delta_metric,
        "delta_meas": res.delta_meas,
        "region": res.region,
        "projection": res.projection,
        "busemann": res.busemann,
        "classes": res.classes,
    });
    Ok(Some((to_py(py, &report)?, Space { inner: res.quotient })))
}

/// Number of lines split off, at most `⌊n⌋`, and the per-stage trace.
#[pyfunction]
#[pyo3(signature = (space, n, radii=None, tol_line=None))]
fn euclidean_dimension<'py>(
    py: Python<'py>,
    space: &Space,
    n: f64,
    radii: Option<Vec<f64>>,
    tol_line: Option<f64>,
) -> PyResult<(usize, Bound<'py, PyAny>)> {
    let mut cfg = DimensionConfig { n_budget: n, ..DimensionConfig::default() };
    match (radii, space.inner.space().resolution()) {
        (Some(r), _) => cfg.radii = r,
        // finest blow-up that the data resolves
        (None, Some(h)) if h < 1.0 => cfg.radii = vec![h],
        _ => {}
    }
    if let Some(t) = tol_line {
        cfg.tol_line = t;
    }
    let (k, trace) = py.detach(|| tangent::euclidean_dimension(&space.inner, &cfg)).map_err(err)?;
    Ok((k, to_py(py, &trace)?))
}

/// `(kind, parameters)` of every catalogue model.
#[pyfunction]
fn list_models() -> Vec<(&'static str, &'static str)> {
    models::list()
}

#[pymodule(name = "mms_lab")]
fn mms_lab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Space>()?;
    m.add("BudgetExceeded", m.py().get_type::<BudgetExceeded>())?;
    m.add_function(wrap_pyfunction!(sigma, m)?)?;
    m.add_function(wrap_pyfunction!(w2, m)?)?;
    m.add_function(wrap_pyfunction!(cdstar_check, m)?)?;
    m.add_function(wrap_pyfunction!(prolongability, m)?)?;
    m.add_function(wrap_pyfunction!(doubling_profile, m)?)?;
    m.add_function(wrap_pyfunction!(pmgh_distance, m)?)?;
    m.add_function(wrap_pyfunction!(match_tangent, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(euclidean_dimension, m)?)?;
    m.add_function(wrap_pyfunction!(list_models, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::types::PyDict;

    #[test]
    fn tangent_model_names() {
        assert_eq!(tangent_model("R^2").unwrap().name(), "R^2");
        assert!(tangent_model("lp:inf").is_ok());
        assert!(tangent_model("lp:0.5").is_err());
        assert!(tangent_model("torus").is_err());
    }

    #[test]
    fn module_round_trip() {
        Python::attach(|py| {
            let m = PyModule::new(py, "mms_lab").unwrap();
            mms_lab_module(&m).unwrap();
            let globals = PyDict::new(py);
            globals.set_item("m", m).unwrap();
            py.run(
                c"
line = m.Space.from_coords([[0.0], [1.0], [2.0]])
res = m.w2(line, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0])
assert abs(res['cost'] - 4.0) < 1e-12, res
try:
    m.pmgh_distance(m.Space.model('euclidean-grid:2d'), m.Space.model('lp-plane:inf'), exhaustive=True)
    raise AssertionError('no budget error')
except m.BudgetExceeded:
    pass
",
                Some(&globals),
                None,
            )
            .unwrap();
        });
    }
}

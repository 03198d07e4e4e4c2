use std::path::PathBuf;

use mkv_core::config::{ContractionConfig, InversionConfig, ScenarioConfig};
use mkv_core::engine::flow_to_csv;
use mkv_core::fixpoint::{chain_solve, estimate_contraction, picard_distance, solve_fixed_point, EngineChoice};
use mkv_core::kernels::verify_inversion;
use mkv_core::measure::{self, metric_bl_alpha, metric_w_alpha, EmpiricalMeasure, MeasureFlow, MetricKind};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(mkv, MkvError, PyException);

fn err(e: mkv_core::Error) -> PyErr {
    MkvError::new_err(e.to_string())
}

fn base_dir(base: Option<PathBuf>) -> PathBuf {
    base.unwrap_or_else(|| PathBuf::from("."))
}

/// Weighted point cloud; weights are normalized to sum to one.
#[pyclass(name = "Measure", module = "mkv", frozen, skip_from_py_object)]
struct PyMeasure(EmpiricalMeasure);

#[pymethods]
impl PyMeasure {
    #[new]
    #[pyo3(signature = (points, weights=None))]
    fn new(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> PyResult<Self> {
        EmpiricalMeasure::new(&points, weights.as_deref()).map(Self).map_err(err)
    }

    #[staticmethod]
    fn dirac(point: Vec<f64>) -> PyResult<Self> {
        EmpiricalMeasure::dirac(&point).map(Self).map_err(err)
    }

    /// Reads a measure CSV; grid files come back as their node atoms.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self(measure::read_measure(path).map_err(err)?.to_empirical().into_owned()))
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        measure::write_measure(path, &self.0.clone().into()).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.0.points().map(<[f64]>::to_vec).collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights().to_vec()
    }

    fn mean(&self) -> Vec<f64> {
        self.0.mean()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Measure(dim={}, atoms={})", self.0.dim(), self.0.len())
    }
}

/// `bl` (bounded-Hoelder dual) or `w` (transport with cost |x - y|^alpha).
#[pyfunction]
#[pyo3(signature = (a, b, alpha, kind="bl"))]
fn metric(py: Python<'_>, a: &PyMeasure, b: &PyMeasure, alpha: f64, kind: &str) -> PyResult<f64> {
    let kind: MetricKind = kind.parse().map_err(err)?;
    let (a, b) = (&a.0, &b.0);
    py.detach(|| match kind {
        MetricKind::Bl => metric_bl_alpha(a, b, alpha),
        MetricKind::W => metric_w_alpha(a, b, alpha),
    })
    .map_err(err)
}

/// Marginal flow of a solved scenario.
#[pyclass(name = "Flow", module = "mkv", frozen)]
struct PyFlow {
    flow: MeasureFlow,
    iterations: usize,
    distances: Vec<f64>,
    converged: bool,
}

#[pymethods]
impl PyFlow {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.flow.times().to_vec()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.iterations
    }

    #[getter]
    fn distances(&self) -> Vec<f64> {
        self.distances.clone()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.converged
    }

    /// Mean vector at every node.
    fn means(&self) -> Vec<Vec<f64>> {
        self.flow.measures().iter().map(|m| m.mean()).collect()
    }

    /// Variance of coordinate `k` at every node.
    #[pyo3(signature = (k=0))]
    fn variances(&self, k: usize) -> PyResult<Vec<f64>> {
        if k >= self.flow.dim() {
            return Err(MkvError::new_err(format!("coordinate {k} out of range")));
        }
        Ok(self
            .flow
            .measures()
            .iter()
            .map(|m| {
                let e = m.to_empirical();
                let mean = e.mean()[k];
                e.points().zip(e.weights()).map(|(p, w)| w * (p[k] - mean).powi(2)).sum()
            })
            .collect())
    }

    fn marginal(&self, i: usize) -> PyResult<PyMeasure> {
        let m = self.flow.measures().get(i).ok_or_else(|| MkvError::new_err(format!("no node {i}")))?;
        Ok(PyMeasure(m.to_empirical().into_owned()))
    }

    /// Largest per-node bounded-Hoelder distance to another flow.
    fn distance(&self, py: Python<'_>, other: &PyFlow, alpha: f64) -> PyResult<f64> {
        py.detach(|| picard_distance(&self.flow, &other.flow, alpha)).map_err(err)
    }

    fn to_csv(&self) -> String {
        flow_to_csv(&self.flow)
    }

    fn __len__(&self) -> usize {
        self.flow.len()
    }
}

/// Solves the scenario described by a TOML document.
#[pyfunction]
#[pyo3(signature = (config, base_dir=None, seed=None))]
fn solve(py: Python<'_>, config: &str, base_dir: Option<PathBuf>, seed: Option<u64>) -> PyResult<PyFlow> {
    let cfg = ScenarioConfig::from_toml(config).map_err(err)?;
    let base = self::base_dir(base_dir);
    py.detach(|| {
        let sc = cfg.build(&base, seed)?;
        let (tol, max_iter) = (cfg.solver.tol, cfg.solver.max_iter);
        match cfg.solver.t_sub {
            Some(t_sub) if t_sub < cfg.time.horizon => {
                let c = chain_solve(&sc, cfg.time.horizon, t_sub, tol, max_iter)?;
                let last = c.windows.last().map(|w| w.diagnostics.distances.clone()).unwrap_or_default();
                Ok(PyFlow {
                    iterations: c.windows.iter().map(|w| w.diagnostics.iterations).sum(),
                    converged: c.windows.iter().all(|w| w.diagnostics.converged),
                    distances: last,
                    flow: c.flow,
                })
            }
            _ => {
                let (flow, d) = solve_fixed_point(&sc, tol, max_iter)?;
                Ok(PyFlow { flow, iterations: d.iterations, distances: d.distances, converged: d.converged })
            }
        }
    })
    .map_err(err)
}

/// Both sides of the inversion identity for the pair in a TOML document.
#[pyfunction]
#[pyo3(signature = (config, base_dir=None))]
fn inversion<'py>(py: Python<'py>, config: &str, base_dir: Option<PathBuf>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = InversionConfig::from_toml(config).map_err(err)?;
    let base = self::base_dir(base_dir);
    let (r, threshold) = py
        .detach(|| {
            let s = cfg.build(&base)?;
            let r = verify_inversion(&s.spec_a, &s.spec_b, &s.mu_flow, &s.nu_flow, &s.mu0, &s.f, s.s, &s.options)?;
            Ok((r, s.threshold))
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("lhs", r.lhs)?;
    out.set_item("rhs", r.rhs)?;
    out.set_item("abs_gap", r.abs_gap)?;
    out.set_item("rel_gap", r.rel_gap)?;
    out.set_item("passed", r.rel_gap <= threshold)?;
    Ok(out)
}

/// Contraction rates and fits, one dict per case.
#[pyfunction]
#[pyo3(signature = (config, base_dir=None))]
fn contraction<'py>(py: Python<'py>, config: &str, base_dir: Option<PathBuf>) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = ContractionConfig::from_toml(config).map_err(err)?;
    let base = self::base_dir(base_dir);
    let estimates = py
        .detach(|| cfg.build(&base)?.iter().map(estimate_contraction).collect::<mkv_core::Result<Vec<_>>>())
        .map_err(err)?;
    estimates
        .into_iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("alpha", e.alpha)?;
            d.set_item("horizons", e.horizons)?;
            d.set_item("rates", e.rates)?;
            d.set_item("slope", e.slope)?;
            d.set_item("intercept", e.intercept)?;
            Ok(d)
        })
        .collect()
}

/// Engine used by a scenario document, for inspection.
#[pyfunction]
#[pyo3(signature = (config, base_dir=None))]
fn engine_of(config: &str, base_dir: Option<PathBuf>) -> PyResult<String> {
    let cfg = ScenarioConfig::from_toml(config).map_err(err)?;
    let sc = cfg.build(&self::base_dir(base_dir), None).map_err(err)?;
    Ok(match sc.engine {
        EngineChoice::Density => "density".into(),
        EngineChoice::Particle { particles, seed } => format!("particle(n={particles}, seed={seed})"),
    })
}

#[pymodule]
fn mkv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("MkvError", m.py().get_type::<MkvError>())?;
    m.add_class::<PyMeasure>()?;
    m.add_class::<PyFlow>()?;
    m.add_function(wrap_pyfunction!(metric, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(inversion, m)?)?;
    m.add_function(wrap_pyfunction!(contraction, m)?)?;
    m.add_function(wrap_pyfunction!(engine_of, m)?)?;
    Ok(())
}

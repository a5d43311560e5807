//! Python bindings. Points cross the boundary as `(x, y, t)` tuples and
//! matrices as nested lists; every library error surfaces as `StippError`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use stipp::gp::Dataset;
use stipp::harness::{self, RunArtifacts, ScenarioConfig};
use stipp::kernel::{self, SpaceTime};

create_exception!(stipp_py, StippError, PyException);

fn err(e: stipp::Error) -> PyErr {
    StippError::new_err(e.to_string())
}

fn points(v: &[(f64, f64, f64)]) -> Vec<SpaceTime> {
    v.iter().map(|&(x, y, t)| SpaceTime::new([x, y], t)).collect()
}

fn dataset(train: &[(f64, f64, f64)], values: Vec<f64>) -> PyResult<Dataset> {
    let pts = points(train);
    let keys = (0..pts.len() as u32).map(|i| (0, i)).collect();
    Dataset::from_parts(pts.iter().map(|p| p.pos.clone()).collect(), pts.iter().map(|p| p.t).collect(), values, keys).map_err(err)
}

#[pyclass(name = "Hyperparams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyHyperparams(kernel::Hyperparams);

#[pymethods]
impl PyHyperparams {
    #[new]
    fn new(sigma2: f64, ell_s: f64, ell_t: f64, noise_var: f64) -> PyResult<Self> {
        kernel::Hyperparams::new(sigma2, ell_s, ell_t, noise_var).map(Self).map_err(err)
    }

    #[getter]
    fn sigma2(&self) -> f64 {
        self.0.sigma2
    }

    #[getter]
    fn ell_s(&self) -> f64 {
        self.0.ell_s
    }

    #[getter]
    fn ell_t(&self) -> f64 {
        self.0.ell_t
    }

    #[getter]
    fn noise_var(&self) -> f64 {
        self.0.noise_var
    }

    fn __repr__(&self) -> String {
        let h = &self.0;
        format!("Hyperparams(sigma2={}, ell_s={}, ell_t={}, noise_var={})", h.sigma2, h.ell_s, h.ell_t, h.noise_var)
    }
}

#[pyfunction]
fn eval_kernel(p: (f64, f64), p_prime: (f64, f64), t: f64, t_prime: f64, h: PyHyperparams) -> PyResult<f64> {
    kernel::eval_kernel(&[p.0, p.1], &[p_prime.0, p_prime.1], t, t_prime, &h.0).map_err(err)
}

/// Posterior mean and covariance at `query` given noisy readings at `train`.
#[pyfunction]
#[pyo3(signature = (train, values, query, h, prior_mean = 0.0))]
fn posterior(
    train: Vec<(f64, f64, f64)>,
    values: Vec<f64>,
    query: Vec<(f64, f64, f64)>,
    h: PyHyperparams,
    prior_mean: f64,
) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let post = stipp::gp::posterior(&dataset(&train, values)?, &points(&query), &h.0, prior_mean).map_err(err)?;
    let cov = post.cov.row_iter().map(|r| r.iter().copied().collect()).collect();
    Ok((post.mean.iter().copied().collect(), cov))
}

/// `−logdet` of the posterior covariance at `candidate` and its gradient
/// with respect to the candidate positions, ordered `[x1, y1, x2, y2, ...]`.
#[pyfunction]
fn neg_logdet_and_grad(train: Vec<(f64, f64, f64)>, candidate: Vec<(f64, f64, f64)>, h: PyHyperparams) -> PyResult<(f64, Vec<f64>)> {
    let ds = dataset(&train, vec![0.0; train.len()])?;
    stipp::gp::neg_logdet_and_grad(&ds, &points(&candidate), &h.0).map_err(err)
}

/// Reads a sensor CSV and returns its summary as a dict.
#[pyfunction]
fn ingest_summary<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let s = harness::summarize(&harness::ingest_csv(&path).map_err(err)?);
    let d = PyDict::new(py);
    d.set_item("rows", s.rows)?;
    d.set_item("sensors", s.sensors)?;
    d.set_item("locations", s.locations)?;
    d.set_item("time_span_s", s.time_span_s)?;
    d.set_item("value_min", s.value_min)?;
    d.set_item("value_max", s.value_max)?;
    d.set_item("value_mean", s.value_mean)?;
    d.set_item("value_std", s.value_std)?;
    Ok(d)
}

#[pyclass(name = "ScenarioConfig", from_py_object)]
#[derive(Clone)]
struct PyConfig(ScenarioConfig);

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self(ScenarioConfig::default())
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ScenarioConfig::load(&path).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_toml(text).map(Self).map_err(err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.0.to_toml().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.0.seed = seed;
    }

    #[getter]
    fn steps(&self) -> usize {
        self.0.steps
    }

    #[setter]
    fn set_steps(&mut self, steps: usize) {
        self.0.steps = steps;
        self.0.snapshot_steps.retain(|&k| k <= steps);
    }
}

#[pyclass(name = "RunResult", frozen)]
struct PyRun(RunArtifacts);

#[pymethods]
impl PyRun {
    /// Writes every artifact into `dir` and returns the file paths.
    fn write(&self, dir: PathBuf) -> PyResult<Vec<String>> {
        let files = self.0.write(&dir).map_err(err)?;
        Ok(files.into_iter().map(|p| p.to_string_lossy().into_owned()).collect())
    }

    /// Median posterior std over the test points, one entry per step.
    fn median_std(&self) -> Vec<f64> {
        self.0.median_std()
    }

    #[getter]
    fn rounds_converged(&self) -> usize {
        self.0.meta.rounds_converged
    }

    #[getter]
    fn rounds_total(&self) -> usize {
        self.0.meta.rounds_total
    }

    #[getter]
    fn all_connected(&self) -> bool {
        self.0.meta.all_connected
    }

    #[getter]
    fn held_moves(&self) -> usize {
        self.0.meta.held_moves
    }

    /// Robot positions per step as `(step, robot, x, y)`.
    fn trajectories(&self) -> Vec<(usize, usize, f64, f64)> {
        self.0.trajectories.iter().map(|r| (r.step, r.robot, r.x, r.y)).collect()
    }
}

#[pyfunction]
fn run(py: Python<'_>, config: PyConfig) -> PyResult<PyRun> {
    py.detach(|| harness::run_scenario(&config.0)).map(PyRun).map_err(err)
}

/// Runs the brute-force path comparison; returns `(agreeing, total)`.
#[pyfunction]
fn oracle_check(py: Python<'_>, config: PyConfig) -> PyResult<(usize, usize)> {
    let out = py.detach(|| harness::oracle_check(&config.0)).map_err(err)?;
    Ok((out.iter().filter(|o| o.agree()).count(), out.len()))
}

#[pymodule]
fn stipp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("StippError", m.py().get_type::<StippError>())?;
    m.add_class::<PyHyperparams>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(eval_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(posterior, m)?)?;
    m.add_function(wrap_pyfunction!(neg_logdet_and_grad, m)?)?;
    m.add_function(wrap_pyfunction!(ingest_summary, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    Ok(())
}

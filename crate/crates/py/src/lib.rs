//! Python bindings: scenarios, simulation runs, populations, the linear
//! mean-field model and the closed-form analytics.

use std::collections::HashMap;

use opinion_core::dynamics::{self, Mechanism};
use opinion_core::meanfield::{self as mf, TwoStateChain};
use opinion_core::metrics::{self, ErrorReport};
use opinion_core::output::write_trajectories;
use opinion_core::population::{self as pop, ClassProportions};
use opinion_core::{catalog, Error, ScenarioConfig};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    match e {
        Error::Budget { .. } => PyRuntimeError::new_err(e.to_string()),
        Error::Numeric(_) => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn mechanism(s: &str) -> PyResult<Mechanism> {
    s.parse().map_err(err)
}

fn rows(points: &[ClassProportions]) -> Vec<Vec<f64>> {
    points.iter().map(|p| p.0.clone()).collect()
}

/// A scenario description (population, influencer, mechanisms, budget).
#[pyclass(name = "Scenario", module = "opinion_dynamics")]
struct PyScenario {
    inner: ScenarioConfig,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn catalog(name: &str) -> PyResult<Self> {
        Ok(PyScenario { inner: catalog::get(name).map_err(err)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyScenario { inner: ScenarioConfig::from_toml_str(text).map_err(err)? })
    }

    /// Single class, `c0 = (1 - c) / 2`, influencer fixed at 1.
    #[staticmethod]
    #[pyo3(signature = (c, n_agents, horizon, replications=1, mechanisms=vec!["full".to_string(), "meanfield".to_string()], name="toy"))]
    fn toy(c: f64, n_agents: usize, horizon: usize, replications: usize, mechanisms: Vec<String>, name: &str) -> PyResult<Self> {
        let mechs = mechanisms.iter().map(|m| mechanism(m)).collect::<PyResult<Vec<_>>>()?;
        let inner = ScenarioConfig::toy(name, c, n_agents, horizon, replications, mechs);
        inner.validate().map_err(err)?;
        Ok(PyScenario { inner })
    }

    fn with_overrides(&self, overrides: Vec<String>) -> PyResult<Self> {
        Ok(PyScenario { inner: self.inner.with_overrides(&overrides).map_err(err)? })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    fn config_hash(&self) -> PyResult<String> {
        self.inner.config_hash().map_err(err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn replications(&self) -> usize {
        self.inner.replications
    }

    #[getter]
    fn master_seed(&self) -> u64 {
        self.inner.master_seed
    }

    #[setter]
    fn set_master_seed(&mut self, seed: u64) {
        self.inner.master_seed = seed;
    }

    #[getter]
    fn mechanisms(&self) -> Vec<String> {
        self.inner.mechanisms.iter().map(|m| m.to_string()).collect()
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyRunResult> {
        let s = self.inner.clone();
        let inner = py.detach(move || dynamics::run(&s)).map_err(err)?;
        Ok(PyRunResult { inner })
    }

    fn local_error(&self, py: Python<'_>, mechanism_name: &str, horizon: usize, replications: usize) -> PyResult<PyErrorReport> {
        let m = mechanism(mechanism_name)?;
        let s = self.inner.clone();
        let inner = py.detach(move || metrics::local_error(&s, m, horizon, replications)).map_err(err)?;
        Ok(PyErrorReport { inner })
    }

    fn global_error(&self, py: Python<'_>, mechanism_name: &str, horizon: usize, replications: usize) -> PyResult<PyErrorReport> {
        let m = mechanism(mechanism_name)?;
        let s = self.inner.clone();
        let inner = py.detach(move || metrics::global_error(&s, m, horizon, replications)).map_err(err)?;
        Ok(PyErrorReport { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, n_agents={}, horizon={}, replications={})",
            self.inner.name, self.inner.n_agents, self.inner.horizon, self.inner.replications
        )
    }
}

/// Class-proportion trajectories of every mechanism and replication.
#[pyclass(name = "RunResult", module = "opinion_dynamics")]
struct PyRunResult {
    inner: dynamics::RunResult,
}

#[pymethods]
impl PyRunResult {
    /// `P(t)` for `t = 0..=T`, one list of class proportions per step.
    fn trajectory(&self, mechanism_name: &str, replication: usize) -> PyResult<Vec<Vec<f64>>> {
        let m = mechanism(mechanism_name)?;
        let tr = self
            .inner
            .trajectory(m, replication)
            .ok_or_else(|| PyValueError::new_err(format!("no trajectory for {m} in replication {replication}")))?;
        Ok(rows(&tr.points))
    }

    /// The shared mean-field estimate of a replication, if the run had one.
    fn mkv(&self, replication: usize) -> Option<Vec<Vec<f64>>> {
        self.inner.mkv.iter().find(|t| t.replication == replication).map(|t| rows(&t.points))
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.inner.n_agents
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &self.inner).map_err(err)?;
        Ok(String::from_utf8(buf).expect("csv is utf-8"))
    }
}

#[pyclass(name = "ErrorReport", module = "opinion_dynamics")]
struct PyErrorReport {
    inner: ErrorReport,
}

#[pymethods]
impl PyErrorReport {
    #[getter]
    fn metric(&self) -> String {
        self.inner.metric.to_string()
    }

    #[getter]
    fn mechanism(&self) -> String {
        self.inner.mechanism.to_string()
    }

    #[getter]
    fn estimate(&self) -> f64 {
        self.inner.estimate
    }

    #[getter]
    fn std_error(&self) -> f64 {
        self.inner.std_error
    }

    #[getter]
    fn bound(&self) -> f64 {
        self.inner.bound
    }

    #[getter]
    fn replications(&self) -> usize {
        self.inner.replications
    }

    fn __repr__(&self) -> String {
        let r = &self.inner;
        format!("ErrorReport({} {} T={}: {:.6} +- {:.6}, bound {:.6})", r.metric, r.mechanism, r.horizon, r.estimate, r.std_error, r.bound)
    }
}

/// Agents sampled from a scenario's population law.
#[pyclass(name = "Population", module = "opinion_dynamics")]
struct PyPopulation {
    inner: pop::Population,
}

#[pymethods]
impl PyPopulation {
    #[staticmethod]
    fn sample(scenario: &PyScenario, n_agents: usize, seed: u64) -> PyResult<Self> {
        Ok(PyPopulation { inner: pop::sample_population(&scenario.inner.population, n_agents, seed).map_err(err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts().to_vec()
    }

    fn initial_opinions(&self) -> Vec<bool> {
        self.inner.initial_opinions()
    }

    fn thresholds(&self) -> Vec<f64> {
        (0..self.inner.len()).map(|n| self.inner.threshold(n)).collect()
    }

    fn classes_of_agents(&self) -> Vec<usize> {
        (0..self.inner.len()).map(|n| self.inner.kappa(n)).collect()
    }

    fn class_proportions(&self, opinions: Vec<bool>) -> PyResult<Vec<f64>> {
        Ok(pop::class_proportions(&opinions, &self.inner).map_err(err)?.0)
    }
}

/// `P' = (1 - h) P + h (C P + C0 x0)`.
#[pyclass(name = "LinearModel", module = "opinion_dynamics")]
struct PyLinearModel {
    inner: mf::LinearModel,
}

#[pymethods]
impl PyLinearModel {
    #[new]
    #[pyo3(signature = (c, c0, h=1.0))]
    fn new(c: Vec<Vec<f64>>, c0: Vec<Vec<f64>>, h: f64) -> PyResult<Self> {
        Ok(PyLinearModel { inner: mf::LinearModel::from_rows(&c, &c0, h).map_err(err)? })
    }

    /// `P(0..=len(path))` along an explicit influencer path.
    fn iterate(&self, p0: Vec<f64>, path: Vec<Vec<u8>>) -> Vec<Vec<f64>> {
        rows(&mf::mkv_iterate_path(&self.inner, &ClassProportions(p0), &path))
    }

    /// `(I - C)^{-1} C0 x0`.
    fn attractor(&self, x0: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.attractor(&x0).map_err(err)
    }
}

#[pyfunction]
fn catalog_names() -> Vec<&'static str> {
    catalog::names().collect()
}

/// `(p_min_inf, p_max_inf)` under a square wave of half-period `T`.
#[pyfunction]
fn fluctuation_limits(c: f64, c0: f64, half_period: u32) -> PyResult<(f64, f64)> {
    let l = mf::fluctuation_limits(c, c0, half_period).map_err(err)?;
    Ok((l.p_min_inf, l.p_max_inf))
}

/// `(argmax_T, [V(1), ..., V(T_max)], v_star)`.
#[pyfunction]
#[pyo3(signature = (c, c0, t_max=50))]
fn optimal_cycle(c: f64, c0: f64, t_max: u32) -> PyResult<(u32, Vec<f64>, f64)> {
    let o = mf::optimal_cycle(c, c0, t_max).map_err(err)?;
    Ok((o.argmax_t, o.values, o.v_star))
}

/// `("beta=0" | "beta=1" | "indifferent", threshold)`.
#[pyfunction]
fn optimal_diffusion_decision(alpha: f64, rho: f64, c: f64, theta: f64) -> PyResult<(&'static str, f64)> {
    let d = mf::optimal_diffusion_decision(alpha, rho, c, theta).map_err(err)?;
    Ok((d.decision.label(), d.threshold))
}

#[pyfunction]
fn stationary_variance_single_class(c: f64, alpha: f64, beta: f64, c0: f64) -> PyResult<f64> {
    mf::stationary_variance_single_class(c, TwoStateChain::new(alpha, beta).map_err(err)?, c0).map_err(err)
}

#[pyfunction]
fn cumulants_iid_single_class(c: f64, c0: f64, q: f64) -> PyResult<[f64; 3]> {
    mf::cumulants_iid_single_class(c, mf::scaled_bernoulli_cumulants(c0, q)).map_err(err)
}

#[pyfunction]
fn echo_chamber_limits(epsilon: f64, nu: f64) -> PyResult<HashMap<&'static str, f64>> {
    let l = mf::echo_chamber_limits(epsilon, nu).map_err(err)?;
    Ok(HashMap::from([
        ("class1_mean", l.class1_mean),
        ("class1_variance", l.class1_variance),
        ("class1_variance_stated", l.class1_variance_stated),
        ("class2_limit", l.class2_limit),
    ]))
}

#[pymodule]
fn opinion_dynamics(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", opinion_core::VERSION)?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRunResult>()?;
    m.add_class::<PyErrorReport>()?;
    m.add_class::<PyPopulation>()?;
    m.add_class::<PyLinearModel>()?;
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    m.add_function(wrap_pyfunction!(fluctuation_limits, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_diffusion_decision, m)?)?;
    m.add_function(wrap_pyfunction!(stationary_variance_single_class, m)?)?;
    m.add_function(wrap_pyfunction!(cumulants_iid_single_class, m)?)?;
    m.add_function(wrap_pyfunction!(echo_chamber_limits, m)?)?;
    Ok(())
}

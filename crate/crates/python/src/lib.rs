//! Python bindings for the adaptive RMST library.

use std::fs::File;

use adaptive_rmst as core;
use core::criterion::{maximize_continuous, maximize_discrete, PenaltyConfig, PenaltyKind};
use core::data::{Arm, SubjectRecord, TimeUnit};
use core::sim::{StudyConfig, StudyMethod};
use core::truth::ScenarioSpec;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: core::Error) -> PyErr {
    if e.is_data_error() {
        PyValueError::new_err(e.to_string())
    } else {
        PyArithmeticError::new_err(e.to_string())
    }
}

fn parse<T: std::str::FromStr<Err = core::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn penalty(c: f64, l_tilde: Option<f64>) -> PyResult<PenaltyConfig> {
    match l_tilde {
        Some(lt) => PenaltyConfig::new(c, lt).map_err(to_py),
        None if c == 0.0 => Ok(PenaltyConfig::NONE),
        None => Err(PyValueError::new_err("l_tilde is required when c > 0")),
    }
}

/// Two-arm right-censored trial (arm 0 = control, 1 = treatment).
#[pyclass(name = "TrialDataset", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTrialDataset {
    inner: core::TrialDataset,
}

#[pymethods]
impl PyTrialDataset {
    #[new]
    #[pyo3(signature = (arms, times, events, unit = "years"))]
    fn new(arms: Vec<u8>, times: Vec<f64>, events: Vec<bool>, unit: &str) -> PyResult<Self> {
        if arms.len() != times.len() || arms.len() != events.len() {
            return Err(PyValueError::new_err("arms, times and events must have equal length"));
        }
        let records = arms
            .iter()
            .zip(&times)
            .zip(&events)
            .map(|((&a, &t), &e)| {
                Arm::from_index(a as usize)
                    .map(|arm| SubjectRecord::new(arm, t, e))
                    .ok_or_else(|| PyValueError::new_err(format!("arm must be 0 or 1, got {a}")))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = core::TrialDataset::new(records, parse::<TimeUnit>(unit)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (path, unit = "years"))]
    fn from_csv(path: &str, unit: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyValueError::new_err(format!("{path}: {e}")))?;
        let inner = core::parse_dataset(file, parse::<TimeUnit>(unit)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn n0(&self) -> usize {
        self.inner.n0()
    }

    #[getter]
    fn n1(&self) -> usize {
        self.inner.n1()
    }

    #[getter]
    fn max_estimable_time(&self) -> f64 {
        self.inner.max_estimable_time()
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("TrialDataset(n0={}, n1={})", self.inner.n0(), self.inner.n1())
    }
}

/// Kaplan–Meier curve of one arm as `(event_times, survival)`.
#[pyfunction]
fn km_curve(ds: &PyTrialDataset, arm: u8) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let arm = Arm::from_index(arm as usize).ok_or_else(|| PyValueError::new_err("arm must be 0 or 1"))?;
    let curve = core::fit_km(&ds.inner.arm_records(arm)).map_err(to_py)?;
    Ok((curve.event_times().to_vec(), curve.survival().to_vec()))
}

/// `(kappa, sigma2)` at restriction time `l`.
#[pyfunction]
fn kappa_hat(ds: &PyTrialDataset, l: f64) -> PyResult<(f64, f64)> {
    let est = core::kappa_hat(&ds.inner, l).map_err(to_py)?;
    Ok((est.kappa, est.sigma2))
}

#[pyfunction]
#[pyo3(signature = (ds, l, c = 0.0, l_tilde = None))]
fn criterion_value(ds: &PyTrialDataset, l: f64, c: f64, l_tilde: Option<f64>) -> PyResult<f64> {
    core::criterion_value(&ds.inner, l, penalty(c, l_tilde)?).map_err(to_py)
}

/// Continuous selection; returns `(L_hat, kappa, sigma2, value)`.
#[pyfunction]
#[pyo3(signature = (ds, l_min, l_max, c = 0.0, l_tilde = None))]
fn select_l(ds: &PyTrialDataset, l_min: f64, l_max: f64, c: f64, l_tilde: Option<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let (s, _) = maximize_continuous(&ds.inner, l_min, l_max, penalty(c, l_tilde)?).map_err(to_py)?;
    Ok((s.l_hat, s.kappa, s.sigma2, s.value))
}

/// Grid selection; returns `(L_hat, kappa, sigma2, value)`.
#[pyfunction]
#[pyo3(signature = (ds, grid, c = 0.0, l_tilde = None))]
fn select_l_grid(ds: &PyTrialDataset, grid: Vec<f64>, c: f64, l_tilde: Option<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let s = maximize_discrete(&ds.inner, &grid, penalty(c, l_tilde)?).map_err(to_py)?.selection;
    Ok((s.l_hat, s.kappa, s.sigma2, s.value))
}

#[pyfunction]
#[pyo3(signature = (l_min, l_max, unit = "years", kind = "ct"))]
fn default_penalty(l_min: f64, l_max: f64, unit: &str, kind: &str) -> PyResult<f64> {
    let kind = match kind {
        "ct" => PenaltyKind::Continuous,
        "dt" => PenaltyKind::Discrete,
        other => return Err(PyValueError::new_err(format!("kind must be 'ct' or 'dt', got '{other}'"))),
    };
    core::default_penalty(l_min, l_max, parse::<TimeUnit>(unit)?, kind).map_err(to_py)
}

#[pyfunction]
fn suggest_grid_size(n: usize) -> PyResult<(usize, usize)> {
    core::suggest_grid_size(n).map_err(to_py)
}

/// Runs `ct`, `dt` or `hulc`; returns the result as a JSON string.
#[pyfunction]
#[pyo3(signature = (ds, method = "ct", seed = 0, alpha = 0.05, l_min = None, l_max = None, c = None, l_tilde = None, grid = None, boot = 1000))]
#[allow(clippy::too_many_arguments)]
fn analyze(
    ds: &PyTrialDataset,
    method: &str,
    seed: u64,
    alpha: f64,
    l_min: Option<f64>,
    l_max: Option<f64>,
    c: Option<f64>,
    l_tilde: Option<f64>,
    grid: Option<Vec<f64>>,
    boot: usize,
) -> PyResult<String> {
    let mut cfg = core::AnalysisConfig::new(parse(method)?, seed);
    cfg.alpha = alpha;
    cfg.l_min = l_min;
    cfg.l_max = l_max;
    cfg.c = c;
    cfg.l_tilde = l_tilde;
    cfg.grid = grid;
    cfg.bootstrap_resamples = boot;
    Ok(core::analyze(&ds.inner, &cfg).map_err(to_py)?.to_json())
}

/// Log-rank test; returns `(z, p)`.
#[pyfunction]
#[pyo3(signature = (ds, rho = 0.0, gamma = 0.0))]
fn weighted_logrank(ds: &PyTrialDataset, rho: f64, gamma: f64) -> PyResult<(f64, f64)> {
    let t = core::comparators::weighted_logrank(&ds.inner, rho, gamma).map_err(to_py)?;
    Ok((t.statistic, t.p_value))
}

/// MaxCombo test; returns `(max |z|, p)`.
#[pyfunction]
fn maxcombo(ds: &PyTrialDataset) -> PyResult<(f64, f64)> {
    let t = core::comparators::maxcombo(&ds.inner).map_err(to_py)?;
    Ok((t.statistic, t.p_value))
}

/// Fixed-horizon RMST test; returns `(L, kappa, z, p)`.
#[pyfunction]
#[pyo3(signature = (ds, l = None, alpha = 0.05))]
fn fixed_rmst_test(ds: &PyTrialDataset, l: Option<f64>, alpha: f64) -> PyResult<(f64, f64, f64, f64)> {
    let f = core::comparators::fixed_rmst_test(&ds.inner, l, alpha).map_err(to_py)?;
    Ok((f.estimate.l, f.estimate.kappa, f.test.statistic, f.test.p_value))
}

#[pyfunction]
fn scenario_names() -> Vec<&'static str> {
    core::truth::SCENARIO_NAMES.to_vec()
}

#[pyfunction]
fn generate_trial(scenario: &str, n: usize, seed: u64) -> PyResult<PyTrialDataset> {
    let s = ScenarioSpec::named(scenario).map_err(to_py)?;
    let inner = core::sim::generate_trial(&s, n, seed).map_err(to_py)?;
    Ok(PyTrialDataset { inner })
}

#[pyfunction]
fn true_kappa(scenario: &str, l: f64) -> PyResult<f64> {
    Ok(core::truth::true_kappa(&ScenarioSpec::named(scenario).map_err(to_py)?, l))
}

#[pyfunction]
fn true_variance(scenario: &str, l: f64) -> PyResult<f64> {
    core::truth::true_variance(&ScenarioSpec::named(scenario).map_err(to_py)?, l).map_err(to_py)
}

/// Population optimum; returns `(L, kappa)`.
#[pyfunction]
#[pyo3(signature = (scenario, l_min = 0.2, l_max = 4.2, c = 0.0, l_tilde = None))]
fn true_optimum(scenario: &str, l_min: f64, l_max: f64, c: f64, l_tilde: Option<f64>) -> PyResult<(f64, f64)> {
    let s = ScenarioSpec::named(scenario).map_err(to_py)?;
    let opt = core::truth::true_optimum(&s, l_min, l_max, penalty(c, l_tilde)?).map_err(to_py)?;
    Ok((opt.l, opt.kappa))
}

/// Monte Carlo study; returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (scenarios, ns, methods, reps = 500, boot = 200, seed = 1))]
fn run_study(scenarios: Vec<String>, ns: Vec<usize>, methods: Vec<String>, reps: usize, boot: usize, seed: u64) -> PyResult<String> {
    let methods = methods.iter().map(|m| parse::<StudyMethod>(m)).collect::<PyResult<Vec<_>>>()?;
    let mut cfg = StudyConfig::new(scenarios, ns, methods, seed);
    cfg.reps = reps;
    cfg.bootstrap_resamples = boot;
    Ok(core::sim::run_study(&cfg).map_err(to_py)?.to_json())
}

#[pymodule]
fn adaptive_rmst_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTrialDataset>()?;
    m.add_function(wrap_pyfunction!(km_curve, m)?)?;
    m.add_function(wrap_pyfunction!(kappa_hat, m)?)?;
    m.add_function(wrap_pyfunction!(criterion_value, m)?)?;
    m.add_function(wrap_pyfunction!(select_l, m)?)?;
    m.add_function(wrap_pyfunction!(select_l_grid, m)?)?;
    m.add_function(wrap_pyfunction!(default_penalty, m)?)?;
    m.add_function(wrap_pyfunction!(suggest_grid_size, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_logrank, m)?)?;
    m.add_function(wrap_pyfunction!(maxcombo, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_rmst_test, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trial, m)?)?;
    m.add_function(wrap_pyfunction!(true_kappa, m)?)?;
    m.add_function(wrap_pyfunction!(true_variance, m)?)?;
    m.add_function(wrap_pyfunction!(true_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}

//! Python bindings for `qvarlab`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qvarlab::bounds::{tri_bounds as core_tri_bounds, BoundId, Cell};
use qvarlab::simulate::QuadratureRule;
use qvarlab::{DyadicGrid, Error, Guards, ProcessKind, ProcessSpec, QuadratureSpec, QvSweepResult, WeightScheme};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter(_)
        | Error::NegativeTime { .. }
        | Error::IndexOutOfRange(_)
        | Error::GuardExceeded { .. }
        | Error::LengthMismatch { .. }
        | Error::Unsupported(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn with_variance_level(level: Option<u32>) -> Guards {
    let d = Guards::default();
    Guards {
        variance_level: level.unwrap_or(d.variance_level),
        ..d
    }
}

/// A tri-fBm or n-fBm with validated parameters.
#[pyclass(name = "Process", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyProcess(ProcessSpec);

#[pymethods]
impl PyProcess {
    #[staticmethod]
    fn tri_fbm(h: f64, k: f64) -> PyResult<Self> {
        ProcessSpec::tri_fbm(h, k).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn nth_fbm(h: f64, order: u32) -> PyResult<Self> {
        ProcessSpec::nth_fbm(h, order).map(Self).map_err(py_err)
    }

    /// Standard fBm, the order-1 case.
    #[staticmethod]
    fn fbm(h: f64) -> PyResult<Self> {
        ProcessSpec::fbm(h).map(Self).map_err(py_err)
    }

    #[getter]
    fn kind(&self) -> &'static str {
        match self.0.kind() {
            ProcessKind::TriFbm => "tri_fbm",
            ProcessKind::NthFbm => "nth_fbm",
        }
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h()
    }

    #[getter]
    fn k(&self) -> Option<f64> {
        self.0.k()
    }

    #[getter]
    fn order(&self) -> Option<u32> {
        self.0.order()
    }

    #[getter]
    fn self_similarity(&self) -> f64 {
        self.0.self_similarity()
    }

    fn covariance(&self, s: f64, t: f64) -> PyResult<f64> {
        self.0.covariance(s, t).map_err(py_err)
    }

    /// `E[(X_t - X_s)^2]`.
    fn structure(&self, s: f64, t: f64) -> PyResult<f64> {
        self.0.structure_function(s, t).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Process({})", self.0)
    }
}

/// Covariance of increment `j` at level `m` and increment `k` at level `n` (1-based).
#[pyfunction]
#[pyo3(signature = (process, m, n, j, k, horizon = 1.0))]
fn phi(process: &PyProcess, m: u32, n: u32, j: u64, k: u64, horizon: f64) -> PyResult<f64> {
    qvarlab::phi(&process.0, m, n, j, k, horizon).map_err(py_err)
}

/// Full cross-increment covariance matrix as a list of rows.
#[pyfunction]
#[pyo3(signature = (process, m, n, horizon = 1.0))]
fn phi_matrix(process: &PyProcess, m: u32, n: u32, horizon: f64) -> PyResult<Vec<Vec<f64>>> {
    let mat = qvarlab::phi_matrix(&process.0, m, n, horizon, &Guards::default()).map_err(py_err)?;
    Ok(mat.as_slice().chunks(mat.cols()).map(<[f64]>::to_vec).collect())
}

/// `(mean, variance)` of `2^{alpha n} sum_k dx_k^2`; variance is `None` past the guard.
#[pyfunction]
#[pyo3(signature = (process, n, alpha = 0.0, horizon = 1.0, variance_level = None))]
fn exact_moments(
    process: &PyProcess,
    n: u32,
    alpha: f64,
    horizon: f64,
    variance_level: Option<u32>,
) -> PyResult<(f64, Option<f64>)> {
    let g = with_variance_level(variance_level);
    let m = qvarlab::exact_moments(&process.0, n, alpha, horizon, &g).map_err(py_err)?;
    Ok((m.mean, m.variance))
}

/// Exact means over `levels` with the trend classification.
#[pyfunction]
#[pyo3(signature = (process, alpha, levels, horizon = 1.0))]
fn qv_sweep<'py>(
    py: Python<'py>,
    process: &PyProcess,
    alpha: f64,
    levels: Vec<u32>,
    horizon: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let g = with_variance_level(Some(0));
    let sweep = QvSweepResult::exact(&process.0, alpha, &levels, horizon, &g).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("levels", sweep.levels)?;
    d.set_item("exact_mean", sweep.exact_mean)?;
    d.set_item("classification", sweep.classification.as_str())?;
    Ok(d)
}

#[pyfunction]
fn weighted_qv(increments: Vec<f64>, alpha: f64, n: u32) -> PyResult<f64> {
    qvarlab::weighted_qv(&increments, alpha, n).map_err(py_err)
}

/// `-log2(sum_k dx_k^2) / (2n)` for one path.
#[pyfunction]
fn estimate_hk(increments: Vec<f64>, n: u32) -> PyResult<f64> {
    qvarlab::estimate_hk(&increments, n).map(|e| e.value).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (process, n, horizon = 1.0))]
fn estimate_hk_exact_proxy(process: &PyProcess, n: u32, horizon: f64) -> PyResult<f64> {
    qvarlab::estimate_hk_exact_proxy(&process.0, n, horizon, &Guards::default())
        .map(|e| e.value)
        .map_err(py_err)
}

fn ensemble_rows(e: &qvarlab::PathEnsemble) -> Vec<Vec<f64>> {
    e.paths().map(<[f64]>::to_vec).collect()
}

/// Exact increment paths on the dyadic grid of `level`, one list per path.
#[pyfunction]
#[pyo3(signature = (process, level, num_paths, seed, horizon = 1.0))]
fn simulate(process: &PyProcess, level: u32, num_paths: usize, seed: u64, horizon: f64) -> PyResult<Vec<Vec<f64>>> {
    let grid = DyadicGrid::new(level, horizon).map_err(py_err)?;
    let ens = qvarlab::simulate_increments(&process.0, &grid, num_paths, seed, &Guards::default()).map_err(py_err)?;
    Ok(ensemble_rows(&ens))
}

/// Tri-fBm increments from the quadrature representation.
#[pyfunction]
#[pyo3(signature = (h, k, level, num_paths, seed, horizon = 1.0, node_count = 512, rule = "midpoint-log"))]
#[allow(clippy::too_many_arguments)]
fn simulate_lei_nualart(
    h: f64,
    k: f64,
    level: u32,
    num_paths: usize,
    seed: u64,
    horizon: f64,
    node_count: usize,
    rule: &str,
) -> PyResult<Vec<Vec<f64>>> {
    let rule = match rule {
        "midpoint-log" => QuadratureRule::MidpointLog,
        "gauss-log" => QuadratureRule::GaussLog,
        other => return Err(PyValueError::new_err(format!("unknown rule {other:?}"))),
    };
    let grid = DyadicGrid::new(level, horizon).map_err(py_err)?;
    let quad = QuadratureSpec::for_grid(h, &grid, node_count, rule);
    let ens = qvarlab::simulate_lei_nualart(h, k, &grid, &quad, num_paths, seed).map_err(py_err)?;
    Ok(ensemble_rows(&ens))
}

/// `{(m, n): a_mn}` for `0 <= m, n <= max_level`.
#[pyfunction]
#[pyo3(signature = (process, max_level, scheme = "unit_weight", horizon = 1.0))]
fn double_sequence(
    process: &PyProcess,
    max_level: u32,
    scheme: &str,
    horizon: f64,
) -> PyResult<std::collections::BTreeMap<(u32, u32), f64>> {
    let scheme = match scheme {
        "unit_weight" => WeightScheme::UnitWeight,
        "self_similar_weight" => WeightScheme::SelfSimilarWeight,
        other => return Err(PyValueError::new_err(format!("unknown scheme {other:?}"))),
    };
    let table = qvarlab::double_sequence(&process.0, max_level, scheme, horizon, &Guards::default()).map_err(py_err)?;
    Ok(table.iter().map(|(m, n, a)| ((m, n), a)).collect())
}

/// Applicable tri-fBm increment bounds at one cell, keyed by name.
#[pyfunction]
fn tri_bounds(h: f64, k: f64, m: u32, n: u32, j: u64, kk: u64) -> PyResult<std::collections::BTreeMap<&'static str, f64>> {
    let b = core_tri_bounds(h, k, Cell { m, n, j, k: kk }).map_err(py_err)?;
    Ok(BoundId::ALL
        .iter()
        .filter_map(|id| b.get(*id).map(|v| (id.as_str(), v)))
        .collect())
}

/// `(coefficient, exponent)` of the large-t term of `psi(t-1, t)`.
#[pyfunction]
fn psi_asymptotic_coeff(h: f64, order: u32) -> PyResult<(f64, f64)> {
    qvarlab::psi_asymptotic_coeff(h, order)
        .map(|c| (c.coefficient, c.exponent))
        .map_err(py_err)
}

#[pymodule]
fn qvarlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProcess>()?;
    m.add_function(wrap_pyfunction!(phi, m)?)?;
    m.add_function(wrap_pyfunction!(phi_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(exact_moments, m)?)?;
    m.add_function(wrap_pyfunction!(qv_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(weighted_qv, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_hk, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_hk_exact_proxy, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_lei_nualart, m)?)?;
    m.add_function(wrap_pyfunction!(double_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(tri_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(psi_asymptotic_coeff, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

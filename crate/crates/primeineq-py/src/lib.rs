//! Python bindings.

use num_bigint::BigInt;
use num_complex::Complex64;
use primeineq::algebraic::{parse_scalar, IMat};
use primeineq::analytic;
use primeineq::arith::{PrimeTable, Window};
use primeineq::counter::{self, CountOptions};
use primeineq::forms::{self, ShiftSearch};
use primeineq::local;
use primeineq::quad::{self, QuadOptions};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn imat(rows: &[Vec<i64>]) -> IMat {
    rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
}

fn qopts(samples: u64, seed: u64) -> QuadOptions {
    QuadOptions { samples, seed }
}

/// A system || L p + v ||_inf <= epsilon over primes p in [1, N]^d.
#[pyclass(name = "LinearSystem", module = "primeineq_py")]
struct PyLinearSystem {
    inner: forms::LinearSystem,
}

#[pymethods]
impl PyLinearSystem {
    #[new]
    #[pyo3(signature = (matrix, v=None, epsilon=1.0, n=10_000))]
    fn new(matrix: Vec<Vec<String>>, v: Option<Vec<f64>>, epsilon: f64, n: u64) -> PyResult<Self> {
        let m = matrix.len();
        let inner = forms::LinearSystem::parse(&matrix, v.unwrap_or_else(|| vec![0.0; m]), epsilon, n).map_err(err)?;
        Ok(PyLinearSystem { inner })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }
    #[getter]
    fn n(&self) -> u64 {
        self.inner.n
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }
    #[getter]
    fn v(&self) -> Vec<f64> {
        self.inner.v.clone()
    }

    /// Decimal approximation of L.
    fn matrix(&self) -> Vec<Vec<f64>> {
        self.inner.l_f64()
    }

    /// Row-space vector with at most two nonzero coordinates, as scalar text, or None.
    fn dual_degeneracy_witness(&self) -> PyResult<Option<Vec<String>>> {
        let w = forms::is_dual_degenerate(&self.inner).map_err(err)?;
        Ok(w.map(|w| w.vector.iter().map(|x| x.surd_string()).collect()))
    }

    fn rational_dimension(&self) -> usize {
        forms::rational_dimension(&self.inner).u
    }

    /// Audit document of the reduction to a purely irrational map.
    fn rational_reduction<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let red = forms::rational_reduction(&self.inner, self.inner.epsilon, ShiftSearch::default());
        to_py(py, &red.to_json())
    }

    /// Exact count and log-weighted count of prime solutions.
    #[pyo3(signature = (budget=counter::DEFAULT_BUDGET))]
    fn count<'py>(&self, py: Python<'py>, budget: f64) -> PyResult<Bound<'py, PyAny>> {
        let table = PrimeTable::new(self.inner.n);
        let c = py
            .detach(|| counter::count_prime_solutions(&self.inner, &table, CountOptions { budget, strategy: None }))
            .map_err(err)?;
        to_py(py, &serde_json::to_value(&c).map_err(err)?)
    }

    /// Predicted count sum_r S_r J_r N^{d-m} / log^d N with its error.
    #[pyo3(signature = (p_cut=100_000, samples=1 << 20, seed=0x5eed))]
    fn predict<'py>(&self, py: Python<'py>, p_cut: u64, samples: u64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let s = &self.inner;
        let pred = py
            .detach(|| {
                let red = forms::rational_reduction(s, s.epsilon, ShiftSearch::default());
                local::predicted_main_term(s, &red, &Window::unit_box(s.d), &Window::cube(s.m, s.epsilon), p_cut, qopts(samples, seed))
            })
            .map_err(err)?;
        to_py(py, &serde_json::to_value(&pred).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("LinearSystem(m={}, d={}, epsilon={}, n={})", self.inner.m, self.inner.d, self.inner.epsilon, self.inner.n)
    }
}

/// (canonical text, decimal value) of a scalar such as "1/2 + 3*sqrt2".
#[pyfunction]
fn scalar(text: &str) -> PyResult<(String, f64)> {
    let e = parse_scalar(text).map_err(err)?;
    Ok((e.to_string(), e.to_f64()))
}

/// C_L as (value, standard error).
#[pyfunction]
#[pyo3(signature = (l, v=None, n=1.0, samples=1 << 20, seed=0x5eed))]
fn box_constant_cl(py: Python<'_>, l: Vec<Vec<f64>>, v: Option<Vec<f64>>, n: f64, samples: u64, seed: u64) -> PyResult<(f64, f64)> {
    let v = v.unwrap_or_else(|| vec![0.0; l.len()]);
    let r = py.detach(|| quad::box_constant_cl(&l, &v, n, qopts(samples, seed))).map_err(err)?;
    Ok((r.value, r.std_error))
}

/// alpha_{e,r} for the lattice Xi, as "num/den".
#[pyfunction]
fn local_factor_alpha(xi: Vec<Vec<i64>>, e: Vec<u64>, r: Vec<i64>) -> PyResult<String> {
    Ok(local::local_factor_alpha(&imat(&xi), &e, &r).map_err(err)?.to_string())
}

/// beta_p as "num/den".
#[pyfunction]
fn beta_p(xi: Vec<Vec<i64>>, r: Vec<i64>, p: u64) -> String {
    local::beta_p(&imat(&xi), &r, p).to_string()
}

/// Singular series truncated at p_cut, with its tail interval.
#[pyfunction]
#[pyo3(signature = (xi, r, p_cut=100_000, listed=20))]
fn singular_series<'py>(py: Python<'py>, xi: Vec<Vec<i64>>, r: Vec<i64>, p_cut: u64, listed: usize) -> PyResult<Bound<'py, PyAny>> {
    let s = py.detach(|| local::singular_series(&imat(&xi), &r, p_cut)).map_err(err)?;
    to_py(py, &s.to_json(listed))
}

/// ||f||_{U^k[N]} with f[i] the value at i + 1.
#[pyfunction]
#[pyo3(signature = (f, k=2, direct=false))]
fn gowers_norm(py: Python<'_>, f: Vec<f64>, k: usize, direct: bool) -> PyResult<f64> {
    let r = py.detach(|| if direct { analytic::gowers_norm_direct(&f, k) } else { analytic::gowers_norm(&f, k) }).map_err(err)?;
    Ok(r.value)
}

/// sum_{p <= N} log p e(theta p)
#[pyfunction]
fn exp_sum(py: Python<'_>, theta: f64, n: u64) -> PyResult<Complex64> {
    py.detach(|| analytic::exp_sum_f(&PrimeTable::new(n), theta, n)).map_err(err)
}

/// inf over t1 <= ||beta||_inf <= t2 of max_j dist((L^T beta)_j, Z), as (value, argmin).
#[pyfunction]
#[pyo3(signature = (l, t1, t2, density=256))]
fn diophantine_inf(py: Python<'_>, l: Vec<Vec<f64>>, t1: f64, t2: f64, density: usize) -> PyResult<(f64, Vec<f64>)> {
    let r = py.detach(|| analytic::diophantine_inf(&l, t1, t2, density)).map_err(err)?;
    Ok((r.value, r.argmin))
}

#[pyfunction]
fn primes_upto(n: u64) -> Vec<u32> {
    PrimeTable::new(n).primes().to_vec()
}

#[pymodule]
fn primeineq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLinearSystem>()?;
    m.add_function(wrap_pyfunction!(scalar, m)?)?;
    m.add_function(wrap_pyfunction!(box_constant_cl, m)?)?;
    m.add_function(wrap_pyfunction!(local_factor_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(beta_p, m)?)?;
    m.add_function(wrap_pyfunction!(singular_series, m)?)?;
    m.add_function(wrap_pyfunction!(gowers_norm, m)?)?;
    m.add_function(wrap_pyfunction!(exp_sum, m)?)?;
    m.add_function(wrap_pyfunction!(diophantine_inf, m)?)?;
    m.add_function(wrap_pyfunction!(primes_upto, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

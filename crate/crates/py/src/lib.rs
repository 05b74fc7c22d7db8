use ekbl_core::export::{read_ekbl_file, write_ekbl_file};
use ekbl_core::roots::{char_roots as core_roots, sextic_residual, Frequency};
use ekbl_core::scenario::{parse_scenario_str, scenario_schema};
use ekbl_core::verify::{ekman_reference, fit_decay as core_fit_decay, integral_values as core_integrals};
use ekbl_core::{EkblError, C64};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

create_exception!(ekbl_py, SolverError, PyException, "Solver failure; args are (code, message).");

fn err(e: EkblError) -> PyErr {
    SolverError::new_err((e.code(), e.to_string()))
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

/// Resolved scenario (defaults applied) as a dict.
#[pyfunction]
fn parse_scenario<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    let s = parse_scenario_str(text).map_err(err)?;
    json_to_py(py, &serde_json::to_value(s).expect("scenario serializes"))
}

/// Runs a scenario given as JSON text, writing artifacts to `out`; returns report.json as a dict.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, text: &str, out: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let s = parse_scenario_str(text).map_err(err)?;
    let o = py.detach(|| ekbl_core::run::run_scenario(&s, &out)).map_err(err)?;
    json_to_py(py, &o.report)
}

#[pyfunction]
fn schema<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    json_to_py(py, &scenario_schema())
}

/// The three characteristic roots with positive real part.
#[pyfunction]
fn char_roots(xi1: f64, xi2: f64) -> PyResult<Vec<C64>> {
    Ok(core_roots(Frequency::new(xi1, xi2)).map_err(err)?.lambda.to_vec())
}

#[pyfunction]
fn root_residual(lam: C64, xi_sq: f64) -> f64 {
    sextic_residual(lam, xi_sq)
}

/// Ekman profile `(v1, v2)` at each height.
#[pyfunction]
fn ekman_profile(phi: (f64, f64), z: Vec<f64>) -> Vec<(f64, f64)> {
    z.into_iter().map(|z| ekman_reference([phi.0, phi.1], z)).collect()
}

/// Power-law fit of `v ~ C (1+z)^p` on the window; returns a dict.
#[pyfunction]
fn fit_decay<'py>(py: Python<'py>, profile: Vec<(f64, f64)>, window: (f64, f64)) -> PyResult<Bound<'py, PyAny>> {
    let f = core_fit_decay(&profile, window).map_err(err)?;
    json_to_py(py, &serde_json::to_value(f).expect("fit serializes"))
}

#[pyfunction]
#[pyo3(signature = (z, gamma = 2.0 / 3.0, delta = 2.0 / 3.0, tol = 1e-12))]
fn integral_values(z: f64, gamma: f64, delta: f64, tol: f64) -> PyResult<[f64; 3]> {
    core_integrals(z, gamma, delta, tol).map_err(err)
}

/// Reads an EKBL dump into a dict with grid data and per-component complex arrays
/// laid out mode-major (`data[m*nz + j]`).
#[pyfunction]
fn read_ekbl<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let (g, u) = read_ekbl_file(&path).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("n", g.n)?;
    d.set_item("period", g.period)?;
    d.set_item("z", g.z().to_vec())?;
    let comps = [&u.v[0], &u.v[1], &u.v[2], &u.dz_v[0], &u.dz_v[1], &u.dz_v[2], &u.p, &u.omega];
    for (name, f) in ekbl_core::export::EKBL_COMPONENTS.iter().zip(comps) {
        d.set_item(*name, f.data.clone())?;
    }
    Ok(d)
}

/// Reads and rewrites a dump; the copy is byte-identical.
#[pyfunction]
fn copy_ekbl(src: PathBuf, dst: PathBuf) -> PyResult<()> {
    let (g, u) = read_ekbl_file(&src).map_err(err)?;
    write_ekbl_file(&dst, &g, &u).map_err(err)
}

#[pymodule]
fn ekbl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add_function(wrap_pyfunction!(parse_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(schema, m)?)?;
    m.add_function(wrap_pyfunction!(char_roots, m)?)?;
    m.add_function(wrap_pyfunction!(root_residual, m)?)?;
    m.add_function(wrap_pyfunction!(ekman_profile, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(integral_values, m)?)?;
    m.add_function(wrap_pyfunction!(read_ekbl, m)?)?;
    m.add_function(wrap_pyfunction!(copy_ekbl, m)?)?;
    Ok(())
}

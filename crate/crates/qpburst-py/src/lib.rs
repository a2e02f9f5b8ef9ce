//! Python bindings: a thin layer over the `qpburst` library.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyArithmeticError, PyFileNotFoundError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qpburst::config::load_array_config_file;
use qpburst::detection::DetectionParams;
use qpburst::inversion::{InversionConfig, MeasuredTrace};
use qpburst::measurement::ShotRecord;
use qpburst::qp::{QpModel, QpState, TauTable};
use qpburst::{Error, ErrorClass};

fn py_err(e: Error) -> PyErr {
    match e.class() {
        ErrorClass::MissingInput => PyFileNotFoundError::new_err(e.to_string()),
        ErrorClass::Validation => PyValueError::new_err(e.to_string()),
        ErrorClass::Numerical => PyArithmeticError::new_err(e.to_string()),
    }
}

/// Measured (p_relax, p_excite) for constant rates under the Am sequence.
#[pyfunction]
#[pyo3(signature = (gamma_up, gamma_down, dt_relax = 3e-6, dt_excite = 6.95e-6))]
fn am_forward(gamma_up: f64, gamma_down: f64, dt_relax: f64, dt_excite: f64) -> (f64, f64) {
    qpburst::inversion::am_forward(gamma_up, gamma_down, dt_relax, dt_excite)
}

/// Inverse of `am_forward`: rates (Γ↑, Γ↓) in 1/s.
#[pyfunction]
#[pyo3(signature = (p_relax, p_excite, dt_relax = 3e-6, dt_excite = 6.95e-6))]
fn am_rates(p_relax: f64, p_excite: f64, dt_relax: f64, dt_excite: f64) -> PyResult<(f64, f64)> {
    qpburst::inversion::am_rates(p_relax, p_excite, dt_relax, dt_excite).map_err(py_err)
}

/// Effective qubit temperature in kelvin, or None when Γ↓ <= Γ↑.
#[pyfunction]
fn qubit_temperature(gamma_up: f64, gamma_down: f64, f_qb_ghz: f64) -> Option<f64> {
    qpburst::inversion::qubit_temperature(gamma_up, gamma_down, f_qb_ghz).kelvin()
}

/// Matched-filter events in a single series sampled every `dt` seconds.
/// Returns a list of dicts with index, time, score, integral and passes.
#[pyfunction]
fn detect<'py>(py: Python<'py>, series: Vec<f64>, dt: f64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cat = py.detach(|| qpburst::detection::detect(&series, dt, DetectionParams::default())).map_err(py_err)?;
    cat.events
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("index", e.index)?;
            d.set_item("time", e.time)?;
            d.set_item("score", e.score)?;
            d.set_item("integral", e.integral)?;
            d.set_item("passes", e.passes)?;
            Ok(d)
        })
        .collect()
}

/// Integrate the model for one qubit of an array config from equilibrium.
/// Returns dict of lists: t, temperature, gamma_up, gamma_down.
#[pyfunction]
#[pyo3(signature = (config, qubit, t_end, dt = 1e-6, overrides = Vec::new()))]
fn simulate_qubit<'py>(
    py: Python<'py>,
    config: PathBuf,
    qubit: usize,
    t_end: f64,
    dt: f64,
    overrides: Vec<(String, String)>,
) -> PyResult<Bound<'py, PyDict>> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(PyValueError::new_err("dt and t_end must be positive"));
    }
    let traj = py
        .detach(|| {
            let cfg = load_array_config_file(&config, &overrides)?;
            let q = cfg.qubits.get(qubit).ok_or_else(|| Error::Invalid(format!("qubit {qubit} not in config")))?;
            let m = QpModel::for_qubit(&cfg, q, Arc::new(TauTable::new(&cfg)));
            let eq = m.equilibrium(QpState::uniform(1e-8, 0.99))?;
            let n = (t_end / dt).round() as usize;
            let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
            m.integrate(0.0, t_end, eq, &times)
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("t", traj.times())?;
    d.set_item("temperature", traj.points.iter().map(|p| p.temperature).collect::<Vec<_>>())?;
    d.set_item("gamma_up", traj.points.iter().map(|p| p.gamma_up).collect::<Vec<_>>())?;
    d.set_item("gamma_down", traj.gamma_down())?;
    Ok(d)
}

/// Invert binary sequence records (A, B, D0, D1) into Γ↑/Γ↓ per bin.
#[pyfunction]
#[pyo3(signature = (paths, qubit = 0, t_max = 2e-3, freeze_time = None, freeze_window = None))]
fn invert_records<'py>(
    py: Python<'py>,
    paths: Vec<PathBuf>,
    qubit: usize,
    t_max: f64,
    freeze_time: Option<f64>,
    freeze_window: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let res = py
        .detach(|| {
            let traces = paths
                .iter()
                .map(|p| {
                    let f = std::fs::File::open(p).map_err(Error::Io)?;
                    MeasuredTrace::from_record(&ShotRecord::read_binary(std::io::BufReader::new(f))?, qubit)
                })
                .collect::<qpburst::Result<Vec<_>>>()?;
            let mut cfg = InversionConfig { t_max, ..Default::default() };
            if let Some(t) = freeze_time {
                cfg.freeze_time = t;
            }
            if let Some(w) = freeze_window {
                cfg.freeze_window = w;
            }
            qpburst::inversion::clique_invert(&traces, &cfg)
        })
        .map_err(py_err)?;
    let bins = &res.trace.bins;
    let d = PyDict::new(py);
    d.set_item("t", bins.iter().map(|b| b.t).collect::<Vec<_>>())?;
    d.set_item("gamma_up", bins.iter().map(|b| b.gamma_up).collect::<Vec<_>>())?;
    d.set_item("gamma_down", bins.iter().map(|b| b.gamma_down).collect::<Vec<_>>())?;
    d.set_item("chi2", bins.iter().map(|b| b.chi2).collect::<Vec<_>>())?;
    d.set_item("pass", bins.iter().map(|b| b.pass).collect::<Vec<_>>())?;
    Ok(d)
}

#[pymodule]
fn qpburst_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(am_forward, m)?)?;
    m.add_function(wrap_pyfunction!(am_rates, m)?)?;
    m.add_function(wrap_pyfunction!(qubit_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_qubit, m)?)?;
    m.add_function(wrap_pyfunction!(invert_records, m)?)?;
    Ok(())
}

//! Python bindings. Arguments and results are SI unless the name says otherwise.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use atomscan::fieldmodel::{intensity_law, AnalyticEvanescentModel, FieldModel, SaturationContext};
use atomscan::heating::{self, HeatingOptions, PulseSpec, SitePosition};
use atomscan::inference::{self, DecayFitOptions, DecaySample, FitResult, ReleaseRecaptureCurve, ThermometryOptions};
use atomscan::quantities::{self, PhysicalConstants, TrapSpec, K_BOLTZMANN};
use atomscan::scanmicroscope;
use atomscan::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyOSError::new_err(err.to_string()),
        Error::NonConvergence { .. } => PyRuntimeError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn trap(trap_frequency: f64, n_trunc: usize, c: &PhysicalConstants) -> PyResult<TrapSpec> {
    let d = TrapSpec::default();
    TrapSpec::new(d.depth, 2.0 * std::f64::consts::PI * trap_frequency, d.waist, n_trunc, c).map_err(to_py)
}

fn fit_dict<'py>(py: Python<'py>, fit: &FitResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for p in &fit.params {
        d.set_item(&p.name, p.value)?;
        d.set_item(format!("{}_std_error", p.name), p.std_error)?;
    }
    d.set_item("converged", fit.converged)?;
    d.set_item("at_bound", fit.at_bound)?;
    d.set_item("iterations", fit.iterations)?;
    d.set_item("residual_norm", fit.residual_norm)?;
    d.set_item("residuals", fit.residuals.clone())?;
    Ok(d)
}

/// Lamb-Dicke parameter of a Cs tweezer with the given trap frequency (Hz).
#[pyfunction]
#[pyo3(signature = (trap_frequency = 30.1e3))]
fn lamb_dicke(trap_frequency: f64) -> PyResult<f64> {
    let c = PhysicalConstants::default();
    quantities::lamb_dicke_from(c.omega_recoil, 2.0 * std::f64::consts::PI * trap_frequency).map_err(to_py)
}

/// Number of oscillator levels below a trap of depth `depth_uK`.
#[pyfunction]
#[pyo3(signature = (depth_uK = 340.0, trap_frequency = 30.1e3))]
#[allow(non_snake_case)]
fn bound_state_count(depth_uK: f64, trap_frequency: f64) -> PyResult<usize> {
    let c = PhysicalConstants::default();
    quantities::bound_state_count(
        depth_uK * 1e-6 * K_BOLTZMANN,
        2.0 * std::f64::consts::PI * trap_frequency,
        &c,
    )
    .map_err(to_py)
}

/// Row-major transition probabilities `P[n][m]` for one recoil kick.
#[pyfunction]
fn franck_condon_matrix(eta: f64, n_trunc: usize) -> PyResult<Vec<Vec<f64>>> {
    let fc = heating::franck_condon_matrix(eta, n_trunc).map_err(to_py)?;
    Ok((0..n_trunc).map(|n| (0..n_trunc).map(|m| fc.get(n, m)).collect()).collect())
}

#[pyfunction]
fn evanescent_intensity(power: f64, decay_length: f64, r: f64) -> f64 {
    intensity_law(power, decay_length, r)
}

/// Survival after a probe pulse for trap centres at `displacements` from
/// the waveguide centre.
#[pyfunction]
#[pyo3(signature = (displacements, power = 400e-12, decay_length = 743e-9, temperature = 40e-6, pulse = 6e-3, n_trunc = 130, r_min = 90e-9))]
#[allow(clippy::too_many_arguments)]
fn survival_vs_position<'py>(
    py: Python<'py>,
    displacements: Vec<f64>,
    power: f64,
    decay_length: f64,
    temperature: f64,
    pulse: f64,
    n_trunc: usize,
    r_min: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let c = PhysicalConstants::default();
    let trap = trap(30.1e3, n_trunc, &c)?;
    let field = FieldModel::Analytic(AnalyticEvanescentModel::new(power, decay_length, r_min).map_err(to_py)?);
    let sites: Vec<SitePosition> = displacements.iter().map(|&y| SitePosition { y, z: 0.0 }).collect();
    let spec = PulseSpec {
        temperature,
        duration: pulse,
        options: HeatingOptions::default(),
    };
    let points = heating::survival_vs_position(&sites, &field, &SaturationContext::from_constants(&c), &trap, &c, &spec)
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("displacement", displacements)?;
    d.set_item("intensity", points.iter().map(|p| p.intensity).collect::<Vec<_>>())?;
    d.set_item("saturation", points.iter().map(|p| p.saturation).collect::<Vec<_>>())?;
    d.set_item("rate", points.iter().map(|p| p.rate).collect::<Vec<_>>())?;
    d.set_item("survival", points.iter().map(|p| p.survival).collect::<Vec<_>>())?;
    Ok(d)
}

/// Decay-length fit; `power=None` fits the prefactor as well.
#[pyfunction]
#[pyo3(signature = (r, intensity, power = None, weights = None))]
fn fit_decay_length<'py>(
    py: Python<'py>,
    r: Vec<f64>,
    intensity: Vec<f64>,
    power: Option<f64>,
    weights: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    if r.len() != intensity.len() {
        return Err(PyValueError::new_err("r and intensity differ in length"));
    }
    let samples: Vec<DecaySample> = r
        .iter()
        .zip(&intensity)
        .map(|(&r, &intensity)| DecaySample { r, intensity })
        .collect();
    let opts = DecayFitOptions {
        free_prefactor: power.is_none(),
        ..Default::default()
    };
    let fit = inference::fit_decay_length(&samples, power.unwrap_or(0.0), weights.as_deref(), &opts).map_err(to_py)?;
    fit_dict(py, &fit)
}

/// Simulated release-recapture survival at each release time.
#[pyfunction]
#[pyo3(signature = (temperature, release_times, n_samples = 10_000, seed = 1))]
fn release_recapture_simulate(temperature: f64, release_times: Vec<f64>, n_samples: u32, seed: u64) -> PyResult<Vec<f64>> {
    let c = PhysicalConstants::default();
    inference::release_recapture_simulate(
        temperature,
        &TrapSpec::default(),
        &c,
        &release_times,
        n_samples,
        seed,
        &Default::default(),
    )
    .map(|curve| curve.survival)
    .map_err(to_py)
}

/// Temperature behind an observed release-recapture curve.
#[pyfunction]
#[pyo3(signature = (release_times, survival, n_samples, inner_seed = 0x5eed, bootstrap = 24, bootstrap_seed = 7))]
fn fit_temperature<'py>(
    py: Python<'py>,
    release_times: Vec<f64>,
    survival: Vec<f64>,
    n_samples: u32,
    inner_seed: u64,
    bootstrap: usize,
    bootstrap_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let observed = ReleaseRecaptureCurve {
        release_times,
        survival,
        n_samples,
        seed: 0,
    };
    let opts = ThermometryOptions {
        inner_seed,
        bootstrap,
        bootstrap_seed,
        ..Default::default()
    };
    let fit = inference::fit_temperature(&observed, &TrapSpec::default(), &PhysicalConstants::default(), &opts)
        .map_err(to_py)?;
    fit_dict(py, &fit)
}

/// Jerk-limited move sampled every `dt`.
#[pyfunction]
fn transport_profile<'py>(
    py: Python<'py>,
    distance: f64,
    v_max: f64,
    a_max: f64,
    jerk_time: f64,
    dt: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = scanmicroscope::transport_profile(distance, v_max, a_max, jerk_time, dt).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("time", p.samples.iter().map(|s| s.time).collect::<Vec<_>>())?;
    d.set_item("position", p.samples.iter().map(|s| s.position).collect::<Vec<_>>())?;
    d.set_item("velocity", p.samples.iter().map(|s| s.velocity).collect::<Vec<_>>())?;
    d.set_item("acceleration", p.samples.iter().map(|s| s.acceleration).collect::<Vec<_>>())?;
    d.set_item("duration", p.duration)?;
    d.set_item("v_peak", p.v_peak)?;
    d.set_item("a_peak", p.a_peak)?;
    d.set_item("acceleration_reduced", p.acceleration_reduced)?;
    Ok(d)
}

/// Runs the command-line front end, e.g. `run_cli(["scan", "--config", "run.json"])`,
/// and returns its exit status.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv = std::iter::once("atomscan".to_string()).chain(args);
    py.detach(|| atomscan::cli::main_with_args(argv))
}

#[pymodule]
#[pyo3(name = "atomscan")]
fn atomscan_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(lamb_dicke, m)?)?;
    m.add_function(wrap_pyfunction!(bound_state_count, m)?)?;
    m.add_function(wrap_pyfunction!(franck_condon_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(evanescent_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(survival_vs_position, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay_length, m)?)?;
    m.add_function(wrap_pyfunction!(release_recapture_simulate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_temperature, m)?)?;
    m.add_function(wrap_pyfunction!(transport_profile, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

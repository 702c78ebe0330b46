//! Python bindings: configuration, solves, reports and the spectral
//! primitives.

use std::path::PathBuf;

use lgeo::config::RunConfig;
use lgeo::error::Error;
use lgeo::pipeline::{self, SolveOutcome, SweepKind, EXIT_ADMISSIBILITY, EXIT_CONFIG, EXIT_IO};
use lgeo::solver::GeodesicPath;
use lgeo::spectral::{self, PhaseBranch, SymmetricMatrix};
use lgeo::verify::monge_ampere_oracle;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIndexError, PyValueError};
use pyo3::prelude::*;

create_exception!(pylgeo, LgeoError, PyException);
create_exception!(pylgeo, ConfigError, LgeoError);
create_exception!(pylgeo, AdmissibilityError, LgeoError);
create_exception!(pylgeo, SolverError, LgeoError);

fn to_py(err: Error) -> PyErr {
    let msg = err.to_string();
    match pipeline::exit_code(&err) {
        EXIT_CONFIG => ConfigError::new_err(msg),
        EXIT_ADMISSIBILITY => AdmissibilityError::new_err(msg),
        EXIT_IO => LgeoError::new_err(msg),
        _ => SolverError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<SymmetricMatrix> {
    SymmetricMatrix::from_rows(&rows).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Eigenvalues in nondecreasing order.
#[pyfunction]
fn eigenvalues(rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    spectral::eigenvalues(&matrix(rows)?).map_err(to_py)
}

#[pyfunction]
fn arctan_sum(rows: Vec<Vec<f64>>) -> PyResult<f64> {
    spectral::arctan_sum(&matrix(rows)?).map_err(to_py)
}

/// `(I + A^2)^{-1}`.
#[pyfunction]
fn arctan_sum_gradient(rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(spectral::arctan_sum_gradient(&matrix(rows)?).map_err(to_py)?.to_rows())
}

/// `[sigma_0, ..., sigma_m]` of the given values.
#[pyfunction]
fn elementary_symmetric(values: Vec<f64>) -> Vec<f64> {
    spectral::elementary_symmetric_all(&values)
}

/// Determinant and sigma-k forms of the geodesic operator on the branch
/// selected for `len(grad_u_t)`.
#[pyfunction]
fn geodesic_operator(u_tt: f64, grad_u_t: Vec<f64>, hess_x: Vec<Vec<f64>>, tau: f64) -> PyResult<(f64, f64)> {
    let h = matrix(hess_x)?;
    let branch = spectral::select_branch(grad_u_t.len()).map_err(to_py)?;
    Ok((
        spectral::geodesic_operator_det(u_tt, &grad_u_t, &h, tau, &branch).map_err(to_py)?,
        spectral::geodesic_operator_sigma(u_tt, &grad_u_t, &h, tau, &branch).map_err(to_py)?,
    ))
}

#[pyclass(name = "Branch", frozen)]
struct PyBranch(PhaseBranch);

#[pymethods]
impl PyBranch {
    #[staticmethod]
    fn select(n: usize) -> PyResult<Self> {
        spectral::select_branch(n).map(Self).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.0.theta
    }

    #[getter]
    fn big_theta(&self) -> f64 {
        self.0.big_theta
    }

    fn __repr__(&self) -> String {
        format!("Branch(n={}, theta={}, big_theta={})", self.0.n, self.0.theta, self.0.big_theta)
    }
}

#[pyclass(name = "Config")]
struct PyConfig(RunConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml(text).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        RunConfig::load(&path).map(Self).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn points(&self) -> usize {
        self.0.grid.points
    }

    #[getter]
    fn time_points(&self) -> usize {
        self.0.grid.time_points
    }

    #[getter]
    fn tau_schedule(&self) -> Vec<f64> {
        self.0.schedule.tau.clone()
    }

    #[getter]
    fn out(&self) -> PathBuf {
        self.0.output.dir.clone()
    }

    /// Returns a copy with the given overrides applied and validated.
    #[pyo3(signature = (tau_schedule=None, grid=None, time_grid=None, seed=None, out=None))]
    fn with_overrides(
        &self,
        tau_schedule: Option<Vec<f64>>,
        grid: Option<usize>,
        time_grid: Option<usize>,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> PyResult<Self> {
        let mut cfg = self.0.clone();
        pipeline::Overrides {
            tau_schedule,
            grid,
            time_grid,
            seed,
            out,
        }
        .apply(&mut cfg)
        .map_err(to_py)?;
        Ok(Self(cfg))
    }

    /// Admissibility gate and tau sweep, without writing files.
    fn solve(&self, py: Python<'_>) -> PyResult<PySolution> {
        let cfg = self.0.clone();
        let outcome = py.detach(move || pipeline::solve_stage(&cfg)).map_err(to_py)?;
        Ok(PySolution(outcome))
    }

    /// Runs `solve`, `verify`, `sweep_tau` or `sweep_grid`, writes outputs to
    /// the configured directory and returns the report as a dict.
    fn run<'py>(&self, py: Python<'py>, command: &str) -> PyResult<Bound<'py, PyAny>> {
        let cfg = self.0.clone();
        let f: fn(&RunConfig) -> pipeline::RunReport = match command {
            "solve" => pipeline::cmd_solve,
            "verify" => pipeline::cmd_verify,
            "sweep_tau" => |c| pipeline::cmd_sweep(c, SweepKind::Tau),
            "sweep_grid" => |c| pipeline::cmd_sweep(c, SweepKind::Grid),
            other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
        };
        let report = py.detach(move || f(&cfg));
        json(py, &report)
    }
}

#[pyclass(name = "Solution")]
struct PySolution(SolveOutcome);

impl PySolution {
    fn solution(&self, index: usize) -> PyResult<&lgeo::solver::TauSolution> {
        self.0
            .result
            .solutions
            .get(index)
            .ok_or_else(|| PyIndexError::new_err(format!("no solution {index}")))
    }

    fn sign(&self) -> f64 {
        if self.0.negated {
            -1.0
        } else {
            1.0
        }
    }
}

#[pymethods]
impl PySolution {
    #[getter]
    fn taus(&self) -> Vec<f64> {
        self.0.result.solutions.iter().map(|s| s.tau).collect()
    }

    #[getter]
    fn cauchy_gaps(&self) -> Vec<f64> {
        self.0.result.cauchy_gaps.clone()
    }

    #[getter]
    fn negative_branch(&self) -> bool {
        self.0.negated
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.result.all_converged()
    }

    #[getter]
    fn branch(&self) -> PyBranch {
        PyBranch(self.0.branch)
    }

    /// Per-tau solve records as a list of dicts.
    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, &self.0.result.records)
    }

    /// `(times, rows)` with `rows[k]` the slice of `v_hat` at `times[k]` in
    /// row-major torus order, in the orientation of the input pair.
    fn v_hat(&self, index: usize) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let s = self.solution(index)?;
        let grid = s.v_hat.grid();
        let ns = grid.slice_len();
        let sign = self.sign();
        let times = (0..grid.time_points()).map(|k| grid.time(k)).collect();
        let rows = s
            .v_hat
            .values()
            .chunks(ns)
            .map(|r| r.iter().map(|v| sign * v).collect())
            .collect();
        Ok((times, rows))
    }

    /// The path potential `u` on the grid, same layout as `v_hat`.
    fn potential(&self, index: usize) -> PyResult<Vec<Vec<f64>>> {
        let s = self.solution(index)?;
        let pair = self
            .0
            .pair
            .as_ref()
            .ok_or_else(|| PyValueError::new_err("synthetic chi runs have no potential"))?;
        let u = GeodesicPath::from_solution(pair, &s.v_hat).map_err(to_py)?.values();
        let sign = self.sign();
        Ok(u.values()
            .chunks(s.v_hat.grid().slice_len())
            .map(|r| r.iter().map(|v| sign * v).collect())
            .collect())
    }

    /// `max |det M - 1|` on the wide stencil; `n = 1` only.
    fn monge_ampere_deviation(&self, index: usize) -> PyResult<f64> {
        let s = self.solution(index)?;
        Ok(monge_ampere_oracle(&s.v_hat, &s.chi).map_err(to_py)?.max_deviation)
    }
}

/// Algebraic self checks; returns the report as a dict.
#[pyfunction]
#[pyo3(signature = (out, seed=0))]
fn selftest<'py>(py: Python<'py>, out: PathBuf, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let report = py.detach(move || pipeline::selftest(seed, &out));
    json(py, &report)
}

#[pymodule]
fn pylgeo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("LgeoError", py.get_type::<LgeoError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("AdmissibilityError", py.get_type::<AdmissibilityError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add_class::<PyBranch>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(arctan_sum, m)?)?;
    m.add_function(wrap_pyfunction!(arctan_sum_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(elementary_symmetric, m)?)?;
    m.add_function(wrap_pyfunction!(geodesic_operator, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}

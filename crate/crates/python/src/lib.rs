//! Python bindings: problem builders, the textual method and
//! preconditioner vocabulary shared with the CLI, solver reports with full
//! residual histories, and the dense iteration-operator norms.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use richaccel::accel::run_accelerated;
use richaccel::cli::MethodSpec;
use richaccel::diagnostics::compute_operator_norms;
use richaccel::fixed_point::{run_richardson, RichardsonOperator};
use richaccel::gmres::gmres_preconditioned;
use richaccel::problems::{
    build_convection_diffusion_2d, build_laplace_2d, write_matrix_market, Preconditioner,
    ProblemInstance,
};
use richaccel::trace::{NormKind, SolveOptions, SolveReport};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// A sparse linear system `A x = b` with an initial guess.
#[pyclass(frozen)]
struct Problem {
    inner: ProblemInstance,
}

#[pymethods]
impl Problem {
    /// Five-point Laplace operator on an `n x n` interior grid of the unit
    /// square, with an all-ones right-hand side and zero initial guess.
    #[staticmethod]
    fn laplace(n: usize) -> PyResult<Self> {
        Ok(Problem { inner: build_laplace_2d(n).map_err(value_err)? })
    }

    /// Central-difference convection-diffusion operator with convection
    /// coefficients `c1` (x direction) and `c2` (y direction).
    #[staticmethod]
    #[pyo3(signature = (n, c1 = 0.5, c2 = 0.5))]
    fn convection_diffusion(n: usize, c1: f64, c2: f64) -> PyResult<Self> {
        Ok(Problem { inner: build_convection_diffusion_2d(n, c1, c2).map_err(value_err)? })
    }

    /// Number of unknowns.
    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label.clone()
    }

    /// The system matrix in MatrixMarket coordinate format.
    fn matrix_market(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        write_matrix_market(&self.inner.matrix, &mut buf).map_err(runtime_err)?;
        String::from_utf8(buf).map_err(runtime_err)
    }

    fn __repr__(&self) -> String {
        format!("Problem(label='{}', n={})", self.inner.label, self.inner.n())
    }
}

/// Outcome of one solver run.
#[pyclass(frozen)]
struct Report {
    inner: SolveReport,
}

#[pymethods]
impl Report {
    /// Method label, e.g. `ngmres_m5` or `gmres_right`.
    #[getter]
    fn method(&self) -> String {
        self.inner.label()
    }

    /// `converged`, `maxiterations`, `diverged`, or `breakdown`.
    #[getter]
    fn status(&self) -> String {
        format!("{:?}", self.inner.status).to_ascii_lowercase()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    #[getter]
    fn solution(&self) -> Vec<f64> {
        self.inner.final_x.clone()
    }

    /// History of `||A x_k - b||_2`, one entry per recorded iteration.
    #[getter]
    fn classical_norms(&self) -> Vec<f64> {
        self.inner.norms(NormKind::Classical)
    }

    /// History of `||P (A x_k - b)||_2`.
    #[getter]
    fn preconditioned_norms(&self) -> Vec<f64> {
        self.inner.norms(NormKind::Preconditioned)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(method='{}', status='{}', iterations={})",
            self.inner.label(),
            self.status(),
            self.inner.iterations()
        )
    }
}

fn build_operator(problem: &Problem, preconditioner: &str) -> PyResult<RichardsonOperator> {
    let prec =
        Preconditioner::from_spec(preconditioner, &problem.inner.matrix).map_err(value_err)?;
    RichardsonOperator::new(problem.inner.clone(), prec).map_err(value_err)
}

/// Runs one method on a problem. `method` uses the CLI vocabulary:
/// `richardson`, `gmres-left`, `gmres-right`, or `<variant>[:<depth>]` with
/// variant one of `aa`, `aag`, `aar`, `ngmres`, `ngmresr` and depth a
/// window size or `full` (the default). `preconditioner` is `identity`,
/// `scaled:<omega>`, or `lower-tri`.
#[pyfunction]
#[pyo3(signature = (problem, preconditioner, method, tol = 1e-10, maxit = 500))]
fn solve(
    problem: &Problem,
    preconditioner: &str,
    method: &str,
    tol: f64,
    maxit: usize,
) -> PyResult<Report> {
    let spec: MethodSpec = method.parse().map_err(value_err)?;
    let op = build_operator(problem, preconditioner)?;
    let opts = SolveOptions { tol, maxit, retain_vectors: false };
    let inner = match spec {
        MethodSpec::Richardson => run_richardson(&op, &opts),
        MethodSpec::Accelerated { variant, depth } => run_accelerated(&op, variant, depth, &opts),
        MethodSpec::Gmres { side } => gmres_preconditioned(&op, side, &opts),
    }
    .map_err(runtime_err)?;
    Ok(Report { inner })
}

/// Dense two-norms of the iteration operators: returns
/// `(||I - P A||_2, ||I - A P||_2, spectral_radius(I - P A))`.
#[pyfunction]
fn operator_norms(problem: &Problem, preconditioner: &str) -> PyResult<(f64, f64, f64)> {
    let op = build_operator(problem, preconditioner)?;
    let norms = compute_operator_norms(&op).map_err(runtime_err)?;
    Ok((norms.b_two_norm, norms.h_two_norm, norms.b_spectral_radius))
}

#[pymodule]
fn _richaccel(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Report>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(operator_norms, m)?)?;
    Ok(())
}

//! Python bindings. Matrices cross the boundary as lists of rows; any
//! sequence of sequences of floats (a 2-D numpy array included) is accepted.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use nestfactor::factor::{self, FactorOptions, FactorizationReport};
use nestfactor::opcore::{self, DEFAULT_CLAMP_TOL, DEFAULT_RANK_TOL};
use nestfactor::probes::ProbeSet;
use nestfactor::stability::{self, CheckVerdict, ConvergenceReport, HarnessOptions};
use nestfactor::{nest, Error, Operator, Projection};

type Rows = Vec<Vec<f64>>;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::NotPositive { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::SingularGram { .. }
        | Error::NoConvergence(_) => PyArithmeticError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn operator(rows: Rows) -> PyResult<Operator> {
    Operator::from_rows(&rows).map_err(to_py)
}

fn rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// A nest of orthogonal projections indexed by an increasing grid.
#[pyclass(name = "Nest", frozen, module = "pynestfactor")]
struct PyNest(nest::Nest);

#[pymethods]
impl PyNest {
    /// Coordinate nest `X_k = span(e_0, …, e_{k-1})` on the grid `k/n`.
    #[staticmethod]
    fn standard(n: usize) -> PyResult<Self> {
        nest::standard_nest(n).map(PyNest).map_err(to_py)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        nest::Nest::from_text(text).map(PyNest).map_err(to_py)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn grid(&self) -> Vec<f64> {
        self.0.grid().to_vec()
    }

    fn projection(&self, index: usize) -> PyResult<Rows> {
        if index >= self.0.grid().len() {
            return Err(PyValueError::new_err(format!("grid index {index} out of range")));
        }
        Ok(rows(self.0.projection(index).matrix()))
    }

    fn __len__(&self) -> usize {
        self.0.grid().len()
    }

    fn __repr__(&self) -> String {
        format!("Nest(dim={}, points={})", self.0.dim(), self.0.grid().len())
    }
}

/// Result of `canonical_factor`.
#[pyclass(name = "Factorization", frozen, module = "pynestfactor")]
struct PyFactorization(FactorizationReport);

#[pymethods]
impl PyFactorization {
    #[getter]
    fn v(&self) -> Rows {
        rows(self.0.v.matrix())
    }

    #[getter]
    fn d(&self) -> Rows {
        rows(self.0.d().matrix())
    }

    #[getter]
    fn sqrt_c(&self) -> Rows {
        rows(self.0.sqrt_c.matrix())
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }

    #[getter]
    fn isometry_defect(&self) -> f64 {
        self.0.admissibility.isometry_defect
    }

    #[getter]
    fn rank_defect(&self) -> usize {
        self.0.admissibility.rank_defect
    }

    #[getter]
    fn triangularity_defect(&self) -> f64 {
        self.0.triangularity_defect
    }

    #[getter]
    fn cholesky_distance(&self) -> Option<f64> {
        self.0.cholesky_distance()
    }

    #[getter]
    fn verdict(&self) -> &'static str {
        self.0.diagonal.verdict.as_str()
    }

    /// `(intervals, range, residual, isometry_defect, triangularity)` per step.
    #[getter]
    fn sweep(&self) -> Vec<(usize, f64, f64, f64, f64)> {
        self.0
            .sweep
            .iter()
            .map(|r| (r.intervals, r.range, r.residual, r.admissibility.isometry_defect, r.triangularity))
            .collect()
    }

    fn residual_bound_holds(&self) -> bool {
        self.0.residual_bound_holds()
    }

    fn __repr__(&self) -> String {
        self.0.summary()
    }
}

/// Convergence harness over a parametrized family.
#[pyclass(name = "Harness", frozen, module = "pynestfactor")]
struct PyHarness(ConvergenceReport);

#[pymethods]
impl PyHarness {
    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.alpha).collect()
    }

    #[getter]
    fn max_pairings(&self) -> Vec<f64> {
        self.0.max_pairings()
    }

    #[getter]
    fn op_defects(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.op_defect).collect()
    }

    #[getter]
    fn proj_defects(&self) -> Vec<f64> {
        self.0.rows.iter().map(|r| r.proj_defect).collect()
    }

    #[getter]
    fn passed(&self) -> bool {
        self.0.verdict.passed()
    }

    #[getter]
    fn failure(&self) -> Option<String> {
        match &self.0.verdict {
            CheckVerdict::Pass => None,
            CheckVerdict::Fail { reason, .. } => Some(reason.clone()),
        }
    }

    fn proof_bound_holds(&self) -> bool {
        self.0.proof_bound_holds()
    }
}

/// Eigenvalues in ascending order and the matching eigenvector columns.
#[pyfunction]
fn sym_eig(a: Rows) -> PyResult<(Vec<f64>, Rows)> {
    let spec = opcore::sym_eig(&operator(a)?).map_err(to_py)?;
    Ok((spec.eigenvalues.clone(), rows(&spec.eigenvectors)))
}

#[pyfunction]
#[pyo3(signature = (c, clamp_tol = DEFAULT_CLAMP_TOL))]
fn psd_sqrt(c: Rows, clamp_tol: f64) -> PyResult<Rows> {
    let root = opcore::psd_sqrt(&operator(c)?, clamp_tol).map_err(to_py)?;
    Ok(rows(root.matrix()))
}

#[pyfunction]
fn op_norm(a: Rows) -> PyResult<f64> {
    Ok(opcore::op_norm(&operator(a)?))
}

/// Projection onto the range of `W X`, where `X` is a projection matrix.
#[pyfunction]
#[pyo3(signature = (w, x, rank_tol = DEFAULT_RANK_TOL))]
fn range_projection(w: Rows, x: Rows, rank_tol: f64) -> PyResult<Rows> {
    let x = Projection::from_matrix(operator(x)?.into_matrix()).map_err(to_py)?;
    let p = opcore::range_projection(&operator(w)?, &x, rank_tol).map_err(to_py)?;
    Ok(rows(p.matrix()))
}

#[pyfunction]
fn cholesky_upper(c: Rows) -> PyResult<Rows> {
    Ok(rows(factor::cholesky_upper(&operator(c)?).map_err(to_py)?.matrix()))
}

#[pyfunction]
fn volterra_operator(kappa: f64, n: usize) -> PyResult<Rows> {
    Ok(rows(stability::volterra_operator(kappa, n).map_err(to_py)?.matrix()))
}

#[pyfunction]
#[pyo3(signature = (c, nest = None, schedule = 5, seed = 0, eps = None, rank_tol = DEFAULT_RANK_TOL))]
fn canonical_factor(
    py: Python<'_>,
    c: Rows,
    nest: Option<&PyNest>,
    schedule: usize,
    seed: u64,
    eps: Option<f64>,
    rank_tol: f64,
) -> PyResult<PyFactorization> {
    let c = operator(c)?;
    let nest = match nest {
        Some(n) => n.0.clone(),
        None => nest::standard_nest(c.dim()).map_err(to_py)?,
    };
    let mut opts = FactorOptions::default();
    opts.diagonal.schedule = schedule;
    opts.diagonal.eps = eps;
    opts.diagonal.rank_tol = rank_tol;
    let probes = ProbeSet::seeded(c.dim(), seed);
    py.detach(|| factor::canonical_factor(&c, &nest, &opts, &probes))
        .map(PyFactorization)
        .map_err(to_py)
}

/// Rows `(n, ‖W_n − W‖, ‖(P_n − P)φ₁‖, closed form, projection agreement)`.
#[pyfunction]
#[pyo3(signature = (ns, truncation = 64))]
fn counterexample_table(ns: Vec<usize>, truncation: usize) -> PyResult<Vec<(usize, f64, f64, f64, f64)>> {
    let table = stability::counterexample_table(&ns, truncation).map_err(to_py)?;
    Ok(table
        .into_iter()
        .map(|r| (r.n, r.perturbation_norm, r.phi1_defect, r.closed_form_phi1_defect, r.projection_agreement))
        .collect())
}

/// Runs the harness on the Volterra family `C^α` with kernel strength `kappa`.
#[pyfunction]
#[pyo3(signature = (kappa, alphas, n, schedule = 5, tol = 1e-2, seed = 0))]
fn volterra_harness(
    py: Python<'_>,
    kappa: f64,
    alphas: Vec<f64>,
    n: usize,
    schedule: usize,
    tol: f64,
    seed: u64,
) -> PyResult<PyHarness> {
    let fam = stability::volterra_family(kappa, &alphas, n).map_err(to_py)?;
    let nest = nest::standard_nest(n).map_err(to_py)?;
    let mut opts = HarnessOptions {
        tol,
        ..HarnessOptions::default()
    };
    opts.factor.diagonal.schedule = schedule;
    opts.factor.diagonal.track_intertwining = false;
    let probes = ProbeSet::seeded(n, seed);
    py.detach(|| stability::theorem_harness(&fam, &nest, &opts, &probes))
        .map(PyHarness)
        .map_err(to_py)
}

#[pymodule]
fn pynestfactor(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNest>()?;
    m.add_class::<PyFactorization>()?;
    m.add_class::<PyHarness>()?;
    m.add_function(wrap_pyfunction!(sym_eig, m)?)?;
    m.add_function(wrap_pyfunction!(psd_sqrt, m)?)?;
    m.add_function(wrap_pyfunction!(op_norm, m)?)?;
    m.add_function(wrap_pyfunction!(range_projection, m)?)?;
    m.add_function(wrap_pyfunction!(cholesky_upper, m)?)?;
    m.add_function(wrap_pyfunction!(volterra_operator, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_factor, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_table, m)?)?;
    m.add_function(wrap_pyfunction!(volterra_harness, m)?)?;
    Ok(())
}

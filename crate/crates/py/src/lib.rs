//! Python bindings for the certification library.
//!
//! Models and densities are thin wrappers over the Rust types; structured
//! reports are returned as JSON strings so the Python side can `json.loads`
//! them without a conversion layer.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use entrocert::certify::{
    lsi_bound, pathological_example_report, theorem1_constant, theorem1_verify,
};
use entrocert::conditions::{
    beta_matrices, delta_from_condition_c, full_condition_report, SamplerConfig,
};
use entrocert::divergence::{avg_conditional_relative_entropy, relative_entropy};
use entrocert::expr::HamiltonianExpr;
use entrocert::gibbs::{contraction_rate_formula, gibbs_sweep_exact, run_trajectory};
use entrocert::model::{
    build_gaussian, Density as RustDensity, GaussianDensity, GridDensity, GridModel,
    Model as RustModel, Weights,
};
use entrocert::transport::{w2_gaussian_weighted, w2_grid_exact};

fn err(e: entrocert::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    for row in rows {
        if row.len() != n {
            return Err(PyValueError::new_err("matrix must be square"));
        }
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

/// A Gibbs model: either a Gaussian field given by its precision matrix and
/// linear term, or a finite grid field given by a Hamiltonian expression.
#[pyclass(name = "Model")]
struct PyModel {
    inner: RustModel,
}

#[pymethods]
impl PyModel {
    /// Gaussian model with Hamiltonian x'Jx/2 - b'x.
    #[staticmethod]
    fn gaussian(precision: Vec<Vec<f64>>, linear: Vec<f64>) -> PyResult<Self> {
        let j = matrix(&precision)?;
        let b = DVector::from_vec(linear);
        Ok(PyModel {
            inner: RustModel::Gaussian(build_gaussian(j, b).map_err(err)?),
        })
    }

    /// Grid model over a finite product grid; `hamiltonian` uses variables
    /// x1..xn, and `rho` sets the per-coordinate LSI weights.
    #[staticmethod]
    fn grid(
        grids: Vec<Vec<f64>>,
        hamiltonian: &str,
        base: Vec<Vec<f64>>,
        rho: Vec<f64>,
    ) -> PyResult<Self> {
        let n = grids.len();
        let expr = HamiltonianExpr::parse(hamiltonian, n).map_err(err)?;
        let m = GridModel::from_expr(grids, base, expr)
            .map_err(err)?
            .with_weights(Weights::new(rho).map_err(err)?)
            .map_err(err)?;
        Ok(PyModel {
            inner: RustModel::Grid(m),
        })
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Largest admissible dependence parameter from the interaction norms.
    fn delta(&self) -> PyResult<f64> {
        let beta = beta_matrices(&self.inner).map_err(err)?;
        Ok(delta_from_condition_c(&beta))
    }

    /// Hamiltonian value at a point.
    fn hamiltonian(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.hamiltonian_eval(&x).map_err(err)
    }

    /// Stationary density of the model.
    fn stationary(&self) -> PyDensity {
        PyDensity {
            inner: self.inner.stationary(),
        }
    }

    /// Full hypothesis-check report as a JSON string.
    #[pyo3(signature = (samples = 10_000, seed = 0, exhaustive = false))]
    fn condition_report(&self, samples: usize, seed: u64, exhaustive: bool) -> PyResult<String> {
        let cfg = SamplerConfig {
            count: samples,
            seed,
            exhaustive,
        };
        let report = full_condition_report(&self.inner, &cfg).map_err(err)?;
        to_json(&report)
    }

    /// Certified constant bundle as a JSON string; raises when the
    /// hypotheses are not certified.
    #[pyo3(signature = (samples = 10_000, seed = 0, exhaustive = false))]
    fn certify(&self, samples: usize, seed: u64, exhaustive: bool) -> PyResult<String> {
        let cfg = SamplerConfig {
            count: samples,
            seed,
            exhaustive,
        };
        let report = full_condition_report(&self.inner, &cfg).map_err(err)?;
        let bound = lsi_bound(&self.inner, &report).map_err(err)?;
        to_json(&bound)
    }

    /// Checks the tensorization inequality on one density; returns the
    /// verification outcome as a JSON string.
    #[pyo3(signature = (p, samples = 10_000, seed = 0, exhaustive = false))]
    fn verify_theorem1(
        &self,
        p: &PyDensity,
        samples: usize,
        seed: u64,
        exhaustive: bool,
    ) -> PyResult<String> {
        let cfg = SamplerConfig {
            count: samples,
            seed,
            exhaustive,
        };
        let report = full_condition_report(&self.inner, &cfg).map_err(err)?;
        let out = theorem1_verify(&self.inner, &p.inner, &report).map_err(err)?;
        to_json(&out)
    }

    /// One exact Gibbs sweep applied to a density.
    fn sweep(&self, p: &PyDensity) -> PyResult<PyDensity> {
        Ok(PyDensity {
            inner: gibbs_sweep_exact(&self.inner, &p.inner).map_err(err)?,
        })
    }

    /// Relative entropies along an exact-sweep trajectory from `p`.
    fn trajectory_entropies(&self, p: &PyDensity, sweeps: usize) -> PyResult<Vec<f64>> {
        let traj = run_trajectory(&self.inner, &p.inner, sweeps).map_err(err)?;
        Ok(traj.entropies)
    }

    /// Averaged conditional relative entropy of coordinate `i` (1-based).
    fn conditional_entropy(&self, p: &PyDensity, i: usize) -> PyResult<f64> {
        avg_conditional_relative_entropy(&p.inner, &self.inner, i).map_err(err)
    }
}

/// A probability density compatible with one model family.
#[pyclass(name = "Density")]
struct PyDensity {
    inner: RustDensity,
}

#[pymethods]
impl PyDensity {
    #[staticmethod]
    fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = DVector::from_vec(mean);
        let c = matrix(&cov)?;
        Ok(PyDensity {
            inner: RustDensity::Gaussian(GaussianDensity::new(m, c).map_err(err)?),
        })
    }

    /// Grid density from unnormalized log weights in row-major order.
    #[staticmethod]
    fn grid(grids: Vec<Vec<f64>>, log_weights: Vec<f64>) -> PyResult<Self> {
        Ok(PyDensity {
            inner: RustDensity::Grid(
                GridDensity::normalized(grids, log_weights).map_err(err)?,
            ),
        })
    }

    fn dim(&self) -> usize {
        match &self.inner {
            RustDensity::Gaussian(d) => d.dim(),
            RustDensity::Grid(d) => d.dim(),
        }
    }
}

/// Relative entropy D(p || q).
#[pyfunction]
fn kl(p: &PyDensity, q: &PyDensity) -> PyResult<f64> {
    relative_entropy(&p.inner, &q.inner).map_err(err)
}

/// Weighted quadratic Wasserstein distance between two densities of the
/// same family.
#[pyfunction]
fn w2(p: &PyDensity, q: &PyDensity, rho: Vec<f64>) -> PyResult<f64> {
    let w = Weights::new(rho).map_err(err)?;
    match (&p.inner, &q.inner) {
        (RustDensity::Gaussian(a), RustDensity::Gaussian(b)) => {
            w2_gaussian_weighted(a, b, &w).map_err(err)
        }
        (RustDensity::Grid(a), RustDensity::Grid(b)) => {
            Ok(w2_grid_exact(a, b, &w).map_err(err)?.0)
        }
        _ => Err(PyValueError::new_err("density families differ")),
    }
}

/// Tensorization constant 1 / (delta (1 - delta/2)).
#[pyfunction]
#[pyo3(name = "theorem1_constant")]
fn theorem1_constant_py(delta: f64) -> PyResult<f64> {
    theorem1_constant(delta).map_err(err)
}

/// One-sweep contraction rate (1 - delta) / sqrt(1 + 2 delta - delta^2).
#[pyfunction]
fn contraction_rate(delta: f64) -> PyResult<f64> {
    contraction_rate_formula(delta).map_err(err)
}

/// Mean-field diagnostic report (JSON string) for dimension `n`.
#[pyfunction]
#[pyo3(signature = (target_mean, n, samples = 1000, seed = 0))]
fn pathological_report(
    target_mean: f64,
    n: usize,
    samples: usize,
    seed: u64,
) -> PyResult<String> {
    let cfg = SamplerConfig {
        count: samples,
        seed,
        exhaustive: false,
    };
    let rep = pathological_example_report(target_mean, n, &cfg).map_err(err)?;
    to_json(&rep)
}

#[pymodule]
fn entrocert_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyDensity>()?;
    m.add_function(wrap_pyfunction!(kl, m)?)?;
    m.add_function(wrap_pyfunction!(w2, m)?)?;
    m.add_function(wrap_pyfunction!(theorem1_constant_py, m)?)?;
    m.add_function(wrap_pyfunction!(contraction_rate, m)?)?;
    m.add_function(wrap_pyfunction!(pathological_report, m)?)?;
    Ok(())
}

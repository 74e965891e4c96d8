//! Python bindings for ogalab.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ogalab::analysis::{lebesgue_report, LemmaContext, SigmaMode};
use ogalab::dictionary::{self, regime_ceiling};
use ogalab::experiment::{self, ExperimentConfig, InstanceReport};
use ogalab::oga::{default_stop_tol, StopReason};
use ogalab::oracle::{ExhaustiveOracle, PlantSpec, ReferenceDecomposition};
use ogalab::{Error, Vector};

fn err(e: Error) -> PyErr {
    match e {
        Error::IndexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn vector(values: Vec<f64>) -> PyResult<Vector> {
    Vector::new(values).map_err(err)
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A finite dictionary of unit-norm atoms with its measured coherence.
#[pyclass(name = "Dictionary", module = "ogalab", frozen)]
struct PyDictionary {
    inner: dictionary::Dictionary,
}

#[pymethods]
impl PyDictionary {
    /// Atoms are normalized; zero, duplicate and antipodal atoms are rejected.
    #[new]
    #[pyo3(signature = (atoms, label = "custom"))]
    fn new(atoms: Vec<Vec<f64>>, label: &str) -> PyResult<Self> {
        let atoms = atoms.into_iter().map(vector).collect::<PyResult<Vec<_>>>()?;
        Ok(Self {
            inner: dictionary::build_dictionary(atoms, label).map_err(err)?,
        })
    }

    /// Standard basis followed by normalized Sylvester-Hadamard rows in R^(2^k).
    #[staticmethod]
    fn hadamard_union(k: u32) -> PyResult<Self> {
        Ok(Self {
            inner: dictionary::gen_identity_hadamard(k).map_err(err)?,
        })
    }

    #[staticmethod]
    fn hadamard(k: u32) -> PyResult<Self> {
        Ok(Self {
            inner: dictionary::gen_hadamard(k).map_err(err)?,
        })
    }

    #[staticmethod]
    fn orthonormal(dim: usize) -> PyResult<Self> {
        Ok(Self {
            inner: dictionary::gen_orthonormal(dim).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (dim, count, seed, max_coherence = None))]
    fn random(dim: usize, count: usize, seed: u64, max_coherence: Option<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: dictionary::gen_random_spherical(dim, count, seed, max_coherence).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: dictionary::Dictionary::load(path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn subdictionary(&self, indices: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.subdictionary(&indices).map_err(err)?,
        })
    }

    fn random_subdictionary(&self, count: usize, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.random_subdictionary(count, seed).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn label(&self) -> String {
        self.inner.label().to_string()
    }

    #[getter]
    fn coherence(&self) -> f64 {
        self.inner.coherence().m_coherence
    }

    #[getter]
    fn witness_pair(&self) -> (usize, usize) {
        self.inner.coherence().witness_pair
    }

    /// Largest m with 20 m M <= 1, or None for an orthonormal dictionary.
    #[getter]
    fn regime_ceiling(&self) -> Option<usize> {
        regime_ceiling(self.inner.coherence().m_coherence)
    }

    fn atom(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.len() {
            return Err(PyIndexError::new_err(format!("atom {index} of {}", self.inner.len())));
        }
        Ok(self.inner.atom(index).as_slice().to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dictionary(label={:?}, atoms={}, dim={}, coherence={})",
            self.inner.label(),
            self.inner.len(),
            self.inner.dim(),
            self.inner.coherence().m_coherence
        )
    }
}

/// Record of an OGA run. Step indices in `x` are 1-based as `x[n-1][i-1]`.
#[pyclass(name = "OgaTrace", module = "ogalab", frozen)]
struct PyOgaTrace {
    inner: ogalab::OgaTrace,
}

#[pymethods]
impl PyOgaTrace {
    #[getter]
    fn selected(&self) -> Vec<usize> {
        self.inner.selected.clone()
    }

    #[getter]
    fn d(&self) -> Vec<f64> {
        self.inner.d.clone()
    }

    #[getter]
    fn residual_norms(&self) -> Vec<f64> {
        self.inner.residual_norms.clone()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.inner.x.clone()
    }

    #[getter]
    fn coeffs(&self) -> Vec<Vec<f64>> {
        self.inner.coeffs_per_step.clone()
    }

    #[getter]
    fn stop_reason(&self) -> &'static str {
        match self.inner.stop_reason {
            StopReason::CompletedSteps => "completed_steps",
            StopReason::CorrelationBelowTol => "correlation_below_tol",
        }
    }

    fn residual(&self, n: usize) -> PyResult<Vec<f64>> {
        self.inner
            .residuals
            .get(n)
            .map(|r| r.as_slice().to_vec())
            .ok_or_else(|| PyIndexError::new_err(format!("residual {n} of {}", self.inner.steps())))
    }

    fn __len__(&self) -> usize {
        self.inner.steps()
    }
}

#[pyfunction]
#[pyo3(signature = (dictionary, f, steps, stop_tol = None))]
fn run_oga(dictionary: &PyDictionary, f: Vec<f64>, steps: usize, stop_tol: Option<f64>) -> PyResult<PyOgaTrace> {
    let f = vector(f)?;
    let tol = stop_tol.unwrap_or_else(|| default_stop_tol(&f));
    Ok(PyOgaTrace {
        inner: ogalab::run_oga(&dictionary.inner, &f, steps, tol).map_err(err)?,
    })
}

/// Exact best m-term approximation: dict with support, coeffs, sigma.
#[pyfunction]
#[pyo3(signature = (dictionary, f, m, budget = None))]
fn best_m_term<'py>(
    py: Python<'py>,
    dictionary: &PyDictionary,
    f: Vec<f64>,
    m: usize,
    budget: Option<u64>,
) -> PyResult<Bound<'py, PyDict>> {
    let f = vector(f)?;
    let oracle = match budget {
        Some(b) => ExhaustiveOracle::with_budget(&dictionary.inner, b),
        None => ExhaustiveOracle::new(&dictionary.inner),
    };
    let best = py.detach(|| oracle.best_m_term(&f, m)).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("support", best.support)?;
    out.set_item("coeffs", best.coeffs)?;
    out.set_item("sigma", best.sigma)?;
    Ok(out)
}

/// Planted m-sparse signal plus orthogonal noise: (f, reference dict).
#[pyfunction]
#[pyo3(signature = (dictionary, m, seed, coeff_low = 1.0, coeff_high = 2.0, noise = 0.5))]
fn plant_instance<'py>(
    py: Python<'py>,
    dictionary: &PyDictionary,
    m: usize,
    seed: u64,
    coeff_low: f64,
    coeff_high: f64,
    noise: f64,
) -> PyResult<(Vec<f64>, Bound<'py, PyAny>)> {
    let spec = PlantSpec {
        m,
        coeff_low,
        coeff_high,
        noise_norm: noise,
    };
    let (f, reference) = ogalab::plant_instance(&dictionary.inner, &spec, seed).map_err(err)?;
    Ok((f.into_inner(), to_py(py, &reference)?))
}

/// Runs OGA for `steps` (default 2m) and verifies it against the exact best
/// m-term approximation. Returns the report as nested dicts.
#[pyfunction]
#[pyo3(signature = (dictionary, f, m, steps = None, budget = None))]
fn analyze<'py>(
    py: Python<'py>,
    dictionary: &PyDictionary,
    f: Vec<f64>,
    m: usize,
    steps: Option<usize>,
    budget: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let f = vector(f)?;
    let dict = &dictionary.inner;
    let report = py.detach(|| -> ogalab::Result<_> {
        let oracle = match budget {
            Some(b) => ExhaustiveOracle::with_budget(dict, b),
            None => ExhaustiveOracle::new(dict),
        };
        let best = oracle.best_m_term(&f, m)?;
        let sigma = best.sigma;
        let reference = ReferenceDecomposition::from(best);
        let trace = ogalab::run_oga(dict, &f, steps.unwrap_or(2 * m), default_stop_tol(&f))?;
        let mc = dict.coherence().m_coherence;
        let ctx = LemmaContext::new(dict, &trace, &reference, m, mc)?;
        let mut checks = ctx.lemma_suite()?;
        checks.extend(ctx.final_state());
        let lebesgue = lebesgue_report(&trace, sigma, SigmaMode::Exact, m, mc);
        Ok(serde_json::json!({
            "lebesgue": lebesgue,
            "classification": ctx.classification,
            "checks": checks,
        }))
    });
    to_py(py, &report.map_err(err)?)
}

/// Runs a seeded experiment from key=value settings (the same keys as the
/// CLI config file) and returns the per-instance reports.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, settings: BTreeMap<String, String>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ExperimentConfig::from_map(&settings).map_err(err)?;
    let reports: Vec<InstanceReport> = py
        .detach(|| -> ogalab::Result<_> {
            let dict = cfg.dict.build()?;
            let outcomes = experiment::run_experiment(&dict, &cfg)?;
            experiment::write_outputs(&cfg, &outcomes)?;
            Ok(outcomes.into_iter().map(|o| o.report).collect())
        })
        .map_err(err)?;
    to_py(py, &reports)
}

/// (passed, table) from the built-in consistency suite.
#[pyfunction]
fn selftest(py: Python<'_>) -> PyResult<(bool, String)> {
    let report = py.detach(ogalab::selftest::run_selftest).map_err(err)?;
    Ok((report.passed(), report.table()))
}

#[pymodule]
#[pyo3(name = "ogalab")]
fn ogalab_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDictionary>()?;
    m.add_class::<PyOgaTrace>()?;
    m.add_function(wrap_pyfunction!(run_oga, m)?)?;
    m.add_function(wrap_pyfunction!(best_m_term, m)?)?;
    m.add_function(wrap_pyfunction!(plant_instance, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}

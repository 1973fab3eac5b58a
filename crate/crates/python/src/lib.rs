//! Python module `qudit_indel`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qudit_indel::code::{kl_check as core_kl_check, LogicalCodewords};
use qudit_indel::codefile::{example_code, CodeFile};
use qudit_indel::conditions::{check_del_conditions, check_ins_conditions, format_word, CodeSpec};
use qudit_indel::decoder::{
    decode_exact, decode_sampled, predicted_probs, synthesize as core_synthesize, Outcome, RecoveryPlan, Tolerances,
};
use qudit_indel::kraus::{build_deletion_kraus, build_insertion_kraus, InsertedState, KrausSet, PositionDistribution};
use qudit_indel::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::KlViolation { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// A code: `l` classes of length-`n` strings over `{0, .., l-1}`.
#[pyclass(name = "Code", module = "qudit_indel", frozen)]
struct PyCode {
    inner: CodeSpec,
}

#[pymethods]
impl PyCode {
    #[new]
    fn new(l: usize, n: usize, classes: Vec<Vec<String>>) -> PyResult<Self> {
        Ok(Self { inner: CodeSpec::from_strings(l, n, &classes).map_err(py_err)? })
    }

    /// The bundled `l = 3`, `n = 6` example.
    #[staticmethod]
    fn example() -> Self {
        Self { inner: example_code() }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: CodeFile::load(path).map_err(py_err)?.code })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: CodeFile::parse(text).map_err(py_err)?.code })
    }

    fn to_json(&self) -> String {
        CodeFile::new(self.inner.clone()).to_json()
    }

    #[getter]
    fn l(&self) -> usize {
        self.inner.l()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn classes(&self) -> Vec<Vec<String>> {
        self.inner
            .classes()
            .iter()
            .map(|c| c.iter().map(|w| format_word(w)).collect())
            .collect()
    }

    /// Combinatorial conditions for both channels.
    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let out = PyDict::new(py);
        let del = check_del_conditions(&self.inner);
        let ins = check_ins_conditions(&self.inner);
        for (key, r) in [("deletion", &del), ("insertion", &ins)] {
            let d = PyDict::new(py);
            d.set_item("satisfied", r.satisfied)?;
            d.set_item("ratio_violations", r.ratio_violation_count)?;
            d.set_item("distance_violations", r.distance_violation_count)?;
            d.set_item("violations", r.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>())?;
            out.set_item(key, d)?;
        }
        out.set_item("satisfied", del.satisfied && ins.satisfied)?;
        Ok(out)
    }

    fn __repr__(&self) -> String {
        format!("Code({})", self.inner)
    }
}

fn channel(code: &CodeSpec, error: &str, weights: Option<Vec<f64>>, sigma: Option<Vec<f64>>) -> PyResult<KrausSet> {
    let (l, n) = (code.l(), code.n());
    let dist = |len: usize| match &weights {
        Some(w) => PositionDistribution::new(w.clone()),
        None => PositionDistribution::uniform(len),
    };
    match error {
        "del" | "deletion" => {
            if sigma.is_some() {
                return Err(PyValueError::new_err("sigma only applies to insertion"));
            }
            build_deletion_kraus(n, l, &dist(n).map_err(py_err)?).map_err(py_err)
        }
        "ins" | "insertion" => {
            let probs = sigma.unwrap_or_else(|| vec![1.0 / l as f64; l]);
            let inserted = InsertedState::from_probabilities(&probs).map_err(py_err)?;
            build_insertion_kraus(n, &inserted, &dist(n + 1).map_err(py_err)?).map_err(py_err)
        }
        other => Err(PyValueError::new_err(format!("error must be 'del' or 'ins', got {other:?}"))),
    }
}

/// Numerical Knill-Laflamme check. `sigma` is the diagonal of the inserted
/// state; the default is maximally mixed.
#[pyfunction]
#[pyo3(signature = (code, error = "del", weights = None, sigma = None, tol = 1e-9))]
fn kl_check(code: &PyCode, error: &str, weights: Option<Vec<f64>>, sigma: Option<Vec<f64>>, tol: f64) -> PyResult<bool> {
    let ks = channel(&code.inner, error, weights, sigma)?;
    let cw = LogicalCodewords::new(&code.inner).map_err(py_err)?;
    Ok(core_kl_check(&cw, &ks, tol).map_err(py_err)?.satisfied)
}

/// Recovery for one code and channel.
#[pyclass(name = "Plan", module = "qudit_indel", frozen)]
struct PyPlan {
    plan: RecoveryPlan,
    ks: KrausSet,
    codewords: LogicalCodewords,
}

#[pymethods]
impl PyPlan {
    /// Number of syndromes.
    #[getter]
    fn d(&self) -> usize {
        self.plan.d()
    }

    /// `p(k)` for `k = 1..=d`, independent of the logical state.
    fn probabilities(&self) -> PyResult<Vec<f64>> {
        predicted_probs(&self.plan, &self.ks).map_err(py_err)
    }

    fn report(&self) -> PyResult<String> {
        self.plan.export_report(&self.ks).map_err(py_err)
    }

    /// Encodes `alphas`, applies the channel and decodes. Exact when `trials`
    /// is `None`, otherwise sampled. Returns outcome probabilities (or
    /// frequencies) keyed by `k`, with `0` for the null outcome, and the mean
    /// fidelity.
    #[pyo3(signature = (alphas, trials = None, seed = 0))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        alphas: Vec<Complex64>,
        trials: Option<u64>,
        seed: u64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let psi = self.codewords.encode(&alphas).map_err(py_err)?;
        let key = |o: Outcome| match o {
            Outcome::Syndrome(k) => k,
            Outcome::Null => 0,
        };
        let probs = PyDict::new(py);
        let out = PyDict::new(py);
        match trials {
            None => {
                let rho = self.ks.apply_pure(&psi).map_err(py_err)?;
                let res = decode_exact(&self.plan, &rho, Some(&alphas)).map_err(py_err)?;
                for r in &res.outcomes {
                    probs.set_item(key(r.outcome), r.probability)?;
                }
                out.set_item("mean_fidelity", res.mean_fidelity)?;
            }
            Some(t) => {
                let sim = decode_sampled(&self.plan, &psi, Some(&alphas), &self.ks, t, seed).map_err(py_err)?;
                for o in sim.histogram.keys() {
                    probs.set_item(key(*o), sim.frequency(*o))?;
                }
                out.set_item("mean_fidelity", sim.mean_fidelity)?;
            }
        }
        out.set_item("probabilities", probs)?;
        Ok(out)
    }
}

/// Builds the recovery for `code` under the given channel.
#[pyfunction]
#[pyo3(signature = (code, error = "del", weights = None, sigma = None))]
fn synthesize(code: &PyCode, error: &str, weights: Option<Vec<f64>>, sigma: Option<Vec<f64>>) -> PyResult<PyPlan> {
    let ks = channel(&code.inner, error, weights, sigma)?;
    let codewords = LogicalCodewords::new(&code.inner).map_err(py_err)?;
    let plan = core_synthesize(&codewords, &ks, Tolerances::default()).map_err(py_err)?;
    Ok(PyPlan { plan, ks, codewords })
}

#[pymodule(name = "qudit_indel")]
fn qudit_indel_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCode>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(kl_check, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    Ok(())
}

//! Python bindings. Library errors surface as `ValueError` with the error
//! kind prefixed, e.g. `"domain: k must be positive"`.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use genotok_core::benchstats::{self, StdEstimator};
use genotok_core::masking::{self, MaskConfig, MaskMode};
use genotok_core::tokenize::{self, NMode, TokenizerSpec};
use genotok_core::{leakage, DnaSequence, Error, Vocabulary};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(format!("{}: {}", other.kind(), other)),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for genotok_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().py()
}

#[pyclass(name = "Vocabulary", module = "genotok", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyVocab(Vocabulary);

#[pymethods]
impl PyVocab {
    #[staticmethod]
    #[pyo3(signature = (k, include_n=false, kind="kmer"))]
    fn kmer(k: usize, include_n: bool, kind: &str) -> PyResult<Self> {
        Ok(PyVocab(Vocabulary::kmer(parse(kind)?, k, include_n).py()?))
    }

    /// Train BPE merges on the given sequences.
    #[staticmethod]
    fn bpe_train(corpus: Vec<String>, size: usize) -> PyResult<Self> {
        let seqs = corpus
            .into_iter()
            .map(|s| DnaSequence::from_bases(s.into_bytes()))
            .collect::<genotok_core::Result<Vec<_>>>()
            .py()?;
        Ok(PyVocab(tokenize::bpe_train(&seqs, size).py()?.vocab))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyVocab(Vocabulary::load(path).py()?))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyVocab(Vocabulary::from_json(text).py()?))
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path).py()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().py()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().as_str()
    }

    #[getter]
    fn k(&self) -> Option<usize> {
        self.0.k()
    }

    fn tokens(&self) -> Vec<String> {
        self.0.tokens().to_vec()
    }

    fn token(&self, id: u32) -> Option<String> {
        self.0.token(id).map(str::to_string)
    }

    fn id_of(&self, token: &str) -> Option<u32> {
        self.0.id_of(token)
    }

    fn specials(&self) -> BTreeMap<&'static str, u32> {
        self.0.special_ids().map(|(s, id)| (s.name(), id)).collect()
    }

    fn is_special(&self, id: u32) -> bool {
        self.0.is_special(id)
    }

    fn rc_label(&self, id: u32) -> PyResult<u32> {
        self.0.rc_label(id).py()
    }

    fn __repr__(&self) -> String {
        format!("Vocabulary(kind={:?}, k={:?}, len={})", self.kind(), self.0.k(), self.0.len())
    }
}

#[pyclass(name = "Tokenizer", module = "genotok", frozen)]
struct PyTokenizer(TokenizerSpec);

#[pymethods]
impl PyTokenizer {
    #[new]
    #[pyo3(signature = (vocab, n_mode="as_unk", sentinels=true))]
    fn new(vocab: &PyVocab, n_mode: &str, sentinels: bool) -> PyResult<Self> {
        let mode: NMode = parse(n_mode)?;
        Ok(PyTokenizer(TokenizerSpec::new(vocab.0.clone(), mode, sentinels).py()?))
    }

    fn encode(&self, py: Python<'_>, seq: &str) -> PyResult<Vec<u32>> {
        let seq = DnaSequence::from_bases(seq.as_bytes().to_vec()).py()?;
        Ok(py.detach(|| self.0.encode(&seq)))
    }

    fn decode(&self, ids: Vec<u32>) -> String {
        self.0.decode(&ids)
    }

    #[getter]
    fn vocab(&self) -> PyVocab {
        PyVocab(self.0.vocab().clone())
    }
}

/// Mask a framed token sequence. Returns a dict with `input_ids`, `m`,
/// `m_in` and `labels`.
#[pyfunction]
#[pyo3(signature = (ids, vocab, p=masking::DEFAULT_MASK_PROB, mode="fixed", seed=0, ordinal=0, k=None))]
#[allow(clippy::too_many_arguments)]
fn mask<'py>(
    py: Python<'py>,
    ids: Vec<u32>,
    vocab: &PyVocab,
    p: f64,
    mode: &str,
    seed: u64,
    ordinal: u64,
    k: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mode: MaskMode = parse(mode)?;
    let cfg = MaskConfig::new(p, k.unwrap_or_else(|| vocab.0.overlap_k()), mode, seed).py()?;
    let plan = masking::mask_tokens(&ids, &vocab.0, &cfg, ordinal).py()?;
    let out = PyDict::new(py);
    out.set_item("input_ids", plan.input_ids)?;
    out.set_item("m", plan.m_positions)?;
    out.set_item("m_in", plan.m_in_positions)?;
    out.set_item("labels", plan.labels)?;
    Ok(out)
}

/// Check a plan produced by [`mask`] for label leakage.
#[pyfunction]
fn verify_no_leakage(
    input_ids: Vec<u32>,
    m: Vec<usize>,
    m_in: Vec<usize>,
    labels: BTreeMap<usize, u32>,
    k: usize,
    vocab: &PyVocab,
) -> bool {
    let plan = masking::MaskPlan {
        input_ids,
        m_positions: m,
        m_in_positions: m_in,
        labels,
    };
    masking::verify_no_leakage(&plan, k, &vocab.0)
}

#[pyfunction]
fn leakage_ratio(k: usize, m: usize) -> PyResult<f64> {
    leakage::leakage_ratio(k, m).py()
}

#[pyfunction]
fn candidate_space_size(k: usize, m: usize, i: usize) -> PyResult<u64> {
    leakage::candidate_space_size(k, m, i).py()
}

#[pyfunction]
fn leakage_report<'py>(py: Python<'py>, k: usize, m: usize) -> PyResult<Bound<'py, PyDict>> {
    let r = leakage::LeakageReport::new(k, m).py()?;
    let out = PyDict::new(py);
    out.set_item("k", r.k)?;
    out.set_item("m", r.m)?;
    out.set_item("ratio_percent", r.ratio_percent)?;
    out.set_item("candidate_sizes", r.candidate_sizes)?;
    out.set_item("max_entropy_ratio", r.max_entropy_ratio)?;
    Ok(out)
}

#[pyfunction]
fn reverse_complement(seq: &str) -> PyResult<String> {
    let s = DnaSequence::from_bases(seq.as_bytes().to_vec()).py()?;
    Ok(s.reverse_complement().as_str().to_string())
}

/// `(W, p)`
#[pyfunction]
fn shapiro_wilk(samples: Vec<f64>) -> PyResult<(f64, f64)> {
    let r = benchstats::shapiro_wilk(&samples).py()?;
    Ok((r.w, r.p))
}

/// `(slope, intercept, r2)`
#[pyfunction]
fn ols_fit(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = benchstats::ols_fit(&points).py()?;
    Ok((f.slope, f.intercept, f.r2))
}

/// Returns `(threshold, {dataset: passed})`.
#[pyfunction]
#[pyo3(signature = (sigmas, std="sample", threshold_override=None))]
fn stability_filter(
    sigmas: BTreeMap<String, f64>,
    std: &str,
    threshold_override: Option<f64>,
) -> PyResult<(f64, BTreeMap<String, bool>)> {
    let est: StdEstimator = parse(std)?;
    let r = benchstats::stability_filter(&sigmas, est, threshold_override).py()?;
    Ok((r.threshold_override.unwrap_or(r.threshold), r.pass))
}

#[pymodule]
fn genotok(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyVocab>()?;
    m.add_class::<PyTokenizer>()?;
    m.add_function(wrap_pyfunction!(mask, m)?)?;
    m.add_function(wrap_pyfunction!(verify_no_leakage, m)?)?;
    m.add_function(wrap_pyfunction!(leakage_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(candidate_space_size, m)?)?;
    m.add_function(wrap_pyfunction!(leakage_report, m)?)?;
    m.add_function(wrap_pyfunction!(reverse_complement, m)?)?;
    m.add_function(wrap_pyfunction!(shapiro_wilk, m)?)?;
    m.add_function(wrap_pyfunction!(ols_fit, m)?)?;
    m.add_function(wrap_pyfunction!(stability_filter, m)?)?;
    Ok(())
}

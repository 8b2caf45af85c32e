use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mtle::dataio::{synth_dataset, tokenize, Caption, Dataset, SynthConfig};
use mtle::metrics::{bleu, cider, rouge_l, BleuSmoothing, EvalRecord};
use mtle::model::{DecodeMode, InferOptions};
use mtle::multitask::{loss_gradcheck, GradCheckSetup};
use mtle::semantics::{augment, build_sdm, EmbeddingMode, StopWordList};
use mtle::trainer::{load_checkpoint, save_checkpoint, train, Checkpoint, TrainConfig, TrainResources};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A trained two-decoder captioner with its vocabulary.
#[pyclass(name = "Captioner", module = "mtle_py")]
struct PyCaptioner {
    inner: Checkpoint,
}

#[pymethods]
impl PyCaptioner {
    /// Trains on the training split of a manifest. `config` is a JSON object string.
    #[staticmethod]
    #[pyo3(signature = (manifest, config = None, seed = None))]
    fn train(py: Python<'_>, manifest: PathBuf, config: Option<&str>, seed: Option<u64>) -> PyResult<Self> {
        let mut config: TrainConfig = match config {
            Some(text) => serde_json::from_str(text).map_err(value_err)?,
            None => TrainConfig::default(),
        };
        if let Some(seed) = seed {
            config.seed = seed;
        }
        let inner = py
            .detach(|| {
                let dataset = Dataset::load(&manifest)?;
                train(&dataset, &config, &TrainResources::default())
            })
            .map_err(|e| {
                if e.is_numeric() {
                    PyRuntimeError::new_err(e.to_string())
                } else {
                    value_err(e)
                }
            })?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(&path).map_err(value_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.inner).map_err(value_err)
    }

    /// Captions a video given as a list of frame feature vectors.
    #[pyo3(signature = (frames, mode = "greedy", decoder = 0))]
    fn caption(&self, frames: Vec<Vec<f64>>, mode: &str, decoder: usize) -> PyResult<String> {
        let opts = InferOptions {
            mode: mode.parse::<DecodeMode>().map_err(value_err)?,
            max_len: self.inner.config.max_caption_len,
            decoder,
        };
        let tokens = self.inner.model.infer(&frames, &opts).map_err(value_err)?;
        Ok(self.inner.vocab.decode(&tokens).join(" "))
    }

    /// Per-epoch (ce_reference, ce_complement, agreement, total).
    #[getter]
    fn loss_log(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner
            .loss_log
            .iter()
            .map(|e| (e.ce_reference, e.ce_complement, e.agreement, e.total))
            .collect()
    }

    #[getter]
    fn vocab(&self) -> Vec<String> {
        self.inner.vocab.words().to_vec()
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.model.parameter_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Captioner(vocab={}, parameters={}, epochs={})",
            self.inner.vocab.len(),
            self.inner.model.parameter_count(),
            self.inner.epoch
        )
    }
}

/// Writes a synthetic dataset into `out_dir` and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 1, videos = 8, vocab = 20, frames = 6, dim = 16, captions = 2))]
fn synth(out_dir: PathBuf, seed: u64, videos: usize, vocab: usize, frames: usize, dim: usize, captions: usize) -> PyResult<PathBuf> {
    let config = SynthConfig {
        seed,
        n_videos: videos,
        vocab_size: vocab,
        frames_per_video: frames,
        feature_dim: dim,
        captions_per_video: captions,
    };
    std::fs::create_dir_all(&out_dir).map_err(value_err)?;
    let (path, _) = synth_dataset(&config, &out_dir).map_err(value_err)?;
    Ok(path)
}

#[pyfunction(name = "tokenize")]
fn py_tokenize(text: &str) -> Vec<String> {
    tokenize(text)
}

/// Strips stop words; returns (augmented caption, degenerate flag).
#[pyfunction(name = "augment")]
fn py_augment(caption: &str) -> (String, bool) {
    let a = augment(&tokenize(caption), &StopWordList::default());
    (a.tokens.join(" "), a.degenerate)
}

/// Pairwise semantic distances between captions, using the surrogate embedder.
#[pyfunction]
fn semantic_distances(captions: Vec<String>) -> PyResult<Vec<Vec<f64>>> {
    let captions: Vec<Caption> = captions.into_iter().map(Caption::new).collect();
    let sdm = build_sdm("", &captions, &EmbeddingMode::Surrogate).map_err(value_err)?;
    Ok(sdm.delta)
}

fn records(candidates: Vec<String>, references: Vec<Vec<String>>) -> PyResult<Vec<EvalRecord>> {
    if candidates.len() != references.len() {
        return Err(value_err(format!(
            "{} candidates but {} reference lists",
            candidates.len(),
            references.len()
        )));
    }
    Ok(candidates
        .into_iter()
        .zip(references)
        .enumerate()
        .map(|(i, (c, refs))| EvalRecord::new(i.to_string(), tokenize(&c), refs.iter().map(|r| tokenize(r)).collect()))
        .collect())
}

/// Corpus scores: dict with bleu4, rougeL and cider (None when undefined).
#[pyfunction]
fn evaluate(py: Python<'_>, candidates: Vec<String>, references: Vec<Vec<String>>) -> PyResult<Py<PyAny>> {
    let recs = records(candidates, references)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("bleu4", bleu(&recs, 4, BleuSmoothing::None).map_err(value_err)?)?;
    d.set_item("rougeL", rouge_l(&recs, 1.2).map_err(value_err)?)?;
    d.set_item("cider", cider(&recs, 4, 6.0).ok())?;
    d.set_item("n_records", recs.len())?;
    Ok(d.into_any().unbind())
}

/// Maximum relative error of the full-loss gradient check on a small model.
#[pyfunction]
#[pyo3(signature = (seed = 7))]
fn gradcheck(py: Python<'_>, seed: u64) -> PyResult<f64> {
    let setup = GradCheckSetup {
        seed,
        ..GradCheckSetup::default()
    };
    let report = py.detach(|| loss_gradcheck(&setup)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(report.max_rel_error)
}

/// Runs the command-line interface with `args` (without program name).
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    py.detach(|| mtle::cli::run(std::iter::once("mtle".to_string()).chain(args)))
}

#[pymodule]
fn mtle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCaptioner>()?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(py_tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(py_augment, m)?)?;
    m.add_function(wrap_pyfunction!(semantic_distances, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

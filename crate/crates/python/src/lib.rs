//! Python bindings: checkpoint loading, transcription, line rendering, CER
//! and gradient checks.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use htr_core::checkpoint;
use htr_core::checks::{scoped_grad_check, Scope};
use htr_core::datagen::{read_pgm, render_line, Jitter};
use htr_core::metrics;
use htr_core::model::Head;
use htr_core::trainer::{transcribe, TrainState};
use htr_core::{Error, Tensor};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Config(_) | Error::UnknownChar(_) | Error::Domain(_) | Error::VocabMismatch(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn rows_to_image(rows: Vec<Vec<f32>>) -> PyResult<Tensor<f32>> {
    let h = rows.len();
    let w = rows.first().map_or(0, Vec::len);
    if h == 0 || w == 0 || rows.iter().any(|r| r.len() != w) {
        return Err(PyValueError::new_err(
            "image must be a non-empty rectangular list of rows",
        ));
    }
    Tensor::from_vec(&[h, w, 1], rows.concat()).map_err(to_py)
}

fn image_to_rows(t: &Tensor<f32>) -> Vec<Vec<f32>> {
    t.data()
        .chunks_exact(t.shape()[1])
        .map(<[f32]>::to_vec)
        .collect()
}

/// A trained model restored from a checkpoint file.
#[pyclass]
struct Recognizer {
    state: TrainState,
}

#[pymethods]
impl Recognizer {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Recognizer {
            state: checkpoint::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn vocab(&self) -> String {
        self.state.model.vocab.as_string()
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.state.epoch
    }

    /// Transcribes a list of pixel rows in `[0, 1]` (ink is 1).
    #[pyo3(signature = (image, head = "attention", max_steps = 100))]
    fn transcribe(&self, image: Vec<Vec<f32>>, head: &str, max_steps: usize) -> PyResult<String> {
        let head = Head::parse(head).map_err(to_py)?;
        transcribe(&self.state.model, &rows_to_image(image)?, head, max_steps).map_err(to_py)
    }

    #[pyo3(signature = (path, head = "attention", max_steps = 100))]
    fn transcribe_file(&self, path: PathBuf, head: &str, max_steps: usize) -> PyResult<String> {
        let head = Head::parse(head).map_err(to_py)?;
        let image = read_pgm(&path).map_err(to_py)?;
        transcribe(&self.state.model, &image, head, max_steps).map_err(to_py)
    }
}

/// Renders `text` with the built-in font; returns pixel rows.
#[pyfunction]
#[pyo3(signature = (text, scale = 4, seed = 0, jitter = true))]
fn render(text: &str, scale: usize, seed: u64, jitter: bool) -> PyResult<Vec<Vec<f32>>> {
    let j = if jitter { Jitter::DEFAULT } else { Jitter::OFF };
    Ok(image_to_rows(
        &render_line(text, scale, j, seed).map_err(to_py)?.image,
    ))
}

#[pyfunction]
fn levenshtein(a: &str, b: &str) -> usize {
    metrics::levenshtein(a, b)
}

#[pyfunction]
fn cer(hypothesis: &str, reference: &str) -> PyResult<f64> {
    metrics::cer(hypothesis, reference).map_err(to_py)
}

/// Runs a scoped gradient check; returns `(max_rel_error, worst_param)`.
#[pyfunction]
#[pyo3(signature = (scope, seed = htr_core::checks::DEFAULT_CHECK_SEED))]
fn gradcheck(scope: &str, seed: u64) -> PyResult<(f64, String)> {
    let scope: Scope = scope.parse().map_err(to_py)?;
    let r = scoped_grad_check(scope, seed, false).map_err(to_py)?;
    Ok((r.max_rel_error, r.worst_param))
}

#[pymodule]
fn htr_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Recognizer>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(levenshtein, m)?)?;
    m.add_function(wrap_pyfunction!(cer, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}

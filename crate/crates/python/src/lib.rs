use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Parser;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sedfusion::cli::{self, Cli, RunConfig};
use sedfusion::dataio::{load_split, Dataset as CoreDataset, Partition};
use sedfusion::error::Error;
use sedfusion::meanteacher::{evaluate_model, predict_records, LrSchedule};
use sedfusion::metrics::{self, Collars, Event, EventMap, MetricConfig, TagMap};
use sedfusion::model::{linear_pool, load_checkpoint, save_checkpoint, Crnn};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn run_config(settings: Option<BTreeMap<String, String>>) -> PyResult<RunConfig> {
    let pairs: Vec<(String, String)> = settings.unwrap_or_default().into_iter().collect();
    RunConfig::from_pairs(&pairs).map_err(py_err)
}

/// Loaded dataset directory.
#[pyclass]
struct Dataset {
    inner: CoreDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    fn new(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_split(&path).map_err(py_err)?,
        })
    }

    #[getter]
    fn vocabulary(&self) -> Vec<String> {
        self.inner.manifest.vocabulary.clone()
    }

    /// Clip ids of a partition: weak, unlabeled, val or test.
    fn clip_ids(&self, split: &str) -> PyResult<Vec<String>> {
        let p = Partition::parse(split).map_err(py_err)?;
        Ok(self
            .inner
            .records(p)
            .iter()
            .map(|r| r.clip_id.clone())
            .collect())
    }

    fn counts(&self) -> BTreeMap<String, usize> {
        Partition::ALL
            .into_iter()
            .map(|p| (p.name().to_string(), self.inner.records(p).len()))
            .collect()
    }
}

/// CRNN weights and configuration.
#[pyclass]
struct Model {
    inner: Crnn<f32>,
}

#[pymethods]
impl Model {
    /// Fresh model sized for `dataset`, using the `model.*` settings.
    #[new]
    #[pyo3(signature = (dataset, settings=None, seed=0))]
    fn new(
        dataset: &Dataset,
        settings: Option<BTreeMap<String, String>>,
        seed: u64,
    ) -> PyResult<Self> {
        use rand::SeedableRng;
        let config = run_config(settings)?;
        let model_config = config
            .model
            .resolve(&dataset.inner.manifest)
            .map_err(py_err)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            inner: Crnn::new(model_config, &mut rng).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: load_checkpoint(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&path, &self.inner).map_err(py_err)
    }

    #[getter]
    fn num_parameters(&self) -> usize {
        self.inner.num_parameters()
    }

    #[getter]
    fn config(&self) -> String {
        self.inner.config().to_kv()
    }

    /// Per clip: (clip_id, clip probabilities, frame probabilities as rows).
    #[allow(clippy::type_complexity)]
    fn predict(
        &mut self,
        dataset: &Dataset,
        split: &str,
    ) -> PyResult<Vec<(String, Vec<f32>, Vec<Vec<f32>>)>> {
        let p = Partition::parse(split).map_err(py_err)?;
        cli::check_compatible(&self.inner, &dataset.inner).map_err(py_err)?;
        let preds =
            predict_records(&mut self.inner, &dataset.inner.records(p), 32).map_err(py_err)?;
        let c = self.inner.n_classes();
        Ok(preds
            .into_iter()
            .map(|p| {
                let frames = p.frame_probs.chunks(c).map(|r| r.to_vec()).collect();
                (p.clip_id, p.clip_probs, frames)
            })
            .collect())
    }

    /// Clip, segment and event F1 on the val or test partition.
    #[pyo3(signature = (dataset, split="test", settings=None))]
    fn evaluate(
        &mut self,
        dataset: &Dataset,
        split: &str,
        settings: Option<BTreeMap<String, String>>,
    ) -> PyResult<(f64, f64, f64)> {
        let config = run_config(settings)?;
        let p = Partition::parse(split).map_err(py_err)?;
        let reference = dataset.inner.strong(p).ok_or_else(|| {
            PyValueError::new_err(format!("partition {split} has no strong labels"))
        })?;
        let report = evaluate_model(
            &mut self.inner,
            &dataset.inner.records(p),
            reference,
            &config.metric,
            32,
        )
        .map_err(py_err)?;
        Ok((report.clip.f1, report.segment.f1, report.event.f1))
    }
}

/// Writes a synthetic dataset and returns the per-partition clip counts.
#[pyfunction]
#[pyo3(signature = (out_dir, settings=None, seed=0, force=false))]
fn generate(
    out_dir: PathBuf,
    settings: Option<BTreeMap<String, String>>,
    seed: u64,
    force: bool,
) -> PyResult<String> {
    let mut config = run_config(settings)?;
    config.seed = seed;
    Ok(cli::cmd_generate(&config, &out_dir, force)
        .map_err(py_err)?
        .to_string())
}

/// Mean-teacher training; returns (student, teacher, run log).
#[pyfunction]
#[pyo3(signature = (dataset, settings=None, seed=0))]
fn train(
    dataset: &Dataset,
    settings: Option<BTreeMap<String, String>>,
    seed: u64,
) -> PyResult<(Model, Model, String)> {
    let mut config = run_config(settings)?;
    config.seed = seed;
    let outcome = cli::run_training(&config, &dataset.inner).map_err(py_err)?;
    let log = outcome.log_text(&config.entries());
    Ok((
        Model {
            inner: outcome.student,
        },
        Model {
            inner: outcome.teacher,
        },
        log,
    ))
}

/// Self-weighted average Σp²/Σp of each class column of `[T][C]` frame probabilities.
#[pyfunction]
fn linear_pooling(frames: Vec<Vec<f64>>) -> Vec<f64> {
    let c = frames.first().map_or(0, Vec::len);
    let flat: Vec<f64> = frames.iter().flatten().copied().collect();
    linear_pool(&flat, c, frames.len())
}

#[pyfunction]
fn median_filter(column: Vec<u8>, window: usize) -> PyResult<Vec<u32>> {
    let filtered = metrics::median_filter(&column, window).map_err(py_err)?;
    Ok(filtered.into_iter().map(u32::from).collect())
}

#[pyfunction]
fn lr_at(step: u64) -> f64 {
    LrSchedule::default().lr_at(step)
}

type PyEvents = Vec<(String, f64, f64, usize)>;

fn event_map(events: &PyEvents, clips: &BTreeMap<String, f64>) -> EventMap {
    let mut map: EventMap = clips.keys().map(|k| (k.clone(), Vec::new())).collect();
    for (clip, onset, offset, class) in events {
        map.entry(clip.clone()).or_default().push(Event {
            onset: *onset,
            offset: *offset,
            class: *class,
        });
    }
    map
}

/// Clip, segment and event F1 of predicted events `(clip, onset, offset, class)`
/// against reference events over the clips in `durations`. Predicted tags are
/// the classes of the predicted events.
#[pyfunction]
fn score_events(
    predicted: PyEvents,
    reference: PyEvents,
    durations: BTreeMap<String, f64>,
    n_classes: usize,
) -> PyResult<(f64, f64, f64)> {
    let pred = event_map(&predicted, &durations);
    let refs = event_map(&reference, &durations);
    let tags: TagMap = pred
        .iter()
        .map(|(k, v)| (k.clone(), metrics::tags_of(v)))
        .collect();
    let config = MetricConfig {
        collars: Collars::default(),
        ..MetricConfig::default()
    };
    let r = metrics::score(&tags, &pred, &refs, &durations, n_classes, &config).map_err(py_err)?;
    Ok((r.clip.f1, r.segment.f1, r.event.f1))
}

/// Runs the command line with `args` (without the program name). Returns the
/// exit code and the text the command printed or the error message.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String) {
    let argv = std::iter::once("sedfusion".to_string()).chain(args);
    match Cli::try_parse_from(argv) {
        Ok(parsed) => {
            let result = cli::run(parsed);
            let code = cli::exit_code(&result);
            (code, result.unwrap_or_else(|e| e.to_string()))
        }
        Err(e) => (if e.use_stderr() { 1 } else { 0 }, e.to_string()),
    }
}

#[pymodule]
fn sedfusion_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(linear_pooling, m)?)?;
    m.add_function(wrap_pyfunction!(median_filter, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(score_events, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}

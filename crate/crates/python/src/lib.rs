//! Python bindings: geometry, record parsing, scoring, selection, evaluation
//! and the simulated campaigns.

use std::path::PathBuf;

use detal::evaluation::{self, ApVariant, LearningCurve};
use detal::records::{self, ParseOptions, DEFAULT_CONFIDENCE_FLOOR};
use detal::scoring::{self, MethodName, TightnessSource};
use detal::selection::{self, UndefinedPlacement};
use detal::sim::{self, ExperimentConfig, SynthWorldConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: detal::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn placement(s: &str) -> PyResult<UndefinedPlacement> {
    match s {
        "last" => Ok(UndefinedPlacement::Last),
        "first" => Ok(UndefinedPlacement::First),
        _ => Err(PyValueError::new_err(format!(
            "undefined must be `last` or `first`, got `{s}`"
        ))),
    }
}

fn ap_variant(s: &str) -> PyResult<ApVariant> {
    match s {
        "interpolated" => Ok(ApVariant::Interpolated),
        "prefix" => Ok(ApVariant::PrefixPrecision),
        _ => Err(PyValueError::new_err(format!(
            "variant must be `interpolated` or `prefix`, got `{s}`"
        ))),
    }
}

fn method_name(s: &str) -> PyResult<MethodName> {
    s.parse().map_err(err)
}

fn curve(name: &str, points: Vec<(usize, f64)>) -> PyResult<LearningCurve> {
    LearningCurve::new(name, points).map_err(err)
}

#[pyclass(name = "BBox", module = "pydetal", frozen, eq, from_py_object)]
#[derive(Clone, PartialEq)]
struct PyBBox(detal::BBox);

#[pymethods]
impl PyBBox {
    #[new]
    fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> PyResult<Self> {
        detal::BBox::new(x_min, y_min, x_max, y_max).map(PyBBox).map_err(err)
    }

    #[getter]
    fn coords(&self) -> (f64, f64, f64, f64) {
        let [a, b, c, d] = self.0.coords();
        (a, b, c, d)
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn iou(&self, other: &PyBBox) -> f64 {
        self.0.iou(&other.0)
    }

    fn __repr__(&self) -> String {
        let [a, b, c, d] = self.0.coords();
        format!("BBox({a}, {b}, {c}, {d})")
    }
}

#[pyfunction]
fn iou(a: &PyBBox, b: &PyBBox) -> f64 {
    detal::iou(&a.0, &b.0)
}

/// One image's detector output, as read from a pool file line.
#[pyclass(name = "ImageRecord", module = "pydetal", frozen, from_py_object)]
#[derive(Clone)]
struct PyImageRecord(records::ImageRecord);

#[pymethods]
impl PyImageRecord {
    /// Parses one JSON line; raises ValueError on invalid records.
    #[staticmethod]
    #[pyo3(signature = (line, confidence_floor = DEFAULT_CONFIDENCE_FLOOR, num_classes = None))]
    fn parse(line: &str, confidence_floor: f64, num_classes: Option<usize>) -> PyResult<Self> {
        let opts = ParseOptions {
            confidence_floor,
            num_classes,
        };
        records::parse_record_with(line, &opts)
            .map(|p| PyImageRecord(p.record))
            .map_err(err)
    }

    #[getter]
    fn image_id(&self) -> &str {
        &self.0.image_id
    }

    #[getter]
    fn size(&self) -> (u32, u32) {
        (self.0.width, self.0.height)
    }

    #[getter]
    fn num_detections(&self) -> usize {
        self.0.reference.len()
    }

    #[getter]
    fn num_noise_levels(&self) -> usize {
        self.0.noisy.len()
    }

    #[getter]
    fn has_ground_truth(&self) -> bool {
        self.0.ground_truth.is_some()
    }

    /// Reference boxes with their `P_max`.
    fn detections(&self) -> Vec<(PyBBox, f64)> {
        self.0.reference.iter().map(|d| (PyBBox(d.bbox), d.p_max())).collect()
    }

    fn to_json(&self) -> String {
        self.0.to_json_line()
    }

    fn __repr__(&self) -> String {
        format!(
            "ImageRecord({:?}, {} detections, {} noise levels)",
            self.0.image_id,
            self.0.reference.len(),
            self.0.noisy.len()
        )
    }
}

/// Loads a pool file; returns the records and any ingest warnings.
#[pyfunction]
#[pyo3(signature = (path, confidence_floor = DEFAULT_CONFIDENCE_FLOOR, num_classes = None))]
fn load_pool(
    path: PathBuf,
    confidence_floor: f64,
    num_classes: Option<usize>,
) -> PyResult<(Vec<PyImageRecord>, Vec<String>)> {
    let opts = ParseOptions {
        confidence_floor,
        num_classes,
    };
    let pool = records::Pool::load(&path, &opts).map_err(err)?;
    Ok((pool.records.into_iter().map(PyImageRecord).collect(), pool.warnings))
}

#[pyfunction]
fn u_image(record: &PyImageRecord) -> Option<f64> {
    scoring::u_image(&record.0)
}

#[pyfunction]
#[pyo3(signature = (record, ground_truth = false))]
fn t_image(record: &PyImageRecord, ground_truth: bool) -> Option<f64> {
    let source = if ground_truth {
        TightnessSource::GroundTruth
    } else {
        TightnessSource::Proposal
    };
    scoring::t_image(&record.0, source)
}

#[pyfunction]
fn s_box(record: &PyImageRecord, index: usize) -> PyResult<Option<f64>> {
    let d = record
        .0
        .reference
        .get(index)
        .ok_or_else(|| PyValueError::new_err(format!("no detection {index}")))?;
    Ok(scoring::s_box(d, &record.0.noisy))
}

#[pyfunction]
fn s_image(record: &PyImageRecord) -> Option<f64> {
    scoring::s_image(&record.0)
}

fn build_method(method: &str, lambda_: f64, lambda_ls: f64, lambda_lt: f64, seed: u64) -> PyResult<scoring::Method> {
    let m = scoring::Method {
        name: method_name(method)?,
        lambda: lambda_,
        lambda_ls,
        lambda_lt,
        seed,
    };
    m.validate().map_err(err)?;
    Ok(m)
}

/// Informativeness of every record; `None` where the method is undefined.
#[pyfunction]
#[pyo3(signature = (records, method, lambda_ = 1.0, lambda_ls = 1.0, lambda_lt = 1.0, seed = 0))]
fn score(
    records: Vec<PyImageRecord>,
    method: &str,
    lambda_: f64,
    lambda_ls: f64,
    lambda_lt: f64,
    seed: u64,
) -> PyResult<Vec<(String, Option<f64>)>> {
    let m = build_method(method, lambda_, lambda_ls, lambda_lt, seed)?;
    let recs: Vec<records::ImageRecord> = records.into_iter().map(|r| r.0).collect();
    Ok(scoring::score_records(&m, &recs)
        .into_iter()
        .map(|s| (s.image_id, s.value))
        .collect())
}

fn to_scores(scores: Vec<(String, Option<f64>)>) -> Vec<scoring::Score> {
    scores
        .into_iter()
        .map(|(image_id, value)| scoring::Score {
            image_id,
            method: MethodName::Classification,
            value,
        })
        .collect()
}

/// Image ids by descending score, undefined scores grouped last (or first).
#[pyfunction]
#[pyo3(signature = (scores, undefined = "last"))]
fn rank(scores: Vec<(String, Option<f64>)>, undefined: &str) -> PyResult<Vec<String>> {
    selection::rank(&to_scores(scores), placement(undefined)?).map_err(err)
}

#[pyfunction]
fn overlap_ratio(a: Vec<String>, b: Vec<String>) -> PyResult<f64> {
    selection::overlap_ratio(&a, &b).map_err(err)
}

/// Labeled/unlabeled split of a pool across selection rounds.
#[pyclass(name = "CampaignState", module = "pydetal")]
struct PyCampaignState(selection::CampaignState);

#[pymethods]
impl PyCampaignState {
    #[new]
    #[pyo3(signature = (pool_ids, initial = Vec::new()))]
    fn new(pool_ids: Vec<String>, initial: Vec<String>) -> PyResult<Self> {
        selection::CampaignState::new(&pool_ids, &initial)
            .map(PyCampaignState)
            .map_err(err)
    }

    /// Moves the `k` best unlabeled images to the labeled set and returns them.
    #[pyo3(signature = (scores, k, undefined = "last"))]
    fn select_round(&mut self, scores: Vec<(String, Option<f64>)>, k: usize, undefined: &str) -> PyResult<Vec<String>> {
        let (next, selected) = self
            .0
            .select_round(&to_scores(scores), k, placement(undefined)?)
            .map_err(err)?;
        self.0 = next;
        Ok(selected)
    }

    #[getter]
    fn labeled(&self) -> Vec<String> {
        self.0.labeled.clone()
    }

    #[getter]
    fn unlabeled(&self) -> Vec<String> {
        self.0.unlabeled.iter().cloned().collect()
    }

    /// `(round, selected ids)` for every round so far.
    #[getter]
    fn history(&self) -> Vec<(usize, Vec<String>)> {
        self.0.history.iter().map(|r| (r.round, r.selected.clone())).collect()
    }
}

/// AP from `(confidence, is_true_positive)` pairs and the ground-truth count.
#[pyfunction]
#[pyo3(signature = (hits, gt_count, variant = "interpolated"))]
fn average_precision(hits: Vec<(f64, bool)>, gt_count: usize, variant: &str) -> PyResult<Option<f64>> {
    Ok(evaluation::ap_from_hits(&hits, gt_count, ap_variant(variant)?))
}

/// Relative label saving of `method` against `passive`; curves are
/// `(labels, mAP)` points with strictly increasing labels.
#[pyfunction]
fn relative_saving<'py>(
    py: Python<'py>,
    passive: Vec<(usize, f64)>,
    method: Vec<(usize, f64)>,
) -> PyResult<Bound<'py, PyDict>> {
    let report = evaluation::relative_saving(&curve("passive", passive)?, &curve("method", method)?).map_err(err)?;
    let out = PyDict::new(py);
    let points: Vec<(usize, f64, Option<f64>)> = report.points.iter().map(|p| (p.labels, p.map, p.saving)).collect();
    out.set_item("points", points)?;
    out.set_item("average", report.average)?;
    out.set_item("flagged", report.flagged)?;
    Ok(out)
}

/// Runs simulated campaigns on a synthetic world with `hard_classes` of
/// `num_classes` classes made difficult. Returns the seed-averaged learning
/// curve of every method.
#[pyfunction]
#[pyo3(signature = (
    methods,
    initial,
    batch,
    rounds,
    seeds,
    num_images = 400,
    num_classes = 5,
    hard_classes = 2,
    world_seed = 0,
    num_test_images = 200,
))]
#[allow(clippy::too_many_arguments)]
fn simulate_campaigns<'py>(
    py: Python<'py>,
    methods: Vec<String>,
    initial: usize,
    batch: usize,
    rounds: usize,
    seeds: Vec<u64>,
    num_images: usize,
    num_classes: usize,
    hard_classes: usize,
    world_seed: u64,
    num_test_images: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let names = methods.iter().map(|m| method_name(m)).collect::<PyResult<Vec<_>>>()?;
    let mut world_cfg = SynthWorldConfig::with_hard_classes(num_images, num_classes, hard_classes, world_seed);
    world_cfg.num_test_images = num_test_images;
    let cfg = ExperimentConfig::new(&names, initial, batch, rounds, seeds);
    let result = py
        .detach(|| {
            let world = sim::generate_world(&world_cfg)?;
            sim::run_experiment(&world, &cfg)
        })
        .map_err(err)?;
    let out = PyDict::new(py);
    for c in &result.mean_curves {
        out.set_item(&c.method, c.points.clone())?;
    }
    Ok(out)
}

#[pymodule]
fn pydetal(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBBox>()?;
    m.add_class::<PyImageRecord>()?;
    m.add_class::<PyCampaignState>()?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(load_pool, m)?)?;
    m.add_function(wrap_pyfunction!(u_image, m)?)?;
    m.add_function(wrap_pyfunction!(t_image, m)?)?;
    m.add_function(wrap_pyfunction!(s_box, m)?)?;
    m.add_function(wrap_pyfunction!(s_image, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(rank, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(relative_saving, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_campaigns, m)?)?;
    m.add(
        "METHODS",
        MethodName::ALL.iter().map(|n| n.as_str()).collect::<Vec<_>>(),
    )?;
    Ok(())
}

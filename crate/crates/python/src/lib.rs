//! Python bindings: shot analysis, pattern mining, constrained clustering,
//! the diarization pipeline and the scoring functions.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use scenediar::constrained_hac::{self, ConstraintSet, DendrogramForest, DistanceMatrix, Instance};
use scenediar::embedding_space::{self, LabeledEmbedding};
use scenediar::eval;
use scenediar::io;
use scenediar::pattern_miner::{self, ShotSequence};
use scenediar::pipeline::{self, Diarization, Mode, PipelineConfig, PipelineInputs, ShotInput};
use scenediar::shot_analysis::{self, RgbImage, ShotConfig, ShotLabeling};
use scenediar::synth::{self, SyntheticEpisodeConfig};

fn py_err(e: scenediar::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn shot_config(
    tau1: f64,
    tau2: f64,
    grid: (usize, usize),
    bins: (usize, usize, usize),
    lookback: Option<usize>,
) -> PyResult<ShotConfig> {
    let config = ShotConfig {
        cut_threshold: tau1,
        similarity_threshold: tau2,
        block_rows: grid.0,
        block_cols: grid.1,
        bins_h: bins.0,
        bins_s: bins.1,
        bins_v: bins.2,
        lookback_shots: lookback,
    };
    config.validate().map_err(py_err)?;
    Ok(config)
}

fn diarization(labels: BTreeMap<String, String>) -> Diarization {
    Diarization { mode: None, labels }
}

/// Flat HSV bin index of one RGB pixel.
#[pyfunction]
#[pyo3(signature = (rgb, bins = (8, 4, 4)))]
fn hsv_bin(rgb: (u8, u8, u8), bins: (usize, usize, usize)) -> PyResult<usize> {
    let config = shot_config(0.5, 0.8, (1, 1), bins, None)?;
    Ok(config.bins().bin_of([rgb.0, rgb.1, rgb.2]))
}

/// Per-block HSV histograms of an RGB image given as packed bytes.
#[pyfunction]
#[pyo3(signature = (width, height, data, grid = (5, 6), bins = (8, 4, 4)))]
fn block_histograms(
    width: usize,
    height: usize,
    data: Vec<u8>,
    grid: (usize, usize),
    bins: (usize, usize, usize),
) -> PyResult<Vec<Vec<f64>>> {
    let config = shot_config(0.5, 0.8, grid, bins, None)?;
    let image = RgbImage::new(width, height, data).map_err(py_err)?;
    let hist = shot_analysis::compute_block_histograms(&image, &config).map_err(py_err)?;
    Ok(hist.blocks().map(<[f64]>::to_vec).collect())
}

/// Shots of a directory of PPM frames as dicts with a `label` entry.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (frame_dir, tau1 = 0.5, tau2 = 0.8, fps = 25.0, grid = (5, 6), bins = (8, 4, 4), lookback = None))]
fn detect_shots(
    py: Python<'_>,
    frame_dir: PathBuf,
    tau1: f64,
    tau2: f64,
    fps: f64,
    grid: (usize, usize),
    bins: (usize, usize, usize),
    lookback: Option<usize>,
) -> PyResult<Vec<Py<PyAny>>> {
    let config = shot_config(tau1, tau2, grid, bins, lookback)?;
    let (shots, labeling) = py
        .detach(|| -> scenediar::Result<_> {
            let frames = shot_analysis::load_frame_dir(&frame_dir, fps, &config)?;
            let shots = shot_analysis::detect_cuts(&frames, &config)?;
            let labeling = shot_analysis::detect_similar_shots(&shots, &frames, &config)?;
            Ok((shots, labeling))
        })
        .map_err(py_err)?;
    let records = io::shot_records(&shots, &labeling).map_err(py_err)?;
    records.iter().map(|r| to_py(py, r)).collect()
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (text,))?.unbind())
}

type PatternTuple = (Vec<u32>, Vec<(usize, usize)>);

/// Dialogue patterns of a shot-label string.
///
/// Returns dicts with `labels` and `occurrences` as `(start, end)` shot
/// positions, inclusive.
#[pyfunction]
#[pyo3(signature = (labels, extended = false, merge = true))]
fn extract_patterns(labels: Vec<u32>, extended: bool, merge: bool) -> Vec<PatternTuple> {
    let seq = ShotSequence::from_labels(labels);
    let mut ps = pattern_miner::extract_patterns(&seq, extended);
    if merge {
        ps = pattern_miner::merge_patterns(&ps);
    }
    ps.patterns
        .iter()
        .map(|p| {
            (
                p.labels.iter().copied().collect(),
                p.occurrences
                    .iter()
                    .map(|o| (o.start_pos, o.end_pos))
                    .collect(),
            )
        })
        .collect()
}

/// Within-class covariance of labeled training vectors.
#[pyfunction]
fn within_class_covariance(
    vectors: Vec<Vec<f64>>,
    speakers: Vec<String>,
) -> PyResult<Vec<Vec<f64>>> {
    if vectors.len() != speakers.len() {
        return Err(PyValueError::new_err(
            "vectors and speakers differ in length",
        ));
    }
    let training: Vec<LabeledEmbedding> = vectors
        .into_iter()
        .zip(speakers)
        .enumerate()
        .map(|(i, (vector, speaker))| LabeledEmbedding {
            segment_id: i.to_string(),
            speaker,
            vector,
        })
        .collect();
    let w = embedding_space::compute_within_class_cov(&training).map_err(py_err)?;
    Ok(w.matrix
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect())
}

fn dmatrix(rows: &[Vec<f64>]) -> PyResult<nalgebra::DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// Mahalanobis distance under `w + epsilon * I`.
#[pyfunction]
#[pyo3(signature = (a, b, w, epsilon = 0.0))]
fn mahalanobis(a: Vec<f64>, b: Vec<f64>, w: Vec<Vec<f64>>, epsilon: f64) -> PyResult<f64> {
    embedding_space::mahalanobis(&a, &b, &dmatrix(&w)?, epsilon).map_err(py_err)
}

/// Linear map `(W + epsilon I)^(-1/2)`.
#[pyclass(module = "pyscenediar")]
struct Whitener {
    inner: embedding_space::Whitener,
}

#[pymethods]
impl Whitener {
    #[new]
    #[pyo3(signature = (w, epsilon = 0.0))]
    fn new(w: Vec<Vec<f64>>, epsilon: f64) -> PyResult<Self> {
        Ok(Whitener {
            inner: embedding_space::Whitener::new(&dmatrix(&w)?, epsilon).map_err(py_err)?,
        })
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply(&x).map_err(py_err)
    }
}

/// Dendrogram forest from constrained Ward agglomeration.
#[pyclass(module = "pyscenediar")]
struct Forest {
    inner: DendrogramForest,
    vectors: Vec<Vec<f64>>,
}

#[pymethods]
impl Forest {
    /// `(left, right, height, node)` per merge.
    #[getter]
    fn merges(&self) -> Vec<(usize, usize, f64, usize)> {
        self.inner
            .merges
            .iter()
            .map(|m| (m.left, m.right, m.height, m.node))
            .collect()
    }

    #[getter]
    fn num_trees(&self) -> usize {
        self.inner.num_trees()
    }

    fn leaves_under(&self, node: usize) -> PyResult<Vec<usize>> {
        if node >= self.inner.nodes.len() {
            return Err(PyValueError::new_err(format!("no node {node}")));
        }
        Ok(self.inner.leaves_under(node))
    }

    /// Silhouette cut of every tree; cluster ids by first appearance.
    fn cut(&self) -> PyResult<Vec<usize>> {
        let distances = DistanceMatrix::euclidean(&self.vectors);
        Ok(constrained_hac::cut_forest(&self.inner, &distances)
            .map_err(py_err)?
            .labels)
    }

    /// Nested node records as a JSON string.
    fn export_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.export())
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

#[pyfunction]
#[pyo3(signature = (vectors, cannot_link = Vec::new(), masses = None))]
fn agglomerate(
    py: Python<'_>,
    vectors: Vec<Vec<f64>>,
    cannot_link: Vec<(usize, usize)>,
    masses: Option<Vec<f64>>,
) -> PyResult<Forest> {
    let instances = match masses {
        Some(m) if m.len() != vectors.len() => {
            return Err(PyValueError::new_err("masses and vectors differ in length"))
        }
        Some(m) => vectors
            .iter()
            .zip(m)
            .map(|(v, w)| Instance::with_mass(v.clone(), w))
            .collect::<scenediar::Result<Vec<_>>>()
            .map_err(py_err)?,
        None => vectors.iter().map(|v| Instance::new(v.clone())).collect(),
    };
    let constraints = ConstraintSet::from_pairs(cannot_link).map_err(py_err)?;
    let inner = py
        .detach(|| constrained_hac::agglomerate(&instances, &constraints))
        .map_err(py_err)?;
    Ok(Forest { inner, vectors })
}

/// Mean silhouette of a labeling under Euclidean distances.
#[pyfunction]
fn silhouette(labels: Vec<usize>, vectors: Vec<Vec<f64>>) -> PyResult<f64> {
    constrained_hac::silhouette_score(&labels, &DistanceMatrix::euclidean(&vectors)).map_err(py_err)
}

/// DER of `hypothesis` against `reference`, both `segment_id -> label`,
/// weighted by `durations` (`segment_id -> seconds`).
#[pyfunction]
fn der(
    py: Python<'_>,
    reference: BTreeMap<String, String>,
    hypothesis: BTreeMap<String, String>,
    durations: BTreeMap<String, f64>,
) -> PyResult<Py<PyAny>> {
    let segments: Vec<pipeline::SpeechSegment> = durations
        .iter()
        .map(|(id, &d)| pipeline::SpeechSegment::new(id.clone(), 0.0, d))
        .collect();
    let report =
        eval::der(&diarization(reference), &diarization(hypothesis), &segments).map_err(py_err)?;
    to_py(py, &report)
}

/// Cut-detection `(precision, recall, f1)` with a frame tolerance.
#[pyfunction]
#[pyo3(signature = (reference, hypothesis, tolerance = 1))]
fn f1_cuts(reference: Vec<u64>, hypothesis: Vec<u64>, tolerance: u64) -> (f64, f64, f64) {
    let r = eval::f1_cuts(&reference, &hypothesis, tolerance);
    (r.precision, r.recall, r.f1)
}

/// Shot-similarity `(precision, recall, f1)` between two aligned labelings.
#[pyfunction]
fn f1_similarity(reference: Vec<u32>, hypothesis: Vec<u32>) -> PyResult<(f64, f64, f64)> {
    let r = eval::f1_similarity(
        &ShotLabeling { labels: reference },
        &ShotLabeling { labels: hypothesis },
    )
    .map_err(py_err)?;
    Ok((r.precision, r.recall, r.f1))
}

/// A generated episode held in memory.
#[pyclass(module = "pyscenediar")]
struct SyntheticEpisode {
    inner: synth::SyntheticEpisode,
}

#[pymethods]
impl SyntheticEpisode {
    /// Keyword arguments override the generator defaults, e.g.
    /// `SyntheticEpisode(seed=3, separation=8.0)`.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(py: Python<'_>, kwargs: Option<&Bound<'_, pyo3::types::PyDict>>) -> PyResult<Self> {
        let config: SyntheticEpisodeConfig = match kwargs {
            Some(k) => {
                let text: String = py.import("json")?.call_method1("dumps", (k,))?.extract()?;
                serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?
            }
            None => SyntheticEpisodeConfig::default(),
        };
        let inner = synth::generate_synthetic_episode(&config).map_err(py_err)?;
        Ok(SyntheticEpisode { inner })
    }

    #[getter]
    fn shot_labels(&self) -> Vec<u32> {
        self.inner.labeling.labels.clone()
    }

    /// `(segment_id, start, end, speaker)` per segment.
    #[getter]
    fn segments(&self) -> Vec<(String, f64, f64, Option<String>)> {
        self.inner
            .segments
            .iter()
            .map(|s| {
                (
                    s.segment_id.clone(),
                    s.start,
                    s.end,
                    s.reference_speaker.clone(),
                )
            })
            .collect()
    }

    #[getter]
    fn reference(&self) -> BTreeMap<String, String> {
        self.inner.reference().labels
    }

    #[getter]
    fn durations(&self) -> BTreeMap<String, f64> {
        self.inner
            .segments
            .iter()
            .map(|s| (s.segment_id.clone(), s.duration()))
            .collect()
    }

    /// Runs the pipeline and returns `segment_id -> speaker label`.
    #[pyo3(signature = (mode = "cst2s", extended = false, normalize = false))]
    fn diarize(
        &self,
        py: Python<'_>,
        mode: &str,
        extended: bool,
        normalize: bool,
    ) -> PyResult<BTreeMap<String, String>> {
        let mode: Mode = mode.parse().map_err(py_err)?;
        let ep = &self.inner;
        let inputs = PipelineInputs {
            shots: ShotInput::Labeled {
                shots: ep.shots.clone(),
                labeling: ep.labeling.clone(),
            },
            segments: ep.segments.clone(),
            embeddings: ep.embeddings.clone(),
            training: Some(ep.training.clone()),
        };
        let config = PipelineConfig {
            mode,
            extended,
            normalize,
            ..Default::default()
        };
        let run = py
            .detach(|| pipeline::run_pipeline(&inputs, &config))
            .map_err(py_err)?;
        Ok(run.diarization.labels)
    }

    /// Writes the episode in the file formats read by the CLI.
    fn write(&self, out_dir: PathBuf) -> PyResult<()> {
        io::write_synthetic(&out_dir, &self.inner).map_err(py_err)
    }
}

/// Runs the pipeline on files and writes its artifacts to `out_dir`.
///
/// Returns `segment_id -> speaker label`.
#[pyfunction]
#[pyo3(signature = (shots, segments, embeddings, out_dir, train = None, mode = "cst2s", extended = false, normalize = false))]
#[allow(clippy::too_many_arguments)]
fn diarize_files(
    py: Python<'_>,
    shots: PathBuf,
    segments: PathBuf,
    embeddings: PathBuf,
    out_dir: PathBuf,
    train: Option<PathBuf>,
    mode: &str,
    extended: bool,
    normalize: bool,
) -> PyResult<BTreeMap<String, String>> {
    let mode: Mode = mode.parse().map_err(py_err)?;
    py.detach(|| -> scenediar::Result<_> {
        let (shots, labeling) = io::read_shots(&shots)?;
        let segs = io::read_segments(&segments)?;
        let inputs = PipelineInputs {
            shots: ShotInput::Labeled { shots, labeling },
            segments: segs.clone(),
            embeddings: io::read_embeddings(&embeddings)?,
            training: train.as_deref().map(io::read_training).transpose()?,
        };
        let config = PipelineConfig {
            mode,
            extended,
            normalize,
            ..Default::default()
        };
        let run = pipeline::run_pipeline(&inputs, &config)?;
        io::write_artifacts(&out_dir, "episode", &run, &segs)?;
        Ok(run.diarization.labels)
    })
    .map_err(py_err)
}

#[pymodule]
fn pyscenediar(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(hsv_bin, m)?)?;
    m.add_function(wrap_pyfunction!(block_histograms, m)?)?;
    m.add_function(wrap_pyfunction!(detect_shots, m)?)?;
    m.add_function(wrap_pyfunction!(extract_patterns, m)?)?;
    m.add_function(wrap_pyfunction!(within_class_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(mahalanobis, m)?)?;
    m.add_function(wrap_pyfunction!(agglomerate, m)?)?;
    m.add_function(wrap_pyfunction!(silhouette, m)?)?;
    m.add_function(wrap_pyfunction!(der, m)?)?;
    m.add_function(wrap_pyfunction!(f1_cuts, m)?)?;
    m.add_function(wrap_pyfunction!(f1_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(diarize_files, m)?)?;
    m.add_class::<Whitener>()?;
    m.add_class::<Forest>()?;
    m.add_class::<SyntheticEpisode>()?;
    Ok(())
}

//! Python bindings for the codec, configuration, model and fusion block.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use teamnet::codec::{self, CodecParams, FrameRgb};
use teamnet::fusion::{team_forward, Arrangement, FusionConfig, TeamBlock};
use teamnet::harness::config::RunConfig;
use teamnet::harness::experiment::run_experiment;
use teamnet::harness::files::dir_digest;
use teamnet::harness::synth::synth_dataset;
use teamnet::harness::HarnessError;
use teamnet::network::{self, Dataset};
use teamnet::sampler::{preprocess, sample_test_clips, ClipSample};
use teamnet::tensor::{Graph, ParamStore, Tensor};

fn err(e: impl Into<HarnessError>) -> PyErr {
    let e = e.into();
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// Frames are packed RGB bytes, row major, `width * height * 3` long.
#[pyclass(name = "GopStream", module = "teamnet_py")]
struct PyGopStream {
    inner: codec::GopStream,
}

#[pymethods]
impl PyGopStream {
    #[staticmethod]
    #[pyo3(signature = (frames, width, height, gop_size=4, block_size=16, search_range=4))]
    fn encode(
        frames: Vec<Vec<u8>>,
        width: usize,
        height: usize,
        gop_size: usize,
        block_size: usize,
        search_range: usize,
    ) -> PyResult<Self> {
        let frames = frames
            .into_iter()
            .map(|d| FrameRgb::new(width, height, d))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let params = CodecParams {
            gop_size,
            block_size,
            search_range,
        };
        let inner = codec::encode_stream(&frames, params).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: codec::deserialize(data).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let bytes = std::fs::read(path).map_err(err)?;
        Self::from_bytes(&bytes)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let bytes = codec::serialize(&self.inner).map_err(err)?;
        Ok(PyBytes::new(py, &bytes))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let bytes = codec::serialize(&self.inner).map_err(err)?;
        std::fs::write(path, bytes).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.header.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.header.height()
    }

    #[getter]
    fn gop_count(&self) -> usize {
        self.inner.gop_count()
    }

    #[getter]
    fn frame_count(&self) -> usize {
        self.inner.frame_count()
    }

    fn gop_start(&self, gop: usize) -> PyResult<usize> {
        self.gop(gop)?;
        Ok(self.inner.gop_start(gop))
    }

    /// Every frame, in display order.
    fn decode<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyBytes>>> {
        let frames = codec::decode_full(&self.inner).map_err(err)?;
        Ok(frames.iter().map(|f| PyBytes::new(py, f.data())).collect())
    }

    /// Reads GOP `gop` up to P-frame `p_index` without reconstructing it.
    fn decode_partial(&self, gop: usize, p_index: usize) -> PyResult<PyPartialSample> {
        let inner = codec::decode_gop_partial(self.gop(gop)?, p_index).map_err(err)?;
        Ok(PyPartialSample { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "GopStream({}x{}, {} frames, {} GOPs)",
            self.width(),
            self.height(),
            self.frame_count(),
            self.gop_count()
        )
    }
}

impl PyGopStream {
    fn gop(&self, g: usize) -> PyResult<&codec::Gop> {
        self.inner
            .gops
            .get(g)
            .ok_or_else(|| PyIndexError::new_err(format!("GOP {g} out of range")))
    }
}

/// I-frame, accumulated motion and accumulated residual for one P-frame.
#[pyclass(name = "PartialSample", module = "teamnet_py")]
struct PyPartialSample {
    inner: codec::PartialSample,
}

#[pymethods]
impl PyPartialSample {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn p_index(&self) -> usize {
        self.inner.p_index
    }

    #[getter]
    fn iframe<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.iframe.data())
    }

    /// Per-pixel `(dx, dy)` motion, row major.
    #[getter]
    fn motion(&self) -> Vec<(i32, i32)> {
        self.inner.acc_mv.chunks_exact(2).map(|c| (c[0], c[1])).collect()
    }

    /// Signed per-channel residual, row major.
    #[getter]
    fn residual(&self) -> Vec<i32> {
        self.inner.acc_residual.clone()
    }

    fn mv_at(&self, x: usize, y: usize) -> PyResult<(i32, i32)> {
        if x >= self.width() || y >= self.height() {
            return Err(PyIndexError::new_err(format!("pixel ({x}, {y}) out of range")));
        }
        Ok(self.inner.mv_at(x, y))
    }

    /// The target frame rebuilt from the sample.
    fn reconstruct<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let f = codec::reconstruct_from_partial(&self.inner).map_err(err)?;
        Ok(PyBytes::new(py, f.data()))
    }
}

#[pyclass(name = "RunConfig", module = "teamnet_py")]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (ini=None))]
    fn new(ini: Option<&str>) -> PyResult<Self> {
        let inner = match ini {
            Some(s) => RunConfig::from_ini_str(s).map_err(err)?,
            None => RunConfig::default(),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: RunConfig::load(&path).map_err(err)?,
        })
    }

    fn to_ini(&self) -> String {
        self.inner.to_ini_string()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    /// A copy with the training, sampling and synthesis seeds set.
    fn with_seed(&self, seed: u64) -> Self {
        let mut inner = self.inner.clone().with_seed(seed);
        inner.synth.seed = seed;
        Self { inner }
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.network.num_classes
    }

    #[getter]
    fn arrangement(&self) -> &'static str {
        self.inner.network.team.arrangement.label()
    }

    #[getter]
    fn insertion_stages(&self) -> Vec<usize> {
        self.inner.network.insertion_stages.clone()
    }

    #[getter]
    fn crop(&self) -> usize {
        self.inner.sampler.crop
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(hash={})", &self.inner.hash()[..12])
    }
}

#[pyclass(name = "Model", module = "teamnet_py")]
struct PyModel {
    inner: network::Model,
    cfg: RunConfig,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (config, seed=0))]
    fn new(config: &PyRunConfig, seed: u64) -> PyResult<Self> {
        let inner = network::Model::new(config.inner.network.clone(), seed).map_err(err)?;
        Ok(Self {
            inner,
            cfg: config.inner.clone(),
        })
    }

    #[staticmethod]
    fn load(config: &PyRunConfig, path: PathBuf) -> PyResult<Self> {
        let inner = network::Model::load(config.inner.network.clone(), &path).map_err(err)?;
        Ok(Self {
            inner,
            cfg: config.inner.clone(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    /// Class logits for a video under the test protocol.
    fn logits(&self, py: Python<'_>, stream: &PyGopStream) -> PyResult<Vec<f64>> {
        py.detach(|| {
            let clips = sample_test_clips(&stream.inner, 0, &self.cfg.sampler).map_err(err)?;
            let clip = ClipSample::concat_time(clips).map_err(err)?;
            let batch = preprocess(&[clip], &self.cfg.sampler.norm).map_err(err)?;
            Ok(self.inner.logits(&batch).map_err(err)?.into_data())
        })
    }

    fn predict(&self, py: Python<'_>, stream: &PyGopStream) -> PyResult<usize> {
        Ok(network::predict_label(&self.logits(py, stream)?))
    }

    /// Accuracy on a manifest of `.gops` files.
    fn evaluate(&self, py: Python<'_>, manifest: PathBuf) -> PyResult<f64> {
        py.detach(|| {
            let data = Dataset::load(&manifest).map_err(err)?;
            let report =
                network::evaluate(&self.inner, &data, &self.cfg.sampler, self.cfg.eval_batch).map_err(err)?;
            Ok(report.accuracy)
        })
    }
}

/// One fusion block applied to three `(N, C_m, H, W)` feature maps given as
/// flat lists. Weights are drawn from `seed`.
#[pyfunction]
#[pyo3(signature = (arrangement, features, channels, batch, height, width, reduction=16, seed=0))]
#[allow(clippy::too_many_arguments)]
fn team_fuse(
    arrangement: &str,
    features: [Vec<f64>; 3],
    channels: [usize; 3],
    batch: usize,
    height: usize,
    width: usize,
    reduction: usize,
    seed: u64,
) -> PyResult<[Vec<f64>; 3]> {
    let arrangement =
        Arrangement::parse(arrangement).ok_or_else(|| PyValueError::new_err(format!("unknown arrangement {arrangement:?}")))?;
    let mut cfg = FusionConfig::new(channels);
    cfg.arrangement = arrangement;
    cfg.reduction = reduction;
    let mut store = ParamStore::new();
    let block = TeamBlock::new(cfg, "team", &mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    let mut g = Graph::new();
    let mut xs = Vec::with_capacity(3);
    for (data, &c) in features.into_iter().zip(&channels) {
        let t = Tensor::new(&[batch, c, height, width], data).map_err(err)?;
        xs.push(g.input(t).map_err(err)?);
    }
    let out = team_forward(&mut g, &store, &block, [xs[0], xs[1], xs[2]]).map_err(err)?;
    Ok(out.map(|v| g.value(v).data().to_vec()))
}

#[pyfunction]
fn arrangements() -> Vec<&'static str> {
    Arrangement::ALL.iter().map(|a| a.label()).collect()
}

/// Writes the synthetic dataset and returns its manifests and digest.
#[pyfunction]
fn synth<'py>(py: Python<'py>, config: &PyRunConfig, out_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let (out, digest) = py.detach(|| {
        let out = synth_dataset(&config.inner.synth, &out_dir).map_err(err)?;
        let digest = dir_digest(&out_dir).map_err(err)?;
        Ok::<_, PyErr>((out, digest))
    })?;
    let d = PyDict::new(py);
    d.set_item("train_manifest", out.train_manifest)?;
    d.set_item("test_manifest", out.test_manifest)?;
    d.set_item("digest", digest)?;
    Ok(d)
}

/// Trains and evaluates one configuration; returns `(accuracy, checkpoint)`.
#[pyfunction]
fn train(
    py: Python<'_>,
    config: &PyRunConfig,
    train_manifest: PathBuf,
    test_manifest: PathBuf,
    out_dir: PathBuf,
) -> PyResult<(f64, PathBuf)> {
    py.detach(|| {
        let train_set = Dataset::load(&train_manifest).map_err(err)?;
        let test_set = Dataset::load(&test_manifest).map_err(err)?;
        let r = run_experiment(&config.inner, &train_set, &test_set, &out_dir).map_err(err)?;
        Ok((r.eval.accuracy, r.checkpoint))
    })
}

#[pymodule]
fn teamnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGopStream>()?;
    m.add_class::<PyPartialSample>()?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(team_fuse, m)?)?;
    m.add_function(wrap_pyfunction!(arrangements, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}

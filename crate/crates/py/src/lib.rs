//! Python bindings: geometry types, mask extraction, and the
//! generate / train / infer / run pipeline over dataset directories.

use std::path::PathBuf;

use attnvo::data::{synth_generate, Dataset, SyntheticSceneConfig};
use attnvo::geometry::{self, Vec3};
use attnvo::harness::{self, cli, VoConfig};
use attnvo::learn::{self, TrainConfig};
use attnvo::vision;
use pyo3::exceptions::{PyFileNotFoundError, PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: attnvo::Error) -> PyErr {
    use attnvo::Error as E;
    let msg = e.to_string();
    match e {
        E::Io(_) => PyIOError::new_err(msg),
        E::NotFound(_) => PyFileNotFoundError::new_err(msg),
        E::RunDegenerate { .. } | E::TrainingDiverged { .. } => PyRuntimeError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn array3(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn rows(m: &geometry::Mat3) -> [[f64; 3]; 3] {
    [0, 1, 2].map(|r| [0, 1, 2].map(|c| m[(r, c)]))
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(text: Option<&str>) -> PyResult<T> {
    match text {
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(e.to_string())),
        None => Ok(T::default()),
    }
}

/// Unit quaternion, scalar first.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Quaternion(geometry::Quaternion);

#[pymethods]
impl Quaternion {
    #[new]
    fn new(w: f64, x: f64, y: f64, z: f64) -> PyResult<Self> {
        geometry::Quaternion::new(w, x, y, z).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn exp(rotvec: [f64; 3]) -> Self {
        Self(geometry::Quaternion::exp(&vec3(rotvec)))
    }

    fn log(&self) -> [f64; 3] {
        array3(&self.0.log())
    }

    fn to_list(&self) -> [f64; 4] {
        self.0.to_array()
    }

    fn matrix(&self) -> [[f64; 3]; 3] {
        rows(geometry::quat_to_rotmat(&self.0).matrix())
    }

    fn angle_to(&self, other: &Quaternion) -> f64 {
        self.0.angle_to(&other.0)
    }

    fn rotate(&self, v: [f64; 3]) -> [f64; 3] {
        array3(&self.0.rotate(&vec3(v)))
    }

    fn __repr__(&self) -> String {
        let [w, x, y, z] = self.0.to_array();
        format!("Quaternion({w}, {x}, {y}, {z})")
    }
}

/// Rigid transform mapping local coordinates into the parent frame.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct Pose(geometry::Pose);

#[pymethods]
impl Pose {
    #[new]
    fn new(rotation: &Quaternion, translation: [f64; 3]) -> PyResult<Self> {
        geometry::Pose::new(rotation.0, vec3(translation)).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn identity() -> Self {
        Self(geometry::Pose::identity())
    }

    #[getter]
    fn rotation(&self) -> Quaternion {
        Quaternion(self.0.rotation)
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        array3(&self.0.translation)
    }

    fn compose(&self, other: &Pose) -> Pose {
        Pose(self.0.compose(&other.0))
    }

    fn inverse(&self) -> Pose {
        Pose(self.0.inverse())
    }

    fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        array3(&self.0.transform_point(&vec3(p)))
    }

    fn __repr__(&self) -> String {
        format!("Pose(rotation={:?}, translation={:?})", self.0.rotation.to_array(), self.translation())
    }
}

#[pyfunction]
fn relative_pose(a: &Pose, b: &Pose) -> Pose {
    Pose(geometry::relative_pose(&a.0, &b.0))
}

#[pyfunction]
fn so3_exp(rotvec: [f64; 3]) -> [[f64; 3]; 3] {
    rows(geometry::so3_exp(&vec3(rotvec)).matrix())
}

#[pyfunction]
fn so3_log(matrix: [[f64; 3]; 3]) -> PyResult<[f64; 3]> {
    let m = geometry::Mat3::from_fn(|r, c| matrix[r][c]);
    let r = geometry::RotationMatrix::new(m).map_err(to_py)?;
    geometry::so3_log(&r).map(|v| array3(&v)).map_err(to_py)
}

/// Block-grid feature search space.
#[pyclass(frozen, from_py_object)]
#[derive(Clone)]
struct BinaryMask(vision::BinaryMask);

#[pymethods]
impl BinaryMask {
    #[getter]
    fn rows(&self) -> usize {
        self.0.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.0.cols()
    }

    #[getter]
    fn block_size(&self) -> usize {
        self.0.block_size()
    }

    fn grid(&self) -> Vec<bool> {
        self.0.grid().to_vec()
    }

    fn kept_fraction(&self) -> f64 {
        self.0.kept_fraction()
    }

    fn reduction(&self) -> f64 {
        vision::mask_reduction(&self.0)
    }

    fn __repr__(&self) -> String {
        format!("BinaryMask({}x{}, block {}, kept {})", self.0.rows(), self.0.cols(), self.0.block_size(), self.0.kept_count())
    }
}

/// Keeps the `ceil(rho * rows * cols)` highest scores, row-major input.
#[pyfunction]
#[pyo3(signature = (scores, rows, cols, rho = 0.51, block_size = 16))]
fn extract_mask(scores: Vec<f64>, rows: usize, cols: usize, rho: f64, block_size: usize) -> PyResult<BinaryMask> {
    let t = learn::Tensor::new(&[rows, cols], scores).map_err(to_py)?;
    learn::extract_mask(&t, rho, block_size).map(BinaryMask).map_err(to_py)
}

/// Summary of one VO run.
#[pyclass(frozen)]
struct TrajectoryReport(harness::TrajectoryReport);

#[pymethods]
impl TrajectoryReport {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        harness::TrajectoryReport::from_json(text).map(Self).map_err(to_py)
    }

    #[getter]
    fn frames(&self) -> usize {
        self.0.frames
    }

    #[getter]
    fn ate_rmse(&self) -> f64 {
        self.0.ate_rmse
    }

    #[getter]
    fn mask_reduction(&self) -> f64 {
        self.0.mask_reduction
    }

    #[getter]
    fn skipped_pairs(&self) -> usize {
        self.0.skipped_pairs
    }

    /// `(name, value)` rows in CSV order.
    fn metrics(&self) -> Vec<(String, f64)> {
        self.0.metrics().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(to_py)
    }

    fn to_csv(&self) -> String {
        self.0.to_csv()
    }

    fn __repr__(&self) -> String {
        format!("TrajectoryReport(frames={}, ate_rmse={:.4})", self.0.frames, self.0.ate_rmse)
    }
}

/// Renders a synthetic dataset into `out`; returns mean visible points per frame.
#[pyfunction]
#[pyo3(signature = (out, config_json = None))]
fn synth_gen(out: PathBuf, config_json: Option<&str>) -> PyResult<f64> {
    let cfg: SyntheticSceneConfig = parse_json(config_json)?;
    synth_generate(&cfg, &out).map(|s| s.mean_visible()).map_err(to_py)
}

/// Trains on a dataset, writes the checkpoint, returns the loss history.
#[pyfunction]
#[pyo3(signature = (dataset, out, config_json = None))]
fn train(py: Python<'_>, dataset: PathBuf, out: PathBuf, config_json: Option<&str>) -> PyResult<Vec<f64>> {
    let cfg: TrainConfig = parse_json(config_json)?;
    py.detach(|| {
        let ds = Dataset::load(&dataset)?;
        let windows = ds.training_windows(cfg.window_size)?;
        let outcome = learn::train(&cfg, &windows)?;
        learn::write_checkpoint(&out, &outcome.params, cfg.rng_seed, Some(&cfg))?;
        Ok(outcome.loss_history)
    })
    .map_err(to_py)
}

/// One mask per frame from a checkpoint; also exported to `out` when given.
#[pyfunction]
#[pyo3(signature = (dataset, ckpt, rho = 0.51, downscale = None, out = None))]
fn infer_masks(
    py: Python<'_>,
    dataset: PathBuf,
    ckpt: PathBuf,
    rho: f64,
    downscale: Option<usize>,
    out: Option<PathBuf>,
) -> PyResult<Vec<BinaryMask>> {
    py.detach(|| {
        let (params, header) = learn::read_checkpoint(&ckpt)?;
        let factor = downscale.or(header.train.map(|t| t.downscale)).unwrap_or(1);
        let ds = Dataset::load(&dataset)?;
        let masks = learn::infer_masks(&params, &ds.images, rho, factor)?;
        if let Some(dir) = &out {
            cli::write_masks(dir, &masks)?;
        }
        Ok(masks)
    })
    .map(|ms| ms.into_iter().map(BinaryMask).collect())
    .map_err(to_py)
}

/// Monocular VO over a dataset, optionally restricted by a masks directory.
#[pyfunction]
#[pyo3(signature = (dataset, masks = None, detector = "fast", seed = 0, config_json = None))]
fn run_vo(
    py: Python<'_>,
    dataset: PathBuf,
    masks: Option<PathBuf>,
    detector: &str,
    seed: u64,
    config_json: Option<&str>,
) -> PyResult<TrajectoryReport> {
    let mut cfg: VoConfig = parse_json(config_json)?;
    cfg.detector = cli::parse_detector(detector, &cfg.detector).map_err(to_py)?;
    cfg.seed = seed;
    py.detach(|| {
        let ds = Dataset::load(&dataset)?;
        let masks = masks.map(|dir| cli::read_masks(&dir, ds.images.len())).transpose()?;
        harness::run_vo(&ds, &cfg, masks.as_deref()).map(|(_, r)| r)
    })
    .map(TrajectoryReport)
    .map_err(to_py)
}

#[pymodule]
#[pyo3(name = "attnvo")]
fn attnvo_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Quaternion>()?;
    m.add_class::<Pose>()?;
    m.add_class::<BinaryMask>()?;
    m.add_class::<TrajectoryReport>()?;
    m.add_function(wrap_pyfunction!(relative_pose, m)?)?;
    m.add_function(wrap_pyfunction!(so3_exp, m)?)?;
    m.add_function(wrap_pyfunction!(so3_log, m)?)?;
    m.add_function(wrap_pyfunction!(extract_mask, m)?)?;
    m.add_function(wrap_pyfunction!(synth_gen, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(infer_masks, m)?)?;
    m.add_function(wrap_pyfunction!(run_vo, m)?)?;
    Ok(())
}

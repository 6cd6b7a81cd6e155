//! Python module `manifold_calib_py`.

use std::path::PathBuf;

use manifold_calib::calibration::{self, CalibrationProblem, OptimizeConfig};
use manifold_calib::contact::{self, AssemblyGeometry, ContactObservation, Frames};
use manifold_calib::kinematics::{self, JointVector, KinematicChain, KinematicParams};
use manifold_calib::pipeline::{Pipeline, PipelineConfig};
use manifold_calib::projection::{self, MlpModel};
use manifold_calib::se3::{self, HomTransform, Pose6};
use manifold_calib::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use nalgebra::Matrix4;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(format!("{}: {}", other.kind(), other)),
    }
}

fn pose(v: [f64; 6]) -> Pose6 {
    Pose6::from_array(v)
}

fn params(chain: &KinematicChain, strain: f64, bias: Option<Vec<f64>>) -> PyResult<KinematicParams> {
    KinematicParams::new(strain, bias.unwrap_or_else(|| vec![0.0; chain.n()])).map_err(err)
}

/// Pose matrix (4x4, row-major) of `[x, y, z, alpha, beta, gamma]`.
#[pyfunction]
fn pose_to_matrix(p: [f64; 6]) -> [[f64; 4]; 4] {
    let m = se3::pose_to_matrix(&pose(p)).to_matrix();
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

#[pyfunction]
fn matrix_to_pose(m: [[f64; 4]; 4]) -> PyResult<[f64; 6]> {
    let mat = HomTransform::from_matrix(&Matrix4::from_fn(|i, j| m[i][j]));
    se3::matrix_to_pose(&mat).map(|p| p.to_array()).map_err(err)
}

#[pyclass(name = "KinematicChain", module = "manifold_calib_py", skip_from_py_object)]
#[derive(Clone)]
struct PyChain {
    inner: KinematicChain,
}

#[pymethods]
impl PyChain {
    /// The 7-joint reference arm.
    #[staticmethod]
    fn reference() -> Self {
        PyChain {
            inner: KinematicChain::reference(),
        }
    }

    #[staticmethod]
    fn from_json(s: &str) -> PyResult<Self> {
        Ok(PyChain {
            inner: KinematicChain::from_json(s).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    /// Flange pose for measured joints `q` (deg).
    #[pyo3(signature = (q, strain=0.0, bias=None))]
    fn forward(&self, q: Vec<f64>, strain: f64, bias: Option<Vec<f64>>) -> PyResult<[f64; 6]> {
        let p = params(&self.inner, strain, bias)?;
        let t = kinematics::forward_kinematics(&self.inner, &q, &p).map_err(err)?;
        t.to_pose().map(|p| p.to_array()).map_err(err)
    }

    /// Flange pose and its 6 x (n+1) Jacobian over `[r, b_1..b_n]`.
    #[pyo3(signature = (q, strain=0.0, bias=None))]
    fn gradient(&self, q: Vec<f64>, strain: f64, bias: Option<Vec<f64>>) -> PyResult<([f64; 6], Vec<Vec<f64>>)> {
        let p = params(&self.inner, strain, bias)?;
        let (pose, jac) = kinematics::fk_gradient(&self.inner, &q, &p).map_err(err)?;
        let rows = (0..6).map(|k| (0..jac.ncols()).map(|j| jac[(k, j)]).collect()).collect();
        Ok((pose.to_array(), rows))
    }
}

/// Signed clearance (mm) of the reference peg at a hole-frame pose.
#[pyfunction]
#[pyo3(signature = (p, geometry=None))]
fn clearance(p: [f64; 6], geometry: Option<&str>) -> PyResult<f64> {
    let g = match geometry {
        Some(s) => serde_json::from_str::<AssemblyGeometry>(s).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => AssemblyGeometry::reference(),
    };
    g.validate().map_err(err)?;
    Ok(contact::clearance_fn(&g, &pose(p)))
}

#[pyfunction]
fn generate_manifold(n: usize, seed: u64) -> PyResult<Vec<[f64; 6]>> {
    let m = contact::generate_manifold(&AssemblyGeometry::reference(), n, seed).map_err(err)?;
    Ok(m.poses.iter().map(|p| p.to_array()).collect())
}

#[pyfunction]
fn nearest_neighbor(query: [f64; 6], manifold: Vec<[f64; 6]>) -> PyResult<[f64; 6]> {
    let m = contact::ManifoldSet {
        poses: manifold.into_iter().map(pose).collect(),
    };
    projection::nearest_neighbor(&pose(query), &m).map(|p| p.to_array()).map_err(err)
}

#[pyclass(name = "MlpModel", module = "manifold_calib_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: MlpModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (layer_dims, seed=0))]
    fn new(layer_dims: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(PyModel {
            inner: MlpModel::new(&layer_dims, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyModel {
            inner: manifold_calib::io::read_model(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        manifold_calib::io::write_json(&path, &self.inner.to_file()).map_err(err)
    }

    #[getter]
    fn layer_dims(&self) -> Vec<usize> {
        self.inner.layer_dims()
    }

    fn forward(&self, p: [f64; 6]) -> [f64; 6] {
        self.inner.forward(&pose(p)).to_array()
    }

    /// Projection and its 6x6 input Jacobian `[out][in]`.
    fn project(&self, p: [f64; 6]) -> ([f64; 6], [[f64; 6]; 6]) {
        let (out, jac) = projection::project(&self.inner, &pose(p));
        (out.to_array(), jac)
    }
}

/// Estimates `(r_hat, b_hat, final_loss)` from joint observations.
#[pyfunction]
#[pyo3(signature = (model, observations, max_iterations=400, chain=None))]
fn calibrate(
    model: &PyModel,
    observations: Vec<Vec<f64>>,
    max_iterations: usize,
    chain: Option<&PyChain>,
) -> PyResult<(f64, Vec<f64>, f64)> {
    let chain = chain.map(|c| c.inner.clone()).unwrap_or_else(KinematicChain::reference);
    let obs = observations
        .into_iter()
        .map(|q| ContactObservation { q: JointVector(q) })
        .collect();
    let problem = CalibrationProblem::new(chain, Frames::reference(), obs, model.inner.clone()).map_err(err)?;
    let cfg = OptimizeConfig {
        max_iterations,
        ..OptimizeConfig::default()
    };
    let r = calibration::optimize(&problem, &cfg).map_err(err)?;
    let loss = r.history[r.best_iteration].total;
    Ok((r.r_hat, r.b_hat, loss))
}

/// Staged pipeline bound to a config (JSON text) and an output directory.
#[pyclass(name = "Pipeline", module = "manifold_calib_py")]
struct PyPipeline {
    inner: Pipeline,
}

#[pymethods]
impl PyPipeline {
    #[new]
    #[pyo3(signature = (out_dir, config_json=None))]
    fn new(out_dir: PathBuf, config_json: Option<&str>) -> PyResult<Self> {
        let cfg = match config_json {
            Some(s) => PipelineConfig::from_json(s).map_err(err)?,
            None => PipelineConfig::default(),
        };
        Ok(PyPipeline {
            inner: Pipeline::new(cfg, out_dir).map_err(err)?,
        })
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.inner.config_hash().to_string()
    }

    fn generate_manifold(&self) -> PyResult<usize> {
        Ok(self.inner.generate_manifold().map_err(err)?.len())
    }

    fn build_dataset(&self) -> PyResult<usize> {
        Ok(self.inner.build_dataset().map_err(err)?.len())
    }

    /// Held-out `(mm, deg)` projection error.
    fn train(&self) -> PyResult<(f64, f64)> {
        let (_, s) = self.inner.train().map_err(err)?;
        Ok((s.holdout_error.positional_mm, s.holdout_error.rotational_deg))
    }

    fn simulate(&self) -> PyResult<usize> {
        Ok(self.inner.simulate().map_err(err)?.len())
    }

    fn calibrate(&self) -> PyResult<(f64, Vec<f64>)> {
        let r = self.inner.calibrate().map_err(err)?;
        Ok((r.r_hat, r.b_hat))
    }

    /// Error report as a JSON string.
    fn evaluate(&self) -> PyResult<String> {
        let r = self.inner.evaluate().map_err(err)?;
        Ok(serde_json::to_string(&r.error_report).expect("report serializes"))
    }
}

#[pymodule]
fn manifold_calib_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(pose_to_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(matrix_to_pose, m)?)?;
    m.add_function(wrap_pyfunction!(clearance, m)?)?;
    m.add_function(wrap_pyfunction!(generate_manifold, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_neighbor, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_class::<PyChain>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyPipeline>()?;
    Ok(())
}

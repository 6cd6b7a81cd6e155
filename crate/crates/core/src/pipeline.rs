//! Staged pipeline: manifold, dataset, model, observations, estimate, report.
//!
//! Each stage reads its inputs from and writes its artifact to the output
//! directory, so any stage can be rerun on its own.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{evaluate, optimize, CalibrationProblem, CalibrationResult, ErrorReport, OptimizeConfig};
use crate::contact::{
    generate_manifold, reference_coarse_postures, settle_postures, simulate_observations, AssemblyGeometry,
    ContactObservation, Frames, IkConfig, ManifoldSet,
};
use crate::error::{Error, Result};
use crate::gradcheck::{run_suite, GradCheckReport};
use crate::io::{self, Provenance};
use crate::kinematics::{load_chain, KinematicChain, KinematicParams};
use crate::projection::{
    build_dataset, projection_error, train, KdTree, MlpModel, ProjectionError, ProjectionSample, TrainConfig,
    TrainReport,
};
use crate::se3::Pose6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Optional JSON inputs; the reference setup is used when absent.
    pub geometry: Option<PathBuf>,
    pub chain: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    /// Artifact file names inside the output directory.
    pub manifold: PathBuf,
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub loss_curve: PathBuf,
    pub observations: PathBuf,
    pub results: PathBuf,
    pub report: PathBuf,
    pub gradcheck: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            geometry: None,
            chain: None,
            frames: None,
            manifold: "manifold.csv".into(),
            dataset: "dataset.csv".into(),
            model: "model.json".into(),
            loss_curve: "loss_curve.csv".into(),
            observations: "observations.jsonl".into(),
            results: "results.json".into(),
            report: "report.json".into(),
            gradcheck: "gradcheck.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifoldStage {
    pub size: usize,
}

impl Default for ManifoldStage {
    fn default() -> Self {
        ManifoldStage { size: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetStage {
    pub size: usize,
}

impl Default for DatasetStage {
    fn default() -> Self {
        DatasetStage { size: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainStage {
    pub hidden_layers: Vec<usize>,
    /// Its `seed` is replaced by one derived from the global seed.
    pub optimizer: TrainConfig,
}

impl Default for TrainStage {
    fn default() -> Self {
        TrainStage {
            hidden_layers: vec![256; 4],
            optimizer: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateStage {
    pub observations: usize,
    pub truth: KinematicParams,
    /// Peg pose the IK seed postures are settled on.
    pub nominal_pose: Pose6,
    /// Coarse IK seed postures (deg); the reference set when absent.
    pub postures: Option<Vec<Vec<f64>>>,
    pub ik: IkConfig,
}

impl Default for SimulateStage {
    fn default() -> Self {
        SimulateStage {
            observations: 3000,
            truth: KinematicParams {
                strain: 0.05,
                bias: vec![5.0; 7],
            },
            nominal_pose: Pose6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0),
            postures: None,
            ik: IkConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckStage {
    pub instances: usize,
    /// Observations used for the loss-gradient suite.
    pub observations: usize,
}

impl Default for GradcheckStage {
    fn default() -> Self {
        GradcheckStage {
            instances: 50,
            observations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub manifold: ManifoldStage,
    pub dataset: DatasetStage,
    pub train: TrainStage,
    pub simulate: SimulateStage,
    /// Its `seed` is replaced by one derived from the global seed.
    pub calibrate: OptimizeConfig,
    pub gradcheck: GradcheckStage,
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifold.size == 0 || self.dataset.size == 0 || self.simulate.observations == 0 {
            return Err(Error::Validation("stage sizes must be positive".into()));
        }
        self.train.optimizer.validate()?;
        self.calibrate.validate()?;
        self.simulate.truth.validate()
    }
}

/// Per-stage seed: the first 8 bytes of SHA-256 over the global seed and the
/// stage name.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub seed: u64,
    pub report: TrainReport,
    pub holdout_error: ProjectionError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub config_hash: String,
    pub seed: u64,
    pub r_hat: f64,
    pub b_hat: Vec<f64>,
    pub loss_total: Vec<f64>,
    pub loss_positional: Vec<f64>,
    pub loss_rotational: Vec<f64>,
    pub result: CalibrationResult,
    pub error_report: ErrorReport,
    pub config: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config_hash: String,
    pub seed: u64,
    pub error_report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckFile {
    pub config_hash: String,
    pub seed: u64,
    pub passed: bool,
    pub report: GradCheckReport,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub out_dir: PathBuf,
    pub chain: KinematicChain,
    pub geometry: AssemblyGeometry,
    pub frames: Frames,
    hash: String,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out_dir: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let chain = match &config.paths.chain {
            Some(p) => load_chain(p)?,
            None => KinematicChain::reference(),
        };
        let geometry: AssemblyGeometry = match &config.paths.geometry {
            Some(p) => io::read_json(p)?,
            None => AssemblyGeometry::reference(),
        };
        geometry.validate()?;
        let frames: Frames = match &config.paths.frames {
            Some(p) => io::read_json(p)?,
            None => Frames::reference(),
        };
        if config.simulate.truth.n() != chain.n() {
            return Err(Error::DimensionMismatch {
                expected: chain.n(),
                actual: config.simulate.truth.n(),
            });
        }
        let hash = config.hash();
        Ok(Pipeline {
            config,
            out_dir: out_dir.into(),
            chain,
            geometry,
            frames,
            hash,
        })
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            config_hash: self.hash.clone(),
            seed: self.config.seed,
        }
    }

    pub fn artifact(&self, name: &Path) -> PathBuf {
        self.out_dir.join(name)
    }

    fn seed(&self, stage: &str) -> u64 {
        stage_seed(self.config.seed, stage)
    }

    pub fn generate_manifold(&self) -> Result<ManifoldSet> {
        let m = generate_manifold(&self.geometry, self.config.manifold.size, self.seed("manifold"))?;
        io::write_manifold(&self.artifact(&self.config.paths.manifold), &m, &self.provenance())?;
        log::info!("manifold: {} poses", m.len());
        Ok(m)
    }

    pub fn build_dataset(&self) -> Result<Vec<ProjectionSample>> {
        let m = io::read_manifold(&self.artifact(&self.config.paths.manifold))?;
        let ds = build_dataset(&m, self.config.dataset.size, self.seed("dataset"))?;
        io::write_dataset(&self.artifact(&self.config.paths.dataset), &ds, &self.provenance())?;
        log::info!("dataset: {} samples", ds.len());
        Ok(ds)
    }

    pub fn train(&self) -> Result<(MlpModel, TrainSummary)> {
        let ds = io::read_dataset(&self.artifact(&self.config.paths.dataset))?;
        let seed = self.seed("train");
        let mut dims = vec![6];
        dims.extend(&self.config.train.hidden_layers);
        dims.push(6);
        let mut model = MlpModel::new(&dims, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let cfg = TrainConfig {
            seed,
            ..self.config.train.optimizer.clone()
        };
        let report = train(&mut model, &ds, &cfg)?;
        let hold: Vec<ProjectionSample> = report.holdout_indices.iter().map(|&i| ds[i]).collect();
        let holdout_error = projection_error(&model, &hold);
        log::info!(
            "held-out projection error: {:.4} mm, {:.4} deg",
            holdout_error.positional_mm,
            holdout_error.rotational_deg
        );
        let prov = self.provenance();
        io::write_model(&self.artifact(&self.config.paths.model), &model, &prov)?;
        io::write_loss_curve(&self.artifact(&self.config.paths.loss_curve), &report, &prov)?;
        Ok((
            model,
            TrainSummary {
                config_hash: prov.config_hash,
                seed: prov.seed,
                report,
                holdout_error,
            },
        ))
    }

    pub fn postures(&self) -> Result<Vec<Vec<f64>>> {
        let coarse = self
            .config
            .simulate
            .postures
            .clone()
            .unwrap_or_else(reference_coarse_postures);
        settle_postures(&self.chain, &self.frames, &self.config.simulate.nominal_pose, &coarse)
    }

    pub fn simulate(&self) -> Result<Vec<ContactObservation>> {
        let s = &self.config.simulate;
        let obs = simulate_observations(
            &self.chain,
            &self.geometry,
            &self.frames,
            &self.postures()?,
            &s.truth,
            s.observations,
            self.seed("simulate"),
            &s.ik,
        )?;
        io::write_observations(&self.artifact(&self.config.paths.observations), &obs, &self.provenance())?;
        log::info!("simulated {} observations", obs.len());
        Ok(obs)
    }

    fn problem(&self) -> Result<CalibrationProblem> {
        let obs = io::read_observations(&self.artifact(&self.config.paths.observations))?;
        let model = io::read_model(&self.artifact(&self.config.paths.model))?;
        let mut problem = CalibrationProblem::new(self.chain.clone(), self.frames, obs, model)?;
        let manifold_path = self.artifact(&self.config.paths.manifold);
        if manifold_path.exists() {
            problem = problem.with_support(KdTree::from_poses(&io::read_manifold(&manifold_path)?.poses));
        }
        Ok(problem)
    }

    pub fn calibrate(&self) -> Result<ResultFile> {
        let problem = self.problem()?;
        let cfg = OptimizeConfig {
            seed: self.seed("calibrate"),
            ..self.config.calibrate.clone()
        };
        let result = optimize(&problem, &cfg)?;
        let error_report = evaluate(&result, &self.config.simulate.truth)?;
        log::info!(
            "estimate: r = {:.6}, b = {:?} after {} iterations",
            result.r_hat,
            result.b_hat,
            result.iterations
        );
        let prov = self.provenance();
        let file = ResultFile {
            config_hash: prov.config_hash,
            seed: prov.seed,
            r_hat: result.r_hat,
            b_hat: result.b_hat.clone(),
            loss_total: result.history.iter().map(|l| l.total).collect(),
            loss_positional: result.history.iter().map(|l| l.positional).collect(),
            loss_rotational: result.history.iter().map(|l| l.rotational).collect(),
            result,
            error_report,
            config: self.config.clone(),
        };
        io::write_json(&self.artifact(&self.config.paths.results), &file)?;
        Ok(file)
    }

    pub fn evaluate(&self) -> Result<ReportFile> {
        let results: ResultFile = io::read_json(&self.artifact(&self.config.paths.results))?;
        let error_report = evaluate(&results.result, &self.config.simulate.truth)?;
        let prov = self.provenance();
        let file = ReportFile {
            config_hash: prov.config_hash,
            seed: prov.seed,
            error_report,
        };
        io::write_json(&self.artifact(&self.config.paths.report), &file)?;
        Ok(file)
    }

    /// FK, MLP and projection suites always; the loss suite when a model and
    /// observations are available.
    pub fn gradcheck(&self) -> Result<GradcheckFile> {
        let gc = &self.config.gradcheck;
        let seed = self.seed("gradcheck");
        let model_path = self.artifact(&self.config.paths.model);
        let obs_path = self.artifact(&self.config.paths.observations);
        let report = if model_path.exists() && obs_path.exists() {
            let mut obs = io::read_observations(&obs_path)?;
            obs.truncate(gc.observations.max(1));
            let problem = CalibrationProblem::new(self.chain.clone(), self.frames, obs, io::read_model(&model_path)?)?;
            run_suite(&self.chain, &problem.model, Some(&problem), gc.instances, seed)?
        } else {
            let model = if model_path.exists() {
                io::read_model(&model_path)?
            } else {
                MlpModel::new(&[6, 32, 32, 6], &mut ChaCha8Rng::seed_from_u64(seed))?
            };
            run_suite(&self.chain, &model, None, gc.instances, seed)?
        };
        let prov = self.provenance();
        let file = GradcheckFile {
            config_hash: prov.config_hash,
            seed: prov.seed,
            passed: report.passed(),
            report,
        };
        io::write_json(&self.artifact(&self.config.paths.gradcheck), &file)?;
        Ok(file)
    }

    pub fn run_all(&self) -> Result<ReportFile> {
        self.generate_manifold()?;
        self.build_dataset()?;
        self.train()?;
        self.simulate()?;
        self.calibrate()?;
        self.evaluate()
    }
}

/// Plain-text table of the recovery errors.
pub fn format_report(r: &ErrorReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<16} {:>14} {:>14} {:>14}", "parameter", "initial error", "final error", "fold");
    let _ = writeln!(
        s,
        "{:<16} {:>14.6} {:>14.6} {:>14.3}",
        "link strain", r.initial_strain_error, r.strain_abs_error, r.strain_fold_reduction
    );
    let _ = writeln!(
        s,
        "{:<16} {:>14.6} {:>14.6} {:>14.3}",
        "encoder bias", r.initial_bias_mae, r.bias_mae, r.bias_fold_reduction
    );
    s
}

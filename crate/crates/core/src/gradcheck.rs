//! Central-difference checks of every analytic derivative in the pipeline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibration_residuals, loss_and_gradient, CalibrationProblem};
use crate::error::Result;
use crate::kinematics::{fk_gradient, KinematicChain, KinematicParams};
use crate::projection::{train_gradient_check, MlpModel, ProjectionSample};
use crate::se3::{wrap_deg, Pose6};

/// `|a - b| / max(|a|, |b|)` over whole vectors (Euclidean norms).
pub fn vector_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst column error of the flange-pose Jacobian against central differences.
pub fn fk_gradient_error(chain: &KinematicChain, q: &[f64], params: &KinematicParams, h: f64) -> Result<f64> {
    let (_, jac) = fk_gradient(chain, q, params)?;
    let theta = params.to_vec();
    let mut worst = 0.0f64;
    for j in 0..theta.len() {
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        let (pp, _) = fk_gradient(chain, q, &KinematicParams::from_slice(&tp))?;
        let (pm, _) = fk_gradient(chain, q, &KinematicParams::from_slice(&tm))?;
        let (pp, pm) = (pp.to_array(), pm.to_array());
        let fd: Vec<f64> = (0..6)
            .map(|k| {
                let d = if k < 3 { pp[k] - pm[k] } else { wrap_deg(pp[k] - pm[k]) };
                d / (2.0 * h)
            })
            .collect();
        let an: Vec<f64> = (0..6).map(|k| jac[(k, j)]).collect();
        worst = worst.max(vector_relative_error(&an, &fd));
    }
    Ok(worst)
}

/// Worst row error of the model's input Jacobian against central differences.
pub fn input_jacobian_error(model: &MlpModel, pose: &Pose6, h: f64) -> f64 {
    let (_, jac) = model.forward_with_jacobian(pose);
    let x = pose.to_array();
    let mut fd = [[0.0; 6]; 6];
    for i in 0..6 {
        let mut xp = x;
        let mut xm = x;
        xp[i] += h;
        xm[i] -= h;
        let out = model.forward_batch(&[xp, xm]);
        for k in 0..6 {
            fd[k][i] = (out[0][k] - out[1][k]) / (2.0 * h);
        }
    }
    (0..6).map(|k| vector_relative_error(&jac[k], &fd[k])).fold(0.0, f64::max)
}

/// Central-difference steps for the loss check: strain, then biases (deg).
pub const LOSS_STEPS: (f64, f64) = (1e-7, 1e-6);

/// Error of the calibration-loss gradient against central differences, or
/// `None` when a residual changes sign inside the stencil (the L1 loss has a
/// kink there and the difference quotient is meaningless).
pub fn loss_gradient_error(problem: &CalibrationProblem, params: &KinematicParams) -> Result<Option<f64>> {
    let (_, grad) = loss_and_gradient(problem, params)?;
    let theta = params.to_vec();
    let l1 = |res: &[[f64; 6]]| res.iter().flatten().map(|v| v.abs()).sum::<f64>() / res.len() as f64;
    let mut fd = vec![0.0; theta.len()];
    for j in 0..theta.len() {
        let h = if j == 0 { LOSS_STEPS.0 } else { LOSS_STEPS.1 };
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        let rp = calibration_residuals(problem, &KinematicParams::from_slice(&tp))?;
        let rm = calibration_residuals(problem, &KinematicParams::from_slice(&tm))?;
        if rp.iter().flatten().zip(rm.iter().flatten()).any(|(a, b)| a * b <= 0.0) {
            return Ok(None);
        }
        fd[j] = (l1(&rp) - l1(&rm)) / (2.0 * h);
    }
    Ok(Some(vector_relative_error(&grad, &fd)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub instances: usize,
    pub max_relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Draws discarded because the stencil straddled a kink.
    #[serde(default)]
    pub skipped: usize,
}

impl SuiteResult {
    fn new(name: &str, errors: &[f64], tolerance: f64) -> Self {
        let max_relative_error = errors.iter().copied().fold(0.0, f64::max);
        SuiteResult {
            name: name.to_string(),
            instances: errors.len(),
            max_relative_error,
            tolerance,
            passed: errors.iter().all(|e| *e <= tolerance),
            skipped: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub suites: Vec<SuiteResult>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }
}

pub fn random_params(rng: &mut impl Rng, n: usize, max_strain: f64, max_bias: f64) -> KinematicParams {
    KinematicParams {
        strain: rng.gen_range(-max_strain..=max_strain),
        bias: (0..n).map(|_| rng.gen_range(-max_bias..=max_bias)).collect(),
    }
}

const MAX_KINK_SKIPS: usize = 1000;

/// FK, MLP weight, input-Jacobian and (if a problem is given) loss-gradient
/// checks on `instances` random cases each.
pub fn run_suite(
    chain: &KinematicChain,
    model: &MlpModel,
    problem: Option<&CalibrationProblem>,
    instances: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = chain.n();

    let mut fk = Vec::with_capacity(instances);
    for _ in 0..instances {
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-120.0..120.0)).collect();
        let params = random_params(&mut rng, n, 0.05, 5.0);
        fk.push(fk_gradient_error(chain, &q, &params, 1e-6)?);
    }

    let mut weights = Vec::with_capacity(instances);
    for _ in 0..instances {
        let small = MlpModel::new(&[6, 16, 16, 6], &mut rng)?;
        let s = ProjectionSample {
            input: Pose6::from_array([0; 6].map(|_: i32| rng.gen_range(-2.0..2.0))),
            target: Pose6::from_array([0; 6].map(|_: i32| rng.gen_range(-2.0..2.0))),
        };
        weights.push(train_gradient_check(&small, &s, 1e-5));
    }

    let mut jac = Vec::with_capacity(instances);
    for _ in 0..instances {
        let p: [f64; 6] = std::array::from_fn(|k| {
            model.norm.in_mean[k] + model.norm.in_std[k] * rng.gen_range(-1.5..1.5)
        });
        jac.push(input_jacobian_error(model, &Pose6::from_array(p), 1e-6));
    }

    let mut suites = vec![
        SuiteResult::new("fk_gradient", &fk, 1e-4),
        SuiteResult::new("mlp_weight_gradient", &weights, 1e-4),
        SuiteResult::new("projection_input_jacobian", &jac, 1e-4),
    ];
    if let Some(problem) = problem {
        let mut loss = Vec::with_capacity(instances);
        let mut skipped = 0;
        while loss.len() < instances && skipped < MAX_KINK_SKIPS {
            let params = random_params(&mut rng, n, 0.05, 5.0);
            match loss_gradient_error(problem, &params)? {
                Some(e) => loss.push(e),
                None => skipped += 1,
            }
        }
        let mut suite = SuiteResult::new("calibration_loss_gradient", &loss, 1e-3);
        suite.skipped = skipped;
        // Too few smooth draws to say anything counts as a failure.
        suite.passed &= loss.len() == instances;
        suites.push(suite);
    }
    Ok(GradCheckReport { suites })
}

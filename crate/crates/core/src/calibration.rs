//! Strain and bias estimation by descent on the projection distance.

use nalgebra::Matrix4;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contact::{ContactObservation, Frames};
use crate::error::{Error, Result};
use crate::kinematics::{fk_with_derivatives, KinematicChain, KinematicParams};
use crate::projection::{KdTree, MlpModel, EXTRAPOLATION_DISTANCE};
use crate::se3::{inverse, pose_differential, HomTransform, Pose6};

/// Fold reductions are capped here; a perfect recovery reports the cap.
pub const FOLD_CAP: f64 = 1e6;
/// Gradient components below this magnitude mark a flat direction.
pub const FLAT_GRADIENT: f64 = 1e-8;

pub struct CalibrationProblem {
    pub chain: KinematicChain,
    pub frames: Frames,
    pub observations: Vec<ContactObservation>,
    pub model: MlpModel,
    /// Stored manifold, used only to count extrapolated predictions.
    pub support: Option<KdTree>,
    hole_t_base: HomTransform,
    ee_t_peg: HomTransform,
}

impl CalibrationProblem {
    pub fn new(
        chain: KinematicChain,
        frames: Frames,
        observations: Vec<ContactObservation>,
        model: MlpModel,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Validation("calibration needs at least one observation".into()));
        }
        if let Some(o) = observations.iter().find(|o| o.q.len() != chain.n()) {
            return Err(Error::DimensionMismatch {
                expected: chain.n(),
                actual: o.q.len(),
            });
        }
        let dims = model.layer_dims();
        if dims[0] != 6 || dims[dims.len() - 1] != 6 {
            return Err(Error::Validation("projection model must map R^6 to R^6".into()));
        }
        Ok(CalibrationProblem {
            hole_t_base: inverse(&frames.base_t_hole()),
            ee_t_peg: frames.ee_t_peg(),
            chain,
            frames,
            observations,
            model,
            support: None,
        })
    }

    pub fn with_support(mut self, support: KdTree) -> Self {
        self.support = Some(support);
        self
    }

    pub fn n_params(&self) -> usize {
        self.chain.n() + 1
    }

    /// Predicted peg pose in the hole frame and its Jacobian `[pose][param]`
    /// with respect to `[r, b_1, .., b_n]`.
    fn pose_and_jacobian(&self, q: &[f64], params: &KinematicParams) -> Result<(Pose6, Vec<[f64; 6]>)> {
        let (flange, derivs) = fk_with_derivatives(&self.chain, q, params)?;
        let left = self.hole_t_base.to_matrix();
        let right = self.ee_t_peg.to_matrix();
        let h = HomTransform::from_matrix(&(left * flange.to_matrix() * right));
        let pose = h.to_pose()?;
        let cols = derivs
            .iter()
            .map(|d: &Matrix4<f64>| pose_differential(&h, &(left * d * right)))
            .collect::<Result<Vec<_>>>()?;
        Ok((pose, cols))
    }
}

/// `matrix_to_pose(inv(base_T_hole) * FK(q) * ee_T_peg)`.
pub fn predicted_contact_pose(problem: &CalibrationProblem, q: &[f64], params: &KinematicParams) -> Result<Pose6> {
    let flange = crate::kinematics::forward_kinematics(&problem.chain, q, params)?;
    problem.frames.hole_t_peg(&flange).to_pose()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub total: f64,
    /// Mean over observations of the translational L1 distance (mm).
    pub positional: f64,
    /// Mean over observations of the Euler-angle L1 distance (deg).
    pub rotational: f64,
}

/// Loss and its gradient over the observations selected by `idx`
/// (all when `None`). With `stop_gradient` the projection output is treated
/// as a constant.
pub fn loss_and_gradient_subset(
    problem: &CalibrationProblem,
    params: &KinematicParams,
    idx: Option<&[usize]>,
    stop_gradient: bool,
) -> Result<(LossValue, Vec<f64>)> {
    params.validate()?;
    let all: Vec<usize>;
    let idx = match idx {
        Some(i) => i,
        None => {
            all = (0..problem.observations.len()).collect();
            &all
        }
    };
    let per_obs = idx
        .par_iter()
        .map(|&i| problem.pose_and_jacobian(problem.observations[i].q.as_slice(), params))
        .collect::<Result<Vec<_>>>()?;
    let (poses, jacs): (Vec<[f64; 6]>, Vec<Vec<[f64; 6]>>) =
        per_obs.into_iter().map(|(p, j)| (p.to_array(), j)).unzip();
    let m = idx.len() as f64;
    let mut pos = 0.0;
    let mut rot = 0.0;
    let mut signs: Vec<[f64; 6]> = Vec::new();
    let (_, vjps) = problem.model.forward_vjp_with(&poses, |outs| {
        signs = poses
            .iter()
            .zip(outs)
            .map(|(p, o)| {
                std::array::from_fn(|k| {
                    let d = p[k] - o[k];
                    if k < 3 {
                        pos += d.abs();
                    } else {
                        rot += d.abs();
                    }
                    // Subgradient 0 at an exact zero.
                    if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        signs.clone()
    });
    let mut grad = vec![0.0; problem.n_params()];
    for ((s, v), cols) in signs.iter().zip(&vjps).zip(&jacs) {
        for (j, col) in cols.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..6 {
                let g = if stop_gradient { s[k] } else { s[k] - v[k] };
                acc += g * col[k];
            }
            grad[j] += acc / m;
        }
    }
    let value = LossValue {
        total: (pos + rot) / m,
        positional: pos / m,
        rotational: rot / m,
    };
    Ok((value, grad))
}

pub fn loss_and_gradient(problem: &CalibrationProblem, params: &KinematicParams) -> Result<(LossValue, Vec<f64>)> {
    loss_and_gradient_subset(problem, params, None, false)
}

/// Per-observation residuals `p - F(p)` at the predicted contact poses.
pub fn calibration_residuals(problem: &CalibrationProblem, params: &KinematicParams) -> Result<Vec<[f64; 6]>> {
    params.validate()?;
    let poses = problem
        .observations
        .iter()
        .map(|o| predicted_contact_pose(problem, o.q.as_slice(), params).map(|p| p.to_array()))
        .collect::<Result<Vec<_>>>()?;
    let outs = problem.model.forward_batch(&poses);
    Ok(poses.iter().zip(&outs).map(|(p, o)| std::array::from_fn(|k| p[k] - o[k])).collect())
}

pub fn calibration_loss(problem: &CalibrationProblem, params: &KinematicParams) -> Result<LossValue> {
    let res = calibration_residuals(problem, params)?;
    let (mut pos, mut rot) = (0.0, 0.0);
    for r in &res {
        pos += r[..3].iter().map(|v| v.abs()).sum::<f64>();
        rot += r[3..].iter().map(|v| v.abs()).sum::<f64>();
    }
    let m = res.len() as f64;
    Ok(LossValue {
        total: (pos + rot) / m,
        positional: pos / m,
        rotational: rot / m,
    })
}

/// Number of predicted poses farther than the extrapolation distance from
/// the stored manifold; zero without a stored manifold.
pub fn extrapolated_count(problem: &CalibrationProblem, params: &KinematicParams) -> Result<usize> {
    let Some(tree) = &problem.support else {
        return Ok(0);
    };
    let mut n = 0;
    for o in &problem.observations {
        let p = predicted_contact_pose(problem, o.q.as_slice(), params)?;
        let (_, d2) = tree.nearest(&p.to_array()).ok_or(Error::EmptyManifold)?;
        if d2.sqrt() > EXTRAPOLATION_DISTANCE {
            n += 1;
        }
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub strain_learning_rate: f64,
    /// Per degree of bias.
    pub bias_learning_rate: f64,
    pub max_iterations: usize,
    /// Stop when the loss changed by less than this over the last
    /// `window` iterations.
    pub tolerance: f64,
    pub window: usize,
    /// Observations drawn per iteration; all when `None`.
    pub subsample: Option<usize>,
    pub stop_gradient: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            strain_learning_rate: 1e-3,
            bias_learning_rate: 1e-1,
            max_iterations: 400,
            tolerance: 1e-6,
            window: 50,
            subsample: None,
            stop_gradient: false,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.strain_learning_rate > 0.0 && self.bias_learning_rate > 0.0) {
            return Err(Error::Validation("learning rates must be positive".into()));
        }
        if self.max_iterations == 0 || self.window == 0 {
            return Err(Error::Validation("max_iterations and window must be positive".into()));
        }
        if self.subsample == Some(0) {
            return Err(Error::Validation("subsample must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub r_hat: f64,
    pub b_hat: Vec<f64>,
    /// Loss at each iterate, before its update.
    pub history: Vec<LossValue>,
    /// Index into `history` of the returned iterate.
    pub best_iteration: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Parameter indices (`0` = strain, `i` = bias of joint `i`) whose
    /// gradient magnitude at the returned iterate is below `FLAT_GRADIENT`.
    pub flat_directions: Vec<usize>,
    pub extrapolated_initial: usize,
    pub extrapolated_final: usize,
}

impl CalibrationResult {
    pub fn params(&self) -> KinematicParams {
        KinematicParams {
            strain: self.r_hat,
            bias: self.b_hat.clone(),
        }
    }
}

/// Adam descent from zero strain and bias; returns the best-loss iterate.
pub fn optimize(problem: &CalibrationProblem, cfg: &OptimizeConfig) -> Result<CalibrationResult> {
    cfg.validate()?;
    let n = problem.n_params();
    let nobs = problem.observations.len();
    let mut theta = vec![0.0; n];
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let rates: Vec<f64> = (0..n)
        .map(|j| if j == 0 { cfg.strain_learning_rate } else { cfg.bias_learning_rate })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history: Vec<LossValue> = Vec::with_capacity(cfg.max_iterations);
    let mut best = (f64::INFINITY, 0usize, theta.clone());
    let mut best_grad = vec![0.0; n];
    let mut converged = false;

    for it in 0..cfg.max_iterations {
        let params = KinematicParams::from_slice(&theta);
        let subset: Option<Vec<usize>> = cfg
            .subsample
            .filter(|&k| k < nobs)
            .map(|k| {
                let mut v = sample(&mut rng, nobs, k).into_vec();
                v.sort_unstable();
                v
            });
        let (loss, grad) = loss_and_gradient_subset(problem, &params, subset.as_deref(), cfg.stop_gradient)?;
        if !loss.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss {
                step: it,
                detail: format!("loss {} at r = {}, b = {:?}", loss.total, params.strain, params.bias),
            });
        }
        history.push(loss);
        if loss.total < best.0 {
            best = (loss.total, it, theta.clone());
            best_grad = grad.clone();
        }
        log::debug!(
            "iter {:>4}  loss {:.6} (pos {:.6}, rot {:.6})  r {:+.5}",
            it,
            loss.total,
            loss.positional,
            loss.rotational,
            theta[0]
        );
        if it >= cfg.window && (history[it - cfg.window].total - loss.total).abs() < cfg.tolerance {
            converged = true;
            break;
        }
        if it + 1 == cfg.max_iterations {
            break;
        }
        let t = (it + 1) as i32;
        let (c1, c2) = (1.0 - cfg.beta1.powi(t), 1.0 - cfg.beta2.powi(t));
        for j in 0..n {
            m1[j] = cfg.beta1 * m1[j] + (1.0 - cfg.beta1) * grad[j];
            m2[j] = cfg.beta2 * m2[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
            theta[j] -= rates[j] * (m1[j] / c1) / ((m2[j] / c2).sqrt() + cfg.epsilon);
        }
    }

    let (_, best_it, best_theta) = best;
    let best_params = KinematicParams::from_slice(&best_theta);
    let flat_directions: Vec<usize> = best_grad
        .iter()
        .enumerate()
        .filter(|(_, g)| g.abs() < FLAT_GRADIENT)
        .map(|(j, _)| j)
        .collect();
    if !flat_directions.is_empty() {
        log::warn!("loss is flat along parameter(s) {:?}", flat_directions);
    }
    let extrapolated_initial = extrapolated_count(problem, &KinematicParams::zero(problem.chain.n()))?;
    let extrapolated_final = extrapolated_count(problem, &best_params)?;
    if extrapolated_final > 0 {
        log::warn!("{} predicted poses lie outside the trained region", extrapolated_final);
    }
    Ok(CalibrationResult {
        r_hat: best_params.strain,
        b_hat: best_params.bias,
        iterations: history.len(),
        history,
        best_iteration: best_it,
        converged,
        flat_directions,
        extrapolated_initial,
        extrapolated_final,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub strain_abs_error: f64,
    /// Mean absolute bias error (deg).
    pub bias_mae: f64,
    pub strain_fold_reduction: f64,
    pub bias_fold_reduction: f64,
    pub initial_strain_error: f64,
    pub initial_bias_mae: f64,
    pub bias_errors: Vec<f64>,
}

fn fold(initial: f64, final_: f64) -> f64 {
    if final_ <= 0.0 {
        return FOLD_CAP;
    }
    (initial / final_).min(FOLD_CAP)
}

/// Errors of the estimate against known truth and their reduction relative
/// to the zero initialization.
pub fn evaluate(result: &CalibrationResult, truth: &KinematicParams) -> Result<ErrorReport> {
    if result.b_hat.len() != truth.n() {
        return Err(Error::DimensionMismatch {
            expected: truth.n(),
            actual: result.b_hat.len(),
        });
    }
    let n = truth.n().max(1) as f64;
    let strain_abs_error = (result.r_hat - truth.strain).abs();
    let bias_errors: Vec<f64> = result.b_hat.iter().zip(&truth.bias).map(|(a, b)| (a - b).abs()).collect();
    let bias_mae = bias_errors.iter().sum::<f64>() / n;
    let initial_strain_error = truth.strain.abs();
    let initial_bias_mae = truth.bias.iter().map(|b| b.abs()).sum::<f64>() / n;
    Ok(ErrorReport {
        strain_abs_error,
        bias_mae,
        strain_fold_reduction: fold(initial_strain_error, strain_abs_error),
        bias_fold_reduction: fold(initial_bias_mae, bias_mae),
        initial_strain_error,
        initial_bias_mae,
        bias_errors,
    })
}

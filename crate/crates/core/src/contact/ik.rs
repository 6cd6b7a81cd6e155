//! Damped least-squares inverse kinematics on the `Pose6` residual.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{fk_gradient, JointVector, KinematicChain, KinematicParams};
use crate::se3::{wrap_deg, HomTransform, Pose6};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IkConfig {
    pub damping: f64,
    pub max_iterations: usize,
    /// mm
    pub pos_tol: f64,
    /// deg
    pub rot_tol: f64,
    /// Largest joint update per iteration (deg).
    pub max_step: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig {
            damping: 1.0,
            max_iterations: 200,
            pos_tol: 1e-6,
            rot_tol: 1e-6,
            max_step: 10.0,
        }
    }
}

fn residual(target: &Pose6, current: &Pose6) -> Vector6<f64> {
    Vector6::new(
        target.x - current.x,
        target.y - current.y,
        target.z - current.z,
        wrap_deg(target.alpha - current.alpha),
        wrap_deg(target.beta - current.beta),
        wrap_deg(target.gamma - current.gamma),
    )
}

fn converged(e: &Vector6<f64>, cfg: &IkConfig) -> bool {
    e.fixed_rows::<3>(0).amax() < cfg.pos_tol && e.fixed_rows::<3>(3).amax() < cfg.rot_tol
}

/// Joint angles `q` with `forward_kinematics(chain, q, params) == target`,
/// starting from `q_seed`. Returns the seed untouched if it already meets the
/// tolerance.
pub fn inverse_kinematics(
    chain: &KinematicChain,
    params: &KinematicParams,
    target: &HomTransform,
    q_seed: &[f64],
    cfg: &IkConfig,
) -> Result<JointVector> {
    let target_pose = target.to_pose()?;
    let mut q = q_seed.to_vec();
    let lambda2 = cfg.damping * cfg.damping;
    let mut e = Vector6::zeros();
    for _ in 0..=cfg.max_iterations {
        let (pose, jac_params) = fk_gradient(chain, &q, params)?;
        e = residual(&target_pose, &pose);
        if converged(&e, cfg) {
            return Ok(JointVector(q));
        }
        // d pose / d q = -(d pose / d b).
        let jac = -jac_params.columns(1, chain.n()).into_owned();
        let jjt: Matrix6<f64> = &jac * jac.transpose() + Matrix6::identity() * lambda2;
        let Some(chol) = jjt.cholesky() else {
            break;
        };
        let dq = jac.transpose() * chol.solve(&e);
        let scale = (cfg.max_step / dq.amax()).min(1.0);
        for (qi, d) in q.iter_mut().zip(dq.iter()) {
            *qi += scale * d;
        }
    }
    Err(Error::IkDivergence {
        pos_residual: e.fixed_rows::<3>(0).amax(),
        rot_residual: e.fixed_rows::<3>(3).amax(),
        iterations: cfg.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::forward_kinematics;

    fn seed() -> Vec<f64> {
        vec![5.0, 40.0, -5.0, -80.0, 3.0, 55.0, 10.0]
    }

    #[test]
    fn fixed_point_returns_seed() {
        let chain = KinematicChain::reference();
        let p = KinematicParams::zero(7);
        let target = forward_kinematics(&chain, &seed(), &p).unwrap();
        let q = inverse_kinematics(&chain, &p, &target, &seed(), &IkConfig::default()).unwrap();
        assert_eq!(q.0, seed());
    }

    #[test]
    fn recovers_nearby_target() {
        let chain = KinematicChain::reference();
        let p = KinematicParams::new(0.03, vec![0.0; 7]).unwrap();
        let mut q_true = seed();
        for (i, v) in q_true.iter_mut().enumerate() {
            *v += 0.7 * (i as f64 - 3.0);
        }
        let target = forward_kinematics(&chain, &q_true, &p).unwrap();
        let cfg = IkConfig::default();
        let q = inverse_kinematics(&chain, &p, &target, &seed(), &cfg).unwrap();
        let got = forward_kinematics(&chain, &q.0, &p).unwrap().to_pose().unwrap();
        let want = target.to_pose().unwrap();
        let e = residual(&want, &got);
        assert!(converged(&e, &cfg), "{:?}", e);
    }

    #[test]
    fn unreachable_target_diverges() {
        let chain = KinematicChain::reference();
        let p = KinematicParams::zero(7);
        let target = HomTransform::from_translation(3000.0, 0.0, 300.0);
        let err = inverse_kinematics(&chain, &p, &target, &seed(), &IkConfig::default()).unwrap_err();
        assert!(matches!(err, Error::IkDivergence { .. }));
    }
}

//! Synthetic joint observations at contact.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::AssemblyGeometry;
use super::ik::{inverse_kinematics, IkConfig};
use super::sampling::{sample_contact_pose, ContactMode};
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, JointVector, KinematicChain, KinematicParams};
use crate::se3::{compose, inverse, pose_to_matrix, HomTransform, Pose6};

/// Fixed frames of the cell: where the hole sits in the robot base frame and
/// where the peg tip sits in the flange frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frames {
    pub base_t_hole: Pose6,
    pub ee_t_peg: Pose6,
}

impl Default for Frames {
    fn default() -> Self {
        Frames::reference()
    }
}

impl Frames {
    /// Hole 550 mm in front of the base, opening 250 mm above the base plane,
    /// pocket axis pointing down; peg tip 100 mm out along the flange axis.
    pub fn reference() -> Self {
        Frames {
            base_t_hole: Pose6::new(550.0, 0.0, 250.0, 180.0, 0.0, 0.0),
            ee_t_peg: Pose6::new(0.0, 0.0, 100.0, 0.0, 0.0, 0.0),
        }
    }

    pub fn base_t_hole(&self) -> HomTransform {
        pose_to_matrix(&self.base_t_hole)
    }

    pub fn ee_t_peg(&self) -> HomTransform {
        pose_to_matrix(&self.ee_t_peg)
    }

    /// Flange pose in the base frame that puts the peg at `hole_t_peg`.
    pub fn flange_target(&self, hole_t_peg: &Pose6) -> HomTransform {
        compose(
            &compose(&self.base_t_hole(), &pose_to_matrix(hole_t_peg)),
            &inverse(&self.ee_t_peg()),
        )
    }

    /// Peg pose in the hole frame for a flange pose in the base frame.
    pub fn hole_t_peg(&self, base_t_flange: &HomTransform) -> HomTransform {
        compose(
            &compose(&inverse(&self.base_t_hole()), base_t_flange),
            &self.ee_t_peg(),
        )
    }
}

/// Joint measurements recorded at one contact event (deg).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactObservation {
    pub q: JointVector,
}

/// Coarse arm postures for the reference chain and frames. They differ in the
/// elbow's position on the self-motion circle.
pub fn reference_coarse_postures() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 40.0, 0.0, -85.0, 0.0, 55.0, 0.0],
        vec![-30.0, 45.0, 35.0, -85.0, -20.0, 55.0, 0.0],
        vec![30.0, 45.0, -35.0, -85.0, 20.0, 55.0, 0.0],
        vec![-50.0, 50.0, 60.0, -80.0, -40.0, 60.0, 0.0],
        vec![50.0, 50.0, -60.0, -80.0, 40.0, 60.0, 0.0],
    ]
}

/// Refines coarse postures into exact IK solutions for the peg at `nominal`
/// (typically a shallow centered insertion) with nominal parameters.
pub fn settle_postures(
    chain: &KinematicChain,
    frames: &Frames,
    nominal: &Pose6,
    coarse: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let cfg = IkConfig {
        max_iterations: 5000,
        ..IkConfig::default()
    };
    let params = KinematicParams::zero(chain.n());
    let target = frames.flange_target(nominal);
    coarse
        .iter()
        .map(|q0| inverse_kinematics(chain, &params, &target, q0, &cfg).map(|q| q.0))
        .collect()
}

/// `m` biased joint observations at contact.
///
/// Each observation draws a fresh contact pose (modes interleaved), solves
/// IK with the true strained chain for the true joint angles `q*`, and emits
/// `q = q* + b_true`. IK is seeded from a round-robin bank of postures; each
/// bank slot is re-seeded with its latest solution. Targets where IK diverges
/// are skipped and resampled.
#[allow(clippy::too_many_arguments)]
pub fn simulate_observations(
    chain: &KinematicChain,
    geom: &AssemblyGeometry,
    frames: &Frames,
    postures: &[Vec<f64>],
    params_true: &KinematicParams,
    m: usize,
    seed: u64,
    ik: &IkConfig,
) -> Result<Vec<ContactObservation>> {
    if m == 0 {
        return Err(Error::Validation("observation count must be >= 1".into()));
    }
    if postures.is_empty() {
        return Err(Error::Validation("at least one IK seed posture is required".into()));
    }
    params_true.validate()?;
    if params_true.n() != chain.n() {
        return Err(Error::DimensionMismatch {
            expected: chain.n(),
            actual: params_true.n(),
        });
    }
    let strained = KinematicParams {
        strain: params_true.strain,
        bias: vec![0.0; chain.n()],
    };
    let mut slots: Vec<Vec<f64>> = postures.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(m);
    let mut attempts = 0usize;
    while out.len() < m {
        if attempts >= 10 * m {
            return Err(Error::SamplingFailure(format!(
                "only {} of {} observations after {} attempts",
                out.len(),
                m,
                attempts
            )));
        }
        let mode = ContactMode::ALL[attempts % ContactMode::ALL.len()];
        let slot = attempts % slots.len();
        attempts += 1;
        let pose = sample_contact_pose(geom, &mut rng, mode)?;
        let target = frames.flange_target(&pose);
        match inverse_kinematics(chain, &strained, &target, &slots[slot], ik) {
            Ok(q_star) => {
                let q: Vec<f64> = q_star.0.iter().zip(&params_true.bias).map(|(q, b)| q + b).collect();
                slots[slot] = q_star.0;
                out.push(ContactObservation { q: JointVector(q) });
            }
            Err(Error::IkDivergence { .. }) => {
                log::debug!("IK diverged for {}; resampling", pose);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Peg pose in the hole frame predicted from a measured joint vector.
pub fn observed_pose(
    chain: &KinematicChain,
    frames: &Frames,
    q: &[f64],
    params: &KinematicParams,
) -> Result<Pose6> {
    let flange = forward_kinematics(chain, q, params)?;
    frames.hole_t_peg(&flange).to_pose()
}

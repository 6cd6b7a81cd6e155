//! Training pairs for the projection model: perturbed manifold poses labeled
//! with their nearest manifold pose.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kdtree::{nearest_linear, KdTree};
use crate::contact::ManifoldSet;
use crate::error::{Error, Result};
use crate::se3::{compose, format_row, parse_row, pose_to_matrix, Pose6};

/// Bound on each translational offset component (mm).
pub const PERTURB_MM: f64 = 10.0;
/// Bound on each Euler offset component (deg).
pub const PERTURB_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSample {
    pub input: Pose6,
    pub target: Pose6,
}

pub const DATASET_HEADER: &str =
    "in_x,in_y,in_z,in_alpha,in_beta,in_gamma,nn_x,nn_y,nn_z,nn_alpha,nn_beta,nn_gamma";

impl ProjectionSample {
    pub fn to_csv_row(&self) -> String {
        let mut v = self.input.to_array().to_vec();
        v.extend(self.target.to_array());
        format_row(&v)
    }

    pub fn from_csv_row(s: &str) -> Result<Self> {
        let v = parse_row(s)?;
        if v.len() != 12 {
            return Err(Error::Parse(format!("dataset row needs 12 fields, found {}", v.len())));
        }
        Ok(ProjectionSample {
            input: Pose6::from_array([v[0], v[1], v[2], v[3], v[4], v[5]]),
            target: Pose6::from_array([v[6], v[7], v[8], v[9], v[10], v[11]]),
        })
    }
}

/// Uniform offset within the perturbation box.
pub fn sample_offset(rng: &mut impl Rng) -> Pose6 {
    Pose6::new(
        rng.gen_range(-PERTURB_MM..=PERTURB_MM),
        rng.gen_range(-PERTURB_MM..=PERTURB_MM),
        rng.gen_range(-PERTURB_MM..=PERTURB_MM),
        rng.gen_range(-PERTURB_DEG..=PERTURB_DEG),
        rng.gen_range(-PERTURB_DEG..=PERTURB_DEG),
        rng.gen_range(-PERTURB_DEG..=PERTURB_DEG),
    )
}

/// `pose * offset` as transforms, back in `Pose6` coordinates.
pub fn apply_offset(pose: &Pose6, offset: &Pose6) -> Result<Pose6> {
    compose(&pose_to_matrix(pose), &pose_to_matrix(offset)).to_pose()
}

/// Right-multiplies `manifold_pose` by a uniformly random offset.
pub fn perturb(manifold_pose: &Pose6, rng: &mut impl Rng) -> Result<Pose6> {
    apply_offset(manifold_pose, &sample_offset(rng))
}

/// Nearest manifold pose by linear scan; ties go to the lowest index.
pub fn nearest_neighbor(query: &Pose6, manifold: &ManifoldSet) -> Result<Pose6> {
    let pts: Vec<[f64; 6]> = manifold.poses.iter().map(|p| p.to_array()).collect();
    nearest_linear(&pts, &query.to_array())
        .map(|(i, _)| manifold.poses[i])
        .ok_or(Error::EmptyManifold)
}

/// `size` labeled samples: uniform manifold pose, perturbed, paired with the
/// nearest manifold pose of the perturbed input.
pub fn build_dataset(manifold: &ManifoldSet, size: usize, seed: u64) -> Result<Vec<ProjectionSample>> {
    if manifold.is_empty() {
        return Err(Error::EmptyManifold);
    }
    if size == 0 {
        return Err(Error::Validation("dataset size must be >= 1".into()));
    }
    let tree = KdTree::from_poses(&manifold.poses);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs = (0..size)
        .map(|_| {
            let base = manifold.poses[rng.gen_range(0..manifold.len())];
            perturb(&base, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    // Labeling is order-preserving, so the result does not depend on the
    // thread count.
    inputs
        .into_par_iter()
        .map(|input| {
            let (idx, _) = tree.nearest(&input.to_array()).ok_or(Error::EmptyManifold)?;
            Ok(ProjectionSample {
                input,
                target: manifold.poses[idx],
            })
        })
        .collect()
}

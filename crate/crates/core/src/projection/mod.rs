//! Learned projection onto the contact manifold.

pub mod dataset;
pub mod kdtree;
pub mod mlp;
pub mod train;

pub use dataset::{build_dataset, nearest_neighbor, perturb, ProjectionSample};
pub use kdtree::KdTree;
pub use mlp::{MlpModel, ModelFile, Normalization};
pub use train::{train, train_gradient_check, TrainConfig, TrainReport};

use crate::contact::ManifoldSet;
use crate::se3::{dist_l2_r6, wrap_deg, Pose6};

/// Inputs farther than this (R^6 units) from every stored manifold pose are
/// flagged as extrapolated.
pub const EXTRAPOLATION_DISTANCE: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pose: Pose6,
    /// `jacobian[out][in]`.
    pub jacobian: [[f64; 6]; 6],
    pub extrapolated: bool,
}

/// Model output and its input Jacobian, without an extrapolation check.
pub fn project(model: &MlpModel, pose: &Pose6) -> (Pose6, [[f64; 6]; 6]) {
    model.forward_with_jacobian(pose)
}

/// Projection model paired with the manifold it was trained on.
pub struct Projector {
    pub model: MlpModel,
    tree: KdTree,
}

impl Projector {
    pub fn new(model: MlpModel, manifold: &ManifoldSet) -> Self {
        Projector {
            model,
            tree: KdTree::from_poses(&manifold.poses),
        }
    }

    /// Distance from `pose` to its nearest stored manifold pose.
    pub fn support_distance(&self, pose: &Pose6) -> Option<f64> {
        self.tree.nearest(&pose.to_array()).map(|(_, d2)| d2.sqrt())
    }

    pub fn is_extrapolated(&self, pose: &Pose6) -> bool {
        self.support_distance(pose).is_none_or(|d| d > EXTRAPOLATION_DISTANCE)
    }

    pub fn project(&self, pose: &Pose6) -> Projection {
        let (out, jacobian) = project(&self.model, pose);
        let extrapolated = self.is_extrapolated(pose);
        if extrapolated {
            log::warn!("projection input {} is outside the trained region", pose);
        }
        Projection {
            pose: out,
            jacobian,
            extrapolated,
        }
    }
}

/// Mean translational (mm) and rotational (deg) Euclidean error of model
/// outputs against the samples' nearest-neighbor targets.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProjectionError {
    pub positional_mm: f64,
    pub rotational_deg: f64,
    pub samples: usize,
}

pub fn projection_error(model: &MlpModel, samples: &[ProjectionSample]) -> ProjectionError {
    let inputs: Vec<[f64; 6]> = samples.iter().map(|s| s.input.to_array()).collect();
    let outs = model.forward_batch(&inputs);
    let (mut pos, mut rot) = (0.0, 0.0);
    for (o, s) in outs.iter().zip(samples) {
        let t = s.target.to_array();
        pos += ((o[0] - t[0]).powi(2) + (o[1] - t[1]).powi(2) + (o[2] - t[2]).powi(2)).sqrt();
        rot += (3..6).map(|k| wrap_deg(o[k] - t[k]).powi(2)).sum::<f64>().sqrt();
    }
    let n = samples.len().max(1) as f64;
    ProjectionError {
        positional_mm: pos / n,
        rotational_deg: rot / n,
        samples: samples.len(),
    }
}

/// `dist_l2_r6` between the projection and the input, for on-manifold checks.
pub fn displacement(model: &MlpModel, pose: &Pose6) -> f64 {
    dist_l2_r6(&model.forward(pose), pose)
}

//! Synthetic peg-in-hole contact: clearance, manifold sampling, IK and
//! observation generation.

pub mod geometry;
pub mod gjk;
pub mod ik;
pub mod sampling;
pub mod simulate;

pub use geometry::{clearance_fn, AssemblyGeometry};
pub use ik::{inverse_kinematics, IkConfig};
pub use sampling::{
    generate_manifold, sample_contact_pose, ContactMode, ManifoldSet, CONTACT_EPS,
};
pub use simulate::{
    observed_pose, reference_coarse_postures, settle_postures, simulate_observations,
    ContactObservation, Frames,
};

//! Kinematic calibration from contact events.
//!
//! A serial arm inserts a peg into a fixed hole. Every time contact is
//! detected, the (biased) joint encoders are recorded. A learned projection
//! onto the peg/hole contact manifold turns those readings into a
//! differentiable loss over the link strain `r` and encoder biases `b`,
//! which gradient descent then minimizes.
//!
//! Modules, bottom up:
//! - [`se3`]: `Pose6` / `HomTransform` conversions and pose metrics.
//! - [`kinematics`]: DH forward kinematics with strain and bias, plus exact
//!   parameter Jacobians.
//! - [`contact`]: square peg/pocket clearance, contact sampling, IK and
//!   synthetic observations.
//! - [`projection`]: nearest-neighbor oracle, k-d tree and the MLP
//!   projection model.
//! - [`calibration`]: the estimator and its error report.
//! - [`gradcheck`]: finite-difference checks of every analytic derivative.
//! - [`io`] and [`pipeline`]: file formats and the staged pipeline driven by
//!   the CLI.

pub mod calibration;
pub mod contact;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod kinematics;
pub mod pipeline;
pub mod projection;
pub mod se3;

pub use error::{Error, Result};
pub use kinematics::{forward_kinematics, fk_gradient, DhRow, JointVector, KinematicChain, KinematicParams};
pub use se3::{DistancePair, HomTransform, Pose6};

//! Contact pose sampling by bisection between a free and a penetrating pose.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::geometry::{clearance_fn, AssemblyGeometry};
use crate::error::{Error, Result};
use crate::se3::{dist_l2_r6, Pose6};

/// Contact tolerance on |clearance| (mm).
pub const CONTACT_EPS: f64 = 1e-4;
pub const MAX_BISECTION_STEPS: usize = 64;
pub const MAX_REJECTED_SEEDS: usize = 100;
/// Pitch bound on every sampled contact pose (deg).
pub const MAX_ABS_BETA: f64 = 30.0;
/// Shallowest admissible tip depth (mm); negative is above the opening.
pub const MIN_DEPTH: f64 = -5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContactMode {
    /// Peg lowered onto the opening from above: rim, top face or floor.
    Rim,
    /// Peg inside the pocket translated into a side wall.
    Wall,
    /// Peg inside the pocket rotated until it jams.
    Tilted,
}

impl ContactMode {
    pub const ALL: [ContactMode; 3] = [ContactMode::Rim, ContactMode::Wall, ContactMode::Tilted];
}

/// The set of hole-frame peg poses at contact.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ManifoldSet {
    pub poses: Vec<Pose6>,
}

impl ManifoldSet {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

fn lerp(a: &Pose6, b: &Pose6, t: f64) -> Pose6 {
    let (a, b) = (a.to_array(), b.to_array());
    let mut out = [0.0; 6];
    for k in 0..6 {
        out[k] = a[k] + t * (b[k] - a[k]);
    }
    Pose6::from_array(out)
}

/// A free starting pose and the far end of the approach segment.
fn propose(geom: &AssemblyGeometry, rng: &mut impl Rng, mode: ContactMode) -> (Pose6, Pose6) {
    let half_c = 0.5 * geom.clearance();
    let depth = geom.hole_depth;
    match mode {
        ContactMode::Rim => {
            let r = rng.gen_range(0.0..4.0);
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let free = Pose6::new(
                r * phi.cos(),
                r * phi.sin(),
                -10.0,
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            let mut end = free;
            end.z = depth + 5.0;
            (free, end)
        }
        ContactMode::Wall | ContactMode::Tilted => {
            let z = rng.gen_range(2.0..depth - 0.5);
            let free = Pose6::new(
                rng.gen_range(-0.3..0.3) * half_c,
                rng.gen_range(-0.3..0.3) * half_c,
                z,
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
            );
            let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let mut end = free;
            if mode == ContactMode::Wall {
                end.x += 3.0 * half_c.max(1.0) * phi.cos();
                end.y += 3.0 * half_c.max(1.0) * phi.sin();
                end.gamma += rng.gen_range(-1.0..1.0);
            } else {
                end.alpha += 20.0 * phi.cos();
                end.beta += 20.0 * phi.sin();
                end.gamma += rng.gen_range(-2.0..2.0);
                end.x += rng.gen_range(-1.0..1.0) * half_c;
                end.y += rng.gen_range(-1.0..1.0) * half_c;
            }
            (free, end)
        }
    }
}

/// Draws one contact pose with `|clearance_fn| <= CONTACT_EPS`.
pub fn sample_contact_pose(
    geom: &AssemblyGeometry,
    rng: &mut impl Rng,
    mode: ContactMode,
) -> Result<Pose6> {
    for _ in 0..MAX_REJECTED_SEEDS {
        let (free, end) = propose(geom, rng, mode);
        let c_free = clearance_fn(geom, &free);
        if c_free <= CONTACT_EPS || clearance_fn(geom, &end) >= -CONTACT_EPS {
            continue;
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut found = None;
        for _ in 0..MAX_BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let p = lerp(&free, &end, mid);
            let c = clearance_fn(geom, &p);
            if c.abs() <= CONTACT_EPS {
                found = Some(p);
                break;
            }
            if c > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let Some(p) = found else {
            return Err(Error::SamplingFailure(format!(
                "bisection did not reach |clearance| <= {} in {} steps",
                CONTACT_EPS, MAX_BISECTION_STEPS
            )));
        };
        if p.beta.abs() < MAX_ABS_BETA && p.z >= MIN_DEPTH && p.z <= geom.hole_depth {
            return Ok(p);
        }
    }
    Err(Error::SamplingFailure(format!(
        "{} seeds rejected for mode {:?}",
        MAX_REJECTED_SEEDS, mode
    )))
}

/// `n` deduplicated contact poses, modes interleaved round-robin.
pub fn generate_manifold(geom: &AssemblyGeometry, n: usize, seed: u64) -> Result<ManifoldSet> {
    if n == 0 {
        return Err(Error::Validation("manifold size must be >= 1".into()));
    }
    geom.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut poses: Vec<Pose6> = Vec::with_capacity(n);
    let mut i = 0usize;
    while poses.len() < n {
        let mode = ContactMode::ALL[i % ContactMode::ALL.len()];
        i += 1;
        let p = sample_contact_pose(geom, &mut rng, mode)?;
        if poses.iter().any(|q| dist_l2_r6(q, &p) < 1e-6) {
            continue;
        }
        poses.push(p);
    }
    Ok(ManifoldSet { poses })
}

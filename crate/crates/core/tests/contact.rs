use manifold_calib::contact::geometry::piece_distances;
use manifold_calib::contact::{
    clearance_fn, generate_manifold, inverse_kinematics, observed_pose, reference_coarse_postures,
    sample_contact_pose, settle_postures, simulate_observations, AssemblyGeometry, ContactMode, Frames, IkConfig,
    CONTACT_EPS,
};
use manifold_calib::kinematics::{forward_kinematics, KinematicChain, KinematicParams};
use manifold_calib::se3::{pose_to_matrix, HomTransform, Pose6};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn nominal_postures() -> Vec<Vec<f64>> {
    settle_postures(
        &KinematicChain::reference(),
        &Frames::reference(),
        &Pose6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0),
        &reference_coarse_postures(),
    )
    .unwrap()
}

#[test]
fn centered_peg_clears_each_wall_by_half_the_gap() {
    let g = AssemblyGeometry::reference();
    assert_eq!(g.clearance(), 1.0);
    let c = clearance_fn(&g, &Pose6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0));
    assert!((c - 0.5).abs() < 1e-9, "{c}");
}

#[test]
fn manifold_invariants() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 3000, 7).unwrap();
    assert_eq!(m.len(), 3000);
    for (i, p) in m.poses.iter().enumerate() {
        assert!(clearance_fn(&g, p).abs() <= CONTACT_EPS, "pose {i}");
        assert!(p.beta.abs() < 30.0);
        assert!(p.z >= -5.0 && p.z <= g.hole_depth);
        for q in &m.poses[..i] {
            let d: f64 = p.to_array().iter().zip(q.to_array()).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(d.sqrt() >= 1e-6);
        }
    }
    let again = generate_manifold(&g, 3000, 7).unwrap();
    assert_eq!(m, again);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Feature {
    /// Peg above the pocket opening, resting on the block's top face or rim.
    Rim,
    /// Inserted with a single contacting wall.
    SingleWall,
    /// Inserted, touching two or more pieces.
    MultiPoint,
    Floor,
}

/// Classifies a contact pose by the block pieces the peg touches and how
/// far its deepest corner has entered the pocket.
fn classify(g: &AssemblyGeometry, pose: &Pose6) -> Feature {
    let t = pose_to_matrix(pose);
    let h = 0.5 * g.peg_width;
    let mut deepest = f64::NEG_INFINITY;
    for x in [-h, h] {
        for y in [-h, h] {
            for z in [-g.peg_length, 0.0] {
                deepest = deepest.max(t.transform_point(&Vector3::new(x, y, z)).z);
            }
        }
    }
    let touching: Vec<usize> = piece_distances(g, pose)
        .iter()
        .enumerate()
        .filter(|(_, d)| **d <= 1e-3)
        .map(|(i, _)| i)
        .collect();
    if deepest <= 0.05 {
        Feature::Rim
    } else if touching.contains(&4) {
        Feature::Floor
    } else if touching.len() >= 2 {
        Feature::MultiPoint
    } else {
        Feature::SingleWall
    }
}

#[test]
fn at_least_three_contact_features_are_sampled() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 5000, 11).unwrap();
    let mut counts = std::collections::BTreeMap::new();
    for p in &m.poses {
        *counts.entry(classify(&g, p)).or_insert(0usize) += 1;
    }
    assert!(counts.len() >= 3, "{counts:?}");
}

#[test]
fn every_mode_produces_contact() {
    let g = AssemblyGeometry::reference();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for mode in ContactMode::ALL {
        for _ in 0..20 {
            let p = sample_contact_pose(&g, &mut rng, mode).unwrap();
            assert!(clearance_fn(&g, &p).abs() <= CONTACT_EPS);
        }
    }
}

#[test]
fn clearance_is_lipschitz_under_small_probes() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 500, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for p in &m.poses {
        for _ in 0..4 {
            let dir: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let delta = dir.map(|v| 0.01 * v / n);
            let a = p.to_array();
            let q = Pose6::from_array(std::array::from_fn(|k| a[k] + delta[k]));
            let l = (clearance_fn(&g, &q) - clearance_fn(&g, p)).abs() / 0.01;
            worst = worst.max(l);
        }
    }
    assert!(worst <= 2.0, "empirical Lipschitz constant {worst}");
}

#[test]
fn manifold_is_dense() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 20_000, 7).unwrap();
    let near = |a: &Pose6, b: &Pose6| {
        (a.translation() - b.translation()).norm() <= 5.0
            && ((a.alpha - b.alpha).powi(2) + (a.beta - b.beta).powi(2) + (a.gamma - b.gamma).powi(2)).sqrt() <= 5.0
    };
    let isolated = (0..m.len())
        .filter(|&i| !(0..m.len()).any(|j| j != i && near(&m.poses[i], &m.poses[j])))
        .count();
    assert_eq!(isolated, 0);
}

#[test]
fn ik_round_trip() {
    let chain = KinematicChain::reference();
    let params = KinematicParams::new(0.02, vec![0.0; 7]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = IkConfig::default();
    for seed in reference_coarse_postures() {
        let target_q: Vec<f64> = seed.iter().map(|q| q + rng.gen_range(-3.0..3.0)).collect();
        let target = forward_kinematics(&chain, &target_q, &params).unwrap();
        let q = inverse_kinematics(&chain, &params, &target, &seed, &cfg).unwrap();
        let reached = forward_kinematics(&chain, &q.0, &params).unwrap();
        let (a, b) = (reached.to_pose().unwrap(), target.to_pose().unwrap());
        assert!((a.translation() - b.translation()).norm() < 1e-5);
        // Returns immediately when the seed already meets the target.
        let again = inverse_kinematics(&chain, &params, &reached, &q.0, &cfg).unwrap();
        assert_eq!(again, q);
    }
}

#[test]
fn unreachable_target_diverges() {
    let chain = KinematicChain::reference();
    let far = HomTransform::from_translation(5000.0, 0.0, 0.0);
    let err = inverse_kinematics(&chain, &KinematicParams::zero(7), &far, &reference_coarse_postures()[0], &IkConfig::default())
        .unwrap_err();
    assert_eq!(err.kind(), "IkDivergence");
}

#[test]
fn unbiased_observations_lie_on_the_manifold() {
    let chain = KinematicChain::reference();
    let frames = Frames::reference();
    let g = AssemblyGeometry::reference();
    let zero = KinematicParams::zero(7);
    let obs = simulate_observations(&chain, &g, &frames, &nominal_postures(), &zero, 200, 3, &IkConfig::default()).unwrap();
    for o in &obs {
        let p = observed_pose(&chain, &frames, o.q.as_slice(), &zero).unwrap();
        // Contact tolerance plus the IK tolerance, with room for the lever arm.
        assert!(clearance_fn(&g, &p).abs() <= CONTACT_EPS + 1e-4, "{p}");
    }
}

#[test]
fn pure_bias_observations_are_consistent_at_truth() {
    let chain = KinematicChain::reference();
    let frames = Frames::reference();
    let g = AssemblyGeometry::reference();
    let truth = KinematicParams::new(0.0, vec![1.0, -2.0, 3.0, -4.0, 5.0, -1.5, 2.5]).unwrap();
    let obs = simulate_observations(&chain, &g, &frames, &nominal_postures(), &truth, 200, 9, &IkConfig::default()).unwrap();
    for o in &obs {
        let p = observed_pose(&chain, &frames, o.q.as_slice(), &truth).unwrap();
        assert!(clearance_fn(&g, &p).abs() <= CONTACT_EPS + 1e-4);
    }
}

#[test]
fn perturbed_parameters_move_observations_off_the_manifold() {
    let chain = KinematicChain::reference();
    let frames = Frames::reference();
    let g = AssemblyGeometry::reference();
    let truth = KinematicParams::new(0.05, vec![5.0; 7]).unwrap();
    let obs = simulate_observations(&chain, &g, &frames, &nominal_postures(), &truth, 300, 10, &IkConfig::default()).unwrap();
    let zero = KinematicParams::zero(7);
    let mean = obs
        .iter()
        .map(|o| clearance_fn(&g, &observed_pose(&chain, &frames, o.q.as_slice(), &zero).unwrap()).abs())
        .sum::<f64>()
        / obs.len() as f64;
    assert!(mean > 0.5, "mean |clearance| {mean}");
}

#[test]
fn simulation_is_reproducible() {
    let chain = KinematicChain::reference();
    let frames = Frames::reference();
    let g = AssemblyGeometry::reference();
    let truth = KinematicParams::new(0.01, vec![1.0; 7]).unwrap();
    let postures = nominal_postures();
    let a = simulate_observations(&chain, &g, &frames, &postures, &truth, 100, 77, &IkConfig::default()).unwrap();
    let b = simulate_observations(&chain, &g, &frames, &postures, &truth, 100, 77, &IkConfig::default()).unwrap();
    assert_eq!(a, b);
}

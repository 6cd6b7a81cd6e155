use manifold_calib::contact::{generate_manifold, AssemblyGeometry};
use manifold_calib::projection::dataset::{sample_offset, PERTURB_DEG, PERTURB_MM};
use manifold_calib::projection::{
    build_dataset, nearest_neighbor, perturb, train, KdTree, MlpModel, ProjectionSample, TrainConfig,
};
use manifold_calib::se3::{compose, dist_l2_r6, inverse, pose_to_matrix, Pose6};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Kolmogorov-Smirnov statistic of `xs` against the uniform law on `[lo, hi]`.
fn ks_uniform(xs: &mut [f64], lo: f64, hi: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn offsets_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 100_000;
    let draws: Vec<[f64; 6]> = (0..n).map(|_| sample_offset(&mut rng).to_array()).collect();
    // Critical value at alpha = 0.01.
    let critical = 1.628 / (n as f64).sqrt();
    for k in 0..6 {
        let lim = if k < 3 { PERTURB_MM } else { PERTURB_DEG };
        let mut col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        let d = ks_uniform(&mut col, -lim, lim);
        assert!(d < critical, "component {k}: D = {d}");
    }
}

#[test]
fn recovered_offsets_stay_in_bounds() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 200, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for p in &m.poses {
        let q = perturb(p, &mut rng).unwrap();
        let d = compose(&inverse(&pose_to_matrix(p)), &pose_to_matrix(&q)).to_pose().unwrap();
        let a = d.to_array();
        for k in 0..6 {
            let lim = if k < 3 { PERTURB_MM } else { PERTURB_DEG };
            assert!(a[k].abs() <= lim + 1e-9, "{d}");
        }
    }
}

#[test]
fn targets_are_no_farther_than_the_source_pose() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 1000, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut to_target, mut to_source) = (0.0, 0.0);
    for _ in 0..2000 {
        let src = m.poses[rng.gen_range(0..m.len())];
        let input = perturb(&src, &mut rng).unwrap();
        let target = nearest_neighbor(&input, &m).unwrap();
        let (dt, ds) = (dist_l2_r6(&input, &target), dist_l2_r6(&input, &src));
        assert!(dt <= ds);
        to_target += dt;
        to_source += ds;
    }
    assert!(to_target <= to_source);
}

#[test]
fn dataset_labels_match_linear_scan() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 500, 6).unwrap();
    let ds = build_dataset(&m, 2000, 7).unwrap();
    for s in &ds {
        let mut best = (f64::INFINITY, Pose6::IDENTITY);
        for p in &m.poses {
            let d: f64 = p.to_array().iter().zip(s.input.to_array()).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.0 {
                best = (d, *p);
            }
        }
        assert_eq!(s.target, best.1);
    }
    assert_eq!(ds, build_dataset(&m, 2000, 7).unwrap());
}

#[test]
fn kd_tree_matches_linear_scan_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    // Integer grid with duplicates, so ties are common.
    let pts: Vec<[f64; 6]> = (0..3000).map(|_| std::array::from_fn(|_| rng.gen_range(0..4) as f64)).collect();
    let tree = KdTree::new(pts.clone());
    for _ in 0..3000 {
        let q: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0..8) as f64 * 0.5);
        let mut best = (f64::INFINITY, usize::MAX);
        for (i, p) in pts.iter().enumerate() {
            let d: f64 = (0..6).map(|k| (p[k] - q[k]).powi(2)).sum();
            if d < best.0 {
                best = (d, i);
            }
        }
        assert_eq!(tree.nearest(&q), Some((best.1, best.0)));
    }
    assert_eq!(KdTree::new(Vec::new()).nearest(&[0.0; 6]), None);
}

#[test]
fn shuffled_labels_plateau_at_target_variance() {
    let g = AssemblyGeometry::reference();
    let m = generate_manifold(&g, 500, 9).unwrap();
    let mut ds = build_dataset(&m, 4000, 10).unwrap();
    let mut targets: Vec<Pose6> = ds.iter().map(|s| s.target).collect();
    targets.shuffle(&mut ChaCha8Rng::seed_from_u64(11));
    for (s, t) in ds.iter_mut().zip(targets) {
        *s = ProjectionSample { input: s.input, target: t };
    }
    let mut model = MlpModel::new(&[6, 32, 32, 6], &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
    let cfg = TrainConfig {
        epochs: 15,
        holdout_fraction: 0.1,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &ds, &cfg).unwrap();
    // Standardized targets have unit variance; nothing below that is learnable.
    let held = *report.holdout_loss.last().unwrap();
    assert!(held > 0.9, "held-out MSE {held}");
}

proptest::proptest! {
    #[test]
    fn normalization_round_trip(
        x in proptest::array::uniform6(-1e3..1e3f64),
        mean in proptest::array::uniform6(-1e2..1e2f64),
        std in proptest::array::uniform6(1e-3..1e2f64),
    ) {
        let norm = manifold_calib::projection::Normalization { in_mean: mean, in_std: std, out_mean: mean, out_std: std };
        let back = norm.denormalize_input(&norm.normalize_input(&x));
        for k in 0..6 {
            proptest::prop_assert!((back[k] - x[k]).abs() <= 1e-12 * x[k].abs().max(1.0));
        }
    }
}

use manifold_calib::calibration::{
    calibration_loss, evaluate, loss_and_gradient, optimize, predicted_contact_pose, CalibrationProblem,
    OptimizeConfig,
};
use manifold_calib::contact::{
    clearance_fn, reference_coarse_postures, settle_postures, simulate_observations, AssemblyGeometry,
    ContactObservation, Frames, IkConfig,
};
use manifold_calib::kinematics::{JointVector, KinematicChain, KinematicParams};
use manifold_calib::projection::MlpModel;
use manifold_calib::se3::Pose6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn observations(truth: &KinematicParams, m: usize, seed: u64) -> Vec<ContactObservation> {
    let chain = KinematicChain::reference();
    let frames = Frames::reference();
    let postures = settle_postures(&chain, &frames, &Pose6::new(0.0, 0.0, 10.0, 0.0, 0.0, 0.0), &reference_coarse_postures()).unwrap();
    simulate_observations(&chain, &AssemblyGeometry::reference(), &frames, &postures, truth, m, seed, &IkConfig::default())
        .unwrap()
}

fn problem(obs: Vec<ContactObservation>, model_seed: u64) -> CalibrationProblem {
    let model = MlpModel::new(&[6, 16, 16, 6], &mut ChaCha8Rng::seed_from_u64(model_seed)).unwrap();
    CalibrationProblem::new(KinematicChain::reference(), Frames::reference(), obs, model).unwrap()
}

#[test]
fn truth_reproduces_contact_poses() {
    let truth = KinematicParams::new(0.0, vec![2.0, -1.0, 0.5, 3.0, -2.0, 1.0, -0.5]).unwrap();
    let p = problem(observations(&truth, 100, 1), 0);
    let g = AssemblyGeometry::reference();
    for o in &p.observations {
        let pose = predicted_contact_pose(&p, o.q.as_slice(), &truth).unwrap();
        assert!(clearance_fn(&g, &pose).abs() <= 2e-4);
    }
}

#[test]
fn loss_matches_its_gradient_evaluation() {
    let truth = KinematicParams::new(0.01, vec![1.0; 7]).unwrap();
    let p = problem(observations(&truth, 50, 2), 1);
    let params = KinematicParams::new(0.005, vec![0.5; 7]).unwrap();
    let a = calibration_loss(&p, &params).unwrap();
    let (b, grad) = loss_and_gradient(&p, &params).unwrap();
    assert!((a.total - b.total).abs() <= 1e-12 * a.total.max(1.0));
    assert!((a.total - a.positional - a.rotational).abs() <= 1e-12 * a.total.max(1.0));
    assert_eq!(grad.len(), 8);
}

#[test]
fn optimization_is_deterministic_and_returns_the_best_iterate() {
    let truth = KinematicParams::new(0.02, vec![-1.0, 2.0, -3.0, 1.0, 0.5, -2.0, 1.5]).unwrap();
    let p = problem(observations(&truth, 60, 3), 2);
    let cfg = OptimizeConfig {
        max_iterations: 40,
        ..OptimizeConfig::default()
    };
    let a = optimize(&p, &cfg).unwrap();
    let b = optimize(&p, &cfg).unwrap();
    assert_eq!(a, b);
    let best = a.history[a.best_iteration].total;
    assert!(a.history.iter().all(|l| l.total >= best));
    let at_best = calibration_loss(&p, &a.params()).unwrap().total;
    assert!((at_best - best).abs() <= 1e-9 * best.max(1.0));
    let report = evaluate(&a, &truth).unwrap();
    assert_eq!(report.initial_strain_error, 0.02);
}

#[test]
fn subsampled_optimization_is_deterministic() {
    let truth = KinematicParams::new(0.01, vec![1.0; 7]).unwrap();
    let p = problem(observations(&truth, 80, 4), 3);
    let cfg = OptimizeConfig {
        max_iterations: 20,
        subsample: Some(16),
        seed: 5,
        ..OptimizeConfig::default()
    };
    assert_eq!(optimize(&p, &cfg).unwrap(), optimize(&p, &cfg).unwrap());
}

#[test]
fn invalid_inputs_are_rejected() {
    let model = MlpModel::new(&[6, 8, 6], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let chain = KinematicChain::reference();
    let err = CalibrationProblem::new(chain.clone(), Frames::reference(), Vec::new(), model.clone()).err().unwrap();
    assert_eq!(err.kind(), "ValidationError");
    let short = vec![ContactObservation { q: JointVector(vec![0.0; 6]) }];
    let err = CalibrationProblem::new(chain, Frames::reference(), short, model).err().unwrap();
    assert_eq!(err.kind(), "DimensionMismatch");

    let p = problem(observations(&KinematicParams::zero(7), 10, 6), 4);
    let bad = OptimizeConfig {
        max_iterations: 0,
        ..OptimizeConfig::default()
    };
    assert_eq!(optimize(&p, &bad).unwrap_err().kind(), "ValidationError");
    let too_big = KinematicParams::new(0.7, vec![0.0; 7]);
    assert!(too_big.is_err());
}

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use obstemplate::hybrid::*;
use obstemplate::linalg::orthogonality_defect;
use obstemplate::system::StateAffineSystem;
use obstemplate::templates::TemplateFamily;
use obstemplate::Error;
use proptest::prelude::*;

const TOL_LOG: f64 = 1e-6;

fn run(t_final: f64, timer: f64) -> HybridTrajectory {
    let sc = example_scenario();
    let c = &sc.config;
    let init = LoopState { timer, ..sc.init.clone() };
    simulate(&sc.system, &sc.family, &sc.law, c.theta, c.delta, &init, t_final, c.substeps).unwrap()
}

#[test]
fn equilibrium_is_preserved() {
    let sc = example_scenario();
    let init = LoopState::initial(DVector::zeros(3), DVector::zeros(3), DMatrix::identity(3, 3), 0.02, 2);
    let traj = simulate(&sc.system, &sc.family, &sc.law, 50.0, 0.02, &init, 0.5, 20).unwrap();
    for s in &traj.samples {
        assert_eq!(s.state.x, DVector::zeros(3));
        assert_eq!(s.state.xhat, DVector::zeros(3));
        assert_eq!(s.u, DVector::zeros(2));
        assert_eq!(s.err_norm(), 0.0);
    }
    assert_eq!(traj.jump_times.len(), 25);
}

#[test]
fn jump_times_follow_the_timer() {
    for s0 in [0.02, 0.005, 0.0] {
        let traj = run(0.3, s0);
        assert!(!traj.jump_times.is_empty());
        for (i, t) in traj.jump_times.iter().enumerate() {
            let expected = 0.02 - s0 + i as f64 * 0.02;
            assert!((t - expected).abs() <= 1e-12, "jump {i}: {t} vs {expected}");
        }
        let last = traj.jump_times.last().unwrap();
        assert!(last + 0.02 > 0.3 - 1e-12);
        assert!((traj.last().t - 0.3).abs() <= 1e-12);
    }
}

#[test]
fn jumps_copy_plant_estimate_and_gain() {
    let sc = example_scenario();
    let traj = run(0.5, 0.02);
    let mut seen = 0;
    for w in traj.samples.windows(2) {
        let (before, after) = (&w[0], &w[1]);
        if after.j == before.j + 1 {
            seen += 1;
            assert_eq!(before.t, after.t);
            assert_eq!(before.state.x, after.state.x);
            assert_eq!(before.state.xhat, after.state.xhat);
            assert_eq!(before.state.gain, after.state.gain);
            assert_eq!(after.state.timer, 0.0);
            // The first template value is e1, so the input resumes at lambda(xhat).
            let target = sc.law.eval(&after.state.xhat);
            assert!((&after.u - &target).norm() <= 1e-12 * target.norm().max(1.0));
            assert!((after.state.mu - target.norm()).abs() <= 1e-12 * target.norm().max(1.0));
            assert!(orthogonality_defect(&after.state.rotation) <= 1e-12);
        } else {
            assert_eq!(after.j, before.j);
            assert!(after.t > before.t);
        }
    }
    assert_eq!(seen, traj.jump_times.len());
}

#[test]
fn weighted_lyapunov_function_decreases() {
    let traj = run(2.0, 0.02);
    let inc = traj.lyapunov_increase(2.0 * 0.02);
    assert!(inc <= (1.0 + TOL_LOG).ln(), "{inc}");
    for k in [2, 10, 40] {
        let excess = traj.error_bound_excess(k as f64 * 0.02).unwrap();
        assert!(excess <= (1.0 + TOL_LOG).ln(), "t0 = {k} delta: {excess}");
    }
    assert!(traj.error_bound_excess(0.0123).is_none());
}

#[test]
fn error_decays_to_zero() {
    let traj = run(2.0, 0.02);
    assert!(traj.last().err_norm() < 1e-20);
    assert!(traj.last().log10_err_norm() < -20.0);
}

#[test]
fn divergence_is_reported_with_last_valid_sample() {
    let a = DMatrix::from_element(1, 1, 40.0);
    let sys = StateAffineSystem::constant(&a, &DMatrix::identity(1, 1), 1).unwrap();
    let family = TemplateFamily::siso(1).unwrap();
    let law = FeedbackLaw::linear(DMatrix::zeros(1, 1));
    let init = LoopState::initial(DVector::from_element(1, 1.0), DVector::zeros(1), DMatrix::identity(1, 1), 0.1, 1);
    match simulate(&sys, &family, &law, 1.0, 0.1, &init, 30.0, 10) {
        Err(Error::Divergence { t, last_valid }) => {
            // exp(40 t) overflows near t = 17.7.
            assert!(t > 17.0 && t < 18.0, "{t}");
            assert!(last_valid.t < t);
            assert!(last_valid.state.x[0].is_finite());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn invalid_arguments_are_rejected() {
    let sc = example_scenario();
    let c = &sc.config;
    let sim = |init: &LoopState, theta: f64, substeps: usize| {
        simulate(&sc.system, &sc.family, &sc.law, theta, c.delta, init, 0.1, substeps)
    };
    assert!(matches!(sim(&sc.init, 0.0, 20), Err(Error::Argument(_))));
    assert!(matches!(sim(&sc.init, 50.0, 0), Err(Error::Argument(_))));
    let bad_gain = LoopState { gain: -DMatrix::identity(3, 3), ..sc.init.clone() };
    assert!(matches!(sim(&bad_gain, 50.0, 20), Err(Error::Validation(_))));
    let bad_timer = LoopState { timer: 0.03, ..sc.init.clone() };
    assert!(matches!(sim(&bad_timer, 50.0, 20), Err(Error::Validation(_))));
    let bad_dim = LoopState { x: DVector::zeros(2), ..sc.init.clone() };
    assert!(matches!(sim(&bad_dim, 50.0, 20), Err(Error::Dimension(_))));
}

#[test]
fn simulation_is_deterministic() {
    assert_eq!(run(0.4, 0.02).to_csv(), run(0.4, 0.02).to_csv());
}

#[test]
fn csv_layout() {
    let traj = run(0.04, 0.02);
    let csv = traj.to_csv();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,j,x_1,x_2,x_3,xhat_1,xhat_2,xhat_3,err_norm,log10_err_norm,u_1,u_2,s_timer,mu,S_min_eig,S_max_eig"
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|f| f.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), traj.samples.len());
    assert!(rows.iter().all(|r| r.len() == 16));
    assert_eq!(&rows[0][2..8], &[2.0, -2.0, 3.0, -3.0, 2.0, -2.0]);
    assert!(rows.windows(2).all(|w| w[1][0] >= w[0][0]));
}

#[test]
fn saturation_clamps_the_estimate() {
    let v = DVector::from_row_slice(&[3.0, 4.0]);
    assert_eq!(saturate(&v, None), v);
    assert!((saturate(&v, Some(1.0)) - DVector::from_row_slice(&[0.6, 0.8])).norm() < 1e-15);
    assert_eq!(saturate(&v, Some(10.0)), v);
}

proptest! {
    #[test]
    fn rotation_maps_first_axis_to_direction(v in prop::collection::vec(-10.0f64..10.0, 1..5)) {
        let v = DVector::from_vec(v);
        prop_assume!(v.norm() > 1e-6);
        let r = rotation_to(&v);
        prop_assert!(orthogonality_defect(&r) <= 1e-12);
        prop_assert!((r.column(0) - &v / v.norm()).norm() <= 1e-12);
    }

    #[test]
    fn jump_resets_timer_only(seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sc = example_scenario();
        let xhat = DVector::from_fn(3, |_, _| rng.random_range(-5.0..5.0));
        let state = LoopState {
            xhat,
            timer: 0.02,
            ..sc.init.clone()
        };
        let next = jump(&state, &sc.law);
        prop_assert_eq!(&next.x, &state.x);
        prop_assert_eq!(&next.xhat, &state.xhat);
        prop_assert_eq!(&next.gain, &state.gain);
        prop_assert_eq!(next.timer, 0.0);
        prop_assert_eq!(next.jumps, 1);
        let lam = sc.law.eval(&state.xhat);
        prop_assert!((next.rotation.column(0) * next.mu - lam).norm() <= 1e-12 * next.mu.max(1.0));
    }
}

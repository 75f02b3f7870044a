use ndp_core::autograd::{backward, fd_check, random_case, trajectory_jacobians, trajectory_jacobians_faulty};
use ndp_core::dmp::{rollout, BasisKind, DmpConfig, DmpParams};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kernel() -> impl Strategy<Value = BasisKind> {
    prop_oneof![
        Just(BasisKind::GaussianRbf),
        Just(BasisKind::Linear),
        Just(BasisKind::Multiquadric),
        Just(BasisKind::InverseQuadric),
        Just(BasisKind::InverseMultiquadric),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobians_agree_with_finite_differences(
        seed in any::<u64>(),
        dof in 1usize..4,
        n in 1usize..11,
        m in 3usize..51,
        basis in kernel(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut case = random_case(&mut rng, dof, n, m, 100.0);
        case.config.basis = basis;
        let report = fd_check(&case.params, &case.y0, &case.y0_dot, &case.config, 1e-5).unwrap();
        prop_assert!(report.max_rel_error <= 1e-6, "{report:?}");
    }

    #[test]
    fn rollout_is_affine_in_the_goal(seed in any::<u64>(), dof in 1usize..4, n in 1usize..8, m in 3usize..40, delta in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, dof, n, m, 50.0);
        let base = rollout(&case.params, &case.y0, &case.y0_dot, &case.config).unwrap();
        let jac = trajectory_jacobians(&base).unwrap();
        let mut moved = case.params.clone();
        moved.g[0] += delta;
        let bumped = rollout(&moved, &case.y0, &case.y0_dot, &case.config).unwrap();
        for (t, (a, b)) in base.positions().zip(bumped.positions()).enumerate() {
            let predicted = a[0] + delta * jac.g(t, 0);
            prop_assert!((b[0] - predicted).abs() <= 1e-9 * (1.0 + b[0].abs()), "t {t}: {} vs {predicted}", b[0]);
            for d in 1..dof {
                prop_assert_eq!(a[d], b[d]);
            }
        }
    }

    #[test]
    fn backward_contracts_the_jacobians(seed in any::<u64>(), dof in 1usize..4, n in 1usize..8, m in 3usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let case = random_case(&mut rng, dof, n, m, 50.0);
        let tape = rollout(&case.params, &case.y0, &case.y0_dot, &case.config).unwrap();
        let jac = trajectory_jacobians(&tape).unwrap();
        // one upstream row per state after the initial one
        let upstream: Vec<Vec<f64>> = (1..=m).map(|t| (0..dof).map(|d| ((t * 7 + d * 3) as f64).sin()).collect()).collect();
        let grads = backward(&tape, &upstream).unwrap();
        for d in 0..dof {
            let dg: f64 = (1..=m).map(|t| upstream[t - 1][d] * jac.g(t, d)).sum();
            prop_assert!((grads.d_g[d] - dg).abs() <= 1e-9 * (1.0 + dg.abs()));
            for i in 0..n {
                let dw: f64 = (1..=m).map(|t| upstream[t - 1][d] * jac.w(t, d)[i]).sum();
                prop_assert!((grads.d_w[d * n + i] - dw).abs() <= 1e-9 * (1.0 + dw.abs()));
            }
        }
    }

    #[test]
    fn unforced_system_settles_on_the_goal(
        y0 in proptest::collection::vec(-1.0f64..1.0, 1..4),
        offset in proptest::collection::vec(-1.0f64..1.0, 3),
        m in 35usize..120,
    ) {
        let dof = y0.len();
        let g: Vec<f64> = y0.iter().zip(&offset).map(|(y, o)| y + o).collect();
        let config = DmpConfig::new(6, m, 1);
        let params = DmpParams::new(vec![0.0; dof * 6], g.clone(), 6).unwrap();
        let tape = rollout(&params, &y0, &vec![0.0; dof], &config).unwrap();
        let end = &tape.final_state().y;
        for d in 0..dof {
            prop_assert!((end[d] - g[d]).abs() <= 0.01 * (y0[d] - g[d]).abs() + 1e-12, "dof {d}");
        }
    }

    #[test]
    fn the_goal_is_an_exact_fixed_point(
        g in proptest::collection::vec(-2.0f64..2.0, 1..4),
        w in proptest::collection::vec(-500.0f64..500.0, 30),
        m in 1usize..80,
    ) {
        let dof = g.len();
        let params = DmpParams::new(w[..dof * 10].to_vec(), g.clone(), 10).unwrap();
        let tape = rollout(&params, &g, &vec![0.0; dof], &DmpConfig::new(10, m, 1)).unwrap();
        for y in tape.positions() {
            prop_assert_eq!(y, g.as_slice());
        }
    }
}

#[test]
fn a_wrong_jacobian_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let case = random_case(&mut rng, 2, 5, 20, 100.0);
    let tape = rollout(&case.params, &case.y0, &case.y0_dot, &case.config).unwrap();
    let good = trajectory_jacobians(&tape).unwrap();
    let bad = trajectory_jacobians_faulty(&tape).unwrap();
    assert_ne!(good.d_y_d_w, bad.d_y_d_w);
}

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use varqpi::decomp::{decompose, validate};
use varqpi::envgen::{generate, system_matrix, validate_local, DynamicsKind, LocalDynamicsSpec};
use varqpi::experiments::report::{read_rows, write_rows, ThresholdRow};
use varqpi::mdp::frozen_lake::{build_frozen_lake, FrozenLakeSpec};
use varqpi::mdp::{assemble_lse, greedy_improvement, solve_exact, DeterministicPolicy};
use varqpi::numerics::{bound_general_local, condition_number};
use varqpi::oracle::backup_q;
use varqpi::seeding::derive_seed;
use varqpi::sim::{u3_matrix, Ansatz};

fn kind() -> impl Strategy<Value = DynamicsKind> {
    prop_oneof![
        Just(DynamicsKind::Deterministic),
        Just(DynamicsKind::UniformLocal),
        (0.05f64..0.95).prop_map(|beta| DynamicsKind::ExponentialLocal { beta }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn exact_q_agrees_with_backups(beta in 0.0f64..=1.0 / 3.0, seed: u64) {
        let mdp = build_frozen_lake(&FrozenLakeSpec::standard(4, beta, 0.9).unwrap()).unwrap();
        let policy = DeterministicPolicy::random(&mdp, seed);
        let lse = assemble_lse(&mdp, &policy);
        let q = solve_exact(&lse).unwrap();
        let backed = backup_q(&mdp, &policy, 600);
        for (a, b) in q.iter().zip(&backed) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            prop_assert!(*a >= -1e-12 && *a <= 1.0 / (1.0 - 0.9) + 1e-9);
        }
    }

    #[test]
    fn greedy_never_worsens(beta in 0.0f64..=1.0 / 3.0, seed: u64) {
        let mdp = build_frozen_lake(&FrozenLakeSpec::standard(4, beta, 0.9).unwrap()).unwrap();
        let policy = DeterministicPolicy::random(&mdp, seed);
        let q = solve_exact(&assemble_lse(&mdp, &policy)).unwrap();
        let next = greedy_improvement(q.as_slice(), &mdp);
        let q_next = solve_exact(&assemble_lse(&mdp, &next)).unwrap();
        let na = mdp.num_actions();
        for s in 0..mdp.num_states() {
            let v = q[s * na + policy.action(s)];
            let v_next = q_next[s * na + next.action(s)];
            prop_assert!(v_next >= v - 1e-9, "state {s}: {v_next} < {v}");
        }
    }

    #[test]
    fn action_string_round_trips(actions in prop::collection::vec(0usize..4, 1..64)) {
        let p = DeterministicPolicy::new(actions, 4).unwrap();
        let back = DeterministicPolicy::parse_action_string(&p.to_action_string(), 4).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn generated_dynamics_are_local(q in 2usize..=6, kind in kind(), seed: u64) {
        let n = 1 << q;
        let p = generate(&LocalDynamicsSpec { num_states: n, kind, seed }).unwrap();
        for row in p.matrix().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        let report = validate_local(&p);
        prop_assert!(report.rows_local);
        let kappa = condition_number(&system_matrix(&p, 0.9)).unwrap();
        prop_assert!(kappa >= 1.0 - 1e-12);
        prop_assert!(kappa <= bound_general_local(n, 0.9) * (1.0 + 1e-9));
    }

    #[test]
    fn decomposition_reconstructs(q in 1usize..=4, entries in prop::collection::vec(-3.0f64..3.0, 256)) {
        let n = 1 << q;
        let a = DMatrix::from_iterator(n, n, entries.into_iter().take(n * n));
        let dec = decompose(&a).unwrap();
        let report = validate(&dec, &a).unwrap();
        prop_assert!(report.passes(1e-10), "{report:?}");
    }

    #[test]
    fn u3_is_unitary(theta in -7.0f64..7.0, phi in -7.0f64..7.0, lambda in -7.0f64..7.0) {
        let g = u3_matrix(theta, phi, lambda);
        let u = DMatrix::from_fn(2, 2, |r, c| g[r][c]);
        let err = (u.adjoint() * &u - DMatrix::<Complex64>::identity(2, 2)).norm();
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn ansatz_preserves_norm(q in 1usize..=4, depth in 1usize..=3, seed: u64) {
        let depth = if q == 1 { 1 } else { depth };
        let ansatz = Ansatz::new(q, depth).unwrap();
        let params: Vec<f64> = (0..ansatz.num_params())
            .map(|i| (derive_seed(&[seed, i as u64]) % 10_000) as f64 * 1e-3)
            .collect();
        let state = ansatz.prepare(&params).unwrap();
        prop_assert!((state.norm() - 1.0).abs() < 1e-12);
        let u = ansatz.unitary(&params).unwrap();
        let d = 1 << q;
        prop_assert!((u.adjoint() * &u - DMatrix::<Complex64>::identity(d, d)).norm() < 1e-10);
    }

    #[test]
    fn threshold_rows_round_trip(
        beta in 0.0f64..0.34,
        threshold in 1e-6f64..0.1,
        trials in 1usize..2000,
        rate in 0.0f64..=1.0,
        mean in 0.0f64..1e5,
    ) {
        let rows = vec![ThresholdRow {
            beta,
            threshold,
            trials,
            success_rate: rate,
            mean_steps: mean,
            std_steps: mean.sqrt(),
        }];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        let back: Vec<ThresholdRow> = read_rows(buf.as_slice()).unwrap();
        prop_assert_eq!(back, rows);
    }

    #[test]
    fn seeds_depend_on_every_part(a: u64, b: u64, c: u64) {
        let s = derive_seed(&[a, b, c]);
        prop_assert_eq!(s, derive_seed(&[a, b, c]));
        prop_assert_ne!(s, derive_seed(&[a, b.wrapping_add(1), c]));
        prop_assert_ne!(s, derive_seed(&[a, b, c.wrapping_add(1)]));
    }
}

#[test]
fn zero_matrix_is_rejected() {
    assert!(decompose(&DMatrix::<f64>::zeros(4, 4)).is_err());
}

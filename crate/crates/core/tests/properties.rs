use bellcert_core::analytic::{epsilon_params, norm_bound, swap_halves};
use bellcert_core::games::{chsh_value, epsilon_from_chsh, CopyIndex};
use bellcert_core::linalg::{hermitian_eig, operator_abs, partial_trace, tensor, CMatrix, C64};
use bellcert_core::npa::{canonicalize, Letter, Word};
use bellcert_core::quantum::{random_density, random_pvm, random_unitary};
use bellcert_core::sdp::{certify_lower_bound, solve, Certificate, SdpProblem, SolveStatus, SolverOptions, SparseSym};
use bellcert_core::swap::{build_swap, check_swap_isometry};
use bellcert_core::{behavior_from_strategy, Scenario};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_hermitian(n: usize, seed: u64) -> CMatrix {
    let u = random_unitary(n, &mut rng(seed));
    let d: Vec<f64> = (0..n).map(|k| (k as f64) - 1.3 + 0.37 * ((seed % 7) as f64)).collect();
    &(&u * &CMatrix::diag_real(&d)) * &u.adjoint()
}

fn letter() -> impl Strategy<Value = Letter> {
    (any::<bool>(), 0u8..3, 0u8..3).prop_map(|(alice, x, a)| if alice { Letter::a(x, a) } else { Letter::b(x, a) })
}

fn word() -> impl Strategy<Value = Word> {
    prop::collection::vec(letter(), 0..6).prop_map(Word::new)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonicalize_is_idempotent(w in word()) {
        if let Some(c) = canonicalize(&w) {
            prop_assert_eq!(canonicalize(&c), Some(c.clone()));
            prop_assert!(c.is_canonical());
        }
    }

    #[test]
    fn canonicalize_commutes_with_adjoint(w in word()) {
        let reversed = Word::new(w.letters().iter().rev().copied().collect());
        prop_assert_eq!(canonicalize(&reversed), canonicalize(&w).map(|c| c.adjoint()));
    }

    #[test]
    fn canonical_form_keeps_expectations(w in word(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = bellcert_core::Strategy::new(
            random_density(vec![3, 3], &mut r),
            random_pvm(3, 3, 3, &mut r),
            random_pvm(3, 3, 3, &mut r),
        ).unwrap();
        let direct = w.expectation(&s);
        let canon = canonicalize(&w).map_or(C64::new(0.0, 0.0), |c| c.expectation(&s));
        prop_assert!((direct - canon).norm() < 1e-10);
    }

    #[test]
    fn swap_is_isometric_for_random_measurements(seed in any::<u64>(), t in 0usize..3) {
        let test = Scenario::ALL[t];
        let pvm = random_pvm(test.party_dim(), test.n_inputs(), test.n_outcomes(), &mut rng(seed));
        prop_assert!(check_swap_isometry(&build_swap(&pvm, test).unwrap()) < 1e-10);
    }

    #[test]
    fn tensor_is_associative(s1 in any::<u64>(), s2 in any::<u64>(), s3 in any::<u64>()) {
        let (a, b, c) = (random_unitary(2, &mut rng(s1)), random_unitary(3, &mut rng(s2)), random_unitary(2, &mut rng(s3)));
        let left = tensor(&tensor(&a, &b), &c);
        let right = tensor(&a, &tensor(&b, &c));
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..7) {
        let m = random_hermitian(n, seed);
        let (vals, vecs) = hermitian_eig(&m).unwrap();
        let back = &(&vecs * &CMatrix::diag_real(&vals)) * &vecs.adjoint();
        prop_assert!(back.max_abs_diff(&m) < 1e-10);
        prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn operator_abs_squares_back(seed in any::<u64>(), n in 1usize..6) {
        let m = random_hermitian(n, seed);
        let a = operator_abs(&m, false).unwrap();
        prop_assert!((&a * &a).max_abs_diff(&(&m * &m)) < 1e-9);
    }

    #[test]
    fn partial_trace_of_product(s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = random_density(vec![2], &mut rng(s1));
        let b = random_density(vec![3], &mut rng(s2));
        let joint = tensor(a.matrix(), b.matrix());
        prop_assert!(partial_trace(&joint, &[2, 3], &[0]).unwrap().max_abs_diff(a.matrix()) < 1e-12);
        prop_assert!(partial_trace(&joint, &[2, 3], &[1]).unwrap().max_abs_diff(b.matrix()) < 1e-12);
    }

    #[test]
    fn halves_swap_is_an_involution(s in 0u8..16) {
        prop_assert_eq!(swap_halves(swap_halves(s)), s);
    }

    #[test]
    fn norm_bound_grows_with_noise_and_weight(e1 in 0.0f64..0.5, e2 in 0.0f64..0.5, p in 0u32..4) {
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let (a, b) = (epsilon_params(lo).unwrap(), epsilon_params(hi).unwrap());
        prop_assert!(norm_bound(p, &a) <= norm_bound(p, &b) + 1e-12);
        prop_assert!(norm_bound(p, &a) <= norm_bound(p + 1, &a) + 1e-12);
    }

    #[test]
    fn quantum_chsh_respects_tsirelson(seed in any::<u64>()) {
        let b = behavior_from_strategy(&Scenario::DoubleChsh.random_strategy(&mut rng(seed))).unwrap();
        for copy in [CopyIndex::I, CopyIndex::II] {
            prop_assert!(chsh_value(&b, copy).unwrap().abs() <= 2.0 * std::f64::consts::SQRT_2 + 1e-8);
        }
    }

    #[test]
    fn chsh_epsilon_roundtrip(eps in 0.0f64..0.999) {
        let b = behavior_from_strategy(&Scenario::DoubleChsh.noisy_strategy(eps).unwrap()).unwrap();
        let back = epsilon_from_chsh(chsh_value(&b, CopyIndex::I).unwrap()).unwrap();
        prop_assert!((back - eps).abs() < 1e-10);
    }
}

/// min c·y over diag(1 + y_k) ⪰ 0 and a coupling block [[1, y_0], [y_0, 1]] ⪰ 0.
fn small_problem(c: &[f64]) -> SdpProblem {
    let n = c.len();
    let mut p = SdpProblem::new(vec![n, 2]);
    for k in 0..n {
        p.offset.push(0, k, k, 1.0);
        let mut g = SparseSym::default();
        g.push(0, k, k, 1.0);
        if k == 0 {
            g.push(1, 0, 1, 1.0);
        }
        p.constraints.push(g);
    }
    p.offset.push(1, 0, 0, 1.0);
    p.offset.push(1, 1, 1, 1.0);
    p.objective = c.to_vec();
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn weak_duality_and_scaling(c in prop::collection::vec(0.1f64..3.0, 1..5)) {
        let p = small_problem(&c);
        let opts = SolverOptions::default();
        let sol = solve(&p, &opts);
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!(sol.dual_obj <= sol.primal_obj + 1e-7 * (1.0 + sol.primal_obj.abs()));
        let bound = match certify_lower_bound(&p, &sol) {
            Certificate::Certified { bound, .. } => bound,
            Certificate::Rejected { reason } => return Err(TestCaseError::fail(reason)),
        };
        prop_assert!(bound <= sol.primal_obj + 1e-7);

        let doubled: Vec<f64> = c.iter().map(|v| 2.0 * v).collect();
        let sol2 = solve(&small_problem(&doubled), &opts);
        prop_assert!((sol2.primal_obj - 2.0 * sol.primal_obj).abs() < 1e-5 * (1.0 + sol.primal_obj.abs()));
        prop_assert!((sol2.dual_obj - 2.0 * sol.dual_obj).abs() < 1e-5 * (1.0 + sol.dual_obj.abs()));
    }
}

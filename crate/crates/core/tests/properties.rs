use proptest::prelude::*;

use unitary_designs::ensembles::{haar_ensemble, pauli_ensemble, subsample, Provenance, UnitaryEnsemble};
use unitary_designs::harness::{fit_scaling, ScalingRow};
use unitary_designs::norms::{diamond_distance, sampled_one_to_one, HermitianPreservingMap};
use unitary_designs::schur_weyl::exact_twirl;
use unitary_designs::tensor::{derived_rng, ginibre_unitary, kron, kron_power, partial_trace};
use unitary_designs::{Operator, TensorShape, C64};

fn random_operator(dim: usize, seed: u64) -> Operator {
    use rand::Rng;
    let mut rng = derived_rng(seed, 7);
    Operator::from_fn(dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_map(d: usize, seed: u64) -> HermitianPreservingMap {
    let j = random_operator(d * d, seed).hermitian_part();
    HermitianPreservingMap::from_choi(d, d, j).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn twirl_is_an_invariant_trace_preserving_projection(seed in any::<u64>(), t in 1usize..=2, d in 2usize..=3) {
        let dim = d.pow(t as u32);
        let x = random_operator(dim, seed);
        let tx = exact_twirl(&x, t, d).unwrap();
        prop_assert!(exact_twirl(&tx, t, d).unwrap().max_abs_diff(&tx) < 1e-10);
        prop_assert!((tx.trace() - x.trace()).norm() < 1e-10);
        let u = kron_power(&ginibre_unitary(d, &mut derived_rng(seed, 1)), t);
        prop_assert!(u.conjugate(&tx).max_abs_diff(&tx) < 1e-10);
        let rotated = exact_twirl(&u.conjugate(&x), t, d).unwrap();
        prop_assert!(rotated.max_abs_diff(&tx) < 1e-10);
    }

    #[test]
    fn partial_trace_of_product(seed in any::<u64>(), a in 1usize..=3, b in 1usize..=3) {
        let x = random_operator(a, seed);
        let y = random_operator(b, seed ^ 0x55);
        let got = partial_trace(&kron(&x, &y), &TensorShape::bipartite(a, b), &[0]).unwrap();
        prop_assert!(got.max_abs_diff(&x.scale_c(y.trace())) < 1e-12);
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity(seed in any::<u64>(), d in 2usize..=3) {
        let m = random_map(d, seed);
        let x = random_operator(d, seed.wrapping_add(1));
        let y = random_operator(d, seed.wrapping_add(2));
        let lhs = y.hs_inner(&m.apply(&x).unwrap());
        let rhs = m.apply_adjoint(&y).unwrap().hs_inner(&x);
        prop_assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn subsample_is_deterministic_and_sized(seed in any::<u64>(), n in 1usize..=16) {
        let parent = pauli_ensemble(2).unwrap();
        let a = subsample(&parent, n, seed).unwrap();
        let b = subsample(&parent, n, seed).unwrap();
        prop_assert_eq!(a.len(), n);
        prop_assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        for u in a.elements() {
            prop_assert!(u.unitarity_defect() < 1e-12);
        }
    }

    #[test]
    fn ensemble_json_round_trips(seed in any::<u64>(), n in 1usize..=4) {
        let ens = haar_ensemble(2, n, seed).unwrap();
        let back = UnitaryEnsemble::from_json(&ens.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.provenance(), ens.provenance());
        prop_assert_eq!(back.weights(), ens.weights());
        for (u, v) in ens.elements().iter().zip(back.elements()) {
            prop_assert_eq!(u.max_abs_diff(v), 0.0);
        }
        let label = ens.provenance().to_string();
        prop_assert_eq!(&label.parse::<Provenance>().unwrap(), ens.provenance());
    }

    #[test]
    fn fit_ignores_row_order(perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rows: Vec<ScalingRow> = [2usize, 4, 8, 16]
            .iter()
            .flat_map(|&n| (0..3u64).map(move |seed| ScalingRow {
                kind: "t-fold".into(),
                d: 2,
                t: 1,
                n,
                seed,
                value: 3.0 / (n as f64).sqrt() * (1.0 + 0.1 * seed as f64),
                norm_kind: "one-to-infty".into(),
                aux: None,
                wall_ms: 0,
            }))
            .collect();
        let base = fit_scaling(&rows).unwrap();
        rows.shuffle(&mut derived_rng(perm_seed, 0));
        let shuffled = fit_scaling(&rows).unwrap();
        prop_assert!((base.slope - shuffled.slope).abs() < 1e-12);
        prop_assert!((base.intercept - shuffled.intercept).abs() < 1e-12);
        prop_assert!((base.slope + 0.5).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn diamond_is_homogeneous_and_dominates_sampling(seed in any::<u64>(), s in 0.25f64..4.0) {
        let m = random_map(2, seed);
        let base = diamond_distance(&m, 1e-8).unwrap().value;
        let scaled = diamond_distance(&m.scale(s), 1e-8).unwrap().value;
        prop_assert!((scaled - s * base).abs() <= 1e-6 * (1.0 + s * base));
        let sampled = sampled_one_to_one(&m, 64, seed).unwrap();
        prop_assert!(sampled <= base * (1.0 + 1e-6) + 1e-8);
    }
}

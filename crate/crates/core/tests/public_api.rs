//! End-to-end properties through the public API.

use mixedness::certifier::{test_mixed, CertifyVerdict};
use mixedness::haar::haar_unitary;
use mixedness::paninski::{chisq_exact, chisq_exact_f64, enumeration_oracle};
use mixedness::states::{basis_povm, hard_instance_state, outcome_distribution, run_schedule, ScheduleKind, StateSource};
use mixedness::{ComplexMatrix, ComplexMatrixF32, Exact, Field, RngSeed};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn haar_samples_are_unitary(d in 1usize..12, seed in any::<u64>()) {
        let u: ComplexMatrix = haar_unitary(d, &mut RngSeed(seed).rng());
        prop_assert!((&u * &u.adjoint()).max_abs_diff(&ComplexMatrix::identity(d)) < 1e-12);
        let v: ComplexMatrixF32 = haar_unitary(d, &mut RngSeed(seed).rng());
        prop_assert!((&v * &v.adjoint()).max_abs_diff(&ComplexMatrixF32::identity(d)) < 1e-4);
    }

    #[test]
    fn hard_instance_outcome_laws_are_distributions(half in 1usize..6, eps in 0.01f64..1.0, seed in any::<u64>()) {
        let d = 2 * half;
        let mut rng = RngSeed(seed).rng();
        let rho = hard_instance_state(d, eps, &haar_unitary(d, &mut rng)).unwrap();
        let q = outcome_distribution(&rho, &basis_povm(&haar_unitary(d, &mut rng)).unwrap()).unwrap();
        prop_assert!(q.iter().all(|&p| p >= 0.0));
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn schedules_replay_from_their_seed(d in 2usize..6, n in 0usize..20, seed in any::<u64>()) {
        let source = StateSource::HardInstance { d: 2 * d, eps: 0.5 };
        for kind in [ScheduleKind::Fixed, ScheduleKind::FreshHaar, ScheduleKind::GreedyRealign] {
            let schedule = kind.build(2 * d);
            let a = run_schedule(&source, &schedule, n, RngSeed(seed)).unwrap();
            let b = run_schedule(&source, &schedule, n, RngSeed(seed)).unwrap();
            prop_assert_eq!(a.outcomes, b.outcomes);
        }
    }
}

#[test]
fn exact_and_float_chisq_agree_with_enumeration() {
    let eps = Exact::from_u64(1) / Exact::from_u64(2);
    let oracle = enumeration_oracle(4, 0.5, 4).unwrap();
    for n in 0..=4u64 {
        let exact = chisq_exact(4, n, &eps).unwrap().to_f64();
        assert!((exact - oracle.chisq[n as usize]).abs() < 1e-12);
        assert!((chisq_exact_f64(4, n, 0.5).unwrap() - exact).abs() < 1e-12);
    }
}

#[test]
fn certifier_separates_at_moderate_dimension() {
    let d = 8;
    let mixed = StateSource::Fixed(mixedness::states::DensityMatrix::maximally_mixed(d));
    let hard = StateSource::HardInstance { d, eps: 0.5 };
    let root = RngSeed(42);
    let yes = (0..40).filter(|&k| test_mixed(&mixed, d, 0.5, root.derive(k)).unwrap().verdict == CertifyVerdict::Yes);
    let no = (0..40).filter(|&k| test_mixed(&hard, d, 0.5, root.derive(100 + k)).unwrap().verdict == CertifyVerdict::No);
    assert!(yes.count() >= 30);
    assert!(no.count() >= 30);
}

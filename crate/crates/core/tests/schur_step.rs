mod common;

use common::*;
use dip_core::agent::{assemble_local_kkt, schur_contribution, RegularizationPolicy};
use dip_core::linalg::{Inertia, Ldlt};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn decomposed_step_matches_direct_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..50 {
        let inst = random_convex_qp(&mut rng);
        let (s1, l1) = decomposed_step(&inst, 0.05);
        let (s2, l2) = direct_step(&inst, 0.05);
        let err = relative_error(&stacked(&s1, &l1), &stacked(&s2, &l2));
        assert!(err <= 1e-10, "relative error {err:e}");
    }
}

#[test]
fn direct_step_solves_the_linearized_system() {
    // The arrowhead matrix applied to the step must give back -F.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = random_convex_qp(&mut rng);
    let (kkts, residuals) = local_blocks(&inst, 0.1);
    let full = dip_core::oracle::assemble_full_kkt(&inst.problem, &kkts, true).unwrap();
    let (steps, dl) = direct_step(&inst, 0.1);
    let z = stacked(&steps, &dl);
    let kz = full.matrix.mul_vec(&z);
    let mut expected: Vec<f64> = residuals.iter().flatten().map(|v| -v).collect();
    let xs: Vec<&[f64]> = inst.points.iter().map(|p| p.x.as_slice()).collect();
    expected.extend(inst.problem.coupling_residual(&xs).iter().map(|v| -v));
    assert!(relative_error(&kz, &expected) < 1e-10);
}

#[test]
fn local_blocks_of_convex_qp_need_no_regularization() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let inst = random_convex_qp(&mut rng);
        let (kkts, _) = local_blocks(&inst, 0.1);
        for k in &kkts {
            assert_eq!(k.regularization_applied(), 0.0);
            assert!(k.inertia_ok());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn schur_contributions_are_symmetric_psd(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_convex_qp(&mut rng);
        let p = &inst.problem;
        for (i, (sub, pt)) in p.subsystems().iter().zip(&inst.points).enumerate() {
            let local = p.local_residual(i, pt, &inst.lambda).unwrap();
            let mut kkt = assemble_local_kkt(i, sub.dims(), &local.derivatives, pt, 0.1).unwrap();
            kkt.factorize(&RegularizationPolicy::default()).unwrap();
            let c = schur_contribution(&kkt, sub.coupling(), &local.stacked_newton_form(0.1), &pt.x, p.coupling_rhs(), p.len());
            prop_assert!(c.matrix.asymmetry() == 0.0);
            // shifted by a tiny multiple of I it must be positive definite
            let mut m = c.matrix.clone();
            let n = m.nrows();
            let shift = 1e-9 * (1.0 + m.max_abs());
            for k in 0..n {
                m[(k, k)] += shift;
            }
            let inertia = Ldlt::factor(m).unwrap().inertia();
            prop_assert_eq!(inertia, Inertia { positive: n, negative: 0, zero: 0 });
        }
    }

    #[test]
    fn decomposed_and_direct_steps_agree(seed in any::<u64>(), delta in 1e-6f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_convex_qp(&mut rng);
        let (s1, l1) = decomposed_step(&inst, delta);
        let (s2, l2) = direct_step(&inst, delta);
        prop_assert!(relative_error(&stacked(&s1, &l1), &stacked(&s2, &l2)) <= 1e-9);
    }
}

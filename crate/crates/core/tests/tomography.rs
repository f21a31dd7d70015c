use knitsim_core::channels::QuantumChannel;
use knitsim_core::ensembles::EnsembleKind;
use knitsim_core::exec::ExecMode;
use knitsim_core::linalg::*;
use knitsim_core::rng::{KnitRng, StreamKey};
use knitsim_core::tomography::*;
use proptest::prelude::*;

fn rng(seed: u64) -> KnitRng {
    StreamKey::new("tomography-test").rng(seed, 0)
}

#[test]
fn planner_closed_form_values() {
    // 2 (d^2+1)(d+1+eps/3) ln(d/delta) / eps^2 at d=2, eps=delta=0.1.
    let two = 2.0 * 5.0 * (3.0 + 0.1 / 3.0) * 20f64.ln() / 0.01;
    assert_eq!(plan_shots(EnsembleKind::TwoDesign, 2, 1.0, 0.1, 0.1).unwrap(), two.ceil() as u64);
    assert_eq!(plan_shots(EnsembleKind::TwoDesign, 2, 1.0, 0.1, 0.1).unwrap(), 9088);
    // 2 (d^4 + 1 + (eps/3)(d^2+1)) ln(d/delta) / eps^2.
    let pauli = 2.0 * (17.0 + 0.1 / 3.0 * 5.0) * 20f64.ln() / 0.01;
    assert_eq!(plan_shots(EnsembleKind::PauliEigenstates, 2, 1.0, 0.1, 0.1).unwrap(), pauli.ceil() as u64);
    assert_eq!(plan_shots(EnsembleKind::PauliEigenstates, 2, 1.0, 0.1, 0.1).unwrap(), 10286);
    // 2 (10 + 1 + (eps/3)(d^2+1)) ln(d/delta) / eps^2 on one qubit.
    let stab = 2.0 * (11.0 + 0.1 / 3.0 * 5.0) * 20f64.ln() / 0.01;
    assert_eq!(plan_shots(EnsembleKind::StabilizerProduct, 2, 1.0, 0.1, 0.1).unwrap(), stab.ceil() as u64);
}

#[test]
fn planner_rejects_bad_inputs() {
    for (eps, delta) in [(0.0, 0.1), (1.5, 0.1), (0.1, 0.0), (0.1, 2.0), (f64::NAN, 0.1)] {
        assert!(plan_shots(EnsembleKind::TwoDesign, 2, 1.0, eps, delta).is_err());
    }
    assert!(plan_shots(EnsembleKind::TwoDesign, 3, 1.0, 0.1, 0.1).is_err());
    assert!(plan_shots(EnsembleKind::TwoDesign, 2, -1.0, 0.1, 0.1).is_err());
    assert!(plan_shots(EnsembleKind::PauliEigenstates, 1 << 10, 1.0, 1e-3, 1e-3).is_err());
}

#[test]
fn learning_identity_channel_z() {
    let z = HermitianOperator::pauli("Z").unwrap();
    let ch = QuantumChannel::identity(2);
    for kind in EnsembleKind::ALL {
        let task = LearningTask::new(&ch, &z, kind, 200_000, 3);
        let est = learn(&task).unwrap();
        assert_eq!(est.shots_used, 200_000);
        assert!(op_norm(&(est.estimate.matrix() - z.matrix())) < 0.05, "{kind}");
    }
}

#[test]
fn tabulated_and_direct_paths_agree() {
    let mut r = rng(1);
    let ch = QuantumChannel::random(2, 4, 1, &mut r).unwrap();
    let o = HermitianOperator::new(random_hermitian(4, &mut r)).unwrap();
    for kind in EnsembleKind::ALL {
        let task = LearningTask::new(&ch, &o, kind, 40_000, 9);
        let a = learn(&task).unwrap();
        let b = learn_direct(&task).unwrap();
        assert!(max_abs_diff(a.estimate.matrix(), b.estimate.matrix()) < 1e-11, "{kind}");
    }
}

#[test]
fn result_is_independent_of_execution_mode() {
    let mut r = rng(2);
    let ch = QuantumChannel::random(4, 4, 1, &mut r).unwrap();
    let o = HermitianOperator::pauli("ZX").unwrap();
    let task = LearningTask::new(&ch, &o, EnsembleKind::TwoDesign, 100_000, 5);
    let par = learn(&task.clone().with_exec(ExecMode::Parallel)).unwrap();
    let seq = learn(&task.with_exec(ExecMode::Sequential)).unwrap();
    assert_eq!(par.estimate.matrix(), seq.estimate.matrix());
}

#[test]
fn streams_separate_results() {
    let ch = QuantumChannel::identity(2);
    let z = HermitianOperator::pauli("Z").unwrap();
    let a = learn(&LearningTask::new(&ch, &z, EnsembleKind::TwoDesign, 1000, 1)).unwrap();
    let b = learn(&LearningTask::new(&ch, &z, EnsembleKind::TwoDesign, 1000, 1).with_stream(StreamKey::new("other"))).unwrap();
    assert_ne!(a.estimate.matrix(), b.estimate.matrix());
}

#[test]
fn learning_rejects_mismatched_tasks() {
    let ch = QuantumChannel::identity(2);
    let zz = HermitianOperator::pauli("ZZ").unwrap();
    assert!(learn(&LearningTask::new(&ch, &zz, EnsembleKind::TwoDesign, 10, 1)).is_err());
    let z = HermitianOperator::pauli("Z").unwrap();
    assert!(learn(&LearningTask::new(&ch, &z, EnsembleKind::TwoDesign, 0, 1)).is_err());
}

#[test]
fn planned_shots_reach_accuracy_on_most_trials() {
    // Quick version of the statistical guarantee, at a loose accuracy.
    let mut r = rng(3);
    let ch = QuantumChannel::random(2, 2, 1, &mut r).unwrap();
    let o = HermitianOperator::pauli("Z").unwrap();
    let exact = ch.adjoint_apply(&o).unwrap();
    let (eps, delta) = (0.3, 0.1);
    for kind in EnsembleKind::ALL {
        let n = plan_shots(kind, 2, 1.0, eps, delta).unwrap();
        let ok = (0..20)
            .filter(|&t| {
                let est = learn(&LearningTask::new(&ch, &o, kind, n, t)).unwrap();
                op_norm(&(est.estimate.matrix() - exact.matrix())) <= eps
            })
            .count();
        assert!(ok >= 17, "{kind}: {ok}/20");
    }
}

#[test]
fn clipping_caps_the_spectrum() {
    let ch = QuantumChannel::identity(2);
    let z = HermitianOperator::pauli("Z").unwrap();
    let est = learn(&LearningTask::new(&ch, &z, EnsembleKind::PauliEigenstates, 20, 1)).unwrap().clipped(1.0);
    assert!(est.estimate.op_norm() <= 1.0 + 1e-12);
    assert_eq!(est.norm_bound_cap, Some(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bernstein_tail_at_plan_is_below_delta(
        kind in prop::sample::select(EnsembleKind::ALL.to_vec()),
        n in 1usize..=3,
        eps in 0.01f64..=1.0,
        delta in 0.001f64..=1.0,
        norm in 0.1f64..3.0,
    ) {
        let d = 1usize << n;
        let shots = plan_shots(kind, d, norm, eps, delta).unwrap();
        let (a, s) = bernstein_constants(kind, d, norm);
        prop_assert!(bernstein_tail(shots, a, s, d, eps) <= delta * (1.0 + 1e-12));
    }

    #[test]
    fn plan_is_monotone_in_accuracy(
        kind in prop::sample::select(EnsembleKind::ALL.to_vec()),
        eps in 0.01f64..=1.0,
        shrink in 0.1f64..1.0,
        delta in 0.001f64..=1.0,
    ) {
        let loose = plan_shots(kind, 4, 1.0, eps, delta).unwrap();
        let tight = plan_shots(kind, 4, 1.0, eps * shrink, delta).unwrap();
        let tighter_delta = plan_shots(kind, 4, 1.0, eps, delta * shrink).unwrap();
        prop_assert!(tight >= loose && tighter_delta >= loose);
    }

    #[test]
    fn learning_is_reproducible(seed in any::<u64>()) {
        let ch = QuantumChannel::identity(2);
        let x = HermitianOperator::pauli("X").unwrap();
        let task = LearningTask::new(&ch, &x, EnsembleKind::StabilizerProduct, 500, seed);
        let (a, b) = (learn(&task).unwrap(), learn(&task).unwrap());
        prop_assert_eq!(a.estimate.matrix(), b.estimate.matrix());
    }
}

use knitsim_core::channels::*;
use knitsim_core::knitting::*;
use knitsim_core::linalg::*;
use knitsim_core::rng::{KnitRng, StreamKey};
use knitsim_core::tomography::LearnedObservable;
use knitsim_core::ensembles::EnsembleKind;
use proptest::prelude::*;

fn rng(seed: u64) -> KnitRng {
    StreamKey::new("knitting-test").rng(seed, 0)
}

/// Random `(Φ, O, ρ)` on a `d`-dimensional wire.
fn instance(d: usize, r: &mut KnitRng) -> (QuantumChannel, HermitianOperator, DensityOperator) {
    let ch = QuantumChannel::random(d, d, 1, r).unwrap();
    let o = HermitianOperator::new(random_hermitian(d, r)).unwrap();
    let rho = DensityOperator::new(random_density_matrix(d, d, r)).unwrap();
    (ch, o, rho)
}

#[test]
fn exact_cut_preserves_expectation_on_200_instances() {
    let mut r = rng(1);
    for k in 0..200 {
        let d = if k % 2 == 0 { 2 } else { 4 };
        let (ch, o, rho) = instance(d, &mut r);
        let mp = exact_cut(&ch, &o).unwrap();
        let uncut = ch.apply(&rho).unwrap().expectation(&o).unwrap();
        let cut = ch.apply(&mp.mp_apply(&rho).unwrap()).unwrap().expectation(&o).unwrap();
        assert!((cut - uncut).abs() <= 1e-10, "instance {k}: {cut} vs {uncut}");
    }
}

#[test]
fn exact_cut_of_identity_channel_with_z_is_computational_basis() {
    let z = HermitianOperator::pauli("Z").unwrap();
    let mp = exact_cut(&QuantumChannel::identity(2), &z).unwrap();
    assert!(max_abs_diff(mp.basis(), &identity(2)) < 1e-15);
}

/// A perturbation of `m` with operator norm exactly `eps`.
fn perturb(m: &CMatrix, eps: f64, r: &mut KnitRng) -> HermitianOperator {
    let e = random_hermitian(m.nrows(), r);
    HermitianOperator::new(m + e.scale(eps / op_norm(&e))).unwrap()
}

#[test]
fn approximate_cut_bias_bounds() {
    let mut r = rng(2);
    for eps in [0.01, 0.05, 0.2] {
        for k in 0..100 {
            let d = if k % 2 == 0 { 2 } else { 4 };
            let (ch, o, _) = instance(d, &mut r);
            let o = HermitianOperator::new(o.matrix().unscale(o.op_norm())).unwrap();
            let eff = ch.adjoint_apply(&o).unwrap();
            let est = perturb(eff.matrix(), eps, &mut r);
            // Inputs are arbitrary operators, not just states.
            let x = random_hermitian(d, &mut r) + random_hermitian(d, &mut r).map(|z| z * I);
            let x1 = trace_norm(&x);
            let target = trace(&(eff.matrix() * &x)).re;

            let chan = RescalingFreeCut::from_estimate(&est, CutMode::Channel, eps).unwrap();
            let out = ch.apply_matrix(&chan.mp.pinch(&x).unwrap()).unwrap();
            let bias_a = (trace(&(o.matrix() * out)).re - target).abs();
            assert!(bias_a <= chan.bias_bound(x1) + 1e-12, "channel mode eps={eps} k={k}");

            let cls = RescalingFreeCut::from_estimate(&est, CutMode::Classical, eps).unwrap();
            let weighted = cls.mp.weighted_observable().unwrap();
            let bias_b = (trace(&(weighted.matrix() * &x)).re - target).abs();
            assert!(bias_b <= cls.bias_bound(x1) + 1e-12, "classical mode eps={eps} k={k}");
            assert!(cls.max_weight().unwrap() <= o.op_norm() + eps + 1e-9);
        }
    }
}

#[test]
fn approx_cut_uses_learned_estimate() {
    let est = HermitianOperator::pauli("Z").unwrap();
    let learned = LearnedObservable { estimate: est, shots_used: 1, kind: EnsembleKind::TwoDesign, norm_bound_cap: None };
    let cut = approx_cut(&learned, CutMode::Classical, 0.1).unwrap();
    assert_eq!(cut.mp.weights().unwrap(), &[1.0, -1.0]);
    assert_eq!(cut.bias_bound(2.0), 0.2);
}

#[test]
fn two_block_cuts_are_exact() {
    let mut r = rng(3);
    for k in 0..20 {
        let u1 = QuantumChannel::random(4, 4, 1, &mut r).unwrap();
        let u2 = QuantumChannel::random(4, 4, 1, &mut r).unwrap();
        let o1 = HermitianOperator::new(random_hermitian(2, &mut r)).unwrap();
        let o2 = HermitianOperator::new(random_hermitian(4, &mut r)).unwrap();
        let rep = two_block_check(&u1, &u2, &o1, &o2).unwrap();
        assert!(rep.dev_in <= 1e-10 && rep.dev_out <= 1e-10, "k={k}: {rep:?}");
    }
}

#[test]
fn rotated_z_cut_equals_pinching() {
    let mut r = rng(4);
    for n in 1..=2 {
        let u = haar_unitary(1 << n, &mut r);
        assert!(rotated_pinching_deviation(&u).unwrap() <= 1e-12);
    }
}

#[test]
fn pauli_qpd_terms_sum_to_identity_channel() {
    let mut r = rng(5);
    for n in 1..=2 {
        let cut = QpdWireCut::pauli(n).unwrap();
        assert_eq!(cut.gamma(), 4f64.powi(n as i32));
        let d = cut.dim();
        let x = random_hermitian(d, &mut r);
        let mut sum = CMatrix::zeros(d, d);
        for i in 0..cut.num_terms() {
            sum += cut.apply_term(i, &x).unwrap();
        }
        assert!(max_abs_diff(&sum, &x) < 1e-12);
    }
    assert!(QpdWireCut::pauli(0).is_err());
    assert!(QpdWireCut::pauli(7).is_err());
}

#[test]
fn pauli_qpd_sampling_is_unbiased() {
    // Cut the wire of |0><0|, then measure Z: exact value 1.
    let cut = QpdWireCut::pauli(1).unwrap();
    let rho = outer(&basis_vector(2, 0));
    let z = pauli(3);
    let mut r = rng(6);
    let n = 400_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let s = cut.sample(&rho, &mut r).unwrap();
        acc += s.weight * (s.state.adjoint() * &z * &s.state)[(0, 0)].re;
        assert_eq!(s.weight.abs(), 4.0);
    }
    let mean = acc / n as f64;
    assert!((mean - 1.0).abs() < 5.0 * 4.0 / (n as f64).sqrt(), "mean {mean}");
}

#[test]
fn qpd_counts() {
    assert_eq!(optimal_gamma(2), 3.0);
    assert_eq!(optimal_gamma(4), 7.0);
    let one = qpd_hoeffding_shots(3.0, 1, 0.1, 0.1);
    let two = qpd_hoeffding_shots(3.0, 2, 0.1, 0.1);
    assert!((two / one - 9.0).abs() < 1e-12);
    assert!((one - 2.0 * 9.0 * 20f64.ln() / 0.01).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn classical_weights_are_estimate_spectrum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let est = HermitianOperator::new(random_hermitian(4, &mut r)).unwrap();
        let cut = RescalingFreeCut::from_estimate(&est, CutMode::Classical, 0.1).unwrap();
        let back = cut.mp.weighted_observable().unwrap();
        prop_assert!(max_abs_diff(back.matrix(), est.matrix()) <= 1e-10);
        prop_assert!((cut.max_weight().unwrap() - est.op_norm()).abs() <= 1e-10);
    }
}

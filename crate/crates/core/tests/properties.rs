//! Property tests over random inputs.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qudit_indel::code::{encode, kl_check, logical_codeword, LogicalCodewords};
use qudit_indel::codefile::example_code;
use qudit_indel::conditions::{
    bijection_witness, check_del_conditions, check_ins_conditions, delta_minus, delta_plus, CodeSpec,
};
use qudit_indel::decoder::{
    decode_channel_exact, decode_exact, decode_sampled, predicted_probs, synthesize, Outcome, Tolerances,
};
use qudit_indel::kraus::{
    build_deletion_kraus, build_insertion_kraus, deletion_operator, insertion_operator, InsertedState,
    PositionDistribution,
};
use qudit_indel::linalg::{
    complete_to_unitary, gram_schmidt, max_gram_deviation, DensityMatrix, Operator, QuditDims, StateVector, C64,
};
use qudit_indel::random::{random_amplitudes, random_code, random_distribution, random_unitary};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_state(dims: QuditDims, r: &mut ChaCha8Rng) -> StateVector {
    StateVector::from_amplitudes(dims, random_amplitudes(dims.size(), r)).unwrap()
}

fn random_operator(out: QuditDims, inp: QuditDims, r: &mut ChaCha8Rng) -> Operator {
    let m = DMatrix::from_fn(out.size(), inp.size(), |_, _| random_amplitudes(1, r)[0] * 0.7);
    Operator::from_dense(out, inp, &m).unwrap()
}

fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_schmidt_is_orthonormal_and_scale_invariant(seed in any::<u64>(), count in 1usize..7, scale in 0.1f64..10.0) {
        let mut r = rng(seed);
        let dims = QuditDims::new(2, 3).unwrap();
        let mut gens: Vec<StateVector> = (0..count).map(|_| random_state(dims, &mut r)).collect();
        // a dependent vector must be dropped
        let mut dep = gens[0].scaled(C64::new(2.0, -1.0));
        dep.add_scaled(C64::new(0.5, 0.0), &gens[count - 1]).unwrap();
        gens.push(dep);
        let fam = gram_schmidt(&gens, 1e-9).unwrap();
        prop_assert_eq!(fam.len(), count);
        prop_assert!(fam.orthonormality_deviation() < 1e-10);
        prop_assert!(max_gram_deviation(fam.vectors()) < 1e-10);
        let scaled: Vec<StateVector> = gens.iter().map(|v| v.scaled(C64::new(scale, 0.0))).collect();
        let fam2 = gram_schmidt(&scaled, 1e-9).unwrap();
        for (a, b) in fam.vectors().iter().zip(fam2.vectors()) {
            prop_assert!(a.max_abs_diff(b) < 1e-9);
        }
    }

    #[test]
    fn completed_unitary_maps_vectors_to_targets(seed in any::<u64>(), count in 1usize..5) {
        let mut r = rng(seed);
        let dims = QuditDims::new(3, 2).unwrap();
        let v: Vec<StateVector> = (0..count).map(|_| random_state(dims, &mut r)).collect();
        let t: Vec<StateVector> = (0..count).map(|_| random_state(dims, &mut r)).collect();
        let v = gram_schmidt(&v, 1e-9).unwrap().vectors().to_vec();
        let t = gram_schmidt(&t, 1e-9).unwrap().vectors().to_vec();
        let u = complete_to_unitary(&v, &t, 1e-9).unwrap();
        prop_assert!(u.unitarity_deviation() < 1e-10);
        let dense = u.to_dense();
        prop_assert!(max_diff(&(dense.adjoint() * &dense), &DMatrix::identity(9, 9)) < 1e-10);
        for (a, b) in v.iter().zip(&t) {
            prop_assert!(u.apply(a).unwrap().max_abs_diff(b) < 1e-10);
        }
    }

    #[test]
    fn tensor_is_associative_and_dagger_distributes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d1 = QuditDims::new(2, 1).unwrap();
        let d2 = QuditDims::new(2, 2).unwrap();
        let a = random_operator(d1, d2, &mut r);
        let b = random_operator(d2, d1, &mut r);
        let c = random_operator(d1, d1, &mut r);
        let left = a.tensor(&b).unwrap().tensor(&c).unwrap();
        let right = a.tensor(&b.tensor(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
        let dag = a.tensor(&b).unwrap().dagger();
        prop_assert!(dag.max_abs_diff(&a.dagger().tensor(&b.dagger()).unwrap()) < 1e-12);
    }

    #[test]
    fn channels_preserve_trace(seed in any::<u64>(), l in 2usize..4, n in 1usize..4) {
        let mut r = rng(seed);
        let dims = QuditDims::new(l, n).unwrap();
        let psi = random_state(dims, &mut r);
        let rho = DensityMatrix::from_pure(&psi);
        let del = build_deletion_kraus(n, l, &PositionDistribution::new(random_distribution(n, 0.0, &mut r)).unwrap()).unwrap();
        let sigma = InsertedState::new(random_distribution(l, 0.0, &mut r), random_unitary(l, &mut r)).unwrap();
        let ins = build_insertion_kraus(n, &sigma, &PositionDistribution::new(random_distribution(n + 1, 0.0, &mut r)).unwrap()).unwrap();
        for ks in [&del, &ins] {
            prop_assert!(ks.completeness_deviation() < 1e-10);
            let out = ks.apply_mixed(&rho).unwrap();
            prop_assert!((out.trace().re - 1.0).abs() < 1e-10);
            prop_assert!(out.min_eigenvalue() > -1e-10);
            // pure input: the mixed and pure paths agree
            prop_assert!(out.max_abs_diff(&ks.apply_pure(&psi).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn del_and_ins_checkers_agree(seed in any::<u64>(), l in 2usize..4, n in 2usize..6) {
        let code = random_code(l, n, 4, &mut rng(seed));
        let d = check_del_conditions(&code);
        let i = check_ins_conditions(&code);
        prop_assert_eq!(d.satisfied, i.satisfied);
        prop_assert_eq!(d.ratio_condition_holds(), i.ratio_condition_holds());
        prop_assert_eq!(d.distance_condition_holds(), i.distance_condition_holds());
    }

    #[test]
    fn bijection_identities_hold(seed in any::<u64>(), l in 2usize..4, n in 2usize..6) {
        let mut r = rng(seed);
        let code = random_code(l, n, 6, &mut r);
        for a in code.classes() {
            for p1 in 1..=n {
                for p2 in p1..=n {
                    for b1 in 0..l as u8 {
                        for b2 in 0..l as u8 {
                            prop_assert!(bijection_witness(a, p1, b1, p2, b2).unwrap());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn kl_entries_count_shared_shadows(seed in any::<u64>(), l in 2usize..4, n in 2usize..5) {
        let code = random_code(l, n, 4, &mut rng(seed));
        let norm = |i: usize, j: usize| ((code.class(i).len() * code.class(j).len()) as f64).sqrt();
        let cws: Vec<StateVector> = (0..l).map(|i| logical_codeword(&code, i).unwrap()).collect();
        let sigma = InsertedState::from_probabilities(&vec![1.0 / l as f64; l]).unwrap();
        for (p1, b1, p2, b2) in [(1, 0u8, n, 1u8), (1, 1, 2, 1), (n, 0, n, 0)] {
            for i in 0..l {
                for j in 0..l {
                    let d1 = deletion_operator(l, p1, b1, n - 1).unwrap();
                    let d2 = deletion_operator(l, p2, b2, n - 1).unwrap();
                    let got = d1.apply(&cws[i]).unwrap().inner(&d2.apply(&cws[j]).unwrap());
                    let shared = delta_minus(code.class(i), p1, b1).intersection(&delta_minus(code.class(j), p2, b2)).count();
                    prop_assert!((got - C64::new(shared as f64 / norm(i, j), 0.0)).norm() < 1e-12);

                    let e1 = insertion_operator(p1, &sigma.eigenvector(b1 as usize), n).unwrap();
                    let e2 = insertion_operator(p2 + 1, &sigma.eigenvector(b2 as usize), n).unwrap();
                    let got = e1.apply(&cws[i]).unwrap().inner(&e2.apply(&cws[j]).unwrap());
                    let shared = delta_plus(code.class(i), p1, b1).intersection(&delta_plus(code.class(j), p2 + 1, b2)).count();
                    prop_assert!((got - C64::new(shared as f64 / norm(i, j), 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn kl_check_matches_conditions(seed in any::<u64>(), l in 2usize..4, n in 2usize..5) {
        let mut r = rng(seed);
        let code = random_code(l, n, 4, &mut r);
        let cw = LogicalCodewords::new(&code).unwrap();
        let del = build_deletion_kraus(n, l, &PositionDistribution::new(random_distribution(n, 0.5, &mut r)).unwrap()).unwrap();
        let rep = kl_check(&cw, &del, 1e-9).unwrap();
        prop_assert_eq!(rep.satisfied, check_del_conditions(&code).satisfied);
        prop_assert!(rep.mu_hermiticity_deviation() < 1e-12);
        let eig = rep.mu.clone().symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|&x| x > -1e-10));
    }

    #[test]
    fn encode_preserves_inner_products(seed in any::<u64>()) {
        let mut r = rng(seed);
        let code = example_code();
        let a = random_amplitudes(3, &mut r);
        let b = random_amplitudes(3, &mut r);
        let logical: C64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        let physical = encode(&code, &a).unwrap().inner(&encode(&code, &b).unwrap());
        prop_assert!((logical - physical).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn decoding_recovers_any_state(seed in any::<u64>(), insertion in any::<bool>()) {
        let mut r = rng(seed);
        let cw = LogicalCodewords::new(&example_code()).unwrap();
        let ks = if insertion {
            let sigma = InsertedState::new(random_distribution(3, 0.3, &mut r), random_unitary(3, &mut r)).unwrap();
            build_insertion_kraus(6, &sigma, &PositionDistribution::new(random_distribution(7, 0.3, &mut r)).unwrap()).unwrap()
        } else {
            build_deletion_kraus(6, 3, &PositionDistribution::new(random_distribution(6, 0.3, &mut r)).unwrap()).unwrap()
        };
        let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
        prop_assert!(plan.orthonormality_deviation() < 1e-9);
        prop_assert!(plan.correction_deviation() < 1e-9);
        let probs = predicted_probs(&plan, &ks).unwrap();
        let alphas = random_amplitudes(3, &mut r);
        let psi = cw.encode(&alphas).unwrap();
        let dense = decode_exact(&plan, &ks.apply_pure(&psi).unwrap(), Some(&alphas)).unwrap();
        let branch = decode_channel_exact(&plan, &ks, &psi, Some(&alphas)).unwrap();
        prop_assert!((dense.total_probability - 1.0).abs() < 1e-10);
        prop_assert!(dense.probability_of(Outcome::Null) < 1e-10);
        prop_assert!(dense.min_fidelity().unwrap() > 1.0 - 1e-10);
        for (k, p) in probs.iter().enumerate() {
            let o = Outcome::Syndrome(k + 1);
            prop_assert!((dense.probability_of(o) - p).abs() < 1e-10);
            prop_assert!((branch.probability_of(o) - p).abs() < 1e-10);
        }
    }

    #[test]
    fn plan_is_independent_of_weights(seed in any::<u64>()) {
        let mut r = rng(seed);
        let cw = LogicalCodewords::new(&example_code()).unwrap();
        let uniform = build_deletion_kraus(6, 3, &PositionDistribution::uniform(6).unwrap()).unwrap();
        let skewed = build_deletion_kraus(6, 3, &PositionDistribution::new(random_distribution(6, 0.0, &mut r)).unwrap()).unwrap();
        let a = synthesize(&cw, &uniform, Tolerances::default()).unwrap();
        let b = synthesize(&cw, &skewed, Tolerances::default()).unwrap();
        prop_assert_eq!(a.d(), b.d());
        prop_assert!(max_diff(a.coeffs(), b.coeffs()) < 1e-12);
        prop_assert!(max_diff(a.beta(), b.beta()) < 1e-12);
    }
}

#[test]
fn predicted_probabilities_do_not_depend_on_the_logical_state() {
    let mut r = rng(9);
    let cw = LogicalCodewords::new(&example_code()).unwrap();
    let ks = build_deletion_kraus(6, 3, &PositionDistribution::new(random_distribution(6, 0.2, &mut r)).unwrap()).unwrap();
    let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
    let predicted = predicted_probs(&plan, &ks).unwrap();
    for _ in 0..10 {
        let alphas = random_amplitudes(3, &mut r);
        let res = decode_exact(&plan, &ks.apply_pure(&cw.encode(&alphas).unwrap()).unwrap(), None).unwrap();
        for (k, p) in predicted.iter().enumerate() {
            assert!((res.probability_of(Outcome::Syndrome(k + 1)) - p).abs() < 1e-10);
        }
    }
}

#[test]
fn channel_output_is_the_branch_mixture() {
    let mut r = rng(10);
    let dims = QuditDims::new(3, 3).unwrap();
    let psi = random_state(dims, &mut r);
    let sigma = InsertedState::new(vec![0.6, 0.3, 0.1], random_unitary(3, &mut r)).unwrap();
    let ks = build_insertion_kraus(3, &sigma, &PositionDistribution::uniform(4).unwrap()).unwrap();
    let mut mix = DMatrix::zeros(81, 81);
    for e in ks.elements() {
        let v = e.op.apply(&psi).unwrap();
        mix += v.amplitudes() * v.amplitudes().adjoint() * C64::new(e.weight, 0.0);
    }
    assert!(max_diff(ks.apply_pure(&psi).unwrap().matrix(), &mix) < 1e-12);
}

#[test]
fn sampled_frequencies_within_three_sigma() {
    let mut r = rng(11);
    let cw = LogicalCodewords::new(&example_code()).unwrap();
    let ks = build_deletion_kraus(6, 3, &PositionDistribution::new(random_distribution(6, 0.2, &mut r)).unwrap()).unwrap();
    let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
    let alphas = random_amplitudes(3, &mut r);
    let trials = 20_000u64;
    let sim = decode_sampled(&plan, &cw.encode(&alphas).unwrap(), Some(&alphas), &ks, trials, 5).unwrap();
    for (k, p) in predicted_probs(&plan, &ks).unwrap().iter().enumerate() {
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        let f = sim.frequency(Outcome::Syndrome(k + 1));
        assert!((f - p).abs() <= 3.0 * sd + 1e-12, "k={} f={f} p={p}", k + 1);
    }
    assert!(sim.mean_fidelity.unwrap() > 1.0 - 1e-10);
}

// Scenario checks on the bundled code.

#[test]
fn pure_inserted_ground_state_only_uses_symbol_zero() {
    let cw = LogicalCodewords::new(&example_code()).unwrap();
    let sigma = InsertedState::from_probabilities(&[1.0, 0.0, 0.0]).unwrap();
    let ks = build_insertion_kraus(6, &sigma, &PositionDistribution::uniform(7).unwrap()).unwrap();
    let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
    let probs = predicted_probs(&plan, &ks).unwrap();
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let alphas = random_amplitudes(3, &mut rng(12));
    let psi = cw.encode(&alphas).unwrap();
    let res = decode_exact(&plan, &ks.apply_pure(&psi).unwrap(), Some(&alphas)).unwrap();
    assert!(res.min_fidelity().unwrap() > 1.0 - 1e-10);
    // branches with b != 0 carry no weight
    for (idx, p) in ks.branch_probabilities(&psi).unwrap().iter().enumerate() {
        if idx >= 7 {
            assert_eq!(*p, 0.0);
        }
    }
}

#[test]
fn maximally_mixed_insertion_is_corrected() {
    let cw = LogicalCodewords::new(&example_code()).unwrap();
    let sigma = InsertedState::from_density(&DensityMatrix::maximally_mixed(QuditDims::new(3, 1).unwrap())).unwrap();
    let ks = build_insertion_kraus(6, &sigma, &PositionDistribution::uniform(7).unwrap()).unwrap();
    let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
    assert_eq!(plan.d(), 21);
    let alphas = random_amplitudes(3, &mut rng(13));
    let res = decode_exact(&plan, &ks.apply_pure(&cw.encode(&alphas).unwrap()).unwrap(), Some(&alphas)).unwrap();
    assert!(res.min_fidelity().unwrap() > 1.0 - 1e-10);
    assert!((res.total_probability - 1.0).abs() < 1e-10);
}

#[test]
fn deletion_at_first_position_hits_three_syndromes() {
    let cw = LogicalCodewords::new(&example_code()).unwrap();
    let ks = build_deletion_kraus(6, 3, &PositionDistribution::one_hot(6, 1).unwrap()).unwrap();
    let plan = synthesize(&cw, &ks, Tolerances::default()).unwrap();
    let alphas = random_amplitudes(3, &mut rng(14));
    let res = decode_exact(&plan, &ks.apply_pure(&cw.encode(&alphas).unwrap()).unwrap(), Some(&alphas)).unwrap();
    let hit: Vec<usize> = (1..=9)
        .filter(|&k| res.probability_of(Outcome::Syndrome(k)) > 1e-12)
        .collect();
    assert_eq!(hit, vec![1, 4, 7]);
    for k in hit {
        assert!((res.probability_of(Outcome::Syndrome(k)) - 1.0 / 3.0).abs() < 1e-12);
    }
    assert!(res.min_fidelity().unwrap() > 1.0 - 1e-10);
}

#[test]
fn mismatched_codes_are_rejected() {
    assert!(CodeSpec::from_strings(3, 6, &[vec!["012"], vec!["000000"], vec!["111111"]]).is_err());
}

mod common;

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use common::{c, controlled, density_evolve, filtered_state, tv};
use num_complex::Complex64;
use proptest::prelude::*;
use qpca_hjm::fixtures::{rho2, rho4};
use qpca_hjm::linalg::{eigh, normalize_to_density, ComplexMatrix, DensityMatrix, HermitianMatrix};
use qpca_hjm::qpca::{
    build_qpca_circuit, check_ambiguity, haar_random_state, nearest_bitstring, qpca_iterate, qpe_refine,
    recover_phases, recover_state_phases, run_qpca, select_target, QpcaConfig, Verdict,
};
use qpca_hjm::qsim::{self, bits_value, project_register, run_circuit, to_bits, Gate, NoiseModel, StateVector};
use qpca_hjm::Error;

const U1: [f64; 2] = [0.8347, 0.5508];

fn cfg(n_bits: usize, target: Option<&str>) -> QpcaConfig {
    QpcaConfig { n_bits, target_bitstring: target.map(String::from), seed: 7, ..Default::default() }
}

fn leading(rho: &DensityMatrix) -> Vec<Complex64> {
    eigh(rho.hermitian()).unwrap().eigenvectors[0].clone()
}

fn density(rows: &[Vec<f64>]) -> DensityMatrix {
    normalize_to_density(&HermitianMatrix::from_real_rows(rows).unwrap()).unwrap()
}

/// Direct statevector run and projection of the eigenvalue register.
fn project(rho: &DensityMatrix, b: &StateVector, n: usize, y: &str) -> qpca_hjm::Result<(StateVector, f64)> {
    let circ = build_qpca_circuit(rho, &cfg(n, None)).unwrap();
    let out = run_circuit(&circ, &StateVector::zero(n).tensor(b), None).unwrap();
    project_register(&out, circ.register("eigenvalue").unwrap(), y)
}

fn random_density(dim: usize, seed: u64) -> DensityMatrix {
    let a = common::random_hermitian(dim, seed);
    let psd = &a * &a.adjoint();
    normalize_to_density(&HermitianMatrix::new(psd).unwrap()).unwrap()
}

#[test]
fn projection_matches_analytic_filter_on_every_fixture() {
    let cases: Vec<(DensityMatrix, Vec<usize>)> =
        vec![(rho2(), vec![1, 2, 3, 4]), (rho4(), vec![1, 2, 3]), (random_density(2, 4), vec![2, 3]), (random_density(4, 5), vec![1, 2])];
    for (rho, bit_widths) in cases {
        let m = rho.dim().trailing_zeros() as usize;
        for n in bit_widths {
            for start in [StateVector::uniform(m), haar_random_state(m, 11)] {
                for y in 0..(1usize << n) {
                    let (expected, p_expected) = filtered_state(&rho, start.amplitudes(), y, n);
                    match project(&rho, &start, n, &to_bits(y, n)) {
                        Ok((state, p)) => {
                            assert!((p - p_expected).abs() < 1e-10, "n={n} y={y}: {p} vs {p_expected}");
                            assert!(common::fidelity(state.amplitudes(), &expected) > 1.0 - 1e-10);
                        }
                        Err(Error::DegenerateProjection { .. }) => assert!(p_expected < 1e-12),
                        Err(e) => panic!("{e}"),
                    }
                }
            }
        }
    }
}

#[test]
fn one_projection_of_plus_for_rho2() {
    let rho = rho2();
    let (state, p) = project(&rho, &StateVector::uniform(1), 2, "11").unwrap();
    let (expected, p_expected) = filtered_state(&rho, StateVector::uniform(1).amplitudes(), 3, 2);
    let f = state.fidelity(&StateVector::new(leading(&rho)).unwrap());
    // Analytic filter value: 0.9948. One projection leaves a residual
    // 0.2·|g(λ₂)/g(λ₁)| ≈ 0.07 of the second eigenvector.
    assert!((f - common::fidelity(&expected, &leading(&rho))).abs() < 1e-10);
    assert!(f >= 0.99);
    assert!((p - p_expected).abs() < 1e-12);
    let mags: Vec<f64> = state.amplitudes().iter().map(|z| z.norm()).collect();
    assert!((mags[0] - 0.797).abs() < 1e-3 && (mags[1] - 0.604).abs() < 1e-3);
}

#[test]
fn one_projection_of_uniform_for_rho4() {
    let rho = rho4();
    let (state, _) = project(&rho, &StateVector::uniform(2), 1, "1").unwrap();
    let f = state.fidelity(&StateVector::new(leading(&rho)).unwrap());
    assert!((f - 0.99).abs() < 0.005, "fidelity {f}");
}

#[test]
fn circuit_structure_for_three_bits() {
    let circ = build_qpca_circuit(&rho2(), &cfg(3, None)).unwrap();
    assert_eq!(circ.n_qubits(), 4);
    let rotations: Vec<u32> = circ
        .gates()
        .iter()
        .filter_map(|g| match g {
            Gate::PhaseRotation { k, dagger: true, .. } => Some(*k),
            _ => None,
        })
        .collect();
    assert!(rotations.contains(&3), "controlled T-dagger stage expected");
    assert_eq!(circ.gates().iter().filter(|g| g.kind() == "cu").count(), 3);
}

#[test]
fn non_power_of_two_dimension_is_rejected() {
    let rho = density(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    assert!(matches!(build_qpca_circuit(&rho, &cfg(2, None)), Err(Error::Validation(_))));
}

#[test]
fn rho2_iteration_converges() {
    let rho = rho2();
    let trace = qpca_iterate(&rho, &StateVector::uniform(1), &cfg(2, Some("11"))).unwrap();
    assert!(trace.converged);
    assert!(trace.iterations <= 4);
    assert!(trace.records.last().unwrap().oracle_fidelity >= 0.995);
    let result = run_qpca(&rho, &StateVector::uniform(1), &cfg(2, Some("11"))).unwrap();
    assert!(result.oracle_fidelity.unwrap() >= 0.999);
    assert_eq!(result.eigenvalue, 0.75);

    // Iteration 1 against the exact filtered magnitudes.
    let (expected, _) = filtered_state(&rho, StateVector::uniform(1).amplitudes(), 3, 2);
    let first = &trace.records[0];
    let n = first.accepted_shots as f64;
    for (got, want) in first.magnitudes.iter().zip(&expected) {
        let p = want.norm_sqr();
        let sigma = (p * (1.0 - p) / n).sqrt();
        assert!((got * got - p).abs() <= 3.0 * sigma);
    }
    for r in &trace.records {
        let sum: f64 = r.magnitudes.iter().map(|m| m * m).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

#[test]
fn eigenstate_is_stationary() {
    for (rho, n, y) in [(rho2(), 2, "11"), (rho4(), 1, "1")] {
        let u = StateVector::new(leading(&rho)).unwrap();
        let (out, _) = project(&rho, &u, n, y).unwrap();
        assert!(out.fidelity(&u) >= 1.0 - 1e-9);
        let trace = qpca_iterate(&rho, &u, &QpcaConfig { max_iterations: 1, ..cfg(n, Some(y)) }).unwrap();
        assert!(trace.records[0].fidelity_to_previous >= 0.999);
    }
}

#[test]
fn shot_free_iteration_is_monotone() {
    for (rho, n, y, start) in [
        (rho2(), 2, "11", StateVector::uniform(1)),
        (rho2(), 3, "111", haar_random_state(1, 3)),
        (rho4(), 1, "1", StateVector::uniform(2)),
        (rho4(), 2, "11", haar_random_state(2, 8)),
    ] {
        let oracle = leading(&rho);
        let mut b = start;
        let mut last = common::fidelity(b.amplitudes(), &oracle);
        for _ in 0..8 {
            let (out, _) = project(&rho, &b, n, y).unwrap();
            let mags: Vec<f64> = out.amplitudes().iter().map(|z| z.norm()).collect();
            b = StateVector::from_real(&mags).unwrap();
            let f = common::fidelity(b.amplitudes(), &oracle);
            assert!(f >= last - 1e-12, "{f} < {last}");
            last = f;
        }
    }
}

#[test]
fn rho4_iteration_reaches_leading_eigenvector() {
    let rho = rho4();
    let trace = qpca_iterate(&rho, &StateVector::uniform(2), &cfg(1, Some("1"))).unwrap();
    assert!(trace.iterations <= 4);
    assert!(trace.records.last().unwrap().oracle_fidelity >= 0.99);
}

#[test]
fn degenerate_projection_is_reported() {
    let rho = density(&[vec![0.75, 0.0], vec![0.0, 0.25]]);
    let err = qpca_iterate(&rho, &StateVector::zero(1), &cfg(2, Some("00"))).unwrap_err();
    assert!(matches!(err, Error::DegenerateProjection { .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn calibration_picks_the_leading_bin() {
    assert_eq!(select_target(&rho2(), &cfg(2, None)).unwrap().bitstring, "11");
    assert_eq!(select_target(&rho2(), &cfg(3, None)).unwrap().bitstring, "111");
    assert_eq!(select_target(&rho4(), &cfg(1, None)).unwrap().bitstring, "1");
    let pure = density(&[vec![1.0, 0.0], vec![0.0, 0.0]]);
    assert_eq!(select_target(&pure, &cfg(2, None)).unwrap().bitstring, "00");
}

#[test]
fn nearest_bitstring_examples() {
    assert_eq!(nearest_bitstring(0.8576, 2), "11");
    assert_eq!(nearest_bitstring(0.8576, 3), "111");
    for n in 1..6 {
        assert_eq!(nearest_bitstring(0.0, n), "0".repeat(n));
    }
}

fn circular(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

proptest! {
    #[test]
    fn nearest_bitstring_is_circular_argmin(lambda in 0.0f64..1.0, n in 1usize..=6) {
        let got = bits_value(&nearest_bitstring(lambda, n));
        let best = (0..1usize << n).map(|k| circular(lambda, bits_value(&to_bits(k, n)))).fold(f64::INFINITY, f64::min);
        prop_assert!((circular(lambda, got) - best).abs() < 1e-12);
    }

    #[test]
    fn phase_recovery_ignores_global_phase(theta in -PI..PI, seed in 0u64..1000) {
        let s = haar_random_state(2, seed);
        let a = recover_state_phases(&s, 4096, 5).unwrap();
        let b = recover_state_phases(&s.scaled(Complex64::from_polar(1.0, theta)), 4096, 5).unwrap();
        for (x, y) in a.vector.iter().zip(&b.vector) {
            prop_assert!((x - y).norm() < 1e-6);
        }
    }
}

#[test]
fn phases_of_a_real_eigenvector_are_zero() {
    let u = StateVector::from_real(&U1).unwrap();
    let r = recover_state_phases(&u, 8192, 3).unwrap();
    assert!(r.resolved);
    assert!(r.phases[1].abs() <= 0.05);
    assert!((r.vector[0].re - U1[0]).abs() < 0.02 && (r.vector[1].re - U1[1]).abs() < 0.02);
    // Split form of a zero relative phase is the same vector.
    assert!((r.split_phase[1].arg() + r.split_phase[0].arg()).abs() < 1e-12);
}

#[test]
fn quarter_turn_relative_phase() {
    let s = StateVector::new(vec![c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)]).unwrap();
    let r = recover_state_phases(&s, 8192, 9).unwrap();
    assert!((r.phases[1] - PI / 2.0).abs() <= 0.05, "phase {}", r.phases[1]);
    assert!((r.split_phase[0].arg() + PI / 4.0).abs() <= 0.05);
    assert!((r.split_phase[1].arg() - PI / 4.0).abs() <= 0.05);
}

#[test]
fn two_qubit_phase_reconstruction() {
    for seed in 0..5 {
        let s = haar_random_state(2, 100 + seed);
        let r = recover_state_phases(&s, 200_000, seed).unwrap();
        assert!(common::fidelity(&r.vector, s.amplitudes()) > 0.99);
        assert!((r.vector[r.vector.iter().position(|z| z.norm() > 0.0).unwrap()].im).abs() < 1e-12);
    }
}

#[test]
fn recover_phases_on_the_projected_circuit() {
    let rho = rho2();
    let r = recover_phases(&rho, &U1, &cfg(2, Some("11"))).unwrap();
    assert!(common::fidelity(&r.vector, &leading(&rho)) >= 0.99);
    assert!(r.resolved);
    for key in ["z", "x0", "y0", "r0"] {
        assert!(r.histograms.contains_key(key));
    }
}

#[test]
fn noisy_phase_recovery_stays_in_band() {
    let rho = rho2();
    let noisy = QpcaConfig {
        noise: Some(NoiseModel::new(0.08, 21).unwrap()),
        trajectories: 4000,
        ..cfg(2, Some("11"))
    };
    let r = recover_phases(&rho, &U1, &noisy).unwrap();
    let c0 = r.vector[0].norm();
    assert!((0.78..=0.96).contains(&c0), "|c0| = {c0}");
}

#[test]
fn qpe_refine_on_the_leading_eigenvector() {
    let rho = rho2();
    let u = StateVector::new(leading(&rho)).unwrap();
    let q = qpe_refine(&rho, &u, &cfg(3, None)).unwrap();
    assert_eq!(q.bitstring, "111");
    assert_eq!(q.value, 0.875);
    assert!(q.post_fidelity >= 0.977);

    let diag = density(&[vec![0.75, 0.0], vec![0.0, 0.25]]);
    let q = qpe_refine(&diag, &StateVector::zero(1), &cfg(2, None)).unwrap();
    assert_eq!(q.bitstring, "11");
    assert!((q.probability - 1.0).abs() < 1e-12);
}

/// Density-matrix reference for the synthesized noisy circuit.
fn noisy_reference(rho: &DensityMatrix, input: &StateVector, n: usize, p: f64) -> Vec<f64> {
    let circ = build_qpca_circuit(rho, &cfg(n, None)).unwrap().synthesize().unwrap();
    let steps: Vec<(Vec<usize>, ComplexMatrix)> = circ
        .gates()
        .iter()
        .map(|g| match g {
            Gate::Hadamard { qubit } => (vec![*qubit], qsim::hadamard()),
            Gate::Unitary { qubit, matrix } => (vec![*qubit], matrix.clone()),
            Gate::Cnot { control, target } => (vec![*control, *target], controlled(&qsim::pauli_x())),
            other => panic!("unexpected gate {}", other.kind()),
        })
        .collect();
    let full = density_evolve(circ.n_qubits(), input.amplitudes(), &steps, p);
    qsim::marginal(&full, circ.n_qubits(), circ.register("eigenvalue").unwrap()).unwrap()
}

#[test]
fn noisy_qpe_matches_density_matrix_reference() {
    let rho = rho2();
    let u = StateVector::new(leading(&rho)).unwrap();
    let noisy = QpcaConfig { noise: Some(NoiseModel::new(0.08, 3).unwrap()), ..cfg(3, None) };
    let q = qpe_refine(&rho, &u, &noisy).unwrap();
    let reference = noisy_reference(&rho, &StateVector::zero(3).tensor(&u), 3, 0.08);
    assert!(tv(&q.distribution, &reference) <= 0.02);
    assert_eq!(q.entangling_gates, 12);
    let clean = qpe_refine(&rho, &u, &cfg(3, None)).unwrap();
    assert!(q.tv_to_uniform < clean.tv_to_uniform - 0.3);
}

#[test]
fn ambiguity_verdicts() {
    let r = check_ambiguity(&rho2(), &cfg(2, Some("11")), 1, 2).unwrap();
    assert_eq!(r.verdict, Verdict::Unique);
    let r = check_ambiguity(&rho4(), &cfg(1, Some("1")), 1, 2).unwrap();
    assert_eq!(r.verdict, Verdict::Unique);
    assert!(r.cross_fidelity >= 0.98);

    let half = density(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
    let r = check_ambiguity(&half, &cfg(2, Some("10")), 1, 2).unwrap();
    assert_eq!(r.verdict, Verdict::Multiple);
    assert!(r.recommendation.unwrap().contains("increase n_bits"));
    // Two random starts can coincide by chance; it should be rare.
    let unique = (0..50u64)
        .filter(|s| check_ambiguity(&half, &cfg(2, Some("10")), 2 * s + 10, 2 * s + 11).unwrap().verdict == Verdict::Unique)
        .count();
    assert!(unique <= 5, "{unique} of 50 pairs coincided");

    assert!(matches!(check_ambiguity(&rho2(), &cfg(2, None), 4, 4), Err(Error::Validation(_))));
}

#[test]
fn seeded_runs_are_reproducible() {
    let c = cfg(2, None);
    let a = qpca_iterate(&rho2(), &haar_random_state(1, 1), &c).unwrap();
    let b = qpca_iterate(&rho2(), &haar_random_state(1, 1), &c).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

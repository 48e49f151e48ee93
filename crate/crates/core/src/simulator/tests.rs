use super::*;
use crate::ansatz::{build_hva, trotter_parameters, ParamMode};
use crate::lattice::{build_chain, build_kagome_open, dimer_covering, edge_coloring, embed_on_grid};
use crate::spectra::{dense_hamiltonian, low_spectrum, LanczosOptions};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

const S: f64 = FRAC_1_SQRT_2;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn close(a: &StateVector, b: &StateVector, tol: f64) -> bool {
    a.amplitudes.iter().zip(&b.amplitudes).all(|(x, y)| (x - y).norm() < tol)
}

fn hva(graph: &SpinGraph, p: usize, mode: ParamMode, embedded: bool) -> AnsatzCircuit {
    let emb = embedded.then(|| embed_on_grid(graph).unwrap());
    build_hva(graph, &edge_coloring(graph).unwrap(), &dimer_covering(graph).unwrap(), p, mode, emb.as_ref()).unwrap()
}

fn random_theta(seed: u64, m: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| scale * (2.0 * rng.gen::<f64>() - 1.0)).collect()
}

fn pair_covering(pairs: &[(usize, usize)]) -> DimerCovering {
    DimerCovering { pairs: pairs.to_vec(), non_edge: vec![] }
}

#[test]
fn covering_states() {
    let psi = prepare_covering(&pair_covering(&[(0, 1)]), 2, None).unwrap();
    assert_eq!(psi.amplitudes, vec![c(0.0, 0.0), c(S, 0.0), c(-S, 0.0), c(0.0, 0.0)]);
    let t = TripletOverride { pair: (0, 1), m: 1 };
    let psi = prepare_covering(&pair_covering(&[(0, 1)]), 2, Some(t)).unwrap();
    assert_eq!(psi, StateVector::zero(2));
    assert!(matches!(
        prepare_covering(&pair_covering(&[(0, 1), (1, 2)]), 4, None),
        Err(Error::InvalidCovering(_))
    ));
    let psi = prepare_covering(&pair_covering(&[(0, 3), (1, 2), (4, 5)]), 6, None).unwrap();
    let o = spin_observables(&psi, 6);
    assert!(o.sz.abs() < 1e-12 && o.s2.abs() < 1e-12);
}

#[test]
fn heis_gate_examples() {
    let mut psi = StateVector::basis(2, 1);
    let before = psi.clone();
    psi.apply_heis(0, 1, 0.0).unwrap();
    assert_eq!(psi, before);
    psi.apply_heis(0, 1, PI).unwrap();
    assert!(close(&psi, &StateVector { n_qubits: 2, amplitudes: vec![c(0., 0.), c(0., 0.), c(0., -1.), c(0., 0.)] }, 1e-15));
    // the singlet only picks up e^{i alpha / 2}
    let alpha = 0.731;
    let s = prepare_covering(&pair_covering(&[(0, 1)]), 2, None).unwrap();
    let mut t = s.clone();
    t.apply_heis(0, 1, alpha).unwrap();
    let want = Complex64::from_polar(1.0, alpha / 2.0);
    for (x, y) in t.amplitudes.iter().zip(&s.amplitudes) {
        assert!((x - y * want).norm() < 1e-15);
    }
    assert!(matches!(psi.apply_heis(1, 1, 0.3), Err(Error::InvalidGate(_))));
}

#[test]
fn fixed_gate_examples() {
    let mut psi = StateVector::basis(2, 1);
    psi.apply_swap(0, 1).unwrap();
    assert_eq!(psi, StateVector::basis(2, 2));

    let mut psi = StateVector::basis(1, 0);
    psi.apply_rz(0, 2.0 * PI).unwrap();
    assert!((psi.amplitudes[0] + 1.0).norm() < 1e-15);

    let mut a = StateVector { n_qubits: 1, amplitudes: vec![c(0.6, 0.0), c(0.0, 0.8)] };
    let mut b = a.clone();
    let sz = Gate::fixed(GateKind::SqrtZ, &[0], None);
    a.apply_gate(&sz, None, false).unwrap();
    a.apply_gate(&sz, None, false).unwrap();
    b.apply_gate(&Gate::fixed(GateKind::Z, &[0], None), None, false).unwrap();
    assert!(close(&a, &b, 1e-15));
    assert!(b.apply_rz(3, 0.1).is_err());
}

#[test]
fn run_examples() {
    let g = build_chain(6, true).unwrap();
    let circ = hva(&g, 3, ParamMode::Opg, false);
    let init = prepare_covering(&circ.covering, 6, None).unwrap();
    let psi = run(&circ, &vec![0.0; circ.n_params()]).unwrap();
    assert!((psi.inner(&init).norm() - 1.0).abs() < 1e-14);
    assert!(matches!(run(&circ, &[0.0]), Err(Error::LengthMismatch { .. })));
    let psi = run(&circ, &random_theta(3, circ.n_params(), 2.0)).unwrap();
    let o = spin_observables(&psi, 6);
    assert!(o.sz.abs() < 1e-10 && o.s2.abs() < 1e-10);
}

#[test]
fn prep_gates_reproduce_covering_state() {
    for (g, embedded) in [(build_chain(8, true).unwrap(), false), (build_kagome_open(2, 2).unwrap(), true)] {
        let circ = hva(&g, 1, ParamMode::Opg, embedded);
        let exact = prepare_covering(&circ.covering, circ.n_qubits, None).unwrap();
        let gates = run_prep(&circ).unwrap();
        assert!((gates.inner(&exact).norm() - 1.0).abs() < 1e-12);
        for m in [-1, 0, 1] {
            let t = circ.with_triplet(circ.covering.pairs[0], m).unwrap();
            let exact = run(&t, &vec![0.0; t.n_params()]).unwrap();
            assert!((run_prep(&t).unwrap().inner(&exact).norm() - 1.0).abs() < 1e-12);
        }
    }
}

fn exact_evolution(g: &SpinGraph, psi: &StateVector, t: f64) -> StateVector {
    let h = dense_hamiltonian(g).unwrap();
    let eig = SymmetricEigen::new(h);
    let v = eig.eigenvectors.map(|x| c(x, 0.0));
    let x = DMatrix::from_column_slice(psi.dim(), 1, &psi.amplitudes);
    let mut y = v.adjoint() * x;
    for (i, e) in eig.eigenvalues.iter().enumerate() {
        y[i] *= Complex64::from_polar(1.0, -e * t);
    }
    StateVector { n_qubits: psi.n_qubits, amplitudes: (v * y).as_slice().to_vec() }
}

#[test]
fn trotter_converges_to_exact_evolution() {
    let g = build_chain(4, true).unwrap();
    let t = 0.8;
    let circ0 = hva(&g, 0, ParamMode::Opg, false);
    let init = prepare_covering(&circ0.covering, 4, None).unwrap();
    let exact = exact_evolution(&g, &init, t);
    let mut last = f64::INFINITY;
    for p in [2, 4, 8, 16, 32] {
        let circ = circ0.with_cycles(p);
        let psi = run(&circ, &trotter_parameters(&circ, t).unwrap()).unwrap();
        let err = 1.0 - psi.inner(&exact).norm();
        // first-order splitting: the infidelity drops by 4 when p doubles
        if last.is_finite() {
            let ratio = last / err;
            assert!((3.5..4.5).contains(&ratio), "p={p}: ratio {ratio}");
        }
        last = err;
    }
    assert!(last < 1e-4);
}

#[test]
fn trotter_on_ten_sites() {
    let g = build_chain(10, true).unwrap();
    let circ = hva(&g, 40, ParamMode::Opg, false);
    let init = prepare_covering(&circ.covering, 10, None).unwrap();
    let exact = exact_evolution(&g, &init, 0.5);
    let psi = run(&circ, &trotter_parameters(&circ, 0.5).unwrap()).unwrap();
    assert!(1.0 - psi.inner(&exact).norm() < 1e-4);
}

#[test]
fn energy_examples() {
    let g = build_chain(2, false).unwrap();
    let s = prepare_covering(&pair_covering(&[(0, 1)]), 2, None).unwrap();
    assert!((energy(&s, &g).unwrap() + 0.75).abs() < 1e-15);
    let ring = build_chain(4, true).unwrap();
    // |0101>: qubits 0 and 2 up, 1 and 3 down
    let neel = StateVector::basis(4, 0b1010);
    assert!((energy(&neel, &ring).unwrap() + 1.0).abs() < 1e-15);
    let r = low_spectrum(&ring, 1, 1e-10, LanczosOptions::default()).unwrap();
    let gs = StateVector { n_qubits: 4, amplitudes: r.ground_vectors[0].iter().map(|&x| c(x, 0.0)).collect() };
    assert!((energy(&gs, &ring).unwrap() + 2.0).abs() < 1e-10);
    assert!(energy(&StateVector::zero(3), &ring).is_err());
}

#[test]
fn fidelity_examples() {
    let g = build_chain(2, false).unwrap();
    let s = prepare_covering(&pair_covering(&[(0, 1)]), 2, None).unwrap();
    assert!((fidelity(&s, std::slice::from_ref(&s.amplitudes)).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(fidelity(&StateVector::basis(2, 0), &[vec![0.0, 1.0, 0.0, 0.0]]).unwrap(), 0.0);
    let r = low_spectrum(&g, 1, 1e-12, LanczosOptions::default()).unwrap();
    assert!((fidelity(&s, &r.ground_vectors).unwrap() - 1.0).abs() < 1e-12);
    let bad = vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]];
    assert!(matches!(fidelity(&s, &bad), Err(Error::NonOrthonormal(_))));
}

#[test]
fn spin_observable_examples() {
    let t1 = StateVector::zero(2);
    let o = spin_observables(&t1, 2);
    assert!((o.sz - 1.0).abs() < 1e-15 && (o.s2 - 2.0).abs() < 1e-15 && o.penalty.abs() < 1e-15);
    let n = 7;
    let o = spin_observables(&StateVector::zero(n), n);
    let h = n as f64 / 2.0;
    assert!((o.sz - h).abs() < 1e-12 && (o.s2 - h * (h + 1.0)).abs() < 1e-12);
}

fn finite_difference(circ: &AnsatzCircuit, theta: &[f64], g: &SpinGraph, cost: Cost) -> Vec<f64> {
    let h = 1e-5;
    (0..theta.len())
        .map(|k| {
            let mut a = theta.to_vec();
            let mut b = theta.to_vec();
            a[k] += h;
            b[k] -= h;
            let fa = energy_and_gradient(circ, &a, g, cost).unwrap().value;
            let fb = energy_and_gradient(circ, &b, g, cost).unwrap().value;
            (fa - fb) / (2.0 * h)
        })
        .collect()
}

fn assert_gradient_matches(circ: &AnsatzCircuit, theta: &[f64], g: &SpinGraph, cost: Cost) {
    let eg = energy_and_gradient(circ, theta, g, cost).unwrap();
    let fd = finite_difference(circ, theta, g, cost);
    let scale = fd.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
    for (a, b) in eg.gradient.iter().zip(&fd) {
        assert!((a - b).abs() / scale < 1e-6, "adjoint {a} vs fd {b}");
    }
}

#[test]
fn gradient_examples() {
    let g = build_chain(2, false).unwrap();
    let circ = hva(&g, 2, ParamMode::Opg, false);
    let eg = energy_and_gradient(&circ, &[0.4, -1.3], &g, Cost::Energy).unwrap();
    assert!((eg.value + 0.75).abs() < 1e-14);
    assert!(eg.gradient.iter().all(|x| x.abs() < 1e-14));

    let g = build_chain(4, true).unwrap();
    let circ = hva(&g, 3, ParamMode::Opg, false);
    assert_gradient_matches(&circ, &random_theta(11, circ.n_params(), PI), &g, Cost::Energy);
    let eg = energy_and_gradient(&circ, &vec![0.0; circ.n_params()], &g, Cost::Energy).unwrap();
    assert!((eg.value + 0.75 * 2.0).abs() < 1e-14);

    assert!(matches!(
        energy_and_gradient(&circ, &vec![0.0; circ.n_params()], &g, Cost::Infidelity { references: &[] }),
        Err(Error::MissingReference)
    ));
}

#[test]
fn gradient_other_costs_and_layouts() {
    let g = build_chain(6, true).unwrap();
    let r = low_spectrum(&g, 1, 1e-11, LanczosOptions::default()).unwrap();
    let circ = hva(&g, 2, ParamMode::Ops, false);
    let theta = random_theta(5, circ.n_params(), 1.0);
    assert_gradient_matches(&circ, &theta, &g, Cost::Infidelity { references: &r.ground_vectors });
    let t = hva(&g, 2, ParamMode::Opg, false).with_triplet((0, 1), 0).unwrap();
    let theta = random_theta(6, t.n_params(), 1.0);
    assert_gradient_matches(&t, &theta, &g, Cost::EnergyPenalty { a_p1: 0.3, a_p2: 1.0 });

    let g = build_kagome_open(1, 2).unwrap();
    let circ = hva(&g, 2, ParamMode::Opg, true);
    assert!(circ.n_qubits > g.n_sites);
    let theta = random_theta(7, circ.n_params(), 1.0);
    assert_gradient_matches(&circ, &theta, &g, Cost::Energy);
}

#[test]
fn penalty_cost_value() {
    let g = build_chain(4, true).unwrap();
    let circ = hva(&g, 1, ParamMode::Opg, false);
    let theta = random_theta(1, circ.n_params(), 1.0);
    let psi = run(&circ, &theta).unwrap();
    let e = energy(&psi, &g).unwrap();
    let eg = energy_and_gradient(&circ, &theta, &g, Cost::EnergyPenalty { a_p1: 0.0, a_p2: 2.0 }).unwrap();
    // singlet sector: <(Sz - 1)^2> = 1
    assert!((eg.value - (e + 2.0)).abs() < 1e-12);
    let eg = energy_and_gradient(&circ, &theta, &g, Cost::EnergyPenalty { a_p1: 1.0, a_p2: 0.0 }).unwrap();
    assert!((eg.value - (e + 4.0)).abs() < 1e-12);
}

#[test]
fn dump_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.bin");
    let g = build_chain(4, true).unwrap();
    let circ = hva(&g, 1, ParamMode::Opg, false);
    let psi = run(&circ, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    psi.dump(&path).unwrap();
    assert_eq!(StateVector::load_dump(&path).unwrap(), psi);
}

#[test]
fn layer_order_does_not_matter() {
    let g = build_chain(8, true).unwrap();
    let circ = hva(&g, 2, ParamMode::Opg, false);
    let theta = random_theta(2, circ.n_params(), 1.0);
    let mut shuffled = circ.clone();
    for layer in &mut shuffled.cycle_layers {
        layer.reverse();
    }
    assert_eq!(run(&circ, &theta).unwrap(), run(&shuffled, &theta).unwrap());
}

#[test]
fn observable_error_bounded_by_infidelity() {
    let g = build_chain(6, true).unwrap();
    let r = low_spectrum(&g, 1, 1e-11, LanczosOptions::default()).unwrap();
    let e0 = DMatrix::from_column_slice(64, 1, &r.ground_vectors[0]).map(|x| c(x, 0.0));
    let circ = hva(&g, 2, ParamMode::Opg, false);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..10 {
        let psi = run(&circ, &random_theta(trial, circ.n_params(), 0.6)).unwrap();
        let infid = 1.0 - fidelity(&psi, &r.ground_vectors).unwrap();
        let a = DMatrix::from_fn(64, 64, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let herm = &a + a.adjoint();
        // operator norm of a Hermitian matrix via its eigenvalues
        let op_norm = SymmetricEigen::new(herm.clone()).eigenvalues.amax();
        let o = herm / c(op_norm, 0.0);
        let x = DMatrix::from_column_slice(64, 1, &psi.amplitudes);
        let lhs = ((e0.adjoint() * &o * &e0)[(0, 0)] - (x.adjoint() * &o * &x)[(0, 0)]).norm();
        assert!(lhs <= 4.0 * infid.sqrt() + 1e-12, "{lhs} > 4 sqrt({infid})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn norm_is_conserved(seed in 0u64..10_000) {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi = prepare_covering(&pair_covering(&[(0, 1), (2, 3), (4, 5)]), n, None).unwrap();
        let kinds = [GateKind::Heis, GateKind::Swap, GateKind::Rz, GateKind::X, GateKind::Z, GateKind::SqrtZ, GateKind::H, GateKind::Cnot];
        for _ in 0..10_000 {
            let kind = kinds[rng.gen_range(0..kinds.len())];
            let a = rng.gen_range(0..n);
            let qubits = if kind.arity() == 2 { vec![a, (a + rng.gen_range(1..n)) % n] } else { vec![a] };
            let g = Gate { kind, qubits, param_index: None, fixed_angle: Some(rng.gen_range(-PI..PI)) };
            psi.apply_gate(&g, None, false).unwrap();
        }
        prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn su2_sector_and_variational_bound(seed in 0u64..10_000, p in 1usize..4) {
        let g = build_kagome_open(2, 2).unwrap();
        let circ = hva(&g, p, ParamMode::Opg, false);
        let theta = random_theta(seed, circ.n_params(), PI);
        let psi = run(&circ, &theta).unwrap();
        let o = spin_observables(&psi, g.n_sites);
        prop_assert!(o.sz.abs() < 1e-10 && o.s2.abs() < 1e-10);
        let r = low_spectrum(&g, 1, 1e-9, LanczosOptions::balanced(g.n_sites)).unwrap();
        prop_assert!(energy(&psi, &g).unwrap() >= r.e0() - 1e-9);
    }

    #[test]
    fn heis_composes_and_is_periodic(seed in 0u64..10_000, alpha in -7.0f64..7.0, beta in -7.0f64..7.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let amps: Vec<Complex64> = (0..8).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let nrm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        let psi = StateVector { n_qubits: 3, amplitudes: amps.iter().map(|a| a / nrm).collect() };
        let mut a = psi.clone();
        a.apply_heis(0, 2, alpha).unwrap();
        a.apply_heis(0, 2, beta).unwrap();
        let mut b = psi.clone();
        b.apply_heis(0, 2, alpha + beta).unwrap();
        prop_assert!(close(&a, &b, 1e-12));
        let mut x = psi.clone();
        x.apply_heis(1, 2, alpha).unwrap();
        let mut y = psi.clone();
        y.apply_heis(1, 2, alpha + 2.0 * PI).unwrap();
        for (u, v) in x.amplitudes.iter().zip(&y.amplitudes) {
            prop_assert!((u + v).norm() < 1e-12);
        }
    }

    #[test]
    fn triplet_energy_independent_of_m(seed in 0u64..10_000) {
        let g = build_chain(6, true).unwrap();
        let circ = hva(&g, 2, ParamMode::Opg, false);
        let theta = random_theta(seed, circ.n_params(), PI);
        let es: Vec<f64> = (-1..=1)
            .map(|m| {
                let t = circ.with_triplet((2, 3), m).unwrap();
                energy(&run(&t, &theta).unwrap(), &g).unwrap()
            })
            .collect();
        prop_assert!((es[0] - es[1]).abs() < 1e-10 && (es[1] - es[2]).abs() < 1e-10);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences(seed in 0u64..10_000, n in 2usize..6, p in 1usize..3) {
        let g = build_chain(2 * n, true).unwrap();
        let circ = hva(&g, p, if seed % 2 == 0 { ParamMode::Opg } else { ParamMode::Ops }, false);
        let theta = random_theta(seed, circ.n_params(), PI);
        assert_gradient_matches(&circ, &theta, &g, Cost::Energy);
    }
}

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{apply_graph_hamiltonian, fidelity, run, StateVector};
use crate::ansatz::AnsatzCircuit;
use crate::lattice::SpinGraph;
use crate::spectra::apply_edges;
use crate::{Error, Result};

/// Objective minimized by the optimizer.
#[derive(Debug, Clone, Copy)]
pub enum Cost<'a> {
    Energy,
    /// `E + a_p1 (S^2 - 2)^2 + a_p2 (S_z - 1)^2`, steering towards `S = S_z = 1`.
    EnergyPenalty { a_p1: f64, a_p2: f64 },
    /// `1 - sum_k |<E0_k|theta>|^2` against an orthonormal ground-space basis.
    Infidelity { references: &'a [Vec<f64>] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyGradient {
    /// Value of the cost.
    pub value: f64,
    /// `<H>` of the final state, whatever the cost.
    pub energy: f64,
    pub gradient: Vec<f64>,
}

/// `O |psi>` where `O` is the operator whose expectation (plus a constant)
/// is the cost; returns `(O psi, constant)`.
fn cost_operator(
    psi: &StateVector,
    h_psi: &[Complex64],
    graph: &SpinGraph,
    cost: Cost,
) -> Result<(Vec<Complex64>, f64)> {
    match cost {
        Cost::Energy => Ok((h_psi.to_vec(), 0.0)),
        Cost::EnergyPenalty { a_p1, a_p2 } => {
            let n = graph.n_sites;
            let low = (1usize << n) - 1;
            let mut out = h_psi.to_vec();
            if a_p2 != 0.0 {
                for (i, (o, x)) in out.iter_mut().zip(&psi.amplitudes).enumerate() {
                    let m = n as f64 / 2.0 - (i & low).count_ones() as f64;
                    *o += x * (a_p2 * (m - 1.0) * (m - 1.0));
                }
            }
            if a_p1 != 0.0 {
                let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
                let shifted_s2 = |x: &[Complex64]| -> Vec<Complex64> {
                    let mut y = vec![Complex64::new(0.0, 0.0); x.len()];
                    apply_edges(&pairs, x, &mut y);
                    let c = 0.75 * n as f64 - 2.0;
                    y.iter().zip(x).map(|(y, x)| y * 2.0 + x * c).collect()
                };
                let once = shifted_s2(&psi.amplitudes);
                let twice = shifted_s2(&once);
                for (o, t) in out.iter_mut().zip(&twice) {
                    *o += t * a_p1;
                }
            }
            Ok((out, 0.0))
        }
        Cost::Infidelity { references } => {
            if references.is_empty() {
                return Err(Error::MissingReference);
            }
            fidelity(psi, references)?;
            let mut out = vec![Complex64::new(0.0, 0.0); psi.dim()];
            for r in references {
                let ov = super::overlap(r, psi)?;
                for (o, &x) in out.iter_mut().zip(r) {
                    *o -= ov * x;
                }
            }
            Ok((out, 1.0))
        }
    }
}

/// `<l| SWAP_ab |psi>`.
fn swap_matrix_element(l: &[Complex64], psi: &[Complex64], a: usize, b: usize) -> Complex64 {
    let (ma, mb) = (1usize << a, 1usize << b);
    let mut s = Complex64::new(0.0, 0.0);
    for (i, x) in l.iter().enumerate() {
        let j = if ((i & ma) == 0) == ((i & mb) == 0) { i } else { i ^ ma ^ mb };
        s += x.conj() * psi[j];
    }
    s
}

/// Cost and its exact gradient by one forward pass and a reverse sweep that
/// un-applies each gate to both the state and the costate.
pub fn energy_and_gradient(circuit: &AnsatzCircuit, theta: &[f64], graph: &SpinGraph, cost: Cost) -> Result<EnergyGradient> {
    if matches!(cost, Cost::Infidelity { references } if references.is_empty()) {
        return Err(Error::MissingReference);
    }
    let mut psi = run(circuit, theta)?;
    let h_psi = apply_graph_hamiltonian(&psi, graph)?;
    let energy = crate::spectra::dot(&psi.amplitudes, &h_psi).re;
    let (lambda, constant) = cost_operator(&psi, &h_psi, graph, cost)?;
    let value = crate::spectra::dot(&psi.amplitudes, &lambda).re + constant;
    let mut lam = StateVector { n_qubits: psi.n_qubits, amplitudes: lambda };
    let mut gradient = vec![0.0; circuit.n_params()];
    let order = super::canonical_order(&circuit.cycle_layers);
    for cycle in (0..circuit.p).rev() {
        for (layer, idx) in circuit.cycle_layers.iter().zip(&order).rev() {
            for g in idx.iter().rev().map(|&i| &layer[i]) {
                let angle = circuit.global_index(cycle, g).map(|k| theta[k]);
                if let Some(k) = circuit.global_index(cycle, g) {
                    // d/d alpha exp(-i alpha SWAP/2) = -i/2 SWAP exp(...)
                    let z = swap_matrix_element(&lam.amplitudes, &psi.amplitudes, g.qubits[0], g.qubits[1]);
                    gradient[k] += z.im;
                }
                psi.apply_gate(g, angle, true)?;
                lam.apply_gate(g, angle, true)?;
            }
        }
    }
    Ok(EnergyGradient { value, energy, gradient })
}

//! Exact statevector simulation of HVA circuits.
//!
//! Amplitudes are indexed with qubit 0 as the least significant bit. A bit
//! value of 0 is spin up, so `S_z = sum_i (1 - 2 b_i) / 2`.

mod gradient;

pub use gradient::{energy_and_gradient, Cost, EnergyGradient};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;
use std::io::{BufRead, Read, Write};
use std::path::Path;

use crate::ansatz::{AnsatzCircuit, Gate, GateKind, TripletOverride};
use crate::lattice::{DimerCovering, SpinGraph};
use crate::spectra::{apply_edges, Scalar};
use crate::{Error, Result};

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub n_qubits: usize,
    pub amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>`.
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![C0; 1 << n_qubits];
        amplitudes[0] = C1;
        Self { n_qubits, amplitudes }
    }

    pub fn basis(n_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![C0; 1 << n_qubits];
        amplitudes[index] = C1;
        Self { n_qubits, amplitudes }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let n = amplitudes.len().trailing_zeros() as usize;
        if amplitudes.len() != 1 << n {
            return Err(Error::InvalidSize(format!("{} amplitudes is not a power of two", amplitudes.len())));
        }
        Ok(Self { n_qubits: n, amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        crate::spectra::dot(&self.amplitudes, &other.amplitudes)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.n_qubits {
            return Err(Error::InvalidGate(format!("qubit {q} outside register of {}", self.n_qubits)));
        }
        Ok(())
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(Error::InvalidGate(format!("two-qubit gate on coincident qubit {a}")));
        }
        Ok(())
    }

    /// `exp(-i alpha SWAP / 2)`: phase `e^{-i alpha/2}` on `|00>`, `|11>` and
    /// the rotation `cos(alpha/2) - i sin(alpha/2) X` on `{|01>, |10>}`.
    pub fn apply_heis(&mut self, a: usize, b: usize, alpha: f64) -> Result<()> {
        self.check_pair(a, b)?;
        let (s, c) = (alpha / 2.0).sin_cos();
        let ph = Complex64::new(c, -s);
        let mis = Complex64::new(0.0, -s);
        pair_kernel(&mut self.amplitudes, a, b, |v| {
            v[0] *= ph;
            v[3] *= ph;
            let (x, y) = (v[1], v[2]);
            v[1] = x * c + y * mis;
            v[2] = y * c + x * mis;
        });
        Ok(())
    }

    pub fn apply_swap(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        pair_kernel(&mut self.amplitudes, a, b, |v| v.swap(1, 2));
        Ok(())
    }

    /// `fSim(theta, phi)`: `cos(theta) - i sin(theta) X` on `{|01>, |10>}`
    /// and the phase `e^{-i phi}` on `|11>`.
    pub fn apply_fsim(&mut self, a: usize, b: usize, theta: f64, phi: f64) -> Result<()> {
        self.check_pair(a, b)?;
        let (s, c) = theta.sin_cos();
        let mis = Complex64::new(0.0, -s);
        let ph = Complex64::from_polar(1.0, -phi);
        pair_kernel(&mut self.amplitudes, a, b, |v| {
            let (x, y) = (v[1], v[2]);
            v[1] = x * c + y * mis;
            v[2] = y * c + x * mis;
            v[3] *= ph;
        });
        Ok(())
    }

    /// Multiplies every amplitude by `e^{i phase}`.
    pub fn apply_global_phase(&mut self, phase: f64) {
        let z = Complex64::from_polar(1.0, phase);
        self.amplitudes.iter_mut().for_each(|x| *x *= z);
    }

    /// Controlled NOT with control `a`.
    pub fn apply_cnot(&mut self, a: usize, b: usize) -> Result<()> {
        self.check_pair(a, b)?;
        pair_kernel(&mut self.amplitudes, a, b, |v| v.swap(1, 3));
        Ok(())
    }

    /// The 2x2 unitary `[[m00, m01], [m10, m11]]` on qubit `q`.
    pub fn apply_1q(&mut self, q: usize, m: [[Complex64; 2]; 2]) -> Result<()> {
        self.check_qubit(q)?;
        single_kernel(&mut self.amplitudes, q, |v| {
            let (x, y) = (v[0], v[1]);
            v[0] = m[0][0] * x + m[0][1] * y;
            v[1] = m[1][0] * x + m[1][1] * y;
        });
        Ok(())
    }

    /// `exp(-i theta Z / 2)`.
    pub fn apply_rz(&mut self, q: usize, theta: f64) -> Result<()> {
        let (s, c) = (theta / 2.0).sin_cos();
        self.apply_diag(q, Complex64::new(c, -s), Complex64::new(c, s))
    }

    fn apply_diag(&mut self, q: usize, d0: Complex64, d1: Complex64) -> Result<()> {
        self.check_qubit(q)?;
        single_kernel(&mut self.amplitudes, q, |v| {
            v[0] *= d0;
            v[1] *= d1;
        });
        Ok(())
    }

    /// Applies `gate`; `angle` is its parameter value for variational gates
    /// and is ignored otherwise. With `inverse` the adjoint is applied.
    pub fn apply_gate(&mut self, gate: &Gate, angle: Option<f64>, inverse: bool) -> Result<()> {
        if gate.qubits.len() != gate.kind.arity() {
            return Err(Error::InvalidGate(format!("{} on {} qubits", gate.kind.name(), gate.qubits.len())));
        }
        let sign = if inverse { -1.0 } else { 1.0 };
        let q = &gate.qubits;
        let angle = || {
            angle.or(gate.fixed_angle).ok_or_else(|| Error::InvalidGate(format!("{} without angle", gate.kind.name())))
        };
        match gate.kind {
            GateKind::Heis => self.apply_heis(q[0], q[1], sign * angle()?),
            GateKind::Swap => self.apply_swap(q[0], q[1]),
            GateKind::Cnot => self.apply_cnot(q[0], q[1]),
            GateKind::Rz => self.apply_rz(q[0], sign * angle()?),
            GateKind::X => self.apply_1q(q[0], [[C0, C1], [C1, C0]]),
            GateKind::Z => self.apply_diag(q[0], C1, -C1),
            GateKind::SqrtZ => self.apply_diag(q[0], C1, Complex64::new(0.0, sign)),
            GateKind::H => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_1q(q[0], [[h, h], [h, -h]])
            }
        }
    }

    /// Writes a one-line text header followed by the amplitudes as
    /// little-endian `(re, im)` doubles.
    pub fn dump(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "statevector n_qubits={} ordering=qubit0-lsb format=f64le-re-im", self.n_qubits)?;
        for a in &self.amplitudes {
            f.write_all(&a.re.to_le_bytes())?;
            f.write_all(&a.im.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn load_dump(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut header = String::new();
        f.read_line(&mut header)?;
        let n: usize = header
            .split_whitespace()
            .find_map(|t| t.strip_prefix("n_qubits="))
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse("statevector header lacks n_qubits".into()))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        if bytes.len() != 16 << n {
            return Err(Error::LengthMismatch { expected: 16 << n, got: bytes.len() });
        }
        let amplitudes = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        Ok(Self { n_qubits: n, amplitudes })
    }
}

/// Visits the four amplitudes of every `(a, b)` block, ordered as
/// `[|b_a=0,b_b=0>, |1,0>, |0,1>, |1,1>]`.
fn pair_kernel(amps: &mut [Complex64], a: usize, b: usize, f: impl Fn(&mut [Complex64; 4]) + Sync) {
    let (ma, mb) = (1usize << a, 1usize << b);
    let hi = a.max(b);
    let block = 2usize << hi;
    let run = |chunk: &mut [Complex64]| {
        for i in 0..chunk.len() {
            if i & (ma | mb) != 0 {
                continue;
            }
            let idx = [i, i | ma, i | mb, i | ma | mb];
            let mut v = idx.map(|k| chunk[k]);
            f(&mut v);
            for (k, x) in idx.into_iter().zip(v) {
                chunk[k] = x;
            }
        }
    };
    if amps.len() >= PAR_THRESHOLD && amps.len() / block >= 8 {
        amps.par_chunks_mut(block).for_each(run);
    } else {
        for chunk in amps.chunks_mut(block) {
            run(chunk);
        }
    }
}

fn single_kernel(amps: &mut [Complex64], q: usize, f: impl Fn(&mut [Complex64; 2]) + Sync) {
    let m = 1usize << q;
    let block = 2 * m;
    let run = |chunk: &mut [Complex64]| {
        for i in 0..m {
            let mut v = [chunk[i], chunk[i | m]];
            f(&mut v);
            chunk[i] = v[0];
            chunk[i | m] = v[1];
        }
    };
    if amps.len() >= PAR_THRESHOLD && amps.len() / block >= 8 {
        amps.par_chunks_mut(block).for_each(run);
    } else {
        for chunk in amps.chunks_mut(block) {
            run(chunk);
        }
    }
}

/// Product of singlets `(|10> - |01>)/sqrt 2` on every pair `(a, b)`, where
/// `|10>` has qubit `a` flipped. A triplet override puts the designated pair
/// in `|t1> = |00>`, `|t0> = (|10> + |01>)/sqrt 2` or `|t-1> = |11>`.
pub fn prepare_covering(
    covering: &DimerCovering,
    n_qubits: usize,
    triplet: Option<TripletOverride>,
) -> Result<StateVector> {
    let mut used = vec![false; n_qubits];
    for &(a, b) in &covering.pairs {
        for q in [a, b] {
            if q >= n_qubits || used[q] {
                return Err(Error::InvalidCovering(format!("qubit {q} repeated or out of range")));
            }
            used[q] = true;
        }
    }
    if let Some(t) = triplet {
        if !covering.pairs.contains(&t.pair) {
            return Err(Error::InvalidCovering(format!("triplet pair {:?} not in covering", t.pair)));
        }
        if !(-1..=1).contains(&t.m) {
            return Err(Error::InvalidParameter(format!("triplet magnetization {}", t.m)));
        }
    }
    let mut psi = StateVector::zero(n_qubits);
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    for &(a, b) in &covering.pairs {
        // coefficients of |00>, |a>, |b>, |ab>
        let coef = match triplet.filter(|t| t.pair == (a, b)).map(|t| t.m) {
            None => [C0, s, -s, C0],
            Some(1) => [C1, C0, C0, C0],
            Some(0) => [C0, s, s, C0],
            Some(_) => [C0, C0, C0, C1],
        };
        pair_kernel(&mut psi.amplitudes, a, b, |v| {
            let x = v[0];
            *v = coef.map(|c| c * x);
        });
    }
    Ok(psi)
}

/// Gates of each layer commute; they are applied sorted by qubits so the
/// result does not depend on how a layer happens to be listed.
pub(crate) fn canonical_order(layers: &[Vec<Gate>]) -> Vec<Vec<usize>> {
    layers
        .iter()
        .map(|layer| {
            let mut idx: Vec<usize> = (0..layer.len()).collect();
            idx.sort_by(|&i, &j| layer[i].qubits.cmp(&layer[j].qubits));
            idx
        })
        .collect()
}

/// Applies the cycles of `circuit` to the state.
pub fn apply_cycles(state: &mut StateVector, circuit: &AnsatzCircuit, theta: &[f64]) -> Result<()> {
    if theta.len() != circuit.n_params() {
        return Err(Error::LengthMismatch { expected: circuit.n_params(), got: theta.len() });
    }
    let order = canonical_order(&circuit.cycle_layers);
    for cycle in 0..circuit.p {
        for (layer, idx) in circuit.cycle_layers.iter().zip(&order) {
            for &i in idx {
                let g = &layer[i];
                let angle = circuit.global_index(cycle, g).map(|k| theta[k]);
                state.apply_gate(g, angle, false)?;
            }
        }
    }
    Ok(())
}

/// `|theta> = c(theta_p) ... c(theta_1) |psi_init>`, starting from the exact
/// covering state.
pub fn run(circuit: &AnsatzCircuit, theta: &[f64]) -> Result<StateVector> {
    if theta.len() != circuit.n_params() {
        return Err(Error::LengthMismatch { expected: circuit.n_params(), got: theta.len() });
    }
    let mut psi = prepare_covering(&circuit.covering, circuit.n_qubits, circuit.triplet)?;
    apply_cycles(&mut psi, circuit, theta)?;
    Ok(psi)
}

/// The gate-level state preparation applied to `|0...0>`; equals the
/// covering state up to a global phase.
pub fn run_prep(circuit: &AnsatzCircuit) -> Result<StateVector> {
    let mut psi = StateVector::zero(circuit.n_qubits);
    for g in circuit.prep_layers.iter().flatten() {
        psi.apply_gate(g, None, false)?;
    }
    Ok(psi)
}

/// Expectation value of a two-spin exchange `S_a . S_b`.
pub fn pair_expectation(state: &StateVector, a: usize, b: usize) -> f64 {
    let (ma, mb) = (1usize << a, 1usize << b);
    let mut e = 0.0;
    for (i, x) in state.amplitudes.iter().enumerate() {
        if ((i & ma) == 0) == ((i & mb) == 0) {
            e += 0.25 * x.norm_sqr();
        } else {
            e += (x.conj() * state.amplitudes[i ^ ma ^ mb]).re * 0.5 - 0.25 * x.norm_sqr();
        }
    }
    e
}

fn check_width(state: &StateVector, graph: &SpinGraph) -> Result<()> {
    if state.n_qubits < graph.n_sites {
        return Err(Error::LengthMismatch { expected: graph.n_sites, got: state.n_qubits });
    }
    Ok(())
}

/// `sum_edges <S_i . S_j>`; site `i` is read from qubit `i`.
pub fn energy(state: &StateVector, graph: &SpinGraph) -> Result<f64> {
    check_width(state, graph)?;
    Ok(graph.edges.iter().map(|&(a, b)| pair_expectation(state, a, b)).sum())
}

/// `H |psi>` on the register, with site `i` on qubit `i`.
pub fn apply_graph_hamiltonian(state: &StateVector, graph: &SpinGraph) -> Result<Vec<Complex64>> {
    check_width(state, graph)?;
    let mut y = vec![C0; state.dim()];
    apply_edges(&graph.edges, &state.amplitudes, &mut y);
    Ok(y)
}

/// Maximum deviation of the Gram matrix of `refs` from the identity.
pub fn orthonormality_error<T: Scalar>(refs: &[Vec<T>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, u) in refs.iter().enumerate() {
        for (j, v) in refs.iter().enumerate().skip(i) {
            let d = crate::spectra::dot(u, v).to_c64();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((d - want).norm());
        }
    }
    worst
}

/// `<r|psi>` where `r` may cover only the low qubits (the rest taken as `|0>`).
pub fn overlap<T: Scalar>(reference: &[T], state: &StateVector) -> Result<Complex64> {
    if reference.len() > state.dim() || !reference.len().is_power_of_two() {
        return Err(Error::LengthMismatch { expected: state.dim(), got: reference.len() });
    }
    let mut s = C0;
    for (r, x) in reference.iter().zip(&state.amplitudes) {
        s += r.to_c64().conj() * x;
    }
    Ok(s)
}

/// Weight of `state` in the span of the orthonormal `refs`.
pub fn fidelity<T: Scalar>(state: &StateVector, refs: &[Vec<T>]) -> Result<f64> {
    let dev = orthonormality_error(refs);
    if dev > 1e-8 {
        return Err(Error::NonOrthonormal(dev));
    }
    let mut f = 0.0;
    for r in refs {
        f += overlap(r, state)?.norm_sqr();
    }
    Ok(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinObservables {
    pub sz: f64,
    pub s2: f64,
    /// `<(S_z - 1)^2>`.
    pub penalty: f64,
}

/// Total-spin observables over qubits `0..n_spins`.
pub fn spin_observables(state: &StateVector, n_spins: usize) -> SpinObservables {
    let n = n_spins.min(state.n_qubits);
    let low = (1usize << n) - 1;
    let mut sz = 0.0;
    let mut sz2 = 0.0;
    for (i, x) in state.amplitudes.iter().enumerate() {
        let m = n as f64 / 2.0 - (i & low).count_ones() as f64;
        sz += m * x.norm_sqr();
        sz2 += m * m * x.norm_sqr();
    }
    let mut s2 = 0.75 * n as f64;
    for a in 0..n {
        for b in a + 1..n {
            s2 += 2.0 * pair_expectation(state, a, b);
        }
    }
    SpinObservables { sz, s2, penalty: sz2 - 2.0 * sz + 1.0 }
}

#[cfg(test)]
mod tests;

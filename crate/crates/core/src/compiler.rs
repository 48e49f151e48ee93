//! Translation of HVA circuits into fSim gates and single-qubit rotations.
//!
//! `fSim(theta, phi)` acts as `cos(theta) - i sin(theta) X` on `{|01>, |10>}`
//! and multiplies `|11>` by `e^{-i phi}`. A compiled circuit `N` relates to its
//! source `U` by `U = e^{i global_phase} N`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{prep_layers, AnsatzCircuit, Gate, GateKind};
use crate::lattice::DimerCovering;
use crate::simulator::{canonical_order, StateVector};
use crate::{Error, Result};

pub const NATIVE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NativeKind {
    /// Angles `[theta, phi]`.
    Fsim,
    /// Angle `[theta]`, `exp(-i theta Z / 2)`.
    Rz,
    SqrtZ,
    Z,
    X,
    H,
}

impl NativeKind {
    pub fn name(self) -> &'static str {
        match self {
            NativeKind::Fsim => "fsim",
            NativeKind::Rz => "rz",
            NativeKind::SqrtZ => "sqrt_z",
            NativeKind::Z => "z",
            NativeKind::X => "x",
            NativeKind::H => "h",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "fsim" => NativeKind::Fsim,
            "rz" => NativeKind::Rz,
            "sqrt_z" => NativeKind::SqrtZ,
            "z" => NativeKind::Z,
            "x" => NativeKind::X,
            "h" => NativeKind::H,
            _ => return None,
        })
    }

    fn shape(self) -> (usize, usize) {
        match self {
            NativeKind::Fsim => (2, 2),
            NativeKind::Rz => (1, 1),
            _ => (1, 0),
        }
    }

    fn class(self) -> Class {
        match self {
            NativeKind::Fsim => Class::TwoQubit,
            NativeKind::Rz | NativeKind::SqrtZ | NativeKind::Z => Class::Diagonal,
            NativeKind::X | NativeKind::H => Class::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    TwoQubit,
    Diagonal,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeGate {
    pub kind: NativeKind,
    pub qubits: Vec<usize>,
    pub angles: Vec<f64>,
}

impl NativeGate {
    pub fn fsim(a: usize, b: usize, theta: f64, phi: f64) -> Self {
        Self { kind: NativeKind::Fsim, qubits: vec![a, b], angles: vec![theta, phi] }
    }

    pub fn rz(q: usize, theta: f64) -> Self {
        Self { kind: NativeKind::Rz, qubits: vec![q], angles: vec![theta] }
    }

    pub fn fixed(kind: NativeKind, q: usize) -> Self {
        Self { kind, qubits: vec![q], angles: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeCircuit {
    pub n_qubits: usize,
    pub layers: Vec<Vec<NativeGate>>,
    /// The source equals `e^{i global_phase}` times this circuit.
    pub global_phase: f64,
}

impl NativeCircuit {
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn gates(&self) -> impl Iterator<Item = &NativeGate> {
        self.layers.iter().flatten()
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for g in self.gates() {
            *m.entry(g.kind.name().to_string()).or_insert(0) += 1;
        }
        m
    }

    fn layers_of(&self, class: Class) -> usize {
        self.layers.iter().filter(|l| l.first().is_some_and(|g| g.kind.class() == class)).count()
    }

    pub fn fsim_layers(&self) -> usize {
        self.layers_of(Class::TwoQubit)
    }

    /// Layers of diagonal single-qubit gates.
    pub fn rz_layers(&self) -> usize {
        self.layers_of(Class::Diagonal)
    }

    /// Applies the gates (without the global phase).
    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        for g in self.gates() {
            let q = &g.qubits;
            match g.kind {
                NativeKind::Fsim => state.apply_fsim(q[0], q[1], g.angles[0], g.angles[1])?,
                NativeKind::Rz => state.apply_rz(q[0], g.angles[0])?,
                NativeKind::SqrtZ => state.apply_gate(&Gate::fixed(GateKind::SqrtZ, q, None), None, false)?,
                NativeKind::Z => state.apply_gate(&Gate::fixed(GateKind::Z, q, None), None, false)?,
                NativeKind::X => state.apply_gate(&Gate::fixed(GateKind::X, q, None), None, false)?,
                NativeKind::H => state.apply_gate(&Gate::fixed(GateKind::H, q, None), None, false)?,
            }
        }
        Ok(())
    }

    /// The circuit applied to `|0...0>`, including the global phase, so the
    /// result equals the source state exactly.
    pub fn simulate(&self) -> Result<StateVector> {
        let mut psi = StateVector::zero(self.n_qubits);
        self.apply(&mut psi)?;
        psi.apply_global_phase(self.global_phase);
        Ok(psi)
    }

    /// The `2^n x 2^n` unitary (without the global phase), column `j` being
    /// the image of basis state `j`.
    pub fn unitary(&self) -> Result<Vec<Vec<Complex64>>> {
        if self.n_qubits > 10 {
            return Err(Error::TooLarge(self.n_qubits));
        }
        (0..1usize << self.n_qubits)
            .map(|j| {
                let mut s = StateVector::basis(self.n_qubits, j);
                self.apply(&mut s)?;
                Ok(s.amplitudes)
            })
            .collect()
    }

    /// One header line, then `layer` separators and one gate per line.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "native-circuit format_version={NATIVE_FORMAT_VERSION} n_qubits={} global_phase={}\n",
            self.n_qubits, self.global_phase
        );
        for layer in &self.layers {
            out.push_str("layer\n");
            for g in layer {
                out.push_str(g.kind.name());
                for q in &g.qubits {
                    let _ = write!(out, " {q}");
                }
                for a in &g.angles {
                    let _ = write!(out, " {a}");
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse("empty native circuit".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("native-circuit") {
            return Err(Error::Parse("missing native-circuit header".into()));
        }
        let (mut version, mut n_qubits, mut global_phase) = (None, None, 0.0);
        for f in fields {
            let (k, v) = f.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field `{f}`")))?;
            let bad = |_| Error::Parse(format!("bad header value `{f}`"));
            match k {
                "format_version" => version = Some(v.parse::<u32>().map_err(|e| bad(e.to_string()))?),
                "n_qubits" => n_qubits = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "global_phase" => global_phase = v.parse::<f64>().map_err(|e| bad(e.to_string()))?,
                _ => return Err(Error::Parse(format!("unknown header field `{k}`"))),
            }
        }
        if version != Some(NATIVE_FORMAT_VERSION) {
            return Err(Error::Parse(format!("unsupported format_version {version:?}")));
        }
        let n_qubits = n_qubits.ok_or_else(|| Error::Parse("header lacks n_qubits".into()))?;
        let mut layers: Vec<Vec<NativeGate>> = Vec::new();
        for (no, line) in lines {
            let line = line.trim();
            if line == "layer" {
                layers.push(Vec::new());
                continue;
            }
            let err = |m: &str| Error::Parse(format!("line {}: {m}", no + 1));
            let mut tok = line.split_whitespace();
            let kind = NativeKind::from_name(tok.next().unwrap()).ok_or_else(|| err("unknown gate"))?;
            let (nq, na) = kind.shape();
            let rest: Vec<&str> = tok.collect();
            if rest.len() != nq + na {
                return Err(err("wrong number of operands"));
            }
            let qubits = rest[..nq].iter().map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| err("bad qubit"))?;
            if qubits.iter().any(|&q| q >= n_qubits) {
                return Err(err("qubit out of range"));
            }
            let angles = rest[nq..].iter().map(|s| s.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| err("bad angle"))?;
            layers.last_mut().ok_or_else(|| err("gate before first layer"))?.push(NativeGate { kind, qubits, angles });
        }
        Ok(Self { n_qubits, layers, global_phase })
    }
}

/// `x - 2 pi k` in `[-pi, pi)`, together with `k`.
fn fold(x: f64) -> (f64, f64) {
    let mut k = (x / TAU).round();
    let mut y = x - TAU * k;
    if y >= PI {
        y -= TAU;
        k += 1.0;
    } else if y < -PI {
        y += TAU;
        k -= 1.0;
    }
    (y, k)
}

/// Places gates into layers of a single class, each as early as its qubits
/// allow. With `merge`, diagonal rotations are accumulated and only emitted
/// when something that does not commute with them arrives.
struct Builder {
    layers: Vec<(Class, Vec<NativeGate>)>,
    last: Vec<Option<usize>>,
    pending: Vec<f64>,
    phase: f64,
    merge: bool,
}

impl Builder {
    fn new(n: usize, merge: bool) -> Self {
        Self { layers: Vec::new(), last: vec![None; n], pending: vec![0.0; n], phase: 0.0, merge }
    }

    fn check(&self, qubits: &[usize]) -> Result<()> {
        if let Some(&q) = qubits.iter().find(|&&q| q >= self.last.len()) {
            return Err(Error::InvalidGate(format!("qubit {q} outside register of {}", self.last.len())));
        }
        if qubits.len() == 2 && qubits[0] == qubits[1] {
            return Err(Error::InvalidGate(format!("two-qubit gate on coincident qubit {}", qubits[0])));
        }
        Ok(())
    }

    fn place(&mut self, g: NativeGate) {
        let class = g.kind.class();
        let start = g.qubits.iter().filter_map(|&q| self.last[q]).max().map_or(0, |l| l + 1);
        let j = match (start..self.layers.len()).find(|&j| self.layers[j].0 == class) {
            Some(j) => j,
            None => {
                self.layers.push((class, Vec::new()));
                self.layers.len() - 1
            }
        };
        for &q in &g.qubits {
            self.last[q] = Some(j);
        }
        self.layers[j].1.push(g);
    }

    fn emit_rz(&mut self, q: usize, theta: f64) {
        let (t, k) = fold(theta);
        // RZ(t + 2 pi k) = (-1)^k RZ(t)
        self.phase += PI * k;
        if t != 0.0 {
            self.place(NativeGate::rz(q, t));
        }
    }

    fn flush(&mut self, q: usize) {
        let t = std::mem::take(&mut self.pending[q]);
        self.emit_rz(q, t);
    }

    fn push(&mut self, g: NativeGate) -> Result<()> {
        self.check(&g.qubits)?;
        if !self.merge {
            self.place(g);
            return Ok(());
        }
        let q = g.qubits[0];
        match g.kind {
            NativeKind::Rz => self.pending[q] += g.angles[0],
            // Z = i RZ(pi), sqrt(Z) = e^{i pi/4} RZ(pi/2)
            NativeKind::Z => {
                self.pending[q] += PI;
                self.phase += FRAC_PI_2;
            }
            NativeKind::SqrtZ => {
                self.pending[q] += FRAC_PI_2;
                self.phase += FRAC_PI_4;
            }
            // RZ(b) then X equals X then RZ(-b)
            NativeKind::X => {
                self.pending[q] = -self.pending[q];
                self.place(g);
            }
            NativeKind::H => {
                self.flush(q);
                self.place(g);
            }
            NativeKind::Fsim => {
                // RZ_a(b) RZ_b(b) commutes with fSim, so only the difference
                // has to be emitted first.
                let b = g.qubits[1];
                let diff = self.pending[q] - self.pending[b];
                self.pending[q] = self.pending[b];
                self.emit_rz(q, diff);
                self.place(g);
            }
        }
        Ok(())
    }

    /// Merged `HEIS(alpha)`. A negative fSim angle is handled by `Z`
    /// conjugation on a qubit whose preceding rotation slot is in use anyway;
    /// on untouched qubits `fSim(t, phi) = -RZ_0(pi) RZ_1(pi) fSim(t + pi/2,
    /// phi) fSim(pi/2, 0)` avoids opening a rotation layer in front.
    fn push_heis(&mut self, a: usize, b: usize, alpha: f64) -> Result<()> {
        self.check(&[a, b])?;
        let (al, k) = fold(alpha);
        let theta = al / 2.0;
        if theta >= 0.0 {
            return self.push_all(heis_sequence(a, b, alpha));
        }
        let conj = if self.last[a].is_some() || self.pending[a] != self.pending[b] {
            Some(a)
        } else if self.last[b].is_some() {
            Some(b)
        } else {
            None
        };
        match conj {
            Some(c) => {
                let mut seq = heis_sequence(a, b, alpha);
                for g in seq.0.iter_mut().filter(|g| g.kind == NativeKind::Z) {
                    g.qubits = vec![c];
                }
                self.push_all(seq)
            }
            None => {
                self.phase += PI * k + PI;
                self.push(NativeGate::fsim(a, b, FRAC_PI_2, 0.0))?;
                self.push(NativeGate::fsim(a, b, theta + FRAC_PI_2, al))?;
                self.push(NativeGate::rz(a, PI + al / 2.0))?;
                self.push(NativeGate::rz(b, PI + al / 2.0))
            }
        }
    }

    fn push_all(&mut self, seq: (Vec<NativeGate>, f64)) -> Result<()> {
        self.phase += seq.1;
        seq.0.into_iter().try_for_each(|g| self.push(g))
    }

    fn finish(mut self, n_qubits: usize) -> NativeCircuit {
        if self.merge {
            for q in 0..n_qubits {
                self.flush(q);
            }
        }
        let layers = self.layers.into_iter().map(|(_, l)| l).filter(|l| !l.is_empty()).collect();
        NativeCircuit { n_qubits, layers, global_phase: fold(self.phase).0 }
    }
}

/// Time-ordered gates on qubits `a, b` and the phase `phi` with
/// `HEIS(alpha) = e^{i phi} (gates)`.
fn heis_sequence(a: usize, b: usize, alpha: f64) -> (Vec<NativeGate>, f64) {
    let (al, k) = fold(alpha);
    // HEIS(alpha + 2 pi k) = (-1)^k HEIS(alpha)
    let phase = PI * k;
    let (theta, phi) = (al / 2.0, al);
    let mut seq = Vec::new();
    if theta >= 0.0 {
        seq.push(NativeGate::fsim(a, b, theta, phi));
    } else {
        seq.push(NativeGate::fixed(NativeKind::Z, a));
        seq.push(NativeGate::fsim(a, b, -theta, phi));
        seq.push(NativeGate::fixed(NativeKind::Z, a));
    }
    seq.push(NativeGate::rz(a, al / 2.0));
    seq.push(NativeGate::rz(b, al / 2.0));
    (seq, phase)
}

fn swap_sequence(a: usize, b: usize) -> (Vec<NativeGate>, f64) {
    (
        vec![NativeGate::fsim(a, b, FRAC_PI_2, PI), NativeGate::fixed(NativeKind::SqrtZ, a), NativeGate::fixed(NativeKind::SqrtZ, b)],
        0.0,
    )
}

/// `HEIS(alpha)` on qubits 0, 1 as `RZ_0(a/2) RZ_1(a/2) fSim(a/2, a)` with
/// `alpha` folded into `[-pi, pi)`; negative fSim angles are conjugated by
/// `Z_0`.
pub fn heis_to_fsim(alpha: f64) -> NativeCircuit {
    let mut b = Builder::new(2, false);
    b.push_all(heis_sequence(0, 1, alpha)).expect("valid qubits");
    b.finish(2)
}

/// `SWAP = sqrt(Z_0) sqrt(Z_1) fSim(pi/2, pi)`.
pub fn swap_to_fsim() -> NativeCircuit {
    let mut b = Builder::new(2, false);
    b.push_all(swap_sequence(0, 1)).expect("valid qubits");
    b.finish(2)
}

fn source_sequence(g: &Gate, angle: Option<f64>) -> Result<(Vec<NativeGate>, f64)> {
    if g.qubits.len() != g.kind.arity() {
        return Err(Error::InvalidGate(format!("{} on {} qubits", g.kind.name(), g.qubits.len())));
    }
    let q = &g.qubits;
    let angle = || angle.or(g.fixed_angle).ok_or_else(|| Error::InvalidGate(format!("{} without angle", g.kind.name())));
    Ok(match g.kind {
        GateKind::Heis => heis_sequence(q[0], q[1], angle()?),
        GateKind::Swap => swap_sequence(q[0], q[1]),
        // CNOT = H_t CZ H_t with CZ = fSim(0, pi)
        GateKind::Cnot => (
            vec![NativeGate::fixed(NativeKind::H, q[1]), NativeGate::fsim(q[0], q[1], 0.0, PI), NativeGate::fixed(NativeKind::H, q[1])],
            0.0,
        ),
        GateKind::Rz => (vec![NativeGate::rz(q[0], angle()?)], 0.0),
        GateKind::X => (vec![NativeGate::fixed(NativeKind::X, q[0])], 0.0),
        GateKind::Z => (vec![NativeGate::fixed(NativeKind::Z, q[0])], 0.0),
        GateKind::SqrtZ => (vec![NativeGate::fixed(NativeKind::SqrtZ, q[0])], 0.0),
        GateKind::H => (vec![NativeGate::fixed(NativeKind::H, q[0])], 0.0),
    })
}

fn compile_layers<'a>(n_qubits: usize, gates: impl IntoIterator<Item = (&'a Gate, Option<f64>)>) -> Result<NativeCircuit> {
    let mut b = Builder::new(n_qubits, true);
    for (g, angle) in gates {
        if g.kind == GateKind::Heis && g.qubits.len() == 2 {
            let alpha = angle.or(g.fixed_angle).ok_or_else(|| Error::InvalidGate("heis without angle".into()))?;
            b.push_heis(g.qubits[0], g.qubits[1], alpha)?;
            continue;
        }
        b.push_all(source_sequence(g, angle)?)?;
    }
    Ok(b.finish(n_qubits))
}

/// Compiles preparation and cycles of `circuit` with `theta` bound, merging
/// consecutive RZ rotations.
pub fn compile_circuit(circuit: &AnsatzCircuit, theta: &[f64]) -> Result<NativeCircuit> {
    if theta.len() != circuit.n_params() {
        return Err(Error::LengthMismatch { expected: circuit.n_params(), got: theta.len() });
    }
    let mut gates: Vec<(&Gate, Option<f64>)> = circuit.prep_layers.iter().flatten().map(|g| (g, None)).collect();
    let order = canonical_order(&circuit.cycle_layers);
    for cycle in 0..circuit.p {
        for (layer, idx) in circuit.cycle_layers.iter().zip(&order) {
            for &i in idx {
                let g = &layer[i];
                gates.push((g, circuit.global_index(cycle, g).map(|k| theta[k])));
            }
        }
    }
    compile_layers(circuit.n_qubits, gates)
}

/// Re-runs the merging pass over an already native circuit.
pub fn compile_native(circuit: &NativeCircuit) -> Result<NativeCircuit> {
    let mut b = Builder::new(circuit.n_qubits, true);
    b.phase = circuit.global_phase;
    for g in circuit.gates() {
        let (nq, na) = g.kind.shape();
        if g.qubits.len() != nq || g.angles.len() != na {
            return Err(Error::InvalidGate(format!("malformed {} gate", g.kind.name())));
        }
        b.push(g.clone())?;
    }
    Ok(b.finish(circuit.n_qubits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NativeSet {
    /// `X`, `H`, controlled flip and `Z`.
    Abstract,
    /// Single-qubit gates plus the exchange gate.
    QuantumDot,
    Fsim,
}

impl std::str::FromStr for NativeSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abstract" => Ok(NativeSet::Abstract),
            "quantum-dot" | "quantum_dot" => Ok(NativeSet::QuantumDot),
            "fsim" => Ok(NativeSet::Fsim),
            _ => Err(Error::UnknownNativeSet(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SingletCircuit {
    Gates(Vec<Vec<Gate>>),
    Native(NativeCircuit),
}

impl SingletCircuit {
    pub fn depth(&self) -> usize {
        match self {
            SingletCircuit::Gates(l) => l.len(),
            SingletCircuit::Native(c) => c.depth(),
        }
    }

    pub fn apply(&self, state: &mut StateVector) -> Result<()> {
        match self {
            SingletCircuit::Gates(l) => l.iter().flatten().try_for_each(|g| state.apply_gate(g, None, false)),
            SingletCircuit::Native(c) => c.apply(state),
        }
    }
}

/// Depth-3 circuit taking `|00>` on qubits 0, 1 to the singlet, up to a
/// global phase.
pub fn singlet_prep(set: NativeSet) -> SingletCircuit {
    let dot = || prep_layers(&DimerCovering { pairs: vec![(0, 1)], non_edge: vec![] }, None);
    match set {
        NativeSet::Abstract => SingletCircuit::Gates(vec![
            vec![Gate::fixed(GateKind::X, &[1], None), Gate::fixed(GateKind::H, &[0], None)],
            vec![Gate::fixed(GateKind::Cnot, &[0, 1], None)],
            vec![Gate::fixed(GateKind::Z, &[0], None)],
        ]),
        NativeSet::QuantumDot => SingletCircuit::Gates(dot()),
        NativeSet::Fsim => {
            let layers = dot();
            SingletCircuit::Native(compile_layers(2, layers.iter().flatten().map(|g| (g, None))).expect("two-qubit prep"))
        }
    }
}

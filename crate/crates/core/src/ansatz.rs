//! Cyclic Hamiltonian-variational circuits.
//!
//! A circuit is a dimer-covering preparation followed by `p` repetitions of a
//! cycle of HEIS layers (one per color class, or the embedding's schedule
//! including SWAPs). HEIS gates carry a per-cycle parameter index; the global
//! index of a gate's parameter in cycle `c` is `c * m + index`.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use crate::lattice::{DimerCovering, EdgeColoring, GridEmbedding, ScheduledKind, SpinGraph};
use crate::{Error, Result};

/// Angles of all cycles, cycle-major.
pub type ParameterVector = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateKind {
    /// `exp(-i alpha SWAP / 2)`, the exchange gate.
    Heis,
    Swap,
    /// `exp(-i theta Z / 2)`.
    Rz,
    X,
    Z,
    SqrtZ,
    H,
    /// Control first, target second.
    Cnot,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::Heis | GateKind::Swap | GateKind::Cnot => 2,
            _ => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Heis => "heis",
            GateKind::Swap => "swap",
            GateKind::Rz => "rz",
            GateKind::X => "x",
            GateKind::Z => "z",
            GateKind::SqrtZ => "sqrt_z",
            GateKind::H => "h",
            GateKind::Cnot => "cnot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub qubits: Vec<usize>,
    /// Per-cycle parameter index of a variational gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_angle: Option<f64>,
}

impl Gate {
    pub fn fixed(kind: GateKind, qubits: &[usize], angle: Option<f64>) -> Self {
        Self { kind, qubits: qubits.to_vec(), param_index: None, fixed_angle: angle }
    }

    pub fn heis(a: usize, b: usize, param_index: usize) -> Self {
        Self { kind: GateKind::Heis, qubits: vec![a, b], param_index: Some(param_index), fixed_angle: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamMode {
    /// One parameter per gate.
    Opg,
    /// One parameter per slice (color class) and cycle.
    Ops,
}

impl std::str::FromStr for ParamMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "opg" => Ok(ParamMode::Opg),
            "ops" => Ok(ParamMode::Ops),
            _ => Err(Error::Parse(format!("unknown parameter mode `{s}`"))),
        }
    }
}

/// One covering pair replaced by a triplet with magnetization `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletOverride {
    pub pair: (usize, usize),
    pub m: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnsatzCircuit {
    pub n_qubits: usize,
    pub n_sites: usize,
    /// Dimer covering in qubit indices.
    pub covering: DimerCovering,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triplet: Option<TripletOverride>,
    pub prep_layers: Vec<Vec<Gate>>,
    pub cycle_layers: Vec<Vec<Gate>>,
    pub p: usize,
    pub param_mode: ParamMode,
    /// Parameters per cycle.
    pub m: usize,
}

impl AnsatzCircuit {
    /// Total number of parameters `M = m p`.
    pub fn n_params(&self) -> usize {
        self.m * self.p
    }

    pub fn cycle_depth(&self) -> usize {
        self.cycle_layers.len()
    }

    pub fn depth(&self) -> usize {
        self.prep_layers.len() + self.p * self.cycle_layers.len()
    }

    /// Same circuit with a different number of cycles.
    pub fn with_cycles(&self, p: usize) -> Self {
        Self { p, ..self.clone() }
    }

    /// Replaces the singlet on `pair` by the triplet state with magnetization `m`.
    pub fn with_triplet(&self, pair: (usize, usize), m: i8) -> Result<Self> {
        if !(-1..=1).contains(&m) {
            return Err(Error::InvalidParameter(format!("triplet magnetization {m} not in -1..=1")));
        }
        let key = (pair.0.min(pair.1), pair.0.max(pair.1));
        let Some(&stored) = self.covering.pairs.iter().find(|&&(a, b)| (a.min(b), a.max(b)) == key) else {
            return Err(Error::InvalidCovering(format!("pair {pair:?} is not in the covering")));
        };
        let triplet = Some(TripletOverride { pair: stored, m });
        let prep_layers = prep_layers(&self.covering, triplet);
        Ok(Self { triplet, prep_layers, ..self.clone() })
    }

    /// Global parameter index used by `gate` in cycle `cycle`.
    pub fn global_index(&self, cycle: usize, gate: &Gate) -> Option<usize> {
        gate.param_index.map(|k| cycle * self.m + k)
    }

    /// Human-readable listing of layers, gates and parameter indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mode = match self.param_mode {
            ParamMode::Opg => "opg",
            ParamMode::Ops => "ops",
        };
        let _ = writeln!(out, "hva n_qubits={} n_sites={} p={} mode={} m={} M={}", self.n_qubits, self.n_sites, self.p, mode, self.m, self.n_params());
        let section = |out: &mut String, title: &str, layers: &[Vec<Gate>]| {
            let _ = writeln!(out, "{title}");
            for (l, layer) in layers.iter().enumerate() {
                let _ = write!(out, "  layer {l}:");
                for g in layer {
                    let qs: Vec<String> = g.qubits.iter().map(|q| q.to_string()).collect();
                    let _ = write!(out, " {}({})", g.kind.name(), qs.join(","));
                    if let Some(k) = g.param_index {
                        let _ = write!(out, "[t{k}]");
                    }
                    if let Some(a) = g.fixed_angle {
                        let _ = write!(out, "[{a}]");
                    }
                }
                out.push('\n');
            }
        };
        section(&mut out, "prep", &self.prep_layers);
        section(&mut out, "cycle", &self.cycle_layers);
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        check_layers(&c.prep_layers, c.n_qubits)?;
        check_layers(&c.cycle_layers, c.n_qubits)?;
        Ok(c)
    }
}

/// Depth-3 singlet preparation per pair `(a, b)`: `X_a`, `HEIS(pi/2)`,
/// `RZ_b(-pi/2)`, which yields the singlet up to a global phase. A triplet
/// override uses `RZ_b(+pi/2)` for `m = 0`, `X_a X_b` for `m = -1` and
/// nothing for `m = +1`.
pub fn prep_layers(covering: &DimerCovering, triplet: Option<TripletOverride>) -> Vec<Vec<Gate>> {
    let mut layers = vec![Vec::new(), Vec::new(), Vec::new()];
    for &(a, b) in &covering.pairs {
        let m = triplet.filter(|t| t.pair == (a, b)).map(|t| t.m);
        match m {
            None | Some(0) => {
                let rz = if m.is_none() { -FRAC_PI_2 } else { FRAC_PI_2 };
                layers[0].push(Gate::fixed(GateKind::X, &[a], None));
                layers[1].push(Gate::fixed(GateKind::Heis, &[a, b], Some(FRAC_PI_2)));
                layers[2].push(Gate::fixed(GateKind::Rz, &[b], Some(rz)));
            }
            Some(1) => {}
            Some(_) => {
                layers[0].push(Gate::fixed(GateKind::X, &[a], None));
                layers[0].push(Gate::fixed(GateKind::X, &[b], None));
            }
        }
    }
    while layers.last().is_some_and(|l| l.is_empty()) {
        layers.pop();
    }
    layers
}

fn check_layers(layers: &[Vec<Gate>], n_qubits: usize) -> Result<()> {
    for (l, layer) in layers.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for g in layer {
            if g.qubits.len() != g.kind.arity() {
                return Err(Error::InvalidGate(format!("{} on {} qubits", g.kind.name(), g.qubits.len())));
            }
            for &q in &g.qubits {
                if q >= n_qubits {
                    return Err(Error::InvalidGate(format!("qubit {q} outside register of {n_qubits}")));
                }
                if !seen.insert(q) {
                    return Err(Error::Consistency(format!("layer {l} uses qubit {q} twice")));
                }
            }
        }
    }
    Ok(())
}

/// Builds the HVA circuit. Without an embedding the cycle applies the color
/// classes in order; with one it follows the embedding's layer schedule. OPS
/// slices are the color classes of the (effective) bonds.
pub fn build_hva(
    graph: &SpinGraph,
    coloring: &EdgeColoring,
    covering: &DimerCovering,
    p: usize,
    mode: ParamMode,
    embedding: Option<&GridEmbedding>,
) -> Result<AnsatzCircuit> {
    coloring.validate(graph)?;
    covering.validate_on(graph)?;
    let edge_param: BTreeMap<(usize, usize), usize> = match mode {
        ParamMode::Ops => graph.edges.iter().map(|&e| (e, coloring.color_of(e.0, e.1).unwrap())).collect(),
        ParamMode::Opg => BTreeMap::new(),
    };
    let mut next = 0usize;
    let mut param_for = |e: (usize, usize)| match mode {
        ParamMode::Opg => {
            next += 1;
            next - 1
        }
        ParamMode::Ops => edge_param[&e],
    };
    let (n_qubits, cycle_layers, covering_q) = match embedding {
        None => {
            let layers: Vec<Vec<Gate>> = coloring
                .classes
                .iter()
                .map(|class| class.iter().map(|&(a, b)| Gate::heis(a, b, param_for((a, b)))).collect())
                .collect();
            (graph.n_sites, layers, covering.clone())
        }
        Some(emb) => {
            if emb.n_sites() != graph.n_sites {
                return Err(Error::Consistency("embedding and graph disagree on site count".into()));
            }
            emb.validate(graph)?;
            let layers: Vec<Vec<Gate>> = emb
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|g| {
                            let (a, b) = g.qubits;
                            match g.kind {
                                ScheduledKind::Swap => Gate::fixed(GateKind::Swap, &[a, b], None),
                                ScheduledKind::Heis { edge } => {
                                    Gate::heis(a, b, param_for((edge.0.min(edge.1), edge.0.max(edge.1))))
                                }
                            }
                        })
                        .collect()
                })
                .collect();
            let pairs = covering
                .pairs
                .iter()
                .map(|&(a, b)| (emb.site_to_qubit[a], emb.site_to_qubit[b]))
                .collect();
            (emb.n_qubits(), layers, DimerCovering { pairs, non_edge: covering.non_edge.clone() })
        }
    };
    let m = match mode {
        ParamMode::Opg => graph.n_edges(),
        ParamMode::Ops => coloring.n_colors(),
    };
    let prep = prep_layers(&covering_q, None);
    check_layers(&prep, n_qubits)?;
    check_layers(&cycle_layers, n_qubits)?;
    Ok(AnsatzCircuit {
        n_qubits,
        n_sites: graph.n_sites,
        covering: covering_q,
        triplet: None,
        prep_layers: prep,
        cycle_layers,
        p,
        param_mode: mode,
        m,
    })
}

/// First-order Trotter angles `t / p` for every parameter.
pub fn trotter_parameters(circuit: &AnsatzCircuit, t: f64) -> Result<ParameterVector> {
    if circuit.p == 0 {
        if t != 0.0 {
            return Err(Error::InvalidParameter("Trotter evolution with zero cycles and t != 0".into()));
        }
        return Ok(Vec::new());
    }
    Ok(vec![t / circuit.p as f64; circuit.n_params()])
}

/// Qubits that can influence `qubit` through the cycle layers (the state
/// preparation is excluded).
pub fn past_light_cone(circuit: &AnsatzCircuit, qubit: usize) -> BTreeSet<usize> {
    let mut cone = vec![false; circuit.n_qubits];
    cone[qubit] = true;
    for _ in 0..circuit.p {
        for layer in circuit.cycle_layers.iter().rev() {
            for g in layer {
                if g.qubits.len() == 2 && g.qubits.iter().any(|&q| cone[q]) {
                    for &q in &g.qubits {
                        cone[q] = true;
                    }
                }
            }
        }
    }
    (0..circuit.n_qubits).filter(|&q| cone[q]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitStats {
    pub counts: BTreeMap<String, usize>,
    pub total_gates: usize,
    pub depth: usize,
    pub n_params: usize,
}

pub fn circuit_stats(circuit: &AnsatzCircuit) -> CircuitStats {
    let mut counts = BTreeMap::new();
    for g in circuit.prep_layers.iter().flatten() {
        *counts.entry(g.kind.name().to_string()).or_insert(0) += 1;
    }
    for g in circuit.cycle_layers.iter().flatten() {
        *counts.entry(g.kind.name().to_string()).or_insert(0) += circuit.p;
    }
    CircuitStats {
        total_gates: counts.values().sum(),
        counts,
        depth: circuit.depth(),
        n_params: circuit.n_params(),
    }
}

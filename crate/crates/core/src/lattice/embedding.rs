use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use super::{edge_coloring, GraphKind, SpinGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduledKind {
    /// Exchange between the sites currently held by the two qubits.
    Heis { edge: (usize, usize) },
    Swap,
}

/// A two-qubit gate on grid-adjacent physical qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduledGate {
    pub kind: ScheduledKind,
    pub qubits: (usize, usize),
}

/// Placement of a graph on a square qubit grid together with one cycle of
/// HEIS and SWAP layers. Data qubit `i` hosts site `i` at the start and end
/// of every cycle; auxiliary qubits follow the data qubits and start in `|0>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEmbedding {
    /// `(rows, cols)` of the bounding grid.
    pub grid_shape: (usize, usize),
    pub site_to_qubit: Vec<usize>,
    pub aux_qubits: Vec<usize>,
    /// Grid position `(x, y)` of every physical qubit.
    pub qubit_coords: Vec<(i32, i32)>,
    pub layers: Vec<Vec<ScheduledGate>>,
}

impl GridEmbedding {
    pub fn n_qubits(&self) -> usize {
        self.qubit_coords.len()
    }

    pub fn n_sites(&self) -> usize {
        self.site_to_qubit.len()
    }

    pub fn cycle_depth(&self) -> usize {
        self.layers.len()
    }

    pub fn n_heis(&self) -> usize {
        self.count(|k| matches!(k, ScheduledKind::Heis { .. }))
    }

    pub fn n_swaps(&self) -> usize {
        self.count(|k| matches!(k, ScheduledKind::Swap))
    }

    fn count(&self, f: impl Fn(&ScheduledKind) -> bool) -> usize {
        self.layers.iter().flatten().filter(|g| f(&g.kind)).count()
    }

    /// Site pairs actually coupled by the HEIS gates of one cycle, found by
    /// pushing site labels through the SWAPs. Also returns the final map.
    pub fn effective_edges(&self) -> Result<(Vec<(usize, usize)>, Vec<Option<usize>>)> {
        let mut held: Vec<Option<usize>> = vec![None; self.n_qubits()];
        for (s, &q) in self.site_to_qubit.iter().enumerate() {
            held[q] = Some(s);
        }
        let mut out = Vec::new();
        for layer in &self.layers {
            let mut busy = vec![false; self.n_qubits()];
            for g in layer {
                let (a, b) = g.qubits;
                if busy[a] || busy[b] || a == b {
                    return Err(Error::Consistency(format!("qubit reused in layer at {a}, {b}")));
                }
                busy[a] = true;
                busy[b] = true;
                let (pa, pb) = (self.qubit_coords[a], self.qubit_coords[b]);
                if (pa.0 - pb.0).abs() + (pa.1 - pb.1).abs() != 1 {
                    return Err(Error::Consistency(format!("qubits {a}, {b} not grid-adjacent")));
                }
            }
            for g in layer {
                let (a, b) = g.qubits;
                match g.kind {
                    ScheduledKind::Swap => held.swap(a, b),
                    ScheduledKind::Heis { edge } => {
                        let (Some(s), Some(t)) = (held[a], held[b]) else {
                            return Err(Error::Consistency(format!("HEIS on empty qubit {a} or {b}")));
                        };
                        if (s.min(t), s.max(t)) != (edge.0.min(edge.1), edge.0.max(edge.1)) {
                            return Err(Error::Consistency(format!(
                                "gate labelled {edge:?} couples sites ({s}, {t})"
                            )));
                        }
                        out.push((s.min(t), s.max(t)));
                    }
                }
            }
        }
        Ok((out, held))
    }

    /// Effective interactions equal the bond set exactly once and the site
    /// map is restored at the end of the cycle.
    pub fn validate(&self, graph: &SpinGraph) -> Result<()> {
        let (mut eff, held) = self.effective_edges()?;
        eff.sort_unstable();
        let mut want = graph.edges.clone();
        want.sort_unstable();
        if eff != want {
            return Err(Error::Consistency("effective interactions differ from the bond set".into()));
        }
        for (s, &q) in self.site_to_qubit.iter().enumerate() {
            if held[q] != Some(s) {
                return Err(Error::Consistency(format!("site {s} not returned to qubit {q}")));
            }
        }
        Ok(())
    }
}

/// Embeds `graph` on a square grid.
///
/// Chains become a line (open) or the perimeter of a `2 x n/2` block
/// (periodic, even `n`) with one layer per color class. Open kagome patches
/// keep their grid coordinates; every hexagon centre crossed by an
/// anti-diagonal bond holds an auxiliary qubit, and one of the two ends of
/// each such bond is swapped onto it and back within a six-layer cycle.
pub fn embed_on_grid(graph: &SpinGraph) -> Result<GridEmbedding> {
    match graph.kind {
        GraphKind::ChainOpen | GraphKind::ChainPeriodic => embed_chain(graph),
        GraphKind::KagomeOpen => match &graph.coords {
            Some(coords) => embed_kagome(graph, coords),
            None => Err(Error::UnsupportedEmbedding("kagome patch without grid coordinates".into())),
        },
        other => Err(Error::UnsupportedEmbedding(format!("no grid embedding for {other:?} graphs"))),
    }
}

fn embed_chain(graph: &SpinGraph) -> Result<GridEmbedding> {
    let n = graph.n_sites;
    let periodic = graph.kind == GraphKind::ChainPeriodic;
    let coords: Vec<(i32, i32)> = if periodic {
        if n % 2 == 1 {
            return Err(Error::UnsupportedEmbedding(format!("odd ring of {n} sites does not fit a grid")));
        }
        let h = n / 2;
        (0..n).map(|i| if i < h { (i as i32, 0) } else { ((n - 1 - i) as i32, 1) }).collect()
    } else {
        (0..n).map(|i| (i as i32, 0)).collect()
    };
    let coloring = edge_coloring(graph)?;
    let layers = coloring
        .classes
        .iter()
        .map(|class| {
            class
                .iter()
                .map(|&e| ScheduledGate { kind: ScheduledKind::Heis { edge: e }, qubits: e })
                .collect()
        })
        .collect();
    let emb = GridEmbedding {
        grid_shape: if periodic && n > 2 { (2, n / 2) } else { (1, n) },
        site_to_qubit: (0..n).collect(),
        aux_qubits: Vec::new(),
        qubit_coords: coords,
        layers,
    };
    emb.validate(graph)?;
    Ok(emb)
}

const CYCLE_DEPTH: usize = 6;
const SOLVE_BUDGET: usize = 200_000;

type Point = (i32, i32);

fn adjacent(p: Point, q: Point) -> bool {
    (p.0 - q.0).abs() + (p.1 - q.1).abs() == 1
}

/// Anti-diagonal bonds each need a station at the odd-odd grid point next to
/// both ends.
fn station_of(p: Point, q: Point) -> Option<Point> {
    let (lo, hi) = if p.0 < q.0 { (p, q) } else { (q, p) };
    if hi.0 - lo.0 != 1 || lo.1 - hi.1 != 1 {
        return None;
    }
    [(hi.0, lo.1), (lo.0, hi.1)].into_iter().find(|c| c.0 % 2 != 0 && c.1 % 2 != 0)
}

/// SWAPs `(layer, mover)` for one station; each diagonal gets an in/out pair
/// of layers, `(0, 2)` or `(3, 5)`.
fn station_templates(diagonals: &[(Point, Point)]) -> Vec<Vec<(usize, Point)>> {
    let slots = [(0usize, 2usize), (3, 5)];
    let mut out = Vec::new();
    match diagonals {
        [d] => {
            for &(i, o) in &slots {
                for m in [d.0, d.1] {
                    out.push(vec![(i, m), (o, m)]);
                }
            }
        }
        [d1, d2] => {
            for first in [false, true] {
                let (x, y) = if first { (d2, d1) } else { (d1, d2) };
                for m1 in [x.0, x.1] {
                    for m2 in [y.0, y.1] {
                        out.push(vec![(0, m1), (2, m1), (3, m2), (5, m2)]);
                    }
                }
            }
        }
        _ => {}
    }
    out
}

fn embed_kagome(graph: &SpinGraph, coords: &[Point]) -> Result<GridEmbedding> {
    let n = graph.n_sites;
    let mut stations: BTreeMap<Point, Vec<(Point, Point)>> = BTreeMap::new();
    for &(a, b) in &graph.edges {
        let (p, q) = (coords[a], coords[b]);
        if adjacent(p, q) {
            continue;
        }
        let Some(x) = station_of(p, q) else {
            return Err(Error::UnsupportedEmbedding(format!("bond ({a}, {b}) is not a grid diagonal")));
        };
        stations.entry(x).or_default().push((p, q));
    }
    if stations.keys().any(|x| coords.contains(x)) {
        return Err(Error::UnsupportedEmbedding("station collides with a data site".into()));
    }
    let mut qubit_coords = coords.to_vec();
    let aux_qubits: Vec<usize> = (n..n + stations.len()).collect();
    qubit_coords.extend(stations.keys().copied());
    let qubit_at: HashMap<Point, usize> = qubit_coords.iter().enumerate().map(|(i, &p)| (p, i)).collect();

    let templates: Vec<Vec<Vec<(usize, Point)>>> = stations.values().map(|d| station_templates(d)).collect();
    if templates.iter().any(|t| t.is_empty()) {
        return Err(Error::UnsupportedEmbedding("station crossed by more than two bonds".into()));
    }
    let station_q: Vec<usize> = aux_qubits.clone();
    let solver = Solver { graph, qubit_coords: &qubit_coords, qubit_at: &qubit_at };

    // uniform template choices first, then the full product
    let max_t = templates.iter().map(|t| t.len()).max().unwrap_or(0);
    let mut choices: Vec<Vec<usize>> = (0..max_t).map(|k| templates.iter().map(|t| k.min(t.len() - 1)).collect()).collect();
    if stations.is_empty() {
        choices = vec![Vec::new()];
    }
    let mut tried = 0usize;
    let total: usize = templates.iter().map(|t| t.len()).product();
    let mut product_idx = 0usize;
    loop {
        let choice = if tried < choices.len() {
            choices[tried].clone()
        } else {
            if product_idx >= total {
                break;
            }
            let mut rem = product_idx;
            product_idx += 1;
            templates
                .iter()
                .map(|t| {
                    let k = rem % t.len();
                    rem /= t.len();
                    k
                })
                .collect()
        };
        tried += 1;
        let mut swaps = vec![Vec::new(); CYCLE_DEPTH];
        for ((x, t), &k) in station_q.iter().zip(&templates).zip(&choice) {
            for &(layer, mover) in &t[k] {
                swaps[layer].push((*x, qubit_at[&mover]));
            }
        }
        if let Some(layers) = solver.solve(&swaps) {
            let emb = GridEmbedding {
                grid_shape: grid_shape(&qubit_coords),
                site_to_qubit: (0..n).collect(),
                aux_qubits,
                qubit_coords,
                layers,
            };
            emb.validate(graph)?;
            return Ok(emb);
        }
    }
    Err(Error::UnsupportedEmbedding("no six-layer swap schedule found".into()))
}

fn grid_shape(coords: &[Point]) -> (usize, usize) {
    let (x0, x1) = (coords.iter().map(|p| p.0).min().unwrap(), coords.iter().map(|p| p.0).max().unwrap());
    let (y0, y1) = (coords.iter().map(|p| p.1).min().unwrap(), coords.iter().map(|p| p.1).max().unwrap());
    ((y1 - y0 + 1) as usize, (x1 - x0 + 1) as usize)
}

struct Solver<'a> {
    graph: &'a SpinGraph,
    qubit_coords: &'a [Point],
    qubit_at: &'a HashMap<Point, usize>,
}

impl Solver<'_> {
    /// Places one HEIS gate per bond given the SWAP layers, or `None`.
    fn solve(&self, swaps: &[Vec<(usize, usize)>]) -> Option<Vec<Vec<ScheduledGate>>> {
        let nq = self.qubit_coords.len();
        let mut held: Vec<Option<usize>> = vec![None; nq];
        for s in 0..self.graph.n_sites {
            held[s] = Some(s);
        }
        let mut used = vec![vec![false; nq]; swaps.len()];
        let mut snapshots = Vec::with_capacity(swaps.len());
        for (l, layer) in swaps.iter().enumerate() {
            snapshots.push(held.clone());
            for &(a, b) in layer {
                if used[l][a] || used[l][b] {
                    return None;
                }
                used[l][a] = true;
                used[l][b] = true;
                held.swap(a, b);
            }
        }
        if (0..self.graph.n_sites).any(|s| held[s] != Some(s)) {
            return None;
        }
        // candidate (layer, qubit, qubit) per bond
        let edge_index: HashMap<(usize, usize), usize> =
            self.graph.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut cands: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); self.graph.n_edges()];
        for (l, snap) in snapshots.iter().enumerate() {
            for q in 0..nq {
                let p = self.qubit_coords[q];
                for r in [(p.0 + 1, p.1), (p.0, p.1 + 1)].iter().filter_map(|c| self.qubit_at.get(c)) {
                    if used[l][q] || used[l][*r] {
                        continue;
                    }
                    if let (Some(s), Some(t)) = (snap[q], snap[*r]) {
                        if let Some(&i) = edge_index.get(&(s.min(t), s.max(t))) {
                            cands[i].push((l, q, *r));
                        }
                    }
                }
            }
        }
        let mut pick = vec![None; self.graph.n_edges()];
        let mut budget = SOLVE_BUDGET;
        if !place(&cands, &mut used, &mut pick, &mut budget) {
            return None;
        }
        let mut layers: Vec<Vec<ScheduledGate>> = swaps
            .iter()
            .map(|l| l.iter().map(|&(a, b)| ScheduledGate { kind: ScheduledKind::Swap, qubits: (a, b) }).collect())
            .collect();
        for (i, p) in pick.iter().enumerate() {
            let (l, q, r) = p.unwrap();
            layers[l].push(ScheduledGate { kind: ScheduledKind::Heis { edge: self.graph.edges[i] }, qubits: (q, r) });
        }
        Some(layers)
    }
}

/// Most-constrained-first backtracking over the remaining bonds.
fn place(
    cands: &[Vec<(usize, usize, usize)>],
    used: &mut [Vec<bool>],
    pick: &mut [Option<(usize, usize, usize)>],
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let mut best: Option<(usize, Vec<(usize, usize, usize)>)> = None;
    for (i, c) in cands.iter().enumerate() {
        if pick[i].is_some() {
            continue;
        }
        let opts: Vec<_> = c.iter().copied().filter(|&(l, q, r)| !used[l][q] && !used[l][r]).collect();
        if opts.is_empty() {
            return false;
        }
        if best.as_ref().is_none_or(|(_, b)| opts.len() < b.len()) {
            best = Some((i, opts));
        }
    }
    let Some((i, opts)) = best else {
        return true;
    };
    for (l, q, r) in opts {
        used[l][q] = true;
        used[l][r] = true;
        pick[i] = Some((l, q, r));
        if place(cands, used, pick, budget) {
            return true;
        }
        used[l][q] = false;
        used[l][r] = false;
        pick[i] = None;
    }
    false
}

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use super::{GraphKind, SpinGraph};
use crate::{Error, Result};

/// Partition of the bond set into matchings; one class per gate layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeColoring {
    pub classes: Vec<Vec<(usize, usize)>>,
}

impl EdgeColoring {
    pub fn n_colors(&self) -> usize {
        self.classes.len()
    }

    /// Color index of a bond, if it is colored.
    pub fn color_of(&self, a: usize, b: usize) -> Option<usize> {
        let e = (a.min(b), a.max(b));
        self.classes.iter().position(|c| c.contains(&e))
    }

    /// Checks disjointness, coverage of `graph` and the matching property.
    pub fn validate(&self, graph: &SpinGraph) -> Result<()> {
        let mut union = BTreeSet::new();
        for (k, class) in self.classes.iter().enumerate() {
            let mut touched = BTreeSet::new();
            for &(a, b) in class {
                let e = (a.min(b), a.max(b));
                if !union.insert(e) {
                    return Err(Error::Consistency(format!("edge {e:?} colored twice")));
                }
                if !touched.insert(a) || !touched.insert(b) {
                    return Err(Error::Consistency(format!("color class {k} is not a matching")));
                }
            }
        }
        if union != graph.edge_set() {
            return Err(Error::Consistency("coloring does not cover the graph's edges".into()));
        }
        Ok(())
    }
}

const SEARCH_BUDGET: usize = 2_000_000;

/// Minimal edge coloring: even/odd bonds for chains, an exact search with
/// `max_degree` colors otherwise, and greedy first-fit as a last resort.
pub fn edge_coloring(graph: &SpinGraph) -> Result<EdgeColoring> {
    if graph.edges.is_empty() {
        return Err(Error::ColoringFailure("graph has no edges".into()));
    }
    let coloring = match graph.kind {
        GraphKind::ChainOpen | GraphKind::ChainPeriodic if is_chain(graph) => chain_coloring(graph),
        _ => {
            let delta = graph.max_degree();
            match exact_coloring(graph, delta) {
                Some(c) => c,
                None => greedy_coloring(graph, delta)?,
            }
        }
    };
    coloring.validate(graph)?;
    Ok(coloring)
}

fn is_chain(graph: &SpinGraph) -> bool {
    let n = graph.n_sites;
    graph.edges.iter().all(|&(a, b)| b == a + 1 || (a == 0 && b == n - 1))
}

fn chain_coloring(graph: &SpinGraph) -> EdgeColoring {
    let n = graph.n_sites;
    let mut classes = vec![Vec::new(), Vec::new()];
    let mut closing = None;
    for &(a, b) in &graph.edges {
        if a == 0 && b == n - 1 && n > 2 {
            closing = Some((a, b));
        } else {
            classes[a % 2].push((a, b));
        }
    }
    if let Some(e) = closing {
        // bond (n-1, 0) continues the parity of site n-1
        if n % 2 == 0 {
            classes[1].push(e);
        } else {
            classes.push(vec![e]);
        }
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    classes.retain(|c| !c.is_empty());
    EdgeColoring { classes }
}

/// Bond order for the search: breadth-first from site 0 so that each new bond
/// touches already-colored ones.
pub(super) fn bfs_edge_order(graph: &SpinGraph) -> Vec<(usize, usize)> {
    let adj = graph.adjacency();
    let mut seen_v = vec![false; graph.n_sites];
    let mut seen_e = BTreeSet::new();
    let mut order = Vec::with_capacity(graph.edges.len());
    for root in 0..graph.n_sites {
        if seen_v[root] {
            continue;
        }
        seen_v[root] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                let e = (v.min(w), v.max(w));
                if seen_e.insert(e) {
                    order.push(e);
                }
                if !seen_v[w] {
                    seen_v[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order
}

fn exact_coloring(graph: &SpinGraph, colors: usize) -> Option<EdgeColoring> {
    if colors == 0 || colors > 63 {
        return None;
    }
    let order = bfs_edge_order(graph);
    let mut used = vec![0u64; graph.n_sites];
    let mut assign = vec![usize::MAX; order.len()];
    let mut budget = SEARCH_BUDGET;
    if !search_colors(0, &order, &mut used, &mut assign, colors, 0, &mut budget) {
        return None;
    }
    Some(classes_from(&order, &assign, colors))
}

/// Depth-first color assignment; `opened` is the number of colors in use, and
/// unopened colors are interchangeable so only the first of them is tried.
fn search_colors(
    i: usize,
    order: &[(usize, usize)],
    used: &mut [u64],
    assign: &mut [usize],
    colors: usize,
    opened: usize,
    budget: &mut usize,
) -> bool {
    if i == order.len() {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let (a, b) = order[i];
    let free = !(used[a] | used[b]);
    for c in 0..colors.min(opened + 1) {
        if free & (1 << c) == 0 {
            continue;
        }
        used[a] |= 1 << c;
        used[b] |= 1 << c;
        assign[i] = c;
        if search_colors(i + 1, order, used, assign, colors, opened.max(c + 1), budget) {
            return true;
        }
        used[a] &= !(1 << c);
        used[b] &= !(1 << c);
    }
    false
}

fn classes_from(order: &[(usize, usize)], assign: &[usize], colors: usize) -> EdgeColoring {
    let mut classes = vec![Vec::new(); colors];
    for (&e, &c) in order.iter().zip(assign) {
        classes[c].push(e);
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    classes.retain(|c| !c.is_empty());
    EdgeColoring { classes }
}

fn greedy_coloring(graph: &SpinGraph, delta: usize) -> Result<EdgeColoring> {
    let order = bfs_edge_order(graph);
    let mut used: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); graph.n_sites];
    let mut assign = Vec::with_capacity(order.len());
    let mut n_colors = 0;
    for &(a, b) in &order {
        let c = (0..).find(|c| !used[a].contains(c) && !used[b].contains(c)).unwrap();
        used[a].insert(c);
        used[b].insert(c);
        n_colors = n_colors.max(c + 1);
        assign.push(c);
    }
    if n_colors > delta + 1 {
        return Err(Error::ColoringFailure(format!(
            "greedy coloring needed {n_colors} colors, more than max degree + 1 = {}",
            delta + 1
        )));
    }
    Ok(classes_from(&order, &assign, n_colors))
}

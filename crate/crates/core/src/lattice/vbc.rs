use serde::{Deserialize, Serialize};

use super::{build_kagome_torus, DimerCovering, EdgeColoring, SpinGraph, Sub};
use crate::{Error, Result};

/// The 36-site valence-bond-crystal pattern on the hexagonal 12-cell torus:
/// as many disjoint perfect hexagons (three alternating singlets each) as
/// admit a completion, the remaining sites paired up, and a four-coloring
/// whose first class is the dimer set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vbc36 {
    pub graph: SpinGraph,
    pub covering: DimerCovering,
    pub coloring: EdgeColoring,
    /// Sites of the perfect hexagons in cyclic order.
    pub hexagons: Vec<[usize; 6]>,
}

/// Builds the 36-site hexagonal torus and its VBC dimer pattern.
pub fn vbc36_covering() -> Result<Vbc36> {
    let u = (2, 2);
    let v = (-2, 4);
    let graph = build_kagome_torus(u, v)?;
    let n = graph.n_sites;
    let (site, cells) = torus_site_lookup(u, v, &graph)?;
    let all_hexagons: Vec<[usize; 6]> = cells
        .iter()
        .map(|&(x, y)| {
            [
                site(x, y, Sub::B),
                site(x + 1, y, Sub::A),
                site(x + 1, y, Sub::C),
                site(x, y + 1, Sub::B),
                site(x, y + 1, Sub::A),
                site(x, y, Sub::C),
            ]
        })
        .collect();
    let adj = graph.adjacency();
    for size in (1..=all_hexagons.len() / 2).rev() {
        for subset in combinations(all_hexagons.len(), size) {
            let mut mate = vec![usize::MAX; n];
            let disjoint = subset.iter().all(|&k| {
                let h = &all_hexagons[k];
                (0..3).all(|j| {
                    let (a, b) = (h[2 * j], h[2 * j + 1]);
                    let free = mate[a] == usize::MAX && mate[b] == usize::MAX;
                    if free {
                        mate[a] = b;
                        mate[b] = a;
                    }
                    free
                })
            });
            if !disjoint || !match_rest(&adj, &mut mate) {
                continue;
            }
            let mut pairs: Vec<(usize, usize)> = (0..n).filter(|&s| s < mate[s]).map(|s| (s, mate[s])).collect();
            pairs.sort_unstable();
            let Some(coloring) = four_coloring(&graph, &pairs) else {
                continue;
            };
            let covering = DimerCovering { pairs, non_edge: Vec::new() };
            covering.validate_on(&graph)?;
            coloring.validate(&graph)?;
            let hexagons = subset.iter().map(|&k| all_hexagons[k]).collect();
            return Ok(Vbc36 { graph, covering, coloring, hexagons });
        }
    }
    Err(Error::NoPerfectMatching("no VBC pattern on the 36-site torus".into()))
}

/// Dimers as color 0 plus a 3-edge-coloring of the cubic complement.
fn four_coloring(graph: &SpinGraph, pairs: &[(usize, usize)]) -> Option<EdgeColoring> {
    let rest: Vec<(usize, usize)> = graph.edges.iter().copied().filter(|e| !pairs.contains(e)).collect();
    let rest_graph = SpinGraph::new(graph.n_sites, rest, graph.kind).ok()?;
    let order = super::coloring::bfs_edge_order(&rest_graph);
    let mut color = vec![usize::MAX; order.len()];
    let mut used = vec![0u8; graph.n_sites];
    let mut budget = 1_000_000usize;
    if !three_color(&order, 0, &mut color, &mut used, &mut budget) {
        return None;
    }
    let mut classes = vec![pairs.to_vec(), Vec::new(), Vec::new(), Vec::new()];
    for (e, c) in order.iter().zip(&color) {
        classes[c + 1].push(*e);
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    Some(EdgeColoring { classes })
}

/// Index subsets of `0..n` of the given size in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn torus_site_lookup(
    u: (i32, i32),
    v: (i32, i32),
    graph: &SpinGraph,
) -> Result<(impl Fn(i32, i32, Sub) -> usize, Vec<(i32, i32)>)> {
    // rebuild the cell labels the same way the torus builder enumerates them
    let det = u.0 * v.1 - u.1 * v.0;
    let d = det.abs();
    let label = move |x: i32, y: i32| -> (i32, i32) {
        let a = (v.1 * x - v.0 * y) * det.signum();
        let b = (-u.1 * x + u.0 * y) * det.signum();
        (a.rem_euclid(d), b.rem_euclid(d))
    };
    let xs = [0, u.0, v.0, u.0 + v.0];
    let ys = [0, u.1, v.1, u.1 + v.1];
    let mut index = std::collections::HashMap::new();
    let mut cells = Vec::new();
    for y in *ys.iter().min().unwrap()..=*ys.iter().max().unwrap() {
        for x in *xs.iter().min().unwrap()..=*xs.iter().max().unwrap() {
            let n = index.len();
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(label(x, y)) {
                e.insert(n);
                cells.push((x, y));
            }
        }
    }
    if 3 * index.len() != graph.n_sites {
        return Err(Error::Consistency("torus cell enumeration mismatch".into()));
    }
    Ok((move |x: i32, y: i32, s: Sub| 3 * index[&label(x, y)] + s as usize, cells))
}

fn match_rest(adj: &[Vec<usize>], mate: &mut [usize]) -> bool {
    let Some(s) = mate.iter().position(|&m| m == usize::MAX) else {
        return true;
    };
    for &t in &adj[s] {
        if mate[t] == usize::MAX {
            mate[s] = t;
            mate[t] = s;
            if match_rest(adj, mate) {
                return true;
            }
            mate[s] = usize::MAX;
            mate[t] = usize::MAX;
        }
    }
    false
}

fn three_color(edges: &[(usize, usize)], i: usize, color: &mut [usize], used: &mut [u8], budget: &mut usize) -> bool {
    if i == edges.len() {
        return true;
    }
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let (a, b) = edges[i];
    for c in 0..3 {
        let bit = 1u8 << c;
        if used[a] & bit != 0 || used[b] & bit != 0 {
            continue;
        }
        used[a] |= bit;
        used[b] |= bit;
        color[i] = c;
        if three_color(edges, i + 1, color, used, budget) {
            return true;
        }
        used[a] &= !bit;
        used[b] &= !bit;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thirty_six_site_pattern() {
        let v = vbc36_covering().unwrap();
        assert_eq!(v.graph.n_sites, 36);
        assert_eq!(v.graph.n_edges(), 72);
        assert_eq!(v.covering.n_pairs(), 18);
        v.covering.validate_on(&v.graph).unwrap();
        assert_eq!(v.coloring.n_colors(), 4);
        assert!(v.coloring.classes.iter().all(|c| c.len() == 18));
        assert!(!v.hexagons.is_empty());
        for h in &v.hexagons {
            for k in 0..6 {
                assert!(v.graph.has_edge(h[k], h[(k + 1) % 6]));
            }
        }
    }
}

use serde::{Deserialize, Serialize};

use super::SpinGraph;
use crate::{Error, Result};

/// Perfect matching of the sites; each pair hosts one singlet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimerCovering {
    pub pairs: Vec<(usize, usize)>,
    /// Indices into `pairs` of patch pairs that are not bonds of the graph.
    #[serde(default)]
    pub non_edge: Vec<usize>,
}

impl DimerCovering {
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Checks that the pairs partition `0..n_sites`.
    pub fn validate(&self, n_sites: usize) -> Result<()> {
        let mut hit = vec![false; n_sites];
        for &(a, b) in &self.pairs {
            for s in [a, b] {
                if s >= n_sites {
                    return Err(Error::InvalidCovering(format!("site {s} out of range")));
                }
                if hit[s] {
                    return Err(Error::InvalidCovering(format!("site {s} covered twice")));
                }
                hit[s] = true;
            }
        }
        if let Some(s) = hit.iter().position(|&h| !h) {
            return Err(Error::InvalidCovering(format!("site {s} not covered")));
        }
        Ok(())
    }

    /// Validates against `graph`, allowing non-bond pairs only where flagged.
    pub fn validate_on(&self, graph: &SpinGraph) -> Result<()> {
        self.validate(graph.n_sites)?;
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            if !graph.has_edge(a, b) && !self.non_edge.contains(&k) {
                return Err(Error::InvalidCovering(format!("pair ({a}, {b}) is not a bond")));
            }
        }
        Ok(())
    }

    /// Number of pairs that are bonds of `graph`.
    pub fn pairs_on_edges(&self, graph: &SpinGraph) -> usize {
        self.pairs.iter().filter(|&&(a, b)| graph.has_edge(a, b)).count()
    }
}

const SEARCH_BUDGET: usize = 1_000_000;

/// Dimer covering of `graph`.
///
/// The lowest unmatched site is paired with its lowest admissible neighbour,
/// backtracking on failure; for chains this yields `(0,1), (2,3), ...`. On
/// grid-embedded patches bonds between grid neighbours are tried first, so
/// singlets can be prepared without SWAPs. Sites left over when no perfect
/// matching of bonds exists are patched up by pairing them directly.
pub fn dimer_covering(graph: &SpinGraph) -> Result<DimerCovering> {
    let n = graph.n_sites;
    if n % 2 == 1 {
        return Err(Error::NoPerfectMatching(format!("{n} sites is odd")));
    }
    let adj = preferred_adjacency(graph);
    // grid-neighbour bonds only, then any bond
    if let Some(coords) = &graph.coords {
        let short: Vec<Vec<usize>> = adj
            .iter()
            .enumerate()
            .map(|(s, l)| l.iter().copied().filter(|&t| manhattan(coords[s], coords[t]) == 1).collect())
            .collect();
        let mut mate = vec![usize::MAX; n];
        let mut budget = SEARCH_BUDGET;
        if search(&short, &mut mate, &mut budget) {
            return Ok(covering_from_mates(&mate, graph));
        }
    }
    let mut mate = vec![usize::MAX; n];
    let mut budget = SEARCH_BUDGET;
    if search(&adj, &mut mate, &mut budget) {
        return Ok(covering_from_mates(&mate, graph));
    }
    // maximum greedy matching plus patch pairs on the leftovers
    let mut mate = vec![usize::MAX; n];
    for s in 0..n {
        if mate[s] != usize::MAX {
            continue;
        }
        if let Some(&t) = adj[s].iter().find(|&&t| mate[t] == usize::MAX) {
            mate[s] = t;
            mate[t] = s;
        }
    }
    let left: Vec<usize> = (0..n).filter(|&s| mate[s] == usize::MAX).collect();
    for pair in left.chunks(2) {
        mate[pair[0]] = pair[1];
        mate[pair[1]] = pair[0];
    }
    Ok(covering_from_mates(&mate, graph))
}

fn manhattan(p: (i32, i32), q: (i32, i32)) -> i32 {
    (p.0 - q.0).abs() + (p.1 - q.1).abs()
}

fn preferred_adjacency(graph: &SpinGraph) -> Vec<Vec<usize>> {
    let mut adj = graph.adjacency();
    if let Some(coords) = &graph.coords {
        for (s, list) in adj.iter_mut().enumerate() {
            list.sort_by_key(|&t| (manhattan(coords[s], coords[t]), t));
        }
    }
    adj
}

fn search(adj: &[Vec<usize>], mate: &mut [usize], budget: &mut usize) -> bool {
    let Some(s) = mate.iter().position(|&m| m == usize::MAX) else {
        return true;
    };
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    for &t in &adj[s] {
        if mate[t] != usize::MAX {
            continue;
        }
        mate[s] = t;
        mate[t] = s;
        if search(adj, mate, budget) {
            return true;
        }
        mate[s] = usize::MAX;
        mate[t] = usize::MAX;
    }
    false
}

fn covering_from_mates(mate: &[usize], graph: &SpinGraph) -> DimerCovering {
    let mut pairs: Vec<(usize, usize)> =
        (0..mate.len()).filter(|&s| s < mate[s]).map(|s| (s, mate[s])).collect();
    pairs.sort_unstable();
    let non_edge = pairs
        .iter()
        .enumerate()
        .filter(|(_, &(a, b))| !graph.has_edge(a, b))
        .map(|(k, _)| k)
        .collect();
    DimerCovering { pairs, non_edge }
}

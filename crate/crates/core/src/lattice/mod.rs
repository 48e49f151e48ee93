//! Interaction graphs for the Heisenberg antiferromagnet.
//!
//! Kagome patches use a sheared unit-cell grid. Cell `(x, y)` holds the
//! up-triangle sites `A`, `B`, `C`, and in the square-grid picture used for
//! embedding these sit at grid points `(2x, 2y)`, `(2x+1, 2y)` and
//! `(2x, 2y+1)`. The grid point `(2x+1, 2y+1)` is the hexagon centre of the
//! cell and serves as a swapping station. Lattice bonds are the horizontal,
//! vertical and anti-diagonal (`(+1, -1)`) neighbours among kept grid points.

mod coloring;
mod dimer;
mod embedding;
mod vbc;

pub use coloring::{edge_coloring, EdgeColoring};
pub use dimer::{dimer_covering, DimerCovering};
pub use embedding::{embed_on_grid, GridEmbedding, ScheduledGate, ScheduledKind};
pub use vbc::{vbc36_covering, Vbc36};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::Path;

use crate::{Error, Result};

/// Format version written into graph exchange files.
pub const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphKind {
    ChainOpen,
    ChainPeriodic,
    KagomeOpen,
    KagomePeriodic,
    Custom,
}

/// Sites and bonds of the lattice on which the Hamiltonian is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinGraph {
    pub n_sites: usize,
    /// Unordered bonds stored as `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub kind: GraphKind,
    /// Square-grid coordinates of every site, present for kagome open patches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<(i32, i32)>>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format_version: u32,
    #[serde(flatten)]
    graph: SpinGraph,
}

impl SpinGraph {
    /// Builds a graph after checking indices and rejecting duplicate bonds.
    pub fn new(n_sites: usize, edges: Vec<(usize, usize)>, kind: GraphKind) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidSize("graph must have at least one site".into()));
        }
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a == b {
                return Err(Error::Consistency(format!("self-loop on site {a}")));
            }
            if a >= n_sites || b >= n_sites {
                return Err(Error::Consistency(format!(
                    "edge ({a}, {b}) out of range for {n_sites} sites"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Consistency(format!("duplicate edge {e:?}")));
            }
            normalized.push(e);
        }
        Ok(Self { n_sites, edges: normalized, kind, coords: None })
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_sites];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    pub fn max_degree(&self) -> usize {
        self.degrees().into_iter().max().unwrap_or(0)
    }

    /// Sorted neighbour lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_sites];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let e = (a.min(b), a.max(b));
        self.edges.contains(&e)
    }

    pub fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().copied().collect()
    }

    /// All 3-cliques, each as a sorted triple.
    pub fn triangles(&self) -> Vec<[usize; 3]> {
        let adj = self.adjacency();
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            for &c in &adj[a] {
                if c > b && adj[b].binary_search(&c).is_ok() {
                    out.push([a, b, c]);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Stable content hash used to key cached spectra and records.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.n_sites.to_le_bytes());
        let mut edges = self.edges.clone();
        edges.sort_unstable();
        for (a, b) in edges {
            h.update(a.to_le_bytes());
            h.update(b.to_le_bytes());
        }
        hex::encode(&h.finalize()[..16])
    }

    pub fn to_json(&self) -> Result<String> {
        let file = GraphFile { format_version: GRAPH_FORMAT_VERSION, graph: self.clone() };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses the graph exchange format and re-validates the bond list.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        if file.format_version != GRAPH_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported graph format_version {}",
                file.format_version
            )));
        }
        let g = file.graph;
        let coords = g.coords.clone();
        let mut checked = SpinGraph::new(g.n_sites, g.edges, g.kind)?;
        if let Some(c) = &coords {
            if c.len() != checked.n_sites {
                return Err(Error::Parse("coords length differs from n_sites".into()));
            }
        }
        checked.coords = coords;
        Ok(checked)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Open or periodic chain of `n` sites.
pub fn build_chain(n: usize, periodic: bool) -> Result<SpinGraph> {
    if n < 2 {
        return Err(Error::InvalidSize(format!("chain needs at least 2 sites, got {n}")));
    }
    if periodic && n < 3 {
        return Err(Error::InvalidSize("periodic chain needs at least 3 sites".into()));
    }
    let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
    let kind = if periodic {
        edges.push((0, n - 1));
        GraphKind::ChainPeriodic
    } else {
        GraphKind::ChainOpen
    };
    SpinGraph::new(n, edges, kind)
}

/// Sublattice label inside a kagome unit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) enum Sub {
    A,
    B,
    C,
}

pub(crate) const SUBS: [Sub; 3] = [Sub::A, Sub::B, Sub::C];

/// A kagome site addressed by unit cell and sublattice.
pub(crate) type CellSite = (i32, i32, Sub);

/// The six bonds owned by cell `(x, y)`: the up-triangle and the
/// down-triangle `{B(x,y), A(x+1,y), C(x+1,y-1)}`.
pub(crate) fn cell_bonds(x: i32, y: i32) -> [(CellSite, CellSite); 6] {
    let a = (x, y, Sub::A);
    let b = (x, y, Sub::B);
    let c = (x, y, Sub::C);
    let a_right = (x + 1, y, Sub::A);
    let c_down = (x + 1, y - 1, Sub::C);
    [(a, b), (a, c), (b, c), (b, a_right), (a_right, c_down), (b, c_down)]
}

pub(crate) fn grid_coord(site: CellSite) -> (i32, i32) {
    let (x, y, s) = site;
    match s {
        Sub::A => (2 * x, 2 * y),
        Sub::B => (2 * x + 1, 2 * y),
        Sub::C => (2 * x, 2 * y + 1),
    }
}

pub(crate) fn cell_site_of_grid(p: (i32, i32)) -> Option<CellSite> {
    let (gx, gy) = p;
    let (x, y) = (gx.div_euclid(2), gy.div_euclid(2));
    match (gx.rem_euclid(2), gy.rem_euclid(2)) {
        (0, 0) => Some((x, y, Sub::A)),
        (1, 0) => Some((x, y, Sub::B)),
        (0, 1) => Some((x, y, Sub::C)),
        _ => None,
    }
}

/// Induced kagome subgraph on an explicit set of cell sites (open boundary).
pub(crate) fn kagome_open_from_sites(sites: &[CellSite]) -> Result<SpinGraph> {
    let index: std::collections::HashMap<CellSite, usize> =
        sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let cells: BTreeSet<(i32, i32)> = sites.iter().map(|&(x, y, _)| (x, y)).collect();
    let mut cand = BTreeSet::new();
    // every bond is owned by exactly one cell; owners of bonds touching the
    // patch lie within one cell step of some patch cell
    for &(x, y) in &cells {
        for dx in -1..=1 {
            for dy in -1..=1 {
                cand.insert((x + dx, y + dy));
            }
        }
    }
    let mut edges = Vec::new();
    for (x, y) in cand {
        for (s, t) in cell_bonds(x, y) {
            if let (Some(&i), Some(&j)) = (index.get(&s), index.get(&t)) {
                edges.push((i.min(j), i.max(j)));
            }
        }
    }
    edges.sort_unstable();
    let mut g = SpinGraph::new(sites.len(), edges, GraphKind::KagomeOpen)?;
    g.coords = Some(sites.iter().map(|&s| grid_coord(s)).collect());
    Ok(g)
}

/// Open kagome patch of `rows x cols` whole unit cells (3 sites each),
/// numbered row-major over cells and `A, B, C` within a cell.
pub fn build_kagome_open(rows: usize, cols: usize) -> Result<SpinGraph> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidSize("kagome patch needs rows, cols >= 1".into()));
    }
    let mut sites = Vec::with_capacity(3 * rows * cols);
    for y in 0..rows as i32 {
        for x in 0..cols as i32 {
            for s in SUBS {
                sites.push((x, y, s));
            }
        }
    }
    kagome_open_from_sites(&sites)
}

/// Open kagome patch given by the kept sites inside the grid window
/// `[0, width) x [0, height)`, minus the listed grid points.
pub fn build_kagome_window(width: i32, height: i32, removed: &[(i32, i32)]) -> Result<SpinGraph> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidSize("grid window must be at least 2x2".into()));
    }
    let mut sites = Vec::new();
    for gy in 0..height {
        for gx in 0..width {
            if removed.contains(&(gx, gy)) {
                continue;
            }
            if let Some(s) = cell_site_of_grid((gx, gy)) {
                sites.push(s);
            }
        }
    }
    // cell-major numbering
    sites.sort_by_key(|&(x, y, s)| (y, x, s));
    kagome_open_from_sites(&sites)
}

/// The 20-site, 30-bond open patch: the 5x5 grid window with its top-right
/// corner removed. Embedded on the grid it uses 4 swapping stations.
pub fn kagome_patch_20() -> Result<SpinGraph> {
    build_kagome_window(5, 5, &[(4, 4)])
}

/// Periodic kagome patch of `cells_a x cells_b` unit cells on a torus.
pub fn build_kagome_periodic(cells_a: usize, cells_b: usize) -> Result<SpinGraph> {
    if cells_a == 0 || cells_b == 0 {
        return Err(Error::InvalidSize("kagome torus needs cells_a, cells_b >= 1".into()));
    }
    if cells_a < 2 || cells_b < 2 {
        return Err(Error::DegenerateTorus(format!(
            "{cells_a}x{cells_b} torus wraps a site onto its own neighbour"
        )));
    }
    build_kagome_torus((cells_a as i32, 0), (0, cells_b as i32))
}

/// Kagome lattice on the torus spanned by the cell-lattice vectors `u`, `v`
/// (in units of the primitive vectors).
pub(crate) fn build_kagome_torus(u: (i32, i32), v: (i32, i32)) -> Result<SpinGraph> {
    let det = u.0 * v.1 - u.1 * v.0;
    if det == 0 {
        return Err(Error::DegenerateTorus("supercell vectors are collinear".into()));
    }
    let d = det.abs();
    // coset label of a cell: its coordinates in the (u, v) basis scaled by det
    let label = |x: i32, y: i32| -> (i32, i32) {
        let a = (v.1 * x - v.0 * y) * det.signum();
        let b = (-u.1 * x + u.0 * y) * det.signum();
        (a.rem_euclid(d), b.rem_euclid(d))
    };
    let xs = [0, u.0, v.0, u.0 + v.0];
    let ys = [0, u.1, v.1, u.1 + v.1];
    let (x0, x1) = (*xs.iter().min().unwrap(), *xs.iter().max().unwrap());
    let (y0, y1) = (*ys.iter().min().unwrap(), *ys.iter().max().unwrap());
    let mut cell_index = std::collections::HashMap::new();
    let mut cells = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            let l = label(x, y);
            if let std::collections::hash_map::Entry::Vacant(e) = cell_index.entry(l) {
                e.insert(cells.len());
                cells.push((x, y));
            }
        }
    }
    if cells.len() != d as usize {
        return Err(Error::DegenerateTorus("failed to enumerate supercell".into()));
    }
    let site = |x: i32, y: i32, s: Sub| -> usize {
        let c = cell_index[&label(x, y)];
        3 * c + s as usize
    };
    let mut edges = Vec::new();
    let mut seen = BTreeSet::new();
    for &(x, y) in &cells {
        for ((ax, ay, asub), (bx, by, bsub)) in cell_bonds(x, y) {
            let i = site(ax, ay, asub);
            let j = site(bx, by, bsub);
            if i == j {
                return Err(Error::DegenerateTorus("bond wraps onto a single site".into()));
            }
            let e = (i.min(j), i.max(j));
            if !seen.insert(e) {
                return Err(Error::DegenerateTorus(format!("parallel bonds collapse onto {e:?}")));
            }
            edges.push(e);
        }
    }
    edges.sort_unstable();
    SpinGraph::new(3 * cells.len(), edges, GraphKind::KagomePeriodic)
}

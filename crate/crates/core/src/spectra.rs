//! Exact-diagonalization references: matrix-free Hamiltonian application,
//! a locking Lanczos solver for the low-lying spectrum and dense
//! diagonalization for small systems.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Sub};
use std::path::Path;

use crate::lattice::SpinGraph;
use crate::{Error, Result};

/// Real or complex amplitude type accepted by the Hamiltonian kernels.
pub trait Scalar:
    Copy + Send + Sync + Default + Add<Output = Self> + AddAssign + Sub<Output = Self> + Mul<f64, Output = Self>
{
    fn conj(self) -> Self;
    fn to_c64(self) -> Complex64;
    fn norm_sqr(self) -> f64;
    fn times(self, other: Self) -> Self;
}

impl Scalar for f64 {
    fn conj(self) -> Self {
        self
    }
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn times(self, other: Self) -> Self {
        self * other
    }
}

impl Scalar for Complex64 {
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn to_c64(self) -> Complex64 {
        self
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn times(self, other: Self) -> Self {
        self * other
    }
}

/// `<u|v>` accumulated in index order.
pub fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    let mut s = T::default();
    for (a, b) in u.iter().zip(v) {
        s += a.conj().times(*b);
    }
    s
}

const PAR_THRESHOLD: usize = 1 << 14;

/// `y = H x` for `H = sum_edges S_a . S_b` on a register of `n_qubits`
/// (qubit 0 least significant). Edges may leave some qubits untouched.
pub fn apply_edges<T: Scalar>(edges: &[(usize, usize)], x: &[T], y: &mut [T]) {
    let masks: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (1usize << a, 1usize << b)).collect();
    let row = |i: usize| -> T {
        let xi = x[i];
        let mut acc = T::default();
        for &(ma, mb) in &masks {
            let same = ((i & ma) == 0) == ((i & mb) == 0);
            if same {
                acc += xi * 0.25;
            } else {
                acc += x[i ^ ma ^ mb] * 0.5 - xi * 0.25;
            }
        }
        acc
    };
    if y.len() >= PAR_THRESHOLD {
        y.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
            for (k, yk) in chunk.iter_mut().enumerate() {
                *yk = row(c * 4096 + k);
            }
        });
    } else {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = row(i);
        }
    }
}

/// `H v` on the full `2^n` space of `graph`.
pub fn apply_hamiltonian<T: Scalar>(graph: &SpinGraph, v: &[T]) -> Result<Vec<T>> {
    let dim = 1usize << graph.n_sites;
    if v.len() != dim {
        return Err(Error::LengthMismatch { expected: dim, got: v.len() });
    }
    let mut y = vec![T::default(); dim];
    apply_edges(&graph.edges, v, &mut y);
    Ok(y)
}

/// Basis of a fixed-magnetization sector: all `n`-bit strings with
/// `weight` ones (down spins), so `S_z = n/2 - weight`.
#[derive(Debug, Clone)]
pub struct Sector {
    pub n: usize,
    pub weight: usize,
    pub states: Vec<usize>,
    binom: Vec<Vec<usize>>,
}

impl Sector {
    pub fn new(n: usize, weight: usize) -> Self {
        let mut binom = vec![vec![0usize; n + 2]; n + 1];
        for i in 0..=n {
            binom[i][0] = 1;
            for j in 1..=i {
                binom[i][j] = binom[i - 1][j - 1] + if j <= i - 1 { binom[i - 1][j] } else { 0 };
            }
        }
        let states = (0..1usize << n).filter(|s| s.count_ones() as usize == weight).collect();
        Self { n, weight, states, binom }
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    /// Position of `state` in the sorted list of sector states.
    pub fn rank(&self, state: usize) -> usize {
        let mut r = 0;
        let mut j = 0;
        for p in 0..self.n {
            if state >> p & 1 == 1 {
                j += 1;
                r += self.binom[p][j];
            }
        }
        r
    }

    pub fn apply(&self, edges: &[(usize, usize)], x: &[f64], y: &mut [f64]) {
        let row = |i: usize| -> f64 {
            let s = self.states[i];
            let mut acc = 0.0;
            for &(a, b) in edges {
                if (s >> a & 1) == (s >> b & 1) {
                    acc += 0.25 * x[i];
                } else {
                    acc += 0.5 * x[self.rank(s ^ (1 << a) ^ (1 << b))] - 0.25 * x[i];
                }
            }
            acc
        };
        if y.len() >= PAR_THRESHOLD {
            y.par_chunks_mut(4096).enumerate().for_each(|(c, chunk)| {
                for (k, yk) in chunk.iter_mut().enumerate() {
                    *yk = row(c * 4096 + k);
                }
            });
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row(i);
            }
        }
    }

    /// Expands a sector vector into the full `2^n` space.
    pub fn expand(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; 1 << self.n];
        for (&s, &x) in self.states.iter().zip(v) {
            out[s] = x;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Lowest eigenvalues found, ascending, with multiplicity.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal basis of the lowest eigenspace, as full `2^n` vectors.
    pub ground_vectors: Vec<Vec<f64>>,
    /// `E1 - E0`, if a level above the ground level was resolved.
    pub gap_01: Option<f64>,
    pub residuals: Vec<f64>,
    /// Hamming weight of the sector searched, if restricted.
    #[serde(default)]
    pub sector_weight: Option<usize>,
}

impl SpectrumResult {
    pub fn e0(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// First level above the ground level.
    pub fn e1(&self) -> Option<f64> {
        self.gap_01.map(|g| self.e0() + g)
    }

    pub fn ground_degeneracy(&self) -> usize {
        self.ground_vectors.len()
    }
}

/// Relative threshold used to group eigenvalues into one level.
pub const DEGENERACY_TOL: f64 = 1e-8;

fn same_level(a: f64, b: f64) -> bool {
    (a - b).abs() <= DEGENERACY_TOL * a.abs().max(b.abs()).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Restrict to the sector with this many down spins.
    pub sector_weight: Option<usize>,
    pub krylov_dim: usize,
    /// Restart cap; `None` means `10 k n`.
    pub max_restarts: Option<usize>,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { sector_weight: None, krylov_dim: 64, max_restarts: None, seed: 0x5eed }
    }
}

impl LanczosOptions {
    /// Sector `S_z = 0` (even `n`) or `1/2` (odd `n`), which contains a
    /// member of every spin multiplet.
    pub fn balanced(n_sites: usize) -> Self {
        Self { sector_weight: Some(n_sites / 2), ..Self::default() }
    }
}

enum Space<'a> {
    Full { edges: &'a [(usize, usize)], dim: usize },
    Sector { edges: &'a [(usize, usize)], sector: Sector },
}

impl Space<'_> {
    fn dim(&self) -> usize {
        match self {
            Space::Full { dim, .. } => *dim,
            Space::Sector { sector, .. } => sector.dim(),
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Space::Full { edges, .. } => apply_edges(edges, x, y),
            Space::Sector { edges, sector } => sector.apply(edges, x, y),
        }
    }

    fn expand(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Space::Full { .. } => v.to_vec(),
            Space::Sector { sector, .. } => sector.expand(v),
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for u in against {
            let c = dot(u, v);
            axpy(-c, u, v);
        }
    }
}

/// Lowest `k` eigenpairs by Lanczos with explicit restarts and locking.
///
/// Converged Ritz vectors are locked and deflated; the search continues past
/// `k` until a level above the ground level is found, so the returned ground
/// space is complete. Each Krylov basis is fully re-orthogonalized.
pub fn low_spectrum(graph: &SpinGraph, k: usize, tol: f64, opts: LanczosOptions) -> Result<SpectrumResult> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let n = graph.n_sites;
    let space = match opts.sector_weight {
        None => Space::Full { edges: &graph.edges, dim: 1usize << n },
        Some(w) => {
            if w > n {
                return Err(Error::InvalidParameter(format!("sector weight {w} exceeds {n} sites")));
            }
            Space::Sector { edges: &graph.edges, sector: Sector::new(n, w) }
        }
    };
    let dim = space.dim();
    let max_restarts = opts.max_restarts.unwrap_or(10 * k * n.max(1));
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut locked: Vec<Vec<f64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut residuals: Vec<f64> = Vec::new();
    let mut hv = vec![0.0; dim];

    let done = |values: &[f64]| {
        values.len() >= dim
            || (values.len() >= k && {
                let e0 = values.iter().cloned().fold(f64::INFINITY, f64::min);
                values.iter().any(|&e| !same_level(e, e0))
            })
    };

    while !done(&values) {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
        orthogonalize(&mut x, &locked);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let mut best = Vec::new();
        let mut converged = false;
        for _ in 0..=max_restarts {
            let (theta, ritz) = lanczos_pass(&space, &x, &locked, opts.krylov_dim.min(dim - locked.len()).max(1));
            x = ritz;
            space.apply(&x, &mut hv);
            axpy(-theta, &x, &mut hv);
            let r = norm(&hv);
            best.push(r);
            if r < tol {
                values.push(theta);
                residuals.push(r);
                locked.push(x.clone());
                converged = true;
                break;
            }
        }
        if !converged {
            let mut res = residuals.clone();
            res.push(*best.last().unwrap());
            return Err(Error::Convergence { iterations: max_restarts, residuals: res });
        }
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let residuals: Vec<f64> = order.iter().map(|&i| residuals[i]).collect();
    let e0 = eigenvalues[0];
    let ground: Vec<usize> = order.iter().copied().filter(|&i| same_level(values[i], e0)).collect();
    let ground_vectors = ground.iter().map(|&i| space.expand(&locked[i])).collect();
    let gap_01 = eigenvalues.iter().find(|&&e| !same_level(e, e0)).map(|&e| e - e0);
    Ok(SpectrumResult { eigenvalues, ground_vectors, gap_01, residuals, sector_weight: opts.sector_weight })
}

/// One Lanczos run from unit vector `start` in the complement of `locked`;
/// returns the lowest Ritz pair.
fn lanczos_pass(space: &Space, start: &[f64], locked: &[Vec<f64>], kdim: usize) -> (f64, Vec<f64>) {
    let dim = start.len();
    let mut basis: Vec<Vec<f64>> = vec![start.to_vec()];
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    loop {
        let j = basis.len() - 1;
        space.apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w);
        alpha.push(a);
        if basis.len() == kdim {
            break;
        }
        let scale = norm(&w);
        // twice is enough (Kahan-Parlett); once is not near breakdown
        for _ in 0..2 {
            orthogonalize(&mut w, locked);
            orthogonalize(&mut w, &basis);
        }
        let b = norm(&w);
        if b <= 1e-10 * scale.max(1.0) {
            break;
        }
        beta.push(b);
        basis.push(w.iter().map(|v| v / b).collect());
    }
    let m = alpha.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (imin, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let coef = eig.eigenvectors.column(imin);
    let mut x = vec![0.0; dim];
    for (c, v) in coef.iter().zip(&basis) {
        axpy(*c, v, &mut x);
    }
    orthogonalize(&mut x, locked);
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    (theta, x)
}

/// Largest system accepted by the dense routines.
pub const DENSE_LIMIT: usize = 12;

/// Every eigenvalue of `H`, ascending, from dense diagonalization of each
/// `S_z` block.
pub fn dense_spectrum(graph: &SpinGraph) -> Result<Vec<f64>> {
    let n = graph.n_sites;
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n));
    }
    let mut all = Vec::with_capacity(1 << n);
    for w in 0..=n {
        let sector = Sector::new(n, w);
        let d = sector.dim();
        let mut h = DMatrix::<f64>::zeros(d, d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e[j] = 1.0;
            sector.apply(&graph.edges, &e, &mut col);
            for i in 0..d {
                h[(i, j)] = col[i];
            }
            e[j] = 0.0;
        }
        all.extend(SymmetricEigen::new(h).eigenvalues.iter().copied());
    }
    all.sort_by(f64::total_cmp);
    Ok(all)
}

/// Explicit `2^n x 2^n` Hamiltonian matrix.
pub fn dense_hamiltonian(graph: &SpinGraph) -> Result<DMatrix<f64>> {
    let n = graph.n_sites;
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge(n));
    }
    let dim = 1 << n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for &(a, b) in &graph.edges {
        let (ma, mb) = (1 << a, 1 << b);
        for i in 0..dim {
            if ((i & ma) == 0) == ((i & mb) == 0) {
                h[(i, i)] += 0.25;
            } else {
                h[(i, i)] -= 0.25;
                h[(i ^ ma ^ mb, i)] += 0.5;
            }
        }
    }
    Ok(h)
}

/// On-disk cache entry for a reference spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCache {
    pub graph_hash: String,
    pub k: usize,
    pub tol: f64,
    #[serde(flatten)]
    pub spectrum: SpectrumResult,
}

impl SpectrumCache {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Spectrum for `graph`, served from `cache_dir` when a matching entry exists.
pub fn cached_low_spectrum(
    graph: &SpinGraph,
    k: usize,
    tol: f64,
    opts: LanczosOptions,
    cache_dir: Option<&Path>,
) -> Result<SpectrumResult> {
    let hash = graph.content_hash();
    let path = cache_dir.map(|d| d.join(format!("spectrum-{hash}-k{k}.json")));
    if let Some(p) = &path {
        if let Ok(c) = SpectrumCache::load(p) {
            if c.graph_hash == hash && c.k >= k && c.tol <= tol && c.spectrum.sector_weight == opts.sector_weight {
                return Ok(c.spectrum);
            }
        }
    }
    let spectrum = low_spectrum(graph, k, tol, opts)?;
    if let Some(p) = &path {
        SpectrumCache { graph_hash: hash, k, tol, spectrum: spectrum.clone() }.save(p)?;
    }
    Ok(spectrum)
}

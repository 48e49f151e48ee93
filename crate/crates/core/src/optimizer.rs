//! BFGS local minimization and seeded multistart VQE.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{AnsatzCircuit, ParameterVector};
use crate::lattice::{DimerCovering, EdgeColoring, GridEmbedding, SpinGraph};
use crate::simulator::{energy_and_gradient, fidelity, run, Cost};
use crate::spectra::SpectrumResult;
use crate::{Error, Result};

/// Default weight of the `(S_z - 1)^2` penalty.
pub const DEFAULT_A_P2: f64 = 1.0;

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostKind {
    Energy,
    EnergyPenalty {
        #[serde(default)]
        a_p1: f64,
        #[serde(default = "default_a_p2")]
        a_p2: f64,
    },
    Infidelity,
}

fn default_a_p2() -> f64 {
    DEFAULT_A_P2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub rounds: usize,
    pub seed: u64,
    /// Initial parameters are drawn from `[-w, w)`.
    pub init_halfwidth: f64,
    /// Stop once the gradient infinity-norm falls below this.
    pub gradient_tolerance: f64,
    /// Iteration cap per round; `None` means `200 M`.
    pub max_iterations: Option<usize>,
    pub cost: CostKind,
    /// Worker threads for the rounds; 0 uses all cores.
    pub threads: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            seed: 0,
            init_halfwidth: 1e-3,
            gradient_tolerance: 1e-5,
            max_iterations: None,
            cost: CostKind::Energy,
            threads: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidParameter("rounds must be at least 1".into()));
        }
        if !(self.init_halfwidth > 0.0) {
            return Err(Error::InvalidParameter(format!("init_halfwidth must be positive, got {}", self.init_halfwidth)));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::InvalidParameter("gradient_tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub theta: ParameterVector,
    pub value: f64,
    pub gradient_norm: f64,
    pub n_calls: usize,
    pub iterations: usize,
    pub reason: Termination,
    /// Cost at every accepted iterate, starting with `theta0`.
    pub history: Vec<f64>,
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Counted<F> {
    f: F,
    calls: usize,
}

impl<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.calls += 1;
        let (v, g) = (self.f)(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite { call: self.calls, value: v });
        }
        if let Some(&bad) = g.iter().find(|x| !x.is_finite()) {
            return Err(Error::NonFinite { call: self.calls, value: bad });
        }
        Ok((v, g))
    }
}

struct Point {
    alpha: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

/// Minimizer of the cubic through two points with known slopes, if it lies
/// strictly inside the bracket.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    let (lo, hi) = (a.min(b), a.max(b));
    let margin = 0.1 * (hi - lo);
    (t.is_finite() && t > lo + margin && t < hi - margin).then_some(t)
}

fn line_search<F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>>(
    fun: &mut Counted<F>,
    x: &[f64],
    f0: f64,
    d: &[f64],
    dphi0: f64,
    alpha0: f64,
) -> Result<Option<Point>> {
    let mut probe = |fun: &mut Counted<F>, alpha: f64| -> Result<Point> {
        let xn: Vec<f64> = x.iter().zip(d).map(|(x, d)| x + alpha * d).collect();
        let (f, g) = fun.eval(&xn)?;
        let dphi = dotv(&g, d);
        Ok(Point { alpha, x: xn, f, g, dphi })
    };
    let wolfe = |p: &Point| p.dphi.abs() <= -C2 * dphi0;
    let mut prev = Point { alpha: 0.0, x: x.to_vec(), f: f0, g: Vec::new(), dphi: dphi0 };
    let mut alpha = alpha0;
    for i in 0..30 {
        let cur = probe(fun, alpha)?;
        if cur.f > f0 + C1 * alpha * dphi0 || (i > 0 && cur.f >= prev.f) {
            return zoom(fun, &mut probe, prev, cur, f0, dphi0);
        }
        if wolfe(&cur) {
            return Ok(Some(cur));
        }
        if cur.dphi >= 0.0 {
            return zoom(fun, &mut probe, cur, prev, f0, dphi0);
        }
        prev = cur;
        alpha *= 2.0;
    }
    Ok(None)
}

/// Shrinks the bracket `[lo, hi]` (with `lo` the lower-cost end) until a
/// strong-Wolfe point is found.
fn zoom<F, P>(fun: &mut Counted<F>, probe: &mut P, mut lo: Point, mut hi: Point, f0: f64, dphi0: f64) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    P: FnMut(&mut Counted<F>, f64) -> Result<Point>,
{
    for _ in 0..40 {
        if (hi.alpha - lo.alpha).abs() < 1e-14 * lo.alpha.abs().max(1e-10) {
            break;
        }
        let alpha = cubic_min(lo.alpha, lo.f, lo.dphi, hi.alpha, hi.f, hi.dphi).unwrap_or(0.5 * (lo.alpha + hi.alpha));
        let cur = probe(fun, alpha)?;
        if cur.f > f0 + C1 * alpha * dphi0 || cur.f >= lo.f {
            hi = cur;
            continue;
        }
        if cur.dphi.abs() <= -C2 * dphi0 {
            return Ok(Some(cur));
        }
        if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
            hi = std::mem::replace(&mut lo, cur);
        } else {
            lo = cur;
        }
    }
    // Accept a strict decrease even without the curvature condition.
    if lo.alpha > 0.0 && lo.f < f0 + C1 * lo.alpha * dphi0 {
        return Ok(Some(lo));
    }
    Ok(None)
}

/// Quasi-Newton minimization with an inverse-Hessian BFGS update and a
/// strong-Wolfe line search. Every call of `cost` counts as one function call.
pub fn minimize_bfgs<F>(cost: F, theta0: &[f64], config: &OptimizerConfig) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let m = theta0.len();
    let max_iter = config.max_iterations.unwrap_or(200 * m.max(1));
    let mut fun = Counted { f: cost, calls: 0 };
    let mut x = theta0.to_vec();
    let (mut f, mut g) = fun.eval(&x)?;
    if g.len() != m {
        return Err(Error::LengthMismatch { expected: m, got: g.len() });
    }
    let mut h = vec![0.0; m * m];
    let reset = |h: &mut [f64], scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        (0..m).for_each(|i| h[i * m + i] = scale);
    };
    reset(&mut h, 1.0);
    let mut history = vec![f];
    let mut first_update = true;
    let mut iterations = 0;
    let reason = loop {
        if inf_norm(&g) < config.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        if iterations >= max_iter {
            break Termination::MaxIterations;
        }
        let mut d: Vec<f64> = (0..m).map(|i| -dotv(&h[i * m..(i + 1) * m], &g)).collect();
        let mut dphi0 = dotv(&g, &d);
        if !(dphi0 < 0.0) {
            reset(&mut h, 1.0);
            first_update = true;
            d = g.iter().map(|v| -v).collect();
            dphi0 = -dotv(&g, &g);
        }
        let alpha0 = if first_update { (1.0 / dotv(&d, &d).sqrt()).min(1.0) } else { 1.0 };
        let Some(next) = line_search(&mut fun, &x, f, &d, dphi0, alpha0)? else {
            break Termination::LineSearchFailed;
        };
        iterations += 1;
        let s: Vec<f64> = next.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dotv(&s, &y);
        if sy > 0.0 {
            if first_update {
                reset(&mut h, sy / dotv(&y, &y));
                first_update = false;
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..m).map(|i| dotv(&h[i * m..(i + 1) * m], &y)).collect();
            let yhy = dotv(&y, &hy);
            let c = rho * rho * yhy + rho;
            h.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            });
        }
        x = next.x;
        f = next.f;
        g = next.g;
        history.push(f);
    };
    Ok(Minimum { gradient_norm: inf_norm(&g), theta: x, value: f, n_calls: fun.calls, iterations, reason, history })
}

/// One local minimization of a multistart batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub p: usize,
    pub round: usize,
    pub energy: f64,
    /// Cost value at the minimum (equals `energy` for the plain energy cost).
    pub cost_value: f64,
    #[serde(default)]
    pub infidelity: Option<f64>,
    pub n_function_calls: usize,
    pub n_iterations: usize,
    pub wall_time: f64,
    pub theta_init: ParameterVector,
    pub theta_final: ParameterVector,
    pub gradient_norm: f64,
    pub converged: bool,
    pub reason: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundFailure {
    pub p: usize,
    pub round: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Multistart {
    /// Successful rounds in round order.
    pub records: Vec<RunRecord>,
    pub failures: Vec<RoundFailure>,
    /// Index into `records` of the lowest-energy round.
    pub best: usize,
}

impl Multistart {
    pub fn best(&self) -> &RunRecord {
        &self.records[self.best]
    }
}

/// `theta0` for `round`: uniform in `[-w, w)` from the round's own stream.
pub fn initial_parameters(seed: u64, round: usize, n: usize, halfwidth: f64) -> ParameterVector {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(round as u64);
    (0..n).map(|_| rng.gen_range(-halfwidth..halfwidth)).collect()
}

fn cost_of<'a>(kind: CostKind, reference: Option<&'a SpectrumResult>) -> Result<Cost<'a>> {
    Ok(match kind {
        CostKind::Energy => Cost::Energy,
        CostKind::EnergyPenalty { a_p1, a_p2 } => Cost::EnergyPenalty { a_p1, a_p2 },
        CostKind::Infidelity => Cost::Infidelity { references: &reference.ok_or(Error::MissingReference)?.ground_vectors },
    })
}

fn one_round(
    circuit: &AnsatzCircuit,
    graph: &SpinGraph,
    config: &OptimizerConfig,
    reference: Option<&SpectrumResult>,
    round: usize,
) -> Result<RunRecord> {
    let start = Instant::now();
    let cost = cost_of(config.cost, reference)?;
    let theta_init = initial_parameters(config.seed, round, circuit.n_params(), config.init_halfwidth);
    let min = minimize_bfgs(
        |t| energy_and_gradient(circuit, t, graph, cost).map(|r| (r.value, r.gradient)),
        &theta_init,
        config,
    )?;
    let state = run(circuit, &min.theta)?;
    let energy = crate::simulator::energy(&state, graph)?;
    let infidelity = match reference {
        Some(r) => Some((1.0 - fidelity(&state, &r.ground_vectors)?).max(0.0)),
        None => None,
    };
    Ok(RunRecord {
        p: circuit.p,
        round,
        energy,
        cost_value: min.value,
        infidelity,
        n_function_calls: min.n_calls,
        n_iterations: min.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        theta_init,
        theta_final: min.theta,
        gradient_norm: min.gradient_norm,
        converged: min.reason == Termination::GradientTolerance,
        reason: min.reason,
    })
}

/// Runs `config.rounds` independent local minimizations from seeded random
/// starts. A failing round is reported in `failures` and does not stop the
/// others; the call fails only if every round does.
pub fn multistart_vqe(
    circuit: &AnsatzCircuit,
    graph: &SpinGraph,
    config: &OptimizerConfig,
    reference: Option<&SpectrumResult>,
) -> Result<Multistart> {
    config.validate()?;
    if matches!(config.cost, CostKind::Infidelity) && reference.is_none() {
        return Err(Error::MissingReference);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RunRecord>> =
        pool.install(|| (0..config.rounds).into_par_iter().map(|r| one_round(circuit, graph, config, reference, r)).collect());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut last_err = None;
    for (round, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(r) => records.push(r),
            Err(e) => {
                failures.push(RoundFailure { p: circuit.p, round, message: e.to_string() });
                last_err = Some(e);
            }
        }
    }
    if records.is_empty() {
        return Err(last_err.expect("rounds >= 1"));
    }
    let best = best_index(&records);
    Ok(Multistart { records, failures, best })
}

/// Lowest energy, ties to the lowest round.
pub fn best_index(records: &[RunRecord]) -> usize {
    let mut best = 0;
    for (i, r) in records.iter().enumerate() {
        let b = &records[best];
        if r.energy < b.energy || (r.energy == b.energy && r.round < b.round) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinGap {
    pub e_s0: f64,
    pub e_s1: f64,
    pub gap_estimate: f64,
    pub singlet: Multistart,
    pub triplet: Multistart,
}

/// Estimates the spin gap from two multistart runs: the singlet covering,
/// and the covering with its first pair replaced by the `m = 1` triplet under
/// an `(S_z - 1)^2` penalty.
pub fn spin_gap(
    graph: &SpinGraph,
    coloring: &EdgeColoring,
    covering: &DimerCovering,
    p: usize,
    config: &OptimizerConfig,
    embedding: Option<&GridEmbedding>,
) -> Result<SpinGap> {
    let circuit = crate::ansatz::build_hva(graph, coloring, covering, p, crate::ansatz::ParamMode::Opg, embedding)?;
    let singlet_cfg = OptimizerConfig { cost: CostKind::Energy, ..config.clone() };
    let singlet = multistart_vqe(&circuit, graph, &singlet_cfg, None)?;
    let pair = *circuit
        .covering
        .pairs
        .first()
        .ok_or_else(|| Error::InvalidCovering("empty covering has no triplet".into()))?;
    let triplet_circuit = circuit.with_triplet(pair, 1)?;
    let penalty = match config.cost {
        CostKind::EnergyPenalty { a_p1, a_p2 } => CostKind::EnergyPenalty { a_p1, a_p2 },
        _ => CostKind::EnergyPenalty { a_p1: 0.0, a_p2: DEFAULT_A_P2 },
    };
    let triplet_cfg = OptimizerConfig { cost: penalty, ..config.clone() };
    let triplet = multistart_vqe(&triplet_circuit, graph, &triplet_cfg, None)?;
    let e_s0 = singlet.best().energy;
    let e_s1 = triplet.best().energy;
    Ok(SpinGap { e_s0, e_s1, gap_estimate: e_s1 - e_s0, singlet, triplet })
}

//! End-to-end acceptance checks. Run with `--nocapture` to see one
//! PASS/FAIL line per criterion; `--ignored` adds the long 20-site chain job.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use kagome_vqe::ansatz::{build_hva, circuit_stats, past_light_cone, trotter_parameters, AnsatzCircuit, Gate, GateKind, ParamMode};
use kagome_vqe::compiler::{compile_circuit, heis_to_fsim, singlet_prep, swap_to_fsim, NativeCircuit, NativeSet};
use kagome_vqe::lattice::{
    build_chain, build_kagome_open, build_kagome_periodic, dimer_covering, edge_coloring, embed_on_grid, kagome_patch_20,
    GraphKind, SpinGraph,
};
use kagome_vqe::optimizer::{multistart_vqe, OptimizerConfig};
use kagome_vqe::runner::{run_experiment, ExperimentConfig, ExperimentOutcome, SummaryRow};
use kagome_vqe::simulator::{energy_and_gradient, prepare_covering, run, spin_observables, Cost, StateVector};
use kagome_vqe::spectra::{dense_hamiltonian, dense_spectrum, low_spectrum, LanczosOptions};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n:>2} {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn circuit(g: &SpinGraph, p: usize, mode: ParamMode, embedded: bool) -> AnsatzCircuit {
    let emb = embedded.then(|| embed_on_grid(g).unwrap());
    build_hva(g, &edge_coloring(g).unwrap(), &dimer_covering(g).unwrap(), p, mode, emb.as_ref()).unwrap()
}

fn triangle() -> SpinGraph {
    SpinGraph::new(3, vec![(0, 1), (0, 2), (1, 2)], GraphKind::Custom).unwrap()
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

#[test]
fn criterion_01_two_site_exactness() {
    let t = Instant::now();
    let g = build_chain(2, false).unwrap();
    let dense = dense_spectrum(&g).unwrap()[0];
    let lanczos = low_spectrum(&g, 1, 1e-12, LanczosOptions::default()).unwrap();
    let c = circuit(&g, 0, ParamMode::Opg, false);
    let cfg = OptimizerConfig { rounds: 1, ..Default::default() };
    let best = multistart_vqe(&c, &g, &cfg, Some(&lanczos)).unwrap().best().clone();
    let rel = ((best.energy - dense) / dense).abs();
    let elapsed = t.elapsed();
    let pass = (dense + 0.75).abs() < 1e-12 && (lanczos.e0() + 0.75).abs() < 1e-12 && rel < 1e-12 && elapsed < Duration::from_secs(1);
    report(1, "two-site exactness", pass, format!("E0 = {dense}, VQE(p=0) rel. error {rel:.1e}, {:.3}s", secs(elapsed)));
}

#[test]
fn criterion_02_lanczos_matches_dense() {
    let t = Instant::now();
    let mut graphs: Vec<(String, SpinGraph)> = Vec::new();
    for n in 4..=12 {
        graphs.push((format!("ring-{n}"), build_chain(n, true).unwrap()));
        graphs.push((format!("open-{n}"), build_chain(n, false).unwrap()));
    }
    graphs.push(("kagome-12".into(), build_kagome_open(2, 2).unwrap()));
    graphs.push(("triangle".into(), triangle()));
    let mut worst: f64 = 0.0;
    let mut worst_name = String::new();
    for (name, g) in &graphs {
        let dense = dense_spectrum(g).unwrap();
        let r = low_spectrum(g, 4, 1e-10, LanczosOptions::default()).unwrap();
        let dev = if r.eigenvalues.len() < 4 {
            f64::INFINITY
        } else {
            r.eigenvalues.iter().zip(&dense).take(4).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        if dev > worst {
            worst = dev;
            worst_name = name.clone();
        }
    }
    let elapsed = t.elapsed();
    let pass = worst < 1e-9 && elapsed < Duration::from_secs(120);
    report(2, "Lanczos vs dense", pass, format!("{} graphs, worst deviation {worst:.1e} ({worst_name}), {:.1}s", graphs.len(), secs(elapsed)));
}

#[test]
fn criterion_03_adjoint_gradients() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let ring8 = build_chain(8, true).unwrap();
    let open10 = build_chain(10, false).unwrap();
    let kag = build_kagome_open(1, 2).unwrap();
    let ring6 = build_chain(6, true).unwrap();
    let open4 = build_chain(4, false).unwrap();
    let ref6 = low_spectrum(&ring6, 2, 1e-12, LanczosOptions::default()).unwrap();
    let refk = low_spectrum(&kag, 2, 1e-12, LanczosOptions::default()).unwrap();
    let penalty = Cost::EnergyPenalty { a_p1: 0.5, a_p2: 1.0 };
    let cases: Vec<(&SpinGraph, AnsatzCircuit, Cost)> = vec![
        (&ring8, circuit(&ring8, 2, ParamMode::Opg, false), Cost::Energy),
        (&ring8, circuit(&ring8, 4, ParamMode::Ops, false), Cost::Energy),
        (&open10, circuit(&open10, 3, ParamMode::Opg, false), Cost::Energy),
        (&open10, circuit(&open10, 1, ParamMode::Ops, false), Cost::Energy),
        (&kag, circuit(&kag, 2, ParamMode::Opg, false), Cost::Energy),
        (&kag, circuit(&kag, 1, ParamMode::Opg, true), Cost::Energy),
        (&ring6, circuit(&ring6, 3, ParamMode::Opg, false), Cost::Infidelity { references: &ref6.ground_vectors }),
        (&kag, circuit(&kag, 2, ParamMode::Ops, false), Cost::Infidelity { references: &refk.ground_vectors }),
        (&ring6, circuit(&ring6, 2, ParamMode::Opg, false).with_triplet((0, 1), 1).unwrap(), penalty),
        (&open4, circuit(&open4, 4, ParamMode::Ops, false), Cost::Energy),
    ];
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for (g, c, cost) in &cases {
        let theta: Vec<f64> = (0..c.n_params()).map(|_| rng.gen_range(-PI..PI)).collect();
        let adj = energy_and_gradient(c, &theta, g, *cost).unwrap().gradient;
        let mut num = Vec::with_capacity(theta.len());
        for k in 0..theta.len() {
            let mut tp = theta.clone();
            tp[k] += h;
            let mut tm = theta.clone();
            tm[k] -= h;
            let fp = energy_and_gradient(c, &tp, g, *cost).unwrap().value;
            let fm = energy_and_gradient(c, &tm, g, *cost).unwrap().value;
            num.push((fp - fm) / (2.0 * h));
        }
        let diff: f64 = adj.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = num.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-3);
        worst = worst.max(diff / scale);
    }
    let elapsed = t.elapsed();
    let pass = worst < 1e-6 && elapsed < Duration::from_secs(60);
    report(3, "adjoint gradients", pass, format!("{} instances, worst relative error {worst:.1e}, {:.1}s", cases.len(), secs(elapsed)));
}

#[test]
fn criterion_04_symmetry_conservation() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let graphs = [build_chain(12, true).unwrap(), build_kagome_open(2, 2).unwrap(), build_chain(10, false).unwrap(), build_kagome_open(1, 2).unwrap()];
    let circuits: Vec<AnsatzCircuit> = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| circuit(g, 1 + i % 3, if i % 2 == 0 { ParamMode::Opg } else { ParamMode::Ops }, false))
        .collect();
    let (mut sz, mut s2): (f64, f64) = (0.0, 0.0);
    for draw in 0..1000 {
        let c = &circuits[draw % circuits.len()];
        let theta: Vec<f64> = (0..c.n_params()).map(|_| rng.gen_range(-PI..PI)).collect();
        let o = spin_observables(&run(c, &theta).unwrap(), c.n_sites);
        sz = sz.max(o.sz.abs());
        s2 = s2.max(o.s2.abs());
    }
    let elapsed = t.elapsed();
    let pass = sz < 1e-10 && s2 < 1e-10 && elapsed < Duration::from_secs(120);
    report(4, "symmetry conservation", pass, format!("1000 draws, max |<Sz>| {sz:.1e}, max |<S^2>| {s2:.1e}, {:.1}s", secs(elapsed)));
}

fn unitary_of(g: &Gate, angle: Option<f64>) -> Vec<Vec<Complex64>> {
    (0..4)
        .map(|j| {
            let mut s = StateVector::basis(2, j);
            s.apply_gate(g, angle, false).unwrap();
            s.amplitudes
        })
        .collect()
}

/// Distance to `u` at the best global phase.
fn phase_distance(u: &[Vec<Complex64>], c: &NativeCircuit) -> f64 {
    let v = c.unitary().unwrap();
    let tr: Complex64 = u.iter().flatten().zip(v.iter().flatten()).map(|(a, b)| b.conj() * a).sum();
    let z = Complex64::from_polar(1.0, tr.arg());
    u.iter().flatten().zip(v.iter().flatten()).map(|(a, b)| (a - z * b).norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn criterion_05_compilation_equivalence() {
    let t = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut heis: f64 = 0.0;
    for _ in 0..200 {
        let alpha = rng.gen_range(-2.0 * PI..2.0 * PI);
        heis = heis.max(phase_distance(&unitary_of(&Gate::heis(0, 1, 0), Some(alpha)), &heis_to_fsim(alpha)));
    }
    let swap = phase_distance(&unitary_of(&Gate::fixed(GateKind::Swap, &[0, 1], None), None), &swap_to_fsim());
    let singlet = prepare_covering(&kagome_vqe::lattice::DimerCovering { pairs: vec![(0, 1)], non_edge: vec![] }, 2, None).unwrap();
    let mut prep: f64 = 0.0;
    for set in [NativeSet::Abstract, NativeSet::QuantumDot, NativeSet::Fsim] {
        let c = singlet_prep(set);
        let mut s = StateVector::zero(2);
        c.apply(&mut s).unwrap();
        let dev = (1.0 - s.inner(&singlet).norm_sqr()).abs();
        prep = prep.max(if c.depth() <= 3 { dev } else { f64::INFINITY });
    }
    let g = build_chain(20, true).unwrap();
    let c = circuit(&g, 2, ParamMode::Opg, false);
    let theta: Vec<f64> = (0..c.n_params()).map(|_| rng.gen_range(-PI..PI)).collect();
    let native = compile_circuit(&c, &theta).unwrap();
    let fid = run(&c, &theta).unwrap().inner(&native.simulate().unwrap()).norm_sqr();
    let elapsed = t.elapsed();
    let pass = heis < 1e-12 && swap < 1e-12 && prep < 1e-12 && fid >= 1.0 - 1e-12 && elapsed < Duration::from_secs(60);
    report(
        5,
        "compilation equivalence",
        pass,
        format!("HEIS {heis:.1e}, SWAP {swap:.1e}, singlet prep {prep:.1e}, chain-20 fidelity 1 - {:.1e}, {:.1}s", 1.0 - fid, secs(elapsed)),
    );
}

#[test]
fn criterion_06_gate_accounting() {
    let t = Instant::now();
    let chain = circuit(&build_chain(20, true).unwrap(), 8, ParamMode::Opg, false);
    let grid = circuit(&kagome_patch_20().unwrap(), 16, ParamMode::Opg, true);
    let torus = circuit(&build_kagome_periodic(2, 3).unwrap(), 37, ParamMode::Opg, false);
    let got: Vec<(usize, usize, usize)> = [chain, grid, torus]
        .iter()
        .map(|c| {
            let s = circuit_stats(c);
            (s.total_gates, s.n_params, s.depth)
        })
        .collect();
    let want = vec![(190, 160, 19), (766, 480, 99), (1359, 1332, 151)];
    let elapsed = t.elapsed();
    let pass = got == want && elapsed < Duration::from_secs(1);
    report(6, "gate accounting", pass, format!("(gates, params, depth) = {got:?}, {:.3}s", secs(elapsed)));
}

fn run_config(name: &str) -> ExperimentOutcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
    let mut cfg = ExperimentConfig::load(&path).unwrap();
    let dir = std::env::temp_dir().join(format!("kvqe-acceptance-{}-{}", name.trim_end_matches(".toml"), std::process::id()));
    cfg.output = dir;
    run_experiment(&cfg).unwrap()
}

fn chain12() -> &'static ExperimentOutcome {
    static CELL: OnceLock<ExperimentOutcome> = OnceLock::new();
    CELL.get_or_init(|| run_config("chain12.toml"))
}

fn kagome12() -> &'static ExperimentOutcome {
    static CELL: OnceLock<ExperimentOutcome> = OnceLock::new();
    CELL.get_or_init(|| run_config("kagome12.toml"))
}

fn row(trace: &[SummaryRow], p: usize) -> &SummaryRow {
    trace.iter().find(|r| r.p == p).unwrap()
}

/// First `p` at which every qubit's past light cone spans the register.
fn full_coverage_depth(c: &AnsatzCircuit) -> Option<usize> {
    (1..=4 * c.n_qubits).find(|&p| {
        let cc = c.with_cycles(p);
        (0..cc.n_qubits).all(|q| past_light_cone(&cc, q).len() == cc.n_qubits)
    })
}

#[test]
fn criterion_07_chain_critical_depth() {
    let g = build_chain(12, true).unwrap();
    let cover = full_coverage_depth(&circuit(&g, 1, ParamMode::Opg, false));
    let out = chain12();
    let trace = &out.summary.trace;
    let i3 = row(trace, 3).best_infidelity.unwrap();
    let i4 = row(trace, 4).best_infidelity.unwrap();
    let best_fid = trace.iter().filter(|r| r.p <= 6).map(|r| 1.0 - r.best_infidelity.unwrap()).fold(0.0, f64::max);
    let pass = cover == Some(3) && i3 / i4 >= 10.0 && best_fid > 0.999;
    let curve: Vec<String> = trace.iter().map(|r| format!("{:.1e}", r.best_infidelity.unwrap())).collect();
    report(
        7,
        "chain critical depth",
        pass,
        format!("full light cone at p = {cover:?}, I(3)/I(4) = {:.0}, best F(p<=6) = {best_fid:.6}, I(p) = [{}]", i3 / i4, curve.join(", ")),
    );
}

#[test]
#[ignore = "hours of compute: 20-site chain, 32 rounds up to p = 8"]
fn criterion_08_chain20_headline() {
    let out = run_config("chain20.toml");
    let trace = &out.summary.trace;
    let f8 = 1.0 - row(trace, 8).best_infidelity.unwrap();
    let drop = row(trace, 5).best_infidelity.unwrap() / row(trace, 6).best_infidelity.unwrap();
    let floor_ok = out.records.iter().all(|r| r.run.energy >= r.e0.unwrap() - 1e-9);
    // "about two orders of magnitude", read as at least one and a half
    let pass = f8 > 0.999 && drop >= 10f64.powf(1.5) && floor_ok;
    report(8, "chain-20 headline", pass, format!("F(8) = {f8:.6}, I(5)/I(6) = {drop:.0}, variational floor {floor_ok}"));
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

#[test]
fn criterion_09_kagome_exponential_trend() {
    let trace = &kagome12().summary.trace;
    let ps: Vec<f64> = trace.iter().map(|r| r.p as f64).collect();
    let errs: Vec<f64> = trace.iter().map(|r| r.relative_energy_error.unwrap()).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let logs: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let r = pearson(&ps, &logs);
    let pass = trace.len() == 6 && decreasing && r <= -0.95;
    let curve: Vec<String> = errs.iter().map(|e| format!("{e:.1e}")).collect();
    report(9, "kagome exponential trend", pass, format!("rel. error(p) = [{}], Pearson(log, p) = {r:.3}", curve.join(", ")));
}

#[test]
fn criterion_10_variational_floor() {
    let mut n = 0;
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for out in [chain12(), kagome12()] {
        for r in &out.records {
            let margin = r.run.energy - r.e0.unwrap();
            worst = worst.min(margin);
            if margin < -1e-9 {
                violations += 1;
            }
            n += 1;
        }
    }
    report(10, "variational floor", violations == 0, format!("{n} records, {violations} violations, smallest E - E0 = {worst:.1e}"));
}

#[test]
fn criterion_11_trotter_consistency() {
    let t = Instant::now();
    let g = build_chain(8, true).unwrap();
    let base = circuit(&g, 1, ParamMode::Opg, false);
    let init = prepare_covering(&base.covering, 8, None).unwrap();
    let h = dense_hamiltonian(&g).unwrap();
    let eig = h.symmetric_eigen();
    let mut exact = vec![Complex64::new(0.0, 0.0); init.dim()];
    for (k, e) in eig.eigenvalues.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let ov: Complex64 = col.iter().zip(&init.amplitudes).map(|(v, a)| a * v).sum();
        let ph = Complex64::from_polar(1.0, -e);
        for (x, v) in exact.iter_mut().zip(col.iter()) {
            *x += ov * ph * v;
        }
    }
    let exact = StateVector::from_amplitudes(exact).unwrap();
    let errs: Vec<f64> = [4, 8, 16]
        .iter()
        .map(|&p| {
            let c = base.with_cycles(p);
            let psi = run(&c, &trotter_parameters(&c, 1.0).unwrap()).unwrap();
            // distance at the best global phase
            (2.0 - 2.0 * psi.inner(&exact).norm()).max(0.0).sqrt()
        })
        .collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let elapsed = t.elapsed();
    let pass = ratios.iter().all(|r| (1.5..=4.5).contains(r)) && elapsed < Duration::from_secs(60);
    report(11, "Trotter consistency", pass, format!("errors {errs:.3?}, doubling ratios {ratios:.2?}, {:.1}s", secs(elapsed)));
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kagome_vqe::ansatz::{circuit_stats, AnsatzCircuit};
use kagome_vqe::compiler::compile_circuit;
use kagome_vqe::lattice::SpinGraph;
use kagome_vqe::runner::{run_experiment, summarize, verify, write_summary, ExperimentConfig, System, TRACE_FILE};
use kagome_vqe::spectra::{low_spectrum, LanczosOptions};
use kagome_vqe::Result;

#[derive(Parser)]
#[command(name = "kvqe", version, about = "Classical emulation of Hamiltonian-variational VQE for Heisenberg antiferromagnets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the p-sweep described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        /// Skip exact diagonalization (energies only).
        #[arg(long)]
        no_reference: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recompute stored energies and check them against the graph.
    Verify { records: PathBuf, graph: PathBuf },
    /// Write the best-energy trace and the scatter of all minima as CSV.
    Summarize {
        records: PathBuf,
        /// Directory for the CSV files (default: next to the records).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Lowest eigenvalues of a graph by Lanczos.
    Ed {
        graph: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Write the full result (with ground vectors) as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compile a circuit file into fSim and RZ gates.
    Compile {
        circuit: PathBuf,
        /// JSON array of parameters (default: all zero).
        #[arg(long)]
        theta: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write the interaction graph of a config.
    Graph {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build the ansatz of a config at `p` cycles and print its statistics.
    Ansatz {
        config: PathBuf,
        #[arg(long)]
        p: usize,
        /// Write the circuit as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Print the gate listing.
        #[arg(long)]
        list: bool,
    },
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, seed, rounds, threads, no_reference, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.optimizer.seed = s;
            }
            if let Some(r) = rounds {
                cfg.optimizer.rounds = r;
            }
            if let Some(t) = threads {
                cfg.optimizer.threads = t;
            }
            if no_reference {
                cfg.reference.enabled = false;
            }
            if let Some(o) = output {
                cfg.output = o;
            }
            let out = run_experiment(&cfg)?;
            println!("p,best_energy,relative_energy_error,best_infidelity,total_function_calls");
            for r in &out.summary.trace {
                let opt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_default();
                println!("{},{:.12},{},{},{}", r.p, r.best_energy, opt(r.relative_energy_error), opt(r.best_infidelity), r.total_function_calls);
            }
            for f in &out.failures {
                eprintln!("round {} at p={} failed: {}", f.round, f.p, f.message);
            }
            if !out.summary.non_monotone.is_empty() {
                eprintln!("best energy increased at p = {:?}", out.summary.non_monotone);
            }
            println!("records: {}", out.records_path.display());
        }
        Command::Verify { records, graph } => {
            let graph = SpinGraph::load(&graph)?;
            let report = verify(&records, &graph)?;
            for i in &report.issues {
                println!("line {}: {:?}: {}", i.line, i.kind, i.message);
            }
            println!("{} records checked, {} issues", report.checked, report.issues.len());
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Summarize { records, output } => {
            let summary = summarize(&records)?;
            let dir = output.unwrap_or_else(|| records.parent().map(Path::to_path_buf).unwrap_or_default());
            fs::create_dir_all(&dir)?;
            write_summary(&summary, &dir)?;
            println!("{} trace rows, {} minima -> {}", summary.trace.len(), summary.scatter.len(), dir.join(TRACE_FILE).display());
        }
        Command::Ed { graph, k, tol, output } => {
            let graph = SpinGraph::load(&graph)?;
            let spec = low_spectrum(&graph, k, tol, LanczosOptions::balanced(graph.n_sites))?;
            for (i, e) in spec.eigenvalues.iter().enumerate() {
                println!("E{i} = {e:.12}");
            }
            println!("ground degeneracy (S_z sector): {}", spec.ground_degeneracy());
            if let Some(g) = spec.gap_01 {
                println!("gap = {g:.12}");
            }
            if let Some(p) = output {
                fs::write(p, serde_json::to_string(&spec)?)?;
            }
        }
        Command::Compile { circuit, theta, output } => {
            let circuit = AnsatzCircuit::from_json(&fs::read_to_string(circuit)?)?;
            let theta: Vec<f64> = match theta {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
                None => vec![0.0; circuit.n_params()],
            };
            let native = compile_circuit(&circuit, &theta)?;
            eprintln!("depth {}, fSim layers {}, RZ layers {}, counts {:?}", native.depth(), native.fsim_layers(), native.rz_layers(), native.counts());
            emit(&native.to_text(), output.as_deref())?;
        }
        Command::Graph { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let system = System::build(&cfg.system, cfg.embedding)?;
            emit(&(system.graph.to_json()? + "\n"), output.as_deref())?;
        }
        Command::Ansatz { config, p, output, list } => {
            let cfg = ExperimentConfig::load(&config)?;
            let system = System::build(&cfg.system, cfg.embedding)?;
            let circuit = system.circuit(p, cfg.param_mode)?;
            let s = circuit_stats(&circuit);
            println!("qubits {}, gates {}, parameters {}, depth {}", circuit.n_qubits, s.total_gates, s.n_params, s.depth);
            for (k, v) in &s.counts {
                println!("  {k}: {v}");
            }
            if list {
                print!("{}", circuit.to_text());
            }
            if let Some(o) = output {
                fs::write(o, circuit.to_json()?)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

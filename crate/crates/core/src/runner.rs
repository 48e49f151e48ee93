//! Experiment orchestration: p-sweeps, JSON-lines records, CSV summaries and
//! re-verification of stored results.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ansatz::{build_hva, AnsatzCircuit, ParamMode};
use crate::lattice::{
    build_chain, build_kagome_open, build_kagome_periodic, build_kagome_window, dimer_covering, edge_coloring,
    embed_on_grid, kagome_patch_20, vbc36_covering, DimerCovering, EdgeColoring, GridEmbedding, SpinGraph,
};
use crate::optimizer::{multistart_vqe, CostKind, OptimizerConfig, RoundFailure, RunRecord};
use crate::simulator::{energy, run};
use crate::spectra::{cached_low_spectrum, LanczosOptions, SpectrumResult};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const RECORDS_FILE: &str = "records.jsonl";
pub const TRACE_FILE: &str = "trace.csv";
pub const SCATTER_FILE: &str = "scatter.csv";
/// Largest register `run_experiment` will emulate.
pub const MAX_QUBITS: usize = 30;

/// Interaction graph of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SystemConfig {
    Chain {
        n: usize,
        #[serde(default = "yes")]
        periodic: bool,
    },
    KagomeOpen {
        rows: usize,
        cols: usize,
    },
    KagomeWindow {
        width: i32,
        height: i32,
        #[serde(default)]
        removed: Vec<(i32, i32)>,
    },
    /// The 20-site open patch.
    KagomePatch20,
    KagomePeriodic {
        cells_a: usize,
        cells_b: usize,
    },
    /// 36-site torus with its valence-bond-crystal covering.
    Vbc36,
    /// A graph exchange file.
    File {
        path: PathBuf,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingMode {
    #[default]
    None,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceConfig {
    pub enabled: bool,
    /// Number of low eigenvalues requested.
    pub k: usize,
    pub tol: f64,
    /// Largest system diagonalized.
    pub max_sites: usize,
    /// Spectrum cache; defaults to `<output>/cache`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self { enabled: true, k: 2, tol: 1e-10, max_sites: 24, cache_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    pub system: SystemConfig,
    #[serde(default)]
    pub embedding: EmbeddingMode,
    pub p_values: Vec<usize>,
    #[serde(default = "opg")]
    pub param_mode: ParamMode,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub reference: ReferenceConfig,
    pub output: PathBuf,
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

fn opg() -> ParamMode {
    ParamMode::Opg
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported config format_version {}", self.format_version)));
        }
        if self.p_values.is_empty() {
            return Err(Error::InvalidParameter("p_values is empty".into()));
        }
        if self.p_values.contains(&0) && self.embedding == EmbeddingMode::Grid {
            return Err(Error::InvalidParameter("p = 0 has no embedded cycle".into()));
        }
        self.optimizer.validate()
    }
}

/// Everything needed to build the ansatz for a system.
#[derive(Debug, Clone)]
pub struct System {
    pub graph: SpinGraph,
    pub coloring: EdgeColoring,
    pub covering: DimerCovering,
    pub embedding: Option<GridEmbedding>,
}

impl System {
    pub fn build(config: &SystemConfig, embedding: EmbeddingMode) -> Result<Self> {
        let (graph, special) = match config {
            SystemConfig::Chain { n, periodic } => (build_chain(*n, *periodic)?, None),
            SystemConfig::KagomeOpen { rows, cols } => (build_kagome_open(*rows, *cols)?, None),
            SystemConfig::KagomeWindow { width, height, removed } => (build_kagome_window(*width, *height, removed)?, None),
            SystemConfig::KagomePatch20 => (kagome_patch_20()?, None),
            SystemConfig::KagomePeriodic { cells_a, cells_b } => (build_kagome_periodic(*cells_a, *cells_b)?, None),
            SystemConfig::Vbc36 => {
                let v = vbc36_covering()?;
                (v.graph, Some((v.coloring, v.covering)))
            }
            SystemConfig::File { path } => (SpinGraph::load(path)?, None),
        };
        let (coloring, covering) = match special {
            Some(c) => c,
            None => (edge_coloring(&graph)?, dimer_covering(&graph)?),
        };
        let embedding = match embedding {
            EmbeddingMode::None => None,
            EmbeddingMode::Grid => Some(embed_on_grid(&graph)?),
        };
        Ok(Self { graph, coloring, covering, embedding })
    }

    pub fn circuit(&self, p: usize, mode: ParamMode) -> Result<AnsatzCircuit> {
        build_hva(&self.graph, &self.coloring, &self.covering, p, mode, self.embedding.as_ref())
    }
}

/// One line of the records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecord {
    pub format_version: u32,
    pub graph_hash: String,
    /// Circuit file, relative to the records file.
    pub circuit: String,
    pub e0: Option<f64>,
    pub e1: Option<f64>,
    pub relative_energy_error: Option<f64>,
    #[serde(flatten)]
    pub run: RunRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredFailure {
    format_version: u32,
    graph_hash: String,
    p: usize,
    round: usize,
    error: String,
}

/// `|(E - E0) / E0|`.
pub fn relative_energy_error(e: f64, e0: f64) -> f64 {
    ((e - e0) / e0).abs()
}

/// Per-p row of the best-energy trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub format_version: u32,
    pub p: usize,
    pub best_round: usize,
    pub best_energy: f64,
    pub relative_energy_error: Option<f64>,
    pub best_infidelity: Option<f64>,
    pub e0: Option<f64>,
    pub e1: Option<f64>,
    pub total_function_calls: usize,
    pub n_minima: usize,
    pub n_failed: usize,
}

/// One local minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub format_version: u32,
    pub p: usize,
    pub round: usize,
    pub energy: f64,
    pub relative_energy_error: Option<f64>,
    pub infidelity: Option<f64>,
    pub n_function_calls: usize,
    pub e1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub trace: Vec<SummaryRow>,
    pub scatter: Vec<ScatterRow>,
    /// `p` values whose best energy lies above that of the previous `p`.
    pub non_monotone: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub summary: Summary,
    pub records: Vec<StoredRecord>,
    pub failures: Vec<RoundFailure>,
    pub reference: Option<SpectrumResult>,
    pub records_path: PathBuf,
}

fn reference_for(config: &ExperimentConfig, graph: &SpinGraph) -> Result<Option<SpectrumResult>> {
    let r = &config.reference;
    let wants_infidelity = matches!(config.optimizer.cost, CostKind::Infidelity);
    if !r.enabled || graph.n_sites > r.max_sites {
        if wants_infidelity {
            return Err(Error::InvalidParameter(format!(
                "infidelity cost needs the exact ground state, which is disabled or beyond {} sites",
                r.max_sites
            )));
        }
        return Ok(None);
    }
    let cache = r.cache_dir.clone().unwrap_or_else(|| config.output.join("cache"));
    fs::create_dir_all(&cache)?;
    cached_low_spectrum(graph, r.k.max(2), r.tol, LanczosOptions::balanced(graph.n_sites), Some(&cache)).map(Some)
}

fn circuit_file(p: usize) -> String {
    format!("circuit-p{p}.json")
}

/// Runs every `p` of the sweep, writing `records.jsonl`, one circuit file per
/// `p`, the graph, and the trace and scatter tables into `config.output`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let system = System::build(&config.system, config.embedding)?;
    let graph = &system.graph;
    let n_qubits = graph.n_sites + system.embedding.as_ref().map_or(0, |e| e.aux_qubits.len());
    if n_qubits > MAX_QUBITS {
        return Err(Error::InvalidParameter(format!("{n_qubits} qubits exceed the emulation limit of {MAX_QUBITS}")));
    }
    fs::create_dir_all(&config.output)?;
    graph.save(&config.output.join("graph.json"))?;
    let reference = reference_for(config, graph)?;
    let e0 = reference.as_ref().map(|r| r.e0());
    let e1 = reference.as_ref().and_then(|r| r.e1());
    let hash = graph.content_hash();
    let records_path = config.output.join(RECORDS_FILE);
    let mut out = BufWriter::new(File::create(&records_path)?);
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for &p in &config.p_values {
        let circuit = system.circuit(p, config.param_mode)?;
        fs::write(config.output.join(circuit_file(p)), circuit.to_json()?)?;
        let batch = multistart_vqe(&circuit, graph, &config.optimizer, reference.as_ref())?;
        for run in batch.records {
            let rec = StoredRecord {
                format_version: FORMAT_VERSION,
                graph_hash: hash.clone(),
                circuit: circuit_file(p),
                e0,
                e1,
                relative_energy_error: e0.map(|e0| relative_energy_error(run.energy, e0)),
                run,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
            records.push(rec);
        }
        for f in batch.failures {
            let line = StoredFailure { format_version: FORMAT_VERSION, graph_hash: hash.clone(), p: f.p, round: f.round, error: f.message.clone() };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
            failures.push(f);
        }
        out.flush()?;
    }
    drop(out);
    let summary = summarize_records(&records, &failures)?;
    write_summary(&summary, &config.output)?;
    Ok(ExperimentOutcome { summary, records, failures, reference, records_path })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordLine {
    Record(Box<StoredRecord>),
    Failure(RoundFailure),
}

/// Reads a records file; unreadable lines come back as `(line, message)`.
pub fn read_records(path: &Path) -> Result<(Vec<(usize, RecordLine)>, Vec<(usize, String)>)> {
    let mut ok = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let no = i + 1;
        let value: serde_json::Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                bad.push((no, e.to_string()));
                continue;
            }
        };
        if value.get("format_version").and_then(|v| v.as_u64()) != Some(FORMAT_VERSION as u64) {
            bad.push((no, "missing or unsupported format_version".into()));
            continue;
        }
        let parsed = if value.get("error").is_some() {
            serde_json::from_value::<StoredFailure>(value)
                .map(|f| RecordLine::Failure(RoundFailure { p: f.p, round: f.round, message: f.error }))
        } else {
            serde_json::from_str::<StoredRecord>(&line).map(|r| RecordLine::Record(Box::new(r)))
        };
        match parsed {
            Ok(r) => ok.push((no, r)),
            Err(e) => bad.push((no, e.to_string())),
        }
    }
    Ok((ok, bad))
}

fn summarize_records(records: &[StoredRecord], failures: &[RoundFailure]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Empty("no successful records".into()));
    }
    let mut ps: Vec<usize> = records.iter().map(|r| r.run.p).collect();
    ps.sort_unstable();
    ps.dedup();
    let mut trace = Vec::new();
    for &p in &ps {
        let batch: Vec<&StoredRecord> = records.iter().filter(|r| r.run.p == p).collect();
        let best = batch
            .iter()
            .min_by(|a, b| a.run.energy.total_cmp(&b.run.energy).then(a.run.round.cmp(&b.run.round)))
            .expect("non-empty batch");
        trace.push(SummaryRow {
            format_version: FORMAT_VERSION,
            p,
            best_round: best.run.round,
            best_energy: best.run.energy,
            relative_energy_error: best.e0.map(|e0| relative_energy_error(best.run.energy, e0)),
            best_infidelity: best.run.infidelity,
            e0: best.e0,
            e1: best.e1,
            total_function_calls: batch.iter().map(|r| r.run.n_function_calls).sum(),
            n_minima: batch.len(),
            n_failed: failures.iter().filter(|f| f.p == p).count(),
        });
    }
    let scatter = records
        .iter()
        .map(|r| ScatterRow {
            format_version: FORMAT_VERSION,
            p: r.run.p,
            round: r.run.round,
            energy: r.run.energy,
            relative_energy_error: r.e0.map(|e0| relative_energy_error(r.run.energy, e0)),
            infidelity: r.run.infidelity,
            n_function_calls: r.run.n_function_calls,
            e1: r.e1,
        })
        .collect();
    let non_monotone = trace.windows(2).filter(|w| w[1].best_energy > w[0].best_energy).map(|w| w[1].p).collect();
    Ok(Summary { trace, scatter, non_monotone })
}

/// Best-energy trace and all minima from a records file.
pub fn summarize(records_path: &Path) -> Result<Summary> {
    let (lines, bad) = read_records(records_path)?;
    if let Some((no, msg)) = bad.first() {
        return Err(Error::Parse(format!("{}:{no}: {msg}", records_path.display())));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (_, l) in lines {
        match l {
            RecordLine::Record(r) => records.push(*r),
            RecordLine::Failure(f) => failures.push(f),
        }
    }
    summarize_records(&records, &failures)
}

pub fn write_summary(summary: &Summary, dir: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(TRACE_FILE))?;
    for r in &summary.trace {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join(SCATTER_FILE))?;
    for r in &summary.scatter {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<SummaryRow>> {
    csv::Reader::from_path(path)?.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    Parse,
    GraphMismatch,
    DimensionMismatch,
    EnergyMismatch,
    VariationalFloor,
    RelativeErrorFormula,
    InfidelityRange,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyIssue {
    pub line: usize,
    pub kind: IssueKind,
    pub message: String,
    /// Recomputed value where one exists.
    pub recomputed: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub issues: Vec<VerifyIssue>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Recomputes every stored energy from `theta_final` and checks the
/// variational floor and the relative-error formula.
pub fn verify(records_path: &Path, graph: &SpinGraph) -> Result<VerifyReport> {
    let (lines, bad) = read_records(records_path)?;
    let dir = records_path.parent().unwrap_or(Path::new("."));
    let mut issues: Vec<VerifyIssue> =
        bad.into_iter().map(|(line, message)| VerifyIssue { line, kind: IssueKind::Parse, message, recomputed: None }).collect();
    let hash = graph.content_hash();
    let mut circuits: HashMap<String, std::result::Result<AnsatzCircuit, String>> = HashMap::new();
    let mut checked = 0;
    for (line, rec) in lines {
        let RecordLine::Record(rec) = rec else { continue };
        checked += 1;
        let mut issue = |kind, message: String, recomputed| issues.push(VerifyIssue { line, kind, message, recomputed });
        if rec.graph_hash != hash {
            issue(IssueKind::GraphMismatch, format!("record graph {} differs from {}", rec.graph_hash, hash), None);
        }
        let circuit = circuits
            .entry(rec.circuit.clone())
            .or_insert_with(|| {
                fs::read_to_string(dir.join(&rec.circuit)).map_err(|e| e.to_string()).and_then(|t| AnsatzCircuit::from_json(&t).map_err(|e| e.to_string()))
            })
            .clone();
        let circuit = match circuit {
            Ok(c) => c,
            Err(e) => {
                issue(IssueKind::Parse, format!("circuit {}: {e}", rec.circuit), None);
                continue;
            }
        };
        if circuit.n_sites != graph.n_sites || circuit.n_qubits < graph.n_sites {
            issue(
                IssueKind::DimensionMismatch,
                format!("circuit acts on {} sites, graph has {}", circuit.n_sites, graph.n_sites),
                None,
            );
            continue;
        }
        if rec.run.theta_final.len() != circuit.n_params() {
            issue(
                IssueKind::DimensionMismatch,
                format!("{} parameters for a circuit with {}", rec.run.theta_final.len(), circuit.n_params()),
                None,
            );
            continue;
        }
        let e = energy(&run(&circuit, &rec.run.theta_final)?, graph)?;
        if (e - rec.run.energy).abs() > 1e-9 {
            issue(IssueKind::EnergyMismatch, format!("stored energy {} but recomputed {e}", rec.run.energy), Some(e));
        }
        if let Some(e0) = rec.e0 {
            if rec.run.energy < e0 - 1e-9 {
                issue(IssueKind::VariationalFloor, format!("energy {} below E0 = {e0}", rec.run.energy), Some(e));
            }
            let want = relative_energy_error(rec.run.energy, e0);
            match rec.relative_energy_error {
                Some(got) if (got - want).abs() <= 1e-12 => {}
                got => issue(IssueKind::RelativeErrorFormula, format!("stored {got:?}, formula gives {want}"), Some(want)),
            }
        }
        if let Some(i) = rec.run.infidelity {
            if !(0.0..=1.0).contains(&i) {
                issue(IssueKind::InfidelityRange, format!("infidelity {i} outside [0, 1]"), None);
            }
        }
    }
    Ok(VerifyReport { checked, issues })
}

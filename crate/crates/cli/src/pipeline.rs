//! The six pipeline stages. Each reads the previous stages' files from the
//! output directory and writes its own through a [`StageOutput`].

use std::collections::HashMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::TimeDelta;
use coalition_core::corrgraph::{
    correlation_matrix, epsilon_filter, epsilon_star, to_distance_graph, write_edge_list_csv, write_matrix_csv,
    CorrelationMatrix, MetricKind,
};
use coalition_core::formation::{
    correlated_formation_with, greedy_formation_with, random_structure, write_iteration_log_csv, CoalitionStructure,
    FormationParams, Provenance,
};
use coalition_core::market::{
    alpha_star, gain, size_exponent, ContractEvaluation, GridPolicy, MeanField, QuantileMode,
};
use coalition_core::powermodel::{random_configs, simulate_traces_with, ProductionTrace, ProsumerConfig, SimOptions};
use coalition_core::resilience::{resilience_sweep, write_summary_csv, write_sweep_csv, FailureMode, ResilienceReport};
use coalition_core::seed::derive_seed;
use coalition_core::weather::{
    format_timestamp, ingest_weather_csv, random_zone_specs, synthesize_weather_with, IngestOptions, WeatherDataset,
};
use coalition_core::Error as CoreError;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, check_seed, read_json, read_traces, require, Meta, StageOutput};
use crate::config::{AlphaMode, AlphaSetting, RunConfig, WeatherConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Graph,
    Form,
    Evaluate,
    Resilience,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Simulate,
        Stage::Graph,
        Stage::Form,
        Stage::Evaluate,
        Stage::Resilience,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Graph => "graph",
            Stage::Form => "form",
            Stage::Evaluate => "evaluate",
            Stage::Resilience => "resilience",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s.trim())
            .ok_or_else(|| CliError::Config(format!("unknown stage '{s}'")))
    }
}

/// Independent stream for one pipeline component.
pub fn stream_seed(config: &RunConfig, label: &str) -> u64 {
    derive_seed(config.seed, &[label.into()])
}

// ---------------------------------------------------------------------------
// In-memory building blocks (also used directly by the acceptance suite)
// ---------------------------------------------------------------------------

pub struct Population {
    pub configs: Vec<ProsumerConfig>,
    pub traces: Vec<ProductionTrace>,
    pub timestamps: Vec<String>,
}

pub fn load_weather(config: &RunConfig) -> Result<WeatherDataset> {
    match &config.weather {
        WeatherConfig::Synthetic {
            zones,
            lat_range,
            lon_range,
            start,
            steps,
            period_hours,
            params,
        } => {
            let specs = random_zone_specs(*zones, *lat_range, *lon_range, stream_seed(config, "zones"));
            Ok(synthesize_weather_with(
                &specs,
                *start,
                *steps,
                TimeDelta::hours(*period_hours),
                stream_seed(config, "weather"),
                params,
            )?)
        }
        WeatherConfig::Csv {
            path,
            locations,
            period_hours,
            fill,
        } => {
            let locations: HashMap<String, (f64, f64)> = locations.iter().map(|(k, v)| (k.clone(), *v)).collect();
            let options = IngestOptions::new(TimeDelta::hours(*period_hours), locations).with_fill(*fill);
            Ok(ingest_weather_csv(path, &options)?)
        }
    }
}

pub fn agent_configs(config: &RunConfig, weather: &WeatherDataset) -> Result<Vec<ProsumerConfig>> {
    if let Some(path) = &config.agents.configs {
        let configs: Vec<ProsumerConfig> = read_json(path)?;
        let mut seen = std::collections::HashSet::new();
        for c in &configs {
            if !seen.insert(c.agent_id.as_str()) {
                return Err(CliError::Config(format!(
                    "{}: duplicate agent id {}",
                    path.display(),
                    c.agent_id
                )));
            }
        }
        if configs.is_empty() {
            return Err(CliError::Config(format!("{}: no agents", path.display())));
        }
        return Ok(configs);
    }
    let zone_ids: Vec<String> = weather.zones().iter().map(|z| z.zone_id.clone()).collect();
    let seed = config.agents.seed.unwrap_or_else(|| stream_seed(config, "agents"));
    Ok(random_configs(
        config.agents.count,
        &zone_ids,
        &config.agents.ranges,
        seed,
    )?)
}

pub fn build_population(config: &RunConfig) -> Result<Population> {
    let weather = load_weather(config)?;
    let configs = agent_configs(config, &weather)?;
    let options = SimOptions {
        ramp: config.agents.ramp,
    };
    let traces = simulate_traces_with(&weather, &configs, stream_seed(config, "traces"), options)?;
    let timestamps = weather.timestamps().iter().map(format_timestamp).collect();
    Ok(Population {
        configs,
        traces,
        timestamps,
    })
}

/// Target mean coalition size ⌊N / n_coal⌋.
pub fn target_size(n_agents: usize, n_coal: usize) -> f64 {
    (n_agents / n_coal.max(1)) as f64
}

/// Resolves the policy exponent; returns it with the closed-form value when
/// that is defined.
pub fn resolve_alpha(config: &RunConfig, mean_field: &MeanField, n_bar: f64) -> Result<(f64, Option<f64>)> {
    let star = alpha_star(
        mean_field.mu_bar,
        mean_field.sigma_bar,
        mean_field.rho_bar,
        n_bar,
        config.policy.phi,
    );
    match config.policy.alpha {
        AlphaSetting::Value(a) => Ok((a, star.ok())),
        AlphaSetting::Mode(mode) => {
            let a = star?;
            let alpha = match mode {
                AlphaMode::Auto => a,
                AlphaMode::AutoExponent => size_exponent(a),
            };
            Ok((alpha.max(0.0), Some(a)))
        }
    }
}

pub struct GraphAnalysis {
    pub matrix: CorrelationMatrix,
    pub epsilon_star: f64,
    pub packing: Vec<Vec<usize>>,
    pub mean_field: MeanField,
    pub n_bar: f64,
    pub alpha_star: Option<f64>,
    pub policy: GridPolicy,
}

pub fn analyze(config: &RunConfig, traces: &[ProductionTrace]) -> Result<GraphAnalysis> {
    let matrix = correlation_matrix(traces)?;
    analyze_matrix(config, traces, matrix)
}

fn analyze_matrix(config: &RunConfig, traces: &[ProductionTrace], matrix: CorrelationMatrix) -> Result<GraphAnalysis> {
    let f = &config.formation;
    let g2 = to_distance_graph(&matrix, MetricKind::DecorrelationD2);
    let (eps, packing) = epsilon_star(&g2, f.k, f.n_coal)?;
    let mean_field = MeanField::from_population(traces, &matrix);
    let n_bar = target_size(traces.len(), f.n_coal);
    let (alpha, star) = resolve_alpha(config, &mean_field, n_bar)?;
    let policy = config.policy.with_alpha(alpha);
    policy.validate()?;
    Ok(GraphAnalysis {
        matrix,
        epsilon_star: eps,
        packing: packing.cliques.into_iter().take(f.n_coal).collect(),
        mean_field,
        n_bar,
        alpha_star: star,
        policy,
    })
}

pub fn form(
    algorithm: Provenance,
    traces: &[ProductionTrace],
    matrix: &CorrelationMatrix,
    policy: &GridPolicy,
    params: &FormationParams,
) -> Result<CoalitionStructure> {
    Ok(match algorithm {
        Provenance::Greedy => greedy_formation_with(traces, matrix, policy, params)?,
        Provenance::Random => random_structure(traces, policy, params)?,
        Provenance::Correlated => correlated_formation_with(traces, matrix, policy, params)?,
    })
}

pub fn formation_seed(config: &RunConfig) -> u64 {
    stream_seed(config, "formation")
}

pub fn resilience_seed(config: &RunConfig) -> u64 {
    stream_seed(config, "resilience")
}

// ---------------------------------------------------------------------------
// Artifact schemas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub meta: Meta,
    pub n_agents: usize,
    pub metric: MetricKind,
    pub k: usize,
    pub n_coal: usize,
    pub epsilon_star: f64,
    pub edge_count: usize,
    /// Seed cliques of the greedy algorithm, as agent ids.
    pub packing: Vec<Vec<String>>,
    pub mean_field: MeanField,
    pub n_bar: f64,
    pub alpha_star: Option<f64>,
    /// Policy with the resolved exponent; later stages use it as is.
    pub policy: GridPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionRecord {
    pub members: Vec<String>,
    pub evaluation: ContractEvaluation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureArtifact {
    pub meta: Meta,
    pub provenance: Provenance,
    pub params: FormationParams,
    pub policy: GridPolicy,
    pub epsilon: Option<f64>,
    pub warning: Option<String>,
    pub global_utility: f64,
    pub n_assigned: usize,
    pub coalitions: Vec<CoalitionRecord>,
    pub unassigned: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluatedCoalition {
    pub members: Vec<String>,
    pub size: usize,
    pub mu: f64,
    pub sigma: f64,
    pub p_contract: f64,
    pub valid: bool,
    pub utility: f64,
    /// Revenue per hour of operation at the contract value.
    pub gain_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationArtifact {
    pub meta: Meta,
    pub provenance: Provenance,
    pub policy: GridPolicy,
    pub quantile_mode: QuantileMode,
    pub global_utility: f64,
    pub coalitions: Vec<EvaluatedCoalition>,
}

/// One (contract, volatility) point per coalition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionPoint {
    pub members: Vec<String>,
    pub size: usize,
    pub contract: f64,
    pub volatility: f64,
    pub utility: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResiliencePoint {
    pub p_min: f64,
    pub psi: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSummary {
    pub provenance: Provenance,
    pub global_utility: f64,
    pub n_coalitions: usize,
    pub n_assigned: usize,
    pub mean_contract: f64,
    pub mean_volatility: f64,
    pub coalitions: Vec<CoalitionPoint>,
    /// Empty when the resilience stage has not run.
    pub resilience: Vec<ResiliencePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub meta: Meta,
    pub n_agents: usize,
    pub epsilon_star: f64,
    pub mean_field: MeanField,
    pub n_bar: f64,
    pub alpha_star: Option<f64>,
    pub policy: GridPolicy,
    pub structures: Vec<StructureSummary>,
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Algorithms selected on the command line, else the configured ones, in
/// canonical order without repeats.
pub fn selected_algorithms(config: &RunConfig, requested: Option<&[Provenance]>) -> Vec<Provenance> {
    let wanted = requested.unwrap_or(&config.formation.algorithms);
    Provenance::ALL.into_iter().filter(|p| wanted.contains(p)).collect()
}

pub fn run_stage(config: &RunConfig, stage: Stage, algorithms: Option<&[Provenance]>) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let algos = selected_algorithms(config, algorithms);
    let dir = config.output_dir.as_path();
    log::info!("stage {stage}: output in {}", dir.display());
    match stage {
        Stage::Simulate => simulate_stage(config, dir),
        Stage::Graph => graph_stage(config, dir),
        Stage::Form => form_stage(config, dir, &algos),
        Stage::Evaluate => evaluate_stage(config, dir, &algos),
        Stage::Resilience => resilience_stage(config, dir, &algos),
        Stage::Report => report_stage(config, dir, &algos),
    }
}

/// All stages in order; stops at the first failure.
pub fn run_pipeline(config: &RunConfig, algorithms: Option<&[Provenance]>) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for stage in Stage::ALL {
        written.extend(run_stage(config, stage, algorithms)?);
    }
    Ok(written)
}

fn simulate_stage(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let population = build_population(config)?;
    log::info!(
        "simulated {} agents over {} steps",
        population.traces.len(),
        population.timestamps.len()
    );
    let mut out = StageOutput::new(dir, Meta::new(Stage::Simulate.as_str(), config))?;
    out.write_json(artifacts::AGENTS, &population.configs)?;
    out.write(artifacts::TRACES, |w| {
        artifacts::write_series_csv(
            w,
            artifacts::TRACE_HEADER,
            &population.timestamps,
            population
                .traces
                .iter()
                .map(|t| (t.agent_id.as_str(), t.values.as_slice())),
        )
    })?;
    out.write(artifacts::CONSUMPTION, |w| {
        let empty = Vec::new();
        artifacts::write_series_csv(
            w,
            artifacts::CONSUMPTION_HEADER,
            &population.timestamps,
            population
                .traces
                .iter()
                .map(|t| (t.agent_id.as_str(), t.consumption.as_ref().unwrap_or(&empty).as_slice())),
        )
    })?;
    out.commit()
}

#[derive(Deserialize)]
struct ManifestMeta {
    meta: Meta,
}

fn load_traces(
    config: &RunConfig,
    dir: &Path,
    stage: &'static str,
    with_consumption: bool,
) -> Result<Vec<ProductionTrace>> {
    let traces = require(dir, artifacts::TRACES, stage)?;
    // Hand-made traces come without a manifest; simulated ones must match the seed.
    let manifest = dir.join(artifacts::manifest_file(Stage::Simulate.as_str()));
    if manifest.is_file() {
        let m: ManifestMeta = read_json(&manifest)?;
        check_seed(&manifest, &m.meta, config.seed)?;
    }
    let consumption = if with_consumption {
        Some(require(dir, artifacts::CONSUMPTION, stage)?)
    } else {
        None
    };
    Ok(read_traces(&traces, consumption.as_deref())?.0)
}

fn load_graph(config: &RunConfig, dir: &Path, stage: &'static str) -> Result<GraphArtifact> {
    let path = require(dir, artifacts::GRAPH, stage)?;
    let graph: GraphArtifact = read_json(&path)?;
    check_seed(&path, &graph.meta, config.seed)?;
    Ok(graph)
}

fn id_index(traces: &[ProductionTrace]) -> HashMap<&str, usize> {
    traces
        .iter()
        .enumerate()
        .map(|(i, t)| (t.agent_id.as_str(), i))
        .collect()
}

fn graph_stage(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let traces = load_traces(config, dir, "graph", false)?;
    let analysis = analyze(config, &traces)?;
    let ids = analysis.matrix.agent_ids().to_vec();
    let g2 = to_distance_graph(&analysis.matrix, MetricKind::DecorrelationD2);
    let filtered = epsilon_filter(&g2, analysis.epsilon_star);
    log::info!(
        "epsilon* = {} with {} edges; alpha = {}",
        analysis.epsilon_star,
        filtered.edge_count(),
        analysis.policy.alpha
    );
    let meta = Meta::new(Stage::Graph.as_str(), config);
    let artifact = GraphArtifact {
        meta: meta.clone(),
        n_agents: traces.len(),
        metric: MetricKind::DecorrelationD2,
        k: config.formation.k,
        n_coal: config.formation.n_coal,
        epsilon_star: analysis.epsilon_star,
        edge_count: filtered.edge_count(),
        packing: analysis
            .packing
            .iter()
            .map(|c| c.iter().map(|&i| ids[i].clone()).collect())
            .collect(),
        mean_field: analysis.mean_field,
        n_bar: analysis.n_bar,
        alpha_star: analysis.alpha_star,
        policy: analysis.policy,
    };
    let mut out = StageOutput::new(dir, meta)?;
    out.write(artifacts::CORRELATION, |w| Ok(write_matrix_csv(&analysis.matrix, w)?))?;
    out.write(artifacts::EDGES, |w| Ok(write_edge_list_csv(&filtered, w)?))?;
    out.write_json(artifacts::GRAPH, &artifact)?;
    out.commit()
}

/// Rebuilds the matrix from the `i,j,rho` dump, in trace order.
pub fn read_matrix_csv(path: &Path, traces: &[ProductionTrace]) -> Result<CorrelationMatrix> {
    let index = id_index(traces);
    let n = traces.len();
    let mut entries = vec![f64::NAN; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
    }
    let mut rdr = csv::Reader::from_path(path)?;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |message: String| CoreError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.len() != 3 {
            return Err(parse_err("expected i,j,rho".into()).into());
        }
        let i = *index
            .get(&row[0])
            .ok_or_else(|| parse_err(format!("unknown agent {}", &row[0])))?;
        let j = *index
            .get(&row[1])
            .ok_or_else(|| parse_err(format!("unknown agent {}", &row[1])))?;
        let rho: f64 = row[2]
            .parse()
            .map_err(|_| parse_err(format!("invalid number '{}'", &row[2])))?;
        entries[i * n + j] = rho;
        entries[j * n + i] = rho;
    }
    if entries.iter().any(|v| v.is_nan()) {
        return Err(CoreError::Alignment(format!(
            "{} does not cover every agent pair of {}",
            path.display(),
            artifacts::TRACES
        ))
        .into());
    }
    Ok(CorrelationMatrix::from_entries(
        traces.iter().map(|t| t.agent_id.clone()).collect(),
        entries,
    )?)
}

fn structure_artifact(
    meta: Meta,
    structure: &CoalitionStructure,
    params: FormationParams,
    policy: GridPolicy,
    traces: &[ProductionTrace],
) -> StructureArtifact {
    let id = |i: usize| traces[i].agent_id.clone();
    StructureArtifact {
        meta,
        provenance: structure.provenance,
        params,
        policy,
        epsilon: structure.epsilon,
        warning: structure.warning.clone(),
        global_utility: structure.global_utility,
        n_assigned: structure.n_assigned(),
        coalitions: structure
            .coalitions
            .iter()
            .zip(&structure.evaluations)
            .map(|(c, e)| CoalitionRecord {
                members: c.members().iter().map(|&i| id(i)).collect(),
                evaluation: *e,
            })
            .collect(),
        unassigned: structure.unassigned.iter().map(|&i| id(i)).collect(),
    }
}

fn form_stage(config: &RunConfig, dir: &Path, algos: &[Provenance]) -> Result<Vec<PathBuf>> {
    let traces = load_traces(config, dir, "form", false)?;
    let graph = load_graph(config, dir, "form")?;
    let matrix = read_matrix_csv(&require(dir, artifacts::CORRELATION, "form")?, &traces)?;
    let params = config.formation_params(formation_seed(config));
    let meta = Meta::new(Stage::Form.as_str(), config);
    let mut out = StageOutput::new(dir, meta.clone())?;
    for &algo in algos {
        let structure = form(algo, &traces, &matrix, &graph.policy, &params)?;
        log::info!(
            "{algo}: {} coalitions, {} agents, global utility {}",
            structure.coalitions.len(),
            structure.n_assigned(),
            structure.global_utility
        );
        if let Some(w) = &structure.warning {
            log::warn!("{algo}: {w}");
        }
        let artifact = structure_artifact(meta.clone(), &structure, params, graph.policy, &traces);
        out.write_json(&artifacts::structure_file(algo), &artifact)?;
        if algo == Provenance::Greedy {
            out.write(artifacts::ITERATION_LOG, |w| {
                Ok(write_iteration_log_csv(&structure.log, w)?)
            })?;
        }
    }
    out.commit()
}

fn load_structure(
    config: &RunConfig,
    dir: &Path,
    stage: &'static str,
    algo: Provenance,
    traces: &[ProductionTrace],
    policy: &GridPolicy,
) -> Result<CoalitionStructure> {
    let path = require(dir, &artifacts::structure_file(algo), stage)?;
    let artifact: StructureArtifact = read_json(&path)?;
    check_seed(&path, &artifact.meta, config.seed)?;
    let index = id_index(traces);
    let members = artifact
        .coalitions
        .iter()
        .map(|c| {
            c.members
                .iter()
                .map(|id| {
                    index.get(id.as_str()).copied().ok_or_else(|| CliError::Artifact {
                        path: path.clone(),
                        message: format!("agent {id} is not in {}", artifacts::TRACES),
                    })
                })
                .collect::<Result<Vec<usize>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut structure = CoalitionStructure::from_members(algo, members, traces, policy, config.policy.quantile)?;
    structure.epsilon = artifact.epsilon;
    structure.warning = artifact.warning;
    Ok(structure)
}

fn evaluate_stage(config: &RunConfig, dir: &Path, algos: &[Provenance]) -> Result<Vec<PathBuf>> {
    let traces = load_traces(config, dir, "evaluate", false)?;
    let graph = load_graph(config, dir, "evaluate")?;
    let meta = Meta::new(Stage::Evaluate.as_str(), config);
    let mut out = StageOutput::new(dir, meta.clone())?;
    for &algo in algos {
        let structure = load_structure(config, dir, "evaluate", algo, &traces, &graph.policy)?;
        let coalitions = structure
            .coalitions
            .iter()
            .zip(&structure.evaluations)
            .map(|(c, e)| EvaluatedCoalition {
                members: c.members().iter().map(|&i| traces[i].agent_id.clone()).collect(),
                size: c.size(),
                mu: e.mu,
                sigma: e.sigma,
                p_contract: e.p_contract,
                valid: e.valid,
                utility: e.utility,
                gain_per_hour: gain(e, &graph.policy, 1.0),
            })
            .collect();
        let artifact = EvaluationArtifact {
            meta: meta.clone(),
            provenance: algo,
            policy: graph.policy,
            quantile_mode: config.policy.quantile,
            global_utility: structure.global_utility,
            coalitions,
        };
        out.write_json(&artifacts::evaluation_file(algo), &artifact)?;
    }
    out.commit()
}

fn resilience_stage(config: &RunConfig, dir: &Path, algos: &[Provenance]) -> Result<Vec<PathBuf>> {
    let mode = config.resilience.failure_mode;
    let traces = load_traces(config, dir, "resilience", mode == FailureMode::ProductionOnly)?;
    let graph = load_graph(config, dir, "resilience")?;
    let structures = algos
        .iter()
        .map(|&a| load_structure(config, dir, "resilience", a, &traces, &graph.policy))
        .collect::<Result<Vec<_>>>()?;
    let seed = resilience_seed(config);
    let mut out = StageOutput::new(dir, Meta::new(Stage::Resilience.as_str(), config))?;
    for p_min in config.p_min_levels() {
        let reports = structures
            .iter()
            .map(|s| {
                resilience_sweep(
                    s,
                    &traces,
                    &config.resilience.psi,
                    config.resilience.replicates,
                    p_min,
                    seed,
                    mode,
                )
            })
            .collect::<std::result::Result<Vec<ResilienceReport>, _>>()?;
        out.write(&artifacts::resilience_sweep_file(p_min), |w| {
            Ok(write_sweep_csv(&reports, w)?)
        })?;
        out.write(&artifacts::resilience_summary_file(p_min), |w| {
            Ok(write_summary_csv(&reports, w)?)
        })?;
    }
    out.commit()
}

#[derive(Debug, Deserialize)]
struct SummaryRow {
    provenance: Provenance,
    psi: f64,
    mean: f64,
    std: f64,
}

fn report_stage(config: &RunConfig, dir: &Path, algos: &[Provenance]) -> Result<Vec<PathBuf>> {
    let graph = load_graph(config, dir, "report")?;
    let mut resilience: HashMap<Provenance, Vec<ResiliencePoint>> = HashMap::new();
    for p_min in config.p_min_levels() {
        let path = dir.join(artifacts::resilience_summary_file(p_min));
        if !path.is_file() {
            continue;
        }
        let mut rdr = csv::Reader::from_reader(File::open(&path)?);
        for row in rdr.deserialize::<SummaryRow>() {
            let row = row?;
            resilience.entry(row.provenance).or_default().push(ResiliencePoint {
                p_min,
                psi: row.psi,
                mean: row.mean,
                std: row.std,
            });
        }
    }
    let mut structures = Vec::with_capacity(algos.len());
    for &algo in algos {
        let path = require(dir, &artifacts::evaluation_file(algo), "report")?;
        let eval: EvaluationArtifact = read_json(&path)?;
        check_seed(&path, &eval.meta, config.seed)?;
        let n = eval.coalitions.len();
        let avg = |f: fn(&EvaluatedCoalition) -> f64| {
            if n == 0 {
                0.0
            } else {
                eval.coalitions.iter().map(f).sum::<f64>() / n as f64
            }
        };
        structures.push(StructureSummary {
            provenance: algo,
            global_utility: eval.global_utility,
            n_coalitions: n,
            n_assigned: eval.coalitions.iter().map(|c| c.size).sum(),
            mean_contract: avg(|c| c.p_contract),
            mean_volatility: avg(|c| c.sigma),
            coalitions: eval
                .coalitions
                .iter()
                .map(|c| CoalitionPoint {
                    members: c.members.clone(),
                    size: c.size,
                    contract: c.p_contract,
                    volatility: c.sigma,
                    utility: c.utility,
                    valid: c.valid,
                })
                .collect(),
            resilience: resilience.remove(&algo).unwrap_or_default(),
        });
    }
    let meta = Meta::new(Stage::Report.as_str(), config);
    let summary = Summary {
        meta: meta.clone(),
        n_agents: graph.n_agents,
        epsilon_star: graph.epsilon_star,
        mean_field: graph.mean_field,
        n_bar: graph.n_bar,
        alpha_star: graph.alpha_star,
        policy: graph.policy,
        structures,
    };
    let mut out = StageOutput::new(dir, meta)?;
    out.write_json(artifacts::SUMMARY, &summary)?;
    out.commit()
}

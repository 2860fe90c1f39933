//! Artifact names, self-describing metadata and atomic stage output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use coalition_core::formation::Provenance;
use coalition_core::powermodel::ProductionTrace;
use coalition_core::Error as CoreError;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const TOOL: &str = "coalition";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const AGENTS: &str = "agents.json";
pub const TRACES: &str = "traces.csv";
pub const CONSUMPTION: &str = "consumption.csv";
pub const CORRELATION: &str = "correlation.csv";
pub const EDGES: &str = "graph_d2_edges.csv";
pub const GRAPH: &str = "graph.json";
pub const ITERATION_LOG: &str = "iteration_log.csv";
pub const SUMMARY: &str = "summary.json";

pub fn structure_file(p: Provenance) -> String {
    format!("structure_{p}.json")
}

pub fn evaluation_file(p: Provenance) -> String {
    format!("evaluation_{p}.json")
}

pub fn resilience_sweep_file(p_min: f64) -> String {
    format!("resilience_sweep_p_min_{p_min}.csv")
}

pub fn resilience_summary_file(p_min: f64) -> String {
    format!("resilience_summary_p_min_{p_min}.csv")
}

pub fn manifest_file(stage: &str) -> String {
    format!("manifest_{stage}.json")
}

/// Embedded in every JSON artifact and stage manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Meta {
    pub fn new(stage: &str, config: &RunConfig) -> Self {
        Meta {
            tool: TOOL.into(),
            version: VERSION.into(),
            stage: stage.into(),
            seed: config.seed,
            config: config.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    meta: &'a Meta,
    files: Vec<ManifestEntry>,
}

/// Collects a stage's files under temporary names and moves them into
/// place only on [`StageOutput::commit`]; dropping it earlier removes them.
pub struct StageOutput {
    dir: PathBuf,
    meta: Meta,
    pending: Vec<(PathBuf, String)>,
}

impl StageOutput {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(StageOutput {
            dir: dir.to_path_buf(),
            meta,
            pending: Vec::new(),
        })
    }

    pub fn meta(&self) -> &Meta {
        &self.meta
    }

    fn temp_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!(".{name}.partial"))
    }

    /// Writes one file through `body`.
    pub fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let tmp = self.temp_path(name);
        self.pending.push((tmp.clone(), name.to_string()));
        let mut w = BufWriter::new(File::create(&tmp)?);
        body(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    /// Adds the stage manifest (meta plus a digest of every file) and moves
    /// all files into place.
    pub fn commit(mut self) -> Result<Vec<PathBuf>> {
        let mut files = Vec::with_capacity(self.pending.len());
        for (tmp, name) in &self.pending {
            files.push(ManifestEntry {
                file: name.clone(),
                sha256: file_sha256(tmp)?,
            });
        }
        let manifest = Manifest {
            meta: &self.meta,
            files,
        };
        let name = manifest_file(&self.meta.stage);
        let tmp = self.temp_path(&name);
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            serde_json::to_writer_pretty(&mut w, &manifest)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        self.pending.push((tmp, name));
        let mut written = Vec::with_capacity(self.pending.len());
        for (tmp, name) in std::mem::take(&mut self.pending) {
            let target = self.dir.join(&name);
            std::fs::rename(&tmp, &target)?;
            written.push(target);
        }
        Ok(written)
    }
}

impl Drop for StageOutput {
    fn drop(&mut self) {
        for (tmp, _) in &self.pending {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Path of an upstream artifact, or a dependency error naming it.
pub fn require(dir: &Path, name: &str, stage: &'static str) -> Result<PathBuf> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { stage, path })
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = BufReader::new(File::open(path)?);
    serde_json::from_reader(file).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Rejects artifacts produced under another master seed.
pub fn check_seed(path: &Path, meta: &Meta, seed: u64) -> Result<()> {
    if meta.seed != seed {
        return Err(CliError::Artifact {
            path: path.to_path_buf(),
            message: format!(
                "produced with seed {}, but this run uses seed {seed}; rerun the upstream stages",
                meta.seed
            ),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Long-format series CSVs
// ---------------------------------------------------------------------------

pub const TRACE_HEADER: [&str; 3] = ["agent_id", "timestamp", "net_power_w"];
pub const CONSUMPTION_HEADER: [&str; 3] = ["agent_id", "timestamp", "consumption_w"];

/// Writes `agent_id,timestamp,<value>` rows, agent by agent.
pub fn write_series_csv<'a, W, I>(writer: W, header: [&str; 3], timestamps: &[String], series: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for (id, values) in series {
        if values.len() != timestamps.len() {
            return Err(CoreError::Alignment(format!(
                "agent {id} has {} samples, expected {}",
                values.len(),
                timestamps.len()
            ))
            .into());
        }
        for (t, v) in timestamps.iter().zip(values) {
            w.write_record([id, t.as_str(), &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format series grouped by agent in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub agent_ids: Vec<String>,
    pub timestamps: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn read_series_csv(path: &Path, value_column: &str) -> Result<SeriesTable> {
    let parse_err = |line: u64, message: String| CoreError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.len() != 3 || &headers[0] != "agent_id" || &headers[1] != "timestamp" || &headers[2] != value_column {
        return Err(parse_err(1, format!("expected header agent_id,timestamp,{value_column}")).into());
    }
    let mut table = SeriesTable {
        agent_ids: Vec::new(),
        timestamps: Vec::new(),
        values: Vec::new(),
    };
    let mut record = csv::StringRecord::new();
    let mut cursor = 0usize;
    while rdr.read_record(&mut record)? {
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(parse_err(line, "expected 3 fields".into()).into());
        }
        let value: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("invalid number '{}'", &record[2])))?;
        if table.agent_ids.last().map(String::as_str) != Some(&record[0]) {
            if table.agent_ids.iter().any(|a| a == &record[0]) {
                return Err(parse_err(line, format!("rows of agent {} are not contiguous", &record[0])).into());
            }
            if table.values.len() > 1 && cursor != table.timestamps.len() {
                return Err(CoreError::Alignment(format!(
                    "agent {} has {cursor} samples, expected {}",
                    table.agent_ids.last().unwrap(),
                    table.timestamps.len()
                ))
                .into());
            }
            table.agent_ids.push(record[0].to_string());
            table.values.push(Vec::with_capacity(table.timestamps.len()));
            cursor = 0;
        }
        if table.values.len() == 1 {
            table.timestamps.push(record[1].to_string());
        } else if table.timestamps.get(cursor).map(String::as_str) != Some(&record[1]) {
            return Err(CoreError::Alignment(format!(
                "{}: line {line}: timestamp {} of agent {} does not match the first agent's series",
                path.display(),
                &record[1],
                &record[0]
            ))
            .into());
        }
        table.values.last_mut().unwrap().push(value);
        cursor += 1;
    }
    if table.values.len() > 1 && cursor != table.timestamps.len() {
        return Err(CoreError::Alignment(format!(
            "agent {} has {cursor} samples, expected {}",
            table.agent_ids.last().unwrap(),
            table.timestamps.len()
        ))
        .into());
    }
    if table.agent_ids.is_empty() {
        return Err(CoreError::EmptyRange(format!("{} has no rows", path.display())).into());
    }
    Ok(table)
}

/// Reloads traces, attaching consumption when the side file is given.
pub fn read_traces(traces: &Path, consumption: Option<&Path>) -> Result<(Vec<ProductionTrace>, Vec<String>)> {
    let table = read_series_csv(traces, TRACE_HEADER[2])?;
    let mut out: Vec<ProductionTrace> = table
        .agent_ids
        .iter()
        .zip(table.values)
        .map(|(id, v)| ProductionTrace::new(id.clone(), v))
        .collect();
    if let Some(path) = consumption {
        let cons = read_series_csv(path, CONSUMPTION_HEADER[2])?;
        if cons.agent_ids != table.agent_ids || cons.timestamps != table.timestamps {
            return Err(CoreError::Alignment(format!(
                "{} does not cover the same agents and timestamps as {}",
                path.display(),
                traces.display()
            ))
            .into());
        }
        for (t, c) in out.iter_mut().zip(cons.values) {
            t.consumption = Some(c);
        }
    }
    Ok((out, table.timestamps))
}

//! Robustness of coalition structures to random agent failures.

use std::io::Write;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{CoalitionStructure, Provenance};
use crate::powermodel::ProductionTrace;
use crate::seed::derived_rng;
use crate::stats::{mean, sample_std};

/// What a failed agent stops doing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// The node disconnects: production and consumption both vanish.
    #[default]
    Disconnect,
    /// Generation stops but the loads keep drawing power.
    ProductionOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    pub psi: f64,
    pub seed: u64,
    /// Failed agent indices, ascending.
    pub failed: Vec<usize>,
}

/// `round(ψ·n)` with halves rounded up.
pub fn failure_count(psi: f64, n: usize) -> usize {
    let x = psi * n as f64;
    ((x + 0.5 + 1e-9 * x.max(1.0)).floor() as usize).min(n)
}

impl FailureScenario {
    pub fn none() -> Self {
        FailureScenario {
            psi: 0.0,
            seed: 0,
            failed: Vec::new(),
        }
    }

    /// Draws `round(ψ·n)` distinct failed agents uniformly from `0..n`.
    pub fn draw(n: usize, psi: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&psi) {
            return Err(Error::Validation(format!("psi {psi} outside [0, 1]")));
        }
        let count = failure_count(psi, n);
        let mut rng = derived_rng(seed, &["failures".into()]);
        let mut failed = sample(&mut rng, n, count).into_vec();
        failed.sort_unstable();
        Ok(FailureScenario { psi, seed, failed })
    }
}

/// `1 − #{t : P(t) < P_min} / T` for a surviving aggregate; `None` stands for
/// a coalition with no surviving member.
pub fn coalition_resilience(aggregate: Option<&[f64]>, p_min: f64) -> f64 {
    match aggregate {
        None => {
            if p_min > 0.0 {
                0.0
            } else {
                1.0
            }
        }
        Some([]) => 1.0,
        Some(series) => {
            let short = series.iter().filter(|&&v| v < p_min).count();
            1.0 - short as f64 / series.len() as f64
        }
    }
}

/// Per-coalition resilience of `structure` after `scenario`'s failures.
pub fn coalition_resiliences(
    structure: &CoalitionStructure,
    traces: &[ProductionTrace],
    scenario: &FailureScenario,
    p_min: f64,
    mode: FailureMode,
) -> Result<Vec<f64>> {
    let mut scratch = Vec::new();
    structure
        .coalitions
        .iter()
        .map(|c| {
            let lost: Vec<usize> = c
                .members()
                .iter()
                .copied()
                .filter(|a| scenario.failed.binary_search(a).is_ok())
                .collect();
            if mode == FailureMode::Disconnect && lost.len() == c.size() {
                return Ok(coalition_resilience(None, p_min));
            }
            scratch.clear();
            scratch.extend_from_slice(c.aggregate());
            for &a in &lost {
                let trace = &traces[a];
                match mode {
                    FailureMode::Disconnect => {
                        for (s, v) in scratch.iter_mut().zip(&trace.values) {
                            *s -= v;
                        }
                    }
                    FailureMode::ProductionOnly => {
                        let consumption = trace.consumption.as_ref().ok_or_else(|| {
                            Error::Validation(format!(
                                "production-only failures need the consumption of agent {}",
                                trace.agent_id
                            ))
                        })?;
                        // Net = production − consumption, so drop net + consumption.
                        for ((s, v), l) in scratch.iter_mut().zip(&trace.values).zip(consumption) {
                            *s -= v + l;
                        }
                    }
                }
            }
            Ok(coalition_resilience(Some(&scratch), p_min))
        })
        .collect()
}

/// Product of the coalition resiliences after the scenario's failures.
pub fn structure_resilience(
    structure: &CoalitionStructure,
    traces: &[ProductionTrace],
    scenario: &FailureScenario,
    p_min: f64,
    mode: FailureMode,
) -> Result<f64> {
    Ok(coalition_resiliences(structure, traces, scenario, p_min, mode)?
        .into_iter()
        .product())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub provenance: Provenance,
    pub psi_grid: Vec<f64>,
    /// `structure[p][r]`: structure resilience for ψ index `p`, replicate `r`.
    pub structure: Vec<Vec<f64>>,
    /// `coalitions[p][r][c]`: resilience of coalition `c`.
    pub coalitions: Vec<Vec<Vec<f64>>>,
    pub mean: Vec<f64>,
    /// Sample standard deviation over replicates (0 for one replicate).
    pub std: Vec<f64>,
}

/// Monte Carlo sweep: for every ψ and replicate an independent failure set
/// is drawn from a seed derived from `(seed, ψ index, replicate)`.
pub fn resilience_sweep(
    structure: &CoalitionStructure,
    traces: &[ProductionTrace],
    psi_grid: &[f64],
    replicates: usize,
    p_min: f64,
    seed: u64,
    mode: FailureMode,
) -> Result<ResilienceReport> {
    if replicates < 1 {
        return Err(Error::Config("replicates must be >= 1".into()));
    }
    let n = traces.len();
    let jobs: Vec<(usize, usize)> = (0..psi_grid.len())
        .flat_map(|p| (0..replicates).map(move |r| (p, r)))
        .collect();
    let values = jobs
        .par_iter()
        .map(|&(p, r)| {
            let s = crate::seed::derive_seed(seed, &["resilience".into(), p.into(), r.into()]);
            let scenario = FailureScenario::draw(n, psi_grid[p], s)?;
            coalition_resiliences(structure, traces, &scenario, p_min, mode)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let mut coalitions = vec![Vec::with_capacity(replicates); psi_grid.len()];
    let mut per_structure = vec![Vec::with_capacity(replicates); psi_grid.len()];
    for (&(p, _), v) in jobs.iter().zip(values) {
        per_structure[p].push(v.iter().product::<f64>());
        coalitions[p].push(v);
    }
    let mean_v = per_structure.iter().map(|v| mean(v)).collect();
    let std_v = per_structure
        .iter()
        .map(|v| if v.len() > 1 { sample_std(v) } else { 0.0 })
        .collect();
    Ok(ResilienceReport {
        provenance: structure.provenance,
        psi_grid: psi_grid.to_vec(),
        structure: per_structure,
        coalitions,
        mean: mean_v,
        std: std_v,
    })
}

pub fn write_sweep_csv<W: Write>(reports: &[ResilienceReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["provenance", "psi", "replicate", "resilience"])?;
    for rep in reports {
        for (p, values) in rep.structure.iter().enumerate() {
            for (r, v) in values.iter().enumerate() {
                w.write_record([
                    rep.provenance.as_str().to_string(),
                    rep.psi_grid[p].to_string(),
                    r.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(reports: &[ResilienceReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["provenance", "psi", "mean", "std"])?;
    for rep in reports {
        for p in 0..rep.psi_grid.len() {
            w.write_record([
                rep.provenance.as_str().to_string(),
                rep.psi_grid[p].to_string(),
                rep.mean[p].to_string(),
                rep.std[p].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

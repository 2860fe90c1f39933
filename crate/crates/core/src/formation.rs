//! Coalition structure formation: clique-seeded greedy search and the random
//! and correlated-clustering baselines.

use std::io::Write;

use petgraph::unionfind::UnionFind;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrgraph::{
    correlation_matrix, epsilon_filter, epsilon_star, to_distance_graph, CorrelationMatrix, MetricKind,
};
use crate::error::{Error, Result};
use crate::market::{Coalition, ContractEvaluation, Evaluator, GridPolicy, QuantileMode};
use crate::powermodel::ProductionTrace;
use crate::seed::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Greedy,
    Random,
    Correlated,
}

impl Provenance {
    pub const ALL: [Provenance; 3] = [Provenance::Greedy, Provenance::Random, Provenance::Correlated];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Greedy => "greedy",
            Provenance::Random => "random",
            Provenance::Correlated => "correlated",
        }
    }
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "greedy" => Ok(Provenance::Greedy),
            "random" => Ok(Provenance::Random),
            "correlated" => Ok(Provenance::Correlated),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationParams {
    pub n_coal: usize,
    /// Size of the seed cliques.
    pub k: usize,
    /// Number of samples drawn by the random baseline.
    pub loop_max: usize,
    /// Threshold step of the correlated baseline.
    pub beta: f64,
    pub seed: u64,
    #[serde(default)]
    pub mode: QuantileMode,
}

impl FormationParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_coal < 1 {
            return Err(Error::Config("n_coal must be >= 1".into()));
        }
        if self.k < 2 {
            return Err(Error::Config("k must be >= 2".into()));
        }
        if self.loop_max < 1 {
            return Err(Error::Config("loop_max must be >= 1".into()));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config("beta must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// One accepted greedy move (iteration 0 is the seed packing).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub global_utility: f64,
    pub n_assigned: usize,
}

#[derive(Debug, Clone)]
pub struct CoalitionStructure {
    pub provenance: Provenance,
    pub coalitions: Vec<Coalition>,
    pub evaluations: Vec<ContractEvaluation>,
    /// Agents outside every coalition, ascending.
    pub unassigned: Vec<usize>,
    pub global_utility: f64,
    /// ε\* for greedy, the accepted threshold for correlated.
    pub epsilon: Option<f64>,
    /// Set when the algorithm could not meet its target exactly.
    pub warning: Option<String>,
    /// Greedy only: global utility after every accepted move.
    pub log: Vec<IterationRecord>,
}

impl CoalitionStructure {
    /// Builds and evaluates a structure from member lists.
    pub fn from_members(
        provenance: Provenance,
        members: Vec<Vec<usize>>,
        traces: &[ProductionTrace],
        policy: &GridPolicy,
        mode: QuantileMode,
    ) -> Result<Self> {
        let mut owner = vec![false; traces.len()];
        let mut coalitions = Vec::with_capacity(members.len());
        for m in members {
            let c = Coalition::new(m, traces)?;
            for &a in c.members() {
                if std::mem::replace(&mut owner[a], true) {
                    return Err(Error::Validation(format!(
                        "agent {} belongs to two coalitions",
                        traces[a].agent_id
                    )));
                }
            }
            coalitions.push(c);
        }
        let mut evaluator = Evaluator::new(traces, *policy, mode);
        let evaluations = coalitions
            .iter()
            .map(|c| evaluator.evaluate(c))
            .collect::<Result<Vec<_>>>()?;
        let unassigned = (0..traces.len()).filter(|&a| !owner[a]).collect();
        let global_utility = evaluations.iter().map(|e| e.utility).sum();
        Ok(CoalitionStructure {
            provenance,
            coalitions,
            evaluations,
            unassigned,
            global_utility,
            epsilon: None,
            warning: None,
            log: Vec::new(),
        })
    }

    pub fn n_assigned(&self) -> usize {
        self.coalitions.iter().map(Coalition::size).sum()
    }

    pub fn member_lists(&self) -> Vec<Vec<usize>> {
        self.coalitions.iter().map(|c| c.members().to_vec()).collect()
    }
}

pub fn write_iteration_log_csv<W: Write>(log: &[IterationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iteration", "global_utility", "n_assigned"])?;
    for r in log {
        w.write_record([
            r.iteration.to_string(),
            r.global_utility.to_string(),
            r.n_assigned.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Greedy
// ---------------------------------------------------------------------------

pub fn greedy_formation(
    traces: &[ProductionTrace],
    policy: &GridPolicy,
    params: &FormationParams,
) -> Result<CoalitionStructure> {
    let matrix = correlation_matrix(traces)?;
    greedy_formation_with(traces, &matrix, policy, params)
}

/// Seeds `n_coal` coalitions with the disjoint k-cliques of the
/// decorrelation graph at ε\*, then alternately lets each coalition absorb
/// its best unassigned neighbor (if that does not lower its utility) and
/// drop its most harmful member, until a full pass changes nothing.
pub fn greedy_formation_with(
    traces: &[ProductionTrace],
    matrix: &CorrelationMatrix,
    policy: &GridPolicy,
    params: &FormationParams,
) -> Result<CoalitionStructure> {
    params.validate()?;
    policy.validate()?;
    check_alignment(traces, matrix)?;
    let graph = to_distance_graph(matrix, MetricKind::DecorrelationD2);
    let (eps, packing) = epsilon_star(&graph, params.k, params.n_coal)?;
    let filtered = epsilon_filter(&graph, eps);
    let seeds: Vec<Vec<usize>> = packing.cliques.into_iter().take(params.n_coal).collect();

    let mut structure = CoalitionStructure::from_members(Provenance::Greedy, seeds, traces, policy, params.mode)?;
    structure.epsilon = Some(eps);
    let n = traces.len();
    let mut assigned = vec![false; n];
    for c in &structure.coalitions {
        for &a in c.members() {
            assigned[a] = true;
        }
    }
    let mut n_assigned = structure.n_assigned();
    let mut iteration = 0;
    structure.log.push(IterationRecord {
        iteration,
        global_utility: structure.global_utility,
        n_assigned,
    });

    let mut evaluator = Evaluator::new(traces, *policy, params.mode);
    loop {
        let mut changed = false;
        for c in 0..structure.coalitions.len() {
            // Addition: best unassigned neighbor of any member.
            let mut candidates: Vec<usize> = structure.coalitions[c]
                .members()
                .iter()
                .flat_map(|&m| filtered.neighbors(m).iter().copied())
                .filter(|&i| !assigned[i])
                .collect();
            candidates.sort_unstable();
            candidates.dedup();
            let current = structure.evaluations[c].utility;
            let coalition = &structure.coalitions[c];
            let deltas = candidates
                .par_iter()
                .map_init(
                    || Evaluator::new(traces, *policy, params.mode),
                    |ev, &i| ev.gain_of_adding(coalition, current, i).map(|d| (i, d)),
                )
                .collect::<Result<Vec<_>>>()?;
            // Candidates are ascending, so the first maximum has the lowest id.
            let best = deltas.into_iter().fold(None::<(usize, f64)>, |acc, (i, d)| match acc {
                Some((_, bd)) if bd >= d => acc,
                _ => Some((i, d)),
            });
            if let Some((i, d)) = best.filter(|&(_, d)| d >= 0.0) {
                let grown = structure.coalitions[c].with_member(i, traces)?;
                structure.evaluations[c] = evaluator.evaluate(&grown)?;
                structure.coalitions[c] = grown;
                assigned[i] = true;
                n_assigned += 1;
                structure.global_utility += d;
                changed = true;
                iteration += 1;
                structure.log.push(IterationRecord {
                    iteration,
                    global_utility: structure.global_utility,
                    n_assigned,
                });
            }

            // Removal: the member whose re-addition hurts most, never below k.
            if structure.coalitions[c].size() > params.k {
                let coalition = &structure.coalitions[c];
                let current = structure.evaluations[c].utility;
                let mut worst: Option<(usize, f64)> = None;
                for &j in coalition.members() {
                    let contribution = evaluator.contribution_of_member(coalition, current, j)?;
                    if contribution < 0.0 && worst.is_none_or(|(_, w)| contribution < w) {
                        worst = Some((j, contribution));
                    }
                }
                if let Some((j, contribution)) = worst {
                    let shrunk = structure.coalitions[c]
                        .without_member(j, traces)
                        .expect("coalition larger than k");
                    structure.evaluations[c] = evaluator.evaluate(&shrunk)?;
                    structure.coalitions[c] = shrunk;
                    assigned[j] = false;
                    n_assigned -= 1;
                    structure.global_utility -= contribution;
                    changed = true;
                    iteration += 1;
                    structure.log.push(IterationRecord {
                        iteration,
                        global_utility: structure.global_utility,
                        n_assigned,
                    });
                }
            }
        }
        if !changed || n_assigned == n {
            break;
        }
    }

    // Re-sum from the evaluations so the reported total carries no drift.
    structure.global_utility = structure.evaluations.iter().map(|e| e.utility).sum();
    if let Some(last) = structure.log.last_mut() {
        last.global_utility = structure.global_utility;
    }
    structure.unassigned = (0..n).filter(|&a| !assigned[a]).collect();
    Ok(structure)
}

fn check_alignment(traces: &[ProductionTrace], matrix: &CorrelationMatrix) -> Result<()> {
    if traces.len() != matrix.n() || traces.iter().zip(matrix.agent_ids()).any(|(t, id)| &t.agent_id != id) {
        return Err(Error::Alignment(
            "correlation matrix does not match the trace population".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Random baseline
// ---------------------------------------------------------------------------

/// The `iteration`-th random partition of `n` agents into `n_coal` contiguous
/// blocks of a shuffled order (sizes differ by at most one).
pub fn random_partition(n: usize, n_coal: usize, seed: u64, iteration: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = derived_rng(seed, &["random".into(), iteration.into()]);
    order.shuffle(&mut rng);
    let blocks = n_coal.min(n);
    let (base, extra) = (n / blocks.max(1), n % blocks.max(1));
    let mut out = Vec::with_capacity(blocks);
    let mut start = 0;
    for b in 0..blocks {
        let len = base + usize::from(b < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Best of `loop_max` random partitions; ties keep the earliest sample.
pub fn random_structure(
    traces: &[ProductionTrace],
    policy: &GridPolicy,
    params: &FormationParams,
) -> Result<CoalitionStructure> {
    params.validate()?;
    policy.validate()?;
    let n = traces.len();
    let scores = (0..params.loop_max)
        .into_par_iter()
        .map_init(
            || Evaluator::new(traces, *policy, params.mode),
            |ev, it| -> Result<f64> {
                let mut total = 0.0;
                for block in random_partition(n, params.n_coal, params.seed, it) {
                    total += ev.evaluate_members(&block)?.utility;
                }
                Ok(total)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (it, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = it;
        }
    }
    let members = random_partition(n, params.n_coal, params.seed, best);
    CoalitionStructure::from_members(Provenance::Random, members, traces, policy, params.mode)
}

// ---------------------------------------------------------------------------
// Correlated baseline
// ---------------------------------------------------------------------------

/// Connected components of the correlation graph with edges `1 − ρ² ≤ ε`,
/// each listed ascending and ordered by smallest member.
pub fn correlation_components(matrix: &CorrelationMatrix, epsilon: f64) -> Vec<Vec<usize>> {
    let n = matrix.n();
    let mut uf = UnionFind::<usize>::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if MetricKind::CorrelationD1.distance(matrix.get(i, j)) <= epsilon {
                uf.union(i, j);
            }
        }
    }
    let labels = uf.into_labeling();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for (a, &root) in labels.iter().enumerate() {
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(a);
    }
    groups
}

pub fn correlated_formation(
    traces: &[ProductionTrace],
    policy: &GridPolicy,
    params: &FormationParams,
) -> Result<CoalitionStructure> {
    let matrix = correlation_matrix(traces)?;
    correlated_formation_with(traces, &matrix, policy, params)
}

/// Lowers ε from 1 in steps of β until the correlation graph has exactly
/// `n_coal` components. If a step jumps past the target, the interval is
/// rescanned once with step β/10; failing that, the closest component count
/// seen is returned (ties favor fewer components) with a warning.
pub fn correlated_formation_with(
    traces: &[ProductionTrace],
    matrix: &CorrelationMatrix,
    policy: &GridPolicy,
    params: &FormationParams,
) -> Result<CoalitionStructure> {
    params.validate()?;
    policy.validate()?;
    check_alignment(traces, matrix)?;
    let target = params.n_coal;
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    let consider = |eps: f64, groups: Vec<Vec<usize>>, best: &mut Option<(f64, Vec<Vec<usize>>)>| {
        let better = match best {
            None => true,
            Some((_, b)) => {
                let (d, bd) = (groups.len().abs_diff(target), b.len().abs_diff(target));
                d < bd || (d == bd && groups.len() < b.len())
            }
        };
        if better {
            *best = Some((eps, groups));
        }
    };

    let mut exact = None;
    let mut previous: Option<(f64, usize)> = None;
    let mut step = 0usize;
    loop {
        let eps = (1.0 - step as f64 * params.beta).max(0.0);
        let groups = correlation_components(matrix, eps);
        let count = groups.len();
        if count == target {
            exact = Some((eps, groups));
            break;
        }
        if count > target {
            consider(eps, groups, &mut best);
            if let Some((prev_eps, prev_count)) = previous.filter(|&(_, c)| c < target) {
                debug_assert!(prev_count < target);
                let fine = params.beta / 10.0;
                for j in 1..10 {
                    let e = prev_eps - j as f64 * fine;
                    if e <= eps {
                        break;
                    }
                    let g = correlation_components(matrix, e);
                    if g.len() == target {
                        exact = Some((e, g));
                        break;
                    }
                    consider(e, g, &mut best);
                }
            }
            // Lowering ε further only adds components.
            break;
        }
        consider(eps, groups, &mut best);
        previous = Some((eps, count));
        if eps <= 0.0 {
            break;
        }
        step += 1;
    }

    let (eps, groups, warning) = match exact {
        Some((e, g)) => (e, g, None),
        None => {
            let (e, g) = best.expect("at least one threshold evaluated");
            let msg = format!(
                "no threshold yields exactly {target} components; using {} at epsilon {e}",
                g.len()
            );
            (e, g, Some(msg))
        }
    };
    let mut structure = CoalitionStructure::from_members(Provenance::Correlated, groups, traces, policy, params.mode)?;
    structure.epsilon = Some(eps);
    structure.warning = warning;
    Ok(structure)
}

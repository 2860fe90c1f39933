//! Correlation structure of the agent population as graphs.
//!
//! The Pearson matrix over agent traces is mapped to two complete weighted
//! graphs: the correlation graph (weight `1 − ρ²`, correlated agents are
//! close) and the decorrelation graph (weight `ρ²`, uncorrelated agents are
//! close). An ε-filter keeps the edges of weight at most ε. Cliques of the
//! filtered decorrelation graph are groups of mutually uncorrelated agents.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::powermodel::ProductionTrace;
use crate::stats::Centered;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    agent_ids: Vec<String>,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn n(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n() + j]
    }

    /// Mean of the off-diagonal coefficients.
    pub fn mean_off_diagonal(&self) -> f64 {
        let n = self.n();
        if n < 2 {
            return f64::NAN;
        }
        let mut sum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                sum += self.get(i, j);
            }
        }
        sum / (n * (n - 1) / 2) as f64
    }

    /// Builds a matrix from explicit row-major entries, checking symmetry,
    /// a unit diagonal and the [-1, 1] range.
    pub fn from_entries(agent_ids: Vec<String>, entries: Vec<f64>) -> Result<Self> {
        let n = agent_ids.len();
        if entries.len() != n * n {
            return Err(Error::Validation(format!(
                "expected {} entries for {n} agents, found {}",
                n * n,
                entries.len()
            )));
        }
        for i in 0..n {
            if entries[i * n + i] != 1.0 {
                return Err(Error::Validation(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !(-1.0..=1.0).contains(&v) || v != entries[j * n + i] {
                    return Err(Error::Validation(format!(
                        "entry ({i}, {j}) is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(CorrelationMatrix { agent_ids, entries })
    }
}

/// Pearson correlation matrix over equal-length traces.
pub fn correlation_matrix(traces: &[ProductionTrace]) -> Result<CorrelationMatrix> {
    if traces.len() < 2 {
        return Err(Error::InsufficientData(
            "a correlation matrix needs at least two traces".into(),
        ));
    }
    let len = traces[0].len();
    if len < 3 {
        return Err(Error::InsufficientData("traces need at least three samples".into()));
    }
    if let Some(t) = traces.iter().find(|t| t.len() != len) {
        return Err(Error::InsufficientData(format!(
            "trace {} has {} samples, expected {len}",
            t.agent_id,
            t.len()
        )));
    }
    let centered: Vec<Centered> = traces.par_iter().map(|t| Centered::new(&t.values)).collect();
    if let Some((t, _)) = traces.iter().zip(&centered).find(|(_, c)| c.sum_sq == 0.0) {
        return Err(Error::DegenerateSeries {
            agent: t.agent_id.clone(),
        });
    }

    let n = traces.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| centered[i].pearson(&centered[j])).collect())
        .collect();
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
        for (offset, &rho) in upper[i].iter().enumerate() {
            let j = i + 1 + offset;
            entries[i * n + j] = rho;
            entries[j * n + i] = rho;
        }
    }
    Ok(CorrelationMatrix {
        agent_ids: traces.iter().map(|t| t.agent_id.clone()).collect(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// `1 − ρ²`
    CorrelationD1,
    /// `ρ²`
    DecorrelationD2,
}

impl MetricKind {
    pub fn distance(self, rho: f64) -> f64 {
        let r2 = rho * rho;
        match self {
            MetricKind::CorrelationD1 => 1.0 - r2,
            MetricKind::DecorrelationD2 => r2,
        }
    }
}

/// Complete weighted graph over agents; self-weights are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceGraph {
    kind: MetricKind,
    agent_ids: Vec<String>,
    weights: Vec<f64>,
}

impl DistanceGraph {
    /// Builds a graph from explicit symmetric weights in [0, 1].
    pub fn from_weights(kind: MetricKind, agent_ids: Vec<String>, weights: Vec<f64>) -> Result<Self> {
        let n = agent_ids.len();
        if weights.len() != n * n {
            return Err(Error::Validation("weight matrix has the wrong size".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[i * n + j];
                if !(0.0..=1.0).contains(&w) || w != weights[j * n + i] || (i == j && w != 0.0) {
                    return Err(Error::Validation(format!(
                        "weight ({i}, {j}) must be symmetric, in [0, 1], and 0 on the diagonal"
                    )));
                }
            }
        }
        Ok(DistanceGraph {
            kind,
            agent_ids,
            weights,
        })
    }

    pub fn kind(&self) -> MetricKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn agent_ids(&self) -> &[String] {
        &self.agent_ids
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n() + j]
    }

    /// Sorted distinct weights over pairs `i < j`.
    pub fn distinct_weights(&self) -> Vec<f64> {
        let n = self.n();
        let mut ws: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.weight(i, j))
            .collect();
        ws.sort_by(f64::total_cmp);
        ws.dedup();
        ws
    }
}

pub fn to_distance_graph(matrix: &CorrelationMatrix, kind: MetricKind) -> DistanceGraph {
    let n = matrix.n();
    let mut weights = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                weights[i * n + j] = kind.distance(matrix.get(i, j)).clamp(0.0, 1.0);
            }
        }
    }
    DistanceGraph {
        kind,
        agent_ids: matrix.agent_ids.clone(),
        weights,
    }
}

/// A distance graph restricted to edges of weight at most `epsilon`.
#[derive(Debug, Clone)]
pub struct FilteredGraph<'a> {
    source: &'a DistanceGraph,
    epsilon: f64,
    neighbors: Vec<Vec<usize>>,
    bits: Vec<Vec<u64>>,
}

impl<'a> FilteredGraph<'a> {
    pub fn source(&self) -> &'a DistanceGraph {
        self.source
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.bits[i][j / 64] & (1u64 << (j % 64)) != 0
    }

    /// Sorted neighbor list of `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Largest source weight among pairs of `vertices`.
    pub fn max_internal_weight(&self, vertices: &[usize]) -> f64 {
        let mut max = 0.0f64;
        for (a, &i) in vertices.iter().enumerate() {
            for &j in &vertices[a + 1..] {
                max = max.max(self.source.weight(i, j));
            }
        }
        max
    }
}

pub fn epsilon_filter(graph: &DistanceGraph, epsilon: f64) -> FilteredGraph<'_> {
    let n = graph.n();
    let words = n.div_ceil(64).max(1);
    let mut neighbors = vec![Vec::new(); n];
    let mut bits = vec![vec![0u64; words]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && graph.weight(i, j) <= epsilon {
                neighbors[i].push(j);
                bits[i][j / 64] |= 1u64 << (j % 64);
            }
        }
    }
    FilteredGraph {
        source: graph,
        epsilon,
        neighbors,
        bits,
    }
}

/// Pairwise-disjoint k-cliques.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CliquePacking {
    pub k: usize,
    pub cliques: Vec<Vec<usize>>,
}

impl CliquePacking {
    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }
}

/// Every k-clique of the graph, each as an ascending vertex list, in
/// lexicographic order.
///
/// Each clique is grown in increasing vertex order from its smallest member,
/// keeping as candidates only the later vertices adjacent to everything chosen
/// so far; branches that cannot reach size `k` are cut.
pub fn k_cliques(graph: &FilteredGraph<'_>, k: usize) -> Vec<Vec<usize>> {
    let n = graph.n();
    if k == 0 || k > n {
        return Vec::new();
    }
    let words = n.div_ceil(64);
    (0..n)
        .into_par_iter()
        .map(|root| {
            let mut found = Vec::new();
            let mut candidates = vec![0u64; words];
            for &j in graph.neighbors(root) {
                if j > root {
                    candidates[j / 64] |= 1u64 << (j % 64);
                }
            }
            let mut current = vec![root];
            extend_clique(graph, k, &mut current, &candidates, &mut found);
            found
        })
        .flatten()
        .collect()
}

fn extend_clique(
    graph: &FilteredGraph<'_>,
    k: usize,
    current: &mut Vec<usize>,
    candidates: &[u64],
    found: &mut Vec<Vec<usize>>,
) {
    if current.len() == k {
        found.push(current.clone());
        return;
    }
    let available: u32 = candidates.iter().map(|w| w.count_ones()).sum();
    if current.len() + (available as usize) < k {
        return;
    }
    for (w, &word) in candidates.iter().enumerate() {
        let mut word = word;
        while word != 0 {
            let bit = word.trailing_zeros() as usize;
            word &= word - 1;
            let v = w * 64 + bit;
            // Later candidates that are also adjacent to v.
            let next: Vec<u64> = candidates
                .iter()
                .zip(&graph.bits[v])
                .enumerate()
                .map(|(idx, (c, adj))| {
                    let mut m = c & adj;
                    if idx < w {
                        m = 0;
                    } else if idx == w {
                        m &= if bit == 63 { 0 } else { !0u64 << (bit + 1) };
                    }
                    m
                })
                .collect();
            current.push(v);
            extend_clique(graph, k, current, &next, found);
            current.pop();
        }
    }
}

/// Greedy disjoint packing of k-cliques.
///
/// Cliques are taken in ascending order of their largest internal weight,
/// ties broken by the lexicographic order of their vertex lists; a clique is
/// kept when it shares no vertex with those already kept. The result is
/// maximal for the greedy order, not necessarily maximum.
pub fn disjoint_cliques(graph: &FilteredGraph<'_>, k: usize) -> CliquePacking {
    let mut scored: Vec<(f64, Vec<usize>)> = k_cliques(graph, k)
        .into_iter()
        .map(|c| (graph.max_internal_weight(&c), c))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let mut used = vec![false; graph.n()];
    let mut cliques = Vec::new();
    for (_, clique) in scored {
        if clique.iter().all(|&v| !used[v]) {
            for &v in &clique {
                used[v] = true;
            }
            cliques.push(clique);
        }
    }
    CliquePacking { k, cliques }
}

/// Smallest filter threshold giving at least `n_coal` disjoint k-cliques,
/// with the packing found at that threshold.
///
/// Only observed edge weights are candidate thresholds. The packing count is
/// non-decreasing in ε under the greedy order (cliques enabled by a larger
/// threshold always sort after the existing ones), so a binary search over the
/// sorted weights finds the minimum; the result is re-checked against the next
/// smaller weight and a linear scan is used should that check ever fail.
pub fn epsilon_star(graph: &DistanceGraph, k: usize, n_coal: usize) -> Result<(f64, CliquePacking)> {
    let infeasible = || Error::Infeasible {
        k,
        n_coal,
        n_agents: graph.n(),
    };
    if k < 2 || n_coal == 0 {
        return Err(Error::Validation(
            "clique size must be at least 2 and coalition count at least 1".into(),
        ));
    }
    if k.checked_mul(n_coal).is_none_or(|need| need > graph.n()) {
        return Err(infeasible());
    }
    let candidates = graph.distinct_weights();
    let packing_at = |eps: f64| disjoint_cliques(&epsilon_filter(graph, eps), k);
    let feasible = |p: &CliquePacking| p.len() >= n_coal;

    let last = *candidates.last().ok_or_else(infeasible)?;
    let top = packing_at(last);
    if !feasible(&top) {
        return Err(infeasible());
    }

    // Invariant: candidates[hi] is feasible; everything below lo is not.
    let (mut lo, mut hi) = (0usize, candidates.len() - 1);
    let mut best = top;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let packing = packing_at(candidates[mid]);
        if feasible(&packing) {
            hi = mid;
            best = packing;
        } else {
            lo = mid + 1;
        }
    }
    if hi > 0 && feasible(&packing_at(candidates[hi - 1])) {
        return linear_epsilon_star(graph, k, n_coal, &candidates).ok_or_else(infeasible);
    }
    Ok((candidates[hi], best))
}

fn linear_epsilon_star(
    graph: &DistanceGraph,
    k: usize,
    n_coal: usize,
    candidates: &[f64],
) -> Option<(f64, CliquePacking)> {
    candidates.iter().find_map(|&eps| {
        let packing = disjoint_cliques(&epsilon_filter(graph, eps), k);
        (packing.len() >= n_coal).then_some((eps, packing))
    })
}

/// Writes `i,j,rho` rows for all pairs `i < j`, using agent ids.
pub fn write_matrix_csv<W: Write>(matrix: &CorrelationMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["i", "j", "rho"])?;
    let ids = matrix.agent_ids();
    for i in 0..matrix.n() {
        for j in i + 1..matrix.n() {
            wtr.write_record([ids[i].as_str(), ids[j].as_str(), &matrix.get(i, j).to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `i,j,weight` rows for the edges of a filtered graph.
pub fn write_edge_list_csv<W: Write>(graph: &FilteredGraph<'_>, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["i", "j", "weight"])?;
    let ids = graph.source().agent_ids();
    for (i, j) in graph.edges() {
        wtr.write_record([
            ids[i].as_str(),
            ids[j].as_str(),
            &graph.source().weight(i, j).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("v{i}")).collect()
    }

    /// Distance graph whose listed pairs get `low` and all others `high`.
    fn graph_with_edges(n: usize, edges: &[(usize, usize)], low: f64, high: f64) -> DistanceGraph {
        let mut w = vec![high; n * n];
        for i in 0..n {
            w[i * n + i] = 0.0;
        }
        for &(i, j) in edges {
            w[i * n + j] = low;
            w[j * n + i] = low;
        }
        DistanceGraph::from_weights(MetricKind::DecorrelationD2, ids(n), w).unwrap()
    }

    fn trace(id: &str, values: Vec<f64>) -> ProductionTrace {
        ProductionTrace::new(id, values)
    }

    #[test]
    fn pearson_reference_values() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let m = correlation_matrix(&[
            trace("x", x.clone()),
            trace("y", vec![1.0, 2.0, 3.0, 5.0]),
            trace("neg", x.iter().map(|v| -v).collect()),
            trace("self", x.clone()),
        ])
        .unwrap();
        assert!((m.get(0, 1) - 0.98271).abs() < 1e-5);
        assert_eq!(m.get(0, 2), -1.0);
        assert_eq!(m.get(0, 3), 1.0);
        assert_eq!(m.get(2, 2), 1.0);
        assert_eq!(m.get(1, 0), m.get(0, 1));
    }

    #[test]
    fn zero_variance_names_agent() {
        let err =
            correlation_matrix(&[trace("ok", vec![1.0, 2.0, 3.0]), trace("flat", vec![2.0, 2.0, 2.0])]).unwrap_err();
        match err {
            Error::DegenerateSeries { agent } => assert_eq!(agent, "flat"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_traces_or_samples() {
        assert!(correlation_matrix(&[trace("a", vec![1.0, 2.0, 3.0])]).is_err());
        assert!(correlation_matrix(&[trace("a", vec![1.0, 2.0]), trace("b", vec![2.0, 1.0])]).is_err());
    }

    #[test]
    fn metric_values() {
        let m = CorrelationMatrix::from_entries(
            ids(4),
            vec![
                1.0, 0.6, 1.0, 0.0, //
                0.6, 1.0, 0.0, -1.0, //
                1.0, 0.0, 1.0, 0.0, //
                0.0, -1.0, 0.0, 1.0,
            ],
        )
        .unwrap();
        let d1 = to_distance_graph(&m, MetricKind::CorrelationD1);
        let d2 = to_distance_graph(&m, MetricKind::DecorrelationD2);
        assert!((d1.weight(0, 1) - 0.64).abs() < 1e-12);
        assert!((d2.weight(0, 1) - 0.36).abs() < 1e-12);
        assert_eq!(d1.weight(0, 2), 0.0);
        assert_eq!(d1.weight(1, 3), 0.0);
        assert_eq!(d2.weight(0, 3), 0.0);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(d1.weight(i, j) + d2.weight(i, j), 1.0);
                }
            }
        }
    }

    #[test]
    fn filter_thresholds() {
        let n = 3;
        let w = vec![0.0, 0.1, 0.5, 0.1, 0.0, 0.9, 0.5, 0.9, 0.0];
        let g = DistanceGraph::from_weights(MetricKind::DecorrelationD2, ids(n), w).unwrap();
        assert_eq!(epsilon_filter(&g, 0.5).edge_count(), 2);
        assert_eq!(epsilon_filter(&g, 1.0).edge_count(), 3);
        assert_eq!(epsilon_filter(&g, 0.0).edge_count(), 0);
        let mut w0 = vec![0.3; 9];
        w0[0] = 0.0;
        w0[4] = 0.0;
        w0[8] = 0.0;
        w0[1] = 0.0;
        w0[3] = 0.0;
        let g0 = DistanceGraph::from_weights(MetricKind::DecorrelationD2, ids(3), w0).unwrap();
        let f0 = epsilon_filter(&g0, 0.0);
        assert_eq!(f0.edges().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn clique_packing_examples() {
        let triangle = graph_with_edges(3, &[(0, 1), (1, 2), (0, 2)], 0.1, 0.9);
        assert_eq!(
            disjoint_cliques(&epsilon_filter(&triangle, 0.5), 3).cliques,
            vec![vec![0, 1, 2]]
        );

        let two = graph_with_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], 0.1, 0.9);
        assert_eq!(disjoint_cliques(&epsilon_filter(&two, 0.5), 3).len(), 2);

        let path = graph_with_edges(4, &[(0, 1), (1, 2), (2, 3)], 0.1, 0.9);
        assert!(disjoint_cliques(&epsilon_filter(&path, 0.5), 3).is_empty());
    }

    #[test]
    fn packing_prefers_low_weight_cliques() {
        // Two overlapping triangles; the lighter one wins.
        let n = 4;
        let mut w = vec![0.9; n * n];
        for i in 0..n {
            w[i * n + i] = 0.0;
        }
        let mut set = |i: usize, j: usize, v: f64| {
            w[i * n + j] = v;
            w[j * n + i] = v;
        };
        set(0, 1, 0.2);
        set(1, 2, 0.2);
        set(0, 2, 0.2);
        set(1, 3, 0.1);
        set(2, 3, 0.1);
        set(0, 3, 0.3);
        let g = DistanceGraph::from_weights(MetricKind::DecorrelationD2, ids(n), w).unwrap();
        let p = disjoint_cliques(&epsilon_filter(&g, 0.5), 3);
        assert_eq!(p.cliques, vec![vec![0, 1, 2]]);
    }

    #[test]
    fn epsilon_star_examples() {
        // n = 2k with all weights equal: the only threshold is that weight.
        let k = 3;
        let n = 2 * k;
        let mut w = vec![0.42; n * n];
        for i in 0..n {
            w[i * n + i] = 0.0;
        }
        let g = DistanceGraph::from_weights(MetricKind::DecorrelationD2, ids(n), w).unwrap();
        let (eps, packing) = epsilon_star(&g, k, 2).unwrap();
        assert_eq!(eps, 0.42);
        assert_eq!(packing.len(), 2);

        assert!(matches!(epsilon_star(&g, k, 3), Err(Error::Infeasible { .. })));
        let path = graph_with_edges(4, &[(0, 1), (1, 2), (2, 3)], 0.1, 1.0);
        // At ε = 1 the graph is complete, so one triangle exists.
        assert_eq!(epsilon_star(&path, 3, 1).unwrap().0, 1.0);
    }

    fn random_graph(n: usize, seed: u64) -> DistanceGraph {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                // Coarse grid so ties between weights are common.
                let v = (rng.random_range(0..=20) as f64) / 20.0;
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        DistanceGraph::from_weights(MetricKind::DecorrelationD2, ids(n), w).unwrap()
    }

    /// Brute force: every k-subset that is pairwise adjacent.
    fn brute_cliques(g: &FilteredGraph<'_>, k: usize) -> Vec<Vec<usize>> {
        fn rec(g: &FilteredGraph<'_>, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for v in start..g.n() {
                if cur.iter().all(|&u| g.has_edge(u, v)) {
                    cur.push(v);
                    rec(g, k, v + 1, cur, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(g, k, 0, &mut Vec::new(), &mut out);
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn clique_enumeration_matches_brute_force(n in 3usize..14, k in 2usize..5, seed in 0u64..1000, eps in 0.0f64..1.0) {
            let g = random_graph(n, seed);
            let f = epsilon_filter(&g, eps);
            prop_assert_eq!(k_cliques(&f, k), brute_cliques(&f, k));
        }

        #[test]
        fn filter_is_monotone(n in 2usize..20, seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let g = random_graph(n, seed);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let small = epsilon_filter(&g, lo);
            let large = epsilon_filter(&g, hi);
            for (i, j) in small.edges() {
                prop_assert!(large.has_edge(i, j));
            }
            for (i, j) in large.edges() {
                prop_assert_eq!(small.has_edge(i, j), g.weight(i, j) <= lo);
            }
        }

        #[test]
        fn packing_is_disjoint_and_complete(n in 3usize..25, k in 2usize..5, seed in 0u64..1000, eps in 0.0f64..1.0) {
            let g = random_graph(n, seed);
            let f = epsilon_filter(&g, eps);
            let p = disjoint_cliques(&f, k);
            let mut seen = std::collections::HashSet::new();
            for c in &p.cliques {
                prop_assert_eq!(c.len(), k);
                prop_assert!(f.max_internal_weight(c) <= eps);
                for &v in c {
                    prop_assert!(seen.insert(v));
                }
            }
        }
    }

    #[test]
    fn epsilon_star_matches_linear_scan() {
        for seed in 0..30u64 {
            let n = 6 + (seed as usize % 20);
            let g = random_graph(n, seed);
            for (k, n_coal) in [(2, 2), (3, 2), (3, 1), (2, 4)] {
                let candidates = g.distinct_weights();
                let oracle = linear_epsilon_star(&g, k, n_coal, &candidates);
                match epsilon_star(&g, k, n_coal) {
                    Ok((eps, packing)) => {
                        let (e2, p2) = oracle.expect("oracle must agree on feasibility");
                        assert_eq!(eps, e2);
                        assert_eq!(packing, p2);
                    }
                    Err(_) => assert!(oracle.is_none()),
                }
            }
        }
    }

    #[test]
    fn dumps_have_expected_shape() {
        let g = graph_with_edges(3, &[(0, 1)], 0.1, 0.9);
        let mut buf = Vec::new();
        write_edge_list_csv(&epsilon_filter(&g, 0.5), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,j,weight\nv0,v1,0.1\n");
    }
}

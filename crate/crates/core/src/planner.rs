//! Online high-level controller: zone localization, episode-local graph
//! adaptation, target-zone choice, max-product sub-goal planning and the
//! graph feature read out of the GCN.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::encoder::cosine;
use crate::error::{Error, Result};
use crate::graph::kmeans::sq_dist;
use crate::graph::KnowledgeGraph;
use crate::nn::{normalize_adjacency, GcnCache, PolicyParams};

/// Episode-local view of a knowledge graph.
#[derive(Clone, Debug)]
pub struct GraphState {
    base: Arc<KnowledgeGraph>,
    adjacency: Arc<Vec<f64>>,
    /// Adapted node features, `zones × dim`.
    pub adapted: Vec<f64>,
    /// Blend weight in `[0, 1]`.
    pub lambda: f64,
}

impl GraphState {
    pub fn new(base: Arc<KnowledgeGraph>, lambda: f64) -> Result<Self> {
        let adjacency = Arc::new(normalize_adjacency(&base.edges, base.zones)?);
        Ok(GraphState {
            adapted: base.nodes.clone(),
            base,
            adjacency,
            lambda,
        })
    }

    pub fn base(&self) -> &KnowledgeGraph {
        &self.base
    }

    pub fn adjacency(&self) -> &[f64] {
        &self.adjacency
    }

    pub fn zones(&self) -> usize {
        self.base.zones
    }

    pub fn dim(&self) -> usize {
        self.base.dim
    }

    pub fn adapted_row(&self, m: usize) -> &[f64] {
        &self.adapted[m * self.dim()..(m + 1) * self.dim()]
    }

    /// Restores the adapted nodes to the base graph (new episode).
    pub fn reset(&mut self) {
        self.adapted.copy_from_slice(&self.base.nodes);
    }
}

/// Nearest adapted node by Euclidean distance; ties to the lowest id.
pub fn locate_current_zone(state: &GraphState, f_obs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for m in 0..state.zones() {
        let d = sq_dist(state.adapted_row(m), f_obs);
        if d < best_d {
            best_d = d;
            best = m;
        }
    }
    best
}

/// Row `zone` becomes `λ·f_obs + (1−λ)·row`; other rows are untouched.
/// Returns the row as it was before the update.
pub fn adapt_graph(state: &mut GraphState, f_obs: &[f64], zone: usize) -> Result<Vec<f64>> {
    if zone >= state.zones() {
        return Err(Error::Usage(format!("zone {zone} out of range")));
    }
    if f_obs.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            found: f_obs.len(),
        });
    }
    let lambda = state.lambda;
    let dim = state.dim();
    let row = &mut state.adapted[zone * dim..(zone + 1) * dim];
    let old = row.to_vec();
    for (r, f) in row.iter_mut().zip(f_obs) {
        *r = lambda * f + (1.0 - lambda) * *r;
    }
    Ok(old)
}

/// Zone of the base graph most similar (cosine) to the goal; ties to the
/// lowest id.
pub fn target_zone(state: &GraphState, goal: &[f64]) -> usize {
    let base = state.base();
    let mut best = 0;
    let mut best_s = f64::NEG_INFINITY;
    for m in 0..base.zones {
        let s = cosine(base.node(m), goal);
        if s > best_s {
            best_s = s;
            best = m;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub current: usize,
    pub target: usize,
    pub subgoal: usize,
    pub path_prob: f64,
    pub reachable: bool,
    /// Zones from `current` to `target` inclusive; empty when unreachable.
    pub path: Vec<usize>,
}

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then on node id
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Maximum edge-product path from `current` to `target` via Dijkstra on
/// `−ln e` over positive edges.
pub fn plan_subgoal(graph: &KnowledgeGraph, current: usize, target: usize) -> PlanResult {
    let zones = graph.zones;
    assert!(current < zones && target < zones, "zone id out of range");
    if current == target {
        return PlanResult {
            current,
            target,
            subgoal: target,
            path_prob: 1.0,
            reachable: true,
            path: vec![target],
        };
    }
    let mut dist = vec![f64::INFINITY; zones];
    let mut prev = vec![usize::MAX; zones];
    let mut done = vec![false; zones];
    let mut heap = BinaryHeap::new();
    dist[current] = 0.0;
    heap.push(Entry {
        cost: 0.0,
        node: current,
    });
    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        if node == target {
            break;
        }
        for next in 0..zones {
            let e = graph.edge(node, next);
            if next == node || e <= 0.0 || done[next] {
                continue;
            }
            let c = cost - e.ln();
            if c < dist[next] {
                dist[next] = c;
                prev[next] = node;
                heap.push(Entry {
                    cost: c,
                    node: next,
                });
            }
        }
    }
    if !dist[target].is_finite() {
        return PlanResult {
            current,
            target,
            subgoal: current,
            path_prob: 0.0,
            reachable: false,
            path: Vec::new(),
        };
    }
    let mut path = vec![target];
    while *path.last().unwrap() != current {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    let path_prob = path.windows(2).map(|w| graph.edge(w[0], w[1])).product();
    PlanResult {
        current,
        target,
        subgoal: path[1],
        path_prob,
        reachable: true,
        path,
    }
}

/// Runs the GCN over the adapted graph and returns the sub-goal row along
/// with the cache needed for backpropagation.
pub fn graph_feature(
    params: &PolicyParams,
    state: &GraphState,
    subgoal: usize,
) -> Result<(Vec<f64>, GcnCache)> {
    if params.shape.node != state.dim() {
        return Err(Error::Usage(format!(
            "GCN width {} does not match graph node width {}",
            params.shape.node,
            state.dim()
        )));
    }
    if subgoal >= state.zones() {
        return Err(Error::Usage(format!("sub-goal {subgoal} out of range")));
    }
    let cache = params.gcn(&state.adapted, state.adjacency(), state.zones())?;
    Ok((cache.out_row(subgoal).to_vec(), cache))
}

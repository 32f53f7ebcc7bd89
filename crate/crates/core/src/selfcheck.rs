//! Embedded oracle suite: closed-form algebra, brute-force cross-checks of
//! the graph pipeline, planner and matcher, and finite-difference gradient
//! checks. Each check returns a [`CheckResult`] instead of panicking so the
//! CLI and the acceptance harness can report every outcome.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::categories::GOAL_CATEGORIES;
use crate::encoder::{cosine, EmbeddingProvider};
use crate::graph::hungarian::min_cost_assignment;
use crate::graph::{
    build_category_graph, build_room_graph, cluster_zones, match_graphs, matching_objective,
    position_feature, sweep_position_features, KnowledgeGraph, PositionFeature, PositionFeatureMap,
    ZoneAssignment, DEFAULT_EPSILON,
};
use crate::nn::{
    actor_critic, actor_critic_backward, gcn_backward_row, gcn_forward, recurrent_backward,
};
use crate::nn::{recurrent_step, CellState, ModelShape, PolicyParams, Tensor};
use crate::oracle;
use crate::planner::{adapt_graph, plan_subgoal, GraphState};
use crate::seed::rng_for;
use crate::sim::SceneSize;
use crate::sim::{
    generate_scene, reset_episode, HeightBand, LayoutTable, ObjectInstance, RoomCategory, Scene,
};
use crate::train::{
    discounted_returns, replay_gradients, ActionSelection, EpisodeRunner, InputMask, TrainConfig,
};

/// Relative error bound for finite-difference checks.
pub const GRAD_TOLERANCE: f64 = 1e-4;
const FD_STEP: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckResult {
            name,
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn graph_from(nodes: Vec<f64>, edges: Vec<f64>, zones: usize, dim: usize) -> KnowledgeGraph {
    KnowledgeGraph {
        zones,
        dim,
        room: RoomCategory::Kitchen,
        nodes,
        edges,
    }
}

fn feature_map(cells: &[((usize, usize), Vec<f64>)]) -> PositionFeatureMap {
    PositionFeatureMap {
        dim: cells[0].1.len(),
        entries: cells
            .iter()
            .map(|(p, f)| {
                (
                    *p,
                    PositionFeature {
                        feature: f.clone(),
                        detections: 1,
                    },
                )
            })
            .collect(),
    }
}

fn assignment(cells: &[((usize, usize), usize)], zones: usize) -> ZoneAssignment {
    ZoneAssignment {
        positions: cells.iter().map(|c| c.0).collect(),
        zone_of: cells.iter().map(|c| c.1).collect(),
        centers: vec![Vec::new(); zones],
        requested: zones,
    }
}

/// Hand cases for the position feature, zone means, edge probabilities and
/// the row update, each against values worked out by hand.
pub fn equation_algebra() -> CheckResult {
    let tol = 1e-12;
    let mut failures = Vec::new();
    let provider = EmbeddingProvider::synthetic(0, 6);
    let emb = |c: &str| provider.object_embedding(c).unwrap().into_vec();
    let (a, b) = (emb("Kettle"), emb("Bowl"));

    // one view sees {A}, another {A, B}: (2A + B) / 3 over 3 detections
    let f = position_feature(&provider, &[vec!["Kettle"], vec!["Kettle", "Bowl"]]).unwrap();
    let want: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (2.0 * x + y) / 3.0).collect();
    if f.detections != 3 || !close(&f.feature, &want, tol) {
        failures.push("feature: two views".to_string());
    }
    // repeats within a view count once; non-goal names are ignored
    let f = position_feature(&provider, &[vec!["Kettle", "Kettle", "Doorway"], vec![]]).unwrap();
    if f.detections != 1 || !close(&f.feature, &a, tol) {
        failures.push("feature: repeats".to_string());
    }
    let f = position_feature(&provider, &[vec![], vec!["Doorway"]]).unwrap();
    if f.detections != 0 || f.feature.iter().any(|&v| v != 0.0) {
        failures.push("feature: nothing seen".to_string());
    }

    // zone means and edges on a 1-row strip
    let cells = [
        ((0, 0), vec![1.0, 0.0]),
        ((1, 0), vec![0.0, 1.0]),
        ((3, 0), vec![2.0, 2.0]),
        ((0, 2), vec![4.0, -2.0]),
    ];
    let features = feature_map(&cells);
    let edge_case = |labels: &[((usize, usize), usize)], zones: usize| {
        let g = build_room_graph(
            &assignment(labels, zones),
            &features,
            DEFAULT_EPSILON,
            RoomCategory::Kitchen,
        );
        g.map_err(|e| e.to_string())
    };
    match edge_case(&[((0, 0), 0), ((1, 0), 0), ((3, 0), 1), ((0, 2), 1)], 2) {
        Ok(g) => {
            if !close(g.node(0), &[0.5, 0.5], tol) || !close(g.node(1), &[3.0, 0.0], tol) {
                failures.push("zone means".to_string());
            }
        }
        Err(e) => failures.push(format!("zone means: {e}")),
    }
    let edge_cases: [(&str, [usize; 4], f64); 3] = [
        // (0,0) against (1,0): one step apart
        ("adjacent", [0, 1, 2, 2], 1.0),
        // (0,0) against (3,0): three steps apart
        ("far", [0, 2, 1, 2], 0.0),
        // {(0,0), (0,2)} against (1,0): one near pair out of two
        ("mixed", [0, 1, 2, 0], 0.5),
    ];
    for (name, labels, want) in edge_cases {
        let cells: Vec<((usize, usize), usize)> = cells.iter().map(|c| c.0).zip(labels).collect();
        match edge_case(&cells, 3) {
            Ok(g) => {
                let e = g.edge(0, 1);
                if (e - want).abs() > tol || g.edge(1, 0) != e {
                    failures.push(format!("edge {name}: {e} != {want}"));
                }
            }
            Err(e) => failures.push(format!("edge {name}: {e}")),
        }
    }

    // row update
    let nodes = vec![1.0, 2.0, -0.5, 0.25];
    let base = Arc::new(graph_from(nodes.clone(), vec![1.0, 0.5, 0.5, 1.0], 2, 2));
    let f_obs = [3.0, -1.0];
    for lambda in [0.0, 0.3, 1.0] {
        let mut state = GraphState::new(base.clone(), lambda).unwrap();
        adapt_graph(&mut state, &f_obs, 0).unwrap();
        let want = [
            lambda * 3.0 + (1.0 - lambda) * 1.0,
            lambda * -1.0 + (1.0 - lambda) * 2.0,
        ];
        if !close(state.adapted_row(0), &want, tol) || state.adapted_row(1) != &nodes[2..] {
            failures.push(format!("row update at λ={lambda}"));
        }
    }

    let passed = failures.is_empty();
    let detail = if passed {
        "3 feature cases, zone means, 3 edge cases, 3 row updates".to_string()
    } else {
        failures.join("; ")
    };
    CheckResult::new("equation_algebra", passed, detail)
}

/// Random 3×3 scene: 4–7 reachable cells, 1–4 objects on blocked cells.
fn micro_scene(rng: &mut ChaCha8Rng, id: usize) -> Scene {
    let bands = [HeightBand::Low, HeightBand::Mid, HeightBand::High];
    loop {
        let reachable: Vec<bool> = (0..9).map(|_| rng.random_bool(0.65)).collect();
        let open = reachable.iter().filter(|&&r| r).count();
        let blocked: Vec<usize> = (0..9).filter(|&i| !reachable[i]).collect();
        if !(4..=7).contains(&open) {
            continue;
        }
        let count = rng.random_range(1..=blocked.len().min(4));
        let objects = (0..count)
            .map(|_| {
                let i = blocked[rng.random_range(0..blocked.len())];
                ObjectInstance {
                    category: GOAL_CATEGORIES[rng.random_range(0..4)].to_string(),
                    cx: i % 3,
                    cz: i / 3,
                    band: bands[rng.random_range(0..3)],
                }
            })
            .collect();
        return Scene {
            id: format!("micro-{id}"),
            room: RoomCategory::Kitchen,
            width: 3,
            depth: 3,
            reachable,
            objects,
            seed: id as u64,
        };
    }
}

/// Compares one micro-scene's sweep, clustering and graph with the oracle.
fn check_micro_scene(scene: &Scene, provider: &EmbeddingProvider) -> Result<(), String> {
    let tol = 1e-9;
    let swept = sweep_position_features(scene, provider).map_err(|e| e.to_string())?;
    let reference = oracle::position_features(scene, provider).map_err(|e| e.to_string())?;
    if swept.entries.len() != reference.len() {
        return Err("swept cell count differs".into());
    }
    for (cell, (feat, count)) in &reference {
        let got = &swept.entries[cell];
        if got.detections != *count || !close(&got.feature, feat, tol) {
            return Err(format!("feature mismatch at {cell:?}"));
        }
    }
    let assign = cluster_zones(&swept, 2, 0).map_err(|e| e.to_string())?;
    let cells: Vec<(usize, usize)> = reference.keys().copied().collect();
    let points: Vec<Vec<f64>> = reference.values().map(|v| v.0.clone()).collect();
    let by_cell: BTreeMap<(usize, usize), usize> = assign
        .positions
        .iter()
        .copied()
        .zip(assign.zone_of.iter().copied())
        .collect();
    let labels: Vec<usize> = cells.iter().map(|c| by_cell[c]).collect();
    let (_, winners) = oracle::best_partitions(&points, 2, 1e-9);
    if !winners.contains(&oracle::canonical_labels(&labels)) {
        return Err(format!("assignment {labels:?} is not an optimal partition"));
    }
    let graph = build_room_graph(&assign, &swept, DEFAULT_EPSILON, scene.room)
        .map_err(|e| e.to_string())?;
    let (nodes, edges) = oracle::room_graph(&cells, &points, &labels, 2, DEFAULT_EPSILON);
    for m in 0..2 {
        if !close(graph.node(m), &nodes[m], tol) {
            return Err(format!("node {m} differs"));
        }
        for n in 0..2 {
            if (graph.edge(m, n) - edges[m][n]).abs() > tol {
                return Err(format!("edge ({m},{n}) differs"));
            }
        }
    }
    Ok(())
}

/// True when some feature differs from the first by more than round-off;
/// equal means reached through different multiplicities differ by an ulp.
fn distinct_features(scene: &Scene, provider: &EmbeddingProvider) -> bool {
    let swept = sweep_position_features(scene, provider).unwrap();
    let mut it = swept.entries.values();
    let first = it.next().map(|e| e.feature.clone()).unwrap_or_default();
    it.any(|e| !close(&e.feature, &first, 1e-9))
}

/// Sweep, two-zone clustering and graph construction on random micro-scenes
/// against the brute-force recomputation.
pub fn pipeline_vs_oracle(scenes: usize, seed: u64) -> CheckResult {
    let provider = EmbeddingProvider::synthetic(seed, 8);
    let mut rng = rng_for(seed, &[b"selfcheck-micro"]);
    let mut failures = Vec::new();
    let mut done = 0;
    let mut id = 0;
    while done < scenes {
        let scene = micro_scene(&mut rng, id);
        id += 1;
        // two zones need two separable features
        if !distinct_features(&scene, &provider) {
            continue;
        }
        if let Err(e) = check_micro_scene(&scene, &provider) {
            failures.push(format!("{}: {e}", scene.id));
        }
        done += 1;
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("{scenes} micro-scenes match")
    } else {
        format!(
            "{}/{scenes} differ: {}",
            failures.len(),
            failures.join("; ")
        )
    };
    CheckResult::new("pipeline_vs_oracle", passed, detail)
}

/// Symmetric edge matrix with unit diagonal; about a third of the pairs
/// are disconnected.
fn random_edges(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut e = vec![0.0; m * m];
    for i in 0..m {
        e[i * m + i] = 1.0;
        for j in i + 1..m {
            let v = if rng.random_bool(0.35) {
                0.0
            } else {
                rng.random_range(0.01..=1.0)
            };
            e[i * m + j] = v;
            e[j * m + i] = v;
        }
    }
    e
}

struct PlannerCase {
    edges: Vec<f64>,
    m: usize,
    from: usize,
    to: usize,
}

fn planner_cases(count: usize, seed: u64) -> Vec<PlannerCase> {
    let mut rng = rng_for(seed, &[b"selfcheck-planner"]);
    (0..count)
        .map(|_| {
            let m = rng.random_range(2..=6);
            PlannerCase {
                edges: random_edges(&mut rng, m),
                m,
                from: rng.random_range(0..m),
                to: rng.random_range(0..m),
            }
        })
        .collect()
}

fn plan(edges: &[f64], m: usize, from: usize, to: usize) -> crate::planner::PlanResult {
    plan_subgoal(&graph_from(vec![0.0; m], edges.to_vec(), m, 1), from, to)
}

/// Max-product paths against exhaustive simple-path enumeration.
pub fn planner_enumeration(count: usize, seed: u64) -> CheckResult {
    let mut failures = Vec::new();
    for (k, c) in planner_cases(count, seed).iter().enumerate() {
        let got = plan(&c.edges, c.m, c.from, c.to);
        match oracle::best_simple_path(&c.edges, c.m, c.from, c.to, 1e-12) {
            None => {
                if got.reachable {
                    failures.push(format!("case {k}: planner found a path where none exists"));
                }
            }
            Some((best, firsts)) => {
                if !got.reachable
                    || (got.path_prob - best).abs() > 1e-12
                    || !firsts.contains(&got.subgoal)
                {
                    failures.push(format!("case {k}: {} vs {best}", got.path_prob));
                }
            }
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("{count} graphs, M ≤ 6")
    } else {
        failures.join("; ")
    };
    CheckResult::new("planner_enumeration", passed, detail)
}

/// Multiplies every off-diagonal edge by `c` and reports how often the
/// chosen sub-goal moves. Uniform scaling penalizes each hop by the same
/// factor, so it favors shorter paths and can flip the choice.
pub fn planner_scaling_invariance(count: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[b"selfcheck-scaling"]);
    let mut changed = Vec::new();
    for (k, c) in planner_cases(count, seed).iter().enumerate() {
        let before = plan(&c.edges, c.m, c.from, c.to).subgoal;
        let scale: f64 = rng.random_range(f64::EPSILON..=1.0);
        let scaled: Vec<f64> = (0..c.m * c.m)
            .map(|i| {
                if i / c.m == i % c.m {
                    1.0
                } else {
                    c.edges[i] * scale
                }
            })
            .collect();
        let after = plan(&scaled, c.m, c.from, c.to).subgoal;
        if after != before {
            changed.push(format!("case {k} (c={scale:.3}): {before} -> {after}"));
        }
    }
    let passed = changed.is_empty();
    let detail = if passed {
        format!("{count} graphs, sub-goal unchanged")
    } else {
        let shown: Vec<&str> = changed.iter().take(3).map(String::as_str).collect();
        format!(
            "sub-goal changed in {}/{count} graphs, e.g. {}",
            changed.len(),
            shown.join("; ")
        )
    };
    CheckResult::new("planner_scaling_invariance", passed, detail)
}

/// Raising every edge to a power `p > 0` scales every path's `−ln` cost by
/// `p`, so the optimal first hops cannot change.
pub fn planner_power_invariance(count: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[b"selfcheck-power"]);
    let mut failures = Vec::new();
    for (k, c) in planner_cases(count, seed).iter().enumerate() {
        let p: f64 = rng.random_range(0.2..=3.0);
        let powered: Vec<f64> = c.edges.iter().map(|e| e.powf(p)).collect();
        let after = plan(&powered, c.m, c.from, c.to);
        if let Some((_, firsts)) = oracle::best_simple_path(&c.edges, c.m, c.from, c.to, 1e-9) {
            if !firsts.contains(&after.subgoal) {
                failures.push(format!("case {k} (p={p:.3})"));
            }
        } else if after.reachable {
            failures.push(format!("case {k}: became reachable"));
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("{count} graphs")
    } else {
        failures.join("; ")
    };
    CheckResult::new("planner_power_invariance", passed, detail)
}

/// Kuhn–Munkres objective against all `M!` assignments.
pub fn kuhn_munkres(count: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[b"selfcheck-hungarian"]);
    let mut failures = Vec::new();
    for k in 0..count {
        let m = rng.random_range(1..=5);
        let cost: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let perm = min_cost_assignment(&cost);
        let mut seen = vec![false; m];
        let valid = perm.len() == m
            && perm
                .iter()
                .all(|&p| p < m && !std::mem::replace(&mut seen[p], true));
        let got: f64 = if valid {
            (0..m).map(|r| cost[r][perm[r]]).sum()
        } else {
            f64::NAN
        };
        let (best, _) = oracle::brute_force_assignment(&cost);
        if !((got - best).abs() <= 1e-12) {
            failures.push(format!("case {k}: {got} vs {best}"));
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("{count} instances, M ≤ 5")
    } else {
        failures.join("; ")
    };
    CheckResult::new("kuhn_munkres", passed, detail)
}

/// Random nodes whose cross cosines all stay at least `gap` below 1.
fn separated_nodes(rng: &mut ChaCha8Rng, m: usize, dim: usize, gap: f64) -> Vec<Vec<f64>> {
    loop {
        let nodes: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ok =
            (0..m).all(|i| (0..m).all(|j| i == j || cosine(&nodes[i], &nodes[j]) <= 1.0 - gap));
        if ok {
            return nodes;
        }
    }
}

/// A graph shuffled by a random permutation is matched back to the
/// original when node cosines are separated by at least 0.1.
pub fn permuted_recovery(count: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[b"selfcheck-recovery"]);
    let mut failures = Vec::new();
    for k in 0..count {
        let m = rng.random_range(1..=5);
        let dim = rng.random_range(2..=6);
        let nodes = separated_nodes(&mut rng, m, dim, 0.1);
        let a = graph_from(nodes.concat(), random_edges(&mut rng, m), m, dim);
        let mut shuffle: Vec<usize> = (0..m).collect();
        for i in (1..m).rev() {
            shuffle.swap(i, rng.random_range(0..=i));
        }
        let b = a.permuted(&shuffle);
        let ok = match match_graphs(&a, &b) {
            Ok(perm) => {
                let aligned = b.permuted(&perm);
                (aligned.nodes == a.nodes && aligned.edges == a.edges)
                    && (matching_objective(&a, &b, &perm) - m as f64).abs() < 1e-9
            }
            Err(_) => false,
        };
        if !ok {
            failures.push(format!("case {k}"));
        }
    }
    let passed = failures.is_empty();
    let detail = if passed {
        format!("{count} shuffled graphs recovered")
    } else {
        failures.join("; ")
    };
    CheckResult::new("permuted_recovery", passed, detail)
}

/// Worst relative error between `analytic` and central differences of
/// `loss` over `x`, and the number of entries compared.
fn fd_compare(mut loss: impl FnMut(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> (f64, usize) {
    let numeric = oracle::central_difference(&mut loss, x, FD_STEP);
    let worst = numeric
        .iter()
        .zip(analytic)
        .map(|(n, a)| oracle::relative_error(*n, *a, FD_FLOOR))
        .fold(0.0, f64::max);
    (worst, x.len())
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, random_vec(rng, n, bound)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradient_result(
    name: &'static str,
    instances: usize,
    worst: f64,
    entries: usize,
) -> CheckResult {
    CheckResult::new(
        name,
        worst < GRAD_TOLERANCE,
        format!("{instances} instances, {entries} entries, worst relative error {worst:.2e}"),
    )
}

/// GCN: loss `⟨out[row], g⟩` with respect to both weights and the nodes.
pub fn gradient_gcn(instances: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[b"selfcheck-gcn"]);
    let (mut worst, mut entries) = (0.0f64, 0);
    for _ in 0..instances {
        let zones = rng.random_range(2..=5);
        let dim = rng.random_range(2..=5);
        let adj = crate::nn::normalize_adjacency(&random_edges(&mut rng, zones), zones).unwrap();
        let w1 = random_tensor(&mut rng, &[dim, dim], 1.0);
        let w2 = random_tensor(&mut rng, &[dim, dim], 1.0);
        let nodes = random_vec(&mut rng, zones * dim, 1.0);
        let row = rng.random_range(0..zones);
        let g = random_vec(&mut rng, dim, 1.0);
        let cache = gcn_forward(&w1, &w2, &nodes, &adj, zones, dim).unwrap();
        let (mut dw1, mut dw2) = (w1.zeros_like(), w2.zeros_like());
        let dx = gcn_backward_row(&w1, &w2, &adj, &cache, row, &g, &mut dw1, &mut dw2);
        let out = |w1: &Tensor, w2: &Tensor, x: &[f64]| {
            dot(
                gcn_forward(w1, w2, x, &adj, zones, dim)
                    .unwrap()
                    .out_row(row),
                &g,
            )
        };
        let t = |v: &[f64]| Tensor::from_vec(&[dim, dim], v.to_vec()).unwrap();
        for (w, e) in [
            fd_compare(|v| out(&t(v), &w2, &nodes), w1.data(), dw1.data()),
            fd_compare(|v| out(&w1, &t(v), &nodes), w2.data(), dw2.data()),
            fd_compare(|v| out(&w1, &w2, v), &nodes, &dx),
        ] {
            worst = worst.max(w);
            entries += e;
        }
    }
    gradient_result("gradient_gcn", instances, worst, entries)
}

fn small_shape(rng: &mut ChaCha8Rng) -> ModelShape {
    ModelShape {
        embed: rng.random_range(1..=3),
        node: rng.random_range(1..=3),
        hidden: rng.random_range(2..=5),
    }
}

/// Recurrent cell: loss `⟨h', a⟩ + ⟨c', b⟩` with respect to the weights,
/// the input and the previous state.
pub fn gradient_cell(instances: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[b"selfcheck-cell"]);
    let (mut worst, mut entries) = (0.0f64, 0);
    for k in 0..instances {
        let shape = small_shape(&mut rng);
        let h = shape.hidden;
        let params = PolicyParams::init(shape, k as u64);
        let x = random_vec(&mut rng, shape.input(), 1.0);
        let prev = CellState {
            h: random_vec(&mut rng, h, 1.0),
            c: random_vec(&mut rng, h, 1.0),
        };
        let (a, b) = (random_vec(&mut rng, h, 1.0), random_vec(&mut rng, h, 1.0));
        let (_, cache) = recurrent_step(&params.cell(), &x, &prev).unwrap();
        let mut grads = params.zeros_like();
        let (dx, dh, dc) =
            recurrent_backward(&params.cell(), &mut grads.cell_mut(), &cache, &a, &b);
        let loss = |p: &PolicyParams, x: &[f64], prev: &CellState| {
            let (next, _) = recurrent_step(&p.cell(), x, prev).unwrap();
            dot(&next.h, &a) + dot(&next.c, &b)
        };
        let mut results = Vec::new();
        for name in ["cell.wx", "cell.wh", "cell.b"] {
            let base = params
                .tensors()
                .iter()
                .find(|t| t.0 == name)
                .unwrap()
                .1
                .data()
                .to_vec();
            let analytic = grads
                .tensors()
                .iter()
                .find(|t| t.0 == name)
                .unwrap()
                .1
                .data()
                .to_vec();
            results.push(fd_compare(
                |v| {
                    let mut p = params.clone();
                    p.tensor_mut(name).unwrap().data_mut().copy_from_slice(v);
                    loss(&p, &x, &prev)
                },
                &base,
                &analytic,
            ));
        }
        results.push(fd_compare(|v| loss(&params, v, &prev), &x, &dx));
        results.push(fd_compare(
            |v| {
                loss(
                    &params,
                    &x,
                    &CellState {
                        h: v.to_vec(),
                        c: prev.c.clone(),
                    },
                )
            },
            &prev.h,
            &dh,
        ));
        results.push(fd_compare(
            |v| {
                loss(
                    &params,
                    &x,
                    &CellState {
                        h: prev.h.clone(),
                        c: v.to_vec(),
                    },
                )
            },
            &prev.c,
            &dc,
        ));
        for (w, e) in results {
            worst = worst.max(w);
            entries += e;
        }
    }
    gradient_result("gradient_cell", instances, worst, entries)
}

/// Actor and critic heads: loss `⟨logits, a⟩ + b·V`.
pub fn gradient_heads(instances: usize, seed: u64) -> CheckResult {
    let mut rng = rng_for(seed, &[b"selfcheck-heads"]);
    let (mut worst, mut entries) = (0.0f64, 0);
    for k in 0..instances {
        let shape = small_shape(&mut rng);
        let mut params = PolicyParams::init(shape, k as u64);
        params.actor_w = random_tensor(&mut rng, params.actor_w.shape(), 1.0);
        params.actor_b = random_tensor(&mut rng, params.actor_b.shape(), 1.0);
        params.critic_b = random_tensor(&mut rng, &[1], 1.0);
        let h = random_vec(&mut rng, shape.hidden, 1.0);
        let a = random_vec(&mut rng, 6, 1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        let mut grads = params.zeros_like();
        let dh = actor_critic_backward(&params.heads(), &mut grads.heads_mut(), &h, &a, b);
        let loss = |p: &PolicyParams, h: &[f64]| {
            let (logits, v) = actor_critic(&p.heads(), h);
            dot(&logits, &a) + b * v
        };
        let mut results = Vec::new();
        for name in ["actor.w", "actor.b", "critic.w", "critic.b"] {
            let base = params
                .tensors()
                .iter()
                .find(|t| t.0 == name)
                .unwrap()
                .1
                .data()
                .to_vec();
            let analytic = grads
                .tensors()
                .iter()
                .find(|t| t.0 == name)
                .unwrap()
                .1
                .data()
                .to_vec();
            results.push(fd_compare(
                |v| {
                    let mut p = params.clone();
                    p.tensor_mut(name).unwrap().data_mut().copy_from_slice(v);
                    loss(&p, &h)
                },
                &base,
                &analytic,
            ));
        }
        results.push(fd_compare(|v| loss(&params, v), &h, &dh));
        for (w, e) in results {
            worst = worst.max(w);
            entries += e;
        }
    }
    gradient_result("gradient_heads", instances, worst, entries)
}

struct A2cCase {
    params: PolicyParams,
    adjacency: Vec<f64>,
    zones: usize,
    traj: crate::train::Trajectory,
    advantages: Vec<f64>,
    cfg: TrainConfig,
}

/// Frozen 3-step segments recorded from a small kitchen, one per instance,
/// each with its own parameters and start state.
fn a2c_cases(instances: usize, seed: u64) -> Vec<A2cCase> {
    let table = LayoutTable::default();
    let scene = Arc::new(
        generate_scene(&table, RoomCategory::Kitchen, SceneSize::new(5, 5), seed).unwrap(),
    );
    let provider = EmbeddingProvider::synthetic(seed, 3);
    let graph = build_category_graph(
        std::slice::from_ref(&*scene),
        &provider,
        3,
        DEFAULT_EPSILON,
        seed,
    )
    .unwrap();
    let graph = Arc::new(graph);
    let goals = scene.goal_categories();
    let cfg = TrainConfig {
        entropy_coef: 0.05,
        ..TrainConfig::default()
    };
    let mut cases = Vec::new();
    let mut k = 0u64;
    while cases.len() < instances {
        k += 1;
        let shape = ModelShape {
            embed: 3,
            node: 3,
            hidden: 4,
        };
        let mut params = PolicyParams::init(shape, seed.wrapping_add(k));
        // a sharper actor keeps the policy term visible next to the value term
        params
            .actor_w
            .data_mut()
            .iter_mut()
            .for_each(|v| *v *= 50.0);
        params.lambda_raw.data_mut()[0] = rng_for(k, &[b"lambda"]).random_range(-1.5..1.5);
        let state = GraphState::new(graph.clone(), params.lambda()).unwrap();
        let goal = &goals[k as usize % goals.len()];
        let env = reset_episode(scene.clone(), goal, k, 40).unwrap();
        let sel = ActionSelection::Sample(rng_for(k, &[b"selfcheck-actions"]));
        let adjacency = state.adjacency().to_vec();
        let zones = state.zones();
        let mut runner =
            EpisodeRunner::new(env, state, &provider, shape.hidden, InputMask::NONE, sel).unwrap();
        // skip one step so the segment starts from a non-trivial state
        if runner
            .run_segment(&params, 1)
            .map(|t| t.terminated)
            .unwrap_or(true)
        {
            continue;
        }
        let traj = runner.run_segment(&params, 3).unwrap();
        if traj.steps.len() != 3 {
            continue;
        }
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let returns = discounted_returns(&rewards, traj.bootstrap, cfg.gamma);
        let advantages = returns
            .iter()
            .zip(&traj.steps)
            .map(|(r, s)| r - s.value)
            .collect();
        cases.push(A2cCase {
            params,
            adjacency,
            zones,
            traj,
            advantages,
            cfg: cfg.clone(),
        });
    }
    cases
}

impl A2cCase {
    fn loss(&self, p: &PolicyParams) -> f64 {
        replay_gradients(
            p,
            &self.adjacency,
            self.zones,
            &self.traj,
            &self.cfg,
            Some(&self.advantages),
        )
        .unwrap()
        .0
        .total
    }

    fn grads(&self) -> PolicyParams {
        replay_gradients(
            &self.params,
            &self.adjacency,
            self.zones,
            &self.traj,
            &self.cfg,
            Some(&self.advantages),
        )
        .unwrap()
        .1
    }
}

/// Full actor-critic loss over a frozen 3-step segment, every parameter.
/// The advantage is held at its recorded value, as in training.
pub fn gradient_a2c(instances: usize, seed: u64) -> CheckResult {
    let (mut worst, mut entries) = (0.0f64, 0);
    for case in a2c_cases(instances, seed) {
        let grads = case.grads();
        for (name, g) in grads.tensors() {
            let base = case
                .params
                .tensors()
                .iter()
                .find(|t| t.0 == name)
                .unwrap()
                .1
                .data()
                .to_vec();
            let (w, e) = fd_compare(
                |v| {
                    let mut p = case.params.clone();
                    p.tensor_mut(name).unwrap().data_mut().copy_from_slice(v);
                    case.loss(&p)
                },
                &base,
                g.data(),
            );
            worst = worst.max(w);
            entries += e;
        }
    }
    gradient_result("gradient_a2c", instances, worst, entries)
}

/// The blend weight's gradient through the adapted graph matches finite
/// differences. It can be exactly zero (every ReLU on the path closed); those
/// cases are still compared, and at least one case must carry a gradient.
pub fn gradient_lambda(instances: usize, seed: u64) -> CheckResult {
    let mut worst = 0.0f64;
    let mut silent = 0;
    for case in a2c_cases(instances, seed.wrapping_add(1)) {
        let analytic = case.grads().lambda_raw.data()[0];
        if analytic == 0.0 {
            silent += 1;
        }
        let x = case.params.lambda_raw.data().to_vec();
        let (w, _) = fd_compare(
            |v| {
                let mut p = case.params.clone();
                p.lambda_raw.data_mut()[0] = v[0];
                case.loss(&p)
            },
            &x,
            &[analytic],
        );
        worst = worst.max(w);
    }
    let passed = worst < GRAD_TOLERANCE && silent < instances;
    CheckResult::new(
        "gradient_lambda",
        passed,
        format!(
            "{instances} instances, {} with non-zero gradient, worst relative error {worst:.2e}",
            instances - silent
        ),
    )
}

/// Every check at its full size.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        equation_algebra(),
        pipeline_vs_oracle(20, seed),
        planner_enumeration(200, seed),
        planner_scaling_invariance(200, seed),
        planner_power_invariance(200, seed),
        kuhn_munkres(100, seed),
        permuted_recovery(100, seed),
        gradient_gcn(50, seed),
        gradient_cell(50, seed),
        gradient_heads(50, seed),
        gradient_a2c(50, seed),
        gradient_lambda(50, seed),
    ]
}

/// Checks expected to fail: the property they test does not hold.
pub const KNOWN_FALSE: [&str; 1] = ["planner_scaling_invariance"];

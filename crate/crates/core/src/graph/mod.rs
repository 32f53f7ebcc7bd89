//! Offline knowledge-graph construction.
//!
//! Sweep every reachable cell, cluster the per-cell features into zones,
//! turn zones into nodes (mean features) and edges (fraction of adjacent
//! cross-zone cell pairs), then align graphs of the same room category with
//! Kuhn–Munkres and average them.

pub mod hungarian;
mod io;
pub mod kmeans;
mod sweep;

use std::collections::BTreeMap;

use crate::encoder::{cosine, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::sim::{RoomCategory, Scene, GRID_STEP};

pub use io::{load_graph, parse_graph, save_graph, write_graph, GRAPH_MAGIC};
pub use sweep::{
    position_feature, sweep_position_features, view_feature, PositionFeature, PositionFeatureMap,
};

pub const DEFAULT_ZONES: usize = 8;
pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ZoneAssignment {
    /// Swept cells in map order.
    pub positions: Vec<(usize, usize)>,
    /// Zone of `positions[i]`.
    pub zone_of: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub requested: usize,
}

impl ZoneAssignment {
    /// Effective zone count after empty clusters were dropped.
    pub fn zones(&self) -> usize {
        self.centers.len()
    }

    pub fn members(&self, zone: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positions
            .iter()
            .zip(&self.zone_of)
            .filter(move |(_, &z)| z == zone)
            .map(|(p, _)| *p)
    }
}

pub fn cluster_zones(
    features: &PositionFeatureMap,
    zones: usize,
    seed: u64,
) -> Result<ZoneAssignment> {
    if features.is_empty() {
        return Err(Error::Usage("no swept positions to cluster".into()));
    }
    if zones == 0 {
        return Err(Error::Usage("zone count must be at least 1".into()));
    }
    let positions: Vec<(usize, usize)> = features.entries.keys().copied().collect();
    let points: Vec<Vec<f64>> = features
        .entries
        .values()
        .map(|e| e.feature.clone())
        .collect();
    let result = kmeans::kmeans(&points, zones, seed);
    Ok(ZoneAssignment {
        positions,
        zone_of: result.labels,
        centers: result.centers,
        requested: zones,
    })
}

/// Zones as nodes, adjacency probabilities as edges.
#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeGraph {
    pub zones: usize,
    pub dim: usize,
    pub room: RoomCategory,
    /// `zones × dim`, row-major.
    pub nodes: Vec<f64>,
    /// `zones × zones`, row-major.
    pub edges: Vec<f64>,
}

impl KnowledgeGraph {
    pub fn node(&self, m: usize) -> &[f64] {
        &self.nodes[m * self.dim..(m + 1) * self.dim]
    }

    pub fn edge(&self, m: usize, n: usize) -> f64 {
        self.edges[m * self.zones + n]
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.len() != self.zones * self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.zones * self.dim,
                found: self.nodes.len(),
            });
        }
        if self.edges.len() != self.zones * self.zones {
            return Err(Error::DimensionMismatch {
                expected: self.zones * self.zones,
                found: self.edges.len(),
            });
        }
        if self.nodes.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("graph nodes".into()));
        }
        for m in 0..self.zones {
            if self.edge(m, m) != 1.0 {
                return Err(Error::Usage(format!("edge diagonal at {m} is not 1")));
            }
            for n in 0..self.zones {
                let e = self.edge(m, n);
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::Usage(format!("edge ({m},{n}) = {e} outside [0,1]")));
                }
                if e != self.edge(n, m) {
                    return Err(Error::Usage(format!("edge ({m},{n}) is not symmetric")));
                }
            }
        }
        Ok(())
    }

    /// Rows and columns reordered so that new index `m` is old `perm[m]`.
    pub fn permuted(&self, perm: &[usize]) -> KnowledgeGraph {
        let nodes = perm
            .iter()
            .flat_map(|&p| self.node(p).iter().copied())
            .collect();
        let edges = perm
            .iter()
            .flat_map(|&p| perm.iter().map(move |&q| (p, q)))
            .map(|(p, q)| self.edge(p, q))
            .collect();
        KnowledgeGraph {
            nodes,
            edges,
            ..self.clone()
        }
    }
}

/// Nodes are zone means of the swept features; off-diagonal edges are the
/// fraction of cross-zone cell pairs within Manhattan distance `epsilon`
/// (meters).
pub fn build_room_graph(
    assignment: &ZoneAssignment,
    features: &PositionFeatureMap,
    epsilon: f64,
    room: RoomCategory,
) -> Result<KnowledgeGraph> {
    let zones = assignment.zones();
    let dim = features.dim;
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); zones];
    for (pos, &z) in assignment.positions.iter().zip(&assignment.zone_of) {
        if !features.entries.contains_key(pos) {
            return Err(Error::Usage(format!(
                "assigned cell {pos:?} missing from the feature map"
            )));
        }
        members[z].push(*pos);
    }
    if assignment.positions.len() != features.len() {
        return Err(Error::Usage(
            "assignment does not cover the feature map".into(),
        ));
    }

    let mut nodes = vec![0.0; zones * dim];
    for (m, cells) in members.iter().enumerate() {
        let row = &mut nodes[m * dim..(m + 1) * dim];
        for p in cells {
            for (r, v) in row.iter_mut().zip(&features.entries[p].feature) {
                *r += v;
            }
        }
        row.iter_mut().for_each(|r| *r /= cells.len() as f64);
    }

    let mut edges = vec![0.0; zones * zones];
    for m in 0..zones {
        edges[m * zones + m] = 1.0;
        for n in m + 1..zones {
            let adjacent = members[m]
                .iter()
                .flat_map(|a| members[n].iter().map(move |b| (a, b)))
                .filter(|(a, b)| {
                    let manhattan = (a.0.abs_diff(b.0) + a.1.abs_diff(b.1)) as f64 * GRID_STEP;
                    manhattan <= epsilon + 1e-9
                })
                .count();
            let e = adjacent as f64 / (members[m].len() * members[n].len()) as f64;
            edges[m * zones + n] = e;
            edges[n * zones + m] = e;
        }
    }
    Ok(KnowledgeGraph {
        zones,
        dim,
        room,
        nodes,
        edges,
    })
}

/// Sum of node cosines under `perm` (`a[m]` paired with `b[perm[m]]`).
pub fn matching_objective(a: &KnowledgeGraph, b: &KnowledgeGraph, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(m, &p)| cosine(a.node(m), b.node(p)))
        .sum()
}

/// Permutation of `b`'s nodes maximizing total cosine similarity with `a`.
/// The identity wins whenever it is optimal.
pub fn match_graphs(a: &KnowledgeGraph, b: &KnowledgeGraph) -> Result<Vec<usize>> {
    if a.zones != b.zones || a.dim != b.dim {
        return Err(Error::Usage(format!(
            "cannot match graphs with shapes {}x{} and {}x{}",
            a.zones, a.dim, b.zones, b.dim
        )));
    }
    let cost: Vec<Vec<f64>> = (0..a.zones)
        .map(|m| {
            (0..b.zones)
                .map(|n| -cosine(a.node(m), b.node(n)))
                .collect()
        })
        .collect();
    let perm = hungarian::min_cost_assignment(&cost);
    let identity: Vec<usize> = (0..a.zones).collect();
    if matching_objective(a, b, &identity) >= matching_objective(a, b, &perm) - 1e-12 {
        return Ok(identity);
    }
    Ok(perm)
}

/// Aligns every graph to the first and averages nodes and edges.
pub fn merge_graphs(graphs: &[KnowledgeGraph]) -> Result<KnowledgeGraph> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::Usage("merge needs at least one graph".into()))?;
    for g in graphs {
        if g.room != first.room {
            return Err(Error::RoomMismatch(format!("{} vs {}", first.room, g.room)));
        }
        if g.zones != first.zones || g.dim != first.dim {
            return Err(Error::Usage(format!(
                "zone count mismatch: {} vs {} (lower the zone count or regenerate scenes)",
                first.zones, g.zones
            )));
        }
    }
    let aligned: Vec<KnowledgeGraph> = std::iter::once(Ok(first.clone()))
        .chain(
            graphs[1..]
                .iter()
                .map(|g| Ok(g.permuted(&match_graphs(first, g)?))),
        )
        .collect::<Result<_>>()?;
    let k = aligned.len() as f64;
    let mean = |pick: &dyn Fn(&KnowledgeGraph) -> &Vec<f64>| -> Vec<f64> {
        let mut acc = vec![0.0; pick(first).len()];
        for g in &aligned {
            for (a, v) in acc.iter_mut().zip(pick(g)) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    };
    let merged = KnowledgeGraph {
        nodes: mean(&|g| &g.nodes),
        edges: mean(&|g| &g.edges),
        ..first.clone()
    };
    merged.validate()?;
    Ok(merged)
}

/// Sweep → cluster → graph for one scene.
pub fn scene_graph(
    scene: &Scene,
    provider: &EmbeddingProvider,
    zones: usize,
    epsilon: f64,
    seed: u64,
) -> Result<KnowledgeGraph> {
    let features = sweep_position_features(scene, provider)?;
    let assignment = cluster_zones(&features, zones, seed)?;
    build_room_graph(&assignment, &features, epsilon, scene.room)
}

/// Per-scene graphs merged into one graph for the room category.
pub fn build_category_graph(
    scenes: &[Scene],
    provider: &EmbeddingProvider,
    zones: usize,
    epsilon: f64,
    seed: u64,
) -> Result<KnowledgeGraph> {
    let first = scenes
        .first()
        .ok_or_else(|| Error::Usage("no scenes given".into()))?;
    if let Some(other) = scenes.iter().find(|s| s.room != first.room) {
        return Err(Error::RoomMismatch(format!(
            "`{}` is {} but `{}` is {}",
            first.id, first.room, other.id, other.room
        )));
    }
    let mut graphs = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let g = scene_graph(scene, provider, zones, epsilon, seed)?;
        if g.zones != zones {
            return Err(Error::Config(format!(
                "scene `{}` supports only {} distinct zones, {} requested",
                scene.id, g.zones, zones
            )));
        }
        graphs.push(g);
    }
    merge_graphs(&graphs)
}

/// For each node, goal categories ranked by cosine with the node feature.
pub fn nearest_categories(
    graph: &KnowledgeGraph,
    provider: &EmbeddingProvider,
    categories: &[&str],
    top: usize,
) -> Result<Vec<Vec<(String, f64)>>> {
    let table: BTreeMap<&str, Vec<f64>> = categories
        .iter()
        .map(|c| Ok((*c, provider.object_embedding(c)?.into_vec())))
        .collect::<Result<_>>()?;
    Ok((0..graph.zones)
        .map(|m| {
            let mut scored: Vec<(String, f64)> = table
                .iter()
                .map(|(c, e)| (c.to_string(), cosine(graph.node(m), e)))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.truncate(top);
            scored
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

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
                            detections: usize::from(f.iter().any(|&v| v != 0.0)),
                        },
                    )
                })
                .collect(),
        }
    }

    fn assignment(cells: &[((usize, usize), usize)], zones: usize, dim: usize) -> ZoneAssignment {
        ZoneAssignment {
            positions: cells.iter().map(|c| c.0).collect(),
            zone_of: cells.iter().map(|c| c.1).collect(),
            centers: vec![vec![0.0; dim]; zones],
            requested: zones,
        }
    }

    #[test]
    fn adjacent_zones_edge_one() {
        let f = feature_map(&[((0, 0), vec![1.0]), ((1, 0), vec![2.0])]);
        let a = assignment(&[((0, 0), 0), ((1, 0), 1)], 2, 1);
        let g = build_room_graph(&a, &f, 0.5, RoomCategory::Kitchen).unwrap();
        assert_eq!(g.edge(0, 1), 1.0);
        assert_eq!(g.edge(1, 0), 1.0);
        assert_eq!(g.edge(0, 0), 1.0);
    }

    #[test]
    fn far_zones_edge_zero() {
        let f = feature_map(&[((0, 0), vec![1.0]), ((3, 0), vec![2.0])]);
        let a = assignment(&[((0, 0), 0), ((3, 0), 1)], 2, 1);
        let g = build_room_graph(&a, &f, 0.5, RoomCategory::Kitchen).unwrap();
        assert_eq!(g.edge(0, 1), 0.0);
    }

    #[test]
    fn mixed_zones_edge_half() {
        // a1=(0,0) adjacent to b1=(1,0); a2=(0,3) is not
        let f = feature_map(&[
            ((0, 0), vec![1.0]),
            ((0, 3), vec![1.0]),
            ((1, 0), vec![2.0]),
        ]);
        let a = assignment(&[((0, 0), 0), ((0, 3), 0), ((1, 0), 1)], 2, 1);
        let g = build_room_graph(&a, &f, 0.5, RoomCategory::Kitchen).unwrap();
        assert_eq!(g.edge(0, 1), 0.5);
        assert_eq!(g.node(0), &[1.0]);
    }

    #[test]
    fn node_is_linear_in_member_features() {
        let f = feature_map(&[((0, 0), vec![1.0, 3.0]), ((1, 0), vec![2.0, -1.0])]);
        let a = assignment(&[((0, 0), 0), ((1, 0), 0)], 1, 2);
        let g = build_room_graph(&a, &f, 0.5, RoomCategory::Kitchen).unwrap();
        let scaled = feature_map(&[((0, 0), vec![2.5, 7.5]), ((1, 0), vec![5.0, -2.5])]);
        let gs = build_room_graph(&a, &scaled, 0.5, RoomCategory::Kitchen).unwrap();
        for (x, y) in g.nodes.iter().zip(&gs.nodes) {
            assert!((x * 2.5 - y).abs() < 1e-12);
        }
    }

    fn graph(nodes: Vec<Vec<f64>>) -> KnowledgeGraph {
        let zones = nodes.len();
        let dim = nodes[0].len();
        let mut edges = vec![0.25; zones * zones];
        for m in 0..zones {
            edges[m * zones + m] = 1.0;
        }
        if zones > 1 {
            edges[1] = 0.75;
            edges[zones] = 0.75;
        }
        KnowledgeGraph {
            zones,
            dim,
            room: RoomCategory::Bedroom,
            nodes: nodes.concat(),
            edges,
        }
    }

    #[test]
    fn self_match_is_identity() {
        let g = graph(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        ]);
        assert_eq!(match_graphs(&g, &g).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn match_recovers_permutation() {
        let g = graph(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let sigma = [2, 0, 1];
        let h = g.permuted(&sigma);
        // h.node(m) = g.node(sigma[m]); matching g→h must invert sigma
        let perm = match_graphs(&g, &h).unwrap();
        for m in 0..3 {
            assert_eq!(h.node(perm[m]), g.node(m));
        }
    }

    #[test]
    fn match_rejects_shape_mismatch() {
        let g = graph(vec![vec![1.0], vec![0.5]]);
        let h = graph(vec![vec![1.0], vec![0.5], vec![0.2]]);
        assert!(matches!(match_graphs(&g, &h), Err(Error::Usage(_))));
    }

    #[test]
    fn merge_single_and_identical() {
        let g = graph(vec![vec![1.0, 0.2], vec![0.1, 1.0]]);
        assert_eq!(merge_graphs(std::slice::from_ref(&g)).unwrap(), g);
        assert_eq!(merge_graphs(&[g.clone(), g.clone()]).unwrap(), g);
    }

    #[test]
    fn merge_undoes_permutation() {
        let g = graph(vec![
            vec![1.0, 0.0, 0.1],
            vec![0.0, 1.0, 0.0],
            vec![0.1, 0.0, 1.0],
        ]);
        let h = g.permuted(&[1, 2, 0]);
        let merged = merge_graphs(&[g.clone(), h]).unwrap();
        for (a, b) in merged.nodes.iter().zip(&g.nodes) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(merged.edges, g.edges);
    }

    #[test]
    fn merge_rejects_mixed_rooms() {
        let g = graph(vec![vec![1.0], vec![0.5]]);
        let mut h = g.clone();
        h.room = RoomCategory::Kitchen;
        assert!(matches!(merge_graphs(&[g, h]), Err(Error::RoomMismatch(_))));
    }
}

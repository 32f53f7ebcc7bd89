//! Slow, obviously-correct reference implementations. They share no code
//! with the production paths beyond the scene and provider types, and exist
//! to cross-check them in tests and in `selfcheck`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::categories::is_goal_category;
use crate::encoder::EmbeddingProvider;
use crate::error::Result;
use crate::sim::Scene;

/// Best path probability over every simple path `from → to`, plus every
/// zone that starts an optimal path (within `tol`). `None` when no path has
/// positive probability.
pub fn best_simple_path(
    edges: &[f64],
    m: usize,
    from: usize,
    to: usize,
    tol: f64,
) -> Option<(f64, BTreeSet<usize>)> {
    if from == to {
        return Some((1.0, BTreeSet::from([to])));
    }
    let mut paths: Vec<(f64, usize)> = Vec::new();
    let mut visited = vec![false; m];
    visited[from] = true;
    fn walk(
        edges: &[f64],
        m: usize,
        at: usize,
        to: usize,
        prob: f64,
        first: Option<usize>,
        visited: &mut [bool],
        out: &mut Vec<(f64, usize)>,
    ) {
        for next in 0..m {
            let e = edges[at * m + next];
            if visited[next] || e <= 0.0 {
                continue;
            }
            let p = prob * e;
            let f = first.unwrap_or(next);
            if next == to {
                out.push((p, f));
                continue;
            }
            visited[next] = true;
            walk(edges, m, next, to, p, Some(f), visited, out);
            visited[next] = false;
        }
    }
    walk(edges, m, from, to, 1.0, None, &mut visited, &mut paths);
    let best = paths.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if paths.is_empty() {
        return None;
    }
    let firsts = paths
        .iter()
        .filter(|p| p.0 >= best - tol)
        .map(|p| p.1)
        .collect();
    Some((best, firsts))
}

/// Minimum total cost over all `n!` assignments; returns the cost and one
/// minimizing permutation (`perm[row] = column`).
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> (f64, Vec<usize>) {
    let n = cost.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, perm.clone());
    fn rec(k: usize, perm: &mut Vec<usize>, cost: &[Vec<f64>], best: &mut (f64, Vec<usize>)) {
        let n = perm.len();
        if k == n {
            let c: f64 = (0..n).map(|r| cost[r][perm[r]]).sum();
            if c < best.0 {
                *best = (c, perm.clone());
            }
            return;
        }
        for i in k..n {
            perm.swap(k, i);
            rec(k + 1, perm, cost, best);
            perm.swap(k, i);
        }
    }
    rec(0, &mut perm, cost, &mut best);
    if n == 0 {
        best.0 = 0.0;
    }
    best
}

/// Independent visibility test for one view, straight from the rule: planar
/// range 1.5 m, bearing within 45° of yaw, pitch equal to the band's pitch.
pub fn view_sees(scene: &Scene, cx: usize, cz: usize, yaw: i32, pitch: i32) -> BTreeSet<String> {
    let (ax, az) = (cx as f64 * 0.5, cz as f64 * 0.5);
    let (hx, hz) = (
        (yaw as f64).to_radians().sin(),
        (yaw as f64).to_radians().cos(),
    );
    let mut seen = BTreeSet::new();
    for o in &scene.objects {
        let band_pitch = match o.band.as_str() {
            "low" => -30,
            "mid" => 0,
            _ => 30,
        };
        if band_pitch != pitch {
            continue;
        }
        let (dx, dz) = (o.cx as f64 * 0.5 - ax, o.cz as f64 * 0.5 - az);
        let d = (dx * dx + dz * dz).sqrt();
        if d > 1.5 + 1e-9 {
            continue;
        }
        // angle between heading and offset via the dot product
        let cos = if d == 0.0 {
            1.0
        } else {
            (dx * hx + dz * hz) / d
        };
        if cos >= (45f64).to_radians().cos() - 1e-9 {
            seen.insert(o.category.clone());
        }
    }
    seen
}

const YAWS: [i32; 8] = [0, 45, 90, 135, 180, 225, 270, 315];
const PITCHES: [i32; 3] = [-30, 0, 30];

/// Geodesic distance (meters, 4-neighbour flood fill) from a cell to the
/// nearest cell whose some view sees `goal`.
pub fn flood_fill_distance(scene: &Scene, goal: &str, cell: (usize, usize)) -> Option<f64> {
    let free = |x: i64, z: i64| {
        x >= 0
            && z >= 0
            && (x as usize) < scene.width
            && (z as usize) < scene.depth
            && scene.reachable[z as usize * scene.width + x as usize]
    };
    let mut dist: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for z in 0..scene.depth {
        for x in 0..scene.width {
            if !free(x as i64, z as i64) {
                continue;
            }
            let hit = YAWS.iter().any(|&y| {
                PITCHES
                    .iter()
                    .any(|&p| view_sees(scene, x, z, y, p).contains(goal))
            });
            if hit {
                dist.insert((x as i64, z as i64), 0);
                queue.push_back((x as i64, z as i64));
            }
        }
    }
    while let Some((x, z)) = queue.pop_front() {
        let d = dist[&(x, z)];
        for (nx, nz) in [(x + 1, z), (x - 1, z), (x, z + 1), (x, z - 1)] {
            if free(nx, nz) && !dist.contains_key(&(nx, nz)) {
                dist.insert((nx, nz), d + 1);
                queue.push_back((nx, nz));
            }
        }
    }
    dist.get(&(cell.0 as i64, cell.1 as i64))
        .map(|&h| h as f64 * 0.5)
}

/// Per-cell mean of goal embeddings over every (view, goal category)
/// detection, with the detection count.
pub fn position_features(
    scene: &Scene,
    provider: &EmbeddingProvider,
) -> Result<BTreeMap<(usize, usize), (Vec<f64>, usize)>> {
    let mut out = BTreeMap::new();
    for cz in 0..scene.depth {
        for cx in 0..scene.width {
            if !scene.reachable[cz * scene.width + cx] {
                continue;
            }
            let mut sum = vec![0.0; provider.dim()];
            let mut count = 0;
            for &yaw in &YAWS {
                for &pitch in &PITCHES {
                    for cat in view_sees(scene, cx, cz, yaw, pitch) {
                        if !is_goal_category(&cat) {
                            continue;
                        }
                        let e = provider.object_embedding(&cat)?;
                        for (s, v) in sum.iter_mut().zip(e.as_slice()) {
                            *s += v;
                        }
                        count += 1;
                    }
                }
            }
            if count > 0 {
                sum.iter_mut().for_each(|s| *s /= count as f64);
            }
            out.insert((cx, cz), (sum, count));
        }
    }
    Ok(out)
}

fn inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let dim = points.first().map_or(0, Vec::len);
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == c)
            .map(|(p, _)| p)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..dim)
            .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
            .collect();
        total += members
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>();
    }
    total
}

/// Every labeling of `points` into `k` non-empty clusters, canonical up to
/// relabeling; returns the minimum inertia and all labelings attaining it
/// within `tol`. Exponential; keep `n` small.
pub fn best_partitions(points: &[Vec<f64>], k: usize, tol: f64) -> (f64, Vec<Vec<usize>>) {
    let n = points.len();
    let mut all: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut labels = vec![0; n];
    fn rec(
        i: usize,
        used: usize,
        k: usize,
        labels: &mut Vec<usize>,
        points: &[Vec<f64>],
        all: &mut Vec<(f64, Vec<usize>)>,
    ) {
        if i == labels.len() {
            if used == k {
                all.push((inertia(points, labels, k), labels.clone()));
            }
            return;
        }
        // a point may join an existing cluster or open the next one
        for c in 0..(used + 1).min(k) {
            labels[i] = c;
            rec(i + 1, used.max(c + 1), k, labels, points, all);
        }
    }
    rec(0, 0, k, &mut labels, points, &mut all);
    let best = all.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let winners = all
        .into_iter()
        .filter(|a| a.0 <= best + tol)
        .map(|a| a.1)
        .collect();
    (best, winners)
}

/// Relabels so the first occurrence of each label appears in order.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Zone means and Manhattan-adjacency edge fractions, recomputed directly.
pub fn room_graph(
    cells: &[(usize, usize)],
    points: &[Vec<f64>],
    labels: &[usize],
    k: usize,
    epsilon: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dim = points.first().map_or(0, Vec::len);
    let nodes: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let idx: Vec<usize> = (0..points.len()).filter(|&i| labels[i] == c).collect();
            (0..dim)
                .map(|j| idx.iter().map(|&i| points[i][j]).sum::<f64>() / idx.len() as f64)
                .collect()
        })
        .collect();
    let mut edges = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            if a == b {
                edges[a][b] = 1.0;
                continue;
            }
            let (mut near, mut total) = (0usize, 0usize);
            for i in (0..cells.len()).filter(|&i| labels[i] == a) {
                for j in (0..cells.len()).filter(|&j| labels[j] == b) {
                    let d = 0.5
                        * (cells[i].0.abs_diff(cells[j].0) + cells[i].1.abs_diff(cells[j].1))
                            as f64;
                    total += 1;
                    if d <= epsilon + 1e-9 {
                        near += 1;
                    }
                }
            }
            edges[a][b] = near as f64 / total as f64;
        }
    }
    (nodes, edges)
}

/// Five-point central differences of `f` at `x`; error `O(eps⁴)`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut at = |i: usize, k: f64, probe: &mut Vec<f64>| {
        probe[i] = x[i] + k * eps;
        let v = f(probe);
        probe[i] = x[i];
        v
    };
    (0..x.len())
        .map(|i| {
            let (p2, p1) = (at(i, 2.0, &mut probe), at(i, 1.0, &mut probe));
            let (m1, m2) = (at(i, -1.0, &mut probe), at(i, -2.0, &mut probe));
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps)
        })
        .collect()
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_enumeration_on_a_triangle() {
        let e = [1.0, 0.9, 0.5, 0.9, 1.0, 0.9, 0.5, 0.9, 1.0];
        let (p, first) = best_simple_path(&e, 3, 0, 2, 1e-12).unwrap();
        assert!((p - 0.81).abs() < 1e-12);
        assert_eq!(first, BTreeSet::from([1]));
        let none = [1.0, 0.0, 0.0, 1.0];
        assert!(best_simple_path(&none, 2, 0, 1, 0.0).is_none());
    }

    #[test]
    fn assignment_enumeration() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let (c, perm) = brute_force_assignment(&cost);
        assert_eq!(c, 5.0);
        assert_eq!(perm, vec![1, 0, 2]);
    }

    #[test]
    fn partitions_of_four_points() {
        let pts = vec![vec![0.0], vec![0.1], vec![5.0], vec![5.2]];
        let (best, winners) = best_partitions(&pts, 2, 1e-12);
        assert_eq!(winners, vec![vec![0, 0, 1, 1]]);
        assert!((best - (0.005 + 0.02)).abs() < 1e-12);
        assert_eq!(canonical_labels(&[3, 3, 1, 0]), vec![0, 0, 1, 2]);
    }

    #[test]
    fn central_difference_of_a_cubic() {
        let g = central_difference(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, 1.0], 1e-3);
        assert!((g[0] - 12.0).abs() < 1e-6 && (g[1] - 2.0).abs() < 1e-9);
    }
}

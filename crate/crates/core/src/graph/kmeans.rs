//! Lloyd's k-means with k-means++ seeding.

use rand::Rng;

use crate::seed;

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-6;
/// Independent k-means++ restarts; the lowest-inertia run wins.
pub const RESTARTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub inertia: f64,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, ties to the lowest index.
pub fn nearest(point: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn seed_centers(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // every point coincides with a center already
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        // guard against round-off landing on a zero-weight tail point
        if d2[pick] == 0.0 {
            pick = d2.iter().rposition(|&w| w > 0.0).unwrap();
        }
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centers.last().unwrap()));
        }
    }
    centers
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Option<Vec<f64>>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(mut s, n)| {
            (n > 0).then(|| {
                s.iter_mut().for_each(|v| *v /= n as f64);
                s
            })
        })
        .collect()
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> KMeansResult {
    let dim = points[0].len();
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    for _ in 0..MAX_ITERATIONS {
        // empty clusters are dropped and labels compacted in center order
        let updated = means(points, &labels, centers.len(), dim);
        let kept: Vec<usize> = (0..updated.len())
            .filter(|&i| updated[i].is_some())
            .collect();
        let shift = kept
            .iter()
            .map(|&i| sq_dist(updated[i].as_ref().unwrap(), &centers[i]).sqrt())
            .fold(0.0, f64::max);
        let dropped = kept.len() != centers.len();
        centers = updated.into_iter().flatten().collect();
        labels = points.iter().map(|p| nearest(p, &centers)).collect();
        if shift <= TOLERANCE && !dropped {
            break;
        }
    }
    // final centers are exactly the means of the final members
    let updated = means(points, &labels, centers.len(), dim);
    let mut remap = vec![usize::MAX; centers.len()];
    let mut final_centers = Vec::new();
    for (i, c) in updated.into_iter().enumerate() {
        if let Some(c) = c {
            remap[i] = final_centers.len();
            final_centers.push(c);
        }
    }
    let labels: Vec<usize> = labels.iter().map(|&l| remap[l]).collect();
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p, &final_centers[l]))
        .sum();
    KMeansResult {
        labels,
        centers: final_centers,
        inertia,
    }
}

/// Clusters `points` into at most `k` groups. Deterministic in `seed`.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> KMeansResult {
    assert!(!points.is_empty() && k >= 1);
    let mut best: Option<KMeansResult> = None;
    for restart in 0..RESTARTS {
        let mut rng = seed::rng_for(seed, &[b"kmeans", &(restart as u64).to_le_bytes()]);
        let run = lloyd(points, seed_centers(points, k, &mut rng));
        // prefer more clusters, then lower inertia
        let better = match &best {
            None => true,
            Some(b) => {
                run.centers.len() > b.centers.len()
                    || (run.centers.len() == b.centers.len() && run.inertia < b.inertia)
            }
        };
        if better {
            best = Some(run);
        }
    }
    best.unwrap()
}

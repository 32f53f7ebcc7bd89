//! Exhaustive view sweep producing one feature per reachable position.

use std::collections::BTreeMap;

use crate::categories::is_goal_category;
use crate::encoder::EmbeddingProvider;
use crate::error::Result;
use crate::sim::{visible_objects, Observation, Pose, Scene};

#[derive(Clone, Debug, PartialEq)]
pub struct PositionFeature {
    pub feature: Vec<f64>,
    pub detections: usize,
}

/// Per-cell mean of detected goal embeddings. Keys are `(cx, cz)` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionFeatureMap {
    pub dim: usize,
    pub entries: BTreeMap<(usize, usize), PositionFeature>,
}

impl PositionFeatureMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Single-view feature used online: mean embedding of the goals detected in
/// the current observation, zero when none.
pub fn view_feature(provider: &EmbeddingProvider, obs: &Observation) -> Result<Vec<f64>> {
    let view: Vec<&str> = obs.visible.iter().map(|v| v.category.as_str()).collect();
    Ok(position_feature(provider, &[view])?.feature)
}

/// Feature of one position: the mean embedding over every (view, goal
/// category) detection. Each inner list holds what one view sees; repeats
/// within a view and non-goal names are ignored.
pub fn position_feature(
    provider: &EmbeddingProvider,
    views: &[Vec<&str>],
) -> Result<PositionFeature> {
    let mut acc = vec![0.0; provider.dim()];
    let mut detections = 0;
    for view in views {
        let mut cats: Vec<&str> = view
            .iter()
            .copied()
            .filter(|c| is_goal_category(c))
            .collect();
        cats.sort_unstable();
        cats.dedup();
        for c in &cats {
            let e = provider.object_embedding(c)?;
            for (a, v) in acc.iter_mut().zip(e.as_slice()) {
                *a += v;
            }
        }
        detections += cats.len();
    }
    if detections > 0 {
        acc.iter_mut().for_each(|a| *a /= detections as f64);
    }
    Ok(PositionFeature {
        feature: acc,
        detections,
    })
}

/// Visits every reachable cell under all yaw × pitch views and averages the
/// object features over all (view, category) detections.
pub fn sweep_position_features(
    scene: &Scene,
    provider: &EmbeddingProvider,
) -> Result<PositionFeatureMap> {
    let mut entries = BTreeMap::new();
    for (cx, cz) in scene.reachable_cells() {
        let observations: Vec<Observation> = Pose::views_at(cx, cz)
            .map(|p| visible_objects(scene, &p))
            .collect();
        let views: Vec<Vec<&str>> = observations
            .iter()
            .map(|o| o.visible.iter().map(|v| v.category.as_str()).collect())
            .collect();
        entries.insert((cx, cz), position_feature(provider, &views)?);
    }
    Ok(PositionFeatureMap {
        dim: provider.dim(),
        entries,
    })
}

//! Shared embedding space for object categories and first-person views.
//!
//! Object features come from a fixed table, either drawn on a seeded unit
//! sphere or loaded from a file of precomputed vectors. The image feature is a
//! semantic splat of the visible objects into a `G×G` grid of that same
//! space, so every non-empty cell is directly comparable with object features.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};

use crate::categories::GOAL_CATEGORIES;
use crate::error::{Error, Result};
use crate::seed;
use crate::sim::{Observation, HALF_FOV_DEG, VISIBILITY_RANGE};

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_GRID: usize = 7;
pub const EMBEDDING_MAGIC: &str = "embeddings-v1";

/// Unit-norm feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Normalizes `values`; rejects zero, empty, or non-finite input.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding".into()));
        }
        let norm = l2(&values);
        if norm == 0.0 {
            return Err(Error::NonFinite("zero-norm embedding".into()));
        }
        // already-unit vectors are kept bit-exact so save/load round-trips
        if (norm - 1.0).abs() <= 1e-12 {
            return Ok(Embedding(values));
        }
        Ok(Embedding(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = l2(a);
    let nb = l2(b);
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// `grid × grid × dim` tensor, row-major over (row, col, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialFeature {
    pub grid: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl SpatialFeature {
    pub fn zeros(grid: usize, dim: usize) -> Self {
        SpatialFeature {
            grid,
            dim,
            values: vec![0.0; grid * grid * dim],
        }
    }

    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.grid + col) * self.dim;
        &self.values[start..start + self.dim]
    }

    fn cell_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let start = (row * self.grid + col) * self.dim;
        &mut self.values[start..start + self.dim]
    }

    /// Mean over all `grid²` cells, empty cells included.
    pub fn mean_pool(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for cell in self.values.chunks(self.dim) {
            for (o, v) in out.iter_mut().zip(cell) {
                *o += v;
            }
        }
        let n = (self.grid * self.grid) as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }
}

/// Bin index of `value` over `[lo, hi]` split into `bins` equal parts; the
/// upper edge falls into the last bin.
pub fn bin_index(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((value - lo) / (hi - lo) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProviderMode {
    Synthetic { seed: u64 },
    File { path: PathBuf },
}

#[derive(Clone, Debug)]
pub struct EmbeddingProvider {
    mode: ProviderMode,
    dim: usize,
    grid: usize,
    table: BTreeMap<String, Embedding>,
}

fn synthetic_vector(seed: u64, dim: usize, category: &str) -> Embedding {
    let mut rng = seed::rng_for(seed, &[b"embedding", category.as_bytes()]);
    loop {
        let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Ok(e) = Embedding::from_raw(raw) {
            return e;
        }
    }
}

impl EmbeddingProvider {
    /// Seeded provider; the goal categories are tabulated up front and any
    /// other name is derived on demand from the same keyed stream.
    pub fn synthetic(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let table = GOAL_CATEGORIES
            .iter()
            .map(|c| (c.to_string(), synthetic_vector(seed, dim, c)))
            .collect();
        EmbeddingProvider {
            mode: ProviderMode::Synthetic { seed },
            dim,
            grid: DEFAULT_GRID,
            table,
        }
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        assert!(grid > 0);
        self.grid = grid;
        self
    }

    pub fn mode(&self) -> &ProviderMode {
        &self.mode
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.table.keys().map(String::as_str)
    }

    pub fn object_embedding(&self, category: &str) -> Result<Embedding> {
        if let Some(e) = self.table.get(category) {
            return Ok(e.clone());
        }
        match &self.mode {
            ProviderMode::Synthetic { seed } => Ok(synthetic_vector(*seed, self.dim, category)),
            ProviderMode::File { .. } => Err(Error::UnknownCategory(category.to_string())),
        }
    }

    /// Splats each visible object into the cell picked by its bearing
    /// (columns over ±45°) and distance (rows over 0–1.5 m). Shared cells
    /// hold the renormalized mean of their members.
    pub fn image_feature(&self, obs: &Observation) -> Result<SpatialFeature> {
        let g = self.grid;
        let mut feature = SpatialFeature::zeros(g, self.dim);
        // canonical order makes the sums independent of list order
        let mut visible: Vec<_> = obs.visible.iter().collect();
        visible.sort_by(|a, b| {
            a.category
                .cmp(&b.category)
                .then(a.distance.total_cmp(&b.distance))
                .then(a.bearing.total_cmp(&b.bearing))
        });
        let mut touched = vec![false; g * g];
        for v in visible {
            let col = bin_index(v.bearing, -HALF_FOV_DEG, HALF_FOV_DEG, g);
            let row = bin_index(v.distance, 0.0, VISIBILITY_RANGE, g);
            let emb = self.object_embedding(&v.category)?;
            for (c, e) in feature.cell_mut(row, col).iter_mut().zip(emb.as_slice()) {
                *c += e;
            }
            touched[row * g + col] = true;
        }
        for (i, t) in touched.iter().enumerate() {
            if *t {
                let cell = feature.cell_mut(i / g, i % g);
                let n = l2(cell);
                if n > 0.0 {
                    cell.iter_mut().for_each(|c| *c /= n);
                }
            }
        }
        Ok(feature)
    }

    pub fn save(&self, path: &Path, extra_categories: &[&str]) -> Result<()> {
        std::fs::write(path, self.to_text(extra_categories)?).map_err(|e| Error::io(path, e))
    }

    /// `embeddings-v1` text for every tabulated category plus `extra`.
    pub fn to_text(&self, extra: &[&str]) -> Result<String> {
        let mut rows: BTreeMap<String, Embedding> = self.table.clone();
        for c in extra {
            rows.insert(c.to_string(), self.object_embedding(c)?);
        }
        let mut out = format!("{EMBEDDING_MAGIC} D={}\n", self.dim);
        for (cat, emb) in rows {
            out.push_str(&cat);
            for v in emb.as_slice() {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut provider = Self::parse(&text, &path.display().to_string())?;
        provider.mode = ProviderMode::File {
            path: path.to_path_buf(),
        };
        Ok(provider)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (n, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty embedding file"))?;
        let dim = header
            .trim()
            .strip_prefix(EMBEDDING_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("D="))
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| {
                Error::parse(
                    origin,
                    n + 1,
                    format!("expected `{EMBEDDING_MAGIC} D=<int>` header"),
                )
            })?;
        let mut table = BTreeMap::new();
        for (n, line) in lines {
            let mut fields = line.split_whitespace();
            let cat = fields.next().unwrap();
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::parse(origin, n + 1, format!("unparsable float `{f}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != dim {
                return Err(Error::parse(
                    origin,
                    n + 1,
                    format!(
                        "dimension mismatch: `{cat}` has {} values, header says {dim}",
                        values.len()
                    ),
                ));
            }
            let emb = Embedding::from_raw(values)
                .map_err(|e| Error::parse(origin, n + 1, e.to_string()))?;
            if table.insert(cat.to_string(), emb).is_some() {
                return Err(Error::parse(
                    origin,
                    n + 1,
                    format!("duplicate category `{cat}`"),
                ));
            }
        }
        Ok(EmbeddingProvider {
            mode: ProviderMode::File {
                path: PathBuf::from(origin),
            },
            dim,
            grid: DEFAULT_GRID,
            table,
        })
    }
}

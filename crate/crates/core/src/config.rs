//! Flat `key = value` configuration with dotted section names.
//!
//! ```text
//! # comments and blank lines are ignored
//! embedding.dim = 64
//! graph.zones = 8
//! train.lr = 0.0001
//! ```
//!
//! Every key has a default and unknown keys are rejected. `echo_lines`
//! renders the effective configuration for artifact headers.

use std::path::{Path, PathBuf};

use crate::encoder::{EmbeddingProvider, DEFAULT_DIM, DEFAULT_GRID};
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, SplitKind};
use crate::graph::{DEFAULT_EPSILON, DEFAULT_ZONES};
use crate::sim::{RoomCategory, SceneSize};
use crate::train::{InputMask, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingMode {
    Synthetic,
    File,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub embedding_dim: usize,
    pub embedding_mode: EmbeddingMode,
    pub embedding_seed: u64,
    pub embedding_path: Option<PathBuf>,
    pub embedding_grid: usize,
    pub graph_zones: usize,
    pub graph_epsilon: f64,
    pub graph_seed: u64,
    pub sim_room: RoomCategory,
    pub sim_size: SceneSize,
    pub sim_count: usize,
    pub sim_seed: u64,
    pub train: TrainConfig,
    pub eval_split: SplitKind,
    pub eval_episodes: usize,
    pub eval_seeds: Vec<u64>,
    pub eval_mask: InputMask,
    pub paths_scenes: PathBuf,
    pub paths_graph: PathBuf,
    pub paths_checkpoint: PathBuf,
    pub paths_report: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            embedding_dim: DEFAULT_DIM,
            embedding_mode: EmbeddingMode::Synthetic,
            embedding_seed: 0,
            embedding_path: None,
            embedding_grid: DEFAULT_GRID,
            graph_zones: DEFAULT_ZONES,
            graph_epsilon: DEFAULT_EPSILON,
            graph_seed: 0,
            sim_room: RoomCategory::Kitchen,
            sim_size: SceneSize::new(8, 8),
            sim_count: 4,
            sim_seed: 0,
            train: TrainConfig::default(),
            eval_split: SplitKind::General,
            eval_episodes: 100,
            eval_seeds: vec![1, 2, 3],
            eval_mask: InputMask::NONE,
            paths_scenes: PathBuf::from("scenes"),
            paths_graph: PathBuf::from("graph.kg"),
            paths_checkpoint: PathBuf::from("policy.ckpt"),
            paths_report: PathBuf::from("report.jsonl"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "`{key}`: expected true or false, got `{v}`"
        ))),
    }
}

pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let seeds = v
        .split(',')
        .map(|s| parse_num::<u64>("seeds", s.trim()))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

fn mask_text(m: InputMask) -> String {
    let names: Vec<&str> = [
        (m.img, "img"),
        (m.obj, "obj"),
        (m.gra, "gra"),
        (m.act, "act"),
    ]
    .iter()
    .filter(|(on, _)| *on)
    .map(|(_, n)| *n)
    .collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join(",")
    }
}

impl Config {
    /// Sets one key. Also used for command-line overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let t = &mut self.train;
        match key {
            "embedding.dim" => self.embedding_dim = parse_num(key, v)?,
            "embedding.mode" => {
                self.embedding_mode = match v {
                    "synthetic" => EmbeddingMode::Synthetic,
                    "file" => EmbeddingMode::File,
                    _ => {
                        return Err(Error::Config(format!(
                            "`{key}`: expected synthetic or file"
                        )))
                    }
                }
            }
            "embedding.seed" => self.embedding_seed = parse_num(key, v)?,
            "embedding.path" => self.embedding_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "embedding.grid" => self.embedding_grid = parse_num(key, v)?,
            "graph.zones" => self.graph_zones = parse_num(key, v)?,
            "graph.epsilon" => self.graph_epsilon = parse_num(key, v)?,
            "graph.seed" => self.graph_seed = parse_num(key, v)?,
            "sim.room" => self.sim_room = v.parse()?,
            "sim.size" => self.sim_size = v.parse()?,
            "sim.count" => self.sim_count = parse_num(key, v)?,
            "sim.seed" => self.sim_seed = parse_num(key, v)?,
            "sim.t_max" => t.t_max = parse_num(key, v)?,
            "train.episodes" => t.episodes = parse_num(key, v)?,
            "train.workers" => t.workers = parse_num(key, v)?,
            "train.gamma" => t.gamma = parse_num(key, v)?,
            "train.entropy_coef" => t.entropy_coef = parse_num(key, v)?,
            "train.value_coef" => t.value_coef = parse_num(key, v)?,
            "train.lr" => t.lr = parse_num(key, v)?,
            "train.seed" => t.seed = parse_num(key, v)?,
            "train.sync_mode" => t.sync_mode = v.parse()?,
            "train.unroll" => t.unroll = parse_num(key, v)?,
            "train.hidden" => t.hidden = parse_num(key, v)?,
            "train.zero_shot" => t.zero_shot = parse_bool(key, v)?,
            "train.log_every" => t.log_every = parse_num(key, v)?,
            "eval.split" => self.eval_split = v.parse()?,
            "eval.episodes" => self.eval_episodes = parse_num(key, v)?,
            "eval.seeds" => self.eval_seeds = parse_seeds(v)?,
            "eval.mask" => self.eval_mask = InputMask::parse(v)?,
            "paths.scenes" => self.paths_scenes = PathBuf::from(v),
            "paths.graph" => self.paths_graph = PathBuf::from(v),
            "paths.checkpoint" => self.paths_checkpoint = PathBuf::from(v),
            "paths.report" => self.paths_report = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `key = value`"))?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.embedding_grid == 0 {
            return Err(Error::Config(
                "embedding.dim and embedding.grid must be positive".into(),
            ));
        }
        if self.embedding_mode == EmbeddingMode::File && self.embedding_path.is_none() {
            return Err(Error::Config(
                "embedding.mode = file needs embedding.path".into(),
            ));
        }
        if self.graph_zones == 0 {
            return Err(Error::Config("graph.zones must be positive".into()));
        }
        if !(self.graph_epsilon >= 0.0 && self.graph_epsilon.is_finite()) {
            return Err(Error::Config(
                "graph.epsilon must be a non-negative number".into(),
            ));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval.episodes must be positive".into()));
        }
        self.train.validate()
    }

    pub fn provider(&self) -> Result<EmbeddingProvider> {
        let p = match self.embedding_mode {
            EmbeddingMode::Synthetic => {
                EmbeddingProvider::synthetic(self.embedding_seed, self.embedding_dim)
            }
            EmbeddingMode::File => {
                let path = self.embedding_path.as_ref().expect("validated");
                let p = EmbeddingProvider::load(path)?;
                if p.dim() != self.embedding_dim {
                    return Err(Error::DimensionMismatch {
                        expected: self.embedding_dim,
                        found: p.dim(),
                    });
                }
                p
            }
        };
        Ok(p.with_grid(self.embedding_grid))
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            split: self.eval_split,
            episodes_per_seed: self.eval_episodes,
            seeds: self.eval_seeds.clone(),
            t_max: self.train.t_max,
            mask: self.eval_mask,
        }
    }

    /// Every key with its effective value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let seeds: Vec<String> = self.eval_seeds.iter().map(u64::to_string).collect();
        vec![
            ("embedding.dim", self.embedding_dim.to_string()),
            (
                "embedding.mode",
                match self.embedding_mode {
                    EmbeddingMode::Synthetic => "synthetic".into(),
                    EmbeddingMode::File => "file".into(),
                },
            ),
            ("embedding.seed", self.embedding_seed.to_string()),
            (
                "embedding.path",
                self.embedding_path
                    .as_ref()
                    .map_or(String::new(), |p| p.display().to_string()),
            ),
            ("embedding.grid", self.embedding_grid.to_string()),
            ("graph.zones", self.graph_zones.to_string()),
            ("graph.epsilon", self.graph_epsilon.to_string()),
            ("graph.seed", self.graph_seed.to_string()),
            ("sim.room", self.sim_room.to_string()),
            (
                "sim.size",
                format!("{}x{}", self.sim_size.width, self.sim_size.depth),
            ),
            ("sim.count", self.sim_count.to_string()),
            ("sim.seed", self.sim_seed.to_string()),
            ("sim.t_max", t.t_max.to_string()),
            ("train.episodes", t.episodes.to_string()),
            ("train.workers", t.workers.to_string()),
            ("train.gamma", t.gamma.to_string()),
            ("train.entropy_coef", t.entropy_coef.to_string()),
            ("train.value_coef", t.value_coef.to_string()),
            ("train.lr", t.lr.to_string()),
            ("train.seed", t.seed.to_string()),
            ("train.sync_mode", t.sync_mode.to_string()),
            ("train.unroll", t.unroll.to_string()),
            ("train.hidden", t.hidden.to_string()),
            ("train.zero_shot", t.zero_shot.to_string()),
            ("train.log_every", t.log_every.to_string()),
            ("eval.split", self.eval_split.to_string()),
            ("eval.episodes", self.eval_episodes.to_string()),
            ("eval.seeds", seeds.join(",")),
            ("eval.mask", mask_text(self.eval_mask)),
            ("paths.scenes", self.paths_scenes.display().to_string()),
            ("paths.graph", self.paths_graph.display().to_string()),
            (
                "paths.checkpoint",
                self.paths_checkpoint.display().to_string(),
            ),
            ("paths.report", self.paths_report.display().to_string()),
        ]
    }

    /// `key = value` lines for artifact headers.
    pub fn echo_lines(&self) -> Vec<String> {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in self.echo_lines() {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_text(), "mem").unwrap(), c);
    }

    #[test]
    fn every_echoed_key_is_settable() {
        let mut c = Config::default();
        for (k, v) in Config::default().entries() {
            if k == "embedding.path" {
                continue;
            }
            c.set(k, &v).unwrap();
        }
        assert_eq!(c, Config::default());
    }

    #[test]
    fn overrides_apply() {
        let text = "# toy\ngraph.zones = 4\ntrain.lr=0.003\neval.seeds = 5,5,5\neval.split = zero-shot\nsim.size = 6x7\n";
        let c = Config::parse(text, "mem").unwrap();
        assert_eq!(c.graph_zones, 4);
        assert_eq!(c.train.lr, 0.003);
        assert_eq!(c.eval_seeds, vec![5, 5, 5]);
        assert_eq!(c.eval_split, SplitKind::ZeroShot);
        assert_eq!(c.sim_size, SceneSize::new(6, 7));
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = Config::parse("graph.zones = 4\ngraph.zone = 5\n", "cfg").unwrap_err();
        assert_eq!(err.category(), "parse");
        assert!(err.to_string().contains(":2"), "{err}");
        assert!(err.to_string().contains("graph.zone"));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::parse("train.gamma = 1.5\n", "m").is_err());
        assert!(Config::parse("train.zero_shot = yes\n", "m").is_err());
        assert!(Config::parse("embedding.mode = file\n", "m").is_err());
        assert!(Config::parse("no equals sign\n", "m").is_err());
    }
}

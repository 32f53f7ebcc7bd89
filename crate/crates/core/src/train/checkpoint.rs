//! `ckpt-v1` text checkpoint. One keyed record per line:
//!
//! ```text
//! ckpt-v1 D=64 N=64 M=8 H=128 seed=0
//! # free-form echo lines
//! embedding synthetic seed=0 dim=64 grid=7
//! config {"episodes":20000,...}
//! train_goals Apple,Bread,...
//! room kitchen
//! node <N floats>          (M lines)
//! edge <M floats>          (M lines)
//! param <name> <shape> <floats>   (one per tensor)
//! end
//! ```
//!
//! The graph travels with the weights so evaluation needs nothing else.
//! Floats are written in shortest round-trip form, so loading is exact.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::TrainConfig;
use crate::encoder::{EmbeddingProvider, ProviderMode};
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::nn::{ModelShape, PolicyParams, Tensor, PARAM_NAMES};

pub const CHECKPOINT_MAGIC: &str = "ckpt-v1";

#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingSpec {
    Synthetic { seed: u64, dim: usize, grid: usize },
    File { path: PathBuf, grid: usize },
}

impl EmbeddingSpec {
    pub fn of(provider: &EmbeddingProvider) -> Self {
        match provider.mode() {
            ProviderMode::Synthetic { seed } => EmbeddingSpec::Synthetic {
                seed: *seed,
                dim: provider.dim(),
                grid: provider.grid(),
            },
            ProviderMode::File { path } => EmbeddingSpec::File {
                path: path.clone(),
                grid: provider.grid(),
            },
        }
    }

    /// Rebuilds the provider the checkpoint was trained with.
    pub fn provider(&self) -> Result<EmbeddingProvider> {
        match self {
            EmbeddingSpec::Synthetic { seed, dim, grid } => {
                Ok(EmbeddingProvider::synthetic(*seed, *dim).with_grid(*grid))
            }
            EmbeddingSpec::File { path, grid } => {
                Ok(EmbeddingProvider::load(path)?.with_grid(*grid))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub graph: KnowledgeGraph,
    pub embedding: EmbeddingSpec,
    pub config: TrainConfig,
    /// Distinct goals sampled during training, sorted.
    pub train_goals: Vec<String>,
    pub echo: Vec<String>,
}

fn floats(out: &mut String, values: &[f64]) {
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let s = self.params.shape;
        let mut out = format!(
            "{CHECKPOINT_MAGIC} D={} N={} M={} H={} seed={}\n",
            s.embed, s.node, self.graph.zones, s.hidden, self.config.seed
        );
        for line in &self.echo {
            writeln!(out, "# {line}").unwrap();
        }
        match &self.embedding {
            EmbeddingSpec::Synthetic { seed, dim, grid } => {
                writeln!(out, "embedding synthetic seed={seed} dim={dim} grid={grid}").unwrap()
            }
            EmbeddingSpec::File { path, grid } => {
                writeln!(out, "embedding file grid={grid} path={}", path.display()).unwrap()
            }
        }
        let config = serde_json::to_string(&self.config).expect("config serializes");
        writeln!(out, "config {config}").unwrap();
        let goals = if self.train_goals.is_empty() {
            "-".to_string()
        } else {
            self.train_goals.join(",")
        };
        writeln!(out, "train_goals {goals}").unwrap();
        writeln!(out, "room {}", self.graph.room).unwrap();
        for row in self.graph.nodes.chunks(self.graph.dim) {
            out.push_str("node");
            floats(&mut out, row);
        }
        for row in self.graph.edges.chunks(self.graph.zones) {
            out.push_str("edge");
            floats(&mut out, row);
        }
        for (name, t) in self.params.tensors() {
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            write!(out, "param {name} {}", shape.join("x")).unwrap();
            floats(&mut out, t.data());
        }
        out.push_str("end\n");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.trim().is_empty());
        let (n, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty checkpoint"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.first() != Some(&CHECKPOINT_MAGIC) {
            return Err(Error::parse(
                origin,
                n,
                format!("expected `{CHECKPOINT_MAGIC}` header"),
            ));
        }
        let field = |key: &str| -> Result<u64> {
            fields
                .iter()
                .find_map(|f| f.strip_prefix(key)?.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::parse(origin, n, format!("header lacks `{key}=`")))
        };
        let shape = ModelShape {
            embed: field("D")? as usize,
            node: field("N")? as usize,
            hidden: field("H")? as usize,
        };
        let zones = field("M")? as usize;

        let mut echo = Vec::new();
        let mut embedding = None;
        let mut config: Option<TrainConfig> = None;
        let mut train_goals = None;
        let mut room = None;
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        let mut params = PolicyParams::zeros(shape);
        let mut seen = Vec::new();
        let mut ended = false;

        for (n, line) in lines {
            if let Some(rest) = line.trim_start().strip_prefix('#') {
                echo.push(rest.strip_prefix(' ').unwrap_or(rest).to_string());
                continue;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            let err = |msg: String| Error::parse(origin, n, msg);
            let parse_floats = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| err(format!("unparsable float `{v}`")))
                    })
                    .collect()
            };
            match key {
                "embedding" => embedding = Some(parse_embedding(rest).map_err(err)?),
                "config" => {
                    config = Some(
                        serde_json::from_str(rest).map_err(|e| err(format!("bad config: {e}")))?,
                    )
                }
                "train_goals" => {
                    train_goals = Some(match rest.trim() {
                        "-" => Vec::new(),
                        list => list.split(',').map(str::to_string).collect(),
                    })
                }
                "room" => room = Some(rest.trim().parse().map_err(|e: Error| err(e.to_string()))?),
                "node" | "edge" => {
                    let row = parse_floats(rest)?;
                    let (width, dst) = if key == "node" {
                        (shape.node, &mut nodes)
                    } else {
                        (zones, &mut edges)
                    };
                    if row.len() != width {
                        return Err(err(format!(
                            "{key} row has {} values, expected {width}",
                            row.len()
                        )));
                    }
                    dst.extend(row);
                }
                "param" => {
                    let mut parts = rest.splitn(3, ' ');
                    let name = parts.next().unwrap_or("");
                    let dims = parts.next().unwrap_or("");
                    let values = parse_floats(parts.next().unwrap_or(""))?;
                    let dims: Vec<usize> = dims
                        .split('x')
                        .map(|d| d.parse().map_err(|_| err(format!("bad shape `{dims}`"))))
                        .collect::<Result<_>>()?;
                    let tensor = params
                        .tensor_mut(name)
                        .ok_or_else(|| err(format!("unknown parameter `{name}`")))?;
                    if tensor.shape() != dims.as_slice() {
                        return Err(err(format!(
                            "parameter `{name}` has shape {dims:?}, header implies {:?}",
                            tensor.shape()
                        )));
                    }
                    *tensor = Tensor::from_vec(&dims, values).map_err(|e| err(e.to_string()))?;
                    seen.push(name.to_string());
                }
                "end" => {
                    ended = true;
                    break;
                }
                _ => return Err(err(format!("unknown record `{key}`"))),
            }
        }
        let missing = |what: &str| Error::parse(origin, 0, format!("checkpoint lacks {what}"));
        if !ended {
            return Err(missing("the `end` marker (truncated file?)"));
        }
        if let Some(name) = PARAM_NAMES.iter().find(|p| !seen.iter().any(|s| s == *p)) {
            return Err(missing(&format!("parameter `{name}`")));
        }
        if nodes.len() != zones * shape.node || edges.len() != zones * zones {
            return Err(missing(&format!("{zones} node and {zones} edge rows")));
        }
        let graph = KnowledgeGraph {
            zones,
            dim: shape.node,
            room: room.ok_or_else(|| missing("`room`"))?,
            nodes,
            edges,
        };
        graph.validate()?;
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters in {origin}")));
        }
        Ok(Checkpoint {
            params,
            graph,
            embedding: embedding.ok_or_else(|| missing("`embedding`"))?,
            config: config.ok_or_else(|| missing("`config`"))?,
            train_goals: train_goals.ok_or_else(|| missing("`train_goals`"))?,
            echo,
        })
    }
}

fn parse_embedding(rest: &str) -> std::result::Result<EmbeddingSpec, String> {
    let (kind, tail) = rest.split_once(' ').unwrap_or((rest, ""));
    let kv = |key: &str| -> std::result::Result<&str, String> {
        tail.split_whitespace()
            .find_map(|f| f.strip_prefix(key)?.strip_prefix('='))
            .ok_or_else(|| format!("embedding record lacks `{key}=`"))
    };
    let num = |key: &str| -> std::result::Result<u64, String> {
        kv(key)?
            .parse()
            .map_err(|_| format!("bad `{key}` in embedding record"))
    };
    match kind {
        "synthetic" => Ok(EmbeddingSpec::Synthetic {
            seed: num("seed")?,
            dim: num("dim")? as usize,
            grid: num("grid")? as usize,
        }),
        "file" => {
            let path = tail
                .split_once("path=")
                .map(|(_, p)| p)
                .ok_or("embedding record lacks `path=`")?;
            Ok(EmbeddingSpec::File {
                path: PathBuf::from(path),
                grid: num("grid")? as usize,
            })
        }
        _ => Err(format!("unknown embedding kind `{kind}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RoomCategory;

    fn sample() -> Checkpoint {
        let shape = ModelShape {
            embed: 3,
            node: 3,
            hidden: 4,
        };
        let mut params = PolicyParams::init(shape, 9);
        params.lambda_raw.data_mut()[0] = -0.123456789012345;
        Checkpoint {
            params,
            graph: KnowledgeGraph {
                zones: 2,
                dim: 3,
                room: RoomCategory::Bathroom,
                nodes: vec![0.1, 0.2, 0.3, 1.0 / 3.0, 0.0, -0.5],
                edges: vec![1.0, 0.25, 0.25, 1.0],
            },
            embedding: EmbeddingSpec::Synthetic {
                seed: 5,
                dim: 3,
                grid: 7,
            },
            config: TrainConfig::default(),
            train_goals: vec!["Apple".into(), "Towel".into()],
            echo: vec!["trained for a test".into()],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::parse(&c.to_text(), "mem").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn file_embedding_round_trip() {
        let mut c = sample();
        c.embedding = EmbeddingSpec::File {
            path: PathBuf::from("/tmp/some dir/emb.txt"),
            grid: 5,
        };
        assert_eq!(
            Checkpoint::parse(&c.to_text(), "mem").unwrap().embedding,
            c.embedding
        );
    }

    #[test]
    fn truncation_is_reported() {
        let text = sample().to_text();
        let cut: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        let err = Checkpoint::parse(&cut, "mem").unwrap_err();
        assert_eq!(err.category(), "parse");
    }

    #[test]
    fn wrong_shape_names_the_line() {
        let text = sample()
            .to_text()
            .replace("param gcn.w1 3x3", "param gcn.w1 3x4");
        let err = Checkpoint::parse(&text, "mem").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gcn.w1"), "{msg}");
    }

    #[test]
    fn bad_magic() {
        assert!(Checkpoint::parse("kg-v1 M=1\n", "mem").is_err());
    }
}

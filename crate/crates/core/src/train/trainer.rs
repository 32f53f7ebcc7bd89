//! Multi-worker training loop.
//!
//! Workers are logical: each owns one episode at a time and contributes one
//! segment of up to `unroll` steps per update. In synchronous mode all
//! active workers advance in lockstep and their gradients are summed in
//! worker order, so the result depends only on the seed and the worker
//! count, never on how many threads carry them. Asynchronous mode lets each
//! worker update the shared parameters as soon as its segment is done.

use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::a2c::{apply, segment_gradients};
use super::{
    ActionSelection, Checkpoint, EmbeddingSpec, EpisodeRunner, InputMask, SyncMode, TrainConfig,
};
use crate::categories::ZERO_SHOT_GOALS;
use crate::encoder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::graph::KnowledgeGraph;
use crate::nn::{Adam, ModelShape, PolicyParams};
use crate::planner::GraphState;
use crate::seed::{rng_for, sub_seed};
use crate::sim::{reset_episode, Scene};

/// Window for the moving success rate.
pub const STATS_WINDOW: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub episodes: usize,
    pub updates: usize,
    pub moving_sr: f64,
    pub mean_reward: f64,
    pub mean_length: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalLogEntry {
    pub episode: usize,
    pub scene: String,
    pub goal: String,
    pub success: bool,
    pub steps: usize,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub stats: Vec<StatsRecord>,
    /// One entry per finished episode, in completion order.
    pub goal_log: Vec<GoalLogEntry>,
    pub skipped_updates: usize,
}

impl TrainOutcome {
    /// Success rate over the last `window` finished episodes.
    pub fn moving_success_rate(&self, window: usize) -> f64 {
        moving_rate(&self.goal_log, window)
    }
}

pub const GOAL_LOG_MAGIC: &str = "goallog-v1";

/// Magic line, `# ` echo lines, then one JSON object per episode.
pub fn write_goal_log(log: &[GoalLogEntry], echo: &[String]) -> String {
    let mut out = format!("{GOAL_LOG_MAGIC}\n");
    for line in echo {
        out.push_str(&format!("# {line}\n"));
    }
    for e in log {
        out.push_str(&serde_json::to_string(e).expect("entry serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_goal_log(text: &str, origin: &str) -> Result<Vec<GoalLogEntry>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, GOAL_LOG_MAGIC)) => {}
        _ => {
            return Err(Error::parse(
                origin,
                1,
                format!("expected `{GOAL_LOG_MAGIC}` header"),
            ))
        }
    }
    lines
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::parse(origin, i + 1, e.to_string()))
        })
        .collect()
}

fn moving_rate(log: &[GoalLogEntry], window: usize) -> f64 {
    let tail = &log[log.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|e| e.success).count() as f64 / tail.len() as f64
}

struct Sampler {
    scenes: Vec<Arc<Scene>>,
    /// Per scene, the goals episodes may ask for.
    goals: Vec<Vec<String>>,
    seed: u64,
    t_max: usize,
}

struct Episode {
    index: usize,
    scene: Arc<Scene>,
    goal: String,
    reset_seed: u64,
}

impl Sampler {
    fn new(scenes: &[Scene], cfg: &TrainConfig) -> Result<Self> {
        let mut kept = Vec::new();
        let mut goals = Vec::new();
        for s in scenes {
            let g: Vec<String> = s
                .goal_categories()
                .into_iter()
                .filter(|g| !cfg.zero_shot || !ZERO_SHOT_GOALS.contains(&g.as_str()))
                .collect();
            if !g.is_empty() {
                kept.push(Arc::new(s.clone()));
                goals.push(g);
            }
        }
        if kept.is_empty() {
            return Err(Error::Config("no scene contains a trainable goal".into()));
        }
        Ok(Sampler {
            scenes: kept,
            goals,
            seed: cfg.seed,
            t_max: cfg.t_max,
        })
    }

    fn episode(&self, index: usize) -> Episode {
        let mut rng = rng_for(self.seed, &[b"episode", &(index as u64).to_le_bytes()]);
        let s = rng.random_range(0..self.scenes.len());
        let g = rng.random_range(0..self.goals[s].len());
        Episode {
            index,
            scene: self.scenes[s].clone(),
            goal: self.goals[s][g].clone(),
            reset_seed: rng.random(),
        }
    }

    fn runner<'a>(
        &self,
        ep: &Episode,
        template: &GraphState,
        provider: &'a EmbeddingProvider,
        hidden: usize,
    ) -> Result<EpisodeRunner<'a>> {
        let env = reset_episode(ep.scene.clone(), &ep.goal, ep.reset_seed, self.t_max)?;
        let selection = ActionSelection::Sample(rng_for(
            self.seed,
            &[b"actions", &(ep.index as u64).to_le_bytes()],
        ));
        EpisodeRunner::new(
            env,
            template.clone(),
            provider,
            hidden,
            InputMask::NONE,
            selection,
        )
    }
}

struct Slot<'a> {
    episode: Episode,
    runner: EpisodeRunner<'a>,
}

struct Log<'f> {
    cfg: TrainConfig,
    goal_log: Vec<GoalLogEntry>,
    stats: Vec<StatsRecord>,
    recent: VecDeque<(f64, usize)>,
    on_stats: &'f mut (dyn FnMut(&StatsRecord) + Send),
}

impl Log<'_> {
    fn finish(&mut self, slot: &Slot, updates: usize, lambda: f64) {
        let steps = slot.runner.env.step_count;
        self.goal_log.push(GoalLogEntry {
            episode: slot.episode.index,
            scene: slot.episode.scene.id.clone(),
            goal: slot.episode.goal.clone(),
            success: slot.runner.env.success,
            steps,
            reward: slot.runner.total_reward,
        });
        self.recent.push_back((slot.runner.total_reward, steps));
        if self.recent.len() > STATS_WINDOW {
            self.recent.pop_front();
        }
        if self.goal_log.len().is_multiple_of(self.cfg.log_every) {
            self.emit(updates, lambda);
        }
    }

    fn emit(&mut self, updates: usize, lambda: f64) {
        let n = self.recent.len().max(1) as f64;
        let record = StatsRecord {
            episodes: self.goal_log.len(),
            updates,
            moving_sr: moving_rate(&self.goal_log, STATS_WINDOW),
            mean_reward: self.recent.iter().map(|r| r.0).sum::<f64>() / n,
            mean_length: self.recent.iter().map(|r| r.1 as f64).sum::<f64>() / n,
            lambda,
        };
        (self.on_stats)(&record);
        self.stats.push(record);
    }
}

/// Threads to use: the worker count, capped by `ZONEGRAPH_THREADS`.
pub fn thread_count(workers: usize) -> usize {
    let cap = std::env::var("ZONEGRAPH_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    cap.map_or(workers, |c| workers.min(c)).max(1)
}

/// Trains a fresh policy on `scenes` with the given room graph.
pub fn train(
    scenes: &[Scene],
    graph: &KnowledgeGraph,
    provider: &EmbeddingProvider,
    cfg: &TrainConfig,
    on_stats: &mut (dyn FnMut(&StatsRecord) + Send),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    graph.validate()?;
    if provider.dim() != graph.dim {
        return Err(Error::DimensionMismatch {
            expected: graph.dim,
            found: provider.dim(),
        });
    }
    if let Some(s) = scenes.iter().find(|s| s.room != graph.room) {
        return Err(Error::RoomMismatch(format!(
            "scene `{}` is {} but the graph is for {}",
            s.id, s.room, graph.room
        )));
    }
    let sampler = Sampler::new(scenes, cfg)?;
    let shape = ModelShape {
        embed: provider.dim(),
        node: graph.dim,
        hidden: cfg.hidden,
    };
    let mut params = PolicyParams::init(shape, sub_seed(cfg.seed, &[b"params"]));
    let mut adam = Adam::new(&params, cfg.lr);
    let template = GraphState::new(Arc::new(graph.clone()), params.lambda())?;
    let mut log = Log {
        cfg: cfg.clone(),
        goal_log: Vec::new(),
        stats: Vec::new(),
        recent: VecDeque::new(),
        on_stats,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(cfg.workers))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let (updates, skipped) = match cfg.sync_mode {
        SyncMode::Synchronous => pool.install(|| {
            run_sync(
                &sampler,
                &template,
                provider,
                cfg,
                &mut params,
                &mut adam,
                &mut log,
            )
        })?,
        SyncMode::Asynchronous => run_async(
            &sampler,
            &template,
            provider,
            cfg,
            &mut params,
            &mut adam,
            &mut log,
        )?,
    };
    if log.stats.last().map(|s| s.episodes) != Some(log.goal_log.len()) {
        log.emit(updates, params.lambda());
    }

    let train_goals: BTreeSet<String> = log.goal_log.iter().map(|e| e.goal.clone()).collect();
    let checkpoint = Checkpoint {
        params,
        graph: graph.clone(),
        embedding: EmbeddingSpec::of(provider),
        config: cfg.clone(),
        train_goals: train_goals.into_iter().collect(),
        echo: Vec::new(),
    };
    Ok(TrainOutcome {
        checkpoint,
        stats: log.stats,
        goal_log: log.goal_log,
        skipped_updates: skipped,
    })
}

fn run_sync<'a>(
    sampler: &Sampler,
    template: &GraphState,
    provider: &'a EmbeddingProvider,
    cfg: &TrainConfig,
    params: &mut PolicyParams,
    adam: &mut Adam,
    log: &mut Log,
) -> Result<(usize, usize)> {
    let mut next = 0;
    let mut slots: Vec<Option<Slot<'a>>> = Vec::with_capacity(cfg.workers);
    for _ in 0..cfg.workers {
        slots.push(if next < cfg.episodes {
            let episode = sampler.episode(next);
            next += 1;
            let runner = sampler.runner(&episode, template, provider, cfg.hidden)?;
            Some(Slot { episode, runner })
        } else {
            None
        });
    }
    let adjacency = template.adjacency();
    let zones = template.zones();
    let (mut updates, mut skipped) = (0, 0);
    while slots.iter().any(Option::is_some) {
        let snapshot: &PolicyParams = params;
        let parts: Vec<Option<_>> = slots
            .par_iter_mut()
            .map(|slot| {
                slot.as_mut()
                    .map(|s| {
                        let traj = s.runner.run_segment(snapshot, cfg.unroll)?;
                        segment_gradients(snapshot, adjacency, zones, &traj, cfg)
                    })
                    .transpose()
            })
            .collect::<Result<_>>()?;
        let stats = apply(params, adam, parts.into_iter().flatten().collect())?;
        updates += 1;
        if !stats.applied {
            skipped += 1;
        }
        for slot in slots.iter_mut() {
            if slot.as_ref().is_some_and(|s| s.runner.finished()) {
                log.finish(slot.as_ref().expect("checked"), updates, params.lambda());
                *slot = if next < cfg.episodes {
                    let episode = sampler.episode(next);
                    next += 1;
                    let runner = sampler.runner(&episode, template, provider, cfg.hidden)?;
                    Some(Slot { episode, runner })
                } else {
                    None
                };
            }
        }
    }
    Ok((updates, skipped))
}

struct Shared<'l, 'f> {
    params: PolicyParams,
    adam: Adam,
    next: usize,
    updates: usize,
    skipped: usize,
    log: &'l mut Log<'f>,
    error: Option<Error>,
}

fn run_async(
    sampler: &Sampler,
    template: &GraphState,
    provider: &EmbeddingProvider,
    cfg: &TrainConfig,
    params: &mut PolicyParams,
    adam: &mut Adam,
    log: &mut Log,
) -> Result<(usize, usize)> {
    let shared = Mutex::new(Shared {
        params: params.clone(),
        adam: adam.clone(),
        next: 0,
        updates: 0,
        skipped: 0,
        log,
        error: None,
    });
    let claim = |shared: &Mutex<Shared>| -> Option<Episode> {
        let mut g = shared.lock().expect("training lock");
        if g.error.is_some() || g.next >= cfg.episodes {
            return None;
        }
        let ep = sampler.episode(g.next);
        g.next += 1;
        Some(ep)
    };
    let worker = |shared: &Mutex<Shared>| -> Result<()> {
        while let Some(episode) = claim(shared) {
            let mut slot = Slot {
                runner: sampler.runner(&episode, template, provider, cfg.hidden)?,
                episode,
            };
            while !slot.runner.finished() {
                let snapshot = shared.lock().expect("training lock").params.clone();
                let traj = slot.runner.run_segment(&snapshot, cfg.unroll)?;
                let part = segment_gradients(
                    &snapshot,
                    template.adjacency(),
                    template.zones(),
                    &traj,
                    cfg,
                )?;
                let mut g = shared.lock().expect("training lock");
                let g = &mut *g;
                let stats = apply(&mut g.params, &mut g.adam, vec![part])?;
                g.updates += 1;
                if !stats.applied {
                    g.skipped += 1;
                }
            }
            let mut g = shared.lock().expect("training lock");
            let (updates, lambda) = (g.updates, g.params.lambda());
            g.log.finish(&slot, updates, lambda);
        }
        Ok(())
    };
    std::thread::scope(|scope| {
        for _ in 0..cfg.workers {
            scope.spawn(|| {
                if let Err(e) = worker(&shared) {
                    shared.lock().expect("training lock").error.get_or_insert(e);
                }
            });
        }
    });
    let s = shared.into_inner().expect("training lock");
    if let Some(e) = s.error {
        return Err(e);
    }
    *params = s.params;
    *adam = s.adam;
    Ok((s.updates, s.skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_category_graph, DEFAULT_EPSILON};
    use crate::sim::RoomCategory;
    use crate::sim::{generate_scene, LayoutTable, SceneSize};

    fn setup() -> (Vec<Scene>, KnowledgeGraph, EmbeddingProvider) {
        let table = LayoutTable::default();
        let scenes: Vec<Scene> = (0..2)
            .map(|s| {
                generate_scene(&table, RoomCategory::Kitchen, SceneSize::new(5, 5), s).unwrap()
            })
            .collect();
        let provider = EmbeddingProvider::synthetic(0, 8);
        let graph = build_category_graph(&scenes, &provider, 3, DEFAULT_EPSILON, 0).unwrap();
        (scenes, graph, provider)
    }

    fn small(sync_mode: SyncMode) -> TrainConfig {
        TrainConfig {
            episodes: 12,
            workers: 3,
            hidden: 8,
            t_max: 20,
            unroll: 5,
            log_every: 5,
            sync_mode,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn synchronous_runs_are_reproducible() {
        let (scenes, graph, provider) = setup();
        let cfg = small(SyncMode::Synchronous);
        let a = train(&scenes, &graph, &provider, &cfg, &mut |_| {}).unwrap();
        let b = train(&scenes, &graph, &provider, &cfg, &mut |_| {}).unwrap();
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
        assert_eq!(a.goal_log, b.goal_log);
        assert_eq!(a.goal_log.len(), 12);
        // records at 5, 10 and the final 12
        assert_eq!(
            a.stats.iter().map(|s| s.episodes).collect::<Vec<_>>(),
            vec![5, 10, 12]
        );
    }

    #[test]
    fn asynchronous_mode_finishes_every_episode() {
        let (scenes, graph, provider) = setup();
        let out = train(
            &scenes,
            &graph,
            &provider,
            &small(SyncMode::Asynchronous),
            &mut |_| {},
        )
        .unwrap();
        let mut seen: Vec<usize> = out.goal_log.iter().map(|e| e.episode).collect();
        seen.sort();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
        assert!(out.checkpoint.params.is_finite());
    }

    #[test]
    fn zero_shot_training_never_sees_held_out_goals() {
        let (scenes, graph, provider) = setup();
        let cfg = TrainConfig {
            zero_shot: true,
            ..small(SyncMode::Synchronous)
        };
        let out = train(&scenes, &graph, &provider, &cfg, &mut |_| {}).unwrap();
        for g in &out.checkpoint.train_goals {
            assert!(!ZERO_SHOT_GOALS.contains(&g.as_str()));
        }
    }

    #[test]
    fn goal_log_round_trips() {
        let entry = |reward| GoalLogEntry {
            episode: 3,
            scene: "kitchen-1".into(),
            goal: "Sink".into(),
            success: true,
            steps: 12,
            reward,
        };
        // ten summed step penalties; a lossy float parser reads this back as -0.1
        let log = vec![entry(4.89), entry(-0.09999999999999999)];
        let text = write_goal_log(&log, &["train.seed = 0".into()]);
        assert_eq!(parse_goal_log(&text, "mem").unwrap(), log);
        let err = parse_goal_log("goallog-v0\n", "mem").unwrap_err();
        assert_eq!(err.category(), "parse");
    }

    #[test]
    fn rejects_mismatched_room() {
        let (scenes, mut graph, provider) = setup();
        graph.room = RoomCategory::Bedroom;
        let err = train(
            &scenes,
            &graph,
            &provider,
            &small(SyncMode::Synchronous),
            &mut |_| {},
        )
        .unwrap_err();
        assert_eq!(err.category(), "category-mismatch");
    }

    #[test]
    fn thread_cap_does_not_change_results() {
        let (scenes, graph, provider) = setup();
        let cfg = small(SyncMode::Synchronous);
        let a = train(&scenes, &graph, &provider, &cfg, &mut |_| {}).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| train(&scenes, &graph, &provider, &cfg, &mut |_| {}).unwrap());
        assert_eq!(a.checkpoint.params, b.checkpoint.params);
    }
}

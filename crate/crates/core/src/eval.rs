//! Evaluation: success judgment, SR / SPL / DTS, triplicate aggregation and
//! the goal splits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::categories::{all_goals, ZERO_SHOT_GOALS};
use crate::error::{Error, Result};
use crate::planner::GraphState;
use crate::seed::{rng_for, sub_seed};
use crate::sim::{
    reset_episode, shortest_path_length, step, visible_objects, Action, EpisodeState, GoalDistance,
    Scene,
};
use crate::train::{thread_count, ActionSelection, Checkpoint, EpisodeRunner, InputMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    General,
    ZeroShot,
    /// The sixteen goals a zero-shot run trains on.
    Seen,
}

impl std::str::FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(SplitKind::General),
            "zero-shot" | "zero_shot" => Ok(SplitKind::ZeroShot),
            "seen" => Ok(SplitKind::Seen),
            _ => Err(Error::Usage(format!(
                "unknown split `{s}` (general | zero-shot | seen)"
            ))),
        }
    }
}

impl std::fmt::Display for SplitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitKind::General => "general",
            SplitKind::ZeroShot => "zero_shot",
            SplitKind::Seen => "seen",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoalSplit {
    pub kind: SplitKind,
    pub train_goals: BTreeSet<String>,
    pub test_goals: BTreeSet<String>,
}

/// Every goal is both trained and tested.
pub fn general_split() -> GoalSplit {
    GoalSplit {
        kind: SplitKind::General,
        train_goals: all_goals(),
        test_goals: all_goals(),
    }
}

/// The six held-out categories versus the other sixteen.
pub fn zero_shot_split() -> GoalSplit {
    let test_goals: BTreeSet<String> = ZERO_SHOT_GOALS.iter().map(|s| s.to_string()).collect();
    let train_goals: BTreeSet<String> = all_goals().difference(&test_goals).cloned().collect();
    assert!(train_goals.is_disjoint(&test_goals));
    GoalSplit {
        kind: SplitKind::ZeroShot,
        train_goals,
        test_goals,
    }
}

impl GoalSplit {
    pub fn of(kind: SplitKind) -> Self {
        match kind {
            SplitKind::General => general_split(),
            SplitKind::ZeroShot => zero_shot_split(),
            SplitKind::Seen => {
                let zs = zero_shot_split();
                GoalSplit {
                    kind: SplitKind::Seen,
                    train_goals: zs.train_goals.clone(),
                    test_goals: zs.train_goals,
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: usize,
    pub scene: String,
    pub goal: String,
    pub success: bool,
    /// Meters actually travelled.
    pub path_length: f64,
    /// Geodesic meters from the start cell to the nearest success cell.
    pub shortest_length: f64,
    pub final_dts: f64,
    pub steps: usize,
}

/// Done was issued and the goal was visible within range at that moment.
pub fn judge(state: &EpisodeState) -> bool {
    state.terminated
        && state.done_issued
        && visible_objects(&state.scene, &state.pose).sees(&state.goal)
}

/// Success weighted by path length, in percent.
pub fn spl(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let sum: f64 = records
        .iter()
        .filter(|r| r.success)
        .map(|r| {
            let longest = r.path_length.max(r.shortest_length);
            if longest == 0.0 {
                1.0
            } else {
                r.shortest_length / longest
            }
        })
        .sum();
    100.0 * sum / records.len() as f64
}

/// Success rate in percent.
pub fn success_rate(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    100.0 * records.iter().filter(|r| r.success).count() as f64 / records.len() as f64
}

/// Final geodesic distance to the goal region.
pub fn dts(state: &EpisodeState) -> Result<f64> {
    GoalDistance::new(&state.scene, &state.goal)?
        .meters(&state.pose)
        .ok_or_else(|| Error::Unreachable(state.goal.clone()))
}

pub fn mean_dts(records: &[EpisodeRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| r.final_dts).sum::<f64>() / records.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanStd {
                mean: 0.0,
                std: 0.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub sr: f64,
    pub spl: f64,
    pub dts: f64,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: SplitKind,
    pub policy: String,
    pub mask: InputMask,
    pub episodes_per_seed: usize,
    pub per_seed: Vec<SeedMetrics>,
    pub sr: MeanStd,
    pub spl: MeanStd,
    pub dts: MeanStd,
}

impl MetricsReport {
    fn from_records(
        split: SplitKind,
        policy: &str,
        mask: InputMask,
        episodes_per_seed: usize,
        seeds: &[u64],
        records: &[EpisodeRecord],
    ) -> Self {
        let per_seed: Vec<SeedMetrics> = seeds
            .iter()
            .enumerate()
            .map(|(k, &seed)| {
                let rs = &records[k * episodes_per_seed..(k + 1) * episodes_per_seed];
                SeedMetrics {
                    seed,
                    sr: success_rate(rs),
                    spl: spl(rs),
                    dts: mean_dts(rs),
                    episodes: rs.len(),
                }
            })
            .collect();
        let col =
            |f: fn(&SeedMetrics) -> f64| MeanStd::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        MetricsReport {
            split,
            policy: policy.to_string(),
            mask,
            episodes_per_seed,
            sr: col(|s| s.sr),
            spl: col(|s| s.spl),
            dts: col(|s| s.dts),
            per_seed,
        }
    }

    /// `SR=.. ±.. SPL=.. ±.. DTS=.. ±..`
    pub fn summary_line(&self) -> String {
        format!(
            "SR={:.2} ±{:.2} SPL={:.2} ±{:.2} DTS={:.3} ±{:.3}",
            // adding zero turns a negative zero positive
            self.sr.mean + 0.0,
            self.sr.std + 0.0,
            self.spl.mean + 0.0,
            self.spl.std + 0.0,
            self.dts.mean + 0.0,
            self.dts.std + 0.0
        )
    }
}

pub enum EvalPolicy<'a> {
    Trained(&'a Checkpoint),
    /// Uniform over the six actions.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub split: SplitKind,
    pub episodes_per_seed: usize,
    pub seeds: Vec<u64>,
    pub t_max: usize,
    pub mask: InputMask,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: SplitKind::General,
            episodes_per_seed: 100,
            seeds: vec![1, 2, 3],
            t_max: crate::sim::DEFAULT_T_MAX,
            mask: InputMask::NONE,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Seed-major, then episode index.
    pub records: Vec<EpisodeRecord>,
}

/// The (scene, goal) pairs an evaluation cycles through, in scene order then
/// goal order.
pub fn episode_pairs(scenes: &[Scene], split: &GoalSplit) -> Vec<(usize, String)> {
    let mut pairs = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        for g in s.goal_categories() {
            if split.test_goals.contains(&g) {
                pairs.push((i, g));
            }
        }
    }
    pairs
}

pub fn evaluate(policy: &EvalPolicy, scenes: &[Scene], cfg: &EvalConfig) -> Result<Evaluation> {
    let split = GoalSplit::of(cfg.split);
    if cfg.seeds.is_empty() || cfg.episodes_per_seed == 0 {
        return Err(Error::Config(
            "evaluation needs at least one seed and one episode".into(),
        ));
    }
    if let EvalPolicy::Trained(ckpt) = policy {
        if let Some(s) = scenes.iter().find(|s| s.room != ckpt.graph.room) {
            return Err(Error::RoomMismatch(format!(
                "scene `{}` is {} but the checkpoint graph is for {}",
                s.id, s.room, ckpt.graph.room
            )));
        }
        if cfg.split == SplitKind::ZeroShot {
            if let Some(g) = ckpt
                .train_goals
                .iter()
                .find(|g| split.test_goals.contains(*g))
            {
                return Err(Error::Config(format!(
                    "checkpoint was trained on held-out goal `{g}`; zero-shot evaluation is invalid"
                )));
            }
        }
    }
    let pairs = episode_pairs(scenes, &split);
    if pairs.is_empty() {
        return Err(Error::Config("no scene contains a test goal".into()));
    }
    let scenes: Vec<Arc<Scene>> = scenes.iter().cloned().map(Arc::new).collect();

    let prepared = match policy {
        EvalPolicy::Trained(ckpt) => {
            let provider = ckpt.embedding.provider()?;
            let template = GraphState::new(Arc::new(ckpt.graph.clone()), ckpt.params.lambda())?;
            Some((ckpt, provider, template))
        }
        EvalPolicy::Random => None,
    };

    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..cfg.episodes_per_seed).map(move |i| (s, i)))
        .collect();
    let threads = thread_count(std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records: Vec<EpisodeRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(seed, i)| {
                let (si, goal) = &pairs[i % pairs.len()];
                let reset_seed = sub_seed(seed, &[b"eval-reset", &(i as u64).to_le_bytes()]);
                let env = reset_episode(scenes[*si].clone(), goal, reset_seed, cfg.t_max)?;
                let shortest = shortest_path_length(&env.scene, &env.pose, goal)?;
                let end = match &prepared {
                    Some((ckpt, provider, template)) => {
                        let mut runner = EpisodeRunner::new(
                            env,
                            template.clone(),
                            provider,
                            ckpt.params.shape.hidden,
                            cfg.mask,
                            ActionSelection::Greedy,
                        )?;
                        runner.run_segment(&ckpt.params, usize::MAX)?;
                        runner.env
                    }
                    None => {
                        let mut env = env;
                        let mut rng = rng_for(seed, &[b"eval-random", &(i as u64).to_le_bytes()]);
                        while !env.terminated {
                            let a = Action::from_index(rng.random_range(0..Action::COUNT))
                                .expect("in range");
                            step(&mut env, a)?;
                        }
                        env
                    }
                };
                let success = judge(&end);
                Ok(EpisodeRecord {
                    seed,
                    episode: i,
                    scene: end.scene.id.clone(),
                    goal: goal.clone(),
                    success,
                    path_length: end.path_length,
                    shortest_length: shortest,
                    final_dts: dts(&end)?,
                    steps: end.step_count,
                })
            })
            .collect::<Result<_>>()
    })?;
    let name = match policy {
        EvalPolicy::Trained(_) => "trained",
        EvalPolicy::Random => "random",
    };
    let report = MetricsReport::from_records(
        cfg.split,
        name,
        cfg.mask,
        cfg.episodes_per_seed,
        &cfg.seeds,
        &records,
    );
    Ok(Evaluation { report, records })
}

pub const REPORT_MAGIC: &str = "report-v1";

/// Magic line, `# `-prefixed echo lines, one JSON record per episode, the
/// report as JSON, then the summary line.
pub fn write_report(eval: &Evaluation, echo: &[String]) -> String {
    let mut out = format!("{REPORT_MAGIC}\n");
    for line in echo {
        writeln!(out, "# {line}").unwrap();
    }
    for r in &eval.records {
        writeln!(
            out,
            "{}",
            serde_json::to_string(r).expect("record serializes")
        )
        .unwrap();
    }
    writeln!(
        out,
        "{}",
        serde_json::to_string(&eval.report).expect("report serializes")
    )
    .unwrap();
    writeln!(out, "{}", eval.report.summary_line()).unwrap();
    out
}

pub fn save_report(path: &Path, eval: &Evaluation, echo: &[String]) -> Result<()> {
    std::fs::write(path, write_report(eval, echo)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{HeightBand, ObjectInstance, Pose, RoomCategory};

    fn record(success: bool, shortest: f64, path: f64, dts: f64) -> EpisodeRecord {
        EpisodeRecord {
            seed: 0,
            episode: 0,
            scene: "s".into(),
            goal: "Apple".into(),
            success,
            path_length: path,
            shortest_length: shortest,
            final_dts: dts,
            steps: 1,
        }
    }

    #[test]
    fn spl_examples() {
        assert_eq!(spl(&[record(true, 2.0, 2.0, 0.0)]), 100.0);
        assert_eq!(spl(&[record(false, 2.0, 2.0, 1.0)]), 0.0);
        assert_eq!(spl(&[record(true, 2.0, 4.0, 0.0)]), 50.0);
        assert_eq!(spl(&[record(true, 0.0, 0.0, 0.0)]), 100.0);
    }

    #[test]
    fn adding_a_failure_never_helps() {
        let mut rs = vec![record(true, 1.0, 2.0, 0.0), record(false, 1.0, 3.0, 2.0)];
        let (sr, sp) = (success_rate(&rs), spl(&rs));
        rs.push(record(false, 1.5, 1.0, 2.5));
        assert!(success_rate(&rs) <= sr && spl(&rs) <= sp);
        assert!(spl(&rs) <= success_rate(&rs));
    }

    #[test]
    fn population_std() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(MeanStd::of(&[5.0, 5.0, 5.0]).std, 0.0);
    }

    #[test]
    fn zero_shot_split_is_the_six() {
        let s = zero_shot_split();
        assert_eq!(s.test_goals.len(), 6);
        assert_eq!(s.train_goals.len(), 16);
        assert!(s.train_goals.is_disjoint(&s.test_goals));
        let union: BTreeSet<String> = s.train_goals.union(&s.test_goals).cloned().collect();
        assert_eq!(union, all_goals());
    }

    #[test]
    fn seen_split_tests_the_training_goals() {
        let seen = GoalSplit::of(SplitKind::Seen);
        assert_eq!(seen.test_goals, zero_shot_split().train_goals);
        assert_eq!("seen".parse::<SplitKind>().unwrap(), SplitKind::Seen);
    }

    fn corridor() -> Arc<Scene> {
        // 1 × 8 corridor with an apple at the far end
        Arc::new(Scene {
            id: "corridor".into(),
            room: RoomCategory::Kitchen,
            width: 1,
            depth: 8,
            reachable: vec![true; 7].into_iter().chain([false]).collect(),
            objects: vec![ObjectInstance {
                category: "Apple".into(),
                cx: 0,
                cz: 7,
                band: HeightBand::Mid,
            }],
            seed: 0,
        })
    }

    fn state_at(cz: usize) -> EpisodeState {
        let mut s = reset_episode(corridor(), "Apple", 0, 10).unwrap();
        s.pose = Pose::new(0, cz, 0, 0).unwrap();
        s
    }

    #[test]
    fn judge_examples() {
        // 1.0 m from the apple, facing it
        let mut s = state_at(5);
        step(&mut s, Action::Done).unwrap();
        assert!(judge(&s));
        // 2.0 m away: out of range
        let mut s = state_at(3);
        step(&mut s, Action::Done).unwrap();
        assert!(!judge(&s));
        // timeout without Done
        let mut s = state_at(0);
        while !s.terminated {
            step(&mut s, Action::RotateLeft).unwrap();
        }
        assert!(!judge(&s));
    }

    #[test]
    fn dts_examples() {
        // cells 4..=6 see the apple within 1.5 m; cell 1 is three hops out
        assert_eq!(dts(&state_at(5)).unwrap(), 0.0);
        assert_eq!(dts(&state_at(1)).unwrap(), 1.5);
    }
}

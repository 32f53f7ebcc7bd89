//! Drives one episode through the full perception, planning and control
//! stack, cutting it into segments for training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{assemble, reward, InputMask};
use crate::encoder::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::graph::view_feature;
use crate::nn::{actor_critic, recurrent_step, softmax, CellState, PolicyParams};
use crate::planner::{
    adapt_graph, graph_feature, locate_current_zone, plan_subgoal, target_zone, GraphState,
};
use crate::sim::{step, Action, EpisodeState, Observation};

pub enum ActionSelection {
    Sample(ChaCha8Rng),
    /// Arg-max; ties go to the lowest action index.
    Greedy,
}

impl ActionSelection {
    fn choose(&mut self, logits: &[f64]) -> Action {
        let i = match self {
            ActionSelection::Greedy => {
                let mut best = 0;
                for (k, &l) in logits.iter().enumerate() {
                    if l > logits[best] {
                        best = k;
                    }
                }
                best
            }
            ActionSelection::Sample(rng) => {
                let probs = softmax(logits);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                pick
            }
        };
        Action::from_index(i).expect("logit count equals action count")
    }
}

/// Everything the learner needs to replay one step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// Pooled image feature, before masking.
    pub img: Vec<f64>,
    pub prev: Option<Action>,
    pub f_obs: Vec<f64>,
    pub zone: usize,
    pub subgoal: usize,
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
}

/// A contiguous slice of one episode plus the state it started from.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub scene: String,
    pub goal: String,
    pub goal_emb: Vec<f64>,
    pub mask: InputMask,
    pub start_cell: CellState,
    /// Adapted graph nodes before the first step.
    pub start_nodes: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Value estimate after the last step; zero once the episode is over.
    pub bootstrap: f64,
    pub terminated: bool,
    pub success: bool,
}

struct Prepared {
    cell_before: CellState,
    nodes_before: Vec<f64>,
    img: Vec<f64>,
    f_obs: Vec<f64>,
    zone: usize,
    subgoal: usize,
    logits: Vec<f64>,
    value: f64,
    cell_after: CellState,
}

pub struct EpisodeRunner<'a> {
    pub env: EpisodeState,
    graph: GraphState,
    provider: &'a EmbeddingProvider,
    goal_emb: Vec<f64>,
    target: usize,
    cell: CellState,
    prev: Option<Action>,
    obs: Observation,
    mask: InputMask,
    selection: ActionSelection,
    /// Forward pass for the current observation, computed but not yet acted
    /// on. Keeps the graph from being adapted twice when a segment is cut.
    pending: Option<Prepared>,
    pub total_reward: f64,
}

impl<'a> EpisodeRunner<'a> {
    /// `graph` should be fresh (adapted rows equal to the base graph).
    pub fn new(
        env: EpisodeState,
        graph: GraphState,
        provider: &'a EmbeddingProvider,
        hidden: usize,
        mask: InputMask,
        selection: ActionSelection,
    ) -> Result<Self> {
        if provider.dim() != graph.dim() {
            return Err(Error::DimensionMismatch {
                expected: graph.dim(),
                found: provider.dim(),
            });
        }
        let goal_emb = provider.object_embedding(&env.goal)?.into_vec();
        let target = target_zone(&graph, &goal_emb);
        let obs = env.observe();
        Ok(EpisodeRunner {
            env,
            graph,
            provider,
            goal_emb,
            target,
            cell: CellState::zeros(hidden),
            prev: None,
            obs,
            mask,
            selection,
            pending: None,
            total_reward: 0.0,
        })
    }

    pub fn finished(&self) -> bool {
        self.env.terminated
    }

    pub fn target(&self) -> usize {
        self.target
    }

    fn prepare(&mut self, params: &PolicyParams) -> Result<&Prepared> {
        if self.pending.is_none() {
            let cell_before = self.cell.clone();
            let nodes_before = self.graph.adapted.clone();
            self.graph.lambda = params.lambda();
            let img = self.provider.image_feature(&self.obs)?.mean_pool();
            let f_obs = view_feature(self.provider, &self.obs)?;
            let zone = locate_current_zone(&self.graph, &f_obs);
            adapt_graph(&mut self.graph, &f_obs, zone)?;
            let subgoal = plan_subgoal(self.graph.base(), zone, self.target).subgoal;
            let (gra, _) = graph_feature(params, &self.graph, subgoal)?;
            let x = assemble(&img, &self.goal_emb, &gra, self.prev, self.mask);
            let (cell_after, _) = recurrent_step(&params.cell(), &x, &cell_before)?;
            let (logits, value) = actor_critic(&params.heads(), &cell_after.h);
            if !value.is_finite() || logits.iter().any(|l| !l.is_finite()) {
                return Err(Error::NonFinite("policy output".into()));
            }
            self.pending = Some(Prepared {
                cell_before,
                nodes_before,
                img,
                f_obs,
                zone,
                subgoal,
                logits,
                value,
                cell_after,
            });
        }
        Ok(self.pending.as_ref().expect("just filled"))
    }

    /// Runs at most `max_steps` actions, stopping early at termination.
    pub fn run_segment(&mut self, params: &PolicyParams, max_steps: usize) -> Result<Trajectory> {
        if self.env.terminated {
            return Err(Error::Usage(
                "segment requested on a finished episode".into(),
            ));
        }
        let first = self.prepare(params)?;
        let start_cell = first.cell_before.clone();
        let start_nodes = first.nodes_before.clone();
        let mut steps = Vec::new();
        while steps.len() < max_steps && !self.env.terminated {
            self.prepare(params)?;
            let p = self.pending.take().expect("prepared");
            let action = self.selection.choose(&p.logits);
            let log_prob = crate::nn::log_softmax(&p.logits)[action.index()];
            let (obs, outcome) = step(&mut self.env, action)?;
            let r = reward(&outcome);
            self.total_reward += r;
            steps.push(StepRecord {
                img: p.img,
                prev: self.prev,
                f_obs: p.f_obs,
                zone: p.zone,
                subgoal: p.subgoal,
                action,
                log_prob,
                value: p.value,
                reward: r,
            });
            self.cell = p.cell_after;
            self.prev = Some(action);
            self.obs = obs;
        }
        let bootstrap = if self.env.terminated {
            0.0
        } else {
            self.prepare(params)?.value
        };
        Ok(Trajectory {
            scene: self.env.scene.id.clone(),
            goal: self.env.goal.clone(),
            goal_emb: self.goal_emb.clone(),
            mask: self.mask,
            start_cell,
            start_nodes,
            steps,
            bootstrap,
            terminated: self.env.terminated,
            success: self.env.success,
        })
    }
}

/// Plays a whole episode with sampled actions.
pub fn rollout(
    env: EpisodeState,
    params: &PolicyParams,
    graph: GraphState,
    provider: &EmbeddingProvider,
    rng: ChaCha8Rng,
) -> Result<Trajectory> {
    let mut runner = EpisodeRunner::new(
        env,
        graph,
        provider,
        params.shape.hidden,
        InputMask::NONE,
        ActionSelection::Sample(rng),
    )?;
    runner.run_segment(params, usize::MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_category_graph, DEFAULT_EPSILON};
    use crate::nn::ModelShape;
    use crate::seed::rng_for;
    use crate::sim::{generate_scene, LayoutTable, SceneSize};
    use crate::sim::{reset_episode, RoomCategory};
    use std::sync::Arc;

    fn fixture() -> (
        Arc<crate::sim::Scene>,
        EmbeddingProvider,
        GraphState,
        PolicyParams,
    ) {
        let table = LayoutTable::default();
        let scene = generate_scene(&table, RoomCategory::Kitchen, SceneSize::new(6, 6), 3).unwrap();
        let provider = EmbeddingProvider::synthetic(0, 8);
        let graph = build_category_graph(
            std::slice::from_ref(&scene),
            &provider,
            3,
            DEFAULT_EPSILON,
            0,
        )
        .unwrap();
        let state = GraphState::new(Arc::new(graph), 0.5).unwrap();
        let params = PolicyParams::init(
            ModelShape {
                embed: 8,
                node: 8,
                hidden: 16,
            },
            1,
        );
        (Arc::new(scene), provider, state, params)
    }

    #[test]
    fn rollout_ends_by_t_max() {
        let (scene, provider, graph, params) = fixture();
        let goal = scene.goal_categories()[0].clone();
        let env = reset_episode(scene, &goal, 4, 30).unwrap();
        let t = rollout(env, &params, graph, &provider, rng_for(0, &[b"a"])).unwrap();
        assert!(t.terminated);
        assert!(t.steps.len() <= 30);
        assert_eq!(t.bootstrap, 0.0);
        for s in &t.steps {
            assert!(s.reward == 5.0 || s.reward == -0.01);
            assert!(s.log_prob <= 0.0);
        }
    }

    #[test]
    fn segments_concatenate_to_the_full_episode() {
        let (scene, provider, graph, params) = fixture();
        let goal = scene.goal_categories()[0].clone();
        let env = reset_episode(scene.clone(), &goal, 4, 30).unwrap();
        let whole = rollout(
            env.clone(),
            &params,
            graph.clone(),
            &provider,
            rng_for(0, &[b"a"]),
        )
        .unwrap();
        let mut runner = EpisodeRunner::new(
            env,
            graph,
            &provider,
            16,
            InputMask::NONE,
            ActionSelection::Sample(rng_for(0, &[b"a"])),
        )
        .unwrap();
        let mut actions = Vec::new();
        let mut values = Vec::new();
        while !runner.finished() {
            let seg = runner.run_segment(&params, 7).unwrap();
            if !seg.terminated {
                assert!(seg.bootstrap != 0.0);
            }
            actions.extend(seg.steps.iter().map(|s| s.action));
            values.extend(seg.steps.iter().map(|s| s.value));
        }
        assert_eq!(
            actions,
            whole.steps.iter().map(|s| s.action).collect::<Vec<_>>()
        );
        assert_eq!(
            values,
            whole.steps.iter().map(|s| s.value).collect::<Vec<_>>()
        );
    }

    #[test]
    fn greedy_is_deterministic() {
        let (scene, provider, graph, params) = fixture();
        let goal = scene.goal_categories()[0].clone();
        let run = || {
            let env = reset_episode(scene.clone(), &goal, 9, 25).unwrap();
            let mut r = EpisodeRunner::new(
                env,
                graph.clone(),
                &provider,
                16,
                InputMask::NONE,
                ActionSelection::Greedy,
            )
            .unwrap();
            r.run_segment(&params, usize::MAX).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(
            a.steps.iter().map(|s| s.action).collect::<Vec<_>>(),
            b.steps.iter().map(|s| s.action).collect::<Vec<_>>()
        );
    }

    #[test]
    fn greedy_tie_prefers_lowest_index() {
        let mut sel = ActionSelection::Greedy;
        assert_eq!(sel.choose(&[0.0; 6]), Action::MoveAhead);
        assert_eq!(
            sel.choose(&[0.0, 1.0, 1.0, 0.0, 0.0, 0.0]),
            Action::from_index(1).unwrap()
        );
    }
}

//! Low-level controller and its advantage actor-critic trainer.

mod a2c;
mod checkpoint;
mod runner;
mod trainer;

use serde::{Deserialize, Serialize};

use crate::encoder::SpatialFeature;
use crate::error::{Error, Result};
use crate::sim::{Action, StepOutcome};

pub use a2c::{
    a2c_update, discounted_returns, replay_gradients, segment_gradients, SegmentLoss, UpdateStats,
};
pub use checkpoint::{Checkpoint, EmbeddingSpec, CHECKPOINT_MAGIC};
pub use runner::{rollout, ActionSelection, EpisodeRunner, StepRecord, Trajectory};
pub use trainer::{
    parse_goal_log, thread_count, train, write_goal_log, GoalLogEntry, StatsRecord, TrainOutcome,
    GOAL_LOG_MAGIC, STATS_WINDOW,
};

pub const SUCCESS_REWARD: f64 = 5.0;
pub const STEP_PENALTY: f64 = -0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyncMode {
    Synchronous,
    Asynchronous,
}

impl std::str::FromStr for SyncMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synchronous" | "sync" => Ok(SyncMode::Synchronous),
            "asynchronous" | "async" => Ok(SyncMode::Asynchronous),
            _ => Err(Error::Config(format!("unknown sync mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for SyncMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SyncMode::Synchronous => "synchronous",
            SyncMode::Asynchronous => "asynchronous",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episodes: usize,
    pub workers: usize,
    pub gamma: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub t_max: usize,
    pub seed: u64,
    pub sync_mode: SyncMode,
    /// Steps per worker between parameter updates.
    pub unroll: usize,
    pub hidden: usize,
    /// Train only on goals outside the held-out six.
    pub zero_shot: bool,
    /// Episodes between stats records.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            episodes: 20_000,
            workers: 8,
            gamma: 0.99,
            entropy_coef: 0.01,
            value_coef: 0.5,
            lr: 1e-4,
            t_max: crate::sim::DEFAULT_T_MAX,
            seed: 0,
            sync_mode: SyncMode::Synchronous,
            unroll: 20,
            hidden: crate::nn::DEFAULT_HIDDEN,
            zero_shot: false,
            log_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::Config(
                "loss coefficients must be non-negative".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.workers == 0 || self.unroll == 0 || self.t_max == 0 || self.hidden == 0 {
            return Err(Error::Config(
                "workers, unroll, t_max and hidden must be positive".into(),
            ));
        }
        if self.log_every == 0 {
            return Err(Error::Config("log_every must be positive".into()));
        }
        Ok(())
    }
}

/// Which input blocks are zeroed before they reach the recurrent cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputMask {
    pub img: bool,
    pub obj: bool,
    pub gra: bool,
    pub act: bool,
}

impl InputMask {
    pub const NONE: InputMask = InputMask {
        img: false,
        obj: false,
        gra: false,
        act: false,
    };

    /// Parses a comma list such as `img,act`; empty or `none` masks nothing.
    pub fn parse(list: &str) -> Result<Self> {
        let mut mask = InputMask::NONE;
        for part in list
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty() && *p != "none")
        {
            match part {
                "img" => mask.img = true,
                "obj" => mask.obj = true,
                "gra" => mask.gra = true,
                "act" => mask.act = true,
                _ => return Err(Error::Usage(format!("unknown input block `{part}`"))),
            }
        }
        Ok(mask)
    }
}

/// The four concatenated blocks fed to the recurrent cell.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyInput {
    pub img: Vec<f64>,
    pub obj: Vec<f64>,
    pub gra: Vec<f64>,
    pub act: Vec<f64>,
}

impl PolicyInput {
    pub fn concat(&self) -> Vec<f64> {
        [&self.img[..], &self.obj, &self.gra, &self.act].concat()
    }
}

pub fn one_hot(action: Option<Action>) -> Vec<f64> {
    let mut v = vec![0.0; Action::COUNT];
    if let Some(a) = action {
        v[a.index()] = 1.0;
    }
    v
}

/// Mean-pools the spatial feature and concatenates it with the goal
/// embedding, graph feature and previous-action one-hot.
pub fn compose_input(
    spatial: &SpatialFeature,
    goal: &[f64],
    gra: &[f64],
    prev: Option<Action>,
    mask: InputMask,
) -> PolicyInput {
    let zero_if = |masked: bool, v: Vec<f64>| if masked { vec![0.0; v.len()] } else { v };
    PolicyInput {
        img: zero_if(mask.img, spatial.mean_pool()),
        obj: zero_if(mask.obj, goal.to_vec()),
        gra: zero_if(mask.gra, gra.to_vec()),
        act: zero_if(mask.act, one_hot(prev)),
    }
}

/// Flat input from an already pooled image feature.
pub(crate) fn assemble(
    img: &[f64],
    goal: &[f64],
    gra: &[f64],
    prev: Option<Action>,
    mask: InputMask,
) -> Vec<f64> {
    let mut x = Vec::with_capacity(img.len() + goal.len() + gra.len() + Action::COUNT);
    let mut push = |masked: bool, v: &[f64]| {
        if masked {
            x.extend(std::iter::repeat_n(0.0, v.len()));
        } else {
            x.extend_from_slice(v);
        }
    };
    push(mask.img, img);
    push(mask.obj, goal);
    push(mask.gra, gra);
    push(mask.act, &one_hot(prev));
    x
}

/// `+5` for a successful Done, `−0.01` for every other step.
pub fn reward(outcome: &StepOutcome) -> f64 {
    if outcome.success {
        SUCCESS_REWARD
    } else {
        STEP_PENALTY
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::StepEvent;

    #[test]
    fn zero_grid_pools_to_zero() {
        let s = SpatialFeature::zeros(7, 4);
        let input = compose_input(&s, &[1.0; 4], &[0.5; 4], None, InputMask::NONE);
        assert_eq!(input.img, vec![0.0; 4]);
        assert_eq!(input.act, vec![0.0; 6]);
        assert_eq!(input.concat().len(), 2 * 4 + 4 + 6);
    }

    #[test]
    fn one_cell_pools_to_a_49th() {
        let mut s = SpatialFeature::zeros(7, 2);
        s.values[(2 * 7 + 5) * 2] = 0.6;
        s.values[(2 * 7 + 5) * 2 + 1] = 0.8;
        let input = compose_input(&s, &[0.0; 2], &[0.0; 2], None, InputMask::NONE);
        assert_eq!(input.img, vec![0.6 / 49.0, 0.8 / 49.0]);
    }

    #[test]
    fn previous_done_one_hot() {
        assert_eq!(
            one_hot(Some(Action::Done)),
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn masks_zero_blocks() {
        let s = SpatialFeature::zeros(7, 2);
        let m = InputMask::parse("obj,act").unwrap();
        let input = compose_input(&s, &[1.0, 1.0], &[1.0, 1.0], Some(Action::MoveAhead), m);
        assert_eq!(input.obj, vec![0.0, 0.0]);
        assert_eq!(input.act, vec![0.0; 6]);
        assert_eq!(input.gra, vec![1.0, 1.0]);
        assert!(InputMask::parse("foo").is_err());
    }

    fn outcome(event: StepEvent, success: bool, terminated: bool) -> StepOutcome {
        StepOutcome {
            event,
            terminated,
            success,
            timed_out: false,
        }
    }

    #[test]
    fn reward_rule() {
        assert_eq!(reward(&outcome(StepEvent::DoneSuccess, true, true)), 5.0);
        assert_eq!(reward(&outcome(StepEvent::Moved, false, false)), -0.01);
        assert_eq!(reward(&outcome(StepEvent::DoneFailure, false, true)), -0.01);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            gamma: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

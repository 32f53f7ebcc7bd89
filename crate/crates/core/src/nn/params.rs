use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::gcn::GcnCache;
use super::heads::{HeadGrads, HeadWeights};
use super::lstm::{CellGrads, CellWeights};
use super::tensor::{sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::seed;
use crate::sim::Action;

pub const DEFAULT_HIDDEN: usize = 128;

/// Sizes every parameter tensor derives from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Embedding width `D`.
    pub embed: usize,
    /// Graph node width `N`.
    pub node: usize,
    /// Recurrent hidden width `H`.
    pub hidden: usize,
}

impl ModelShape {
    /// `F = 2D + N + 6`: image, goal, graph, previous action.
    pub fn input(&self) -> usize {
        2 * self.embed + self.node + Action::COUNT
    }
}

/// All trainable parameters. The same structure doubles as the gradient
/// container.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub shape: ModelShape,
    pub gcn_w1: Tensor,
    pub gcn_w2: Tensor,
    pub cell_wx: Tensor,
    pub cell_wh: Tensor,
    pub cell_b: Tensor,
    pub actor_w: Tensor,
    pub actor_b: Tensor,
    pub critic_w: Tensor,
    pub critic_b: Tensor,
    /// Pre-sigmoid graph blend weight.
    pub lambda_raw: Tensor,
}

pub type Gradients = PolicyParams;

pub const PARAM_NAMES: [&str; 10] = [
    "gcn.w1",
    "gcn.w2",
    "cell.wx",
    "cell.wh",
    "cell.b",
    "actor.w",
    "actor.b",
    "critic.w",
    "critic.b",
    "lambda_raw",
];

impl PolicyParams {
    pub fn zeros(shape: ModelShape) -> Self {
        let (n, h, f) = (shape.node, shape.hidden, shape.input());
        PolicyParams {
            shape,
            gcn_w1: Tensor::zeros(&[n, n]),
            gcn_w2: Tensor::zeros(&[n, n]),
            cell_wx: Tensor::zeros(&[4 * h, f]),
            cell_wh: Tensor::zeros(&[4 * h, h]),
            cell_b: Tensor::zeros(&[4 * h]),
            actor_w: Tensor::zeros(&[Action::COUNT, h]),
            actor_b: Tensor::zeros(&[Action::COUNT]),
            critic_w: Tensor::zeros(&[h]),
            critic_b: Tensor::zeros(&[1]),
            lambda_raw: Tensor::zeros(&[1]),
        }
    }

    /// Glorot-uniform graph weights, `±1/√H` recurrent weights, a near-zero
    /// actor (initial policy close to uniform), and `λ = 0.5`.
    pub fn init(shape: ModelShape, seed: u64) -> Self {
        let mut p = PolicyParams::zeros(shape);
        let mut rng = seed::rng_for(seed, &[b"init"]);
        let fill = |t: &mut Tensor, bound: f64, rng: &mut rand_chacha::ChaCha8Rng| {
            let dist = Uniform::new_inclusive(-bound, bound).unwrap();
            t.data_mut().iter_mut().for_each(|v| *v = dist.sample(rng));
        };
        let glorot = (6.0 / (2 * shape.node) as f64).sqrt();
        let cell = 1.0 / (shape.hidden as f64).sqrt();
        fill(&mut p.gcn_w1, glorot, &mut rng);
        fill(&mut p.gcn_w2, glorot, &mut rng);
        fill(&mut p.cell_wx, cell, &mut rng);
        fill(&mut p.cell_wh, cell, &mut rng);
        fill(&mut p.cell_b, cell, &mut rng);
        fill(&mut p.actor_w, 0.01 * cell, &mut rng);
        fill(&mut p.critic_w, cell, &mut rng);
        p
    }

    pub fn zeros_like(&self) -> Self {
        PolicyParams::zeros(self.shape)
    }

    pub fn tensors(&self) -> [(&'static str, &Tensor); 10] {
        [
            (PARAM_NAMES[0], &self.gcn_w1),
            (PARAM_NAMES[1], &self.gcn_w2),
            (PARAM_NAMES[2], &self.cell_wx),
            (PARAM_NAMES[3], &self.cell_wh),
            (PARAM_NAMES[4], &self.cell_b),
            (PARAM_NAMES[5], &self.actor_w),
            (PARAM_NAMES[6], &self.actor_b),
            (PARAM_NAMES[7], &self.critic_w),
            (PARAM_NAMES[8], &self.critic_b),
            (PARAM_NAMES[9], &self.lambda_raw),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Tensor); 10] {
        [
            (PARAM_NAMES[0], &mut self.gcn_w1),
            (PARAM_NAMES[1], &mut self.gcn_w2),
            (PARAM_NAMES[2], &mut self.cell_wx),
            (PARAM_NAMES[3], &mut self.cell_wh),
            (PARAM_NAMES[4], &mut self.cell_b),
            (PARAM_NAMES[5], &mut self.actor_w),
            (PARAM_NAMES[6], &mut self.actor_b),
            (PARAM_NAMES[7], &mut self.critic_w),
            (PARAM_NAMES[8], &mut self.critic_b),
            (PARAM_NAMES[9], &mut self.lambda_raw),
        ]
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors_mut()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }

    pub fn lambda(&self) -> f64 {
        sigmoid(self.lambda_raw.data()[0])
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn add_assign(&mut self, other: &PolicyParams) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn check_congruent(&self, other: &PolicyParams) -> Result<()> {
        for ((name, a), (_, b)) in self.tensors().into_iter().zip(other.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Usage(format!(
                    "parameter `{name}` shape {:?} vs {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn cell(&self) -> CellWeights<'_> {
        CellWeights {
            wx: &self.cell_wx,
            wh: &self.cell_wh,
            b: &self.cell_b,
        }
    }

    pub fn cell_mut(&mut self) -> CellGrads<'_> {
        CellGrads {
            wx: &mut self.cell_wx,
            wh: &mut self.cell_wh,
            b: &mut self.cell_b,
        }
    }

    pub fn heads(&self) -> HeadWeights<'_> {
        HeadWeights {
            actor_w: &self.actor_w,
            actor_b: &self.actor_b,
            critic_w: &self.critic_w,
            critic_b: &self.critic_b,
        }
    }

    pub fn heads_mut(&mut self) -> HeadGrads<'_> {
        HeadGrads {
            actor_w: &mut self.actor_w,
            actor_b: &mut self.actor_b,
            critic_w: &mut self.critic_w,
            critic_b: &mut self.critic_b,
        }
    }

    pub fn gcn(&self, nodes: &[f64], adj: &[f64], zones: usize) -> Result<GcnCache> {
        super::gcn::gcn_forward(
            &self.gcn_w1,
            &self.gcn_w2,
            nodes,
            adj,
            zones,
            self.shape.node,
        )
    }
}

//! Advantage actor-critic loss over a segment, its exact gradient, and the
//! parameter update.
//!
//! The forward pass is replayed from the segment's stored start state with
//! the recorded zone and sub-goal choices held fixed, so the loss is a smooth
//! function of the parameters. Gradients flow through the recurrent cell,
//! the heads, the GCN and the graph-adaptation chain into `λ`; nothing flows
//! back past the start of the segment.

use rayon::prelude::*;

use super::{assemble, TrainConfig, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{
    actor_critic, actor_critic_backward, entropy, gcn_backward_row, log_softmax,
    recurrent_backward, recurrent_step, softmax, Adam, GcnCache, Gradients, PolicyParams,
    StepCache,
};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SegmentLoss {
    pub total: f64,
    /// `−Σ A·log π(a)`
    pub policy: f64,
    /// `Σ (R − V)²`
    pub value: f64,
    /// `Σ H(π)`
    pub entropy: f64,
    pub steps: usize,
}

impl SegmentLoss {
    fn add(&mut self, o: &SegmentLoss) {
        self.total += o.total;
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.steps += o.steps;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: SegmentLoss,
    /// False when the summed gradient was non-finite and the step was skipped.
    pub applied: bool,
}

/// `R_t = r_t + γ R_{t+1}`, seeded with `bootstrap`.
pub fn discounted_returns(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut r = bootstrap;
    for t in (0..rewards.len()).rev() {
        r = rewards[t] + gamma * r;
        out[t] = r;
    }
    out
}

struct Replay {
    old_rows: Vec<f64>,
    gcn: GcnCache,
    cell: StepCache,
    h: Vec<f64>,
    logits: Vec<f64>,
    value: f64,
}

/// Loss and gradient for one segment.
pub fn segment_gradients(
    params: &PolicyParams,
    adjacency: &[f64],
    zones: usize,
    traj: &Trajectory,
    cfg: &TrainConfig,
) -> Result<(SegmentLoss, Gradients)> {
    replay_gradients(params, adjacency, zones, traj, cfg, None)
}

/// With `fixed_advantages` the policy term uses those instead of `R − V`,
/// which makes the loss whose gradient is returned an explicit function of
/// the parameters (handy for finite-difference checks).
pub fn replay_gradients(
    params: &PolicyParams,
    adjacency: &[f64],
    zones: usize,
    traj: &Trajectory,
    cfg: &TrainConfig,
    fixed_advantages: Option<&[f64]>,
) -> Result<(SegmentLoss, Gradients)> {
    let dim = params.shape.node;
    let embed = params.shape.embed;
    if traj.start_nodes.len() != zones * dim {
        return Err(Error::DimensionMismatch {
            expected: zones * dim,
            found: traj.start_nodes.len(),
        });
    }
    let lambda = params.lambda();
    let mut nodes = traj.start_nodes.clone();
    let mut state = traj.start_cell.clone();
    let mut replay = Vec::with_capacity(traj.steps.len());
    for s in &traj.steps {
        let row = &mut nodes[s.zone * dim..(s.zone + 1) * dim];
        let old_rows = row.to_vec();
        for (r, f) in row.iter_mut().zip(&s.f_obs) {
            *r = lambda * f + (1.0 - lambda) * *r;
        }
        let gcn = params.gcn(&nodes, adjacency, zones)?;
        let x = assemble(
            &s.img,
            &traj.goal_emb,
            gcn.out_row(s.subgoal),
            s.prev,
            traj.mask,
        );
        let (next, cell) = recurrent_step(&params.cell(), &x, &state)?;
        let (logits, value) = actor_critic(&params.heads(), &next.h);
        replay.push(Replay {
            old_rows,
            gcn,
            cell,
            h: next.h.clone(),
            logits,
            value,
        });
        state = next;
    }

    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, traj.bootstrap, cfg.gamma);
    let mut loss = SegmentLoss {
        steps: traj.steps.len(),
        ..SegmentLoss::default()
    };
    let mut grads = params.zeros_like();
    let hidden = params.shape.hidden;
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut d_nodes = vec![0.0; zones * dim];
    let mut d_lambda = 0.0;
    let gra_at = 2 * embed;

    for t in (0..traj.steps.len()).rev() {
        let s = &traj.steps[t];
        let r = &replay[t];
        let logp = log_softmax(&r.logits);
        let probs = softmax(&r.logits);
        let h_ent = entropy(&r.logits);
        let td = returns[t] - r.value;
        let adv = fixed_advantages.map_or(td, |f| f[t]);
        let a = s.action.index();
        loss.policy -= adv * logp[a];
        loss.value += td * td;
        loss.entropy += h_ent;

        let dlogits: Vec<f64> = (0..probs.len())
            .map(|k| {
                let indicator = if k == a { 1.0 } else { 0.0 };
                // policy term (advantage held constant) and −β·H
                -adv * (indicator - probs[k]) + cfg.entropy_coef * probs[k] * (logp[k] + h_ent)
            })
            .collect();
        let dvalue = cfg.value_coef * 2.0 * (r.value - returns[t]);
        let mut dh = actor_critic_backward(
            &params.heads(),
            &mut grads.heads_mut(),
            &r.h,
            &dlogits,
            dvalue,
        );
        for (d, n) in dh.iter_mut().zip(&dh_next) {
            *d += n;
        }
        let (dx, dh_prev, dc_prev) = recurrent_backward(
            &params.cell(),
            &mut grads.cell_mut(),
            &r.cell,
            &dh,
            &dc_next,
        );
        dh_next = dh_prev;
        dc_next = dc_prev;

        if !traj.mask.gra {
            let dgra = &dx[gra_at..gra_at + dim];
            let dn = gcn_backward_row(
                &params.gcn_w1,
                &params.gcn_w2,
                adjacency,
                &r.gcn,
                s.subgoal,
                dgra,
                &mut grads.gcn_w1,
                &mut grads.gcn_w2,
            );
            for (a, b) in d_nodes.iter_mut().zip(&dn) {
                *a += b;
            }
        }
        // undo this step's adaptation of row `zone`
        let row = &mut d_nodes[s.zone * dim..(s.zone + 1) * dim];
        for j in 0..dim {
            d_lambda += row[j] * (s.f_obs[j] - r.old_rows[j]);
            row[j] *= 1.0 - lambda;
        }
    }
    grads.lambda_raw.data_mut()[0] = d_lambda * lambda * (1.0 - lambda);
    loss.total = loss.policy + cfg.value_coef * loss.value - cfg.entropy_coef * loss.entropy;
    Ok((loss, grads))
}

/// Sums the segment gradients in the given order and applies one Adam step.
/// A non-finite gradient skips the step and leaves the parameters untouched.
pub fn a2c_update(
    params: &mut PolicyParams,
    adam: &mut Adam,
    adjacency: &[f64],
    zones: usize,
    trajectories: &[Trajectory],
    cfg: &TrainConfig,
) -> Result<UpdateStats> {
    let parts: Vec<(SegmentLoss, Gradients)> = trajectories
        .par_iter()
        .map(|t| segment_gradients(params, adjacency, zones, t, cfg))
        .collect::<Result<_>>()?;
    apply(params, adam, parts)
}

pub(crate) fn apply(
    params: &mut PolicyParams,
    adam: &mut Adam,
    parts: Vec<(SegmentLoss, Gradients)>,
) -> Result<UpdateStats> {
    let mut total = params.zeros_like();
    let mut loss = SegmentLoss::default();
    for (l, g) in &parts {
        total.add_assign(g);
        loss.add(l);
    }
    if !total.is_finite() || !loss.total.is_finite() {
        return Ok(UpdateStats {
            loss,
            applied: false,
        });
    }
    adam.update(params, &total)?;
    Ok(UpdateStats {
        loss,
        applied: true,
    })
}

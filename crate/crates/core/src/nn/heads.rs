//! Linear actor (6 logits) and critic (scalar value) heads.

use super::tensor::Tensor;
use crate::sim::Action;

pub struct HeadWeights<'a> {
    pub actor_w: &'a Tensor,
    pub actor_b: &'a Tensor,
    pub critic_w: &'a Tensor,
    pub critic_b: &'a Tensor,
}

pub struct HeadGrads<'a> {
    pub actor_w: &'a mut Tensor,
    pub actor_b: &'a mut Tensor,
    pub critic_w: &'a mut Tensor,
    pub critic_b: &'a mut Tensor,
}

pub fn actor_critic(w: &HeadWeights, h: &[f64]) -> (Vec<f64>, f64) {
    let mut logits = w.actor_w.matvec(h);
    for (l, b) in logits.iter_mut().zip(w.actor_b.data()) {
        *l += b;
    }
    debug_assert_eq!(logits.len(), Action::COUNT);
    let value = w
        .critic_w
        .data()
        .iter()
        .zip(h)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        + w.critic_b.data()[0];
    (logits, value)
}

/// Returns the gradient w.r.t. `h`.
pub fn actor_critic_backward(
    w: &HeadWeights,
    grads: &mut HeadGrads,
    h: &[f64],
    dlogits: &[f64],
    dvalue: f64,
) -> Vec<f64> {
    grads.actor_w.add_outer(dlogits, h);
    for (b, d) in grads.actor_b.data_mut().iter_mut().zip(dlogits) {
        *b += d;
    }
    for (g, x) in grads.critic_w.data_mut().iter_mut().zip(h) {
        *g += dvalue * x;
    }
    grads.critic_b.data_mut()[0] += dvalue;
    let mut dh = w.actor_w.matvec_t(dlogits);
    for (d, c) in dh.iter_mut().zip(w.critic_w.data()) {
        *d += dvalue * c;
    }
    dh
}

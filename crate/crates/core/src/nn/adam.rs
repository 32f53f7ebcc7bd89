//! Adaptive-moment optimizer with bias correction.

use super::params::PolicyParams;
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub step: u64,
    m: PolicyParams,
    v: PolicyParams,
}

impl Adam {
    pub fn new(params: &PolicyParams, lr: f64) -> Self {
        Adam {
            lr,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// One update. Non-finite gradients leave both parameters and moments
    /// untouched.
    pub fn update(&mut self, params: &mut PolicyParams, grads: &PolicyParams) -> Result<()> {
        params.check_congruent(grads)?;
        if let Some((name, _)) = grads.tensors().into_iter().find(|(_, t)| !t.is_finite()) {
            return Err(Error::NonFinite(format!("gradient `{name}`")));
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let lr = self.lr;
        let moments = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(moments)
        {
            for (((p, g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ModelShape;

    fn shape() -> ModelShape {
        ModelShape {
            embed: 2,
            node: 2,
            hidden: 3,
        }
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = PolicyParams::init(shape(), 1);
        let before = p.clone();
        let mut adam = Adam::new(&p, 1e-4);
        let g = p.zeros_like();
        adam.update(&mut p, &g).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_sign() {
        let mut p = PolicyParams::zeros(shape());
        let mut g = p.zeros_like();
        g.cell_b.data_mut()[0] = 50.0;
        g.cell_b.data_mut()[1] = -3.0;
        let mut adam = Adam::new(&p, 1e-4);
        adam.update(&mut p, &g).unwrap();
        assert!((p.cell_b.data()[0] + 1e-4).abs() < 1e-10);
        assert!((p.cell_b.data()[1] - 1e-4).abs() < 1e-10);
        assert_eq!(p.cell_b.data()[2], 0.0);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = PolicyParams::zeros(shape());
        let before = p.clone();
        let mut g = p.zeros_like();
        g.actor_b.data_mut()[0] = f64::NAN;
        let mut adam = Adam::new(&p, 1e-3);
        assert!(matches!(adam.update(&mut p, &g), Err(Error::NonFinite(_))));
        assert_eq!(p, before);
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn quadratic_bowl_descends() {
        // loss = Σ (p - 1)² over the recurrent biases
        let mut p = PolicyParams::zeros(shape());
        let mut adam = Adam::new(&p, 0.05);
        let loss = |p: &PolicyParams| {
            p.cell_b
                .data()
                .iter()
                .map(|v| (v - 1.0).powi(2))
                .sum::<f64>()
        };
        let mut history = vec![loss(&p)];
        for _ in 0..100 {
            let mut g = p.zeros_like();
            for (gi, v) in g.cell_b.data_mut().iter_mut().zip(p.cell_b.data()) {
                *gi = 2.0 * (v - 1.0);
            }
            adam.update(&mut p, &g).unwrap();
            history.push(loss(&p));
        }
        // monotone until the iterate reaches the bottom
        for w in history[..15].windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(*history.last().unwrap() < 1e-2 * history[0]);
    }
}

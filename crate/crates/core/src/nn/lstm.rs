//! Single-layer gated recurrent cell (input, forget, output gates; no
//! peepholes). Gate rows are stacked `[i; f; g; o]`, `H` rows each.

use super::tensor::{sigmoid, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        CellState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepCache {
    pub x: Vec<f64>,
    pub prev: CellState,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub struct CellWeights<'a> {
    pub wx: &'a Tensor,
    pub wh: &'a Tensor,
    pub b: &'a Tensor,
}

pub struct CellGrads<'a> {
    pub wx: &'a mut Tensor,
    pub wh: &'a mut Tensor,
    pub b: &'a mut Tensor,
}

pub fn recurrent_step(
    w: &CellWeights,
    x: &[f64],
    prev: &CellState,
) -> Result<(CellState, StepCache)> {
    let hidden = prev.h.len();
    if w.wx.shape() != [4 * hidden, x.len()] {
        return Err(Error::Usage(format!(
            "input weights {:?} do not fit input {} / hidden {hidden}",
            w.wx.shape(),
            x.len()
        )));
    }
    if w.wh.shape() != [4 * hidden, hidden] || w.b.len() != 4 * hidden || prev.c.len() != hidden {
        return Err(Error::Usage(format!(
            "recurrent weights do not fit hidden {hidden}"
        )));
    }
    let mut z = w.wx.matvec(x);
    for (zi, (a, b)) in z
        .iter_mut()
        .zip(w.wh.matvec(&prev.h).iter().zip(w.b.data()))
    {
        *zi += a + b;
    }
    let gate = |k: usize, act: fn(f64) -> f64| -> Vec<f64> {
        z[k * hidden..(k + 1) * hidden]
            .iter()
            .map(|&v| act(v))
            .collect()
    };
    let i = gate(0, sigmoid);
    let f = gate(1, sigmoid);
    let g = gate(2, f64::tanh);
    let o = gate(3, sigmoid);
    let c: Vec<f64> = (0..hidden)
        .map(|k| f[k] * prev.c[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hidden).map(|k| o[k] * tanh_c[k]).collect();
    let next = CellState { h, c: c.clone() };
    Ok((
        next,
        StepCache {
            x: x.to_vec(),
            prev: prev.clone(),
            i,
            f,
            g,
            o,
            c,
            tanh_c,
        },
    ))
}

/// Backward through one step given gradients on `h'` and `c'`. Accumulates
/// weight gradients; returns `(dx, dh_prev, dc_prev)`.
pub fn recurrent_backward(
    w: &CellWeights,
    grads: &mut CellGrads,
    cache: &StepCache,
    dh: &[f64],
    dc_next: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = dh.len();
    let mut dz = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, g, o, t) = (
            cache.i[k],
            cache.f[k],
            cache.g[k],
            cache.o[k],
            cache.tanh_c[k],
        );
        let d_o = dh[k] * t;
        let dc = dc_next[k] + dh[k] * o * (1.0 - t * t);
        dz[k] = dc * g * i * (1.0 - i);
        dz[hidden + k] = dc * cache.prev.c[k] * f * (1.0 - f);
        dz[2 * hidden + k] = dc * i * (1.0 - g * g);
        dz[3 * hidden + k] = d_o * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
    grads.wx.add_outer(&dz, &cache.x);
    grads.wh.add_outer(&dz, &cache.prev.h);
    for (b, d) in grads.b.data_mut().iter_mut().zip(&dz) {
        *b += d;
    }
    (w.wx.matvec_t(&dz), w.wh.matvec_t(&dz), dc_prev)
}

//! Two-layer graph convolution: `out = Â · ReLU(Â · X · W1) · W2`.

use super::tensor::{matmul, Tensor};
use crate::error::{Error, Result};

/// `D^{-1/2} E D^{-1/2}` with `D` the row sums of `E`. The edge matrix
/// already carries unit self-loops on its diagonal.
pub fn normalize_adjacency(edges: &[f64], zones: usize) -> Result<Vec<f64>> {
    if edges.len() != zones * zones {
        return Err(Error::DimensionMismatch {
            expected: zones * zones,
            found: edges.len(),
        });
    }
    let inv_sqrt: Vec<f64> = (0..zones)
        .map(|m| {
            let deg: f64 = edges[m * zones..(m + 1) * zones].iter().sum();
            1.0 / deg.sqrt()
        })
        .collect();
    Ok((0..zones * zones)
        .map(|i| inv_sqrt[i / zones] * edges[i] * inv_sqrt[i % zones])
        .collect())
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct GcnCache {
    pub zones: usize,
    pub dim: usize,
    /// `Â · X`
    pub ax: Vec<f64>,
    /// `Â · X · W1`
    pub pre1: Vec<f64>,
    /// `Â · ReLU(pre1)`
    pub ah1: Vec<f64>,
    pub out: Vec<f64>,
}

impl GcnCache {
    pub fn out_row(&self, m: usize) -> &[f64] {
        &self.out[m * self.dim..(m + 1) * self.dim]
    }
}

fn check(
    w1: &Tensor,
    w2: &Tensor,
    nodes: &[f64],
    adj: &[f64],
    zones: usize,
    dim: usize,
) -> Result<()> {
    for w in [w1, w2] {
        if w.shape() != [dim, dim] {
            return Err(Error::Usage(format!(
                "GCN weight shape {:?} does not fit node width {dim}",
                w.shape()
            )));
        }
    }
    if nodes.len() != zones * dim {
        return Err(Error::DimensionMismatch {
            expected: zones * dim,
            found: nodes.len(),
        });
    }
    if adj.len() != zones * zones {
        return Err(Error::DimensionMismatch {
            expected: zones * zones,
            found: adj.len(),
        });
    }
    Ok(())
}

pub fn gcn_forward(
    w1: &Tensor,
    w2: &Tensor,
    nodes: &[f64],
    adj: &[f64],
    zones: usize,
    dim: usize,
) -> Result<GcnCache> {
    check(w1, w2, nodes, adj, zones, dim)?;
    let ax = matmul(adj, nodes, zones, zones, dim);
    let pre1 = matmul(&ax, w1.data(), zones, dim, dim);
    let h1: Vec<f64> = pre1.iter().map(|v| v.max(0.0)).collect();
    let ah1 = matmul(adj, &h1, zones, zones, dim);
    let out = matmul(&ah1, w2.data(), zones, dim, dim);
    Ok(GcnCache {
        zones,
        dim,
        ax,
        pre1,
        ah1,
        out,
    })
}

/// Backward for a loss that only reads output row `row` with gradient
/// `grad`. Accumulates into `dw1`, `dw2`; returns the gradient w.r.t. the
/// node matrix.
pub fn gcn_backward_row(
    w1: &Tensor,
    w2: &Tensor,
    adj: &[f64],
    cache: &GcnCache,
    row: usize,
    grad: &[f64],
    dw1: &mut Tensor,
    dw2: &mut Tensor,
) -> Vec<f64> {
    let (zones, dim) = (cache.zones, cache.dim);
    dw2.add_outer(&cache.ah1[row * dim..(row + 1) * dim], grad);
    // d(ah1[row]) = W2 · grad
    let d_ah1_row = w2.matvec(grad);
    // h1[k] feeds ah1[row] with weight adj[row][k]; gate through the ReLU
    let mut dpre1 = vec![0.0; zones * dim];
    for k in 0..zones {
        let a = adj[row * zones + k];
        if a == 0.0 {
            continue;
        }
        for j in 0..dim {
            if cache.pre1[k * dim + j] > 0.0 {
                dpre1[k * dim + j] = a * d_ah1_row[j];
            }
        }
    }
    for k in 0..zones {
        let dp = &dpre1[k * dim..(k + 1) * dim];
        if dp.iter().all(|&v| v == 0.0) {
            continue;
        }
        dw1.add_outer(&cache.ax[k * dim..(k + 1) * dim], dp);
    }
    // d(ax) = dpre1 · W1ᵀ, then dX = Âᵀ · d(ax)
    let mut d_ax = vec![0.0; zones * dim];
    for k in 0..zones {
        let dp = &dpre1[k * dim..(k + 1) * dim];
        if dp.iter().all(|&v| v == 0.0) {
            continue;
        }
        let r = w1.matvec(dp);
        d_ax[k * dim..(k + 1) * dim].copy_from_slice(&r);
    }
    let mut dx = vec![0.0; zones * dim];
    for k in 0..zones {
        for l in 0..zones {
            let a = adj[k * zones + l];
            if a == 0.0 {
                continue;
            }
            for j in 0..dim {
                dx[l * dim + j] += a * d_ax[k * dim + j];
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data_mut()[i * n + i] = 1.0;
        }
        t
    }

    #[test]
    fn single_node_adjacency() {
        assert_eq!(normalize_adjacency(&[1.0], 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn two_connected_nodes() {
        let a = normalize_adjacency(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        for v in a {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_gcn_passes_nonnegative_nodes() {
        let nodes = vec![0.5, 1.0, 0.0, 2.0, 0.25, 0.0];
        let adj = normalize_adjacency(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        let c = gcn_forward(&identity(3), &identity(3), &nodes, &adj, 2, 3).unwrap();
        assert_eq!(c.out, nodes);
    }

    #[test]
    fn zero_nodes_zero_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Tensor::from_vec(
            &[4, 4],
            (0..16).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let adj = normalize_adjacency(&[1.0, 0.3, 0.3, 1.0], 2).unwrap();
        let c = gcn_forward(&w, &w, &[0.0; 8], &adj, 2, 4).unwrap();
        assert!(c.out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_usage_error() {
        let adj = normalize_adjacency(&[1.0], 1).unwrap();
        assert!(gcn_forward(&identity(3), &identity(2), &[0.0; 3], &adj, 1, 3).is_err());
    }
}

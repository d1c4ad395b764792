//! Linear graph propagation over the user-item bipartite graph.

use ndarray::Array2;

use super::bpr::train_pairwise;
use super::{EmbeddingParams, TrainConfig};
use crate::data::InteractionMatrix;
use crate::Result;

/// Symmetric-normalised bipartite adjacency with weights `1/√(deg_u·deg_v)`.
#[derive(Debug, Clone)]
pub struct Propagation {
    layers: usize,
    user_adj: Vec<Vec<(usize, f64)>>,
    item_adj: Vec<Vec<(usize, f64)>>,
}

impl Propagation {
    pub fn new(r: &InteractionMatrix, layers: usize) -> Self {
        let item_deg = r.item_counts(None);
        let mut item_adj = vec![Vec::new(); r.num_items()];
        let user_adj = r
            .rows()
            .iter()
            .enumerate()
            .map(|(u, row)| {
                row.iter()
                    .map(|&v| {
                        let w = 1.0 / ((row.len() * item_deg[v]) as f64).sqrt();
                        item_adj[v].push((u, w));
                        (v, w)
                    })
                    .collect()
            })
            .collect();
        Self {
            layers,
            user_adj,
            item_adj,
        }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Layer mean of `e⁽⁰⁾ … e⁽ᴸ⁾` with `e⁽ˡ⁺¹⁾ = Â e⁽ˡ⁾`. The operator is
    /// symmetric, so the same call also back-propagates output gradients.
    pub fn apply(&self, p: &EmbeddingParams) -> EmbeddingParams {
        if self.layers == 0 {
            return p.clone();
        }
        let mut sum = p.clone();
        let mut cur = p.clone();
        for _ in 0..self.layers {
            cur = EmbeddingParams {
                user: spmm(&self.user_adj, &cur.item),
                item: spmm(&self.item_adj, &cur.user),
            };
            sum.add_scaled(1.0, &cur);
        }
        let scale = 1.0 / (self.layers + 1) as f64;
        sum.user *= scale;
        sum.item *= scale;
        sum
    }
}

fn spmm(adj: &[Vec<(usize, f64)>], x: &Array2<f64>) -> Array2<f64> {
    let d = x.ncols();
    let xs = x.as_slice().expect("standard layout");
    let mut out = Array2::zeros((adj.len(), d));
    let os = out.as_slice_mut().expect("standard layout");
    for (i, nbrs) in adj.iter().enumerate() {
        let row = &mut os[i * d..(i + 1) * d];
        for &(j, w) in nbrs {
            row.iter_mut().zip(&xs[j * d..(j + 1) * d]).for_each(|(o, x)| *o += w * x);
        }
    }
    out
}

pub fn lightgcn_propagate(p: &EmbeddingParams, r: &InteractionMatrix, layers: usize) -> EmbeddingParams {
    Propagation::new(r, layers).apply(p)
}

/// BPR over propagated embeddings. Returns the layer-0 parameters; score with
/// [`lightgcn_propagate`].
pub fn train_lightgcn(r: &InteractionMatrix, cfg: &TrainConfig) -> Result<EmbeddingParams> {
    let prop = Propagation::new(r, cfg.layers);
    train_pairwise(r, cfg, Some(&prop))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_layers_is_identity() {
        let m = InteractionMatrix::from_rows(2, vec![vec![0, 1]]).unwrap();
        let p = EmbeddingParams::gaussian(1, 2, 3, 1.0, 0);
        assert_eq!(lightgcn_propagate(&p, &m, 0), p);
    }

    #[test]
    fn single_edge_swaps_then_averages() {
        let m = InteractionMatrix::from_rows(1, vec![vec![0]]).unwrap();
        let p = EmbeddingParams::new(array![[1.0, 2.0]], array![[3.0, -4.0]]).unwrap();
        let out = lightgcn_propagate(&p, &m, 1);
        assert_eq!(out.user, array![[2.0, -1.0]]);
        assert_eq!(out.item, array![[2.0, -1.0]]);
    }

    #[test]
    fn path_graph_matches_dense_matrix_powers() {
        // users {0, 1}, item {0}: u0 - i0 - u1 (3-node path)
        let m = InteractionMatrix::from_rows(1, vec![vec![0], vec![0]]).unwrap();
        let p = EmbeddingParams::gaussian(2, 1, 2, 1.0, 3);
        let layers = 3;
        let w = 1.0 / 2f64.sqrt();
        // node order: u0, u1, i0
        let adj = array![[0.0, 0.0, w], [0.0, 0.0, w], [w, w, 0.0]];
        let e0 = ndarray::concatenate![ndarray::Axis(0), p.user, p.item];
        let mut acc = e0.clone();
        let mut cur = e0;
        for _ in 0..layers {
            cur = adj.dot(&cur);
            acc += &cur;
        }
        acc /= (layers + 1) as f64;
        let out = lightgcn_propagate(&p, &m, layers);
        let got = ndarray::concatenate![ndarray::Axis(0), out.user, out.item];
        assert!((&got - &acc).iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn zero_degree_nodes_propagate_to_zero() {
        let m = InteractionMatrix::from_rows(2, vec![vec![0], vec![]]).unwrap();
        let p = EmbeddingParams::gaussian(2, 2, 2, 1.0, 1);
        let prop = Propagation::new(&m, 1);
        let out = prop.apply(&p);
        // user 1 and item 1 only keep half of their own layer-0 vector
        assert_eq!(out.user.row(1), (&p.user.row(1) * 0.5));
        assert_eq!(out.item.row(1), (&p.item.row(1) * 0.5));
    }
}

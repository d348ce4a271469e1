//! Dependency adjacency and the GCN stack that produces graph-encoded token
//! representations.
//!
//! A layer computes, for every token `t`,
//!
//! ```text
//! g_t = ReLU( sum_j A[t][j] * W^T g_j / d_t + b )
//! ```
//!
//! where `A` is the undirected tree adjacency with self-loops and `d_t` its
//! row sum. [`Aggregation::SelfOnly`] instead keeps `g_t` inside the sum,
//! which collapses the normalised sum to `W^T g_t`.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::init::{glorot, zeros_row};

/// Symmetric 0/1 adjacency with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n: usize,
    a: Vec<u8>,
    degrees: Vec<usize>,
}

impl AdjacencyMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.a[i * self.n + j]
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.a.chunks(self.n).map(<[u8]>::to_vec).collect()
    }

    /// `A[t][j] / d_t`, row-major.
    pub fn normalized(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for t in 0..self.n {
            let d = self.degrees[t] as f64;
            out.extend(self.a[t * self.n..(t + 1) * self.n].iter().map(|&v| f64::from(v) / d));
        }
        out
    }

    /// Builds the adjacency of an arbitrary undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = vec![0u8; n * n];
        for i in 0..n {
            a[i * n + i] = 1;
        }
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::contract(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            a[i * n + j] = 1;
            a[j * n + i] = 1;
        }
        let degrees = a.chunks(n.max(1)).take(n).map(|r| r.iter().map(|&v| v as usize).sum()).collect();
        Ok(Self { n, a, degrees })
    }
}

/// Adjacency of a head-pointer tree (1-based heads, 0 = root).
pub fn build_adjacency(heads: &[usize]) -> AdjacencyMatrix {
    let edges: Vec<(usize, usize)> = heads
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0)
        .map(|(i, &h)| (i, h - 1))
        .collect();
    AdjacencyMatrix::from_edges(heads.len(), &edges).expect("heads were validated upstream")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Degree-normalised sum over neighbours including the node itself.
    #[default]
    Neighbor,
    /// The literal reading that keeps the centre node inside the sum.
    SelfOnly,
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neighbor" => Ok(Self::Neighbor),
            "self-only" => Ok(Self::SelfOnly),
            other => Err(Error::contract(format!("unknown GCN aggregation {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GcnLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GcnParams {
    pub layers: Vec<GcnLayer>,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GcnParams {
    /// Registers `num_layers` layers under `prefix.l{k}.{weight,bias}`.
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::contract("a GCN needs at least one layer"));
        }
        let mut layers = Vec::with_capacity(num_layers);
        for l in 0..num_layers {
            let fan_in = if l == 0 { input_dim } else { hidden };
            let weight = store.insert(format!("{prefix}.l{}.weight", l + 1), glorot(rng, fan_in, hidden))?;
            let bias = store.insert(format!("{prefix}.l{}.bias", l + 1), zeros_row(hidden))?;
            layers.push(GcnLayer { weight, bias });
        }
        Ok(Self {
            layers,
            input_dim,
            hidden,
        })
    }
}

/// Records the row-normalised adjacency as a constant.
pub fn adjacency_on_tape(tape: &mut Tape, adj: &AdjacencyMatrix) -> Var {
    tape.constant(adj.n(), adj.n(), adj.normalized())
        .expect("n x n adjacency")
}

/// One GCN layer. `norm_adj` is the constant from [`adjacency_on_tape`].
pub fn gcn_layer(tape: &mut Tape, g_prev: Var, norm_adj: Var, weight: Var, bias: Var, mode: Aggregation) -> Result<Var> {
    let (_, d) = tape.shape(g_prev);
    let (wd, _) = tape.shape(weight);
    if d != wd {
        return Err(Error::dim("gcn_layer", &[tape.shape(g_prev).0, d], &[wd, tape.shape(weight).1]));
    }
    let projected = tape.matmul(g_prev, weight)?;
    let aggregated = match mode {
        Aggregation::Neighbor => tape.matmul(norm_adj, projected)?,
        Aggregation::SelfOnly => projected,
    };
    let pre = tape.add_row(aggregated, bias)?;
    Ok(tape.relu(pre))
}

/// Applies every layer of `params` in order.
pub fn encode(tape: &mut Tape, g0: Var, adj: &AdjacencyMatrix, params: &GcnParams, mode: Aggregation) -> Result<Var> {
    let norm = adjacency_on_tape(tape, adj);
    let mut g = g0;
    for layer in &params.layers {
        let w = tape.param(layer.weight);
        let b = tape.param(layer.bias);
        g = gcn_layer(tape, g, norm, w, b, mode)?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Scalar evaluation of one layer straight from the formula.
    fn scalar_layer(adj: &AdjacencyMatrix, g: &[Vec<f64>], w: &Tensor, b: &[f64]) -> Vec<Vec<f64>> {
        let n = adj.n();
        let (din, h) = w.dims2();
        let mut out = vec![vec![0.0; h]; n];
        for t in 0..n {
            let d: f64 = (0..n).map(|j| f64::from(adj.get(t, j))).sum();
            for k in 0..h {
                let mut acc = 0.0;
                for j in 0..n {
                    if adj.get(t, j) == 0 {
                        continue;
                    }
                    let wg: f64 = (0..din).map(|i| w.at(i, k) * g[j][i]).sum();
                    acc += wg / d;
                }
                out[t][k] = (acc + b[k]).max(0.0);
            }
        }
        out
    }

    #[test]
    fn adjacency_examples() {
        assert_eq!(build_adjacency(&[0]).rows(), vec![vec![1]]);
        assert_eq!(build_adjacency(&[2, 0]).rows(), vec![vec![1, 1], vec![1, 1]]);
        let adj = build_adjacency(&[0, 1, 1]);
        assert_eq!(adj.rows(), vec![vec![1, 1, 1], vec![1, 1, 0], vec![1, 0, 1]]);
        let row_sums: Vec<usize> = adj.rows().iter().map(|r| r.iter().map(|&v| v as usize).sum()).collect();
        assert_eq!(row_sums, vec![3, 2, 2]);
        assert_eq!(adj.degrees(), &[3, 2, 2]);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let adj = build_adjacency(&[0, 1, 1]);
        let mut tape = Tape::new();
        let g = tape.leaf(&Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![-1.0, 1.0]]).unwrap());
        let norm = adjacency_on_tape(&mut tape, &adj);
        let w = tape.zeros(2, 4);
        let b = tape.zeros(1, 4);
        let out = gcn_layer(&mut tape, g, norm, w, b, Aggregation::Neighbor).unwrap();
        assert!(tape.value(out).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_node_identity_is_relu_of_row() {
        let adj = build_adjacency(&[0]);
        let mut tape = Tape::new();
        let g = tape.leaf(&Tensor::from_rows(&[vec![-1.0, 2.0]]).unwrap());
        let norm = adjacency_on_tape(&mut tape, &adj);
        let w = tape.leaf(&Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let b = tape.zeros(1, 2);
        let out = gcn_layer(&mut tape, g, norm, w, b, Aggregation::Neighbor).unwrap();
        assert_eq!(tape.value(out), &[0.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let adj = build_adjacency(&[0]);
        let mut tape = Tape::new();
        let g = tape.zeros(1, 3);
        let norm = adjacency_on_tape(&mut tape, &adj);
        let w = tape.zeros(2, 2);
        let b = tape.zeros(1, 2);
        assert!(matches!(gcn_layer(&mut tape, g, norm, w, b, Aggregation::Neighbor), Err(Error::Dimension { .. })));
    }

    #[test]
    fn matches_scalar_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let adj = build_adjacency(&[0, 1, 1]);
        let g = Tensor::from_rows(&[vec![0.3, -0.7, 1.1], vec![-1.2, 0.4, 0.9], vec![0.8, 0.1, -0.5]]).unwrap();
        let w = glorot(&mut rng, 3, 4);
        let b = Tensor::from_rows(&[vec![0.05, -0.1, 0.2, 0.0]]).unwrap();
        let mut tape = Tape::new();
        let gv = tape.leaf(&g);
        let norm = adjacency_on_tape(&mut tape, &adj);
        let wv = tape.leaf(&w);
        let bv = tape.leaf(&b);
        let out = gcn_layer(&mut tape, gv, norm, wv, bv, Aggregation::Neighbor).unwrap();
        let rows: Vec<Vec<f64>> = (0..3).map(|i| g.row(i).to_vec()).collect();
        let expected = scalar_layer(&adj, &rows, &w, b.data());
        for t in 0..3 {
            for k in 0..4 {
                assert!((tape.value(out)[t * 4 + k] - expected[t][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_layer_encode_is_one_gcn_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let params = GcnParams::register(&mut store, "gcn", 3, 4, 1, &mut rng).unwrap();
        let adj = build_adjacency(&[2, 0, 2]);
        let g0 = Tensor::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.4, 0.5, 0.6], vec![0.7, -0.8, 0.9]]).unwrap();
        let mut tape = Tape::with_params(&store);
        let gv = tape.leaf(&g0);
        let encoded = encode(&mut tape, gv, &adj, &params, Aggregation::Neighbor).unwrap();
        let norm = adjacency_on_tape(&mut tape, &adj);
        let w = tape.param(params.layers[0].weight);
        let b = tape.param(params.layers[0].bias);
        let direct = gcn_layer(&mut tape, gv, norm, w, b, Aggregation::Neighbor).unwrap();
        assert_eq!(tape.value(encoded), tape.value(direct));
    }

    #[test]
    fn self_only_ignores_neighbors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let params = GcnParams::register(&mut store, "gcn", 2, 3, 2, &mut rng).unwrap();
        let g0 = Tensor::from_rows(&[vec![0.1, 0.2], vec![-0.4, 0.5], vec![0.7, -0.8]]).unwrap();
        let run = |heads: &[usize]| {
            let mut tape = Tape::with_params(&store);
            let gv = tape.leaf(&g0);
            let out = encode(&mut tape, gv, &build_adjacency(heads), &params, Aggregation::SelfOnly).unwrap();
            tape.value(out).to_vec()
        };
        assert_eq!(run(&[0, 1, 1]), run(&[2, 0, 2]));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn permutation_equivariance(seed in any::<u64>(), n in 2usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let heads = crate::trainer::random_tree(n, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.gen_range(0..=i));
            }
            let mut store = ParamStore::new();
            let params = GcnParams::register(&mut store, "gcn", 3, 4, 2, &mut rng).unwrap();
            let g0 = Tensor::matrix(n, 3, (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            // Token perm[i] of the original becomes token i of the permuted sentence.
            let mut inv = vec![0; n];
            for (i, &p) in perm.iter().enumerate() {
                inv[p] = i;
            }
            let pheads: Vec<usize> = perm.iter().map(|&p| if heads[p] == 0 { 0 } else { inv[heads[p] - 1] + 1 }).collect();
            let mut pg = Tensor::zeros(&[n, 3]);
            for i in 0..n {
                pg.row_mut(i).copy_from_slice(g0.row(perm[i]));
            }
            let mut tape = Tape::with_params(&store);
            let a = tape.leaf(&g0);
            let out = encode(&mut tape, a, &build_adjacency(&heads), &params, Aggregation::Neighbor).unwrap();
            let b = tape.leaf(&pg);
            let pout = encode(&mut tape, b, &build_adjacency(&pheads), &params, Aggregation::Neighbor).unwrap();
            let (o, po) = (tape.to_tensor(out), tape.to_tensor(pout));
            for i in 0..n {
                for k in 0..4 {
                    prop_assert!((po.at(i, k) - o.at(perm[i], k)).abs() < 1e-12);
                }
            }
        }
    }
}

//! Dot-product node embeddings trained on the citation graph, used as the
//! neighbourhood teacher for rank-window sampling and as a retrieval
//! baseline.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CitationGraph;
use crate::matrix::{self, dot, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    table: Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEmbeddingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub negatives_per_edge: usize,
    #[serde(default = "default_node_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_node_lr() -> f64 {
    0.05
}

impl Default for NodeEmbeddingConfig {
    fn default() -> Self {
        NodeEmbeddingConfig {
            dim: 64,
            epochs: 20,
            negatives_per_edge: 5,
            learning_rate: default_node_lr(),
            seed: 0,
        }
    }
}

impl NodeEmbeddings {
    pub fn new(table: Matrix) -> Result<Self> {
        if table.cols() == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if !table.is_finite() {
            return Err(Error::invalid("embedding table contains non-finite values"));
        }
        Ok(NodeEmbeddings { table })
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn num_nodes(&self) -> usize {
        self.table.rows()
    }

    pub fn table(&self) -> &Matrix {
        &self.table
    }

    pub fn into_table(self) -> Matrix {
        self.table
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.table.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(Matrix::load(path)?)
    }
}

fn initial_table(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let bound = 1.0 / (dim as f64).sqrt();
    let data = (0..n * dim).map(|_| rng.random_range(-bound..bound)).collect();
    Matrix::from_vec(n, dim, data).expect("shape is consistent")
}

/// Edge-level softmax: each directed edge `(u, v)` is scored by
/// `e_u · e_v` against `negatives_per_edge` uniformly drawn nodes that are
/// not linked to `u`, and the log-softmax of the true edge is maximised with
/// plain SGD. Edges are visited in a seeded random order each epoch.
pub fn train_node_embeddings(
    graph: &CitationGraph,
    config: &NodeEmbeddingConfig,
) -> Result<NodeEmbeddings> {
    if config.dim == 0 {
        return Err(Error::invalid("dim must be positive"));
    }
    let n = graph.num_nodes();
    if n == 0 {
        return Err(Error::invalid("cannot embed an empty graph"));
    }
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut table = initial_table(n, dim, &mut rng);
    let mut edges: Vec<(u32, u32)> = graph.edges().collect();
    let lr = config.learning_rate;

    let mut targets: Vec<u32> = Vec::with_capacity(config.negatives_per_edge + 1);
    let mut scores: Vec<f64> = Vec::with_capacity(config.negatives_per_edge + 1);
    let mut grad_u = vec![0.0; dim];
    for _ in 0..config.epochs {
        edges.shuffle(&mut rng);
        for &(u, v) in &edges {
            targets.clear();
            targets.push(v);
            let mut tries = 0;
            while targets.len() <= config.negatives_per_edge && tries < 20 * (config.negatives_per_edge + 1) {
                tries += 1;
                let w = rng.random_range(0..n as u32);
                if w == u || graph.cites(u, w) || graph.cites(w, u) {
                    continue;
                }
                targets.push(w);
            }

            let eu = table.row(u as usize).to_vec();
            scores.clear();
            scores.extend(targets.iter().map(|&t| dot(&eu, table.row(t as usize))));
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - max).exp()).sum();

            grad_u.iter_mut().for_each(|g| *g = 0.0);
            for (j, &t) in targets.iter().enumerate() {
                let p = (scores[j] - max).exp() / z;
                let ds = if j == 0 { p - 1.0 } else { p };
                let row = table.row_mut(t as usize);
                for k in 0..dim {
                    grad_u[k] += ds * row[k];
                    row[k] -= lr * ds * eu[k];
                }
            }
            let row = table.row_mut(u as usize);
            for k in 0..dim {
                row[k] -= lr * grad_u[k];
            }
        }
    }
    if !table.is_finite() {
        return Err(Error::Diverged { step: config.epochs });
    }
    NodeEmbeddings::new(table)
}

/// Exact top-`k` neighbours of `anchor` by descending dot product, anchor
/// excluded, ties by ascending ordinal. `k` beyond the pool is clipped.
pub fn knn(embeddings: &NodeEmbeddings, anchor: u32, k: usize) -> Vec<(u32, f64)> {
    let n = embeddings.num_nodes();
    if k >= n {
        log::warn!("knn: K = {k} exceeds the {} other nodes; clipped", n.saturating_sub(1));
    }
    matrix::top_k_by_dot(&embeddings.table, anchor as usize, k)
}

//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the code path it is used to check.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use citesim_core::encoder::{loss_for, ParamBlock};
use citesim_core::synth::word;
use citesim_core::{Batch, EncoderModel, LossConfig, Matrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn reference_ap(ranking: &[u32], rel: &HashSet<u32>) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, x) in ranking.iter().enumerate() {
        if rel.contains(x) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / rel.len() as f64
}

pub fn reference_ndcg(ranking: &[u32], rel: &HashSet<u32>) -> f64 {
    let gain = |r: usize| std::f64::consts::LN_2 / (r as f64 + 1.0).ln();
    let dcg: f64 = (1..=ranking.len().min(10))
        .filter(|&r| rel.contains(&ranking[r - 1]))
        .map(gain)
        .sum();
    let idcg: f64 = (1..=rel.len().min(10)).map(gain).sum();
    dcg / idcg
}

/// Every other row by descending dot product with row `q`, ties by
/// ascending index.
pub fn full_sort(m: &Matrix, q: usize) -> Vec<u32> {
    let score = |i: u32| -> f64 { m.row(q).iter().zip(m.row(i as usize)).map(|(a, b)| a * b).sum() };
    let mut idx: Vec<u32> = (0..m.rows() as u32).filter(|&i| i as usize != q).collect();
    idx.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(a.cmp(&b)));
    idx
}

/// |S(a) ∩ S(b)| for every unordered pair with a nonzero overlap.
pub fn brute_force_overlaps(n: usize, sets: impl Fn(u32) -> Vec<u32>) -> BTreeMap<(u32, u32), u32> {
    let sets: Vec<HashSet<u32>> = (0..n as u32).map(|i| sets(i).into_iter().collect()).collect();
    let mut out = BTreeMap::new();
    for a in 0..n {
        for b in a + 1..n {
            let c = sets[a].intersection(&sets[b]).count() as u32;
            if c > 0 {
                out.insert((a as u32, b as u32), c);
            }
        }
    }
    out
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Ten-to-twenty pseudo-words drawn from a 300-word vocabulary.
pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(10..20);
    (0..len).map(|_| word(rng.random_range(0..300))).collect::<Vec<_>>().join(" ")
}

/// `n` rows; `extra` of them carry a hard negative appended to the right.
pub fn random_batch(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> Batch {
    let mut b = Batch {
        left_texts: (0..n).map(|_| random_text(rng)).collect(),
        right_texts: (0..n).map(|_| random_text(rng)).collect(),
        ..Default::default()
    };
    for row in 0..extra {
        b.right_texts.push(random_text(rng));
        b.hard_negative_of.push(row);
    }
    b
}

/// Largest |analytic - fd| / (|analytic| + 1e-6) over every projection and
/// bias entry and 64 evenly spaced entries of the touched embedding rows,
/// with central differences of step `h`.
pub fn max_gradient_error(model: &EncoderModel, batch: &Batch, config: &LossConfig) -> f64 {
    let h = 1e-5;
    let (_, grads) = loss_for(model, batch, config).unwrap();
    let d = model.dim();
    let touched: Vec<usize> = grads
        .embedding
        .keys()
        .flat_map(|&b| (0..d).map(move |j| b as usize * d + j))
        .collect();
    let stride = touched.len().div_ceil(64).max(1);
    let mut params: Vec<(ParamBlock, usize)> =
        touched.iter().step_by(stride).map(|&i| (ParamBlock::Embedding, i)).collect();
    params.extend((0..d * d).map(|i| (ParamBlock::Projection, i)));
    params.extend((0..d).map(|i| (ParamBlock::Bias, i)));

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (block, i) in params {
        let orig = *probe.param_mut(block, i);
        *probe.param_mut(block, i) = orig + h;
        let up = loss_for(&probe, batch, config).unwrap().0;
        *probe.param_mut(block, i) = orig - h;
        let down = loss_for(&probe, batch, config).unwrap().0;
        *probe.param_mut(block, i) = orig;
        let fd = (up - down) / (2.0 * h);
        let analytic = grads.get(block, i, d);
        worst = worst.max((analytic - fd).abs() / (analytic.abs() + 1e-6));
    }
    worst
}

/// FNV-1a n-gram hashing, count-weighted mean and affine projection,
/// written out from the definitions. Only valid for whitespace-separated
/// ASCII words.
pub fn reference_encode(model: &EncoderModel, text: &str) -> Vec<f64> {
    fn fnv(h: &mut u64, bytes: &[u8]) {
        for &b in bytes {
            *h ^= u64::from(b);
            *h = h.wrapping_mul(0x100000001b3);
        }
    }
    let tokens: Vec<String> = text
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    let d = model.dim();
    let mut sum = vec![0.0; d];
    let mut grams = 0usize;
    for &order in model.ngram_orders() {
        for gram in tokens.windows(order) {
            let mut h = 0xcbf29ce484222325u64;
            fnv(&mut h, &model.hash_seed().to_le_bytes());
            fnv(&mut h, &[order as u8]);
            for t in gram {
                fnv(&mut h, t.as_bytes());
                fnv(&mut h, &[0x1f]);
            }
            let row = model.embedding_row((h % model.hash_dim() as u64) as u32);
            for (s, e) in sum.iter_mut().zip(row) {
                *s += e;
            }
            grams += 1;
        }
    }
    let pooled: Vec<f64> = sum.iter().map(|s| if grams == 0 { 0.0 } else { s / grams as f64 }).collect();
    let p = model.projection();
    (0..d)
        .map(|i| model.bias()[i] + (0..d).map(|j| p[i * d + j] * pooled[j]).sum::<f64>())
        .collect()
}

pub fn example_config_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example/pipeline.toml")
}

/// The shipped example config with its work directory moved to `workdir`.
pub fn example_config(workdir: &std::path::Path) -> citesim_core::pipeline::PipelineConfig {
    let mut cfg = citesim_core::pipeline::PipelineConfig::load(&example_config_path()).unwrap();
    cfg.paths.workdir = workdir.to_path_buf();
    cfg
}

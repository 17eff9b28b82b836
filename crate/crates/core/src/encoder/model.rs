use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::store::{self, Reader, Writer, KIND_MODEL};
use crate::tokenize::Tokenizer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub hash_dim: usize,
    pub embed_dim: usize,
    pub ngram_orders: Vec<usize>,
    #[serde(default)]
    pub hash_seed: u64,
    #[serde(default = "default_noise")]
    pub projection_noise: f64,
}

fn default_noise() -> f64 {
    0.01
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hash_dim: 1 << 14,
            embed_dim: 64,
            ngram_orders: vec![1, 2],
            hash_seed: 0,
            projection_noise: default_noise(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hash_dim == 0 || self.hash_dim > u32::MAX as usize {
            return Err(Error::invalid("hash_dim must be in 1..=u32::MAX"));
        }
        if self.embed_dim == 0 {
            return Err(Error::invalid("embed_dim must be positive"));
        }
        if self.ngram_orders.is_empty() || self.ngram_orders.contains(&0) {
            return Err(Error::invalid("ngram_orders must be nonempty positive integers"));
        }
        Ok(())
    }
}

/// Text → vector map: tokens (lowercased) → hashed n-gram buckets →
/// mean of bucket embeddings → affine projection.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    hash_dim: usize,
    dim: usize,
    ngram_orders: Vec<usize>,
    hash_seed: u64,
    /// `hash_dim × dim`, row-major.
    pub(crate) embedding: Vec<f64>,
    /// `dim × dim`, row-major; output `y = P x + b`.
    pub(crate) projection: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    Embedding,
    Projection,
    Bias,
}

/// Forward-pass record kept for backpropagation.
#[derive(Debug, Clone)]
pub struct EncodedText {
    /// Distinct buckets with their share of the n-gram count.
    pub features: Vec<(u32, f64)>,
    pub pooled: Vec<f64>,
    pub output: Vec<f64>,
}

/// Gradient with the same shape as the model; embedding rows are sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: BTreeMap<u32, Vec<f64>>,
    pub projection: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros(dim: usize) -> Self {
        Gradients {
            embedding: BTreeMap::new(),
            projection: vec![0.0; dim * dim],
            bias: vec![0.0; dim],
        }
    }

    pub fn get(&self, block: ParamBlock, index: usize, dim: usize) -> f64 {
        match block {
            ParamBlock::Embedding => self
                .embedding
                .get(&((index / dim) as u32))
                .map_or(0.0, |row| row[index % dim]),
            ParamBlock::Projection => self.projection[index],
            ParamBlock::Bias => self.bias[index],
        }
    }
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

impl EncoderModel {
    pub fn new(config: &EncoderConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let bound = 1.0 / (d as f64).sqrt();
        let embedding = (0..config.hash_dim * d)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        let mut projection = vec![0.0; d * d];
        for (i, p) in projection.iter_mut().enumerate() {
            let noise = if config.projection_noise > 0.0 {
                rng.random_range(-config.projection_noise..config.projection_noise)
            } else {
                0.0
            };
            *p = if i / d == i % d { 1.0 } else { 0.0 } + noise;
        }
        Ok(EncoderModel {
            hash_dim: config.hash_dim,
            dim: d,
            ngram_orders: config.ngram_orders.clone(),
            hash_seed: config.hash_seed,
            embedding,
            projection,
            bias: vec![0.0; d],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hash_dim(&self) -> usize {
        self.hash_dim
    }

    pub fn ngram_orders(&self) -> &[usize] {
        &self.ngram_orders
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// `dim × dim`, row-major.
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn param_len(&self, block: ParamBlock) -> usize {
        match block {
            ParamBlock::Embedding => self.embedding.len(),
            ParamBlock::Projection => self.projection.len(),
            ParamBlock::Bias => self.bias.len(),
        }
    }

    pub fn param_mut(&mut self, block: ParamBlock, index: usize) -> &mut f64 {
        match block {
            ParamBlock::Embedding => &mut self.embedding[index],
            ParamBlock::Projection => &mut self.projection[index],
            ParamBlock::Bias => &mut self.bias[index],
        }
    }

    pub fn embedding_row(&self, bucket: u32) -> &[f64] {
        let b = bucket as usize;
        &self.embedding[b * self.dim..(b + 1) * self.dim]
    }

    /// Bucket of one n-gram: FNV-1a over the seed, the order, and each token
    /// followed by a 0x1F separator, reduced modulo `hash_dim`.
    pub fn bucket(&self, gram: &[String]) -> u32 {
        let mut h = fnv1a(self.hash_seed.to_le_bytes(), FNV_OFFSET);
        h = fnv1a([gram.len() as u8], h);
        for tok in gram {
            h = fnv1a(tok.bytes().chain(std::iter::once(0x1f)), h);
        }
        (h % self.hash_dim as u64) as u32
    }

    /// Buckets of every n-gram of every configured order, with multiplicity.
    pub fn buckets(&self, text: &str) -> Vec<u32> {
        let tokens = Tokenizer::lowercasing().tokenize(text);
        let mut out = Vec::new();
        for &order in &self.ngram_orders {
            if tokens.len() < order {
                continue;
            }
            out.extend(tokens.windows(order).map(|g| self.bucket(g)));
        }
        out
    }

    pub fn encode_full(&self, text: &str) -> EncodedText {
        let buckets = self.buckets(text);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for b in &buckets {
            *counts.entry(*b).or_default() += 1;
        }
        let total = buckets.len() as f64;
        let features: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(b, c)| (b, c as f64 / total))
            .collect();
        let d = self.dim;
        let mut pooled = vec![0.0; d];
        for &(b, w) in &features {
            for (p, e) in pooled.iter_mut().zip(self.embedding_row(b)) {
                *p += w * e;
            }
        }
        let mut output = self.bias.clone();
        for (i, o) in output.iter_mut().enumerate() {
            let row = &self.projection[i * d..(i + 1) * d];
            *o += row.iter().zip(&pooled).map(|(p, x)| p * x).sum::<f64>();
        }
        EncodedText {
            features,
            pooled,
            output,
        }
    }

    pub fn encode(&self, text: &str) -> Vec<f64> {
        self.encode_full(text).output
    }

    /// Adds the parameter gradient for `dl/d(output) = d_output`.
    pub fn backprop(&self, enc: &EncodedText, d_output: &[f64], grads: &mut Gradients) {
        let d = self.dim;
        let mut d_pooled = vec![0.0; d];
        for i in 0..d {
            let g = d_output[i];
            if g == 0.0 {
                continue;
            }
            grads.bias[i] += g;
            let prow = &self.projection[i * d..(i + 1) * d];
            let grow = &mut grads.projection[i * d..(i + 1) * d];
            for j in 0..d {
                grow[j] += g * enc.pooled[j];
                d_pooled[j] += prow[j] * g;
            }
        }
        for &(b, w) in &enc.features {
            let row = grads.embedding.entry(b).or_insert_with(|| vec![0.0; d]);
            for (r, g) in row.iter_mut().zip(&d_pooled) {
                *r += w * g;
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(KIND_MODEL);
        w.u64(self.hash_dim as u64);
        w.u64(self.dim as u64);
        w.u32(self.ngram_orders.len() as u32);
        for &o in &self.ngram_orders {
            w.u32(o as u32);
        }
        w.u64(self.hash_seed);
        w.f64s(&self.embedding);
        w.f64s(&self.projection);
        w.f64s(&self.bias);
        w.finish()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        store::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = store::read_file(path)?;
        let mut r = Reader::open(&bytes, KIND_MODEL)?;
        let hash_dim = r.u64()? as usize;
        let dim = r.u64()? as usize;
        let norders = r.u32()? as usize;
        let ngram_orders = (0..norders)
            .map(|_| r.u32().map(|o| o as usize))
            .collect::<Result<Vec<_>>>()?;
        let hash_seed = r.u64()?;
        let size = hash_dim
            .checked_mul(dim)
            .ok_or_else(|| Error::Corrupt("model dims overflow".into()))?;
        let embedding = r.f64s(size)?;
        let projection = r.f64s(dim * dim)?;
        let bias = r.f64s(dim)?;
        r.finish()?;
        Ok(EncoderModel {
            hash_dim,
            dim,
            ngram_orders,
            hash_seed,
            embedding,
            projection,
            bias,
        })
    }
}

/// Row `i` is the encoding of paper `i`'s title and abstract.
pub fn embed_corpus(model: &EncoderModel, corpus: &Corpus) -> Matrix {
    let rows: Vec<Vec<f64>> = corpus
        .papers()
        .par_iter()
        .map(|p| model.encode(&p.document_text()))
        .collect();
    Matrix::from_rows(rows, model.dim()).expect("encoder rows have model width")
}

use serde::{Deserialize, Serialize};

use super::model::{EncodedText, EncoderModel, Gradients};
use crate::error::{Error, Result};
use crate::matrix::{dot, norm};
use crate::sampler::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Contrastive,
    Hinge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Dot,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default = "one")]
    pub temperature: f64,
    #[serde(default = "one")]
    pub margin: f64,
    #[serde(default)]
    pub similarity: Similarity,
}

fn one() -> f64 {
    1.0
}

impl LossConfig {
    pub fn contrastive() -> Self {
        LossConfig {
            kind: LossKind::Contrastive,
            temperature: 1.0,
            margin: 1.0,
            similarity: Similarity::Dot,
        }
    }

    pub fn hinge() -> Self {
        LossConfig {
            kind: LossKind::Hinge,
            ..Self::contrastive()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.margin > 0.0) {
            return Err(Error::invalid(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }
}

/// `sim(u, v)` with its partial derivatives.
fn similarity(kind: Similarity, u: &[f64], v: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    match kind {
        Similarity::Dot => (dot(u, v), v.to_vec(), u.to_vec()),
        Similarity::Cosine => {
            let (nu, nv) = (norm(u), norm(v));
            if nu == 0.0 || nv == 0.0 {
                return (0.0, vec![0.0; u.len()], vec![0.0; v.len()]);
            }
            let s = dot(u, v) / (nu * nv);
            let du = u
                .iter()
                .zip(v)
                .map(|(a, b)| b / (nu * nv) - s * a / (nu * nu))
                .collect();
            let dv = u
                .iter()
                .zip(v)
                .map(|(a, b)| a / (nu * nv) - s * b / (nv * nv))
                .collect();
            (s, du, dv)
        }
    }
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

/// In-batch softmax loss over vectors. Row `i` of `left` is paired with
/// row `i` of `right`; every entry of `right` (including any beyond `left`'s
/// length) is in each row's denominator. Returns the mean loss and its
/// gradients with respect to `left` and `right`.
pub fn contrastive_from_embeddings(
    left: &[Vec<f64>],
    right: &[Vec<f64>],
    config: &LossConfig,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    config.validate()?;
    let n = left.len();
    if n < 2 || right.len() < n {
        return Err(Error::invalid(format!(
            "contrastive loss needs n >= 2 rows and at least n right entries, got {n} and {}",
            right.len()
        )));
    }
    let tau = config.temperature;
    let dim = left[0].len();
    let mut d_left = vec![vec![0.0; dim]; n];
    let mut d_right = vec![vec![0.0; dim]; right.len()];
    let mut total = 0.0;
    for i in 0..n {
        let sims: Vec<(f64, Vec<f64>, Vec<f64>)> = right
            .iter()
            .map(|r| similarity(config.similarity, &left[i], r))
            .collect();
        let logits: Vec<f64> = sims.iter().map(|s| s.0 / tau).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let loss_i = max + z.ln() - logits[i];
        if !loss_i.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        total += loss_i;
        for (j, (_, ds_du, ds_dv)) in sims.iter().enumerate() {
            let p = (logits[j] - max).exp() / z;
            let g = (p - if i == j { 1.0 } else { 0.0 }) / (tau * n as f64);
            axpy(&mut d_left[i], g, ds_du);
            axpy(&mut d_right[j], g, ds_dv);
        }
    }
    Ok((total / n as f64, d_left, d_right))
}

/// Mean of `max(0, sim(a, neg) - sim(a, pos) + margin)` with gradients for
/// anchors, positives and negatives. Inactive terms contribute nothing.
pub fn hinge_from_embeddings(
    anchors: &[Vec<f64>],
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
    config: &LossConfig,
) -> Result<(f64, [Vec<Vec<f64>>; 3])> {
    config.validate()?;
    let n = anchors.len();
    if n == 0 || positives.len() != n || negatives.len() != n {
        return Err(Error::invalid("hinge loss needs equally many anchors, positives and negatives"));
    }
    let dim = anchors[0].len();
    let mut grads = [vec![vec![0.0; dim]; n], vec![vec![0.0; dim]; n], vec![vec![0.0; dim]; n]];
    let mut total = 0.0;
    for i in 0..n {
        let (s_neg, dn_a, dn_n) = similarity(config.similarity, &anchors[i], &negatives[i]);
        let (s_pos, dp_a, dp_p) = similarity(config.similarity, &anchors[i], &positives[i]);
        let h = s_neg - s_pos + config.margin;
        if !h.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        if h > 0.0 {
            total += h;
            let w = 1.0 / n as f64;
            axpy(&mut grads[0][i], w, &dn_a);
            axpy(&mut grads[0][i], -w, &dp_a);
            axpy(&mut grads[1][i], -w, &dp_p);
            axpy(&mut grads[2][i], w, &dn_n);
        }
    }
    Ok((total / n as f64, grads))
}

fn encode_all(model: &EncoderModel, texts: &[String]) -> Vec<EncodedText> {
    texts.iter().map(|t| model.encode_full(t)).collect()
}

fn outputs(enc: &[EncodedText]) -> Vec<Vec<f64>> {
    enc.iter().map(|e| e.output.clone()).collect()
}

/// Contrastive loss of a batch with exact parameter gradients.
pub fn cl_loss(model: &EncoderModel, batch: &Batch, config: &LossConfig) -> Result<(f64, Gradients)> {
    let left = encode_all(model, &batch.left_texts);
    let right = encode_all(model, &batch.right_texts);
    let (loss, d_left, d_right) = contrastive_from_embeddings(&outputs(&left), &outputs(&right), config)?;
    let mut grads = Gradients::zeros(model.dim());
    for (e, g) in left.iter().zip(&d_left).chain(right.iter().zip(&d_right)) {
        model.backprop(e, g, &mut grads);
    }
    Ok((loss, grads))
}

/// Hinge loss over the batch rows; each row must carry a hard negative.
pub fn hinge_loss(model: &EncoderModel, batch: &Batch, config: &LossConfig) -> Result<(f64, Gradients)> {
    let n = batch.size();
    let mut neg_texts = Vec::with_capacity(n);
    for row in 0..n {
        let idx = batch.hard_negative_for(row).ok_or_else(|| {
            Error::invalid(format!("triplet at batch index {row} has no hard negative"))
        })?;
        neg_texts.push(batch.right_texts[idx].clone());
    }
    let a = encode_all(model, &batch.left_texts);
    let p = encode_all(model, &batch.right_texts[..n]);
    let q = encode_all(model, &neg_texts);
    let (loss, [ga, gp, gq]) = hinge_from_embeddings(&outputs(&a), &outputs(&p), &outputs(&q), config)?;
    let mut grads = Gradients::zeros(model.dim());
    for (encs, gs) in [(&a, &ga), (&p, &gp), (&q, &gq)] {
        for (e, g) in encs.iter().zip(gs) {
            model.backprop(e, g, &mut grads);
        }
    }
    Ok((loss, grads))
}

/// Dispatches on `config.kind`.
pub fn loss_for(model: &EncoderModel, batch: &Batch, config: &LossConfig) -> Result<(f64, Gradients)> {
    match config.kind {
        LossKind::Contrastive => cl_loss(model, batch, config),
        LossKind::Hinge => hinge_loss(model, batch, config),
    }
}

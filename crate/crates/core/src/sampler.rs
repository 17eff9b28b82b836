//! Training examples: snippet pairs for contrastive pre-training,
//! citation triplets with hard negatives, rank-window (neighbourhood)
//! triplets from node embeddings, and collision-free batching.

use std::collections::{HashSet, VecDeque};
use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::graph::CitationGraph;
use crate::graph_embed::{knn, NodeEmbeddings};
use crate::relations::RelationPairSet;
use crate::store::{self, Reader, Writer, KIND_TRIPLETS};
use crate::tokenize::{Spans, Tokenizer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnippetPair {
    pub a_text: String,
    pub b_text: String,
    pub source_paper: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TripletExample {
    pub anchor: u32,
    pub positive: u32,
    pub hard_negative: Option<u32>,
}

/// `n` aligned positive pairs. `right_texts` holds the `n` positives followed
/// by any hard negatives; `hard_negative_of[j]` is the row that the right
/// entry `n + j` was mined for. Every right entry is a negative for every
/// row other than its own.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub left_texts: Vec<String>,
    pub right_texts: Vec<String>,
    pub hard_negative_of: Vec<usize>,
    /// Paper ordinals behind the texts; empty for snippet batches.
    pub left_ids: Vec<u32>,
    pub right_ids: Vec<u32>,
}

impl Batch {
    pub fn size(&self) -> usize {
        self.left_texts.len()
    }

    /// Index into `right_texts` of the hard negative mined for `row`.
    pub fn hard_negative_for(&self, row: usize) -> Option<usize> {
        self.hard_negative_of
            .iter()
            .position(|&r| r == row)
            .map(|j| self.size() + j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnippetConfig {
    pub count: usize,
    #[serde(default = "default_min_len")]
    pub min_len: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_min_len() -> usize {
    10
}

fn default_max_len() -> usize {
    256
}

impl Default for SnippetConfig {
    fn default() -> Self {
        SnippetConfig {
            count: 1000,
            min_len: default_min_len(),
            max_len: default_max_len(),
        }
    }
}

fn snippet_source(corpus: &Corpus, ordinal: u32, tok: &Tokenizer) -> Spans {
    let p = corpus.paper(ordinal);
    let text = match &p.content {
        Some(c) => format!("{} {}", p.abstract_text, c),
        None => p.abstract_text.clone(),
    };
    tok.spans(&text)
}

/// Pairs of independently drawn contiguous token spans from the abstract
/// and content of one paper. Papers shorter than `2 * min_len` tokens are
/// skipped.
pub fn sample_snippet_pairs(corpus: &Corpus, config: &SnippetConfig, seed: u64) -> Result<Vec<SnippetPair>> {
    if config.min_len == 0 || config.max_len < config.min_len {
        return Err(Error::invalid(format!(
            "snippet lengths must satisfy 0 < min_len <= max_len, got {}..{}",
            config.min_len, config.max_len
        )));
    }
    let tok = Tokenizer::default();
    let eligible: Vec<(u32, Spans)> = (0..corpus.len() as u32)
        .map(|i| (i, snippet_source(corpus, i, &tok)))
        .filter(|(_, s)| s.len() >= 2 * config.min_len)
        .collect();
    if eligible.is_empty() {
        return Err(Error::invalid(format!(
            "no paper has at least {} tokens for snippet sampling",
            2 * config.min_len
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |spans: &Spans, rng: &mut ChaCha8Rng| {
        let total = spans.len();
        let len = rng.random_range(config.min_len..=config.max_len.min(total));
        let start = rng.random_range(0..=total - len);
        spans.slice(start, start + len).to_string()
    };
    Ok((0..config.count)
        .map(|_| {
            let (ordinal, spans) = &eligible[rng.random_range(0..eligible.len())];
            let a_text = draw(spans, &mut rng);
            let b_text = draw(spans, &mut rng);
            SnippetPair {
                a_text,
                b_text,
                source_paper: *ordinal,
            }
        })
        .collect())
}

/// Hard negatives cited by the positive but not by the anchor. For each
/// positive pair up to `per_anchor` distinct negatives are drawn; when no
/// candidate exists a single triplet without a hard negative is emitted.
pub fn sample_specter_triplets(
    pairs: &RelationPairSet,
    graph: &CitationGraph,
    per_anchor: usize,
    seed: u64,
) -> Result<Vec<TripletExample>> {
    let n = graph.num_nodes() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pairs.len() * per_anchor.max(1));
    for p in &pairs.pairs {
        let (anchor, positive) = (p.a, p.b);
        if anchor >= n || positive >= n {
            return Err(Error::invalid(format!(
                "pair ({anchor}, {positive}) outside the {n}-node graph"
            )));
        }
        if anchor == positive {
            continue;
        }
        let candidates: Vec<u32> = graph
            .out_adj(positive)
            .iter()
            .copied()
            .filter(|&c| c != anchor && c != positive && !graph.cites(anchor, c))
            .collect();
        if candidates.is_empty() || per_anchor == 0 {
            out.push(TripletExample {
                anchor,
                positive,
                hard_negative: None,
            });
            continue;
        }
        let take = per_anchor.min(candidates.len());
        for i in index::sample(&mut rng, candidates.len(), take) {
            out.push(TripletExample {
                anchor,
                positive,
                hard_negative: Some(candidates[i]),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScinclConfig {
    /// First positive rank (1 = nearest neighbour).
    pub i: usize,
    /// First negative rank.
    pub k: usize,
    /// Window width; windows are `[i, i+n]` and `[k, k+n]`, inclusive.
    pub n: usize,
    pub per_anchor: usize,
}

impl Default for ScinclConfig {
    fn default() -> Self {
        ScinclConfig {
            i: 20,
            k: 2000,
            n: 5,
            per_anchor: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankWindows {
    pub positive: (usize, usize),
    pub negative: (usize, usize),
    pub clipped: bool,
}

impl ScinclConfig {
    /// Rank windows after clipping to a pool of `num_nodes` (self excluded).
    pub fn windows(&self, num_nodes: usize) -> RankWindows {
        let last = num_nodes.saturating_sub(1);
        let clip = |(s, e): (usize, usize)| (s.min(last), e.min(last));
        let positive = (self.i, self.i + self.n);
        let negative = (self.k, self.k + self.n);
        let (cp, cn) = (clip(positive), clip(negative));
        RankWindows {
            positive: cp,
            negative: cn,
            clipped: cp != positive || cn != negative,
        }
    }
}

/// Rank-window triplets: positives from kNN ranks `[i, i+n]` and negatives
/// from `[k, k+n]` of each anchor's exact neighbour list.
pub fn sample_scincl(
    embeddings: &NodeEmbeddings,
    anchors: &[u32],
    config: &ScinclConfig,
    seed: u64,
) -> Result<(Vec<TripletExample>, RankWindows)> {
    if config.i == 0 || config.k == 0 {
        return Err(Error::invalid("rank windows start at 1"));
    }
    let num = embeddings.num_nodes();
    if let Some(&bad) = anchors.iter().find(|&&a| a as usize >= num) {
        return Err(Error::invalid(format!(
            "anchor {bad} has no row in the {num}-node embedding table"
        )));
    }
    let windows = config.windows(num);
    if windows.clipped {
        log::warn!(
            "rank windows [{}, {}] / [{}, {}] clipped to a pool of {} neighbours",
            config.i,
            config.i + config.n,
            config.k,
            config.k + config.n,
            num.saturating_sub(1)
        );
    }
    let depth = windows.positive.1.max(windows.negative.1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &anchor in anchors {
        let ranked = knn(embeddings, anchor, depth);
        let window = |(s, e): (usize, usize)| -> Vec<u32> {
            if s == 0 || s > ranked.len() {
                return Vec::new();
            }
            ranked[s - 1..e.min(ranked.len())].iter().map(|x| x.0).collect()
        };
        let pos = window(windows.positive);
        let neg = window(windows.negative);
        if pos.is_empty() {
            continue;
        }
        let take = config.per_anchor.min(pos.len());
        let pos_pick = index::sample(&mut rng, pos.len(), take).into_vec();
        let neg_pick = if neg.is_empty() {
            Vec::new()
        } else {
            index::sample(&mut rng, neg.len(), take.min(neg.len())).into_vec()
        };
        for (j, &pi) in pos_pick.iter().enumerate() {
            out.push(TripletExample {
                anchor,
                positive: pos[pi],
                hard_negative: (!neg_pick.is_empty()).then(|| neg[neg_pick[j % neg_pick.len()]]),
            });
        }
    }
    Ok((out, windows))
}

fn unordered(a: u32, b: u32) -> (u32, u32) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Packs shuffled triplets into batches of exactly `n` rows. A triplet is
/// deferred to a later batch (re-drawn) when it would repeat a right-side
/// paper, put its anchor on the right side, or place any known positive pair
/// off the diagonal. Leftover triplets are dropped.
pub fn make_batches(
    triplets: &[TripletExample],
    corpus: &Corpus,
    n: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if n < 2 {
        return Err(Error::invalid(format!("batch size must be at least 2, got {n}")));
    }
    if triplets.len() < n {
        return Err(Error::invalid(format!(
            "{} triplets cannot fill a batch of {n}",
            triplets.len()
        )));
    }
    let known: HashSet<(u32, u32)> = triplets
        .iter()
        .map(|t| unordered(t.anchor, t.positive))
        .collect();
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut queue: VecDeque<usize> = order.into();

    let mut batches = Vec::new();
    loop {
        let mut rows: Vec<TripletExample> = Vec::with_capacity(n);
        let mut left: HashSet<u32> = HashSet::new();
        let mut right: HashSet<u32> = HashSet::new();
        let mut deferred: Vec<usize> = Vec::new();
        while rows.len() < n {
            let Some(idx) = queue.pop_front() else { break };
            let t = triplets[idx];
            let mut incoming = vec![t.positive];
            incoming.extend(t.hard_negative);
            let clash = right.contains(&t.anchor)
                || incoming.iter().any(|r| right.contains(r) || left.contains(r))
                || t.hard_negative == Some(t.positive)
                || right.iter().any(|&r| known.contains(&unordered(t.anchor, r)))
                || left.iter().any(|&l| {
                    incoming.iter().any(|&r| known.contains(&unordered(l, r)))
                })
                || t.hard_negative.is_some_and(|h| known.contains(&unordered(t.anchor, h)));
            if clash {
                deferred.push(idx);
                continue;
            }
            left.insert(t.anchor);
            right.extend(incoming);
            rows.push(t);
        }
        for idx in deferred.into_iter().rev() {
            queue.push_front(idx);
        }
        if rows.len() < n {
            break;
        }
        batches.push(assemble(&rows, corpus));
    }
    if batches.is_empty() {
        return Err(Error::invalid(
            "no collision-free batch could be formed from the triplets",
        ));
    }
    Ok(batches)
}

fn assemble(rows: &[TripletExample], corpus: &Corpus) -> Batch {
    let text = |o: u32| corpus.paper(o).document_text();
    let mut b = Batch {
        left_texts: rows.iter().map(|t| text(t.anchor)).collect(),
        right_texts: rows.iter().map(|t| text(t.positive)).collect(),
        hard_negative_of: Vec::new(),
        left_ids: rows.iter().map(|t| t.anchor).collect(),
        right_ids: rows.iter().map(|t| t.positive).collect(),
    };
    for (row, t) in rows.iter().enumerate() {
        if let Some(h) = t.hard_negative {
            b.right_texts.push(text(h));
            b.right_ids.push(h);
            b.hard_negative_of.push(row);
        }
    }
    b
}

/// Batches of snippet pairs with no source paper repeated inside a batch.
pub fn make_snippet_batches(pairs: &[SnippetPair], n: usize, seed: u64) -> Result<Vec<Batch>> {
    if n < 2 {
        return Err(Error::invalid(format!("batch size must be at least 2, got {n}")));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut queue: VecDeque<usize> = order.into();
    let mut batches = Vec::new();
    loop {
        let mut rows = Vec::with_capacity(n);
        let mut seen = HashSet::new();
        let mut deferred = Vec::new();
        while rows.len() < n {
            let Some(idx) = queue.pop_front() else { break };
            if seen.insert(pairs[idx].source_paper) {
                rows.push(idx);
            } else {
                deferred.push(idx);
            }
        }
        for idx in deferred.into_iter().rev() {
            queue.push_front(idx);
        }
        if rows.len() < n {
            break;
        }
        batches.push(Batch {
            left_texts: rows.iter().map(|&i| pairs[i].a_text.clone()).collect(),
            right_texts: rows.iter().map(|&i| pairs[i].b_text.clone()).collect(),
            ..Default::default()
        });
    }
    if batches.is_empty() {
        return Err(Error::invalid(format!(
            "{} snippet pairs cannot fill a batch of {n}",
            pairs.len()
        )));
    }
    Ok(batches)
}

/// Three-column `anchor<TAB>positive<TAB>negative` audit listing with paper
/// ids; a missing hard negative is written as `-`.
pub fn export_triplets_tsv<W: Write>(
    triplets: &[TripletExample],
    corpus: &Corpus,
    mut out: W,
) -> std::io::Result<()> {
    for t in triplets {
        let id = |o: u32| corpus.paper(o).paper_id.as_str();
        writeln!(
            out,
            "{}\t{}\t{}",
            id(t.anchor),
            id(t.positive),
            t.hard_negative.map_or("-", id)
        )?;
    }
    Ok(())
}

pub fn triplets_to_bytes(triplets: &[TripletExample]) -> Vec<u8> {
    let mut w = Writer::new(KIND_TRIPLETS);
    w.u64(triplets.len() as u64);
    for t in triplets {
        w.u32(t.anchor);
        w.u32(t.positive);
        w.u32(t.hard_negative.map_or(u32::MAX, |h| h));
    }
    w.finish()
}

pub fn save_triplets(triplets: &[TripletExample], path: &Path) -> Result<()> {
    store::write_file(path, &triplets_to_bytes(triplets))
}

pub fn load_triplets(path: &Path) -> Result<Vec<TripletExample>> {
    let bytes = store::read_file(path)?;
    let mut r = Reader::open(&bytes, KIND_TRIPLETS)?;
    let n = r.u64()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let anchor = r.u32()?;
        let positive = r.u32()?;
        let h = r.u32()?;
        out.push(TripletExample {
            anchor,
            positive,
            hard_negative: (h != u32::MAX).then_some(h),
        });
    }
    r.finish()?;
    Ok(out)
}

//! Deterministic fixtures shared by the benchmarks.

use citesim_core::synth::{clustered_corpus, ClusteredConfig};
use citesim_core::{Batch, Corpus, Matrix};

/// Dense matrix filled from a fixed low-discrepancy sequence, so benches
/// need no RNG of their own.
pub fn matrix(rows: usize, cols: usize) -> Matrix {
    let golden = 0.618_033_988_749_895;
    let data = (0..rows * cols).map(|i| ((i as f64 * golden).fract() - 0.5) * 2.0).collect();
    Matrix::from_vec(rows, cols, data).expect("consistent shape")
}

pub fn corpus(papers: usize) -> Corpus {
    let cfg = ClusteredConfig {
        topics: 10,
        per_topic: papers.div_ceil(10),
        seed: 1,
        ..Default::default()
    };
    clustered_corpus(&cfg).expect("valid config").corpus
}

/// In-batch-negative batch of `n` aligned pairs taken from `corpus`.
pub fn batch(corpus: &Corpus, n: usize) -> Batch {
    let text = |i: usize| {
        let p = corpus.paper(i as u32);
        format!("{} {}", p.title, p.abstract_text)
    };
    Batch {
        left_texts: (0..n).map(text).collect(),
        right_texts: (n..2 * n).map(text).collect(),
        ..Default::default()
    }
}

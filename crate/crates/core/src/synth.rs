//! Seeded synthetic corpora and graphs for tests, benchmarks and the
//! shipped example configuration.

use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{Corpus, Paper};
use crate::error::{Error, Result};
use crate::graph::CitationGraph;
use crate::matrix::Matrix;

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vo", "si", "pe", "du", "ga", "ho", "ji", "be", "ze", "fa",
    "no", "ri", "ku", "sa", "te", "mo", "li", "ve",
];

/// Pronounceable pseudo-word for a vocabulary id; distinct ids give
/// distinct words.
pub fn word(id: usize) -> String {
    let mut out = String::new();
    let mut x = id;
    loop {
        out.push_str(SYLLABLES[x % SYLLABLES.len()]);
        x /= SYLLABLES.len();
        if x == 0 {
            break;
        }
    }
    if out.len() < 4 {
        out.push('x');
    }
    out
}

/// Directed G(n, p) without self-loops.
pub fn random_graph(n: usize, p: f64, seed: u64) -> CitationGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for u in 0..n as u32 {
        for v in 0..n as u32 {
            if u != v && rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    CitationGraph::from_edges(n, edges)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredConfig {
    pub topics: usize,
    pub per_topic: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    /// Words reserved for each topic.
    pub topic_vocab: usize,
    /// Shared background vocabulary, drawn Zipf-distributed.
    pub generic_vocab: usize,
    pub abstract_len: usize,
    pub title_len: usize,
    /// Probability that a token comes from the paper's topic vocabulary.
    pub topic_share: f64,
    /// Language codes with relative weights, drawn independently per paper.
    pub languages: Vec<(String, f64)>,
    pub seed: u64,
}

impl Default for ClusteredConfig {
    fn default() -> Self {
        ClusteredConfig {
            topics: 20,
            per_topic: 50,
            intra_p: 0.2,
            inter_p: 0.002,
            topic_vocab: 40,
            generic_vocab: 2000,
            abstract_len: 60,
            title_len: 8,
            topic_share: 0.15,
            languages: vec![("en".to_string(), 1.0)],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusteredCorpus {
    pub corpus: Corpus,
    pub graph: CitationGraph,
    pub topic_of: Vec<u32>,
}

struct TextSampler {
    generic: WeightedIndex<f64>,
    config: ClusteredConfig,
}

impl TextSampler {
    fn new(config: &ClusteredConfig) -> Self {
        let weights: Vec<f64> = (1..=config.generic_vocab).map(|r| 1.0 / r as f64).collect();
        TextSampler {
            generic: WeightedIndex::new(weights).expect("non-empty vocabulary"),
            config: config.clone(),
        }
    }

    fn words(&self, rng: &mut ChaCha8Rng, topic: usize, len: usize) -> String {
        let c = &self.config;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let id = if rng.random_bool(c.topic_share) {
                c.generic_vocab + topic * c.topic_vocab + rng.random_range(0..c.topic_vocab)
            } else {
                self.generic.sample(rng)
            };
            out.push(word(id));
        }
        out.join(" ")
    }
}

/// Topic-clustered corpus. Topics are assigned by a seeded
/// permutation so ordinals carry no topic signal; paper `u` may cite only
/// papers with a smaller ordinal, with probability `intra_p` inside its
/// topic and `inter_p` across topics.
pub fn clustered_corpus(config: &ClusteredConfig) -> Result<ClusteredCorpus> {
    if config.topics == 0 || config.per_topic == 0 || config.topic_vocab == 0 || config.generic_vocab == 0 {
        return Err(Error::invalid("clustered corpus needs non-zero sizes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.topics * config.per_topic;
    let mut topic_of: Vec<u32> = (0..n).map(|i| (i / config.per_topic) as u32).collect();
    topic_of.shuffle(&mut rng);

    let pick = WeightedIndex::new(config.languages.iter().map(|(_, w)| *w))
        .map_err(|e| Error::invalid(format!("language weights: {e}")))?;
    let sampler = TextSampler::new(config);
    let papers = (0..n)
        .map(|i| {
            let t = topic_of[i] as usize;
            let title = sampler.words(&mut rng, t, config.title_len);
            let abstract_text = format!("{}.", sampler.words(&mut rng, t, config.abstract_len));
            let lang = config.languages[pick.sample(&mut rng)].0.clone();
            Paper::new(format!("syn/{i:05}"), title, abstract_text, lang)
        })
        .collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..u {
            let p = if topic_of[u] == topic_of[v] { config.intra_p } else { config.inter_p };
            if rng.random_bool(p) {
                edges.push((u as u32, v as u32));
            }
        }
    }
    Ok(ClusteredCorpus {
        corpus: Corpus::new(papers)?,
        graph: CitationGraph::from_edges(n, edges),
        topic_of,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultilingualConfig {
    pub papers: usize,
    /// Language codes with relative weights.
    pub languages: Vec<(String, f64)>,
    /// Mean number of references per paper.
    pub mean_references: f64,
    /// Probability that a reference stays within the citing paper's language.
    pub same_language_p: f64,
    /// Share of papers left without any citation link.
    pub isolated_share: f64,
    pub seed: u64,
}

impl Default for MultilingualConfig {
    fn default() -> Self {
        MultilingualConfig {
            papers: 2000,
            languages: [("en", 0.4), ("de", 0.2), ("fr", 0.15), ("es", 0.12), ("ja", 0.08), ("ko", 0.05)]
                .into_iter()
                .map(|(l, w)| (l.to_string(), w))
                .collect(),
            mean_references: 3.0,
            same_language_p: 0.6,
            isolated_share: 0.05,
            seed: 0,
        }
    }
}

/// Multilingual corpus with a language-assortative citation graph. Texts
/// are pseudo-words; the language field carries the label.
pub fn multilingual_corpus(config: &MultilingualConfig) -> Result<(Corpus, CitationGraph)> {
    if config.papers < 2 || config.languages.is_empty() {
        return Err(Error::invalid("multilingual corpus needs at least 2 papers and 1 language"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pick = WeightedIndex::new(config.languages.iter().map(|(_, w)| *w))
        .map_err(|e| Error::invalid(format!("language weights: {e}")))?;
    let n = config.papers;
    let lang_of: Vec<usize> = (0..n).map(|_| pick.sample(&mut rng)).collect();
    let isolated: Vec<bool> = (0..n).map(|_| rng.random_bool(config.isolated_share)).collect();
    let mut by_lang = vec![Vec::new(); config.languages.len()];
    for (i, &l) in lang_of.iter().enumerate() {
        if !isolated[i] {
            by_lang[l].push(i as u32);
        }
    }
    let linked: Vec<u32> = (0..n as u32).filter(|&i| !isolated[i as usize]).collect();

    let mut edges = Vec::new();
    for &u in &linked {
        let refs = rng.random_range(0..=(2.0 * config.mean_references).round() as usize);
        for _ in 0..refs {
            let pool = if rng.random_bool(config.same_language_p) {
                &by_lang[lang_of[u as usize]]
            } else {
                &linked
            };
            let v = pool[rng.random_range(0..pool.len())];
            if v != u {
                edges.push((u, v));
            }
        }
    }

    let papers = (0..n)
        .map(|i| {
            let lang = &config.languages[lang_of[i]].0;
            let base = 10_000 + lang_of[i] * 500;
            let mut text = |len: usize| {
                (0..len)
                    .map(|_| word(base + rng.random_range(0..500)))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let title = text(6);
            let abstract_text = format!("{}.", text(40));
            Paper::new(format!("ml/{i:05}"), title, abstract_text, lang.clone())
        })
        .collect();
    Ok((Corpus::new(papers)?, CitationGraph::from_edges(n, edges)))
}

/// `clusters` well-separated Gaussian blobs of `per_cluster` points each;
/// point `i` belongs to cluster `i % clusters`.
pub fn planted_clusters(
    clusters: usize,
    per_cluster: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> (Matrix, Vec<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let n = clusters * per_cluster;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % clusters;
        labels.push(c as u32);
        data.extend(centres[c].iter().map(|x| x + noise * rng.random_range(-1.0..1.0)));
    }
    (Matrix::from_vec(n, dim, data).expect("shape matches"), labels)
}

#[derive(Serialize)]
struct JsonRecord<'a> {
    paper_id: &'a str,
    title: &'a str,
    #[serde(rename = "abstract")]
    abstract_text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    content: Option<&'a str>,
    language: &'a str,
    categories: &'a [String],
}

pub fn write_jsonl<W: Write>(corpus: &Corpus, mut out: W) -> std::io::Result<()> {
    for p in corpus.papers() {
        let rec = JsonRecord {
            paper_id: &p.paper_id,
            title: &p.title,
            abstract_text: &p.abstract_text,
            content: p.content.as_deref(),
            language: &p.language,
            categories: &p.categories,
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_edges_tsv<W: Write>(corpus: &Corpus, graph: &CitationGraph, mut out: W) -> std::io::Result<()> {
    for (u, v) in graph.edges() {
        writeln!(out, "{}\t{}", corpus.paper(u).paper_id, corpus.paper(v).paper_id)?;
    }
    Ok(())
}

/// Writes `corpus.jsonl` and `edges.tsv` under `dir`.
pub fn write_dataset(corpus: &Corpus, graph: &CitationGraph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cp = dir.join("corpus.jsonl");
    let f = std::fs::File::create(&cp).map_err(|e| Error::io(&cp, e))?;
    write_jsonl(corpus, std::io::BufWriter::new(f)).map_err(|e| Error::io(&cp, e))?;
    let ep = dir.join("edges.tsv");
    let f = std::fs::File::create(&ep).map_err(|e| Error::io(&ep, e))?;
    write_edges_tsv(corpus, graph, std::io::BufWriter::new(f)).map_err(|e| Error::io(&ep, e))?;
    Ok(())
}

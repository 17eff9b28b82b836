//! Stage orchestration behind a single TOML config.
//!
//! Every stage reads its inputs from the work directory, writes its
//! artifacts there and records their SHA-256 hashes in `manifest.json`.
//! Stage seeds derive from the global seed, so the same config and seed
//! reproduce byte-identical artifacts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, Corpus, InputFormat};
use crate::encoder::{self, EncoderConfig, EncoderModel, LossConfig, LossKind, TrainConfig, TrainState};
use crate::enrich::{self, EchoSummaryClient, EndpointConfig, Enricher, HttpSummaryClient, IdentityTranslator, Summarizer, SummarizerKind, SummaryClient};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, RunMetadata};
use crate::graph::{self, CitationGraph};
use crate::graph_embed::{self, NodeEmbeddingConfig, NodeEmbeddings};
use crate::relations::{self, PairStrategy, RelationPairSet, DEFAULT_MAX_DEGREE};
use crate::sampler::{self, ScinclConfig, SnippetConfig, TripletExample};
use crate::split::{self, Split, SplitAssignment, SplitSpec};

pub const MANIFEST: &str = "manifest.json";

const CORPUS: &str = "corpus.bin";
const GRAPH: &str = "graph.bin";
const PAIRS_DC: &str = "pairs_dc.bin";
const PAIRS_CC: &str = "pairs_cc.bin";
const PAIRS_BC: &str = "pairs_bc.bin";
const SPLIT: &str = "split.bin";
const ENRICHED: &str = "corpus_enriched.bin";
const NODE_EMB: &str = "node_embeddings.bin";
const TRIPLETS: &str = "triplets.bin";
const PRETRAINED: &str = "model_pretrained.bin";
const MODEL: &str = "model.bin";
const REPORT: &str = "report.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Graph,
    Mine,
    Split,
    Enrich,
    GraphEmbed,
    Sample,
    Pretrain,
    Train,
    Evaluate,
    All,
}

impl Stage {
    /// Dependency order used by `all`.
    pub const ORDER: [Stage; 10] = [
        Stage::Ingest,
        Stage::Graph,
        Stage::Mine,
        Stage::Split,
        Stage::Enrich,
        Stage::GraphEmbed,
        Stage::Sample,
        Stage::Pretrain,
        Stage::Train,
        Stage::Evaluate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Mine => "mine",
            Stage::Split => "split",
            Stage::Enrich => "enrich",
            Stage::GraphEmbed => "graph-embed",
            Stage::Sample => "sample",
            Stage::Pretrain => "pretrain",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::All => "all",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ORDER
            .into_iter()
            .chain([Stage::All])
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub corpus: PathBuf,
    pub edges: PathBuf,
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
}

fn default_workdir() -> PathBuf {
    PathBuf::from("work")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_top_l")]
    pub top_l: usize,
    #[serde(default = "default_idt_fraction")]
    pub idt_fraction: f64,
    #[serde(default)]
    pub odt_tail_fraction: f64,
}

fn default_top_l() -> usize {
    30
}
fn default_idt_fraction() -> f64 {
    0.1
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            top_l: default_top_l(),
            idt_fraction: default_idt_fraction(),
            odt_tail_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiningSection {
    #[serde(default = "default_degree")]
    pub max_out_degree: usize,
    #[serde(default = "default_degree")]
    pub max_in_degree: usize,
}

fn default_degree() -> usize {
    DEFAULT_MAX_DEGREE
}

impl Default for MiningSection {
    fn default() -> Self {
        MiningSection {
            max_out_degree: DEFAULT_MAX_DEGREE,
            max_in_degree: DEFAULT_MAX_DEGREE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMethod {
    Specter,
    Scincl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_method")]
    pub method: SamplingMethod,
    #[serde(default = "one")]
    pub per_anchor: usize,
    #[serde(default)]
    pub scincl: ScinclSection,
}

fn default_strategy() -> String {
    "DC∪CC".to_string()
}
fn default_method() -> SamplingMethod {
    SamplingMethod::Specter
}
fn one() -> usize {
    1
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            strategy: default_strategy(),
            method: default_method(),
            per_anchor: 1,
            scincl: ScinclSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScinclSection {
    pub i: usize,
    pub k: usize,
    pub n: usize,
}

impl Default for ScinclSection {
    fn default() -> Self {
        let d = ScinclConfig::default();
        ScinclSection { i: d.i, k: d.k, n: d.n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSection {
    /// Zero skips pre-training; the initial model is passed on unchanged.
    #[serde(default)]
    pub steps: usize,
    #[serde(default = "default_snippets")]
    pub snippets: usize,
    #[serde(default = "default_snippet_min")]
    pub min_len: usize,
    #[serde(default = "default_snippet_max")]
    pub max_len: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_snippets() -> usize {
    2000
}
fn default_snippet_min() -> usize {
    10
}
fn default_snippet_max() -> usize {
    256
}
fn default_batch() -> usize {
    32
}

impl Default for PretrainSection {
    fn default() -> Self {
        PretrainSection {
            steps: 0,
            snippets: default_snippets(),
            min_len: default_snippet_min(),
            max_len: default_snippet_max(),
            batch_size: default_batch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Batches held out to select the best checkpoint.
    #[serde(default)]
    pub dev_batches: usize,
}

fn default_steps() -> usize {
    500
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            steps: default_steps(),
            batch_size: default_batch(),
            dev_batches: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphEmbedSection {
    #[serde(default = "default_node_dim")]
    pub dim: usize,
    #[serde(default = "default_node_epochs")]
    pub epochs: usize,
    #[serde(default = "default_node_negatives")]
    pub negatives_per_edge: usize,
    #[serde(default = "default_node_lr")]
    pub learning_rate: f64,
}

fn default_node_dim() -> usize {
    64
}
fn default_node_epochs() -> usize {
    20
}
fn default_node_negatives() -> usize {
    5
}
fn default_node_lr() -> f64 {
    0.05
}

impl Default for GraphEmbedSection {
    fn default() -> Self {
        GraphEmbedSection {
            dim: default_node_dim(),
            epochs: default_node_epochs(),
            negatives_per_edge: default_node_negatives(),
            learning_rate: default_node_lr(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnrichSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_summarizer")]
    pub kind: SummarizerKind,
    #[serde(default = "default_summary_tokens")]
    pub max_tokens: usize,
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    /// Reply of the offline stub.
    #[serde(default)]
    pub stub_reply: String,
    #[serde(default)]
    pub endpoint: Option<EndpointConfig>,
}

fn default_summarizer() -> SummarizerKind {
    SummarizerKind::TopnTruncation
}
fn default_summary_tokens() -> usize {
    64
}
fn default_concurrency() -> usize {
    4
}

impl Default for EnrichSection {
    fn default() -> Self {
        EnrichSection {
            enabled: false,
            kind: default_summarizer(),
            max_tokens: default_summary_tokens(),
            max_concurrent: default_concurrency(),
            stub_reply: String::new(),
            endpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_eval_splits")]
    pub splits: Vec<Split>,
    /// Also score the untrained encoder and, when present, the node
    /// embeddings.
    #[serde(default = "yes")]
    pub baselines: bool,
}

fn default_eval_splits() -> Vec<Split> {
    vec![Split::Idt, Split::Odt]
}
fn yes() -> bool {
    true
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            splits: default_eval_splits(),
            baselines: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: PathsSection,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub mining: MiningSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub pretrain: PretrainSection,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default = "LossConfig::contrastive")]
    pub loss: LossConfig,
    #[serde(default)]
    pub train: TrainSection,
    /// Optimizer and schedule shared by pre-training and fine-tuning.
    #[serde(default)]
    pub optimizer: TrainConfig,
    #[serde(default)]
    pub graph_embed: GraphEmbedSection,
    #[serde(default)]
    pub enrich: EnrichSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn field(name: &str, e: impl fmt::Display) -> Error {
    Error::Config(format!("{name}: {e}"))
}

impl PipelineConfig {
    /// Parses and validates `text`; relative paths resolve against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [&mut cfg.paths.corpus, &mut cfg.paths.edges, &mut cfg.paths.workdir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("paths.corpus", &self.paths.corpus), ("paths.edges", &self.paths.edges)] {
            if !p.is_file() {
                return Err(field(name, format!("{} does not exist", p.display())));
            }
        }
        self.split_spec().validate().map_err(|e| field("split", e))?;
        if self.mining.max_out_degree == 0 {
            return Err(field("mining.max_out_degree", "must be positive"));
        }
        if self.mining.max_in_degree == 0 {
            return Err(field("mining.max_in_degree", "must be positive"));
        }
        self.strategy()?;
        if self.sampling.per_anchor == 0 {
            return Err(field("sampling.per_anchor", "must be positive"));
        }
        let s = self.sampling.scincl;
        if s.i == 0 || s.k == 0 {
            return Err(field("sampling.scincl", "ranks i and k start at 1"));
        }
        let p = &self.pretrain;
        if p.min_len == 0 || p.max_len < p.min_len {
            return Err(field("pretrain.min_len", "need 0 < min_len <= max_len"));
        }
        if p.batch_size < 2 {
            return Err(field("pretrain.batch_size", "must be at least 2"));
        }
        self.encoder.validate().map_err(|e| field("encoder", e))?;
        self.loss.validate().map_err(|e| field("loss", e))?;
        if self.train.batch_size < 2 {
            return Err(field("train.batch_size", "must be at least 2"));
        }
        self.optimizer.validate().map_err(|e| field("optimizer", e))?;
        if self.graph_embed.dim == 0 {
            return Err(field("graph_embed.dim", "must be positive"));
        }
        let e = &self.enrich;
        if e.max_tokens == 0 {
            return Err(field("enrich.max_tokens", "must be positive"));
        }
        if e.enabled && e.kind == SummarizerKind::ExternalService && e.endpoint.is_none() {
            return Err(field("enrich.endpoint", "required for the external-service summarizer"));
        }
        if self.eval.splits.is_empty() {
            return Err(field("eval.splits", "list at least one split"));
        }
        Ok(())
    }

    pub fn strategy(&self) -> Result<PairStrategy> {
        self.sampling.strategy.parse().map_err(|e| field("sampling.strategy", e))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            top_l: self.split.top_l,
            idt_fraction: self.split.idt_fraction,
            odt_tail_fraction: self.split.odt_tail_fraction,
            seed: stage_seed(self.seed, Stage::Split),
        }
    }
}

/// Per-stage seed: first eight bytes of SHA-256(seed ‖ stage name).
pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_str().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ArtifactEntry>,
}

impl Manifest {
    pub fn load(workdir: &Path) -> Result<Self> {
        let path = workdir.join(MANIFEST);
        if !path.exists() {
            return Ok(Manifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("{}: {e}", path.display())))
    }

    fn save(&self, workdir: &Path) -> Result<()> {
        let path = workdir.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Artifacts written by one stage run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub artifacts: Vec<String>,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    workdir: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        let workdir = config.paths.workdir.clone();
        fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
        Ok(Pipeline { config, workdir })
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn manifest(&self) -> Result<Manifest> {
        Manifest::load(&self.workdir)
    }

    /// Runs one stage, or every stage in dependency order for
    /// [`Stage::All`].
    pub fn run(&self, stage: Stage) -> Result<Vec<StageOutcome>> {
        if stage == Stage::All {
            return Stage::ORDER.into_iter().map(|s| self.run_one(s)).collect();
        }
        Ok(vec![self.run_one(stage)?])
    }

    fn run_one(&self, stage: Stage) -> Result<StageOutcome> {
        log::info!("stage {stage}: start");
        let mut out = Outputs::default();
        match stage {
            Stage::Ingest => self.ingest(&mut out)?,
            Stage::Graph => self.graph(&mut out)?,
            Stage::Mine => self.mine(&mut out)?,
            Stage::Split => self.split(&mut out)?,
            Stage::Enrich => self.enrich(&mut out)?,
            Stage::GraphEmbed => self.graph_embed(&mut out)?,
            Stage::Sample => self.sample(&mut out)?,
            Stage::Pretrain => self.pretrain(&mut out)?,
            Stage::Train => self.train(&mut out)?,
            Stage::Evaluate => self.evaluate(&mut out)?,
            Stage::All => unreachable!("expanded by run"),
        }
        self.commit(stage, out)
    }

    fn commit(&self, stage: Stage, out: Outputs) -> Result<StageOutcome> {
        let mut manifest = self.manifest()?;
        let name = stage.as_str().to_string();
        // A rerun replaces everything the stage wrote before.
        let stale: Vec<String> = manifest
            .artifacts
            .iter()
            .filter(|(f, e)| e.stage == name && !out.files.contains_key(*f))
            .map(|(f, _)| f.clone())
            .collect();
        for f in stale {
            let _ = fs::remove_file(self.workdir.join(&f));
            manifest.artifacts.remove(&f);
        }
        let mut artifacts = Vec::new();
        for (file, bytes) in out.files {
            let path = self.workdir.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            manifest.artifacts.insert(
                file.clone(),
                ArtifactEntry {
                    stage: name.clone(),
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                },
            );
            artifacts.push(file);
        }
        manifest.save(&self.workdir)?;
        log::info!("stage {stage}: wrote {}", artifacts.join(", "));
        Ok(StageOutcome { stage, artifacts })
    }

    /// Path of an upstream artifact, or an error naming the stage that
    /// produces it.
    fn need(&self, manifest: &Manifest, file: &str) -> Result<PathBuf> {
        let path = self.workdir.join(file);
        match manifest.artifacts.get(file) {
            Some(_) if path.is_file() => Ok(path),
            Some(entry) => Err(Error::MissingArtifact {
                artifact: file.to_string(),
                stage: entry.stage.clone(),
            }),
            None => Err(Error::MissingArtifact {
                artifact: file.to_string(),
                stage: producer(file).to_string(),
            }),
        }
    }

    fn training_corpus(&self, m: &Manifest) -> Result<Corpus> {
        let file = if self.config.enrich.enabled { ENRICHED } else { CORPUS };
        Corpus::load(&self.need(m, file)?)
    }

    fn ingest(&self, out: &mut Outputs) -> Result<()> {
        let (corpus, summary) = corpus::ingest(&self.config.paths.corpus, InputFormat::JsonLines)?;
        log::info!("ingested {} papers ({} malformed lines)", summary.papers, summary.malformed);
        out.add(CORPUS, corpus.to_bytes()?);
        out.json("ingest.json", &summary);
        Ok(())
    }

    fn graph(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let corpus = Corpus::load(&self.need(&m, CORPUS)?)?;
        let (graph, stats) = graph::build_graph(&corpus, &self.config.paths.edges)?;
        out.add(GRAPH, graph.to_bytes());
        out.json("graph.json", &stats);
        Ok(())
    }

    fn mine(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let graph = CitationGraph::load(&self.need(&m, GRAPH)?)?;
        let dc = relations::mine_dc(&graph);
        let (cc, cc_report) = relations::mine_cc(&graph, self.config.mining.max_out_degree);
        let (bc, bc_report) = relations::mine_bc(&graph, self.config.mining.max_in_degree);
        out.add(PAIRS_DC, dc.to_bytes());
        out.add(PAIRS_CC, cc.to_bytes());
        out.add(PAIRS_BC, bc.to_bytes());
        out.json(
            "mining.json",
            &serde_json::json!({
                "dc_pairs": dc.len(),
                "cc_pairs": cc.len(),
                "bc_pairs": bc.len(),
                "cc_skipped_hubs": cc_report.skipped_hubs,
                "bc_skipped_hubs": bc_report.skipped_hubs,
            }),
        );
        Ok(())
    }

    fn split(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let corpus = Corpus::load(&self.need(&m, CORPUS)?)?;
        let graph = CitationGraph::load(&self.need(&m, GRAPH)?)?;
        let (assignment, report) = split::split(&corpus, &graph, &self.config.split_spec())?;
        let mut tsv = Vec::new();
        assignment
            .export_tsv(&corpus, &mut tsv)
            .map_err(|e| Error::io(self.workdir.join("split.tsv"), e))?;
        out.add(SPLIT, assignment.to_bytes());
        out.add("split.tsv", tsv);
        let counts: BTreeMap<String, usize> = [Split::Train, Split::Idt, Split::Odt, Split::Excluded]
            .into_iter()
            .map(|s| (s.to_string(), assignment.count(s)))
            .collect();
        out.json("split.json", &serde_json::json!({ "counts": counts, "report": report }));
        Ok(())
    }

    fn enricher(&self) -> Result<Enricher> {
        let e = &self.config.enrich;
        let client: Option<Box<dyn SummaryClient>> = match e.kind {
            SummarizerKind::TopnTruncation => None,
            SummarizerKind::OfflineStub => Some(Box::new(EchoSummaryClient {
                reply: e.stub_reply.clone(),
            })),
            SummarizerKind::ExternalService => {
                let endpoint = e.endpoint.clone().ok_or_else(|| field("enrich.endpoint", "missing"))?;
                Some(Box::new(HttpSummaryClient::new(endpoint)?))
            }
        };
        Enricher::new(
            Summarizer {
                kind: e.kind,
                max_tokens: e.max_tokens,
            },
            Box::new(IdentityTranslator),
            client,
        )
    }

    fn enrich(&self, out: &mut Outputs) -> Result<()> {
        if !self.config.enrich.enabled {
            log::info!("enrichment disabled; nothing to do");
            return Ok(());
        }
        let m = self.manifest()?;
        let corpus = Corpus::load(&self.need(&m, CORPUS)?)?;
        let (enriched, docs) = enrich::enrich_corpus(&corpus, &self.enricher()?, self.config.enrich.max_concurrent)?;
        let mut jsonl = Vec::new();
        for d in &docs {
            serde_json::to_writer(&mut jsonl, d).expect("document serializes");
            jsonl.push(b'\n');
        }
        out.add(ENRICHED, enriched.to_bytes()?);
        out.add("enriched.jsonl", jsonl);
        Ok(())
    }

    fn graph_embed(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let graph = CitationGraph::load(&self.need(&m, GRAPH)?)?;
        let g = &self.config.graph_embed;
        let cfg = NodeEmbeddingConfig {
            dim: g.dim,
            epochs: g.epochs,
            negatives_per_edge: g.negatives_per_edge,
            learning_rate: g.learning_rate,
            seed: stage_seed(self.config.seed, Stage::GraphEmbed),
        };
        let emb = graph_embed::train_node_embeddings(&graph, &cfg)?;
        out.add(NODE_EMB, emb.table().to_bytes());
        Ok(())
    }

    fn sample(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let assignment = SplitAssignment::load(&self.need(&m, SPLIT)?)?;
        let corpus = self.training_corpus(&m)?;
        let seed = stage_seed(self.config.seed, Stage::Sample);
        let s = &self.config.sampling;
        let triplets = match s.method {
            SamplingMethod::Specter => {
                let dc = RelationPairSet::load(&self.need(&m, PAIRS_DC)?)?;
                let cc = RelationPairSet::load(&self.need(&m, PAIRS_CC)?)?;
                let bc = RelationPairSet::load(&self.need(&m, PAIRS_BC)?)?;
                let graph = CitationGraph::load(&self.need(&m, GRAPH)?)?;
                let train = |p: &RelationPairSet| split::split_pairs(p, &assignment, &corpus, Split::Train);
                let pairs = self.config.strategy()?.apply(&train(&dc), &train(&cc), &train(&bc), seed)?;
                sampler::sample_specter_triplets(&pairs, &graph, s.per_anchor, seed ^ 1)?
            }
            SamplingMethod::Scincl => {
                let table = crate::matrix::Matrix::load(&self.need(&m, NODE_EMB)?)?;
                let emb = NodeEmbeddings::new(table)?;
                let anchors = assignment.members(Split::Train);
                let cfg = ScinclConfig {
                    i: s.scincl.i,
                    k: s.scincl.k,
                    n: s.scincl.n,
                    per_anchor: s.per_anchor,
                };
                let (triplets, _) = sampler::sample_scincl(&emb, &anchors, &cfg, seed)?;
                // Neighbours outside the training split would leak test papers.
                let in_train = |o: u32| assignment.split_of(o) == Split::Train;
                triplets
                    .into_iter()
                    .filter(|t| in_train(t.positive))
                    .map(|t| TripletExample {
                        hard_negative: t.hard_negative.filter(|&h| in_train(h)),
                        ..t
                    })
                    .collect()
            }
        };
        if triplets.is_empty() {
            return Err(Error::invalid("sampling produced no training triplets"));
        }
        let mut tsv = Vec::new();
        sampler::export_triplets_tsv(&triplets, &corpus, &mut tsv)
            .map_err(|e| Error::io(self.workdir.join("triplets.tsv"), e))?;
        out.add(TRIPLETS, sampler::triplets_to_bytes(&triplets));
        out.add("triplets.tsv", tsv);
        Ok(())
    }

    fn pretrain(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let corpus = self.training_corpus(&m)?;
        let model = EncoderModel::new(&self.config.encoder, stage_seed(self.config.seed, Stage::Pretrain))?;
        let p = &self.config.pretrain;
        let mut trace = encoder::LossTrace::default();
        let model = if p.steps == 0 {
            model
        } else {
            let seed = stage_seed(self.config.seed, Stage::Pretrain);
            let cfg = SnippetConfig {
                count: p.snippets,
                min_len: p.min_len,
                max_len: p.max_len,
            };
            let pairs = sampler::sample_snippet_pairs(&corpus, &cfg, seed)?;
            let batches = sampler::make_snippet_batches(&pairs, p.batch_size, seed ^ 1)?;
            let mut state = TrainState::new(&model, seed ^ 2);
            let res = encoder::train(
                model,
                &batches,
                &LossConfig::contrastive(),
                &self.config.optimizer,
                &mut state,
                p.steps,
                None,
            )?;
            trace = res.trace;
            res.model
        };
        out.add(PRETRAINED, model.to_bytes());
        out.add("pretrain_loss.tsv", trace_tsv(&trace));
        Ok(())
    }

    fn train(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let triplets = sampler::load_triplets(&self.need(&m, TRIPLETS)?)?;
        let model = EncoderModel::load(&self.need(&m, PRETRAINED)?)?;
        let corpus = self.training_corpus(&m)?;
        let seed = stage_seed(self.config.seed, Stage::Train);
        let t = &self.config.train;
        let usable: Vec<TripletExample> = match self.config.loss.kind {
            LossKind::Hinge => triplets.into_iter().filter(|t| t.hard_negative.is_some()).collect(),
            LossKind::Contrastive => triplets,
        };
        let mut batches = sampler::make_batches(&usable, &corpus, t.batch_size, seed)?;
        let dev = if t.dev_batches > 0 {
            if t.dev_batches >= batches.len() {
                return Err(field(
                    "train.dev_batches",
                    format!("{} leaves no training batches out of {}", t.dev_batches, batches.len()),
                ));
            }
            batches.split_off(batches.len() - t.dev_batches)
        } else {
            Vec::new()
        };
        let mut state = TrainState::new(&model, seed ^ 1);
        let res = encoder::train(
            model,
            &batches,
            &self.config.loss,
            &self.config.optimizer,
            &mut state,
            t.steps,
            (!dev.is_empty()).then_some(dev.as_slice()),
        )?;
        out.add(MODEL, res.model.to_bytes());
        out.add("train_loss.tsv", trace_tsv(&res.trace));
        Ok(())
    }

    fn evaluate(&self, out: &mut Outputs) -> Result<()> {
        let m = self.manifest()?;
        let model_path = self.need(&m, MODEL)?;
        let assignment = SplitAssignment::load(&self.need(&m, SPLIT)?)?;
        let dc = RelationPairSet::load(&self.need(&m, PAIRS_DC)?)?;
        let cc = RelationPairSet::load(&self.need(&m, PAIRS_CC)?)?;
        let bc = RelationPairSet::load(&self.need(&m, PAIRS_BC)?)?;
        let corpus = self.training_corpus(&m)?;
        let model = EncoderModel::load(&model_path)?;
        let checkpoint = m.artifacts[MODEL].sha256[..16].to_string();

        let mut candidates = vec![("encoder".to_string(), encoder::embed_corpus(&model, &corpus), checkpoint)];
        if self.config.eval.baselines {
            let init = EncoderModel::new(&self.config.encoder, stage_seed(self.config.seed, Stage::Pretrain))?;
            candidates.push(("untrained".into(), encoder::embed_corpus(&init, &corpus), "init".into()));
            if let Some(entry) = m.artifacts.get(NODE_EMB) {
                let table = crate::matrix::Matrix::load(&self.need(&m, NODE_EMB)?)?;
                let label = format!("graph-embed d={}", table.cols());
                candidates.push((label, table, entry.sha256[..16].to_string()));
            }
        }

        let mut reports = Vec::new();
        for &split in &self.config.eval.splits {
            let pairs = |p: &RelationPairSet| split::split_pairs(p, &assignment, &corpus, split);
            let (pool, tasks) = eval::build_tasks(&pairs(&dc), &pairs(&cc), &pairs(&bc), &assignment, split);
            let tasks: Vec<_> = tasks.into_iter().filter(|t| t.num_queries() > 0).collect();
            if tasks.is_empty() {
                log::warn!("split {split} has no evaluation queries; skipped");
                continue;
            }
            for (label, matrix, checkpoint) in &candidates {
                let meta = RunMetadata {
                    label: label.clone(),
                    split: split.to_string(),
                    seed: self.config.seed,
                    checkpoint: checkpoint.clone(),
                    runs: 1,
                };
                reports.push(eval::evaluate(&pool.gather(matrix), &tasks, meta)?);
            }
        }
        if reports.is_empty() {
            return Err(Error::invalid("no split has evaluation queries"));
        }
        let jsonl: String = reports.iter().map(EvalReport::to_jsonl).collect();
        out.add(REPORT, jsonl.into_bytes());
        out.add("report.txt", eval::format_table(&reports).into_bytes());
        Ok(())
    }
}

/// Stage that writes `file`, for diagnostics.
fn producer(file: &str) -> &'static str {
    match file {
        CORPUS => "ingest",
        GRAPH => "graph",
        PAIRS_DC | PAIRS_CC | PAIRS_BC => "mine",
        SPLIT => "split",
        ENRICHED => "enrich",
        NODE_EMB => "graph-embed",
        TRIPLETS => "sample",
        PRETRAINED => "pretrain",
        MODEL => "train",
        _ => "all",
    }
}

fn trace_tsv(trace: &encoder::LossTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    trace.write_tsv(BufWriter::new(&mut buf)).expect("writing to memory");
    buf
}

#[derive(Default)]
struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
}

impl Outputs {
    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("summary serializes");
        bytes.push(b'\n');
        self.add(name, bytes);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for s in Stage::ORDER.into_iter().chain([Stage::All]) {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("bogus".parse::<Stage>().is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(stage_seed(1, Stage::Split), stage_seed(1, Stage::Sample));
        assert_eq!(stage_seed(1, Stage::Split), stage_seed(1, Stage::Split));
    }

    #[test]
    fn unknown_field_is_named() {
        let err = PipelineConfig::from_toml_str(
            "[paths]\ncorpus = \"a\"\nedges = \"b\"\n[split]\ntop_k = 3\n",
            Path::new("."),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("top_k"), "{err}");
        assert!(err.contains("line 5"), "{err}");
    }

    #[test]
    fn missing_input_is_named() {
        let err = PipelineConfig::from_toml_str(
            "[paths]\ncorpus = \"/nonexistent/c.jsonl\"\nedges = \"/nonexistent/e.tsv\"\n",
            Path::new("."),
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("paths.corpus"), "{err}");
    }
}

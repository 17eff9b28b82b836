//! `citesim`: run pipeline stages from a config file.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use citesim_core::pipeline::{Pipeline, PipelineConfig, Stage};
use citesim_core::synth::{self, ClusteredConfig, MultilingualConfig};
use citesim_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "citesim", version, about = "Citation-pair mining and dual-encoder training pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's work directory.
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Read the JSON-lines corpus into the binary store.
    Ingest(Common),
    /// Build the citation graph from the edge file.
    Graph(Common),
    /// Mine DC, CC and BC pair sets.
    Mine(Common),
    /// Assign papers to train / IDT / ODT.
    Split(Common),
    /// Add English summaries to non-English papers.
    Enrich(Common),
    /// Train node embeddings on the citation graph.
    GraphEmbed(Common),
    /// Draw training triplets.
    Sample(Common),
    /// Contrastive pre-training on snippet pairs.
    Pretrain(Common),
    /// Fine-tune the encoder on sampled triplets.
    Train(Common),
    /// Score the encoder (and baselines) with MAP and nDCG@10.
    Evaluate(Common),
    /// Run every stage in dependency order.
    All(Common),
    /// Write a synthetic corpus.jsonl and edges.tsv.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Multilingual,
    Clustered,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "multilingual")]
    kind: SynthKind,
    #[arg(long, default_value_t = 600)]
    papers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Topic count for the clustered corpus.
    #[arg(long, default_value_t = 20)]
    topics: usize,
    /// Language mix as `code:weight` pairs, e.g. `en:0.5,de:0.3,ja:0.2`.
    #[arg(long)]
    languages: Option<LanguageMix>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn run_stage(stage: Stage, common: &Common) -> Result<(), Error> {
    let mut config = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(w) = &common.workdir {
        config.paths.workdir = w.clone();
    }
    let pipeline = Pipeline::new(config)?;
    for outcome in pipeline.run(stage)? {
        println!("{}: {}", outcome.stage, outcome.artifacts.join(" "));
    }
    Ok(())
}

#[derive(Clone)]
struct LanguageMix(Vec<(String, f64)>);

impl FromStr for LanguageMix {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|part| {
                let (code, w) = part
                    .split_once(':')
                    .ok_or_else(|| format!("expected code:weight, got {part:?}"))?;
                let w: f64 = w.parse().map_err(|e| format!("weight {w:?}: {e}"))?;
                Ok((code.trim().to_string(), w))
            })
            .collect::<Result<_, String>>()
            .map(LanguageMix)
    }
}

fn run_synth(args: &SynthArgs) -> Result<(), Error> {
    let (corpus, graph) = match args.kind {
        SynthKind::Multilingual => {
            let mut cfg = MultilingualConfig {
                papers: args.papers,
                seed: args.seed,
                ..Default::default()
            };
            if let Some(l) = &args.languages {
                cfg.languages = l.0.clone();
            }
            synth::multilingual_corpus(&cfg)?
        }
        SynthKind::Clustered => {
            let mut cfg = ClusteredConfig {
                topics: args.topics.max(1),
                per_topic: args.papers.div_ceil(args.topics.max(1)).max(1),
                seed: args.seed,
                ..Default::default()
            };
            if let Some(l) = &args.languages {
                cfg.languages = l.0.clone();
            }
            let c = synth::clustered_corpus(&cfg)?;
            (c.corpus, c.graph)
        }
    };
    synth::write_dataset(&corpus, &graph, &args.out)?;
    println!(
        "wrote {} papers and {} edges to {}",
        corpus.len(),
        graph.num_edges(),
        args.out.display()
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::MissingArtifact { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(c) => run_stage(Stage::Ingest, c),
        Command::Graph(c) => run_stage(Stage::Graph, c),
        Command::Mine(c) => run_stage(Stage::Mine, c),
        Command::Split(c) => run_stage(Stage::Split, c),
        Command::Enrich(c) => run_stage(Stage::Enrich, c),
        Command::GraphEmbed(c) => run_stage(Stage::GraphEmbed, c),
        Command::Sample(c) => run_stage(Stage::Sample, c),
        Command::Pretrain(c) => run_stage(Stage::Pretrain, c),
        Command::Train(c) => run_stage(Stage::Train, c),
        Command::Evaluate(c) => run_stage(Stage::Evaluate, c),
        Command::All(c) => run_stage(Stage::All, c),
        Command::Synth(a) => run_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

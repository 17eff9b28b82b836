//! Citation-relation mining and dual-encoder training for scientific
//! document similarity.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] ingests JSON-lines records into an immutable [`Corpus`].
//! * [`graph`] builds the directed [`CitationGraph`] and [`relations`] mines
//!   direct-citation, co-citation and bibliographic-coupling pair sets.
//! * [`split`] assigns papers to train / in-distribution / out-of-distribution
//!   test splits without leaking pairs across them.
//! * [`sampler`] turns pairs into snippet pairs, triplets and batches.
//! * [`encoder`] is a hashed n-gram dual encoder trained with the in-batch
//!   contrastive loss or the triplet hinge loss.
//! * [`graph_embed`] trains dot-product node embeddings and exposes exact kNN.
//! * [`eval`] ranks full pools and reports MAP and nDCG@10.
//! * [`enrich`] prepends English summaries to non-English documents.
//! * [`pipeline`] wires every stage behind a single config file.

pub mod corpus;
pub mod encoder;
pub mod enrich;
pub mod error;
pub mod eval;
pub mod graph;
pub mod graph_embed;
pub mod lang;
pub mod matrix;
pub mod pipeline;
pub mod relations;
pub mod sampler;
pub mod split;
pub mod store;
pub mod synth;
pub mod tokenize;

pub use corpus::{Corpus, IngestSummary, Paper};
pub use encoder::{EncoderModel, LossConfig, LossKind, Similarity, TrainConfig};
pub use error::{Error, Result};
pub use eval::{EvalReport, EvalTask};
pub use graph::CitationGraph;
pub use graph_embed::NodeEmbeddings;
pub use matrix::Matrix;
pub use relations::{PairSetKind, Relation, RelationPair, RelationPairSet};
pub use sampler::{Batch, SnippetPair, TripletExample};
pub use split::{Split, SplitAssignment, SplitSpec};
pub use tokenize::Tokenizer;

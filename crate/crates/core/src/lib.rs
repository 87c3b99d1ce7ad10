//! Conditioning next-token prediction on anchored linguistic graphs.
//!
//! The pipeline runs graph ingestion ([`graph`]), byte-level BPE tokenization
//! and anchor alignment ([`tokenize`]), per-token slicing ([`slice`]),
//! fixed-length encoding ([`encode`]), an MLP head ensembled with base-LM
//! logits ([`neural`]), evaluation ([`metrics`]) and ablations ([`perturb`]).

pub mod binio;
pub mod encode;
pub mod error;
pub mod fixtures;
pub mod graph;
pub mod metrics;
pub mod neural;
pub mod perturb;
pub mod pipeline;
pub mod slice;
pub mod synth;
pub mod tokenize;

pub use encode::{EmbeddingTable, EncoderConfig};
pub use error::{Error, Result};
pub use graph::{Edge, FrameworkClass, Graph, LabelVocabulary, Node, NodeId, Span};
pub use metrics::EvalReport;
pub use neural::{BaseLogits, ModelParams, TrainConfig};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport};
pub use slice::{Relative, RelativeType, Slice};
pub use tokenize::{AlignedSentence, TokenSequence, TokenizerTables};

//! Echo-chamber analysis over a reciprocal follow network: community
//! detection, follow-ratio profiling, LDA topic modeling over pooled user
//! documents and per-topic concentration scoring.

pub mod community;
pub mod error;
pub mod gexf;
pub mod graph;
pub mod io;
pub mod lda;
pub mod matrix;
pub mod pipeline;
pub mod polarization;
pub mod profile;
pub mod seed;
pub mod synth;
pub mod text;

pub use community::{Partition, LouvainConfig};
pub use error::{Error, Result};
pub use graph::{DirectedFollowGraph, UndirectedGraph, UserId};
pub use lda::{LdaConfig, TopicModel};
pub use matrix::Matrix;
pub use text::{BowCorpus, Vocabulary};
pub use pipeline::{run_pipeline, run_stage, PipelineConfig, Stage};

//! Structured semantic augmentation for controllable image captioning.
//!
//! The pipeline turns grounded captions into per-image meta graphs, samples
//! event-focused subgraphs from them and realizes the samples as new
//! control/caption pairs. The [`metrics`] module scores controllable
//! captioning output.

pub mod amr;
pub mod augment;
pub mod bridge;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod grounding;
pub mod merge;
pub mod metrics;
pub mod pipeline;
pub mod sampler;
pub mod smatch;
pub mod text;

pub use amr::{AmrError, AmrGraph};
pub use augment::{ControlCaptionPair, ControlSignal, LengthLevel, MixSpec, MixStrategy, PairSource};
pub use config::PipelineConfig;
pub use embedding::EmbeddingStore;
pub use grounding::{BBox, GroundedCaptionRecord, VgAmr};
pub use merge::{MergeParams, MetaVgAmr};
pub use metrics::{MetricReport, Scores};
pub use pipeline::{run_pipeline, PipelineError};
pub use sampler::SampledSubgraph;
pub use smatch::SmatchResult;

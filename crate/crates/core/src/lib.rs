//! Online discovery and cross-source alignment of event stories in
//! streams of short, multi-dimensional text snippets.
//!
//! Snippets are merged into per-window sketches, sketches of one source are
//! linked across windows into clusters (stories), and clusters of different
//! sources are aligned into aligned stories.

pub mod alignment;
pub mod error;
pub mod harness;
pub mod index;
pub mod model;
pub mod pipeline;
pub mod similarity;
pub mod srg;

pub use error::{Error, Result};
pub use model::{
    ClusterId, ClusterKey, DimensionConfig, EngineConfig, Metric, Mode, Sketch, SketchId, Snippet,
    SourceId, WindowId,
};

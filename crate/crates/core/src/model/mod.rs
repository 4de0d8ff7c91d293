//! Domain types: sources, snippets, time windows and temporal sketches.
//!
//! A [`Snippet`] is a single timestamped event record with a bag of tokens per
//! dimension. Snippets from one source that fall into the same time window and
//! look alike are aggregated into a [`Sketch`]; sketches are the unit that the
//! rest of the engine indexes, compares and clusters.

mod config;
mod sketch;
mod snippet;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{DimensionConfig, EngineConfig, Metric, Mode};
pub(crate) use sketch::sketch_from_profile;
pub use sketch::{
    build_top_sketch, create_sketch, linkable, merge_snippet, required_dims, Level, Profile,
    Sketch, TokenStats,
};
pub use snippet::{read_snippets, write_snippets, Snippet};

/// Interned token string. Cloning is a reference-count bump.
pub type Token = Arc<str>;

/// Identifier of a data source.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceId(Arc<str>);

impl SourceId {
    pub fn new(id: impl AsRef<str>) -> Self {
        SourceId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for SourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl From<&str> for SourceId {
    fn from(s: &str) -> Self {
        SourceId::new(s)
    }
}

/// Index of a fixed-length time window, counted from the configured origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowId(pub i64);

impl WindowId {
    /// Index of the top-level span of `span_len` consecutive windows that
    /// contains this window.
    pub fn span(self, span_len: u32) -> i64 {
        self.0.div_euclid(span_len as i64)
    }
}

impl fmt::Display for WindowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// Sketch identifier, unique within one source. Ids are handed out in
/// creation order, so comparing ids compares creation time.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SketchId(pub u64);

impl fmt::Display for SketchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Cluster (story) identifier, unique within one source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Globally unique cluster handle: a cluster id qualified by its source.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClusterKey {
    pub source: SourceId,
    pub cluster: ClusterId,
}

impl ClusterKey {
    pub fn new(source: SourceId, cluster: ClusterId) -> Self {
        ClusterKey { source, cluster }
    }
}

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.source, self.cluster)
    }
}

/// Maps a timestamp (seconds since epoch) to its half-open time window
/// `[origin + i*len, origin + (i+1)*len)`.
pub fn window_of(timestamp: i64, cfg: &EngineConfig) -> WindowId {
    window_index(timestamp, cfg.origin, cfg.window_hours)
}

pub(crate) fn window_index(timestamp: i64, origin: i64, window_hours: f64) -> WindowId {
    let len = 3600.0 * window_hours;
    let offset = timestamp - origin;
    if len.fract() == 0.0 && len <= i64::MAX as f64 {
        WindowId(offset.div_euclid(len as i64))
    } else {
        WindowId((offset as f64 / len).floor() as i64)
    }
}

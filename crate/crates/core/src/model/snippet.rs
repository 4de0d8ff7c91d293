use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{window_of, EngineConfig, SourceId, WindowId};
use crate::error::{Error, Result};

/// One timestamped, multi-dimensional event record from one source.
///
/// Serialized as one JSON object per line:
/// `{"id": str, "source": str, "ts": int, "dims": {"<dim>": ["token", ...]}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub id: String,
    pub source: SourceId,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(rename = "dims", default)]
    pub dimensions: BTreeMap<String, Vec<String>>,
}

impl Snippet {
    pub fn new(id: impl Into<String>, source: impl AsRef<str>, timestamp: i64) -> Self {
        Snippet {
            id: id.into(),
            source: SourceId::new(source),
            timestamp,
            dimensions: BTreeMap::new(),
        }
    }

    /// Builder-style helper for tests and examples.
    pub fn with_dim<I, S>(mut self, name: &str, tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.dimensions.insert(
            name.to_string(),
            tokens.into_iter().map(Into::into).collect(),
        );
        self
    }

    pub fn window(&self, cfg: &EngineConfig) -> WindowId {
        window_of(self.timestamp, cfg)
    }

    /// Checks the snippet against the run's dimension list.
    pub fn validate(&self, cfg: &EngineConfig) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("snippet id must be non-empty".into()));
        }
        if self.source.as_str().is_empty() {
            return Err(Error::Validation(format!(
                "snippet {} has an empty source id",
                self.id
            )));
        }
        let unknown: Vec<&str> = self
            .dimensions
            .keys()
            .filter(|d| cfg.dim_index(d).is_none())
            .map(String::as_str)
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Validation(format!(
                "snippet {} has unknown dimension(s): {}",
                self.id,
                unknown.join(", ")
            )));
        }
        Ok(())
    }
}

/// Reads JSON Lines. Blank lines are skipped; malformed lines fail with their
/// 1-based line number.
pub fn read_snippets<R: BufRead>(reader: R) -> Result<Vec<Snippet>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let snippet: Snippet = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(snippet);
    }
    Ok(out)
}

pub fn write_snippets<W: Write>(mut writer: W, snippets: &[Snippet]) -> Result<()> {
    for s in snippets {
        serde_json::to_writer(&mut writer, s).map_err(|e| Error::Io(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

//! Replay, synthetic data, evaluation and dataset utilities.

mod evaluate;
mod generate;
mod replay;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

pub use evaluate::{evaluate, read_labels, read_story_assignment, read_truth, QualityReport};
pub use generate::{generate, source_name, write_truth, GenSpec, Generated, GroundTruth};
pub use replay::{read_schedule, replay, DayMetrics, PerfReport, ReplayOutcome, ReplaySpec};

use crate::error::{Error, Result};
use crate::model::{read_snippets, EngineConfig, Snippet, SourceId};

/// Rewrites every snippet's source to its block key, so that blocks are
/// processed as separate sources and reconnected only by alignment.
pub fn blocking_as_sources<F>(snippets: &[Snippet], key: F) -> Vec<Snippet>
where
    F: Fn(&Snippet) -> String,
{
    snippets
        .iter()
        .map(|r| {
            let mut r = r.clone();
            r.source = SourceId::new(key(&r));
            r
        })
        .collect()
}

/// Snippet counts per `(day, source)`, days counted from the earliest
/// timestamp.
pub fn daily_counts(snippets: &[Snippet]) -> BTreeMap<(i64, SourceId), usize> {
    let t0 = snippets.iter().map(|r| r.timestamp).min().unwrap_or(0);
    let mut out = BTreeMap::new();
    for r in snippets {
        *out.entry(((r.timestamp - t0).div_euclid(86_400), r.source.clone()))
            .or_default() += 1;
    }
    out
}

pub fn write_daily_counts<W: Write>(
    out: W,
    counts: &BTreeMap<(i64, SourceId), usize>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["day", "source", "count"]).map_err(io)?;
    for ((day, source), n) in counts {
        w.write_record([day.to_string(), source.to_string(), n.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_snippets(path: &Path) -> Result<Vec<Snippet>> {
    read_snippets(BufReader::new(File::open(path)?))
}

pub fn load_config(path: &Path) -> Result<EngineConfig> {
    EngineConfig::from_kv_str(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocking_by_key() {
        let data = vec![
            Snippet::new("1", "s", 0).with_dim("entities", ["Alice"]),
            Snippet::new("2", "s", 0).with_dim("entities", ["Bob"]),
            Snippet::new("3", "s", 0).with_dim("entities", ["Anna"]),
        ];
        let same = blocking_as_sources(&data, |_| "all".into());
        assert!(same.iter().all(|r| r.source.as_str() == "all"));
        let first = blocking_as_sources(&data, |r| r.dimensions["entities"][0][..1].to_string());
        let sources: std::collections::BTreeSet<_> = first
            .iter()
            .map(|r| r.source.as_str().to_string())
            .collect();
        assert_eq!(sources.len(), 2);
    }

    #[test]
    fn counts_per_day() {
        let data = vec![
            Snippet::new("1", "a", 100),
            Snippet::new("2", "a", 200),
            Snippet::new("3", "b", 100 + 86_400),
        ];
        let c = daily_counts(&data);
        assert_eq!(c[&(0, SourceId::new("a"))], 2);
        assert_eq!(c[&(1, SourceId::new("b"))], 1);
    }
}

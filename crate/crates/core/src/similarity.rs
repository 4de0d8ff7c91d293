//! Per-dimension similarity metrics and their weighted, normalized
//! combination at snippet/sketch, sketch/sketch and cluster/cluster
//! granularity.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};
use crate::model::{EngineConfig, Level, Metric, Profile, Sketch, Snippet, TokenStats};

/// A similarity value in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Default)]
pub struct SimScore(f64);

impl SimScore {
    pub const ZERO: SimScore = SimScore(0.0);
    pub const ONE: SimScore = SimScore(1.0);

    pub fn new(v: f64) -> Self {
        SimScore(v.clamp(0.0, 1.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl fmt::Display for SimScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.0)
    }
}

/// Similarity of two top-k views. An empty side carries no evidence and
/// scores 0, including when both are empty.
pub fn dim_similarity(a: &TokenStats, b: &TokenStats, metric: Metric) -> SimScore {
    let (a, b) = (a.view(), b.view());
    if a.is_empty() || b.is_empty() {
        return SimScore::ZERO;
    }
    let (mut i, mut j) = (0, 0);
    let mut shared = 0u64;
    let mut dot = 0u64;
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                shared += 1;
                dot += a[i].1 as u64 * b[j].1 as u64;
                i += 1;
                j += 1;
            }
        }
    }
    match metric {
        Metric::Jaccard => {
            let union = a.len() as u64 + b.len() as u64 - shared;
            SimScore::new(shared as f64 / union as f64)
        }
        Metric::CosineTf => {
            if dot == 0 {
                return SimScore::ZERO;
            }
            let na: u64 = a.iter().map(|(_, n)| (*n as u64) * (*n as u64)).sum();
            let nb: u64 = b.iter().map(|(_, n)| (*n as u64) * (*n as u64)).sum();
            SimScore::new(dot as f64 / ((na as f64) * (nb as f64)).sqrt())
        }
    }
}

/// Weighted sum of per-dimension similarities, normalized by the total
/// weight.
pub fn profile_similarity(a: &Profile, b: &Profile, cfg: &EngineConfig) -> SimScore {
    let mut num = 0.0;
    let mut den = 0.0;
    for (d, (x, y)) in cfg.dimensions.iter().zip(a.dims().iter().zip(b.dims())) {
        den += d.weight;
        if d.weight > 0.0 {
            num += dim_similarity(x, y, d.metric).value() * d.weight;
        }
    }
    if den <= 0.0 {
        return SimScore::ZERO;
    }
    SimScore::new(num / den)
}

/// Similarity used to decide whether a snippet merges into a sketch of its
/// own window.
pub fn snippet_sketch_similarity(r: &Snippet, v: &Sketch, cfg: &EngineConfig) -> Result<SimScore> {
    if r.source != v.source {
        return Err(Error::SourceMismatch {
            expected: v.source.clone(),
            found: r.source.clone(),
        });
    }
    let w = r.window(cfg);
    if v.level != Level::Base || w != v.window {
        return Err(Error::WindowMismatch {
            snippet: w,
            sketch: v.window,
        });
    }
    Ok(profile_similarity(
        &Profile::of_snippet(r, cfg),
        &v.profile,
        cfg,
    ))
}

/// Edge weight between two sketches of one source in different windows.
pub fn sketch_sketch_similarity(a: &Sketch, b: &Sketch, cfg: &EngineConfig) -> Result<SimScore> {
    if a.level != b.level {
        return Err(Error::LevelMismatch);
    }
    if a.source != b.source {
        return Err(Error::SourceMismatch {
            expected: a.source.clone(),
            found: b.source.clone(),
        });
    }
    if a.window == b.window {
        return Err(Error::SameWindow(a.window));
    }
    Ok(profile_similarity(&a.profile, &b.profile, cfg))
}

/// Similarity of two clusters from different sources, given their top-level
/// sketches.
///
/// For each top sketch of one cluster whose span also holds top sketches of
/// the other, take the best match among those; average over such sketches
/// (0 when no span is shared) and symmetrize.
pub fn cluster_similarity(a: &[Sketch], b: &[Sketch], cfg: &EngineConfig) -> Result<SimScore> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCluster);
    }
    let f = |x: &[Sketch], y: &[Sketch]| -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for s in x {
            let best = y
                .iter()
                .filter(|t| t.window == s.window)
                .map(|t| profile_similarity(&s.profile, &t.profile, cfg).value())
                .fold(None, |acc: Option<f64>, v| {
                    Some(acc.map_or(v, |m| m.max(v)))
                });
            if let Some(best) = best {
                total += best;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    };
    Ok(SimScore::new((f(a, b) + f(b, a)) / 2.0))
}

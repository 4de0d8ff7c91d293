//! Synthetic corpora with planted stories.
//!
//! Every story owns a token namespace per dimension. Its first event draws
//! fresh tokens; each later event replaces `round(evolution * n)` of the
//! current tokens with fresh ones. Noise swaps individual tokens of an
//! emitted snippet for tokens of a pool shared by all stories, which is the
//! only source of cross-story overlap. Consecutive events of a story are
//! dealt to sources round-robin.
//!
//! Gaps count windows inclusively, like the comparison interval: a gap of
//! 1 keeps the next event in the same window, a gap of `g` puts it `g - 1`
//! windows later, so it is reachable exactly when `g <= comparison_interval`.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Snippet;

/// Parameters of a planted corpus.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub sources: usize,
    pub stories: usize,
    pub events_per_story: usize,
    /// Inter-event gap bounds, in windows counted inclusively (>= 1).
    pub gap_min: u32,
    pub gap_max: u32,
    /// Window length used to turn gaps into seconds.
    pub window_hours: f64,
    /// Story start times are spread uniformly over this many windows.
    pub start_spread: u32,
    /// `(dimension, tokens per snippet)`.
    pub dimensions: Vec<(String, usize)>,
    /// Shared noise tokens per dimension.
    pub common_pool: usize,
    pub evolution: f64,
    pub noise: f64,
    /// Copies of every event, emitted by consecutive sources.
    pub copies: usize,
    /// Unix time of window 0.
    pub origin: i64,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            sources: 3,
            stories: 50,
            events_per_story: 12,
            gap_min: 2,
            gap_max: 4,
            window_hours: 12.0,
            start_spread: 60,
            dimensions: vec![("entities".into(), 6), ("topics".into(), 4)],
            common_pool: 40,
            evolution: 0.2,
            noise: 0.05,
            copies: 1,
            origin: 1_420_070_400,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        if self.sources == 0 {
            return bad("sources must be at least 1");
        }
        if self.events_per_story == 0 {
            return bad("events_per_story must be at least 1");
        }
        if self.gap_min == 0 {
            return bad("gap_min must be at least 1");
        }
        if self.gap_min > self.gap_max {
            return bad("gap_min exceeds gap_max");
        }
        if !(self.window_hours > 0.0 && self.window_hours.is_finite()) {
            return bad("window_hours must be positive");
        }
        if self.dimensions.is_empty() || self.dimensions.iter().any(|(_, n)| *n == 0) {
            return bad("every dimension needs at least one token");
        }
        if !(0.0..=1.0).contains(&self.evolution) || !(0.0..=1.0).contains(&self.noise) {
            return bad("evolution and noise must lie in [0, 1]");
        }
        if self.noise > 0.0 && self.common_pool == 0 {
            return bad("noise needs a non-empty common_pool");
        }
        if self.copies == 0 || self.copies > self.sources {
            return bad("copies must lie in 1..=sources");
        }
        Ok(())
    }

    /// Flat `key = value` format; dimensions as `dimension.<name>.tokens`.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut spec = GenSpec::default();
        let mut dims: Vec<(String, usize)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: String| Error::Parse {
                line: i + 1,
                message: m,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            let int = || {
                v.parse::<u64>()
                    .map_err(|_| err(format!("'{k}' expects a non-negative integer")))
            };
            let num = || {
                v.parse::<f64>()
                    .map_err(|_| err(format!("'{k}' expects a number")))
            };
            if let Some(name) = k
                .strip_prefix("dimension.")
                .and_then(|r| r.strip_suffix(".tokens"))
            {
                dims.push((name.to_string(), int()? as usize));
                continue;
            }
            match k {
                "sources" => spec.sources = int()? as usize,
                "stories" => spec.stories = int()? as usize,
                "events_per_story" => spec.events_per_story = int()? as usize,
                "gap_min" => spec.gap_min = int()? as u32,
                "gap_max" => spec.gap_max = int()? as u32,
                "window_hours" => spec.window_hours = num()?,
                "start_spread" => spec.start_spread = int()? as u32,
                "common_pool" => spec.common_pool = int()? as usize,
                "evolution" => spec.evolution = num()?,
                "noise" => spec.noise = num()?,
                "copies" => spec.copies = int()? as usize,
                "origin" => {
                    spec.origin = v
                        .parse()
                        .map_err(|_| err(format!("'{k}' expects an integer")))?
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        if !dims.is_empty() {
            spec.dimensions = dims;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Story label of every generated snippet.
pub type GroundTruth = BTreeMap<String, String>;

/// A generated corpus, sorted by timestamp.
#[derive(Clone, Debug)]
pub struct Generated {
    pub snippets: Vec<Snippet>,
    pub truth: GroundTruth,
}

pub fn source_name(i: usize) -> String {
    format!("s{}", i + 1)
}

/// Deterministic for a fixed `(spec, seed)`.
pub fn generate(spec: &GenSpec, seed: u64) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let window_secs = spec.window_hours * 3600.0;
    let mut snippets = Vec::new();
    let mut truth = GroundTruth::new();

    for story in 0..spec.stories {
        let label = format!("story-{story}");
        let mut fresh = vec![0usize; spec.dimensions.len()];
        let mut state: Vec<Vec<String>> = spec
            .dimensions
            .iter()
            .enumerate()
            .map(|(d, (name, n))| {
                (0..*n)
                    .map(|_| {
                        fresh[d] += 1;
                        format!("{name}-{story}-{}", fresh[d])
                    })
                    .collect()
            })
            .collect();
        let mut window = rng.gen_range(0..=spec.start_spread) as i64;

        for event in 0..spec.events_per_story {
            if event > 0 {
                window += rng.gen_range(spec.gap_min..=spec.gap_max) as i64 - 1;
                for (d, (name, n)) in spec.dimensions.iter().enumerate() {
                    let k = (spec.evolution * *n as f64).round() as usize;
                    for pos in sample(&mut rng, *n, k.min(*n)) {
                        fresh[d] += 1;
                        state[d][pos] = format!("{name}-{story}-{}", fresh[d]);
                    }
                }
            }
            for copy in 0..spec.copies {
                let offset = rng.gen_range(0.0..window_secs);
                let ts = spec.origin + (window as f64 * window_secs + offset).floor() as i64;
                let source = source_name((story + event + copy) % spec.sources);
                let id = if spec.copies == 1 {
                    format!("st{story}-e{event}")
                } else {
                    format!("st{story}-e{event}-{copy}")
                };
                let mut r = Snippet::new(id.clone(), source, ts);
                for (d, (name, _)) in spec.dimensions.iter().enumerate() {
                    let tokens: Vec<String> = state[d]
                        .iter()
                        .map(|t| {
                            if spec.noise > 0.0 && rng.gen_bool(spec.noise) {
                                format!("{name}-common-{}", rng.gen_range(0..spec.common_pool))
                            } else {
                                t.clone()
                            }
                        })
                        .collect();
                    r = r.with_dim(name, tokens);
                }
                truth.insert(id, label.clone());
                snippets.push(r);
            }
        }
    }
    snippets.sort_by(|a, b| (a.timestamp, &a.id).cmp(&(b.timestamp, &b.id)));
    Ok(Generated { snippets, truth })
}

/// Writes `snippet_id,story`.
pub fn write_truth<W: Write>(out: W, truth: &GroundTruth) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["snippet_id", "story"]).map_err(io)?;
    for (id, story) in truth {
        w.write_record([id, story]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

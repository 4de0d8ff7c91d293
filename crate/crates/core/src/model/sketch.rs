use std::collections::{BTreeMap, BTreeSet};

use super::{EngineConfig, SketchId, Snippet, SourceId, Token, WindowId};
use crate::error::{Error, Result};

/// Token frequencies of one dimension.
///
/// Full counts are always kept so merges stay lossless and order-insensitive.
/// The comparison view holds the top-k tokens by frequency (ties broken by
/// token order), sorted by token.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenStats {
    counts: BTreeMap<Token, u32>,
    view: Vec<(Token, u32)>,
}

impl TokenStats {
    pub fn from_tokens<I, S>(tokens: I, top_k: Option<usize>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: BTreeMap<Token, u32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(Token::from(t.as_ref())).or_insert(0) += 1;
        }
        let mut stats = TokenStats {
            counts,
            view: Vec::new(),
        };
        stats.retruncate(top_k);
        stats
    }

    /// Adds another bag's full counts into this one.
    pub fn add(&mut self, other: &TokenStats, top_k: Option<usize>) {
        for (tok, n) in &other.counts {
            *self.counts.entry(tok.clone()).or_insert(0) += n;
        }
        self.retruncate(top_k);
    }

    fn retruncate(&mut self, top_k: Option<usize>) {
        let mut view: Vec<(Token, u32)> =
            self.counts.iter().map(|(t, n)| (t.clone(), *n)).collect();
        if let Some(k) = top_k {
            if view.len() > k {
                view.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                view.truncate(k);
                view.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }
        self.view = view;
    }

    pub fn counts(&self) -> &BTreeMap<Token, u32> {
        &self.counts
    }

    /// Retained `(token, count)` pairs, sorted by token.
    pub fn view(&self) -> &[(Token, u32)] {
        &self.view
    }

    pub fn is_empty(&self) -> bool {
        self.view.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.view
            .binary_search_by(|(t, _)| (**t).cmp(token))
            .is_ok()
    }

    pub fn count(&self, token: &str) -> u32 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// True when the two views share at least one token.
    pub fn intersects(&self, other: &TokenStats) -> bool {
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.view, &other.view);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// Per-dimension token statistics, in configuration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Profile {
    dims: Vec<TokenStats>,
}

impl Profile {
    pub fn empty(cfg: &EngineConfig) -> Self {
        Profile {
            dims: vec![TokenStats::default(); cfg.dimensions.len()],
        }
    }

    /// Token statistics of a snippet. Dimensions missing from the snippet are
    /// empty; names not in the configuration are ignored (validate first).
    pub fn of_snippet(snippet: &Snippet, cfg: &EngineConfig) -> Self {
        let dims = cfg
            .dimensions
            .iter()
            .map(|d| match snippet.dimensions.get(&d.name) {
                Some(tokens) => TokenStats::from_tokens(tokens, d.top_k),
                None => TokenStats::default(),
            })
            .collect();
        Profile { dims }
    }

    pub fn from_dims(dims: Vec<TokenStats>) -> Self {
        Profile { dims }
    }

    pub fn add(&mut self, other: &Profile, cfg: &EngineConfig) {
        for ((mine, theirs), d) in self.dims.iter_mut().zip(&other.dims).zip(&cfg.dimensions) {
            mine.add(theirs, d.top_k);
        }
    }

    pub fn dims(&self) -> &[TokenStats] {
        &self.dims
    }

    pub fn dim(&self, i: usize) -> &TokenStats {
        &self.dims[i]
    }

    /// Number of dimensions with a non-empty view.
    pub fn nonempty_dims(&self) -> usize {
        self.dims.iter().filter(|d| !d.is_empty()).count()
    }

    /// Number of dimensions in which the two views share a token.
    pub fn shared_dims(&self, other: &Profile) -> usize {
        self.dims
            .iter()
            .zip(&other.dims)
            .filter(|(a, b)| a.intersects(b))
            .count()
    }
}

/// Number of matching dimensions two objects need before they are compared:
/// `min_match_dims`, lowered to the number of non-empty dimensions of the
/// sparser side, and never below one.
pub fn required_dims(min_match_dims: usize, a_nonempty: usize, b_nonempty: usize) -> usize {
    min_match_dims.min(a_nonempty).min(b_nonempty).max(1)
}

/// Exact form of the minimum-matching-dimensions filter.
pub fn linkable(a: &Profile, b: &Profile, min_match_dims: usize) -> bool {
    a.shared_dims(b) >= required_dims(min_match_dims, a.nonempty_dims(), b.nonempty_dims())
}

/// Sketch hierarchy level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    /// Aggregates snippets of one base window.
    Base,
    /// Aggregates base sketches of one span of consecutive windows.
    Top,
}

/// A temporal sketch: snippets of one source and window (or, at the top
/// level, base sketches of one span) aggregated into token statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Sketch {
    pub id: SketchId,
    pub source: SourceId,
    /// Base window for [`Level::Base`]; span index for [`Level::Top`].
    pub window: WindowId,
    pub level: Level,
    pub profile: Profile,
    /// Snippet ids. For top sketches, the union of the children's members.
    pub members: BTreeSet<String>,
    /// Child base sketches of a top sketch, ascending.
    pub children: Vec<SketchId>,
}

impl Sketch {
    /// Folds a snippet's profile into a base sketch. Callers check
    /// source/window compatibility.
    pub(crate) fn absorb(&mut self, snippet_id: &str, profile: &Profile, cfg: &EngineConfig) {
        self.members.insert(snippet_id.to_string());
        self.profile.add(profile, cfg);
    }
}

pub fn create_sketch(id: SketchId, snippet: &Snippet, cfg: &EngineConfig) -> Sketch {
    sketch_from_profile(id, snippet, Profile::of_snippet(snippet, cfg), cfg)
}

pub(crate) fn sketch_from_profile(
    id: SketchId,
    snippet: &Snippet,
    profile: Profile,
    cfg: &EngineConfig,
) -> Sketch {
    Sketch {
        id,
        source: snippet.source.clone(),
        window: snippet.window(cfg),
        level: Level::Base,
        profile,
        members: BTreeSet::from([snippet.id.clone()]),
        children: Vec::new(),
    }
}

pub fn merge_snippet(sketch: &mut Sketch, snippet: &Snippet, cfg: &EngineConfig) -> Result<()> {
    if sketch.level != Level::Base {
        return Err(Error::LevelMismatch);
    }
    if snippet.source != sketch.source {
        return Err(Error::SourceMismatch {
            expected: sketch.source.clone(),
            found: snippet.source.clone(),
        });
    }
    let w = snippet.window(cfg);
    if w != sketch.window {
        return Err(Error::WindowMismatch {
            snippet: w,
            sketch: sketch.window,
        });
    }
    sketch.absorb(&snippet.id, &Profile::of_snippet(snippet, cfg), cfg);
    Ok(())
}

/// Aggregates base sketches of one span into a top-level sketch. The span is
/// the aligned block of `top_window_span` windows holding the earliest child.
/// The top sketch takes the smallest child id as its own.
pub fn build_top_sketch(children: &[&Sketch], cfg: &EngineConfig) -> Result<Sketch> {
    let first = children
        .iter()
        .min_by_key(|c| (c.window, c.id))
        .ok_or_else(|| Error::Validation("top sketch needs at least one child".into()))?;
    let span_len = cfg.top_window_span;
    let span = first.window.span(span_len);
    let mut profile = Profile::empty(cfg);
    let mut members = BTreeSet::new();
    let mut ids = Vec::with_capacity(children.len());
    for c in children {
        if c.level != Level::Base {
            return Err(Error::LevelMismatch);
        }
        if c.source != first.source {
            return Err(Error::SourceMismatch {
                expected: first.source.clone(),
                found: c.source.clone(),
            });
        }
        if c.window.span(span_len) != span {
            return Err(Error::SpanViolation {
                window: c.window,
                span,
                span_len,
            });
        }
        profile.add(&c.profile, cfg);
        members.extend(c.members.iter().cloned());
        ids.push(c.id);
    }
    ids.sort();
    Ok(Sketch {
        id: ids[0],
        source: first.source.clone(),
        window: WindowId(span),
        level: Level::Top,
        profile,
        members,
        children: ids,
    })
}

//! Candidate retrieval: a multi-level hash index
//! (dimension → source → token → window → sketch ids) with a per-sketch
//! bloom filter used for the minimum-matching-dimensions prefilter.
//!
//! The index is partitioned by source. [`SourceIndex`] holds one source's
//! postings and is what a source lane owns; [`DimensionIndex`] is the
//! multi-source view, used for top-level sketches during alignment.

mod bloom;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::RangeInclusive;
use std::sync::Arc;

pub use bloom::{BloomFilter, BloomKey};

use crate::error::{Error, Result};
use crate::model::{
    required_dims, EngineConfig, Profile, Sketch, SketchId, Snippet, SourceId, Token, WindowId,
};

/// Pre-hashed view of a probe (a snippet or sketch profile).
pub struct Probe<'a> {
    profile: &'a Profile,
    keys: Vec<Vec<BloomKey>>,
    nonempty: usize,
}

impl<'a> Probe<'a> {
    pub fn new(profile: &'a Profile, dim_names: &[String]) -> Self {
        let keys = profile
            .dims()
            .iter()
            .zip(dim_names)
            .map(|(s, name)| {
                s.view()
                    .iter()
                    .map(|(t, _)| BloomKey::new(name, t))
                    .collect()
            })
            .collect();
        Probe {
            profile,
            keys,
            nonempty: profile.nonempty_dims(),
        }
    }

    pub fn profile(&self) -> &Profile {
        self.profile
    }
}

#[derive(Clone, Debug)]
struct Entry {
    window: WindowId,
    tokens: Vec<Vec<Token>>,
    bloom: BloomFilter,
    nonempty: usize,
}

type Postings = HashMap<Token, BTreeMap<WindowId, BTreeSet<SketchId>>>;

/// One source's slice of the index.
#[derive(Clone, Debug)]
pub struct SourceIndex {
    dim_names: Arc<[String]>,
    fpr: f64,
    postings: Vec<Postings>,
    entries: HashMap<SketchId, Entry>,
}

impl SourceIndex {
    pub fn new(dim_names: Arc<[String]>, fpr: f64) -> Self {
        let postings = vec![Postings::new(); dim_names.len()];
        SourceIndex {
            dim_names,
            fpr,
            postings,
            entries: HashMap::new(),
        }
    }

    pub fn for_config(cfg: &EngineConfig) -> Self {
        SourceIndex::new(dim_names(cfg), cfg.bloom_fpr)
    }

    pub fn dim_names(&self) -> &[String] {
        &self.dim_names
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: SketchId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = SketchId> + '_ {
        self.entries.keys().copied()
    }

    /// Indexes every token of the sketch's top-k views and builds its
    /// bloom filter.
    pub fn insert(&mut self, sketch: &Sketch) -> Result<()> {
        if self.entries.contains_key(&sketch.id) {
            return Err(Error::DuplicateId(sketch.source.clone(), sketch.id));
        }
        let mut tokens = Vec::with_capacity(self.postings.len());
        let total: usize = sketch.profile.dims().iter().map(|d| d.view().len()).sum();
        let mut bloom = BloomFilter::with_capacity(total, self.fpr);
        for (d, stats) in sketch.profile.dims().iter().enumerate() {
            let mut toks = Vec::with_capacity(stats.view().len());
            for (t, _) in stats.view() {
                self.postings[d]
                    .entry(t.clone())
                    .or_default()
                    .entry(sketch.window)
                    .or_default()
                    .insert(sketch.id);
                bloom.insert(BloomKey::new(&self.dim_names[d], t));
                toks.push(t.clone());
            }
            tokens.push(toks);
        }
        self.entries.insert(
            sketch.id,
            Entry {
                window: sketch.window,
                tokens,
                bloom,
                nonempty: sketch.profile.nonempty_dims(),
            },
        );
        Ok(())
    }

    pub fn remove(&mut self, source: &SourceId, id: SketchId) -> Result<()> {
        let entry = self
            .entries
            .remove(&id)
            .ok_or_else(|| Error::UnknownId(source.clone(), id))?;
        for (d, toks) in entry.tokens.iter().enumerate() {
            for t in toks {
                let Some(by_window) = self.postings[d].get_mut(t) else {
                    continue;
                };
                if let Some(ids) = by_window.get_mut(&entry.window) {
                    ids.remove(&id);
                    if ids.is_empty() {
                        by_window.remove(&entry.window);
                    }
                }
                if by_window.is_empty() {
                    self.postings[d].remove(t);
                }
            }
        }
        Ok(())
    }

    /// Re-indexes a sketch whose content changed.
    pub fn replace(&mut self, sketch: &Sketch) -> Result<()> {
        if self.entries.contains_key(&sketch.id) {
            self.remove(&sketch.source, sketch.id)?;
        }
        self.insert(sketch)
    }

    /// Sketch ids posted under `(dimension, token, window)`.
    pub fn postings(&self, dim: usize, token: &str, window: WindowId) -> BTreeSet<SketchId> {
        self.postings
            .get(dim)
            .and_then(|p| p.get(token))
            .and_then(|w| w.get(&window))
            .cloned()
            .unwrap_or_default()
    }

    /// Union of the probe's postings over a window range, before any
    /// filtering, grouped by window.
    pub fn lookup_unfiltered(
        &self,
        probe: &Probe<'_>,
        windows: RangeInclusive<WindowId>,
        exclude: Option<WindowId>,
    ) -> BTreeMap<WindowId, BTreeSet<SketchId>> {
        let mut out: BTreeMap<WindowId, BTreeSet<SketchId>> = BTreeMap::new();
        for (d, stats) in probe.profile.dims().iter().enumerate() {
            for (t, _) in stats.view() {
                let Some(by_window) = self.postings[d].get(t) else {
                    continue;
                };
                for (w, ids) in by_window.range(windows.clone()) {
                    if Some(*w) == exclude {
                        continue;
                    }
                    out.entry(*w).or_default().extend(ids.iter().copied());
                }
            }
        }
        out
    }

    /// Posting union filtered by the bloom test: a candidate survives if its
    /// filter hits probe tokens in at least the required number of distinct
    /// dimensions. False positives are possible, false negatives are not.
    pub fn lookup(
        &self,
        probe: &Probe<'_>,
        windows: RangeInclusive<WindowId>,
        exclude: Option<WindowId>,
        min_match_dims: usize,
    ) -> BTreeMap<WindowId, BTreeSet<SketchId>> {
        let mut out = self.lookup_unfiltered(probe, windows, exclude);
        for ids in out.values_mut() {
            ids.retain(|id| self.passes_prefilter(probe, *id, min_match_dims));
        }
        out.retain(|_, ids| !ids.is_empty());
        out
    }

    /// Bloom-based minimum-matching-dimensions test for one candidate.
    pub fn passes_prefilter(&self, probe: &Probe<'_>, id: SketchId, min_match_dims: usize) -> bool {
        let Some(entry) = self.entries.get(&id) else {
            return false;
        };
        let need = required_dims(min_match_dims, probe.nonempty, entry.nonempty);
        let mut hits = 0;
        for keys in &probe.keys {
            if keys.iter().any(|k| entry.bloom.contains(*k)) {
                hits += 1;
                if hits >= need {
                    return true;
                }
            }
        }
        false
    }

    /// Bloom membership of a raw `(dimension, token)` pair; exposed for
    /// false-positive measurements.
    pub fn bloom_contains(&self, id: SketchId, dim: usize, token: &str) -> Option<bool> {
        let entry = self.entries.get(&id)?;
        Some(
            entry
                .bloom
                .contains(BloomKey::new(&self.dim_names[dim], token)),
        )
    }

    /// Candidates in the probe's own window.
    pub fn same_window(
        &self,
        probe: &Probe<'_>,
        window: WindowId,
        min_match_dims: usize,
    ) -> BTreeSet<SketchId> {
        self.lookup(probe, window..=window, None, min_match_dims)
            .remove(&window)
            .unwrap_or_default()
    }

    /// Candidates in the `comparison_interval - 1` windows on either side of
    /// `window` (forward windows only matter for late-arriving data).
    pub fn cross_window(
        &self,
        probe: &Probe<'_>,
        window: WindowId,
        comparison_interval: u32,
        min_match_dims: usize,
    ) -> BTreeMap<WindowId, BTreeSet<SketchId>> {
        let Some(range) = horizon(window, comparison_interval) else {
            return BTreeMap::new();
        };
        self.lookup(probe, range, Some(window), min_match_dims)
    }
}

/// Window range compared against `window`, or `None` when the interval
/// covers only the window itself.
pub fn horizon(window: WindowId, comparison_interval: u32) -> Option<RangeInclusive<WindowId>> {
    let reach = comparison_interval.saturating_sub(1) as i64;
    if reach == 0 {
        return None;
    }
    Some(WindowId(window.0.saturating_sub(reach))..=WindowId(window.0.saturating_add(reach)))
}

/// True when two windows are within each other's comparison horizon.
pub fn within_horizon(a: WindowId, b: WindowId, comparison_interval: u32) -> bool {
    a != b && a.0.abs_diff(b.0) < comparison_interval as u64
}

pub(crate) fn dim_names(cfg: &EngineConfig) -> Arc<[String]> {
    cfg.dimensions
        .iter()
        .map(|d| d.name.clone())
        .collect::<Vec<_>>()
        .into()
}

/// The full multi-source index.
#[derive(Clone, Debug)]
pub struct DimensionIndex {
    dim_names: Arc<[String]>,
    fpr: f64,
    sources: BTreeMap<SourceId, SourceIndex>,
}

impl DimensionIndex {
    pub fn new(cfg: &EngineConfig) -> Self {
        DimensionIndex {
            dim_names: dim_names(cfg),
            fpr: cfg.bloom_fpr,
            sources: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, sketch: &Sketch) -> Result<()> {
        let names = self.dim_names.clone();
        let fpr = self.fpr;
        self.sources
            .entry(sketch.source.clone())
            .or_insert_with(|| SourceIndex::new(names, fpr))
            .insert(sketch)
    }

    pub fn remove(&mut self, source: &SourceId, id: SketchId) -> Result<()> {
        let part = self
            .sources
            .get_mut(source)
            .ok_or_else(|| Error::UnknownId(source.clone(), id))?;
        part.remove(source, id)?;
        if part.is_empty() {
            self.sources.remove(source);
        }
        Ok(())
    }

    pub fn replace(&mut self, sketch: &Sketch) -> Result<()> {
        if self.contains(&sketch.source, sketch.id) {
            self.remove(&sketch.source, sketch.id)?;
        }
        self.insert(sketch)
    }

    pub fn contains(&self, source: &SourceId, id: SketchId) -> bool {
        self.sources.get(source).is_some_and(|p| p.contains(id))
    }

    pub fn len(&self) -> usize {
        self.sources.values().map(SourceIndex::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn source(&self, source: &SourceId) -> Option<&SourceIndex> {
        self.sources.get(source)
    }

    pub fn sources(&self) -> impl Iterator<Item = (&SourceId, &SourceIndex)> {
        self.sources.iter()
    }

    /// `(dimension name, source, token, window)` lookup.
    pub fn postings(
        &self,
        dim: &str,
        source: &SourceId,
        token: &str,
        window: WindowId,
    ) -> BTreeSet<SketchId> {
        let Some(d) = self.dim_names.iter().position(|n| n == dim) else {
            return BTreeSet::new();
        };
        self.sources
            .get(source)
            .map(|p| p.postings(d, token, window))
            .unwrap_or_default()
    }

    /// Sketches of the snippet's source and window that pass the prefilter.
    pub fn candidates_same_window(
        &self,
        probe: &Snippet,
        cfg: &EngineConfig,
    ) -> BTreeSet<SketchId> {
        let Some(part) = self.sources.get(&probe.source) else {
            return BTreeSet::new();
        };
        let profile = Profile::of_snippet(probe, cfg);
        let p = Probe::new(&profile, &self.dim_names);
        part.same_window(&p, probe.window(cfg), cfg.min_match_dims)
    }

    /// Sketches of the same source and level in other windows of the
    /// comparison horizon that pass the prefilter.
    pub fn candidates_cross_window(
        &self,
        sketch: &Sketch,
        cfg: &EngineConfig,
    ) -> BTreeMap<WindowId, BTreeSet<SketchId>> {
        let Some(part) = self.sources.get(&sketch.source) else {
            return BTreeMap::new();
        };
        let p = Probe::new(&sketch.profile, &self.dim_names);
        part.cross_window(
            &p,
            sketch.window,
            cfg.comparison_interval,
            cfg.min_match_dims,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::create_sketch;

    fn cfg() -> EngineConfig {
        EngineConfig {
            window_hours: 24.0,
            ..EngineConfig::default()
        }
    }

    const DAY: i64 = 86_400;

    fn snip(id: &str, src: &str, day: i64, ents: &[&str], tops: &[&str]) -> Snippet {
        Snippet::new(id, src, day * DAY)
            .with_dim("entities", ents.iter().copied())
            .with_dim("topics", tops.iter().copied())
    }

    #[test]
    fn insert_lookup_remove() {
        let c = cfg();
        let mut idx = DimensionIndex::new(&c);
        let r1 = snip("r1", "s1", 0, &["Kos", "Refugees"], &["Politics", "War"]);
        let v1 = create_sketch(SketchId(1), &r1, &c);
        idx.insert(&v1).unwrap();
        let s1 = SourceId::new("s1");
        assert_eq!(
            idx.postings("entities", &s1, "Kos", WindowId(0)),
            BTreeSet::from([SketchId(1)])
        );
        assert!(matches!(idx.insert(&v1), Err(Error::DuplicateId(..))));
        idx.remove(&s1, SketchId(1)).unwrap();
        assert!(idx.postings("entities", &s1, "Kos", WindowId(0)).is_empty());
        assert!(idx.is_empty());
        assert!(matches!(
            idx.remove(&s1, SketchId(1)),
            Err(Error::UnknownId(..))
        ));
    }

    #[test]
    fn empty_sketch_has_no_postings() {
        let c = cfg();
        let mut idx = DimensionIndex::new(&c);
        let v = create_sketch(SketchId(7), &Snippet::new("e", "s1", 0), &c);
        idx.insert(&v).unwrap();
        assert!(idx.contains(&v.source, v.id));
        let probe = snip("p", "s1", 0, &["x"], &["y"]);
        assert!(idx.candidates_same_window(&probe, &c).is_empty());
    }

    #[test]
    fn removing_one_of_two_keeps_other_posting() {
        let c = cfg();
        let mut idx = DimensionIndex::new(&c);
        let a = create_sketch(SketchId(1), &snip("a", "s1", 0, &["K"], &[]), &c);
        let b = create_sketch(SketchId(2), &snip("b", "s1", 0, &["K"], &[]), &c);
        idx.insert(&a).unwrap();
        idx.insert(&b).unwrap();
        idx.remove(&a.source, a.id).unwrap();
        assert_eq!(
            idx.postings("entities", &a.source, "K", WindowId(0)),
            BTreeSet::from([SketchId(2)])
        );
    }

    /// Index state partway through the running example: r1..r3 of s1 (day 0, r1+r2 merged),
    /// r4 of s1, and two s2 snippets.
    fn partial_state(c: &EngineConfig) -> DimensionIndex {
        let mut idx = DimensionIndex::new(c);
        let mut v1 = create_sketch(
            SketchId(1),
            &snip("r1", "s1", 0, &["Kos", "Refugees"], &["Politics", "War"]),
            c,
        );
        crate::model::merge_snippet(
            &mut v1,
            &snip("r2", "s1", 0, &["Kos", "Refugees"], &["Politics"]),
            c,
        )
        .unwrap();
        let v2 = create_sketch(
            SketchId(2),
            &snip("r3", "s1", 0, &["Spain"], &["People", "Politics"]),
            c,
        );
        let v3 = create_sketch(
            SketchId(3),
            &snip("r4", "s1", 0, &["China"], &["Disaster"]),
            c,
        );
        let w1 = create_sketch(
            SketchId(1),
            &snip("q1", "s2", 0, &["Isis"], &["Politics", "War"]),
            c,
        );
        let w2 = create_sketch(
            SketchId(2),
            &snip("q2", "s2", 0, &["Refugees", "Turkey"], &["People", "War"]),
            c,
        );
        for v in [&v1, &v2, &v3, &w1, &w2] {
            idx.insert(v).unwrap();
        }
        idx
    }

    #[test]
    fn running_example_candidates() {
        let c = cfg();
        let idx = partial_state(&c);
        // r2 probing before its merge would find v1 through entity and topic postings
        let r2 = snip("r2", "s1", 0, &["Kos", "Refugees"], &["Politics"]);
        assert_eq!(
            idx.candidates_same_window(&r2, &c),
            BTreeSet::from([SketchId(1)])
        );
        // the China/Tianjin snippet of the next day has no postings in its window
        let r5 = snip("r5", "s1", 1, &["China", "Tianjin"], &["Disaster"]);
        assert!(idx.candidates_same_window(&r5, &c).is_empty());
        // its new sketch finds the previous day's China sketch across windows
        let v = create_sketch(SketchId(4), &r5, &c);
        let cross = idx.candidates_cross_window(&v, &c);
        assert_eq!(
            cross.get(&WindowId(0)),
            Some(&BTreeSet::from([SketchId(3)]))
        );
    }

    #[test]
    fn single_dimension_overlap_is_filtered() {
        let c = cfg();
        let idx = partial_state(&c);
        // shares only the topic Politics with v1 and v2
        let p = snip("p", "s1", 0, &["Nobody"], &["Politics"]);
        assert!(idx.candidates_same_window(&p, &c).is_empty());
        // a one-dimension probe needs only one matching dimension
        let p = Snippet::new("p", "s1", 0).with_dim("topics", ["Disaster"]);
        assert_eq!(
            idx.candidates_same_window(&p, &c),
            BTreeSet::from([SketchId(3)])
        );
    }

    #[test]
    fn horizon_limits() {
        let mut c = cfg();
        c.comparison_interval = 1;
        let idx = partial_state(&c);
        let v = create_sketch(
            SketchId(9),
            &snip("x", "s1", 1, &["China"], &["Disaster"]),
            &c,
        );
        assert!(idx.candidates_cross_window(&v, &c).is_empty());

        c.comparison_interval = 3;
        let far = create_sketch(
            SketchId(9),
            &snip("x", "s1", 3, &["China"], &["Disaster"]),
            &c,
        );
        assert!(idx.candidates_cross_window(&far, &c).is_empty());
        let near = create_sketch(
            SketchId(9),
            &snip("x", "s1", 2, &["China"], &["Disaster"]),
            &c,
        );
        assert_eq!(idx.candidates_cross_window(&near, &c).len(), 1);
        // forward windows are searched too
        let early = create_sketch(
            SketchId(9),
            &snip("x", "s1", -2, &["China"], &["Disaster"]),
            &c,
        );
        assert_eq!(idx.candidates_cross_window(&early, &c).len(), 1);
    }

    #[test]
    fn within_horizon_matches_range() {
        assert!(!within_horizon(WindowId(3), WindowId(3), 30));
        assert!(within_horizon(WindowId(0), WindowId(29), 30));
        assert!(!within_horizon(WindowId(0), WindowId(30), 30));
        assert!(!within_horizon(WindowId(0), WindowId(1), 1));
    }
}

//! Cross-source story alignment.
//!
//! Every cluster is summarized by top-level sketches, one per span of
//! `top_window_span` base windows. Top sketches of all sources share one
//! index; when a cluster changes, its top sketches retrieve same-span
//! candidates from the other sources, the owning clusters are scored with
//! [`cluster_similarity`], and the cluster relationship graph is updated.
//! Aligned stories are the connected components of the edges at or above
//! `alpha_c`.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{Error, Result};
use crate::index::{dim_names, DimensionIndex, Probe};
use crate::model::{
    build_top_sketch, linkable, ClusterId, ClusterKey, EngineConfig, Sketch, SketchId, SourceId,
};
use crate::similarity::cluster_similarity;
use crate::srg::Cluster;

/// Rebuilds a cluster's top sketches: base sketches grouped by span, one
/// top sketch per group.
pub fn refresh_top_sketches<'a, F>(cluster: &mut Cluster, sketch: F, cfg: &EngineConfig)
where
    F: Fn(SketchId) -> &'a Sketch,
{
    let mut by_span: BTreeMap<i64, Vec<&Sketch>> = BTreeMap::new();
    for id in &cluster.sketches {
        let s = sketch(*id);
        by_span
            .entry(s.window.span(cfg.top_window_span))
            .or_default()
            .push(s);
    }
    let tops = by_span
        .into_values()
        .map(|children| build_top_sketch(&children, cfg).expect("children grouped by span"))
        .collect();
    cluster.top_sketches = Arc::new(tops);
    cluster.dirty = false;
}

/// A change to one cluster, as seen by the alignment stage. `version`
/// orders updates of the same cluster; stale updates are ignored.
#[derive(Clone, Debug)]
pub enum ClusterUpdate {
    Publish {
        key: ClusterKey,
        version: u64,
        top_sketches: Arc<Vec<Sketch>>,
    },
    Remove {
        key: ClusterKey,
        version: u64,
    },
}

impl ClusterUpdate {
    pub fn key(&self) -> &ClusterKey {
        match self {
            ClusterUpdate::Publish { key, .. } | ClusterUpdate::Remove { key, .. } => key,
        }
    }

    fn version(&self) -> u64 {
        match self {
            ClusterUpdate::Publish { version, .. } | ClusterUpdate::Remove { version, .. } => {
                *version
            }
        }
    }
}

/// Snapshot of the alignment-relevant state of dirty clusters right after
/// an ingestion step.
pub fn updates_for(
    source: &SourceId,
    dirty: &BTreeSet<ClusterId>,
    version: u64,
    lookup: impl Fn(ClusterId) -> Option<Arc<Vec<Sketch>>>,
) -> Vec<ClusterUpdate> {
    dirty
        .iter()
        .map(|c| {
            let key = ClusterKey::new(source.clone(), *c);
            match lookup(*c) {
                Some(top_sketches) => ClusterUpdate::Publish {
                    key,
                    version,
                    top_sketches,
                },
                None => ClusterUpdate::Remove { key, version },
            }
        })
        .collect()
}

/// Cross-source graph over clusters.
#[derive(Clone, Debug)]
pub struct ClusterRelationshipGraph {
    cfg: Arc<EngineConfig>,
    clusters: HashMap<ClusterKey, Arc<Vec<Sketch>>>,
    versions: HashMap<ClusterKey, u64>,
    top_index: DimensionIndex,
    owner: HashMap<(SourceId, SketchId), ClusterId>,
    edges: HashMap<ClusterKey, HashMap<ClusterKey, f64>>,
    story_of: HashMap<ClusterKey, ClusterKey>,
}

impl ClusterRelationshipGraph {
    pub fn new(cfg: Arc<EngineConfig>) -> Self {
        ClusterRelationshipGraph {
            top_index: DimensionIndex::new(&cfg),
            cfg,
            clusters: HashMap::new(),
            versions: HashMap::new(),
            owner: HashMap::new(),
            edges: HashMap::new(),
            story_of: HashMap::new(),
        }
    }

    pub fn contains(&self, key: &ClusterKey) -> bool {
        self.clusters.contains_key(key)
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn top_sketches(&self, key: &ClusterKey) -> Option<&Arc<Vec<Sketch>>> {
        self.clusters.get(key)
    }

    pub fn edge(&self, a: &ClusterKey, b: &ClusterKey) -> Option<f64> {
        self.edges.get(a).and_then(|n| n.get(b)).copied()
    }

    /// All edges, each once with the smaller key first, sorted.
    pub fn edges(&self) -> Vec<(ClusterKey, ClusterKey, f64)> {
        let mut out: Vec<_> = self
            .edges
            .iter()
            .flat_map(|(a, n)| {
                n.iter()
                    .filter(move |(b, _)| a < *b)
                    .map(move |(b, w)| (a.clone(), b.clone(), *w))
            })
            .collect();
        out.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
        out
    }

    /// Applies cluster updates and re-aligns every cluster they touch.
    /// Returns the aligned-story ids whose membership may have changed.
    pub fn align(
        &mut self,
        updates: Vec<ClusterUpdate>,
        pool: Option<&ThreadPool>,
    ) -> BTreeSet<ClusterKey> {
        let mut touched: BTreeSet<ClusterKey> = BTreeSet::new();
        let mut realign: BTreeSet<ClusterKey> = BTreeSet::new();
        // latest update per cluster; a top sketch may move between clusters
        // within one batch, so unpublish everything before publishing
        let mut latest: BTreeMap<ClusterKey, ClusterUpdate> = BTreeMap::new();
        for u in updates {
            if self.versions.get(u.key()).is_some_and(|v| *v > u.version()) {
                continue;
            }
            match latest.get(u.key()) {
                Some(prev) if prev.version() > u.version() => {}
                _ => {
                    latest.insert(u.key().clone(), u);
                }
            }
        }
        for (key, u) in &latest {
            self.versions.insert(key.clone(), u.version());
            self.unpublish(key);
        }
        for (key, u) in latest {
            match u {
                ClusterUpdate::Publish { top_sketches, .. } => {
                    for t in top_sketches.iter() {
                        self.top_index.insert(t).expect("fresh top sketch");
                        self.owner.insert((t.source.clone(), t.id), key.cluster);
                    }
                    self.clusters.insert(key.clone(), top_sketches);
                    realign.insert(key.clone());
                }
                ClusterUpdate::Remove { .. } => {
                    for n in self.drop_edges(&key) {
                        touched.insert(n);
                    }
                    realign.remove(&key);
                }
            }
            touched.insert(key);
        }
        for key in &realign {
            touched.extend(self.realign(key, pool));
        }
        self.recompute_stories(&touched)
    }

    fn unpublish(&mut self, key: &ClusterKey) {
        if let Some(old) = self.clusters.remove(key) {
            for t in old.iter() {
                let _ = self.top_index.remove(&t.source, t.id);
                self.owner.remove(&(t.source.clone(), t.id));
            }
        }
    }

    fn drop_edges(&mut self, key: &ClusterKey) -> Vec<ClusterKey> {
        let neighbors: Vec<ClusterKey> = self
            .edges
            .remove(key)
            .map(|n| n.into_keys().collect())
            .unwrap_or_default();
        for n in &neighbors {
            if let Some(m) = self.edges.get_mut(n) {
                m.remove(key);
                if m.is_empty() {
                    self.edges.remove(n);
                }
            }
        }
        neighbors
    }

    fn set_edge(&mut self, a: &ClusterKey, b: &ClusterKey, w: f64) {
        if w > 0.0 {
            self.edges
                .entry(a.clone())
                .or_default()
                .insert(b.clone(), w);
            self.edges
                .entry(b.clone())
                .or_default()
                .insert(a.clone(), w);
        } else {
            for (x, y) in [(a, b), (b, a)] {
                if let Some(m) = self.edges.get_mut(x) {
                    m.remove(y);
                    if m.is_empty() {
                        self.edges.remove(x);
                    }
                }
            }
        }
    }

    /// Clusters of other sources whose top sketches pass the same-span
    /// candidate search for `key`.
    fn candidates(&self, key: &ClusterKey, pool: Option<&ThreadPool>) -> Vec<(ClusterKey, f64)> {
        let Some(tops) = self.clusters.get(key) else {
            return Vec::new();
        };
        let names = dim_names(&self.cfg);
        let probes: Vec<Probe<'_>> = tops
            .iter()
            .map(|t| Probe::new(&t.profile, &names))
            .collect();
        let foreign: Vec<(&SourceId, _)> = self
            .top_index
            .sources()
            .filter(|(s, _)| **s != key.source)
            .collect();
        let per_source =
            |(source, part): &(&SourceId, &crate::index::SourceIndex)| -> Vec<(ClusterKey, f64)> {
                let mut owners: BTreeSet<ClusterId> = BTreeSet::new();
                for (t, probe) in tops.iter().zip(&probes) {
                    for id in part.same_window(probe, t.window, self.cfg.min_match_dims) {
                        let Some(owner) = self.owner.get(&((*source).clone(), id)) else {
                            continue;
                        };
                        let other = ClusterKey::new((*source).clone(), *owner);
                        let other_tops = &self.clusters[&other];
                        let hit = other_tops.iter().find(|o| o.id == id).is_some_and(|o| {
                            linkable(&t.profile, &o.profile, self.cfg.min_match_dims)
                        });
                        if hit {
                            owners.insert(*owner);
                        }
                    }
                }
                owners
                    .into_iter()
                    .map(|c| {
                        let other = ClusterKey::new((*source).clone(), c);
                        let s = cluster_similarity(tops, &self.clusters[&other], &self.cfg)
                            .map(|s| s.value())
                            .unwrap_or(0.0);
                        (other, s)
                    })
                    .collect()
            };
        match pool {
            Some(pool) if foreign.len() > 1 => pool.install(|| {
                foreign
                    .par_iter()
                    .flat_map_iter(|p| per_source(p))
                    .collect()
            }),
            _ => foreign.iter().flat_map(per_source).collect(),
        }
    }

    /// Recomputes every edge of `key`. Existing edges to clusters that are
    /// no longer candidates are dropped. Returns the clusters whose edges
    /// changed, `key` included.
    fn realign(&mut self, key: &ClusterKey, pool: Option<&ThreadPool>) -> Vec<ClusterKey> {
        let found = self.candidates(key, pool);
        let mut touched = vec![key.clone()];
        let found_keys: BTreeSet<&ClusterKey> = found.iter().map(|(k, _)| k).collect();
        let stale: Vec<ClusterKey> = self
            .edges
            .get(key)
            .map(|n| {
                n.keys()
                    .filter(|k| !found_keys.contains(k))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        for other in stale {
            self.set_edge(key, &other, 0.0);
            touched.push(other);
        }
        for (other, w) in found {
            self.set_edge(key, &other, w);
            touched.push(other);
        }
        touched
    }

    fn component(&self, start: &ClusterKey) -> BTreeSet<ClusterKey> {
        let alpha = self.cfg.alpha_c;
        let mut seen = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(n) = queue.pop_front() {
            if let Some(nbrs) = self.edges.get(&n) {
                for (m, w) in nbrs {
                    if *w >= alpha && seen.insert(m.clone()) {
                        queue.push_back(m.clone());
                    }
                }
            }
        }
        seen
    }

    fn recompute_stories(&mut self, touched: &BTreeSet<ClusterKey>) -> BTreeSet<ClusterKey> {
        let mut changed = BTreeSet::new();
        let mut done: BTreeSet<ClusterKey> = BTreeSet::new();
        for key in touched {
            if let Some(old) = self.story_of.get(key) {
                changed.insert(old.clone());
            }
            if !self.clusters.contains_key(key) {
                self.story_of.remove(key);
                continue;
            }
            if done.contains(key) {
                continue;
            }
            let comp = self.component(key);
            let id = comp.first().expect("non-empty component").clone();
            for m in &comp {
                if let Some(old) = self.story_of.insert(m.clone(), id.clone()) {
                    if old != id {
                        changed.insert(old);
                    }
                }
                done.insert(m.clone());
            }
            changed.insert(id);
        }
        changed
    }

    /// Aligned story of a cluster: the smallest cluster key in its component.
    pub fn aligned_story_of(&self, key: &ClusterKey) -> Result<ClusterKey> {
        if !self.clusters.contains_key(key) {
            return Err(Error::UnknownCluster(key.to_string()));
        }
        Ok(self
            .story_of
            .get(key)
            .cloned()
            .unwrap_or_else(|| key.clone()))
    }

    /// `(cluster, aligned story)` for every live cluster, sorted.
    pub fn assignments(&self) -> Vec<(ClusterKey, ClusterKey)> {
        let mut out: Vec<_> = self
            .clusters
            .keys()
            .map(|k| {
                (
                    k.clone(),
                    self.story_of.get(k).cloned().unwrap_or_else(|| k.clone()),
                )
            })
            .collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{create_sketch, Level, Snippet, WindowId};

    fn cfg() -> Arc<EngineConfig> {
        Arc::new(EngineConfig {
            window_hours: 24.0,
            ..EngineConfig::default()
        })
    }

    fn top(
        source: &str,
        id: u64,
        span: i64,
        ents: &[&str],
        tops: &[&str],
        c: &EngineConfig,
    ) -> Sketch {
        let r = Snippet::new(format!("{source}-{id}"), source, 0)
            .with_dim("entities", ents.iter().copied())
            .with_dim("topics", tops.iter().copied());
        let mut s = create_sketch(SketchId(id), &r, c);
        s.level = Level::Top;
        s.window = WindowId(span);
        s
    }

    fn publish(key: &ClusterKey, version: u64, tops: Vec<Sketch>) -> ClusterUpdate {
        ClusterUpdate::Publish {
            key: key.clone(),
            version,
            top_sketches: Arc::new(tops),
        }
    }

    fn key(s: &str, c: u64) -> ClusterKey {
        ClusterKey::new(SourceId::new(s), ClusterId(c))
    }

    #[test]
    fn refugee_clusters_align() {
        let c = cfg();
        let mut crg = ClusterRelationshipGraph::new(c.clone());
        let a = key("s1", 0);
        let b = key("s2", 0);
        crg.align(
            vec![publish(
                &a,
                1,
                vec![top(
                    "s1",
                    0,
                    0,
                    &["Kos", "Refugees"],
                    &["Politics", "War"],
                    &c,
                )],
            )],
            None,
        );
        assert_eq!(crg.aligned_story_of(&a).unwrap(), a);
        crg.align(
            vec![publish(
                &b,
                1,
                vec![top("s2", 0, 0, &["Kos", "Refugees"], &["People"], &c)],
            )],
            None,
        );
        // entities 1.0, topics 0.0 -> 0.5; but topics share nothing so only one
        // dimension matches and the pair is not even compared
        assert_eq!(crg.edge(&a, &b), None);
        crg.align(
            vec![publish(
                &b,
                2,
                vec![top(
                    "s2",
                    0,
                    0,
                    &["Kos", "Refugees", "Greece"],
                    &["Politics", "War"],
                    &c,
                )],
            )],
            None,
        );
        let w = crg.edge(&a, &b).unwrap();
        assert!((w - (0.5 * 2.0 / 3.0 + 0.5)).abs() < 1e-12);
        assert_eq!(
            crg.aligned_story_of(&a).unwrap(),
            crg.aligned_story_of(&b).unwrap()
        );
    }

    #[test]
    fn single_source_never_aligns() {
        let c = cfg();
        let mut crg = ClusterRelationshipGraph::new(c.clone());
        let a = key("s1", 0);
        let b = key("s1", 1);
        let t = |id| top("s1", id, 0, &["x"], &["y"], &c);
        crg.align(
            vec![publish(&a, 1, vec![t(0)]), publish(&b, 1, vec![t(1)])],
            None,
        );
        assert!(crg.edges().is_empty());
        assert_ne!(
            crg.aligned_story_of(&a).unwrap(),
            crg.aligned_story_of(&b).unwrap()
        );
    }

    #[test]
    fn stale_versions_are_ignored_and_removal_splits() {
        let c = cfg();
        let mut crg = ClusterRelationshipGraph::new(c.clone());
        let a = key("s1", 0);
        let b = key("s2", 0);
        let same = |s: &str| top(s, 0, 0, &["x", "z"], &["y"], &c);
        crg.align(
            vec![
                publish(&a, 1, vec![same("s1")]),
                publish(&b, 1, vec![same("s2")]),
            ],
            None,
        );
        assert_eq!(
            crg.aligned_story_of(&a).unwrap(),
            crg.aligned_story_of(&b).unwrap()
        );

        // content drifts apart -> story splits
        crg.align(
            vec![publish(&b, 3, vec![top("s2", 0, 0, &["q"], &["r"], &c)])],
            None,
        );
        assert_eq!(crg.edge(&a, &b), None);
        assert_ne!(
            crg.aligned_story_of(&a).unwrap(),
            crg.aligned_story_of(&b).unwrap()
        );

        // an older snapshot arriving late changes nothing
        crg.align(vec![publish(&b, 2, vec![same("s2")])], None);
        assert_eq!(crg.edge(&a, &b), None);

        crg.align(
            vec![ClusterUpdate::Remove {
                key: b.clone(),
                version: 4,
            }],
            None,
        );
        assert!(matches!(
            crg.aligned_story_of(&b),
            Err(Error::UnknownCluster(_))
        ));
        assert_eq!(crg.cluster_count(), 1);
    }

    #[test]
    fn threshold_decides_alignment() {
        for (alpha_c, joined) in [(0.1, true), (0.5, false)] {
            let c = Arc::new(EngineConfig {
                alpha_c,
                ..(*cfg()).clone()
            });
            let mut crg = ClusterRelationshipGraph::new(c.clone());
            let a = key("s1", 0);
            let b = key("s2", 0);
            // entities 1/3, topics 1/2 -> 0.41666
            crg.align(
                vec![
                    publish(&a, 1, vec![top("s1", 0, 0, &["x", "y"], &["p"], &c)]),
                    publish(&b, 1, vec![top("s2", 0, 0, &["x", "z"], &["p", "q"], &c)]),
                ],
                None,
            );
            let w = crg.edge(&a, &b).unwrap();
            assert!((w - (0.5 / 3.0 + 0.25)).abs() < 1e-12);
            let same = crg.aligned_story_of(&a).unwrap() == crg.aligned_story_of(&b).unwrap();
            assert_eq!(same, joined);
        }
    }
}

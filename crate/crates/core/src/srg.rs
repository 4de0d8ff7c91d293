//! Per-source sketch relationship graph and story construction.
//!
//! Sketches of one source are nodes; edges carry sketch similarities across
//! windows. Stories are the connected components of the subgraph of edges
//! with weight at least `alpha_v` (transitive closure). The partition is
//! maintained incrementally: edges incident to one modified sketch change per
//! ingestion, so reclustering only touches the clusters around that sketch.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;

use crate::alignment::refresh_top_sketches;
use crate::error::{Error, Result};
use crate::index::{within_horizon, Probe, SourceIndex};
use crate::model::{
    linkable, sketch_from_profile, ClusterId, EngineConfig, Profile, Sketch, SketchId, Snippet,
    SourceId, WindowId,
};
use crate::similarity::profile_similarity;

/// Candidate count above which cross-window similarities are computed on
/// the intra-source pool.
const PARALLEL_CANDIDATES: usize = 48;

/// A story within one source.
#[derive(Clone, Debug)]
pub struct Cluster {
    pub id: ClusterId,
    pub source: SourceId,
    pub sketches: BTreeSet<SketchId>,
    /// One top-level sketch per span, ascending by span.
    pub top_sketches: Arc<Vec<Sketch>>,
    /// Set when membership or member content changed and the top sketches
    /// are stale.
    pub dirty: bool,
}

/// Weighted sketch graph of one source with its threshold clustering.
#[derive(Clone, Debug)]
pub struct SketchRelationshipGraph {
    source: SourceId,
    alpha_v: f64,
    windows: HashMap<SketchId, WindowId>,
    edges: HashMap<SketchId, BTreeMap<SketchId, f64>>,
    cluster_of: HashMap<SketchId, ClusterId>,
    clusters: BTreeMap<ClusterId, Cluster>,
    next_cluster: u64,
    /// Nodes that lost a strong (>= alpha_v) edge since the last recluster.
    weakened: BTreeSet<SketchId>,
}

impl SketchRelationshipGraph {
    pub fn new(source: SourceId, alpha_v: f64) -> Self {
        SketchRelationshipGraph {
            source,
            alpha_v,
            windows: HashMap::new(),
            edges: HashMap::new(),
            cluster_of: HashMap::new(),
            clusters: BTreeMap::new(),
            next_cluster: 0,
            weakened: BTreeSet::new(),
        }
    }

    pub fn source(&self) -> &SourceId {
        &self.source
    }

    /// Registers a sketch. It joins a cluster on the next [`recluster`].
    ///
    /// [`recluster`]: SketchRelationshipGraph::recluster
    pub fn add_node(&mut self, id: SketchId, window: WindowId) {
        self.windows.insert(id, window);
    }

    pub fn contains(&self, id: SketchId) -> bool {
        self.windows.contains_key(&id)
    }

    pub fn node_count(&self) -> usize {
        self.windows.len()
    }

    pub fn edge(&self, a: SketchId, b: SketchId) -> Option<f64> {
        self.edges.get(&a).and_then(|n| n.get(&b)).copied()
    }

    pub fn neighbors(&self, a: SketchId) -> impl Iterator<Item = (SketchId, f64)> + '_ {
        self.edges
            .get(&a)
            .into_iter()
            .flat_map(|n| n.iter().map(|(k, w)| (*k, *w)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// Sets the weight of edge `a`–`b`. A zero score removes the edge.
    pub fn upsert_edge(&mut self, a: SketchId, b: SketchId, score: f64) -> Result<()> {
        let wa = *self
            .windows
            .get(&a)
            .ok_or_else(|| Error::UnknownId(self.source.clone(), a))?;
        let wb = *self
            .windows
            .get(&b)
            .ok_or_else(|| Error::UnknownId(self.source.clone(), b))?;
        if a == b || wa == wb {
            return Err(Error::WindowConflict(a, b));
        }
        let old = self.edge(a, b);
        if old.is_some_and(|w| w >= self.alpha_v) && score < self.alpha_v {
            self.weakened.insert(a);
            self.weakened.insert(b);
        }
        if score > 0.0 {
            self.edges.entry(a).or_default().insert(b, score);
            self.edges.entry(b).or_default().insert(a, score);
        } else if old.is_some() {
            for (x, y) in [(a, b), (b, a)] {
                if let Some(n) = self.edges.get_mut(&x) {
                    n.remove(&y);
                    if n.is_empty() {
                        self.edges.remove(&x);
                    }
                }
            }
        }
        Ok(())
    }

    fn strong_neighbors(&self, a: SketchId) -> impl Iterator<Item = SketchId> + '_ {
        let alpha = self.alpha_v;
        self.neighbors(a)
            .filter(move |(_, w)| *w >= alpha)
            .map(|(k, _)| k)
    }

    /// Restores the partition-equals-components invariant after edges
    /// incident to `modified` changed. Returns every cluster id whose member
    /// set changed (including ids that no longer exist), plus the cluster
    /// now holding `modified`, whose content changed.
    pub fn recluster(&mut self, modified: SketchId) -> BTreeSet<ClusterId> {
        let mut dirty = BTreeSet::new();
        if !self.windows.contains_key(&modified) {
            return dirty;
        }
        let mut old: BTreeSet<ClusterId> = self
            .cluster_of
            .get(&modified)
            .copied()
            .into_iter()
            .collect();
        old.extend(
            self.strong_neighbors(modified)
                .filter_map(|n| self.cluster_of.get(&n).copied()),
        );
        let weakened = std::mem::take(&mut self.weakened);

        if weakened.is_empty() {
            self.union_into_one(modified, &old, &mut dirty);
        } else {
            // a strong edge was lost: recompute connectivity of everything
            // reachable from the touched clusters
            for w in &weakened {
                if let Some(c) = self.cluster_of.get(w) {
                    old.insert(*c);
                }
            }
            self.recompute_components(modified, &old, &mut dirty);
        }
        if let Some(c) = self.cluster_of.get(&modified) {
            dirty.insert(*c);
        }
        for id in &dirty {
            if let Some(c) = self.clusters.get_mut(id) {
                c.dirty = true;
            }
        }
        dirty
    }

    fn fresh_cluster(&mut self, members: BTreeSet<SketchId>) -> ClusterId {
        let id = ClusterId(self.next_cluster);
        self.next_cluster += 1;
        for m in &members {
            self.cluster_of.insert(*m, id);
        }
        self.clusters.insert(
            id,
            Cluster {
                id,
                source: self.source.clone(),
                sketches: members,
                top_sketches: Arc::new(Vec::new()),
                dirty: true,
            },
        );
        id
    }

    /// Larger clusters keep their id; ties go to the older id.
    fn survivor(&self, ids: &BTreeSet<ClusterId>) -> Option<ClusterId> {
        ids.iter().copied().max_by(|a, b| {
            let (sa, sb) = (
                self.clusters[a].sketches.len(),
                self.clusters[b].sketches.len(),
            );
            sa.cmp(&sb).then(b.cmp(a))
        })
    }

    fn union_into_one(
        &mut self,
        modified: SketchId,
        old: &BTreeSet<ClusterId>,
        dirty: &mut BTreeSet<ClusterId>,
    ) {
        let Some(keep) = self.survivor(old) else {
            self.fresh_cluster(BTreeSet::from([modified]));
            return;
        };
        for id in old {
            if *id == keep {
                continue;
            }
            let absorbed = self.clusters.remove(id).expect("live cluster");
            for m in &absorbed.sketches {
                self.cluster_of.insert(*m, keep);
            }
            self.clusters
                .get_mut(&keep)
                .unwrap()
                .sketches
                .extend(absorbed.sketches);
            dirty.insert(*id);
            dirty.insert(keep);
        }
        if self.cluster_of.insert(modified, keep) != Some(keep) {
            self.clusters
                .get_mut(&keep)
                .unwrap()
                .sketches
                .insert(modified);
            dirty.insert(keep);
        }
    }

    fn recompute_components(
        &mut self,
        modified: SketchId,
        old: &BTreeSet<ClusterId>,
        dirty: &mut BTreeSet<ClusterId>,
    ) {
        let mut nodes: BTreeSet<SketchId> = BTreeSet::from([modified]);
        let mut old_size: HashMap<ClusterId, usize> = HashMap::new();
        for id in old {
            let c = &self.clusters[id];
            old_size.insert(*id, c.sketches.len());
            nodes.extend(c.sketches.iter().copied());
        }
        let mut seen: BTreeSet<SketchId> = BTreeSet::new();
        let mut components: Vec<BTreeSet<SketchId>> = Vec::new();
        for start in &nodes {
            if seen.contains(start) {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([*start]);
            seen.insert(*start);
            while let Some(n) = queue.pop_front() {
                comp.insert(n);
                for m in self.strong_neighbors(n) {
                    if seen.insert(m) {
                        queue.push_back(m);
                    }
                }
            }
            components.push(comp);
        }
        // larger components claim ids first; ties by smallest member
        components.sort_by(|a, b| {
            b.len()
                .cmp(&a.len())
                .then_with(|| a.first().cmp(&b.first()))
        });

        let previous: HashMap<SketchId, ClusterId> = nodes
            .iter()
            .filter_map(|n| self.cluster_of.get(n).map(|c| (*n, *c)))
            .collect();
        let mut claimed: BTreeSet<ClusterId> = BTreeSet::new();
        let mut previous_clusters: HashMap<ClusterId, Cluster> = HashMap::new();
        for id in old {
            previous_clusters.insert(*id, self.clusters.remove(id).expect("live cluster"));
        }
        for comp in components {
            let best = comp
                .iter()
                .filter_map(|n| previous.get(n))
                .filter(|c| !claimed.contains(c))
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .max_by(|a, b| old_size[a].cmp(&old_size[b]).then(b.cmp(a)));
            let Some(id) = best else {
                let id = self.fresh_cluster(comp);
                dirty.insert(id);
                continue;
            };
            claimed.insert(id);
            let mut cluster = previous_clusters.remove(&id).expect("claimed cluster");
            if cluster.sketches != comp {
                dirty.insert(id);
                for m in &comp {
                    self.cluster_of.insert(*m, id);
                }
                cluster.sketches = comp;
            }
            self.clusters.insert(id, cluster);
        }
        for id in previous_clusters.into_keys() {
            dirty.insert(id);
        }
    }

    pub fn cluster_of(&self, id: SketchId) -> Option<ClusterId> {
        self.cluster_of.get(&id).copied()
    }

    pub fn cluster(&self, id: ClusterId) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub(crate) fn cluster_mut(&mut self, id: ClusterId) -> Option<&mut Cluster> {
        self.clusters.get_mut(&id)
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }
}

/// How a snippet entered its sketch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IngestPath {
    Merged,
    NewSketch,
}

/// Outcome of integrating one snippet.
#[derive(Clone, Debug)]
pub struct Integration {
    pub sketch: SketchId,
    pub cluster: ClusterId,
    pub path: IngestPath,
    pub dirty: BTreeSet<ClusterId>,
}

/// Everything one source owns: its sketches, its index slice and its graph.
/// Only the source's own lane mutates it.
#[derive(Clone, Debug)]
pub struct SourceStories {
    source: SourceId,
    cfg: Arc<EngineConfig>,
    sketches: HashMap<SketchId, Sketch>,
    index: SourceIndex,
    graph: SketchRelationshipGraph,
    next_sketch: u64,
    snippets: usize,
}

impl SourceStories {
    pub fn new(source: SourceId, cfg: Arc<EngineConfig>) -> Self {
        SourceStories {
            index: SourceIndex::for_config(&cfg),
            graph: SketchRelationshipGraph::new(source.clone(), cfg.alpha_v),
            source,
            cfg,
            sketches: HashMap::new(),
            next_sketch: 0,
            snippets: 0,
        }
    }

    pub fn source(&self) -> &SourceId {
        &self.source
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn sketch(&self, id: SketchId) -> Option<&Sketch> {
        self.sketches.get(&id)
    }

    pub fn sketches(&self) -> impl Iterator<Item = &Sketch> {
        self.sketches.values()
    }

    pub fn sketch_count(&self) -> usize {
        self.sketches.len()
    }

    pub fn snippet_count(&self) -> usize {
        self.snippets
    }

    pub fn index(&self) -> &SourceIndex {
        &self.index
    }

    pub fn graph(&self) -> &SketchRelationshipGraph {
        &self.graph
    }

    /// Integrates one snippet: merge into the best same-window sketch or
    /// start a new one, re-link the affected sketch across windows, and
    /// recluster. Cross-window similarities run on `pool` when given and the
    /// candidate set is large.
    pub fn integrate_snippet(
        &mut self,
        snippet: &Snippet,
        pool: Option<&ThreadPool>,
    ) -> Result<Integration> {
        if snippet.source != self.source {
            return Err(Error::SourceMismatch {
                expected: self.source.clone(),
                found: snippet.source.clone(),
            });
        }
        snippet.validate(&self.cfg)?;
        let cfg = self.cfg.clone();
        let profile = Profile::of_snippet(snippet, &cfg);
        let window = snippet.window(&cfg);

        // (1) same-window candidates
        let best = {
            let probe = Probe::new(&profile, self.index.dim_names());
            let mut best: Option<(f64, SketchId)> = None;
            for id in self.index.same_window(&probe, window, cfg.min_match_dims) {
                let cand = &self.sketches[&id];
                if !linkable(&profile, &cand.profile, cfg.min_match_dims) {
                    continue;
                }
                let s = profile_similarity(&profile, &cand.profile, &cfg).value();
                // ids ascend, so strict > keeps the earliest sketch on ties
                if best.is_none_or(|(bs, _)| s > bs) {
                    best = Some((s, id));
                }
            }
            best
        };

        // (2) merge or create
        let (id, path) = match best {
            Some((s, id)) if s >= cfg.alpha_v => {
                let sketch = self.sketches.get_mut(&id).expect("indexed sketch");
                sketch.absorb(&snippet.id, &profile, &cfg);
                self.index.replace(sketch)?;
                (id, IngestPath::Merged)
            }
            _ => {
                let id = SketchId(self.next_sketch);
                self.next_sketch += 1;
                let sketch = sketch_from_profile(id, snippet, profile, &cfg);
                self.index.insert(&sketch)?;
                self.graph.add_node(id, window);
                self.sketches.insert(id, sketch);
                (id, IngestPath::NewSketch)
            }
        };
        self.snippets += 1;

        // (3) cross-window edges, then recluster
        let scores = self.score_cross_window(id, pool);
        for (other, score) in scores {
            self.graph.upsert_edge(id, other, score)?;
        }
        let dirty = self.graph.recluster(id);
        for cid in &dirty {
            self.refresh_cluster(*cid);
        }
        let cluster = self.graph.cluster_of(id).expect("clustered sketch");
        Ok(Integration {
            sketch: id,
            cluster,
            path,
            dirty,
        })
    }

    /// New weights for every candidate edge of `id`: index candidates plus
    /// current neighbours. Pairs failing the exact filter get weight 0.
    fn score_cross_window(&self, id: SketchId, pool: Option<&ThreadPool>) -> Vec<(SketchId, f64)> {
        let cfg = &self.cfg;
        let sketch = &self.sketches[&id];
        let probe = Probe::new(&sketch.profile, self.index.dim_names());
        let mut cands: BTreeSet<SketchId> = self
            .index
            .cross_window(
                &probe,
                sketch.window,
                cfg.comparison_interval,
                cfg.min_match_dims,
            )
            .into_values()
            .flatten()
            .collect();
        cands.extend(self.graph.neighbors(id).map(|(n, _)| n));
        let score = |other: &SketchId| -> (SketchId, f64) {
            let o = &self.sketches[other];
            let s = if within_horizon(sketch.window, o.window, cfg.comparison_interval)
                && linkable(&sketch.profile, &o.profile, cfg.min_match_dims)
            {
                profile_similarity(&sketch.profile, &o.profile, cfg).value()
            } else {
                0.0
            };
            (*other, s)
        };
        match pool {
            Some(pool) if cands.len() >= PARALLEL_CANDIDATES => {
                let cands: Vec<SketchId> = cands.into_iter().collect();
                pool.install(|| cands.par_iter().map(score).collect())
            }
            _ => cands.iter().map(score).collect(),
        }
    }

    fn refresh_cluster(&mut self, cid: ClusterId) {
        let sketches = &self.sketches;
        if let Some(cluster) = self.graph.cluster_mut(cid) {
            refresh_top_sketches(cluster, |id| &sketches[&id], &self.cfg);
        }
    }

    /// `(snippet_id, sketch, cluster)` for every ingested snippet, sorted by
    /// snippet id.
    pub fn assignments(&self) -> Vec<(String, SketchId, ClusterId)> {
        let mut rows: Vec<(String, SketchId, ClusterId)> = self
            .sketches
            .values()
            .flat_map(|s| {
                let c = self.graph.cluster_of(s.id).expect("clustered sketch");
                s.members.iter().map(move |m| (m.clone(), s.id, c))
            })
            .collect();
        rows.sort();
        rows
    }

    /// Stories as sorted sets of snippet ids, independent of cluster ids.
    pub fn partition(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .graph
            .clusters()
            .map(|c| {
                let mut ids: Vec<String> = c
                    .sketches
                    .iter()
                    .flat_map(|s| self.sketches[s].members.iter().cloned())
                    .collect();
                ids.sort();
                ids
            })
            .collect();
        out.sort();
        out
    }
}

//! Brute-force reference implementation and shared fixtures.
//!
//! The reference recomputes everything from raw token counts: exhaustive
//! same-window scans for sketch formation, all sketch pairs for the graph,
//! all cluster pairs for alignment. It shares no code with the engine
//! beyond the input types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use event_stories::harness::{generate, GenSpec};
use event_stories::model::{DimensionConfig, EngineConfig, Metric, Snippet, SourceId};
use event_stories::pipeline::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Counts = Vec<BTreeMap<String, u64>>;

pub fn counts_of(r: &Snippet, cfg: &EngineConfig) -> Counts {
    cfg.dimensions
        .iter()
        .map(|d| {
            let mut m = BTreeMap::new();
            for t in r.dimensions.get(&d.name).into_iter().flatten() {
                *m.entry(t.clone()).or_insert(0) += 1;
            }
            m
        })
        .collect()
}

fn add(into: &mut Counts, other: &Counts) {
    for (a, b) in into.iter_mut().zip(other) {
        for (t, n) in b {
            *a.entry(t.clone()).or_insert(0) += n;
        }
    }
}

pub fn dim_sim(a: &BTreeMap<String, u64>, b: &BTreeMap<String, u64>, metric: Metric) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    match metric {
        Metric::Jaccard => {
            let inter = a.keys().filter(|k| b.contains_key(*k)).count();
            let union = a.len() + b.len() - inter;
            inter as f64 / union as f64
        }
        Metric::CosineTf => {
            let dot: u64 = a
                .iter()
                .map(|(k, n)| n * b.get(k).copied().unwrap_or(0))
                .sum();
            if dot == 0 {
                return 0.0;
            }
            let na: u64 = a.values().map(|n| n * n).sum();
            let nb: u64 = b.values().map(|n| n * n).sum();
            dot as f64 / ((na as f64) * (nb as f64)).sqrt()
        }
    }
}

pub fn sim(a: &Counts, b: &Counts, cfg: &EngineConfig) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (d, (x, y)) in cfg.dimensions.iter().zip(a.iter().zip(b)) {
        den += d.weight;
        if d.weight > 0.0 {
            num += dim_sim(x, y, d.metric) * d.weight;
        }
    }
    if den <= 0.0 {
        0.0
    } else {
        (num / den).clamp(0.0, 1.0)
    }
}

/// Shared dimensions reach `min(min_match_dims, non-empty dims of either side)`, at least 1.
pub fn linkable(a: &Counts, b: &Counts, min_match_dims: usize) -> bool {
    let ne = |c: &Counts| c.iter().filter(|m| !m.is_empty()).count();
    let need = min_match_dims.min(ne(a)).min(ne(b)).max(1);
    let shared = a
        .iter()
        .zip(b)
        .filter(|(x, y)| x.keys().any(|k| y.contains_key(k)))
        .count();
    shared >= need
}

pub fn window(ts: i64, cfg: &EngineConfig) -> i64 {
    ((ts - cfg.origin) as f64 / (cfg.window_hours * 3600.0)).floor() as i64
}

#[derive(Clone, Debug)]
pub struct RefSketch {
    pub window: i64,
    pub counts: Counts,
    pub members: Vec<String>,
}

/// Greedy sketch formation by exhaustive same-window scan, in arrival order.
pub fn reference_sketches(snippets: &[&Snippet], cfg: &EngineConfig) -> Vec<RefSketch> {
    let mut sketches: Vec<RefSketch> = Vec::new();
    for r in snippets {
        let c = counts_of(r, cfg);
        let w = window(r.timestamp, cfg);
        let mut best: Option<(f64, usize)> = None;
        for (i, s) in sketches.iter().enumerate() {
            if s.window != w || !linkable(&c, &s.counts, cfg.min_match_dims) {
                continue;
            }
            let v = sim(&c, &s.counts, cfg);
            if best.is_none_or(|(b, _)| v > b) {
                best = Some((v, i));
            }
        }
        match best {
            Some((v, i)) if v >= cfg.alpha_v => {
                add(&mut sketches[i].counts, &c);
                sketches[i].members.push(r.id.clone());
            }
            _ => sketches.push(RefSketch {
                window: w,
                counts: c,
                members: vec![r.id.clone()],
            }),
        }
    }
    sketches
}

fn components(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut Vec<usize>, x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Clusters of one source as groups of sketch indices.
pub fn reference_clusters(sketches: &[RefSketch], cfg: &EngineConfig) -> Vec<Vec<usize>> {
    let reach = cfg.comparison_interval as i64 - 1;
    let mut edges = Vec::new();
    for i in 0..sketches.len() {
        for j in i + 1..sketches.len() {
            let (a, b) = (&sketches[i], &sketches[j]);
            let d = (a.window - b.window).abs();
            if d == 0 || d > reach || !linkable(&a.counts, &b.counts, cfg.min_match_dims) {
                continue;
            }
            if sim(&a.counts, &b.counts, cfg) >= cfg.alpha_v {
                edges.push((i, j));
            }
        }
    }
    components(sketches.len(), &edges)
}

pub type Partition = Vec<Vec<String>>;

fn canonical(mut p: Partition) -> Partition {
    for g in &mut p {
        g.sort();
    }
    p.sort();
    p
}

#[derive(Clone, Debug)]
pub struct Reference {
    pub partitions: BTreeMap<SourceId, Partition>,
    /// Cross-source edges as (members of a, members of b, weight), a < b.
    pub crg_edges: Vec<(Vec<String>, Vec<String>, f64)>,
    pub aligned: Partition,
    pub sketch_count: usize,
}

struct RefCluster {
    source: SourceId,
    members: Vec<String>,
    tops: BTreeMap<i64, Counts>,
}

/// Full reference run: per source in arrival order, then alignment of the
/// final clusters.
pub fn reference(snippets: &[Snippet], cfg: &EngineConfig) -> Reference {
    let mut by_source: BTreeMap<SourceId, Vec<&Snippet>> = BTreeMap::new();
    for r in snippets {
        by_source.entry(r.source.clone()).or_default().push(r);
    }
    let mut partitions = BTreeMap::new();
    let mut clusters: Vec<RefCluster> = Vec::new();
    let mut sketch_count = 0;
    for (source, rs) in &by_source {
        let sketches = reference_sketches(rs, cfg);
        sketch_count += sketches.len();
        let mut part = Vec::new();
        for group in reference_clusters(&sketches, cfg) {
            let mut members: Vec<String> = group
                .iter()
                .flat_map(|i| sketches[*i].members.clone())
                .collect();
            members.sort();
            let mut tops: BTreeMap<i64, Counts> = BTreeMap::new();
            for i in &group {
                let span = sketches[*i].window.div_euclid(cfg.top_window_span as i64);
                let entry = tops
                    .entry(span)
                    .or_insert_with(|| vec![BTreeMap::new(); cfg.dimensions.len()]);
                add(entry, &sketches[*i].counts);
            }
            part.push(members.clone());
            clusters.push(RefCluster {
                source: source.clone(),
                members,
                tops,
            });
        }
        partitions.insert(source.clone(), canonical(part));
    }

    let mut crg_edges = Vec::new();
    let mut strong = Vec::new();
    for i in 0..clusters.len() {
        for j in i + 1..clusters.len() {
            let (a, b) = (&clusters[i], &clusters[j]);
            if a.source == b.source {
                continue;
            }
            let shared: Vec<i64> = a
                .tops
                .keys()
                .filter(|s| b.tops.contains_key(*s))
                .copied()
                .collect();
            if !shared
                .iter()
                .any(|s| linkable(&a.tops[s], &b.tops[s], cfg.min_match_dims))
            {
                continue;
            }
            let mean = shared
                .iter()
                .map(|s| sim(&a.tops[s], &b.tops[s], cfg))
                .sum::<f64>()
                / shared.len() as f64;
            let w = (mean + mean) / 2.0;
            if w > 0.0 {
                let (x, y) = if a.members < b.members {
                    (a, b)
                } else {
                    (b, a)
                };
                crg_edges.push((x.members.clone(), y.members.clone(), w));
                if w >= cfg.alpha_c {
                    strong.push((i, j));
                }
            }
        }
    }
    crg_edges.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    let aligned = components(clusters.len(), &strong)
        .into_iter()
        .map(|g| {
            g.iter()
                .flat_map(|i| clusters[*i].members.clone())
                .collect()
        })
        .collect();
    Reference {
        partitions,
        crg_edges,
        aligned: canonical(aligned),
        sketch_count,
    }
}

/// The engine's quiesced state in the reference's shape.
pub struct Observed {
    pub partitions: BTreeMap<SourceId, Partition>,
    pub crg_edges: Vec<(Vec<String>, Vec<String>, f64)>,
    pub aligned: Partition,
    pub sketch_count: usize,
}

pub fn observe(engine: &Engine) -> Observed {
    let rows = engine.story_rows();
    let mut members: BTreeMap<(SourceId, u64), Vec<String>> = BTreeMap::new();
    let mut aligned: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &rows {
        members
            .entry((r.source.clone(), r.cluster.0))
            .or_default()
            .push(r.snippet_id.clone());
        aligned
            .entry(r.aligned_story.to_string())
            .or_default()
            .push(r.snippet_id.clone());
    }
    for m in members.values_mut() {
        m.sort();
    }
    let mut crg_edges: Vec<(Vec<String>, Vec<String>, f64)> = engine
        .crg_edges()
        .into_iter()
        .map(|(a, b, w)| {
            let ma = members[&(a.source.clone(), a.cluster.0)].clone();
            let mb = members[&(b.source.clone(), b.cluster.0)].clone();
            if ma < mb {
                (ma, mb, w)
            } else {
                (mb, ma, w)
            }
        })
        .collect();
    crg_edges.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    Observed {
        partitions: engine.partitions(),
        crg_edges,
        aligned: canonical(aligned.into_values().collect()),
        sketch_count: engine.sketch_count(),
    }
}

pub fn edges_match(
    a: &[(Vec<String>, Vec<String>, f64)],
    b: &[(Vec<String>, Vec<String>, f64)],
    tol: f64,
) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.0 == y.0 && x.1 == y.1 && (x.2 - y.2).abs() <= tol)
}

/// Runs `snippets` through a fresh engine in `mode` and quiesces.
pub fn run_engine(
    snippets: &[Snippet],
    cfg: &EngineConfig,
    mode: event_stories::Mode,
    workers: usize,
) -> Engine {
    let engine = Engine::new(cfg.clone()).expect("valid config");
    let sources: BTreeSet<SourceId> = snippets.iter().map(|r| r.source.clone()).collect();
    for s in sources {
        engine.add_source(s, Vec::new()).unwrap();
    }
    engine.run_mode(mode, workers).unwrap();
    for r in snippets {
        engine.submit(r.clone()).unwrap();
    }
    engine.quiesce();
    assert!(engine.failures().is_empty(), "{:?}", engine.failures());
    engine
}

/// A random small corpus and configuration, in the spirit of the planted
/// generator but with collisions, late windows and varied parameters.
pub fn random_case(seed: u64) -> (Vec<Snippet>, EngineConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sources = rng.gen_range(1..=4);
    let with_title = rng.gen_bool(0.5);
    let mut dims = vec![
        ("entities".to_string(), rng.gen_range(2..=5)),
        ("topics".to_string(), rng.gen_range(1..=3)),
    ];
    if with_title {
        dims.push(("title".to_string(), rng.gen_range(2..=6)));
    }
    let stories = rng.gen_range(2..=14);
    let spec = GenSpec {
        sources,
        stories,
        events_per_story: rng.gen_range(1..=500 / stories / sources).min(16),
        gap_min: 1,
        gap_max: rng.gen_range(1..=5),
        window_hours: 12.0,
        start_spread: rng.gen_range(0..=20),
        dimensions: dims,
        common_pool: rng.gen_range(2..=8),
        evolution: rng.gen_range(0.0..0.6),
        noise: rng.gen_range(0.0..0.35),
        copies: rng.gen_range(1..=sources),
        origin: 1_420_070_400,
    };
    let mut snippets = generate(&spec, seed).expect("valid spec").snippets;
    // some late arrivals
    let n = snippets.len();
    for _ in 0..n / 10 {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        snippets.swap(i, j);
    }
    let mut dimensions = vec![
        DimensionConfig::new("entities", rng.gen_range(0.2..1.0)),
        DimensionConfig::new("topics", rng.gen_range(0.2..1.0)),
    ];
    if with_title {
        dimensions.push(
            DimensionConfig::new("title", rng.gen_range(0.0..1.0)).with_metric(Metric::CosineTf),
        );
    }
    let cfg = EngineConfig {
        window_hours: [6.0, 12.0, 24.0][rng.gen_range(0..3)],
        comparison_interval: rng.gen_range(1..=6),
        alpha_v: rng.gen_range(0.1..0.6),
        alpha_c: rng.gen_range(0.05..0.5),
        min_match_dims: rng.gen_range(1..=2),
        top_window_span: rng.gen_range(1..=5),
        bloom_fpr: [0.01, 0.05, 0.2][rng.gen_range(0..3)],
        workers: rng.gen_range(1..=4),
        origin: 1_420_070_400,
        dimensions,
        align_batch: rng.gen_range(1..=64),
        ..EngineConfig::default()
    };
    (snippets, cfg)
}

pub const AUG_12_2015: i64 = 1_439_337_600;

fn row(id: &str, source: &str, day: i64, hour: i64, ents: &[&str], topics: &[&str]) -> Snippet {
    Snippet::new(id, source, AUG_12_2015 + day * 86_400 + hour * 3600)
        .with_dim("entities", ents.iter().copied())
        .with_dim("topics", topics.iter().copied())
}

/// The running example: refugee, Tianjin and other stories reported by two
/// sources over three days.
pub fn running_example() -> Vec<Snippet> {
    vec![
        row(
            "r1_1",
            "s1",
            0,
            8,
            &["Kos", "Refugees"],
            &["Politics", "War"],
        ),
        row("r2_1", "s1", 0, 9, &["Kos", "Refugees"], &["Politics"]),
        row("r3_1", "s1", 0, 10, &["Spain"], &["People", "Politics"]),
        row("r4_1", "s1", 0, 11, &["China"], &["Disaster"]),
        row("r5_1", "s1", 1, 8, &["China", "Tianjin"], &["Disaster"]),
        row("r6_1", "s1", 1, 9, &["Greece", "Kos"], &["Politics", "War"]),
        row("r7_1", "s1", 1, 10, &["Japan", "Tianjin"], &["Disaster"]),
        row("r8_1", "s1", 1, 11, &["Italy"], &["Crime", "Politics"]),
        row("r9_1", "s1", 2, 8, &["Greece"], &["War"]),
        row("r1_2", "s2", 0, 8, &["Isis"], &["Politics", "War"]),
        row(
            "r2_2",
            "s2",
            0,
            9,
            &["Refugees", "Turkey"],
            &["People", "War"],
        ),
        row(
            "r3_2",
            "s2",
            1,
            8,
            &["Refugees", "Greece"],
            &["Politics", "War"],
        ),
        row("r4_2", "s2", 1, 9, &["Kos", "Refugees"], &["People"]),
        row("r5_2", "s2", 1, 10, &["China", "Tianjin"], &["Disaster"]),
    ]
}

pub fn running_config() -> EngineConfig {
    EngineConfig {
        window_hours: 24.0,
        alpha_v: 0.3,
        origin: AUG_12_2015,
        dimensions: vec![
            DimensionConfig::new("entities", 0.5).with_metric(Metric::Jaccard),
            DimensionConfig::new("topics", 0.5).with_metric(Metric::Jaccard),
        ],
        ..EngineConfig::default()
    }
}

/// Pass/fail line for the acceptance log.
pub fn verdict(id: u32, name: &str, ok: bool, detail: &str) {
    println!(
        "[{}] criterion {id:>2} {name}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
}

pub fn skipped(id: u32, name: &str, why: &str) {
    println!("[SKIP] criterion {id:>2} {name}: {why}");
}

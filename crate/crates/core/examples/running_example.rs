//! Two news sources over three days: refugees on Kos, the Tianjin
//! explosion and some unrelated items. Prints per-source stories, the
//! cluster graph and the aligned stories.

use event_stories::model::Metric;
use event_stories::pipeline::Engine;
use event_stories::similarity::{cluster_similarity, snippet_sketch_similarity};
use event_stories::{DimensionConfig, EngineConfig, Mode, Snippet};

const AUG_12_2015: i64 = 1_439_337_600;

fn row(id: &str, source: &str, day: i64, hour: i64, ents: &[&str], topics: &[&str]) -> Snippet {
    Snippet::new(id, source, AUG_12_2015 + day * 86_400 + hour * 3600)
        .with_dim("entities", ents.iter().copied())
        .with_dim("topics", topics.iter().copied())
}

fn main() -> event_stories::Result<()> {
    let rows = vec![
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
    ];
    let cfg = EngineConfig {
        window_hours: 24.0,
        origin: AUG_12_2015,
        dimensions: vec![
            DimensionConfig::new("entities", 0.5).with_metric(Metric::Jaccard),
            DimensionConfig::new("topics", 0.5).with_metric(Metric::Jaccard),
        ],
        ..EngineConfig::default()
    };

    let engine = Engine::new(cfg.clone())?;
    engine.add_source("s1", Vec::new())?;
    engine.add_source("s2", Vec::new())?;
    engine.run_mode(Mode::Sequ, 1)?;
    for r in &rows {
        engine.submit(r.clone())?;
    }
    engine.quiesce();

    for report in engine.reports() {
        println!(
            "{:5} -> sketch {} cluster {} aligned {}",
            report.snippet_id,
            report.sketch,
            report.cluster,
            report
                .aligned_story
                .map(|k| k.to_string())
                .unwrap_or_default()
        );
    }

    println!("\nstories per source");
    for (source, stories) in engine.partitions() {
        println!("  {source}: {stories:?}");
    }

    println!("\ncluster graph");
    for (a, b, w) in engine.crg_edges() {
        println!("  {a} -- {b}  {w:.3}");
    }

    println!("\naligned stories");
    for (cluster, story) in engine.aligned_stories() {
        println!("  {cluster} in {story}");
    }

    // the similarity functions are usable on their own
    let tops = |source: &str| {
        engine
            .with_source(&source.into(), |stories| {
                stories
                    .graph()
                    .clusters()
                    .map(|c| (c.id, c.top_sketches.clone()))
                    .collect::<Vec<_>>()
            })
            .expect("registered source")
    };
    println!("\ncluster similarity, s1 x s2");
    for (a, ta) in tops("s1") {
        for (b, tb) in tops("s2") {
            println!(
                "  s1/{a} s2/{b}  {:.3}",
                cluster_similarity(&ta, &tb, &cfg)?.value()
            );
        }
    }
    let w = rows[1].window(&cfg);
    let first = engine
        .with_source(&"s1".into(), |st| {
            st.sketches().find(|v| v.window == w).cloned()
        })?
        .expect("sketch in window");
    let s = snippet_sketch_similarity(&rows[1], &first, &cfg)?;
    println!("\nsim(r2_1, s1 sketch {}) = {:.3}", first.id, s.value());
    Ok(())
}

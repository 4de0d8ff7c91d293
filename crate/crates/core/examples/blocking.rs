//! Splits a single stream into blocks by a key function, processes each
//! block as its own source and lets alignment reconnect stories that span
//! blocks.

use std::collections::BTreeMap;

use event_stories::harness::{blocking_as_sources, evaluate, generate, GenSpec};
use event_stories::pipeline::Engine;
use event_stories::{EngineConfig, Mode, Snippet};

fn first_entity_block(r: &Snippet) -> String {
    let e = r
        .dimensions
        .get("entities")
        .and_then(|t| t.iter().min())
        .cloned()
        .unwrap_or_default();
    // story tokens look like entities-<story>-<n>
    let story: u64 = e
        .split('-')
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    format!("block{}", story % 4)
}

fn main() -> event_stories::Result<()> {
    let spec = GenSpec {
        sources: 1,
        stories: 60,
        ..GenSpec::default()
    };
    let g = generate(&spec, 3)?;
    let cfg = EngineConfig {
        window_hours: spec.window_hours,
        origin: spec.origin,
        ..EngineConfig::default()
    };

    for (name, snippets) in [
        ("single source", g.snippets.clone()),
        (
            "entity blocks",
            blocking_as_sources(&g.snippets, first_entity_block),
        ),
        (
            "event parity",
            blocking_as_sources(&g.snippets, |r| {
                let e: usize =
                    r.id.rsplit("-e")
                        .next()
                        .and_then(|s| s.parse().ok())
                        .unwrap_or(0);
                format!("parity{}", e % 2)
            }),
        ),
    ] {
        let engine = Engine::new(cfg.clone())?;
        let mut sources: Vec<_> = snippets.iter().map(|r| r.source.clone()).collect();
        sources.sort();
        sources.dedup();
        for s in &sources {
            engine.add_source(s.clone(), Vec::new())?;
        }
        engine.run_mode(Mode::Sp, 2)?;
        for r in snippets {
            engine.submit(r)?;
        }
        engine.quiesce();
        let local: BTreeMap<String, String> = engine
            .story_rows()
            .into_iter()
            .map(|r| (r.snippet_id, format!("{}/{}", r.source, r.cluster)))
            .collect();
        let ql = evaluate(&local, &g.truth)?;
        let qa = evaluate(&engine.aligned_assignment(), &g.truth)?;
        println!(
            "{name:14} {} blocks  per-block F {:.3}  aligned F {:.3}  cluster edges {}",
            sources.len(),
            ql.f_measure,
            qa.f_measure,
            engine.crg_edges().len()
        );
    }
    Ok(())
}

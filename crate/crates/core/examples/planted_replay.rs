//! Generates a three-source corpus with planted stories, replays it under
//! each execution mode and scores the aligned stories against the truth.
//!
//! `cargo run --release --example planted_replay -- [seed] [workers]`

use event_stories::harness::{evaluate, generate, replay, GenSpec, ReplaySpec};
use event_stories::{EngineConfig, Mode};

fn main() -> event_stories::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(7);
    let workers = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);

    let spec = GenSpec {
        stories: 120,
        ..GenSpec::default()
    };
    let g = generate(&spec, seed)?;
    let cfg = EngineConfig {
        window_hours: spec.window_hours,
        origin: spec.origin,
        ..EngineConfig::default()
    };
    println!(
        "{} snippets, {} stories, seed {seed}",
        g.snippets.len(),
        spec.stories
    );
    println!("mode  workers  wall_ms  snippets/s  sketches  P      R      F");

    let mut baseline = None;
    for mode in [Mode::Sequ, Mode::Round, Mode::Sp] {
        let w = if mode == Mode::Sequ { 1 } else { workers };
        let out = replay(g.snippets.clone(), &ReplaySpec::new(mode, w), cfg.clone())?;
        let q = evaluate(&out.engine.aligned_assignment(), &g.truth)?;
        println!(
            "{:5} {:7}  {:7.1}  {:10.0}  {:8}  {:.3}  {:.3}  {:.3}",
            mode.to_string(),
            w,
            out.perf.wall_ms,
            out.perf.snippets as f64 / (out.perf.wall_ms / 1000.0),
            out.engine.sketch_count(),
            q.precision,
            q.recall,
            q.f_measure
        );
        let parts = out.engine.partitions();
        match &baseline {
            None => baseline = Some(parts),
            Some(b) => assert_eq!(b, &parts, "modes disagree"),
        }
    }

    // per virtual day, from the last run
    let out = replay(g.snippets, &ReplaySpec::new(Mode::Sp, workers), cfg)?;
    println!("\nday  throughput  mean_latency_ms");
    for d in out.perf.days.iter().take(10) {
        println!(
            "{:3}  {:10}  {:15.3}",
            d.day, d.throughput, d.mean_latency_ms
        );
    }
    Ok(())
}

//! Sweeps the similarity threshold, the comparison interval and the window
//! length over one planted corpus and prints quality and sketch counts.

use event_stories::harness::{evaluate, generate, GenSpec};
use event_stories::pipeline::Engine;
use event_stories::{EngineConfig, Mode, Snippet};

fn run(snippets: &[Snippet], cfg: EngineConfig) -> event_stories::Result<Engine> {
    let engine = Engine::new(cfg)?;
    engine.add_source("s1", Vec::new())?;
    engine.run_mode(Mode::Sequ, 1)?;
    for r in snippets {
        engine.submit(r.clone())?;
    }
    engine.quiesce();
    Ok(engine)
}

fn main() -> event_stories::Result<()> {
    // one source, so consecutive events of a story can share a window
    let spec = GenSpec {
        sources: 1,
        ..GenSpec::default()
    };
    let g = generate(&spec, 5)?;
    let base = EngineConfig {
        window_hours: spec.window_hours,
        origin: spec.origin,
        ..EngineConfig::default()
    };

    println!("alpha_v  P      R      F");
    for a in [0.1, 0.2, 0.3, 0.4, 0.5, 0.6] {
        let e = run(
            &g.snippets,
            EngineConfig {
                alpha_v: a,
                ..base.clone()
            },
        )?;
        let q = evaluate(&e.aligned_assignment(), &g.truth)?;
        println!(
            "{a:7.1}  {:.3}  {:.3}  {:.3}",
            q.precision, q.recall, q.f_measure
        );
    }

    println!("\nm'   P      R      F");
    for m in [1, 2, 3, 4, 8, 16, 30] {
        let e = run(
            &g.snippets,
            EngineConfig {
                comparison_interval: m,
                ..base.clone()
            },
        )?;
        let q = evaluate(&e.aligned_assignment(), &g.truth)?;
        println!(
            "{m:3}  {:.3}  {:.3}  {:.3}",
            q.precision, q.recall, q.f_measure
        );
    }

    // same time horizon, coarser windows
    println!("\nh    m'  sketches  F");
    for (h, m, span) in [(6.0, 60, 28), (12.0, 30, 14), (24.0, 15, 7)] {
        let cfg = EngineConfig {
            window_hours: h,
            comparison_interval: m,
            top_window_span: span,
            ..base.clone()
        };
        let e = run(&g.snippets, cfg)?;
        let q = evaluate(&e.aligned_assignment(), &g.truth)?;
        println!("{h:3}  {m:3}  {:8}  {:.3}", e.sketch_count(), q.f_measure);
    }
    Ok(())
}

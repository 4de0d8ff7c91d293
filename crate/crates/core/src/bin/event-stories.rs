use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use event_stories::harness::{
    daily_counts, evaluate, generate, load_config, load_snippets, read_schedule,
    read_story_assignment, read_truth, replay, write_daily_counts, write_truth, GenSpec,
    ReplaySpec,
};
use event_stories::model::{write_snippets, EngineConfig, Mode};
use event_stories::Error;

#[derive(Parser)]
#[command(version, about = "Discover and align event stories in snippet streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a dataset through the engine and dump stories and metrics.
    Run {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Virtual seconds per wall second, or "inf".
        #[arg(long, default_value = "inf")]
        compression: f64,
        /// CSV of `day,source` source additions.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a planted-story corpus and its ground truth.
    Gen {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Snippet output (JSONL); truth goes to `<out>.truth.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise precision, recall and F of a stories dump.
    Eval {
        #[arg(long)]
        stories: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Snippets per day and source.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            data,
            config,
            mode,
            compression,
            schedule,
            workers,
            out,
        } => {
            let cfg = match config {
                Some(p) => load_config(&p)?,
                None => EngineConfig::default(),
            };
            let mut spec =
                ReplaySpec::new(mode.unwrap_or(cfg.mode), workers.unwrap_or(cfg.workers));
            spec.compression = compression;
            if let Some(p) = schedule {
                spec.schedule = read_schedule(File::open(p)?)?;
            }
            spec.validate()?;
            let snippets = load_snippets(&data)?;
            let outcome = replay(snippets, &spec, cfg)?;
            fs::create_dir_all(&out)?;
            outcome
                .perf
                .write_csv(BufWriter::new(File::create(out.join("metrics.csv"))?))?;
            outcome
                .engine
                .write_stories_csv(BufWriter::new(File::create(out.join("stories.csv"))?))?;
            outcome
                .engine
                .write_aligned_csv(BufWriter::new(File::create(out.join("aligned.csv"))?))?;
            for (ticket, err) in outcome.engine.failures() {
                eprintln!("snippet #{ticket} failed: {err}");
            }
            eprintln!(
                "{} snippets in {:.1} ms, {} sketches",
                outcome.perf.snippets,
                outcome.perf.wall_ms,
                outcome.engine.sketch_count()
            );
        }
        Command::Gen { spec, seed, out } => {
            let spec = match spec {
                Some(p) => GenSpec::from_kv_str(&fs::read_to_string(p)?)?,
                None => GenSpec::default(),
            };
            let g = generate(&spec, seed)?;
            write_snippets(BufWriter::new(File::create(&out)?), &g.snippets)?;
            let mut truth_path = out.into_os_string();
            truth_path.push(".truth.csv");
            write_truth(BufWriter::new(File::create(truth_path)?), &g.truth)?;
        }
        Command::Eval { stories, truth } => {
            let assignment = read_story_assignment(File::open(stories)?)?;
            let truth = read_truth(File::open(truth)?)?;
            let q = evaluate(&assignment, &truth)?;
            println!("precision,recall,f_measure");
            println!("{:.6},{:.6},{:.6}", q.precision, q.recall, q.f_measure);
        }
        Command::Stats { data } => {
            let counts = daily_counts(&load_snippets(&data)?);
            write_daily_counts(io::stdout().lock(), &counts)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

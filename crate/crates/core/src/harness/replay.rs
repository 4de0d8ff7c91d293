//! Time-compressed replay of a recorded or generated stream.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::model::{EngineConfig, Mode, Snippet, SourceId};
use crate::pipeline::Engine;

const DAY: i64 = 86_400;

#[derive(Clone, Debug)]
pub struct ReplaySpec {
    /// Virtual seconds per wall second; `f64::INFINITY` replays as fast as
    /// possible.
    pub compression: f64,
    pub mode: Mode,
    pub workers: usize,
    /// `(virtual day, source)`: the source joins at that day with all of
    /// its earlier snippets as backlog.
    pub schedule: Vec<(u32, SourceId)>,
}

impl ReplaySpec {
    pub fn new(mode: Mode, workers: usize) -> Self {
        ReplaySpec {
            compression: f64::INFINITY,
            mode,
            workers,
            schedule: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.compression.is_nan() || self.compression <= 0.0 {
            return Err(Error::Validation("compression must be positive".into()));
        }
        if self.schedule.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(Error::Validation(
                "schedule days must be non-decreasing".into(),
            ));
        }
        Ok(())
    }
}

/// Reads a schedule CSV `day,source` (header optional).
pub fn read_schedule<R: Read>(input: R) -> Result<Vec<(u32, SourceId)>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let day = rec.get(0).unwrap_or("").trim();
        if i == 0 && day == "day" {
            continue;
        }
        let day = day.parse::<u32>().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("bad day '{day}'"),
        })?;
        let source = rec.get(1).unwrap_or("").trim();
        out.push((day, SourceId::new(source)));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DayMetrics {
    pub day: i64,
    /// Snippets completed during the virtual day.
    pub throughput: usize,
    pub mean_latency_ms: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PerfReport {
    pub days: Vec<DayMetrics>,
    pub snippets: usize,
    /// Wall time from first release to quiescence.
    pub wall_ms: f64,
}

impl PerfReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["virtual_day", "throughput", "mean_latency_ms"])
            .map_err(io)?;
        for d in &self.days {
            w.write_record([
                d.day.to_string(),
                d.throughput.to_string(),
                format!("{:.3}", d.mean_latency_ms),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub struct ReplayOutcome {
    /// The quiesced engine, for dumps and evaluation.
    pub engine: Engine,
    pub perf: PerfReport,
    /// Virtual release time of every snippet.
    pub release: HashMap<String, i64>,
    /// Virtual start of the replay.
    pub t0: i64,
}

impl ReplayOutcome {
    pub fn virtual_day(&self, ts: i64) -> i64 {
        (ts - self.t0).div_euclid(DAY)
    }
}

/// Releases `snippets` in timestamp order at `spec.compression`, adding
/// scheduled sources on their day, then quiesces and collects metrics.
pub fn replay(
    mut snippets: Vec<Snippet>,
    spec: &ReplaySpec,
    cfg: EngineConfig,
) -> Result<ReplayOutcome> {
    spec.validate()?;
    snippets.sort_by_key(|r| r.timestamp);
    let engine = Engine::new(cfg)?;
    let t0 = snippets.first().map_or(0, |r| r.timestamp);

    let scheduled: BTreeMap<SourceId, u32> =
        spec.schedule.iter().map(|(d, s)| (s.clone(), *d)).collect();
    let initial: BTreeSet<SourceId> = snippets
        .iter()
        .map(|r| r.source.clone())
        .filter(|s| !scheduled.contains_key(s))
        .collect();
    for s in initial {
        engine.add_source(s, Vec::new())?;
    }
    engine.run_mode(spec.mode, spec.workers)?;

    let mut held: BTreeMap<SourceId, Vec<Snippet>> = BTreeMap::new();
    let mut release: HashMap<String, i64> = HashMap::new();
    let mut pending_schedule = spec.schedule.iter().peekable();
    let start = Instant::now();
    let start_ms = engine.now_ms();

    let join = |source: &SourceId,
                at: i64,
                held: &mut BTreeMap<SourceId, Vec<Snippet>>,
                release: &mut HashMap<String, i64>|
     -> Result<()> {
        let backlog = held.remove(source).unwrap_or_default();
        for r in &backlog {
            release.insert(r.id.clone(), r.timestamp.max(at));
        }
        engine.add_source(source.clone(), backlog)
    };

    for r in snippets {
        let day = (r.timestamp - t0).div_euclid(DAY);
        while let Some((d, s)) = pending_schedule.peek() {
            if i64::from(*d) > day {
                break;
            }
            join(s, t0 + i64::from(*d) * DAY, &mut held, &mut release)?;
            pending_schedule.next();
        }
        if spec.compression.is_finite() {
            let due = Duration::from_secs_f64((r.timestamp - t0) as f64 / spec.compression);
            if let Some(wait) = due.checked_sub(start.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        if scheduled.contains_key(&r.source) && !engine.sources().contains(&r.source) {
            held.entry(r.source.clone()).or_default().push(r);
            continue;
        }
        release.insert(r.id.clone(), r.timestamp);
        engine.submit(r)?;
    }
    for (d, s) in pending_schedule {
        join(s, t0 + i64::from(*d) * DAY, &mut held, &mut release)?;
    }
    engine.quiesce();
    let wall_ms = start.elapsed().as_secs_f64() * 1000.0;

    let mut buckets: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    let reports = engine.reports();
    for rep in &reports {
        let released = release.get(&rep.snippet_id).copied().unwrap_or(t0);
        let vt = if spec.compression.is_finite() {
            let elapsed_s = (rep.completed_ms - start_ms) / 1000.0;
            released.max(t0 + (elapsed_s * spec.compression).floor() as i64)
        } else {
            released
        };
        let b = buckets.entry((vt - t0).div_euclid(DAY)).or_default();
        b.0 += 1;
        b.1 += rep.latency_ms();
    }
    let days = buckets
        .into_iter()
        .map(|(day, (n, total))| DayMetrics {
            day,
            throughput: n,
            mean_latency_ms: total / n as f64,
        })
        .collect();
    Ok(ReplayOutcome {
        engine,
        perf: PerfReport {
            days,
            snippets: reports.len(),
            wall_ms,
        },
        release,
        t0,
    })
}

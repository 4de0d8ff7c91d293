//! Ingestion engine: one lane per source, three execution modes and the
//! alignment stage.
//!
//! * `Sp`: every source lane has its own thread and mutates only its own
//!   partition; cross-window candidate scoring may fan out on an
//!   intra-source pool; alignment runs on a single aligner thread that
//!   coalesces up to `align_batch` ingestion steps and fans out per foreign
//!   source on an inter-source pool.
//! * `Round`: snippets are dealt to workers round-robin regardless of
//!   source. A worker waits until its snippet is next in its lane, so
//!   workers contend on partitions but lane order is kept.
//! * `Sequ`: one worker, strict submission order.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex, MutexGuard, RwLock};
use std::thread::JoinHandle;
use std::time::Instant;

use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::alignment::{updates_for, ClusterRelationshipGraph, ClusterUpdate};
use crate::error::{Error, Result};
use crate::model::{ClusterId, ClusterKey, EngineConfig, Mode, SketchId, Snippet, SourceId};
use crate::srg::{IngestPath, SourceStories};

/// Outcome of one submitted snippet.
#[derive(Clone, Debug)]
pub struct IngestReport {
    pub ticket: u64,
    pub snippet_id: String,
    pub source: SourceId,
    /// Engine clock, milliseconds since the engine was created.
    pub enqueued_ms: f64,
    pub completed_ms: f64,
    pub sketch: SketchId,
    pub cluster: ClusterId,
    /// `None` when the cluster was already merged away by a later snippet
    /// of the same alignment batch.
    pub aligned_story: Option<ClusterKey>,
    pub path: IngestPath,
}

impl IngestReport {
    pub fn latency_ms(&self) -> f64 {
        self.completed_ms - self.enqueued_ms
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaneState {
    CatchingUp,
    Streaming,
}

/// One row of the stories dump.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct StoryRow {
    pub source: SourceId,
    pub snippet_id: String,
    pub sketch: SketchId,
    pub cluster: ClusterId,
    pub aligned_story: ClusterKey,
}

struct Lane {
    source: SourceId,
    stories: Mutex<SourceStories>,
    /// Lane sequence number of the next job to run (round mode).
    turn: Mutex<u64>,
    turn_cv: Condvar,
    assigned: Mutex<u64>,
    backlog: AtomicUsize,
    tx: Mutex<Option<Sender<Job>>>,
}

impl Lane {
    fn new(source: SourceId, cfg: Arc<EngineConfig>, backlog: usize) -> Self {
        Lane {
            stories: Mutex::new(SourceStories::new(source.clone(), cfg)),
            source,
            turn: Mutex::new(0),
            turn_cv: Condvar::new(),
            assigned: Mutex::new(0),
            backlog: AtomicUsize::new(backlog),
            tx: Mutex::new(None),
        }
    }

    fn wait_turn(&self, seq: u64) {
        let mut turn = lock(&self.turn);
        while *turn != seq {
            turn = self.turn_cv.wait(turn).unwrap_or_else(|e| e.into_inner());
        }
    }

    fn advance_turn(&self) {
        *lock(&self.turn) += 1;
        self.turn_cv.notify_all();
    }
}

struct Job {
    ticket: u64,
    lane_seq: u64,
    snippet: Snippet,
    enqueued_ms: f64,
    lane: Arc<Lane>,
    from_backlog: bool,
}

struct Step {
    report: IngestReport,
    updates: Vec<ClusterUpdate>,
    lane: Arc<Lane>,
    from_backlog: bool,
}

#[derive(Default)]
struct Progress {
    submitted: u64,
    completed: u64,
    reports: Vec<IngestReport>,
    failures: Vec<(u64, Error)>,
}

struct Shared {
    cfg: Arc<EngineConfig>,
    epoch: Instant,
    lanes: RwLock<BTreeMap<SourceId, Arc<Lane>>>,
    crg: Mutex<ClusterRelationshipGraph>,
    progress: Mutex<Progress>,
    progress_cv: Condvar,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn now_ms(&self) -> f64 {
        self.epoch.elapsed().as_secs_f64() * 1000.0
    }

    fn integrate(&self, job: &Job, pool: Option<&ThreadPool>) -> Result<Step> {
        let mut stories = lock(&job.lane.stories);
        let out = stories.integrate_snippet(&job.snippet, pool)?;
        let version = job.lane_seq + 1;
        let updates = updates_for(&job.lane.source, &out.dirty, version, |c| {
            stories.graph().cluster(c).map(|c| c.top_sketches.clone())
        });
        Ok(Step {
            report: IngestReport {
                ticket: job.ticket,
                snippet_id: job.snippet.id.clone(),
                source: job.lane.source.clone(),
                enqueued_ms: job.enqueued_ms,
                completed_ms: 0.0,
                sketch: out.sketch,
                cluster: out.cluster,
                aligned_story: None,
                path: out.path,
            },
            updates,
            lane: job.lane.clone(),
            from_backlog: job.from_backlog,
        })
    }

    fn complete(&self, step: Step, crg: &ClusterRelationshipGraph) {
        let mut report = step.report;
        let key = ClusterKey::new(report.source.clone(), report.cluster);
        report.aligned_story = crg.aligned_story_of(&key).ok();
        report.completed_ms = self.now_ms();
        if step.from_backlog {
            step.lane.backlog.fetch_sub(1, Ordering::SeqCst);
        }
        let mut p = lock(&self.progress);
        p.reports.push(report);
        p.completed += 1;
        self.progress_cv.notify_all();
    }

    fn fail(&self, job: &Job, err: Error) {
        if job.from_backlog {
            job.lane.backlog.fetch_sub(1, Ordering::SeqCst);
        }
        let mut p = lock(&self.progress);
        p.failures.push((job.ticket, err));
        p.completed += 1;
        self.progress_cv.notify_all();
    }

    /// Integrate and align inline (sequ and round workers).
    fn run_inline(&self, job: &Job) {
        match self.integrate(job, None) {
            Ok(mut step) => {
                let mut crg = lock(&self.crg);
                crg.align(std::mem::take(&mut step.updates), None);
                self.complete(step, &crg);
            }
            Err(e) => self.fail(job, e),
        }
    }
}

struct Running {
    mode: Mode,
    intra: Option<Arc<ThreadPool>>,
    align_tx: Option<Sender<Step>>,
    worker_txs: Vec<Sender<Job>>,
    handles: Vec<JoinHandle<()>>,
    dealt: u64,
}

struct Control {
    next_ticket: u64,
    pending: Vec<Job>,
    running: Option<Running>,
}

/// The ingestion engine. All methods take `&self`; the engine can be
/// shared between a producer and readers.
pub struct Engine {
    shared: Arc<Shared>,
    control: Mutex<Control>,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        let cfg = Arc::new(cfg);
        Ok(Engine {
            shared: Arc::new(Shared {
                crg: Mutex::new(ClusterRelationshipGraph::new(cfg.clone())),
                cfg,
                epoch: Instant::now(),
                lanes: RwLock::new(BTreeMap::new()),
                progress: Mutex::new(Progress::default()),
                progress_cv: Condvar::new(),
            }),
            control: Mutex::new(Control {
                next_ticket: 0,
                pending: Vec::new(),
                running: None,
            }),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.shared.cfg
    }

    /// Engine clock in milliseconds.
    pub fn now_ms(&self) -> f64 {
        self.shared.now_ms()
    }

    pub fn mode(&self) -> Option<Mode> {
        lock(&self.control).running.as_ref().map(|r| r.mode)
    }

    fn lane(&self, source: &SourceId) -> Option<Arc<Lane>> {
        self.shared
            .lanes
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(source)
            .cloned()
    }

    /// Registers a source whose `backlog` is processed first (catch-up),
    /// after which the lane streams. Allowed before and during a run.
    pub fn add_source(&self, source: impl Into<SourceId>, backlog: Vec<Snippet>) -> Result<()> {
        let source = source.into();
        for r in &backlog {
            if r.source != source {
                return Err(Error::SourceMismatch {
                    expected: source,
                    found: r.source.clone(),
                });
            }
            r.validate(&self.shared.cfg)?;
        }
        let mut control = lock(&self.control);
        let lane = {
            let mut lanes = self.shared.lanes.write().unwrap_or_else(|e| e.into_inner());
            if lanes.contains_key(&source) {
                return Err(Error::DuplicateSource(source));
            }
            let lane = Arc::new(Lane::new(
                source.clone(),
                self.shared.cfg.clone(),
                backlog.len(),
            ));
            lanes.insert(source, lane.clone());
            lane
        };
        if let Some(running) = control.running.as_mut() {
            if running.mode == Mode::Sp {
                let handle = self.spawn_sp_lane(&lane, running);
                running.handles.push(handle);
            }
        }
        for r in backlog {
            let job = self.make_job(&mut control, &lane, r, true);
            self.dispatch(&mut control, job);
        }
        Ok(())
    }

    pub fn sources(&self) -> Vec<SourceId> {
        self.shared
            .lanes
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    pub fn lane_state(&self, source: &SourceId) -> Result<LaneState> {
        let lane = self
            .lane(source)
            .ok_or_else(|| Error::UnknownSource(source.clone()))?;
        Ok(if lane.backlog.load(Ordering::SeqCst) == 0 {
            LaneState::Streaming
        } else {
            LaneState::CatchingUp
        })
    }

    /// Enqueues a snippet on its source lane and returns its ticket.
    pub fn submit(&self, snippet: Snippet) -> Result<u64> {
        let lane = self
            .lane(&snippet.source)
            .ok_or_else(|| Error::UnknownSource(snippet.source.clone()))?;
        snippet.validate(&self.shared.cfg)?;
        let mut control = lock(&self.control);
        let job = self.make_job(&mut control, &lane, snippet, false);
        let ticket = job.ticket;
        self.dispatch(&mut control, job);
        Ok(ticket)
    }

    fn make_job(
        &self,
        control: &mut Control,
        lane: &Arc<Lane>,
        snippet: Snippet,
        from_backlog: bool,
    ) -> Job {
        let ticket = control.next_ticket;
        control.next_ticket += 1;
        let mut assigned = lock(&lane.assigned);
        let lane_seq = *assigned;
        *assigned += 1;
        Job {
            ticket,
            lane_seq,
            snippet,
            enqueued_ms: self.now_ms(),
            lane: lane.clone(),
            from_backlog,
        }
    }

    fn dispatch(&self, control: &mut Control, job: Job) {
        let Some(running) = control.running.as_mut() else {
            control.pending.push(job);
            return;
        };
        lock(&self.shared.progress).submitted += 1;
        match running.mode {
            Mode::Sp => {
                let lane = job.lane.clone();
                let tx = lock(&lane.tx);
                tx.as_ref()
                    .expect("lane thread")
                    .send(job)
                    .expect("lane thread alive");
            }
            Mode::Sequ => running.worker_txs[0].send(job).expect("worker alive"),
            Mode::Round => {
                let w = (running.dealt % running.worker_txs.len() as u64) as usize;
                running.dealt += 1;
                running.worker_txs[w].send(job).expect("worker alive");
            }
        }
    }

    /// Starts processing in `mode` with `workers` threads. Snippets
    /// submitted earlier are dispatched in submission order.
    pub fn run_mode(&self, mode: Mode, workers: usize) -> Result<()> {
        if workers == 0 {
            return Err(Error::Validation("workers must be at least 1".into()));
        }
        let mut control = lock(&self.control);
        if control.running.is_some() {
            return Err(Error::AlreadyRunning);
        }
        let cfg = &self.shared.cfg;
        let mut running = Running {
            mode,
            intra: None,
            align_tx: None,
            worker_txs: Vec::new(),
            handles: Vec::new(),
            dealt: 0,
        };
        match mode {
            Mode::Sp => {
                let intra = (cfg.comparison_interval as usize).min(workers).max(1);
                running.intra = Some(Arc::new(build_pool("intra", intra)?));
                let n_sources = self.sources().len();
                let inter = n_sources.saturating_sub(1).min(workers).max(1);
                let inter = build_pool("inter", inter)?;
                let (tx, rx) = channel::<Step>();
                running.align_tx = Some(tx);
                let shared = self.shared.clone();
                let batch = cfg.align_batch.max(1);
                running
                    .handles
                    .push(spawn("aligner", move || aligner(shared, rx, batch, inter))?);
                let lanes: Vec<Arc<Lane>> = self
                    .shared
                    .lanes
                    .read()
                    .unwrap_or_else(|e| e.into_inner())
                    .values()
                    .cloned()
                    .collect();
                for lane in lanes {
                    let handle = self.spawn_sp_lane(&lane, &running);
                    running.handles.push(handle);
                }
            }
            Mode::Sequ | Mode::Round => {
                let n = if mode == Mode::Sequ { 1 } else { workers };
                for i in 0..n {
                    let (tx, rx) = channel::<Job>();
                    let shared = self.shared.clone();
                    let round = mode == Mode::Round;
                    running.worker_txs.push(tx);
                    running.handles.push(spawn(&format!("worker-{i}"), move || {
                        worker(shared, rx, round)
                    })?);
                }
            }
        }
        control.running = Some(running);
        for job in std::mem::take(&mut control.pending) {
            self.dispatch(&mut control, job);
        }
        Ok(())
    }

    fn spawn_sp_lane(&self, lane: &Arc<Lane>, running: &Running) -> JoinHandle<()> {
        let (tx, rx) = channel::<Job>();
        *lock(&lane.tx) = Some(tx);
        let shared = self.shared.clone();
        let pool = running.intra.clone().expect("sp pools");
        let align_tx = running.align_tx.clone().expect("sp aligner");
        spawn(&format!("lane-{}", lane.source), move || {
            sp_lane(shared, rx, pool, align_tx)
        })
        .expect("spawn lane thread")
    }

    /// Blocks until every dispatched snippet is fully processed, aligned
    /// stories included. Returns immediately on an engine that was never
    /// started.
    pub fn quiesce(&self) {
        let mut p = lock(&self.shared.progress);
        while p.completed < p.submitted {
            p = self
                .shared
                .progress_cv
                .wait(p)
                .unwrap_or_else(|e| e.into_inner());
        }
    }

    /// Number of snippets dispatched to workers and completed so far.
    pub fn progress(&self) -> (u64, u64) {
        let p = lock(&self.shared.progress);
        (p.submitted, p.completed)
    }

    /// Reports in ticket order.
    pub fn reports(&self) -> Vec<IngestReport> {
        let mut r = lock(&self.shared.progress).reports.clone();
        r.sort_by_key(|r| r.ticket);
        r
    }

    pub fn failures(&self) -> Vec<(u64, Error)> {
        lock(&self.shared.progress).failures.clone()
    }

    /// Runs `f` on a source's partition. Call after [`Engine::quiesce`] for
    /// a stable view.
    pub fn with_source<R>(
        &self,
        source: &SourceId,
        f: impl FnOnce(&SourceStories) -> R,
    ) -> Result<R> {
        let lane = self
            .lane(source)
            .ok_or_else(|| Error::UnknownSource(source.clone()))?;
        let stories = lock(&lane.stories);
        Ok(f(&stories))
    }

    /// Stories per source, as canonical sets of snippet ids.
    pub fn partitions(&self) -> BTreeMap<SourceId, Vec<Vec<String>>> {
        self.sources()
            .into_iter()
            .map(|s| {
                let p = self
                    .with_source(&s, |st| st.partition())
                    .expect("listed source");
                (s, p)
            })
            .collect()
    }

    pub fn sketch_count(&self) -> usize {
        self.sources()
            .iter()
            .map(|s| {
                self.with_source(s, |st| st.sketch_count())
                    .expect("listed source")
            })
            .sum()
    }

    pub fn crg_edges(&self) -> Vec<(ClusterKey, ClusterKey, f64)> {
        lock(&self.shared.crg).edges()
    }

    /// `(cluster, aligned story)` for every cluster.
    pub fn aligned_stories(&self) -> Vec<(ClusterKey, ClusterKey)> {
        lock(&self.shared.crg).assignments()
    }

    pub fn aligned_story_of(&self, key: &ClusterKey) -> Result<ClusterKey> {
        lock(&self.shared.crg).aligned_story_of(key)
    }

    /// Every ingested snippet with its sketch, cluster and aligned story.
    pub fn story_rows(&self) -> Vec<StoryRow> {
        let crg = lock(&self.shared.crg);
        let mut rows = Vec::new();
        for s in self.sources() {
            let assignments = self
                .with_source(&s, |st| st.assignments())
                .expect("listed source");
            for (snippet_id, sketch, cluster) in assignments {
                let key = ClusterKey::new(s.clone(), cluster);
                let aligned_story = crg.aligned_story_of(&key).unwrap_or_else(|_| key.clone());
                rows.push(StoryRow {
                    source: s.clone(),
                    snippet_id,
                    sketch,
                    cluster,
                    aligned_story,
                });
            }
        }
        rows.sort();
        rows
    }

    /// Snippet id to aligned-story label.
    pub fn aligned_assignment(&self) -> BTreeMap<String, String> {
        self.story_rows()
            .into_iter()
            .map(|r| (r.snippet_id, r.aligned_story.to_string()))
            .collect()
    }

    /// Writes `snippet_id,source,sketch_id,cluster_id,aligned_story_id`.
    pub fn write_stories_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record([
            "snippet_id",
            "source",
            "sketch_id",
            "cluster_id",
            "aligned_story_id",
        ])
        .map_err(io)?;
        for r in self.story_rows() {
            w.write_record([
                r.snippet_id,
                r.source.to_string(),
                r.sketch.0.to_string(),
                r.cluster.0.to_string(),
                r.aligned_story.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `cluster_id,source,aligned_story_id`.
    pub fn write_aligned_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["cluster_id", "source", "aligned_story_id"])
            .map_err(io)?;
        for (key, story) in self.aligned_stories() {
            w.write_record([
                key.cluster.0.to_string(),
                key.source.to_string(),
                story.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        let running = lock(&self.control).running.take();
        let Some(mut running) = running else { return };
        for lane in self
            .shared
            .lanes
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .values()
        {
            lock(&lane.tx).take();
        }
        running.worker_txs.clear();
        running.align_tx.take();
        for h in running.handles.drain(..) {
            let _ = h.join();
        }
    }
}

fn build_pool(name: &str, n: usize) -> Result<ThreadPool> {
    let name = name.to_string();
    ThreadPoolBuilder::new()
        .num_threads(n)
        .thread_name(move |i| format!("{name}-{i}"))
        .build()
        .map_err(|e| Error::Io(e.to_string()))
}

fn spawn(name: &str, f: impl FnOnce() + Send + 'static) -> Result<JoinHandle<()>> {
    std::thread::Builder::new()
        .name(name.to_string())
        .spawn(f)
        .map_err(Error::from)
}

fn sp_lane(shared: Arc<Shared>, rx: Receiver<Job>, pool: Arc<ThreadPool>, align_tx: Sender<Step>) {
    for job in rx {
        match shared.integrate(&job, Some(&pool)) {
            Ok(step) => {
                if align_tx.send(step).is_err() {
                    return;
                }
            }
            Err(e) => shared.fail(&job, e),
        }
    }
}

fn aligner(shared: Arc<Shared>, rx: Receiver<Step>, batch: usize, pool: ThreadPool) {
    while let Ok(first) = rx.recv() {
        let mut steps = vec![first];
        while steps.len() < batch {
            match rx.try_recv() {
                Ok(s) => steps.push(s),
                Err(_) => break,
            }
        }
        let updates: Vec<ClusterUpdate> = steps
            .iter_mut()
            .flat_map(|s| std::mem::take(&mut s.updates))
            .collect();
        let mut crg = lock(&shared.crg);
        crg.align(updates, Some(&pool));
        for s in steps {
            shared.complete(s, &crg);
        }
    }
}

fn worker(shared: Arc<Shared>, rx: Receiver<Job>, round: bool) {
    for job in rx {
        if round {
            job.lane.wait_turn(job.lane_seq);
        }
        shared.run_inline(&job);
        if round {
            job.lane.advance_turn();
        }
    }
}

//! Paint jobs: a bounded FIFO queue drained by a fixed pool of worker threads,
//! with every record persisted in a [`JobStore`].

pub mod api;
pub mod patches;
pub mod store;

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use painter_core::{
    CancelToken, CompositionSpec, Error as CoreError, Manifest, OpCountReport, PaintObserver, Snapshot,
};
use serde::{Deserialize, Serialize};

use crate::pipeline::{PaintConfig, PreparedPaint};
pub use store::JobStore;

pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRef {
    pub index: usize,
    pub ops_done: u64,
    pub t: usize,
    pub blob: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    /// sha256 of the result PNG.
    pub blob: String,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub state: JobState,
    /// Completed ops over `ops.n_total`.
    pub progress: f64,
    pub ops_done: u64,
    pub ops: OpCountReport,
    pub spec: CompositionSpec,
    pub config: PaintConfig,
    pub warnings: Vec<String>,
    pub result: Option<JobResult>,
    pub snapshots: Vec<SnapshotRef>,
    pub error: Option<String>,
    pub created_ms: u64,
    pub started_ms: Option<u64>,
    pub finished_ms: Option<u64>,
}

/// Body of `POST /jobs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRequest {
    pub spec: CompositionSpec,
    #[serde(default = "preview_config")]
    pub config: PaintConfig,
}

fn preview_config() -> PaintConfig {
    PaintConfig { snapshots: crate::pipeline::DEFAULT_PREVIEW_FRAMES, ..PaintConfig::default() }
}

#[derive(Debug)]
pub enum SubmitError {
    Invalid(String),
    QueueFull,
    Internal(String),
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

struct Queue {
    ids: VecDeque<String>,
    closed: bool,
}

struct Shared {
    store: JobStore,
    queue: Mutex<Queue>,
    ready: Condvar,
    capacity: usize,
    tokens: Mutex<HashMap<String, CancelToken>>,
}

#[derive(Clone)]
pub struct JobService {
    shared: Arc<Shared>,
    workers: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(4)
}

impl JobService {
    /// Open the store, recover interrupted jobs and start `workers` threads. With
    /// zero workers jobs are accepted but stay queued.
    ///
    /// Jobs that were running when the previous process stopped are marked failed;
    /// queued jobs are queued again in submission order.
    pub fn start(store_dir: impl Into<PathBuf>, workers: usize, capacity: usize) -> anyhow::Result<Self> {
        let store = JobStore::open(store_dir)?;
        let mut pending = VecDeque::new();
        for record in store.list() {
            match record.state {
                JobState::Running => store.update(&record.id, |r| {
                    r.state = JobState::Failed;
                    r.error = Some("interrupted by a service restart".into());
                    r.finished_ms = Some(now_ms());
                    (true, ())
                })?,
                JobState::Queued => pending.push_back(record.id),
                _ => {}
            }
        }
        let tokens = pending.iter().map(|id| (id.clone(), CancelToken::new())).collect();
        let shared = Arc::new(Shared {
            store,
            queue: Mutex::new(Queue { ids: pending, closed: false }),
            ready: Condvar::new(),
            capacity: capacity.max(1),
            tokens: Mutex::new(tokens),
        });
        let handles = (0..workers)
            .map(|i| {
                let shared = shared.clone();
                std::thread::Builder::new()
                    .name(format!("painter-worker-{i}"))
                    .spawn(move || worker_loop(&shared))
                    .context("cannot spawn worker")
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        Ok(JobService { shared, workers: Arc::new(Mutex::new(handles)) })
    }

    pub fn store(&self) -> &JobStore {
        &self.shared.store
    }

    /// Validate and enqueue a job.
    pub fn submit(&self, request: JobRequest) -> Result<JobRecord, SubmitError> {
        let comp = request.spec.resolve(None).map_err(|e| SubmitError::Invalid(e.to_string()))?;
        let prepared = PreparedPaint::from_composition(&comp, &request.config)
            .map_err(|e| SubmitError::Invalid(format!("{e:#}")))?;
        let mut queue = self.shared.queue.lock().unwrap();
        if queue.ids.len() >= self.shared.capacity {
            return Err(SubmitError::QueueFull);
        }
        let record = JobRecord {
            id: uuid::Uuid::new_v4().simple().to_string(),
            state: JobState::Queued,
            progress: 0.0,
            ops_done: 0,
            ops: prepared.ops(),
            spec: request.spec,
            config: request.config,
            warnings: prepared.raster.warnings.clone(),
            result: None,
            snapshots: Vec::new(),
            error: None,
            created_ms: now_ms(),
            started_ms: None,
            finished_ms: None,
        };
        self.shared.store.insert(record.clone()).map_err(|e| SubmitError::Internal(format!("{e:#}")))?;
        self.shared.tokens.lock().unwrap().insert(record.id.clone(), CancelToken::new());
        queue.ids.push_back(record.id.clone());
        self.shared.ready.notify_one();
        Ok(record)
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.shared.store.get(id)
    }

    /// `Ok(None)` for an unknown id, `Err` with the record if it already finished.
    pub fn cancel(&self, id: &str) -> anyhow::Result<Option<Result<JobRecord, JobRecord>>> {
        let Some(record) = self.shared.store.get(id) else { return Ok(None) };
        if record.state.is_terminal() {
            return Ok(Some(Err(record)));
        }
        if let Some(token) = self.shared.tokens.lock().unwrap().get(id) {
            token.cancel();
        }
        // a queued job never reaches a worker; a running one stops at its next op
        let mut queue = self.shared.queue.lock().unwrap();
        if let Some(pos) = queue.ids.iter().position(|q| q == id) {
            queue.ids.remove(pos);
            drop(queue);
            self.shared.store.update(id, |r| {
                r.state = JobState::Cancelled;
                r.finished_ms = Some(now_ms());
                (true, ())
            })?;
            self.shared.tokens.lock().unwrap().remove(id);
        }
        Ok(Some(Ok(self.shared.store.get(id).expect("record exists"))))
    }

    pub fn queue_len(&self) -> usize {
        self.shared.queue.lock().unwrap().ids.len()
    }

    /// Stop accepting work, let running jobs finish and join the workers.
    pub fn shutdown(&self) {
        self.shared.queue.lock().unwrap().closed = true;
        self.shared.ready.notify_all();
        for handle in self.workers.lock().unwrap().drain(..) {
            let _ = handle.join();
        }
    }
}

fn worker_loop(shared: &Shared) {
    loop {
        let id = {
            let mut queue = shared.queue.lock().unwrap();
            loop {
                if queue.closed {
                    return;
                }
                if let Some(id) = queue.ids.pop_front() {
                    break id;
                }
                queue = shared.ready.wait(queue).unwrap();
            }
        };
        run_job(shared, &id);
        shared.tokens.lock().unwrap().remove(&id);
    }
}

struct JobObserver<'a> {
    shared: &'a Shared,
    id: &'a str,
    token: CancelToken,
    last_persisted: u64,
    error: Option<anyhow::Error>,
}

impl PaintObserver for JobObserver<'_> {
    fn on_progress(&mut self, done: u64, total: u64) {
        // persist about every 1% so a restart sees recent progress
        let persist = done == total || (done - self.last_persisted) * 100 >= total;
        if persist {
            self.last_persisted = done;
        }
        let res = self.shared.store.update(self.id, |r| {
            r.ops_done = done;
            r.progress = done as f64 / total as f64;
            (persist, ())
        });
        if let Err(e) = res {
            self.error.get_or_insert(e);
        }
    }

    fn on_snapshot(&mut self, snapshot: &Snapshot) {
        let res = painter_core::canvas::encode_png(&snapshot.image)
            .map_err(anyhow::Error::from)
            .and_then(|png| self.shared.store.put_blob(&png))
            .and_then(|blob| {
                self.shared.store.update(self.id, |r| {
                    r.snapshots.push(SnapshotRef {
                        index: snapshot.index,
                        ops_done: snapshot.ops_done,
                        t: snapshot.t,
                        blob,
                    });
                    (true, ())
                })
            });
        if let Err(e) = res {
            self.error.get_or_insert(e);
        }
    }

    fn is_cancelled(&self) -> bool {
        self.token.is_cancelled() || self.error.is_some()
    }
}

fn finish(shared: &Shared, id: &str, state: JobState, error: Option<String>, result: Option<JobResult>) {
    let res = shared.store.update(id, |r| {
        r.state = state;
        r.error = error;
        if let Some(result) = result {
            r.progress = 1.0;
            r.ops_done = r.ops.n_total;
            r.result = Some(result);
        }
        r.finished_ms = Some(now_ms());
        (true, ())
    });
    if let Err(e) = res {
        eprintln!("painter: cannot record the end of job {id}: {e:#}");
    }
}

fn run_job(shared: &Shared, id: &str) {
    let Some(record) = shared.store.get(id) else { return };
    let token = shared.tokens.lock().unwrap().get(id).cloned().unwrap_or_default();
    if token.is_cancelled() {
        return finish(shared, id, JobState::Cancelled, None, None);
    }
    let started = shared.store.update(id, |r| {
        r.state = JobState::Running;
        r.started_ms = Some(now_ms());
        (true, ())
    });
    if started.is_err() {
        return;
    }
    let prepared = record
        .spec
        .resolve(None)
        .map_err(anyhow::Error::from)
        .and_then(|comp| PreparedPaint::from_composition(&comp, &record.config));
    let prepared = match prepared {
        Ok(p) => p,
        Err(e) => return finish(shared, id, JobState::Failed, Some(format!("{e:#}")), None),
    };
    let mut observer = JobObserver { shared, id, token, last_persisted: 0, error: None };
    let outcome = prepared.run(&mut observer);
    if let Some(e) = observer.error {
        return finish(shared, id, JobState::Failed, Some(format!("job store error: {e:#}")), None);
    }
    match outcome {
        Ok(out) => match shared.store.put_blob(&out.png) {
            Ok(blob) => finish(shared, id, JobState::Done, None, Some(JobResult { blob, manifest: out.manifest })),
            Err(e) => finish(shared, id, JobState::Failed, Some(format!("{e:#}")), None),
        },
        Err(CoreError::Cancelled(_)) => finish(shared, id, JobState::Cancelled, None, None),
        Err(e) => finish(shared, id, JobState::Failed, Some(e.to_string()), None),
    }
}

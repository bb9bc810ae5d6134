//! Simulation jobs: an in-memory table backed by an append-only JSON-lines log.
//!
//! Every state change appends the full job as one line of `jobs.jsonl`.
//! Loading replays the log with the last line per id winning. Jobs that were
//! queued or running when the previous process stopped are marked failed.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;
use mats_core::simulator::{aggregate, RunOptions};
use mats_core::{run_replicates, MatsError, OperatingCharacteristics, Result};
use tokio::sync::Semaphore;

use crate::schema::{JobStatus, SimulationJob, SimulationRequest};

pub const JOB_LOG_FILE: &str = "jobs.jsonl";
pub const INTERRUPTED: &str = "interrupted by restart";

struct Entry {
    job: SimulationJob,
    counter: Arc<AtomicUsize>,
}

impl Entry {
    fn snapshot(&self) -> SimulationJob {
        let mut job = self.job.clone();
        if job.status == JobStatus::Running {
            job.completed = self.counter.load(Ordering::Relaxed).min(job.total);
            job.progress = job.completed as f64 / job.total as f64;
        }
        job
    }
}

pub struct JobStore {
    jobs: Mutex<IndexMap<String, Entry>>,
    log: Mutex<Option<File>>,
}

impl JobStore {
    /// A store that keeps nothing across restarts.
    pub fn in_memory() -> Self {
        Self {
            jobs: Mutex::new(IndexMap::new()),
            log: Mutex::new(None),
        }
    }

    /// Opens (or creates) `dir/jobs.jsonl` and replays it.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(JOB_LOG_FILE);
        let mut jobs = IndexMap::new();
        if path.exists() {
            for (k, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<SimulationJob>(&line) {
                    Ok(job) => {
                        jobs.insert(
                            job.id.clone(),
                            Entry {
                                job,
                                counter: Arc::new(AtomicUsize::new(0)),
                            },
                        );
                    }
                    Err(e) => log::warn!("{}:{}: skipping unreadable job line: {e}", path.display(), k + 1),
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        let store = Self {
            jobs: Mutex::new(jobs),
            log: Mutex::new(Some(log)),
        };
        let stale: Vec<String> = store
            .jobs
            .lock()
            .unwrap()
            .values()
            .filter(|e| !e.job.status.is_terminal())
            .map(|e| e.job.id.clone())
            .collect();
        for id in stale {
            store.finish(&id, Err(INTERRUPTED.into()))?;
        }
        Ok(store)
    }

    fn append(&self, job: &SimulationJob) -> Result<()> {
        let mut guard = self.log.lock().unwrap();
        if let Some(f) = guard.as_mut() {
            let mut line = serde_json::to_vec(job)?;
            line.push(b'\n');
            f.write_all(&line)?;
            f.sync_data()?;
        }
        Ok(())
    }

    /// Registers a queued job and returns its id.
    pub fn insert(&self, request: SimulationRequest) -> Result<String> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let job = SimulationJob {
            id: id.clone(),
            status: JobStatus::Queued,
            progress: 0.0,
            completed: 0,
            total: request.n_replicates,
            result: None,
            error: None,
            request,
        };
        self.append(&job)?;
        self.jobs.lock().unwrap().insert(
            id.clone(),
            Entry {
                job,
                counter: Arc::new(AtomicUsize::new(0)),
            },
        );
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Option<SimulationJob> {
        self.jobs.lock().unwrap().get(id).map(Entry::snapshot)
    }

    /// All jobs in submission order.
    pub fn list(&self) -> Vec<SimulationJob> {
        self.jobs.lock().unwrap().values().map(Entry::snapshot).collect()
    }

    /// Moves a queued job to running and hands out its request and progress counter.
    pub fn start(&self, id: &str) -> Result<(SimulationRequest, Arc<AtomicUsize>)> {
        let snapshot = {
            let mut jobs = self.jobs.lock().unwrap();
            let e = jobs
                .get_mut(id)
                .ok_or_else(|| MatsError::Stage(format!("unknown job {id}")))?;
            if e.job.status != JobStatus::Queued {
                return Err(MatsError::Stage(format!("job {id} is not queued")));
            }
            e.job.status = JobStatus::Running;
            (e.job.clone(), e.counter.clone())
        };
        if let Err(e) = self.append(&snapshot.0) {
            log::error!("job {id}: could not log start: {e}");
        }
        Ok((snapshot.0.request, snapshot.1))
    }

    /// Records the outcome of a queued or running job.
    pub fn finish(&self, id: &str, outcome: std::result::Result<OperatingCharacteristics, String>) -> Result<()> {
        let job = {
            let mut jobs = self.jobs.lock().unwrap();
            let e = jobs
                .get_mut(id)
                .ok_or_else(|| MatsError::Stage(format!("unknown job {id}")))?;
            if e.job.status.is_terminal() {
                return Err(MatsError::Stage(format!("job {id} already finished")));
            }
            match outcome {
                Ok(oc) => {
                    e.job.status = JobStatus::Done;
                    e.job.completed = e.job.total;
                    e.job.progress = 1.0;
                    e.job.result = Some(oc);
                }
                Err(msg) => {
                    e.job.status = JobStatus::Failed;
                    e.job.completed = e.counter.load(Ordering::Relaxed).min(e.job.total);
                    e.job.progress = e.job.completed as f64 / e.job.total as f64;
                    e.job.error = Some(msg);
                }
            }
            e.job.clone()
        };
        self.append(&job)
    }
}

/// Resolves the scenario and runs all replicates of one request.
pub fn execute(request: &SimulationRequest, progress: Arc<AtomicUsize>) -> Result<OperatingCharacteristics> {
    let scenario = request.scenario.resolve(&request.config)?;
    let records = run_replicates(
        &scenario,
        &request.config,
        &request.settings,
        request.n_replicates,
        request.seed,
        &RunOptions {
            threads: None,
            progress: Some(progress),
        },
    )?;
    aggregate(&scenario, &request.config, &request.settings, &records, request.seed)
}

/// Admits at most `max_parallel` jobs at a time onto the blocking pool.
#[derive(Clone)]
pub struct JobQueue {
    pub store: Arc<JobStore>,
    permits: Arc<Semaphore>,
}

impl JobQueue {
    pub fn new(store: Arc<JobStore>, max_parallel: usize) -> Self {
        Self {
            store,
            permits: Arc::new(Semaphore::new(max_parallel.max(1))),
        }
    }

    /// Stores the request as queued and schedules it.
    pub fn submit(&self, request: SimulationRequest) -> Result<String> {
        let id = self.store.insert(request)?;
        let queue = self.clone();
        let job_id = id.clone();
        tokio::spawn(async move { queue.run(job_id).await });
        Ok(id)
    }

    async fn run(self, id: String) {
        let Ok(_permit) = self.permits.clone().acquire_owned().await else {
            return;
        };
        let (request, counter) = match self.store.start(&id) {
            Ok(v) => v,
            Err(e) => {
                log::error!("job {id}: {e}");
                return;
            }
        };
        log::info!("job {id}: running {} replicates", request.n_replicates);
        let outcome = tokio::task::spawn_blocking(move || execute(&request, counter))
            .await
            .map_err(|e| format!("worker panicked: {e}"))
            .and_then(|r| r.map_err(|e| e.to_string()));
        if let Err(msg) = &outcome {
            log::warn!("job {id} failed: {msg}");
        }
        if let Err(e) = self.store.finish(&id, outcome) {
            log::error!("job {id}: could not record outcome: {e}");
        }
    }
}

//! On-disk job store: `jobs/<id>/job.json` per job, PNGs under `blobs/<sha256>.png`.
//!
//! Every mutation goes through [`JobStore::update`], which holds one lock while it
//! changes the in-memory record and rewrites its file, so there is a single writer.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{bail, Context};
use sha2::{Digest, Sha256};

use super::{JobRecord, JobState};

pub struct JobStore {
    root: PathBuf,
    records: Mutex<HashMap<String, JobRecord>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", tmp.display()))?;
    Ok(())
}

impl JobStore {
    /// Open or create a store, loading every readable record.
    pub fn open(root: impl Into<PathBuf>) -> anyhow::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("jobs")).with_context(|| format!("cannot create {}", root.display()))?;
        fs::create_dir_all(root.join("blobs"))?;
        let mut records = HashMap::new();
        for entry in fs::read_dir(root.join("jobs"))? {
            let path = entry?.path().join("job.json");
            let Ok(text) = fs::read_to_string(&path) else { continue };
            let record: JobRecord =
                serde_json::from_str(&text).with_context(|| format!("corrupt job record {}", path.display()))?;
            records.insert(record.id.clone(), record);
        }
        Ok(JobStore { root, records: Mutex::new(records) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn persist(&self, record: &JobRecord) -> anyhow::Result<()> {
        let dir = self.root.join("jobs").join(&record.id);
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join("job.json"), serde_json::to_string_pretty(record)?.as_bytes())
    }

    pub fn insert(&self, record: JobRecord) -> anyhow::Result<()> {
        let mut records = self.records.lock().unwrap();
        if records.contains_key(&record.id) {
            bail!("job {} already exists", record.id);
        }
        self.persist(&record)?;
        records.insert(record.id.clone(), record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.records.lock().unwrap().get(id).cloned()
    }

    /// All records, oldest first.
    pub fn list(&self) -> Vec<JobRecord> {
        let mut all: Vec<JobRecord> = self.records.lock().unwrap().values().cloned().collect();
        all.sort_by(|a, b| (a.created_ms, &a.id).cmp(&(b.created_ms, &b.id)));
        all
    }

    /// Apply `f` to a record. Writes through to disk when `f` returns `true`.
    /// Moves that go back from a terminal state or from running to queued are refused.
    pub fn update<R>(&self, id: &str, f: impl FnOnce(&mut JobRecord) -> (bool, R)) -> anyhow::Result<R> {
        let mut records = self.records.lock().unwrap();
        let record = records.get_mut(id).with_context(|| format!("unknown job {id}"))?;
        let before = record.state;
        let mut next = record.clone();
        let (persist, out) = f(&mut next);
        if !before.can_become(next.state) {
            bail!("job {id}: illegal transition {before:?} -> {:?}", next.state);
        }
        if next.progress < record.progress {
            bail!("job {id}: progress went backwards");
        }
        if persist || next.state != before {
            self.persist(&next)?;
        }
        *record = next;
        Ok(out)
    }

    /// Store `bytes` under their sha256 and return the digest.
    pub fn put_blob(&self, bytes: &[u8]) -> anyhow::Result<String> {
        let digest = hex::encode(Sha256::digest(bytes));
        let path = self.blob_path(&digest);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(digest)
    }

    pub fn blob(&self, digest: &str) -> anyhow::Result<Vec<u8>> {
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            bail!("bad blob digest {digest}");
        }
        let path = self.blob_path(digest);
        fs::read(&path).with_context(|| format!("cannot read {}", path.display()))
    }

    fn blob_path(&self, digest: &str) -> PathBuf {
        self.root.join("blobs").join(format!("{digest}.png"))
    }
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }

    /// Staying put is always allowed.
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        self == next
            || matches!((self, next), (Queued, Running) | (Queued, Cancelled) | (Running, Done | Failed | Cancelled))
    }
}

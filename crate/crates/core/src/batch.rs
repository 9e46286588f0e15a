//! Bounded-parallel batch execution with a resumable checkpoint.
//!
//! Items are processed in chunks of `checkpoint_every`; each chunk fans out
//! over at most `parallelism` worker threads and results are assembled in
//! input order. Completed results are appended to the checkpoint file after
//! every chunk, so a run that aborts on a backend error can be restarted
//! without repeating finished work.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_CHECKPOINT_EVERY: usize = 25;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub parallelism: usize,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
    /// Identifies the configuration a checkpoint belongs to; a checkpoint with
    /// a different fingerprint is discarded.
    pub fingerprint: String,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            parallelism: DEFAULT_PARALLELISM,
            checkpoint: None,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            fingerprint: String::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum BatchError<E: std::error::Error + 'static> {
    #[error("item {failed_id} failed after {} completed: {source}", completed.len())]
    Aborted {
        failed_id: String,
        completed: Vec<String>,
        checkpoint: Option<PathBuf>,
        #[source]
        source: E,
    },
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Line<O> {
    Header { fingerprint: String },
    Done { id: String, output: O },
}

fn load_checkpoint<O: DeserializeOwned>(path: &Path, fingerprint: &str) -> std::io::Result<HashMap<String, O>> {
    let mut done = HashMap::new();
    if !path.exists() {
        return Ok(done);
    }
    let mut lines = BufReader::new(File::open(path)?).lines();
    match lines.next().transpose()?.map(|l| serde_json::from_str::<Line<O>>(&l)) {
        Some(Ok(Line::Header { fingerprint: f })) if f == fingerprint => {}
        _ => return Ok(done),
    }
    for line in lines {
        if let Ok(Line::Done { id, output }) = serde_json::from_str::<Line<O>>(&line?) {
            done.insert(id, output);
        }
    }
    Ok(done)
}

struct Writer {
    file: File,
}

impl Writer {
    fn open(path: &Path, fingerprint: &str, fresh: bool) -> std::io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = if fresh {
            File::create(path)?
        } else {
            OpenOptions::new().append(true).open(path)?
        };
        if fresh {
            let header = serde_json::to_string(&Line::<()>::Header { fingerprint: fingerprint.to_string() })?;
            writeln!(file, "{header}")?;
        }
        Ok(Writer { file })
    }

    fn append<O: Serialize>(&mut self, done: &[(String, &O)]) -> std::io::Result<()> {
        let mut buf = String::new();
        for (id, output) in done {
            buf.push_str(&serde_json::to_string(&Line::Done { id: id.clone(), output: *output })?);
            buf.push('\n');
        }
        self.file.write_all(buf.as_bytes())?;
        self.file.flush()
    }
}

/// Applies `work` to every item, preserving input order in the output. On the
/// first failure the batch stops after the current chunk and reports which
/// ids completed; the checkpoint (if configured) holds their results. On
/// success the checkpoint file is removed.
pub fn run_batch<I, O, E, F>(
    items: &[I],
    id_of: impl Fn(&I) -> String,
    options: &BatchOptions,
    work: F,
) -> Result<Vec<O>, BatchError<E>>
where
    I: Sync,
    O: Serialize + DeserializeOwned + Send + Clone,
    E: std::error::Error + Send + 'static,
    F: Fn(&I) -> Result<O, E> + Sync,
{
    let ck_err = |path: &Path, source| BatchError::Checkpoint { path: path.display().to_string(), source };
    let mut resumed: HashMap<String, O> = match &options.checkpoint {
        Some(path) => load_checkpoint(path, &options.fingerprint).map_err(|e| ck_err(path, e))?,
        None => HashMap::new(),
    };
    let mut writer = match &options.checkpoint {
        Some(path) => Some(Writer::open(path, &options.fingerprint, resumed.is_empty()).map_err(|e| ck_err(path, e))?),
        None => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallelism.max(1))
        .build()
        .expect("thread pool");

    let ids: Vec<String> = items.iter().map(&id_of).collect();
    let mut outputs: Vec<Option<O>> = ids.iter().map(|id| resumed.remove(id)).collect();
    let pending: Vec<usize> = (0..items.len()).filter(|&i| outputs[i].is_none()).collect();
    let mut completed: Vec<String> =
        (0..items.len()).filter(|&i| outputs[i].is_some()).map(|i| ids[i].clone()).collect();

    for chunk in pending.chunks(options.checkpoint_every.max(1)) {
        let results: Vec<(usize, Result<O, E>)> = pool.install(|| {
            use rayon::prelude::*;
            chunk.par_iter().map(|&i| (i, work(&items[i]))).collect()
        });
        let mut failure = None;
        let mut fresh = Vec::new();
        for (i, result) in results {
            match result {
                Ok(output) => {
                    completed.push(ids[i].clone());
                    fresh.push(i);
                    outputs[i] = Some(output);
                }
                Err(e) if failure.is_none() => failure = Some((i, e)),
                Err(_) => {}
            }
        }
        if let (Some(w), Some(path)) = (writer.as_mut(), &options.checkpoint) {
            let rows: Vec<(String, &O)> =
                fresh.iter().map(|&i| (ids[i].clone(), outputs[i].as_ref().expect("just set"))).collect();
            w.append(&rows).map_err(|e| ck_err(path, e))?;
        }
        if let Some((i, source)) = failure {
            return Err(BatchError::Aborted {
                failed_id: ids[i].clone(),
                completed,
                checkpoint: options.checkpoint.clone(),
                source,
            });
        }
    }
    drop(writer);
    if let Some(path) = &options.checkpoint {
        std::fs::remove_file(path).map_err(|e| ck_err(path, e))?;
    }
    Ok(outputs.into_iter().map(|o| o.expect("every item completed")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[derive(Debug, Error)]
    #[error("boom at {0}")]
    struct Boom(usize);

    #[test]
    fn preserves_order() {
        let items: Vec<usize> = (0..103).collect();
        let out = run_batch(&items, |i| i.to_string(), &BatchOptions::default(), |&i| Ok::<_, Boom>(i * 2)).unwrap();
        assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
    }

    #[test]
    fn empty_batch() {
        let out = run_batch(&[] as &[usize], |i| i.to_string(), &BatchOptions::default(), |&i| Ok::<_, Boom>(i)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn resumes_from_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        let options = BatchOptions { checkpoint: Some(path.clone()), fingerprint: "f1".into(), ..Default::default() };
        let items: Vec<usize> = (0..60).collect();
        let calls = AtomicUsize::new(0);
        let err = run_batch(&items, |i| i.to_string(), &options, |&i| {
            calls.fetch_add(1, Ordering::SeqCst);
            if i == 40 {
                Err(Boom(i))
            } else {
                Ok(i + 1)
            }
        })
        .unwrap_err();
        match err {
            BatchError::Aborted { failed_id, completed, .. } => {
                assert_eq!(failed_id, "40");
                // The first two chunks (0..50 minus the failure) finished.
                assert_eq!(completed.len(), 49);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(path.exists());

        calls.store(0, Ordering::SeqCst);
        let out = run_batch(&items, |i| i.to_string(), &options, |&i| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok::<_, Boom>(i + 1)
        })
        .unwrap();
        assert_eq!(out, (1..61).collect::<Vec<_>>());
        assert_eq!(calls.load(Ordering::SeqCst), 11);
        assert!(!path.exists());
    }

    #[test]
    fn stale_fingerprint_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.jsonl");
        std::fs::write(&path, "{\"fingerprint\":\"old\"}\n{\"id\":\"0\",\"output\":999}\n").unwrap();
        let options = BatchOptions { checkpoint: Some(path), fingerprint: "new".into(), ..Default::default() };
        let out = run_batch(&[0usize], |i| i.to_string(), &options, |&i| Ok::<_, Boom>(i)).unwrap();
        assert_eq!(out, vec![0]);
    }
}

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::{classify_post, write_traces, ClassificationTrace, ClassifyError, ClassifyOptions, GenerationBackend, PromptSpec, Stage};
use crate::corpus::Corpus;

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub parallelism: usize,
    /// Append-only trace cache; posts already in it are not sent again.
    pub cache_path: Option<PathBuf>,
    pub classify: ClassifyOptions,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            parallelism: 4,
            cache_path: None,
            classify: ClassifyOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub post_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub message: String,
}

impl From<&ClassifyError> for FailureRecord {
    fn from(e: &ClassifyError) -> Self {
        FailureRecord {
            post_id: e.post_id().to_string(),
            stage: match e {
                ClassifyError::Backend { stage, .. } => Some(*stage),
                ClassifyError::Prompt { .. } => None,
            },
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BatchResult {
    /// Successful traces in corpus order.
    pub traces: Vec<ClassificationTrace>,
    /// Posts that failed after all retries, in corpus order.
    pub failures: Vec<FailureRecord>,
    /// How many traces were taken from the cache.
    pub cached: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum BatchError {
    #[error("parallelism must be at least 1")]
    Parallelism,
    #[error("trace cache {path}: {source}")]
    Cache {
        path: String,
        #[source]
        source: io::Error,
    },
}

fn read_cache(path: &Path, backend: &str) -> io::Result<HashMap<String, ClassificationTrace>> {
    let mut out = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
        Err(e) => return Err(e),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ClassificationTrace>(&line) {
            Ok(t) if t.backend == backend => {
                out.insert(t.post_id.clone(), t);
            }
            Ok(_) => {}
            // An interrupted run can leave a torn last line.
            Err(e) => log::warn!("{}:{}: skipping unreadable cache entry: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

/// Classifies every post of `corpus`, reusing cached traces. New traces are
/// appended to the cache as they complete; afterwards the cache is rewritten
/// in corpus order.
pub fn batch_classify(
    corpus: &Corpus,
    spec: &PromptSpec,
    backend: &dyn GenerationBackend,
    opts: &BatchOptions,
) -> Result<BatchResult, BatchError> {
    if opts.parallelism == 0 {
        return Err(BatchError::Parallelism);
    }
    let cache_err = |path: &Path| {
        let path = path.display().to_string();
        move |source| BatchError::Cache { path, source }
    };
    let mut done: HashMap<String, ClassificationTrace> = match &opts.cache_path {
        Some(p) => read_cache(p, backend.name()).map_err(cache_err(p))?,
        None => HashMap::new(),
    };
    done.retain(|id, _| corpus.contains(id));
    let cached = done.len();

    let todo: Vec<usize> = (0..corpus.len()).filter(|&i| !done.contains_key(&corpus.posts()[i].id)).collect();
    let mut writer = match &opts.cache_path {
        Some(p) if !todo.is_empty() => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(cache_err(p))?;
            }
            let f = OpenOptions::new().create(true).append(true).open(p).map_err(cache_err(p))?;
            Some(BufWriter::new(f))
        }
        _ => None,
    };

    let mut failures: HashMap<String, FailureRecord> = HashMap::new();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Result<ClassificationTrace, ClassifyError>>();
    let workers = opts.parallelism.min(todo.len().max(1));
    let mut write_result: io::Result<()> = Ok(());
    std::thread::scope(|s| {
        for _ in 0..workers {
            let tx = tx.clone();
            let (todo, next) = (&todo, &next);
            s.spawn(move || loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(&i) = todo.get(k) else { break };
                let r = classify_post(&corpus.posts()[i], spec, backend, &opts.classify);
                if tx.send(r).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for r in rx {
            match r {
                Ok(t) => {
                    if let (Some(w), Ok(())) = (writer.as_mut(), &write_result) {
                        write_result = serde_json::to_writer(&mut *w, &t)
                            .map_err(io::Error::from)
                            .and_then(|_| w.write_all(b"\n"))
                            .and_then(|_| w.flush());
                    }
                    done.insert(t.post_id.clone(), t);
                }
                Err(e) => {
                    log::error!("{e}");
                    failures.insert(e.post_id().to_string(), FailureRecord::from(&e));
                }
            }
        }
    });
    drop(writer);

    let mut result = BatchResult {
        cached,
        ..BatchResult::default()
    };
    for post in corpus {
        if let Some(t) = done.remove(&post.id) {
            result.traces.push(t);
        } else if let Some(f) = failures.remove(&post.id) {
            result.failures.push(f);
        }
    }
    if let Some(p) = &opts.cache_path {
        write_result.map_err(cache_err(p))?;
        if !todo.is_empty() {
            compact(p, &result.traces).map_err(cache_err(p))?;
        }
    }
    Ok(result)
}

fn compact(path: &Path, traces: &[ClassificationTrace]) -> io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    let f = File::create(&tmp)?;
    write_traces(traces, BufWriter::new(f))?;
    fs::rename(&tmp, path)
}

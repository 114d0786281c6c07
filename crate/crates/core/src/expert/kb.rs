//! Shared knowledge base of expert decisions keyed by template text.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ExpertFeedback;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("knowledge base {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("knowledge base {path} line {line}: {source}")]
    Corrupt {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One line of the persisted log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum KbRecord {
    Put {
        template: String,
        feedback: ExpertFeedback,
        timestamp: i64,
    },
    Clear {
        timestamp: i64,
    },
}

#[derive(Debug, Default)]
struct Inner {
    entries: HashMap<String, ExpertFeedback>,
    log: Option<(PathBuf, BufWriter<File>)>,
}

/// Cheaply cloneable handle; all clones share one store. The latest entry
/// for a template wins.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    inner: Arc<RwLock<Inner>>,
}

impl KnowledgeBase {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) an append-only log and replays it. A torn final
    /// line, as left by a crash mid-write, is ignored.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| KbError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut entries = HashMap::new();
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&path).map_err(io_err)?)
                .lines()
                .collect::<Result<_, _>>()
                .map_err(io_err)?;
            let last = lines.len();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<KbRecord>(line) {
                    Ok(KbRecord::Put { template, feedback, .. }) => {
                        entries.insert(template, feedback);
                    }
                    Ok(KbRecord::Clear { .. }) => entries.clear(),
                    Err(_) if i + 1 == last => {
                        tracing::warn!(path = %path.display(), "ignoring torn final knowledge-base line");
                    }
                    Err(source) => {
                        return Err(KbError::Corrupt {
                            path: path.display().to_string(),
                            line: i + 1,
                            source,
                        })
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        Ok(Self {
            inner: Arc::new(RwLock::new(Inner {
                entries,
                log: Some((path, BufWriter::new(file))),
            })),
        })
    }

    pub fn get(&self, template: &str) -> Option<ExpertFeedback> {
        self.read().entries.get(template).cloned()
    }

    pub fn put(&self, template: &str, feedback: ExpertFeedback, timestamp: i64) -> Result<(), KbError> {
        let mut inner = self.write();
        inner.entries.insert(template.to_string(), feedback.clone());
        append(
            &mut inner,
            &KbRecord::Put {
                template: template.to_string(),
                feedback,
                timestamp,
            },
        )
    }

    /// Drops every entry.
    pub fn clear(&self, timestamp: i64) -> Result<(), KbError> {
        let mut inner = self.write();
        inner.entries.clear();
        append(&mut inner, &KbRecord::Clear { timestamp })
    }

    pub fn len(&self) -> usize {
        self.read().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries sorted by template text.
    pub fn snapshot(&self) -> Vec<(String, ExpertFeedback)> {
        let mut v: Vec<_> = self
            .read()
            .entries
            .iter()
            .map(|(k, f)| (k.clone(), f.clone()))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }
}

fn append(inner: &mut Inner, record: &KbRecord) -> Result<(), KbError> {
    let Some((path, w)) = inner.log.as_mut() else {
        return Ok(());
    };
    let io_err = |source| KbError::Io {
        path: path.display().to_string(),
        source,
    };
    let line = serde_json::to_string(record).expect("records serialize");
    writeln!(w, "{line}").map_err(io_err)?;
    w.flush().map_err(io_err)
}

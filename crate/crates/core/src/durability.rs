//! Per-step checkpoints and resume after a crash.
//!
//! After every node's post completes, the run emits a [`Checkpoint`] holding
//! the canonical store, the node's hierarchical id and the action it
//! returned. Resuming restores the store and continues from the successor of
//! that node, so a crash costs at most the node that was in flight.
//!
//! On disk, checkpoints are JSON lines. Each line is a canonical object with
//! the keys `action`, `fingerprint`, `node`, `run`, `step` and `store`, where
//! `store` is the canonical store document embedded as a string.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::flow::{Checkpointer, Engine, Flow, FlowError, FlowOutcome, RunError, Runner};
use crate::ndg;
use crate::node::Action;
use crate::store::{value_from_json_bytes, value_to_canonical_bytes, SharedStore};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub run_id: String,
    pub step_index: u64,
    pub completed_node_id: String,
    pub returned_action: Action,
    pub store_bytes: Vec<u8>,
    pub flow_fingerprint: String,
}

#[derive(Debug, Error)]
pub enum CheckpointParseError {
    #[error("checkpoint line is not valid JSON: {0}")]
    Json(String),
    #[error("checkpoint field `{0}` is missing or has the wrong type")]
    Field(&'static str),
    #[error("no well-formed checkpoint found")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Checkpoint {
    pub fn store(&self) -> Result<SharedStore, crate::store::CanonicalError> {
        SharedStore::from_canonical_bytes(&self.store_bytes)
    }

    /// One canonical JSON line, without the trailing newline.
    pub fn to_line(&self) -> String {
        let doc = Value::map([
            ("action", Value::from(self.returned_action.as_str())),
            ("fingerprint", Value::from(self.flow_fingerprint.as_str())),
            ("node", Value::from(self.completed_node_id.as_str())),
            ("run", Value::from(self.run_id.as_str())),
            ("step", Value::Int(self.step_index as i64)),
            ("store", Value::from(String::from_utf8_lossy(&self.store_bytes).into_owned())),
        ]);
        String::from_utf8(value_to_canonical_bytes(&doc, "checkpoint").expect("checkpoint fields are plain data"))
            .expect("JSON output is UTF-8")
    }

    pub fn from_line(line: &str) -> Result<Self, CheckpointParseError> {
        let doc = value_from_json_bytes(line.as_bytes()).map_err(|e| CheckpointParseError::Json(e.to_string()))?;
        let text = |key: &'static str| {
            doc.get(key)
                .and_then(Value::as_str)
                .map(str::to_owned)
                .ok_or(CheckpointParseError::Field(key))
        };
        let step = doc
            .get("step")
            .and_then(Value::as_i64)
            .filter(|s| *s >= 0)
            .ok_or(CheckpointParseError::Field("step"))?;
        let action = text("action")?;
        if action.is_empty() {
            return Err(CheckpointParseError::Field("action"));
        }
        Ok(Self {
            run_id: text("run")?,
            step_index: step as u64,
            completed_node_id: text("node")?,
            returned_action: Action::from(action),
            store_bytes: text("store")?.into_bytes(),
            flow_fingerprint: text("fingerprint")?,
        })
    }
}

#[derive(Debug, Error)]
pub enum SinkError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Other(String),
}

/// Destination for checkpoints. A write error stops the run.
pub trait CheckpointSink: Send {
    fn write(&mut self, checkpoint: &Checkpoint) -> Result<(), SinkError>;
}

/// Keeps checkpoints in memory.
#[derive(Debug, Default, Clone)]
pub struct MemorySink {
    pub checkpoints: Vec<Checkpoint>,
}

impl MemorySink {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }
}

impl CheckpointSink for MemorySink {
    fn write(&mut self, checkpoint: &Checkpoint) -> Result<(), SinkError> {
        self.checkpoints.push(checkpoint.clone());
        Ok(())
    }
}

/// Appends checkpoints to a file, one line each, syncing after every write.
#[derive(Debug)]
pub struct FileSink {
    path: PathBuf,
    file: File,
}

impl FileSink {
    pub fn append(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl CheckpointSink for FileSink {
    fn write(&mut self, checkpoint: &Checkpoint) -> Result<(), SinkError> {
        let mut line = checkpoint.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Returns the last well-formed checkpoint line of `text`. Torn or garbled
/// trailing lines are skipped.
pub fn last_checkpoint(text: &str) -> Result<Checkpoint, CheckpointParseError> {
    text.lines()
        .rev()
        .filter(|l| !l.trim().is_empty())
        .find_map(|l| Checkpoint::from_line(l).ok())
        .ok_or(CheckpointParseError::Empty)
}

pub fn read_last_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointParseError> {
    last_checkpoint(&std::fs::read_to_string(path)?)
}

fn generate_run_id() -> String {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let nanos = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or_default();
    format!(
        "run-{nanos:x}-{}-{}",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    )
}

impl Runner {
    /// Like [`Runner::run`], writing a checkpoint to `sink` after each node.
    pub fn run_checkpointed(&self, flow: &Flow, store: SharedStore, sink: &mut dyn CheckpointSink) -> Result<FlowOutcome, RunError> {
        let checkpoints = Checkpointer {
            sink,
            run_id: self.run_id.clone().unwrap_or_else(generate_run_id),
            fingerprint: ndg::fingerprint(flow),
            next_step: 0,
        };
        futures::executor::block_on(Engine::new(self, Some(checkpoints)).start(flow, store))
    }

    /// Continues the run recorded in `checkpoint`, emitting further
    /// checkpoints to `sink` with step indices following the recorded one.
    pub fn resume(&self, flow: &Flow, checkpoint: &Checkpoint, sink: &mut dyn CheckpointSink) -> Result<FlowOutcome, RunError> {
        let early = |error| RunError {
            error,
            trace: Vec::new(),
            store: SharedStore::new(),
        };
        let fingerprint = ndg::fingerprint(flow);
        if fingerprint != checkpoint.flow_fingerprint {
            return Err(early(FlowError::FingerprintMismatch {
                expected: checkpoint.flow_fingerprint.clone(),
                found: fingerprint,
            }));
        }
        let store = checkpoint.store().map_err(|e| early(FlowError::Restore(e)))?;
        let path: Vec<String> = checkpoint.completed_node_id.split('/').map(str::to_owned).collect();
        let checkpoints = Checkpointer {
            sink,
            run_id: checkpoint.run_id.clone(),
            fingerprint,
            next_step: checkpoint.step_index + 1,
        };
        futures::executor::block_on(Engine::new(self, Some(checkpoints)).resume(
            flow,
            &path,
            checkpoint.returned_action.clone(),
            store,
        ))
    }
}

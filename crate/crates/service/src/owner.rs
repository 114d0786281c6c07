//! The stream owner: the only code that touches the engine.

use std::collections::VecDeque;
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;

use tokio::sync::{mpsc, oneshot};
use trielog_core::engine::{Engine, EngineStats, TemplateInfo};
use trielog_core::expert::{ExpertError, ExpertFeedback, ExpertQuery};
use trielog_core::preprocess::RawLine;
use trielog_core::trie::ClusterId;
use trielog_core::windows::Window;

use crate::api::{FeedbackResponse, LineIn, VerdictEvent};

pub(crate) type FeedbackReply = oneshot::Sender<Result<FeedbackResponse, ExpertError>>;

pub(crate) enum Command {
    Ingest(Vec<LineIn>),
    Feedback {
        query_id: u64,
        feedback: ExpertFeedback,
        reply: FeedbackReply,
    },
}

/// Engine state as of the last drained mailbox batch.
#[derive(Debug, Clone, Default)]
pub struct Snapshot {
    pub pending: Vec<ExpertQuery>,
    pub templates: Vec<TemplateInfo>,
    pub stats: EngineStats,
}

impl Snapshot {
    fn of(engine: &Engine) -> Self {
        Self {
            pending: engine.experts().pending().into_iter().cloned().collect(),
            templates: engine.templates(),
            stats: engine.stats(),
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct Shared {
    pub snapshot: RwLock<Arc<Snapshot>>,
    pub verdicts: RwLock<VecDeque<VerdictEvent>>,
}

impl Shared {
    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.snapshot.read().unwrap_or_else(|e| e.into_inner()))
    }
}

struct Closed {
    window: Window,
    lines: usize,
}

/// Owns the engine and consumes the mailbox. Run it with [`Owner::spawn`]
/// or [`Owner::run`]; it stops once every router clone is dropped.
pub struct Owner {
    engine: Engine,
    rx: mpsc::Receiver<Command>,
    shared: Arc<Shared>,
    closed: VecDeque<Closed>,
    capacity: usize,
    next_line: u64,
}

impl Owner {
    pub(crate) fn new(engine: Engine, rx: mpsc::Receiver<Command>, shared: Arc<Shared>, capacity: usize) -> Self {
        *shared.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(Snapshot::of(&engine));
        Self {
            next_line: engine.stats().processed + engine.stats().malformed,
            engine,
            rx,
            shared,
            closed: VecDeque::new(),
            capacity,
        }
    }

    pub fn spawn(self) -> JoinHandle<Engine> {
        std::thread::Builder::new()
            .name("stream-owner".into())
            .spawn(move || self.run())
            .expect("spawn stream owner")
    }

    /// Blocks until the mailbox closes, then returns the engine.
    pub fn run(mut self) -> Engine {
        while let Some(cmd) = self.rx.blocking_recv() {
            let mut replies = Vec::new();
            self.handle(cmd, &mut replies);
            while let Ok(cmd) = self.rx.try_recv() {
                self.handle(cmd, &mut replies);
            }
            self.publish();
            // Answer only once the snapshot shows the effect.
            for (tx, res) in replies {
                let _ = tx.send(res);
            }
        }
        self.engine
    }

    fn handle(&mut self, cmd: Command, replies: &mut Vec<(FeedbackReply, Result<FeedbackResponse, ExpertError>)>) {
        match cmd {
            Command::Ingest(lines) => {
                for line in lines {
                    let mut raw = RawLine::new(self.next_line, line.text);
                    raw.timestamp = line.timestamp;
                    self.next_line += 1;
                    let closed = self.engine.ingest(raw, line.meta);
                    self.push_closed(closed);
                }
            }
            Command::Feedback { query_id, feedback, reply } => {
                let res = self.engine.apply_feedback(query_id, feedback).map(|v| {
                    self.revise(v.cluster_id, v.p);
                    FeedbackResponse::new(query_id, v)
                });
                replies.push((reply, res));
            }
        }
    }

    fn push_closed(&mut self, windows: Vec<Window>) {
        if windows.is_empty() {
            return;
        }
        let mut buf = self.shared.verdicts.write().unwrap_or_else(|e| e.into_inner());
        for mut w in windows {
            let lines = w.member_line_nos.len();
            w.member_line_nos = Vec::new();
            w.member_clusters = Vec::new();
            buf.push_back(VerdictEvent::from_window(&w, lines, false));
            self.closed.push_back(Closed { window: w, lines });
            if self.closed.len() > self.capacity {
                self.closed.pop_front();
                buf.pop_front();
            }
        }
    }

    /// Re-scores buffered windows holding the cluster. Duplicate feedback
    /// carries the same p, so this is a no-op the second time.
    fn revise(&mut self, cluster_id: ClusterId, p: f64) {
        let mut buf = self.shared.verdicts.write().unwrap_or_else(|e| e.into_inner());
        for (i, c) in self.closed.iter_mut().enumerate() {
            let before = (c.window.predicted, c.window.max_p);
            if self.engine.revise_window(&mut c.window, cluster_id, p) {
                let changed = before != (c.window.predicted, c.window.max_p) || buf[i].revised;
                buf[i] = VerdictEvent::from_window(&c.window, c.lines, changed);
            }
        }
    }

    fn publish(&self) {
        let snap = Arc::new(Snapshot::of(&self.engine));
        *self.shared.snapshot.write().unwrap_or_else(|e| e.into_inner()) = snap;
    }
}

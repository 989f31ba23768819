//! Bounded, cursor-resumable event history with live fan-out.

use std::collections::VecDeque;
use std::sync::Mutex;

use semem_core::engine::EngineEvent;
use serde::Serialize;
use tokio::sync::broadcast;

pub const DEFAULT_HISTORY: usize = 10_000;
const FANOUT_BUFFER: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub seq: u64,
    pub kind: &'static str,
    pub payload: EngineEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CursorError {
    /// Events from the cursor on have been dropped from history.
    Gone { oldest: u64 },
    /// The cursor lies beyond the newest event.
    Ahead { next: u64 },
}

struct Inner {
    buf: VecDeque<Event>,
    next_seq: u64,
}

pub struct EventLog {
    capacity: usize,
    inner: Mutex<Inner>,
    live: broadcast::Sender<Event>,
}

impl EventLog {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            inner: Mutex::new(Inner {
                buf: VecDeque::new(),
                next_seq: 0,
            }),
            live: broadcast::channel(FANOUT_BUFFER).0,
        }
    }

    /// Assigns the next sequence numbers and publishes. Sequence numbers are
    /// gapless from 0.
    pub fn append(&self, events: impl IntoIterator<Item = EngineEvent>) {
        let mut inner = self.inner.lock().expect("event log poisoned");
        for payload in events {
            let ev = Event {
                seq: inner.next_seq,
                kind: payload.kind(),
                payload,
            };
            inner.next_seq += 1;
            if inner.buf.len() == self.capacity {
                inner.buf.pop_front();
            }
            inner.buf.push_back(ev.clone());
            // no receivers is fine
            let _ = self.live.send(ev);
        }
    }

    pub fn next_seq(&self) -> u64 {
        self.inner.lock().expect("event log poisoned").next_seq
    }

    /// History from `from` on, plus a receiver for everything after it.
    /// Both are taken under one lock so nothing falls between them.
    pub fn subscribe(&self, from: u64) -> Result<(Vec<Event>, broadcast::Receiver<Event>), CursorError> {
        let inner = self.inner.lock().expect("event log poisoned");
        let oldest = inner.buf.front().map_or(inner.next_seq, |e| e.seq);
        if from > inner.next_seq {
            return Err(CursorError::Ahead { next: inner.next_seq });
        }
        if from < oldest {
            return Err(CursorError::Gone { oldest });
        }
        let skip = (from - oldest) as usize;
        let history = inner.buf.iter().skip(skip).cloned().collect();
        Ok((history, self.live.subscribe()))
    }
}

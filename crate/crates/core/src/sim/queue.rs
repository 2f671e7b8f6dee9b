//! Per-client outbound queue with lag shedding.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::protocol::StreamMessage;

/// Queue length beyond which the oldest state messages are shed.
pub const LAG_LIMIT: usize = 64;
/// Undroppable backlog that marks a client as dead.
pub const HARD_LIMIT: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub enum Outbound {
    Message {
        text: String,
        sheddable: bool,
    },
    /// Transport-level reply (websocket pong payload).
    Pong(Vec<u8>),
}

impl Outbound {
    /// `joint_state` and `record_status` are superseded by later messages
    /// and may be shed; everything else is kept.
    pub fn message(message: &StreamMessage) -> Self {
        let sheddable = matches!(message, StreamMessage::JointState { .. } | StreamMessage::RecordStatus { .. });
        Outbound::Message { text: message.encode(), sheddable }
    }

    fn sheddable(&self) -> bool {
        matches!(self, Outbound::Message { sheddable: true, .. })
    }
}

#[derive(Debug, Default)]
struct Inner {
    items: VecDeque<Outbound>,
    closed: bool,
    shed: u64,
}

#[derive(Debug, Default)]
pub struct ClientQueue {
    inner: Mutex<Inner>,
    ready: Condvar,
}

impl ClientQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues `item`, then sheds the oldest sheddable entries while the
    /// queue exceeds [`LAG_LIMIT`]. Returns false once the queue is closed,
    /// which also happens when the backlog passes [`HARD_LIMIT`].
    pub fn push(&self, item: Outbound) -> bool {
        let mut inner = self.inner.lock().expect("queue lock");
        if inner.closed {
            return false;
        }
        inner.items.push_back(item);
        while inner.items.len() > LAG_LIMIT {
            match inner.items.iter().position(Outbound::sheddable) {
                Some(i) => {
                    inner.items.remove(i);
                    inner.shed += 1;
                }
                None => break,
            }
        }
        if inner.items.len() > HARD_LIMIT {
            inner.closed = true;
        }
        drop(inner);
        self.ready.notify_one();
        true
    }

    /// Blocks until an item is available or the queue is closed and empty.
    pub fn pop(&self) -> Option<Outbound> {
        let mut inner = self.inner.lock().expect("queue lock");
        loop {
            if let Some(item) = inner.items.pop_front() {
                return Some(item);
            }
            if inner.closed {
                return None;
            }
            inner = self.ready.wait(inner).expect("queue lock");
        }
    }

    /// [`pop`](Self::pop) with a deadline; `None` on timeout or close.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<Outbound> {
        let mut inner = self.inner.lock().expect("queue lock");
        if inner.items.is_empty() && !inner.closed {
            inner = self.ready.wait_timeout(inner, timeout).expect("queue lock").0;
        }
        inner.items.pop_front()
    }

    pub fn close(&self) {
        self.inner.lock().expect("queue lock").closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.inner.lock().expect("queue lock").closed
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Messages shed so far.
    pub fn shed(&self) -> u64 {
        self.inner.lock().expect("queue lock").shed
    }

    pub fn snapshot(&self) -> Vec<Outbound> {
        self.inner.lock().expect("queue lock").items.iter().cloned().collect()
    }
}

//! In-process message bus between the central controller and field IEDs.

use std::collections::VecDeque;

use super::config::FailureWindow;
use crate::ied::SetpointMessage;

/// Zero-latency queue that drops every message sent inside a failure window.
#[derive(Debug, Clone, Default)]
pub struct MessageBus {
    windows: Vec<FailureWindow>,
    queue: VecDeque<SetpointMessage>,
    pub sent: usize,
    pub dropped: usize,
}

impl MessageBus {
    pub fn new(windows: Vec<FailureWindow>) -> Self {
        Self {
            windows,
            ..Self::default()
        }
    }

    pub fn link_up(&self, t: f64) -> bool {
        !self.windows.iter().any(|w| w.contains(t))
    }

    pub fn send(&mut self, msg: SetpointMessage) {
        self.sent += 1;
        if self.link_up(msg.timestamp) {
            self.queue.push_back(msg);
        } else {
            self.dropped += 1;
        }
    }

    /// Newest pending message for `der_id`; older ones are discarded.
    pub fn take(&mut self, der_id: usize) -> Option<SetpointMessage> {
        let mut newest = None;
        self.queue.retain(|m| {
            if m.der_id == der_id {
                newest = Some(*m);
                false
            } else {
                true
            }
        });
        newest
    }
}

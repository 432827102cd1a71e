use std::cell::Cell;
use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Bounded FIFO of right-hand-side evaluations keyed by node index.
///
/// Node indices must be consecutive. Pushing past capacity drops the oldest
/// entry. Every window handed out is counted so tests can check that a
/// step never looks further back than its step count.
#[derive(Debug, Clone)]
pub struct RhsHistory<S> {
    entries: VecDeque<(usize, S)>,
    capacity: usize,
    reads: Cell<usize>,
}

impl<S> Default for RhsHistory<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S> RhsHistory<S> {
    pub const DEFAULT_CAPACITY: usize = 4;

    pub fn new() -> Self {
        Self::with_capacity(Self::DEFAULT_CAPACITY)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        RhsHistory {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            reads: Cell::new(0),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_index(&self) -> Option<usize> {
        self.entries.back().map(|(i, _)| *i)
    }

    pub fn push(&mut self, index: usize, value: S) -> Result<()> {
        if let Some(last) = self.last_index() {
            if index != last + 1 {
                return Err(Error::Contract(format!(
                    "history node {index} does not follow node {last}"
                )));
            }
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((index, value));
        Ok(())
    }

    /// The `n` most recent values, oldest first.
    pub fn latest(&self, n: usize) -> Result<Vec<&S>> {
        let len = self.entries.len();
        if n > len {
            return Err(Error::HistoryUnderflow {
                needed: n,
                available: len,
            });
        }
        self.reads.set(self.reads.get() + n);
        Ok(self.entries.iter().skip(len - n).map(|(_, v)| v).collect())
    }

    /// Node indices `(first, last)` of the `n` most recent entries.
    pub fn window(&self, n: usize) -> Option<(usize, usize)> {
        let len = self.entries.len();
        if n == 0 || n > len {
            return None;
        }
        Some((self.entries[len - n].0, self.entries[len - 1].0))
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|(i, _)| *i).collect()
    }

    /// Total number of entries handed out through [`latest`](Self::latest).
    pub fn reads(&self) -> usize {
        self.reads.get()
    }

    pub fn reset_reads(&self) {
        self.reads.set(0);
    }
}

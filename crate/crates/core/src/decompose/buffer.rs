use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::env::FeedbackRecord;

pub const DEFAULT_CAPACITY: usize = 100;

/// Bounded FIFO window of the most recent feedback for one domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryBuffer {
    capacity: usize,
    records: VecDeque<FeedbackRecord>,
}

impl Default for MemoryBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, records: VecDeque::with_capacity(capacity) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends `record`, evicting the oldest entry when full.
    pub fn push(&mut self, record: FeedbackRecord) {
        if self.capacity == 0 {
            return;
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub fn extend(&mut self, records: impl IntoIterator<Item = FeedbackRecord>) {
        records.into_iter().for_each(|r| self.push(r));
    }

    /// Oldest first.
    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &FeedbackRecord> + ExactSizeIterator {
        self.records.iter()
    }

    /// Most recent first.
    pub fn recent_first(&self) -> impl Iterator<Item = &FeedbackRecord> {
        self.records.iter().rev()
    }

    pub fn to_vec(&self) -> Vec<FeedbackRecord> {
        self.records.iter().copied().collect()
    }

    pub fn from_records(capacity: usize, records: impl IntoIterator<Item = FeedbackRecord>) -> Self {
        let mut b = Self::new(capacity);
        b.extend(records);
        b
    }
}

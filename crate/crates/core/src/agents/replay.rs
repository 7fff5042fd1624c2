//! Fixed-capacity experience replay.

use rand::Rng;

/// One experience `(s, a, r, s')` with feature-vector states.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
}

/// Ring buffer that evicts the oldest transition once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next insertion overwrites once the buffer is full.
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.cursor);
        older.iter().chain(newer)
    }

    /// `batch` distinct transitions drawn uniformly, or `None` when fewer
    /// than `batch` are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if batch > self.items.len() {
            return None;
        }
        let picks = rand::seq::index::sample(rng, self.items.len(), batch);
        Some(picks.iter().map(|i| &self.items[i]).collect())
    }
}

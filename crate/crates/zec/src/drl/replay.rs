//! Bounded experience replay with combined sampling: every training batch
//! contains the most recent transition, so fresh experience is never starved
//! even when the buffer is large.

use super::encoding::StateKey;
use super::DrlError;
use crate::domain::{Action, ActionSet};
use rand::Rng;
use std::collections::VecDeque;

/// One agent step: acting in `state` yielded `reward` and led to
/// `next_state`, where `next_legal` actions are available. Terminal
/// transitions have no successor to bootstrap from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: StateKey,
    pub action: Action,
    pub reward: f64,
    pub next_state: StateKey,
    pub next_legal: ActionSet,
    pub terminal: bool,
}

/// FIFO ring of transitions; pushing past capacity evicts the oldest.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be positive");
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity.min(16_384)) }
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
        debug_assert!(
            t.terminal || !t.next_legal.is_empty(),
            "non-terminal transitions need a non-empty successor action set"
        );
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn latest(&self) -> Option<&Transition> {
        self.items.back()
    }

    pub fn get(&self, k: usize) -> Option<&Transition> {
        self.items.get(k)
    }

    /// Fills `out` with up to `batch` transitions: a uniform draw (without
    /// replacement) from everything but the newest entry, then the newest
    /// entry itself, always last. Errors when empty.
    pub fn sample_into(
        &self,
        batch: usize,
        rng: &mut impl Rng,
        out: &mut Vec<Transition>,
    ) -> Result<(), DrlError> {
        assert!(batch >= 1, "batch size must be positive");
        let n = self.items.len();
        if n == 0 {
            return Err(DrlError::EmptyBuffer);
        }
        out.clear();
        let older = (batch - 1).min(n - 1);
        if older > 0 {
            for k in rand::seq::index::sample(rng, n - 1, older) {
                out.push(self.items[k]);
            }
        }
        out.push(self.items[n - 1]);
        Ok(())
    }
}

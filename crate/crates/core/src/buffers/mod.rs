//! Novice and human replay buffers and the balanced batch sampler.

mod log;

pub use log::{BufferLogHeader, BufferLogReader, BufferLogWriter, LogRecord};

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::Action;

/// A step the novice executed without takeover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a_n: Action,
    pub s_next: Vec<f64>,
    pub done: bool,
    pub eval_reward: f64,
    pub eval_cost: u8,
}

/// A step under takeover. `s_next` results from applying `a_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanTransition {
    pub s: Vec<f64>,
    pub a_n: Action,
    pub a_h: Action,
    pub s_next: Vec<f64>,
    pub done: bool,
    pub eval_reward: f64,
    pub eval_cost: u8,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BufferError {
    #[error("both buffers are empty")]
    BothEmpty,
    #[error("batch size must be at least 2, got {0}")]
    BatchTooSmall(usize),
    #[error("buffer is empty")]
    Empty,
}

/// FIFO store with optional capacity; `None` never evicts.
#[derive(Debug, Clone)]
pub struct RingBuffer<T> {
    items: VecDeque<T>,
    capacity: Option<usize>,
}

impl<T> RingBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            items: VecDeque::with_capacity(capacity.min(4096)),
            capacity: Some(capacity),
        }
    }

    pub fn unbounded() -> Self {
        Self {
            items: VecDeque::new(),
            capacity: None,
        }
    }

    pub fn push(&mut self, item: T) {
        if let Some(cap) = self.capacity {
            if cap == 0 {
                return;
            }
            if self.items.len() == cap {
                self.items.pop_front();
            }
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        self.items.iter_mut()
    }

    /// `n` uniform draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&T>, BufferError> {
        if self.items.is_empty() {
            return Err(BufferError::Empty);
        }
        Ok((0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}

pub const DEFAULT_NOVICE_CAPACITY: usize = 50_000;

/// The pair of buffers written by the rollout loop.
#[derive(Debug, Clone)]
pub struct Buffers {
    pub human: RingBuffer<HumanTransition>,
    pub novice: RingBuffer<Transition>,
}

impl Default for Buffers {
    fn default() -> Self {
        Self::new(DEFAULT_NOVICE_CAPACITY, None)
    }
}

impl Buffers {
    pub fn new(novice_capacity: usize, human_capacity: Option<usize>) -> Self {
        Self {
            human: human_capacity.map_or_else(RingBuffer::unbounded, RingBuffer::new),
            novice: RingBuffer::new(novice_capacity),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BalancedBatch<'a> {
    pub human: Vec<&'a HumanTransition>,
    pub novice: Vec<&'a Transition>,
    pub human_empty: bool,
    pub novice_empty: bool,
}

impl BalancedBatch<'_> {
    pub fn len(&self) -> usize {
        self.human.len() + self.novice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Draws `ceil(n/2)` human and `floor(n/2)` novice records, each uniformly
/// with replacement. If one buffer is empty the other fills the whole batch
/// and the matching `*_empty` flag is set.
pub fn sample_balanced<'a, R: Rng + ?Sized>(
    human: &'a RingBuffer<HumanTransition>,
    novice: &'a RingBuffer<Transition>,
    n: usize,
    rng: &mut R,
) -> Result<BalancedBatch<'a>, BufferError> {
    if n < 2 {
        return Err(BufferError::BatchTooSmall(n));
    }
    let (n_h, n_n) = match (human.is_empty(), novice.is_empty()) {
        (true, true) => return Err(BufferError::BothEmpty),
        (true, false) => (0, n),
        (false, true) => (n, 0),
        (false, false) => (n.div_ceil(2), n / 2),
    };
    Ok(BalancedBatch {
        human: if n_h > 0 { human.sample(n_h, rng)? } else { Vec::new() },
        novice: if n_n > 0 { novice.sample(n_n, rng)? } else { Vec::new() },
        human_empty: human.is_empty(),
        novice_empty: novice.is_empty(),
    })
}

/// Uniform draw over the union of both buffers, so the mix follows
/// `|B_h| : |B_n|`. Used by the unbalanced ablation and plain replay.
pub fn sample_union<'a, R: Rng + ?Sized>(
    human: &'a RingBuffer<HumanTransition>,
    novice: &'a RingBuffer<Transition>,
    n: usize,
    rng: &mut R,
) -> Result<BalancedBatch<'a>, BufferError> {
    let total = human.len() + novice.len();
    if total == 0 {
        return Err(BufferError::BothEmpty);
    }
    let mut batch = BalancedBatch {
        human: Vec::new(),
        novice: Vec::new(),
        human_empty: human.is_empty(),
        novice_empty: novice.is_empty(),
    };
    for _ in 0..n {
        let i = rng.random_range(0..total);
        if i < human.len() {
            batch.human.push(human.get(i).unwrap());
        } else {
            batch.novice.push(novice.get(i - human.len()).unwrap());
        }
    }
    Ok(batch)
}

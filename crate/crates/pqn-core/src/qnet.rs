//! Q-network over context vectors, its target copy, experience replay and
//! temporal-difference targets.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PqnError, Result};
use crate::nn::param::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};
use crate::nn::{Activation, Dense};
use crate::scalar::Scalar;

/// Lower clamp for Q-values: the temperature `1/Q` must stay finite.
pub const Q_FLOOR: f64 = 1e-3;

/// Admissible Q range for rewards in `[0, 1]`: `[Q_FLOOR, 1 / (1 - gamma)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QBounds<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> QBounds<T> {
    pub fn for_gamma(gamma: T) -> Self {
        Self {
            min: T::lit(Q_FLOOR),
            max: T::one() / (T::one() - gamma),
        }
    }

    pub fn clamp(&self, q: T) -> T {
        q.max(self.min).min(self.max)
    }

    pub fn contains(&self, q: T) -> bool {
        q >= self.min && q <= self.max
    }
}

/// One-hidden-layer feedforward head: `tanh` hidden layer, linear scalar output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QNetwork {
    pub hidden: Dense,
    pub out: Dense,
}

impl QNetwork {
    pub fn register<T: Scalar>(store: &mut ParamStore<T>, inputs: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            hidden: Dense::register(store, "q.hidden", inputs, hidden)?,
            out: Dense::register(store, "q.out", hidden, 1)?,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        vec![self.hidden.w, self.hidden.b, self.out.w, self.out.b]
    }

    /// Unclamped network output.
    pub fn raw<T: Scalar>(&self, store: &ParamStore<T>, context: &[T]) -> Result<T> {
        let h = self.hidden.forward(store, context, Activation::Tanh)?;
        Ok(self.out.forward(store, &h, Activation::None)?[0])
    }

    pub fn raw_tape<T: Scalar>(&self, tape: &mut Tape<'_, T>, context: Var) -> Var {
        let h = self.hidden.forward_tape(tape, context, Activation::Tanh);
        self.out.forward_tape(tape, h, Activation::None)
    }
}

/// Clamped Q-value used by the policy and in TD targets.
pub fn q_value<T: Scalar>(
    net: &QNetwork,
    store: &ParamStore<T>,
    context: &[T],
    gamma: T,
) -> Result<T> {
    Ok(QBounds::for_gamma(gamma).clamp(net.raw(store, context)?))
}

/// Delayed copy of the Q-network parameters.
#[derive(Debug, Clone)]
pub struct TargetNetwork<T> {
    pub store: ParamStore<T>,
    pub net: QNetwork,
    source: Vec<ParamId>,
    /// Steps since the last sync.
    pub staleness: u64,
}

impl<T: Scalar> TargetNetwork<T> {
    /// Allocates a target with the same layout as `net` and copies its parameters.
    pub fn new(net: &QNetwork, store: &ParamStore<T>) -> Result<Self> {
        let (hidden, inputs) = store.get(net.hidden.w).matrix_dims();
        let mut own = ParamStore::new();
        let copy = QNetwork::register(&mut own, inputs, hidden)?;
        let mut target = Self {
            store: own,
            net: copy,
            source: net.param_ids(),
            staleness: 0,
        };
        target.copy_from(store);
        Ok(target)
    }

    fn copy_from(&mut self, store: &ParamStore<T>) {
        for (dst, src) in self.net.param_ids().into_iter().zip(&self.source) {
            self.store.get_mut(dst).values.clone_from(&store.get(*src).values);
        }
        self.staleness = 0;
    }

    pub fn q_value(&self, context: &[T], gamma: T) -> Result<T> {
        q_value(&self.net, &self.store, context, gamma)
    }

    /// Parameters of the target equal those of the online network bit-for-bit.
    pub fn matches(&self, store: &ParamStore<T>) -> bool {
        self.net
            .param_ids()
            .into_iter()
            .zip(&self.source)
            .all(|(dst, src)| self.store.get(dst).values == store.get(*src).values)
    }
}

/// Copies the online Q parameters into `target` when `step` is a multiple of `c`.
///
/// Returns whether a sync happened.
pub fn sync_target<T: Scalar>(
    store: &ParamStore<T>,
    target: &mut TargetNetwork<T>,
    c: u64,
    step: u64,
) -> Result<bool> {
    if c == 0 {
        return Err(PqnError::invalid("target sync period C must be >= 1"));
    }
    if step.is_multiple_of(c) {
        target.copy_from(store);
        Ok(true)
    } else {
        target.staleness += 1;
        Ok(false)
    }
}

/// `r` for terminal transitions, otherwise `r + gamma * max(next_q)`.
pub fn td_target<T: Scalar>(r: T, next_q: &[T], terminal: bool, gamma: T) -> Result<T> {
    if terminal {
        return Ok(r);
    }
    let best = next_q
        .iter()
        .copied()
        .fold(None, |m: Option<T>, q| Some(m.map_or(q, |m| m.max(q))))
        .ok_or_else(|| PqnError::InvalidState("non-terminal transition without next actions".into()))?;
    Ok(r + gamma * best)
}

/// Mean squared TD error.
pub fn mse<T: Scalar>(predictions: &[T], targets: &[T]) -> Result<T> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(PqnError::invalid("TD loss needs a non-empty batch"));
    }
    let total: T = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &y)| (y - p) * (y - p))
        .sum();
    Ok(total / T::from_usize_lossy(predictions.len()))
}

/// A stored environment step. States are kept as visited-city snapshots so
/// features can be recomputed with the current sequence-model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub instance: usize,
    pub episode: u64,
    pub state: Vec<usize>,
    pub action: usize,
    pub reward: T,
    pub next_state: Vec<usize>,
    pub terminal: bool,
}

/// Bounded FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<X> {
    items: VecDeque<X>,
    capacity: usize,
}

impl<X> ReplayBuffer<X> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(PqnError::invalid("replay capacity must be >= 1"));
        }
        Ok(Self {
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        })
    }

    pub fn push(&mut self, item: X) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &X> {
        self.items.iter()
    }

    /// Uniform sample without replacement; `None` until `batch` items are stored.
    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Option<Vec<&X>> {
        if batch == 0 || self.items.len() < batch {
            return None;
        }
        Some(
            rand::seq::index::sample(rng, self.items.len(), batch)
                .into_iter()
                .map(|i| &self.items[i])
                .collect(),
        )
    }
}

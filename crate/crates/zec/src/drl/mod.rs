//! Q-learning machinery: state/action one-hot encoding, the feedforward
//! Q-network, bounded experience replay, the ε schedule, and the glue that
//! turns sampled transitions into SGD updates.

pub mod encoding;
pub mod network;
pub mod replay;
pub mod schedule;

pub use encoding::{active_bits, encode, ActiveBits, StateKey, INPUT_LEN};
pub use network::{Mlp, QNET_SIZES};
pub use replay::{ReplayBuffer, Transition};
pub use schedule::EpsilonSchedule;

use crate::domain::{Action, ActionSet};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DrlError {
    #[error("{what} {value} out of range (max {max})")]
    IndexOutOfRange { what: &'static str, value: usize, max: usize },
    #[error("input has {got} entries, network expects {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("cannot choose from an empty legal action set")]
    EmptyLegalSet,
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Highest Q-value among the legal actions in `state`. Ties resolve to the
/// earlier action in declaration order (strict `>` comparison).
pub fn max_q(net: &Mlp, state: StateKey, legal: ActionSet) -> Result<f64, DrlError> {
    let mut best: Option<f64> = None;
    for action in legal.iter() {
        let q = net.q_bits(&active_bits(state, action)?);
        if best.is_none_or(|b| q > b) {
            best = Some(q);
        }
    }
    best.ok_or(DrlError::EmptyLegalSet)
}

/// ε-greedy choice over the legal set. ε = 0 consumes no randomness, so a
/// frozen network yields a fully deterministic policy.
pub fn select_action(
    net: &Mlp,
    state: StateKey,
    legal: ActionSet,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<Action, DrlError> {
    if legal.is_empty() {
        return Err(DrlError::EmptyLegalSet);
    }
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        let pick = rng.gen_range(0..legal.len());
        return Ok(legal.nth(pick));
    }
    let mut best: Option<(Action, f64)> = None;
    for action in legal.iter() {
        let q = net.q_bits(&active_bits(state, action)?);
        if best.is_none_or(|(_, bq)| q > bq) {
            best = Some((action, q));
        }
    }
    Ok(best.expect("legal set verified non-empty").0)
}

/// One batch update: sample from replay (newest transition always included),
/// bootstrap targets as r + γ·max_a' Q(s', a') (just r when terminal), and
/// take an SGD step. Returns the pre-update batch loss.
pub fn train_step(
    net: &mut Mlp,
    buffer: &ReplayBuffer,
    batch_size: usize,
    alpha: f64,
    gamma: f64,
    rng: &mut impl Rng,
) -> Result<f64, DrlError> {
    let mut batch = Vec::with_capacity(batch_size);
    buffer.sample_into(batch_size, rng, &mut batch)?;
    let mut samples = Vec::with_capacity(batch.len());
    for t in &batch {
        let target = if t.terminal {
            t.reward
        } else {
            t.reward + gamma * max_q(net, t.next_state, t.next_legal)?
        };
        samples.push((active_bits(t.state, t.action)?, target));
    }
    Ok(net.sgd_step(&samples, alpha))
}

//! One-hot state/action encoding for the Q-network input layer.

use super::DrlError;
use crate::domain::{Action, EnergyLevel, DAYS_PER_WEEK, SLOTS_PER_DAY};

/// Network input width: 48 slot bits + 7 weekday bits + 4 balance-level bits
/// + 4 action bits (DenyRequest is the all-zero action block).
pub const INPUT_LEN: usize = 63;

const DAY_OFFSET: usize = SLOTS_PER_DAY; // 48
const LEVEL_OFFSET: usize = DAY_OFFSET + DAYS_PER_WEEK; // 55
const ACTION_OFFSET: usize = LEVEL_OFFSET + 4; // 59

/// Discrete decision-state: slot within the day, weekday index, and the
/// agent's net-balance level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateKey {
    pub slot: u8,
    pub day: u8,
    pub level: EnergyLevel,
}

impl StateKey {
    pub fn new(slot: u8, day: u8, level: EnergyLevel) -> Result<Self, DrlError> {
        if usize::from(slot) >= SLOTS_PER_DAY {
            return Err(DrlError::IndexOutOfRange { what: "slot", value: slot as usize, max: SLOTS_PER_DAY - 1 });
        }
        if usize::from(day) >= DAYS_PER_WEEK {
            return Err(DrlError::IndexOutOfRange { what: "day", value: day as usize, max: DAYS_PER_WEEK - 1 });
        }
        Ok(StateKey { slot, day, level })
    }
}

/// The at-most-four hot input indices of an encoded (state, action) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveBits {
    pub slot: usize,
    pub day: usize,
    pub level: usize,
    /// `None` encodes DenyRequest: the action block stays all zero.
    pub action: Option<usize>,
}

impl ActiveBits {
    pub fn dense(&self) -> [f64; INPUT_LEN] {
        let mut input = [0.0; INPUT_LEN];
        input[self.slot] = 1.0;
        input[self.day] = 1.0;
        input[self.level] = 1.0;
        if let Some(a) = self.action {
            input[a] = 1.0;
        }
        input
    }

    /// Hot indices in ascending order.
    pub fn indices(&self) -> impl Iterator<Item = usize> {
        [Some(self.slot), Some(self.day), Some(self.level), self.action]
            .into_iter()
            .flatten()
    }
}

/// Maps a (state, action) pair to its hot input indices.
pub fn active_bits(state: StateKey, action: Action) -> Result<ActiveBits, DrlError> {
    // StateKey::new is the only constructor, but re-check when built directly.
    let state = StateKey::new(state.slot, state.day, state.level)?;
    let action_bit = match action {
        Action::DenyRequest => None,
        a => Some(ACTION_OFFSET + a.index()),
    };
    Ok(ActiveBits {
        slot: usize::from(state.slot),
        day: DAY_OFFSET + usize::from(state.day),
        level: LEVEL_OFFSET + state.level.code() as usize,
        action: action_bit,
    })
}

/// Dense one-hot encoding of a (state, action) pair.
pub fn encode(state: StateKey, action: Action) -> Result<[f64; INPUT_LEN], DrlError> {
    Ok(active_bits(state, action)?.dense())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(slot: u8, day: u8, level: EnergyLevel) -> StateKey {
        StateKey::new(slot, day, level).unwrap()
    }

    #[test]
    fn layout_example_bits() {
        let input = encode(key(0, 0, EnergyLevel::None), Action::StoreExcess).unwrap();
        let hot: Vec<usize> = input.iter().enumerate().filter(|(_, v)| **v == 1.0).map(|(i, _)| i).collect();
        assert_eq!(hot, vec![0, 48, 55, 59]);
    }

    #[test]
    fn deny_request_leaves_action_block_zero() {
        let input = encode(key(10, 2, EnergyLevel::High), Action::DenyRequest).unwrap();
        assert!(input[59..63].iter().all(|v| *v == 0.0));
        let ones = input.iter().filter(|v| **v == 1.0).count();
        assert_eq!(ones, 3);
    }

    #[test]
    fn one_bit_per_block() {
        let input = encode(key(17, 3, EnergyLevel::Low), Action::RequestGrid).unwrap();
        assert_eq!(input[0..48].iter().sum::<f64>(), 1.0);
        assert_eq!(input[48..55].iter().sum::<f64>(), 1.0);
        assert_eq!(input[55..59].iter().sum::<f64>(), 1.0);
        assert_eq!(input[59..63].iter().sum::<f64>(), 1.0);
        assert!(input.iter().all(|v| *v == 0.0 || *v == 1.0));
    }

    #[test]
    fn encoding_is_injective_over_full_domain() {
        let mut seen = std::collections::HashSet::new();
        for slot in 0..48u8 {
            for day in 0..7u8 {
                for level in EnergyLevel::ALL {
                    for action in Action::ALL {
                        let input = encode(key(slot, day, level), action).unwrap();
                        let fingerprint: Vec<bool> = input.iter().map(|v| *v == 1.0).collect();
                        assert!(seen.insert(fingerprint), "collision at {slot} {day} {level:?} {action:?}");
                    }
                }
            }
        }
        assert_eq!(seen.len(), 48 * 7 * 4 * 5);
    }

    #[test]
    fn out_of_range_indices_error() {
        assert!(StateKey::new(48, 0, EnergyLevel::None).is_err());
        assert!(StateKey::new(0, 7, EnergyLevel::None).is_err());
        let bad = StateKey { slot: 50, day: 0, level: EnergyLevel::None };
        assert!(active_bits(bad, Action::StoreExcess).is_err());
    }

    #[test]
    fn sparse_and_dense_paths_agree() {
        let bits = active_bits(key(30, 6, EnergyLevel::Medium), Action::GrantRequest).unwrap();
        let dense = encode(key(30, 6, EnergyLevel::Medium), Action::GrantRequest).unwrap();
        assert_eq!(bits.dense(), dense);
        let indices: Vec<usize> = bits.indices().collect();
        assert_eq!(indices, vec![30, 54, 57, 62]);
    }
}

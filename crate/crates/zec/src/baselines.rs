//! Fixed comparison policies. Always-share grants whatever it can and never
//! hoards; never-share denies every request and prefers the grid; random
//! picks uniformly among its legal actions.

use crate::domain::{Action, ActionSet};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// How a house picks actions for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Learned,
    AlwaysShare,
    NeverShare,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 4] =
        [Strategy::Learned, Strategy::AlwaysShare, Strategy::NeverShare, Strategy::Random];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Learned => "learned",
            Strategy::AlwaysShare => "always_share",
            Strategy::NeverShare => "never_share",
            Strategy::Random => "random",
        }
    }

    pub fn is_learned(self) -> bool {
        self == Strategy::Learned
    }
}

/// Fixed-policy choice from a legal set. The always-share house grants
/// requests and offers its surplus to neighbours before anything else; the
/// never-share house denies requests and leans on the grid. Panics if called
/// for [`Strategy::Learned`] (that path goes through the Q-network) or with
/// an empty legal set.
pub fn baseline_action(strategy: Strategy, legal: ActionSet, rng: &mut impl Rng) -> Action {
    assert!(!legal.is_empty(), "no legal action to choose from");
    let preference: &[Action] = match strategy {
        Strategy::AlwaysShare => &[
            Action::GrantRequest,
            Action::RequestNeighbour,
            Action::StoreExcess,
            Action::DenyRequest,
            Action::RequestGrid,
        ],
        Strategy::NeverShare => &[
            Action::DenyRequest,
            Action::RequestGrid,
            Action::StoreExcess,
            Action::GrantRequest,
            Action::RequestNeighbour,
        ],
        Strategy::Random => return legal.nth(rng.gen_range(0..legal.len())),
        Strategy::Learned => panic!("learned strategy selects through its Q-network"),
    };
    *preference.iter().find(|a| legal.contains(**a)).expect("preference lists cover every action")
}

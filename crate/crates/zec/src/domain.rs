//! Core value types: energy quantities, batteries, discretization, actions,
//! and scenario configuration.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// Energy in kilowatt-hours. Quantities (consumption, generation, stored
/// charge, transfers) are non-negative at their source; only *net balance*
/// values may be negative. Finite at all times.
pub type EnergyKWh = f64;

/// Half-hour slots per simulated day.
pub const SLOTS_PER_DAY: usize = 48;

/// Duration of one slot in hours.
pub const SLOT_HOURS: f64 = 0.5;

/// Days of a simulated week (weekday one-hot width in the NN encoding).
pub const DAYS_PER_WEEK: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("energy value must be finite")]
    NonFinite,
    #[error("thresholds must be finite, positive and strictly ascending, got {0:?}")]
    InvalidThresholds([f64; 3]),
    #[error("initial charge {charge_kwh} kWh exceeds battery capacity {capacity_kwh} kWh")]
    ChargeExceedsCapacity { charge_kwh: f64, capacity_kwh: f64 },
    #[error("scenario needs at least one house")]
    NoHouses,
    #[error("duplicate agent id `{0}`")]
    DuplicateAgentId(String),
    #[error("{field} must be at least 1")]
    ZeroCount { field: &'static str },
}

/// Discretized magnitude of a net energy balance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EnergyLevel {
    None = 0,
    Low = 1,
    Medium = 2,
    High = 3,
}

impl EnergyLevel {
    pub const ALL: [EnergyLevel; 4] = [
        EnergyLevel::None,
        EnergyLevel::Low,
        EnergyLevel::Medium,
        EnergyLevel::High,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<EnergyLevel> {
        Self::ALL.get(code as usize).copied()
    }
}

/// Ascending |balance| cut points in kWh separating the four levels.
/// Exact band edges belong to the lower level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds(pub [f64; 3]);

impl Default for Thresholds {
    /// Scaled to ~10 kWh/day households stepped in half-hours.
    fn default() -> Self {
        Thresholds([0.05, 0.5, 1.5])
    }
}

impl Thresholds {
    pub fn new(cuts: [f64; 3]) -> Result<Self, DomainError> {
        let ok = cuts.iter().all(|t| t.is_finite() && *t > 0.0) && cuts[0] < cuts[1] && cuts[1] < cuts[2];
        if ok {
            Ok(Thresholds(cuts))
        } else {
            Err(DomainError::InvalidThresholds(cuts))
        }
    }
}

/// Maps a signed net balance to a level by magnitude: the level is the number
/// of thresholds strictly below |balance|, so edges fall to the lower level.
pub fn discretize(balance: EnergyKWh, thresholds: &Thresholds) -> Result<EnergyLevel, DomainError> {
    if !balance.is_finite() {
        return Err(DomainError::NonFinite);
    }
    let magnitude = balance.abs();
    let level = thresholds.0.iter().filter(|&&t| t < magnitude).count() as u8;
    Ok(EnergyLevel::from_code(level).expect("at most three thresholds below any magnitude"))
}

/// Battery bank descriptor. The default unit is a 12 V x 100 Ah cell
/// (1.2 kWh); six units give the default 7.2 kWh bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    pub unit_capacity_kwh: f64,
    pub unit_count: u32,
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec { unit_capacity_kwh: 1.2, unit_count: 6 }
    }
}

impl BatterySpec {
    pub fn capacity_kwh(&self) -> EnergyKWh {
        // Multiply in watt-hours: units are sized in whole Wh (a 12 V,
        // 100 Ah unit is 1200 Wh), and 1200·6/1000 is exactly 7.2 while
        // 1.2·6 rounds to 7.199999999999999.
        (self.unit_capacity_kwh * 1000.0) * f64::from(self.unit_count) / 1000.0
    }
}

/// A battery bank with its state of charge, kept within [0, capacity].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryBank {
    spec: BatterySpec,
    soc_kwh: EnergyKWh,
}

impl BatteryBank {
    pub fn new(spec: BatterySpec, initial_charge_kwh: EnergyKWh) -> Result<Self, DomainError> {
        if !initial_charge_kwh.is_finite() || initial_charge_kwh < 0.0 {
            return Err(DomainError::NonFinite);
        }
        let capacity = spec.capacity_kwh();
        if initial_charge_kwh > capacity {
            return Err(DomainError::ChargeExceedsCapacity {
                charge_kwh: initial_charge_kwh,
                capacity_kwh: capacity,
            });
        }
        Ok(BatteryBank { spec, soc_kwh: initial_charge_kwh })
    }

    pub fn spec(&self) -> BatterySpec {
        self.spec
    }

    pub fn capacity_kwh(&self) -> EnergyKWh {
        self.spec.capacity_kwh()
    }

    pub fn soc_kwh(&self) -> EnergyKWh {
        self.soc_kwh
    }

    pub fn headroom_kwh(&self) -> EnergyKWh {
        self.capacity_kwh() - self.soc_kwh
    }

    /// Charge available above a floor the owner will not give away.
    pub fn available_above(&self, reserve_kwh: EnergyKWh) -> EnergyKWh {
        (self.soc_kwh - reserve_kwh).max(0.0)
    }

    /// Stores up to `amount`; returns how much was actually accepted.
    pub fn charge(&mut self, amount: EnergyKWh) -> EnergyKWh {
        debug_assert!(amount.is_finite() && amount >= 0.0);
        let accepted = amount.min(self.headroom_kwh()).max(0.0);
        self.soc_kwh = (self.soc_kwh + accepted).min(self.capacity_kwh());
        accepted
    }

    /// Releases up to `amount`; returns how much was actually delivered.
    pub fn discharge(&mut self, amount: EnergyKWh) -> EnergyKWh {
        debug_assert!(amount.is_finite() && amount >= 0.0);
        let delivered = amount.min(self.soc_kwh).max(0.0);
        self.soc_kwh -= delivered;
        delivered
    }
}

/// The five choices an agent can submit for a slot. Declaration order is the
/// fixed tie-break order for argmax action selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    StoreExcess,
    RequestNeighbour,
    RequestGrid,
    GrantRequest,
    DenyRequest,
}

impl Action {
    pub const COUNT: usize = 5;
    pub const ALL: [Action; Action::COUNT] = [
        Action::StoreExcess,
        Action::RequestNeighbour,
        Action::RequestGrid,
        Action::GrantRequest,
        Action::DenyRequest,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Action::StoreExcess => "store_excess",
            Action::RequestNeighbour => "request_neighbour",
            Action::RequestGrid => "request_grid",
            Action::GrantRequest => "grant_request",
            Action::DenyRequest => "deny_request",
        }
    }
}

/// Small set of actions backed by a 5-bit mask. Iteration follows the fixed
/// `Action` declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);

    pub fn single(action: Action) -> Self {
        ActionSet(1 << action.index())
    }

    pub fn of(actions: &[Action]) -> Self {
        let mut set = ActionSet::EMPTY;
        for &a in actions {
            set.insert(a);
        }
        set
    }

    pub fn insert(&mut self, action: Action) {
        self.0 |= 1 << action.index();
    }

    pub fn contains(self, action: Action) -> bool {
        self.0 & (1 << action.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }

    /// n-th member in fixed order; panics when out of range.
    pub fn nth(self, n: usize) -> Action {
        self.iter().nth(n).expect("index within set size")
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Self {
        ActionSet(bits & 0b1_1111)
    }
}

/// Simulated season; selects the consumption dataset and the solar fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Season {
    Winter,
    Summer,
}

impl Season {
    /// Daily irradiance total as the sum of the 48 half-hourly W/m² samples.
    pub fn daily_exposure_sum(self) -> f64 {
        match self {
            Season::Winter => 11770.0,
            Season::Summer => 18850.0,
        }
    }

    /// Daylight slot window `[start, end)` within a day.
    pub fn daylight_slots(self) -> (usize, usize) {
        match self {
            Season::Winter => (16, 33),
            Season::Summer => (10, 39),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Season::Winter => "winter",
            Season::Summer => "summer",
        }
    }
}

/// Where a house's consumption series comes from. Synthetic profiles with the
/// same `dataset_id` yield identical series under the same scenario seed, so
/// two houses can share one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Synthetic {
        dataset_id: u32,
        winter_daily_kwh: f64,
        summer_daily_kwh: f64,
    },
    File {
        path: PathBuf,
    },
}

impl ProfileSpec {
    pub fn daily_mean_kwh(&self, season: Season) -> Option<f64> {
        match self {
            ProfileSpec::Synthetic { winter_daily_kwh, summer_daily_kwh, .. } => Some(match season {
                Season::Winter => *winter_daily_kwh,
                Season::Summer => *summer_daily_kwh,
            }),
            ProfileSpec::File { .. } => None,
        }
    }
}

/// One house: identity, generation capacity, storage, and consumption source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseConfig {
    pub agent_id: String,
    pub solar_cells: u32,
    pub battery: BatterySpec,
    pub initial_charge_kwh: EnergyKWh,
    pub consumption: ProfileSpec,
}

impl HouseConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        // Zero solar cells is legal (a pure consumer).
        BatteryBank::new(self.battery, self.initial_charge_kwh).map(|_| ())
    }
}

/// Tunables outside the published house table: discretization, solar
/// conversion, settlement knobs, and DQN hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub thresholds: Thresholds,
    /// m²-equivalent collecting area per solar cell.
    pub yield_factor: f64,
    /// Fraction of each neighbour transfer lost in transit.
    pub transfer_loss_fraction: f64,
    /// Battery charge a donor keeps for itself when granting.
    pub donor_reserve_kwh: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub discount: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            thresholds: Thresholds::default(),
            yield_factor: 0.018,
            transfer_loss_fraction: 0.0,
            donor_reserve_kwh: 0.0,
            batch_size: 32,
            replay_capacity: 10_000,
            learning_rate: 0.125e-3,
            discount: 0.99,
        }
    }
}

/// A full experiment description. House order is the deterministic
/// settlement order, and `seed` drives every random stream of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub houses: Vec<HouseConfig>,
    pub season: Season,
    pub days: u32,
    pub episodes: u32,
    pub seed: u64,
    #[serde(default)]
    pub params: SimParams,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), DomainError> {
        if self.houses.is_empty() {
            return Err(DomainError::NoHouses);
        }
        if self.days == 0 {
            return Err(DomainError::ZeroCount { field: "days" });
        }
        if self.episodes == 0 {
            return Err(DomainError::ZeroCount { field: "episodes" });
        }
        let mut seen = std::collections::BTreeSet::new();
        for house in &self.houses {
            house.validate()?;
            if !seen.insert(house.agent_id.as_str()) {
                return Err(DomainError::DuplicateAgentId(house.agent_id.clone()));
            }
        }
        Ok(())
    }

    pub fn slots_per_episode(&self) -> usize {
        self.days as usize * SLOTS_PER_DAY
    }
}

fn table1_house(
    agent_id: &str,
    solar_cells: u32,
    initial_charge_kwh: f64,
    dataset_id: u32,
    winter_daily_kwh: f64,
    summer_daily_kwh: f64,
) -> HouseConfig {
    HouseConfig {
        agent_id: agent_id.to_string(),
        solar_cells,
        battery: BatterySpec::default(),
        initial_charge_kwh,
        consumption: ProfileSpec::Synthetic { dataset_id, winter_daily_kwh, summer_daily_kwh },
    }
}

/// The two published test communities: scenario 1 is Alice/Bob/Charlie;
/// scenario 2 adds Dave, who has no panels, an empty battery, and the same
/// consumption dataset as Alice. Defaults: winter, 3 days, 500 episodes.
pub fn table1_configs() -> (ScenarioConfig, ScenarioConfig) {
    let alice = table1_house("alice", 72, 7.2, 1, 11.01, 12.12);
    let bob = table1_house("bob", 54, 2.5, 2, 9.49, 11.68);
    let charlie = table1_house("charlie", 12, 5.0, 3, 10.03, 8.27);
    let dave = table1_house("dave", 0, 0.0, 1, 11.01, 12.12);

    let base = ScenarioConfig {
        houses: vec![alice, bob, charlie],
        season: Season::Winter,
        days: 3,
        episodes: 500,
        seed: 0,
        params: SimParams::default(),
    };
    let mut four = base.clone();
    four.houses.push(dave);
    (base, four)
}

//! Per-house agents and the episode loop that drives them: every half-hour
//! slot each agent perceives its energy balance, picks a legal action
//! (Q-network or fixed baseline), the environment settles the slot, agents
//! report their status to the community monitor, and the shared reward
//! flows back into each learner's replay buffer.

use crate::baselines::{baseline_action, Strategy};
use crate::cms::{CmsError, CommunityMonitor, StatusReport};
use crate::domain::{discretize, Action, ActionSet, DomainError, SimParams, Thresholds, SLOTS_PER_DAY};
use crate::drl::{
    select_action, train_step, DrlError, Mlp, ReplayBuffer, StateKey, Transition, QNET_SIZES,
};
use crate::env::{legal_actions, EnergyRequest, EnvError, Environment, StepOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Cms(#[from] CmsError),
    #[error(transparent)]
    Drl(#[from] DrlError),
}

/// A decision made this slot whose successor state is not yet known.
#[derive(Debug, Clone, Copy)]
struct OpenDecision {
    state: StateKey,
    action: Action,
    legal: ActionSet,
}

/// A slot's final decision carried across the slot boundary together with
/// that slot's reward; closed by the next decision or terminally at the
/// episode end.
#[derive(Debug, Clone, Copy)]
struct CarriedDecision {
    state: StateKey,
    action: Action,
    reward: f64,
}

/// Per-episode counters for one agent.
#[derive(Debug, Clone, Default, PartialEq)]
struct EpisodeTally {
    actions: [u64; Action::COUNT],
    decisions: u64,
    grid_kwh: f64,
    received_kwh: f64,
    sent_kwh: f64,
    loss_sum: f64,
    train_steps: u64,
}

/// What one agent did over one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentEpisodeStats {
    pub agent_id: String,
    pub actions: [u64; Action::COUNT],
    pub decisions: u64,
    pub grid_kwh: f64,
    pub received_kwh: f64,
    pub sent_kwh: f64,
    pub final_battery_kwh: f64,
    pub mean_loss: Option<f64>,
}

/// One episode's outcome: the summed per-slot shared reward and per-agent
/// statistics in house order.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeReport {
    pub community_status_kwh: f64,
    pub agents: Vec<AgentEpisodeStats>,
}

/// One house's policy plus, for learners, its Q-network and replay buffer.
///
/// Determinism: `action_rng` feeds only exploration draws and baseline
/// choices; `engine_rng` seeds the network and feeds replay sampling. The
/// two streams never mix, so ε=0 action selection is RNG-free.
pub struct HouseAgent {
    id: String,
    strategy: Strategy,
    thresholds: Thresholds,
    batch_size: usize,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
    net: Option<Mlp>,
    replay: Option<ReplayBuffer>,
    action_rng: ChaCha8Rng,
    engine_rng: ChaCha8Rng,
    open: Vec<OpenDecision>,
    carried: Option<CarriedDecision>,
    tally: EpisodeTally,
}

impl HouseAgent {
    pub fn new(
        id: impl Into<String>,
        strategy: Strategy,
        params: &SimParams,
        agent_seed: u64,
        engine_seed: u64,
    ) -> HouseAgent {
        let mut engine_rng = ChaCha8Rng::seed_from_u64(engine_seed);
        let (net, replay) = if strategy.is_learned() {
            (Some(Mlp::new(&QNET_SIZES, &mut engine_rng)), Some(ReplayBuffer::new(params.replay_capacity)))
        } else {
            (None, None)
        };
        HouseAgent {
            id: id.into(),
            strategy,
            thresholds: params.thresholds,
            batch_size: params.batch_size,
            alpha: params.learning_rate,
            gamma: params.discount,
            epsilon: 0.0,
            net,
            replay,
            action_rng: ChaCha8Rng::seed_from_u64(agent_seed),
            engine_rng,
            open: Vec::new(),
            carried: None,
            tally: EpisodeTally::default(),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn network(&self) -> Option<&Mlp> {
        self.net.as_ref()
    }

    /// Replaces the learner's Q-network, e.g. with a loaded checkpoint.
    pub fn install_network(&mut self, net: Mlp) -> Result<(), AgentError> {
        if net.sizes() != QNET_SIZES {
            return Err(AgentError::Drl(DrlError::ShapeMismatch {
                got: net.input_len(),
                want: QNET_SIZES[0],
            }));
        }
        self.net = Some(net);
        Ok(())
    }

    pub fn transitions_recorded(&self) -> usize {
        self.replay.as_ref().map_or(0, ReplayBuffer::len)
    }

    /// Read-only view of the replay buffer; `None` for baseline strategies.
    pub fn replay(&self) -> Option<&ReplayBuffer> {
        self.replay.as_ref()
    }

    /// Clears per-episode state and fixes this episode's exploration rate.
    pub fn begin_episode(&mut self, epsilon: f64) {
        debug_assert!(self.open.is_empty() && self.carried.is_none(), "previous episode left open decisions");
        self.open.clear();
        self.carried = None;
        self.epsilon = epsilon;
        self.tally = EpisodeTally::default();
    }

    /// One decision point: the primary per-slot choice (`pending` = None) or
    /// a grant/deny response to a neighbour's request (`balance` is then the
    /// grantable surplus). Closes a decision carried from the previous slot.
    pub fn decide(
        &mut self,
        slot_in_day: u8,
        day: u8,
        balance: f64,
        pending: Option<&EnergyRequest>,
    ) -> Result<Action, AgentError> {
        let level = discretize(balance, &self.thresholds)?;
        let state = StateKey::new(slot_in_day, day, level)?;
        let legal = legal_actions(balance, pending);

        if let Some(carried) = self.carried.take() {
            self.learn(Transition {
                state: carried.state,
                action: carried.action,
                reward: carried.reward,
                next_state: state,
                next_legal: legal,
                terminal: false,
            })?;
        }

        let action = match self.strategy {
            Strategy::Learned => select_action(
                self.net.as_ref().expect("learned agents own a network"),
                state,
                legal,
                self.epsilon,
                &mut self.action_rng,
            )?,
            fixed => baseline_action(fixed, legal, &mut self.action_rng),
        };
        self.tally.actions[action.index()] += 1;
        self.tally.decisions += 1;
        self.open.push(OpenDecision { state, action, legal });
        Ok(action)
    }

    /// Accumulates this agent's settled energy flows for the slot.
    pub fn note_outcome(&mut self, outcome: &StepOutcome) {
        debug_assert_eq!(outcome.agent_id, self.id);
        self.tally.grid_kwh += outcome.drawn_from_grid;
        self.tally.received_kwh += outcome.received_from_neighbours;
        self.tally.sent_kwh += outcome.sent_to_neighbours;
    }

    /// Books the slot's shared reward on the slot's final decision, so an
    /// agent's transition rewards sum to the episode reward no matter how
    /// many within-slot decisions it made. Earlier decisions in the slot
    /// close against their successor with zero immediate reward and reach
    /// the slot reward through the bootstrap term.
    pub fn end_slot(&mut self, reward: f64) -> Result<(), AgentError> {
        debug_assert!(!self.open.is_empty(), "every slot has at least the primary decision");
        for k in 0..self.open.len().saturating_sub(1) {
            let (d, next) = (self.open[k], self.open[k + 1]);
            self.learn(Transition {
                state: d.state,
                action: d.action,
                reward: 0.0,
                next_state: next.state,
                next_legal: next.legal,
                terminal: false,
            })?;
        }
        if let Some(last) = self.open.last() {
            self.carried = Some(CarriedDecision { state: last.state, action: last.action, reward });
        }
        self.open.clear();
        Ok(())
    }

    /// Closes the episode: the carried decision becomes a terminal
    /// transition (no successor to bootstrap from) and the episode's
    /// statistics are returned.
    pub fn end_episode(&mut self, final_battery_kwh: f64) -> Result<AgentEpisodeStats, AgentError> {
        if let Some(carried) = self.carried.take() {
            self.learn(Transition {
                state: carried.state,
                action: carried.action,
                reward: carried.reward,
                next_state: carried.state,
                next_legal: ActionSet::EMPTY,
                terminal: true,
            })?;
        }
        let tally = std::mem::take(&mut self.tally);
        Ok(AgentEpisodeStats {
            agent_id: self.id.clone(),
            actions: tally.actions,
            decisions: tally.decisions,
            grid_kwh: tally.grid_kwh,
            received_kwh: tally.received_kwh,
            sent_kwh: tally.sent_kwh,
            final_battery_kwh,
            mean_loss: (tally.train_steps > 0).then(|| tally.loss_sum / tally.train_steps as f64),
        })
    }

    /// Records one transition and runs one batch update (learners only).
    fn learn(&mut self, transition: Transition) -> Result<(), AgentError> {
        let (Some(net), Some(replay)) = (self.net.as_mut(), self.replay.as_mut()) else {
            return Ok(());
        };
        replay.push(transition);
        let loss = train_step(net, replay, self.batch_size, self.alpha, self.gamma, &mut self.engine_rng)?;
        self.tally.loss_sum += loss;
        self.tally.train_steps += 1;
        Ok(())
    }
}

/// Runs one episode over the environment's full horizon. Reports are posted
/// to the monitor under slots `first_cms_slot..first_cms_slot + horizon`
/// (monitor slots grow across episodes; an episode never reuses them).
/// `on_step` sees every slot's settled outcomes, in house order.
pub fn run_episode(
    agents: &mut [HouseAgent],
    env: &mut Environment,
    cms: &mut dyn CommunityMonitor,
    epsilon: f64,
    first_cms_slot: u64,
    mut on_step: Option<&mut dyn FnMut(usize, &[StepOutcome])>,
) -> Result<EpisodeReport, AgentError> {
    let n = env.house_count();
    assert_eq!(agents.len(), n, "one agent per house");
    env.reset();
    for agent in agents.iter_mut() {
        agent.begin_episode(epsilon);
    }

    let mut community_status_kwh = 0.0;
    let mut chosen = Vec::with_capacity(n);
    for slot in 0..env.horizon_slots() {
        let slot_in_day = (slot % SLOTS_PER_DAY) as u8;
        let day = ((slot / SLOTS_PER_DAY) % 7) as u8;

        chosen.clear();
        for (i, agent) in agents.iter_mut().enumerate() {
            let balance = env.balance_after_battery(i, slot)?;
            chosen.push(agent.decide(slot_in_day, day, balance, None)?);
        }

        // Donor grant/deny queries are decision points too; a failure inside
        // the callback falls back to the always-legal deny and surfaces
        // after settlement.
        let mut respond_err: Option<AgentError> = None;
        let outcomes = {
            let respond_err = &mut respond_err;
            env.settle_step(&chosen, slot, &mut |donor, request, grantable| {
                match agents[donor].decide(slot_in_day, day, grantable, Some(request)) {
                    Ok(action) => action,
                    Err(e) => {
                        respond_err.get_or_insert(e);
                        Action::DenyRequest
                    }
                }
            })?
        };
        if let Some(e) = respond_err {
            return Err(e);
        }

        let cms_slot = first_cms_slot + slot as u64;
        for (agent, outcome) in agents.iter_mut().zip(&outcomes) {
            agent.note_outcome(outcome);
            // A house's reported energy status is its exchange with the
            // outside world: supply-grid imports on the consumed side,
            // exports on the generated side. Houses here never export —
            // surplus beyond the battery is curtailed, not sold back — and
            // neighbour transfers are community-internal, so the monitor's
            // sum is minus the community's total grid import.
            cms.post_status(&StatusReport {
                agent_id: outcome.agent_id.clone(),
                slot: cms_slot,
                consumed_kwh: outcome.drawn_from_grid,
                generated_kwh: 0.0,
            })?;
        }
        let reward = cms.global_reward(cms_slot)?;
        community_status_kwh += reward;
        for agent in agents.iter_mut() {
            agent.end_slot(reward)?;
        }
        if let Some(cb) = on_step.as_deref_mut() {
            cb(slot, &outcomes);
        }
    }

    let mut stats = Vec::with_capacity(n);
    for (i, agent) in agents.iter_mut().enumerate() {
        stats.push(agent.end_episode(env.battery_soc(i))?);
    }
    Ok(EpisodeReport { community_status_kwh, agents: stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cms::Cms;
    use crate::data::{synthesize_consumption, synthesize_exposure};
    use crate::domain::{table1_configs, EnergyLevel, ScenarioConfig, Season};

    fn join_all(cms: &mut Cms, agents: &[HouseAgent]) {
        for agent in agents {
            cms.join(agent.id()).unwrap();
        }
    }

    fn build(config: &ScenarioConfig, strategy: Strategy) -> (Vec<HouseAgent>, Environment) {
        let exposure = synthesize_exposure(11, config.season, config.days);
        let profiles: Vec<_> = config
            .houses
            .iter()
            .enumerate()
            .map(|(k, h)| {
                let mean = h.consumption.daily_mean_kwh(config.season).unwrap();
                synthesize_consumption(100 + k as u64, mean, config.days)
            })
            .collect();
        let env = Environment::new(config, &profiles, &exposure).unwrap();
        let agents = config
            .houses
            .iter()
            .enumerate()
            .map(|(k, h)| HouseAgent::new(&h.agent_id, strategy, &config.params, 7 + k as u64, 70 + k as u64))
            .collect();
        (agents, env)
    }

    fn small_config() -> ScenarioConfig {
        let (mut winter, _) = table1_configs();
        winter.days = 1;
        winter
    }

    #[test]
    fn decision_chaining_builds_exact_transitions() {
        let params = SimParams::default();
        let mut agent = HouseAgent::new("solo", Strategy::Learned, &params, 1, 2);
        agent.begin_episode(0.0);

        // Slot 0: deficit of 1.0 kWh → Medium level, request actions legal.
        let a0 = agent.decide(0, 0, -1.0, None).unwrap();
        assert!(matches!(a0, Action::RequestNeighbour | Action::RequestGrid));
        agent.end_slot(0.5).unwrap();
        assert_eq!(agent.transitions_recorded(), 0, "single decision is carried, not yet closed");

        // Slot 1: surplus of 2.0 kWh → High level, store only.
        let a1 = agent.decide(1, 0, 2.0, None).unwrap();
        assert_eq!(a1, Action::StoreExcess);
        agent.end_slot(0.25).unwrap();

        let stats = agent.end_episode(0.0).unwrap();
        assert_eq!(stats.decisions, 2);
        assert_eq!(agent.transitions_recorded(), 2);

        let replay = agent.replay().unwrap();
        let first = replay.get(0).unwrap();
        assert_eq!(first.state, StateKey::new(0, 0, EnergyLevel::Medium).unwrap());
        assert_eq!(first.action, a0);
        assert_eq!(first.reward, 0.5);
        assert_eq!(first.next_state, StateKey::new(1, 0, EnergyLevel::High).unwrap());
        assert_eq!(first.next_legal, ActionSet::single(Action::StoreExcess));
        assert!(!first.terminal);

        let last = replay.get(1).unwrap();
        assert_eq!(last.state, StateKey::new(1, 0, EnergyLevel::High).unwrap());
        assert_eq!(last.reward, 0.25);
        assert!(last.terminal);
        assert!(last.next_legal.is_empty());
    }

    #[test]
    fn slot_reward_lands_on_the_final_decision_of_the_slot() {
        let params = SimParams::default();
        let mut agent = HouseAgent::new("donor", Strategy::Learned, &params, 3, 4);
        agent.begin_episode(0.0);

        // Primary store decision, then a grant query in the same slot.
        agent.decide(5, 0, 0.8, None).unwrap();
        let request = EnergyRequest { requester_id: "needy".into(), amount: 0.4, remaining: 0.4 };
        let verdict = agent.decide(5, 0, 0.8, Some(&request)).unwrap();
        assert!(matches!(verdict, Action::GrantRequest | Action::DenyRequest));
        agent.end_slot(-1.5).unwrap();

        assert_eq!(agent.transitions_recorded(), 1);
        let t = agent.replay().unwrap().get(0).unwrap();
        assert_eq!(t.reward, 0.0, "intermediate decision carries no immediate reward");
        assert_eq!(t.action, Action::StoreExcess);
        assert_eq!(
            t.next_legal,
            ActionSet::of(&[Action::GrantRequest, Action::DenyRequest]),
            "successor is the grant decision point"
        );
        agent.end_episode(0.0).unwrap();
        assert_eq!(agent.transitions_recorded(), 2);
        let last = agent.replay().unwrap().get(1).unwrap();
        assert_eq!(last.action, verdict);
        assert_eq!(last.reward, -1.5, "slot reward books on the slot's final decision");
        // The rewards across the agent's transitions telescope to the
        // episode total regardless of how many decisions a slot held.
        let replay = agent.replay().unwrap();
        let summed: f64 = (0..replay.len()).map(|k| replay.get(k).unwrap().reward).sum();
        assert_eq!(summed, -1.5);
    }

    #[test]
    fn three_day_episode_reaches_144_decision_states() {
        let (winter, _) = table1_configs();
        let (mut agents, mut env) = build(&winter, Strategy::Random);
        let mut cms = Cms::new();
        join_all(&mut cms, &agents);
        let report = run_episode(&mut agents, &mut env, &mut cms, 0.0, 0, None).unwrap();
        for stats in &report.agents {
            assert!(stats.decisions >= 144, "{} made {} decisions", stats.agent_id, stats.decisions);
        }
    }

    #[test]
    fn replay_grows_by_one_transition_per_decision() {
        let config = small_config();
        let (mut agents, mut env) = build(&config, Strategy::Learned);
        let mut cms = Cms::new();
        join_all(&mut cms, &agents);
        let report = run_episode(&mut agents, &mut env, &mut cms, 1.0, 0, None).unwrap();
        for (agent, stats) in agents.iter().zip(&report.agents) {
            assert_eq!(agent.transitions_recorded() as u64, stats.decisions);
            let replay = agent.replay().unwrap();
            let terminals = (0..replay.len()).filter(|&k| replay.get(k).unwrap().terminal).count();
            assert_eq!(terminals, 1, "exactly one terminal transition per episode");
            assert!(replay.latest().unwrap().terminal);
        }
    }

    #[test]
    fn identical_runs_produce_identical_reports() {
        let config = small_config();
        let run = || {
            let (mut agents, mut env) = build(&config, Strategy::Learned);
            let mut cms = Cms::new();
            join_all(&mut cms, &agents);
            let mut slots_seen = 0usize;
            let mut cb = |_: usize, outcomes: &[StepOutcome]| {
                slots_seen += 1;
                assert_eq!(outcomes.len(), 3);
            };
            let report =
                run_episode(&mut agents, &mut env, &mut cms, 0.37, 0, Some(&mut cb)).unwrap();
            (report, slots_seen)
        };
        let (r1, slots1) = run();
        let (r2, slots2) = run();
        assert_eq!(r1, r2);
        assert_eq!(slots1, 48);
        assert_eq!(slots2, 48);
    }

    #[test]
    fn surplus_agents_never_request_energy() {
        let (_, mut summer) = table1_configs();
        summer.days = 1;
        summer.season = Season::Summer;
        // Yield high enough that every daylight-heavy house stays
        // self-sufficient; Dave (no panels) still requests.
        summer.params.yield_factor = 0.12;
        let (mut agents, mut env) = build(&summer, Strategy::Random);
        let mut cms = Cms::new();
        join_all(&mut cms, &agents);
        let report = run_episode(&mut agents, &mut env, &mut cms, 0.0, 0, None).unwrap();
        let alice = &report.agents[0];
        assert_eq!(alice.agent_id, "alice");
        assert_eq!(alice.actions[Action::RequestGrid.index()], 0);
        assert_eq!(alice.actions[Action::RequestNeighbour.index()], 0);
        assert!(alice.grid_kwh == 0.0);
    }

    #[test]
    fn epsilon_one_matches_the_random_baseline_distribution() {
        let config = small_config();
        let totals = |strategy: Strategy, epsilon: f64| -> [u64; Action::COUNT] {
            let (mut agents, mut env) = build(&config, strategy);
            let mut cms = Cms::new();
            join_all(&mut cms, &agents);
            let mut first = 0u64;
            let mut sums = [0u64; Action::COUNT];
            for episode in 0..4 {
                let report =
                    run_episode(&mut agents, &mut env, &mut cms, epsilon, first, None).unwrap();
                first += env.horizon_slots() as u64;
                for stats in &report.agents {
                    for (total, c) in sums.iter_mut().zip(stats.actions) {
                        *total += c;
                    }
                }
                let _ = episode;
            }
            sums
        };
        let learned = totals(Strategy::Learned, 1.0);
        let random = totals(Strategy::Random, f64::NAN); // baselines ignore ε
        let n1: u64 = learned.iter().sum();
        let n2: u64 = random.iter().sum();
        // Two-sample χ² over the five action kinds; 0.1% critical value for
        // 4 degrees of freedom is 18.47.
        let mut chi2 = 0.0;
        for k in 0..Action::COUNT {
            let pooled = (learned[k] + random[k]) as f64 / (n1 + n2) as f64;
            if pooled == 0.0 {
                continue;
            }
            let (e1, e2) = (n1 as f64 * pooled, n2 as f64 * pooled);
            chi2 += (learned[k] as f64 - e1).powi(2) / e1 + (random[k] as f64 - e2).powi(2) / e2;
        }
        assert!(chi2 < 18.47, "χ² = {chi2}, learned {learned:?} vs random {random:?}");
    }

    #[test]
    fn community_status_telescopes_to_episode_reward() {
        let config = small_config();
        let (mut agents, mut env) = build(&config, Strategy::AlwaysShare);
        let mut cms = Cms::new();
        join_all(&mut cms, &agents);
        let report = run_episode(&mut agents, &mut env, &mut cms, 0.0, 0, None).unwrap();
        let episode = cms.episode_reward(0, env.horizon_slots() as u64).unwrap();
        assert!((report.community_status_kwh - episode).abs() <= 1e-9);
    }

    #[test]
    fn unregistered_agents_fail_cleanly() {
        let config = small_config();
        let (mut agents, mut env) = build(&config, Strategy::NeverShare);
        let mut cms = Cms::new();
        let err = run_episode(&mut agents, &mut env, &mut cms, 0.0, 0, None).unwrap_err();
        assert!(matches!(err, AgentError::Cms(CmsError::UnknownAgent(_))));
    }
}

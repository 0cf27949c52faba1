//! Exploration-rate schedule: ε starts at 1 and is multiplied by a decay
//! factor once per tenth of the training run, then drops to 0 for
//! post-training exploitation.

/// Step-decay ε schedule over a fixed number of training episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    total_episodes: u32,
    decay_factor: f64,
}

impl EpsilonSchedule {
    pub fn new(total_episodes: u32) -> Self {
        assert!(total_episodes >= 1, "schedule needs at least one episode");
        EpsilonSchedule { total_episodes, decay_factor: 0.8 }
    }

    pub fn total_episodes(&self) -> u32 {
        self.total_episodes
    }

    /// Episodes between decay steps: a tenth of the run, at least one.
    pub fn decay_interval(&self) -> u32 {
        (self.total_episodes / 10).max(1)
    }

    /// ε for a zero-based episode index; indices at or past the end of
    /// training are exploitation (ε = 0).
    pub fn epsilon(&self, episode: u32) -> f64 {
        if episode >= self.total_episodes {
            return 0.0;
        }
        self.decay_factor.powi((episode / self.decay_interval()) as i32)
    }
}

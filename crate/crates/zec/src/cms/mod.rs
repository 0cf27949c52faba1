//! Community monitoring service: membership management, per-slot collection
//! of each house's energy status, and the community-wide aggregate that
//! doubles as the shared reward. The in-process store is the simulation
//! default; [`http`] serves the same operations over the wire.

pub mod http;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, PoisonError};
use thiserror::Error;

/// Version stamped on every service response.
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CmsError {
    #[error("agent `{0}` is already a member")]
    DuplicateJoin(String),
    #[error("agent `{0}` is not a member")]
    UnknownAgent(String),
    #[error("agent id `{0}` is invalid (need non-empty [A-Za-z0-9_.-])")]
    InvalidAgentId(String),
    #[error("agent `{agent}` posted slot {slot} after slot {last}")]
    SlotRegression { agent: String, slot: u64, last: u64 },
    #[error("agent `{agent}` posted a different report for slot {slot}")]
    ConflictingReport { agent: String, slot: u64 },
    #[error("no reports stored for slot {0}")]
    NoData(u64),
    #[error("invalid report: {0}")]
    InvalidReport(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

/// One house's energy bookkeeping for one half-hour slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusReport {
    pub agent_id: String,
    pub slot: u64,
    pub consumed_kwh: f64,
    pub generated_kwh: f64,
}

/// Proof of membership; `joined_at` is a logical join sequence number, not
/// wall time, so runs stay reproducible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipToken {
    pub agent_id: String,
    pub joined_at: u64,
}

/// The service surface agents program against, satisfied by the in-process
/// store, its thread-safe wrapper, and the HTTP client.
pub trait CommunityMonitor {
    fn join(&mut self, agent_id: &str) -> Result<MembershipToken, CmsError>;
    fn leave(&mut self, agent_id: &str) -> Result<(), CmsError>;
    /// Active member ids in ascending order.
    fn list(&self) -> Result<Vec<String>, CmsError>;
    fn post_status(&mut self, report: &StatusReport) -> Result<(), CmsError>;
    /// Σ (generated − consumed) over the agents that reported for `slot`.
    fn community_status(&self, slot: u64) -> Result<f64, CmsError>;
    /// The shared reward: the negated community deficit, which is exactly
    /// the community status. Every agent querying a slot sees one value.
    fn global_reward(&self, slot: u64) -> Result<f64, CmsError>;
}

fn valid_agent_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || "_.-".contains(c))
}

/// In-memory service state. All maps are ordered so aggregation order — and
/// therefore every floating-point sum — is deterministic.
#[derive(Debug, Default)]
pub struct Cms {
    members: BTreeMap<String, u64>,
    join_counter: u64,
    /// slot → agent → (consumed, generated)
    reports: BTreeMap<u64, BTreeMap<String, (f64, f64)>>,
    last_slot: BTreeMap<String, u64>,
    partial_queries: AtomicU64,
}

impl Cms {
    pub fn new() -> Self {
        Self::default()
    }

    /// How many status/reward queries were answered while at least one
    /// active member had not reported for the queried slot.
    pub fn partial_data_queries(&self) -> u64 {
        self.partial_queries.load(Ordering::Relaxed)
    }

    /// Episode-level reward: the slot rewards summed over a contiguous slot
    /// range. Errors if any slot in the range has no reports.
    pub fn episode_reward(&self, first_slot: u64, slot_count: u64) -> Result<f64, CmsError> {
        let mut total = 0.0;
        for slot in first_slot..first_slot + slot_count {
            total += self.status_sum(slot)?;
        }
        Ok(total)
    }

    fn status_sum(&self, slot: u64) -> Result<f64, CmsError> {
        let slot_reports = self.reports.get(&slot).filter(|m| !m.is_empty()).ok_or(CmsError::NoData(slot))?;
        if self.members.keys().any(|id| !slot_reports.contains_key(id)) {
            self.partial_queries.fetch_add(1, Ordering::Relaxed);
        }
        Ok(slot_reports.values().map(|(consumed, generated)| generated - consumed).sum())
    }
}

impl CommunityMonitor for Cms {
    fn join(&mut self, agent_id: &str) -> Result<MembershipToken, CmsError> {
        if !valid_agent_id(agent_id) {
            return Err(CmsError::InvalidAgentId(agent_id.to_string()));
        }
        if self.members.contains_key(agent_id) {
            return Err(CmsError::DuplicateJoin(agent_id.to_string()));
        }
        self.join_counter += 1;
        self.members.insert(agent_id.to_string(), self.join_counter);
        Ok(MembershipToken { agent_id: agent_id.to_string(), joined_at: self.join_counter })
    }

    fn leave(&mut self, agent_id: &str) -> Result<(), CmsError> {
        if self.members.remove(agent_id).is_none() {
            return Err(CmsError::UnknownAgent(agent_id.to_string()));
        }
        // A rejoining agent starts a fresh reporting history; stored reports
        // stay, since the community status covers whoever reported.
        self.last_slot.remove(agent_id);
        Ok(())
    }

    fn list(&self) -> Result<Vec<String>, CmsError> {
        Ok(self.members.keys().cloned().collect())
    }

    fn post_status(&mut self, report: &StatusReport) -> Result<(), CmsError> {
        if !self.members.contains_key(&report.agent_id) {
            return Err(CmsError::UnknownAgent(report.agent_id.clone()));
        }
        for (label, value) in [("consumed_kwh", report.consumed_kwh), ("generated_kwh", report.generated_kwh)] {
            if !value.is_finite() || value < 0.0 {
                return Err(CmsError::InvalidReport(format!("{label} must be finite and non-negative, got {value}")));
            }
        }
        if let Some(&last) = self.last_slot.get(&report.agent_id) {
            if report.slot < last {
                return Err(CmsError::SlotRegression { agent: report.agent_id.clone(), slot: report.slot, last });
            }
        }
        let slot_reports = self.reports.entry(report.slot).or_default();
        if let Some(&(consumed, generated)) = slot_reports.get(&report.agent_id) {
            // Idempotent on an exact duplicate; a different report for the
            // same slot would silently corrupt the aggregate, so reject it.
            return if consumed == report.consumed_kwh && generated == report.generated_kwh {
                Ok(())
            } else {
                Err(CmsError::ConflictingReport { agent: report.agent_id.clone(), slot: report.slot })
            };
        }
        slot_reports.insert(report.agent_id.clone(), (report.consumed_kwh, report.generated_kwh));
        self.last_slot.insert(report.agent_id.clone(), report.slot);
        Ok(())
    }

    fn community_status(&self, slot: u64) -> Result<f64, CmsError> {
        self.status_sum(slot)
    }

    fn global_reward(&self, slot: u64) -> Result<f64, CmsError> {
        self.status_sum(slot)
    }
}

/// Cheaply clonable, thread-safe handle to one shared [`Cms`]; this is what
/// the HTTP server and concurrent tests hold.
#[derive(Debug, Clone, Default)]
pub struct SharedCms(Arc<Mutex<Cms>>);

impl SharedCms {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Cms> {
        // Membership state stays valid even if a holder panicked mid-call;
        // every mutation leaves the maps consistent.
        self.0.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn partial_data_queries(&self) -> u64 {
        self.lock().partial_data_queries()
    }

    pub fn episode_reward(&self, first_slot: u64, slot_count: u64) -> Result<f64, CmsError> {
        self.lock().episode_reward(first_slot, slot_count)
    }
}

impl CommunityMonitor for SharedCms {
    fn join(&mut self, agent_id: &str) -> Result<MembershipToken, CmsError> {
        self.lock().join(agent_id)
    }

    fn leave(&mut self, agent_id: &str) -> Result<(), CmsError> {
        self.lock().leave(agent_id)
    }

    fn list(&self) -> Result<Vec<String>, CmsError> {
        self.lock().list()
    }

    fn post_status(&mut self, report: &StatusReport) -> Result<(), CmsError> {
        self.lock().post_status(report)
    }

    fn community_status(&self, slot: u64) -> Result<f64, CmsError> {
        self.lock().community_status(slot)
    }

    fn global_reward(&self, slot: u64) -> Result<f64, CmsError> {
        self.lock().global_reward(slot)
    }
}

//! Deterministic multi-agent simulator of a nearly-zero-energy community.
//!
//! Each house is an agent with a consumption profile, optional solar
//! generation, and a battery bank. Agents pick one of five energy actions
//! every half-hour slot; a settlement protocol moves energy between houses,
//! batteries, and the supply grid. Learning agents train a small DQN against
//! a shared community reward served by a monitoring service; fixed baseline
//! strategies (always share, never share, random) provide comparisons.
//!
//! Everything is reproducible: all randomness flows from the scenario seed,
//! and identical configurations produce bit-identical reports.

pub mod agent;
pub mod baselines;
pub mod cms;
pub mod config;
pub mod data;
pub mod domain;
pub mod drl;
pub mod env;
pub mod harness;

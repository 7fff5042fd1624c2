//! Offloading policies: fixed baselines, tabular Q-learning and DQN.
//!
//! Learners drive any [`Environment`]: the offloading simulator or a small
//! finite MDP used as an oracle. Every miner is an independent agent that
//! sees only its own observation.

pub mod baseline;
pub mod dqn;
pub mod explore;
pub mod mdp;
pub mod replay;
pub mod tabular;

use crate::config::SimConfig;
use crate::env::{Action, MecEnv, Observation, SlotReport};
use crate::error::EnvError;
use crate::metrics::SlotSummary;

pub use baseline::{baseline_episode, baseline_policy, BaselineKind};
pub use dqn::{drlo_episode, DqnAgent};
pub use explore::{argmax, epsilon_greedy, EpsilonSchedule};
pub use mdp::{
    three_state_ring, toy_offload_mdp, two_state_chain, value_iteration, FiniteMdp, MdpEnv,
    ValueIteration,
};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::{q_update, rlo_episode, QTable, TabularTransition};

/// What a learner needs from an environment.
pub trait Environment {
    fn num_agents(&self) -> usize;
    /// Binary decisions per agent; the joint action space has 2^M members.
    fn num_tasks(&self) -> usize;
    /// Size of the tabular state index space.
    fn num_states(&self) -> usize;
    /// Length of the network input vector.
    fn feature_len(&self) -> usize;
    /// Tabular index of the agent's current state.
    fn state_index(&self, agent: usize) -> usize;
    /// Network input for the agent's current state.
    fn features(&self, agent: usize) -> Vec<f64>;
    fn step(&mut self, actions: &[Action]) -> Result<SlotSummary, EnvError>;
    fn is_done(&self) -> bool;
    /// Slots in one episode.
    fn horizon(&self) -> usize;
}

/// Bin of `v` among `bins` uniform bins over `[lo, hi]`, clamped.
fn bucket(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo || bins <= 1 {
        return 0;
    }
    let frac = (v - lo) / (hi - lo);
    ((frac * bins as f64).floor().max(0.0) as usize).min(bins - 1)
}

/// Upper end of the D1 and D0 bucket ranges: one full task per slot.
pub fn size_range_max(cfg: &SimConfig) -> f64 {
    cfg.num_tasks as f64 * cfg.max_task_bits()
}

/// Number of Q-table states for `cfg`.
pub fn num_discrete_states(cfg: &SimConfig) -> usize {
    let b = cfg.learning.size_bins;
    b * b * 2 * cfg.learning.hash_bins
}

/// Tabular state index of an observation.
///
/// Total D1 and total D0 over the miner's tasks each fall into one of `B`
/// uniform bins over `[0, M·max task size]`; the channel adds a binary
/// factor and the hash power one of `hash_bins` bins over its range. The
/// index is the mixed-radix number `((d1·B + d0)·2 + g)·hash_bins + p`.
pub fn discretize(obs: &Observation, cfg: &SimConfig) -> usize {
    let b = cfg.learning.size_bins;
    let hb = cfg.learning.hash_bins;
    let d_max = size_range_max(cfg);
    let d1 = bucket(obs.new_bits.iter().sum(), 0.0, d_max, b);
    let d0 = bucket(obs.buffered_bits.iter().sum(), 0.0, d_max, b);
    let g = usize::from(obs.channel.is_good(cfg.channel_good_threshold));
    let [p_lo, p_hi] = cfg.miner_hash_range;
    let p = bucket(obs.hash_power, p_lo, p_hi, hb);
    ((d1 * b + d0) * 2 + g) * hb + p
}

/// Length of [`features`] for `cfg`: D1 and D0 per task, then g, p and Y.
pub fn feature_len(cfg: &SimConfig) -> usize {
    2 * cfg.num_tasks + 3
}

/// Network input: every component scaled into [0, 1] by its range and
/// clamped. D0 is scaled by twice the largest task size.
pub fn features(obs: &Observation, cfg: &SimConfig) -> Vec<f64> {
    let task_max = cfg.max_task_bits().max(f64::MIN_POSITIVE);
    let unit = |v: f64, scale: f64| (v / scale).clamp(0.0, 1.0);
    let mut f = Vec::with_capacity(feature_len(cfg));
    f.extend(obs.new_bits.iter().map(|&d| unit(d, task_max)));
    f.extend(obs.buffered_bits.iter().map(|&d| unit(d, 2.0 * task_max)));
    f.push(obs.channel.gain());
    let [p_lo, p_hi] = cfg.miner_hash_range;
    let span = p_hi - p_lo;
    let p = if span > 0.0 {
        ((obs.hash_power - p_lo) / span).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let c = cfg.hash_price_tokens_per_hash_s;
    let y = if span > 0.0 {
        ((obs.payment - c * p_lo) / (c * span)).clamp(0.0, 1.0)
    } else {
        0.0
    };
    f.push(p);
    f.push(y);
    f
}

/// Collapses a slot report into system-wide figures.
pub fn summarize_slot(report: &SlotReport) -> SlotSummary {
    let mut s = SlotSummary {
        rewards: Vec::with_capacity(report.outcomes.len()),
        queue_cycles: report.queue_after,
        ..SlotSummary::default()
    };
    let mut offloaded = 0usize;
    let mut tasks = 0usize;
    for o in &report.outcomes {
        s.rewards.push(o.reward);
        s.privacy += o.privacy;
        s.energy_j += o.energy_j;
        s.latency_s += o.latency_s;
        s.cost += o.cost;
        s.mining_reward += o.mining_reward;
        s.deadline_violations += o.deadline_violations() as u32;
        offloaded += o.tasks.iter().filter(|t| t.offloaded).count();
        tasks += o.tasks.len();
    }
    s.offload_fraction = if tasks == 0 {
        0.0
    } else {
        offloaded as f64 / tasks as f64
    };
    s
}

impl Environment for MecEnv {
    fn num_agents(&self) -> usize {
        self.config().num_miners
    }

    fn num_tasks(&self) -> usize {
        self.config().num_tasks
    }

    fn num_states(&self) -> usize {
        num_discrete_states(self.config())
    }

    fn feature_len(&self) -> usize {
        feature_len(self.config())
    }

    fn state_index(&self, agent: usize) -> usize {
        discretize(&self.miners()[agent].observation(), self.config())
    }

    fn features(&self, agent: usize) -> Vec<f64> {
        features(&self.miners()[agent].observation(), self.config())
    }

    fn step(&mut self, actions: &[Action]) -> Result<SlotSummary, EnvError> {
        MecEnv::step(self, actions).map(|r| summarize_slot(&r))
    }

    fn is_done(&self) -> bool {
        MecEnv::is_done(self)
    }

    fn horizon(&self) -> usize {
        self.config().total_slots
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ChannelState;

    fn obs(d1: f64, d0: f64, g: ChannelState, p: f64, cfg: &SimConfig) -> Observation {
        Observation {
            new_bits: vec![d1 / 2.0, d1 / 2.0],
            buffered_bits: vec![d0 / 2.0, d0 / 2.0],
            channel: g,
            hash_power: p,
            payment: cfg.hash_price_tokens_per_hash_s * p,
        }
    }

    #[test]
    fn origin_cell_is_zero() {
        let cfg = SimConfig::default();
        let o = obs(0.0, 0.0, ChannelState::Bad, cfg.miner_hash_range[0], &cfg);
        assert_eq!(discretize(&o, &cfg), 0);
    }

    #[test]
    fn same_buckets_same_index() {
        let cfg = SimConfig::default();
        let a = obs(10_000.0, 5_000.0, ChannelState::Good, 3e7, &cfg);
        let b = obs(12_000.0, 6_000.0, ChannelState::Good, 3.1e7, &cfg);
        assert_eq!(discretize(&a, &cfg), discretize(&b, &cfg));
    }

    #[test]
    fn bucket_grid_is_a_bijection() {
        let cfg = SimConfig::default();
        let b = cfg.learning.size_bins;
        let hb = cfg.learning.hash_bins;
        let d_max = size_range_max(&cfg);
        let [p_lo, p_hi] = cfg.miner_hash_range;
        let centre = |i: usize, n: usize, lo: f64, hi: f64| lo + (hi - lo) * (i as f64 + 0.5) / n as f64;
        let mut seen = std::collections::BTreeSet::new();
        for d1 in 0..b {
            for d0 in 0..b {
                for g in [ChannelState::Bad, ChannelState::Good] {
                    for p in 0..hb {
                        let o = obs(
                            centre(d1, b, 0.0, d_max),
                            centre(d0, b, 0.0, d_max),
                            g,
                            centre(p, hb, p_lo, p_hi),
                            &cfg,
                        );
                        let idx = discretize(&o, &cfg);
                        assert!(idx < num_discrete_states(&cfg));
                        seen.insert(idx);
                    }
                }
            }
        }
        assert_eq!(seen.len(), b * b * 2 * hb);
        assert_eq!(seen.len(), num_discrete_states(&cfg));
    }

    #[test]
    fn out_of_range_values_clamp() {
        let cfg = SimConfig::default();
        let o = obs(1e12, 1e12, ChannelState::Good, 1e12, &cfg);
        assert_eq!(discretize(&o, &cfg), num_discrete_states(&cfg) - 1);
        let f = features(&o, &cfg);
        assert_eq!(f.len(), feature_len(&cfg));
        assert!(f.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

//! Simulation and learning parameters.
//!
//! [`SimConfig`] carries every model constant. Sizes are in bits, times in
//! seconds, energies in joules and rewards in tokens. Values left out of a
//! config file fall back to the defaults documented on each field.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Bits in one kilobyte as used for task and block sizes (1 kB = 8000 bits).
pub const BITS_PER_KB: f64 = 8000.0;

/// Largest task count supported by the joint Q-value head (2^M outputs).
pub const MAX_JOINT_TASKS: usize = 10;

/// Which immediate reward the environment emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// `w_P·P + w_R·R_mining − w_C·C`
    Eq17,
    /// `w_P·P − w_C·C` (no mining term)
    Eq21,
}

/// How the per-slot mining reward is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiningMode {
    /// `R·P_win − Y` every slot.
    Expected,
    /// `R` with probability `P_win`, else 0, minus `Y`.
    Sampled,
}

/// Output layer of the DQN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// 2^M identity outputs, one Q-value per joint action.
    Joint,
    /// M sigmoid outputs, one relaxed offload score per task.
    Relaxed,
}

/// Hyperparameters shared by the tabular and deep learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    /// Discount factor γ.
    pub discount: f64,
    /// Step size α of the tabular update.
    pub tabular_learning_rate: f64,
    /// SGD learning rate of the online network.
    pub nn_learning_rate: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Slots over which ε decays linearly from start to end.
    pub epsilon_decay_slots: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub hidden_layers: Vec<usize>,
    /// Train steps between target-network syncs.
    pub target_sync_period: usize,
    pub head: HeadKind,
    /// Uniform bins per buffer dimension (D1 and D0) in the Q-table index.
    pub size_bins: usize,
    /// Bins over the miner hash-power range in the Q-table index.
    pub hash_bins: usize,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            discount: 0.85,
            tabular_learning_rate: 0.1,
            nn_learning_rate: 0.01,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_slots: 2000,
            replay_capacity: 100_000,
            batch_size: 128,
            hidden_layers: vec![300, 200],
            target_sync_period: 200,
            head: HeadKind::Joint,
            size_bins: 10,
            hash_bins: 4,
        }
    }
}

/// Every constant of the offloading model plus learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Number of miners N.
    pub num_miners: usize,
    /// Tasks per miner per slot M.
    pub num_tasks: usize,
    pub slot_duration_s: f64,
    /// Episode length T in slots.
    pub total_slots: usize,
    /// Uplink rate r_n shared by all miners.
    pub uplink_rate_bits_per_s: f64,
    /// Edge server capacity F.
    pub mec_capacity_cycles_per_s: f64,
    /// Identical CPUs of capacity F draining the shared queue. Queuing and
    /// processing latency still use a single CPU's rate.
    pub mec_parallel_units: f64,
    /// Processing density X.
    pub cycles_per_bit: f64,
    /// Deadline τ.
    pub deadline_s: f64,
    /// Local processing time per bit t_l.
    pub local_time_s_per_bit: f64,
    /// Local energy per bit e_l.
    pub local_energy_j_per_bit: f64,
    /// Miner transmit power P^M.
    pub miner_tx_power_w: f64,
    /// Edge circuit power while a task waits P^C.
    pub mec_circuit_power_w: f64,
    /// Effective switched capacitance γ_E of the edge CPU.
    pub mec_energy_coeff: f64,
    /// Gain threshold ζ separating good from bad channels.
    pub channel_good_threshold: f64,
    /// Probability h that the channel keeps its state for another slot.
    pub channel_stay_prob: f64,
    /// Weight λ of location privacy relative to usage-pattern privacy.
    pub privacy_location_weight: f64,
    /// Usage-pattern privacy is measured in multiples of this many bits.
    pub privacy_unit_bits: f64,
    pub task_size_range_bits: [f64; 2],
    pub block_size_range_bits: [f64; 2],
    /// Miner hash power range p (Hash/s).
    pub miner_hash_range: [f64; 2],
    /// Network hash power range H (Hash/s).
    pub network_hash_range: [f64; 2],
    /// Block reward R.
    pub mining_reward_tokens: f64,
    /// Orphaning rate η (1/s).
    pub orphan_rate_eta: f64,
    /// Block propagation time per bit k_prop.
    pub propagation_s_per_bit: f64,
    /// Price c_hash of one Hash/s for one slot; payment Y = c_hash·p.
    pub hash_price_tokens_per_hash_s: f64,
    /// Energy/latency tradeoff β. Energy weight is β, latency weight 1 − β.
    pub beta: f64,
    /// Privacy scale w_P in the reward.
    pub privacy_weight: f64,
    /// Mining scale w_R in the reward.
    pub mining_weight: f64,
    /// Cost scale w_C in the reward.
    pub cost_weight: f64,
    /// Bits a miner can process locally per task per slot.
    pub local_bit_budget_per_slot: f64,
    /// Reward subtracted per task whose latency exceeds the deadline.
    pub deadline_penalty: f64,
    pub reward_mode: RewardMode,
    pub mining_mode: MiningMode,
    pub rng_seed: u64,
    pub learning: LearningConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_miners: 1,
            num_tasks: 2,
            slot_duration_s: 1.0,
            total_slots: 8000,
            uplink_rate_bits_per_s: 4.0e6,
            mec_capacity_cycles_per_s: 1.0e10,
            mec_parallel_units: 10.0,
            cycles_per_bit: 18_000.0,
            deadline_s: 15.0,
            local_time_s_per_bit: 4.75e-7,
            local_energy_j_per_bit: 3.25e-7,
            miner_tx_power_w: 0.1,
            mec_circuit_power_w: 0.05,
            mec_energy_coeff: 1.0e-31,
            channel_good_threshold: 0.8,
            channel_stay_prob: 0.95,
            privacy_location_weight: 0.95,
            privacy_unit_bits: 100.0 * BITS_PER_KB,
            task_size_range_bits: [50.0 * BITS_PER_KB, 150.0 * BITS_PER_KB],
            block_size_range_bits: [5.0 * BITS_PER_KB, 10.0 * BITS_PER_KB],
            miner_hash_range: [2.0e7, 1.0e8],
            network_hash_range: [1.0e12, 1.0e14],
            mining_reward_tokens: 30.0,
            orphan_rate_eta: 1.0 / 600.0,
            propagation_s_per_bit: 6.25e-5,
            hash_price_tokens_per_hash_s: 1.0e-12,
            beta: 0.5,
            privacy_weight: 1.0,
            mining_weight: 1.0,
            cost_weight: 1.0,
            local_bit_budget_per_slot: 80.0 * BITS_PER_KB,
            deadline_penalty: 0.0,
            reward_mode: RewardMode::Eq21,
            mining_mode: MiningMode::Expected,
            rng_seed: 0,
            learning: LearningConfig::default(),
        }
    }
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

fn unit_interval(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in [0, 1], got {v}")))
    }
}

fn range(field: &'static str, r: [f64; 2], allow_zero: bool) -> Result<(), ConfigError> {
    let ok_low = if allow_zero { r[0] >= 0.0 } else { r[0] > 0.0 };
    if !(r[0].is_finite() && r[1].is_finite() && ok_low && r[0] <= r[1]) {
        return Err(invalid(
            field,
            format!("expected finite [min, max] with min <= max, got {r:?}"),
        ));
    }
    Ok(())
}

impl SimConfig {
    /// Energy weight α1.
    pub fn energy_weight(&self) -> f64 {
        self.beta
    }

    /// Latency weight α2, always `1 − β`.
    pub fn latency_weight(&self) -> f64 {
        1.0 - self.beta
    }

    /// Largest D1 a task can carry.
    pub fn max_task_bits(&self) -> f64 {
        self.task_size_range_bits[1]
    }

    /// Checks every field, naming the first offender.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_miners == 0 {
            return Err(invalid("num_miners", "must be at least 1"));
        }
        if self.num_tasks == 0 {
            return Err(invalid("num_tasks", "must be at least 1"));
        }
        if self.total_slots == 0 {
            return Err(invalid("total_slots", "must be at least 1"));
        }
        positive("slot_duration_s", self.slot_duration_s)?;
        positive("uplink_rate_bits_per_s", self.uplink_rate_bits_per_s)?;
        positive("mec_capacity_cycles_per_s", self.mec_capacity_cycles_per_s)?;
        positive("mec_parallel_units", self.mec_parallel_units)?;
        positive("cycles_per_bit", self.cycles_per_bit)?;
        positive("deadline_s", self.deadline_s)?;
        positive("local_time_s_per_bit", self.local_time_s_per_bit)?;
        positive("local_energy_j_per_bit", self.local_energy_j_per_bit)?;
        positive("miner_tx_power_w", self.miner_tx_power_w)?;
        positive("mec_circuit_power_w", self.mec_circuit_power_w)?;
        positive("mec_energy_coeff", self.mec_energy_coeff)?;
        let zeta = self.channel_good_threshold;
        if !(zeta > 0.0 && zeta <= 1.0) {
            return Err(invalid(
                "channel_good_threshold",
                format!("must lie in (0, 1], got {zeta}"),
            ));
        }
        unit_interval("channel_stay_prob", self.channel_stay_prob)?;
        let lambda = self.privacy_location_weight;
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(invalid(
                "privacy_location_weight",
                format!("must lie in (0, 1), got {lambda}"),
            ));
        }
        positive("privacy_unit_bits", self.privacy_unit_bits)?;
        range("task_size_range_bits", self.task_size_range_bits, true)?;
        range("block_size_range_bits", self.block_size_range_bits, true)?;
        range("miner_hash_range", self.miner_hash_range, false)?;
        range("network_hash_range", self.network_hash_range, false)?;
        if self.miner_hash_range[1] > self.network_hash_range[0] {
            return Err(invalid(
                "miner_hash_range",
                "miner hash power may exceed network hash power",
            ));
        }
        positive("mining_reward_tokens", self.mining_reward_tokens)?;
        positive("orphan_rate_eta", self.orphan_rate_eta)?;
        positive("propagation_s_per_bit", self.propagation_s_per_bit)?;
        positive(
            "hash_price_tokens_per_hash_s",
            self.hash_price_tokens_per_hash_s,
        )?;
        unit_interval("beta", self.beta)?;
        non_negative("privacy_weight", self.privacy_weight)?;
        non_negative("mining_weight", self.mining_weight)?;
        non_negative("cost_weight", self.cost_weight)?;
        positive("local_bit_budget_per_slot", self.local_bit_budget_per_slot)?;
        non_negative("deadline_penalty", self.deadline_penalty)?;
        self.learning.validate(self.num_tasks)
    }
}

impl LearningConfig {
    /// Checks learner hyperparameters for a miner with `num_tasks` tasks.
    pub fn validate(&self, num_tasks: usize) -> Result<(), ConfigError> {
        let gamma = self.discount;
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(invalid(
                "learning.discount",
                format!("must lie in (0, 1), got {gamma}"),
            ));
        }
        let alpha = self.tabular_learning_rate;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(
                "learning.tabular_learning_rate",
                format!("must lie in (0, 1], got {alpha}"),
            ));
        }
        positive("learning.nn_learning_rate", self.nn_learning_rate)?;
        unit_interval("learning.epsilon_start", self.epsilon_start)?;
        unit_interval("learning.epsilon_end", self.epsilon_end)?;
        if self.epsilon_end > self.epsilon_start {
            return Err(invalid(
                "learning.epsilon_end",
                "must not exceed learning.epsilon_start",
            ));
        }
        if self.replay_capacity == 0 {
            return Err(invalid("learning.replay_capacity", "must be at least 1"));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(invalid(
                "learning.batch_size",
                "must be at least 1 and at most learning.replay_capacity",
            ));
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return Err(invalid("learning.hidden_layers", "layer sizes must be >= 1"));
        }
        if self.target_sync_period == 0 {
            return Err(invalid("learning.target_sync_period", "must be at least 1"));
        }
        if self.size_bins == 0 {
            return Err(invalid("learning.size_bins", "must be at least 1"));
        }
        if self.hash_bins == 0 {
            return Err(invalid("learning.hash_bins", "must be at least 1"));
        }
        if self.head == HeadKind::Joint && num_tasks > MAX_JOINT_TASKS {
            return Err(invalid(
                "num_tasks",
                format!("the joint head supports at most {MAX_JOINT_TASKS} tasks"),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn weights_sum_to_one() {
        for beta in [0.0, 0.3, 0.5, 0.8, 1.0] {
            let cfg = SimConfig {
                beta,
                ..SimConfig::default()
            };
            assert_eq!(cfg.energy_weight() + cfg.latency_weight(), 1.0);
        }
    }

    #[test]
    fn rejects_out_of_range_beta() {
        let cfg = SimConfig {
            beta: 1.5,
            ..SimConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn rejects_inverted_task_range() {
        let cfg = SimConfig {
            task_size_range_bits: [2.0, 1.0],
            ..SimConfig::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("task_size_range_bits"), "{err}");
    }

    #[test]
    fn lambda_must_be_open_interval() {
        for lambda in [0.0, 1.0] {
            let cfg = SimConfig {
                privacy_location_weight: lambda,
                ..SimConfig::default()
            };
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn joint_head_caps_task_count() {
        let cfg = SimConfig {
            num_tasks: 11,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
        let relaxed = SimConfig {
            num_tasks: 11,
            learning: LearningConfig {
                head: HeadKind::Relaxed,
                ..LearningConfig::default()
            },
            ..SimConfig::default()
        };
        relaxed.validate().unwrap();
    }
}

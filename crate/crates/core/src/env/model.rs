//! Pure cost, privacy and mining formulas.
//!
//! Each function evaluates one piece of the slot model for a single task or
//! miner. [`super::MecEnv`] composes them; tests call them directly.

use rand::Rng;

use super::{ChannelState, MinerState, ServerQueue, Task};
use crate::config::{MiningMode, RewardMode, SimConfig};
use crate::error::EnvError;

/// Latency and energy of one task on one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchCost {
    pub latency_s: f64,
    pub energy_j: f64,
}

/// Advances the two-state channel: keeps its state with probability `h`.
pub fn step_channel<R: Rng + ?Sized>(
    state: ChannelState,
    cfg: &SimConfig,
    rng: &mut R,
) -> ChannelState {
    // Always consume one draw so the stream does not depend on h.
    let u: f64 = rng.random();
    if u < cfg.channel_stay_prob {
        state
    } else {
        state.flipped()
    }
}

/// Draws a fresh task with uniform D1 and the given carried-over D0.
pub fn generate_task<R: Rng + ?Sized>(rng: &mut R, cfg: &SimConfig, carryover_bits: f64) -> Task {
    let [lo, hi] = cfg.task_size_range_bits;
    let u: f64 = rng.random();
    Task {
        new_bits: lo + (hi - lo) * u,
        buffered_bits: carryover_bits.max(0.0),
        cycles_per_bit: cfg.cycles_per_bit,
        deadline_s: cfg.deadline_s,
    }
}

/// Time to push the whole task over the uplink, `(D0 + D1) / r`.
pub fn uplink_latency(task: &Task, cfg: &SimConfig) -> f64 {
    task.total_bits() / cfg.uplink_rate_bits_per_s
}

/// Waiting time behind the queued work, `Q / F`.
pub fn queuing_latency(queue: &ServerQueue, cfg: &SimConfig) -> f64 {
    queue.pending_cycles / cfg.mec_capacity_cycles_per_s
}

/// Edge execution time, `(D0 + D1)·X / F`.
pub fn processing_delay(task: &Task, cfg: &SimConfig) -> f64 {
    task.total_bits() * task.cycles_per_bit / cfg.mec_capacity_cycles_per_s
}

/// Latency and energy when the task is offloaded behind `queue`.
pub fn offload_cost(task: &Task, queue: &ServerQueue, cfg: &SimConfig) -> BranchCost {
    let l_u = uplink_latency(task, cfg);
    let l_q = queuing_latency(queue, cfg);
    let l_p = processing_delay(task, cfg);
    let f = cfg.mec_capacity_cycles_per_s;
    let energy = cfg.miner_tx_power_w * l_u
        + cfg.mec_energy_coeff * f * f * f * l_p
        + cfg.mec_circuit_power_w * l_q;
    BranchCost {
        latency_s: l_u + l_p + l_q,
        energy_j: energy,
    }
}

/// Latency and energy when the task is kept on the miner.
pub fn local_cost(task: &Task, cfg: &SimConfig) -> BranchCost {
    let d = task.total_bits();
    BranchCost {
        latency_s: d * cfg.local_time_s_per_bit,
        energy_j: d * cfg.local_energy_j_per_bit,
    }
}

/// Usage-pattern privacy in bits: `|D0 − x·(D0 + D1)|` under a good channel.
pub fn usage_pattern_privacy(task: &Task, offload: bool, g: ChannelState, cfg: &SimConfig) -> f64 {
    if !g.is_good(cfg.channel_good_threshold) {
        return 0.0;
    }
    let x = if offload { 1.0 } else { 0.0 };
    (task.buffered_bits - x * task.total_bits()).abs()
}

/// Location privacy: 1 when a non-empty task is offloaded over a bad channel.
pub fn location_privacy(task: &Task, offload: bool, g: ChannelState, cfg: &SimConfig) -> f64 {
    let sends = offload && task.total_bits() > 0.0;
    if sends && !g.is_good(cfg.channel_good_threshold) {
        1.0
    } else {
        0.0
    }
}

/// `usage + λ·location`.
pub fn total_privacy(usage: f64, location: f64, cfg: &SimConfig) -> f64 {
    usage + cfg.privacy_location_weight * location
}

/// Share μ = p / H of the network hash rate.
pub fn relative_hash_power(hash_power: f64, network_hash: f64) -> Result<f64, EnvError> {
    if network_hash.is_nan() || network_hash <= 0.0 {
        return Err(EnvError::NonPositiveNetworkHash(network_hash));
    }
    Ok(hash_power / network_hash)
}

/// Win probability `μ·exp(−η·k_prop·s)` for a block of `block_bits`.
pub fn win_probability(mu: f64, block_bits: f64, cfg: &SimConfig) -> f64 {
    let propagation = cfg.propagation_s_per_bit * block_bits;
    mu * (-cfg.orphan_rate_eta * propagation).exp()
}

/// Mining reward for one slot, net of the hash-power payment.
pub fn mining_reward<R: Rng + ?Sized>(
    miner: &MinerState,
    block_bits: f64,
    network_hash: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<f64, EnvError> {
    let mu = relative_hash_power(miner.hash_power, network_hash)?;
    let p_win = win_probability(mu, block_bits, cfg);
    let gross = match cfg.mining_mode {
        MiningMode::Expected => cfg.mining_reward_tokens * p_win,
        MiningMode::Sampled => {
            if rng.random_bool(p_win.clamp(0.0, 1.0)) {
                cfg.mining_reward_tokens
            } else {
                0.0
            }
        }
    };
    Ok(gross - miner.payment)
}

/// Miner latency for a slot: the slowest task over both branches.
pub fn aggregate_latency(offload_latencies: &[f64], local_latencies: &[f64]) -> f64 {
    offload_latencies
        .iter()
        .chain(local_latencies)
        .fold(0.0, |acc, &l| acc.max(l))
}

/// Weighted cost of one miner: `Σ_m [α1·E_m + α2·L]` with the miner latency
/// `L` charged once per task.
pub fn system_cost(energies: &[f64], latency: f64, cfg: &SimConfig) -> f64 {
    let a1 = cfg.energy_weight();
    let a2 = cfg.latency_weight();
    energies.iter().map(|&e| a1 * e + a2 * latency).sum()
}

/// Immediate reward from its recorded components.
pub fn reward(cfg: &SimConfig, privacy: f64, mining: f64, cost: f64, violations: usize) -> f64 {
    let penalty = cfg.deadline_penalty * violations as f64;
    match cfg.reward_mode {
        RewardMode::Eq17 => {
            cfg.privacy_weight * privacy + cfg.mining_weight * mining - cfg.cost_weight * cost
                - penalty
        }
        RewardMode::Eq21 => cfg.privacy_weight * privacy - cfg.cost_weight * cost - penalty,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BITS_PER_KB;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn task(d1: f64, d0: f64) -> Task {
        Task {
            new_bits: d1,
            buffered_bits: d0,
            cycles_per_bit: 18_000.0,
            deadline_s: 15.0,
        }
    }

    /// Constants the worked examples were computed with.
    fn reference_cfg() -> SimConfig {
        SimConfig {
            uplink_rate_bits_per_s: 1e6,
            privacy_location_weight: 0.5,
            mec_energy_coeff: 1e-26,
            ..SimConfig::default()
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    }

    #[test]
    fn absorbing_chain_never_leaves() {
        let cfg = SimConfig {
            channel_stay_prob: 1.0,
            ..SimConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = ChannelState::Good;
        for _ in 0..1000 {
            g = step_channel(g, &cfg, &mut rng);
            assert_eq!(g, ChannelState::Good);
        }
    }

    #[test]
    fn stay_frequency_matches_h() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for start in [ChannelState::Good, ChannelState::Bad] {
            let n = 1_000_000;
            let stays = (0..n)
                .filter(|_| step_channel(start, &cfg, &mut rng) == start)
                .count();
            let freq = stays as f64 / n as f64;
            assert!((freq - 0.95).abs() < 0.005, "{start:?}: {freq}");
        }
    }

    #[test]
    fn uniform_task_mean() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| generate_task(&mut rng, &cfg, 0.0).new_bits)
            .sum::<f64>()
            / n as f64;
        let target = 100.0 * BITS_PER_KB;
        assert!(rel(mean, target) < 0.02, "{mean}");
    }

    #[test]
    fn generated_task_copies_constants() {
        let cfg = SimConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = generate_task(&mut rng, &cfg, 0.0);
        assert_eq!(t.buffered_bits, 0.0);
        assert_eq!(t.cycles_per_bit, 18_000.0);
        assert_eq!(t.deadline_s, 15.0);
        let t = generate_task(&mut rng, &cfg, 1234.0);
        assert_eq!(t.buffered_bits, 1234.0);
    }

    #[test]
    fn latency_components() {
        let cfg = reference_cfg();
        assert_eq!(uplink_latency(&task(0.0, 0.0), &cfg), 0.0);
        assert!(rel(uplink_latency(&task(640_000.0, 160_000.0), &cfg), 0.8) < 1e-12);
        assert!(rel(uplink_latency(&task(1_600_000.0, 0.0), &cfg), 1.6) < 1e-12);
        let q = ServerQueue { pending_cycles: 2e10 };
        assert!(rel(queuing_latency(&q, &cfg), 2.0) < 1e-12);
        let q = ServerQueue {
            pending_cycles: 1.44e10,
        };
        assert!(rel(queuing_latency(&q, &cfg), 1.44) < 1e-12);
        assert!(rel(processing_delay(&task(8e5, 0.0), &cfg), 1.44) < 1e-12);
        let half = SimConfig {
            mec_capacity_cycles_per_s: 5e9,
            ..cfg.clone()
        };
        assert!(rel(processing_delay(&task(8e5, 0.0), &half), 2.88) < 1e-12);
    }

    #[test]
    fn offload_cost_examples() {
        let cfg = reference_cfg();
        let c = offload_cost(&task(8e5, 0.0), &ServerQueue::default(), &cfg);
        assert!(rel(c.latency_s, 2.24) < 1e-12);
        let processing_energy = c.energy_j - cfg.miner_tx_power_w * 0.8;
        assert!(rel(processing_energy, 1.44e4) < 1e-12, "{processing_energy}");
        let zero = offload_cost(&task(0.0, 0.0), &ServerQueue::default(), &cfg);
        assert_eq!((zero.latency_s, zero.energy_j), (0.0, 0.0));
    }

    #[test]
    fn local_cost_examples() {
        let cfg = SimConfig::default();
        let c = local_cost(&task(8e5, 0.0), &cfg);
        assert!(rel(c.latency_s, 0.38) < 1e-12);
        assert!(rel(c.energy_j, 0.26) < 1e-12);
        let zero = local_cost(&task(0.0, 0.0), &cfg);
        assert_eq!((zero.latency_s, zero.energy_j), (0.0, 0.0));
    }

    #[test]
    fn privacy_examples() {
        let cfg = reference_cfg();
        let t = task(640_000.0, 160_000.0);
        use ChannelState::{Bad, Good};
        assert_eq!(usage_pattern_privacy(&t, true, Bad, &cfg), 0.0);
        assert_eq!(usage_pattern_privacy(&t, false, Bad, &cfg), 0.0);
        assert_eq!(usage_pattern_privacy(&t, true, Good, &cfg), 640_000.0);
        assert_eq!(usage_pattern_privacy(&t, false, Good, &cfg), 160_000.0);
        assert_eq!(location_privacy(&t, true, Bad, &cfg), 1.0);
        assert_eq!(location_privacy(&t, false, Bad, &cfg), 0.0);
        assert_eq!(location_privacy(&t, true, Good, &cfg), 0.0);
        assert_eq!(location_privacy(&task(0.0, 0.0), true, Bad, &cfg), 0.0);
        assert_eq!(total_privacy(0.0, 0.0, &cfg), 0.0);
        assert_eq!(total_privacy(640_000.0, 0.0, &cfg), 640_000.0);
        assert_eq!(total_privacy(0.0, 1.0, &cfg), 0.5);
    }

    #[test]
    fn mining_examples() {
        let mu = relative_hash_power(6e7, 1e13).unwrap();
        assert!(rel(mu, 6e-6) < 1e-12);
        assert!(relative_hash_power(6e7, 0.0).is_err());

        // 5 s of propagation: 80000 bits at 6.25e-5 s/bit.
        let cfg = SimConfig::default();
        let p = win_probability(6e-6, 80_000.0, &cfg);
        let expected = 30.0 * 6e-6 * (-5.0f64 / 600.0).exp();
        assert!(rel(30.0 * p, expected) < 1e-12);
        assert!((30.0 * p - 1.785e-4).abs() < 1e-6);

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let miner = MinerState::new(Vec::new(), ChannelState::Good, 0.0, &cfg);
        let r = mining_reward(&miner, 80_000.0, 1e13, &cfg, &mut rng).unwrap();
        assert_eq!(r, -miner.payment);
        let paid = MinerState::new(Vec::new(), ChannelState::Good, 5e7, &cfg);
        let r = mining_reward(&paid, 0.0, 1e13, &cfg, &mut rng).unwrap();
        assert!(rel(r, 30.0 * 5e-6 - 5e7 * 1e-12) < 1e-12);
    }

    #[test]
    fn sampled_mining_matches_expectation() {
        // A large share keeps the Bernoulli variance visible in 1e5 draws.
        let base = SimConfig {
            miner_hash_range: [1e11, 1e11],
            network_hash_range: [1e12, 1e12],
            ..SimConfig::default()
        };
        let sampled = SimConfig {
            mining_mode: MiningMode::Sampled,
            ..base.clone()
        };
        let miner = MinerState::new(Vec::new(), ChannelState::Good, 1e11, &base);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let expected = mining_reward(&miner, 60_000.0, 1e12, &base, &mut rng).unwrap();
        let n = 100_000;
        let samples: Vec<f64> = (0..n)
            .map(|_| mining_reward(&miner, 60_000.0, 1e12, &sampled, &mut rng).unwrap())
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * se, "{mean} vs {expected} (se {se})");
    }

    #[test]
    fn aggregate_latency_examples() {
        assert_eq!(aggregate_latency(&[2.24], &[]), 2.24);
        assert_eq!(aggregate_latency(&[2.24], &[0.38]), 2.24);
        assert_eq!(aggregate_latency(&[], &[]), 0.0);
    }

    #[test]
    fn system_cost_examples() {
        let cfg = SimConfig::default();
        assert!(rel(system_cost(&[0.26], 0.38, &cfg), 0.32) < 1e-12);
        let energy_only = SimConfig {
            beta: 1.0,
            ..cfg.clone()
        };
        assert_eq!(system_cost(&[0.26], 0.38, &energy_only), 0.26);
        let latency_only = SimConfig { beta: 0.0, ..cfg };
        assert_eq!(system_cost(&[0.26], 0.38, &latency_only), 0.38);
    }
}

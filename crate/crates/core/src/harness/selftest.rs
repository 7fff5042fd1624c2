//! Quick oracle checks runnable from the command line.
//!
//! Each check compares an implementation against something computed
//! independently: finite differences for backpropagation, value iteration for
//! the learners, and hand-worked numbers for the cost model.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    drlo_episode, rlo_episode, toy_offload_mdp, three_state_ring, value_iteration, DqnAgent,
    Environment, EpsilonSchedule, FiniteMdp, MdpEnv, QTable,
};
use crate::config::{LearningConfig, SimConfig};
use crate::env::model::{local_cost, offload_cost};
use crate::env::{ServerQueue, Task};
use crate::nn::{grad_check, squared_error, Mlp, OutputActivation};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1.0)
}

fn cost_examples() -> (bool, String) {
    let cfg = SimConfig {
        mec_energy_coeff: 1e-26,
        uplink_rate_bits_per_s: 1e6,
        ..SimConfig::default()
    };
    let task = Task {
        new_bits: 800_000.0,
        buffered_bits: 0.0,
        cycles_per_bit: cfg.cycles_per_bit,
        deadline_s: cfg.deadline_s,
    };
    let local = local_cost(&task, &cfg);
    let off = offload_cost(&task, &ServerQueue::default(), &cfg);
    let processing_energy = off.energy_j - cfg.miner_tx_power_w * 0.8;
    let ok = close(local.latency_s, 0.38)
        && close(local.energy_j, 0.26)
        && close(off.latency_s, 2.24)
        && close(processing_energy, 1.44e4);
    (
        ok,
        format!(
            "local ({:.4} s, {:.4} J), offload {:.4} s, edge energy {:.1} J",
            local.latency_s, local.energy_j, off.latency_s, processing_energy
        ),
    )
}

fn backprop() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for act in [OutputActivation::Identity, OutputActivation::Sigmoid] {
        let net = Mlp::new(&[5, 7, 4, 3], act, &mut rng).expect("valid topology");
        let input = [0.3, -0.7, 0.1, 0.9, 0.5];
        let target = [0.2, -0.1, 0.6];
        let err = grad_check(&net, &input, |y| squared_error(y, &target), 1e-6)
            .expect("shapes match");
        worst = worst.max(err);
    }
    (worst <= 1e-6, format!("max relative error {worst:.2e}"))
}

fn q_learning_matches(mdp: FiniteMdp) -> (bool, usize) {
    let discount = 0.85;
    let vi = value_iteration(&mdp, discount, 1e-12);
    let mut env = MdpEnv::new(mdp.clone(), 0, 20_000, 1);
    let mut tables = vec![QTable::new(mdp.num_states, mdp.num_actions, 0.1, discount)];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    rlo_episode(&mut env, &mut tables, &EpsilonSchedule::constant(1.0), &mut rng)
        .expect("episode runs");
    let greedy = tables[0].greedy_policy();
    let agree = greedy.iter().zip(&vi.policy).filter(|(a, b)| a == b).count();
    (agree == mdp.num_states, agree)
}

fn tabular_vs_vi() -> (bool, String) {
    let (a, na) = q_learning_matches(toy_offload_mdp());
    let (b, nb) = q_learning_matches(three_state_ring());
    (a && b, format!("toy {na}/4 states, ring {nb}/3 states"))
}

fn dqn_vs_vi() -> (bool, String) {
    let mdp = toy_offload_mdp();
    let discount = 0.85;
    let vi = value_iteration(&mdp, discount, 1e-12);
    let learning = LearningConfig {
        hidden_layers: vec![16],
        batch_size: 16,
        replay_capacity: 5000,
        nn_learning_rate: 0.05,
        target_sync_period: 50,
        ..LearningConfig::default()
    };
    let mut env = MdpEnv::new(mdp.clone(), 0, 5000, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let agent = DqnAgent::new(env.feature_len(), mdp.num_tasks(), &learning, &mut rng)
        .expect("valid network");
    let mut agents = vec![agent];
    drlo_episode(&mut env, &mut agents, &EpsilonSchedule::constant(1.0), &mut rng)
        .expect("episode runs");
    let agree = (0..mdp.num_states)
        .filter(|&s| agents[0].greedy_action(&env.one_hot(s)).expect("features fit") == vi.policy[s])
        .count();
    (agree == mdp.num_states, format!("{agree}/4 states"))
}

/// Runs every check. Deterministic and a few seconds long.
pub fn run_selftest() -> Vec<CheckResult> {
    vec![
        timed("cost model examples", cost_examples),
        timed("backprop vs finite differences", backprop),
        timed("Q-learning vs value iteration", tabular_vs_vi),
        timed("DQN vs value iteration", dqn_vs_vi),
    ]
}

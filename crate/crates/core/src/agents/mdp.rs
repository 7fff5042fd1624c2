//! Finite MDPs with known dynamics, solved exactly by value iteration.
//!
//! These serve as ground truth for the learners: a learner run on an
//! [`MdpEnv`] should end up with the policy [`value_iteration`] computes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::explore::argmax;
use super::Environment;
use crate::env::Action;
use crate::error::EnvError;
use crate::metrics::SlotSummary;

/// Tabular MDP: `transitions[s][a]` lists `(next_state, probability)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    pub rewards: Vec<Vec<f64>>,
}

impl FiniteMdp {
    /// Deterministic MDP from `next[s][a]` and `rewards[s][a]`.
    pub fn deterministic(next: Vec<Vec<usize>>, rewards: Vec<Vec<f64>>) -> Self {
        let transitions = next
            .iter()
            .map(|row| row.iter().map(|&s| vec![(s, 1.0)]).collect())
            .collect();
        Self::new(transitions, rewards)
    }

    pub fn new(transitions: Vec<Vec<Vec<(usize, f64)>>>, rewards: Vec<Vec<f64>>) -> Self {
        let num_states = transitions.len();
        assert!(num_states > 0, "at least one state");
        let num_actions = transitions[0].len();
        assert!(
            num_actions.is_power_of_two(),
            "action count must be a power of two to map onto offload vectors"
        );
        assert_eq!(rewards.len(), num_states);
        for (row, rrow) in transitions.iter().zip(&rewards) {
            assert_eq!(row.len(), num_actions);
            assert_eq!(rrow.len(), num_actions);
            for succ in row {
                let total: f64 = succ.iter().map(|&(_, p)| p).sum();
                assert!((total - 1.0).abs() < 1e-12, "probabilities must sum to 1");
                assert!(succ.iter().all(|&(s, p)| s < num_states && p >= 0.0));
            }
        }
        Self {
            num_states,
            num_actions,
            transitions,
            rewards,
        }
    }

    /// Binary decisions per step (`log2` of the action count).
    pub fn num_tasks(&self) -> usize {
        self.num_actions.trailing_zeros() as usize
    }
}

/// Fixed point of the Bellman optimality operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueIteration {
    pub values: Vec<f64>,
    /// `q[s][a]`.
    pub q: Vec<Vec<f64>>,
    /// Greedy action per state, lowest index on ties.
    pub policy: Vec<usize>,
}

/// Iterates the Bellman optimality operator until the sup-norm change falls
/// below `tol`.
pub fn value_iteration(mdp: &FiniteMdp, discount: f64, tol: f64) -> ValueIteration {
    assert!((0.0..1.0).contains(&discount), "discount must lie in [0, 1)");
    let backup = |v: &[f64]| -> Vec<Vec<f64>> {
        (0..mdp.num_states)
            .map(|s| {
                (0..mdp.num_actions)
                    .map(|a| {
                        let future: f64 = mdp.transitions[s][a].iter().map(|&(n, p)| p * v[n]).sum();
                        mdp.rewards[s][a] + discount * future
                    })
                    .collect()
            })
            .collect()
    };
    let mut v = vec![0.0; mdp.num_states];
    loop {
        let q = backup(&v);
        let next: Vec<f64> = q
            .iter()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = next
            .iter()
            .zip(&v)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = next;
        if delta < tol {
            break;
        }
    }
    let q = backup(&v);
    let policy = q.iter().map(|row| argmax(row).expect("actions")).collect();
    ValueIteration {
        values: v,
        q,
        policy,
    }
}

/// Single-agent episodic wrapper around a [`FiniteMdp`]. Features are the
/// one-hot encoding of the state.
#[derive(Debug, Clone)]
pub struct MdpEnv {
    mdp: FiniteMdp,
    state: usize,
    start_state: usize,
    horizon: usize,
    slot: usize,
    rng: ChaCha8Rng,
}

impl MdpEnv {
    pub fn new(mdp: FiniteMdp, start_state: usize, horizon: usize, seed: u64) -> Self {
        assert!(start_state < mdp.num_states);
        Self {
            mdp,
            state: start_state,
            start_state,
            horizon,
            slot: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn reset(&mut self, seed: u64) {
        self.state = self.start_state;
        self.slot = 0;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    /// One-hot feature vector of state `s`.
    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut f = vec![0.0; self.mdp.num_states];
        f[s] = 1.0;
        f
    }
}

impl Environment for MdpEnv {
    fn num_agents(&self) -> usize {
        1
    }

    fn num_tasks(&self) -> usize {
        self.mdp.num_tasks()
    }

    fn num_states(&self) -> usize {
        self.mdp.num_states
    }

    fn feature_len(&self) -> usize {
        self.mdp.num_states
    }

    fn state_index(&self, _agent: usize) -> usize {
        self.state
    }

    fn features(&self, _agent: usize) -> Vec<f64> {
        self.one_hot(self.state)
    }

    fn step(&mut self, actions: &[Action]) -> Result<SlotSummary, EnvError> {
        if self.slot >= self.horizon {
            return Err(EnvError::EpisodeOver {
                total: self.horizon,
            });
        }
        if actions.len() != 1 {
            return Err(EnvError::WrongMinerCount {
                expected: 1,
                got: actions.len(),
            });
        }
        let m = self.mdp.num_tasks();
        if actions[0].offload.len() != m {
            return Err(EnvError::WrongTaskCount {
                miner: 0,
                expected: m,
                got: actions[0].offload.len(),
            });
        }
        let a = actions[0].index();
        let reward = self.mdp.rewards[self.state][a];
        let successors = &self.mdp.transitions[self.state][a];
        let next = if successors.len() == 1 {
            successors[0].0
        } else {
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut pick = successors.last().expect("successor").0;
            for &(s, p) in successors {
                acc += p;
                if u < acc {
                    pick = s;
                    break;
                }
            }
            pick
        };
        self.state = next;
        self.slot += 1;
        Ok(SlotSummary {
            rewards: vec![reward],
            offload_fraction: if m == 0 {
                0.0
            } else {
                actions[0].offloaded_count() as f64 / m as f64
            },
            ..SlotSummary::default()
        })
    }

    fn is_done(&self) -> bool {
        self.slot >= self.horizon
    }

    fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Two-bucket offloading toy: state `2·b + g` with backlog bucket `b`
/// (0 empty, 1 backlogged) and channel `g` (0 bad, 1 good). The channel
/// alternates every slot; offloading empties the backlog, local execution
/// leaves one. Offloading earns location privacy on a bad channel and usage
/// privacy on a good one but costs more, more so with a backlog; keeping a
/// backlog earns usage privacy on a good channel.
pub fn toy_offload_mdp() -> FiniteMdp {
    // Actions: 0 local, 1 offload.
    let idx = |b: usize, g: usize| 2 * b + g;
    let mut next = vec![vec![0; 2]; 4];
    let mut rewards = vec![vec![0.0; 2]; 4];
    for b in 0..2 {
        for g in 0..2 {
            let s = idx(b, g);
            let g2 = 1 - g;
            next[s][0] = idx(1, g2);
            next[s][1] = idx(0, g2);
            let (offload_cost, local_cost) = if b == 0 { (0.6, 0.3) } else { (1.0, 0.9) };
            let offload_privacy = if g == 1 { 1.0 } else { 0.5 };
            let local_privacy = if g == 1 && b == 1 { 1.0 } else { 0.0 };
            rewards[s][0] = local_privacy - local_cost;
            rewards[s][1] = offload_privacy - offload_cost;
        }
    }
    FiniteMdp::deterministic(next, rewards)
}

/// Two-state chain: action 1 moves to the rewarding state at a price.
pub fn two_state_chain() -> FiniteMdp {
    FiniteMdp::deterministic(
        vec![vec![0, 1], vec![0, 1]],
        vec![vec![0.0, -0.5], vec![0.3, 1.0]],
    )
}

/// Three-state ring where the short-term best action is not optimal.
pub fn three_state_ring() -> FiniteMdp {
    FiniteMdp::deterministic(
        vec![vec![0, 1], vec![0, 2], vec![1, 0]],
        vec![vec![0.2, -0.4], vec![0.1, -0.2], vec![-1.0, 2.0]],
    )
}

//! Slot-level simulation of miners offloading tasks to a shared edge server.
//!
//! [`MecEnv`] owns the channel chains, task buffers, the server queue and the
//! random stream. Every slot each miner picks an offload vector; the
//! environment prices it with the formulas in [`model`] and advances.

pub mod model;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::SimConfig;
use crate::error::EnvError;
pub use model::BranchCost;

/// Binary channel gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ChannelState {
    Bad,
    Good,
}

impl ChannelState {
    pub fn gain(self) -> f64 {
        match self {
            ChannelState::Bad => 0.0,
            ChannelState::Good => 1.0,
        }
    }

    /// `g ≥ ζ`. With a binary gain and ζ in (0, 1] this is `g = 1`.
    pub fn is_good(self, threshold: f64) -> bool {
        self.gain() >= threshold
    }

    pub fn flipped(self) -> Self {
        match self {
            ChannelState::Bad => ChannelState::Good,
            ChannelState::Good => ChannelState::Bad,
        }
    }
}

/// One data-processing task: fresh bits plus the local backlog.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Task {
    /// D1, bits generated this slot.
    pub new_bits: f64,
    /// D0, bits carried over from earlier slots.
    pub buffered_bits: f64,
    pub cycles_per_bit: f64,
    pub deadline_s: f64,
}

impl Task {
    pub fn total_bits(&self) -> f64 {
        self.new_bits + self.buffered_bits
    }
}

/// Pending work on the edge server, in CPU cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ServerQueue {
    pub pending_cycles: f64,
}

/// Everything the environment tracks for one miner.
///
/// The local backlog lives in each task's `buffered_bits`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinerState {
    pub tasks: Vec<Task>,
    pub channel: ChannelState,
    /// Purchased hash rate p (Hash/s).
    pub hash_power: f64,
    /// Per-slot payment Y = c_hash·p.
    pub payment: f64,
}

impl MinerState {
    pub fn new(tasks: Vec<Task>, channel: ChannelState, hash_power: f64, cfg: &SimConfig) -> Self {
        Self {
            tasks,
            channel,
            hash_power,
            payment: cfg.hash_price_tokens_per_hash_s * hash_power,
        }
    }

    pub fn observation(&self) -> Observation {
        Observation {
            new_bits: self.tasks.iter().map(|t| t.new_bits).collect(),
            buffered_bits: self.tasks.iter().map(|t| t.buffered_bits).collect(),
            channel: self.channel,
            hash_power: self.hash_power,
            payment: self.payment,
        }
    }
}

/// What a miner sees at the start of a slot: `{D1, D0, g, p, Y}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub new_bits: Vec<f64>,
    pub buffered_bits: Vec<f64>,
    pub channel: ChannelState,
    pub hash_power: f64,
    pub payment: f64,
}

/// Offload vector for one miner; `offload[m]` routes task m to the edge.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Action {
    pub offload: Vec<bool>,
}

impl Action {
    pub fn all_local(num_tasks: usize) -> Self {
        Self {
            offload: vec![false; num_tasks],
        }
    }

    pub fn all_offload(num_tasks: usize) -> Self {
        Self {
            offload: vec![true; num_tasks],
        }
    }

    /// Decodes a joint action index: bit m of `index` is `x_m`.
    pub fn from_index(index: usize, num_tasks: usize) -> Self {
        Self {
            offload: (0..num_tasks).map(|m| (index >> m) & 1 == 1).collect(),
        }
    }

    pub fn index(&self) -> usize {
        self.offload
            .iter()
            .enumerate()
            .map(|(m, &x)| usize::from(x) << m)
            .sum()
    }

    pub fn offloaded_count(&self) -> usize {
        self.offload.iter().filter(|&&x| x).count()
    }
}

/// Number of joint actions for `num_tasks` binary decisions.
pub fn action_count(num_tasks: usize) -> usize {
    1usize << num_tasks
}

/// Per-task record of one slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskOutcome {
    pub offloaded: bool,
    /// D0 + D1 at decision time.
    pub total_bits: f64,
    pub bits_processed: f64,
    /// D0 handed to the next slot.
    pub carryover_bits: f64,
    pub latency_s: f64,
    pub energy_j: f64,
    /// Usage-pattern privacy in bits.
    pub usage_privacy_bits: f64,
    pub location_privacy: f64,
    pub deadline_violated: bool,
}

/// Result of one slot for one miner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub reward: f64,
    /// Σ_m of usage privacy (in privacy units) plus λ·location privacy.
    pub privacy: f64,
    pub mining_reward: f64,
    pub latency_s: f64,
    /// Σ_m of the energy of each task's chosen branch.
    pub energy_j: f64,
    pub cost: f64,
    pub tasks: Vec<TaskOutcome>,
    pub next_observation: Observation,
}

impl StepOutcome {
    pub fn deadline_violations(&self) -> usize {
        self.tasks.iter().filter(|t| t.deadline_violated).count()
    }
}

/// All miners' outcomes for one slot plus the queue transition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotReport {
    pub slot: usize,
    pub outcomes: Vec<StepOutcome>,
    pub queue_before: f64,
    pub cycles_added: f64,
    pub queue_after: f64,
}

/// The multi-miner offloading environment.
#[derive(Debug, Clone)]
pub struct MecEnv {
    cfg: SimConfig,
    rng: ChaCha8Rng,
    miners: Vec<MinerState>,
    queue: ServerQueue,
    network_hash: f64,
    slot: usize,
}

impl MecEnv {
    /// Validates `cfg` and resets with `cfg.rng_seed`.
    pub fn new(cfg: SimConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let seed = cfg.rng_seed;
        let mut env = Self {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            miners: Vec::new(),
            queue: ServerQueue::default(),
            network_hash: 0.0,
            slot: 0,
        };
        env.reset(seed);
        Ok(env)
    }

    /// Starts a new episode: empty buffers and queue, fresh channels, tasks,
    /// hash powers and network hash rate.
    pub fn reset(&mut self, seed: u64) -> Vec<Observation> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.queue = ServerQueue::default();
        self.slot = 0;
        let cfg = &self.cfg;
        let rng = &mut self.rng;
        self.network_hash = uniform(rng, cfg.network_hash_range);
        self.miners = (0..cfg.num_miners)
            .map(|_| {
                let hash_power = uniform(rng, cfg.miner_hash_range);
                let channel = if rng.random_bool(0.5) {
                    ChannelState::Good
                } else {
                    ChannelState::Bad
                };
                let tasks = (0..cfg.num_tasks)
                    .map(|_| model::generate_task(rng, cfg, 0.0))
                    .collect();
                MinerState::new(tasks, channel, hash_power, cfg)
            })
            .collect();
        self.observations()
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.miners.iter().map(MinerState::observation).collect()
    }

    pub fn miners(&self) -> &[MinerState] {
        &self.miners
    }

    pub fn queue(&self) -> ServerQueue {
        self.queue
    }

    pub fn network_hash(&self) -> f64 {
        self.network_hash
    }

    /// Slots already played in this episode.
    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.cfg.total_slots
    }

    /// Plays one slot with one action per miner.
    pub fn step(&mut self, actions: &[Action]) -> Result<SlotReport, EnvError> {
        let cfg = &self.cfg;
        if self.slot >= cfg.total_slots {
            return Err(EnvError::EpisodeOver {
                total: cfg.total_slots,
            });
        }
        if actions.len() != cfg.num_miners {
            return Err(EnvError::WrongMinerCount {
                expected: cfg.num_miners,
                got: actions.len(),
            });
        }
        for (miner, a) in actions.iter().enumerate() {
            if a.offload.len() != cfg.num_tasks {
                return Err(EnvError::WrongTaskCount {
                    miner,
                    expected: cfg.num_tasks,
                    got: a.offload.len(),
                });
            }
        }

        // Every offloaded task this slot sees the same pre-arrival snapshot.
        let snapshot = self.queue;
        let mut cycles_added = 0.0;
        let mut partial = Vec::with_capacity(cfg.num_miners);
        for (miner, action) in self.miners.iter().zip(actions) {
            let mut tasks = Vec::with_capacity(cfg.num_tasks);
            for (task, &offload) in miner.tasks.iter().zip(&action.offload) {
                let total = task.total_bits();
                let (branch, processed) = if offload {
                    cycles_added += total * task.cycles_per_bit;
                    (model::offload_cost(task, &snapshot, cfg), total)
                } else {
                    let processed = total.min(cfg.local_bit_budget_per_slot);
                    (model::local_cost(task, cfg), processed)
                };
                tasks.push(TaskOutcome {
                    offloaded: offload,
                    total_bits: total,
                    bits_processed: processed,
                    carryover_bits: (total - processed).max(0.0),
                    latency_s: branch.latency_s,
                    energy_j: branch.energy_j,
                    usage_privacy_bits: model::usage_pattern_privacy(
                        task,
                        offload,
                        miner.channel,
                        cfg,
                    ),
                    location_privacy: model::location_privacy(task, offload, miner.channel, cfg),
                    deadline_violated: branch.latency_s > task.deadline_s,
                });
            }
            let block_bits = uniform(&mut self.rng, cfg.block_size_range_bits);
            let mining =
                model::mining_reward(miner, block_bits, self.network_hash, cfg, &mut self.rng)?;
            partial.push((tasks, mining));
        }

        let mut outcomes = Vec::with_capacity(cfg.num_miners);
        for (tasks, mining) in partial {
            let (off, loc): (Vec<&TaskOutcome>, Vec<&TaskOutcome>) =
                tasks.iter().partition(|t| t.offloaded);
            let off_lat: Vec<f64> = off.iter().map(|t| t.latency_s).collect();
            let loc_lat: Vec<f64> = loc.iter().map(|t| t.latency_s).collect();
            let latency = model::aggregate_latency(&off_lat, &loc_lat);
            let energies: Vec<f64> = tasks.iter().map(|t| t.energy_j).collect();
            let energy = energies.iter().sum();
            let cost = model::system_cost(&energies, latency, cfg);
            let privacy = tasks
                .iter()
                .map(|t| {
                    model::total_privacy(
                        t.usage_privacy_bits / cfg.privacy_unit_bits,
                        t.location_privacy,
                        cfg,
                    )
                })
                .sum();
            let violations = tasks.iter().filter(|t| t.deadline_violated).count();
            outcomes.push(StepOutcome {
                reward: model::reward(cfg, privacy, mining, cost, violations),
                privacy,
                mining_reward: mining,
                latency_s: latency,
                energy_j: energy,
                cost,
                tasks,
                // Filled in once the state has advanced.
                next_observation: Observation {
                    new_bits: Vec::new(),
                    buffered_bits: Vec::new(),
                    channel: ChannelState::Bad,
                    hash_power: 0.0,
                    payment: 0.0,
                },
            });
        }

        let drained = cfg.mec_parallel_units * cfg.mec_capacity_cycles_per_s * cfg.slot_duration_s;
        let queue_after = (snapshot.pending_cycles + cycles_added - drained).max(0.0);
        self.queue = ServerQueue {
            pending_cycles: queue_after,
        };

        for (miner, outcome) in self.miners.iter_mut().zip(outcomes.iter_mut()) {
            miner.channel = model::step_channel(miner.channel, &self.cfg, &mut self.rng);
            for (task, record) in miner.tasks.iter_mut().zip(&outcome.tasks) {
                *task = model::generate_task(&mut self.rng, &self.cfg, record.carryover_bits);
            }
            outcome.next_observation = miner.observation();
        }

        let slot = self.slot;
        self.slot += 1;
        Ok(SlotReport {
            slot,
            outcomes,
            queue_before: snapshot.pending_cycles,
            cycles_added,
            queue_after,
        })
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    range[0] + (range[1] - range[0]) * u
}

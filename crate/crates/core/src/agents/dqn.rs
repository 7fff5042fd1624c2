//! Deep Q-network learner (DRLO).
//!
//! Two output heads are supported. The joint head has one identity output
//! per joint action and reads Q-values directly. The relaxed head has one
//! sigmoid output per task; the value of a joint action is the mean over
//! tasks of `out_m` when task m is offloaded and `1 − out_m` otherwise, so
//! its greedy action thresholds every output at 0.5. Relaxed values live in
//! (0, 1) and cannot match targets outside that range; the head is kept for
//! comparison and is off by default.

use ndarray::Array2;
use rand::Rng;

use super::explore::{epsilon_greedy, EpsilonSchedule};
use super::replay::{ReplayBuffer, Transition};
use super::Environment;
use crate::config::{HeadKind, LearningConfig};
use crate::env::{action_count, Action};
use crate::error::AgentError;
use crate::metrics::EpisodeMetrics;
use crate::nn::{Gradients, Mlp, OutputActivation};

/// Online and target networks, replay memory and training counters.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    online: Mlp,
    target: Mlp,
    replay: ReplayBuffer,
    head: HeadKind,
    num_tasks: usize,
    batch_size: usize,
    discount: f64,
    learning_rate: f64,
    target_sync_period: usize,
    train_steps: usize,
}

impl DqnAgent {
    /// Fresh agent with Glorot-initialised networks.
    pub fn new<R: Rng + ?Sized>(
        feature_len: usize,
        num_tasks: usize,
        cfg: &LearningConfig,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        let (outputs, activation) = match cfg.head {
            HeadKind::Joint => (action_count(num_tasks), OutputActivation::Identity),
            HeadKind::Relaxed => (num_tasks, OutputActivation::Sigmoid),
        };
        let mut sizes = vec![feature_len];
        sizes.extend(&cfg.hidden_layers);
        sizes.push(outputs);
        let online = Mlp::new(&sizes, activation, rng)?;
        Self::with_network(online, num_tasks, cfg)
    }

    /// Agent around an existing online network; the target starts as a copy.
    pub fn with_network(
        online: Mlp,
        num_tasks: usize,
        cfg: &LearningConfig,
    ) -> Result<Self, AgentError> {
        let expected = match cfg.head {
            HeadKind::Joint => action_count(num_tasks),
            HeadKind::Relaxed => num_tasks,
        };
        if online.output_size() != expected {
            return Err(AgentError::Checkpoint(format!(
                "network has {} outputs, head needs {expected}",
                online.output_size()
            )));
        }
        let target = online.clone();
        Ok(Self {
            online,
            target,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            head: cfg.head,
            num_tasks,
            batch_size: cfg.batch_size,
            discount: cfg.discount,
            learning_rate: cfg.nn_learning_rate,
            target_sync_period: cfg.target_sync_period,
            train_steps: 0,
        })
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn train_steps(&self) -> usize {
        self.train_steps
    }

    pub fn num_actions(&self) -> usize {
        action_count(self.num_tasks)
    }

    /// Q-value of every joint action under the online network.
    pub fn action_values(&self, features: &[f64]) -> Result<Vec<f64>, AgentError> {
        let out = self.online.predict(features)?;
        Ok(self.joint_values(&out))
    }

    pub fn greedy_action(&self, features: &[f64]) -> Result<usize, AgentError> {
        let v = self.action_values(features)?;
        Ok(super::explore::argmax(&v).expect("at least one action"))
    }

    fn joint_values(&self, out: &[f64]) -> Vec<f64> {
        match self.head {
            HeadKind::Joint => out.to_vec(),
            HeadKind::Relaxed => (0..self.num_actions())
                .map(|a| relaxed_value(out, a))
                .collect(),
        }
    }

    /// Largest joint-action value implied by one output row.
    fn max_value(&self, out: &[f64]) -> f64 {
        match self.head {
            HeadKind::Joint => out.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            HeadKind::Relaxed => {
                out.iter().map(|&o| o.max(1.0 - o)).sum::<f64>() / out.len() as f64
            }
        }
    }

    pub fn remember(&mut self, t: Transition) {
        self.replay.push(t);
    }

    /// Mean squared TD error of `batch` and its gradient with respect to the
    /// online parameters; targets come from the frozen target network.
    pub fn loss_and_gradients(&self, batch: &[&Transition]) -> Result<(f64, Gradients), AgentError> {
        let b = batch.len();
        let f = self.online.input_size();
        for t in batch {
            if t.action >= self.num_actions() {
                return Err(AgentError::ActionOutOfRange {
                    index: t.action,
                    count: self.num_actions(),
                });
            }
        }
        let states = Array2::from_shape_fn((b, f), |(i, j)| batch[i].state[j]);
        let next = Array2::from_shape_fn((b, f), |(i, j)| batch[i].next_state[j]);
        let next_out = self.target.predict_batch(next.view())?;
        let targets: Vec<f64> = batch
            .iter()
            .zip(next_out.rows())
            .map(|(t, row)| {
                let row = row.to_vec();
                t.reward + self.discount * self.max_value(&row)
            })
            .collect();

        let (out, tape) = self.online.forward_batch(states.view())?;
        let mut grad_out = Array2::zeros(out.dim());
        let mut loss = 0.0;
        let m = self.num_tasks as f64;
        for (i, t) in batch.iter().enumerate() {
            let row = out.row(i);
            let q = match self.head {
                HeadKind::Joint => row[t.action],
                HeadKind::Relaxed => relaxed_value(row.as_slice().expect("contiguous"), t.action),
            };
            let err = q - targets[i];
            loss += err * err;
            let dq = 2.0 * err / b as f64;
            match self.head {
                HeadKind::Joint => grad_out[[i, t.action]] = dq,
                HeadKind::Relaxed => {
                    for k in 0..self.num_tasks {
                        let sign = if (t.action >> k) & 1 == 1 { 1.0 } else { -1.0 };
                        grad_out[[i, k]] = dq * sign / m;
                    }
                }
            }
        }
        loss /= b as f64;
        let grads = self.online.backward_batch(tape, grad_out.view())?;
        Ok((loss, grads))
    }

    /// One SGD step on a uniformly sampled mini-batch; returns the batch
    /// loss, or `None` without side effects while the replay is too small.
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>, AgentError> {
        let Some(batch) = self.replay.sample(self.batch_size, rng) else {
            return Ok(None);
        };
        let (loss, grads) = self.loss_and_gradients(&batch)?;
        self.online.sgd_step(&grads, self.learning_rate)?;
        self.train_steps += 1;
        if self.train_steps % self.target_sync_period == 0 {
            self.target.copy_params_from(&self.online);
        }
        Ok(Some(loss))
    }
}

fn relaxed_value(out: &[f64], action: usize) -> f64 {
    let sum: f64 = out
        .iter()
        .enumerate()
        .map(|(k, &o)| if (action >> k) & 1 == 1 { o } else { 1.0 - o })
        .sum();
    sum / out.len() as f64
}

/// Samples a mini-batch and applies one training step to `agent`.
pub fn dqn_train_step<R: Rng + ?Sized>(
    agent: &mut DqnAgent,
    rng: &mut R,
) -> Result<Option<f64>, AgentError> {
    agent.train_step(rng)
}

/// Runs one episode of independent DQN learners, one agent per miner, with
/// one train step per agent per slot once its replay holds a full batch.
pub fn drlo_episode<E, R>(
    env: &mut E,
    agents: &mut [DqnAgent],
    schedule: &EpsilonSchedule,
    rng: &mut R,
) -> Result<EpisodeMetrics, AgentError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let n = env.num_agents();
    assert_eq!(agents.len(), n, "one agent per miner");
    let m = env.num_tasks();
    let mut metrics = EpisodeMetrics::with_capacity(env.horizon());
    let mut slot = 0;
    while !env.is_done() {
        let eps = schedule.value(slot);
        let states: Vec<Vec<f64>> = (0..n).map(|i| env.features(i)).collect();
        let mut chosen = Vec::with_capacity(n);
        for (agent, s) in agents.iter().zip(&states) {
            let values = agent.action_values(s)?;
            chosen.push(epsilon_greedy(&values, eps, rng)?);
        }
        let actions: Vec<Action> = chosen.iter().map(|&a| Action::from_index(a, m)).collect();
        let summary = env.step(&actions)?;
        for (i, (agent, state)) in agents.iter_mut().zip(states).enumerate() {
            agent.remember(Transition {
                state,
                action: chosen[i],
                reward: summary.rewards[i],
                next_state: env.features(i),
            });
            agent.train_step(rng)?;
        }
        metrics.push(&summary);
        slot += 1;
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{relative_error, Layer};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(batch: usize) -> LearningConfig {
        LearningConfig {
            batch_size: batch,
            replay_capacity: 1000,
            hidden_layers: vec![6, 5],
            target_sync_period: 3,
            ..LearningConfig::default()
        }
    }

    fn random_transition<R: Rng>(rng: &mut R, f: usize, actions: usize) -> Transition {
        Transition {
            state: (0..f).map(|_| rng.random_range(0.0..1.0)).collect(),
            action: rng.random_range(0..actions),
            reward: rng.random_range(-2.0..2.0),
            next_state: (0..f).map(|_| rng.random_range(0.0..1.0)).collect(),
        }
    }

    /// Single transition through `Q = w·x` with a one-action head:
    /// x = 2, w = 0.5, r = 1, x' = 4, γ = 0.85 gives y = 1 + 0.85·2 = 2.7,
    /// loss (1 − 2.7)² = 2.89, gradient 2·(1 − 2.7)·2 = −6.8, and with
    /// lr 0.01 the new weight is 0.568.
    #[test]
    fn hand_computed_train_step() {
        let net = Mlp::from_layers(
            1,
            vec![Layer {
                weights: array![[0.5]],
                biases: array![0.0],
            }],
            OutputActivation::Identity,
        )
        .unwrap();
        let c = LearningConfig {
            batch_size: 1,
            hidden_layers: vec![],
            ..cfg(1)
        };
        let mut agent = DqnAgent::with_network(net, 0, &c).unwrap();
        agent.remember(Transition {
            state: vec![2.0],
            action: 0,
            reward: 1.0,
            next_state: vec![4.0],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = agent.train_step(&mut rng).unwrap().unwrap();
        assert!(relative_error(loss, 2.89) < 1e-12, "{loss}");
        let w = agent.online().layers()[0].weights[[0, 0]];
        assert!(relative_error(w, 0.568) < 1e-12, "{w}");
        let b = agent.online().layers()[0].biases[0];
        assert!(relative_error(b, 0.034) < 1e-12, "{b}");
    }

    #[test]
    fn cold_replay_does_not_train() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut agent = DqnAgent::new(4, 2, &cfg(8), &mut rng).unwrap();
        for _ in 0..7 {
            let t = random_transition(&mut rng, 4, 4);
            agent.remember(t);
        }
        let before = agent.online().clone();
        assert_eq!(agent.train_step(&mut rng).unwrap(), None);
        assert_eq!(agent.online(), &before);
        assert_eq!(agent.train_steps(), 0);
    }

    #[test]
    fn perfect_fit_has_zero_loss() {
        // Zero weights with reward 0 everywhere: Q = 0 = target.
        let c = cfg(4);
        let net = Mlp::zeros(&[3, 6, 5, 4], OutputActivation::Identity).unwrap();
        let mut agent = DqnAgent::with_network(net, 2, &c).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..4 {
            let mut t = random_transition(&mut rng, 3, 4);
            t.reward = 0.0;
            agent.remember(t);
        }
        let batch = agent.replay().sample(4, &mut rng).unwrap();
        let (loss, grads) = agent.loss_and_gradients(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(grads.max_abs(), 0.0);
    }

    /// Backprop through the TD loss against central differences on the
    /// online parameters with the target held fixed.
    #[test]
    fn loss_gradient_matches_finite_differences() {
        for head in [HeadKind::Joint, HeadKind::Relaxed] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let c = LearningConfig { head, ..cfg(6) };
            let agent = DqnAgent::new(4, 2, &c, &mut rng).unwrap();
            let mut agent = agent;
            for _ in 0..6 {
                let t = random_transition(&mut rng, 4, 4);
                agent.remember(t);
            }
            let batch: Vec<Transition> = agent.replay().iter_oldest_first().cloned().collect();
            let refs: Vec<&Transition> = batch.iter().collect();
            let (_, grads) = agent.loss_and_gradients(&refs).unwrap();
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            for li in 0..grads.layers.len() {
                let (rows, cols) = grads.layers[li].weights.dim();
                for r in 0..rows {
                    for col in 0..cols {
                        let probe = |delta: f64| {
                            let mut a = agent.clone();
                            let mut layers = a.online.layers().to_vec();
                            layers[li].weights[[r, col]] += delta;
                            a.online =
                                Mlp::from_layers(4, layers, a.online.output_activation()).unwrap();
                            a.loss_and_gradients(&refs).unwrap().0
                        };
                        let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                        worst = worst.max(relative_error(grads.layers[li].weights[[r, col]], numeric));
                    }
                }
            }
            assert!(worst < 1e-4, "{head:?}: {worst}");
        }
    }

    #[test]
    fn target_syncs_on_schedule() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut agent = DqnAgent::new(3, 1, &cfg(2), &mut rng).unwrap();
        for _ in 0..10 {
            let t = random_transition(&mut rng, 3, 2);
            agent.remember(t);
        }
        let mut snapshots = vec![agent.online().clone()];
        for step in 1..=9 {
            agent.train_step(&mut rng).unwrap().unwrap();
            snapshots.push(agent.online().clone());
            let synced_at = step - step % 3;
            assert_eq!(agent.target(), &snapshots[synced_at], "step {step}");
        }
    }

    #[test]
    fn relaxed_values_threshold_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = LearningConfig {
            head: HeadKind::Relaxed,
            ..cfg(2)
        };
        let agent = DqnAgent::new(3, 3, &c, &mut rng).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let out = agent.online().predict(&x).unwrap();
            let a = agent.greedy_action(&x).unwrap();
            let thresholded: Vec<bool> = out.iter().map(|&o| o > 0.5).collect();
            assert_eq!(Action::from_index(a, 3).offload, thresholded);
        }
    }
}

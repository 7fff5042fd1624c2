//! Tabular Q-learning (RLO).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::explore::{epsilon_greedy, EpsilonSchedule};
use super::Environment;
use crate::env::Action;
use crate::error::AgentError;
use crate::metrics::EpisodeMetrics;

/// Dense `states × actions` table of Q-values, zero until visited.
///
/// The JSON checkpoint stores `values` row-major: entry `s·num_actions + a`
/// is `Q(s, a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub num_states: usize,
    pub num_actions: usize,
    /// Step size α.
    pub learning_rate: f64,
    /// Discount γ.
    pub discount: f64,
    values: Vec<f64>,
}

/// One tabular experience `(s, a, r, s')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TabularTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize, learning_rate: f64, discount: f64) -> Self {
        assert!(num_states > 0 && num_actions > 0, "empty table");
        assert!(
            learning_rate >= 0.0 && learning_rate <= 1.0,
            "learning rate must lie in [0, 1]"
        );
        assert!((0.0..1.0).contains(&discount), "discount must lie in [0, 1)");
        Self {
            num_states,
            num_actions,
            learning_rate,
            discount,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let a = self.num_actions;
        &self.values[state * a..(state + 1) * a]
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action of every state, lowest index on ties.
    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.num_states)
            .map(|s| super::explore::argmax(self.row(s)).expect("non-empty row"))
            .collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("table serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, AgentError> {
        let t: QTable = serde_json::from_str(s).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
        if t.values.len() != t.num_states * t.num_actions {
            return Err(AgentError::Checkpoint(format!(
                "expected {} values, found {}",
                t.num_states * t.num_actions,
                t.values.len()
            )));
        }
        Ok(t)
    }
}

/// `Q(s,a) ← Q(s,a) + α·(r + γ·max_a' Q(s',a') − Q(s,a))`.
pub fn q_update(table: &mut QTable, t: &TabularTransition) -> Result<(), AgentError> {
    for index in [t.state, t.next_state] {
        if index >= table.num_states {
            return Err(AgentError::StateOutOfRange {
                index,
                count: table.num_states,
            });
        }
    }
    if t.action >= table.num_actions {
        return Err(AgentError::ActionOutOfRange {
            index: t.action,
            count: table.num_actions,
        });
    }
    let target = t.reward + table.discount * table.max_value(t.next_state);
    let q = table.get(t.state, t.action);
    table.set(t.state, t.action, q + table.learning_rate * (target - q));
    Ok(())
}

/// Runs one episode of independent tabular learners, one table per agent.
pub fn rlo_episode<E, R>(
    env: &mut E,
    tables: &mut [QTable],
    schedule: &EpsilonSchedule,
    rng: &mut R,
) -> Result<EpisodeMetrics, AgentError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let n = env.num_agents();
    assert_eq!(tables.len(), n, "one table per agent");
    let m = env.num_tasks();
    let mut metrics = EpisodeMetrics::with_capacity(env.horizon());
    let mut slot = 0;
    while !env.is_done() {
        let eps = schedule.value(slot);
        let states: Vec<usize> = (0..n).map(|i| env.state_index(i)).collect();
        let mut chosen = Vec::with_capacity(n);
        for (table, &s) in tables.iter().zip(&states) {
            chosen.push(epsilon_greedy(table.row(s), eps, rng)?);
        }
        let actions: Vec<Action> = chosen.iter().map(|&a| Action::from_index(a, m)).collect();
        let summary = env.step(&actions)?;
        for (i, table) in tables.iter_mut().enumerate() {
            let t = TabularTransition {
                state: states[i],
                action: chosen[i],
                reward: summary.rewards[i],
                next_state: env.state_index(i),
            };
            q_update(table, &t)?;
        }
        metrics.push(&summary);
        slot += 1;
    }
    Ok(metrics)
}

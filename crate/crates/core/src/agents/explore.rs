//! ε-greedy action selection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::LearningConfig;
use crate::error::AgentError;

/// Linear decay from `start` to `end` over `decay_slots`, flat afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_slots: usize,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_slots: usize) -> Self {
        assert!(
            (0.0..=1.0).contains(&end) && end <= start && start <= 1.0,
            "need 0 <= end <= start <= 1"
        );
        Self {
            start,
            end,
            decay_slots,
        }
    }

    pub fn constant(epsilon: f64) -> Self {
        Self::new(epsilon, epsilon, 0)
    }

    pub fn from_config(cfg: &LearningConfig) -> Self {
        Self::new(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decay_slots)
    }

    pub fn value(&self, slot: usize) -> f64 {
        if slot >= self.decay_slots {
            return self.end;
        }
        let frac = slot as f64 / self.decay_slots as f64;
        (self.start + (self.end - self.start) * frac).clamp(self.end, self.start)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Uniform random action with probability `epsilon`, greedy otherwise.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    values: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, AgentError> {
    if values.is_empty() {
        return Err(AgentError::EmptyValues);
    }
    let u: f64 = rng.random();
    if u < epsilon {
        Ok(rng.random_range(0..values.len()))
    } else {
        Ok(argmax(values).expect("non-empty"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn greedy_picks_max_and_breaks_ties_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(epsilon_greedy(&[1.0, 3.0, 2.0], 0.0, &mut rng).unwrap(), 1);
        assert_eq!(epsilon_greedy(&[2.0, 2.0], 0.0, &mut rng).unwrap(), 0);
        assert_eq!(
            epsilon_greedy(&[], 0.5, &mut rng).unwrap_err(),
            AgentError::EmptyValues
        );
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[epsilon_greedy(&[0.0, 5.0, 1.0, 2.0], 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.25).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn schedule_is_linear_then_flat() {
        let s = EpsilonSchedule::new(1.0, 0.05, 2000);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(1000) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(2000), 0.05);
        assert_eq!(s.value(10_000), 0.05);
        let mut prev = f64::INFINITY;
        for t in 0..3000 {
            let e = s.value(t);
            assert!(e <= prev && (0.05..=1.0).contains(&e));
            prev = e;
        }
    }
}

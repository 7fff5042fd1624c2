//! Per-slot run statistics and the convergence detector.

use serde::Serialize;

/// System-wide figures for one slot, summed over miners.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SlotSummary {
    /// Reward of each agent.
    pub rewards: Vec<f64>,
    pub privacy: f64,
    pub energy_j: f64,
    pub latency_s: f64,
    pub cost: f64,
    pub mining_reward: f64,
    pub deadline_violations: u32,
    /// Offloaded tasks over all tasks.
    pub offload_fraction: f64,
    /// Server queue after the slot, in cycles.
    pub queue_cycles: f64,
}

/// Column-oriented per-slot series of one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EpisodeMetrics {
    pub reward: Vec<f64>,
    pub privacy: Vec<f64>,
    pub energy_j: Vec<f64>,
    pub latency_s: Vec<f64>,
    pub cost: Vec<f64>,
    pub mining_reward: Vec<f64>,
    pub deadline_violations: Vec<u32>,
    pub offload_fraction: Vec<f64>,
    pub queue_cycles: Vec<f64>,
}

impl EpisodeMetrics {
    pub fn with_capacity(slots: usize) -> Self {
        Self {
            reward: Vec::with_capacity(slots),
            privacy: Vec::with_capacity(slots),
            energy_j: Vec::with_capacity(slots),
            latency_s: Vec::with_capacity(slots),
            cost: Vec::with_capacity(slots),
            mining_reward: Vec::with_capacity(slots),
            deadline_violations: Vec::with_capacity(slots),
            offload_fraction: Vec::with_capacity(slots),
            queue_cycles: Vec::with_capacity(slots),
        }
    }

    pub fn push(&mut self, s: &SlotSummary) {
        self.reward.push(s.rewards.iter().sum());
        self.privacy.push(s.privacy);
        self.energy_j.push(s.energy_j);
        self.latency_s.push(s.latency_s);
        self.cost.push(s.cost);
        self.mining_reward.push(s.mining_reward);
        self.deadline_violations.push(s.deadline_violations);
        self.offload_fraction.push(s.offload_fraction);
        self.queue_cycles.push(s.queue_cycles);
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    /// Means of every series over the last `window` slots (all slots when
    /// the episode is shorter).
    pub fn tail_summary(&self, window: usize) -> MetricMeans {
        let from = self.len().saturating_sub(window);
        MetricMeans {
            reward: mean(&self.reward[from..]),
            privacy: mean(&self.privacy[from..]),
            energy_j: mean(&self.energy_j[from..]),
            latency_s: mean(&self.latency_s[from..]),
            cost: mean(&self.cost[from..]),
            mining_reward: mean(&self.mining_reward[from..]),
            deadline_violations: mean(
                &self.deadline_violations[from..]
                    .iter()
                    .map(|&v| f64::from(v))
                    .collect::<Vec<_>>(),
            ),
            offload_fraction: mean(&self.offload_fraction[from..]),
        }
    }
}

/// Slot-averaged metrics of one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MetricMeans {
    pub reward: f64,
    pub privacy: f64,
    pub energy_j: f64,
    pub latency_s: f64,
    pub cost: f64,
    pub mining_reward: f64,
    pub deadline_violations: f64,
    pub offload_fraction: f64,
}

/// Arithmetic mean, summed left to right; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Sample standard deviation; 0 with fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Means of the windows `xs[s..s + window]` for every start `s`.
pub fn rolling_mean(xs: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || xs.len() < window {
        return Vec::new();
    }
    xs.windows(window).map(mean).collect()
}

/// Rolling window length of the convergence detector.
pub const CONVERGENCE_WINDOW: usize = 200;
/// Length of the reference tail of the convergence detector.
pub const CONVERGENCE_TAIL: usize = 1000;
/// Relative band of the convergence detector.
pub const CONVERGENCE_BAND: f64 = 0.05;

/// First slot `s` such that the mean of every `window`-slot window starting
/// at or after `s` stays within `band·|tail mean|` of the mean of the last
/// `tail` slots. `None` when even the final window is outside the band.
pub fn convergence_slot_with(xs: &[f64], window: usize, tail: usize, band: f64) -> Option<usize> {
    let rolling = rolling_mean(xs, window);
    if rolling.is_empty() {
        return None;
    }
    let reference = mean(&xs[xs.len().saturating_sub(tail)..]);
    let tol = band * reference.abs();
    let mut first = None;
    for (s, &m) in rolling.iter().enumerate().rev() {
        if (m - reference).abs() <= tol {
            first = Some(s);
        } else {
            break;
        }
    }
    first
}

/// Convergence slot with the default 200-slot window, 1000-slot tail and 5%
/// band.
pub fn convergence_slot(xs: &[f64]) -> Option<usize> {
    convergence_slot_with(xs, CONVERGENCE_WINDOW, CONVERGENCE_TAIL, CONVERGENCE_BAND)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_converges_immediately() {
        assert_eq!(convergence_slot(&vec![-1.5; 8000]), Some(0));
    }

    #[test]
    fn series_flat_after_2500() {
        let xs: Vec<f64> = (0..8000)
            .map(|t| if t < 2500 { -10.0 + t as f64 * 0.001 } else { 5.0 })
            .collect();
        let c = convergence_slot(&xs).unwrap();
        assert!(c <= 2600, "{c}");
        assert!(c >= 2400, "{c}");
    }

    #[test]
    fn late_excursion_delays_convergence() {
        let mut xs = vec![1.0; 8000];
        for x in &mut xs[5000..5100] {
            *x = 4.0;
        }
        // Each excursion slot shifts a window mean by 0.015, so windows
        // holding four or more of them leave the 0.05 band.
        let c = convergence_slot(&xs).unwrap();
        assert_eq!(c, 5097);
    }

    #[test]
    fn rolling_mean_windows() {
        assert_eq!(rolling_mean(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert!(rolling_mean(&[1.0], 2).is_empty());
    }

    #[test]
    fn tail_summary_uses_last_slots() {
        let mut m = EpisodeMetrics::default();
        for t in 0..10 {
            m.push(&SlotSummary {
                rewards: vec![t as f64],
                cost: 2.0 * t as f64,
                ..SlotSummary::default()
            });
        }
        let s = m.tail_summary(4);
        assert_eq!(s.reward, 7.5);
        assert_eq!(s.cost, 15.0);
        assert_eq!(m.tail_summary(100).reward, 4.5);
    }
}

//! Fixed policies: never offload, always offload, and a fair coin per task.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::env::Action;
use crate::error::AgentError;
use crate::metrics::EpisodeMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    /// Every task runs locally.
    No,
    /// Every task goes to the edge server.
    Eo,
    /// Each task is offloaded with probability one half.
    Random,
}

/// Action of a baseline for a miner with `num_tasks` tasks. Only the random
/// baseline draws from `rng`.
pub fn baseline_policy<R: Rng + ?Sized>(kind: BaselineKind, num_tasks: usize, rng: &mut R) -> Action {
    match kind {
        BaselineKind::No => Action::all_local(num_tasks),
        BaselineKind::Eo => Action::all_offload(num_tasks),
        BaselineKind::Random => Action {
            offload: (0..num_tasks).map(|_| rng.random_bool(0.5)).collect(),
        },
    }
}

/// Plays a whole episode with the same baseline for every agent.
pub fn baseline_episode<E, R>(
    env: &mut E,
    kind: BaselineKind,
    rng: &mut R,
) -> Result<EpisodeMetrics, AgentError>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let n = env.num_agents();
    let m = env.num_tasks();
    let mut metrics = EpisodeMetrics::with_capacity(env.horizon());
    while !env.is_done() {
        let actions: Vec<Action> = (0..n).map(|_| baseline_policy(kind, m, rng)).collect();
        let summary = env.step(&actions)?;
        metrics.push(&summary);
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_baselines() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(
            baseline_policy(BaselineKind::No, 3, &mut rng).offload,
            vec![false; 3]
        );
        assert_eq!(
            baseline_policy(BaselineKind::Eo, 3, &mut rng).offload,
            vec![true; 3]
        );
    }

    #[test]
    fn random_baseline_is_fair() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let mut counts = [0usize; 2];
        for _ in 0..n {
            let a = baseline_policy(BaselineKind::Random, 2, &mut rng);
            for (c, &x) in counts.iter_mut().zip(&a.offload) {
                *c += usize::from(x);
            }
        }
        for c in counts {
            let f = c as f64 / n as f64;
            assert!((f - 0.5).abs() < 0.01, "{f}");
        }
    }
}

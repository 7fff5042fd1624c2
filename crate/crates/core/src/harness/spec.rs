//! Experiment files: a base configuration, a policy and sweep axes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{SimConfig, BITS_PER_KB};
use crate::error::{ConfigError, HarnessError};

/// Policy run at every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// Never offload.
    No,
    /// Always offload.
    Eo,
    /// Fair coin per task.
    Random,
    /// Tabular Q-learning.
    Rlo,
    /// Deep Q-network.
    Drlo,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [
        PolicyKind::No,
        PolicyKind::Eo,
        PolicyKind::Random,
        PolicyKind::Rlo,
        PolicyKind::Drlo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::No => "no",
            PolicyKind::Eo => "eo",
            PolicyKind::Random => "random",
            PolicyKind::Rlo => "rlo",
            PolicyKind::Drlo => "drlo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s.to_ascii_lowercase())
    }
}

/// Values swept over. A missing axis keeps the base configuration's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub beta: Option<Vec<f64>>,
    pub num_miners: Option<Vec<usize>>,
    pub num_tasks: Option<Vec<usize>>,
    /// Mean task size in kB. A point with size `s` draws task sizes
    /// uniformly from `[0.5·s, 1.5·s]` kB.
    pub transaction_kb: Option<Vec<f64>>,
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub index: usize,
    pub beta: f64,
    pub num_miners: usize,
    pub num_tasks: usize,
    /// `None` when the base task size range is used.
    pub transaction_kb: Option<f64>,
}

impl SweepPoint {
    /// The base configuration with this point's values substituted.
    pub fn apply(&self, base: &SimConfig) -> SimConfig {
        let mut cfg = base.clone();
        cfg.beta = self.beta;
        cfg.num_miners = self.num_miners;
        cfg.num_tasks = self.num_tasks;
        if let Some(kb) = self.transaction_kb {
            cfg.task_size_range_bits = [0.5 * kb * BITS_PER_KB, 1.5 * kb * BITS_PER_KB];
        }
        cfg
    }
}

fn default_runs() -> usize {
    50
}

fn default_seed_base() -> u64 {
    2021
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_eval_window() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

fn default_policy() -> PolicyKind {
    PolicyKind::Drlo
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    #[serde(default = "default_runs")]
    pub runs_per_point: usize,
    /// Run j of point i uses seed `seed_base XOR mix(i, j)`.
    #[serde(default = "default_seed_base")]
    pub seed_base: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Slots at the end of each run that the aggregate metrics average over.
    #[serde(default = "default_eval_window")]
    pub eval_window: usize,
    /// Write the per-slot CSV of every run.
    #[serde(default = "default_true")]
    pub write_series: bool,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default)]
    pub sim: SimConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            policy: default_policy(),
            runs_per_point: default_runs(),
            seed_base: default_seed_base(),
            output_dir: default_output_dir(),
            eval_window: default_eval_window(),
            write_series: true,
            sweep: SweepAxes::default(),
            sim: SimConfig::default(),
        }
    }
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

impl ExperimentSpec {
    /// Grid points in row-major order over (β, N, M, transaction size).
    pub fn points(&self) -> Vec<SweepPoint> {
        let betas = self.sweep.beta.clone().unwrap_or_else(|| vec![self.sim.beta]);
        let miners = self
            .sweep
            .num_miners
            .clone()
            .unwrap_or_else(|| vec![self.sim.num_miners]);
        let tasks = self
            .sweep
            .num_tasks
            .clone()
            .unwrap_or_else(|| vec![self.sim.num_tasks]);
        let sizes: Vec<Option<f64>> = match &self.sweep.transaction_kb {
            Some(v) => v.iter().map(|&s| Some(s)).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &beta in &betas {
            for &num_miners in &miners {
                for &num_tasks in &tasks {
                    for &transaction_kb in &sizes {
                        out.push(SweepPoint {
                            index: out.len(),
                            beta,
                            num_miners,
                            num_tasks,
                            transaction_kb,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs_per_point == 0 {
            return Err(invalid("runs_per_point", "must be at least 1"));
        }
        if self.eval_window == 0 {
            return Err(invalid("eval_window", "must be at least 1"));
        }
        let axes = [
            ("sweep.beta", self.sweep.beta.as_ref().map(Vec::len)),
            ("sweep.num_miners", self.sweep.num_miners.as_ref().map(Vec::len)),
            ("sweep.num_tasks", self.sweep.num_tasks.as_ref().map(Vec::len)),
            (
                "sweep.transaction_kb",
                self.sweep.transaction_kb.as_ref().map(Vec::len),
            ),
        ];
        for (field, len) in axes {
            if len == Some(0) {
                return Err(invalid(field, "sweep axes must not be empty"));
            }
        }
        if let Some(sizes) = &self.sweep.transaction_kb {
            if sizes.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
                return Err(invalid("sweep.transaction_kb", "sizes must be positive"));
            }
        }
        for p in self.points() {
            p.apply(&self.sim).validate()?;
        }
        Ok(())
    }
}

/// Parses and validates an experiment from TOML text.
pub fn parse_spec(text: &str, origin: &Path) -> Result<ExperimentSpec, HarnessError> {
    let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
        let message = match e.span() {
            Some(span) => {
                let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                format!("line {line}: {}", e.message())
            }
            None => e.message().to_string(),
        };
        HarnessError::Parse {
            path: origin.to_path_buf(),
            message,
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

/// Reads an experiment file. Keys left out take their defaults; unknown keys
/// are errors.
pub fn load_config(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_spec(&text, path)
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of run `run` at point `point`: `seed_base XOR mix(point, run)`.
pub fn derive_seed(seed_base: u64, point: usize, run: usize) -> u64 {
    seed_base ^ splitmix64(splitmix64(point as u64) ^ run as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentSpec, HarnessError> {
        parse_spec(text, Path::new("test.toml"))
    }

    #[test]
    fn empty_file_gives_defaults() {
        let spec = parse("").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        assert_eq!(spec.sim.beta, 0.5);
        assert_eq!(spec.sim.total_slots, 8000);
        assert_eq!(spec.sim.learning.discount, 0.85);
        assert_eq!(spec.points().len(), 1);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse("fo = 1\n").unwrap_err().to_string();
        assert!(err.contains("fo"), "{err}");
        let err = parse("[sim]\nbogus_rate = 2\n").unwrap_err().to_string();
        assert!(err.contains("bogus_rate"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn out_of_range_beta_is_rejected() {
        let err = parse("[sim]\nbeta = 1.5\n").unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
        let err = parse("[sweep]\nbeta = [0.5, 1.5]\n").unwrap_err().to_string();
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn empty_axis_is_rejected() {
        let err = parse("[sweep]\nnum_miners = []\n").unwrap_err().to_string();
        assert!(err.contains("sweep.num_miners"), "{err}");
    }

    #[test]
    fn grid_order_and_application() {
        let spec = parse(
            "[sweep]\nbeta = [0.5, 0.8]\nnum_miners = [1, 5]\ntransaction_kb = [10.0, 100.0]\n",
        )
        .unwrap();
        let pts = spec.points();
        assert_eq!(pts.len(), 8);
        assert_eq!((pts[0].beta, pts[0].num_miners, pts[0].transaction_kb), (0.5, 1, Some(10.0)));
        assert_eq!((pts[7].beta, pts[7].num_miners, pts[7].transaction_kb), (0.8, 5, Some(100.0)));
        let cfg = pts[1].apply(&spec.sim);
        assert_eq!(cfg.task_size_range_bits, [400_000.0, 1_200_000.0]);
    }

    #[test]
    fn seeds_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for i in 0..20 {
            for j in 0..50 {
                assert!(seen.insert(derive_seed(7, i, j)));
            }
        }
        assert_eq!(derive_seed(7, 3, 4), derive_seed(7, 3, 4));
    }
}

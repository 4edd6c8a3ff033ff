//! Monte Carlo and exact engines for the frog model on the 3,2-alternating
//! tree and its non-backtracking and self-similar variants.

pub mod boxmodel;
pub mod coupling;
pub mod distribution;
pub mod engine;
pub mod rng;
pub mod tree;
pub mod walks;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boxmodel::{enumerate_box_model, oracle_compare, BoxModel, OracleComparison};
pub use coupling::{run_coupled_batch, run_coupled_episode, CoupledEpisode, CouplingSummary};
pub use distribution::{pgf_of, FiniteDistribution};
pub use engine::run_episode;
pub use tree::NodeAddress;
pub use walks::{estimate_hit_prob, estimate_phi_transitions, HitEstimate, PhiTransitions, Tally};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("{0}")]
    TooLarge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    #[serde(alias = "nb")]
    NonBacktracking,
    #[serde(alias = "ss")]
    SelfSimilar,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::NonBacktracking => "nonbacktracking",
            Variant::SelfSimilar => "selfsimilar",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "original" => Ok(Variant::Original),
            "nonbacktracking" | "nb" => Ok(Variant::NonBacktracking),
            "selfsimilar" | "ss" => Ok(Variant::SelfSimilar),
            _ => Err(SimError::Invalid(format!(
                "variant must be original, nonbacktracking or selfsimilar, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub depth_cap: u16,
    pub step_cap: u64,
    pub master_seed: u64,
    pub episodes: u64,
    /// Runs with more simultaneously active frogs stop and are flagged.
    pub max_active_frogs: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::SelfSimilar,
            depth_cap: 40,
            step_cap: 10_000,
            master_seed: 1,
            episodes: 10_000,
            max_active_frogs: 1 << 20,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.depth_cap < 2 || self.depth_cap > tree::MAX_DEPTH {
            return Err(SimError::Invalid(format!(
                "depth_cap must be in 2..={}, got {}",
                tree::MAX_DEPTH,
                self.depth_cap
            )));
        }
        if self.step_cap < 1 {
            return Err(SimError::Invalid("step_cap must be at least 1".into()));
        }
        if self.max_active_frogs < 1 {
            return Err(SimError::Invalid("max_active_frogs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EpisodeOutcome {
    pub episode_index: u64,
    pub variant: Variant,
    /// `Z`, `V'` or `V` depending on the variant.
    pub root_hits: u64,
    pub activated_frogs: u64,
    pub truncated: bool,
    pub ambiguous_activation: bool,
    pub ticks: u64,
}

/// Mean and standard error from exact integer sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub count: u64,
    pub sum: u64,
    #[serde(serialize_with = "crate::finite::serialize")]
    pub mean: f64,
    #[serde(serialize_with = "crate::finite::serialize")]
    pub stderr: f64,
    pub max: u64,
}

impl Moments {
    pub fn from_values(values: impl Iterator<Item = u64>) -> Moments {
        let (mut count, mut sum, mut sq, mut max) = (0u64, 0u64, 0u128, 0u64);
        for v in values {
            count += 1;
            sum += v;
            sq += v as u128 * v as u128;
            max = max.max(v);
        }
        let n = count.max(1) as f64;
        let mean = sum as f64 / n;
        let var = if count > 1 {
            ((sq as f64) - (sum as f64) * mean) / (n - 1.0)
        } else {
            0.0
        };
        Moments {
            count,
            sum,
            mean,
            stderr: (var.max(0.0) / n).sqrt(),
            max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub variant: Variant,
    pub episodes: u64,
    pub root_hits: Moments,
    pub activated_frogs: Moments,
    pub truncated: u64,
    pub ambiguous_activation: u64,
}

/// Run `config.episodes` episodes in parallel; outcomes come back in episode
/// order.
pub fn run_batch(config: &ModelConfig) -> Result<(Vec<EpisodeOutcome>, BatchSummary), SimError> {
    config.validate()?;
    let outcomes: Vec<EpisodeOutcome> = (0..config.episodes)
        .into_par_iter()
        .map(|ep| run_episode(config, ep))
        .collect();
    let summary = BatchSummary {
        variant: config.variant,
        episodes: config.episodes,
        root_hits: Moments::from_values(outcomes.iter().map(|o| o.root_hits)),
        activated_frogs: Moments::from_values(outcomes.iter().map(|o| o.activated_frogs)),
        truncated: outcomes.iter().filter(|o| o.truncated).count() as u64,
        ambiguous_activation: outcomes.iter().filter(|o| o.ambiguous_activation).count() as u64,
    };
    Ok((outcomes, summary))
}

use serde::Serialize;

use crate::agent::AgentConfig;
use crate::model::StateId;

/// Momentum of the moving average of observed return.
pub const EMA_MOMENTUM: f64 = 0.9;

/// One training episode. Returns labelled `observed`/`true`/`corrupt` are of
/// the greedy policy after the episode's updates; `rollout_*` are of the
/// exploratory trajectory that was trained on.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRow {
    pub episode: usize,
    /// Return in the reward channel the agent observes.
    pub observed_return: f64,
    pub true_return: f64,
    /// Return under the corrupt reward `C`, whatever the channel.
    pub corrupt_return: f64,
    pub ema_observed: f64,
    pub corrupt_identified: usize,
    pub rollout_observed: f64,
    pub rollout_true: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DetectionEvent {
    pub episode: usize,
    pub state: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: AgentConfig,
    pub rows: Vec<EpisodeRow>,
    pub detections: Vec<DetectionEvent>,
    pub final_corrupt: Vec<StateId>,
    pub cache_evictions: usize,
}

impl RunRecord {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn last(&self) -> Option<&EpisodeRow> {
        self.rows.last()
    }

    /// Mean of `f` over the last `n` rows (fewer if the run is shorter).
    pub fn tail_mean(&self, n: usize, f: impl Fn(&EpisodeRow) -> f64) -> Option<f64> {
        let tail = &self.rows[self.rows.len().saturating_sub(n)..];
        if tail.is_empty() {
            return None;
        }
        Some(tail.iter().map(f).sum::<f64>() / tail.len() as f64)
    }
}

/// Next EMA value; the first value seeds the average.
pub fn ema_step(prev: Option<f64>, value: f64) -> f64 {
    match prev {
        None => value,
        Some(p) => EMA_MOMENTUM * p + (1.0 - EMA_MOMENTUM) * value,
    }
}

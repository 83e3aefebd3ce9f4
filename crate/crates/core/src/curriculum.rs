//! Reverse curriculum over start points of a single demonstration.
//!
//! Episode starts are drawn from a Gaussian over the demonstration's
//! progress fraction, clipped to `[0, 1]`. The mean starts near the end of
//! the demonstration and steps back towards the beginning each time the
//! agent has matched the demonstrator often enough at the current level.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::trajectory::{prefix_len, Demonstration};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurriculumConfig {
    pub initial_mean: f64,
    pub std: f64,
    pub rollback: f64,
    pub required_episodes: u32,
    /// An episode qualifies when the agent's segment score reaches this
    /// fraction of the demonstrator's score over the same segment.
    pub score_ratio: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            initial_mean: 0.95,
            std: 1.0 / 6.0,
            rollback: 0.20,
            required_episodes: 50,
            score_ratio: 0.9,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.initial_mean) {
            return Err(format!("initial_mean {} outside [0, 1]", self.initial_mean));
        }
        if !(self.std >= 0.0 && self.std.is_finite()) {
            return Err(format!("std {} must be finite and non-negative", self.std));
        }
        if !(self.rollback > 0.0 && self.rollback <= 1.0) {
            return Err(format!("rollback {} outside (0, 1]", self.rollback));
        }
        if self.required_episodes == 0 {
            return Err("required_episodes must be positive".into());
        }
        if !self.score_ratio.is_finite() {
            return Err("score_ratio must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    pub config: CurriculumConfig,
    pub mean: f64,
    pub qualifying_count: u32,
    pub promotions: u32,
    pub complete: bool,
}

/// What a call to [`CurriculumState::report_episode`] changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReportOutcome {
    pub qualified: bool,
    pub promoted: bool,
    pub completed: bool,
}

impl CurriculumState {
    pub fn new(config: CurriculumConfig) -> Self {
        Self {
            mean: config.initial_mean,
            config,
            qualifying_count: 0,
            promotions: 0,
            complete: false,
        }
    }

    pub fn std(&self) -> f64 {
        self.config.std
    }

    /// Mean after `promotions` rollbacks. Computed from the initial mean
    /// rather than by repeated subtraction so it never drifts.
    pub fn mean_after(config: &CurriculumConfig, promotions: u32) -> f64 {
        (config.initial_mean - promotions as f64 * config.rollback).max(0.0)
    }

    /// Draws a start fraction from `Normal(mean, std)` clipped to `[0, 1]`.
    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.config.std == 0.0 {
            return self.mean.clamp(0.0, 1.0);
        }
        let normal = Normal::new(self.mean, self.config.std).expect("std validated non-negative");
        Self::clip(normal.sample(rng))
    }

    pub fn clip(raw: f64) -> f64 {
        raw.clamp(0.0, 1.0)
    }

    pub fn is_qualifying(&self, agent_score: f64, human_score: f64) -> bool {
        agent_score >= self.config.score_ratio * human_score
    }

    /// Records one finished episode. `human_score` is the demonstrator's
    /// score over the segment the agent played, taken at the current mean.
    pub fn report_episode(&mut self, agent_score: f64, human_score: f64) -> ReportOutcome {
        let mut out = ReportOutcome::default();
        if self.complete || !self.is_qualifying(agent_score, human_score) {
            return out;
        }
        out.qualified = true;
        self.qualifying_count += 1;
        if self.qualifying_count < self.config.required_episodes {
            return out;
        }
        self.qualifying_count = 0;
        if self.mean == 0.0 {
            self.complete = true;
            out.completed = true;
        } else {
            self.promotions += 1;
            self.mean = Self::mean_after(&self.config, self.promotions);
            out.promoted = true;
        }
        out
    }
}

/// The demonstrator's score from `floor(fraction * len)` to the end.
pub fn human_reference_score(demo: &Demonstration, fraction: f64) -> i64 {
    demo.suffix_score(prefix_len(fraction, demo.len()))
}

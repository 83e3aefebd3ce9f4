//! Demonstration recording, persistence and prefix replay.
//!
//! A demonstration stores the commands issued in one episode, not the
//! states: any intermediate state is rebuilt by resetting the simulator
//! with the recorded seed and replaying a prefix of the commands. Per-step
//! digests exist only to verify that the replay took the recorded path.

mod file;
mod script;

use crate::sim::{Command, Digest, ScenarioConfig, SimError, WorldState};

pub use file::DEMO_SCHEMA_VERSION;
pub use script::{CommandScript, ScriptError};

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    #[error("demonstration has no steps")]
    Empty,
    #[error("episode stream ended before the episode terminated (after {steps} steps)")]
    Truncated { steps: usize },
    #[error("integrity failure at step {index}: {detail}")]
    Integrity { index: usize, detail: String },
    #[error("demonstration schema_version {found} is not supported (expected {expected})")]
    Version { found: u64, expected: u32 },
    #[error("demonstration was recorded on scenario {recorded}, not {given}")]
    ScenarioMismatch { recorded: Digest, given: Digest },
    #[error("malformed demonstration file, line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoStep {
    pub index: usize,
    /// Simulator tick after the step.
    pub tick: u64,
    pub command: Command,
    pub reward: i64,
    /// Digest of the state after the step.
    pub digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Demonstration {
    pub scenario_hash: Digest,
    pub seed: u64,
    pub steps: Vec<DemoStep>,
    pub total_score: i64,
}

/// Maps a start fraction onto a command index: `floor(fraction * len)`.
///
/// A tolerance of 1e-9 absorbs representation error, so `0.95 * 120` maps to
/// 114 regardless of how `0.95` rounds.
pub fn prefix_len(fraction: f64, len: usize) -> usize {
    let f = if fraction.is_nan() { 0.0 } else { fraction.clamp(0.0, 1.0) };
    ((f * len as f64 + 1e-9).floor() as usize).min(len)
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn commands(&self) -> impl Iterator<Item = &Command> + '_ {
        self.steps.iter().map(|s| &s.command)
    }

    /// Builds a demonstration from a stream of `(state after step, command,
    /// reward)` triples and verifies it by re-simulation.
    pub fn record<I>(scenario: &ScenarioConfig, seed: u64, stream: I) -> Result<Self, DemoError>
    where
        I: IntoIterator<Item = (WorldState, Command, i64)>,
    {
        let mut rec = Recorder::new(scenario, seed);
        let mut last = None;
        for (state, cmd, reward) in stream {
            rec.push(cmd, reward, &state);
            last = Some(state);
        }
        let last = last.ok_or(DemoError::Empty)?;
        rec.finish(&last, scenario)
    }

    /// Plays an episode to termination with commands chosen by `policy`.
    pub fn play<F>(scenario: &ScenarioConfig, seed: u64, mut policy: F) -> Result<Self, DemoError>
    where
        F: FnMut(&WorldState) -> Command,
    {
        let mut state = WorldState::reset(scenario, seed)?;
        let mut rec = Recorder::new(scenario, seed);
        while !state.is_done() {
            let cmd = policy(&state);
            let out = state.step(&cmd)?;
            rec.push(cmd, out.reward, &state);
        }
        rec.finish(&state, scenario)
    }

    /// Checks the score ledger and re-simulates the whole command sequence,
    /// comparing every reward and digest.
    pub fn verify(&self, scenario: &ScenarioConfig) -> Result<(), DemoError> {
        self.resimulate(scenario).map(|_| ())
    }

    /// Re-simulates every step and returns the tick after each one.
    fn resimulate(&self, scenario: &ScenarioConfig) -> Result<Vec<u64>, DemoError> {
        self.check_header(scenario)?;
        let mut state = WorldState::reset(scenario, self.seed)?;
        let mut ticks = Vec::with_capacity(self.steps.len());
        for (i, step) in self.steps.iter().enumerate() {
            if state.is_done() {
                return Err(integrity(i, "episode terminated before the recorded end"));
            }
            let out = state
                .step(&step.command)
                .map_err(|e| integrity(i, &e.to_string()))?;
            if out.reward != step.reward {
                return Err(integrity(
                    i,
                    &format!("recorded reward {} but replay gives {}", step.reward, out.reward),
                ));
            }
            if state.digest() != step.digest {
                return Err(integrity(i, "state digest does not match replay"));
            }
            ticks.push(state.tick);
        }
        if !state.is_done() {
            return Err(DemoError::Truncated {
                steps: self.steps.len(),
            });
        }
        Ok(ticks)
    }

    /// Structural checks that need no simulation.
    fn check_header(&self, scenario: &ScenarioConfig) -> Result<(), DemoError> {
        if self.steps.is_empty() {
            return Err(DemoError::Empty);
        }
        let given = scenario.hash();
        if given != self.scenario_hash {
            return Err(DemoError::ScenarioMismatch {
                recorded: self.scenario_hash,
                given,
            });
        }
        for (i, s) in self.steps.iter().enumerate() {
            if s.index != i {
                return Err(integrity(i, &format!("step index {} out of sequence", s.index)));
            }
            if !s.command.is_canonical() {
                return Err(integrity(i, "non-canonical NoOp command"));
            }
        }
        let sum: i64 = self.steps.iter().map(|s| s.reward).sum();
        if sum != self.total_score {
            return Err(integrity(
                self.steps.len(),
                &format!("total_score {} but step rewards sum to {sum}", self.total_score),
            ));
        }
        Ok(())
    }

    /// State after replaying the first `n` commands.
    pub fn replay_to(&self, scenario: &ScenarioConfig, n: usize) -> Result<WorldState, DemoError> {
        self.check_header(scenario)?;
        if n > self.steps.len() {
            return Err(integrity(n, "prefix longer than the demonstration"));
        }
        let mut state = WorldState::reset(scenario, self.seed)?;
        for (i, step) in self.steps[..n].iter().enumerate() {
            state
                .step(&step.command)
                .map_err(|e| integrity(i, &e.to_string()))?;
            if state.digest() != step.digest {
                return Err(integrity(i, "state digest does not match replay"));
            }
        }
        Ok(state)
    }

    /// Resets the simulator and replays `floor(fraction * len)` commands.
    pub fn replay_prefix(
        &self,
        scenario: &ScenarioConfig,
        fraction: f64,
    ) -> Result<WorldState, DemoError> {
        self.replay_to(scenario, prefix_len(fraction, self.len()))
    }

    /// Every prefix state `0..=len`, verified. Index `n` holds the state
    /// after `n` commands.
    pub fn prefix_states(&self, scenario: &ScenarioConfig) -> Result<Vec<WorldState>, DemoError> {
        self.verify(scenario)?;
        let mut state = WorldState::reset(scenario, self.seed)?;
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(state.clone());
        for step in &self.steps {
            state.step(&step.command)?;
            out.push(state.clone());
        }
        Ok(out)
    }

    /// Sum of rewards from command index `from` to the end.
    pub fn suffix_score(&self, from: usize) -> i64 {
        self.steps.iter().skip(from).map(|s| s.reward).sum()
    }
}

fn integrity(index: usize, detail: &str) -> DemoError {
    DemoError::Integrity {
        index,
        detail: detail.to_string(),
    }
}

/// Incremental recorder fed one decision step at a time.
#[derive(Debug, Clone)]
pub struct Recorder {
    scenario_hash: Digest,
    seed: u64,
    steps: Vec<DemoStep>,
}

impl Recorder {
    pub fn new(scenario: &ScenarioConfig, seed: u64) -> Self {
        Self {
            scenario_hash: scenario.hash(),
            seed,
            steps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn push(&mut self, command: Command, reward: i64, after: &WorldState) {
        let command = if command.is_noop() { Command::NOOP } else { command };
        self.steps.push(DemoStep {
            index: self.steps.len(),
            tick: after.tick,
            command,
            reward,
            digest: after.digest(),
        });
    }

    /// Finalizes the recording. The episode must have terminated and the
    /// whole stream must re-simulate exactly.
    pub fn finish(
        self,
        final_state: &WorldState,
        scenario: &ScenarioConfig,
    ) -> Result<Demonstration, DemoError> {
        if self.steps.is_empty() {
            return Err(DemoError::Empty);
        }
        if !final_state.is_done() {
            return Err(DemoError::Truncated {
                steps: self.steps.len(),
            });
        }
        let total_score = self.steps.iter().map(|s| s.reward).sum();
        let demo = Demonstration {
            scenario_hash: self.scenario_hash,
            seed: self.seed,
            steps: self.steps,
            total_score,
        };
        demo.verify(scenario)?;
        Ok(demo)
    }
}

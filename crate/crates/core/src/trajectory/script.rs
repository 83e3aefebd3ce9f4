//! Timed command scripts: a plain-text stand-in for a human player.
//!
//! ```text
//! # step coalition action x_bin y_bin
//! 0   Tanks   Move   0 0
//! 12  Tanks   Move   2 0
//! ```
//!
//! Decision steps without an entry issue NoOp.

use super::{DemoError, Demonstration};
use crate::sim::{ActionId, Coalition, Command, ScenarioConfig};

const REFERENCE_SCRIPT: &str = include_str!("../../scenarios/reference.script");

#[derive(Debug, thiserror::Error)]
#[error("script line {line}: {detail}")]
pub struct ScriptError {
    pub line: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandScript {
    /// `(decision step, command)`, strictly increasing in step.
    pub entries: Vec<(u32, Command)>,
}

impl CommandScript {
    /// The scripted reference plan for the bundled scenario.
    pub fn reference() -> Self {
        Self::parse(REFERENCE_SCRIPT).expect("bundled script parses")
    }

    pub fn parse(text: &str) -> Result<Self, ScriptError> {
        let mut entries: Vec<(u32, Command)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |detail: String| ScriptError { line: i + 1, detail };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", f.len())));
            }
            let step: u32 = f[0].parse().map_err(|_| err(format!("bad step {:?}", f[0])))?;
            let coalition = Coalition::BLUE
                .into_iter()
                .find(|c| format!("{c:?}") == f[1])
                .ok_or_else(|| err(format!("unknown Blue coalition {:?}", f[1])))?;
            let action = match f[2] {
                "NoOp" => ActionId::NoOp,
                "Move" => ActionId::Move,
                "Attack" => ActionId::Attack,
                other => return Err(err(format!("unknown action {other:?}"))),
            };
            let x: u8 = f[3].parse().map_err(|_| err(format!("bad x bin {:?}", f[3])))?;
            let y: u8 = f[4].parse().map_err(|_| err(format!("bad y bin {:?}", f[4])))?;
            if entries.last().is_some_and(|&(s, _)| s >= step) {
                return Err(err("steps must be strictly increasing".into()));
            }
            entries.push((step, Command::new(coalition, action, x, y)));
        }
        Ok(Self { entries })
    }

    pub fn command_at(&self, step: u32) -> Command {
        self.entries
            .binary_search_by_key(&step, |&(s, _)| s)
            .map(|i| self.entries[i].1)
            .unwrap_or(Command::NOOP)
    }

    /// Plays the script from `reset(scenario, seed)` until the episode ends.
    pub fn record(&self, scenario: &ScenarioConfig, seed: u64) -> Result<Demonstration, DemoError> {
        Demonstration::play(scenario, seed, |s| self.command_at(s.steps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_looks_up() {
        let s = CommandScript::parse("# hdr\n0 Tanks Move 0 0\n\n5 Aviation Attack 2 2 # go\n")
            .unwrap();
        assert_eq!(s.entries.len(), 2);
        assert_eq!(s.command_at(0), Command::new(Coalition::Tanks, ActionId::Move, 0, 0));
        assert_eq!(s.command_at(3), Command::NOOP);
        assert_eq!(s.command_at(5).action, ActionId::Attack);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(CommandScript::parse("0 Tanks Move 0").is_err());
        assert!(CommandScript::parse("0 RedArmor Move 0 0").is_err());
        assert!(CommandScript::parse("3 Tanks Move 0 0\n3 Scouts Move 0 0").is_err());
    }
}

//! Line-delimited JSON demonstration files.
//!
//! ```text
//! {"schema_version":1,"scenario_hash":"<16 hex>","seed":7,"length":120,"total_score":90}
//! {"index":0,"coalition":4,"action":"Move","x_bin":0,"y_bin":0,"reward":0,"digest":"<16 hex>"}
//! ...
//! ```
//!
//! One header line, then one line per decision step, each terminated by
//! `\n`. NoOp steps are written with zeroed coalition and bins.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DemoError, DemoStep, Demonstration};
use crate::sim::{ActionId, Command, Digest, ScenarioConfig};

pub const DEMO_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    schema_version: u32,
    scenario_hash: Digest,
    seed: u64,
    length: usize,
    total_score: i64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepLine {
    index: usize,
    coalition: u8,
    action: ActionId,
    x_bin: u8,
    y_bin: u8,
    reward: i64,
    digest: Digest,
}

fn format_err(line: usize, detail: impl ToString) -> DemoError {
    DemoError::Format {
        line,
        detail: detail.to_string(),
    }
}

impl Demonstration {
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = HeaderLine {
            schema_version: DEMO_SCHEMA_VERSION,
            scenario_hash: self.scenario_hash,
            seed: self.seed,
            length: self.steps.len(),
            total_score: self.total_score,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for s in &self.steps {
            let line = StepLine {
                index: s.index,
                coalition: s.command.coalition,
                action: s.command.action,
                x_bin: s.command.x_bin,
                y_bin: s.command.y_bin,
                reward: s.reward,
                digest: s.digest,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Parses a demonstration file without simulating it. Step ticks are
    /// left at zero; [`Demonstration::load`] fills them in.
    pub fn parse(text: &str) -> Result<Self, DemoError> {
        let body = text
            .strip_suffix('\n')
            .ok_or_else(|| format_err(0, "file must end with a newline"))?;
        let mut lines = body.split('\n');
        let head = lines.next().ok_or(DemoError::Empty)?;

        let raw: serde_json::Value = serde_json::from_str(head).map_err(|e| format_err(1, e))?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == DEMO_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(DemoError::Version {
                    found: v,
                    expected: DEMO_SCHEMA_VERSION,
                })
            }
            None => return Err(format_err(1, "missing schema_version")),
        }
        let header: HeaderLine = serde_json::from_value(raw).map_err(|e| format_err(1, e))?;

        let mut steps = Vec::with_capacity(header.length);
        for (i, line) in lines.enumerate() {
            let s: StepLine = serde_json::from_str(line).map_err(|e| format_err(i + 2, e))?;
            steps.push(DemoStep {
                index: s.index,
                tick: 0,
                command: Command {
                    coalition: s.coalition,
                    action: s.action,
                    x_bin: s.x_bin,
                    y_bin: s.y_bin,
                },
                reward: s.reward,
                digest: s.digest,
            });
        }
        if steps.len() != header.length {
            return Err(format_err(
                0,
                format!("header says {} steps, file has {}", header.length, steps.len()),
            ));
        }
        Ok(Demonstration {
            scenario_hash: header.scenario_hash,
            seed: header.seed,
            steps,
            total_score: header.total_score,
        })
    }

    /// Writes to a temporary sibling and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), DemoError> {
        crate::io::write_atomic(path, self.to_text().as_bytes())?;
        Ok(())
    }

    /// Reads and fully verifies a demonstration against `scenario`.
    pub fn load(path: &Path, scenario: &ScenarioConfig) -> Result<Self, DemoError> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => format_err(0, "file is not UTF-8"),
            _ => DemoError::Io(e),
        })?;
        Self::from_text(&text, scenario)
    }

    pub fn from_text(text: &str, scenario: &ScenarioConfig) -> Result<Self, DemoError> {
        let mut demo = Self::parse(text)?;
        let ticks = demo.resimulate(scenario)?;
        for (s, t) in demo.steps.iter_mut().zip(ticks) {
            s.tick = t;
        }
        Ok(demo)
    }
}

//! Subcommand definitions and dispatch.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use wadi_core::policy::{NetConfig, PolicyParams};
use wadi_core::sim::ScenarioConfig;
use wadi_core::training::Condition;
use wadi_core::trajectory::{CommandScript, Demonstration};

mod eval;
mod inspect;
mod record;
mod serve;
mod train;

/// Seed the bundled reference demonstration is recorded at.
pub const REFERENCE_SEED: u64 = 7;

/// A usage mistake: reported like any other failure but exits with 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "wadi", version, about = "Record, train and evaluate agents on the wadi-crossing microworld")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the session protocol for recording and replaying demonstrations.
    Serve(serve::ServeArgs),
    /// Train one experimental condition.
    Train(train::TrainArgs),
    /// Evaluate checkpoints and print the comparison tables.
    Eval(eval::EvalArgs),
    /// Summarize a demonstration, checkpoint, training log or scenario file.
    Inspect(inspect::InspectArgs),
    /// Record a demonstration from a command script or a checkpoint.
    Record(record::RecordArgs),
}

#[derive(Args, Clone)]
struct ScenarioArg {
    /// Scenario TOML; the bundled default when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

impl ScenarioArg {
    fn load(&self) -> anyhow::Result<ScenarioConfig> {
        match &self.scenario {
            Some(p) => ScenarioConfig::load(p).with_context(|| format!("scenario {}", p.display())),
            None => Ok(ScenarioConfig::default_scenario()),
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve(a) => serve::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run(a),
        Command::Inspect(a) => inspect::run(a),
        Command::Record(a) => record::run(a),
    }
}

/// Loads `path`, or records the bundled reference script when absent.
fn load_demo(path: Option<&Path>, scenario: &ScenarioConfig) -> anyhow::Result<Demonstration> {
    match path {
        Some(p) => Demonstration::load(p, scenario).with_context(|| format!("demonstration {}", p.display())),
        None => CommandScript::reference()
            .record(scenario, REFERENCE_SEED)
            .context("recording the reference demonstration"),
    }
}

fn parse_condition(s: &str) -> Result<Condition, String> {
    s.parse()
}

/// A checkpoint only runs against the observation layout and action grid
/// it was built for.
fn check_schema(params: &PolicyParams, scenario: &ScenarioConfig) -> anyhow::Result<()> {
    let expected = NetConfig::desk_scale(params.config.obs_mode, scenario.grid_bins);
    if params.config != expected {
        anyhow::bail!(
            "network schema mismatch: checkpoint has {} grid bins and vector length {}, scenario needs {} and {}",
            params.config.grid_bins,
            params.config.vector_len,
            expected.grid_bins,
            expected.vector_len
        );
    }
    Ok(())
}

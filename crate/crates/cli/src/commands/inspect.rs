use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use wadi_core::policy::PolicyParams;
use wadi_core::sim::{Coalition, ScenarioConfig, Side};
use wadi_core::training::{TrainConfig, TrainLog};
use wadi_core::trajectory::Demonstration;

use super::ScenarioArg;

#[derive(Args)]
pub struct InspectArgs {
    path: PathBuf,
    /// Scenario a demonstration is verified against.
    #[command(flatten)]
    scenario: ScenarioArg,
}

pub fn run(a: InspectArgs) -> anyhow::Result<()> {
    let bytes = std::fs::read(&a.path).with_context(|| format!("reading {}", a.path.display()))?;
    if bytes.starts_with(b"WADICKPT") {
        let params = PolicyParams::from_checkpoint_bytes(&bytes)?;
        let c = &params.config;
        println!("checkpoint: {} parameters", params.len());
        println!("observation: {:?}, grid bins {}", c.obs_mode, c.grid_bins);
        println!("conv channels {:?}, trunk {:?}", c.conv_channels, c.trunk);
        return Ok(());
    }
    let text = String::from_utf8(bytes).context("file is neither a checkpoint nor text")?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if let Ok(v) = serde_json::from_str::<serde_json::Value>(first) {
        if v.get("schema_version").is_some() {
            return demo(&a, &text);
        }
        if v.get("type").is_some() {
            return log(&text);
        }
        if v.get("promotions").is_some() {
            println!("curriculum events: {}", text.lines().filter(|l| !l.trim().is_empty()).count());
            return Ok(());
        }
    }
    if let Ok(s) = ScenarioConfig::from_toml_str(&text) {
        let width = s.terrain.rows.first().map_or(0, |r| r.len());
        println!("scenario: {}x{}, wadi column {}", width, s.terrain.rows.len(), s.terrain.wadi_axis);
        println!("hash {}", s.hash());
        println!(
            "blue {} units, red {} units, {} ticks per step, cap {} steps",
            s.roster_size(Side::Blue),
            s.roster_size(Side::Red),
            s.ticks_per_step,
            s.episode_cap
        );
        for c in Coalition::ALL {
            println!("  {:<20} {}", c.label(), s.roster_count(c));
        }
        return Ok(());
    }
    if let Ok(c) = TrainConfig::from_toml_str(&text) {
        print!("{}", c.to_toml_string());
        return Ok(());
    }
    bail!("unrecognized file {}", a.path.display())
}

fn demo(a: &InspectArgs, text: &str) -> anyhow::Result<()> {
    let scenario = a.scenario.load()?;
    let d = Demonstration::from_text(text, &scenario).context("verifying demonstration")?;
    println!("demonstration: {} steps, seed {}, score {}", d.len(), d.seed, d.total_score);
    println!("scenario hash {} (verified)", d.scenario_hash);
    let issued = d.commands().filter(|c| !c.is_noop()).count();
    println!("{issued} non-idle command(s)");
    Ok(())
}

fn log(text: &str) -> anyhow::Result<()> {
    let log = TrainLog::from_jsonl(text)?;
    println!("training log: {} episodes, {} evaluations", log.episodes.len(), log.evals.len());
    if let Some(last) = log.episodes.last() {
        println!("env steps {}", last.env_steps);
        println!("last curriculum mean {:.2}", last.curriculum_mean);
    }
    for e in &log.evals {
        println!(
            "  eval @{:>9}: mean {:7.1} median {:7.1} win {:.2}",
            e.env_steps, e.mean_reward, e.median_reward, e.win_rate
        );
    }
    Ok(())
}

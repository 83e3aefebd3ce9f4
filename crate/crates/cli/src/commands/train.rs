use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use wadi_core::io::write_atomic;
use wadi_core::training::{run_training, Condition, TrainConfig};

use super::{ScenarioArg, Usage};

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = super::parse_condition)]
    condition: Option<Condition>,
    /// Demonstration file; required for the acl-* conditions.
    #[arg(long)]
    demo: Option<PathBuf>,
    /// Budget in agent decision steps.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Greedy evaluation cadence in steps; 0 disables it.
    #[arg(long)]
    eval_every: Option<u64>,
    #[arg(long)]
    eval_rollouts: Option<usize>,
    /// Training config TOML. Flags given on the command line win over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    out: PathBuf,
}

impl TrainArgs {
    /// Flag > config file > built-in default.
    fn effective(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("config {}", p.display()))?;
                TrainConfig::from_toml_str(&text).with_context(|| format!("config {}", p.display()))?
            }
            None => TrainConfig::default(),
        };
        if let Some(c) = self.condition {
            cfg.condition = c;
        }
        if let Some(n) = self.steps {
            cfg.total_env_steps = n;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = self.eval_every {
            cfg.eval_every = e;
        }
        if let Some(r) = self.eval_rollouts {
            cfg.eval_rollouts = r;
        }
        cfg.validate().map_err(|e| Usage(e.to_string()))?;
        Ok(cfg)
    }
}

pub fn run(a: TrainArgs) -> anyhow::Result<()> {
    let cfg = a.effective()?;
    if cfg.condition.is_acl() && a.demo.is_none() {
        anyhow::bail!(Usage(format!("condition {} needs --demo", cfg.condition.name())));
    }
    let scenario = a.scenario.load()?;
    let demo = match (&a.demo, cfg.condition.is_acl()) {
        (Some(p), true) => Some(super::load_demo(Some(p), &scenario)?),
        (Some(_), false) => {
            eprintln!("note: {} does not use a demonstration; --demo ignored", cfg.condition.name());
            None
        }
        (None, _) => None,
    };

    eprintln!(
        "training {} for {} steps with {} worker(s), seed {}",
        cfg.condition.name(),
        cfg.total_env_steps,
        cfg.workers,
        cfg.seed
    );
    let outcome = run_training(&cfg, &scenario, demo.as_ref())?;

    outcome.write_to(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    write_atomic(&a.out.join("config.toml"), cfg.to_toml_string().as_bytes())?;
    write_atomic(&a.out.join("scenario.toml"), scenario.to_toml_string().as_bytes())?;

    println!("episodes {}", outcome.log.episodes.len());
    if let Some(e) = outcome.log.final_eval() {
        println!(
            "final eval at {} steps: mean {:.1} median {:.1} win rate {:.2}",
            e.env_steps, e.mean_reward, e.median_reward, e.win_rate
        );
    }
    if let Some(c) = &outcome.curriculum {
        println!(
            "curriculum mean {:.2} after {} promotion(s){}",
            c.mean,
            c.promotions,
            if c.complete { ", complete" } else { "" }
        );
    }
    if outcome.log.rejected_updates > 0 {
        println!("rejected {} non-finite update(s)", outcome.log.rejected_updates);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

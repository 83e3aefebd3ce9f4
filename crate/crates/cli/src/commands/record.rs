use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use wadi_core::eval::{Actor, Greedy};
use wadi_core::policy::PolicyParams;
use wadi_core::trajectory::{CommandScript, Demonstration};

use super::ScenarioArg;

#[derive(Args)]
pub struct RecordArgs {
    /// Command script (`step coalition action x y` per line).
    #[arg(long, conflicts_with = "checkpoint")]
    script: Option<PathBuf>,
    /// Record the greedy policy of this checkpoint instead of a script.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = super::REFERENCE_SEED)]
    seed: u64,
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: RecordArgs) -> anyhow::Result<()> {
    let scenario = a.scenario.load()?;
    let demo = match (&a.script, &a.checkpoint) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("script {}", p.display()))?;
            let script = CommandScript::parse(&text).with_context(|| format!("script {}", p.display()))?;
            script.record(&scenario, a.seed)?
        }
        (None, Some(p)) => {
            let params = PolicyParams::load_checkpoint(p).with_context(|| format!("checkpoint {}", p.display()))?;
            super::check_schema(&params, &scenario).with_context(|| format!("checkpoint {}", p.display()))?;
            let mut greedy = Greedy::new(&params);
            let mut failure = None;
            let demo = Demonstration::play(&scenario, a.seed, |w| match greedy.act(w) {
                Ok(c) => c,
                Err(e) => {
                    failure.get_or_insert(e);
                    wadi_core::sim::Command::NOOP
                }
            })?;
            if let Some(e) = failure {
                bail!("policy failed: {e}");
            }
            demo
        }
        (None, None) => CommandScript::reference().record(&scenario, a.seed)?,
    };
    demo.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("recorded {} steps, score {}, to {}", demo.len(), demo.total_score, a.out.display());
    Ok(())
}

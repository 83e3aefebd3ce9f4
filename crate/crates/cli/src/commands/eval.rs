use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;
use wadi_core::eval::{compare, demo_report, evaluate, Comparison, EvalReport};
use wadi_core::io::write_atomic;
use wadi_core::policy::PolicyParams;
use wadi_core::sim::ScenarioConfig;
use wadi_core::training::{Condition, TrainConfig};

use super::{ScenarioArg, Usage};

#[derive(Args)]
pub struct EvalArgs {
    /// A `policy.ckpt` file or a training output directory. Repeatable.
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    /// Column label per checkpoint, in order. Defaults to the condition
    /// recorded next to the checkpoint.
    #[arg(long)]
    label: Vec<String>,
    #[arg(long, default_value_t = 100)]
    rollouts: usize,
    /// Rollout `i` starts from seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Demonstration for the human column; the bundled reference when omitted.
    #[arg(long)]
    demo: Option<PathBuf>,
    #[command(flatten)]
    scenario: ScenarioArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Column {
    label: String,
    checkpoint: PathBuf,
    report: EvalReport,
}

#[derive(Serialize)]
struct Output<'a> {
    scenario_hash: String,
    rollouts: usize,
    seed: u64,
    demo: Option<&'a Path>,
    demo_seed: u64,
    demo_length: usize,
    demo_score: i64,
    human: &'a EvalReport,
    columns: &'a [Column],
    tables: &'a Comparison,
}

struct Loaded {
    label: String,
    path: PathBuf,
    params: PolicyParams,
}

fn resolve(path: &Path) -> (PathBuf, Option<PathBuf>) {
    if path.is_dir() {
        (path.join("policy.ckpt"), Some(path.to_path_buf()))
    } else {
        (path.to_path_buf(), path.parent().map(Path::to_path_buf))
    }
}

fn load(path: &Path, label: Option<&String>, scenario: &ScenarioConfig) -> anyhow::Result<Loaded> {
    let (ckpt, dir) = resolve(path);
    let params = PolicyParams::load_checkpoint(&ckpt).with_context(|| format!("checkpoint {}", ckpt.display()))?;
    super::check_schema(&params, scenario).with_context(|| format!("checkpoint {}", ckpt.display()))?;
    let dir = dir.filter(|d| d.join("config.toml").is_file());
    if let Some(d) = &dir {
        let echoed = d.join("scenario.toml");
        if echoed.is_file() {
            let trained = ScenarioConfig::load(&echoed).with_context(|| format!("scenario {}", echoed.display()))?;
            if trained.hash() != scenario.hash() {
                bail!("checkpoint {} was trained on a different scenario", ckpt.display());
            }
        }
    }
    let label = match label {
        Some(l) => l.clone(),
        None => match &dir {
            Some(d) => {
                let text = std::fs::read_to_string(d.join("config.toml"))?;
                TrainConfig::from_toml_str(&text)
                    .with_context(|| format!("config next to {}", ckpt.display()))?
                    .condition
                    .column()
                    .to_string()
            }
            None => ckpt.display().to_string(),
        },
    };
    Ok(Loaded { label, path: ckpt, params })
}

pub fn run(a: EvalArgs) -> anyhow::Result<()> {
    if a.rollouts == 0 {
        bail!(Usage("--rollouts must be at least 1".into()));
    }
    if !a.label.is_empty() && a.label.len() != a.checkpoint.len() {
        bail!(Usage(format!(
            "{} label(s) for {} checkpoint(s)",
            a.label.len(),
            a.checkpoint.len()
        )));
    }
    let scenario = a.scenario.load()?;
    let demo = super::load_demo(a.demo.as_deref(), &scenario)?;
    let human = demo_report(&demo, &scenario)?;

    let loaded = a
        .checkpoint
        .iter()
        .enumerate()
        .map(|(i, p)| load(p, a.label.get(i), &scenario))
        .collect::<anyhow::Result<Vec<_>>>()?;
    for (i, l) in loaded.iter().enumerate() {
        if loaded[..i].iter().any(|m| m.label == l.label) {
            bail!(Usage(format!("two checkpoints share the column {:?}; pass --label", l.label)));
        }
    }

    let mut columns = Vec::new();
    for l in loaded {
        eprintln!("evaluating {} over {} rollouts", l.label, a.rollouts);
        let report = evaluate(&l.params, &scenario, a.rollouts, a.seed)?;
        columns.push(Column {
            label: l.label,
            checkpoint: l.path,
            report,
        });
    }

    // The four conditions always appear, in a fixed order; anything else
    // is appended after them.
    let mut cells: Vec<(String, Option<EvalReport>)> = Condition::ALL
        .iter()
        .map(|c| {
            let r = columns.iter().find(|col| col.label == c.column()).map(|col| col.report.clone());
            (c.column().to_string(), r)
        })
        .collect();
    for col in &columns {
        if !Condition::ALL.iter().any(|c| c.column() == col.label) {
            cells.push((col.label.clone(), Some(col.report.clone())));
        }
    }
    let tables = compare(&cells, &human);
    let text = tables.render();

    let out = Output {
        scenario_hash: scenario.hash().to_hex(),
        rollouts: a.rollouts,
        seed: a.seed,
        demo: a.demo.as_deref(),
        demo_seed: demo.seed,
        demo_length: demo.len(),
        demo_score: demo.total_score,
        human: &human,
        columns: &columns,
        tables: &tables,
    };
    let json = serde_json::to_string_pretty(&out)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_atomic(&a.out.join("eval_report.json"), json.as_bytes())?;
    write_atomic(&a.out.join("tables.txt"), text.as_bytes())?;

    print!("{text}");
    println!();
    for col in &columns {
        println!(
            "{}: mean reward {:.1} (median {:.1}, win rate {:.2})",
            col.label, col.report.mean_reward, col.report.median_reward, col.report.win_rate
        );
    }
    println!("{}: reward {}", wadi_core::eval::HUMAN_COLUMN, demo.total_score);
    Ok(())
}

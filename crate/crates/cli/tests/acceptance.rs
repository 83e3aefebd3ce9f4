//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.
//!
//! `cargo test -p wadi-cli --test acceptance [-- <name filter>]`

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};
use support::*;
use wadi_core::curriculum::{human_reference_score, CurriculumConfig, CurriculumState};
use wadi_core::eval::{evaluate, median, EpisodeStats, HUMAN_COLUMN};
use wadi_core::policy::{n_step_returns, LossConfig, RolloutBatch};
use wadi_core::sim::{Coalition, Command, Digest, Observation, RewardKind, ScenarioConfig, Side, WorldState};
use wadi_core::training::{run_training, Condition, TrainConfig};
use wadi_core::trajectory::{CommandScript, Demonstration};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {:.1}s, limit {}s", took.as_secs_f64(), limit.as_secs()))?;
    Ok(took)
}

fn digests(scenario: &ScenarioConfig, seed: u64, cmds: &[Command]) -> Vec<Digest> {
    let mut w = WorldState::reset(scenario, seed).unwrap();
    let mut out = vec![w.digest()];
    for c in cmds {
        if w.is_done() {
            break;
        }
        w.step(c).unwrap();
        out.push(w.digest());
    }
    out
}

fn replay_determinism() -> Check {
    let started = Instant::now();
    let scenario = ScenarioConfig::default_scenario();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..50 {
        let seed = rng.random::<u64>();
        let cmds: Vec<Command> = (0..rng.random_range(1..=500)).map(|_| random_command(&mut rng)).collect();
        ensure(digests(&scenario, seed, &cmds) == digests(&scenario, seed, &cmds), || {
            format!("sequence {i} diverged")
        })?;
    }

    let dir = tempfile::tempdir().unwrap();
    let mut demos = vec![CommandScript::reference().record(&scenario, 7).unwrap()];
    for s in 0..9 {
        let mut r = ChaCha8Rng::seed_from_u64(900 + s);
        demos.push(Demonstration::play(&scenario, s, |_| random_command(&mut r)).unwrap());
    }
    let mut indices = 0;
    for (i, demo) in demos.iter().enumerate() {
        let path = dir.path().join(format!("{i}.jsonl"));
        demo.save(&path).unwrap();
        let loaded = Demonstration::load(&path, &scenario).map_err(|e| format!("demo {i}: {e}"))?;
        ensure(&loaded == demo, || format!("demo {i} changed on load"))?;
        let states = loaded.prefix_states(&scenario).unwrap();
        for n in 1..=loaded.len() {
            let fresh = loaded.replay_to(&scenario, n).unwrap();
            let want = loaded.steps[n - 1].digest;
            ensure(fresh.digest() == want && states[n].digest() == want, || {
                format!("demo {i} prefix {n} digest mismatch")
            })?;
            indices += 1;
        }
    }
    let took = within(Duration::from_secs(60), started)?;
    Ok(format!(
        "50 sequences identical; {indices} prefix digests over 10 saved demos match ({:.1}s)",
        took.as_secs_f64()
    ))
}

fn gradient_correctness() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let (mut accepted, mut redrawn) = (0, 0);
    let mut worst: f64 = 0.0;
    while accepted < 100 {
        let p = random_params(tiny_config(&mut rng), &mut rng);
        let batch = random_batch(&p, &mut rng);
        if !kink_free(&p, &batch) {
            redrawn += 1;
            continue;
        }
        let loss = LossConfig {
            gamma: rng.random_range(0.0..1.0),
            value_coef: rng.random_range(0.0..1.0),
            entropy_coef: rng.random_range(0.0..0.1),
        };
        worst = worst.max(max_fd_error(&p, &batch, &loss));
        accepted += 1;
    }
    ensure(worst < 1e-4, || format!("max relative error {worst:.3e}"))?;
    let took = within(Duration::from_secs(120), started)?;
    Ok(format!(
        "max relative error {worst:.2e} over 100 draws, h = {FD_STEP:e} ({redrawn} redrawn at a ReLU kink, {:.1}s)",
        took.as_secs_f64()
    ))
}

fn curriculum_state_machine() -> Check {
    let fresh = CurriculumState::new(CurriculumConfig::default());
    ensure(fresh.mean == 0.95 && fresh.std() == 1.0 / 6.0, || {
        format!("initial mean {} std {}", fresh.mean, fresh.std())
    })?;

    // Every sample is exactly the clipped raw Gaussian draw.
    let n = 100_000;
    let mut a = ChaCha8Rng::seed_from_u64(8);
    let mut b = a.clone();
    let raw = Normal::<f64>::new(0.95, 1.0 / 6.0).unwrap();
    let mut at_one = 0usize;
    for i in 0..n {
        let s = fresh.sample_start(&mut a);
        let want = raw.sample(&mut b).clamp(0.0, 1.0);
        ensure(s == want, || format!("sample {i}: {s} is not clip({want})"))?;
        at_one += (s == 1.0) as usize;
    }
    let tail = 1.0 - StatNormal::new(0.95, 1.0 / 6.0).unwrap().cdf(1.0);
    let sd = (n as f64 * tail * (1.0 - tail)).sqrt();
    ensure((at_one as f64 - n as f64 * tail).abs() < 4.0 * sd, || {
        format!("{at_one} samples at 1, expected {:.0}", n as f64 * tail)
    })?;

    // Promotion on exactly the 50th qualifying report; failing reports in
    // between change nothing.
    let mut cur = CurriculumState::new(CurriculumConfig::default());
    let mut means = vec![cur.mean];
    let mut reports = 0;
    while !cur.complete {
        for k in 1..=50 {
            let before = cur.mean;
            let failed = cur.report_episode(0.0, 240.0);
            ensure(!failed.qualified && cur.mean == before, || "a failing report changed the state".into())?;
            let out = cur.report_episode(216.0, 240.0);
            reports += 1;
            let last = k == 50;
            ensure(out.qualified && (out.promoted || out.completed) == last, || {
                format!("report {reports}: promotion after {k} qualifying episodes")
            })?;
        }
        if !cur.complete {
            means.push(cur.mean);
        }
    }
    for (i, m) in means.iter().enumerate() {
        let want = (0.95 - 0.20 * i as f64).max(0.0);
        ensure(*m == CurriculumState::mean_after(&cur.config, i as u32) && (m - want).abs() < 1e-12, || {
            format!("mean after {i} promotions is {m}, expected {want}")
        })?;
    }
    ensure(means.last() == Some(&0.0) && means.len() == 6, || format!("means {means:?}"))?;
    ensure(cur.promotions == 5 && reports == 300, || {
        format!("{} promotions after {reports} qualifying reports", cur.promotions)
    })?;
    let frozen = cur.clone();
    cur.report_episode(1e9, 0.0);
    ensure(cur == frozen, || "a completed curriculum kept changing".into())?;
    let means: Vec<String> = means.iter().map(|m| format!("{m:.2}")).collect();
    Ok(format!(
        "mean 0.95, sigma 1/6, 1e5 clipped draws exact ({at_one} at 1), promotion on every 50th qualifier, means {}, complete after 50 more at 0",
        means.join(" > ")
    ))
}

fn reward_ledger() -> Check {
    let scenario = ScenarioConfig::default_scenario();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut events = 0usize;
    for episode in 0..1000u64 {
        let mut w = WorldState::reset(&scenario, episode).unwrap();
        let mut summed = 0;
        while !w.is_done() {
            summed += w.step(&random_command(&mut rng)).unwrap().reward;
        }
        let count = |k: RewardKind| w.event_log.iter().filter(|e| e.kind == k).count() as i64;
        let recount = 10
            * (count(RewardKind::RedDestroyed) - count(RewardKind::BlueDestroyed) + count(RewardKind::Crossed)
                - count(RewardKind::Retreated));
        ensure(w.score == recount && w.score == summed, || {
            format!("episode {episode}: score {} ledger {recount} step sum {summed}", w.score)
        })?;
        let dead = |side: Side| w.units.iter().filter(|u| u.side == side && !u.alive()).count() as i64;
        ensure(
            count(RewardKind::RedDestroyed) == dead(Side::Red) && count(RewardKind::BlueDestroyed) == dead(Side::Blue),
            || format!("episode {episode}: kill events disagree with dead units"),
        )?;
        events += w.event_log.len();
    }
    Ok(format!("1000 episodes, {events} reward events, all scores equal the ledger"))
}

fn return_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=16);
        let mut b = RolloutBatch {
            observations: vec![Observation::default(); n],
            actions: vec![[0; 4]; n],
            rewards: gaussian(&mut rng, n, 3.0),
            values: gaussian(&mut rng, n, 1.0),
            dones: (0..n).map(|_| rng.random_bool(0.15)).collect(),
            bootstrap_value: rng.random_range(-5.0..5.0),
        };
        if b.dones[n - 1] {
            b.bootstrap_value = 0.0;
        }
        let gamma = rng.random_range(0.0..=1.0);
        let (ret, adv) = n_step_returns(&b, gamma);
        let want = brute_force_returns(&b, gamma);
        for t in 0..n {
            worst = worst.max((ret[t] - want[t]).abs()).max((adv[t] - (want[t] - b.values[t])).abs());
        }
    }
    ensure(worst < 1e-12, || format!("max error {worst:e}"))?;
    Ok(format!("1000 batches, max error {worst:.1e}"))
}

fn wadi(args: &[&str]) -> Result<String, String> {
    let out = Process::new(env!("CARGO_BIN_EXE_wadi"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "wadi {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tables_harness() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let out = dir.path().join("eval");
    wadi(&["train", "--condition", "trad-vector", "--steps", "5000", "--workers", "1", "--eval-every", "0", "--out", path(&run)])?;
    let stdout = wadi(&["eval", "--checkpoint", path(&run), "--rollouts", "100", "--out", path(&out)])?;

    let scenario = ScenarioConfig::default_scenario();
    let demo = CommandScript::reference().record(&scenario, 7).unwrap();
    let end = demo.replay_to(&scenario, demo.len()).unwrap();
    let stats = EpisodeStats::from_state(&end);

    let report: Value = serde_json::from_str(&std::fs::read_to_string(out.join("eval_report.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let tables = &report["tables"];
    let mut columns = vec![HUMAN_COLUMN.to_string()];
    columns.extend(Condition::ALL.iter().map(|c| c.column().to_string()));
    let got: Vec<String> = serde_json::from_value(tables["columns"].clone()).unwrap();
    ensure(got == columns, || format!("columns {got:?}"))?;
    ensure(report["columns"][0]["report"]["rollouts"] == 100, || "rollouts is not 100".into())?;

    let labels: Vec<String> = Coalition::BLUE.iter().map(|c| c.label().to_string()).collect();
    let expected: [(&str, Vec<String>, Vec<f64>); 3] = [
        (
            "casualties",
            vec!["Blue Force Casualties".into(), "Red Force Casualties".into()],
            vec![stats.blue_casualties as f64, stats.red_casualties as f64],
        ),
        ("distance", labels.clone(), Coalition::BLUE.iter().map(|c| stats.distance[c]).collect()),
        ("health", labels, Coalition::BLUE.iter().map(|c| stats.health_percent[c]).collect()),
    ];
    let text = std::fs::read_to_string(out.join("tables.txt")).unwrap();
    for (i, (key, rows, human)) in expected.iter().enumerate() {
        let t = &tables[key];
        let got_rows: Vec<String> = serde_json::from_value(t["rows"].clone()).unwrap();
        ensure(&got_rows == rows, || format!("{key} rows {got_rows:?}"))?;
        for (r, want) in human.iter().enumerate() {
            let row = t["values"][r].as_array().unwrap();
            ensure(row.len() == 5, || format!("{key} row {r} has {} cells", row.len()))?;
            ensure(row[0].as_f64() == Some(*want), || {
                format!("{key} row {r}: human cell {} but replay gives {want}", row[0])
            })?;
            ensure(row[4].is_number() && row[1..4].iter().all(Value::is_null), || {
                format!("{key} row {r}: unexpected filled columns")
            })?;
        }
        ensure(text.contains(&format!("Table {}:", i + 1)), || format!("tables.txt lacks Table {}", i + 1))?;
        for row in rows {
            ensure(text.lines().any(|l| l.starts_with(row.as_str())), || format!("tables.txt lacks row {row}"))?;
        }
    }
    ensure(stdout.contains(&text), || "stdout differs from tables.txt".into())?;
    let header = text.lines().nth(1).unwrap();
    let positions: Vec<Option<usize>> = columns.iter().map(|c| header.find(c.as_str())).collect();
    ensure(positions.windows(2).all(|w| matches!(w, [Some(a), Some(b)] if a < b)), || {
        format!("header columns out of order: {header}")
    })?;
    Ok(format!(
        "3 tables x 5 columns; human column equals the replay of the {}-step demo (blue {}, red {})",
        demo.len(),
        stats.blue_casualties,
        stats.red_casualties
    ))
}

fn reproducibility() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("demo.jsonl");
    wadi(&["record", "--out", path(&demo)])?;
    let mut lines = Vec::new();
    for condition in ["acl-vector", "trad-vector"] {
        let mut logs = Vec::new();
        for run in ["a", "b"] {
            let out = dir.path().join(format!("{condition}-{run}"));
            wadi(&[
                "train", "--condition", condition, "--demo", path(&demo), "--steps", "30000", "--workers", "1", "--seed",
                "5", "--eval-every", "10000", "--eval-rollouts", "3", "--out", path(&out),
            ])?;
            logs.push((std::fs::read(out.join("train_log.jsonl")).unwrap(), std::fs::read(out.join("policy.ckpt")).unwrap()));
        }
        ensure(logs[0].0 == logs[1].0, || format!("{condition}: train logs differ"))?;
        ensure(logs[0].1 == logs[1].1, || format!("{condition}: checkpoints differ"))?;
        let n = logs[0].0.iter().filter(|&&c| c == b'\n').count();
        lines.push(format!("{condition} {n} log lines"));
    }
    Ok(format!("byte-identical logs and checkpoints ({})", lines.join(", ")))
}

struct Run {
    median: f64,
    mean: f64,
    reached_zero: bool,
}

fn train_condition(condition: Condition, seed: u64, scenario: &ScenarioConfig, demo: &Demonstration) -> Run {
    let started = Instant::now();
    let cfg = TrainConfig {
        condition,
        workers: 1,
        total_env_steps: 2_000_000,
        seed,
        eval_every: 200_000,
        ..TrainConfig::default()
    };
    let out = run_training(&cfg, scenario, Some(demo)).unwrap();
    let report = evaluate(&out.params, scenario, 100, 0).unwrap();
    let threshold = cfg.curriculum.score_ratio * human_reference_score(demo, 0.0) as f64;
    let reached_zero = out
        .log
        .episodes
        .iter()
        .any(|e| e.curriculum_mean == 0.0 && e.start_step == 0 && e.reward as f64 >= threshold);
    let curriculum = out
        .curriculum
        .map(|c| format!(", curriculum mean {:.2}{}", c.mean, if c.complete { " complete" } else { "" }))
        .unwrap_or_default();
    eprintln!(
        "  {} seed {seed}: final eval median {:.1} mean {:.1}{curriculum} ({:.0}s)",
        condition.name(),
        report.median_reward,
        report.mean_reward,
        started.elapsed().as_secs_f64()
    );
    Run {
        median: report.median_reward,
        mean: report.mean_reward,
        reached_zero,
    }
}

fn acl_benefit() -> Check {
    let started = Instant::now();
    let scenario = ScenarioConfig::default_scenario();
    let demo = CommandScript::reference().record(&scenario, 7).unwrap();
    ensure(demo.len() == 120, || format!("reference demo has {} steps", demo.len()))?;
    let mut pairs = Vec::new();
    for seed in 0..5 {
        let acl = train_condition(Condition::AclVector, seed, &scenario, &demo);
        let trad = train_condition(Condition::TradVector, seed, &scenario, &demo);
        pairs.push((acl, trad));
    }
    let wins = pairs.iter().filter(|(a, t)| a.median >= t.median).count();
    let reached = pairs.iter().filter(|(a, _)| a.reached_zero).count();
    let trad_below = pairs.iter().filter(|(_, t)| t.mean < demo.total_score as f64).count();
    let fmt = |f: fn(&(Run, Run)) -> f64| pairs.iter().map(|p| format!("{:.0}", f(p))).collect::<Vec<_>>().join("/");
    let detail = format!(
        "ACL >= Trad in {wins}/5 pairings (median ACL {} vs Trad {}), ACL reached the threshold at fraction 0 in {reached}/5, Trad mean below {} in {trad_below}/5 (Trad means {}); median of medians ACL {:.1} Trad {:.1}; {:.0} min",
        fmt(|p| p.0.median),
        fmt(|p| p.1.median),
        demo.total_score,
        fmt(|p| p.1.mean),
        median(&pairs.iter().map(|p| p.0.median).collect::<Vec<_>>()),
        median(&pairs.iter().map(|p| p.1.median).collect::<Vec<_>>()),
        started.elapsed().as_secs_f64() / 60.0,
    );
    ensure(wins >= 4 && reached == 5 && trad_below == 5, || detail.clone())?;
    Ok(detail)
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Check); 8] = [
        ("replay determinism", replay_determinism),
        ("gradient correctness", gradient_correctness),
        ("curriculum state machine", curriculum_state_machine),
        ("reward ledger", reward_ledger),
        ("return and advantage oracle", return_oracle),
        ("tables harness", tables_harness),
        ("single-worker reproducibility", reproducibility),
        ("desk-scale ACL benefit", acl_benefit),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} [{secs:.1}s]: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Scores a scripted plan against random and naive play.
//!
//! `cargo run --release --example probe -- [script] [scenario.toml]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wadi_core::eval::{evaluate_with, median, EpisodeStats};
use wadi_core::sim::{ActionId, Coalition, Command, ScenarioConfig, WorldState};
use wadi_core::trajectory::CommandScript;

fn summarize(name: &str, mut scores: Vec<f64>) {
    scores.sort_by(f64::total_cmp);
    let n = scores.len();
    let mean = scores.iter().sum::<f64>() / n as f64;
    println!(
        "{name:>16}: mean {mean:7.1} median {:7.1} p10 {:7.1} p90 {:7.1} max {:7.1}",
        median(&scores),
        scores[n / 10],
        scores[9 * n / 10],
        scores[n - 1]
    );
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let script = match args.first() {
        Some(p) => CommandScript::parse(&std::fs::read_to_string(p).unwrap()).unwrap(),
        None => CommandScript::reference(),
    };
    let scenario = match args.get(1) {
        Some(p) => ScenarioConfig::load(std::path::Path::new(p)).unwrap(),
        None => ScenarioConfig::default_scenario(),
    };

    let demo = script.record(&scenario, 7).unwrap();
    let end = demo.replay_to(&scenario, demo.len()).unwrap();
    let s = EpisodeStats::from_state(&end);
    println!(
        "demo: len {} score {} blue lost {} red lost {} won {}",
        demo.len(),
        demo.total_score,
        s.blue_casualties,
        s.red_casualties,
        s.won
    );
    let mut acc = 0;
    for (i, st) in demo.steps.iter().enumerate() {
        acc += st.reward;
        if st.reward != 0 || i + 1 == demo.len() {
            print!("{}:{} ", i, acc);
        }
    }
    println!();

    let scripted: Vec<f64> = (0..50)
        .map(|seed| {
            let d = script.record(&scenario, seed).unwrap();
            d.total_score as f64
        })
        .collect();
    summarize("script, 50 seeds", scripted);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut random = |_: &WorldState| {
        let action = [ActionId::NoOp, ActionId::Move, ActionId::Attack][rng.random_range(0..3)];
        if action == ActionId::NoOp {
            return Command::NOOP;
        }
        Command {
            coalition: rng.random_range(0..5),
            action,
            x_bin: rng.random_range(0..3),
            y_bin: rng.random_range(0..3),
        }
    };
    let r = evaluate_with(&mut random, &scenario, 200, 0).unwrap();
    summarize("random", r.episode_rewards.iter().map(|&x| x as f64).collect());

    for (name, x, y) in [("attack-city", 2, 2), ("attack-ne", 2, 0), ("attack-e", 2, 1)] {
        let mut f = |s: &WorldState| {
            let k = s.steps as usize;
            if k < 5 {
                Command::new(Coalition::BLUE[k], ActionId::Attack, x, y)
            } else {
                Command::NOOP
            }
        };
        let r = evaluate_with(&mut f, &scenario, 20, 0).unwrap();
        summarize(name, r.episode_rewards.iter().map(|&x| x as f64).collect());
    }
    let mut bridge = |s: &WorldState| {
        let k = s.steps as usize;
        match k {
            0..5 => Command::new(Coalition::BLUE[k], ActionId::Move, 1, 0),
            30..35 => Command::new(Coalition::BLUE[k - 30], ActionId::Attack, 2, 0),
            60..65 => Command::new(Coalition::BLUE[k - 60], ActionId::Attack, 2, 2),
            _ => Command::NOOP,
        }
    };
    let r = evaluate_with(&mut bridge, &scenario, 20, 0).unwrap();
    summarize("bridge-naive", r.episode_rewards.iter().map(|&x| x as f64).collect());
}

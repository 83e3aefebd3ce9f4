//! Plays a command script against the bundled scenario and prints the
//! reward events step by step.
//!
//! cargo run -p wadi-core --example play_script -- path/to/plan.script [seed] [scenario.toml]

use wadi_core::sim::{Coalition, ScenarioConfig, Side, WorldState};
use wadi_core::trajectory::CommandScript;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let script = match args.get(1) {
        Some(p) => CommandScript::parse(&std::fs::read_to_string(p).expect("read script"))
            .expect("parse script"),
        None => CommandScript::reference(),
    };
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(7);
    let scenario = match args.get(3) {
        Some(p) => ScenarioConfig::load(std::path::Path::new(p)).expect("load scenario"),
        None => ScenarioConfig::default_scenario(),
    };
    let mut w = WorldState::reset(&scenario, seed).unwrap();
    let mut logged = 0;
    while !w.is_done() {
        let cmd = script.command_at(w.steps);
        let out = w.step(&cmd).unwrap();
        for e in &w.event_log[logged..] {
            let u = &w.units[e.unit as usize];
            println!(
                "step {:3} tick {:4} {:?} {:?} #{} ({:.1},{:.1}) {:+}",
                w.steps, e.tick, e.kind, u.coalition, u.id, u.pos.x, u.pos.y, e.points
            );
        }
        logged = w.event_log.len();
        if out.done {
            break;
        }
    }
    println!(
        "steps {} score {} blue alive {}/{} red alive {}/{}",
        w.steps,
        w.score,
        w.alive_count(Side::Blue),
        w.roster_count(Side::Blue),
        w.alive_count(Side::Red),
        w.roster_count(Side::Red)
    );
    for c in Coalition::ALL {
        let us: Vec<_> = w.units.iter().filter(|u| u.coalition == c).collect();
        let hp: f64 = us.iter().map(|u| u.health).sum::<f64>() / us.iter().map(|u| u.max_health).sum::<f64>();
        let dist: f64 = us.iter().map(|u| u.distance_travelled).sum();
        println!("{:>14}: health {:5.1}% distance {:6.1}", format!("{c:?}"), 100.0 * hp, dist);
    }
}

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use wadi_server::{Server, SessionConfig};

use super::ScenarioArg;

#[derive(Args)]
pub struct ServeArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Seed every recording starts from unless the client picks one.
    #[arg(long, default_value_t = super::REFERENCE_SEED)]
    seed: u64,
    #[arg(long, default_value_t = 8765)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Decision steps per second in real-time recording.
    #[arg(long, default_value_t = 4.0)]
    cadence: f64,
    /// Where recordings are saved and replays are looked up.
    #[arg(long, default_value = "demos")]
    demo_dir: PathBuf,
}

pub fn run(a: ServeArgs) -> anyhow::Result<()> {
    if !(a.cadence > 0.0 && a.cadence.is_finite()) {
        anyhow::bail!(super::Usage(format!("cadence must be positive, got {}", a.cadence)));
    }
    let scenario = a.scenario.load()?;
    let config = SessionConfig {
        seed: a.seed,
        cadence_hz: a.cadence,
        demo_dir: Some(a.demo_dir.clone()),
        ..SessionConfig::new(scenario)
    };
    let server = Server::bind((a.host.as_str(), a.port), config)
        .with_context(|| format!("cannot listen on {}:{}", a.host, a.port))?;
    let addr = server.local_addr()?;
    println!("serving scenario {} (seed {}) on ws://{addr}", a.scenario_name(), a.seed);
    println!("point the UI at ws://{addr}; recordings go to {}", a.demo_dir.display());
    server.run()?;
    Ok(())
}

impl ServeArgs {
    fn scenario_name(&self) -> String {
        match &self.scenario.scenario {
            Some(p) => p.display().to_string(),
            None => "default".into(),
        }
    }
}

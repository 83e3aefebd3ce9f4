//! Greedy evaluation and the casualty, distance and health tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::policy::{ForwardCache, PolicyError, PolicyParams};
use crate::sim::{Coalition, Command, Observation, RewardKind, ScenarioConfig, SimError, Side, WorldState};
use crate::trajectory::{DemoError, Demonstration};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Demo(#[from] DemoError),
    #[error("at least one rollout is required")]
    NoRollouts,
}

/// Anything that picks a command from a world state.
pub trait Actor {
    fn act(&mut self, state: &WorldState) -> Result<Command, EvalError>;
}

impl<F: FnMut(&WorldState) -> Command> Actor for F {
    fn act(&mut self, state: &WorldState) -> Result<Command, EvalError> {
        Ok(self(state))
    }
}

/// Per-head argmax over a fixed parameter set.
pub struct Greedy<'a> {
    params: &'a PolicyParams,
    obs: Observation,
    cache: ForwardCache,
}

impl<'a> Greedy<'a> {
    pub fn new(params: &'a PolicyParams) -> Self {
        Self {
            params,
            obs: Observation::default(),
            cache: ForwardCache::default(),
        }
    }
}

impl Actor for Greedy<'_> {
    fn act(&mut self, state: &WorldState) -> Result<Command, EvalError> {
        state.observe_into(self.params.config.obs_mode, &mut self.obs);
        self.params.forward_into(&self.obs, &mut self.cache)?;
        Ok(self.cache.dist.greedy())
    }
}

/// Statistics of one finished episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStats {
    pub reward: i64,
    pub steps: u32,
    pub blue_casualties: usize,
    pub red_casualties: usize,
    pub won: bool,
    /// Summed over the coalition's units.
    pub distance: BTreeMap<Coalition, f64>,
    /// Mean over the coalition's full roster, dead units counting as 0.
    pub health_percent: BTreeMap<Coalition, f64>,
}

impl EpisodeStats {
    pub fn from_state(state: &WorldState) -> Self {
        let dead = |side| state.units.iter().filter(|u| u.side == side && !u.alive()).count();
        let mut distance = BTreeMap::new();
        let mut health_percent = BTreeMap::new();
        for c in Coalition::BLUE {
            let units: Vec<_> = state.units.iter().filter(|u| u.coalition == c).collect();
            distance.insert(c, units.iter().map(|u| u.distance_travelled).sum());
            let pct = if units.is_empty() {
                0.0
            } else {
                units
                    .iter()
                    .map(|u| 100.0 * (u.health.max(0.0) / u.max_health).min(1.0))
                    .sum::<f64>()
                    / units.len() as f64
            };
            health_percent.insert(c, pct);
        }
        Self {
            reward: state.score,
            steps: state.steps,
            blue_casualties: dead(Side::Blue),
            red_casualties: dead(Side::Red),
            won: state.roster_count(Side::Red) > 0 && state.alive_count(Side::Red) == 0,
            distance,
            health_percent,
        }
    }

    /// Casualties recounted from the reward events alone.
    pub fn casualties_from_events(state: &WorldState) -> (usize, usize) {
        let count = |k| state.event_log.iter().filter(|e| e.kind == k).count();
        (count(RewardKind::BlueDestroyed), count(RewardKind::RedDestroyed))
    }
}

/// Runs one episode from `state` until it ends.
pub fn run_episode<A: Actor + ?Sized>(actor: &mut A, mut state: WorldState) -> Result<WorldState, EvalError> {
    while !state.is_done() {
        let cmd = actor.act(&state)?;
        state.step(&cmd)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rollouts: usize,
    pub seed: u64,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub median_reward: f64,
    pub episode_rewards: Vec<i64>,
    pub blue_casualties: f64,
    pub blue_casualties_std: f64,
    pub red_casualties: f64,
    pub red_casualties_std: f64,
    pub distance: BTreeMap<Coalition, f64>,
    pub health_percent: BTreeMap<Coalition, f64>,
    pub win_rate: f64,
    pub mean_steps: f64,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl EvalReport {
    pub fn aggregate(episodes: &[EpisodeStats], seed: u64) -> Result<Self, EvalError> {
        if episodes.is_empty() {
            return Err(EvalError::NoRollouts);
        }
        let n = episodes.len() as f64;
        let rewards: Vec<f64> = episodes.iter().map(|e| e.reward as f64).collect();
        let (mean_reward, reward_std) = mean_std(rewards.iter().copied());
        let (blue, blue_std) = mean_std(episodes.iter().map(|e| e.blue_casualties as f64));
        let (red, red_std) = mean_std(episodes.iter().map(|e| e.red_casualties as f64));
        let per = |f: fn(&EpisodeStats) -> &BTreeMap<Coalition, f64>| {
            Coalition::BLUE
                .iter()
                .map(|&c| (c, episodes.iter().map(|e| f(e)[&c]).sum::<f64>() / n))
                .collect()
        };
        Ok(Self {
            rollouts: episodes.len(),
            seed,
            mean_reward,
            reward_std,
            median_reward: median(&rewards),
            episode_rewards: episodes.iter().map(|e| e.reward).collect(),
            blue_casualties: blue,
            blue_casualties_std: blue_std,
            red_casualties: red,
            red_casualties_std: red_std,
            distance: per(|e| &e.distance),
            health_percent: per(|e| &e.health_percent),
            win_rate: episodes.iter().filter(|e| e.won).count() as f64 / n,
            mean_steps: episodes.iter().map(|e| e.steps as f64).sum::<f64>() / n,
        })
    }
}

/// Runs `n` full episodes with seeds `seed, seed + 1, ...` from the
/// scenario start.
pub fn evaluate_with<A: Actor + ?Sized>(
    actor: &mut A,
    scenario: &ScenarioConfig,
    n: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    if n == 0 {
        return Err(EvalError::NoRollouts);
    }
    let mut episodes = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let start = WorldState::reset(scenario, seed.wrapping_add(i))?;
        let end = run_episode(actor, start)?;
        episodes.push(EpisodeStats::from_state(&end));
    }
    EvalReport::aggregate(&episodes, seed)
}

/// Greedy evaluation of `params`.
pub fn evaluate(params: &PolicyParams, scenario: &ScenarioConfig, n: usize, seed: u64) -> Result<EvalReport, EvalError> {
    evaluate_with(&mut Greedy::new(params), scenario, n, seed)
}

/// Stats of the demonstration replayed in full, aggregated like a single
/// rollout.
pub fn demo_report(demo: &Demonstration, scenario: &ScenarioConfig) -> Result<EvalReport, EvalError> {
    let end = demo.replay_to(scenario, demo.len())?;
    EvalReport::aggregate(&[EpisodeStats::from_state(&end)], demo.seed)
}

pub const HUMAN_COLUMN: &str = "Human Demonstration";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub title: String,
    pub rows: Vec<String>,
    /// `values[row][column]`.
    pub values: Vec<Vec<f64>>,
}

/// Tables 1-3: columns are the human demonstration followed by each
/// evaluated condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub casualties: Table,
    pub distance: Table,
    pub health: Table,
}

/// Builds the three tables. A column whose report is `None` renders as
/// `-`, so the layout stays fixed when a condition was not evaluated.
pub fn compare(reports: &[(String, Option<EvalReport>)], human: &EvalReport) -> Comparison {
    let mut columns = vec![HUMAN_COLUMN.to_string()];
    columns.extend(reports.iter().map(|(name, _)| name.clone()));
    let all: Vec<Option<&EvalReport>> = std::iter::once(Some(human))
        .chain(reports.iter().map(|(_, r)| r.as_ref()))
        .collect();
    let cell = |r: &Option<&EvalReport>, f: &dyn Fn(&EvalReport) -> f64| r.map_or(f64::NAN, f);
    let per_coalition = |title: &str, f: fn(&EvalReport) -> &BTreeMap<Coalition, f64>| Table {
        title: title.to_string(),
        rows: Coalition::BLUE.iter().map(|c| c.label().to_string()).collect(),
        values: Coalition::BLUE
            .iter()
            .map(|c| all.iter().map(|r| cell(r, &|r| f(r)[c])).collect())
            .collect(),
    };
    Comparison {
        casualties: Table {
            title: "Average casualties for each force".into(),
            rows: vec!["Blue Force Casualties".into(), "Red Force Casualties".into()],
            values: vec![
                all.iter().map(|r| cell(r, &|r| r.blue_casualties)).collect(),
                all.iter().map(|r| cell(r, &|r| r.red_casualties)).collect(),
            ],
        },
        distance: per_coalition("Average distance travelled for each coalition of the Blue force", |r| &r.distance),
        health: per_coalition(
            "Average health percentage remaining for each coalition of the Blue force",
            |r| &r.health_percent,
        ),
        columns,
    }
}

impl Table {
    pub fn render(&self, columns: &[String]) -> String {
        let label_w = self.rows.iter().map(String::len).max().unwrap_or(0).max(1);
        let widths: Vec<usize> = columns.iter().map(|c| c.len().max(8)).collect();
        let mut out = format!("{}\n", self.title);
        let _ = write!(out, "{:label_w$}", "");
        for (c, w) in columns.iter().zip(&widths) {
            let _ = write!(out, " | {c:>w$}");
        }
        out.push('\n');
        out.push_str(&"-".repeat(label_w + widths.iter().map(|w| w + 3).sum::<usize>()));
        out.push('\n');
        for (row, vals) in self.rows.iter().zip(&self.values) {
            let _ = write!(out, "{row:label_w$}");
            for (v, w) in vals.iter().zip(&widths) {
                if v.is_nan() {
                    let _ = write!(out, " | {:>w$}", "-");
                } else {
                    let _ = write!(out, " | {v:>w$.2}");
                }
            }
            out.push('\n');
        }
        out
    }
}

impl Comparison {
    pub fn render(&self) -> String {
        [
            format!("Table 1: {}", self.casualties.render(&self.columns)),
            format!("Table 2: {}", self.distance.render(&self.columns)),
            format!("Table 3: {}", self.health.render(&self.columns)),
        ]
        .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert!(matches!(EvalReport::aggregate(&[], 0), Err(EvalError::NoRollouts)));
    }

    #[test]
    fn fresh_world_has_full_health_and_no_distance() {
        let w = WorldState::reset(&ScenarioConfig::default_scenario(), 4).unwrap();
        let s = EpisodeStats::from_state(&w);
        assert!(s.health_percent.values().all(|&h| h == 100.0));
        assert!(s.distance.values().all(|&d| d == 0.0));
        assert_eq!((s.blue_casualties, s.red_casualties), (0, 0));
        assert!(!s.won);
    }

    #[test]
    fn single_report_gives_two_columns() {
        let w = WorldState::reset(&ScenarioConfig::default_scenario(), 4).unwrap();
        let r = EvalReport::aggregate(&[EpisodeStats::from_state(&w)], 4).unwrap();
        let c = compare(&[("ACL Vector Rep.".into(), Some(r.clone()))], &r);
        assert_eq!(c.columns.len(), 2);
        for t in [&c.casualties, &c.distance, &c.health] {
            assert!(t.values.iter().all(|row| row.len() == 2 && row[0] == row[1]));
        }
        assert_eq!(c.distance.rows.len(), 5);
        assert!(c.render().contains("Mechanized Infantry"));
    }
}

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::digest::{Digest, Fnv64};
use super::types::{Coalition, Side, Terrain, Vec2};
use super::SimError;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Maximum units per side; fixes the vector observation layout.
pub const MAX_UNITS_PER_SIDE: usize = 20;

const DEFAULT_SCENARIO: &str = include_str!("../../scenarios/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitStats {
    pub health: f64,
    pub speed: f64,
    pub range: f64,
    pub damage: f64,
    #[serde(default)]
    pub attacks_air: bool,
    #[serde(default)]
    pub air: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterGroup {
    pub coalition: Coalition,
    pub positions: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainConfig {
    pub wadi_axis: usize,
    pub rows: Vec<String>,
}

/// Scenario file contents: terrain, roster, stat table and step rules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    /// Target bins per axis for commands.
    pub grid_bins: usize,
    /// Simulator ticks per decision step.
    pub ticks_per_step: u32,
    /// Decision steps before an episode is cut off.
    pub episode_cap: u32,
    /// How far from its spawn point a Red unit will chase.
    pub red_leash: f64,
    /// Uniform spawn offset, in cells, applied per axis from the seed.
    pub spawn_jitter: f64,
    /// Relative per-shot damage spread.
    pub damage_jitter: f64,
    pub terrain: TerrainConfig,
    pub stats: BTreeMap<Coalition, UnitStats>,
    pub units: Vec<RosterGroup>,
}

/// Per-step rules copied into every world so stepping needs no config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rules {
    pub grid_bins: usize,
    pub ticks_per_step: u32,
    pub episode_cap: u32,
    pub red_leash: f64,
    pub damage_jitter: f64,
}

impl ScenarioConfig {
    pub fn default_scenario() -> Self {
        Self::from_toml_str(DEFAULT_SCENARIO).expect("bundled scenario parses")
    }

    pub fn default_toml() -> &'static str {
        DEFAULT_SCENARIO
    }

    pub fn from_toml_str(s: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig =
            toml::from_str(s).map_err(|e| SimError::Config(format!("scenario parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Config(format!("reading {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn rules(&self) -> Rules {
        Rules {
            grid_bins: self.grid_bins,
            ticks_per_step: self.ticks_per_step,
            episode_cap: self.episode_cap,
            red_leash: self.red_leash,
            damage_jitter: self.damage_jitter,
        }
    }

    /// Identity hash over the canonical serialization of the whole config.
    pub fn hash(&self) -> Digest {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        let mut h = Fnv64::new();
        h.write(&bytes);
        Digest(h.finish())
    }

    pub fn terrain(&self) -> Result<Terrain, SimError> {
        Terrain::from_rows(&self.terrain.rows, self.terrain.wadi_axis)
    }

    pub fn roster_size(&self, side: Side) -> usize {
        self.units
            .iter()
            .filter(|g| g.coalition.side() == side)
            .map(|g| g.positions.len())
            .sum()
    }

    pub fn roster_count(&self, coalition: Coalition) -> usize {
        self.units
            .iter()
            .filter(|g| g.coalition == coalition)
            .map(|g| g.positions.len())
            .sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return err(format!(
                "scenario schema_version {} unsupported (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let terrain = self.terrain()?;
        if self.grid_bins == 0 || self.grid_bins > terrain.width.min(terrain.height) {
            return err(format!("grid_bins {} invalid for this map", self.grid_bins));
        }
        if self.grid_bins > u8::MAX as usize {
            return err("grid_bins must fit in a byte".into());
        }
        if self.ticks_per_step == 0 || self.episode_cap == 0 {
            return err("ticks_per_step and episode_cap must be positive".into());
        }
        if !(self.red_leash >= 0.0 && self.red_leash.is_finite()) {
            return err("red_leash must be a finite non-negative number".into());
        }
        if !(0.0..0.5).contains(&self.spawn_jitter) || !(0.0..1.0).contains(&self.damage_jitter) {
            return err("spawn_jitter must lie in [0, 0.5) and damage_jitter in [0, 1)".into());
        }
        for (c, s) in &self.stats {
            let ok = s.health > 0.0
                && s.health.is_finite()
                && s.speed > 0.0
                && s.speed <= 1.0
                && s.range >= 0.0
                && s.range.is_finite()
                && s.damage >= 0.0
                && s.damage.is_finite();
            if !ok {
                return err(format!(
                    "stats for {c:?}: need health > 0, speed in (0, 1], finite range and damage"
                ));
            }
        }
        for side in [Side::Blue, Side::Red] {
            let n = self.roster_size(side);
            if n == 0 || n > MAX_UNITS_PER_SIDE {
                return err(format!(
                    "{side:?} roster has {n} units; need 1..={MAX_UNITS_PER_SIDE}"
                ));
            }
        }
        for g in &self.units {
            let Some(stats) = self.stats.get(&g.coalition) else {
                return err(format!("no stats for {:?}", g.coalition));
            };
            for &[x, y] in &g.positions {
                let p = Vec2::new(x, y);
                if terrain.cell_at(p).is_none() {
                    return err(format!("{:?} spawn ({x}, {y}) is off the map", g.coalition));
                }
                if !terrain.passable(p, stats.air) {
                    return err(format!(
                        "{:?} spawn ({x}, {y}) is on impassable terrain",
                        g.coalition
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenario_is_valid() {
        let s = ScenarioConfig::default_scenario();
        assert_eq!(s.grid_bins, 3);
        assert_eq!(s.ticks_per_step, 4);
        assert_eq!(s.episode_cap, 500);
        let t = s.terrain().unwrap();
        assert_eq!((t.width, t.height), (24, 24));
        let blue: Vec<_> = Coalition::BLUE.iter().map(|c| s.roster_count(*c)).collect();
        assert!(blue.iter().all(|&n| n > 0), "every Blue coalition fielded");
    }

    #[test]
    fn toml_round_trip_keeps_hash() {
        let s = ScenarioConfig::default_scenario();
        let again = ScenarioConfig::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.hash(), again.hash());
    }

    #[test]
    fn hash_changes_with_content() {
        let s = ScenarioConfig::default_scenario();
        let mut t = s.clone();
        t.red_leash += 1.0;
        assert_ne!(s.hash(), t.hash());
    }

    #[test]
    fn future_schema_rejected() {
        let mut s = ScenarioConfig::default_scenario();
        s.schema_version = 2;
        assert!(matches!(s.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn bridge_off_axis_rejected() {
        let mut s = ScenarioConfig::default_scenario();
        let mut row: Vec<char> = s.terrain.rows[0].chars().collect();
        row[0] = '=';
        s.terrain.rows[0] = row.into_iter().collect();
        assert!(matches!(s.validate(), Err(SimError::Config(_))));
    }

    #[test]
    fn overfull_roster_rejected() {
        let mut s = ScenarioConfig::default_scenario();
        let g = s.units.iter_mut().find(|g| g.coalition == Coalition::Tanks).unwrap();
        let p = g.positions[0];
        g.positions.extend(std::iter::repeat(p).take(MAX_UNITS_PER_SIDE));
        assert!(s.validate().is_err());
    }
}

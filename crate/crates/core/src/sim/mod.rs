//! Deterministic wadi-crossing combat microworld.
//!
//! Blue coalitions start west of a dry riverbed that ground units can only
//! cross at a bridge; a scripted Red force holds a city on the east bank.
//! Rewards: +10 per Red unit destroyed, -10 per Blue unit lost, +10 per
//! Blue unit crossing east over the wadi axis and -10 per Blue unit
//! crossing back west.

mod digest;
mod observe;
mod rng;
mod scenario;
mod types;
mod world;

pub use digest::{Digest, Fnv64};
pub use observe::{
    ObsMode, Observation, GLOBAL_FEATURES, IMAGE_CHANNELS, ORDER_FEATURES, SLOT_FEATURES,
    TERRAIN_CHANNELS, UNIT_SLOTS, VECTOR_LEN,
};
pub use rng::SimRng;
pub use scenario::{
    RosterGroup, Rules, ScenarioConfig, TerrainConfig, UnitStats, MAX_UNITS_PER_SIDE,
    SCENARIO_SCHEMA_VERSION,
};
pub use types::{
    ActionId, Cell, Coalition, Command, Order, RewardEvent, RewardKind, Side, Terrain, Unit, Vec2,
};
pub use world::{StepOutcome, WorldState};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("step called on a finished episode")]
    Terminal,
    #[error("invalid command: {0}")]
    InvalidCommand(String),
}

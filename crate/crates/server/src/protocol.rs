//! Wire messages. Every message is one JSON text frame:
//!
//! ```text
//! {"v":1,"session_id":"3","seq":12,"kind":"FrameUpdate","payload":{...}}
//! ```
//!
//! `seq` increases strictly in each direction of a session. See
//! `docs/protocol.md` for the full schema.

use serde::{Deserialize, Serialize};
use wadi_core::sim::{Command, Digest, Order, Side, WorldState};
use wadi_core::sim::{Coalition, ScenarioConfig};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub session_id: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: Body,
}

impl Envelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("envelope serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Body {
    Hello(Hello),
    FrameUpdate(FrameUpdate),
    IssueCommand(Command),
    EpisodeEnd(EpisodeEnd),
    StartRecording(StartRecording),
    ReplayRequest(ReplayRequest),
    ReplayFrame(ReplayFrame),
    Error(ErrorBody),
}

impl Body {
    pub fn kind(&self) -> &'static str {
        match self {
            Body::Hello(_) => "Hello",
            Body::FrameUpdate(_) => "FrameUpdate",
            Body::IssueCommand(_) => "IssueCommand",
            Body::EpisodeEnd(_) => "EpisodeEnd",
            Body::StartRecording(_) => "StartRecording",
            Body::ReplayRequest(_) => "ReplayRequest",
            Body::ReplayFrame(_) => "ReplayFrame",
            Body::Error(_) => "Error",
        }
    }
}

/// Sent by the server on connect and in answer to a client `Hello`.
/// Clients may send an empty `{}` payload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hello {
    pub scenario: String,
    pub scenario_hash: Option<Digest>,
    pub width: usize,
    pub height: usize,
    pub wadi_axis: usize,
    pub grid_bins: usize,
    /// Terrain rows, one character per cell (`.` open, `~` wadi, `=` bridge,
    /// `#` city).
    pub terrain: Vec<String>,
    /// Blue coalitions in command-index order.
    pub coalitions: Vec<String>,
    pub cadence_hz: f64,
    pub default_seed: u64,
    /// Saved demonstrations that `ReplayRequest` can load by name.
    pub demos: Vec<String>,
}

impl Hello {
    pub fn describe(scenario: &ScenarioConfig, cadence_hz: f64, default_seed: u64, demos: Vec<String>) -> Self {
        Self {
            scenario: scenario.name.clone(),
            scenario_hash: Some(scenario.hash()),
            width: scenario.terrain.rows.first().map_or(0, |r| r.chars().count()),
            height: scenario.terrain.rows.len(),
            wadi_axis: scenario.terrain.wadi_axis,
            grid_bins: scenario.grid_bins,
            terrain: scenario.terrain.rows.clone(),
            coalitions: Coalition::BLUE.iter().map(|c| format!("{c:?}")).collect(),
            cadence_hz,
            default_seed,
            demos,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitView {
    pub id: u32,
    pub side: Side,
    pub coalition: Coalition,
    pub x: f64,
    pub y: f64,
    pub health: f64,
    pub max_health: f64,
    pub alive: bool,
}

/// Everything a client needs to draw one decision step. A pure function of
/// the world state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: u32,
    pub tick: u64,
    pub score: i64,
    pub done: bool,
    pub digest: Digest,
    pub units: Vec<UnitView>,
    /// Standing order per Blue coalition, in command-index order.
    pub orders: Vec<Order>,
}

impl Frame {
    pub fn of(state: &WorldState) -> Self {
        Self {
            step: state.steps,
            tick: state.tick,
            score: state.score,
            done: state.is_done(),
            digest: state.digest(),
            units: state
                .units
                .iter()
                .map(|u| UnitView {
                    id: u.id,
                    side: u.side,
                    coalition: u.coalition,
                    x: u.pos.x,
                    y: u.pos.y,
                    health: u.health,
                    max_health: u.max_health,
                    alive: u.alive(),
                })
                .collect(),
            orders: state.orders.to_vec(),
        }
    }
}

/// The client command a decision step applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Applied {
    /// `seq` of the `IssueCommand` that carried it.
    pub client_seq: u64,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameUpdate {
    pub frame: Frame,
    /// Reward of the step that produced this frame (0 for the initial frame).
    pub reward: i64,
    /// `None` when the step ran a NoOp because no command was pending.
    pub applied: Option<Applied>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub length: usize,
    pub total_score: i64,
    pub won: bool,
    pub final_digest: Digest,
    /// File name under the server's demo directory, if saved.
    pub saved_as: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StartRecording {
    /// Falls back to the server's configured seed.
    pub seed: Option<u64>,
    /// Step once per `IssueCommand` instead of on the clock. Meant for
    /// scripted clients; a NoOp command advances one step.
    pub lockstep: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReplayRequest {
    /// Loads a saved demonstration by file name, or the session's most
    /// recent recording when `name` is absent. Answers with the frame at
    /// index 0, paused.
    Load {
        #[serde(default)]
        name: Option<String>,
    },
    Play {
        #[serde(default)]
        rate_hz: Option<f64>,
    },
    Pause,
    Seek {
        index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFrame {
    /// Number of recorded commands replayed to reach this frame.
    pub index: usize,
    pub length: usize,
    pub playing: bool,
    pub frame: Frame,
    /// Digest stored in the demonstration for this index (none at 0).
    pub recorded_digest: Option<Digest>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// A pending command was replaced before it could be applied.
    Coalesced,
    BadMessage,
    Version,
    StaleSequence,
    NotRecording,
    AlreadyRecording,
    NoReplay,
    NotFound,
    Integrity,
    InvalidCommand,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    /// `seq` of the client message this refers to, when there is one.
    #[serde(default)]
    pub client_seq: Option<u64>,
}

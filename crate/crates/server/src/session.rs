//! Per-connection session state machine, independent of any socket.
//!
//! The transport feeds client envelopes to [`Session::handle`] and calls
//! [`Session::on_interval`] whenever [`Session::interval`] elapses; both
//! return the envelopes to send, already sequenced.

use std::path::{Path, PathBuf};
use std::time::Duration;

use wadi_core::sim::{Command, ScenarioConfig, Side, WorldState};
use wadi_core::trajectory::{DemoError, Demonstration, Recorder};

use crate::protocol::{
    Applied, Body, Envelope, EpisodeEnd, ErrorBody, ErrorCode, Frame, FrameUpdate, Hello, ReplayFrame,
    ReplayRequest, StartRecording, PROTOCOL_VERSION,
};

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub scenario: ScenarioConfig,
    /// Seed used when `StartRecording` names none.
    pub seed: u64,
    /// Decision steps per second while recording.
    pub cadence_hz: f64,
    /// Where finished recordings are saved and replays are loaded from.
    pub demo_dir: Option<PathBuf>,
}

impl SessionConfig {
    pub fn new(scenario: ScenarioConfig) -> Self {
        Self {
            scenario,
            seed: 0,
            cadence_hz: 4.0,
            demo_dir: None,
        }
    }
}

struct Recording {
    state: WorldState,
    recorder: Recorder,
    pending: Option<Applied>,
    lockstep: bool,
}

struct Replay {
    demo: Demonstration,
    states: Vec<WorldState>,
    index: usize,
    playing: bool,
    rate_hz: f64,
}

enum Mode {
    Idle,
    Recording(Box<Recording>),
    Replay(Box<Replay>),
}

pub struct Session {
    id: String,
    config: SessionConfig,
    out_seq: u64,
    last_client_seq: Option<u64>,
    mode: Mode,
    last_demo: Option<Demonstration>,
    recordings: u32,
}

/// Demo names must be plain file names inside the demo directory.
fn safe_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Self {
        Self {
            id: id.into(),
            config,
            out_seq: 0,
            last_client_seq: None,
            mode: Mode::Idle,
            last_demo: None,
            recordings: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn is_recording(&self) -> bool {
        matches!(self.mode, Mode::Recording(_))
    }

    /// Most recent demonstration finished in this session.
    pub fn last_demo(&self) -> Option<&Demonstration> {
        self.last_demo.as_ref()
    }

    fn wrap(&mut self, body: Body) -> Envelope {
        self.out_seq += 1;
        Envelope {
            v: PROTOCOL_VERSION,
            session_id: self.id.clone(),
            seq: self.out_seq,
            body,
        }
    }

    fn error(&mut self, code: ErrorCode, message: impl Into<String>, client_seq: Option<u64>) -> Envelope {
        self.wrap(Body::Error(ErrorBody {
            code,
            message: message.into(),
            client_seq,
        }))
    }

    /// Reports a frame the transport could not decode.
    pub fn bad_message(&mut self, detail: &str) -> Vec<Envelope> {
        vec![self.error(ErrorCode::BadMessage, detail, None)]
    }

    fn saved_demos(&self) -> Vec<String> {
        let Some(dir) = &self.config.demo_dir else {
            return Vec::new();
        };
        let mut names: Vec<String> = std::fs::read_dir(dir)
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|e| e.file_name().into_string().ok())
            .filter(|n| n.ends_with(".jsonl") && safe_name(n))
            .collect();
        names.sort();
        names
    }

    pub fn hello(&mut self) -> Envelope {
        let hello = Hello::describe(
            &self.config.scenario,
            self.config.cadence_hz,
            self.config.seed,
            self.saved_demos(),
        );
        self.wrap(Body::Hello(hello))
    }

    /// Time until the next [`Session::on_interval`] is due, if any.
    pub fn interval(&self) -> Option<Duration> {
        let hz = match &self.mode {
            Mode::Recording(r) if !r.lockstep => self.config.cadence_hz,
            Mode::Replay(r) if r.playing => r.rate_hz,
            _ => return None,
        };
        Some(Duration::from_secs_f64(1.0 / hz))
    }

    pub fn handle(&mut self, env: Envelope) -> Vec<Envelope> {
        let seq = env.seq;
        if env.v != PROTOCOL_VERSION {
            let msg = format!("protocol version {} is not supported (expected {PROTOCOL_VERSION})", env.v);
            return vec![self.error(ErrorCode::Version, msg, Some(seq))];
        }
        if self.last_client_seq.is_some_and(|last| seq <= last) {
            let msg = format!("sequence {seq} is not after {}", self.last_client_seq.unwrap_or(0));
            return vec![self.error(ErrorCode::StaleSequence, msg, Some(seq))];
        }
        self.last_client_seq = Some(seq);
        match env.body {
            Body::Hello(_) => vec![self.hello()],
            Body::StartRecording(req) => self.start_recording(req, seq),
            Body::IssueCommand(cmd) => self.issue(cmd, seq),
            Body::ReplayRequest(req) => self.replay(req, seq),
            other => {
                let msg = format!("{} is a server-to-client message", other.kind());
                vec![self.error(ErrorCode::BadMessage, msg, Some(seq))]
            }
        }
    }

    fn start_recording(&mut self, req: StartRecording, seq: u64) -> Vec<Envelope> {
        if self.is_recording() {
            return vec![self.error(ErrorCode::AlreadyRecording, "an episode is already being recorded", Some(seq))];
        }
        let seed = req.seed.unwrap_or(self.config.seed);
        let state = match WorldState::reset(&self.config.scenario, seed) {
            Ok(s) => s,
            Err(e) => return vec![self.error(ErrorCode::Internal, e.to_string(), Some(seq))],
        };
        let frame = Frame::of(&state);
        self.mode = Mode::Recording(Box::new(Recording {
            recorder: Recorder::new(&self.config.scenario, seed),
            state,
            pending: None,
            lockstep: req.lockstep,
        }));
        vec![self.wrap(Body::FrameUpdate(FrameUpdate {
            frame,
            reward: 0,
            applied: None,
        }))]
    }

    fn issue(&mut self, cmd: Command, seq: u64) -> Vec<Envelope> {
        let bins = self.config.scenario.grid_bins;
        let Mode::Recording(rec) = &mut self.mode else {
            return vec![self.error(ErrorCode::NotRecording, "no episode is being recorded", Some(seq))];
        };
        if let Err(e) = cmd.validate(bins) {
            return vec![self.error(ErrorCode::InvalidCommand, e.to_string(), Some(seq))];
        }
        let applied = Applied {
            client_seq: seq,
            command: if cmd.is_noop() { Command::NOOP } else { cmd },
        };
        if rec.lockstep {
            rec.pending = Some(applied);
            return self.advance();
        }
        match rec.pending.replace(applied) {
            Some(dropped) => {
                let msg = format!("command {} replaced by {seq} before the next step", dropped.client_seq);
                vec![self.error(ErrorCode::Coalesced, msg, Some(dropped.client_seq))]
            }
            None => Vec::new(),
        }
    }

    /// Runs one decision step of a recording, or moves a playing replay
    /// forward one frame.
    pub fn on_interval(&mut self) -> Vec<Envelope> {
        match &mut self.mode {
            Mode::Recording(r) if !r.lockstep => self.advance(),
            Mode::Replay(r) if r.playing => {
                if r.index < r.demo.len() {
                    r.index += 1;
                }
                if r.index == r.demo.len() {
                    r.playing = false;
                }
                vec![self.replay_frame()]
            }
            _ => Vec::new(),
        }
    }

    fn advance(&mut self) -> Vec<Envelope> {
        let Mode::Recording(rec) = &mut self.mode else {
            return Vec::new();
        };
        let applied = rec.pending.take();
        let cmd = applied.map_or(Command::NOOP, |a| a.command);
        let out = match rec.state.step(&cmd) {
            Ok(o) => o,
            Err(e) => {
                self.mode = Mode::Idle;
                return vec![self.error(ErrorCode::Internal, e.to_string(), None)];
            }
        };
        rec.recorder.push(cmd, out.reward, &rec.state);
        let frame = Frame::of(&rec.state);
        let mut msgs = vec![self.wrap(Body::FrameUpdate(FrameUpdate {
            frame,
            reward: out.reward,
            applied,
        }))];
        if out.done {
            msgs.push(self.finish_recording());
        }
        msgs
    }

    fn finish_recording(&mut self) -> Envelope {
        let Mode::Recording(rec) = std::mem::replace(&mut self.mode, Mode::Idle) else {
            unreachable!("finish_recording outside a recording");
        };
        let Recording { state, recorder, .. } = *rec;
        let demo = match recorder.finish(&state, &self.config.scenario) {
            Ok(d) => d,
            Err(e) => return self.error(ErrorCode::Integrity, e.to_string(), None),
        };
        self.recordings += 1;
        let mut saved_as = None;
        if let Some(dir) = &self.config.demo_dir {
            let name = format!("session-{}-{}-seed{}.jsonl", self.id, self.recordings, demo.seed);
            if let Err(e) = demo.save(&dir.join(&name)) {
                return self.error(ErrorCode::Internal, format!("saving {name}: {e}"), None);
            }
            saved_as = Some(name);
        }
        let end = EpisodeEnd {
            length: demo.len(),
            total_score: demo.total_score,
            won: state.alive_count(Side::Red) == 0,
            final_digest: state.digest(),
            saved_as,
        };
        self.last_demo = Some(demo);
        self.wrap(Body::EpisodeEnd(end))
    }

    /// Drops an unfinished recording. Returns whether one was discarded.
    pub fn disconnect(&mut self) -> bool {
        let was = self.is_recording();
        if was {
            self.mode = Mode::Idle;
        }
        was
    }

    fn load_named(&self, name: &str) -> Result<Demonstration, (ErrorCode, String)> {
        let dir: &Path = self
            .config
            .demo_dir
            .as_deref()
            .ok_or((ErrorCode::NotFound, "server has no demo directory".to_string()))?;
        if !safe_name(name) {
            return Err((ErrorCode::NotFound, format!("invalid demo name {name:?}")));
        }
        let path = dir.join(name);
        if !path.is_file() {
            return Err((ErrorCode::NotFound, format!("no demo named {name:?}")));
        }
        Demonstration::load(&path, &self.config.scenario).map_err(|e| match e {
            DemoError::Io(e) => (ErrorCode::NotFound, e.to_string()),
            other => (ErrorCode::Integrity, other.to_string()),
        })
    }

    fn replay(&mut self, req: ReplayRequest, seq: u64) -> Vec<Envelope> {
        if self.is_recording() {
            return vec![self.error(ErrorCode::AlreadyRecording, "finish the recording before replaying", Some(seq))];
        }
        match req {
            ReplayRequest::Load { name } => {
                let demo = match name {
                    None => match &self.last_demo {
                        Some(d) => Ok(d.clone()),
                        None => Err((ErrorCode::NotFound, "nothing recorded in this session yet".to_string())),
                    },
                    Some(n) => self.load_named(&n),
                };
                let demo = match demo {
                    Ok(d) => d,
                    Err((code, msg)) => return vec![self.error(code, msg, Some(seq))],
                };
                let states = match demo.prefix_states(&self.config.scenario) {
                    Ok(s) => s,
                    Err(e) => return vec![self.error(ErrorCode::Integrity, e.to_string(), Some(seq))],
                };
                self.mode = Mode::Replay(Box::new(Replay {
                    demo,
                    states,
                    index: 0,
                    playing: false,
                    rate_hz: self.config.cadence_hz,
                }));
                vec![self.replay_frame()]
            }
            _ => {
                let Mode::Replay(r) = &mut self.mode else {
                    return vec![self.error(ErrorCode::NoReplay, "load a replay first", Some(seq))];
                };
                match req {
                    ReplayRequest::Play { rate_hz } => {
                        if let Some(hz) = rate_hz {
                            if !(hz > 0.0 && hz.is_finite()) {
                                let msg = format!("rate_hz {hz} must be positive");
                                return vec![self.error(ErrorCode::BadMessage, msg, Some(seq))];
                            }
                            r.rate_hz = hz;
                        }
                        r.playing = r.index < r.demo.len();
                        Vec::new()
                    }
                    ReplayRequest::Pause => {
                        r.playing = false;
                        Vec::new()
                    }
                    ReplayRequest::Seek { index } => {
                        if index > r.demo.len() {
                            let msg = format!("index {index} beyond replay length {}", r.demo.len());
                            return vec![self.error(ErrorCode::BadMessage, msg, Some(seq))];
                        }
                        r.index = index;
                        vec![self.replay_frame()]
                    }
                    ReplayRequest::Load { .. } => unreachable!(),
                }
            }
        }
    }

    fn replay_frame(&mut self) -> Envelope {
        let Mode::Replay(r) = &self.mode else {
            unreachable!("replay_frame outside a replay");
        };
        let body = ReplayFrame {
            index: r.index,
            length: r.demo.len(),
            playing: r.playing,
            frame: Frame::of(&r.states[r.index]),
            recorded_digest: r.index.checked_sub(1).map(|i| r.demo.steps[i].digest),
        };
        self.wrap(Body::ReplayFrame(body))
    }
}

//! Session service between the simulator and a human-facing client:
//! streams frames, takes live commands at a fixed cadence, records
//! demonstrations and replays stored episodes.

pub mod net;
pub mod protocol;
pub mod session;

pub use net::{serve_connection, Server};
pub use protocol::{Body, Envelope, PROTOCOL_VERSION};
pub use session::{Session, SessionConfig};

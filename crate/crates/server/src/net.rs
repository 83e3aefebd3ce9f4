//! WebSocket transport. Each connection gets two threads: one owns the
//! socket, one owns the [`Session`] and its simulator. They talk through
//! bounded channels, so a slow client stalls only its own session.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TryRecvError};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use crate::protocol::Envelope;
use crate::session::{Session, SessionConfig};

const QUEUE: usize = 64;
const POLL: Duration = Duration::from_millis(5);

enum Inbound {
    Msg(Envelope),
    Bad(String),
    Closed,
}

pub struct Server {
    listener: TcpListener,
    config: Arc<SessionConfig>,
    next_id: AtomicU64,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: SessionConfig) -> std::io::Result<Self> {
        if let Some(dir) = &config.demo_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            config: Arc::new(config),
            next_id: AtomicU64::new(1),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one isolated session each.
    pub fn run(&self) -> std::io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("accept failed: {e}");
                    continue;
                }
            };
            let id = self.next_id.fetch_add(1, Ordering::Relaxed).to_string();
            let config = Arc::clone(&self.config);
            thread::spawn(move || {
                if let Err(e) = serve_connection(stream, id.clone(), (*config).clone()) {
                    eprintln!("session {id}: {e}");
                }
            });
        }
        Ok(())
    }
}

/// Runs one session over an accepted TCP stream until the client leaves.
/// Returns the finished session for inspection.
pub fn serve_connection(stream: TcpStream, id: String, config: SessionConfig) -> Result<Session, tungstenite::Error> {
    let mut ws = tungstenite::accept(stream).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => tungstenite::Error::Io(ErrorKind::WouldBlock.into()),
    })?;
    ws.get_mut().set_read_timeout(Some(POLL))?;

    let (in_tx, in_rx) = mpsc::sync_channel(QUEUE);
    let (out_tx, out_rx) = mpsc::sync_channel(QUEUE);
    let session = thread::spawn(move || run_session(Session::new(id, config), in_rx, out_tx));
    let io = pump(&mut ws, &in_tx, &out_rx);
    // Unblock the session if the socket side ended first.
    let _ = in_tx.try_send(Inbound::Closed);
    drop(in_tx);
    let session = session.join().expect("session thread panicked");
    io.map(|_| session)
}

fn run_session(mut session: Session, inbound: Receiver<Inbound>, outbound: SyncSender<Envelope>) -> Session {
    let send_all = |msgs: Vec<Envelope>| msgs.into_iter().all(|m| outbound.send(m).is_ok());
    if !send_all(vec![session.hello()]) {
        return session;
    }
    let mut due: Option<Instant> = session.interval().map(|d| Instant::now() + d);
    loop {
        let msg = match due {
            Some(at) => inbound.recv_timeout(at.saturating_duration_since(Instant::now())),
            None => inbound.recv().map_err(|_| RecvTimeoutError::Disconnected),
        };
        let out = match msg {
            Ok(Inbound::Msg(env)) => session.handle(env),
            Ok(Inbound::Bad(detail)) => session.bad_message(&detail),
            Ok(Inbound::Closed) | Err(RecvTimeoutError::Disconnected) => {
                session.disconnect();
                return session;
            }
            Err(RecvTimeoutError::Timeout) => {
                let out = session.on_interval();
                due = due.and_then(|at| session.interval().map(|d| at + d));
                out
            }
        };
        // Start or stop the clock when the mode changes.
        match (due, session.interval()) {
            (None, Some(d)) => due = Some(Instant::now() + d),
            (Some(_), None) => due = None,
            _ => {}
        }
        if !send_all(out) {
            session.disconnect();
            return session;
        }
    }
}

fn pump(ws: &mut WebSocket<TcpStream>, inbound: &SyncSender<Inbound>, outbound: &Receiver<Envelope>) -> Result<(), tungstenite::Error> {
    loop {
        match ws.read() {
            Ok(Message::Text(text)) => {
                let item = match Envelope::from_json(&text) {
                    Ok(env) => Inbound::Msg(env),
                    Err(e) => Inbound::Bad(format!("undecodable message: {e}")),
                };
                if inbound.send(item).is_err() {
                    return Ok(());
                }
            }
            Ok(Message::Binary(_)) => {
                if inbound.send(Inbound::Bad("binary frames are not supported".into())).is_err() {
                    return Ok(());
                }
            }
            Ok(Message::Close(_)) | Err(tungstenite::Error::ConnectionClosed) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e),
        }
        loop {
            match outbound.try_recv() {
                Ok(env) => ws.write(Message::Text(env.to_json()))?,
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    ws.flush()?;
                    let _ = ws.close(None);
                    return Ok(());
                }
            }
        }
        ws.flush()?;
    }
}

use std::net::TcpStream;
use std::thread;

use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};
use wadi_core::sim::ScenarioConfig;
use wadi_core::trajectory::{CommandScript, Demonstration};
use wadi_server::protocol::{ReplayRequest, StartRecording};
use wadi_server::{Body, Envelope, Server, SessionConfig, PROTOCOL_VERSION};

type Ws = WebSocket<MaybeTlsStream<TcpStream>>;

fn send(ws: &mut Ws, seq: u64, body: Body) {
    let env = Envelope {
        v: PROTOCOL_VERSION,
        session_id: String::new(),
        seq,
        body,
    };
    ws.send(Message::Text(env.to_json())).unwrap();
}

fn recv(ws: &mut Ws) -> Envelope {
    loop {
        if let Message::Text(t) = ws.read().unwrap() {
            return Envelope::from_json(&t).unwrap();
        }
    }
}

#[test]
fn scripted_client_records_and_replays_over_websocket() {
    let scenario = ScenarioConfig::default_scenario();
    let dir = tempfile::tempdir().unwrap();
    let server = Server::bind(
        "127.0.0.1:0",
        SessionConfig {
            demo_dir: Some(dir.path().to_path_buf()),
            seed: 7,
            ..SessionConfig::new(scenario.clone())
        },
    )
    .unwrap();
    let addr = server.local_addr().unwrap();
    thread::spawn(move || server.run());

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    let hello = recv(&mut ws);
    assert!(matches!(&hello.body, Body::Hello(h) if h.grid_bins == 3 && h.terrain.len() == 24));

    let script = CommandScript::reference();
    let mut seq = 1;
    send(
        &mut ws,
        seq,
        Body::StartRecording(StartRecording {
            seed: None,
            lockstep: true,
        }),
    );
    let mut last_seq = hello.seq;
    let mut step = 0;
    let end = loop {
        let m = recv(&mut ws);
        assert_eq!(m.seq, last_seq + 1);
        last_seq = m.seq;
        match m.body {
            Body::FrameUpdate(_) => {
                seq += 1;
                send(&mut ws, seq, Body::IssueCommand(script.command_at(step)));
                step += 1;
            }
            Body::EpisodeEnd(e) => break e,
            other => panic!("unexpected {}", other.kind()),
        }
    };
    let offline = script.record(&scenario, 7).unwrap();
    assert_eq!(end.length, offline.len());
    assert_eq!(end.total_score, offline.total_score);
    let name = end.saved_as.unwrap();
    let saved = Demonstration::load(&dir.path().join(&name), &scenario).unwrap();
    assert_eq!(saved, offline);

    // The last frame was answered with a command that arrives after the
    // episode ended; drain the resulting notice.
    let notice = recv(&mut ws);
    assert!(matches!(notice.body, Body::Error(_)));
    last_seq = notice.seq;

    seq += 1;
    send(&mut ws, seq, Body::ReplayRequest(ReplayRequest::Load { name: Some(name) }));
    seq += 1;
    send(&mut ws, seq, Body::ReplayRequest(ReplayRequest::Play { rate_hz: Some(500.0) }));
    let mut indices = Vec::new();
    while indices.last() != Some(&offline.len()) {
        let m = recv(&mut ws);
        assert_eq!(m.seq, last_seq + 1);
        last_seq = m.seq;
        let Body::ReplayFrame(f) = m.body else { panic!("unexpected {}", m.kind()) };
        if f.index > 0 {
            assert_eq!(f.frame.digest, offline.steps[f.index - 1].digest);
        }
        indices.push(f.index);
    }
    assert_eq!(indices, (0..=offline.len()).collect::<Vec<_>>());
    ws.close(None).unwrap();
}

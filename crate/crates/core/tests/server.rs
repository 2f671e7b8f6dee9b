use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use dexkit::hand_model::{hand_frame, HandPose};
use dexkit::sim::http::StaticFiles;
use dexkit::sim::websocket::{encode_client_text, read_server_frame};
use dexkit::sim::{decode_message, serve_stream, Hand, ServeError, ServerConfig, ServerHandle, StreamMessage};
use nalgebra::Isometry3;

fn start(config: ServerConfig) -> ServerHandle {
    serve_stream(ServerConfig { addr: SocketAddr::from(([127, 0, 0, 1], 0)), ..config }).unwrap()
}

struct LineClient {
    writer: TcpStream,
    reader: BufReader<TcpStream>,
}

impl LineClient {
    fn connect(addr: SocketAddr) -> Self {
        let writer = TcpStream::connect(addr).unwrap();
        writer.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        let reader = BufReader::new(writer.try_clone().unwrap());
        Self { writer, reader }
    }

    fn send(&mut self, message: &StreamMessage) {
        self.send_raw(&message.encode());
    }

    fn send_raw(&mut self, line: &str) {
        self.writer.write_all(format!("{line}\n").as_bytes()).unwrap();
    }

    fn recv(&mut self) -> StreamMessage {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        decode_message(line.trim_end()).unwrap_or_else(|e| panic!("{e}: {line:?}"))
    }

    /// Reads until `pred` matches or the deadline passes.
    fn recv_until(&mut self, timeout: Duration, mut pred: impl FnMut(&StreamMessage) -> bool) -> Option<StreamMessage> {
        let end = Instant::now() + timeout;
        while Instant::now() < end {
            let m = self.recv();
            if pred(&m) {
                return Some(m);
            }
        }
        None
    }
}

fn frame(t: f64, pose: &HandPose, hand: Hand) -> StreamMessage {
    StreamMessage::from_frame(&hand_frame(t, pose, &Isometry3::identity()), hand)
}

fn joint_state_t(m: &StreamMessage) -> Option<f64> {
    match m {
        StreamMessage::JointState { t, .. } => Some(*t),
        _ => None,
    }
}

#[test]
fn ten_frames_yield_monotonic_joint_states() {
    let server = start(ServerConfig::default());
    let mut client = LineClient::connect(server.local_addr());
    for i in 0..10 {
        client.send(&frame(i as f64 / 30.0, &HandPose::OPEN, Hand::Right));
    }
    let mut times = Vec::new();
    while times.len() < 10 {
        if let Some(t) = joint_state_t(&client.recv()) {
            times.push(t);
        }
    }
    assert!(times.windows(2).all(|w| w[1] > w[0]), "{times:?}");
    server.shutdown().unwrap();
}

#[test]
fn unknown_tag_gets_an_error_and_the_connection_survives() {
    let server = start(ServerConfig::default());
    let mut client = LineClient::connect(server.local_addr());
    client.send_raw(r#"{"tag":"bogus"}"#);
    let reply = client.recv_until(Duration::from_secs(3), |m| matches!(m, StreamMessage::Error { .. })).unwrap();
    assert!(matches!(reply, StreamMessage::Error { ref code, .. } if code == "unknown_tag"), "{reply:?}");
    client.send_raw("not json");
    let reply = client.recv_until(Duration::from_secs(3), |m| matches!(m, StreamMessage::Error { .. })).unwrap();
    assert!(matches!(reply, StreamMessage::Error { ref code, .. } if code == "malformed"));
    client.send(&frame(0.0, &HandPose::OPEN, Hand::Right));
    assert!(client.recv_until(Duration::from_secs(3), |m| joint_state_t(m).is_some()).is_some());
    server.shutdown().unwrap();
}

#[test]
fn stale_frames_are_rejected() {
    let server = start(ServerConfig::default());
    let mut client = LineClient::connect(server.local_addr());
    client.send(&frame(1.0, &HandPose::OPEN, Hand::Right));
    client.send(&frame(1.0, &HandPose::OPEN, Hand::Right));
    let reply = client.recv_until(Duration::from_secs(3), |m| matches!(m, StreamMessage::Error { .. })).unwrap();
    assert!(matches!(reply, StreamMessage::Error { ref code, .. } if code == "non_monotonic"));
    server.shutdown().unwrap();
}

#[test]
fn concurrent_clients_see_the_same_states() {
    let server = start(ServerConfig { profile: Some(dexkit::sim::Profile::Unscrew), ..ServerConfig::default() });
    let mut a = LineClient::connect(server.local_addr());
    let mut b = LineClient::connect(server.local_addr());
    let collect = |c: &mut LineClient| {
        let mut out = Vec::new();
        while out.len() < 40 {
            let m = c.recv();
            if joint_state_t(&m).is_some() {
                out.push(m);
            }
        }
        out
    };
    let (sa, sb) = (collect(&mut a), collect(&mut b));
    // Clients join on different ticks; compare the common stretch.
    let start = joint_state_t(&sa[0]).unwrap().max(joint_state_t(&sb[0]).unwrap());
    let from = |s: &[StreamMessage]| {
        s.iter().skip_while(|m| joint_state_t(m).unwrap() < start).take(20).cloned().collect::<Vec<_>>()
    };
    let (ca, cb) = (from(&sa), from(&sb));
    assert_eq!(ca.len(), 20);
    assert_eq!(ca, cb);
    server.shutdown().unwrap();
}

#[test]
fn second_bind_reports_port_in_use() {
    let server = start(ServerConfig::default());
    let err = serve_stream(ServerConfig { addr: server.local_addr(), ..ServerConfig::default() }).err().unwrap();
    assert!(matches!(err, ServeError::PortInUse(a) if a == server.local_addr()));
    server.shutdown().unwrap();
}

fn http_get(addr: SocketAddr, path: &str) -> (u16, Vec<u8>) {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\n\r\n").unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let status = std::str::from_utf8(&raw[9..12]).unwrap().parse().unwrap();
    (status, raw[split + 4..].to_vec())
}

#[test]
fn report_is_served_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("curation_report.json");
    std::fs::write(&report, "{\"demos\":[]}\n").unwrap();
    let files = StaticFiles { report: Some(report), root: Some(dir.path().to_path_buf()) };
    let server = start(ServerConfig { static_files: files, ..ServerConfig::default() });
    assert_eq!(http_get(server.local_addr(), "/curation_report.json"), (200, b"{\"demos\":[]}\n".to_vec()));
    assert_eq!(http_get(server.local_addr(), "/nope.json").0, 404);
    assert_eq!(http_get(server.local_addr(), "/../../etc/passwd").0, 400);
    server.shutdown().unwrap();
}

#[test]
fn websocket_clients_speak_the_same_protocol() {
    let server = start(ServerConfig::default());
    let mut s = TcpStream::connect(server.local_addr()).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    write!(
        s,
        "GET /stream HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n"
    )
    .unwrap();
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") {
        s.read_exact(&mut byte).unwrap();
        head.push(byte[0]);
    }
    let head = String::from_utf8(head).unwrap();
    assert!(head.starts_with("HTTP/1.1 101"));
    assert!(head.contains("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo="));

    s.write_all(&encode_client_text(r#"{"tag":"bogus"}"#, [3, 1, 4, 1])).unwrap();
    s.write_all(&encode_client_text(&frame(0.0, &HandPose::OPEN, Hand::Right).encode(), [2, 7, 1, 8])).unwrap();
    let (mut saw_error, mut states) = (false, 0);
    while !(saw_error && states >= 3) {
        let (opcode, payload) = read_server_frame(&mut s).unwrap();
        assert_eq!(opcode, 1);
        match decode_message(std::str::from_utf8(&payload).unwrap()).unwrap() {
            StreamMessage::Error { code, .. } => {
                assert_eq!(code, "unknown_tag");
                saw_error = true;
            }
            StreamMessage::JointState { .. } => states += 1,
            _ => {}
        }
    }
    server.shutdown().unwrap();
}

#[test]
fn fist_gesture_records_an_episode() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(ServerConfig { record_dir: Some(dir.path().to_path_buf()), ..ServerConfig::default() });
    let mut client = LineClient::connect(server.local_addr());
    let mut t = 0.0;
    let mut hold = |client: &mut LineClient, pose: &HandPose, seconds: f64| {
        let end = t + seconds;
        while t < end {
            client.send(&frame(t, pose, Hand::Left));
            t += 1.0 / 30.0;
            std::thread::sleep(Duration::from_millis(5));
        }
    };
    hold(&mut client, &HandPose::FIST, 0.7);
    hold(&mut client, &HandPose::OPEN, 0.3);
    let started =
        client.recv_until(Duration::from_secs(5), |m| matches!(m, StreamMessage::RecordStatus { recording: true, .. }));
    assert!(matches!(started, Some(StreamMessage::RecordStatus { episode_id: Some(ref id), .. }) if id == "ep_0000"));
    std::thread::sleep(Duration::from_millis(300));
    hold(&mut client, &HandPose::FIST, 0.7);
    assert!(client
        .recv_until(Duration::from_secs(5), |m| matches!(m, StreamMessage::RecordStatus { recording: false, .. }))
        .is_some());
    server.shutdown().unwrap();

    let (manifest, root) = dexkit::dataset::Manifest::load(dir.path()).unwrap();
    assert_eq!(manifest.episodes.len(), 1);
    let episodes = manifest.load_episodes(&root).unwrap();
    let episode = &episodes[0].1;
    assert!(episode.frames.len() > 3);
    assert!(episode.resolve(&episode.frames[0].image_top).exists());
}

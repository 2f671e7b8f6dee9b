//! Stream server: one simulation thread owns the state; every connection
//! has a reader thread feeding it events and a writer thread draining the
//! connection's outbound queue.
//!
//! One TCP port serves three transports, chosen by the first bytes a client
//! sends: newline-delimited JSON, websocket (HTTP upgrade) carrying one
//! message per text frame, and plain HTTP GET for static files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::dataset::{Manifest, ManifestEntry, MANIFEST_FILE};
use crate::model::{EpisodeFrame, HandFrame, JointVector, RigConfig};
use crate::recorder::{
    image_name, EpisodeMeta, EpisodeWriter, GestureConfig, GestureEvent, PlacementPrompt, PromptGenerator,
    RecorderError, Workspace, TOP_DIR, WRIST_DIR,
};

use super::http::{StaticFiles, MAX_HEAD};
use super::pipeline::StreamPipeline;
use super::protocol::{decode_message, GestureKind, Hand, ProtocolError, StreamMessage};
use super::queue::{ClientQueue, Outbound};
use super::render::{render_top, render_wrist, write_png};
use super::session::{episode_id, EPISODES_DIR};
use super::state::{DEFAULT_K_SPRING, DEFAULT_TICK_HZ};
use super::synth::{Profile, SynthParams, SynthStream};
use super::websocket::{self, Incoming};

pub const DEFAULT_PORT: u16 = 7447;
/// Longest accepted inbound line or websocket message, bytes.
pub const MAX_LINE: usize = websocket::MAX_MESSAGE;
/// How long a new connection may stay silent before it is treated as a
/// line client.
const SNIFF_TIMEOUT: Duration = Duration::from_millis(150);

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub tick_hz: f64,
    pub k_spring: f64,
    pub rig: RigConfig,
    pub gesture: GestureConfig,
    pub workspace: Workspace,
    pub seed: u64,
    /// Synthetic operator driving the control hand on ticks without a
    /// client frame.
    pub profile: Option<Profile>,
    /// Extra synthetic streams retargeted and simulated every tick; their
    /// output is not broadcast.
    pub load_streams: usize,
    /// Episodes are written below this directory when set.
    pub record_dir: Option<PathBuf>,
    pub static_files: StaticFiles,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: SocketAddr::from(([127, 0, 0, 1], DEFAULT_PORT)),
            tick_hz: DEFAULT_TICK_HZ,
            k_spring: DEFAULT_K_SPRING,
            rig: RigConfig::default(),
            gesture: GestureConfig::default(),
            workspace: Workspace::default(),
            seed: 0,
            profile: None,
            load_streams: 0,
            record_dir: None,
            static_files: StaticFiles::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("PortInUse: {0} is already bound")]
    PortInUse(SocketAddr),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Recorder(#[from] RecorderError),
}

/// Tick timing counters of the simulation loop.
#[derive(Debug, Default)]
struct LoopCounters {
    ticks: AtomicU64,
    overruns: AtomicU64,
    busy_ns: AtomicU64,
    max_busy_ns: AtomicU64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TickStats {
    pub ticks: u64,
    /// Ticks that finished after their deadline.
    pub overruns: u64,
    pub mean_busy: Duration,
    pub max_busy: Duration,
}

pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    counters: Arc<LoopCounters>,
    threads: Vec<JoinHandle<()>>,
    loop_result: Receiver<Result<(), ServeError>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> TickStats {
        let c = &self.counters;
        let ticks = c.ticks.load(Ordering::Relaxed);
        TickStats {
            ticks,
            overruns: c.overruns.load(Ordering::Relaxed),
            mean_busy: Duration::from_nanos(c.busy_ns.load(Ordering::Relaxed) / ticks.max(1)),
            max_busy: Duration::from_nanos(c.max_busy_ns.load(Ordering::Relaxed)),
        }
    }

    /// Stops accepting, closes every connection, finishes any open episode
    /// and joins the server threads.
    pub fn shutdown(mut self) -> Result<(), ServeError> {
        self.stop()
    }

    /// Blocks until the simulation loop ends (it runs until shutdown).
    pub fn wait(mut self) -> Result<(), ServeError> {
        let result = self.loop_result.recv().unwrap_or(Ok(()));
        self.stop()?;
        result
    }

    fn stop(&mut self) -> Result<(), ServeError> {
        self.shutdown.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        self.loop_result.try_recv().unwrap_or(Ok(()))
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

enum LoopEvent {
    Join { id: u64, queue: Arc<ClientQueue> },
    Leave { id: u64 },
    Frame { hand: Hand, frame: HandFrame },
    Record { kind: GestureKind },
    SetPrompt { prompt: PlacementPrompt },
}

/// Binds `config.addr` and starts the server threads.
pub fn serve_stream(config: ServerConfig) -> Result<ServerHandle, ServeError> {
    if !(config.tick_hz > 0.0 && config.tick_hz.is_finite()) {
        return Err(ServeError::Config(format!("tick rate must be positive, got {}", config.tick_hz)));
    }
    config.rig.validate().map_err(|e| ServeError::Config(e.to_string()))?;
    let listener = TcpListener::bind(config.addr).map_err(|e| match e.kind() {
        io::ErrorKind::AddrInUse => ServeError::PortInUse(config.addr),
        _ => ServeError::Io(e),
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let shutdown = Arc::new(AtomicBool::new(false));
    let counters = Arc::new(LoopCounters::default());
    let (events_tx, events_rx) = mpsc::channel();
    let (result_tx, loop_result) = mpsc::channel();

    let sim = SimLoop::new(&config)?;
    let sim_thread = {
        let shutdown = shutdown.clone();
        let counters = counters.clone();
        thread::Builder::new().name("dexkit-sim".into()).spawn(move || {
            let _ = result_tx.send(sim.run(events_rx, &shutdown, &counters));
        })?
    };
    let accept_thread = {
        let shutdown = shutdown.clone();
        let files = Arc::new(config.static_files.clone());
        thread::Builder::new()
            .name("dexkit-accept".into())
            .spawn(move || accept_loop(listener, events_tx, files, &shutdown))?
    };
    Ok(ServerHandle { addr, shutdown, counters, threads: vec![sim_thread, accept_thread], loop_result })
}

struct Active {
    id: String,
    prompt: PlacementPrompt,
    /// Absent without a recording directory.
    writer: Option<EpisodeWriter>,
}

struct Recorder {
    root: Option<PathBuf>,
    workspace: Workspace,
    rig_hash: String,
    manifest: Manifest,
    next_index: usize,
    active: Option<Active>,
}

impl Recorder {
    fn new(root: Option<PathBuf>, workspace: Workspace, rig_hash: String) -> Result<Self, ServeError> {
        let mut manifest = Manifest::default();
        let mut next_index = 0;
        if let Some(root) = &root {
            fs::create_dir_all(root.join(EPISODES_DIR))?;
            if root.join(MANIFEST_FILE).exists() {
                manifest = Manifest::load(root).map_err(|e| ServeError::Config(e.to_string()))?.0;
            }
            while root.join(EPISODES_DIR).join(episode_id(next_index)).exists() {
                next_index += 1;
            }
        }
        Ok(Self { root, workspace, rig_hash, manifest, next_index, active: None })
    }

    fn current(&self) -> Option<&str> {
        self.active.as_ref().map(|a| a.id.as_str())
    }

    fn start(&mut self, t: f64, prompt: PlacementPrompt) -> Result<(), ServeError> {
        let id = episode_id(self.next_index);
        self.next_index += 1;
        let writer = match &self.root {
            Some(root) => {
                let meta =
                    EpisodeMeta { episode_id: id.clone(), start_time: t, rig_hash: self.rig_hash.clone(), prompt };
                Some(EpisodeWriter::create(&root.join(EPISODES_DIR).join(&id), &meta)?)
            }
            None => None,
        };
        self.active = Some(Active { id, prompt, writer });
        Ok(())
    }

    fn record(&mut self, t: f64, q: &JointVector, tau: &JointVector, dq: &JointVector) -> Result<(), ServeError> {
        let Some(Active { prompt, writer: Some(writer), .. }) = self.active.as_mut() else {
            return Ok(());
        };
        let index = writer.len();
        let image_top = image_name(TOP_DIR, index);
        let image_wrist = image_name(WRIST_DIR, index);
        for (reference, img) in
            [(&image_top, render_top(prompt, &self.workspace, q)), (&image_wrist, render_wrist(prompt, q))]
        {
            write_png(&img, &writer.image_path(reference))
                .map_err(|e| ServeError::Io(io::Error::other(e.to_string())))?;
        }
        writer.append_frame(&EpisodeFrame { t, q: *q, tau: *tau, dq: *dq, image_top, image_wrist })?;
        Ok(())
    }

    fn stop(&mut self) -> Result<(), ServeError> {
        let Some(active) = self.active.take() else {
            return Ok(());
        };
        if let (Some(root), Some(mut writer)) = (&self.root, active.writer) {
            writer.close()?;
            self.manifest.episodes.retain(|e| e.id != active.id);
            self.manifest
                .episodes
                .push(ManifestEntry { id: active.id.clone(), path: format!("{EPISODES_DIR}/{}", active.id) });
            self.manifest.save(&root.join(MANIFEST_FILE))?;
        }
        Ok(())
    }
}

struct SimLoop {
    tick_hz: f64,
    pipeline: StreamPipeline,
    synth: Option<SynthStream>,
    load: Vec<(StreamPipeline, SynthStream)>,
    clients: BTreeMap<u64, Arc<ClientQueue>>,
    prompts: PromptGenerator,
    prompt: PlacementPrompt,
    recorder: Recorder,
    pending_right: Option<HandFrame>,
}

impl SimLoop {
    fn new(config: &ServerConfig) -> Result<Self, ServeError> {
        let pipeline = || StreamPipeline::new(config.rig.clone(), config.tick_hz, config.k_spring, config.gesture);
        let synth = config.profile.map(|p| SynthStream::new(SynthParams::new(config.seed, p), 0.0, config.tick_hz));
        let load = (0..config.load_streams)
            .map(|i| {
                let profile = config.profile.unwrap_or(Profile::Unscrew);
                let params = SynthParams::new(config.seed.wrapping_add(1 + i as u64), profile);
                (pipeline(), SynthStream::new(params, 0.0, config.tick_hz))
            })
            .collect();
        let mut prompts = PromptGenerator::new(config.seed, config.workspace);
        let prompt = prompts.next_prompt();
        Ok(Self {
            tick_hz: config.tick_hz,
            pipeline: pipeline(),
            synth,
            load,
            clients: BTreeMap::new(),
            prompts,
            prompt,
            recorder: Recorder::new(config.record_dir.clone(), config.workspace, config.rig.hash())?,
            pending_right: None,
        })
    }

    fn broadcast(&mut self, message: &StreamMessage) {
        let item = Outbound::message(message);
        self.clients.retain(|_, q| q.push(item.clone()));
    }

    fn record_status(&self, t: f64) -> StreamMessage {
        StreamMessage::RecordStatus {
            t,
            recording: self.recorder.current().is_some(),
            episode_id: self.recorder.current().map(str::to_string),
        }
    }

    fn prompt_message(&self, t: f64) -> StreamMessage {
        StreamMessage::Prompt { t, center: self.prompt.center, rot: self.prompt.rot }
    }

    fn toggle(&mut self, kind: GestureKind, t: f64) -> Result<(), ServeError> {
        match (kind, self.recorder.current().is_some()) {
            (GestureKind::Start, false) => {
                self.recorder.start(t, self.prompt)?;
                self.pipeline.gesture.recording = true;
            }
            (GestureKind::Stop, true) => {
                self.recorder.stop()?;
                self.pipeline.gesture.recording = false;
                self.prompt = self.prompts.next_prompt();
                let message = self.prompt_message(t);
                self.broadcast(&StreamMessage::GestureEvent { t, kind });
                self.broadcast(&message);
                return Ok(());
            }
            _ => return Ok(()),
        }
        self.broadcast(&StreamMessage::GestureEvent { t, kind });
        Ok(())
    }

    fn handle(&mut self, event: LoopEvent, t: f64) -> Result<(), ServeError> {
        match event {
            LoopEvent::Join { id, queue } => {
                queue.push(Outbound::message(&self.prompt_message(t)));
                queue.push(Outbound::message(&self.record_status(t)));
                self.clients.insert(id, queue);
            }
            LoopEvent::Leave { id } => {
                if let Some(q) = self.clients.remove(&id) {
                    q.close();
                }
            }
            LoopEvent::Frame { hand: Hand::Right, frame } => self.pending_right = Some(frame),
            LoopEvent::Frame { hand: Hand::Left, frame } => match self.pipeline.gesture(&frame) {
                GestureEvent::Start => {
                    self.pipeline.gesture.recording = false;
                    self.toggle(GestureKind::Start, t)?;
                }
                GestureEvent::Stop => {
                    self.pipeline.gesture.recording = true;
                    self.toggle(GestureKind::Stop, t)?;
                }
                GestureEvent::None => {}
            },
            LoopEvent::Record { kind } => self.toggle(kind, t)?,
            LoopEvent::SetPrompt { prompt } => {
                self.prompt = prompt;
                let message = self.prompt_message(t);
                self.broadcast(&message);
            }
        }
        Ok(())
    }

    fn tick(&mut self, events: &Receiver<LoopEvent>) -> Result<(), ServeError> {
        let t = self.pipeline.sim.t;
        while let Ok(event) = events.try_recv() {
            self.handle(event, t)?;
        }
        let frame = match self.pending_right.take() {
            Some(frame) => Some(frame),
            None => self.synth.as_mut().and_then(Iterator::next),
        };
        let step = self.pipeline.control(frame.as_ref());
        if let Some(error) = &step.error {
            self.broadcast(&StreamMessage::Error { code: "retarget_failed".into(), message: error.to_string() });
        }
        self.recorder.record(step.observed.t, &step.observed.q, &step.observed.tau, &step.command.dq)?;
        for (pipeline, stream) in &mut self.load {
            let frame = stream.next();
            pipeline.control(frame.as_ref());
        }
        let sim = &self.pipeline.sim;
        let command = StreamMessage::JointCommand { t: step.observed.t, dq: step.command.dq };
        let state = StreamMessage::JointState { t: sim.t, q: sim.q, tau: sim.tau };
        let status = self.record_status(sim.t);
        self.broadcast(&command);
        self.broadcast(&state);
        self.broadcast(&status);
        Ok(())
    }

    fn run(
        mut self,
        events: Receiver<LoopEvent>,
        shutdown: &AtomicBool,
        counters: &LoopCounters,
    ) -> Result<(), ServeError> {
        let period = Duration::from_secs_f64(1.0 / self.tick_hz);
        let mut deadline = Instant::now() + period;
        let mut result = Ok(());
        while !shutdown.load(Ordering::SeqCst) {
            let started = Instant::now();
            if let Err(e) = self.tick(&events) {
                result = Err(e);
                break;
            }
            let busy = started.elapsed().as_nanos() as u64;
            counters.ticks.fetch_add(1, Ordering::Relaxed);
            counters.busy_ns.fetch_add(busy, Ordering::Relaxed);
            counters.max_busy_ns.fetch_max(busy, Ordering::Relaxed);
            let now = Instant::now();
            if now <= deadline {
                thread::sleep(deadline - now);
                deadline += period;
            } else {
                counters.overruns.fetch_add(1, Ordering::Relaxed);
                deadline = now + period;
            }
        }
        let stopped = self.recorder.stop();
        for queue in self.clients.values() {
            queue.close();
        }
        result.and(stopped)
    }
}

fn accept_loop(listener: TcpListener, events: Sender<LoopEvent>, files: Arc<StaticFiles>, shutdown: &AtomicBool) {
    let next_id = AtomicU64::new(0);
    while !shutdown.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let id = next_id.fetch_add(1, Ordering::Relaxed);
                let events = events.clone();
                let files = files.clone();
                let _ = thread::Builder::new().name(format!("dexkit-conn-{id}")).spawn(move || {
                    let _ = handle_connection(stream, id, events, &files);
                });
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(_) => thread::sleep(Duration::from_millis(5)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Transport {
    Lines,
    WebSocket,
}

fn looks_like_http(prefix: &[u8]) -> bool {
    [b"GET ".as_slice(), b"HEAD", b"POST", b"PUT ", b"DELE", b"OPTI", b"PATC"].iter().any(|m| prefix.starts_with(m))
}

fn handle_connection(stream: TcpStream, id: u64, events: Sender<LoopEvent>, files: &StaticFiles) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_nodelay(true)?;
    // A silent client is a line client that only listens.
    stream.set_read_timeout(Some(SNIFF_TIMEOUT))?;
    let mut prefix = [0u8; 4];
    let mut seen = 0;
    let sniff_end = Instant::now() + SNIFF_TIMEOUT;
    while seen < prefix.len() && Instant::now() < sniff_end {
        match stream.peek(&mut prefix) {
            Ok(0) => return Ok(()),
            Ok(n) => seen = n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => break,
            Err(e) => return Err(e),
        }
        if !prefix[0].is_ascii_uppercase() {
            break;
        }
        if seen < prefix.len() {
            thread::sleep(Duration::from_millis(1));
        }
    }
    stream.set_read_timeout(None)?;
    if !looks_like_http(&prefix[..seen]) {
        return run_duplex(stream, Vec::new(), Transport::Lines, id, events);
    }

    let mut reader = stream.try_clone()?;
    let mut head = Vec::new();
    let mut chunk = [0u8; 1024];
    let end = loop {
        if let Some(pos) = head.windows(4).position(|w| w == b"\r\n\r\n") {
            break pos + 4;
        }
        if head.len() > MAX_HEAD {
            return super::http::Response {
                status: 400,
                content_type: "text/plain; charset=utf-8",
                body: b"request head too large\n".to_vec(),
            }
            .write_to(&mut &stream, true);
        }
        let n = reader.read(&mut chunk)?;
        if n == 0 {
            return Ok(());
        }
        head.extend_from_slice(&chunk[..n]);
    };
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut request = httparse::Request::new(&mut headers);
    if !matches!(request.parse(&head[..end]), Ok(httparse::Status::Complete(_))) {
        return super::http::Response {
            status: 400,
            content_type: "text/plain; charset=utf-8",
            body: b"malformed request\n".to_vec(),
        }
        .write_to(&mut &stream, true);
    }
    let header = |name: &str| {
        request
            .headers
            .iter()
            .find(|h| h.name.eq_ignore_ascii_case(name))
            .and_then(|h| std::str::from_utf8(h.value).ok())
    };
    let upgrade = header("upgrade").is_some_and(|v| v.eq_ignore_ascii_case("websocket"));
    if let (true, Some(key)) = (upgrade, header("sec-websocket-key")) {
        let response = websocket::handshake_response(key);
        (&stream).write_all(response.as_bytes())?;
        return run_duplex(stream, head[end..].to_vec(), Transport::WebSocket, id, events);
    }
    let method = request.method.unwrap_or("");
    let response = files.respond(method, request.path.unwrap_or("/"));
    response.write_to(&mut &stream, method != "HEAD")?;
    let _ = stream.shutdown(Shutdown::Write);
    Ok(())
}

/// Per-connection checks before an inbound message reaches the loop.
struct Inbound {
    last_t: [Option<f64>; 2],
}

impl Inbound {
    fn accept(
        &mut self,
        text: &[u8],
        workspace_check: fn(&PlacementPrompt) -> bool,
    ) -> Result<Option<LoopEvent>, ProtocolError> {
        let text = std::str::from_utf8(text).map_err(|e| ProtocolError::new("malformed", e.to_string()))?;
        if text.trim().is_empty() {
            return Ok(None);
        }
        match decode_message(text)? {
            StreamMessage::HandFrame { t, vertices, hand } => {
                let slot = &mut self.last_t[hand as usize];
                if let Some(previous) = *slot {
                    if !(t > previous) {
                        return Err(ProtocolError::new(
                            "non_monotonic",
                            format!("frame time {t} does not follow {previous}"),
                        ));
                    }
                }
                *slot = Some(t);
                Ok(Some(LoopEvent::Frame { hand, frame: HandFrame { t, vertices } }))
            }
            StreamMessage::GestureEvent { kind, .. } => Ok(Some(LoopEvent::Record { kind })),
            StreamMessage::Prompt { center, rot, .. } => {
                let prompt = PlacementPrompt { center, rot };
                if !workspace_check(&prompt) {
                    return Err(ProtocolError::new("invalid_prompt", "prompt values must be finite"));
                }
                Ok(Some(LoopEvent::SetPrompt { prompt }))
            }
            other => Err(ProtocolError::new("unexpected_tag", format!("clients may not send {}", other.tag()))),
        }
    }
}

fn finite_prompt(p: &PlacementPrompt) -> bool {
    p.center.iter().all(|v| v.is_finite()) && p.rot.is_finite()
}

fn run_duplex(
    stream: TcpStream,
    leftover: Vec<u8>,
    transport: Transport,
    id: u64,
    events: Sender<LoopEvent>,
) -> io::Result<()> {
    let queue = Arc::new(ClientQueue::new());
    if events.send(LoopEvent::Join { id, queue: queue.clone() }).is_err() {
        return Ok(());
    }
    let writer = {
        let queue = queue.clone();
        let mut out = stream.try_clone()?;
        thread::Builder::new().name(format!("dexkit-writer-{id}")).spawn(move || {
            while let Some(item) = queue.pop() {
                let written = match (&item, transport) {
                    (Outbound::Message { text, .. }, Transport::Lines) => {
                        let mut line = Vec::with_capacity(text.len() + 1);
                        line.extend_from_slice(text.as_bytes());
                        line.push(b'\n');
                        out.write_all(&line)
                    }
                    (Outbound::Message { text, .. }, Transport::WebSocket) => websocket::write_text(&mut out, text),
                    (Outbound::Pong(payload), Transport::WebSocket) => websocket::write_pong(&mut out, payload),
                    (Outbound::Pong(_), Transport::Lines) => Ok(()),
                };
                if written.is_err() {
                    break;
                }
            }
            queue.close();
            if transport == Transport::WebSocket {
                let _ = websocket::write_close(&mut out);
            }
            let _ = out.shutdown(Shutdown::Both);
        })?
    };

    let mut inbound = Inbound { last_t: [None, None] };
    let mut deliver = |bytes: &[u8]| -> bool {
        match inbound.accept(bytes, finite_prompt) {
            Ok(Some(event)) => events.send(event).is_ok(),
            Ok(None) => true,
            Err(e) => queue.push(Outbound::message(&e.to_message())),
        }
    };
    let mut reader = BufReader::new(io::Cursor::new(leftover).chain(stream.try_clone()?));
    match transport {
        Transport::Lines => loop {
            let mut line = Vec::new();
            match (&mut reader).take(MAX_LINE as u64 + 1).read_until(b'\n', &mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) if line.len() > MAX_LINE && !line.ends_with(b"\n") => {
                    queue.push(Outbound::message(&ProtocolError::new("too_large", "line exceeds 1 MiB").to_message()));
                    break;
                }
                Ok(_) => {
                    if !deliver(&line) {
                        break;
                    }
                }
            }
        },
        Transport::WebSocket => loop {
            match websocket::read_message(&mut reader) {
                Ok(Incoming::Data(bytes)) => {
                    if !deliver(&bytes) {
                        break;
                    }
                }
                Ok(Incoming::Ping(payload)) => {
                    queue.push(Outbound::Pong(payload));
                }
                Ok(Incoming::Pong) => {}
                Ok(Incoming::Close) | Err(_) => break,
            }
        },
    }
    let _ = events.send(LoopEvent::Leave { id });
    queue.close();
    let _ = stream.shutdown(Shutdown::Read);
    let _ = writer.join();
    Ok(())
}

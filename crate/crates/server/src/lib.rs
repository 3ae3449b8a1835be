//! Live sessions over WebSocket.
//!
//! Each connection is one session: the client sends `client_hello`, the
//! server answers with `session_config`, then input frames flow in while the
//! simulation ticks in real time and state snapshots flow out. The session
//! ends with `session_end` once the configured duration has elapsed.
//!
//! Three tasks cooperate per connection: the intake (reads the socket and
//! queues frames), the session (ticks the simulation and never waits on
//! the intake) and the outbound writer (sends the latest snapshot and the
//! final messages). A fourth thread writes the recording file.

mod recorder;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use teleop_core::kinematics::KinematicChain;
use teleop_core::session::protocol::{
    codes, ClientKind, InputFrame, Message, SessionEnd, StateSnapshot, PROTOCOL_VERSION,
};
use teleop_core::session::{builtin_exoskeleton, GameSession};
use teleop_core::simulator::{GameConfig, SessionMetrics};
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream, ToSocketAddrs};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::{interval, timeout, MissedTickBehavior};
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::protocol::CloseFrame;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::WebSocketStream;

pub use recorder::Recorder;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("websocket: {0}")]
    WebSocket(#[from] tokio_tungstenite::tungstenite::Error),
    #[error("handshake: {0}")]
    Handshake(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub game: GameConfig,
    pub exoskeleton: KinematicChain,
    pub out_dir: PathBuf,
    pub snapshot_hz: f64,
    pub handshake_timeout: Duration,
    pub intake_queue: usize,
}

impl ServerConfig {
    pub fn new(game: GameConfig, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            game,
            exoskeleton: builtin_exoskeleton(),
            out_dir: out_dir.into(),
            snapshot_hz: 30.0,
            handshake_timeout: Duration::from_secs(10),
            intake_queue: 256,
        }
    }
}

/// How a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    Completed,
    Disconnected,
    BadFrame,
}

#[derive(Debug, Clone)]
pub struct SessionSummary {
    pub session_id: String,
    pub recording: PathBuf,
    pub metrics: SessionMetrics,
    pub reason: EndReason,
}

pub struct Server {
    listener: TcpListener,
    cfg: Arc<ServerConfig>,
    sessions: Arc<AtomicU64>,
}

impl Server {
    pub async fn bind(addr: impl ToSocketAddrs, cfg: ServerConfig) -> std::io::Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir)?;
        Ok(Self {
            listener: TcpListener::bind(addr).await?,
            cfg: Arc::new(cfg),
            sessions: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn local_addr(&self) -> std::io::Result<std::net::SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails. Every connection gets
    /// its own session; `on_end` sees each finished session.
    pub async fn run<F>(self, on_end: F) -> std::io::Result<()>
    where
        F: Fn(Result<SessionSummary, ServerError>) + Send + Sync + 'static,
    {
        let on_end = Arc::new(on_end);
        loop {
            let (stream, _) = self.listener.accept().await?;
            let cfg = self.cfg.clone();
            let index = self.sessions.fetch_add(1, Ordering::Relaxed);
            let on_end = on_end.clone();
            tokio::spawn(async move { on_end(handle_connection(stream, cfg, index).await) });
        }
    }
}

type Sink = SplitSink<WebSocketStream<TcpStream>, WsMessage>;
type Source = SplitStream<WebSocketStream<TcpStream>>;

enum Final {
    End(SessionEnd),
    Error { code: &'static str, detail: String },
}

async fn close_with(mut sink: Sink, code: &'static str, detail: String) -> Result<(), ServerError> {
    sink.send(WsMessage::text(Message::error(code, detail).to_json())).await?;
    sink.send(WsMessage::Close(Some(CloseFrame {
        code: CloseCode::Policy,
        reason: code.into(),
    })))
    .await?;
    Ok(())
}

async fn next_text(source: &mut Source) -> Option<Result<String, ServerError>> {
    while let Some(msg) = source.next().await {
        match msg {
            Ok(WsMessage::Text(t)) => return Some(Ok(t.to_string())),
            Ok(WsMessage::Binary(_)) => return Some(Ok(String::new())),
            Ok(WsMessage::Close(_)) => return None,
            Ok(_) => continue,
            Err(e) => return Some(Err(e.into())),
        }
    }
    None
}

fn unique_recording(dir: &Path, id: &str) -> std::io::Result<(String, std::fs::File)> {
    let mut n = 0;
    loop {
        let name = if n == 0 { id.to_string() } else { format!("{id}-{n}") };
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(dir.join(format!("{name}.jsonl")))
        {
            Ok(f) => return Ok((name, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => n += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Runs one session over an accepted TCP connection. The `index`-th
/// session of a server plays seed `game.rng_seed + index`.
pub async fn handle_connection(
    stream: TcpStream,
    cfg: Arc<ServerConfig>,
    index: u64,
) -> Result<SessionSummary, ServerError> {
    let ws = tokio_tungstenite::accept_async(stream).await?;
    let (mut sink, mut source) = ws.split();

    let hello = match timeout(cfg.handshake_timeout, next_text(&mut source)).await {
        Ok(Some(text)) => text?,
        Ok(None) => return Err(ServerError::Handshake("closed before hello".into())),
        Err(_) => {
            close_with(sink, codes::HANDSHAKE, "no client_hello received".into()).await?;
            return Err(ServerError::Handshake("timed out".into()));
        }
    };
    let kind = match Message::parse(&hello) {
        Ok(Message::ClientHello(h)) if h.protocol_version == PROTOCOL_VERSION => h.client_kind,
        Ok(Message::ClientHello(h)) => {
            let detail = format!(
                "protocol version {} unsupported, server speaks {PROTOCOL_VERSION}",
                h.protocol_version
            );
            close_with(sink, codes::VERSION, detail.clone()).await?;
            return Err(ServerError::Handshake(detail));
        }
        _ => {
            let detail = "first message must be client_hello".to_string();
            close_with(sink, codes::HANDSHAKE, detail.clone()).await?;
            return Err(ServerError::Handshake(detail));
        }
    };

    let game = cfg.game.clone().with_seed(cfg.game.rng_seed.wrapping_add(index));
    let base_id = format!("{}-seed{}-{index:04}", game.name, game.rng_seed);
    let (session_id, file) = unique_recording(&cfg.out_dir, &base_id)?;
    let recording = cfg.out_dir.join(format!("{session_id}.jsonl"));
    let recorder = Recorder::spawn(file);
    let operator = match kind {
        ClientKind::Ui => "live:ui",
        ClientKind::Exo => "live:exo",
        ClientKind::Replay => "live:replay",
    };
    let session = GameSession::new(game, cfg.exoskeleton.clone(), operator)
        .with_writer(Box::new(recorder.writer()))?;
    sink.send(WsMessage::text(session.config_message(&session_id).to_json()))
        .await?;

    let (frame_tx, frame_rx) = mpsc::channel::<InputFrame>(cfg.intake_queue.max(1));
    let (snap_tx, snap_rx) = watch::channel::<Option<StateSnapshot>>(None);
    let (final_tx, final_rx) = oneshot::channel::<Final>();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();

    let outbound = tokio::spawn(outbound(sink, snap_rx, final_rx));
    let mut sim = tokio::spawn(run_session(session, frame_rx, snap_tx, stop_rx, cfg.snapshot_hz));

    let mut bad: Option<String> = None;
    let finished = loop {
        tokio::select! {
            res = &mut sim => break Some(res),
            msg = next_text(&mut source) => match msg {
                Some(Ok(text)) => match Message::parse(&text) {
                    Ok(Message::InputFrame(f)) => {
                        if frame_tx.send(f).await.is_err() {
                            break None;
                        }
                    }
                    Ok(other) => {
                        bad = Some(format!("unexpected message from client: {}", kind_name(&other)));
                        break None;
                    }
                    Err(e) => {
                        bad = Some(e.to_string());
                        break None;
                    }
                },
                Some(Err(_)) | None => break None,
            },
        }
    };
    drop(frame_tx);

    let (rec, reason) = match finished {
        Some(res) => (res.expect("session task"), EndReason::Completed),
        None => {
            let _ = stop_tx.send(());
            let rec = sim.await.expect("session task");
            let reason = if bad.is_some() { EndReason::BadFrame } else { EndReason::Disconnected };
            (rec, reason)
        }
    };
    let metrics = rec.trailer.metrics.clone();
    let last = match bad {
        Some(detail) => Final::Error { code: codes::BAD_FRAME, detail },
        None => Final::End(SessionEnd {
            metrics: metrics.clone(),
            recording_id: session_id.clone(),
        }),
    };
    let _ = final_tx.send(last);
    let _ = outbound.await;
    recorder.finish()?;

    Ok(SessionSummary {
        session_id,
        recording,
        metrics,
        reason,
    })
}

fn kind_name(m: &Message) -> &'static str {
    match m {
        Message::ClientHello(_) => "client_hello",
        Message::SessionConfig(_) => "session_config",
        Message::InputFrame(_) => "input_frame",
        Message::StateSnapshot(_) => "state_snapshot",
        Message::SessionEnd(_) => "session_end",
        Message::Error(_) => "error",
    }
}

async fn run_session(
    mut session: GameSession,
    mut frames: mpsc::Receiver<InputFrame>,
    snapshots: watch::Sender<Option<StateSnapshot>>,
    mut stop: oneshot::Receiver<()>,
    snapshot_hz: f64,
) -> teleop_core::simulator::Recording {
    let tick_hz = session.simulation().config().tick_hz;
    let mut clock = interval(Duration::from_secs_f64(1.0 / tick_hz));
    clock.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let snaps_due = |tick: u64| (tick as f64 * snapshot_hz / tick_hz).floor() as u64;
    let mut truncated = false;
    while !session.done() {
        tokio::select! {
            biased;
            _ = &mut stop => {
                truncated = true;
                break;
            }
            _ = clock.tick() => {
                while let Ok(f) = frames.try_recv() {
                    // Rejected frames are counted in the recording trailer.
                    let _ = session.accept(&f);
                }
                let before = session.simulation().tick_index();
                session.step();
                if snaps_due(before + 1) > snaps_due(before) || session.done() {
                    snapshots.send_replace(Some(session.snapshot()));
                }
            }
        }
    }
    session.finish(truncated)
}

async fn outbound(
    mut sink: Sink,
    mut snapshots: watch::Receiver<Option<StateSnapshot>>,
    mut last: oneshot::Receiver<Final>,
) -> Result<(), ServerError> {
    let mut snapshots_open = true;
    loop {
        tokio::select! {
            biased;
            fin = &mut last => {
                return match fin {
                    Ok(Final::End(end)) => {
                        let pending = snapshots.has_changed().unwrap_or(false);
                        let latest = snapshots.borrow_and_update().clone().filter(|_| pending);
                        if let Some(s) = latest {
                            sink.send(WsMessage::text(Message::StateSnapshot(s).to_json())).await?;
                        }
                        sink.send(WsMessage::text(Message::SessionEnd(end).to_json())).await?;
                        sink.send(WsMessage::Close(Some(CloseFrame {
                            code: CloseCode::Normal,
                            reason: "session-end".into(),
                        })))
                        .await?;
                        Ok(())
                    }
                    Ok(Final::Error { code, detail }) => close_with(sink, code, detail).await,
                    Err(_) => Ok(()),
                };
            }
            changed = snapshots.changed(), if snapshots_open => {
                if changed.is_err() {
                    snapshots_open = false;
                    continue;
                }
                let snap = snapshots.borrow_and_update().clone();
                if let Some(s) = snap {
                    sink.send(WsMessage::text(Message::StateSnapshot(s).to_json())).await?;
                }
            }
        }
    }
}

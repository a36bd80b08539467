use std::net::{SocketAddr, TcpListener, TcpStream};
use std::process::{Child, Command, Stdio};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};
use thiserror::Error;

use super::{serve_engine, EngineFactory, EngineServer};
use crate::config::{EngineConfig, Launch};
use crate::datapack::{DataPack, DataPackId};
use crate::doc;
use crate::transport::{queue_pair, Client, Codec, ErrorCode, Message, TcpChannel, TransportError};

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(10);
pub const SHUTDOWN_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("engine {engine:?}: spawn failed: {reason}")]
    SpawnFailed { engine: String, reason: String },
    #[error("engine {engine:?}: no handshake within {timeout:?}")]
    HandshakeTimeout { engine: String, timeout: Duration },
    #[error("engine answered as {found:?}, expected {expected:?}")]
    NameMismatch { expected: String, found: String },
    #[error("engine {engine:?}: engine type {engine_type:?} is not supported by this framework")]
    UnsupportedEngineType { engine: String, engine_type: String },
    #[error("engine {engine:?}: unknown engine type {engine_type:?}")]
    UnknownEngineType { engine: String, engine_type: String },
    #[error("engine {engine:?} faulted: {message}")]
    Fault { engine: String, message: String },
    #[error("engine {engine:?}: {source}")]
    Transport {
        engine: String,
        #[source]
        source: TransportError,
    },
    #[error("engine {engine:?} violated the protocol: {detail}")]
    ProtocolViolation { engine: String, detail: String },
}

/// Request/reply access to one engine server.
pub trait EngineConnection: Send {
    fn request(&mut self, msg: &Message) -> Result<Message, TransportError>;
    fn set_timeout(&mut self, _timeout: Option<Duration>) {}
    /// Wire bytes sent plus received so far.
    fn bytes_moved(&self) -> u64 {
        0
    }
}

impl EngineConnection for Client {
    fn request(&mut self, msg: &Message) -> Result<Message, TransportError> {
        Client::request(self, msg)
    }

    fn set_timeout(&mut self, timeout: Option<Duration>) {
        Client::set_timeout(self, timeout)
    }

    fn bytes_moved(&self) -> u64 {
        self.bytes_sent() + self.bytes_received()
    }
}

/// Calls the server state machine directly, skipping codecs and threads.
pub struct DirectConnection(pub EngineServer);

impl EngineConnection for DirectConnection {
    fn request(&mut self, msg: &Message) -> Result<Message, TransportError> {
        match self.0.handle(msg.clone()) {
            Message::Error { code, message } => Err(TransportError::RemoteError { code, message }),
            other => Ok(other),
        }
    }
}

enum Worker {
    None,
    Thread(JoinHandle<Result<(), TransportError>>),
    Process(Child),
}

/// How an engine went away.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Teardown {
    /// True when the worker had to be killed after the grace period.
    pub forced: bool,
    pub elapsed: Duration,
}

/// Orchestrator-side handle of one running engine.
pub struct EngineHandle {
    name: String,
    timestep_ns: u64,
    engine_time_ns: u64,
    conn: Box<dyn EngineConnection>,
    command_timeout: Option<Duration>,
    worker: Worker,
    initialized: bool,
    closed: bool,
}

impl EngineHandle {
    fn new(name: &str, timestep_ns: u64, conn: Box<dyn EngineConnection>, worker: Worker) -> Self {
        Self {
            name: name.to_owned(),
            timestep_ns,
            engine_time_ns: 0,
            conn,
            command_timeout: None,
            worker,
            initialized: false,
            closed: false,
        }
    }

    /// Runs the Init handshake over an established connection.
    pub fn connect(
        name: &str,
        timestep_ns: u64,
        conn: Box<dyn EngineConnection>,
        handshake_timeout: Duration,
        command_timeout: Option<Duration>,
    ) -> Result<Self, EngineError> {
        let mut h = Self::new(name, timestep_ns, conn, Worker::None);
        h.handshake(handshake_timeout, command_timeout)?;
        Ok(h)
    }

    /// An engine served on the calling thread, without any codec.
    pub fn direct(cfg: &EngineConfig, factory: &EngineFactory) -> Result<Self, EngineError> {
        let server = EngineServer::new(cfg.engine_name.as_str(), factory.create(cfg)?);
        Self::connect(
            &cfg.engine_name,
            cfg.timestep_ns(),
            Box::new(DirectConnection(server)),
            DEFAULT_HANDSHAKE_TIMEOUT,
            None,
        )
    }

    fn handshake(&mut self, timeout: Duration, command_timeout: Option<Duration>) -> Result<(), EngineError> {
        self.conn.set_timeout(Some(timeout));
        let reply = self.conn.request(&Message::Init {
            engine_name: self.name.clone(),
            engine_timestep_ns: self.timestep_ns,
        });
        match reply {
            Ok(Message::InitReply { engine_name }) if engine_name == self.name => {}
            Ok(Message::InitReply { engine_name }) => {
                return Err(EngineError::NameMismatch {
                    expected: self.name.clone(),
                    found: engine_name,
                })
            }
            Ok(other) => return Err(self.unexpected("InitReply", &other)),
            Err(TransportError::Timeout) => {
                return Err(EngineError::HandshakeTimeout {
                    engine: self.name.clone(),
                    timeout,
                })
            }
            Err(e) => return Err(self.transport(e)),
        }
        self.initialized = true;
        self.command_timeout = command_timeout;
        self.conn.set_timeout(command_timeout);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn timestep_ns(&self) -> u64 {
        self.timestep_ns
    }

    pub fn engine_time_ns(&self) -> u64 {
        self.engine_time_ns
    }

    pub fn bytes_moved(&self) -> u64 {
        self.conn.bytes_moved()
    }

    fn transport(&self, e: TransportError) -> EngineError {
        match e {
            TransportError::RemoteError {
                code: ErrorCode::ENGINE_FAULT,
                message,
            } => EngineError::Fault {
                engine: self.name.clone(),
                message,
            },
            source => EngineError::Transport {
                engine: self.name.clone(),
                source,
            },
        }
    }

    fn unexpected(&self, wanted: &str, got: &Message) -> EngineError {
        EngineError::ProtocolViolation {
            engine: self.name.clone(),
            detail: format!("expected {wanted}, got {}", got.name()),
        }
    }

    fn request(&mut self, msg: &Message) -> Result<Message, EngineError> {
        if self.closed {
            return Err(self.transport(TransportError::ConnectionClosed));
        }
        self.conn.request(msg).map_err(|e| self.transport(e))
    }

    /// Advances the engine to at least `until_ns`; returns the new engine time.
    pub fn run_step(&mut self, until_ns: u64) -> Result<u64, EngineError> {
        let reply = self.request(&Message::RunStep {
            until_time_ns: until_ns,
        })?;
        let Message::RunStepReply { engine_time_ns: t } = reply else {
            return Err(self.unexpected("RunStepReply", &reply));
        };
        if t < until_ns || t < self.engine_time_ns || t % self.timestep_ns != 0 {
            return Err(EngineError::ProtocolViolation {
                engine: self.name.clone(),
                detail: format!(
                    "engine time {t} ns after RunStep to {until_ns} ns (previous {} ns, timestep {} ns)",
                    self.engine_time_ns, self.timestep_ns
                ),
            });
        }
        self.engine_time_ns = t;
        Ok(t)
    }

    pub fn get_datapacks(&mut self, ids: &[DataPackId]) -> Result<Vec<DataPack>, EngineError> {
        let reply = self.request(&Message::GetDataPacks { ids: ids.to_vec() })?;
        let Message::GetDataPacksReply { packs } = reply else {
            return Err(self.unexpected("GetDataPacksReply", &reply));
        };
        if packs.len() != ids.len() || packs.iter().zip(ids).any(|(p, id)| p.id() != id) {
            return Err(EngineError::ProtocolViolation {
                engine: self.name.clone(),
                detail: "GetDataPacks reply does not match the requested identifiers".into(),
            });
        }
        Ok(packs)
    }

    pub fn set_datapacks(&mut self, packs: Vec<DataPack>) -> Result<(), EngineError> {
        let reply = self.request(&Message::SetDataPacks { packs })?;
        match reply {
            Message::SetDataPacksAck => Ok(()),
            other => Err(self.unexpected("SetDataPacksAck", &other)),
        }
    }

    /// Sends Shutdown and waits up to `grace` for the worker to exit; a
    /// subprocess still running after that is killed.
    pub fn shutdown(&mut self, grace: Duration) -> Teardown {
        // Direct engines have no worker to wait for; skipping the clock keeps
        // this usable where `Instant` is unavailable.
        let start = (!matches!(self.worker, Worker::None)).then(Instant::now);
        if !self.closed && self.initialized {
            self.conn.set_timeout(Some(grace));
            match self.conn.request(&Message::Shutdown) {
                Ok(Message::ShutdownAck) => debug!("engine {} acknowledged shutdown", self.name),
                Ok(other) => warn!("engine {}: {} in reply to Shutdown", self.name, other.name()),
                Err(e) => warn!("engine {}: shutdown request failed: {e}", self.name),
            }
        }
        self.closed = true;
        let Some(start) = start else {
            return Teardown {
                forced: false,
                elapsed: Duration::ZERO,
            };
        };
        let deadline = start + grace;
        let forced = match std::mem::replace(&mut self.worker, Worker::None) {
            Worker::None => false,
            Worker::Thread(h) => {
                while !h.is_finished() && Instant::now() < deadline {
                    thread::sleep(Duration::from_millis(2));
                }
                if h.is_finished() {
                    if let Ok(Err(e)) = h.join() {
                        warn!("engine {} worker ended with {e}", self.name);
                    }
                    false
                } else {
                    warn!("engine {} worker still busy after {grace:?}; detaching", self.name);
                    true
                }
            }
            Worker::Process(mut child) => loop {
                match child.try_wait() {
                    Ok(Some(status)) => {
                        debug!("engine {} exited with {status}", self.name);
                        break false;
                    }
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                    _ => {
                        warn!("engine {} did not exit within {grace:?}; killing it", self.name);
                        let _ = child.kill();
                        let _ = child.wait();
                        break true;
                    }
                }
            },
        };
        Teardown {
            forced,
            elapsed: start.elapsed(),
        }
    }
}

impl Drop for EngineHandle {
    fn drop(&mut self) {
        if !self.closed {
            self.shutdown(SHUTDOWN_GRACE);
        }
    }
}

/// Asks the OS for a free loopback port.
pub fn pick_free_port() -> std::io::Result<u16> {
    Ok(TcpListener::bind(("127.0.0.1", 0))?.local_addr()?.port())
}

fn handshake_timeout(cfg: &EngineConfig) -> Duration {
    cfg.command_timeout().unwrap_or(DEFAULT_HANDSHAKE_TIMEOUT)
}

/// Starts the engine described by `cfg` and completes the Init handshake.
pub fn launch_engine(cfg: &EngineConfig, codec: Codec, factory: &EngineFactory) -> Result<EngineHandle, EngineError> {
    factory.check(cfg)?;
    match &cfg.launch {
        Launch::InProcess => launch_in_process(cfg, codec, factory),
        Launch::Subprocess { cmd, args, env } => launch_subprocess(cfg, codec, cmd, args, env),
    }
}

fn launch_in_process(cfg: &EngineConfig, codec: Codec, factory: &EngineFactory) -> Result<EngineHandle, EngineError> {
    let script = factory.create(cfg)?;
    let (client_end, mut server_end) = queue_pair();
    let name = cfg.engine_name.clone();
    let worker = thread::Builder::new()
        .name(format!("engine-{name}"))
        .spawn(move || serve_engine(&name, script, &mut server_end, codec))
        .map_err(|e| EngineError::SpawnFailed {
            engine: cfg.engine_name.clone(),
            reason: e.to_string(),
        })?;
    let client = Client::new(Box::new(client_end), codec, None);
    let mut h = EngineHandle::new(
        &cfg.engine_name,
        cfg.timestep_ns(),
        Box::new(client),
        Worker::Thread(worker),
    );
    h.handshake(handshake_timeout(cfg), cfg.command_timeout())?;
    Ok(h)
}

fn launch_subprocess(
    cfg: &EngineConfig,
    codec: Codec,
    cmd: &str,
    args: &[String],
    env: &[(String, String)],
) -> Result<EngineHandle, EngineError> {
    let spawn_failed = |reason: String| EngineError::SpawnFailed {
        engine: cfg.engine_name.clone(),
        reason,
    };
    let port = pick_free_port().map_err(|e| spawn_failed(format!("no free port: {e}")))?;
    let extra = doc::doc_to_json(&cfg.extra).map_err(spawn_failed)?.to_string();
    let mut child = Command::new(cmd)
        .args(args)
        .args([
            "--port",
            &port.to_string(),
            "--engine-name",
            &cfg.engine_name,
            "--codec",
            codec.as_str(),
        ])
        .env("NRPL_PORT", port.to_string())
        .env("NRPL_ENGINE_TYPE", &cfg.engine_type)
        .env("NRPL_ENGINE_EXTRA", extra)
        .envs(env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .spawn()
        .map_err(|e| spawn_failed(format!("{cmd}: {e}")))?;
    debug!(
        "engine {} spawned as pid {} on port {port}",
        cfg.engine_name,
        child.id()
    );

    let timeout = handshake_timeout(cfg);
    let deadline = Instant::now() + timeout;
    let addr = SocketAddr::from(([127, 0, 0, 1], port));
    let stream = loop {
        match TcpStream::connect_timeout(&addr, Duration::from_millis(100)) {
            Ok(s) => break s,
            Err(_) => {
                if let Ok(Some(status)) = child.try_wait() {
                    return Err(spawn_failed(format!("{cmd} exited with {status} before accepting")));
                }
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(EngineError::HandshakeTimeout {
                        engine: cfg.engine_name.clone(),
                        timeout,
                    });
                }
                thread::sleep(Duration::from_millis(10));
            }
        }
    };
    let channel = match TcpChannel::new(stream) {
        Ok(c) => c,
        Err(e) => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(spawn_failed(e.to_string()));
        }
    };
    let client = Client::new(Box::new(channel), codec, None);
    let mut h = EngineHandle::new(
        &cfg.engine_name,
        cfg.timestep_ns(),
        Box::new(client),
        Worker::Process(child),
    );
    let left = deadline
        .saturating_duration_since(Instant::now())
        .max(Duration::from_millis(1));
    h.handshake(left, cfg.command_timeout())?;
    Ok(h)
}
